//! The control-parameter register: a wavefunction sampled on a cyclic grid.
//!
//! Grid point `g` of an axis sits at `lo + g * (hi - lo) / size`; the cell
//! it represents is centred on that point. With the default `[0, 2pi)`
//! domain and an even grid both `0` and `pi` are grid points.
//!
//! One axis is the usual case. Two axes form a product grid (row-major,
//! axis 0 slowest) for circuits with two trainable phases.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevector::C64;

const PROBABILITY_TOL: f64 = 1e-9;

/// One periodic dimension of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub size: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Axis {
    pub fn new(size: usize, lo: f64, hi: f64) -> Result<Self> {
        if size < 2 {
            return Err(Error::Config(format!("grid size must be >= 2, got {size}")));
        }
        if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater)
            || !lo.is_finite()
            || !hi.is_finite()
        {
            return Err(Error::Config(format!(
                "invalid parameter domain [{lo}, {hi})"
            )));
        }
        Ok(Axis { size, lo, hi })
    }

    /// `size` points on `[0, 2pi)`.
    pub fn phase(size: usize) -> Result<Self> {
        Axis::new(size, 0.0, TAU)
    }

    pub fn cell_width(&self) -> f64 {
        (self.hi - self.lo) / self.size as f64
    }

    pub fn point(&self, index: usize) -> f64 {
        self.lo + index as f64 * self.cell_width()
    }

    /// Position of `index` as an angle on the unit circle.
    fn angle(&self, index: usize) -> f64 {
        TAU * index as f64 / self.size as f64
    }
}

/// The discretized parameter wavefunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    axes: Vec<Axis>,
    amplitudes: Vec<C64>,
}

impl ParameterState {
    /// Flat real wavefunction `1/sqrt(N)` on a single axis.
    pub fn uniform(grid_size: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::uniform_product(vec![Axis::new(grid_size, lo, hi)?])
    }

    pub fn uniform_product(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Config(
                "parameter grid needs at least one axis".into(),
            ));
        }
        let cells: usize = axes.iter().map(|a| a.size).product();
        let value = C64::new(1.0 / (cells as f64).sqrt(), 0.0);
        Ok(ParameterState {
            axes,
            amplitudes: vec![value; cells],
        })
    }

    pub fn from_amplitudes(axes: Vec<Axis>, amplitudes: Vec<C64>) -> Result<Self> {
        let cells: usize = axes.iter().map(|a| a.size).product();
        if amplitudes.len() != cells {
            return Err(Error::Dimension {
                expected: cells,
                actual: amplitudes.len(),
            });
        }
        Ok(ParameterState { axes, amplitudes })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Total number of grid cells.
    pub fn grid_size(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        }
    }

    /// Per-axis grid indices of flat cell `cell`.
    pub fn multi_index(&self, cell: usize) -> Vec<usize> {
        let mut rest = cell;
        let mut idx = vec![0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            idx[k] = rest % axis.size;
            rest /= axis.size;
        }
        idx
    }

    /// Parameter values at flat cell `cell`, one per axis.
    pub fn point(&self, cell: usize) -> Vec<f64> {
        self.multi_index(cell)
            .into_iter()
            .zip(&self.axes)
            .map(|(i, a)| a.point(i))
            .collect()
    }

    /// Parameter values of every cell, in flat order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.grid_size()).map(|g| self.point(g)).collect()
    }

    /// Cell with the largest `|chi|^2` (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for (g, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p > best_p {
                best_p = p;
                best = g;
            }
        }
        best
    }

    /// Cyclic shift along one axis: `chi[g] <- chi[g - shift]`.
    pub fn translate_axis(&mut self, axis: usize, shift: i64) {
        let size = self.axes[axis].size;
        let s = shift.rem_euclid(size as i64) as usize;
        if s == 0 {
            return;
        }
        let inner: usize = self.axes[axis + 1..].iter().map(|a| a.size).product();
        let block = size * inner;
        for chunk in self.amplitudes.chunks_exact_mut(block) {
            // rotating the block right by s*inner shifts axis `axis` by s
            chunk.rotate_right(s * inner);
        }
    }

    /// Cyclic shift by `shift` cells along every axis.
    pub fn translate(&mut self, shift: i64) {
        for axis in 0..self.axes.len() {
            self.translate_axis(axis, shift);
        }
    }

    /// Multiplies each cell by an independent uniform phase.
    pub fn dephase_random<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for a in self.amplitudes.iter_mut() {
            let theta: f64 = rng.gen::<f64>() * TAU;
            *a *= C64::from_polar(1.0, theta);
        }
    }

    /// Reflection `chi <- 2 mean(chi) - chi`.
    pub fn invert_about_mean(&mut self) {
        let n = self.amplitudes.len() as f64;
        let mean: C64 = self.amplitudes.iter().sum::<C64>() / n;
        let twice = mean * 2.0;
        for a in self.amplitudes.iter_mut() {
            *a = twice - *a;
        }
    }

    /// `sum_g |chi_g|^2 p_g`
    pub fn expected_success(&self, p: &[f64]) -> Result<f64> {
        if p.len() != self.amplitudes.len() {
            return Err(Error::Dimension {
                expected: self.amplitudes.len(),
                actual: p.len(),
            });
        }
        let mut acc = 0.0;
        for (a, &pg) in self.amplitudes.iter().zip(p) {
            if !(-PROBABILITY_TOL..=1.0 + PROBABILITY_TOL).contains(&pg) {
                return Err(Error::Probability { value: pg });
            }
            acc += a.norm_sqr() * pg;
        }
        Ok(acc)
    }

    /// Circular variance `1 - |sum_g |chi_g|^2 e^{i angle_g}|`, averaged over
    /// axes. 0 for a point mass, 1 when the first moment vanishes.
    pub fn circular_variance(&self) -> f64 {
        let probs = self.probabilities();
        let mut total = 0.0;
        for (k, axis) in self.axes.iter().enumerate() {
            let mut moment = C64::new(0.0, 0.0);
            for (g, &p) in probs.iter().enumerate() {
                let i = self.multi_index(g)[k];
                moment += C64::from_polar(p, axis.angle(i));
            }
            total += 1.0 - moment.norm();
        }
        (total / self.axes.len() as f64).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn delta(n: usize, at: usize) -> ParameterState {
        let mut amps = vec![C64::new(0.0, 0.0); n];
        amps[at] = C64::new(1.0, 0.0);
        ParameterState::from_amplitudes(vec![Axis::phase(n).unwrap()], amps).unwrap()
    }

    fn random(n: usize, seed: u64) -> ParameterState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..n)
            .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let mut s = ParameterState::from_amplitudes(vec![Axis::phase(n).unwrap()], amps).unwrap();
        s.normalize();
        s
    }

    #[test]
    fn uniform_init_values() {
        let s = ParameterState::uniform(4, 0.0, TAU).unwrap();
        for a in s.amplitudes() {
            assert!((a - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
        let s = ParameterState::uniform(256, 0.0, TAU).unwrap();
        assert!((s.axes()[0].cell_width() - TAU / 256.0).abs() < 1e-15);
        assert!(ParameterState::uniform(1, 0.0, TAU).is_err());
        let p: Vec<f64> = (0..256).map(|g| (g % 7) as f64 / 7.0).collect();
        let flat = p.iter().sum::<f64>() / 256.0;
        assert!((s.expected_success(&p).unwrap() - flat).abs() < 1e-12);
    }

    #[test]
    fn translate_moves_delta() {
        let mut s = delta(8, 3);
        s.translate(2);
        assert_eq!(s.argmax(), 5);
        let mut s = delta(8, 7);
        s.translate(3);
        assert_eq!(s.argmax(), 2);
        let r = random(8, 1);
        let mut t = r.clone();
        t.translate(5);
        t.translate(-5);
        assert_eq!(r, t);
    }

    #[test]
    fn translate_on_product_grid() {
        let axes = vec![Axis::phase(4).unwrap(), Axis::phase(3).unwrap()];
        let mut amps = vec![C64::new(0.0, 0.0); 12];
        amps[3 + 2] = C64::new(1.0, 0.0);
        let mut s = ParameterState::from_amplitudes(axes, amps).unwrap();
        s.translate_axis(1, 1);
        assert_eq!(s.multi_index(s.argmax()), vec![1, 0]);
        s.translate_axis(0, -2);
        assert_eq!(s.multi_index(s.argmax()), vec![3, 0]);
    }

    #[test]
    fn dephase_keeps_magnitudes_and_is_reproducible() {
        let s = random(16, 4);
        let mut a = s.clone();
        let mut b = s.clone();
        a.dephase_random(&mut ChaCha8Rng::seed_from_u64(99));
        b.dephase_random(&mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a, b);
        for (x, y) in s.amplitudes().iter().zip(a.amplitudes()) {
            assert!((x.norm() - y.norm()).abs() < 1e-15);
        }
        assert!((s.norm_sqr() - a.norm_sqr()).abs() < 1e-15);
    }

    #[test]
    fn inversion_about_mean() {
        let s = ParameterState::uniform(8, 0.0, TAU).unwrap();
        let mut t = s.clone();
        t.invert_about_mean();
        for (x, y) in s.amplitudes().iter().zip(t.amplitudes()) {
            assert!((x - y).norm() < 1e-15);
        }

        let c = 1.0 / 3f64.sqrt();
        let amps = vec![
            C64::new(c, 0.0),
            C64::new(c, 0.0),
            C64::new(c, 0.0),
            C64::new(0.0, 0.0),
        ];
        let mut dip = ParameterState::from_amplitudes(vec![Axis::phase(4).unwrap()], amps).unwrap();
        dip.invert_about_mean();
        let expected = [0.2887, 0.2887, 0.2887, 0.8660];
        for (a, e) in dip.amplitudes().iter().zip(expected) {
            assert!((a.re - e).abs() < 1e-4 && a.im.abs() < 1e-15);
        }
        assert!((dip.norm_sqr() - 1.0).abs() < 1e-12);

        let r = random(32, 8);
        let mut twice = r.clone();
        twice.invert_about_mean();
        twice.invert_about_mean();
        for (x, y) in r.amplitudes().iter().zip(twice.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn expected_success_cases() {
        let s = random(6, 2);
        assert!((s.expected_success(&[0.3; 6]).unwrap() - 0.3).abs() < 1e-12);
        let d = delta(6, 4);
        let p = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert!((d.expected_success(&p).unwrap() - 0.5).abs() < 1e-15);
        let u = ParameterState::uniform(2, 0.0, TAU).unwrap();
        assert!((u.expected_success(&[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            u.expected_success(&[0.0, 1.1]),
            Err(Error::Probability { .. })
        ));
        assert!(u.expected_success(&[0.0]).is_err());
    }

    #[test]
    fn circular_variance_cases() {
        assert!(delta(16, 5).circular_variance().abs() < 1e-15);
        let u = ParameterState::uniform(16, 0.0, TAU).unwrap();
        assert!((u.circular_variance() - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![C64::new(0.0, 0.0); 16];
        amps[3] = C64::new(h, 0.0);
        amps[11] = C64::new(h, 0.0);
        let anti = ParameterState::from_amplitudes(vec![Axis::phase(16).unwrap()], amps).unwrap();
        assert!((anti.circular_variance() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_points_hit_zero_and_pi() {
        let axis = Axis::phase(256).unwrap();
        assert_eq!(axis.point(0), 0.0);
        assert!((axis.point(128) - std::f64::consts::PI).abs() < 1e-15);
    }
}
