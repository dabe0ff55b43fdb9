//! Dense statevector of the processor register.
//!
//! Basis ordering is little-endian: qubit `q` is bit `q` of the basis index.
//! Gates are applied in place on amplitude pairs; no `2^n x 2^n` matrix is
//! ever formed.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const UNITARY_TOL: f64 = 1e-10;
const MEASURE_NORM_TOL: f64 = 1e-6;

/// A validated single-qubit unitary, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    m: [[C64; 2]; 2],
}

impl Gate {
    /// Builds a gate, rejecting matrices that are not unitary within `1e-10`.
    pub fn new(m: [[C64; 2]; 2]) -> Result<Self> {
        let gate = Gate { m };
        let deviation = gate.unitarity_deviation();
        if deviation > UNITARY_TOL {
            return Err(Error::NonUnitary { deviation });
        }
        Ok(gate)
    }

    pub fn identity() -> Self {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        Gate {
            m: [[l, o], [o, l]],
        }
    }

    pub fn hadamard() -> Self {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Gate {
            m: [[h, h], [h, -h]],
        }
    }

    /// `diag(1, e^{i angle})`
    pub fn phase(angle: f64) -> Self {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        Gate {
            m: [[l, o], [o, C64::from_polar(1.0, angle)]],
        }
    }

    /// `exp(-i angle Y / 2)`
    pub fn ry(angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        Gate {
            m: [
                [C64::new(c, 0.0), C64::new(-s, 0.0)],
                [C64::new(s, 0.0), C64::new(c, 0.0)],
            ],
        }
    }

    /// `exp(-i angle Z / 2)`
    pub fn rz(angle: f64) -> Self {
        let o = C64::new(0.0, 0.0);
        Gate {
            m: [
                [C64::from_polar(1.0, -angle / 2.0), o],
                [o, C64::from_polar(1.0, angle / 2.0)],
            ],
        }
    }

    pub fn dagger(&self) -> Self {
        let m = &self.m;
        Gate {
            m: [
                [m[0][0].conj(), m[1][0].conj()],
                [m[0][1].conj(), m[1][1].conj()],
            ],
        }
    }

    pub fn matrix(&self) -> &[[C64; 2]; 2] {
        &self.m
    }

    /// Max elementwise deviation of `G^dagger G` from the identity.
    fn unitarity_deviation(&self) -> f64 {
        let m = &self.m;
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let v = m[0][i].conj() * m[0][j] + m[1][i].conj() * m[1][j];
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// Pure state of an `n_qubits` register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureState {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl PureState {
    /// `|0...0>`
    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0).expect("index 0 is always valid")
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::BasisOutOfRange { index, dim });
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(PureState {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps an amplitude vector whose length must be a power of two.
    /// The vector is taken as given; call [`PureState::normalize`] if needed.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Dimension {
                expected: len.next_power_of_two().max(1),
                actual: len,
            });
        }
        Ok(PureState {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn amplitude(&self, basis: usize) -> Result<C64> {
        self.amplitudes
            .get(basis)
            .copied()
            .ok_or(Error::BasisOutOfRange {
                index: basis,
                dim: self.dim(),
            })
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

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitOutOfRange {
                index: qubit,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    pub fn apply_single_qubit_gate(&mut self, qubit: usize, gate: &Gate) -> Result<()> {
        self.check_qubit(qubit)?;
        let [[g00, g01], [g10, g11]] = gate.m;
        let stride = 1usize << qubit;
        for block in self.amplitudes.chunks_exact_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a0, *a1);
                *a0 = g00 * x0 + g01 * x1;
                *a1 = g10 * x0 + g11 * x1;
            }
        }
        Ok(())
    }

    pub fn apply_hadamard(&mut self, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let stride = 1usize << qubit;
        for block in self.amplitudes.chunks_exact_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a0, *a1);
                *a0 = (x0 + x1) * h;
                *a1 = (x0 - x1) * h;
            }
        }
        Ok(())
    }

    /// Multiplies every amplitude with both `control` and `target` bits set
    /// by `e^{i angle}`.
    pub fn apply_controlled_phase(
        &mut self,
        control: usize,
        target: usize,
        angle: f64,
    ) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::SameQubit(control));
        }
        if angle == 0.0 {
            return Ok(());
        }
        let mask = (1usize << control) | (1usize << target);
        let factor = C64::from_polar(1.0, angle);
        for (b, a) in self.amplitudes.iter_mut().enumerate() {
            if b & mask == mask {
                *a *= factor;
            }
        }
        Ok(())
    }

    pub fn apply_swap(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        if a == b {
            return Ok(());
        }
        let (ma, mb) = (1usize << a, 1usize << b);
        for idx in 0..self.amplitudes.len() {
            // visit each pair once, from the side with bit a set and bit b clear
            if idx & ma != 0 && idx & mb == 0 {
                let other = (idx & !ma) | mb;
                self.amplitudes.swap(idx, other);
            }
        }
        Ok(())
    }

    /// Projective measurement in the computational basis using one uniform
    /// draw and an inverse CDF over ascending basis indices.
    pub fn measure_computational<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let total = self.norm_sqr();
        let deviation = (total - 1.0).abs();
        if deviation > MEASURE_NORM_TOL {
            return Err(Error::Normalization { deviation });
        }
        let u: f64 = rng.gen();
        Ok(inverse_cdf(
            self.amplitudes.iter().map(|a| a.norm_sqr()),
            total,
            u,
        ))
    }

    /// `<self|other>`
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

/// Index selected by the uniform draw `u` from unnormalized `weights`
/// summing to `total`. Zero-weight entries are never returned.
pub(crate) fn inverse_cdf(weights: impl Iterator<Item = f64>, total: f64, u: f64) -> usize {
    let threshold = u * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_nonzero = i;
            acc += w;
            if acc > threshold {
                return i;
            }
        }
    }
    last_nonzero
}
