//! Grover search with a trainable oracle phase `|t> -> e^{i phi}|t>`.
//!
//! Oracle and diffusion both preserve `span{|t>, |u>}`, where `|u>` is the
//! uniform superposition of the non-target elements, so the evolution is
//! simulated exactly as a two-component recursion. Every wrong element
//! carries amplitude `b / sqrt(N - 1)`, which makes the aggregated
//! pass/fail outcome exact.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::OutcomeAmplitudes;
use crate::parameter::ParameterState;
use crate::statevector::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroverInstance {
    pub n_elements: usize,
    pub iterations: usize,
}

impl GroverInstance {
    pub fn new(n_elements: usize, iterations: usize) -> Result<Self> {
        if n_elements < 2 {
            return Err(Error::Config(format!(
                "need at least 2 elements, got {n_elements}"
            )));
        }
        if iterations < 1 {
            return Err(Error::Config("Grover depth must be >= 1".into()));
        }
        Ok(GroverInstance {
            n_elements,
            iterations,
        })
    }

    /// Instance at the standard optimal depth.
    pub fn with_optimal_depth(n_elements: usize) -> Result<Self> {
        Self::new(n_elements, optimal_iterations(n_elements))
    }

    /// `<t|s> = 1/sqrt(N)`
    pub fn overlap(&self) -> f64 {
        1.0 / (self.n_elements as f64).sqrt()
    }

    fn angle(&self) -> f64 {
        self.overlap().asin()
    }

    /// `(s, b)`: final amplitudes on `|t>` and `|u>` after the circuit with
    /// oracle phase `phi`.
    pub fn pass_fail_amplitudes(&self, phi: f64) -> (C64, C64) {
        let theta = self.angle();
        let (sin2, cos2) = (2.0 * theta).sin_cos();
        let oracle = C64::from_polar(1.0, phi);
        let mut t = C64::new(theta.sin(), 0.0);
        let mut u = C64::new(theta.cos(), 0.0);
        for _ in 0..self.iterations {
            t *= oracle;
            // 2|s><s| - 1 in the (t, u) basis
            let (nt, nu) = (-cos2 * t + sin2 * u, sin2 * t + cos2 * u);
            t = nt;
            u = nu;
        }
        (t, u)
    }

    pub fn success_probability(&self, phi: f64) -> f64 {
        self.pass_fail_amplitudes(phi).0.norm_sqr()
    }

    /// `|s(phi_g)|^2` at every grid point of a single-axis register.
    pub fn success_probability_map(&self, grid: &ParameterState) -> Vec<f64> {
        (0..grid.grid_size())
            .map(|g| self.success_probability(grid.point(g)[0]))
            .collect()
    }

    /// Binary outcome table for the decimation filter.
    pub fn outcome_amplitudes(&self, grid: &ParameterState) -> Result<OutcomeAmplitudes> {
        let (pass, fail) = (0..grid.grid_size())
            .map(|g| self.pass_fail_amplitudes(grid.point(g)[0]))
            .unzip();
        OutcomeAmplitudes::binary(pass, fail)
    }

    /// Direct simulation over all `N` elements (target is element 0).
    /// Returns the full amplitude vector.
    pub fn simulate_full(&self, phi: f64) -> Vec<C64> {
        let n = self.n_elements;
        let mut psi = vec![C64::new(1.0 / (n as f64).sqrt(), 0.0); n];
        let oracle = C64::from_polar(1.0, phi);
        for _ in 0..self.iterations {
            psi[0] *= oracle;
            let mean: C64 = psi.iter().sum::<C64>() / n as f64;
            for a in psi.iter_mut() {
                *a = mean * 2.0 - *a;
            }
        }
        psi
    }
}

/// Standard optimal depth `round(pi / (4 theta) - 1/2)`, at least 1.
pub fn optimal_iterations(n_elements: usize) -> usize {
    let theta = (1.0 / (n_elements as f64).sqrt()).asin();
    let k = (PI / (4.0 * theta) - 0.5).round();
    (k as usize).max(1)
}

/// Success of the unmodified algorithm at the optimal depth.
pub fn reference_max_success(n_elements: usize) -> f64 {
    let theta = (1.0 / (n_elements as f64).sqrt()).asin();
    let k = optimal_iterations(n_elements) as f64;
    ((2.0 * k + 1.0) * theta).sin().powi(2)
}
