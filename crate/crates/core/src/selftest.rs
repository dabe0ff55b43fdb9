//! Runtime self-checks of the fast routes against the slow references.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::aqft::{AqftFamily, AqftInstance, OverlapModel};
use crate::error::Result;
use crate::feedback::{apply_quantum_walk, walk_coefficients};
use crate::filter::{brute_force_joint_step, sample_and_update, OutcomeAmplitudes};
use crate::grover::GroverInstance;
use crate::oracle::{apply_dense, bessel_j, dft_matrix, walk_unitary};
use crate::parameter::{Axis, ParameterState};
use crate::statevector::{PureState, C64};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub max_deviation: f64,
    pub tolerance: f64,
}

fn check(name: &'static str, max_deviation: f64, tolerance: f64) -> Check {
    Check {
        name,
        passed: max_deviation <= tolerance,
        max_deviation,
        tolerance,
    }
}

pub fn run_all() -> Result<Vec<Check>> {
    Ok(vec![
        full_band_is_dft()?,
        overlap_model_matches_statevector()?,
        grover_recursion_matches_full()?,
        filter_matches_joint_evolution()?,
        walk_matches_matrix_exponential()?,
        walk_coefficients_match_bessel()?,
    ])
}

fn full_band_is_dft() -> Result<Check> {
    let mut dev: f64 = 0.0;
    for n in 2..=6 {
        let inst = AqftInstance::standard(n, n - 1)?;
        let f = dft_matrix(n);
        let dim = 1 << n;
        for c in 0..dim {
            let mut s = PureState::basis(n, c)?;
            inst.apply(&mut s)?;
            for r in 0..dim {
                dev = dev.max((s.amplitudes()[r] - f[r * dim + c]).norm());
            }
        }
    }
    Ok(check(
        "banded circuit at full band equals the DFT",
        dev,
        1e-12,
    ))
}

fn overlap_model_matches_statevector() -> Result<Check> {
    let mut dev: f64 = 0.0;
    for (n, m) in [(5, 1), (6, 2), (7, 3)] {
        let model = OverlapModel::new(n, m)?;
        let phases: Vec<f64> = (0..m).map(|j| 0.7 + 0.9 * j as f64).collect();
        let inst = AqftInstance::standard(n, m)?.with_phases(&phases)?;
        for k in 0..1usize << n {
            dev = dev
                .max((model.pass_probability(k, &phases) - inst.trial_pass_probability(k)?).abs());
        }
    }
    Ok(check(
        "closed-form trial overlap equals statevector",
        dev,
        1e-12,
    ))
}

fn grover_recursion_matches_full() -> Result<Check> {
    let mut dev: f64 = 0.0;
    for n in [4, 16, 64] {
        let g = GroverInstance::with_optimal_depth(n)?;
        for phi in [0.4, 2.0, PI, 5.1] {
            let (s, _) = g.pass_fail_amplitudes(phi);
            dev = dev.max((g.simulate_full(phi)[0] - s).norm());
        }
    }
    Ok(check(
        "two-component Grover equals full simulation",
        dev,
        1e-10,
    ))
}

fn filter_matches_joint_evolution() -> Result<Check> {
    let family = AqftFamily {
        base: AqftInstance::standard(3, 1)?,
    };
    let mut chi = ParameterState::uniform(8, 0.0, 2.0 * PI)?;
    let mut shadow = chi.clone();
    let input = crate::aqft::inverse_fourier_basis(3, 5)?;
    let mut rng_a = ChaCha8Rng::seed_from_u64(11);
    let mut rng_b = ChaCha8Rng::seed_from_u64(11);
    let mut dev: f64 = 0.0;
    for _ in 0..10 {
        let amps = OutcomeAmplitudes::from_circuit(&chi, &family, &input)?;
        let r = sample_and_update(&mut chi, &amps, &mut rng_a)?;
        let (rb, next) = brute_force_joint_step(&shadow, &family, &input, &mut rng_b)?;
        shadow = next;
        if r != rb {
            dev = f64::INFINITY;
            break;
        }
        for (a, b) in chi.amplitudes().iter().zip(shadow.amplitudes()) {
            dev = dev.max((a - b).norm());
        }
    }
    Ok(check("per-cell filter equals joint evolution", dev, 1e-12))
}

fn walk_matches_matrix_exponential() -> Result<Check> {
    let mut dev: f64 = 0.0;
    for size in [32, 64] {
        for x in [0.3, 0.8, 1.5] {
            let amps: Vec<C64> = (0..size)
                .map(|i| C64::from_polar(1.0 + (i % 5) as f64, 0.37 * i as f64))
                .collect();
            let mut chi = ParameterState::from_amplitudes(vec![Axis::phase(size)?], amps.clone())?;
            chi.normalize();
            let start = chi.amplitudes().to_vec();
            apply_quantum_walk(&mut chi, &walk_coefficients(x, 1e-14)?, 1);
            let want = apply_dense(&walk_unitary(size, x), &start);
            for (a, b) in chi.amplitudes().iter().zip(&want) {
                dev = dev.max((a - b).norm());
            }
        }
    }
    Ok(check("walk series equals matrix exponential", dev, 1e-8))
}

fn walk_coefficients_match_bessel() -> Result<Check> {
    let mut dev: f64 = 0.0;
    for x in [0.3, 0.8, 1.5, 4.0] {
        let w = walk_coefficients(x, 1e-15)?;
        for (l, p) in w.coeffs.iter().enumerate() {
            let want = C64::new(0.0, -1.0).powu(l as u32) * bessel_j(l, 2.0 * x);
            dev = dev.max((p - want).norm());
        }
    }
    Ok(check("walk coefficients equal (-i)^l J_l(2x)", dev, 1e-10))
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all().unwrap() {
            assert!(c.passed, "{} deviated by {:e}", c.name, c.max_deviation);
        }
    }
}
