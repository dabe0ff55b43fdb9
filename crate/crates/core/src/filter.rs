//! Measurement back-action on the parameter register.
//!
//! Running the processor with the parameter register in superposition
//! entangles every grid cell `g` with the output `U(phi_g)|input>`. Reading
//! out the processor in outcome `r` leaves the register in
//! `chi_g <r|U(phi_g)|input> / sqrt(P(r))`. Because the joint evolution is
//! block diagonal in `g` the update only needs the per-cell amplitudes,
//! never the joint vector; [`brute_force_joint_step`] keeps the joint
//! vector explicitly and serves as the test oracle.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::parameter::ParameterState;
use crate::statevector::{inverse_cdf, PureState, C64};

const AMPLITUDE_NORM_TOL: f64 = 1e-9;
const DISTRIBUTION_TOL: f64 = 1e-9;
const MIN_OUTCOME_PROBABILITY: f64 = 1e-300;
const BRUTE_FORCE_LIMIT: usize = 1 << 16;

/// Outcome index of a verified result in [`OutcomeAmplitudes::Binary`].
pub const PASS: usize = 0;
/// Outcome index of a rejected result in [`OutcomeAmplitudes::Binary`].
pub const FAIL: usize = 1;

/// A circuit family `phi -> U(phi)` acting on a fixed-size register.
pub trait ParametrizedCircuit: Sync {
    fn n_qubits(&self) -> usize;

    /// Applies `U(params)` in place.
    fn apply(&self, params: &[f64], state: &mut PureState) -> Result<()>;
}

/// Per-cell output amplitudes `<r|U(phi_g)|input>`.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeAmplitudes {
    /// Two aggregated outcomes, `PASS` then `FAIL`.
    Binary { pass: Vec<C64>, fail: Vec<C64> },
    /// Every basis outcome, stored cell-major: `amps[g * n_outcomes + r]`.
    Full { n_outcomes: usize, amps: Vec<C64> },
}

impl OutcomeAmplitudes {
    pub fn binary(pass: Vec<C64>, fail: Vec<C64>) -> Result<Self> {
        if pass.len() != fail.len() {
            return Err(Error::Dimension {
                expected: pass.len(),
                actual: fail.len(),
            });
        }
        for (s, b) in pass.iter().zip(&fail) {
            let deviation = (s.norm_sqr() + b.norm_sqr() - 1.0).abs();
            if deviation > AMPLITUDE_NORM_TOL {
                return Err(Error::Normalization { deviation });
            }
        }
        Ok(OutcomeAmplitudes::Binary { pass, fail })
    }

    pub fn full(n_outcomes: usize, amps: Vec<C64>) -> Result<Self> {
        if n_outcomes == 0 || !amps.len().is_multiple_of(n_outcomes) {
            return Err(Error::Dimension {
                expected: n_outcomes,
                actual: amps.len(),
            });
        }
        for cell in amps.chunks_exact(n_outcomes) {
            let norm: f64 = cell.iter().map(|a| a.norm_sqr()).sum();
            let deviation = (norm - 1.0).abs();
            if deviation > AMPLITUDE_NORM_TOL {
                return Err(Error::Normalization { deviation });
            }
        }
        Ok(OutcomeAmplitudes::Full { n_outcomes, amps })
    }

    /// Runs `circuit` on `input` for every cell of `grid`.
    pub fn from_circuit<C: ParametrizedCircuit + ?Sized>(
        grid: &ParameterState,
        circuit: &C,
        input: &PureState,
    ) -> Result<Self> {
        if input.n_qubits() != circuit.n_qubits() {
            return Err(Error::Dimension {
                expected: circuit.n_qubits(),
                actual: input.n_qubits(),
            });
        }
        let cells: Vec<Vec<C64>> = (0..grid.grid_size())
            .into_par_iter()
            .map(|g| {
                let mut state = input.clone();
                circuit.apply(&grid.point(g), &mut state)?;
                Ok(state.into_amplitudes())
            })
            .collect::<Result<_>>()?;
        let n_outcomes = input.dim();
        Self::full(n_outcomes, cells.concat())
    }

    pub fn n_cells(&self) -> usize {
        match self {
            OutcomeAmplitudes::Binary { pass, .. } => pass.len(),
            OutcomeAmplitudes::Full { n_outcomes, amps } => amps.len() / n_outcomes,
        }
    }

    pub fn n_outcomes(&self) -> usize {
        match self {
            OutcomeAmplitudes::Binary { .. } => 2,
            OutcomeAmplitudes::Full { n_outcomes, .. } => *n_outcomes,
        }
    }

    /// `<r|U(phi_g)|input>`
    pub fn amplitude(&self, cell: usize, outcome: usize) -> C64 {
        match self {
            OutcomeAmplitudes::Binary { pass, fail } => {
                if outcome == PASS {
                    pass[cell]
                } else {
                    fail[cell]
                }
            }
            OutcomeAmplitudes::Full { n_outcomes, amps } => amps[cell * n_outcomes + outcome],
        }
    }

    fn check_against(&self, chi: &ParameterState) -> Result<()> {
        if self.n_cells() != chi.grid_size() {
            return Err(Error::Dimension {
                expected: chi.grid_size(),
                actual: self.n_cells(),
            });
        }
        Ok(())
    }
}

/// `P(r) = sum_g |chi_g|^2 |<r|U(phi_g)|input>|^2`, summed in cell order.
pub fn outcome_distribution(chi: &ParameterState, amps: &OutcomeAmplitudes) -> Result<Vec<f64>> {
    amps.check_against(chi)?;
    let n_out = amps.n_outcomes();
    let mut probs = vec![0.0; n_out];
    match amps {
        OutcomeAmplitudes::Binary { pass, fail } => {
            for ((c, s), b) in chi.amplitudes().iter().zip(pass).zip(fail) {
                let w = c.norm_sqr();
                probs[PASS] += w * s.norm_sqr();
                probs[FAIL] += w * b.norm_sqr();
            }
        }
        OutcomeAmplitudes::Full { amps, .. } => {
            for (c, cell) in chi.amplitudes().iter().zip(amps.chunks_exact(n_out)) {
                let w = c.norm_sqr();
                for (p, a) in probs.iter_mut().zip(cell) {
                    *p += w * a.norm_sqr();
                }
            }
        }
    }
    check_distribution(&probs)?;
    Ok(probs)
}

fn check_distribution(probs: &[f64]) -> Result<()> {
    let deviation = (probs.iter().sum::<f64>() - 1.0).abs();
    if deviation > DISTRIBUTION_TOL {
        return Err(Error::Normalization { deviation });
    }
    Ok(())
}

/// Posterior register state given outcome `outcome`.
pub fn condition_on(
    chi: &ParameterState,
    amps: &OutcomeAmplitudes,
    outcome: usize,
) -> Result<(ParameterState, f64)> {
    amps.check_against(chi)?;
    let probability: f64 = chi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(g, c)| c.norm_sqr() * amps.amplitude(g, outcome).norm_sqr())
        .sum();
    let mut post = chi.clone();
    apply_filter(&mut post, |g| amps.amplitude(g, outcome), probability)?;
    Ok((post, probability))
}

fn apply_filter(
    chi: &mut ParameterState,
    amplitude: impl Fn(usize) -> C64,
    probability: f64,
) -> Result<()> {
    if probability.is_nan() || probability < MIN_OUTCOME_PROBABILITY {
        return Err(Error::VanishingOutcome(probability));
    }
    let scale = 1.0 / probability.sqrt();
    for (g, c) in chi.amplitudes_mut().iter_mut().enumerate() {
        *c *= amplitude(g) * scale;
    }
    chi.normalize();
    Ok(())
}

/// Samples an outcome from [`outcome_distribution`] with one uniform draw
/// and applies the back-action update to `chi`. Returns the outcome index.
pub fn sample_and_update<R: Rng + ?Sized>(
    chi: &mut ParameterState,
    amps: &OutcomeAmplitudes,
    rng: &mut R,
) -> Result<usize> {
    let probs = outcome_distribution(chi, amps)?;
    let total: f64 = probs.iter().sum();
    let u: f64 = rng.gen();
    let r = inverse_cdf(probs.iter().copied(), total, u);
    apply_filter(chi, |g| amps.amplitude(g, r), probs[r])?;
    Ok(r)
}

/// Same update as [`sample_and_update`] for outcome spaces too large to keep
/// all per-cell amplitudes in memory: `cell_output(g)` is evaluated once to
/// accumulate `P(r)` and again to read the sampled component.
pub fn sample_and_update_streaming<R, F>(
    chi: &mut ParameterState,
    n_outcomes: usize,
    cell_output: F,
    rng: &mut R,
) -> Result<usize>
where
    R: Rng + ?Sized,
    F: Fn(usize) -> Result<Vec<C64>> + Sync,
{
    const CHUNK: usize = 16;
    let cells = chi.grid_size();
    let weights = chi.probabilities();
    let mut probs = vec![0.0; n_outcomes];
    for start in (0..cells).step_by(CHUNK) {
        let end = (start + CHUNK).min(cells);
        let outputs: Vec<Vec<C64>> = (start..end)
            .into_par_iter()
            .map(&cell_output)
            .collect::<Result<_>>()?;
        for (g, out) in (start..end).zip(outputs) {
            if out.len() != n_outcomes {
                return Err(Error::Dimension {
                    expected: n_outcomes,
                    actual: out.len(),
                });
            }
            for (p, a) in probs.iter_mut().zip(&out) {
                *p += weights[g] * a.norm_sqr();
            }
        }
    }
    check_distribution(&probs)?;
    let total: f64 = probs.iter().sum();
    let u: f64 = rng.gen();
    let r = inverse_cdf(probs.iter().copied(), total, u);
    let column: Vec<C64> = (0..cells)
        .into_par_iter()
        .map(|g| cell_output(g).map(|v| v[r]))
        .collect::<Result<_>>()?;
    apply_filter(chi, |g| column[g], probs[r])?;
    Ok(r)
}

/// Reference implementation holding the joint parameter-processor vector.
///
/// Builds every block `U(phi_g)` as an explicit matrix, applies the
/// block-diagonal evolution to `chi (x) input`, measures the processor
/// factor and reads back the conditional register state. Consumes one
/// uniform draw, like [`sample_and_update`].
pub fn brute_force_joint_step<C, R>(
    chi: &ParameterState,
    circuit: &C,
    input: &PureState,
    rng: &mut R,
) -> Result<(usize, ParameterState)>
where
    C: ParametrizedCircuit + ?Sized,
    R: Rng + ?Sized,
{
    let cells = chi.grid_size();
    let dim = input.dim();
    if cells * dim > BRUTE_FORCE_LIMIT {
        return Err(Error::ScaleGuard { cells, dim });
    }
    if input.n_qubits() != circuit.n_qubits() {
        return Err(Error::Dimension {
            expected: circuit.n_qubits(),
            actual: input.n_qubits(),
        });
    }

    let mut joint = vec![C64::new(0.0, 0.0); cells * dim];
    for g in 0..cells {
        for b in 0..dim {
            joint[g * dim + b] = chi.amplitudes()[g] * input.amplitudes()[b];
        }
    }

    for g in 0..cells {
        let params = chi.point(g);
        // columns of U(phi_g)
        let mut unitary = vec![C64::new(0.0, 0.0); dim * dim];
        for col in 0..dim {
            let mut basis = PureState::basis(input.n_qubits(), col)?;
            circuit.apply(&params, &mut basis)?;
            for (row, a) in basis.amplitudes().iter().enumerate() {
                unitary[row * dim + col] = *a;
            }
        }
        let block = &mut joint[g * dim..(g + 1) * dim];
        let old = block.to_vec();
        for (row, out) in block.iter_mut().enumerate() {
            *out = (0..dim)
                .map(|col| unitary[row * dim + col] * old[col])
                .sum();
        }
    }

    let mut marginal = vec![0.0; dim];
    for g in 0..cells {
        for r in 0..dim {
            marginal[r] += joint[g * dim + r].norm_sqr();
        }
    }
    let total: f64 = marginal.iter().sum();
    let u: f64 = rng.gen();
    let r = inverse_cdf(marginal.iter().copied(), total, u);

    let projected: Vec<C64> = (0..cells).map(|g| joint[g * dim + r]).collect();
    let norm = projected.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if (norm * norm).is_nan() || norm * norm < MIN_OUTCOME_PROBABILITY {
        return Err(Error::VanishingOutcome(norm * norm));
    }
    let conditional = projected.into_iter().map(|a| a / norm).collect();
    Ok((
        r,
        ParameterState::from_amplitudes(chi.axes().to_vec(), conditional)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parameter::Axis;
    use crate::statevector::Gate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn uniform(n: usize) -> ParameterState {
        ParameterState::uniform(n, 0.0, std::f64::consts::TAU).unwrap()
    }

    struct Identity(usize);
    impl ParametrizedCircuit for Identity {
        fn n_qubits(&self) -> usize {
            self.0
        }
        fn apply(&self, _: &[f64], _: &mut PureState) -> Result<()> {
            Ok(())
        }
    }

    /// Ry(phi) on qubit 0, then a fixed entangler.
    struct Rotor;
    impl ParametrizedCircuit for Rotor {
        fn n_qubits(&self) -> usize {
            2
        }
        fn apply(&self, params: &[f64], state: &mut PureState) -> Result<()> {
            state.apply_single_qubit_gate(0, &Gate::ry(params[0]))?;
            state.apply_single_qubit_gate(1, &Gate::hadamard())?;
            state.apply_controlled_phase(0, 1, 0.7 * params[0])
        }
    }

    #[test]
    fn binary_rejects_inconsistent_amplitudes() {
        assert!(OutcomeAmplitudes::binary(vec![c(1.0)], vec![c(0.5)]).is_err());
        assert!(OutcomeAmplitudes::binary(vec![c(1.0)], vec![c(0.0), c(1.0)]).is_err());
    }

    #[test]
    fn deterministic_circuit_always_passes() {
        let chi = uniform(8);
        let amps = OutcomeAmplitudes::binary(vec![c(1.0); 8], vec![c(0.0); 8]).unwrap();
        let p = outcome_distribution(&chi, &amps).unwrap();
        assert!((p[PASS] - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut post = chi.clone();
        assert_eq!(sample_and_update(&mut post, &amps, &mut rng).unwrap(), PASS);
        for (a, b) in chi.amplitudes().iter().zip(post.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn identity_circuit_full_mode_keeps_chi() {
        let chi = uniform(4);
        let input = PureState::basis(2, 3).unwrap();
        let amps = OutcomeAmplitudes::from_circuit(&chi, &Identity(2), &input).unwrap();
        let p = outcome_distribution(&chi, &amps).unwrap();
        assert!((p[3] - 1.0).abs() < 1e-15);
        let mut post = chi.clone();
        let r = sample_and_update(&mut post, &amps, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(r, 3);
        assert_eq!(post, chi);
    }

    #[test]
    fn point_mass_reduces_to_cell_probabilities() {
        let mut amps_chi = vec![c(0.0); 4];
        amps_chi[2] = c(1.0);
        let chi = ParameterState::from_amplitudes(vec![Axis::phase(4).unwrap()], amps_chi).unwrap();
        let s = [0.1f64, 0.5, 0.8, 0.3];
        let amps = OutcomeAmplitudes::binary(
            s.iter().map(|v| c(v.sqrt())).collect(),
            s.iter().map(|v| c((1.0 - v).sqrt())).collect(),
        )
        .unwrap();
        let p = outcome_distribution(&chi, &amps).unwrap();
        assert!((p[PASS] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn two_cell_filters() {
        let chi = uniform(2);
        let amps = OutcomeAmplitudes::binary(vec![c(1.0), c(0.0)], vec![c(0.0), c(1.0)]).unwrap();
        let p = outcome_distribution(&chi, &amps).unwrap();
        assert!((p[PASS] - 0.5).abs() < 1e-15);
        let (post, _) = condition_on(&chi, &amps, PASS).unwrap();
        assert!((post.amplitudes()[0] - c(1.0)).norm() < 1e-15);
        assert!(post.amplitudes()[1].norm() < 1e-15);
    }

    #[test]
    fn complementary_filter_on_fail() {
        let chi = uniform(4);
        let amps = OutcomeAmplitudes::binary(
            vec![c(1.0), c(1.0), c(0.0), c(0.0)],
            vec![c(0.0), c(0.0), c(1.0), c(1.0)],
        )
        .unwrap();
        let (post, p) = condition_on(&chi, &amps, FAIL).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [0.0, 0.0, h, h];
        for (a, e) in post.amplitudes().iter().zip(expected) {
            assert!((a - c(e)).norm() < 1e-15);
        }
    }

    #[test]
    fn vanishing_outcome_is_an_error() {
        let chi = uniform(2);
        let amps = OutcomeAmplitudes::binary(vec![c(1.0); 2], vec![c(0.0); 2]).unwrap();
        assert!(matches!(
            condition_on(&chi, &amps, FAIL),
            Err(Error::VanishingOutcome(_))
        ));
    }

    #[test]
    fn block_update_matches_joint_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let amps: Vec<C64> = (0..8).map(|_| C64::new(rng.gen(), rng.gen())).collect();
        let mut chi = ParameterState::from_amplitudes(vec![Axis::phase(8).unwrap()], amps).unwrap();
        chi.normalize();
        let input = PureState::zero(2);
        let mut block = chi.clone();
        let mut joint = chi.clone();
        let mut rng_a = ChaCha8Rng::seed_from_u64(5);
        let mut rng_b = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let table = OutcomeAmplitudes::from_circuit(&block, &Rotor, &input).unwrap();
            let r_block = sample_and_update(&mut block, &table, &mut rng_a).unwrap();
            let (r_joint, next) =
                brute_force_joint_step(&joint, &Rotor, &input, &mut rng_b).unwrap();
            joint = next;
            assert_eq!(r_block, r_joint);
            for (a, b) in block.amplitudes().iter().zip(joint.amplitudes()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn streaming_matches_dense() {
        let chi = uniform(16);
        let input = PureState::zero(2);
        let mut dense = chi.clone();
        let mut streamed = chi.clone();
        let mut rng_a = ChaCha8Rng::seed_from_u64(8);
        let mut rng_b = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let table_now = OutcomeAmplitudes::from_circuit(&dense, &Rotor, &input).unwrap();
            let ra = sample_and_update(&mut dense, &table_now, &mut rng_a).unwrap();
            let grid = streamed.clone();
            let rb = sample_and_update_streaming(
                &mut streamed,
                4,
                |g| {
                    let mut s = input.clone();
                    Rotor.apply(&grid.point(g), &mut s)?;
                    Ok(s.into_amplitudes())
                },
                &mut rng_b,
            )
            .unwrap();
            assert_eq!(ra, rb);
            for (a, b) in dense.amplitudes().iter().zip(streamed.amplitudes()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn brute_force_scale_guard() {
        let chi = uniform(1 << 13);
        let input = PureState::zero(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            brute_force_joint_step(&chi, &Identity(4), &input, &mut rng),
            Err(Error::ScaleGuard { .. })
        ));
    }

    #[test]
    fn brute_force_point_mass_is_plain_measurement() {
        let mut amps = vec![c(0.0); 8];
        amps[5] = c(1.0);
        let chi = ParameterState::from_amplitudes(vec![Axis::phase(8).unwrap()], amps).unwrap();
        let input = PureState::zero(2);
        let mut out = input.clone();
        Rotor.apply(&chi.point(5), &mut out).unwrap();
        let mut rng_a = ChaCha8Rng::seed_from_u64(33);
        let mut rng_b = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..50 {
            let (r, post) = brute_force_joint_step(&chi, &Rotor, &input, &mut rng_a).unwrap();
            assert_eq!(r, out.measure_computational(&mut rng_b).unwrap());
            assert!((post.amplitudes()[5].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_filter_leaves_chi_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let amps: Vec<C64> = (0..8).map(|_| C64::new(rng.gen(), rng.gen())).collect();
        let mut chi = ParameterState::from_amplitudes(vec![Axis::phase(8).unwrap()], amps).unwrap();
        chi.normalize();
        let mut input = PureState::zero(2);
        input.apply_hadamard(0).unwrap();
        input.apply_hadamard(1).unwrap();
        for _ in 0..5 {
            let (_, post) = brute_force_joint_step(&chi, &Identity(2), &input, &mut rng).unwrap();
            for (a, b) in chi.amplitudes().iter().zip(post.amplitudes()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
