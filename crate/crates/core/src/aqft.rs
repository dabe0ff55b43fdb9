//! Banded (approximate) quantum Fourier transform with trainable phases.
//!
//! The circuit is the textbook QFT on a little-endian register: for each
//! qubit from the most significant down, a Hadamard followed by controlled
//! phases from every lower qubit, then a bit-reversal. Controlled phases at
//! separation `j <= band` use the trainable angle `phases[j-1]` (standard
//! value `pi / 2^j`); those beyond the band are dropped.
//!
//! A trial prepares `F^dagger |k>` with the exact inverse transform, runs
//! the banded circuit and passes iff the readout equals `k`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::ParametrizedCircuit;
use crate::statevector::{PureState, C64};

pub const MAX_QUBITS: usize = 20;
/// Above this register size [`average_success`] samples inputs instead of
/// enumerating them.
pub const EXACT_AVERAGE_LIMIT: usize = 12;
pub const SAMPLED_INPUTS: usize = 4096;
const SAMPLING_SEED: u64 = 0x005e_ed0f_a9f7;

pub fn standard_phase(separation: usize) -> f64 {
    PI / (1u64 << separation) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AqftInstance {
    pub n_qubits: usize,
    pub band: usize,
    pub phases: Vec<f64>,
}

impl AqftInstance {
    pub fn new(n_qubits: usize, band: usize, phases: Vec<f64>) -> Result<Self> {
        if !(2..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::Config(format!(
                "AQFT register must have 2..={MAX_QUBITS} qubits, got {n_qubits}"
            )));
        }
        if band > n_qubits - 1 {
            return Err(Error::Config(format!(
                "band {band} exceeds the largest separation {} of a {n_qubits}-qubit register",
                n_qubits - 1
            )));
        }
        if phases.len() != band {
            return Err(Error::Dimension {
                expected: band,
                actual: phases.len(),
            });
        }
        Ok(AqftInstance {
            n_qubits,
            band,
            phases,
        })
    }

    /// Banded circuit with the textbook angles `pi / 2^j`.
    pub fn standard(n_qubits: usize, band: usize) -> Result<Self> {
        Self::new(n_qubits, band, (1..=band).map(standard_phase).collect())
    }

    pub fn with_phases(&self, phases: &[f64]) -> Result<Self> {
        Self::new(self.n_qubits, self.band, phases.to_vec())
    }

    fn check(&self, state: &PureState) -> Result<()> {
        if state.n_qubits() != self.n_qubits {
            return Err(Error::Dimension {
                expected: self.n_qubits,
                actual: state.n_qubits(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, state: &mut PureState) -> Result<()> {
        self.check(state)?;
        let n = self.n_qubits;
        for q in (0..n).rev() {
            state.apply_hadamard(q)?;
            for j in 1..=self.band.min(q) {
                state.apply_controlled_phase(q - j, q, self.phases[j - 1])?;
            }
        }
        for q in 0..n / 2 {
            state.apply_swap(q, n - 1 - q)?;
        }
        Ok(())
    }

    /// Gate sequence of [`AqftInstance::apply`] reversed and conjugated.
    pub fn apply_inverse(&self, state: &mut PureState) -> Result<()> {
        self.check(state)?;
        let n = self.n_qubits;
        for q in 0..n / 2 {
            state.apply_swap(q, n - 1 - q)?;
        }
        for q in 0..n {
            for j in (1..=self.band.min(q)).rev() {
                state.apply_controlled_phase(q - j, q, -self.phases[j - 1])?;
            }
            state.apply_hadamard(q)?;
        }
        Ok(())
    }

    /// Output of the banded circuit on the prepared input `F^dagger |k>`.
    pub fn trial_output(&self, k: usize) -> Result<PureState> {
        let mut state = inverse_fourier_basis(self.n_qubits, k)?;
        self.apply(&mut state)?;
        Ok(state)
    }

    /// `|<k| U F^dagger |k>|^2`
    pub fn trial_pass_probability(&self, k: usize) -> Result<f64> {
        Ok(self.trial_output(k)?.amplitude(k)?.norm_sqr())
    }
}

/// Full output amplitudes of one verification trial and the index the
/// verifier expects.
pub fn trial_success_amplitude(instance: &AqftInstance, k: usize) -> Result<(Vec<C64>, usize)> {
    Ok((instance.trial_output(k)?.into_amplitudes(), k))
}

/// `F^dagger |k>`, amplitudes `e^{-2 pi i x k / N} / sqrt(N)`.
pub fn inverse_fourier_basis(n_qubits: usize, k: usize) -> Result<PureState> {
    let dim = 1usize << n_qubits;
    if k >= dim {
        return Err(Error::BasisOutOfRange { index: k, dim });
    }
    let norm = 1.0 / (dim as f64).sqrt();
    let amps = (0..dim)
        .map(|x| {
            let turn = ((x * k) % dim) as f64 / dim as f64;
            C64::from_polar(norm, -2.0 * PI * turn)
        })
        .collect();
    PureState::from_amplitudes(amps)
}

/// Mean trial pass probability with its standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageSuccess {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub exact: bool,
}

/// Average over `k` of `|<k| U F^dagger |k>|^2` by statevector simulation:
/// every `k` for registers up to [`EXACT_AVERAGE_LIMIT`] qubits, otherwise
/// [`SAMPLED_INPUTS`] uniformly drawn `k` from a fixed seed.
pub fn average_success(instance: &AqftInstance) -> Result<AverageSuccess> {
    let dim = 1usize << instance.n_qubits;
    if instance.n_qubits <= EXACT_AVERAGE_LIMIT {
        let mut total = 0.0;
        for k in 0..dim {
            total += instance.trial_pass_probability(k)?;
        }
        return Ok(AverageSuccess {
            value: total / dim as f64,
            std_error: 0.0,
            samples: dim,
            exact: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLING_SEED);
    let values: Vec<f64> = (0..SAMPLED_INPUTS)
        .map(|_| instance.trial_pass_probability(rng.gen_range(0..dim)))
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(AverageSuccess {
        value: mean,
        std_error: (var / n).sqrt(),
        samples: values.len(),
        exact: false,
    })
}

/// Closed form of the trial pass probability.
///
/// Both the banded circuit and the exact transform map `|x>` to product
/// states whose phases are bilinear in the bits of `x` and of the output, so
/// `<k| U F^dagger |k> = prod_a (1 + e^{i beta_a(k)}) / 2` with
/// `beta_a(k) = sum_b k_b (angle_U(a+b) - angle_F(a+b))`. Only separations
/// `1..=band` depend on the phases; the rest is tabulated once.
#[derive(Debug, Clone)]
pub struct OverlapModel {
    n_qubits: usize,
    band: usize,
    inputs: Vec<usize>,
    /// `fixed[i * n + a]`: phase-independent part of `beta_a(inputs[i])`
    fixed: Vec<f64>,
}

impl OverlapModel {
    /// Model over every input `k`.
    pub fn new(n_qubits: usize, band: usize) -> Result<Self> {
        Self::with_inputs(n_qubits, band, (0..1usize << n_qubits).collect())
    }

    /// Model over `count` evenly strided inputs (all of them if fewer).
    pub fn strided(n_qubits: usize, band: usize, count: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if count >= dim {
            return Self::new(n_qubits, band);
        }
        let stride = dim as f64 / count as f64;
        let inputs = (0..count).map(|i| (i as f64 * stride) as usize).collect();
        Self::with_inputs(n_qubits, band, inputs)
    }

    fn with_inputs(n_qubits: usize, band: usize, inputs: Vec<usize>) -> Result<Self> {
        AqftInstance::standard(n_qubits, band)?;
        let n = n_qubits;
        let mut fixed = vec![0.0; inputs.len() * n];
        for (i, &k) in inputs.iter().enumerate() {
            for a in 0..n {
                let mut beta = 0.0;
                for b in 0..n {
                    if a + b + 1 >= n {
                        continue;
                    }
                    let j = n - 1 - a - b;
                    if j > band && (k >> b) & 1 == 1 {
                        beta -= standard_phase(j);
                    }
                }
                fixed[i * n + a] = beta;
            }
        }
        Ok(OverlapModel {
            n_qubits,
            band,
            inputs,
            fixed,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    fn offsets(&self, phases: &[f64]) -> Vec<f64> {
        (1..=self.band)
            .map(|j| phases[j - 1] - standard_phase(j))
            .collect()
    }

    fn pass_probability_at(&self, i: usize, offsets: &[f64]) -> f64 {
        let n = self.n_qubits;
        let k = self.inputs[i];
        let mut prod = 1.0;
        for a in 0..n {
            let mut beta = self.fixed[i * n + a];
            for (jm1, d) in offsets.iter().enumerate() {
                let j = jm1 + 1;
                if a + j < n {
                    let b = n - 1 - a - j;
                    if (k >> b) & 1 == 1 {
                        beta += d;
                    }
                }
            }
            prod *= 0.5 * (1.0 + beta.cos());
        }
        prod
    }

    /// Pass probability of the trial with input `inputs[i]`.
    pub fn pass_probability(&self, i: usize, phases: &[f64]) -> f64 {
        self.pass_probability_at(i, &self.offsets(phases))
    }

    /// Mean pass probability over the model's inputs.
    pub fn average(&self, phases: &[f64]) -> f64 {
        assert_eq!(phases.len(), self.band, "one phase per separation");
        let offsets = self.offsets(phases);
        let total: f64 = (0..self.inputs.len())
            .map(|i| self.pass_probability_at(i, &offsets))
            .sum();
        total / self.inputs.len() as f64
    }
}

/// The banded circuit as a family over its trainable phases.
#[derive(Debug, Clone)]
pub struct AqftFamily {
    pub base: AqftInstance,
}

impl ParametrizedCircuit for AqftFamily {
    fn n_qubits(&self) -> usize {
        self.base.n_qubits
    }

    /// `params` replaces the leading `params.len()` phases.
    fn apply(&self, params: &[f64], state: &mut PureState) -> Result<()> {
        let mut inst = self.base.clone();
        for (p, v) in inst.phases.iter_mut().zip(params) {
            *p = *v;
        }
        inst.apply(state)
    }
}
