//! Feedback applied to the parameter register after a failed verification.
//!
//! Strategies implement [`FeedbackStrategy`] and are created by name through
//! a [`StrategyRegistry`]. The built-in ones are:
//!
//! * `single-push`: translate `chi` alternately right and left, with a
//!   magnitude shrinking as `1/sqrt(1 + successes)`.
//! * `double-push`: a coherent quantum-walk step that splits every grid
//!   point towards both neighbours, followed by random dephasing.
//!
//! [`FeedbackController`] wraps a strategy and adds the one-shot
//! inversion-about-the-mean kickstart on the first failure.

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parameter::ParameterState;
use crate::statevector::C64;

/// Largest series index the walk operator may need.
pub const MAX_WALK_TERMS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// Registered strategy name, e.g. `single-push` or `double-push`.
    pub strategy: String,
    /// Push magnitude before any success, in grid cells.
    pub initial_push_cells: usize,
    /// Magnitude ratio of leftward to rightward pushes (1 = symmetric).
    pub push_asymmetry: f64,
    /// Walk strength `x = lambda dt / hbar`.
    pub walk_strength: f64,
    /// Walk hop length in grid cells.
    pub walk_step_cells: usize,
    pub kickstart_enabled: bool,
    pub series_cutoff: f64,
}

impl FeedbackConfig {
    /// Defaults for a grid with `cells_per_axis` points per axis.
    pub fn defaults_for_grid(strategy: &str, cells_per_axis: usize) -> Self {
        FeedbackConfig {
            strategy: strategy.to_string(),
            initial_push_cells: (cells_per_axis / 32).max(1),
            push_asymmetry: 1.0,
            walk_strength: 0.8,
            walk_step_cells: 1,
            kickstart_enabled: true,
            series_cutoff: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_push_cells < 1 {
            return Err(Error::Config(
                "initial push must be at least one cell".into(),
            ));
        }
        if self.walk_step_cells < 1 {
            return Err(Error::Config("walk step must be at least one cell".into()));
        }
        if self.walk_strength.is_nan()
            || self.walk_strength < 0.0
            || !self.walk_strength.is_finite()
        {
            return Err(Error::Config(format!(
                "walk strength must be finite and >= 0, got {}",
                self.walk_strength
            )));
        }
        if self.push_asymmetry.is_nan()
            || self.push_asymmetry <= 0.0
            || !self.push_asymmetry.is_finite()
        {
            return Err(Error::Config(format!(
                "push asymmetry must be positive, got {}",
                self.push_asymmetry
            )));
        }
        if self.series_cutoff.is_nan() || self.series_cutoff <= 0.0 {
            return Err(Error::Config("series cutoff must be positive".into()));
        }
        Ok(())
    }
}

/// Truncated coefficients `p_0..p_{L-1}` of the walk operator
/// `U = p_0 + sum_l p_l (T(l) + T(-l))`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkCoefficients {
    pub x: f64,
    pub coeffs: Vec<C64>,
}

impl WalkCoefficients {
    /// `|p_0|^2 + 2 sum_{l>=1} |p_l|^2`, which is 1 for a unitary walk.
    pub fn unitarity_sum(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(l, p)| {
                if l == 0 {
                    p.norm_sqr()
                } else {
                    2.0 * p.norm_sqr()
                }
            })
            .sum()
    }
}

/// `J_0(z) .. J_{n}(z)` by Miller's backward recurrence, normalized with
/// `J_0 + 2 sum_k J_{2k} = 1`. Stable for all `z`, unlike the power series,
/// whose terms grow like `e^z` before cancelling.
fn bessel_sequence(z: f64, n: usize) -> Vec<f64> {
    if z == 0.0 {
        let mut out = vec![0.0; n + 1];
        out[0] = 1.0;
        return out;
    }
    let mut start = n.max(z.ceil() as usize) + 60 + (10.0 * z.sqrt()) as usize;
    start += start % 2;
    let mut out = vec![0.0; n + 1];
    let (mut above, mut current) = (0.0, 1e-300);
    let mut norm = 0.0;
    for k in (0..=start).rev() {
        if k <= n {
            out[k] = current;
        }
        if k % 2 == 0 {
            norm += if k == 0 { current } else { 2.0 * current };
        }
        if k == 0 {
            break;
        }
        let below = 2.0 * k as f64 / z * current - above;
        above = current;
        current = below;
        if current.abs() > 1e250 {
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
            above *= 1e-250;
            current *= 1e-250;
            norm *= 1e-250;
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Series coefficients of the walk operator, truncated at the first index
/// past the Bessel turning point whose magnitude drops below `cutoff`.
pub fn walk_coefficients(x: f64, cutoff: f64) -> Result<WalkCoefficients> {
    if x.is_nan() || x < 0.0 || !x.is_finite() {
        return Err(Error::Config(format!(
            "walk strength must be >= 0, got {x}"
        )));
    }
    // p_l(x) = sum_{j>=l} (-ix)^{2j-l} / (j! (j-l)!) = (-i)^l J_l(2x)
    let bessel = bessel_sequence(2.0 * x, MAX_WALK_TERMS);
    let mut coeffs = Vec::new();
    for (l, &j) in bessel.iter().enumerate() {
        let p = C64::new(0.0, -1.0).powu(l as u32) * j;
        if p.norm() < cutoff && l as f64 > 2.0 * x {
            return Ok(WalkCoefficients { x, coeffs });
        }
        coeffs.push(p);
    }
    Err(Error::Config(format!(
        "walk strength {x} needs more than {MAX_WALK_TERMS} series terms"
    )))
}

/// Applies `p_0 chi + sum_l p_l (T(+l s) chi + T(-l s) chi)` along every
/// axis of the register, `s = step_cells`.
pub fn apply_quantum_walk(chi: &mut ParameterState, walk: &WalkCoefficients, step_cells: usize) {
    let sizes: Vec<usize> = chi.axes().iter().map(|a| a.size).collect();
    for axis in 0..sizes.len() {
        let size = sizes[axis];
        let inner: usize = sizes[axis + 1..].iter().product();
        let outer: usize = sizes[..axis].iter().product();
        let src = chi.amplitudes().to_vec();
        let dst = chi.amplitudes_mut();
        for o in 0..outer {
            let base = o * size * inner;
            for j in 0..inner {
                let at = |i: usize| base + i * inner + j;
                for i in 0..size {
                    let mut acc = walk.coeffs[0] * src[at(i)];
                    for (l, p) in walk.coeffs.iter().enumerate().skip(1) {
                        let d = (l * step_cells) % size;
                        let left = src[at((i + size - d) % size)];
                        let right = src[at((i + d) % size)];
                        acc += p * (left + right);
                    }
                    dst[at(i)] = acc;
                }
            }
        }
    }
}

/// Signed push for the current failure. Even failure counts push right.
pub fn push_shift(failure_count: u32, success_count: u32, config: &FeedbackConfig) -> i64 {
    let base = config.initial_push_cells as f64 / (1.0 + success_count as f64).sqrt();
    let magnitude = base.round().max(1.0);
    if failure_count.is_multiple_of(2) {
        magnitude as i64
    } else {
        -((magnitude * config.push_asymmetry).round().max(1.0) as i64)
    }
}

/// Translates `chi` by [`push_shift`] cells and returns the shift.
pub fn single_push_step(
    chi: &mut ParameterState,
    failure_count: u32,
    success_count: u32,
    config: &FeedbackConfig,
) -> i64 {
    let shift = push_shift(failure_count, success_count, config);
    chi.translate(shift);
    shift
}

/// One inversion about the mean, turning a measurement-induced dip into a peak.
pub fn grover_kickstart(chi: &mut ParameterState) {
    chi.invert_about_mean();
}

/// Success/failure counts seen before the current failure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub successes: u32,
    pub failures: u32,
}

/// What a feedback step did, for the run record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeedbackAction {
    None,
    Kickstart,
    Push(i64),
    Walk,
}

impl fmt::Display for FeedbackAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackAction::None => write!(f, "none"),
            FeedbackAction::Kickstart => write!(f, "kickstart"),
            FeedbackAction::Push(s) => write!(f, "push{s:+}"),
            FeedbackAction::Walk => write!(f, "walk"),
        }
    }
}

/// A feedback rule applied after each failed verification.
pub trait FeedbackStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn apply(
        &self,
        chi: &mut ParameterState,
        history: History,
        rng: &mut dyn RngCore,
    ) -> FeedbackAction;
}

#[derive(Debug, Clone)]
pub struct SinglePush {
    config: FeedbackConfig,
}

impl FeedbackStrategy for SinglePush {
    fn name(&self) -> &'static str {
        "single-push"
    }

    fn apply(
        &self,
        chi: &mut ParameterState,
        history: History,
        _rng: &mut dyn RngCore,
    ) -> FeedbackAction {
        let shift = single_push_step(chi, history.failures, history.successes, &self.config);
        FeedbackAction::Push(shift)
    }
}

#[derive(Debug, Clone)]
pub struct DoublePush {
    walk: WalkCoefficients,
    step_cells: usize,
}

impl FeedbackStrategy for DoublePush {
    fn name(&self) -> &'static str {
        "double-push"
    }

    fn apply(
        &self,
        chi: &mut ParameterState,
        _history: History,
        rng: &mut dyn RngCore,
    ) -> FeedbackAction {
        apply_quantum_walk(chi, &self.walk, self.step_cells);
        chi.dephase_random(rng);
        FeedbackAction::Walk
    }
}

pub type StrategyFactory = fn(&FeedbackConfig) -> Result<Box<dyn FeedbackStrategy>>;

/// Feedback strategies by name.
#[derive(Clone, Default)]
pub struct StrategyRegistry {
    factories: BTreeMap<String, StrategyFactory>,
}

impl StrategyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding `single-push` and `double-push`.
    pub fn with_builtins() -> Self {
        let mut registry = Self::new();
        registry.register("single-push", |config| {
            Ok(Box::new(SinglePush {
                config: config.clone(),
            }))
        });
        registry.register("double-push", |config| {
            Ok(Box::new(DoublePush {
                walk: walk_coefficients(config.walk_strength, config.series_cutoff)?,
                step_cells: config.walk_step_cells,
            }))
        });
        registry
    }

    pub fn register(&mut self, name: &str, factory: StrategyFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, config: &FeedbackConfig) -> Result<Box<dyn FeedbackStrategy>> {
        config.validate()?;
        let name = config.strategy.replace('_', "-");
        let factory = self
            .factories
            .get(&name)
            .ok_or_else(|| Error::UnknownStrategy(config.strategy.clone()))?;
        factory(config)
    }
}

/// Dispatches failures to the configured strategy, with the kickstart
/// taking the place of the first one.
pub struct FeedbackController {
    strategy: Box<dyn FeedbackStrategy>,
    kickstart_enabled: bool,
    kickstart_done: bool,
}

impl FeedbackController {
    pub fn new(config: &FeedbackConfig) -> Result<Self> {
        Self::with_registry(config, &StrategyRegistry::with_builtins())
    }

    pub fn with_registry(config: &FeedbackConfig, registry: &StrategyRegistry) -> Result<Self> {
        Ok(FeedbackController {
            strategy: registry.create(config)?,
            kickstart_enabled: config.kickstart_enabled,
            kickstart_done: false,
        })
    }

    pub fn strategy_name(&self) -> &'static str {
        self.strategy.name()
    }

    pub fn on_failure(
        &mut self,
        chi: &mut ParameterState,
        history: History,
        rng: &mut dyn RngCore,
    ) -> FeedbackAction {
        if self.kickstart_enabled && !self.kickstart_done {
            self.kickstart_done = true;
            grover_kickstart(chi);
            return FeedbackAction::Kickstart;
        }
        self.strategy.apply(chi, history, rng)
    }
}
