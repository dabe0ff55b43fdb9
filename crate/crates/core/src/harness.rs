//! Training loop, ensembles over independent runs and their summaries.

use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aqft::{inverse_fourier_basis, AqftFamily, AqftInstance, OverlapModel};
use crate::error::{Error, Result};
use crate::feedback::{
    FeedbackAction, FeedbackConfig, FeedbackController, History, StrategyRegistry,
};
use crate::filter::{
    sample_and_update, sample_and_update_streaming, OutcomeAmplitudes, ParametrizedCircuit, PASS,
};
use crate::grover::{reference_max_success, GroverInstance};
use crate::optimizer::optimize_phases;
use crate::parameter::{Axis, ParameterState};

/// Above this many `cells x outcomes` the AQFT filter switches to streaming.
const DENSE_TABLE_LIMIT: usize = 1 << 22;
/// Fraction of the reference a run must reach to count as converged.
pub const CONVERGENCE_FRACTION: f64 = 0.95;
pub const HISTOGRAM_BINS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemConfig {
    Grover { n_elements: usize },
    Aqft { n_qubits: usize, band: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub iterations: usize,
    pub runs: usize,
    /// Grid points per parameter axis.
    pub grid_size: usize,
    pub feedback: FeedbackConfig,
    pub master_seed: u64,
    /// Keep the register probabilities after every iteration.
    pub snapshot_chi: bool,
}

impl ExperimentConfig {
    /// Defaults: 120 iterations, 100 runs, 256 points per axis for one
    /// trainable parameter and 64 for more.
    pub fn new(problem: ProblemConfig, strategy: &str) -> Self {
        let grid_size = match problem {
            ProblemConfig::Aqft { band, .. } if band > 1 => 64,
            _ => 256,
        };
        ExperimentConfig {
            problem,
            iterations: 120,
            runs: 100,
            grid_size,
            feedback: FeedbackConfig::defaults_for_grid(strategy, grid_size),
            master_seed: 0,
            snapshot_chi: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.runs < 1 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.grid_size < 2 {
            return Err(Error::Config(format!(
                "grid size must be >= 2, got {}",
                self.grid_size
            )));
        }
        match self.problem {
            ProblemConfig::Grover { n_elements } => {
                GroverInstance::with_optimal_depth(n_elements)?;
            }
            ProblemConfig::Aqft { n_qubits, band } => {
                AqftInstance::standard(n_qubits, band)?;
                if !(1..=3).contains(&band) {
                    return Err(Error::Config(format!(
                        "trainable band must be 1..=3, got {band}"
                    )));
                }
            }
        }
        self.feedback.validate()?;
        StrategyRegistry::with_builtins().create(&self.feedback)?;
        Ok(())
    }
}

/// Result of one trial on the processor.
#[derive(Debug, Clone, Copy)]
pub struct TrialOutcome {
    pub passed: bool,
    /// Processor outcome index, when finer than pass/fail.
    pub measured: Option<usize>,
}

/// A learning task: circuit family, its success landscape over the grid and
/// the trial procedure.
pub trait TrainingProblem: Send + Sync {
    fn label(&self) -> String;

    fn initial_register(&self) -> ParameterState;

    /// Deployment success at every grid cell.
    fn success_map(&self) -> &[f64];

    /// Best success achievable by the circuit family.
    fn reference_success(&self) -> f64;

    /// Success of the untrained circuit.
    fn baseline_success(&self) -> f64;

    /// Runs one trial, conditioning `chi` on its outcome.
    fn trial(&self, chi: &mut ParameterState, rng: &mut ChaCha8Rng) -> Result<TrialOutcome>;
}

pub struct GroverProblem {
    instance: GroverInstance,
    grid: ParameterState,
    amps: OutcomeAmplitudes,
    map: Vec<f64>,
}

impl GroverProblem {
    pub fn new(n_elements: usize, grid_size: usize) -> Result<Self> {
        let instance = GroverInstance::with_optimal_depth(n_elements)?;
        let grid = ParameterState::uniform(grid_size, 0.0, TAU)?;
        let amps = instance.outcome_amplitudes(&grid)?;
        let map = instance.success_probability_map(&grid);
        Ok(GroverProblem {
            instance,
            grid,
            amps,
            map,
        })
    }

    pub fn instance(&self) -> &GroverInstance {
        &self.instance
    }
}

impl TrainingProblem for GroverProblem {
    fn label(&self) -> String {
        format!(
            "grover N={} K={}",
            self.instance.n_elements, self.instance.iterations
        )
    }

    fn initial_register(&self) -> ParameterState {
        self.grid.clone()
    }

    fn success_map(&self) -> &[f64] {
        &self.map
    }

    fn reference_success(&self) -> f64 {
        reference_max_success(self.instance.n_elements)
    }

    fn baseline_success(&self) -> f64 {
        self.grid.expected_success(&self.map).unwrap_or(f64::NAN)
    }

    fn trial(&self, chi: &mut ParameterState, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
        let r = sample_and_update(chi, &self.amps, rng)?;
        Ok(TrialOutcome {
            passed: r == PASS,
            measured: None,
        })
    }
}

/// Banded QFT with the `band` phases trainable, verified against uniformly
/// drawn Fourier-basis inputs.
pub struct AqftProblem {
    family: AqftFamily,
    grid: ParameterState,
    map: Vec<f64>,
    baseline: f64,
    optimum: f64,
}

impl AqftProblem {
    pub fn new(n_qubits: usize, band: usize, grid_size: usize) -> Result<Self> {
        let base = AqftInstance::standard(n_qubits, band)?;
        let axes = (0..band)
            .map(|_| Axis::phase(grid_size))
            .collect::<Result<Vec<_>>>()?;
        let grid = ParameterState::uniform_product(axes)?;
        let model = OverlapModel::new(n_qubits, band)?;
        let map: Vec<f64> = (0..grid.grid_size())
            .into_par_iter()
            .map(|g| model.average(&grid.point(g)))
            .collect();
        let opt = optimize_phases(&base)?;
        Ok(AqftProblem {
            family: AqftFamily { base },
            grid,
            map,
            baseline: opt.baseline_value,
            optimum: opt.best_value,
        })
    }
}

impl TrainingProblem for AqftProblem {
    fn label(&self) -> String {
        format!(
            "aqft n={} m={}",
            self.family.base.n_qubits, self.family.base.band
        )
    }

    fn initial_register(&self) -> ParameterState {
        self.grid.clone()
    }

    fn success_map(&self) -> &[f64] {
        &self.map
    }

    fn reference_success(&self) -> f64 {
        self.optimum
    }

    fn baseline_success(&self) -> f64 {
        self.baseline
    }

    fn trial(&self, chi: &mut ParameterState, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
        let n = self.family.n_qubits();
        let dim = 1usize << n;
        let k = rng.gen_range(0..dim);
        let input = inverse_fourier_basis(n, k)?;
        let r = if chi.grid_size() * dim <= DENSE_TABLE_LIMIT {
            let amps = OutcomeAmplitudes::from_circuit(chi, &self.family, &input)?;
            sample_and_update(chi, &amps, rng)?
        } else {
            let points = chi.points();
            let family = &self.family;
            let input = &input;
            sample_and_update_streaming(
                chi,
                dim,
                |g| {
                    let mut state = input.clone();
                    family.apply(&points[g], &mut state)?;
                    Ok(state.into_amplitudes())
                },
                rng,
            )?
        };
        Ok(TrialOutcome {
            passed: r == k,
            measured: Some(r),
        })
    }
}

pub fn build_problem(config: &ExperimentConfig) -> Result<Box<dyn TrainingProblem>> {
    Ok(match config.problem {
        ProblemConfig::Grover { n_elements } => {
            Box::new(GroverProblem::new(n_elements, config.grid_size)?)
        }
        ProblemConfig::Aqft { n_qubits, band } => {
            Box::new(AqftProblem::new(n_qubits, band, config.grid_size)?)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based.
    pub iteration: usize,
    pub passed: bool,
    pub measured: Option<usize>,
    pub expected_success: f64,
    pub circular_variance: f64,
    pub feedback: FeedbackAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: u64,
    pub trials: Vec<TrialRecord>,
    /// Register probabilities after each iteration, if requested.
    pub snapshots: Option<Vec<Vec<f64>>>,
}

impl RunRecord {
    pub fn successes(&self) -> usize {
        self.trials.iter().filter(|t| t.passed).count()
    }

    pub fn final_success(&self) -> f64 {
        self.trials.last().map_or(f64::NAN, |t| t.expected_success)
    }

    /// First iteration at which the expected success reaches `threshold`.
    pub fn first_reaching(&self, threshold: f64) -> Option<usize> {
        self.trials
            .iter()
            .find(|t| t.expected_success >= threshold)
            .map(|t| t.iteration)
    }
}

/// Random stream of run `run_index`: independent of how runs are scheduled.
pub fn run_rng(master_seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}

/// One learning run. Deterministic in `(config, run_index)`.
pub fn run_learning(
    config: &ExperimentConfig,
    problem: &dyn TrainingProblem,
    run_index: u64,
) -> Result<RunRecord> {
    let mut rng = run_rng(config.master_seed, run_index);
    let mut controller = FeedbackController::new(&config.feedback)?;
    let mut chi = problem.initial_register();
    let mut history = History::default();
    let mut trials = Vec::with_capacity(config.iterations);
    let mut snapshots = config.snapshot_chi.then(Vec::new);
    for iteration in 1..=config.iterations {
        let outcome = problem.trial(&mut chi, &mut rng)?;
        let feedback = if outcome.passed {
            history.successes += 1;
            FeedbackAction::None
        } else {
            let action = controller.on_failure(&mut chi, history, &mut rng);
            history.failures += 1;
            action
        };
        let deviation = (chi.norm_sqr() - 1.0).abs();
        if deviation > 1e-9 {
            return Err(Error::Normalization { deviation });
        }
        trials.push(TrialRecord {
            iteration,
            passed: outcome.passed,
            measured: outcome.measured,
            expected_success: chi.expected_success(problem.success_map())?,
            circular_variance: chi.circular_variance(),
            feedback,
        });
        if let Some(s) = snapshots.as_mut() {
            s.push(chi.probabilities());
        }
    }
    Ok(RunRecord {
        run: run_index,
        trials,
        snapshots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalQuantiles {
    pub q10: f64,
    pub q25: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub label: String,
    pub runs: usize,
    pub iterations: usize,
    pub reference_success: f64,
    pub baseline_success: f64,
    pub mean_expected_success: Vec<f64>,
    pub median_expected_success: Vec<f64>,
    /// Mean over runs with at least one success so far; `None` if there are none.
    pub mean_expected_success_successful: Vec<Option<f64>>,
    pub mean_circular_variance: Vec<f64>,
    pub final_mean: f64,
    pub final_quantiles: FinalQuantiles,
    /// Fraction of runs per 2.5% bin of final expected success.
    pub final_histogram: Vec<f64>,
    pub runs_with_success: usize,
    /// Per run: first iteration reaching 95% of the reference.
    pub iterations_to_converge: Vec<Option<usize>>,
}

pub struct Ensemble {
    pub summary: EnsembleSummary,
    pub runs: Vec<RunRecord>,
}

/// Runs `config.runs` independent runs in parallel; results are identical for
/// any thread count.
pub fn run_ensemble(config: &ExperimentConfig) -> Result<Ensemble> {
    config.validate()?;
    let problem = build_problem(config)?;
    run_ensemble_with(config, problem.as_ref())
}

pub fn run_ensemble_with(
    config: &ExperimentConfig,
    problem: &dyn TrainingProblem,
) -> Result<Ensemble> {
    let runs: Vec<RunRecord> = (0..config.runs as u64)
        .into_par_iter()
        .map(|i| run_learning(config, problem, i))
        .collect::<Result<_>>()?;
    let summary = summarize(problem, &runs);
    Ok(Ensemble { summary, runs })
}

fn summarize(problem: &dyn TrainingProblem, runs: &[RunRecord]) -> EnsembleSummary {
    let iterations = runs[0].trials.len();
    let n = runs.len() as f64;
    let mut mean = Vec::with_capacity(iterations);
    let mut median = Vec::with_capacity(iterations);
    let mut successful = Vec::with_capacity(iterations);
    let mut variance = Vec::with_capacity(iterations);
    let mut seen_success = vec![false; runs.len()];
    for t in 0..iterations {
        let mut values: Vec<f64> = runs.iter().map(|r| r.trials[t].expected_success).collect();
        mean.push(values.iter().sum::<f64>() / n);
        variance.push(
            runs.iter()
                .map(|r| r.trials[t].circular_variance)
                .sum::<f64>()
                / n,
        );
        let (mut acc, mut count) = (0.0, 0usize);
        for (i, r) in runs.iter().enumerate() {
            seen_success[i] |= r.trials[t].passed;
            if seen_success[i] {
                acc += r.trials[t].expected_success;
                count += 1;
            }
        }
        successful.push((count > 0).then(|| acc / count as f64));
        values.sort_by(f64::total_cmp);
        let mid = values.len() / 2;
        median.push(if values.len() % 2 == 1 {
            values[mid]
        } else {
            0.5 * (values[mid - 1] + values[mid])
        });
    }
    let finals: Vec<f64> = runs.iter().map(RunRecord::final_success).collect();
    let mut sorted = finals.clone();
    sorted.sort_by(f64::total_cmp);
    let mut histogram = vec![0.0; HISTOGRAM_BINS];
    for &v in &finals {
        let bin = ((v * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        histogram[bin] += 1.0 / n;
    }
    let reference = problem.reference_success();
    let threshold = CONVERGENCE_FRACTION * reference;
    EnsembleSummary {
        label: problem.label(),
        runs: runs.len(),
        iterations,
        reference_success: reference,
        baseline_success: problem.baseline_success(),
        final_mean: finals.iter().sum::<f64>() / n,
        final_quantiles: FinalQuantiles {
            q10: nearest_rank(&sorted, 0.10),
            q25: nearest_rank(&sorted, 0.25),
            q90: nearest_rank(&sorted, 0.90),
        },
        mean_expected_success: mean,
        median_expected_success: median,
        mean_expected_success_successful: successful,
        mean_circular_variance: variance,
        final_histogram: histogram,
        runs_with_success: seen_success.iter().filter(|&&s| s).count(),
        iterations_to_converge: runs.iter().map(|r| r.first_reaching(threshold)).collect(),
    }
}

/// Nearest-rank quantile of ascending `sorted`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Iterations by which a fraction `q` of all runs has converged; `None` when
/// fewer than that ever converge.
pub fn iterations_quantile(per_run: &[Option<usize>], q: f64) -> Option<usize> {
    let needed = ((q * per_run.len() as f64).ceil() as usize).max(1);
    let mut reached: Vec<usize> = per_run.iter().flatten().copied().collect();
    reached.sort_unstable();
    reached.get(needed - 1).copied()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub label: String,
    pub v_ts: f64,
    pub q10: Option<usize>,
    pub q25: Option<usize>,
}

/// Convergence quantiles per register size.
pub fn quantile_analysis(entries: &[(f64, &EnsembleSummary)]) -> Vec<QuantileRow> {
    entries
        .iter()
        .map(|(v_ts, s)| QuantileRow {
            label: s.label.clone(),
            v_ts: *v_ts,
            q10: iterations_quantile(&s.iterations_to_converge, 0.10),
            q25: iterations_quantile(&s.iterations_to_converge, 0.25),
        })
        .collect()
}

fn opt_cell<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_runs_csv<W: Write>(out: &mut W, runs: &[RunRecord]) -> Result<()> {
    writeln!(
        out,
        "run,iteration,outcome,measured,expected_success,circular_variance,feedback_action"
    )?;
    for run in runs {
        for t in &run.trials {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                run.run,
                t.iteration,
                if t.passed { "pass" } else { "fail" },
                opt_cell(t.measured),
                t.expected_success,
                t.circular_variance,
                t.feedback
            )?;
        }
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(out: &mut W, summary: &EnsembleSummary) -> Result<()> {
    writeln!(out, "bin_lo,bin_hi,fraction")?;
    let width = 1.0 / HISTOGRAM_BINS as f64;
    for (i, f) in summary.final_histogram.iter().enumerate() {
        writeln!(out, "{},{},{}", i as f64 * width, (i + 1) as f64 * width, f)?;
    }
    Ok(())
}

pub fn write_quantiles_csv<W: Write>(out: &mut W, rows: &[QuantileRow]) -> Result<()> {
    writeln!(out, "label,v_ts,iterations_q10,iterations_q25")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.label,
            r.v_ts,
            opt_cell(r.q10),
            opt_cell(r.q25)
        )?;
    }
    Ok(())
}

/// One row per `(run, iteration)` with the register probabilities.
pub fn write_snapshots_csv<W: Write>(out: &mut W, runs: &[RunRecord]) -> Result<()> {
    for run in runs {
        if let Some(snaps) = &run.snapshots {
            for (t, probs) in snaps.iter().enumerate() {
                write!(out, "{},{}", run.run, t + 1)?;
                for p in probs {
                    write!(out, ",{p}")?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grover(strategy: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(ProblemConfig::Grover { n_elements: 16 }, strategy);
        c.runs = 8;
        c.iterations = 30;
        c.grid_size = 64;
        c.feedback = FeedbackConfig::defaults_for_grid(strategy, 64);
        c
    }

    #[test]
    fn runs_are_deterministic() {
        let c = small_grover("double-push");
        let p = build_problem(&c).unwrap();
        let a = run_learning(&c, p.as_ref(), 3).unwrap();
        let b = run_learning(&c, p.as_ref(), 3).unwrap();
        assert_eq!(a, b);
        let other = run_learning(&c, p.as_ref(), 4).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn first_trial_starts_from_uniform_average() {
        let c = small_grover("single-push");
        let p = build_problem(&c).unwrap();
        let uniform = p
            .initial_register()
            .expected_success(p.success_map())
            .unwrap();
        assert!((p.baseline_success() - uniform).abs() < 1e-15);
        let r = run_learning(&c, p.as_ref(), 0).unwrap();
        assert_eq!(r.trials.len(), 30);
        assert_eq!(r.trials[0].iteration, 1);
    }

    #[test]
    fn kickstart_answers_the_first_failure_only() {
        let c = small_grover("single-push");
        let p = build_problem(&c).unwrap();
        for run in 0..8 {
            let r = run_learning(&c, p.as_ref(), run).unwrap();
            let actions: Vec<_> = r
                .trials
                .iter()
                .filter(|t| !t.passed)
                .map(|t| t.feedback)
                .collect();
            assert_eq!(actions[0], FeedbackAction::Kickstart);
            assert!(actions[1..]
                .iter()
                .all(|a| matches!(a, FeedbackAction::Push(_))));
            assert!(r
                .trials
                .iter()
                .filter(|t| t.passed)
                .all(|t| t.feedback == FeedbackAction::None));
        }
    }

    #[test]
    fn summary_shapes() {
        let c = small_grover("double-push");
        let e = run_ensemble(&c).unwrap();
        let s = &e.summary;
        assert_eq!(s.mean_expected_success.len(), 30);
        assert_eq!(s.iterations_to_converge.len(), 8);
        assert_eq!(s.final_histogram.len(), HISTOGRAM_BINS);
        assert!((s.final_histogram.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.final_quantiles.q10 <= s.final_quantiles.q25);
        assert!(s.final_quantiles.q25 <= s.final_quantiles.q90);
    }

    #[test]
    fn aqft_trials_report_processor_outcomes() {
        let mut c = ExperimentConfig::new(
            ProblemConfig::Aqft {
                n_qubits: 4,
                band: 1,
            },
            "single-push",
        );
        c.grid_size = 32;
        c.iterations = 10;
        c.feedback = FeedbackConfig::defaults_for_grid("single-push", 32);
        let p = build_problem(&c).unwrap();
        let r = run_learning(&c, p.as_ref(), 0).unwrap();
        assert!(r.trials.iter().all(|t| t.measured.is_some_and(|m| m < 16)));
    }

    #[test]
    fn quantile_conventions() {
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.0);
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0, 4.0], 0.9), 4.0);
        let per_run = [
            Some(5),
            None,
            Some(3),
            None,
            Some(9),
            None,
            None,
            None,
            None,
            None,
        ];
        assert_eq!(iterations_quantile(&per_run, 0.10), Some(3));
        assert_eq!(iterations_quantile(&per_run, 0.25), Some(9));
        assert_eq!(iterations_quantile(&per_run, 0.40), None);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = small_grover("single-push");
        c.feedback.strategy = "triple-push".into();
        assert!(matches!(c.validate(), Err(Error::UnknownStrategy(_))));
        let mut c = small_grover("single-push");
        c.runs = 0;
        assert!(c.validate().is_err());
        let c = ExperimentConfig::new(
            ProblemConfig::Aqft {
                n_qubits: 3,
                band: 3,
            },
            "single-push",
        );
        assert!(c.validate().is_err());
    }
}
