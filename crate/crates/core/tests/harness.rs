use std::f64::consts::TAU;

use qlearn::feedback::{push_shift, FeedbackAction, FeedbackConfig};
use qlearn::filter::OutcomeAmplitudes;
use qlearn::filter::{condition_on, outcome_distribution, ParametrizedCircuit, FAIL, PASS};
use qlearn::grover::GroverInstance;
use qlearn::harness::{
    build_problem, run_ensemble, run_learning, write_runs_csv, ExperimentConfig, ProblemConfig,
};
use qlearn::parameter::ParameterState;
use qlearn::statevector::PureState;

fn grover_config(n: usize, strategy: &str, runs: usize, iterations: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ProblemConfig::Grover { n_elements: n }, strategy);
    c.runs = runs;
    c.iterations = iterations;
    c
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    let mut c = grover_config(64, "double-push", 16, 40);
    c.master_seed = 9;
    let mut outputs = Vec::new();
    for threads in [1, 2, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let e = pool.install(|| run_ensemble(&c)).unwrap();
        let mut csv = Vec::new();
        write_runs_csv(&mut csv, &e.runs).unwrap();
        outputs.push((csv, serde_json::to_string(&e.summary).unwrap()));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn aqft_ensemble_is_independent_of_thread_count() {
    let mut c = ExperimentConfig::new(
        ProblemConfig::Aqft {
            n_qubits: 4,
            band: 1,
        },
        "single-push",
    );
    c.runs = 6;
    c.iterations = 15;
    c.grid_size = 32;
    c.feedback = FeedbackConfig::defaults_for_grid("single-push", 32);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let a = one.install(|| run_ensemble(&c)).unwrap();
    let b = four.install(|| run_ensemble(&c)).unwrap();
    assert_eq!(a.runs, b.runs);
}

#[test]
fn single_iteration_yields_one_record() {
    let c = grover_config(16, "single-push", 1, 1);
    let p = build_problem(&c).unwrap();
    let r = run_learning(&c, p.as_ref(), 0).unwrap();
    assert_eq!(r.trials.len(), 1);
}

#[test]
fn single_run_ensemble_matches_the_run() {
    let c = grover_config(16, "double-push", 1, 50);
    let e = run_ensemble(&c).unwrap();
    let run = &e.runs[0];
    let curve: Vec<f64> = run.trials.iter().map(|t| t.expected_success).collect();
    assert_eq!(e.summary.mean_expected_success, curve);
    assert_eq!(e.summary.median_expected_success, curve);
    assert_eq!(e.summary.final_mean, run.final_success());
}

#[test]
fn push_schedule_follows_recorded_successes() {
    let c = grover_config(200, "single-push", 10, 120);
    let p = build_problem(&c).unwrap();
    for run in 0..10 {
        let r = run_learning(&c, p.as_ref(), run).unwrap();
        let (mut successes, mut failures) = (0u32, 0u32);
        let mut kickstarts = 0;
        for t in &r.trials {
            match t.feedback {
                FeedbackAction::None => assert!(t.passed),
                FeedbackAction::Kickstart => kickstarts += 1,
                FeedbackAction::Push(s) => {
                    assert_eq!(s, push_shift(failures, successes, &c.feedback));
                }
                FeedbackAction::Walk => panic!("walk under single push"),
            }
            if t.passed {
                successes += 1;
            } else {
                failures += 1;
            }
        }
        assert_eq!(kickstarts, usize::from(failures > 0));
    }
}

#[test]
fn training_helps_the_smallest_search() {
    let c = grover_config(4, "single-push", 100, 120);
    let e = run_ensemble(&c).unwrap();
    let mut finals: Vec<f64> = e.runs.iter().map(|r| r.final_success()).collect();
    finals.sort_by(f64::total_cmp);
    let median = 0.5 * (finals[49] + finals[50]);
    assert!(finals.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    assert!(median >= e.summary.baseline_success);
}

/// Grover on `log2 N` qubits, simulated over all elements; target is 0.
struct FullGrover(GroverInstance);

impl ParametrizedCircuit for FullGrover {
    fn n_qubits(&self) -> usize {
        self.0.n_elements.trailing_zeros() as usize
    }

    fn apply(&self, params: &[f64], state: &mut PureState) -> qlearn::Result<()> {
        let out = self.0.simulate_full(params[0]);
        state.amplitudes_mut().copy_from_slice(&out);
        Ok(())
    }
}

#[test]
fn binary_and_full_grover_filters_agree() {
    for n in [8, 16, 32] {
        let g = GroverInstance::with_optimal_depth(n).unwrap();
        let mut chi = ParameterState::uniform(64, 0.0, TAU).unwrap();
        chi.translate(3);
        chi.invert_about_mean();
        let binary = g.outcome_amplitudes(&chi).unwrap();
        let full = OutcomeAmplitudes::from_circuit(
            &chi,
            &FullGrover(g),
            &PureState::zero(g.n_elements.trailing_zeros() as usize),
        )
        .unwrap();
        let pb = outcome_distribution(&chi, &binary).unwrap();
        let pf = outcome_distribution(&chi, &full).unwrap();
        assert!((pb[PASS] - pf[0]).abs() < 1e-10);
        assert!((pb[FAIL] - pf[1..].iter().sum::<f64>()).abs() < 1e-10);
        let (pass_b, _) = condition_on(&chi, &binary, PASS).unwrap();
        let (pass_f, _) = condition_on(&chi, &full, 0).unwrap();
        for (a, b) in pass_b.amplitudes().iter().zip(pass_f.amplitudes()) {
            assert!((a - b).norm() < 1e-10);
        }
        // every wrong element leaves the register in the FAIL posterior
        let (fail_b, _) = condition_on(&chi, &binary, FAIL).unwrap();
        for r in [1, n - 1] {
            let (fail_f, _) = condition_on(&chi, &full, r).unwrap();
            for (a, b) in fail_b.amplitudes().iter().zip(fail_f.amplitudes()) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }
}

#[test]
fn rejected_configs() {
    let mut c = grover_config(16, "single-push", 1, 0);
    assert!(c.validate().is_err());
    c.iterations = 5;
    c.feedback.initial_push_cells = 0;
    assert!(c.validate().is_err());
    let c = ExperimentConfig::new(ProblemConfig::Grover { n_elements: 1 }, "single-push");
    assert!(c.validate().is_err());
}
