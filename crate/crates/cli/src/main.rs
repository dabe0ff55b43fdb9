use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qlearn::feedback::FeedbackConfig;
use qlearn::harness::{self, Ensemble, ExperimentConfig, ProblemConfig};
use qlearn::optimizer;
use qlearn::Error;

#[derive(Parser)]
#[command(
    name = "qlearn",
    version,
    about = "Train circuit parameters by measurement and feedback"
)]
struct Cli {
    /// Worker threads (results do not depend on it)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the Grover oracle phase for one or more register sizes
    Grover {
        #[arg(long, value_delimiter = ',', required = true)]
        n_elements: Vec<usize>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train the phases of a banded QFT
    Aqft {
        #[arg(long)]
        qubits: usize,
        #[arg(long, default_value_t = 1)]
        band: usize,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Improvement of optimized over standard phases for banded QFTs
    Table1 {
        #[arg(long, value_delimiter = ',', default_value = "6,8,10,12,14")]
        qubits: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        bands: Vec<usize>,
        /// Output CSV file
        #[arg(long, default_value = "table1.csv")]
        out: PathBuf,
    },
    /// Maximal success of standard Grover search against V_ts
    GroverCurve {
        #[arg(long, value_delimiter = ',', default_value = "4,16,64,200,1024,10000")]
        n_elements: Vec<usize>,
        #[arg(long, default_value = "grover_curve.csv")]
        out: PathBuf,
    },
    /// Check the fast simulation routes against dense references
    Selftest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value_t = 120)]
    iterations: usize,
    #[arg(long, default_value_t = 200)]
    runs: usize,
    /// Grid points per trained parameter [default: 256 for one parameter, 64 for more]
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long, default_value = "double-push")]
    strategy: String,
    /// Push magnitude before any success, in cells [default: grid size / 32]
    #[arg(long)]
    push_initial: Option<usize>,
    #[arg(long)]
    push_asymmetry: Option<f64>,
    #[arg(long)]
    walk_x: Option<f64>,
    #[arg(long)]
    walk_step: Option<usize>,
    #[arg(long)]
    no_kickstart: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the register distribution after every iteration
    #[arg(long)]
    snapshot_chi: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl TrainArgs {
    fn config(&self, problem: ProblemConfig) -> ExperimentConfig {
        let mut config = ExperimentConfig::new(problem, &self.strategy);
        if let Some(g) = self.grid_size {
            config.grid_size = g;
        }
        config.iterations = self.iterations;
        config.runs = self.runs;
        config.master_seed = self.seed;
        config.snapshot_chi = self.snapshot_chi;
        let mut fb = FeedbackConfig::defaults_for_grid(&self.strategy, config.grid_size);
        if let Some(v) = self.push_initial {
            fb.initial_push_cells = v;
        }
        if let Some(v) = self.push_asymmetry {
            fb.push_asymmetry = v;
        }
        if let Some(v) = self.walk_x {
            fb.walk_strength = v;
        }
        if let Some(v) = self.walk_step {
            fb.walk_step_cells = v;
        }
        fb.kickstart_enabled = !self.no_kickstart;
        config.feedback = fb;
        config
    }
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    threads: Option<usize>,
    config: T,
}

fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &str,
    threads: Option<usize>,
    config: T,
) -> anyhow::Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        threads,
        config,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text).context("writing manifest.json")?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn parent_dir(path: &Path) -> anyhow::Result<PathBuf> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_ensemble(dir: &Path, ensemble: &Ensemble, snapshots: bool) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut w = create(&dir.join("runs.csv"))?;
    harness::write_runs_csv(&mut w, &ensemble.runs)?;
    w.flush()?;
    let mut w = create(&dir.join("histogram.csv"))?;
    harness::write_histogram_csv(&mut w, &ensemble.summary)?;
    w.flush()?;
    let mut text = serde_json::to_string_pretty(&ensemble.summary)?;
    text.push('\n');
    fs::write(dir.join("summary.json"), text)?;
    if snapshots {
        let mut w = create(&dir.join("snapshots.csv"))?;
        harness::write_snapshots_csv(&mut w, &ensemble.runs)?;
        w.flush()?;
    }
    Ok(())
}

fn report(summary: &harness::EnsembleSummary) {
    println!(
        "{}: mean final success {:.4} (reference {:.4}, baseline {:.4}), q90 {:.4}, runs with a success {}/{}",
        summary.label,
        summary.final_mean,
        summary.reference_success,
        summary.baseline_success,
        summary.final_quantiles.q90,
        summary.runs_with_success,
        summary.runs
    );
}

fn run_grover(
    n_elements: &[usize],
    train: &TrainArgs,
    threads: Option<usize>,
) -> anyhow::Result<()> {
    let configs: Vec<ExperimentConfig> = n_elements
        .iter()
        .map(|&n| train.config(ProblemConfig::Grover { n_elements: n }))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    fs::create_dir_all(&train.out).with_context(|| format!("creating {}", train.out.display()))?;
    write_manifest(&train.out, "grover", threads, &configs)?;
    let mut summaries = Vec::new();
    for config in &configs {
        let ensemble = harness::run_ensemble(config)?;
        let dir = if configs.len() == 1 {
            train.out.clone()
        } else {
            let ProblemConfig::Grover { n_elements } = config.problem else {
                unreachable!()
            };
            train.out.join(format!("n{n_elements}"))
        };
        write_ensemble(&dir, &ensemble, config.snapshot_chi)?;
        report(&ensemble.summary);
        let ProblemConfig::Grover { n_elements } = config.problem else {
            unreachable!()
        };
        summaries.push((1.0 / (n_elements as f64).sqrt(), ensemble.summary));
    }
    let entries: Vec<_> = summaries.iter().map(|(v, s)| (*v, s)).collect();
    let rows = harness::quantile_analysis(&entries);
    let mut w = create(&train.out.join("quantiles.csv"))?;
    harness::write_quantiles_csv(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

fn run_aqft(
    qubits: usize,
    band: usize,
    train: &TrainArgs,
    threads: Option<usize>,
) -> anyhow::Result<()> {
    let config = train.config(ProblemConfig::Aqft {
        n_qubits: qubits,
        band,
    });
    config.validate()?;
    fs::create_dir_all(&train.out).with_context(|| format!("creating {}", train.out.display()))?;
    write_manifest(&train.out, "aqft", threads, &config)?;
    let ensemble = harness::run_ensemble(&config)?;
    write_ensemble(&train.out, &ensemble, config.snapshot_chi)?;
    report(&ensemble.summary);
    Ok(())
}

#[derive(Serialize)]
struct TableConfig<'a> {
    qubits: &'a [usize],
    bands: &'a [usize],
    out: &'a Path,
}

fn run_table(
    qubits: &[usize],
    bands: &[usize],
    out: &Path,
    threads: Option<usize>,
) -> anyhow::Result<()> {
    for &n in qubits {
        if !(2..=qlearn::aqft::MAX_QUBITS).contains(&n) {
            return Err(Error::Config(format!(
                "qubits must be in 2..={}, got {n}",
                qlearn::aqft::MAX_QUBITS
            ))
            .into());
        }
    }
    if let Some(&m) = bands.iter().find(|&&m| !(1..=3).contains(&m)) {
        return Err(Error::Config(format!("bands must be in 1..=3, got {m}")).into());
    }
    let dir = parent_dir(out)?;
    write_manifest(&dir, "table1", threads, TableConfig { qubits, bands, out })?;
    let table = optimizer::improvement_table(qubits, bands)?;
    let mut w = create(out)?;
    optimizer::write_table_csv(&mut w, &table)?;
    w.flush()?;
    for cell in &table {
        match &cell.result {
            Some(r) => println!(
                "n={:2} m={}  baseline {:.4}  optimum {:.4}  improvement {:6.2}%",
                cell.n_qubits, cell.band, r.baseline_value, r.best_value, r.improvement_percent
            ),
            None => println!("n={:2} m={}  infeasible", cell.n_qubits, cell.band),
        }
    }
    Ok(())
}

fn run_curve(n_elements: &[usize], out: &Path, threads: Option<usize>) -> anyhow::Result<()> {
    let curve = optimizer::grover_reference_curve(n_elements)?;
    let dir = parent_dir(out)?;
    write_manifest(
        &dir,
        "grover-curve",
        threads,
        serde_json::json!({ "n_elements": n_elements, "out": out }),
    )?;
    let mut w = create(out)?;
    optimizer::write_reference_csv(&mut w, &curve)?;
    w.flush()?;
    Ok(())
}

fn run_selftest(out: Option<&Path>, threads: Option<usize>) -> anyhow::Result<bool> {
    let checks = qlearn::selftest::run_all()?;
    for c in &checks {
        println!(
            "{} {} (max deviation {:.2e}, tolerance {:.0e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.max_deviation,
            c.tolerance
        );
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_manifest(dir, "selftest", threads, serde_json::json!({}))?;
        let mut text = serde_json::to_string_pretty(&checks)?;
        text.push('\n');
        fs::write(dir.join("selftest.json"), text)?;
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn dispatch(cli: &Cli) -> anyhow::Result<bool> {
    let threads = cli.threads;
    match &cli.command {
        Command::Grover { n_elements, train } => run_grover(n_elements, train, threads)?,
        Command::Aqft {
            qubits,
            band,
            train,
        } => run_aqft(*qubits, *band, train, threads)?,
        Command::Table1 { qubits, bands, out } => run_table(qubits, bands, out, threads)?,
        Command::GroverCurve { n_elements, out } => run_curve(n_elements, out, threads)?,
        Command::Selftest { out } => return run_selftest(out.as_deref(), threads),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(anyhow::Error::from(Error::Config(
            "--threads must be >= 1".into(),
        ))),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(anyhow::Error::from)
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = matches!(
                e.downcast_ref::<Error>(),
                Some(Error::Config(_) | Error::UnknownStrategy(_))
            );
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}
