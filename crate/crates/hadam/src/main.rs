//! Command-line front end: single runs, order sweeps, gradient probes, and
//! the built-in numerical cross-checks.
//!
//! Exit codes: 0 for completed work (a diverged run is a result, not a
//! failure), 1 for runtime errors and failed verification, 2 for config and
//! usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hadam::config::{split_set_arg, ConfigError, FullConfig, RawConfig};
use hadam::harness::{
    format_float, gradient_moment_probe, run_experiment, sweep_orders, write_sweep_csv,
    write_trace_csv, HarnessError, RunStatus, SweepStatus,
};
use hadam::moments::RootPolicy;
use hadam::rng::mix_seed;
use hadam::verify::{run_all, FaultInjection};

/// Keeps probe batch draws disjoint from training batch draws of the same
/// seed.
const PROBE_SALT: u64 = 0x9B0E;

#[derive(Parser)]
#[command(
    name = "hadam",
    version,
    about = "Order-k moment variant of Adam with a deterministic experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file; built-in defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for traces and the resolved config.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Override one config key after the file, e.g. --set alpha=0.01.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Comma-separated seed list; wins over the file and --set.
    #[arg(long, value_name = "LIST")]
    seeds: Option<String>,
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train with the configured order and write one trace per seed.
    Run(CommonArgs),
    /// Train every order in `orders` and tabulate final losses.
    Sweep(CommonArgs),
    /// Summarize stochastic-gradient moments at the initial point.
    Probe(CommonArgs),
    /// Run the built-in numerical cross-checks.
    Verify {
        /// Deliberately break one check route to prove failures surface.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

enum CliError {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(common) => cmd_run(&common),
        Command::Sweep(common) => cmd_sweep(&common),
        Command::Probe(common) => cmd_probe(&common),
        Command::Verify { inject_fault } => cmd_verify(inject_fault),
    }
}

fn resolve(common: &CommonArgs) -> Result<(FullConfig, String), ConfigError> {
    let mut raw = RawConfig::defaults();
    if let Some(path) = &common.config {
        raw.apply_file(path)?;
    }
    for spec in &common.set {
        let (key, value) = split_set_arg(spec)?;
        raw.apply_set(key, value)?;
    }
    if let Some(seeds) = &common.seeds {
        raw.apply_seeds(seeds);
    }
    let full = raw.build()?;
    Ok((full, raw.dump_resolved()))
}

fn init_jobs(common: &CommonArgs) -> Result<(), CliError> {
    let Some(jobs) = common.jobs else {
        return Ok(());
    };
    if jobs == 0 {
        return Err(CliError::Config(ConfigError::Invalid(
            "--jobs must be at least 1".into(),
        )));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

/// Creates the output directory and records the fully resolved config next
/// to the results, so every run directory is self-describing.
fn prepare_out(common: &CommonArgs, resolved: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&common.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", common.out.display())))?;
    let path = common.out.join("resolved_config.txt");
    std::fs::write(&path, resolved)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(common.out.clone())
}

fn warn_on_odd_order(full: &FullConfig) {
    let opt = &full.experiment.optimizer;
    if opt.order % 2 == 1 && opt.root_policy == RootPolicy::Naive {
        eprintln!(
            "warning: order {} is odd, so the moment average can go negative and its \
             root is then undefined; expect divergence (root_policy = signed keeps \
             steps finite but is experimental)",
            opt.order
        );
    }
}

fn cmd_run(common: &CommonArgs) -> Result<(), CliError> {
    let (full, resolved) = resolve(common)?;
    init_jobs(common)?;
    let out = prepare_out(common, &resolved)?;
    warn_on_odd_order(&full);
    let cfg = &full.experiment;
    for &seed in &cfg.seeds {
        let trace = run_experiment(cfg, seed)?;
        write_trace_csv(&trace.rows, &out.join(format!("trace_{seed}.csv")))?;
        match trace.status {
            RunStatus::Completed => println!(
                "seed {seed}: completed {} steps, final loss {:.6e}",
                cfg.steps,
                trace.final_loss()
            ),
            RunStatus::DivergedAt(t) => println!("seed {seed}: DIVERGED t={t}"),
        }
    }
    println!("wrote {} trace file(s) to {}", cfg.seeds.len(), out.display());
    Ok(())
}

fn cmd_sweep(common: &CommonArgs) -> Result<(), CliError> {
    let (full, resolved) = resolve(common)?;
    init_jobs(common)?;
    let out = prepare_out(common, &resolved)?;
    let result = sweep_orders(&full.experiment, &full.orders)?;
    write_sweep_csv(&result, &out.join("sweep.csv"))?;
    for cell in &result.cells {
        for (run, &seed) in cell.runs.iter().zip(&full.experiment.seeds) {
            let path = out.join(format!("trace_k{}_{}.csv", cell.order, seed));
            write_trace_csv(&run.rows, &path)?;
        }
        match cell.status {
            SweepStatus::Completed => println!(
                "order {}: completed, median final loss {:.6e}",
                cell.order, cell.final_loss
            ),
            SweepStatus::Diverged { seeds_diverged } => println!(
                "order {}: DIVERGED ({seeds_diverged}/{} seeds), median final loss {:.6e}",
                cell.order,
                full.experiment.seeds.len(),
                cell.final_loss
            ),
        }
    }
    println!("wrote sweep.csv to {}", out.display());
    Ok(())
}

fn cmd_probe(common: &CommonArgs) -> Result<(), CliError> {
    let (full, resolved) = resolve(common)?;
    let out = prepare_out(common, &resolved)?;
    let cfg = &full.experiment;
    let problem = cfg.problem.build();
    let first_seed = cfg.seeds[0];
    let x = problem.initial_point(first_seed);
    let root = mix_seed(first_seed, PROBE_SALT);
    let batch_seeds: Vec<u64> = (0..full.probe_seeds as u64)
        .map(|i| mix_seed(root, i))
        .collect();
    let summary = gradient_moment_probe(
        problem.as_ref(),
        &x,
        &batch_seeds,
        cfg.batch_size,
        &full.orders,
    )?;

    let mut csv = String::from("k,raw_moment,metric_mk\n");
    for (&k, &raw) in &summary.raw_moments {
        let metric = summary.metric.get(&k).copied().unwrap_or(f64::NAN);
        csv.push_str(&format!(
            "{k},{},{}\n",
            format_float(raw),
            format_float(metric)
        ));
    }
    let path = out.join("probe.csv");
    std::fs::write(&path, csv).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;

    println!(
        "probe of {} at the seed-{first_seed} initial point ({} batches of {}):",
        problem.name(),
        full.probe_seeds,
        cfg.batch_size.min(problem.num_examples())
    );
    println!("  mean {:.6e}, variance {:.6e}", summary.mean, summary.variance);
    match summary.skewness {
        Some(s) => println!("  skewness {s:.6e}"),
        None => println!("  skewness undefined (zero variance)"),
    }
    for (&k, &raw) in &summary.raw_moments {
        match summary.metric.get(&k) {
            Some(m) => println!("  k={k}: raw moment {raw:.6e}, M_k {m:.6e}"),
            None => println!("  k={k}: raw moment {raw:.6e}, M_k undefined"),
        }
    }
    println!("wrote probe.csv to {}", out.display());
    Ok(())
}

fn cmd_verify(inject_fault: bool) -> Result<(), CliError> {
    let fault = if inject_fault {
        FaultInjection::PerturbEmaDecay
    } else {
        FaultInjection::None
    };
    let results = run_all(fault);
    let mut failures = 0;
    for r in &results {
        let status = if r.passed { "ok" } else { "FAIL" };
        println!(
            "suite {}: max error {:.3e} (threshold {:.0e}) ... {status}",
            r.name, r.max_error, r.threshold
        );
        if !r.passed {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::Runtime(format!(
            "{failures} verification suite(s) failed"
        )));
    }
    println!("all {} suites passed", results.len());
    Ok(())
}
