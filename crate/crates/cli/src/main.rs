use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use sbes_bench::experiment::run_sbes;
use sbes_bench::stepsize::{run_stepsize, write_stepsize, Band, StepsizeConfig, Suite};
use sbes_bench::{make_objective, run_experiment, write_outputs, ExperimentConfig, NoiseSpec, PolicyKind};
use sbes_core::oracle::{run_suite, SuiteConfig};

#[derive(Parser)]
#[command(name = "sbes", version, about = "Sampled-belief entropy search for noisy unimodal maximization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more experiment configs and write runs.csv and summary.csv.
    Benchmark {
        /// JSON file holding one config object or a list of them.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Single search on a named objective.
    Optimize {
        #[arg(long)]
        objective: String,
        /// Noise ratio: sigma over the objective's range.
        #[arg(long)]
        gamma: f64,
        /// Iterations; the search uses budget + 1 evaluations.
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "sbes")]
        policy: PolicyKind,
        /// Posterior candidates per iteration.
        #[arg(long, default_value_t = 20)]
        m: usize,
        /// Ensemble size.
        #[arg(long, default_value_t = 32)]
        k: usize,
        /// Print the posterior after every iteration as JSON lines.
        #[arg(long)]
        dump_posterior: bool,
    },
    /// Stochastic gradient ascent with fixed and SBES stepsizes.
    Stepsize {
        #[arg(long)]
        suite: Suite,
        #[arg(long)]
        band: Band,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        inits: usize,
        #[arg(long, default_value_t = 1)]
        reps: usize,
    },
    /// Randomized brute-force checks of the acquisition and its bounds.
    Verify {
        #[arg(long, default_value_t = SuiteConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = SuiteConfig::default().instances)]
        instances: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` means the command ran but a check failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Benchmark { config, out } => benchmark(&config, &out),
        Command::Optimize { objective, gamma, budget, seed, policy, m, k, dump_posterior } => {
            optimize(&objective, gamma, budget, seed, policy, m, k, dump_posterior)
        }
        Command::Stepsize { suite, band, out, seed, inits, reps } => {
            let mut cfg = StepsizeConfig::new(suite, band, seed);
            cfg.inits = inits;
            cfg.reps = reps;
            let rows = run_stepsize(&cfg)?;
            let summary = write_stepsize(&out, suite, &rows)?;
            println!(
                "{:<26} {:>4} {:>9} {:>9} {:>9} {:>11} {:>9}",
                "objective", "dim", "harmonic", "rmsprop", "adagrad", "sbes-single", "sbes-mix"
            );
            for r in &summary {
                println!(
                    "{:<26} {:>4} {:>9.3} {:>9.3} {:>9.3} {:>11.3} {:>9.3}",
                    r.objective, r.dim, r.harmonic, r.rmsprop, r.adagrad, r.sbes_single, r.sbes_mix
                );
            }
            Ok(true)
        }
        Command::Verify { seed, instances } => {
            let cfg = SuiteConfig { seed, instances, ..SuiteConfig::default() };
            let rows = run_suite(&cfg)?;
            println!("{:<42} {:>7} {:>8} {:>12}  result", "check", "trials", "failures", "worst");
            for r in &rows {
                println!(
                    "{:<42} {:>7} {:>8} {:>12.3e}  {}",
                    r.name,
                    r.trials,
                    r.failures,
                    r.worst,
                    if r.passed() { "PASS" } else { "FAIL" }
                );
            }
            Ok(rows.iter().all(|r| r.passed()))
        }
    }
}

fn benchmark(config: &Path, out: &Path) -> Result<bool> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).context("parsing config")?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        other => vec![other],
    };
    if items.is_empty() {
        bail!("config holds no experiments");
    }
    let mut outputs = Vec::with_capacity(items.len());
    for item in items {
        let cfg = ExperimentConfig::from_json(&item.to_string())?;
        outputs.push(run_experiment(&cfg)?);
    }
    write_outputs(out, &outputs)?;
    println!(
        "{:<14} {:<14} {:>7} {:>4} {:>5} {:>11} {:>11} {:>11}",
        "policy", "objective", "gamma", "N", "runs", "log10(mean)", "mean(log10)", "max nu"
    );
    for o in &outputs {
        let s = &o.summary;
        println!(
            "{:<14} {:<14} {:>7} {:>4} {:>5} {:>11.3} {:>11.3} {:>11.2e}",
            s.policy, s.objective, s.gamma, s.n, s.runs, s.log10_mean_regret, s.mean_log10_regret, s.max_nu_bits
        );
    }
    let mut clean = true;
    for o in &outputs {
        if let Err(e) = o.check_invariants() {
            eprintln!("invariant violated: {e}");
            clean = false;
        }
    }
    Ok(clean)
}

#[allow(clippy::too_many_arguments)]
fn optimize(
    objective: &str,
    gamma: f64,
    budget: usize,
    seed: u64,
    policy: PolicyKind,
    m: usize,
    k: usize,
    dump_posterior: bool,
) -> Result<bool> {
    if !policy.uses_beliefs() {
        bail!("optimize runs sbes or sbes-scale, not {}", policy.as_str());
    }
    let mut cfg = ExperimentConfig::new(objective, policy, gamma, budget, seed);
    cfg.m = m;
    cfg.k = k;
    cfg.validate()?;
    let obj = make_objective(objective)?;
    let noise = NoiseSpec::for_objective(gamma, &obj)?;
    let ensemble = cfg.ensemble(&obj, noise)?.context("no belief family for this objective")?;
    let k = ensemble.len();
    let out = run_sbes(&obj, noise, ensemble, budget, m, seed, None, dump_posterior)?;

    let stdout = io::stdout();
    let mut w = stdout.lock();
    if dump_posterior {
        for p in &out.posteriors {
            writeln!(w, "{}", serde_json::to_string(p)?)?;
        }
    }
    // the summary goes to stderr when stdout carries JSON
    let mut summary: Box<dyn Write> = if dump_posterior { Box::new(io::stderr()) } else { Box::new(w) };
    writeln!(summary, "objective       {objective} on [{}, {}]", obj.domain().lo(), obj.domain().hi())?;
    writeln!(summary, "noise sigma     {}", noise.sigma)?;
    writeln!(summary, "beliefs K       {k}")?;
    writeln!(summary, "iterations      {budget}")?;
    writeln!(summary, "evaluations     {}", out.state.evaluations_used())?;
    writeln!(summary, "recommendation  {}", out.recommendation)?;
    writeln!(summary, "optimum         {}", obj.known_max_location())?;
    writeln!(summary, "regret          {:e}", obj.regret(out.recommendation))?;
    if let Some(last) = out.trace.last() {
        writeln!(summary, "entropy bits    {:.4}", last.entropy_bits)?;
        writeln!(summary, "map curve       {} ({:.4})", last.map_curve, last.map_weight)?;
    }
    Ok(true)
}
