use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fpflab::harness::{self, ExperimentConfig, ExperimentName};
use fpflab::linmodel::validate_assumptions;
use fpflab::metrics::theoretical_bounds;
use fpflab::riccati::solve_are;

#[derive(Parser)]
#[command(name = "fpflab", version, about = "Linear FPF / EnKBF experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides the configuration).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Result directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite a result directory written by a different configuration.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Riccati cross-validation and transition-matrix envelopes.
    Validate,
    /// Mean-field exactness against the Kalman-Bucy filter.
    Exactness,
    /// Forgetting of the initial law by the mean-field process.
    Stability,
    /// O(1/N) convergence of the ensemble mean and covariance.
    Convergence,
    /// Propagation of chaos via coupled particles and copies.
    Chaos,
    /// Print assumptions, stability constants and error-bound constants.
    Report,
}

fn load(cli: &Cli, name: ExperimentName) -> fpflab::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut table: toml::Table = text
                .parse()
                .map_err(|e| fpflab::Error::Config(format!("{}: {e}", path.display())))?;
            table.insert("name".into(), toml::Value::String(name.to_string()));
            ExperimentConfig::from_toml_str(&table.to_string())?
        }
        None => ExperimentConfig::default_for(name),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(cli: &Cli) -> fpflab::Result<bool> {
    let cfg = load(cli, ExperimentName::Convergence).or_else(|_| load(cli, ExperimentName::RiccatiValidation))?;
    let params = cfg.params()?;
    let a = validate_assumptions(&params);
    println!("A1 (detectable, stabilizable) = {} ({}, {})", a.a1, a.detectable, a.stabilizable);
    println!("A2 (Sigma_B > 0) = {} (min eigenvalue {:e})", a.a2, a.min_eig_sigma_b);
    println!("A3 (A Hurwitz) = {} (mu(A) = {:e})", a.a3, a.mu_a);
    let consts = solve_are(&params)?;
    print!("{}", consts.report());
    match theoretical_bounds(&params, &consts, cfg.p) {
        Ok(b) => print!("{}", b.report()),
        Err(e) => println!("bounds unavailable: {e}"),
    }
    Ok(a.all())
}

fn run(cli: &Cli) -> fpflab::Result<bool> {
    let name = match cli.command {
        Command::Validate => ExperimentName::RiccatiValidation,
        Command::Exactness => ExperimentName::Exactness,
        Command::Stability => ExperimentName::Stability,
        Command::Convergence => ExperimentName::Convergence,
        Command::Chaos => ExperimentName::Chaos,
        Command::Report => return report(cli),
    };
    let cfg = load(cli, name)?;
    let result = harness::run(&cfg)?;
    for c in &result.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(name.as_str()));
    harness::write_outputs(&result, &dir, cli.force)?;
    println!("results written to {} ({:.1} s)", dir.display(), result.wall_time_s);
    Ok(result.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
