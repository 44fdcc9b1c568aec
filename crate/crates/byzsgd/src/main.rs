//! `byzsgd` command line: run experiments, sweep one variable, or verify the
//! closed-form convergence bounds against measured trajectories.
//!
//! Configuration comes from an optional flat JSON file plus flags; flags win
//! field by field. Exit codes are pinned: 0 success, 1 configuration or
//! usage error, 2 runtime error (I/O, malformed data, failed verification).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use byzsgd::config::{
    parse_config, AttackName, Delta, ExperimentConfig, FilterKind, PartialConfig, Problem,
    Schedule, TickBudget,
};
use byzsgd::engine::bounds::{
    check_theorem1, check_theorem2, BoundCheckReport, QuadraticFixture, BOUND_SLACK,
};
use byzsgd::engine::ProblemData;
use byzsgd::error::{Error, Result};
use byzsgd::sweep::{execute, plan_battery, plan_sweep, write_outputs, Mechanism, SweepVar};

#[derive(Parser)]
#[command(
    name = "byzsgd",
    version,
    about = "Simulator for asynchronous SGD under Byzantine workers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, or the five-mechanism comparison battery.
    Run(RunArgs),
    /// Run a grid over one variable and emit aggregated plot data.
    Sweep(SweepArgs),
    /// Check a convergence bound against seed-averaged trajectories.
    VerifyBounds(VerifyArgs),
}

/// Flag mirror of the JSON config schema; every field is optional and
/// overrides the corresponding file field.
#[derive(Args)]
struct ConfigArgs {
    /// Flat JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Objective: "mnist" or "quadratic".
    #[arg(long)]
    problem: Option<Problem>,
    /// Total worker count, honest plus Byzantine.
    #[arg(long)]
    n: Option<usize>,
    /// Actual number of Byzantine workers (the top ids).
    #[arg(long)]
    p_true: Option<usize>,
    /// Attacker count the filter assumes.
    #[arg(long)]
    p_assumed: Option<usize>,
    /// Training samples per worker shard.
    #[arg(long)]
    m: Option<usize>,
    /// Minibatch size per update.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Base step size.
    #[arg(long)]
    eta: Option<f64>,
    /// Step-size schedule: "constant" or "inv-t".
    #[arg(long)]
    schedule: Option<Schedule>,
    /// Distance-threshold bound; a number or "inf".
    #[arg(long)]
    delta: Option<Delta>,
    /// Acceptance rule: "alg1", "alg2", "krum", or "non-collaborative".
    #[arg(long)]
    filter: Option<FilterKind>,
    /// Byzantine response model: "add-noise", "random", or "inverse".
    #[arg(long)]
    attack: Option<AttackName>,
    /// Variance of the add-noise attack, per coordinate.
    #[arg(long)]
    sigma_sq: Option<f64>,
    /// Project parameters to the unit sphere after each update.
    #[arg(long)]
    normalize: Option<bool>,
    /// Tick budget: "epoch" or a fixed count.
    #[arg(long)]
    ticks: Option<TickBudget>,
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicates per configuration (seeds seed, seed+1, ...).
    #[arg(long)]
    replicates: Option<usize>,
    /// Directory for manifest, summary, and per-run metrics files.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Parameter dimension of the quadratic problem.
    #[arg(long)]
    dim: Option<usize>,
    /// Center spread of the quadratic problem.
    #[arg(long)]
    spread: Option<f64>,
    /// Directory holding the IDX image/label files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn overrides(&self) -> PartialConfig {
        PartialConfig {
            problem: self.problem,
            n: self.n,
            p_true: self.p_true,
            p_assumed: self.p_assumed,
            m: self.m,
            batch_size: self.batch_size,
            eta: self.eta,
            schedule: self.schedule,
            delta: self.delta,
            filter: self.filter,
            attack: self.attack,
            sigma_sq: self.sigma_sq,
            normalize: self.normalize,
            ticks: self.ticks,
            seed: self.seed,
            replicates: self.replicates,
            output_dir: self.output_dir.clone(),
            dim: self.dim,
            spread: self.spread,
            data_dir: self.data_dir.clone(),
        }
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        parse_config(self.config.as_deref(), self.overrides())
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run a named mechanism battery instead of the configured filter.
    /// The only battery is "compare": alg1, alg2, non-collaborative,
    /// all-honest, and krum under one shared setting.
    #[arg(long)]
    battery: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Variable to sweep: "m", "p", or "delta".
    #[arg(long)]
    vary: SweepVar,
    /// Comma-separated grid values; defaults to the standard grid.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<String>>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Which bound to check: 1 (closest rule) or 2 (descent-threshold rule).
    #[arg(long)]
    theorem: u8,
    /// Seed-average over this many replicates.
    #[arg(long)]
    seeds: Option<usize>,
    /// Ticks per replicate.
    #[arg(long)]
    ticks: Option<u64>,
    /// Distance-threshold bound for theorem 2.
    #[arg(long)]
    delta: Option<f64>,
    /// Step size override for the fixture.
    #[arg(long)]
    eta: Option<f64>,
    /// Write the empirical and bound curves as CSV into this directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let usage_ok =
                matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = err.print();
            return if usage_ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::VerifyBounds(args) => cmd_verify(args),
    }
}

fn mechanism_for(filter: FilterKind) -> Mechanism {
    match filter {
        FilterKind::Alg1 => Mechanism::Alg1,
        FilterKind::Alg2 => Mechanism::Alg2,
        FilterKind::Krum => Mechanism::Krum,
        FilterKind::NonCollaborative => Mechanism::NonCollaborative,
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = args.config.resolve()?;
    println!("{}", serde_json::to_string_pretty(&config)?);

    let mechanisms: Vec<Mechanism> = match args.battery.as_deref() {
        None => vec![mechanism_for(config.filter)],
        Some("compare") => Mechanism::BATTERY.to_vec(),
        Some(other) => {
            return Err(Error::config(format!(
                "battery: unknown battery \"{other}\" (the only battery is \"compare\")"
            )))
        }
    };

    let planned = plan_battery(&config, &mechanisms)?;
    let data = ProblemData::prepare(&config)?;
    let runs = execute(&planned, &data)?;

    for run in &runs {
        let quality = match run.summary.mean_honest_accuracy {
            Some(acc) => format!("mean honest accuracy {acc:.4}"),
            None => format!("final honest sum-sq distance {:.6}", run.plot_value()),
        };
        println!("{:<20} seed {:<6} {}", run.mechanism.as_str(), run.seed, quality);
    }

    if let Some(dir) = &config.output_dir {
        write_outputs(dir, &config, &runs, None)?;
        println!("wrote {} run(s) to {}", runs.len(), dir.display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| Error::config("output-dir: sweep requires an output directory"))?;

    let values = match args.values {
        Some(v) => v,
        None => args.vary.default_grid(),
    };
    let planned = plan_sweep(&config, args.vary, &values)?;
    let data = ProblemData::prepare(&config)?;
    let runs = execute(&planned, &data)?;

    let plot_name = format!("sweep-{}.csv", args.vary.as_str());
    write_outputs(&dir, &config, &runs, Some(&plot_name))?;
    println!(
        "swept {} over {} value(s), {} run(s); outputs in {}",
        args.vary.as_str(),
        values.len(),
        runs.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let mut fixture = match args.theorem {
        1 => QuadraticFixture::theorem1_default(),
        2 => QuadraticFixture::theorem2_default(),
        other => {
            return Err(Error::config(format!(
                "theorem: must be 1 or 2, got {other}"
            )))
        }
    };
    if let Some(seeds) = args.seeds {
        if seeds == 0 {
            return Err(Error::config("seeds: must be positive"));
        }
        fixture.seeds = seeds;
    }
    if let Some(ticks) = args.ticks {
        if ticks == 0 {
            return Err(Error::config("ticks: must be positive"));
        }
        fixture.ticks = ticks;
    }
    if let Some(delta) = args.delta {
        fixture.delta = delta;
    }
    if let Some(eta) = args.eta {
        fixture.eta = eta;
    }

    let report = match args.theorem {
        1 => check_theorem1(&fixture)?,
        _ => check_theorem2(&fixture)?,
    };

    print_report(args.theorem, &fixture, &report);

    if let Some(dir) = &args.output_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("bound{}.csv", args.theorem));
        let mut out = String::from("t,empirical,bound\n");
        for (t, (e, b)) in report.empirical.iter().zip(&report.bound).enumerate() {
            out.push_str(&format!("{t},{e},{b}\n"));
        }
        std::fs::write(&path, out)?;
        println!("curves written to {}", path.display());
    }

    if report.contained() && report.plateau_ok() {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(Error::VerificationFailed(format!(
            "bound {} not satisfied: max empirical/bound ratio {:.4} (limit {}), \
             plateau {:.4} vs asymptote {:?}",
            args.theorem,
            report.max_ratio,
            1.0 + BOUND_SLACK,
            report.plateau,
            report.asymptote,
        )))
    }
}

fn print_report(theorem: u8, fixture: &QuadraticFixture, report: &BoundCheckReport) {
    println!(
        "bound {} check: n={} p={} dim={} eta={} seeds={} ticks={}",
        theorem,
        fixture.n,
        fixture.p_true,
        fixture.dim,
        fixture.eta,
        fixture.seeds,
        fixture.ticks
    );
    println!(
        "  constants: lambda={} L={} G={:.4} sigma={:.4} delta={}",
        report.params.lambda, report.params.l, report.params.g, report.params.sigma,
        report.params.delta
    );
    println!(
        "  max empirical/bound ratio {:.4} (limit {:.2})",
        report.max_ratio,
        1.0 + BOUND_SLACK
    );
    match report.asymptote {
        Some(asym) => println!(
            "  plateau {:.4} vs asymptote {:.4} (limit {:.4})",
            report.plateau,
            asym,
            asym * (1.0 + BOUND_SLACK)
        ),
        None => println!("  plateau {:.4} (no asymptote check)", report.plateau),
    }
}
