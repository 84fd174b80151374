use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use circlebreak_cli::commands::{self, Context, Summary};
use circlebreak_cli::config::{ExperimentConfig, Param};
use circlebreak_cli::CliError;

#[derive(Parser)]
#[command(name = "circlebreak", version, about = "Experiments on circle maps with break points")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "CIRCLEBREAK_THREADS")]
    threads: Option<usize>,

    /// Leave out the generated_at timestamp so reruns are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Output directory (overrides the config's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, short)]
    config: PathBuf,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Break points, jump ratios, derivative bounds, v, v̄ and θ±.
    MapInfo(Common),
    /// Rotation number and its continued fraction.
    Rotnum(Common),
    /// Dynamical partitions: CSV dump and validity summary.
    Partition(Common),
    /// Potential table and λ_β over the configured β list.
    Thermo(Common),
    /// Lyapunov sums against the eigenvalue sandwich.
    Lyapunov(Common),
    /// Barycentric-margin scan over levels.
    Barycentric(Common),
    /// Monte-Carlo CLT experiment.
    Clt {
        #[command(flatten)]
        common: Common,
        /// Override the σ-schedule constant C1.
        #[arg(long = "sigma-c1")]
        sigma_c1: Option<f64>,
        /// Override the σ-schedule exponent τ.
        #[arg(long)]
        tau: Option<f64>,
        /// Exit with status 1 if a threshold is breached.
        #[arg(long)]
        check: bool,
    },
    /// Run the acceptance criteria.
    Check {
        /// Run only these criteria (comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = common.replicas {
        cfg.replicas = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn context(cli_out: &Option<PathBuf>, cfg: Option<&ExperimentConfig>, deterministic: bool) -> Context {
    Context {
        out: commands::output_dir(cfg.and_then(|c| c.output.as_deref()), cli_out.clone()),
        deterministic,
    }
}

fn run(cli: Cli) -> Result<Summary, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let det = cli.deterministic;
    let with = |common: &Common| -> Result<(ExperimentConfig, Context), CliError> {
        let cfg = load(common)?;
        let ctx = context(&cli.out, Some(&cfg), det);
        Ok((cfg, ctx))
    };
    match &cli.command {
        Command::MapInfo(c) => {
            let (cfg, ctx) = with(c)?;
            commands::map_info(&cfg, &ctx).map(|r| r.1)
        }
        Command::Rotnum(c) => {
            let (cfg, ctx) = with(c)?;
            commands::rotnum(&cfg, &ctx)
        }
        Command::Partition(c) => {
            let (cfg, ctx) = with(c)?;
            commands::partition(&cfg, &ctx)
        }
        Command::Thermo(c) => {
            let (cfg, ctx) = with(c)?;
            commands::thermo(&cfg, &ctx)
        }
        Command::Lyapunov(c) => {
            let (cfg, ctx) = with(c)?;
            commands::lyapunov(&cfg, &ctx)
        }
        Command::Barycentric(c) => {
            let (cfg, ctx) = with(c)?;
            commands::barycentric(&cfg, &ctx)
        }
        Command::Clt { common, sigma_c1, tau, check } => {
            let (mut cfg, ctx) = with(common)?;
            if let Some(c1) = sigma_c1 {
                cfg.sigma.c1 = Param::Value(*c1);
            }
            if let Some(t) = tau {
                cfg.sigma.tau = Param::Value(*t);
            }
            cfg.validate()?;
            commands::clt(&cfg, &ctx, *check).map(|r| r.1)
        }
        Command::Check { only } => {
            let ctx = context(&cli.out, None, det);
            commands::check(only, &ctx, |line| println!("{line}"))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(s) => {
            // A closed pipe (e.g. `| head`) is not an error.
            let mut out = std::io::stdout().lock();
            for l in &s.lines {
                let _ = writeln!(out, "{l}");
            }
            for f in &s.files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
