//! `fspn`: scenario synthesis, federated clustering, training, evaluation and
//! deployment helpers as file-to-file stages.
//!
//! Exit codes: 0 success, 1 stage failure, 2 usage error, 3 finished with
//! warnings (outputs written, e.g. k-means hit its round cap).

mod commands;
mod config;
mod stage;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_WARNING: u8 = 3;

#[derive(Parser)]
#[command(
    name = "fspn",
    version,
    about = "Personalised federated fault diagnosis on synthetic fleets"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, replaced atomically on success.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Feature profile: desk or paper-shape.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "FSPN_WORKERS")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario's records.
    Synth {
        /// Scenario JSON; the desk fleet when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Sample-count multiplier of the built-in fleet.
        #[arg(long)]
        sample_scale: Option<f64>,
    },
    /// Group machines by federated k-means over their normal records.
    Cluster {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train the personalised federation on all records.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory of `cluster`.
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Cross-validate the chosen methods.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Method to evaluate; repeatable. Defaults to personalized_fl.
        #[arg(long = "method")]
        methods: Vec<String>,
        #[command(flatten)]
        cv: CvArgs,
    },
    /// Cross-validate all four methods and write the comparison tables.
    Compare {
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        cv: CvArgs,
    },
    /// Place new machines into groups and pick their checkpoints.
    Assign {
        /// Dataset directory holding the new machines' records.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Output directory of `train`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Machine to place; repeatable. Defaults to every machine.
        #[arg(long = "machine")]
        machines: Vec<u32>,
    },
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    folds: Option<usize>,
    /// Run only this fold.
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Cluster { .. } => "cluster",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Compare { .. } => "compare",
            Command::Assign { .. } => "assign",
        }
    }

    /// Flag values as a config layer.
    fn overrides(&self, g: &GlobalArgs) -> RunConfig {
        let mut c = RunConfig {
            seed: g.seed,
            out: g.out.clone(),
            profile: g.profile.clone(),
            ..RunConfig::default()
        };
        match self {
            Command::Synth {
                scenario,
                sample_scale,
            } => {
                c.scenario = scenario.clone();
                c.sample_scale = *sample_scale;
            }
            Command::Cluster { data } => c.data = data.clone(),
            Command::Train { data, clusters, .. } => {
                c.data = data.clone();
                c.clusters = clusters.clone();
            }
            Command::Evaluate { data, methods, cv } => {
                c.data = data.clone();
                c.methods = (!methods.is_empty()).then(|| methods.clone());
                c.fold = cv.fold;
            }
            Command::Compare { data, cv } => {
                c.data = data.clone();
                c.fold = cv.fold;
            }
            Command::Assign {
                data,
                clusters,
                model,
                machines,
            } => {
                c.data = data.clone();
                c.clusters = clusters.clone();
                c.model = model.clone();
                c.machines = (!machines.is_empty()).then(|| machines.clone());
            }
        }
        c
    }

    /// Budget flags applied after the experiment defaults are known.
    fn budget(&self, cfg: &mut RunConfig) {
        let (rounds, folds) = match self {
            Command::Train { rounds, .. } => (*rounds, None),
            Command::Evaluate { cv, .. } | Command::Compare { cv, .. } => (cv.rounds, cv.folds),
            _ => (None, None),
        };
        if let Some(exp) = cfg.experiment.as_mut() {
            if let Some(r) = rounds {
                config::set_rounds(exp, r);
            }
            if let Some(f) = folds {
                exp.folds = f;
            }
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<Vec<String>> {
    if let Some(n) = cli.global.workers {
        if n == 0 {
            anyhow::bail!("--workers must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let file = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = cli.command.overrides(&cli.global).or(file).resolve()?;
    cli.command.budget(&mut cfg);
    match &cli.command {
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Cluster { .. } => commands::cluster(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Evaluate { .. } => commands::evaluate(&cfg, false),
        Command::Compare { .. } => commands::evaluate(&cfg, true),
        Command::Assign { .. } => commands::assign(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match run(&cli) {
        Ok(warnings) if warnings.is_empty() => ExitCode::SUCCESS,
        Ok(warnings) => {
            for w in &warnings {
                eprintln!("fspn {stage}: warning: {w}");
            }
            ExitCode::from(EXIT_WARNING)
        }
        Err(e) => {
            eprintln!("fspn {stage}: error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
