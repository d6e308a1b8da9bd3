//! `phasefb`: generate a synthetic corpus, learn the nominal skill, extract
//! coupling targets, train and evaluate feedback models, and execute them.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Context;
use config::{PipelineConfig, SEED_ENV};
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "phasefb",
    version,
    about = "Phase-modulated feedback models for movement primitives"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML experiment configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for data generation and training.
    #[arg(long, global = true, env = SEED_ENV)]
    seed: Option<u64>,

    /// Simulator profile.
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,

    /// Feedback architecture, e.g. pmnn-100, pmnn-0, ffnn-100-25, pca-99.
    #[arg(long, global = true)]
    arch: Option<String>,

    /// Number of training steps.
    #[arg(long, global = true)]
    steps: Option<usize>,

    #[arg(long, global = true)]
    corpus: Option<PathBuf>,

    #[arg(long, global = true)]
    models: Option<PathBuf>,

    #[arg(long, global = true)]
    data: Option<PathBuf>,

    #[arg(long, global = true)]
    reports: Option<PathBuf>,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Profile {
    Tiny,
    Default,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the demonstration corpus.
    GenData,
    /// Segment nominal demonstrations, fit primitives and expected traces.
    LearnNominal,
    /// Build coupling-term datasets for the feedback primitives.
    ExtractCoupling,
    /// Train feedback models on all demonstrations.
    Train {
        /// Primitive number (2 or 3); repeat for several. Default: both.
        #[arg(long = "primitive")]
        primitives: Vec<usize>,
    },
    /// Leave-one-demonstration-out evaluation.
    Loo {
        #[arg(long = "primitive")]
        primitives: Vec<usize>,
    },
    /// Execute the skill at a board roll, with or without feedback.
    Unroll {
        /// Board roll in degrees.
        #[arg(long, allow_hyphen_values = true)]
        setting: f64,
        #[arg(long, value_enum, default_value = "on")]
        coupling: Switch,
        /// Sensor-noise trial index.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Rank regular hidden-layer features per phase kernel.
    Dominance {
        #[arg(long = "primitive")]
        primitives: Vec<usize>,
    },
}

fn resolve(global: &GlobalArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = Some(seed);
    }
    if let Some(p) = global.profile {
        cfg.profile = match p {
            Profile::Tiny => "tiny".into(),
            Profile::Default => "default".into(),
        };
    }
    if let Some(a) = &global.arch {
        cfg.architecture = a.clone();
    }
    if let Some(s) = global.steps {
        cfg.train.max_steps = s;
    }
    for (flag, slot) in [
        (&global.corpus, &mut cfg.corpus),
        (&global.models, &mut cfg.models),
        (&global.data, &mut cfg.data),
        (&global.reports, &mut cfg.reports),
    ] {
        if let Some(p) = flag {
            *slot = p.clone();
        }
    }
    cfg.seed()?;
    cfg.architecture()?;
    cfg.train.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Context {
        config: resolve(&cli.global)?,
        force: cli.global.force,
    };
    match cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::LearnNominal => commands::learn_nominal_cmd(&ctx),
        Command::ExtractCoupling => commands::extract_coupling(&ctx),
        Command::Train { primitives } => commands::train(&ctx, &primitives),
        Command::Loo { primitives } => commands::loo(&ctx, &primitives),
        Command::Unroll {
            setting,
            coupling,
            trial,
        } => commands::unroll(&ctx, setting, coupling == Switch::On, trial),
        Command::Dominance { primitives } => commands::dominance(&ctx, &primitives),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
