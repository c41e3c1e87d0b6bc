use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use elsa::docsent::Variant;
use elsa::pipeline::{run_all, run_stage, write_fixture, FixtureSpec, PipelineConfig, RunOptions, Stage};
use elsa::ElsaError;

const EXIT_CONFIG: u8 = 2;
const EXIT_DEPENDENCY: u8 = 3;
const EXIT_DATA: u8 = 4;

#[derive(Parser)]
#[command(name = "elsa", version, about = "Emoji-powered cross-lingual sentiment pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of unlabeled tweets to keep, in (0, 1].
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate even when upstream artifacts came from another config.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    N,
    T,
    S,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::N => Variant::N,
            VariantArg::T => Variant::T,
            VariantArg::S => Variant::S,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    Preprocess(Common),
    TrainEmbeddings(Common),
    TrainEncoder(Common),
    TrainClassifier(Common),
    Predict(Common),
    Evaluate(Common),
    /// Train, predict and evaluate every variant (or only --variant).
    Ablate(Common),
    /// Word clusters and attention exports.
    Inspect(Common),
    /// Preprocess through evaluate.
    RunAll(Common),
    /// Write a synthetic bilingual dataset and a matching config.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Unlabeled tweets per language.
        #[arg(long)]
        tweets: Option<usize>,
    },
}

fn exit_code(e: &ElsaError) -> u8 {
    match e {
        ElsaError::Config(_) | ElsaError::Range(_) => EXIT_CONFIG,
        ElsaError::Dependency { .. } => EXIT_DEPENDENCY,
        _ => EXIT_DATA,
    }
}

fn load_config(c: &Common) -> Result<PipelineConfig, ElsaError> {
    let mut cfg = PipelineConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(f) = c.fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(ElsaError::Range(format!("--fraction {f} outside (0, 1]")));
        }
        cfg.fraction = f;
    }
    if let Some(out) = &c.out {
        let cwd = std::env::current_dir().map_err(|e| ElsaError::Config(e.to_string()))?;
        cfg.out = cwd.join(out);
    }
    Ok(cfg)
}

fn run(cmd: Command) -> Result<(), (u8, ElsaError)> {
    let (stage, common) = match cmd {
        Command::Fixture { out, seed, tweets } => {
            let mut spec = FixtureSpec {
                seed,
                ..FixtureSpec::default()
            };
            if let Some(n) = tweets {
                spec.tweets_per_language = n;
            }
            let (path, _) = write_fixture(&out, &spec).map_err(|e| (EXIT_DATA, e))?;
            println!("{}", path.display());
            return Ok(());
        }
        Command::Preprocess(c) => (Some(Stage::Preprocess), c),
        Command::TrainEmbeddings(c) => (Some(Stage::TrainEmbeddings), c),
        Command::TrainEncoder(c) => (Some(Stage::TrainEncoder), c),
        Command::TrainClassifier(c) => (Some(Stage::TrainClassifier), c),
        Command::Predict(c) => (Some(Stage::Predict), c),
        Command::Evaluate(c) => (Some(Stage::Evaluate), c),
        Command::Ablate(c) => (Some(Stage::Ablate), c),
        Command::Inspect(c) => (Some(Stage::Inspect), c),
        Command::RunAll(c) => (None, c),
    };
    // Anything that goes wrong while reading the config is a config error.
    let cfg = load_config(&common).map_err(|e| (EXIT_CONFIG, e))?;
    let opts = RunOptions {
        variant: common.variant.map(Variant::from),
        force: common.force,
    };
    let outcomes = match stage {
        Some(s) => run_stage(s, &cfg, &opts).map(|o| vec![o]),
        None => run_all(&cfg, &opts),
    }
    .map_err(|e| (exit_code(&e), e))?;
    for o in outcomes {
        println!("{}", serde_json::json!({"stage": o.stage, "summary": o.summary}));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
