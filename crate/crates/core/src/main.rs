use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use terrain_pitch::config::RunConfig;
use terrain_pitch::heightfield::Terrain;
use terrain_pitch::pipeline::{Pipeline, Stage, TrainStage};
use terrain_pitch::{Error, Result};

/// Rover terrain identification: terrain generation, PPO training,
/// telemetry collection and GMM window sweep.
#[derive(Parser, Debug)]
#[command(name = "terrain-pitch", version)]
struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// `train`: initial-flat or general. `pipeline`: run only this stage
    /// (gen-terrain, train, train-initial-flat, train-general, collect,
    /// sweep, cross-eval, report).
    #[arg(long, global = true)]
    stage: Option<String>,

    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate and save the heightfield.
    GenTerrain,
    /// Train one PPO stage.
    Train {
        /// Aggregate environment steps.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Record the orientation time series on one area.
    Collect {
        #[arg(long)]
        area: Terrain,
        /// Checkpoint to run; defaults to the general model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        discard: Option<usize>,
    },
    /// Fit the mixture for every window size and score it.
    Sweep {
        /// Comma-separated window sizes.
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<usize>>,
    },
    /// Success rate and reach time of each model on each area.
    CrossEval {
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Write plot-ready CSVs from existing artifacts.
    Report,
    /// Run every stage in order.
    Pipeline {
        /// Aggregate environment steps for each training stage.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match &cli.command {
        Command::Train { steps: Some(steps) } => {
            let stage: TrainStage = train_stage(cli)?;
            match stage {
                TrainStage::InitialFlat => config.train.initial_flat.total_steps = *steps,
                TrainStage::General => config.train.general.total_steps = *steps,
            }
        }
        Command::Pipeline { steps: Some(steps) } => {
            config.train.initial_flat.total_steps = *steps;
            config.train.general.total_steps = *steps;
        }
        Command::Collect { steps, discard, .. } => {
            if let Some(s) = steps {
                config.telemetry.n_steps = *s;
            }
            if let Some(d) = discard {
                config.telemetry.discard = *d;
            }
        }
        Command::Sweep { windows: Some(w) } => config.gmm.windows = w.clone(),
        Command::CrossEval { episodes: Some(e) } => config.eval.episodes = *e,
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

fn train_stage(cli: &Cli) -> Result<TrainStage> {
    cli.stage
        .as_deref()
        .ok_or_else(|| Error::Config("train needs --stage initial-flat or --stage general".into()))?
        .parse()
}

fn run(cli: &Cli) -> Result<()> {
    let stage_allowed = matches!(cli.command, Command::Train { .. } | Command::Pipeline { .. });
    if cli.stage.is_some() && !stage_allowed {
        return Err(Error::Config("--stage only applies to train and pipeline".into()));
    }
    let config = load_config(cli)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", config.to_toml()?);
        return Ok(());
    }
    let p = Pipeline::new(config, &cli.out)?.verbose(!cli.quiet);
    match &cli.command {
        Command::GenTerrain => {
            p.gen_terrain()?;
            println!("{}", p.layout.heightfield().display());
        }
        Command::Train { .. } => {
            let stage = train_stage(cli)?;
            let ck = p.train(stage)?;
            println!("{} ({} steps)", p.layout.checkpoint(stage).display(), ck.env_steps);
        }
        Command::Collect { area, model, .. } => {
            let t = p.collect(*area, model.as_deref())?;
            println!("{} ({} rows)", p.layout.trajectory(*area).display(), t.len());
        }
        Command::Sweep { .. } => {
            for r in p.sweep()? {
                let acc = r.confusion.accuracy().map_or("n/a".into(), |a| format!("{:.2}%", 100.0 * a));
                println!("window {:>3}  accuracy {acc}", r.window);
            }
        }
        Command::CrossEval { .. } => {
            for r in p.cross_eval()? {
                println!("{:>12} {:<5} {:>5.1}%", r.model, r.area.to_string(), 100.0 * r.stats.success_rate());
            }
        }
        Command::Report => {
            p.report()?;
            println!("{}", p.layout.report_dir().display());
        }
        Command::Pipeline { .. } => {
            let stages = match &cli.stage {
                Some(s) => Stage::parse_set(s)?,
                None => Stage::ALL.to_vec(),
            };
            p.run(&stages)?;
            println!("{}", p.layout.root.display());
        }
        Command::ShowConfig => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
