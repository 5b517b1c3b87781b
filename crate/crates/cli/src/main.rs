use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use poseae_core::config::RunConfig;
use poseae_core::pipeline::Pipeline;
use poseae_core::Error;

/// Camera pose auto-encoders on synthetic desk-scale scenes.
#[derive(Parser, Debug)]
#[command(name = "poseae", version)]
struct Cli {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `--set refine.k=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Use artifacts even if they were built under a different config.
    #[arg(long, global = true)]
    force: bool,
    /// Solve the refinement weights exactly instead of iterating
    /// (same as `--set refine.closed_form=true`).
    #[arg(long, global = true)]
    closed_form: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Render the dataset and write the pose database.
    GenScene,
    /// Train the teacher absolute pose regressor.
    TrainApr,
    /// Distill the pose auto-encoder from the teacher.
    TrainPae,
    /// Train the image decoder on pose encodings.
    TrainDecoder,
    /// Train the Siamese relative pose regressor.
    TrainRpr,
    /// Teacher vs student median errors.
    Eval,
    /// Test-time refinement of teacher position estimates.
    Refine,
    /// Refinement of random guesses around the ground truth.
    RefineRandomGuess,
    /// Relative regression against decoded reference images.
    VirtualRpr,
    /// Sweep the number of Fourier levels of the encoder.
    AblateFourier,
    /// Affine combination applied to neighbor orientations.
    OrientationAffine,
    /// Decoded images vs true and displaced renders.
    DecoderProbe,
    /// Collect every experiment report into report.json / report.txt.
    Report,
    /// Run every stage and experiment in order, then `report`.
    All,
    /// Print the effective configuration as JSON.
    ShowConfig,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GenScene => "gen-scene",
            Command::TrainApr => "train-apr",
            Command::TrainPae => "train-pae",
            Command::TrainDecoder => "train-decoder",
            Command::TrainRpr => "train-rpr",
            Command::Eval => "eval",
            Command::Refine => "refine",
            Command::RefineRandomGuess => "refine-random-guess",
            Command::VirtualRpr => "virtual-rpr",
            Command::AblateFourier => "ablate-fourier",
            Command::OrientationAffine => "orientation-affine",
            Command::DecoderProbe => "decoder-probe",
            Command::Report => "report",
            Command::All => "all",
            Command::ShowConfig => "show-config",
        }
    }
}

const ALL: [&str; 13] = [
    "gen-scene",
    "train-apr",
    "train-pae",
    "train-decoder",
    "train-rpr",
    "eval",
    "refine",
    "refine-random-guess",
    "virtual-rpr",
    "ablate-fourier",
    "orientation-affine",
    "decoder-probe",
    "report",
];

fn run(cli: &Cli) -> Result<(), Error> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut sets = cli.sets.clone();
    if cli.closed_form {
        sets.push("refine.closed_form=true".into());
    }
    let cfg = base.with_overrides(&sets)?;
    if cli.command == Command::ShowConfig {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let pipeline = Pipeline::new(cfg, cli.force)?;
    let commands: Vec<&str> = if cli.command == Command::All {
        ALL.to_vec()
    } else {
        vec![cli.command.name()]
    };
    for command in commands {
        eprintln!("[{command}] {}", pipeline.dir.display());
        let reports = pipeline.run_command(command)?;
        if command != "report" {
            for r in &reports {
                println!("{}", r.to_table());
            }
        }
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
