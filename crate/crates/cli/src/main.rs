use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multitypical::config::ConfigArgs;
use multitypical::report::{bounds_report, BoundInputs};
use multitypical::study::{self, BaseSummary};
use multitypical::{exit, io};

#[derive(Parser)]
#[command(
    version,
    about = "Typical-set goodness-of-fit testing with density-model ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the ground-truth mixture and summarize its mode separation.
    GenBase(ConfigArgs),
    /// Train and calibrate the ensemble on data from the ground truth.
    Train(ConfigArgs),
    /// Typical-set intersection matrix of the ground truth and the members.
    Table1(ConfigArgs),
    /// Rejection sampling against the members' typical sets.
    Reject(ConfigArgs),
    /// Evaluate the bounds and run their low-dimensional checks.
    BoundsCheck {
        #[command(flatten)]
        inputs: BoundInputs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every stage plus the figure-data exports and a manifest.
    RunStudy(ConfigArgs),
    /// Figure-data exports from a trained output directory.
    Export(ConfigArgs),
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let partial = |p: bool| if p { exit::PARTIAL } else { exit::SUCCESS };
    match cli.command {
        Command::GenBase(args) => {
            let cfg = args.resolve()?;
            study::gen_base(&cfg)?;
            let summary: BaseSummary = io::read_json(&study::out(&cfg, study::BASE_SUMMARY))?;
            io::print_json(&summary)?;
            Ok(exit::SUCCESS)
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let (s, _) = study::train(&cfg)?;
            Ok(partial(s.partial()))
        }
        Command::Table1(args) => {
            let cfg = args.resolve()?;
            let s = study::load_study(&cfg)?;
            study::table1(&cfg, &s)?;
            print!(
                "{}",
                std::fs::read_to_string(study::out(&cfg, study::TABLE1))?
            );
            Ok(partial(s.partial()))
        }
        Command::Reject(args) => {
            let cfg = args.resolve()?;
            let s = study::load_study(&cfg)?;
            let (_, report, _) = study::reject(&cfg, &s)?;
            io::print_json(&io::RejectionJson::from(&report))?;
            Ok(partial(s.partial()))
        }
        Command::BoundsCheck { inputs, seed, out } => {
            let report = bounds_report(&inputs, seed)?;
            match out {
                Some(path) => io::write_json(&path, &report)?,
                None => io::print_json(&report)?,
            }
            Ok(exit::SUCCESS)
        }
        Command::RunStudy(args) => {
            let cfg = args.resolve()?;
            let manifest = study::run_study(&cfg)?;
            Ok(partial(manifest.partial))
        }
        Command::Export(args) => {
            let cfg = args.resolve()?;
            let s = study::load_study(&cfg)?;
            let (survivors, _) = study::make_rejection(&cfg, &s)?;
            study::export(&cfg, &s, Some(&survivors))?;
            Ok(partial(s.partial()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e:#}");
            exit::FAILURE
        }
    };
    ExitCode::from(code as u8)
}
