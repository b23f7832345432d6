use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rca_ghost::config::{PipelineConfig, Profile};
use rca_ghost::pipeline::{read_metrics, run_stage, with_threads, Stage};

#[derive(Parser, Debug)]
#[command(
    name = "rca-ghost",
    version,
    about = "RCA imaging pipeline with ghost-echo correlation filtering"
)]
struct Cli {
    #[arg(value_enum)]
    stage: StageArg,

    /// TOML file merged over the selected profile.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides the config output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,

    #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,

    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StageArg {
    Simulate,
    Beamform,
    Filter,
    Metrics,
    All,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Simulate => Stage::Simulate,
            StageArg::Beamform => Stage::Beamform,
            StageArg::Filter => Stage::Filter,
            StageArg::Metrics => Stage::Metrics,
            StageArg::All => Stage::All,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Desk,
    Full,
}

fn run(cli: Cli) -> rca_ghost::Result<()> {
    let profile = match cli.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Full => Profile::Full,
    };
    let mut cfg = PipelineConfig::load(profile, cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    if cli.print_config {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let stage = Stage::from(cli.stage);
    with_threads(cli.threads, || run_stage(stage, &cfg))??;
    if matches!(stage, Stage::Metrics | Stage::All) {
        let report = read_metrics(&cfg.output_dir)?;
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
