use std::path::PathBuf;
use std::process::ExitCode;

use bohmflow_cli::{preset, run, CliError, ConfigSource, RunConfig, RunOptions, Task};
use clap::{ArgGroup, Args, Parser, Subcommand};

/// Bohmian trajectories, nodal lines and perturbation series for 3-D
/// harmonic-oscillator superpositions.
#[derive(Parser)]
#[command(name = "bohmflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the orbits and write trajectory CSVs and a report
    Simulate(RunArgs),
    /// Integrate forward and back and report the distance to the start
    Retrace(RunArgs),
    /// Classify the quantum numbers by their integrability
    Classify(RunArgs),
    /// Track nodal points over the time span
    NodalTrack(RunArgs),
    /// Find X-points next to the nodal points
    Xpoint(RunArgs),
    /// Build perturbation series and compare them with the numerical orbits
    Perturb(RunArgs),
    /// Bin orbits or node tracks on the integral surface chart
    Project(RunArgs),
    /// Label orbits as ordered or chaotic candidates
    Report(RunArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("input").required(true).args(["config", "preset"])))]
struct RunArgs {
    /// TOML run configuration
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in figure preset (fig1, fig3, ..., fig14)
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory (env: BOHMFLOW_OUT)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Output sampling step, also the node tracking step
    #[arg(long, value_name = "F")]
    dt: Option<f64>,
    /// Worker threads (env: BOHMFLOW_THREADS)
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (Task, RunArgs) {
        match self {
            Command::Simulate(a) => (Task::Simulate, a),
            Command::Retrace(a) => (Task::Retrace, a),
            Command::Classify(a) => (Task::Classify, a),
            Command::NodalTrack(a) => (Task::NodalTrack, a),
            Command::Xpoint(a) => (Task::Xpoint, a),
            Command::Perturb(a) => (Task::Perturb, a),
            Command::Project(a) => (Task::Project, a),
            Command::Report(a) => (Task::Report, a),
        }
    }
}

fn execute(task: Task, args: RunArgs) -> Result<(), CliError> {
    let (config, source) = match (&args.preset, &args.config) {
        (Some(name), _) => (preset(name)?, ConfigSource::Preset(name.clone())),
        (None, Some(path)) => (
            RunConfig::from_file(path)?,
            ConfigSource::File(path.clone()),
        ),
        (None, None) => unreachable!("clap requires one input"),
    };
    let opts = RunOptions {
        out: args.out,
        dt: args.dt,
        threads: args.threads,
    }
    .with_env()?;
    let outcome = run(task, &config, &source, &opts)?;
    println!("{}: {}", task.name(), outcome.summary);
    println!(
        "wrote {} file(s) to {}",
        outcome.files.len(),
        outcome.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let (task, args) = Cli::parse().command.split();
    match execute(task, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
