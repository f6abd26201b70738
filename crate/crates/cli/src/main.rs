use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Output files land under this directory unless `--out` is absolute.
pub const OUTPUT_ROOT_ENV: &str = "SPIKING_SNAKE_OUT";

#[derive(Debug, Parser)]
#[command(name = "spiking-snake", version, about = "Spiking-neuron control of a soft snake")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replay the three-phase neuron protocol and write the step trace.
    DemoNeuron(DemoNeuronArgs),
    /// Mass-spring-damper driven by one neuron; writes the phase trajectory.
    DemoOscillator(DemoOscillatorArgs),
    /// Train a controller with PPO.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or the random agent) over many episodes.
    Eval(EvalArgs),
    /// Train and evaluate every supported snake size.
    Sweep(SweepArgs),
    /// Record node positions and controller outputs for one episode.
    ExportTrajectory(ExportArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` entries, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory, relative to $SPIKING_SNAKE_OUT (default `runs`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct SnakeArgs {
    /// spikingsoft, vanilla or cpg.
    #[arg(long)]
    pub controller: Option<String>,
    /// Segment count.
    #[arg(long)]
    pub m: Option<usize>,
    /// Nodes per segment.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DemoNeuronArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct DemoOscillatorArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = -0.1, allow_hyphen_values = true)]
    pub un: f64,
    #[arg(long, default_value_t = -0.025, allow_hyphen_values = true)]
    pub up: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub q0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub qdot0: f64,
    #[arg(long, default_value_t = 200_000)]
    pub steps: usize,
}

#[derive(Debug, Args, Clone)]
pub struct PpoArgs {
    /// Total environment steps.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Steps per environment between updates.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub n_envs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub snake: SnakeArgs,
    #[command(flatten)]
    pub ppo: PpoArgs,
    /// Also save a checkpoint every this many iterations (0: final only).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub snake: SnakeArgs,
    /// Policy checkpoint; without it the random agent is evaluated.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub episodes: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub snake: SnakeArgs,
    #[command(flatten)]
    pub ppo: PpoArgs,
    #[arg(long, default_value_t = 1000)]
    pub episodes: usize,
    /// Evaluate the random agent instead of training.
    #[arg(long)]
    pub random: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub snake: SnakeArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Keep every k-th physics step.
    #[arg(long, default_value_t = 10)]
    pub every: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::DemoNeuron(a) => commands::demo_neuron(a),
        Command::DemoOscillator(a) => commands::demo_oscillator(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::ExportTrajectory(a) => commands::export_trajectory(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let diverged = e
                .chain()
                .filter_map(|c| c.downcast_ref::<spiking_snake::Error>())
                .any(|c| c.is_divergence());
            ExitCode::from(if diverged { 2 } else { 1 })
        }
    }
}
