use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::Value;
use topocut::commands::{self, input_error, EvaluateArgs, InputError, SimulateArgs};
use topocut::serve::{serve, ServeOptions};
use topocut_core::scene::SceneConfig;
use topocut_core::spectral::Task;

/// Deformable-object cutting: simulation, topology, spectral reward,
/// MPPI demonstrations and a live teleoperation service.
#[derive(Parser)]
#[command(name = "topocut", version)]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "TOPOCUT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulator headless and write one particle snapshot per frame.
    Simulate {
        /// Scene config (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        /// Snapshot directory.
        #[arg(long)]
        out: PathBuf,
        /// Run a vertical slice at this world x during the frames.
        #[arg(long)]
        slice_x: Option<f64>,
        /// Write the topology after the last frame to this JSON file.
        #[arg(long)]
        topology: Option<PathBuf>,
    },
    /// Score a topology against a goal and print the JSON report.
    Evaluate {
        /// Topology state (JSON, as written by `simulate --topology`).
        #[arg(long)]
        topo: PathBuf,
        /// Goal: a goal spec, or `{"points": [[x, y, z], ...]}`.
        #[arg(long)]
        goal: PathBuf,
        /// Spectral config (JSON); scene defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Task for the normalized reward: slice, stick or dice.
        #[arg(long)]
        task: Option<Task>,
        /// Seed for goal sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plan one MPPI demonstration episode.
    Plan {
        /// Plan job (JSON): scene, mppi, cuts, thickness, cut_frames, stop_reward.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the episode as a dataset here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a dataset of demonstration episodes.
    Datagen {
        /// Datagen config (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the episode count.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Serve a live session over WebSocket at `/ws`.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: SocketAddr,
        /// Scene config (JSON); defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        tick_ms: u64,
        #[arg(long, default_value_t = 2)]
        frames_per_tick: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print(v: &Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(input_error("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate { config, frames, out, slice_x, topology } => {
            print(&commands::simulate(&SimulateArgs { config, frames, out, slice_x, topology })?)
        }
        Command::Evaluate { topo, goal, config, task, seed } => {
            print(&commands::evaluate(&EvaluateArgs { topo, goal, config, task, seed })?)
        }
        Command::Plan { config, seed, out } => print(&commands::plan(&config, seed, out.as_deref())?),
        Command::Datagen { config, out, seed, episodes } => print(&commands::datagen(&config, &out, seed, episodes)?),
        Command::Serve { bind, config, tick_ms, frames_per_tick, seed } => {
            let scene = match config {
                Some(p) => commands::load_scene(&p)?,
                None => SceneConfig::default(),
            };
            if tick_ms == 0 || frames_per_tick == 0 {
                return Err(input_error("tick and frames per tick must be positive"));
            }
            let opts = ServeOptions { tick: Duration::from_millis(tick_ms), frames_per_tick, seed };
            let mut rt = tokio::runtime::Builder::new_multi_thread();
            if let Some(n) = cli.threads {
                rt.worker_threads(n);
            }
            rt.enable_all().build()?.block_on(async {
                let listener = tokio::net::TcpListener::bind(bind).await?;
                serve(listener, scene, opts).await
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
