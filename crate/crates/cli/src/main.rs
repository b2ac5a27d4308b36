mod commands;
mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use trackmppi::harness::{Direction, EpisodeConfig};

use commands::{default_track_gen, AblateConfig, DatasetConfig, Job, PlotConfig, Shape, SweepConfig};
use config::{load, make_run_dir, usage, with_overrides, CliError, CliResult, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "trackmppi", version, about = "Sampling-based racing controller toolkit")]
struct Cli {
    /// Root under which timestamped run directories are created.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Write into this directory instead (created if missing, must be empty).
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Layered {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Dotted override, e.g. `--set provider.latency=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a centerline and its world costmap.
    TrackGen {
        /// Straight length of the oval, m.
        #[arg(long)]
        straight: Option<f64>,
        /// Turn radius of the oval, m.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        half_width: Option<f64>,
        #[arg(long)]
        spacing: Option<f64>,
        /// Build from an `x,y` waypoint CSV instead of an oval.
        #[arg(long)]
        waypoints: Option<PathBuf>,
        /// Costmap cell size, m.
        #[arg(long)]
        resolution: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run one closed-loop episode.
    Simulate(Layered),
    /// Run an episode per target speed and direction.
    Sweep {
        #[command(flatten)]
        layered: Layered,
        /// Comma-separated target speeds, m/s, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<f64>,
        /// Comma-separated directions (ccw, cw).
        #[arg(long, value_delimiter = ',', default_value = "ccw")]
        directions: Vec<String>,
    },
    /// Emit an auto-labeled dataset from a pose log.
    Dataset(Layered),
    /// Occlusion sensitivity map of a costmap predictor.
    Ablate(Layered),
    /// Render an episode log over its track as SVG.
    Plot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        track: PathBuf,
        /// Image width, px.
        #[arg(long, default_value_t = 1000.0)]
        width: f64,
    },
    /// Re-run the command recorded in a run manifest.
    Replay {
        manifest: PathBuf,
    },
}

fn parse_direction(s: &str) -> CliResult<Direction> {
    match s.trim() {
        "ccw" => Ok(Direction::Ccw),
        "cw" => Ok(Direction::Cw),
        other => usage(format!("unknown direction `{other}`; expected ccw or cw")),
    }
}

fn cwd() -> CliResult<PathBuf> {
    std::env::current_dir().map_err(|e| CliError::Usage(e.to_string()))
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    Ok(if p.is_absolute() { p.to_path_buf() } else { cwd()?.join(p) })
}

/// Resolve the subcommand into a job and the directory its relative paths use.
fn build(command: Command) -> CliResult<(Job, PathBuf)> {
    Ok(match command {
        Command::TrackGen {
            straight,
            radius,
            half_width,
            spacing,
            waypoints,
            resolution,
            margin,
            set,
        } => {
            let mut c = default_track_gen();
            if let Some(v) = straight {
                c.oval.straight_length = v;
            }
            if let Some(v) = radius {
                c.oval.radius = v;
            }
            if let Some(v) = half_width {
                c.oval.half_width = v;
                c.half_width = v;
            }
            if let Some(v) = spacing {
                c.oval.vertex_spacing = v;
            }
            if let Some(p) = waypoints {
                c.shape = Shape::Waypoints;
                c.waypoints = Some(absolute(&p)?);
            }
            if let Some(v) = resolution {
                c.resolution = v;
            }
            if let Some(v) = margin {
                c.margin = v;
            }
            (Job::TrackGen(with_overrides(&c, &set)?), cwd()?)
        }
        Command::Simulate(l) => {
            let loaded = load::<EpisodeConfig>(&l.config, &l.set)?;
            (Job::Simulate(loaded.config), loaded.base_dir)
        }
        Command::Sweep {
            layered,
            targets,
            directions,
        } => {
            let loaded = load::<EpisodeConfig>(&layered.config, &layered.set)?;
            let directions = directions.iter().map(|d| parse_direction(d)).collect::<CliResult<Vec<_>>>()?;
            let job = Job::Sweep(SweepConfig {
                episode: loaded.config,
                targets,
                directions,
            });
            (job, loaded.base_dir)
        }
        Command::Dataset(l) => {
            let loaded = load::<DatasetConfig>(&l.config, &l.set)?;
            (Job::Dataset(loaded.config), loaded.base_dir)
        }
        Command::Ablate(l) => {
            let loaded = load::<AblateConfig>(&l.config, &l.set)?;
            (Job::Ablate(loaded.config), loaded.base_dir)
        }
        Command::Plot { log, track, width } => {
            let job = Job::Plot(PlotConfig {
                log: absolute(&log)?,
                track: absolute(&track)?,
                width,
            });
            (job, cwd()?)
        }
        Command::Replay { manifest } => {
            let text = std::fs::read_to_string(&manifest)
                .map_err(|e| CliError::Usage(format!("{}: {e}", manifest.display())))?;
            let m: RunManifest =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", manifest.display())))?;
            (Job::from_manifest(&m)?, m.base_dir)
        }
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let (job, base_dir) = build(cli.command)?;
    let run_dir = make_run_dir(cli.run_dir.as_deref(), &cli.out, job.name())?;
    let outcome = job.run(&base_dir, &run_dir);
    println!("run directory: {}", run_dir.display());
    println!("{}", outcome?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 1,
                CliError::Domain(_) => 2,
            })
        }
    }
}
