//! Command bodies. Each takes a fully resolved config and writes into a run
//! directory; replay feeds the same functions from a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use trackmppi::autolabel::{emit_dataset, extract_topdown_crop, read_pose_log, write_pose_log, CameraModel, CropSpec, Pose3, TimedPose};
use trackmppi::costmap::DEFAULT_RESOLUTION;
use trackmppi::eval::{ablate, normalize_sensitivity, pose_set, track_mask, AblationSpec};
use trackmppi::harness::{read_trace, speed_sweep, write_sweep_csv, Direction, EpisodeConfig};
use trackmppi::io::{write_grid, write_pgm};
use trackmppi::perception::{corrupt_frame, CorruptionSpec, CostmapFrame};
use trackmppi::track::{from_waypoints_csv, oval, OvalSpec};
use trackmppi::{build_track_costmap, harness, Centerline, Pose2};

use crate::config::{usage, write_json, CliError, CliResult, RunManifest, MANIFEST_FILE};
use crate::plot::render_svg;

fn at(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}

fn default_margin() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Oval,
    Waypoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackGenConfig {
    pub shape: Shape,
    pub oval: OvalSpec,
    /// CSV of `x,y` rows, used when `shape` is `waypoints`.
    pub waypoints: Option<PathBuf>,
    /// Half-width for waypoint tracks, m.
    pub half_width: f64,
    pub resolution: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub episode: EpisodeConfig,
    pub targets: Vec<f64>,
    pub directions: Vec<Direction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub track: PathBuf,
    /// Pose log CSV; when absent, poses are drawn along the track.
    pub poses: Option<PathBuf>,
    pub pose_count: usize,
    /// Largest lateral offset of generated poses, m.
    pub lateral_jitter: f64,
    /// Largest heading offset of generated poses, rad.
    pub yaw_jitter: f64,
    /// Timestamp spacing of generated poses, s.
    pub pose_interval: f64,
    pub seed: u64,
    pub camera: CameraModel,
    pub crop: CropSpec,
    pub map_resolution: f64,
    pub map_margin: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            track: PathBuf::new(),
            poses: None,
            pose_count: 200,
            lateral_jitter: 0.5,
            yaw_jitter: 0.2,
            pose_interval: 0.1,
            seed: 0,
            camera: CameraModel::default(),
            crop: CropSpec::default(),
            map_resolution: default_resolution(),
            map_margin: default_margin(),
        }
    }
}

/// What turns the ablated input grid into a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Predictor {
    Identity,
    Corrupted { corruption: CorruptionSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub track: PathBuf,
    /// World pose of the crop; when absent, a point on the track chosen by `pose_index`.
    pub pose: Option<Pose2>,
    pub pose_index: usize,
    pub crop: CropSpec,
    pub ablation: AblationSpec,
    pub predictor: Predictor,
    /// Widen the scored region by this many cells around the track.
    pub edge_band: Option<usize>,
    pub map_resolution: f64,
    pub map_margin: f64,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            track: PathBuf::new(),
            pose: None,
            pose_index: 0,
            crop: CropSpec::default(),
            ablation: AblationSpec::default(),
            predictor: Predictor::Identity,
            edge_band: None,
            map_resolution: default_resolution(),
            map_margin: default_margin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    pub log: PathBuf,
    pub track: PathBuf,
    pub width: f64,
}

/// A resolved command ready to run.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    TrackGen(TrackGenConfig),
    Simulate(EpisodeConfig),
    Sweep(SweepConfig),
    Dataset(DatasetConfig),
    Ablate(AblateConfig),
    Plot(PlotConfig),
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::TrackGen(_) => "track-gen",
            Job::Simulate(_) => "simulate",
            Job::Sweep(_) => "sweep",
            Job::Dataset(_) => "dataset",
            Job::Ablate(_) => "ablate",
            Job::Plot(_) => "plot",
        }
    }

    pub fn config_value(&self) -> Value {
        let v = match self {
            Job::TrackGen(c) => serde_json::to_value(c),
            Job::Simulate(c) => serde_json::to_value(c),
            Job::Sweep(c) => serde_json::to_value(c),
            Job::Dataset(c) => serde_json::to_value(c),
            Job::Ablate(c) => serde_json::to_value(c),
            Job::Plot(c) => serde_json::to_value(c),
        };
        v.expect("configs serialize")
    }

    pub fn from_manifest(m: &RunManifest) -> CliResult<Self> {
        fn de<T: serde::de::DeserializeOwned>(v: &Value) -> CliResult<T> {
            serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("manifest config: {e}")))
        }
        Ok(match m.command.as_str() {
            "track-gen" => Job::TrackGen(de(&m.config)?),
            "simulate" => Job::Simulate(de(&m.config)?),
            "sweep" => Job::Sweep(de(&m.config)?),
            "dataset" => Job::Dataset(de(&m.config)?),
            "ablate" => Job::Ablate(de(&m.config)?),
            "plot" => Job::Plot(de(&m.config)?),
            other => return usage(format!("manifest names unknown command `{other}`")),
        })
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Job::Simulate(c) => Some(c.seed),
            Job::Sweep(c) => Some(c.episode.seed),
            Job::Dataset(c) => Some(c.seed),
            Job::Ablate(AblateConfig {
                predictor: Predictor::Corrupted { corruption },
                ..
            }) => Some(corruption.seed),
            _ => None,
        }
    }

    fn outputs(&self) -> Vec<&'static str> {
        match self {
            Job::TrackGen(_) => vec!["centerline.json", "world_costmap.json", "world_costmap.f32"],
            Job::Simulate(_) => vec!["episode.csv", "summary.json"],
            Job::Sweep(_) => vec!["sweep.csv", "sweep.json"],
            Job::Dataset(_) => vec!["poses.csv", "dataset/"],
            Job::Ablate(_) => vec!["sensitivity.json", "sensitivity.f32", "sensitivity.pgm", "score.json"],
            Job::Plot(_) => vec!["trajectory.svg"],
        }
    }

    /// Write the manifest, then run. Returns a one-line report.
    pub fn run(&self, base_dir: &Path, run_dir: &Path) -> CliResult<String> {
        let manifest = RunManifest {
            command: self.name().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created: chrono::Local::now().to_rfc3339(),
            seed: self.seed(),
            base_dir: base_dir.to_path_buf(),
            config: self.config_value(),
            outputs: self.outputs().into_iter().map(String::from).collect(),
        };
        write_json(&run_dir.join(MANIFEST_FILE), &manifest)?;
        match self {
            Job::TrackGen(c) => track_gen(c, base_dir, run_dir),
            Job::Simulate(c) => simulate(c, base_dir, run_dir),
            Job::Sweep(c) => sweep(c, base_dir, run_dir),
            Job::Dataset(c) => dataset(c, base_dir, run_dir),
            Job::Ablate(c) => ablate_cmd(c, base_dir, run_dir),
            Job::Plot(c) => plot(c, base_dir, run_dir),
        }
    }
}

fn track_gen(c: &TrackGenConfig, base: &Path, out: &Path) -> CliResult<String> {
    let line = match c.shape {
        Shape::Oval => oval(&c.oval)?,
        Shape::Waypoints => {
            let Some(p) = &c.waypoints else {
                return usage("shape `waypoints` needs --waypoints");
            };
            from_waypoints_csv(at(base, p), c.half_width)?
        }
    };
    let map = build_track_costmap(&line, c.resolution, c.margin)?;
    write_json(&out.join("centerline.json"), &line)?;
    write_grid(out.join("world_costmap.json"), &map)?;
    Ok(format!(
        "track length {:.3} m, {} vertices, map {}x{}",
        line.length(),
        line.vertices.len(),
        map.width(),
        map.height()
    ))
}

fn simulate(c: &EpisodeConfig, base: &Path, out: &Path) -> CliResult<String> {
    let log = harness::run_episode(c, base)?;
    log.write_csv(out.join("episode.csv"))?;
    log.write_summary(out.join("summary.json"))?;
    let s = log.summary();
    let line = format!(
        "laps {}/{} avg lap {} top speed {:.3} m/s",
        s.laps,
        s.lap_goal,
        s.avg_lap_time.map_or("-".into(), |v| format!("{v:.3} s")),
        s.top_speed
    );
    match (s.failure, s.completed) {
        (Some(f), _) => Err(CliError::Domain(format!("{line}; failed: {:?} at t = {:.3} s", f.cause, f.time))),
        (None, false) => Err(CliError::Domain(format!("{line}; time limit reached"))),
        (None, true) => Ok(line),
    }
}

fn sweep(c: &SweepConfig, base: &Path, out: &Path) -> CliResult<String> {
    let scenario = c.episode.resolve(base)?;
    let rows = speed_sweep(&scenario, &c.targets, &c.directions)?;
    write_sweep_csv(out.join("sweep.csv"), &rows)?;
    write_json(&out.join("sweep.json"), &rows)?;
    let failed = rows.iter().filter(|r| r.avg_lap_time.is_none()).count();
    Ok(format!("{} rows, {failed} failed", rows.len()))
}

fn dataset(c: &DatasetConfig, base: &Path, out: &Path) -> CliResult<String> {
    if c.track.as_os_str().is_empty() {
        return usage("dataset config needs `track`");
    }
    let line = Centerline::from_json_file(at(base, &c.track))?;
    let map = build_track_costmap(&line, c.map_resolution, c.map_margin)?;
    let poses = match &c.poses {
        Some(p) => read_pose_log(at(base, p))?,
        None => pose_set(&line, c.pose_count, c.lateral_jitter, c.yaw_jitter, c.seed)
            .into_iter()
            .enumerate()
            .map(|(i, p)| TimedPose {
                t: i as f64 * c.pose_interval,
                pose: Pose3::from_pose2(p, 0.0),
            })
            .collect(),
    };
    write_pose_log(out.join("poses.csv"), &poses)?;
    let n = emit_dataset(&poses, &map, &c.camera, &c.crop, out.join("dataset"))?;
    Ok(format!("{n} samples"))
}

#[derive(Debug, Serialize)]
struct AblationReport {
    pose: Pose2,
    baseline: f64,
    min_score: f64,
    max_score: f64,
    placements: [usize; 2],
    block: usize,
    stride: usize,
    fill: f64,
}

/// Evenly spaced centerline poses `pose_index` picks from.
pub const ABLATE_POSE_SLOTS: usize = 64;

fn ablate_cmd(c: &AblateConfig, base: &Path, out: &Path) -> CliResult<String> {
    if c.track.as_os_str().is_empty() {
        return usage("ablate config needs `track`");
    }
    let line = Centerline::from_json_file(at(base, &c.track))?;
    let map = build_track_costmap(&line, c.map_resolution, c.map_margin)?;
    let pose = match c.pose {
        Some(p) => p,
        None => {
            let poses = pose_set(&line, ABLATE_POSE_SLOTS, 0.0, 0.0, 0);
            poses[c.pose_index % ABLATE_POSE_SLOTS]
        }
    };
    let truth = extract_topdown_crop(&map, pose, &c.crop)?;
    let mask = track_mask(&truth, c.edge_band);
    let predictor = |g: &trackmppi::CostMapGrid| -> trackmppi::Result<trackmppi::CostMapGrid> {
        match &c.predictor {
            Predictor::Identity => Ok(g.clone()),
            Predictor::Corrupted { corruption } => {
                let frame = CostmapFrame::new(g.clone(), pose, 0.0)?;
                Ok(corrupt_frame(&frame, corruption, 0)?.effective_grid().clone())
            }
        }
    };
    let map_out = ablate(predictor, &truth, &truth, &mask, &c.ablation)?;
    write_grid(out.join("sensitivity.json"), &map_out.to_grid()?)?;
    write_pgm(out.join("sensitivity.pgm"), map_out.cols, map_out.rows, &normalize_sensitivity(&map_out))?;
    let (lo, hi) = map_out
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(*s), hi.max(*s)));
    write_json(
        &out.join("score.json"),
        &AblationReport {
            pose,
            baseline: map_out.baseline,
            min_score: lo,
            max_score: hi,
            placements: [map_out.cols, map_out.rows],
            block: map_out.block,
            stride: map_out.stride,
            fill: map_out.fill,
        },
    )?;
    Ok(format!(
        "{}x{} placements, baseline {:.4}, scores {lo:.4}..{hi:.4}",
        map_out.cols, map_out.rows, map_out.baseline
    ))
}

fn plot(c: &PlotConfig, base: &Path, out: &Path) -> CliResult<String> {
    let line = Centerline::from_json_file(at(base, &c.track))?;
    let trace = read_trace(at(base, &c.log))?;
    if !(c.width.is_finite() && c.width > 0.0) {
        return usage(format!("plot width must be > 0, got {}", c.width));
    }
    let svg = render_svg(&line, &trace, c.width);
    let path = out.join("trajectory.svg");
    fs::write(&path, svg).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(format!("{} samples plotted", trace.len()))
}

/// Shipped default used by `track-gen` flags.
pub fn default_track_gen() -> TrackGenConfig {
    TrackGenConfig {
        shape: Shape::Oval,
        oval: OvalSpec::default(),
        waypoints: None,
        half_width: OvalSpec::default().half_width,
        resolution: default_resolution(),
        margin: default_margin(),
    }
}
