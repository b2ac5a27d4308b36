//! Closed-loop episodes: plant and controller stepped at the control rate,
//! costmap frames from a simulated provider, lap and failure detection, and
//! target-speed sweeps.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::costmap::{build_track_costmap, Centerline, CostMapGrid, DEFAULT_RESOLUTION};
use crate::dynamics::{step, Control, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::geometry::segments_intersect;
use crate::mppi::{splitmix64, MppiController, MppiParams, StepDiagnostics};
use crate::perception::{Provider, ProviderSpec};
use crate::track::{oval, OvalSpec, StartLine};

/// Crossings closer than this to the previous lap event are ignored, s.
pub const LAP_DEBOUNCE: f64 = 2.0;

/// How far the start line extends past the track edges, m.
const START_LINE_OVERHANG: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Counter-clockwise: the centerline's own vertex order.
    Ccw,
    Cw,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Ccw => "ccw",
            Direction::Cw => "cw",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureCriteria {
    /// Track cost above which the vehicle counts as off track.
    pub off_track_cost: f64,
    /// s
    pub off_track_duration: f64,
    /// m/s
    pub stopped_speed: f64,
    /// s
    pub stopped_duration: f64,
}

impl Default for FailureCriteria {
    fn default() -> Self {
        Self {
            off_track_cost: 0.98,
            off_track_duration: 1.0,
            stopped_speed: 0.2,
            stopped_duration: 3.0,
        }
    }
}

/// Episode description as stored on disk. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Centerline JSON.
    pub track: PathBuf,
    /// Vehicle parameters used by the controller (and the plant unless overridden).
    #[serde(default)]
    pub vehicle: Option<PathBuf>,
    #[serde(default)]
    pub mppi: Option<PathBuf>,
    /// Separate plant parameters, for model-mismatch experiments.
    #[serde(default)]
    pub plant_vehicle: Option<PathBuf>,
    #[serde(default)]
    pub provider: ProviderSpec,
    /// m/s
    pub target_speed: f64,
    #[serde(default = "default_direction")]
    pub direction: Direction,
    #[serde(default = "default_laps")]
    pub laps: usize,
    #[serde(default)]
    pub seed: u64,
    /// s
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    #[serde(default)]
    pub failure: FailureCriteria,
    /// m/s
    #[serde(default = "default_initial_speed")]
    pub initial_speed: f64,
    /// World costmap resolution, m.
    #[serde(default = "default_resolution")]
    pub map_resolution: f64,
    /// Costmap margin around the track bounds, m.
    #[serde(default = "default_margin")]
    pub map_margin: f64,
}

fn default_direction() -> Direction {
    Direction::Ccw
}
fn default_laps() -> usize {
    10
}
fn default_time_limit() -> f64 {
    300.0
}
fn default_initial_speed() -> f64 {
    2.0
}
fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}
fn default_margin() -> f64 {
    2.0
}

impl EpisodeConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        crate::io::read_json(path)
    }

    /// Load every referenced file and build the world map.
    pub fn resolve(&self, base_dir: impl AsRef<Path>) -> Result<Scenario> {
        let base = base_dir.as_ref();
        let at = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let centerline = Centerline::from_json_file(at(&self.track))?;
        let vehicle = match &self.vehicle {
            Some(p) => VehicleParams::from_json_file(at(p))?,
            None => VehicleParams::default(),
        };
        let plant = match &self.plant_vehicle {
            Some(p) => VehicleParams::from_json_file(at(p))?,
            None => vehicle.clone(),
        };
        let mppi = match &self.mppi {
            Some(p) => MppiParams::from_json_file(at(p))?,
            None => MppiParams::default(),
        };
        let world_map = build_track_costmap(&centerline, self.map_resolution, self.map_margin)?;
        let scenario = Scenario {
            centerline,
            world_map: Arc::new(world_map),
            vehicle,
            plant,
            mppi,
            provider: self.provider.clone(),
            target_speed: self.target_speed,
            direction: self.direction,
            laps: self.laps,
            seed: self.seed,
            time_limit: self.time_limit,
            failure: self.failure,
            initial_speed: self.initial_speed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Fully resolved episode inputs.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Centerline in its stored (counter-clockwise) order.
    pub centerline: Centerline,
    pub world_map: Arc<CostMapGrid>,
    /// Controller model.
    pub vehicle: VehicleParams,
    pub plant: VehicleParams,
    pub mppi: MppiParams,
    pub provider: ProviderSpec,
    pub target_speed: f64,
    pub direction: Direction,
    pub laps: usize,
    pub seed: u64,
    pub time_limit: f64,
    pub failure: FailureCriteria,
    pub initial_speed: f64,
}

impl Scenario {
    /// The shipped oval with default vehicle, controller and oracle provider.
    pub fn oval_default() -> Result<Self> {
        let centerline = oval(&OvalSpec::default())?;
        let world_map = build_track_costmap(&centerline, DEFAULT_RESOLUTION, default_margin())?;
        Ok(Self {
            centerline,
            world_map: Arc::new(world_map),
            vehicle: VehicleParams::default(),
            plant: VehicleParams::default(),
            mppi: MppiParams::default(),
            provider: ProviderSpec::default(),
            target_speed: 5.0,
            direction: Direction::Ccw,
            laps: default_laps(),
            seed: 0,
            time_limit: default_time_limit(),
            failure: FailureCriteria::default(),
            initial_speed: default_initial_speed(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.laps == 0 {
            return Err(Error::Config("laps must be >= 1".into()));
        }
        if !(self.time_limit.is_finite() && self.time_limit > 0.0) {
            return Err(Error::Config(format!("time_limit must be > 0, got {}", self.time_limit)));
        }
        if !(self.target_speed.is_finite() && self.target_speed >= 0.0) {
            return Err(Error::Config(format!("target_speed must be >= 0, got {}", self.target_speed)));
        }
        if !self.initial_speed.is_finite() {
            return Err(Error::Config("initial_speed must be finite".into()));
        }
        self.centerline.validate()?;
        self.vehicle.validate()?;
        self.plant.validate()?;
        self.mppi.validate()?;
        self.provider.validate()
    }

    /// Centerline in driving order for the configured direction.
    pub fn driving_line(&self) -> Centerline {
        match self.direction {
            Direction::Ccw => self.centerline.clone(),
            Direction::Cw => self.centerline.reversed(),
        }
    }

    pub fn start_line(&self) -> StartLine {
        StartLine::for_centerline(&self.driving_line(), START_LINE_OVERHANG)
    }

    /// On the start line, on the centerline, heading along the track.
    pub fn initial_state(&self) -> VehicleState {
        let line = self.driving_line();
        let p = line.vertices[0];
        VehicleState {
            vx: self.initial_speed,
            ..VehicleState::at_rest(p[0], p[1], self.start_line().heading())
        }
    }
}

/// Forward crossing of the start line by the motion `prev -> cur`.
pub fn crosses_forward(prev: [f64; 2], cur: [f64; 2], line: &StartLine) -> bool {
    line.side(prev) < 0.0 && line.side(cur) >= 0.0 && segments_intersect(prev, cur, line.a, line.b)
}

/// Forward-crossing detector that ignores events within [`LAP_DEBOUNCE`] of
/// the previous one.
#[derive(Debug, Clone)]
pub struct LapDetector {
    line: StartLine,
    last_event: Option<f64>,
}

impl LapDetector {
    pub fn new(line: StartLine, last_event: Option<f64>) -> Self {
        Self { line, last_event }
    }

    /// Whether the motion `prev -> cur`, ending at time `t`, completes a lap.
    pub fn update(&mut self, prev: [f64; 2], cur: [f64; 2], t: f64) -> bool {
        if !crosses_forward(prev, cur, &self.line) {
            return false;
        }
        if let Some(last) = self.last_event {
            if t - last < LAP_DEBOUNCE {
                return false;
            }
        }
        self.last_event = Some(t);
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    OffTrack,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub cause: FailureCause,
    /// s
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Time of `state`, s.
    pub t: f64,
    pub state: VehicleState,
    pub control: Control,
    /// Age of the costmap frame used, s; `None` before the first frame.
    pub frame_age: Option<f64>,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub dt: f64,
    pub steps: Vec<StepRecord>,
    /// Times at which laps were completed, s.
    pub lap_events: Vec<f64>,
    pub failure: Option<FailureRecord>,
    pub lap_goal: usize,
    pub top_speed: f64,
}

/// Header of [`EpisodeLog::write_csv`].
pub const LOG_COLUMNS: [&str; 17] = [
    "t",
    "px",
    "py",
    "yaw",
    "roll",
    "vx",
    "vy",
    "yaw_rate",
    "speed",
    "steering",
    "throttle",
    "frame_age",
    "min_cost",
    "mean_cost",
    "effective_sample_size",
    "crash_fraction",
    "missing_frame",
];

impl EpisodeLog {
    /// Durations of the completed laps; the first lap starts at t = 0.
    pub fn lap_times(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.lap_events
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }

    pub fn laps(&self) -> usize {
        self.lap_events.len()
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none() && self.laps() >= self.lap_goal
    }

    pub fn avg_lap_time(&self) -> Option<f64> {
        let laps = self.lap_times();
        (!laps.is_empty()).then(|| laps.iter().sum::<f64>() / laps.len() as f64)
    }

    /// Simulated time covered by the log, s.
    pub fn duration(&self) -> f64 {
        self.steps.len() as f64 * self.dt
    }

    pub fn summary(&self) -> EpisodeSummary {
        EpisodeSummary {
            steps: self.steps.len(),
            duration: self.duration(),
            laps: self.laps(),
            lap_goal: self.lap_goal,
            lap_times: self.lap_times(),
            avg_lap_time: self.avg_lap_time(),
            top_speed: self.top_speed,
            failure: self.failure,
            completed: self.completed(),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(LOG_COLUMNS)?;
        for r in &self.steps {
            let s = &r.state;
            let d = &r.diagnostics;
            let mut row: Vec<String> = [
                r.t, s.px, s.py, s.yaw, s.roll, s.vx, s.vy, s.yaw_rate, s.speed(),
                r.control.steering, r.control.throttle,
            ]
            .iter()
            .map(|v| v.to_string())
            .collect();
            row.push(r.frame_age.map(|a| a.to_string()).unwrap_or_default());
            for v in [d.min_cost, d.mean_cost, d.effective_sample_size, d.crash_fraction] {
                row.push(v.to_string());
            }
            row.push((d.missing_frame as u8).to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, &self.summary())
    }
}

/// `(px, py, speed)` per row of a log written by [`EpisodeLog::write_csv`].
pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<[f64; 3]>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("log has no `{name}` column")))
    };
    let (ix, iy, is) = (col("px")?, col("py")?, col("speed")?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number `{}`: {e}", &rec[i])))
        };
        out.push([num(ix)?, num(iy)?, num(is)?]);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub steps: usize,
    pub duration: f64,
    pub laps: usize,
    pub lap_goal: usize,
    pub lap_times: Vec<f64>,
    pub avg_lap_time: Option<f64>,
    pub top_speed: f64,
    pub failure: Option<FailureRecord>,
    pub completed: bool,
}

pub fn run_episode(config: &EpisodeConfig, base_dir: impl AsRef<Path>) -> Result<EpisodeLog> {
    run_scenario(&config.resolve(base_dir)?)
}

/// Step plant and controller until the lap goal, a failure, or the time limit.
pub fn run_scenario(sc: &Scenario) -> Result<EpisodeLog> {
    sc.validate()?;
    let dt = sc.mppi.dt;
    let mut params = sc.mppi.clone();
    params.target_speed = sc.target_speed;
    let mut controller = MppiController::new(params, sc.vehicle.clone(), sc.seed)?;
    let mut provider = Provider::new(sc.provider.clone())?;
    let mut laps = LapDetector::new(sc.start_line(), Some(0.0));
    let world = sc.world_map.as_ref();
    let f = &sc.failure;

    let mut state = sc.initial_state();
    let mut steps = Vec::new();
    let mut lap_events = Vec::new();
    let mut failure = None;
    let mut off_since: Option<f64> = None;
    let mut stopped_since: Option<f64> = None;
    let mut top_speed: f64 = 0.0;

    let mut i: u64 = 0;
    loop {
        let t = i as f64 * dt;
        if t >= sc.time_limit - 1e-9 {
            break;
        }
        let frame = provider.provide(world, state.pose(), t)?;
        let frame_age = frame.map(|fr| t - fr.capture_time());
        let (control, diagnostics) = controller.control_step(&state, frame)?;
        steps.push(StepRecord {
            t,
            state,
            control,
            frame_age,
            diagnostics,
        });
        top_speed = top_speed.max(state.speed());

        let next = step(&state, control, &sc.plant, dt)?;
        let t_next = (i + 1) as f64 * dt;
        if laps.update([state.px, state.py], [next.px, next.py], t_next) {
            lap_events.push(t_next);
        }
        state = next;
        i += 1;

        let off = world.lookup(state.px, state.py) > f.off_track_cost;
        off_since = if off { off_since.or(Some(t_next)) } else { None };
        let stopped = state.speed() < f.stopped_speed;
        stopped_since = if stopped { stopped_since.or(Some(t_next)) } else { None };
        // the condition holds over [since, t_next]; it has lasted since the previous sample
        let held = |since: Option<f64>, need: f64| since.is_some_and(|s| t_next - s + dt >= need - 1e-9);
        if held(off_since, f.off_track_duration) {
            failure = Some(FailureRecord {
                cause: FailureCause::OffTrack,
                time: t_next,
            });
        } else if held(stopped_since, f.stopped_duration) {
            failure = Some(FailureRecord {
                cause: FailureCause::Stopped,
                time: t_next,
            });
        }
        if failure.is_some() || lap_events.len() >= sc.laps {
            break;
        }
    }
    Ok(EpisodeLog {
        dt,
        steps,
        lap_events,
        failure,
        lap_goal: sc.laps,
        top_speed,
    })
}

/// Seed for the sweep episode at `target` in `direction`.
pub fn sweep_seed(master: u64, target: f64, direction: Direction) -> u64 {
    splitmix64(master ^ splitmix64(target.to_bits() ^ direction as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub direction: Direction,
    pub target_speed: f64,
    /// `None` marks a failed row.
    pub avg_lap_time: Option<f64>,
    pub top_speed: f64,
    pub laps: usize,
    pub failure: Option<FailureRecord>,
    pub seed: u64,
}

/// One episode per (direction, target); rows in direction-major order.
pub fn speed_sweep(base: &Scenario, targets: &[f64], directions: &[Direction]) -> Result<Vec<SweepRow>> {
    if targets.is_empty() {
        return Err(Error::Config("speed sweep needs at least one target".into()));
    }
    if targets.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("sweep targets must be strictly ascending".into()));
    }
    let mut rows = Vec::new();
    for &direction in directions {
        for &target in targets {
            let seed = sweep_seed(base.seed, target, direction);
            let sc = Scenario {
                target_speed: target,
                direction,
                seed,
                ..base.clone()
            };
            let log = run_scenario(&sc)?;
            rows.push(SweepRow {
                method: sc.provider.label(),
                direction,
                target_speed: target,
                avg_lap_time: if log.completed() { log.avg_lap_time() } else { None },
                top_speed: log.top_speed,
                laps: log.laps(),
                failure: log.failure,
                seed,
            });
        }
    }
    Ok(rows)
}

/// Sweep table with columns `method,direction,target_speed,avg_lap,top_speed`.
pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "direction", "target_speed", "avg_lap", "top_speed"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.direction.to_string(),
            r.target_speed.to_string(),
            r.avg_lap_time.map(|v| format!("{v:.3}")).unwrap_or_else(|| "FAILURE".into()),
            format!("{:.3}", r.top_speed),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
