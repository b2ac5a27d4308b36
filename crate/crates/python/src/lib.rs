//! Python bindings: tracks, costmaps, the vehicle model, the controller,
//! scoring and whole episodes.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use trackmppi::autolabel::{extract_topdown_crop, CropSpec};
use trackmppi::eval::{score_track, track_mask};
use trackmppi::harness::{run_episode as run_episode_core, EpisodeConfig};
use trackmppi::mppi::softmin_weights as softmin_core;
use trackmppi::track::{oval, OvalSpec};

fn err(e: trackmppi::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Centerline", module = "trackmppi_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCenterline(trackmppi::Centerline);

#[pymethods]
impl PyCenterline {
    #[staticmethod]
    #[pyo3(signature = (straight_length=18.0, radius=3.8, half_width=1.5, vertex_spacing=0.25))]
    fn oval(straight_length: f64, radius: f64, half_width: f64, vertex_spacing: f64) -> PyResult<Self> {
        let spec = OvalSpec {
            straight_length,
            radius,
            half_width,
            vertex_spacing,
        };
        oval(&spec).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_json(path: &str) -> PyResult<Self> {
        trackmppi::Centerline::from_json_file(path).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (vertices, half_width, closed=true))]
    fn from_vertices(vertices: Vec<[f64; 2]>, half_width: f64, closed: bool) -> PyResult<Self> {
        trackmppi::Centerline::new(vertices, closed, half_width).map(Self).map_err(err)
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 2]> {
        self.0.vertices.clone()
    }

    #[getter]
    fn half_width(&self) -> f64 {
        self.0.half_width
    }

    fn length(&self) -> f64 {
        self.0.length()
    }

    fn distance(&self, x: f64, y: f64) -> f64 {
        self.0.distance([x, y])
    }

    fn reversed(&self) -> Self {
        Self(self.0.reversed())
    }

    fn __len__(&self) -> usize {
        self.0.vertices.len()
    }
}

#[pyclass(name = "CostMap", module = "trackmppi_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCostMap(trackmppi::CostMapGrid);

#[pymethods]
impl PyCostMap {
    /// World costmap of a track.
    #[staticmethod]
    #[pyo3(signature = (centerline, resolution=0.0625, margin=2.0))]
    fn build(centerline: &PyCenterline, resolution: f64, margin: f64) -> PyResult<Self> {
        trackmppi::build_track_costmap(&centerline.0, resolution, margin)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        trackmppi::io::read_grid(path).map(Self).map_err(err)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        trackmppi::io::write_grid(path, &self.0).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn resolution(&self) -> f64 {
        self.0.resolution()
    }

    /// Bilinear cost at a point in the grid's frame.
    fn lookup(&self, x: f64, y: f64) -> f64 {
        self.0.lookup(x, y)
    }

    fn get(&self, col: usize, row: usize) -> PyResult<f64> {
        if col >= self.0.width() || row >= self.0.height() {
            return Err(PyValueError::new_err(format!("cell ({col}, {row}) outside the grid")));
        }
        Ok(self.0.get(col, row))
    }

    /// Row-major cell values.
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    /// Body-frame top-down crop at a world pose, default crop geometry.
    fn crop(&self, x: f64, y: f64, yaw: f64) -> PyResult<Self> {
        extract_topdown_crop(&self.0, trackmppi::Pose2 { x, y, yaw }, &CropSpec::default())
            .map(Self)
            .map_err(err)
    }
}

#[pyclass(name = "VehicleParams", module = "trackmppi_py", skip_from_py_object)]
#[derive(Clone)]
struct PyVehicleParams(trackmppi::VehicleParams);

#[pymethods]
impl PyVehicleParams {
    #[new]
    fn new() -> Self {
        Self(trackmppi::VehicleParams::default())
    }

    #[staticmethod]
    fn from_json(path: &str) -> PyResult<Self> {
        trackmppi::VehicleParams::from_json_file(path).map(Self).map_err(err)
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.0.mass
    }

    #[getter]
    fn wheelbase(&self) -> f64 {
        self.0.wheelbase
    }

    #[getter]
    fn max_speed(&self) -> f64 {
        self.0.max_speed
    }

    #[getter]
    fn max_steering_angle(&self) -> f64 {
        self.0.max_steering_angle
    }
}

#[pyclass(name = "VehicleState", module = "trackmppi_py", skip_from_py_object)]
#[derive(Clone)]
struct PyVehicleState(trackmppi::VehicleState);

#[pymethods]
impl PyVehicleState {
    #[new]
    #[pyo3(signature = (px=0.0, py=0.0, yaw=0.0, vx=0.0, vy=0.0, yaw_rate=0.0, roll=0.0))]
    fn new(px: f64, py: f64, yaw: f64, vx: f64, vy: f64, yaw_rate: f64, roll: f64) -> Self {
        Self(trackmppi::VehicleState {
            px,
            py,
            yaw,
            roll,
            vx,
            vy,
            yaw_rate,
        })
    }

    #[getter]
    fn px(&self) -> f64 {
        self.0.px
    }
    #[getter]
    fn py(&self) -> f64 {
        self.0.py
    }
    #[getter]
    fn yaw(&self) -> f64 {
        self.0.yaw
    }
    #[getter]
    fn roll(&self) -> f64 {
        self.0.roll
    }
    #[getter]
    fn vx(&self) -> f64 {
        self.0.vx
    }
    #[getter]
    fn vy(&self) -> f64 {
        self.0.vy
    }
    #[getter]
    fn yaw_rate(&self) -> f64 {
        self.0.yaw_rate
    }

    fn speed(&self) -> f64 {
        self.0.speed()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Advance the vehicle model by `dt` under a (steering, throttle) command.
#[pyfunction]
fn step(state: &PyVehicleState, steering: f64, throttle: f64, params: &PyVehicleParams, dt: f64) -> PyResult<PyVehicleState> {
    trackmppi::step(&state.0, trackmppi::Control { steering, throttle }, &params.0, dt)
        .map(PyVehicleState)
        .map_err(err)
}

#[pyclass(name = "Controller", module = "trackmppi_py")]
struct PyController(trackmppi::MppiController);

#[pymethods]
impl PyController {
    /// Defaults unless parameter files are given.
    #[new]
    #[pyo3(signature = (mppi=None, vehicle=None, seed=0))]
    fn new(mppi: Option<&str>, vehicle: Option<&str>, seed: u64) -> PyResult<Self> {
        let params = match mppi {
            Some(p) => trackmppi::MppiParams::from_json_file(p).map_err(err)?,
            None => trackmppi::MppiParams::default(),
        };
        let model = match vehicle {
            Some(p) => trackmppi::VehicleParams::from_json_file(p).map_err(err)?,
            None => trackmppi::VehicleParams::default(),
        };
        trackmppi::MppiController::new(params, model, seed).map(Self).map_err(err)
    }

    fn set_target_speed(&mut self, v: f64) {
        self.0.set_target_speed(v);
    }

    /// One control update against a world-frame costmap. Returns
    /// `(steering, throttle, diagnostics)`.
    fn step<'py>(
        &mut self,
        py: Python<'py>,
        state: &PyVehicleState,
        costmap: &PyCostMap,
    ) -> PyResult<(f64, f64, Bound<'py, PyDict>)> {
        let (u, d) = self.0.control_step(&state.0, Some(&costmap.0)).map_err(err)?;
        let diag = PyDict::new(py);
        diag.set_item("min_cost", d.min_cost)?;
        diag.set_item("mean_cost", d.mean_cost)?;
        diag.set_item("effective_sample_size", d.effective_sample_size)?;
        diag.set_item("crash_fraction", d.crash_fraction)?;
        Ok((u.steering, u.throttle, diag))
    }

    /// Current nominal plan as (steering, throttle) pairs.
    fn plan(&self) -> Vec<[f64; 2]> {
        self.0.plan().as_slice().iter().map(|c| c.as_array()).collect()
    }
}

/// Normalized exp(-(c - min) / lambda) weights.
#[pyfunction]
fn softmin_weights(costs: Vec<f64>, lam: f64) -> PyResult<Vec<f64>> {
    softmin_core(&costs, lam).map_err(err)
}

/// Accuracy of a predicted costmap against truth over on-track cells.
#[pyfunction]
#[pyo3(signature = (predicted, truth, edge_band=None))]
fn score(predicted: &PyCostMap, truth: &PyCostMap, edge_band: Option<usize>) -> PyResult<f64> {
    match edge_band {
        None => score_track(&predicted.0, &truth.0).map_err(err),
        Some(b) => {
            let mask = track_mask(&truth.0, Some(b));
            trackmppi::eval::score(&predicted.0, &truth.0, &mask).map_err(err)
        }
    }
}

/// Run an episode config file; returns its summary.
#[pyfunction]
fn run_episode<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let path = std::path::Path::new(config);
    let cfg = EpisodeConfig::from_json_file(path).map_err(err)?;
    let base = path.parent().unwrap_or(std::path::Path::new("."));
    let log = py.detach(|| run_episode_core(&cfg, base)).map_err(err)?;
    let s = log.summary();
    let out = PyDict::new(py);
    out.set_item("laps", s.laps)?;
    out.set_item("lap_goal", s.lap_goal)?;
    out.set_item("lap_times", s.lap_times)?;
    out.set_item("avg_lap_time", s.avg_lap_time)?;
    out.set_item("top_speed", s.top_speed)?;
    out.set_item("duration", s.duration)?;
    out.set_item("completed", s.completed)?;
    out.set_item("failure", s.failure.map(|f| format!("{:?}", f.cause)))?;
    Ok(out)
}

#[pymodule]
fn trackmppi_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCenterline>()?;
    m.add_class::<PyCostMap>()?;
    m.add_class::<PyVehicleParams>()?;
    m.add_class::<PyVehicleState>()?;
    m.add_class::<PyController>()?;
    m.add_function(wrap_pyfunction!(step, m)?)?;
    m.add_function(wrap_pyfunction!(softmin_weights, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    Ok(())
}
