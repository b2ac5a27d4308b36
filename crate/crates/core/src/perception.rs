//! Simulated costmap providers: a ground-truth oracle crop, corruption
//! wrappers, and a capture-rate/latency model. Frames stay in the body frame
//! of their capture pose and are queried by transforming world points through
//! that pose, so an old frame remains usable until a newer one arrives.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autolabel::{extract_topdown_crop, CropSpec};
use crate::costmap::{CostField, CostMapGrid, GridFrame, OUT_OF_MAP_COST};
use crate::error::{Error, Result};
use crate::geometry::{Affine2, Pose2};
use crate::mppi::splitmix64;

/// Tolerance on schedule comparisons, s.
const CLOCK_EPS: f64 = 1e-9;

/// Body-frame costmap captured at `capture_pose`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostmapFrame {
    grid: CostMapGrid,
    valid: Vec<bool>,
    /// `grid` with invalid cells replaced by [`OUT_OF_MAP_COST`]; what lookups see.
    effective: CostMapGrid,
    capture_pose: Pose2,
    capture_time: f64,
    world_to_cell: Affine2,
}

impl CostmapFrame {
    pub fn new(grid: CostMapGrid, capture_pose: Pose2, capture_time: f64) -> Result<Self> {
        let valid = vec![true; grid.values().len()];
        Self::with_mask(grid, valid, capture_pose, capture_time)
    }

    pub fn with_mask(grid: CostMapGrid, valid: Vec<bool>, capture_pose: Pose2, capture_time: f64) -> Result<Self> {
        if grid.frame() != GridFrame::Body {
            return Err(Error::InvalidGrid("costmap frames must be body-frame grids".into()));
        }
        if valid.len() != grid.values().len() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} cells, grid has {}",
                valid.len(),
                grid.values().len()
            )));
        }
        if !capture_pose.is_finite() || !capture_time.is_finite() {
            return Err(Error::InvalidParams("non-finite capture pose or time".into()));
        }
        let effective = grid.with_values(
            grid.values()
                .iter()
                .zip(&valid)
                .map(|(v, ok)| if *ok { *v } else { OUT_OF_MAP_COST })
                .collect(),
        )?;
        let world_to_cell = Affine2::world_to_body(capture_pose).then(&grid.cell_transform());
        Ok(Self {
            grid,
            valid,
            effective,
            capture_pose,
            capture_time,
            world_to_cell,
        })
    }

    pub fn grid(&self) -> &CostMapGrid {
        &self.grid
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    /// Values as lookups see them: invalid cells read as the maximum cost.
    pub fn effective_grid(&self) -> &CostMapGrid {
        &self.effective
    }

    pub fn capture_pose(&self) -> Pose2 {
        self.capture_pose
    }

    pub fn capture_time(&self) -> f64 {
        self.capture_time
    }

    pub fn invalid_fraction(&self) -> f64 {
        self.valid.iter().filter(|v| !**v).count() as f64 / self.valid.len() as f64
    }

    /// Bilinear lookup at a body-frame point of the capture pose.
    pub fn lookup_body(&self, x: f64, y: f64) -> f64 {
        self.effective.lookup(x, y)
    }

    fn replace(&self, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        Self::with_mask(self.grid.with_values(values)?, valid, self.capture_pose, self.capture_time)
    }
}

impl CostField for CostmapFrame {
    #[inline(always)]
    fn cost(&self, x: f64, y: f64) -> f64 {
        let [gx, gy] = self.world_to_cell.apply([x, y]);
        self.effective.sample_cell_coords(gx, gy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionSpec {
    /// Gaussian blur standard deviation, cells.
    pub blur_sigma: f64,
    /// Side of the square dropout blocks, cells.
    pub dropout_block: usize,
    pub dropout_probability: f64,
    /// Half-angle of the visible cone, rad; 0 disables the mask.
    pub fov_half_angle: f64,
    /// Body-x position of the cone apex, m.
    pub camera_offset: f64,
    /// Additive Gaussian noise, cost units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            blur_sigma: 0.0,
            dropout_block: 0,
            dropout_probability: 0.0,
            fov_half_angle: 0.0,
            camera_offset: 0.3,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.blur_sigma.is_finite()
            && self.blur_sigma >= 0.0
            && self.noise_sigma.is_finite()
            && self.noise_sigma >= 0.0
            && (0.0..=1.0).contains(&self.dropout_probability)
            && (0.0..=std::f64::consts::FRAC_PI_2).contains(&self.fov_half_angle)
            && self.camera_offset.is_finite();
        if !ok {
            return Err(Error::InvalidParams(format!("invalid corruption spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Exact crop of the world map.
    Oracle,
    /// Crop followed by the field-of-view mask and corruption settings.
    Corrupted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    /// Hz
    pub update_rate: f64,
    /// s
    pub latency: f64,
    pub corruption: CorruptionSpec,
    pub crop: CropSpec,
}

impl Default for ProviderSpec {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Oracle,
            update_rate: 40.0,
            latency: 0.0,
            corruption: CorruptionSpec::default(),
            crop: CropSpec::planning(),
        }
    }
}

impl ProviderSpec {
    /// Top-down pathway analog: exact crops at 40 Hz with one tick of latency.
    pub fn top_down_analog() -> Self {
        Self {
            latency: 0.025,
            ..Default::default()
        }
    }

    /// Image-plane pathway analog: crops limited to the camera cone, 10 Hz, 0.1 s late.
    pub fn image_plane_analog() -> Self {
        Self {
            kind: ProviderKind::Corrupted,
            update_rate: 10.0,
            latency: 0.1,
            corruption: CorruptionSpec {
                fov_half_angle: 0.55,
                ..Default::default()
            },
            crop: CropSpec::planning(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.update_rate.is_finite() && self.update_rate > 0.0) {
            return Err(Error::InvalidParams(format!("update_rate must be > 0, got {}", self.update_rate)));
        }
        if !(self.latency.is_finite() && self.latency >= 0.0) {
            return Err(Error::InvalidParams(format!("latency must be >= 0, got {}", self.latency)));
        }
        self.corruption.validate()?;
        self.crop.validate()
    }

    /// Short label used in sweep tables.
    pub fn label(&self) -> String {
        match self.kind {
            ProviderKind::Oracle => format!("oracle@{}Hz", self.update_rate),
            ProviderKind::Corrupted if self.corruption.fov_half_angle > 0.0 => {
                format!("fov@{}Hz", self.update_rate)
            }
            ProviderKind::Corrupted => format!("corrupted@{}Hz", self.update_rate),
        }
    }
}

/// Field-of-view mask (if enabled) then [`apply_corruption`], with the noise
/// stream of frame `index` derived from the corruption seed.
pub fn corrupt_frame(frame: &CostmapFrame, spec: &CorruptionSpec, index: u64) -> Result<CostmapFrame> {
    let masked = if spec.fov_half_angle > 0.0 {
        apply_fov_mask(frame, spec.fov_half_angle, spec.camera_offset)?
    } else {
        frame.clone()
    };
    let per_frame = CorruptionSpec {
        seed: splitmix64(spec.seed ^ splitmix64(index)),
        ..*spec
    };
    apply_corruption(&masked, &per_frame)
}

/// Invalidate cells outside the cone with apex `(camera_offset, 0)` opening
/// along body +x with the given half-angle.
pub fn apply_fov_mask(frame: &CostmapFrame, half_angle: f64, camera_offset: f64) -> Result<CostmapFrame> {
    if !(half_angle > 0.0 && half_angle <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParams(format!("half_angle must be in (0, pi/2], got {half_angle}")));
    }
    let g = frame.grid();
    let mut valid = frame.valid.clone();
    for row in 0..g.height() {
        for col in 0..g.width() {
            let [x, y] = g.cell_center(col, row);
            let inside = y.abs().atan2(x - camera_offset) <= half_angle;
            if !inside {
                valid[row * g.width() + col] = false;
            }
        }
    }
    frame.replace(g.values().to_vec(), valid)
}

/// Blur, then noise, then block dropout; each stage is skipped when its
/// magnitude is zero. Randomness is drawn from `spec.seed` only.
pub fn apply_corruption(frame: &CostmapFrame, spec: &CorruptionSpec) -> Result<CostmapFrame> {
    spec.validate()?;
    let g = frame.grid();
    let (w, h) = (g.width(), g.height());
    let mut values = g.values().to_vec();
    let mut valid = frame.valid.clone();
    if spec.blur_sigma > 0.0 {
        values = masked_gaussian_blur(&values, &valid, w, h, spec.blur_sigma);
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for (v, ok) in values.iter_mut().zip(&valid) {
            // one draw per cell, valid or not, keeps draws aligned across masks
            let z: f64 = rng.sample(StandardNormal);
            if *ok {
                *v = (*v + spec.noise_sigma * z).clamp(0.0, 1.0);
            }
        }
    }
    if spec.dropout_probability > 0.0 && spec.dropout_block > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ 0xD0D0));
        let b = spec.dropout_block;
        for r0 in (0..h).step_by(b) {
            for c0 in (0..w).step_by(b) {
                let u: f64 = rng.random();
                if u < spec.dropout_probability {
                    for r in r0..(r0 + b).min(h) {
                        for c in c0..(c0 + b).min(w) {
                            valid[r * w + c] = false;
                        }
                    }
                }
            }
        }
    }
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    frame.replace(values, valid)
}

/// Separable Gaussian truncated at 3 sigma and renormalized over the valid
/// cells of its support. Invalid cells keep their values.
fn masked_gaussian_blur(values: &[f64], valid: &[bool], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let weight = |ok: bool| if ok { 1.0 } else { 0.0 };
    // horizontal pass over weighted values and weights
    let mut num = vec![0.0; w * h];
    let mut den = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let (mut n, mut d) = (0.0, 0.0);
            for (k, kw) in kernel.iter().enumerate() {
                let cc = c as isize + k as isize - radius;
                if cc < 0 || cc >= w as isize {
                    continue;
                }
                let i = r * w + cc as usize;
                let m = weight(valid[i]);
                n += kw * m * values[i];
                d += kw * m;
            }
            num[r * w + c] = n;
            den[r * w + c] = d;
        }
    }
    let mut out = values.to_vec();
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !valid[i] {
                continue;
            }
            let (mut n, mut d) = (0.0, 0.0);
            for (k, kw) in kernel.iter().enumerate() {
                let rr = r as isize + k as isize - radius;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                let j = rr as usize * w + c;
                n += kw * num[j];
                d += kw * den[j];
            }
            // d > 0: the cell itself is valid
            out[i] = n / d;
        }
    }
    out
}

/// Stateful provider driven by the simulation clock.
#[derive(Debug, Clone)]
pub struct Provider {
    spec: ProviderSpec,
    next_tick: u64,
    pending: VecDeque<CostmapFrame>,
    current: Option<CostmapFrame>,
    last_now: f64,
}

impl Provider {
    pub fn new(spec: ProviderSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            next_tick: 0,
            pending: VecDeque::new(),
            current: None,
            last_now: f64::NEG_INFINITY,
        })
    }

    pub fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    fn tick_time(&self, k: u64) -> f64 {
        k as f64 / self.spec.update_rate
    }

    /// Build the frame captured at tick `k` from pose `pose`.
    pub fn capture(&self, world_map: &CostMapGrid, pose: Pose2, k: u64) -> Result<CostmapFrame> {
        let crop = extract_topdown_crop(world_map, pose, &self.spec.crop)?;
        let frame = CostmapFrame::new(crop, pose, self.tick_time(k))?;
        match self.spec.kind {
            ProviderKind::Oracle => Ok(frame),
            ProviderKind::Corrupted => corrupt_frame(&frame, &self.spec.corruption, k),
        }
    }

    /// Capture on any schedule tick that has come due, then return the newest
    /// delivered frame, or `None` before the first delivery.
    ///
    /// Ticks missed between calls are skipped; only the latest due tick is
    /// captured, using `true_pose` as the pose at capture.
    pub fn provide(&mut self, world_map: &CostMapGrid, true_pose: Pose2, now: f64) -> Result<Option<&CostmapFrame>> {
        if !(now >= self.last_now) {
            return Err(Error::InvalidParams(format!(
                "simulation clock went backwards: {} after {}",
                now, self.last_now
            )));
        }
        self.last_now = now;
        if self.tick_time(self.next_tick) <= now + CLOCK_EPS {
            let mut k = self.next_tick;
            while self.tick_time(k + 1) <= now + CLOCK_EPS {
                k += 1;
            }
            let frame = self.capture(world_map, true_pose, k)?;
            self.pending.push_back(frame);
            self.next_tick = k + 1;
        }
        while let Some(f) = self.pending.front() {
            if f.capture_time + self.spec.latency <= now + CLOCK_EPS {
                self.current = self.pending.pop_front();
            } else {
                break;
            }
        }
        Ok(self.current.as_ref())
    }
}
