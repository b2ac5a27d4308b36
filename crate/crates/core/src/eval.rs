//! Costmap quality metrics: the track-cell L1 score, block-ablation
//! sensitivity maps, and calibration of corruption strength to a target score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autolabel::{edge_band_mask, extract_topdown_crop, CropSpec};
use crate::costmap::{Centerline, CostMapGrid};
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::perception::{corrupt_frame, CorruptionSpec, CostmapFrame};

/// Cells scored by [`score`]: track cells (cost < 1) of the ground truth, plus
/// an edge band of `edge_band` cells around them when given.
pub fn track_mask(truth: &CostMapGrid, edge_band: Option<usize>) -> Vec<bool> {
    let mut mask: Vec<bool> = truth.values().iter().map(|v| *v < 1.0).collect();
    if let Some(band) = edge_band {
        for (m, b) in mask.iter_mut().zip(edge_band_mask(truth, band)) {
            *m |= b;
        }
    }
    mask
}

/// `1 - mean |predicted - truth|` over masked cells, clamped to `[0, 1]`.
pub fn score(predicted: &CostMapGrid, truth: &CostMapGrid, mask: &[bool]) -> Result<f64> {
    if !predicted.same_shape(truth) {
        return Err(Error::ShapeMismatch(format!(
            "predicted {}x{} vs truth {}x{}",
            predicted.width(),
            predicted.height(),
            truth.width(),
            truth.height()
        )));
    }
    if mask.len() != truth.values().len() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} cells, grid has {}",
            mask.len(),
            truth.values().len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, t), m) in predicted.values().iter().zip(truth.values()).zip(mask) {
        if *m {
            sum += (p - t).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyTrackMask);
    }
    Ok((1.0 - sum / n as f64).clamp(0.0, 1.0))
}

/// [`score`] with the plain track mask of `truth`.
pub fn score_track(predicted: &CostMapGrid, truth: &CostMapGrid) -> Result<f64> {
    score(predicted, truth, &track_mask(truth, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSpec {
    /// Side of the square block, cells.
    pub block: usize,
    /// Placement stride, cells; `None` uses `block / 2` (at least 1).
    pub stride: Option<usize>,
    /// Fill value; `None` uses the mean of the input grid.
    pub fill: Option<f64>,
}

impl Default for AblationSpec {
    fn default() -> Self {
        Self {
            block: 10,
            stride: None,
            fill: None,
        }
    }
}

impl AblationSpec {
    pub fn effective_stride(&self) -> usize {
        self.stride.unwrap_or(self.block / 2).max(1)
    }
}

/// Scores indexed by block placement; entry `(i, j)` is the block whose
/// top-left cell is `(i * stride, j * stride)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub cols: usize,
    pub rows: usize,
    pub block: usize,
    pub stride: usize,
    pub fill: f64,
    pub baseline: f64,
    pub scores: Vec<f64>,
}

impl SensitivityMap {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.scores[row * self.cols + col]
    }

    /// Smallest and largest error (`1 - score`) across placements.
    pub fn error_range(&self) -> (f64, f64) {
        self.scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            let e = 1.0 - s;
            (lo.min(e), hi.max(e))
        })
    }

    /// As an image-frame grid with one cell per placement.
    pub fn to_grid(&self) -> Result<CostMapGrid> {
        CostMapGrid::new(
            self.cols,
            self.rows,
            1.0,
            Pose2::default(),
            crate::costmap::GridFrame::Image,
            self.scores.clone(),
        )
    }
}

fn placements(len: usize, block: usize, stride: usize) -> usize {
    (len - block) / stride + 1
}

/// Fill each block placement of `input` with the fill value, re-run the
/// predictor, and score its output against `truth` over `mask`.
pub fn ablate<P>(predictor: P, input: &CostMapGrid, truth: &CostMapGrid, mask: &[bool], spec: &AblationSpec) -> Result<SensitivityMap>
where
    P: Fn(&CostMapGrid) -> Result<CostMapGrid> + Sync,
{
    let (w, h) = (input.width(), input.height());
    let b = spec.block;
    if b == 0 || b >= w || b >= h {
        return Err(Error::InvalidParams(format!("block {b} must be in 1..min({w}, {h})")));
    }
    let stride = spec.effective_stride();
    let fill = spec.fill.unwrap_or_else(|| input.mean());
    let baseline = score(&predictor(input)?, truth, mask)?;
    let (cols, rows) = (placements(w, b, stride), placements(h, b, stride));
    let scores = (0..cols * rows)
        .into_par_iter()
        .map(|idx| {
            let (col, row) = ((idx % cols) * stride, (idx / cols) * stride);
            let mut values = input.values().to_vec();
            for r in row..row + b {
                values[r * w + col..r * w + col + b].fill(fill);
            }
            let placed = || -> Result<f64> {
                let out = predictor(&input.with_values(values)?)?;
                score(&out, truth, mask)
            };
            placed().map_err(|e| Error::Predictor {
                row,
                col,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityMap {
        cols,
        rows,
        block: b,
        stride,
        fill,
        baseline,
        scores,
    })
}

/// Errors rescaled to 8-bit: smallest error black, largest white. Constant
/// maps are all black.
pub fn normalize_sensitivity(map: &SensitivityMap) -> Vec<u8> {
    let (lo, hi) = map.error_range();
    let span = hi - lo;
    map.scores
        .iter()
        .map(|s| {
            if span > 0.0 {
                (((1.0 - s) - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect()
}

/// The corruption parameter varied during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionFamily {
    NoiseSigma,
    BlurSigma,
    DropoutProbability,
}

impl CorruptionFamily {
    /// Magnitude bracket searched by calibration.
    pub fn range(&self) -> (f64, f64) {
        match self {
            CorruptionFamily::NoiseSigma => (0.0, 2.0),
            CorruptionFamily::BlurSigma => (0.0, 40.0),
            CorruptionFamily::DropoutProbability => (0.0, 1.0),
        }
    }

    /// `base` with this family's parameter set to `magnitude`.
    pub fn with_magnitude(&self, base: &CorruptionSpec, magnitude: f64) -> CorruptionSpec {
        let mut spec = *base;
        match self {
            CorruptionFamily::NoiseSigma => spec.noise_sigma = magnitude,
            CorruptionFamily::BlurSigma => spec.blur_sigma = magnitude,
            CorruptionFamily::DropoutProbability => {
                spec.dropout_probability = magnitude;
                if spec.dropout_block == 0 {
                    spec.dropout_block = 8;
                }
            }
        }
        spec
    }
}

/// Ground-truth frames and their track masks for scoring corrupted providers.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    frames: Vec<CostmapFrame>,
    masks: Vec<Vec<bool>>,
}

impl CalibrationSet {
    pub fn new(world_map: &CostMapGrid, poses: &[Pose2], crop: &CropSpec) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::InvalidParams("calibration needs at least one pose".into()));
        }
        let frames = poses
            .iter()
            .map(|p| CostmapFrame::new(extract_topdown_crop(world_map, *p, crop)?, *p, 0.0))
            .collect::<Result<Vec<_>>>()?;
        let masks = frames.iter().map(|f| track_mask(f.grid(), None)).collect();
        Ok(Self { frames, masks })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Mean score of frames corrupted by `spec`; frame `i` uses noise stream `i`.
    pub fn mean_score(&self, spec: &CorruptionSpec) -> Result<f64> {
        let scores = self
            .frames
            .par_iter()
            .zip(&self.masks)
            .enumerate()
            .map(|(i, (f, m))| {
                let c = corrupt_frame(f, spec, i as u64)?;
                score(c.effective_grid(), f.grid(), m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

/// `n` poses spread along `line` by arc length, each displaced laterally by up
/// to `lateral` m and rotated by up to `yaw` rad, drawn from `seed`.
pub fn pose_set(line: &Centerline, n: usize, lateral: f64, yaw: f64, seed: u64) -> Vec<Pose2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let segs: Vec<_> = line.segments().collect();
    let total = line.length();
    let mut out = Vec::with_capacity(n);
    let (mut seg, mut walked) = (0usize, 0.0);
    for i in 0..n {
        let s = total * i as f64 / n as f64;
        loop {
            let (a, b) = segs[seg];
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if s <= walked + len || seg + 1 == segs.len() {
                let f = if len > 0.0 { ((s - walked) / len).clamp(0.0, 1.0) } else { 0.0 };
                let heading = (b[1] - a[1]).atan2(b[0] - a[0]);
                let d = lateral * rng.random_range(-1.0..=1.0);
                let (sn, cs) = heading.sin_cos();
                out.push(Pose2::new(
                    a[0] + f * (b[0] - a[0]) - sn * d,
                    a[1] + f * (b[1] - a[1]) + cs * d,
                    heading + yaw * rng.random_range(-1.0..=1.0),
                ));
                break;
            }
            walked += len;
            seg += 1;
        }
    }
    out
}

/// Outcome of [`calibrate_corruption`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub spec: CorruptionSpec,
    pub magnitude: f64,
    pub score: f64,
    pub evaluations: usize,
}

/// Bisect the family's magnitude until the mean score over `set` is within
/// `tolerance` of `target`.
pub fn calibrate_corruption(
    target: f64,
    family: CorruptionFamily,
    base: &CorruptionSpec,
    set: &CalibrationSet,
    tolerance: f64,
) -> Result<Calibration> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidParams(format!("target score must be in (0, 1], got {target}")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be > 0, got {tolerance}")));
    }
    let eval = |m: f64| -> Result<(CorruptionSpec, f64)> {
        let spec = family.with_magnitude(base, m);
        Ok((spec, set.mean_score(&spec)?))
    };
    let (mut lo, mut hi) = family.range();
    let (spec_lo, s_lo) = eval(lo)?;
    let mut evaluations = 1;
    if (s_lo - target).abs() <= tolerance {
        return Ok(Calibration {
            spec: spec_lo,
            magnitude: lo,
            score: s_lo,
            evaluations,
        });
    }
    let (_, s_hi) = eval(hi)?;
    evaluations += 1;
    if target > s_lo + tolerance || target < s_hi - tolerance {
        return Err(Error::Unreachable {
            target,
            low: s_hi,
            high: s_lo,
        });
    }
    // aim inside the band so the reported score is not on its edge
    let aim = tolerance / 2.0;
    let mut best = (f64::INFINITY, hi, spec_lo, s_hi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (spec, s) = eval(mid)?;
        evaluations += 1;
        let gap = (s - target).abs();
        if gap < best.0 {
            best = (gap, mid, spec, s);
        }
        if gap <= aim {
            break;
        }
        if s > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 > tolerance {
        return Err(Error::Unreachable {
            target,
            low: s_hi,
            high: s_lo,
        });
    }
    Ok(Calibration {
        spec: best.2,
        magnitude: best.1,
        score: best.3,
        evaluations,
    })
}
