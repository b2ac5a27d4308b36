//! Occupancy-grid style cost fields: storage, track construction from a
//! centerline, and bilinear lookup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Affine2, Pose2};

/// Cost returned for queries off the grid or in unknown cells.
pub const OUT_OF_MAP_COST: f64 = 1.0;

/// Default cell size; a 160 x 128 crop spans 10 m x 8 m.
pub const DEFAULT_RESOLUTION: f64 = 0.0625;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFrame {
    World,
    Body,
    /// Image-plane rasters (labels, sensitivity maps); lookups are not meaningful.
    Image,
}

/// Row-major scalar grid. Cell `(col, row)` has its center at
/// `origin ⊕ ((col + 0.5) * res, (row + 0.5) * res)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMapGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2,
    frame: GridFrame,
    values: Vec<f64>,
    to_cell: Affine2,
}

impl CostMapGrid {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2,
        frame: GridFrame,
        values: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGrid(format!("empty grid {width}x{height}")));
        }
        if width * height != values.len() {
            return Err(Error::InvalidGrid(format!(
                "{width}x{height} grid with {} values",
                values.len()
            )));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidGrid(format!("resolution must be > 0, got {resolution}")));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidGrid("non-finite origin".into()));
        }
        if frame != GridFrame::Image {
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidGrid(format!("cost {v} outside [0, 1]")));
            }
        } else if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite value".into()));
        }
        let to_cell = cell_transform(origin, resolution);
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            frame,
            values,
            to_cell,
        })
    }

    pub fn uniform(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2,
        frame: GridFrame,
        value: f64,
    ) -> Result<Self> {
        Self::new(width, height, resolution, origin, frame, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2 {
        self.origin
    }

    pub fn frame(&self) -> GridFrame {
        self.frame
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn same_shape(&self, other: &CostMapGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Same geometry, new values (validated).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, self.resolution, self.origin, self.frame, values)
    }

    /// Center of cell `(col, row)` in the grid's frame.
    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        let lx = (col as f64 + 0.5) * self.resolution;
        let ly = (row as f64 + 0.5) * self.resolution;
        let (s, c) = self.origin.yaw.sin_cos();
        [
            self.origin.x + c * lx - s * ly,
            self.origin.y + s * lx + c * ly,
        ]
    }

    /// Map from the grid's frame to continuous cell coordinates (cell centers at integers).
    pub fn cell_transform(&self) -> Affine2 {
        self.to_cell
    }

    /// Bilinear cost at `(x, y)` in the grid's frame; off-grid neighbors count as
    /// [`OUT_OF_MAP_COST`].
    #[inline(always)]
    pub fn lookup(&self, x: f64, y: f64) -> f64 {
        let [gx, gy] = self.to_cell.apply([x, y]);
        self.sample_cell_coords(gx, gy)
    }

    /// Bilinear interpolation at continuous cell coordinates.
    #[inline(always)]
    pub fn sample_cell_coords(&self, gx: f64, gy: f64) -> f64 {
        let w = self.width as f64;
        let h = self.height as f64;
        // also rejects NaN
        if !(gx > -1.0 && gx < w && gy > -1.0 && gy < h) {
            return OUT_OF_MAP_COST;
        }
        let i0 = floor_in_range(gx);
        let j0 = floor_in_range(gy);
        let tx = gx - i0 as f64;
        let ty = gy - j0 as f64;
        if i0 >= 0 && j0 >= 0 && (i0 as usize) + 1 < self.width && (j0 as usize) + 1 < self.height {
            let k = j0 as usize * self.width + i0 as usize;
            let row0 = &self.values[k..k + 2];
            let row1 = &self.values[k + self.width..k + self.width + 2];
            let a = row0[0] + tx * (row0[1] - row0[0]);
            let b = row1[0] + tx * (row1[1] - row1[0]);
            return a + ty * (b - a);
        }
        let v00 = self.value_or_out(i0, j0);
        let v10 = self.value_or_out(i0 + 1, j0);
        let v01 = self.value_or_out(i0, j0 + 1);
        let v11 = self.value_or_out(i0 + 1, j0 + 1);
        let a = v00 + tx * (v10 - v00);
        let b = v01 + tx * (v11 - v01);
        a + ty * (b - a)
    }

    #[inline(always)]
    fn value_or_out(&self, i: isize, j: isize) -> f64 {
        if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
            OUT_OF_MAP_COST
        } else {
            self.values[j as usize * self.width + i as usize]
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_grid(path, self)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        crate::io::read_grid(path)
    }
}

/// A scalar cost field queried in world coordinates.
/// `floor` for finite values well inside the `isize` range, without a libm call.
#[inline(always)]
fn floor_in_range(v: f64) -> isize {
    let t = v as isize;
    if t as f64 > v {
        t - 1
    } else {
        t
    }
}

pub trait CostField: Sync {
    fn cost(&self, x: f64, y: f64) -> f64;
}

/// Treats the grid's own frame as the query frame.
impl CostField for CostMapGrid {
    #[inline]
    fn cost(&self, x: f64, y: f64) -> f64 {
        self.lookup(x, y)
    }
}

fn cell_transform(origin: Pose2, resolution: f64) -> Affine2 {
    let local = Affine2::world_to_body(origin);
    let scale = Affine2 {
        m: [[1.0 / resolution, 0.0], [0.0, 1.0 / resolution]],
        t: [-0.5, -0.5],
    };
    local.then(&scale)
}

/// Track centerline polyline with a constant half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Centerline {
    pub vertices: Vec<[f64; 2]>,
    pub closed: bool,
    pub half_width: f64,
}

impl Centerline {
    pub fn new(vertices: Vec<[f64; 2]>, closed: bool, half_width: f64) -> Result<Self> {
        let c = Self {
            vertices,
            closed,
            half_width,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let need = if self.closed { 3 } else { 2 };
        if self.vertices.len() < need {
            return Err(Error::DegenerateCenterline(format!(
                "{} vertices, need at least {need}",
                self.vertices.len()
            )));
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::DegenerateCenterline(format!(
                "half_width must be > 0, got {}",
                self.half_width
            )));
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateCenterline("non-finite vertex".into()));
        }
        for (i, (a, b)) in self.segments().enumerate() {
            if a == b {
                return Err(Error::DegenerateCenterline(format!(
                    "repeated vertex at index {i}"
                )));
            }
        }
        Ok(())
    }

    /// Consecutive vertex pairs, including the closing segment when closed.
    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Distance to the nearest point of the polyline.
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn length(&self) -> f64 {
        self.segments()
            .map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1]))
            .sum()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Same path traversed in the opposite direction, keeping vertex 0 first.
    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        if self.closed {
            vertices[1..].reverse();
        } else {
            vertices.reverse();
        }
        Self {
            vertices,
            closed: self.closed,
            half_width: self.half_width,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let c: Self = crate::io::read_json(path)?;
        c.validate()?;
        Ok(c)
    }
}

/// Cost of a point at distance `d` from the centerline.
#[inline]
pub fn track_cost_at_distance(d: f64, half_width: f64) -> f64 {
    (d / half_width).min(1.0)
}

/// World-frame cost grid covering the centerline's bounding box plus `margin`;
/// each cell holds `min(1, d / half_width)` at its center.
pub fn build_track_costmap(centerline: &Centerline, resolution: f64, margin: f64) -> Result<CostMapGrid> {
    centerline.validate()?;
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::InvalidGrid(format!("resolution must be > 0, got {resolution}")));
    }
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::InvalidGrid(format!("margin must be >= 0, got {margin}")));
    }
    let (lo, hi) = centerline.bounds();
    let origin = Pose2::new(lo[0] - margin, lo[1] - margin, 0.0);
    let width = (((hi[0] - lo[0]) + 2.0 * margin) / resolution).ceil().max(1.0) as usize;
    let height = (((hi[1] - lo[1]) + 2.0 * margin) / resolution).ceil().max(1.0) as usize;

    let segments: Vec<_> = centerline.segments().collect();
    let hw = centerline.half_width;
    // Cells farther than half_width from a segment's box cannot change the answer
    // once the running minimum saturates; a per-row prefilter keeps this cheap.
    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        let y = origin.y + (row as f64 + 0.5) * resolution;
        let near: Vec<_> = segments
            .iter()
            .filter(|(a, b)| y >= a[1].min(b[1]) - hw && y <= a[1].max(b[1]) + hw)
            .collect();
        for col in 0..width {
            let x = origin.x + (col as f64 + 0.5) * resolution;
            let mut d = hw;
            for (a, b) in &near {
                if x < a[0].min(b[0]) - d || x > a[0].max(b[0]) + d {
                    continue;
                }
                d = d.min(point_segment_distance([x, y], *a, *b));
            }
            values.push(track_cost_at_distance(d, hw));
        }
    }
    CostMapGrid::new(width, height, resolution, origin, GridFrame::World, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn straight(half_width: f64) -> Centerline {
        Centerline::new(vec![[0.0, 0.0], [10.0, 0.0]], false, half_width).unwrap()
    }

    #[test]
    fn degenerate_centerlines_rejected() {
        assert!(Centerline::new(vec![[0.0, 0.0]], false, 1.0).is_err());
        assert!(Centerline::new(vec![[0.0, 0.0], [1.0, 0.0]], true, 1.0).is_err());
        assert!(Centerline::new(vec![[0.0, 0.0], [0.0, 0.0]], false, 1.0).is_err());
        assert!(Centerline::new(vec![[0.0, 0.0], [1.0, 0.0]], false, 0.0).is_err());
        let bad = Centerline {
            vertices: vec![[0.0, 0.0]],
            closed: false,
            half_width: 1.0,
        };
        assert!(build_track_costmap(&bad, 0.1, 1.0).is_err());
    }

    #[test]
    fn ramp_profile() {
        let grid = build_track_costmap(&straight(2.0), 0.5, 3.0).unwrap();
        // cell centers sit at odd multiples of 0.25 from the origin (-3, -3)
        assert_eq!(grid.origin(), Pose2::new(-3.0, -3.0, 0.0));
        assert_eq!(grid.width(), 32);
        assert_eq!(grid.height(), 12);
        let on_line = grid.lookup(5.0, 0.0);
        // centers at y = ±0.25 straddle the line
        assert!((on_line - 0.125).abs() < 1e-12);
        // y = 1.25 center: 1.25/2
        let c = grid.cell_center(16, 8);
        assert!((c[1] - 1.25).abs() < 1e-12);
        assert!((grid.get(16, 8) - 0.625).abs() < 1e-12);
    }

    #[test]
    fn on_centerline_and_edge() {
        // resolution 1 with origin chosen so that centers land on y = 0 and y = 2
        let line = Centerline::new(vec![[0.5, 0.0], [9.5, 0.0]], false, 2.0).unwrap();
        let grid = build_track_costmap(&line, 1.0, 2.5).unwrap();
        let row_on = (0..grid.height())
            .find(|&r| grid.cell_center(3, r)[1].abs() < 1e-12)
            .unwrap();
        assert_eq!(grid.get(3, row_on), 0.0);
        let row_edge = (0..grid.height())
            .find(|&r| (grid.cell_center(3, r)[1] - 2.0).abs() < 1e-12)
            .unwrap();
        assert_eq!(grid.get(3, row_edge), 1.0);
        assert_eq!(track_cost_at_distance(2.0, 2.0), 1.0);
        assert_eq!(track_cost_at_distance(0.0, 2.0), 0.0);
    }

    /// Brute-force nearest-segment oracle on a straight open centerline.
    #[test]
    fn lateral_offset_half_cost() {
        let line = straight(2.0);
        let p = [4.0, 1.0];
        let brute = line
            .segments()
            .map(|(a, b)| {
                // dense sampling of the segment
                (0..=10_000)
                    .map(|i| {
                        let t = i as f64 / 10_000.0;
                        let q = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                        (q[0] - p[0]).hypot(q[1] - p[1])
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((brute - 1.0).abs() < 1e-9);
        assert_eq!(track_cost_at_distance(line.distance(p), line.half_width), 0.5);

        let grid = build_track_costmap(&line, 0.25, 2.5).unwrap();
        for (col, row) in [(5usize, 3usize), (17, 10), (30, 14), (45, 19)] {
            let c = grid.cell_center(col, row);
            let want = track_cost_at_distance(line.distance(c), 2.0);
            assert!((grid.get(col, row) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn lookup_exact_center_and_bilinear_mean() {
        let grid = CostMapGrid::new(
            2,
            2,
            1.0,
            Pose2::default(),
            GridFrame::World,
            vec![0.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        assert_eq!(grid.lookup(0.5, 0.5), 0.0);
        assert_eq!(grid.lookup(0.5, 1.5), 1.0);
        assert_eq!(grid.lookup(1.0, 1.0), 0.5);
        assert_eq!(grid.lookup(-1.0, 0.5), OUT_OF_MAP_COST);
        assert_eq!(grid.lookup(0.5, 3.0), OUT_OF_MAP_COST);
        assert_eq!(grid.lookup(f64::NAN, 0.5), OUT_OF_MAP_COST);
    }

    #[test]
    fn rotated_origin_lookup() {
        let origin = Pose2::new(1.0, 1.0, std::f64::consts::FRAC_PI_2);
        let values: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let grid = CostMapGrid::new(4, 3, 0.5, origin, GridFrame::Body, values).unwrap();
        for row in 0..3 {
            for col in 0..4 {
                let c = grid.cell_center(col, row);
                assert!((grid.lookup(c[0], c[1]) - grid.get(col, row)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(CostMapGrid::new(2, 2, 1.0, Pose2::default(), GridFrame::World, vec![0.0; 3]).is_err());
        assert!(CostMapGrid::new(2, 2, 0.0, Pose2::default(), GridFrame::World, vec![0.0; 4]).is_err());
        assert!(CostMapGrid::new(1, 1, 1.0, Pose2::default(), GridFrame::World, vec![1.5]).is_err());
        CostMapGrid::new(1, 1, 1.0, Pose2::default(), GridFrame::Image, vec![-1.0]).unwrap();
    }

    #[test]
    fn reversed_keeps_start() {
        let c = Centerline::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], true, 0.5).unwrap();
        let r = c.reversed();
        assert_eq!(r.vertices, vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]);
        assert!((r.length() - c.length()).abs() < 1e-12);
    }

    fn random_grid(w: usize, h: usize, seed: u64) -> CostMapGrid {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = (0..w * h).map(|_| rng.random::<f64>()).collect();
        CostMapGrid::new(w, h, 0.3, Pose2::new(-1.0, 2.0, 0.4), GridFrame::World, values).unwrap()
    }

    proptest! {
        #[test]
        fn lookup_is_convex_combination(gx in -2.0..12.0f64, gy in -2.0..9.0f64, seed in 0u64..50) {
            let grid = random_grid(10, 7, seed);
            let v = grid.sample_cell_coords(gx, gy);
            prop_assert!((0.0..=1.0).contains(&v));
            if gx > -1.0 && gx < 10.0 && gy > -1.0 && gy < 7.0 {
                let i = gx.floor() as isize;
                let j = gy.floor() as isize;
                let n = [grid.value_or_out(i, j), grid.value_or_out(i + 1, j),
                         grid.value_or_out(i, j + 1), grid.value_or_out(i + 1, j + 1)];
                let lo = n.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = n.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
            }
        }

        #[test]
        fn lookup_is_continuous(x in -3.0..4.0f64, y in -1.0..6.0f64, seed in 0u64..50,
                                dx in -1.0..1.0f64, dy in -1.0..1.0f64) {
            let grid = random_grid(10, 7, seed);
            let a = grid.lookup(x, y);
            let b = grid.lookup(x + 1e-9 * dx, y + 1e-9 * dy);
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    /// Rigid motion of centerline and query together leaves the cost unchanged,
    /// up to one cell of discretization.
    #[test]
    fn track_cost_rigid_invariance() {
        use crate::geometry::{transform_point, TransformDirection};
        let base = Centerline::new(
            vec![[0.0, 0.0], [4.0, 0.0], [6.0, 2.0], [4.0, 4.0], [0.0, 3.0]],
            true,
            1.0,
        )
        .unwrap();
        let res = 0.05;
        let g0 = build_track_costmap(&base, res, 1.5).unwrap();
        let motion = Pose2::new(3.0, -7.0, 0.83);
        let moved = Centerline::new(
            base.vertices
                .iter()
                .map(|&v| transform_point(motion, v, TransformDirection::BodyToWorld))
                .collect(),
            true,
            1.0,
        )
        .unwrap();
        let g1 = build_track_costmap(&moved, res, 1.5).unwrap();
        let tol = res / base.half_width;
        for i in 0..200 {
            let t = i as f64 / 200.0;
            let q = [-0.5 + 7.0 * t, 4.5 * (t * 17.0).sin().abs() - 0.5];
            let qm = transform_point(motion, q, TransformDirection::BodyToWorld);
            let (a, b) = (g0.lookup(q[0], q[1]), g1.lookup(qm[0], qm[1]));
            assert!((a - b).abs() <= tol, "{q:?}: {a} vs {b}");
        }
    }
}
