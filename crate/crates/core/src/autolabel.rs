//! Ground-truth generation: ground-plane homographies, top-down crops in the
//! vehicle frame, image-plane label rendering, and dataset emission.
//!
//! Camera frame convention: x right, y down, z along the optical axis.
//! Pixel centers sit at integer coordinates.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmap::{CostMapGrid, GridFrame, DEFAULT_RESOLUTION};
use crate::error::{Error, Result};
use crate::geometry::{Affine2, Pose2};

/// Label value for pixels with no ground intersection.
pub const NO_LABEL: f64 = -1.0;

/// Width of the band around the track edge marked in dataset masks, in cells.
pub const EDGE_BAND_CELLS: usize = 10;

/// Rigid transform mapping local coordinates into the parent frame: `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose3 {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Default for Pose3 {
    fn default() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }
}

impl Pose3 {
    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        let p = Self {
            rotation,
            translation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.rot();
        let residual = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det_err = (r.determinant() - 1.0).abs();
        let worst = residual.max(det_err);
        if !(worst <= 1e-9) || self.translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonOrthonormalRotation(worst));
        }
        Ok(())
    }

    /// Unit quaternion (w, x, y, z) plus translation.
    pub fn from_quaternion(q: [f64; 4], translation: [f64; 3]) -> Result<Self> {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NonOrthonormalRotation(f64::INFINITY));
        }
        let [w, x, y, z] = q.map(|v| v / n);
        let rotation = [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ];
        Self::new(rotation, translation)
    }

    /// Planar pose with the vehicle on the ground plane.
    pub fn from_pose2(p: Pose2, z: f64) -> Self {
        let (s, c) = p.yaw.sin_cos();
        Self {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation: [p.x, p.y, z],
        }
    }

    /// Projection onto the ground plane: position and heading of the body x axis.
    pub fn to_pose2(&self) -> Pose2 {
        let r = &self.rotation;
        Pose2::new(self.translation[0], self.translation[1], r[1][0].atan2(r[0][0]))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot().transpose();
        let t = -(rt * Vector3::from(self.translation));
        Self {
            rotation: to_array3(&rt),
            translation: [t.x, t.y, t.z],
        }
    }

    /// `self ∘ other`: apply `other`, then `self`.
    pub fn compose(&self, other: &Pose3) -> Self {
        let r = self.rot() * other.rot();
        let t = self.rot() * Vector3::from(other.translation) + Vector3::from(self.translation);
        Self {
            rotation: to_array3(&r),
            translation: [t.x, t.y, t.z],
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rot() * Vector3::from(p) + Vector3::from(self.translation);
        [v.x, v.y, v.z]
    }

    fn rot(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }
}

fn to_array3(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

/// Pinhole intrinsics plus the vehicle-to-camera extrinsic transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Maps vehicle-frame points into the camera frame.
    pub camera_from_vehicle: Pose3,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::forward_looking(250.0, 320, 256, [0.3, 0.0, 0.45], 0.25)
    }
}

impl CameraModel {
    /// Camera at `position` (vehicle frame) looking along +x, pitched down by `pitch`.
    pub fn forward_looking(focal: f64, width: usize, height: usize, position: [f64; 3], pitch: f64) -> Self {
        let (sp, cp) = pitch.sin_cos();
        // rows: camera x (right), y (down), z (optical axis) in vehicle coordinates
        let r = [[0.0, -1.0, 0.0], [-sp, 0.0, -cp], [cp, 0.0, -sp]];
        let rm = Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]);
        let t = -(rm * Vector3::from(position));
        Self {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            camera_from_vehicle: Pose3 {
                rotation: r,
                translation: [t.x, t.y, t.z],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidParams("focal lengths must be > 0".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParams("image size must be non-zero".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidParams(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        self.camera_from_vehicle.validate()
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Full 3x4 world-to-pixel projection and its ground-plane (z = 0) reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundHomography {
    pub h: Matrix3x4<f64>,
    pub h_hat: Matrix3<f64>,
    pub image_width: usize,
    pub image_height: usize,
}

/// Drop the z column of a 3x4 projection.
pub fn reduce_projection(h: &Matrix3x4<f64>) -> Matrix3<f64> {
    Matrix3::from_columns(&[h.column(0).into_owned(), h.column(1).into_owned(), h.column(3).into_owned()])
}

/// `H = K [I | 0] T_camera<-vehicle T_vehicle<-world`, reduced to the ground plane.
pub fn compose_homography(camera: &CameraModel, world_from_car: &Pose3) -> Result<GroundHomography> {
    camera.validate()?;
    world_from_car.validate()?;
    let camera_from_world = camera.camera_from_vehicle.compose(&world_from_car.inverse());
    let mut extrinsic = Matrix3x4::zeros();
    for r in 0..3 {
        for c in 0..3 {
            extrinsic[(r, c)] = camera_from_world.rotation[r][c];
        }
        extrinsic[(r, 3)] = camera_from_world.translation[r];
    }
    let h = camera.intrinsics() * extrinsic;
    Ok(GroundHomography {
        h_hat: reduce_projection(&h),
        h,
        image_width: camera.width,
        image_height: camera.height,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: [f64; 2],
    /// Homogeneous depth; positive in front of the camera.
    pub w: f64,
    pub valid: bool,
}

impl GroundHomography {
    /// Pixel of ground point `p`; invalid behind the camera or off the image.
    pub fn project(&self, p: [f64; 2]) -> Projection {
        let q = self.h_hat * Vector3::new(p[0], p[1], 1.0);
        let pixel = [q.x / q.z, q.y / q.z];
        let on_image = pixel[0] >= 0.0
            && pixel[0] <= (self.image_width - 1) as f64
            && pixel[1] >= 0.0
            && pixel[1] <= (self.image_height - 1) as f64;
        Projection {
            pixel,
            w: q.z,
            valid: q.z > 0.0 && on_image,
        }
    }

    pub fn inverse_reduced(&self) -> Result<Matrix3<f64>> {
        let det = self.h_hat.determinant();
        if !(det.is_finite() && det.abs() > 1e-300) {
            return Err(Error::SingularHomography);
        }
        self.h_hat.try_inverse().ok_or(Error::SingularHomography)
    }
}

pub fn project_ground_point(h: &GroundHomography, p_world: [f64; 2]) -> Projection {
    h.project(p_world)
}

/// Ground point seen at `pixel`, or `None` at/above the horizon.
pub fn unproject_pixel(h_hat_inv: &Matrix3<f64>, pixel: [f64; 2]) -> Option<[f64; 2]> {
    let g = h_hat_inv * Vector3::new(pixel[0], pixel[1], 1.0);
    // the forward depth of the recovered point is 1 / g.z
    if g.z > 0.0 && g.z.is_finite() {
        Some([g.x / g.z, g.y / g.z])
    } else {
        None
    }
}

/// Layout of the body-frame crop in front of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropSpec {
    pub lateral_cells: usize,
    pub longitudinal_cells: usize,
    pub resolution: f64,
    /// Distance the crop extends behind the vehicle, m.
    pub rear_extent: f64,
}

impl Default for CropSpec {
    fn default() -> Self {
        Self {
            lateral_cells: 160,
            longitudinal_cells: 128,
            resolution: DEFAULT_RESOLUTION,
            rear_extent: 1.0,
        }
    }
}

impl CropSpec {
    /// Planning crop for simulated providers: same width and cell size, 14 m
    /// long so a 1.5 s horizon at 8 m/s stays on the grid.
    pub fn planning() -> Self {
        Self {
            longitudinal_cells: 224,
            ..Self::default()
        }
    }

    /// Grid origin in the body frame; grid x is body forward, grid y body left.
    pub fn origin(&self) -> Pose2 {
        Pose2::new(
            -self.rear_extent,
            -(self.lateral_cells as f64) * self.resolution / 2.0,
            0.0,
        )
    }

    pub fn forward_extent(&self) -> f64 {
        self.longitudinal_cells as f64 * self.resolution - self.rear_extent
    }

    pub fn validate(&self) -> Result<()> {
        if self.lateral_cells == 0 || self.longitudinal_cells == 0 {
            return Err(Error::InvalidParams("crop must have cells".into()));
        }
        if !(self.resolution > 0.0 && self.rear_extent.is_finite()) {
            return Err(Error::InvalidParams("bad crop resolution or extent".into()));
        }
        Ok(())
    }
}

/// Body-frame crop: each cell holds the world cost at its center.
pub fn extract_topdown_crop(world_map: &CostMapGrid, vehicle_pose: Pose2, crop: &CropSpec) -> Result<CostMapGrid> {
    crop.validate()?;
    let origin = crop.origin();
    let width = crop.longitudinal_cells;
    let height = crop.lateral_cells;
    let to_cell = Affine2::body_to_world(vehicle_pose).then(&world_map.cell_transform());
    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        let by = origin.y + (row as f64 + 0.5) * crop.resolution;
        for col in 0..width {
            let bx = origin.x + (col as f64 + 0.5) * crop.resolution;
            let [gx, gy] = to_cell.apply([bx, by]);
            values.push(world_map.sample_cell_coords(gx, gy));
        }
    }
    CostMapGrid::new(width, height, crop.resolution, origin, GridFrame::Body, values)
}

/// Image-plane label raster; `NO_LABEL` where the pixel ray misses the ground.
pub fn render_image_plane_labels(
    world_map: &CostMapGrid,
    h: &GroundHomography,
    width: usize,
    height: usize,
) -> Result<CostMapGrid> {
    let inv = h.inverse_reduced()?;
    let values = (0..height)
        .into_par_iter()
        .flat_map_iter(|v| {
            let inv = &inv;
            (0..width).map(move |u| match unproject_pixel(inv, [u as f64, v as f64]) {
                Some(g) => world_map.lookup(g[0], g[1]),
                None => NO_LABEL,
            })
        })
        .collect();
    CostMapGrid::new(width, height, 1.0, Pose2::default(), GridFrame::Image, values)
}

/// Cells within `band` cells (Euclidean) of the track edge, where the track is
/// every cell with cost below 1.
pub fn edge_band_mask(grid: &CostMapGrid, band: usize) -> Vec<bool> {
    let (w, h) = (grid.width(), grid.height());
    let track = |c: usize, r: usize| grid.get(c, r) < 1.0;
    let mut mask = vec![false; w * h];
    let b = band as isize;
    let offsets: Vec<(isize, isize)> = (-b..=b)
        .flat_map(|dy| (-b..=b).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= b * b)
        .collect();
    for r in 0..h {
        for c in 0..w {
            if !track(c, r) {
                continue;
            }
            let edge = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)].iter().any(|(dx, dy)| {
                let (nc, nr) = (c as isize + dx, r as isize + dy);
                nc >= 0 && nr >= 0 && (nc as usize) < w && (nr as usize) < h && !track(nc as usize, nr as usize)
            });
            if !edge {
                continue;
            }
            for (dx, dy) in &offsets {
                let (nc, nr) = (c as isize + dx, r as isize + dy);
                if nc >= 0 && nr >= 0 && (nc as usize) < w && (nr as usize) < h {
                    mask[nr as usize * w + nc as usize] = true;
                }
            }
        }
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose3,
}

#[derive(Debug, Deserialize, Serialize)]
struct PoseRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

/// Pose log CSV with header `t,x,y,z,qw,qx,qy,qz`.
pub fn read_pose_log(path: impl AsRef<Path>) -> Result<Vec<TimedPose>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    reader
        .deserialize::<PoseRow>()
        .map(|row| {
            let r = row?;
            Ok(TimedPose {
                t: r.t,
                pose: Pose3::from_quaternion([r.qw, r.qx, r.qy, r.qz], [r.x, r.y, r.z])?,
            })
        })
        .collect()
}

pub fn write_pose_log(path: impl AsRef<Path>, poses: &[TimedPose]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for p in poses {
        let q = rotation_to_quaternion(&p.pose.rotation);
        writer.serialize(PoseRow {
            t: p.t,
            x: p.pose.translation[0],
            y: p.pose.translation[1],
            z: p.pose.translation[2],
            qw: q[0],
            qx: q[1],
            qy: q[2],
            qz: q[3],
        })?;
    }
    writer.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

fn rotation_to_quaternion(r: &[[f64; 3]; 3]) -> [f64; 4] {
    let trace = r[0][0] + r[1][1] + r[2][2];
    if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        [0.25 * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s]
    } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
        let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
        [(r[2][1] - r[1][2]) / s, 0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s]
    } else if r[1][1] > r[2][2] {
        let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
        [(r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s]
    } else {
        let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
        [(r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s]
    }
}

/// Sidecar metadata written next to each emitted sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub index: usize,
    pub timestamp: f64,
    pub pose: Pose3,
    pub ground_pose: Pose2,
    /// Row-major 3x4 projection.
    pub homography: [[f64; 4]; 3],
    /// Row-major 3x3 ground-plane projection.
    pub homography_reduced: [[f64; 3]; 3],
    pub topdown: String,
    pub topdown_edge_mask: String,
    pub image_labels: String,
    pub edge_band_cells: usize,
    pub no_label_value: f64,
}

/// Write one top-down crop, edge-band mask, image-plane label raster and
/// sidecar per pose; returns the number of samples written.
pub fn emit_dataset(
    pose_log: &[TimedPose],
    world_map: &CostMapGrid,
    camera: &CameraModel,
    crop: &CropSpec,
    out_dir: impl AsRef<Path>,
) -> Result<usize> {
    if pose_log.is_empty() {
        return Ok(0);
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    pose_log
        .par_iter()
        .enumerate()
        .map(|(i, tp)| emit_sample(i, tp, world_map, camera, crop, out_dir))
        .collect::<Result<Vec<()>>>()?;
    Ok(pose_log.len())
}

fn emit_sample(
    index: usize,
    tp: &TimedPose,
    world_map: &CostMapGrid,
    camera: &CameraModel,
    crop: &CropSpec,
    out_dir: &Path,
) -> Result<()> {
    let ground = tp.pose.to_pose2();
    let topdown = extract_topdown_crop(world_map, ground, crop)?;
    let mask: Vec<f64> = edge_band_mask(&topdown, EDGE_BAND_CELLS)
        .into_iter()
        .map(|m| if m { 1.0 } else { 0.0 })
        .collect();
    let mask_grid = topdown.with_values(mask)?;
    let h = compose_homography(camera, &tp.pose)?;
    let labels = render_image_plane_labels(world_map, &h, camera.width, camera.height)?;

    let stem = format!("{index:06}");
    let names = (
        format!("{stem}_topdown.json"),
        format!("{stem}_topdown_mask.json"),
        format!("{stem}_image.json"),
    );
    topdown.write(out_dir.join(&names.0))?;
    mask_grid.write(out_dir.join(&names.1))?;
    labels.write(out_dir.join(&names.2))?;

    let mut homography = [[0.0; 4]; 3];
    let mut homography_reduced = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..4 {
            homography[r][c] = h.h[(r, c)];
        }
        for c in 0..3 {
            homography_reduced[r][c] = h.h_hat[(r, c)];
        }
    }
    let sidecar = SampleSidecar {
        index,
        timestamp: tp.t,
        pose: tp.pose,
        ground_pose: ground,
        homography,
        homography_reduced,
        topdown: names.0,
        topdown_edge_mask: names.1,
        image_labels: names.2,
        edge_band_cells: EDGE_BAND_CELLS,
        no_label_value: NO_LABEL,
    };
    crate::io::write_json(out_dir.join(format!("{stem}_meta.json")), &sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    /// Camera `height` above the vehicle origin looking straight down.
    fn down_camera(height: f64) -> CameraModel {
        // rows: camera x = +x, camera y = -y, camera z = -z
        let r = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
        CameraModel {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            width: 4,
            height: 4,
            camera_from_vehicle: Pose3 {
                rotation: r,
                translation: [0.0, 0.0, height],
            },
        }
    }

    #[test]
    fn reduction_drops_third_column() {
        let h = Matrix3x4::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0);
        let want = Matrix3::new(1.0, 2.0, 4.0, 5.0, 6.0, 8.0, 9.0, 10.0, 12.0);
        assert_eq!(reduce_projection(&h), want);
    }

    #[test]
    fn straight_down_projection() {
        let h = compose_homography(&down_camera(1.0), &Pose3::default()).unwrap();
        let p = h.project([0.0, 0.0]);
        assert!(p.valid);
        assert_eq!(p.pixel, [0.0, 0.0]);
        let p = h.project([1.0, 0.0]);
        assert!((p.pixel[0] - 1.0).abs() < 1e-15 && p.pixel[1].abs() < 1e-15);
        let p = h.project([0.0, -1.0]);
        assert!(p.pixel[0].abs() < 1e-15 && (p.pixel[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn behind_camera_is_invalid() {
        let cam = CameraModel::default();
        let h = compose_homography(&cam, &Pose3::default()).unwrap();
        let p = h.project([-5.0, 0.0]);
        assert!(p.w <= 0.0 && !p.valid);
        let ahead = h.project([4.0, 0.0]);
        assert!(ahead.valid, "{ahead:?}");
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let bad = Pose3 {
            rotation: [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        };
        assert!(matches!(
            compose_homography(&CameraModel::default(), &bad),
            Err(Error::NonOrthonormalRotation(_))
        ));
        let mirror = Pose3 {
            rotation: [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        };
        assert!(mirror.validate().is_err());
    }

    #[test]
    fn quaternion_round_trip() {
        let p = Pose3::from_quaternion([0.9, 0.1, -0.2, 0.3], [1.0, 2.0, 0.0]).unwrap();
        let q = rotation_to_quaternion(&p.rotation);
        let back = Pose3::from_quaternion(q, p.translation).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((back.rotation[r][c] - p.rotation[r][c]).abs() < 1e-12);
            }
        }
    }

    fn world() -> CostMapGrid {
        let line = crate::costmap::Centerline::new(vec![[-5.0, 0.0], [5.0, 2.0], [12.0, -3.0]], false, 1.5).unwrap();
        crate::costmap::build_track_costmap(&line, 0.1, 4.0).unwrap()
    }

    #[test]
    fn crop_of_uniform_map_is_uniform() {
        let w = CostMapGrid::uniform(400, 400, 0.1, Pose2::new(-20.0, -20.0, 0.0), GridFrame::World, 0.3).unwrap();
        let crop = extract_topdown_crop(&w, Pose2::new(1.0, -2.0, 0.7), &CropSpec::default()).unwrap();
        assert!(crop.values().iter().all(|v| *v == 0.3));
        assert_eq!((crop.width(), crop.height()), (128, 160));
        assert_eq!(crop.frame(), GridFrame::Body);
    }

    #[test]
    fn identity_pose_crop_matches_world() {
        let w = world();
        let crop = extract_topdown_crop(&w, Pose2::default(), &CropSpec::default()).unwrap();
        for (col, row) in [(0, 0), (10, 50), (127, 159), (64, 80)] {
            let c = crop.cell_center(col, row);
            assert_eq!(crop.get(col, row), w.lookup(c[0], c[1]));
        }
    }

    #[test]
    fn quarter_turn_crop_equals_rotated_world() {
        let w = world();
        let spec = CropSpec {
            lateral_cells: 40,
            longitudinal_cells: 32,
            ..Default::default()
        };
        let pose = Pose2::new(0.0, 0.0, FRAC_PI_2);
        let crop = extract_topdown_crop(&w, pose, &spec).unwrap();
        // the world rotated by -pi/2 is sampled at the yaw-0 crop cell centers
        for row in 0..spec.lateral_cells {
            for col in 0..spec.longitudinal_cells {
                let b = crop.cell_center(col, row);
                let rotated_lookup = w.lookup(-b[1], b[0]);
                assert!((crop.get(col, row) - rotated_lookup).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn labels_above_horizon_are_sentinel() {
        let cam = CameraModel::default();
        let w = CostMapGrid::uniform(400, 400, 0.1, Pose2::new(-20.0, -20.0, 0.0), GridFrame::World, 0.4).unwrap();
        let h = compose_homography(&cam, &Pose3::from_pose2(Pose2::new(1.0, 1.0, 0.0), 0.0)).unwrap();
        let labels = render_image_plane_labels(&w, &h, cam.width, cam.height).unwrap();
        // pitched down 0.25 rad with fy = 250: horizon near row 128 - 250 tan(0.25)
        let horizon = cam.cy - cam.fy * 0.25f64.tan();
        for v in 0..cam.height {
            let row: Vec<f64> = (0..cam.width).map(|u| labels.get(u, v)).collect();
            if (v as f64) < horizon - 1.0 {
                assert!(row.iter().all(|x| *x == NO_LABEL), "row {v}");
            } else if (v as f64) > horizon + 1.0 {
                // below the horizon every label is either the map value or off-map
                assert!(row.iter().all(|x| *x == 0.4 || *x == 1.0), "row {v}");
            }
        }
        // near rows see the uniform map
        assert_eq!(labels.get(160, 255), 0.4);
    }

    #[test]
    fn singular_homography_rejected() {
        let h = GroundHomography {
            h: Matrix3x4::zeros(),
            h_hat: Matrix3::zeros(),
            image_width: 2,
            image_height: 2,
        };
        assert!(matches!(
            render_image_plane_labels(&world(), &h, 2, 2),
            Err(Error::SingularHomography)
        ));
    }

    #[test]
    fn edge_band_marks_both_sides() {
        let mut values = vec![1.0; 30 * 10];
        for r in 0..10 {
            for c in 10..20 {
                values[r * 30 + c] = 0.5;
            }
        }
        let g = CostMapGrid::new(30, 10, 1.0, Pose2::default(), GridFrame::Body, values).unwrap();
        let m = edge_band_mask(&g, 2);
        let row: Vec<bool> = (0..30).map(|c| m[5 * 30 + c]).collect();
        let expect: Vec<bool> = (0..30).map(|c| (8..=12).contains(&c) || (17..=21).contains(&c)).collect();
        assert_eq!(row, expect);
    }

    #[test]
    fn empty_pose_log_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("ds");
        let n = emit_dataset(&[], &world(), &CameraModel::default(), &CropSpec::default(), &out).unwrap();
        assert_eq!(n, 0);
        assert!(!out.exists());
    }
}
