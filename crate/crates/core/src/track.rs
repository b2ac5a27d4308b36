//! Track geometry: synthesized ovals, waypoint tracks, and the start/finish line.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costmap::Centerline;
use crate::error::{Error, Result};
use crate::geometry::segments_intersect;

/// Geometry of a stadium-shaped oval centered on the origin, straights along x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OvalSpec {
    pub straight_length: f64,
    pub radius: f64,
    pub half_width: f64,
    /// Target spacing between centerline vertices, m.
    pub vertex_spacing: f64,
}

impl Default for OvalSpec {
    fn default() -> Self {
        Self {
            straight_length: 18.0,
            radius: 3.8,
            half_width: 1.5,
            vertex_spacing: 0.25,
        }
    }
}

impl OvalSpec {
    pub fn perimeter(&self) -> f64 {
        2.0 * self.straight_length + 2.0 * PI * self.radius
    }
}

/// Counter-clockwise oval; vertex 0 is the middle of the lower straight.
pub fn oval(spec: &OvalSpec) -> Result<Centerline> {
    let OvalSpec {
        straight_length: len,
        radius: r,
        half_width,
        vertex_spacing,
    } = *spec;
    for (name, v) in [
        ("radius", r),
        ("straight_length", len),
        ("half_width", half_width),
        ("vertex_spacing", vertex_spacing),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::DegenerateCenterline(format!("{name} must be > 0, got {v}")));
        }
    }
    if half_width >= r {
        return Err(Error::DegenerateCenterline(format!(
            "half_width {half_width} must be below the turn radius {r}"
        )));
    }
    let half = len / 2.0;
    let n_half_straight = ((half / vertex_spacing).ceil() as usize).max(1);
    let n_arc = ((PI * r / vertex_spacing).ceil() as usize).max(8);
    let mut v = Vec::new();
    // lower straight, heading +x
    for i in 0..n_half_straight {
        v.push([half * i as f64 / n_half_straight as f64, -r]);
    }
    // right turn around (half, 0)
    for i in 0..n_arc {
        let a = -PI / 2.0 + PI * i as f64 / n_arc as f64;
        v.push([half + r * a.cos(), r * a.sin()]);
    }
    // upper straight, heading -x
    for i in 0..2 * n_half_straight {
        v.push([half - len * i as f64 / (2 * n_half_straight) as f64, r]);
    }
    // left turn around (-half, 0)
    for i in 0..n_arc {
        let a = PI / 2.0 + PI * i as f64 / n_arc as f64;
        v.push([-half + r * a.cos(), r * a.sin()]);
    }
    for i in 0..n_half_straight {
        v.push([-half + half * i as f64 / n_half_straight as f64, -r]);
    }
    Centerline::new(v, true, half_width)
}

/// Closed centerline from a CSV of `x,y` rows (an optional header row is skipped).
pub fn from_waypoints_csv(path: impl AsRef<Path>, half_width: f64) -> Result<Centerline> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut vertices = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::Config(format!("{}: row {i} needs x,y", path.display())));
        }
        match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => vertices.push([x, y]),
            _ if i == 0 => continue,
            _ => {
                return Err(Error::Config(format!(
                    "{}: row {i} is not numeric",
                    path.display()
                )))
            }
        }
    }
    from_waypoints(vertices, half_width)
}

pub fn from_waypoints(vertices: Vec<[f64; 2]>, half_width: f64) -> Result<Centerline> {
    let c = Centerline::new(vertices, true, half_width)?;
    if let Some((i, j)) = self_intersection(&c) {
        return Err(Error::DegenerateCenterline(format!(
            "segments {i} and {j} intersect"
        )));
    }
    Ok(c)
}

/// First pair of non-adjacent intersecting segments, if any.
pub fn self_intersection(c: &Centerline) -> Option<(usize, usize)> {
    let segs: Vec<_> = c.segments().collect();
    let n = segs.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (c.closed && i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(segs[i].0, segs[i].1, segs[j].0, segs[j].1) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Start/finish line through centerline vertex 0, perpendicular to the first segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartLine {
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// Unit vector of the required crossing direction.
    pub forward: [f64; 2],
}

impl StartLine {
    pub fn for_centerline(c: &Centerline, overhang: f64) -> Self {
        let p0 = c.vertices[0];
        let p1 = c.vertices[1];
        let (dx, dy) = (p1[0] - p0[0], p1[1] - p0[1]);
        let len = dx.hypot(dy);
        let forward = [dx / len, dy / len];
        let normal = [-forward[1], forward[0]];
        let half = c.half_width + overhang;
        StartLine {
            a: [p0[0] - normal[0] * half, p0[1] - normal[1] * half],
            b: [p0[0] + normal[0] * half, p0[1] + normal[1] * half],
            forward,
        }
    }

    /// Signed distance of `p` along `forward` from the line.
    pub fn side(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.a[0]) * self.forward[0] + (p[1] - self.a[1]) * self.forward[1]
    }

    pub fn heading(&self) -> f64 {
        self.forward[1].atan2(self.forward[0])
    }
}
