//! Planar rigid poses and point transforms.

use serde::{Deserialize, Serialize};

/// A planar pose: position in meters and heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformDirection {
    WorldToBody,
    BodyToWorld,
}

/// Rigid 2D transform of `point` through `pose`.
pub fn transform_point(pose: Pose2, point: [f64; 2], direction: TransformDirection) -> [f64; 2] {
    let (s, c) = pose.yaw.sin_cos();
    match direction {
        TransformDirection::BodyToWorld => [
            pose.x + c * point[0] - s * point[1],
            pose.y + s * point[0] + c * point[1],
        ],
        TransformDirection::WorldToBody => {
            let dx = point[0] - pose.x;
            let dy = point[1] - pose.y;
            [c * dx + s * dy, -s * dx + c * dy]
        }
    }
}

/// Precomputed affine map `p -> rot * p + offset`; used on hot lookup paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub m: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
        t: [0.0, 0.0],
    };

    /// Map from world coordinates into the body frame of `pose`.
    pub fn world_to_body(pose: Pose2) -> Self {
        let (s, c) = pose.yaw.sin_cos();
        Affine2 {
            m: [[c, s], [-s, c]],
            t: [-(c * pose.x + s * pose.y), s * pose.x - c * pose.y],
        }
    }

    /// Map from the body frame of `pose` into world coordinates.
    pub fn body_to_world(pose: Pose2) -> Self {
        let (s, c) = pose.yaw.sin_cos();
        Affine2 {
            m: [[c, -s], [s, c]],
            t: [pose.x, pose.y],
        }
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * p[0] + self.m[0][1] * p[1] + self.t[0],
            self.m[1][0] * p[0] + self.m[1][1] * p[1] + self.t[1],
        ]
    }

    /// Composition that applies `self` first, then `after`.
    pub fn then(&self, after: &Affine2) -> Affine2 {
        let a = &after.m;
        let b = &self.m;
        Affine2 {
            m: [
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                ],
            ],
            t: after.apply(self.t),
        }
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a % two_pi;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    } else if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// Euclidean distance from `p` to segment `[a, b]`.
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let qx = a[0] + t * dx - p[0];
    let qy = a[1] + t * dy - p[1];
    (qx * qx + qy * qy).sqrt()
}

/// Proper intersection test for segments `[p1, p2]` and `[q1, q2]`, touching endpoints included.
pub fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    }
    fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
        p[0] >= a[0].min(b[0])
            && p[0] <= a[0].max(b[0])
            && p[1] >= a[1].min(b[1])
            && p[1] <= a[1].max(b[1])
    }
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_pose_leaves_point() {
        let p = [1.25, -3.5];
        assert_eq!(
            transform_point(Pose2::default(), p, TransformDirection::WorldToBody),
            p
        );
        assert_eq!(
            transform_point(Pose2::default(), p, TransformDirection::BodyToWorld),
            p
        );
    }

    #[test]
    fn quarter_turn() {
        let pose = Pose2::new(0.0, 0.0, FRAC_PI_2);
        let b = transform_point(pose, [0.0, 1.0], TransformDirection::WorldToBody);
        assert!((b[0] - 1.0).abs() < 1e-15 && b[1].abs() < 1e-15);
    }

    #[test]
    fn affine_matches_transform_point() {
        let pose = Pose2::new(2.0, -1.0, 0.7);
        let a = Affine2::world_to_body(pose);
        let p = [3.3, 4.4];
        let want = transform_point(pose, p, TransformDirection::WorldToBody);
        let got = a.apply(p);
        assert!((want[0] - got[0]).abs() < 1e-12 && (want[1] - got[1]).abs() < 1e-12);
        let back = Affine2::body_to_world(pose).apply(got);
        assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
        let w = transform_point(pose, p, TransformDirection::BodyToWorld);
        let g = Affine2::body_to_world(pose).apply(p);
        assert!((w[0] - g[0]).abs() < 1e-12 && (w[1] - g[1]).abs() < 1e-12);
    }

    #[test]
    fn segment_distance_basics() {
        assert_eq!(point_segment_distance([0.0, 1.0], [-1.0, 0.0], [1.0, 0.0]), 1.0);
        assert_eq!(point_segment_distance([3.0, 0.0], [-1.0, 0.0], [1.0, 0.0]), 2.0);
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn round_trip(x in -100.0..100.0f64, y in -100.0..100.0f64, yaw in -10.0..10.0f64,
                      px in -100.0..100.0f64, py in -100.0..100.0f64) {
            let pose = Pose2::new(x, y, yaw);
            let b = transform_point(pose, [px, py], TransformDirection::WorldToBody);
            let w = transform_point(pose, b, TransformDirection::BodyToWorld);
            prop_assert!((w[0] - px).abs() < 1e-12 && (w[1] - py).abs() < 1e-12);
        }
    }
}
