//! Planar dynamic bicycle model used both as the MPPI rollout model and the
//! simulation plant.
//!
//! Body frame: x forward, y left. Tire lateral forces follow a linear law in
//! the (small-angle) slip with a smooth friction saturation at `mu * Fz`.
//! Integration is classic RK4 with the heading carried as a unit vector, so
//! multi-step rollouts need no trigonometry on the heading.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this longitudinal speed, slip angles use `sign(vx) * LOW_SPEED_GUARD`.
pub const LOW_SPEED_GUARD: f64 = 0.1;

pub const GRAVITY: f64 = 9.81;

/// Largest `dt * stiffness` accepted in one RK4 stage before the step is split.
const RK4_STABLE_PRODUCT: f64 = 2.0;

const MAX_SUBSTEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub px: f64,
    pub py: f64,
    pub yaw: f64,
    pub roll: f64,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

impl VehicleState {
    pub fn at_rest(px: f64, py: f64, yaw: f64) -> Self {
        Self {
            px,
            py,
            yaw,
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.px,
            self.py,
            self.yaw,
            self.roll,
            self.vx,
            self.vy,
            self.yaw_rate,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn pose(&self) -> crate::geometry::Pose2 {
        crate::geometry::Pose2::new(self.px, self.py, self.yaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub steering: f64,
    pub throttle: f64,
}

impl Control {
    pub const ZERO: Control = Control {
        steering: 0.0,
        throttle: 0.0,
    };

    pub const fn new(steering: f64, throttle: f64) -> Self {
        Self { steering, throttle }
    }

    pub fn clamped(self) -> Self {
        Self {
            steering: self.steering.clamp(-1.0, 1.0),
            throttle: self.throttle.clamp(-1.0, 1.0),
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.steering, self.throttle]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// m
    pub wheelbase: f64,
    /// CG to front axle, m
    pub front_axle_distance: f64,
    /// CG to rear axle, m
    pub rear_axle_distance: f64,
    /// kg m^2
    pub yaw_inertia: f64,
    /// N/rad
    pub cornering_stiffness_front: f64,
    /// N/rad
    pub cornering_stiffness_rear: f64,
    /// Wheel angle at full steering input, rad
    pub max_steering_angle: f64,
    /// Longitudinal force at full throttle from rest, N
    pub drive_force_gain: f64,
    /// N per m/s
    pub rolling_drag: f64,
    /// N per (m/s)^2
    pub aero_drag: f64,
    /// Roll angle per unit lateral acceleration, rad / (m/s^2)
    pub roll_gain: f64,
    /// Drive force tapers to zero at this speed, m/s
    pub max_speed: f64,
    /// Tire-road friction coefficient bounding lateral tire force
    pub friction_coefficient: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 22.0,
            wheelbase: 0.57,
            front_axle_distance: 0.30,
            rear_axle_distance: 0.27,
            yaw_inertia: 1.1,
            cornering_stiffness_front: 500.0,
            cornering_stiffness_rear: 600.0,
            max_steering_angle: 0.38,
            drive_force_gain: 110.0,
            rolling_drag: 0.8,
            aero_drag: 0.1,
            roll_gain: 0.02,
            max_speed: 26.0,
            friction_coefficient: 0.62,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("wheelbase", self.wheelbase),
            ("front_axle_distance", self.front_axle_distance),
            ("rear_axle_distance", self.rear_axle_distance),
            ("yaw_inertia", self.yaw_inertia),
            ("cornering_stiffness_front", self.cornering_stiffness_front),
            ("cornering_stiffness_rear", self.cornering_stiffness_rear),
            ("max_steering_angle", self.max_steering_angle),
            ("drive_force_gain", self.drive_force_gain),
            ("roll_gain", self.roll_gain),
            ("max_speed", self.max_speed),
            ("friction_coefficient", self.friction_coefficient),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("rolling_drag", self.rolling_drag), ("aero_drag", self.aero_drag)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be >= 0, got {v}")));
            }
        }
        let gap = self.front_axle_distance + self.rear_axle_distance - self.wheelbase;
        if gap.abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "front + rear axle distances must equal wheelbase (off by {gap:e})"
            )));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let params: Self = crate::io::read_json(path)?;
        params.validate()?;
        Ok(params)
    }

    /// Peak lateral acceleration the tires can sustain in steady cornering.
    pub fn lateral_accel_limit(&self) -> f64 {
        self.friction_coefficient * GRAVITY
    }

    fn tire_limits(&self) -> (f64, f64) {
        let w = self.mass * GRAVITY * self.friction_coefficient;
        (
            w * self.rear_axle_distance / self.wheelbase,
            w * self.front_axle_distance / self.wheelbase,
        )
    }
}

#[inline(always)]
pub fn guarded_vx(vx: f64) -> f64 {
    let floor = if vx < 0.0 { -LOW_SPEED_GUARD } else { LOW_SPEED_GUARD };
    if vx.abs() < LOW_SPEED_GUARD {
        floor
    } else {
        vx
    }
}

/// Linear in slip near zero, saturating smoothly at `1 / inv_limit`.
#[inline(always)]
fn tire_force(stiffness: f64, slip: f64, inv_limit: f64) -> f64 {
    let linear = stiffness * slip;
    let r = linear * inv_limit;
    linear / (1.0 + r * r).sqrt()
}

/// `sin_cos` via truncated Taylor series for the small angles that steering
/// produces; the truncation error is far below one ulp for `|x| <= 0.5`.
#[inline(always)]
fn small_sin_cos(x: f64) -> (f64, f64) {
    if x.abs() > 0.5 {
        return x.sin_cos();
    }
    let x2 = x * x;
    let mut s = 1.0 / 355_687_428_096_000.0; // 1/17!
    let mut c = 1.0 / 20_922_789_888_000.0; // 1/16!
    for k in (1..=8).rev() {
        // s_k = 1/(2k+1)! - x^2 s_{k+1}, c_k = 1/(2k)! - x^2 c_{k+1}
        s = INV_ODD_FACTORIAL[k - 1] - x2 * s;
        c = INV_EVEN_FACTORIAL[k - 1] - x2 * c;
    }
    (x * s, c)
}

/// 1/1!, 1/3!, ..., 1/15!
const INV_ODD_FACTORIAL: [f64; 8] = [
    1.0,
    1.0 / 6.0,
    1.0 / 120.0,
    1.0 / 5040.0,
    1.0 / 362_880.0,
    1.0 / 39_916_800.0,
    1.0 / 6_227_020_800.0,
    1.0 / 1_307_674_368_000.0,
];

/// 1/0!, 1/2!, ..., 1/14!
const INV_EVEN_FACTORIAL: [f64; 8] = [
    1.0,
    1.0 / 2.0,
    1.0 / 24.0,
    1.0 / 720.0,
    1.0 / 40_320.0,
    1.0 / 3_628_800.0,
    1.0 / 479_001_600.0,
    1.0 / 87_178_291_200.0,
];

/// Integrator state: `[px, py, cos(yaw), sin(yaw), vx, vy, yaw_rate]`.
pub(crate) type Kin = [f64; 7];

/// Model constants derived once from [`VehicleParams`].
#[derive(Debug, Clone)]
pub(crate) struct Model {
    lf: f64,
    lr: f64,
    cf: f64,
    cr: f64,
    inv_mass: f64,
    inv_inertia: f64,
    inv_front_limit: f64,
    inv_rear_limit: f64,
    max_steer: f64,
    drive_gain: f64,
    inv_max_speed: f64,
    rolling_drag: f64,
    aero_drag: f64,
    roll_gain: f64,
    /// Speed-independent part of the stiffness estimate, times speed.
    lateral_stiffness: f64,
}

/// Per-step control-derived inputs.
#[derive(Clone, Copy)]
struct Drive {
    steer: f64,
    steer_sin: f64,
    steer_cos: f64,
    throttle: f64,
}

impl Model {
    pub(crate) fn new(p: &VehicleParams) -> Self {
        let (front_limit, rear_limit) = p.tire_limits();
        let (lf, lr) = (p.front_axle_distance, p.rear_axle_distance);
        Self {
            lf,
            lr,
            cf: p.cornering_stiffness_front,
            cr: p.cornering_stiffness_rear,
            inv_mass: 1.0 / p.mass,
            inv_inertia: 1.0 / p.yaw_inertia,
            inv_front_limit: 1.0 / front_limit,
            inv_rear_limit: 1.0 / rear_limit,
            max_steer: p.max_steering_angle,
            drive_gain: p.drive_force_gain,
            inv_max_speed: 1.0 / p.max_speed,
            rolling_drag: p.rolling_drag,
            aero_drag: p.aero_drag,
            roll_gain: p.roll_gain,
            lateral_stiffness: (p.cornering_stiffness_front + p.cornering_stiffness_rear) / p.mass
                + (lf * lf * p.cornering_stiffness_front + lr * lr * p.cornering_stiffness_rear) / p.yaw_inertia,
        }
    }

    #[inline(always)]
    fn drive(&self, u: Control) -> Drive {
        let steer = u.steering * self.max_steer;
        let (steer_sin, steer_cos) = small_sin_cos(steer);
        Drive {
            steer,
            steer_sin,
            steer_cos,
            throttle: u.throttle,
        }
    }

    /// RK4 substeps needed to keep `h * stiffness` inside the stable region.
    #[inline(always)]
    fn substeps(&self, vx: f64, throttle: f64, dt: f64) -> usize {
        let v = guarded_vx(vx).abs();
        let mut stiffness = self.lateral_stiffness / v + (self.rolling_drag + 2.0 * self.aero_drag * v) * self.inv_mass;
        if throttle < 0.0 {
            stiffness += -throttle * self.drive_gain * self.inv_mass / LOW_SPEED_GUARD;
        }
        let n = dt * stiffness / RK4_STABLE_PRODUCT;
        if !(n < MAX_SUBSTEPS as f64) {
            return MAX_SUBSTEPS;
        }
        // ceil without a libm call
        let k = n as usize;
        (if (k as f64) < n { k + 1 } else { k }).max(1)
    }

    #[inline(always)]
    fn lateral_forces(&self, vx: f64, vy: f64, r: f64, steer: f64) -> (f64, f64) {
        let inv_vx = 1.0 / guarded_vx(vx);
        let slip_f = steer - (vy + self.lf * r) * inv_vx;
        let slip_r = -(vy - self.lr * r) * inv_vx;
        (
            tire_force(self.cf, slip_f, self.inv_front_limit),
            tire_force(self.cr, slip_r, self.inv_rear_limit),
        )
    }

    #[inline(always)]
    fn longitudinal_force(&self, vx: f64, throttle: f64) -> f64 {
        let drive = if throttle >= 0.0 {
            throttle * self.drive_gain * (1.0 - vx * self.inv_max_speed)
        } else {
            throttle * self.drive_gain * (vx / LOW_SPEED_GUARD).clamp(-1.0, 1.0)
        };
        drive - self.rolling_drag * vx - self.aero_drag * vx * vx.abs()
    }

    #[inline(always)]
    fn derivative(&self, y: &Kin, d: &Drive) -> Kin {
        let [_, _, c, s, vx, vy, r] = *y;
        let (fyf, fyr) = self.lateral_forces(vx, vy, r, d.steer);
        let fx = self.longitudinal_force(vx, d.throttle);
        [
            vx * c - vy * s,
            vx * s + vy * c,
            -s * r,
            c * r,
            (fx - fyf * d.steer_sin) * self.inv_mass + vy * r,
            (fyr + fyf * d.steer_cos) * self.inv_mass - vx * r,
            (self.lf * fyf * d.steer_cos - self.lr * fyr) * self.inv_inertia,
        ]
    }

    /// Advance `N` independent states by `dt` in lockstep. Each lane performs
    /// exactly the arithmetic of a single-lane call; lanes that disagree on
    /// the substep count are advanced one at a time. Returns the roll angle of
    /// each lane at the end of the step.
    #[inline(always)]
    pub(crate) fn advance<const N: usize>(&self, y: &mut [Kin; N], u: &[Control; N], dt: f64) -> [f64; N] {
        let d: [Drive; N] = std::array::from_fn(|l| self.drive(u[l]));
        let n: [usize; N] = std::array::from_fn(|l| self.substeps(y[l][4], u[l].throttle, dt));
        let vx0: [f64; N] = std::array::from_fn(|l| y[l][4]);
        if n.iter().all(|k| *k == n[0]) {
            self.integrate(y, &d, n[0], dt);
        } else {
            for l in 0..N {
                let mut one = [y[l]];
                self.integrate(&mut one, &[d[l]], n[l], dt);
                y[l] = one[0];
            }
        }
        std::array::from_fn(|l| {
            let yl = &mut y[l];
            // RK4 does not preserve the norm of the heading vector
            let norm = (yl[2] * yl[2] + yl[3] * yl[3]).sqrt();
            yl[2] /= norm;
            yl[3] /= norm;
            if d[l].throttle < 0.0 && vx0[l] * yl[4] < 0.0 {
                // braking never reverses the direction of travel
                yl[4] = 0.0;
            }
            let (fyf, fyr) = self.lateral_forces(yl[4], yl[5], yl[6], d[l].steer);
            let lateral_accel = (fyr + fyf * d[l].steer_cos) * self.inv_mass;
            (self.roll_gain * lateral_accel).clamp(-FRAC_PI_2, FRAC_PI_2)
        })
    }

    #[inline(always)]
    fn integrate<const N: usize>(&self, y: &mut [Kin; N], d: &[Drive; N], n: usize, dt: f64) {
        let h = dt / n as f64;
        let h6 = h / 6.0;
        let half = 0.5 * h;
        let mut k1 = [[0.0; 7]; N];
        let mut k2 = [[0.0; 7]; N];
        let mut k3 = [[0.0; 7]; N];
        let mut k4 = [[0.0; 7]; N];
        for _ in 0..n {
            for l in 0..N {
                k1[l] = self.derivative(&y[l], &d[l]);
            }
            for l in 0..N {
                k2[l] = self.derivative(&axpy(&y[l], half, &k1[l]), &d[l]);
            }
            for l in 0..N {
                k3[l] = self.derivative(&axpy(&y[l], half, &k2[l]), &d[l]);
            }
            for l in 0..N {
                k4[l] = self.derivative(&axpy(&y[l], h, &k3[l]), &d[l]);
            }
            for l in 0..N {
                for i in 0..7 {
                    y[l][i] += h6 * (k1[l][i] + 2.0 * k2[l][i] + 2.0 * k3[l][i] + k4[l][i]);
                }
            }
        }
    }
}

#[inline(always)]
fn axpy(y: &Kin, a: f64, k: &Kin) -> Kin {
    let mut out = *y;
    for i in 0..7 {
        out[i] += a * k[i];
    }
    out
}

pub(crate) fn to_kin(s: &VehicleState) -> Kin {
    let (sin, cos) = s.yaw.sin_cos();
    [s.px, s.py, cos, sin, s.vx, s.vy, s.yaw_rate]
}

fn check_finite(state: &VehicleState) -> Result<()> {
    if state.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteState(format!("{state:?}")))
    }
}

/// Advance `state` by `dt` seconds under `control`.
///
/// Roll is not integrated: it is set from the lateral acceleration at the
/// end of the step.
pub fn step(state: &VehicleState, control: Control, params: &VehicleParams, dt: f64) -> Result<VehicleState> {
    check_finite(state)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}")));
    }
    if !(control.steering.is_finite() && control.throttle.is_finite()) {
        return Err(Error::InvalidParams(format!("non-finite control {control:?}")));
    }
    let next = step_with(&Model::new(params), state, control.clamped(), dt);
    check_finite(&next)?;
    Ok(next)
}

pub(crate) fn step_with(model: &Model, state: &VehicleState, control: Control, dt: f64) -> VehicleState {
    let mut y = [to_kin(state)];
    let [c0, s0] = [y[0][2], y[0][3]];
    let [roll] = model.advance(&mut y, &[control], dt);
    let [px, py, c, s, vx, vy, yaw_rate] = y[0];
    // heading change over the step, so yaw stays unwrapped
    let dyaw = (c0 * s - s0 * c).atan2(c0 * c + s0 * s);
    VehicleState {
        px,
        py,
        yaw: state.yaw + dyaw,
        roll,
        vx,
        vy,
        yaw_rate,
    }
}



/// Propagate `state` through `controls`; returns `controls.len() + 1` states.
pub fn rollout(
    state: &VehicleState,
    controls: &[Control],
    params: &VehicleParams,
    dt: f64,
) -> Result<Vec<VehicleState>> {
    if controls.is_empty() {
        return Err(Error::EmptyControls);
    }
    let mut traj = Vec::with_capacity(controls.len() + 1);
    traj.push(*state);
    let mut current = *state;
    for &u in controls {
        current = step(&current, u, params, dt)?;
        traj.push(current);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn default_params_are_valid() {
        params().validate().unwrap();
    }

    #[test]
    fn axle_mismatch_rejected() {
        let mut p = params();
        p.front_axle_distance = 0.4;
        assert!(p.validate().is_err());
        let mut p = params();
        p.mass = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.aero_drag = 0.0;
        p.validate().unwrap();
    }

    #[test]
    fn small_angle_trig_matches_libm() {
        for i in -1000..=1000 {
            let x = i as f64 * 0.5e-3;
            let (s, c) = small_sin_cos(x);
            let (rs, rc) = x.sin_cos();
            assert!((s - rs).abs() <= 2.0 * f64::EPSILON * rs.abs().max(1e-300), "{x}");
            assert!((c - rc).abs() <= 2.0 * f64::EPSILON, "{x}");
        }
    }

    #[test]
    fn rest_is_fixed_point() {
        let s = VehicleState::at_rest(1.0, -2.0, 0.3);
        let next = step(&s, Control::ZERO, &params(), 0.025).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn straight_line_cruise() {
        let p = params();
        let v = 5.0;
        let drag = p.rolling_drag * v + p.aero_drag * v * v;
        let throttle = drag / (p.drive_force_gain * (1.0 - v / p.max_speed));
        let s = VehicleState {
            vx: v,
            ..Default::default()
        };
        let dt = 0.025;
        let next = step(&s, Control::new(0.0, throttle), &p, dt).unwrap();
        assert_eq!(next.py, 0.0);
        assert_eq!(next.yaw, 0.0);
        assert_eq!(next.vy, 0.0);
        assert_eq!(next.yaw_rate, 0.0);
        assert!((next.px - v * dt).abs() < 1e-12, "px {}", next.px);
        assert!((next.vx - v).abs() < 1e-12);
    }

    #[test]
    fn non_finite_state_is_an_error() {
        let s = VehicleState {
            vx: f64::NAN,
            ..Default::default()
        };
        assert!(matches!(
            step(&s, Control::ZERO, &params(), 0.025),
            Err(Error::NonFiniteState(_))
        ));
    }

    #[test]
    fn controls_are_clamped() {
        let s = VehicleState {
            vx: 3.0,
            ..Default::default()
        };
        let p = params();
        let a = step(&s, Control::new(4.0, 9.0), &p, 0.025).unwrap();
        let b = step(&s, Control::new(1.0, 1.0), &p, 0.025).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn braking_stops_without_reversing() {
        let p = params();
        let mut s = VehicleState {
            vx: 0.3,
            ..Default::default()
        };
        for _ in 0..200 {
            s = step(&s, Control::new(0.0, -1.0), &p, 0.025).unwrap();
            assert!(s.vx >= 0.0);
        }
        assert!(s.vx < 1e-3);
    }

    #[test]
    fn low_speed_steering_stays_bounded() {
        let p = params();
        let mut s = VehicleState {
            vx: 0.5,
            ..Default::default()
        };
        for _ in 0..400 {
            s = step(&s, Control::new(1.0, 0.05), &p, 0.025).unwrap();
            assert!(s.vy.abs() < 1.0 && s.yaw_rate.abs() < 5.0, "{s:?}");
        }
    }

    /// Curvature under constant steering at low speed approaches the
    /// kinematic value; checked at `dt` and against a `dt / 100` reference.
    #[test]
    fn low_speed_curvature_matches_kinematic() {
        let p = params();
        let steering = 0.25;
        let wheel = steering * p.max_steering_angle;
        let expected = wheel.tan() / p.wheelbase;
        let v = 1.5;
        let drag = p.rolling_drag * v + p.aero_drag * v * v;
        let throttle = drag / (p.drive_force_gain * (1.0 - v / p.max_speed));
        let run = |dt: f64| {
            let mut s = VehicleState {
                vx: v,
                ..Default::default()
            };
            let steps = (4.0 / dt).round() as usize;
            for _ in 0..steps {
                s = step(&s, Control::new(steering, throttle), &p, dt).unwrap();
            }
            s.yaw_rate / s.speed()
        };
        let coarse = run(0.025);
        let fine = run(0.025 / 100.0);
        assert!((coarse - fine).abs() / fine < 1e-3, "coarse {coarse} fine {fine}");
        for k in [coarse, fine] {
            assert!((k - expected).abs() / expected < 0.02, "curvature {k} vs {expected}");
        }
    }

    #[test]
    fn rollout_contract() {
        let p = params();
        let s = VehicleState {
            vx: 3.0,
            ..Default::default()
        };
        assert!(matches!(rollout(&s, &[], &p, 0.025), Err(Error::EmptyControls)));
        let u = [Control::new(0.2, 0.4)];
        let traj = rollout(&s, &u, &p, 0.025).unwrap();
        assert_eq!(traj, vec![s, step(&s, u[0], &p, 0.025).unwrap()]);

        let rest = VehicleState::default();
        let traj = rollout(&rest, &[Control::ZERO; 5], &p, 0.025).unwrap();
        assert!(traj.iter().all(|x| *x == rest));
    }

    #[test]
    fn sixty_step_horizon_equals_chained_steps() {
        let p = params();
        let s = VehicleState {
            vx: 4.0,
            yaw: 0.2,
            ..Default::default()
        };
        let controls: Vec<Control> = (0..60)
            .map(|t| Control::new((t as f64 * 0.1).sin() * 0.5, 0.3))
            .collect();
        let traj = rollout(&s, &controls, &p, 0.025).unwrap();
        assert_eq!(traj.len(), 61);
        let mut chained = s;
        for &u in &controls {
            chained = step(&chained, u, &p, 0.025).unwrap();
        }
        assert_eq!(traj[60], chained);
    }

    #[test]
    fn rollout_is_pure() {
        let p = params();
        let s = VehicleState {
            vx: 4.0,
            vy: 0.1,
            yaw_rate: 0.3,
            ..Default::default()
        };
        let controls: Vec<Control> = (0..30).map(|t| Control::new(0.4, (t as f64 * 0.2).cos())).collect();
        let a = rollout(&s, &controls, &p, 0.025).unwrap();
        let b = rollout(&s, &controls, &p, 0.025).unwrap();
        assert_eq!(a, b);
    }
}
