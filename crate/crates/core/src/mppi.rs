//! Model predictive path integral control.
//!
//! Each control step samples `K` noisy copies of the planned control tape,
//! rolls them through the vehicle model, scores them with the running cost,
//! and replaces the plan with the softmin-weighted average of the samples.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmap::CostField;
use crate::dynamics::{guarded_vx, to_kin, Control, Kin, Model, VehicleParams, VehicleState};
use crate::error::{Error, Result};

/// Command issued when no costmap frame is available yet.
pub const BRAKE_COMMAND: Control = Control::new(0.0, -0.3);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorThresholds {
    pub track_cost: f64,
    /// rad
    pub roll: f64,
    /// rad/s
    pub yaw_rate: f64,
}

impl Default for IndicatorThresholds {
    fn default() -> Self {
        Self {
            track_cost: 0.9,
            roll: 0.35,
            yaw_rate: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MppiParams {
    /// K
    pub samples: usize,
    /// T
    pub horizon: usize,
    /// s
    pub dt: f64,
    /// Sampling covariance over (steering, throttle).
    pub noise_covariance: [[f64; 2]; 2],
    pub lambda: f64,
    pub gamma: f64,
    /// Weights of (track cost, speed error, crash indicator, sideslip).
    pub cost_weights: [f64; 4],
    /// m/s
    pub target_speed: f64,
    pub thresholds: IndicatorThresholds,
    pub indicator_discount: f64,
    /// Once a rollout crashes, keep the indicator on for the rest of its horizon.
    pub latch_indicator: bool,
}

impl Default for MppiParams {
    fn default() -> Self {
        Self {
            samples: 1200,
            horizon: 60,
            dt: 0.025,
            noise_covariance: [[0.09, 0.0], [0.0, 0.04]],
            lambda: 0.15,
            gamma: 0.1,
            cost_weights: [100.0, 4.25, 10000.0, 1.75],
            target_speed: 5.0,
            thresholds: IndicatorThresholds::default(),
            indicator_discount: 0.9,
            latch_indicator: true,
        }
    }
}

impl MppiParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.samples == 0 {
            return bad("samples must be >= 1".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.cost_weights.iter().any(|w| !w.is_finite()) || !self.target_speed.is_finite() {
            return bad("non-finite cost weights or target speed".into());
        }
        if !(self.indicator_discount.is_finite() && self.indicator_discount >= 0.0) {
            return bad("indicator_discount must be >= 0".into());
        }
        Cholesky2::new(self.noise_covariance)?;
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let p: Self = crate::io::read_json(path)?;
        p.validate()?;
        Ok(p)
    }

    /// `w3 * discount^t` for `t = 0..=horizon`, built by repeated multiplication.
    fn crash_weights(&self) -> Vec<f64> {
        let mut w = self.cost_weights[2];
        (0..=self.horizon)
            .map(|_| {
                let cur = w;
                w *= self.indicator_discount;
                cur
            })
            .collect()
    }

    fn crash_weight(&self, t: usize) -> f64 {
        (0..t).fold(self.cost_weights[2], |w, _| w * self.indicator_discount)
    }
}

/// Lower-triangular factor and inverse of a 2x2 symmetric positive definite matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cholesky2 {
    pub l: [[f64; 2]; 2],
    pub inverse: [[f64; 2]; 2],
}

impl Cholesky2 {
    pub fn new(s: [[f64; 2]; 2]) -> Result<Self> {
        let finite = s.iter().flatten().all(|v| v.is_finite());
        let symmetric = (s[0][1] - s[1][0]).abs() <= 1e-12 * (s[0][1].abs() + s[1][0].abs()).max(1.0);
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        if !finite || !symmetric || s[0][0] <= 0.0 || det <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "noise covariance {s:?} is not symmetric positive definite"
            )));
        }
        let l00 = s[0][0].sqrt();
        let l10 = s[1][0] / l00;
        let l11 = (s[1][1] - l10 * l10).sqrt();
        Ok(Self {
            l: [[l00, 0.0], [l10, l11]],
            inverse: [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]],
        })
    }

    #[inline]
    fn correlate(&self, z: [f64; 2]) -> [f64; 2] {
        [self.l[0][0] * z[0], self.l[1][0] * z[0] + self.l[1][1] * z[1]]
    }

    #[inline]
    fn quad(&self, u: [f64; 2], e: [f64; 2]) -> f64 {
        let m = &self.inverse;
        u[0] * (m[0][0] * e[0] + m[0][1] * e[1]) + u[1] * (m[1][0] * e[0] + m[1][1] * e[1])
    }
}

/// Planned open-loop control tape; entries are kept within control bounds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSequence(Vec<Control>);

impl ControlSequence {
    pub fn new(controls: Vec<Control>) -> Self {
        Self(controls.into_iter().map(Control::clamped).collect())
    }

    pub fn zeros(horizon: usize) -> Self {
        Self(vec![Control::ZERO; horizon])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Control] {
        &self.0
    }

    pub fn first(&self) -> Option<Control> {
        self.0.first().copied()
    }

    /// Drop the first entry and repeat the last one at the tail.
    pub fn shifted(&self) -> Self {
        let mut v = self.0.clone();
        if let Some(&last) = v.last() {
            v.remove(0);
            v.push(last);
        }
        Self(v)
    }
}

impl std::ops::Index<usize> for ControlSequence {
    type Output = Control;
    fn index(&self, i: usize) -> &Control {
        &self.0[i]
    }
}

fn sample_sequence(u: &ControlSequence, chol: &Cholesky2, seed: u64) -> ControlSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ControlSequence(
        u.0.iter()
            .map(|c| {
                let z = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let d = chol.correlate(z);
                Control::new(c.steering + d[0], c.throttle + d[1]).clamped()
            })
            .collect(),
    )
}

/// `K` clamped Gaussian perturbations of `u`. Sample `k` draws from its own
/// stream seeded with `seed ^ k`, so the result does not depend on scheduling.
pub fn sample_perturbations(u: &ControlSequence, params: &MppiParams, seed: u64) -> Result<Vec<ControlSequence>> {
    let chol = Cholesky2::new(params.noise_covariance)?;
    if params.samples == 0 {
        return Err(Error::InvalidParams("samples must be >= 1".into()));
    }
    Ok((0..params.samples as u64)
        .into_par_iter()
        .map(|k| sample_sequence(u, &chol, seed ^ k))
        .collect())
}

/// Running cost of one state; returns the cost and whether the crash indicator fired.
pub fn running_cost(state: &VehicleState, t: usize, track_cost: f64, params: &MppiParams) -> (f64, bool) {
    let crashed = crash_indicator(state, track_cost, &params.thresholds);
    (state_cost(state, track_cost, crashed, params.crash_weight(t), params), crashed)
}

#[inline]
fn crash_indicator(state: &VehicleState, track_cost: f64, th: &IndicatorThresholds) -> bool {
    track_cost > th.track_cost || state.roll.abs() > th.roll || state.yaw_rate.abs() > th.yaw_rate
}

#[inline]
fn state_cost(state: &VehicleState, track_cost: f64, indicator: bool, crash_weight: f64, params: &MppiParams) -> f64 {
    let w = &params.cost_weights;
    let dv = state.vx - params.target_speed;
    let slip = state.vy / guarded_vx(state.vx);
    let crash = if indicator { crash_weight } else { 0.0 };
    w[0] * track_cost + w[1] * dv * dv + crash + w[3] * slip * slip
}

/// Sum of running costs over every state of `trajectory` (no terminal cost).
pub fn trajectory_cost<F: CostField + ?Sized>(trajectory: &[VehicleState], field: &F, params: &MppiParams) -> f64 {
    trajectory_cost_detail(trajectory, field, params).0
}

/// Total cost plus whether any state crashed.
pub fn trajectory_cost_detail<F: CostField + ?Sized>(
    trajectory: &[VehicleState],
    field: &F,
    params: &MppiParams,
) -> (f64, bool) {
    let mut latched = false;
    let mut total = 0.0;
    for (t, x) in trajectory.iter().enumerate() {
        let c = field.cost(x.px, x.py);
        let fired = crash_indicator(x, c, &params.thresholds);
        latched = if params.latch_indicator { latched || fired } else { fired };
        total += state_cost(x, c, latched, params.crash_weight(t), params);
    }
    (total, latched)
}

/// Sampled sequences with their costs and importance weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBatch {
    pub samples: Vec<ControlSequence>,
    /// S(E_k)
    pub state_costs: Vec<f64>,
    /// gamma * sum_t u_t^T Sigma^-1 eps_k^t
    pub control_costs: Vec<f64>,
    pub weights: Vec<f64>,
    pub crashed: Vec<bool>,
}

impl RolloutBatch {
    pub fn new(samples: Vec<ControlSequence>, state_costs: Vec<f64>) -> Self {
        let n = samples.len();
        Self {
            samples,
            state_costs,
            control_costs: vec![0.0; n],
            weights: vec![0.0; n],
            crashed: vec![false; n],
        }
    }

    /// Fill `control_costs` and normalized `weights` for the current plan `u`.
    pub fn compute_weights(&mut self, u: &ControlSequence, params: &MppiParams) -> Result<()> {
        let chol = Cholesky2::new(params.noise_covariance)?;
        let k = self.samples.len();
        if k == 0 || self.state_costs.len() != k {
            return Err(Error::InvalidParams(format!(
                "batch has {k} samples and {} costs",
                self.state_costs.len()
            )));
        }
        self.control_costs = self
            .samples
            .iter()
            .map(|eps| {
                params.gamma
                    * u.0
                        .iter()
                        .zip(&eps.0)
                        .map(|(ut, et)| chol.quad(ut.as_array(), et.as_array()))
                        .sum::<f64>()
            })
            .collect();
        let totals: Vec<f64> = self
            .state_costs
            .iter()
            .zip(&self.control_costs)
            .map(|(s, c)| s + c)
            .collect();
        self.weights = softmin_weights(&totals, params.lambda)?;
        Ok(())
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Normalized `exp(-(c_k - min c) / lambda)`. Non-finite costs get zero weight.
pub fn softmin_weights(costs: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let min = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::WeightUnderflow);
    }
    let mut w: Vec<f64> = costs
        .iter()
        .map(|&c| if c.is_finite() { (-(c - min) / lambda).exp() } else { 0.0 })
        .collect();
    let eta: f64 = w.iter().sum();
    // the minimizer contributes exp(0) = 1
    if !(eta >= 1.0) {
        return Err(Error::WeightUnderflow);
    }
    for x in &mut w {
        *x /= eta;
    }
    Ok(w)
}

/// Weighted average of the batch's sequences, summed in sample order.
pub fn mppi_update(u: &ControlSequence, batch: &RolloutBatch, params: &MppiParams) -> Result<ControlSequence> {
    let mut batch = batch.clone();
    batch.compute_weights(u, params)?;
    Ok(weighted_average(&batch))
}

/// `sum_k w_k * eps_k` using the batch's stored weights.
pub fn weighted_average(batch: &RolloutBatch) -> ControlSequence {
    let horizon = batch.samples.first().map_or(0, |s| s.len());
    let mut out = vec![[0.0f64; 2]; horizon];
    for (w, eps) in batch.weights.iter().zip(&batch.samples) {
        if *w == 0.0 {
            continue;
        }
        for (o, e) in out.iter_mut().zip(&eps.0) {
            o[0] += w * e.steering;
            o[1] += w * e.throttle;
        }
    }
    ControlSequence(out.into_iter().map(Control::from_array).collect())
}

/// Per-step summary appended to the episode log.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub min_cost: f64,
    pub mean_cost: f64,
    pub effective_sample_size: f64,
    pub crash_fraction: f64,
    /// No costmap frame was available; a braking command was issued.
    pub missing_frame: bool,
}

/// SplitMix64 finalizer, used to derive per-step seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Receding-horizon MPPI controller state.
#[derive(Debug, Clone)]
pub struct MppiController {
    params: MppiParams,
    model: Model,
    chol: Cholesky2,
    crash_weights: Vec<f64>,
    plan: ControlSequence,
    last_update: ControlSequence,
    master_seed: u64,
    step_index: u64,
}

impl MppiController {
    pub fn new(params: MppiParams, model: VehicleParams, master_seed: u64) -> Result<Self> {
        params.validate()?;
        model.validate()?;
        let chol = Cholesky2::new(params.noise_covariance)?;
        let crash_weights = params.crash_weights();
        let plan = ControlSequence::zeros(params.horizon);
        Ok(Self {
            last_update: plan.clone(),
            plan,
            chol,
            crash_weights,
            params,
            model: Model::new(&model),
            master_seed,
            step_index: 0,
        })
    }

    pub fn params(&self) -> &MppiParams {
        &self.params
    }

    pub fn set_target_speed(&mut self, v: f64) {
        self.params.target_speed = v;
    }

    /// Plan that the next call will perturb.
    pub fn plan(&self) -> &ControlSequence {
        &self.plan
    }

    /// Optimized sequence from the most recent call, before the shift.
    pub fn last_update(&self) -> &ControlSequence {
        &self.last_update
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Seed for the samples of step `i`; sample `k` uses `seed ^ k`.
    pub fn step_seed(&self, i: u64) -> u64 {
        splitmix64(self.master_seed ^ splitmix64(i))
    }

    /// Sample, roll out, weigh, update; execute the first control and shift.
    ///
    /// `field` is queried with world coordinates. Without a field the
    /// controller brakes and leaves its plan untouched.
    pub fn control_step<F: CostField + ?Sized>(
        &mut self,
        state: &VehicleState,
        field: Option<&F>,
    ) -> Result<(Control, StepDiagnostics)> {
        if !state.is_finite() {
            return Err(Error::NonFiniteState(format!("{state:?}")));
        }
        let seed = self.step_seed(self.step_index);
        self.step_index += 1;
        let Some(field) = field else {
            return Ok((
                BRAKE_COMMAND,
                StepDiagnostics {
                    missing_frame: true,
                    ..Default::default()
                },
            ));
        };

        let batch = self.evaluate(state, field, seed)?;
        let updated = weighted_average(&batch);
        let n = batch.state_costs.len() as f64;
        let diag = StepDiagnostics {
            min_cost: batch.state_costs.iter().copied().fold(f64::INFINITY, f64::min),
            mean_cost: batch.state_costs.iter().sum::<f64>() / n,
            effective_sample_size: batch.effective_sample_size(),
            crash_fraction: batch.crashed.iter().filter(|c| **c).count() as f64 / n,
            missing_frame: false,
        };
        let u0 = updated.first().unwrap_or(Control::ZERO);
        self.plan = updated.shifted();
        self.last_update = updated;
        Ok((u0, diag))
    }

    /// Sample and score a full batch around the current plan.
    pub fn evaluate<F: CostField + ?Sized>(&self, state: &VehicleState, field: &F, seed: u64) -> Result<RolloutBatch> {
        let k_total = self.params.samples;
        let start = to_kin(state);
        let chunks: Vec<Vec<(ControlSequence, f64, bool)>> = (0..k_total.div_ceil(LANES))
            .into_par_iter()
            .map(|j| {
                let first = j * LANES;
                if first + LANES <= k_total {
                    let eps: [ControlSequence; LANES] =
                        std::array::from_fn(|l| sample_sequence(&self.plan, &self.chol, seed ^ (first + l) as u64));
                    let scores = self.score(&start, state.roll, &eps, field);
                    eps.into_iter().zip(scores).map(|(e, (c, f))| (e, c, f)).collect()
                } else {
                    (first..k_total)
                        .map(|k| {
                            let eps = [sample_sequence(&self.plan, &self.chol, seed ^ k as u64)];
                            let [(c, f)] = self.score(&start, state.roll, &eps, field);
                            let [e] = eps;
                            (e, c, f)
                        })
                        .collect()
                }
            })
            .collect();
        let mut samples = Vec::with_capacity(k_total);
        let mut costs = Vec::with_capacity(k_total);
        let mut crashed = Vec::with_capacity(k_total);
        for (e, c, f) in chunks.into_iter().flatten() {
            samples.push(e);
            costs.push(c);
            crashed.push(f);
        }
        let mut batch = RolloutBatch::new(samples, costs);
        batch.crashed = crashed;
        batch.compute_weights(&self.plan, &self.params)?;
        Ok(batch)
    }

    /// Fused rollout and trajectory cost for `N` samples in lockstep;
    /// non-finite rollouts score +inf.
    fn score<F: CostField + ?Sized, const N: usize>(
        &self,
        start: &Kin,
        start_roll: f64,
        eps: &[ControlSequence; N],
        field: &F,
    ) -> [(f64, bool); N] {
        let p = &self.params;
        let mut y = [*start; N];
        let mut roll = [start_roll; N];
        let mut latched = [false; N];
        let mut total = [0.0; N];
        for t in 0..=p.horizon {
            if t > 0 {
                let u: [Control; N] = std::array::from_fn(|l| eps[l].0[t - 1]);
                roll = self.model.advance(&mut y, &u, p.dt);
            }
            for l in 0..N {
                let x = kin_state(&y[l], roll[l]);
                let c = field.cost(x.px, x.py);
                let fired = crash_indicator(&x, c, &p.thresholds);
                latched[l] = if p.latch_indicator { latched[l] || fired } else { fired };
                total[l] += state_cost(&x, c, latched[l], self.crash_weights[t], p);
            }
        }
        std::array::from_fn(|l| {
            if total[l].is_finite() && y[l].iter().all(|v| v.is_finite()) {
                (total[l], latched[l])
            } else {
                (f64::INFINITY, true)
            }
        })
    }
}

/// Samples rolled out together by one worker.
const LANES: usize = 4;

/// Cost-relevant view of an integrator state (heading is not needed).
#[inline(always)]
fn kin_state(y: &Kin, roll: f64) -> VehicleState {
    VehicleState {
        px: y[0],
        py: y[1],
        yaw: 0.0,
        roll,
        vx: y[4],
        vy: y[5],
        yaw_rate: y[6],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmap::{CostMapGrid, GridFrame};
    use crate::geometry::Pose2;

    fn reference_params(target: f64) -> MppiParams {
        MppiParams {
            target_speed: target,
            ..Default::default()
        }
    }

    #[test]
    fn defaults_validate() {
        MppiParams::default().validate().unwrap();
        let mut p = MppiParams::default();
        p.noise_covariance = [[0.09, 0.1], [0.1, 0.04]];
        assert!(p.validate().is_err());
        p.noise_covariance = [[0.09, 0.01], [0.0, 0.04]];
        assert!(p.validate().is_err());
        let mut p = MppiParams::default();
        p.lambda = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn running_cost_zero_on_target() {
        let s = VehicleState {
            vx: 5.0,
            ..Default::default()
        };
        assert_eq!(running_cost(&s, 0, 0.0, &reference_params(5.0)), (0.0, false));
    }

    #[test]
    fn running_cost_speed_term() {
        let s = VehicleState {
            vx: 4.0,
            ..Default::default()
        };
        assert_eq!(running_cost(&s, 0, 0.0, &reference_params(5.0)).0, 4.25);
    }

    #[test]
    fn running_cost_discounted_crash() {
        let s = VehicleState {
            vx: 5.0,
            roll: 0.5,
            ..Default::default()
        };
        let (q, crashed) = running_cost(&s, 2, 0.0, &reference_params(5.0));
        assert!(crashed);
        assert_eq!(q, 8100.0);
    }

    #[test]
    fn slip_term_uses_guarded_speed() {
        let s = VehicleState {
            vx: 0.0,
            vy: 0.05,
            ..Default::default()
        };
        let p = reference_params(0.0);
        assert!((running_cost(&s, 0, 0.0, &p).0 - 1.75 * 0.25).abs() < 1e-12);
    }

    struct Uniform(f64);
    impl CostField for Uniform {
        fn cost(&self, _: f64, _: f64) -> f64 {
            self.0
        }
    }

    #[test]
    fn trajectory_cost_sums_and_latches() {
        let p = reference_params(5.0);
        let rest = VehicleState {
            vx: 5.0,
            ..Default::default()
        };
        assert_eq!(trajectory_cost(&[rest; 4], &Uniform(0.0), &p), 0.0);
        let slow = VehicleState {
            vx: 4.0,
            ..Default::default()
        };
        // 4.25 + 4.25
        assert_eq!(trajectory_cost(&[slow, slow], &Uniform(0.0), &p), 8.5);

        let wild = VehicleState {
            vx: 5.0,
            yaw_rate: 7.0,
            ..Default::default()
        };
        let (latched, crashed) = trajectory_cost_detail(&[rest, wild, rest, rest], &Uniform(0.0), &p);
        assert!(crashed);
        let expect = 10000.0 * (0.9 + 0.81 + 0.729);
        assert!((latched - expect).abs() < 1e-9);
        let mut unlatched = p.clone();
        unlatched.latch_indicator = false;
        let (c, _) = trajectory_cost_detail(&[rest, wild, rest, rest], &Uniform(0.0), &unlatched);
        assert!((c - 9000.0).abs() < 1e-9);
    }

    #[test]
    fn samples_deterministic_and_vanishing() {
        let u = ControlSequence::new(vec![Control::new(0.2, -0.1); 5]);
        let p = MppiParams {
            samples: 16,
            ..Default::default()
        };
        let a = sample_perturbations(&u, &p, 42).unwrap();
        let b = sample_perturbations(&u, &p, 42).unwrap();
        assert_eq!(a, b);
        let tiny = MppiParams {
            noise_covariance: [[1e-12, 0.0], [0.0, 1e-12]],
            ..p
        };
        for s in sample_perturbations(&u, &tiny, 7).unwrap() {
            for (e, c) in s.as_slice().iter().zip(u.as_slice()) {
                assert!((e.steering - c.steering).abs() < 1e-5);
                assert!((e.throttle - c.throttle).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn samples_respect_bounds() {
        let u = ControlSequence::new(vec![Control::new(0.95, -0.95); 10]);
        let p = MppiParams {
            samples: 200,
            ..Default::default()
        };
        for s in sample_perturbations(&u, &p, 3).unwrap() {
            for c in s.as_slice() {
                assert!(c.steering.abs() <= 1.0 && c.throttle.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn single_sample_update_returns_it() {
        let u = ControlSequence::zeros(3);
        let eps = ControlSequence::new(vec![Control::new(0.3, 0.1), Control::new(-0.2, 0.5), Control::new(0.0, 1.0)]);
        let batch = RolloutBatch::new(vec![eps.clone()], vec![123.0]);
        assert_eq!(mppi_update(&u, &batch, &MppiParams::default()).unwrap(), eps);
    }

    #[test]
    fn all_infinite_costs_underflow() {
        assert!(matches!(
            softmin_weights(&[f64::INFINITY, f64::NAN], 1.0),
            Err(Error::WeightUnderflow)
        ));
    }

    #[test]
    fn shift_repeats_last() {
        let s = ControlSequence::new(vec![Control::new(0.1, 0.0), Control::new(0.2, 0.0), Control::new(0.3, 0.0)]);
        let t = s.shifted();
        assert_eq!(t.as_slice(), &[Control::new(0.2, 0.0), Control::new(0.3, 0.0), Control::new(0.3, 0.0)]);
    }

    #[test]
    fn missing_frame_brakes() {
        let mut c = MppiController::new(MppiParams::default(), VehicleParams::default(), 1).unwrap();
        let before = c.plan().clone();
        let (u, d) = c
            .control_step::<CostMapGrid>(&VehicleState::default(), None)
            .unwrap();
        assert_eq!(u, BRAKE_COMMAND);
        assert!(d.missing_frame);
        assert_eq!(c.plan(), &before);
    }

    #[test]
    fn shift_relationship_between_calls() {
        let params = MppiParams {
            samples: 64,
            horizon: 20,
            ..Default::default()
        };
        let mut c = MppiController::new(params, VehicleParams::default(), 9).unwrap();
        let field = Uniform(0.1);
        let state = VehicleState {
            vx: 3.0,
            ..Default::default()
        };
        let (u0, _) = c.control_step(&state, Some(&field)).unwrap();
        let upd = c.last_update().clone();
        assert_eq!(u0, upd[0]);
        assert_eq!(&c.plan().as_slice()[..19], &upd.as_slice()[1..]);
        assert_eq!(c.plan()[19], upd[19]);
        let (u1, _) = c.control_step(&state, Some(&field)).unwrap();
        assert_eq!(u1, c.last_update()[0]);
    }

    #[test]
    fn all_crash_field_stays_bounded() {
        let params = MppiParams {
            samples: 100,
            ..Default::default()
        };
        let mut c = MppiController::new(params, VehicleParams::default(), 5).unwrap();
        let grid = CostMapGrid::uniform(20, 20, 1.0, Pose2::new(-10.0, -10.0, 0.0), GridFrame::World, 1.0).unwrap();
        let mut state = VehicleState {
            vx: 4.0,
            ..Default::default()
        };
        for _ in 0..10 {
            let (u, d) = c.control_step(&state, Some(&grid)).unwrap();
            assert_eq!(d.crash_fraction, 1.0);
            assert!(u.steering.abs() <= 1.0 && u.throttle.abs() <= 1.0);
            state = crate::dynamics::step(&state, u, &VehicleParams::default(), 0.025).unwrap();
        }
    }

    #[test]
    fn fused_score_matches_rollout_cost() {
        let params = MppiParams {
            samples: 10,
            horizon: 30,
            ..Default::default()
        };
        let model = VehicleParams::default();
        let c = MppiController::new(params.clone(), model.clone(), 3).unwrap();
        let grid = {
            let line = crate::costmap::Centerline::new(vec![[-5.0, 0.0], [30.0, 0.0]], false, 1.5).unwrap();
            crate::costmap::build_track_costmap(&line, 0.0625, 3.0).unwrap()
        };
        let state = VehicleState {
            vx: 4.0,
            vy: 0.1,
            ..Default::default()
        };
        let batch = c.evaluate(&state, &grid, 11).unwrap();
        // the fused kernel carries the heading as a unit vector across steps,
        // so it agrees with chained `step` calls up to rounding
        for (eps, &s) in batch.samples.iter().zip(&batch.state_costs) {
            let traj = crate::dynamics::rollout(&state, eps.as_slice(), &model, params.dt).unwrap();
            let reference = trajectory_cost(&traj, &grid, &params);
            assert!((reference - s).abs() <= 1e-9 * reference.abs().max(1.0), "{reference} vs {s}");
        }
    }
}
