//! Combinatorial Calabi flow and its p-th analogue, integrated in u-coordinates.
//!
//! The flow is `du/dt = Delta_p K`. Each step is classical RK4; a step is
//! retried with half the time step when a stage leaves the admissible set or,
//! at `p = 2`, when the Calabi energy would increase.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::laplacian::{
    apply_p_delta, assemble, calabi_energy, r_from_u, u_from_r, LaplacianAssembly, LaplacianError,
    PackingMetric,
};
use crate::mesh::{check_star_condition, vertex_adjacency, WeightedTriangulation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error("weight condition fails at face {face}, corner {corner} (gamma = {gamma})")]
    StarViolation { face: usize, corner: usize, gamma: f64 },
    #[error("step failed after {halvings} halvings (last dt {dt}): {reason}")]
    StepFailure { dt: f64, halvings: u32, reason: String },
    #[error(transparent)]
    Laplacian(#[from] LaplacianError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub p: f64,
    /// Initial and largest time step.
    pub dt: f64,
    pub t_max: f64,
    /// Converged once `max |K_i| <= k_tol`.
    pub k_tol: f64,
    pub max_halvings: u32,
    /// Record every n-th accepted step (the first and last states are always kept).
    pub trace_stride: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            dt: 1e-2,
            t_max: 1e3,
            k_tol: 1e-8,
            max_halvings: 40,
            trace_stride: 1,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |msg: String| Err(FlowError::InvalidConfig(msg));
        if !(self.p > 1.0 && self.p.is_finite()) {
            return bad(format!("p = {} (need p > 1)", self.p));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} (need dt > 0)", self.dt));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max = {} (need t_max > 0)", self.t_max));
        }
        if !(self.k_tol >= 0.0) {
            return bad(format!("k_tol = {} (need k_tol >= 0)", self.k_tol));
        }
        if self.trace_stride == 0 {
            return bad("trace_stride must be at least 1".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub r: Vec<f64>,
    pub k: Vec<f64>,
    pub energy: f64,
    pub max_abs_u_velocity: f64,
    pub min_r: f64,
    /// Step that produced this state; 0 for the initial state.
    pub dt: f64,
}

impl FlowSample {
    pub fn max_abs_k(&self) -> f64 {
        max_abs(&self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Horizon,
    StepFailure,
}

/// State at the point where a step could not be completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFailureInfo {
    pub t: f64,
    pub dt: f64,
    pub r: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub config: FlowConfig,
    pub samples: Vec<FlowSample>,
    pub termination: Termination,
    pub failure: Option<StepFailureInfo>,
    pub steps: u64,
    pub rejected_steps: u64,
    /// Largest `|du/dt|` over every RK stage of every accepted step.
    pub max_abs_u_velocity: f64,
    pub sup_a: f64,
    pub sup_b: f64,
    pub max_degree: usize,
    /// `velocity_bound(d, sup A, sup B, p)`.
    pub velocity_bound: f64,
    pub velocity_within_bound: bool,
    /// Accepted steps whose curvature left `((2 - corners_i) pi, 2 pi)`.
    pub k_range_violations: u64,
    /// Accepted steps where `min_r` fell below `r_lower_bound_curve(min_r(0), C, t)`
    /// with `C = max_abs_u_velocity`.
    pub lower_bound_violations: u64,
    /// Smallest `min_r(t) - r_lower_bound_curve(...)` over accepted steps.
    pub lower_bound_margin: f64,
    /// Accepted steps with an energy increase (always 0 at `p = 2`).
    pub energy_increases: u64,
    pub wall_time: f64,
}

impl FlowTrace {
    pub fn last(&self) -> &FlowSample {
        self.samples.last().expect("a trace holds at least the initial state")
    }

    pub fn final_max_abs_k(&self) -> f64 {
        self.last().max_abs_k()
    }

    /// CSV with header `t,energy,max_abs_K,min_r,max_abs_u_vel,dt`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,energy,max_abs_K,min_r,max_abs_u_vel,dt\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e}\n",
                s.t,
                s.energy,
                s.max_abs_k(),
                s.min_r,
                s.max_abs_u_velocity,
                s.dt
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub dt_used: f64,
    pub halvings: u32,
    pub energy_before: f64,
    pub energy_after: f64,
    /// Largest `|du/dt|` over the four stages.
    pub max_stage_velocity: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Everything the integrator needs at one metric.
struct State {
    r: PackingMetric,
    u: Vec<f64>,
    asm: LaplacianAssembly,
    rhs: Vec<f64>,
    energy: f64,
}

impl State {
    fn new(mesh: &WeightedTriangulation, r: PackingMetric, p: f64) -> Result<Self, LaplacianError> {
        let u = r.u();
        Self::with_u(mesh, r, u, p)
    }

    fn with_u(
        mesh: &WeightedTriangulation,
        r: PackingMetric,
        u: Vec<f64>,
        p: f64,
    ) -> Result<Self, LaplacianError> {
        let asm = assemble(mesh, &r)?;
        let rhs = apply_p_delta(&asm, &asm.k, p)?;
        let energy = calabi_energy(&asm.k);
        Ok(Self { r, u, asm, rhs, energy })
    }
}

/// Radii for `u`, reusing the old radius wherever `u` did not move so that a
/// zero update returns the metric bit for bit.
fn metric_for(u: &[f64], prev_u: &[f64], prev_r: &[f64]) -> Result<PackingMetric, LaplacianError> {
    let mut radii = Vec::with_capacity(u.len());
    for (i, (&x, &x0)) in u.iter().zip(prev_u).enumerate() {
        if x == x0 {
            radii.push(prev_r[i]);
        } else if !(x < 0.0) {
            return Err(LaplacianError::InvalidU { index: i, value: x });
        } else {
            radii.push(r_from_u(x));
        }
    }
    PackingMetric::new(radii)
}

fn rhs_at(mesh: &WeightedTriangulation, u: &[f64], p: f64) -> Result<Vec<f64>, LaplacianError> {
    let asm = assemble(mesh, &PackingMetric::from_u(u)?)?;
    apply_p_delta(&asm, &asm.k, p)
}

fn axpy(u: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    u.iter().zip(k).map(|(x, y)| x + a * y).collect()
}

/// One RK4 attempt; returns the next state and the largest stage velocity.
fn rk4_attempt(
    mesh: &WeightedTriangulation,
    s: &State,
    dt: f64,
    p: f64,
) -> Result<(State, f64), LaplacianError> {
    let k1 = &s.rhs;
    let k2 = rhs_at(mesh, &axpy(&s.u, dt / 2.0, k1), p)?;
    let k3 = rhs_at(mesh, &axpy(&s.u, dt / 2.0, &k2), p)?;
    let k4 = rhs_at(mesh, &axpy(&s.u, dt, &k3), p)?;
    let u_next: Vec<f64> = (0..s.u.len())
        .map(|i| s.u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    let vmax = [k1.as_slice(), &k2, &k3, &k4]
        .iter()
        .map(|k| max_abs(k))
        .fold(0.0, f64::max);
    let r_next = metric_for(&u_next, &s.u, s.r.radii())?;
    Ok((State::with_u(mesh, r_next, u_next, p)?, vmax))
}

/// Halves `dt` until an attempt is admissible (and, at `p = 2`, does not raise the energy).
fn advance(
    mesh: &WeightedTriangulation,
    s: &State,
    dt: f64,
    p: f64,
    max_halvings: u32,
) -> Result<(State, StepDiagnostics), FlowError> {
    let mut dt = dt;
    let mut reason = String::new();
    for halvings in 0..=max_halvings {
        match rk4_attempt(mesh, s, dt, p) {
            Ok((next, vmax)) if p != 2.0 || next.energy <= s.energy => {
                let diag = StepDiagnostics {
                    dt_used: dt,
                    halvings,
                    energy_before: s.energy,
                    energy_after: next.energy,
                    max_stage_velocity: vmax,
                };
                return Ok((next, diag));
            }
            Ok((next, _)) => {
                reason = format!("energy rose from {:e} to {:e}", s.energy, next.energy);
            }
            Err(e) => reason = format!("stage left the admissible set: {e}"),
        }
        if halvings < max_halvings {
            dt /= 2.0;
        }
    }
    Err(FlowError::StepFailure {
        dt,
        halvings: max_halvings,
        reason,
    })
}

fn check_star(mesh: &WeightedTriangulation) -> Result<(), FlowError> {
    let report = check_star_condition(mesh);
    match report.violations.first() {
        Some(v) => Err(FlowError::StarViolation {
            face: v.face,
            corner: v.corner,
            gamma: v.gamma,
        }),
        None => Ok(()),
    }
}

fn check_p(p: f64) -> Result<(), FlowError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(FlowError::InvalidConfig(format!("p = {p} (need p > 1)")));
    }
    Ok(())
}

/// `du/dt = Delta_p K` at `r`; at `p = 2` this is `-L K`.
pub fn flow_rhs(mesh: &WeightedTriangulation, r: &PackingMetric, p: f64) -> Result<Vec<f64>, FlowError> {
    check_p(p)?;
    check_star(mesh)?;
    let asm = assemble(mesh, r)?;
    Ok(apply_p_delta(&asm, &asm.k, p)?)
}

/// One accepted RK4 step from `r`, starting at `dt` and halving on rejection.
pub fn step(
    mesh: &WeightedTriangulation,
    r: &PackingMetric,
    dt: f64,
    p: f64,
    max_halvings: u32,
) -> Result<(PackingMetric, StepDiagnostics), FlowError> {
    check_p(p)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FlowError::InvalidConfig(format!("dt = {dt} (need dt > 0)")));
    }
    check_star(mesh)?;
    let s = State::new(mesh, r.clone(), p)?;
    let (next, diag) = advance(mesh, &s, dt, p, max_halvings)?;
    Ok((next.r, diag))
}

/// `d C2 (d pi)^(p-1) + C1 (d + 2) pi`: bound on `|du/dt|` given `A <= C1` and `B <= C2`.
pub fn velocity_bound(d: usize, c1: f64, c2: f64, p: f64) -> f64 {
    let d = d as f64;
    d * c2 * (d * PI).powf(p - 1.0) + c1 * (d + 2.0) * PI
}

/// Lower bound on a radius after time `t` when `|du/dt| <= c`:
/// `2 artanh(tanh(r0 / 2) e^(-c t))`.
pub fn r_lower_bound_curve(r0: f64, c: f64, t: f64) -> f64 {
    let shift = c * t;
    if shift == 0.0 {
        return r0;
    }
    r_from_u(u_from_r(r0) - shift)
}

fn sample_of(s: &State, t: f64, dt: f64) -> FlowSample {
    FlowSample {
        t,
        r: s.r.radii().to_vec(),
        k: s.asm.k.clone(),
        energy: s.energy,
        max_abs_u_velocity: max_abs(&s.rhs),
        min_r: min_of(s.r.radii()),
        dt,
    }
}

/// Integrates from `r0` until convergence, the horizon, or a failed step.
pub fn run_flow(
    mesh: &WeightedTriangulation,
    r0: &PackingMetric,
    cfg: &FlowConfig,
) -> Result<FlowTrace, FlowError> {
    let started = Instant::now();
    cfg.validate()?;
    check_star(mesh)?;
    let corners = mesh.corner_counts();
    let max_degree = vertex_adjacency(mesh).max_degree;

    let mut s = State::new(mesh, r0.clone(), cfg.p)?;
    let min_r0 = min_of(r0.radii());
    let mut t = 0.0;
    let mut dt = cfg.dt;
    let mut samples = vec![sample_of(&s, 0.0, 0.0)];
    let mut history = vec![(0.0, min_r0)];
    let (mut steps, mut rejected, mut k_range, mut increases) = (0u64, 0u64, 0u64, 0u64);
    let mut vmax = max_abs(&s.rhs);
    let mut sup_a = max_abs(&s.asm.a);
    let mut sup_b = max_abs(&s.asm.b);
    let mut failure = None;
    let mut last_recorded = 0u64;
    let mut last_dt = 0.0;

    let termination = loop {
        if max_abs(&s.asm.k) <= cfg.k_tol {
            break Termination::Converged;
        }
        if t >= cfg.t_max {
            break Termination::Horizon;
        }
        let try_dt = dt.min(cfg.t_max - t);
        match advance(mesh, &s, try_dt, cfg.p, cfg.max_halvings) {
            Ok((next, diag)) => {
                steps += 1;
                rejected += u64::from(diag.halvings);
                t += diag.dt_used;
                vmax = vmax.max(diag.max_stage_velocity);
                sup_a = sup_a.max(max_abs(&next.asm.a));
                sup_b = sup_b.max(max_abs(&next.asm.b));
                if diag.energy_after > diag.energy_before {
                    increases += 1;
                }
                let in_range = next.asm.k.iter().zip(&corners).all(|(&k, &c)| {
                    k > (2.0 - c as f64) * PI && k < 2.0 * PI
                });
                if !in_range {
                    k_range += 1;
                }
                history.push((t, min_of(next.r.radii())));
                if diag.halvings == 0 {
                    dt = cfg.dt.min(2.0 * diag.dt_used);
                } else {
                    dt = diag.dt_used;
                }
                s = next;
                last_dt = diag.dt_used;
                let done = max_abs(&s.asm.k) <= cfg.k_tol || t >= cfg.t_max;
                if done || steps % cfg.trace_stride as u64 == 0 {
                    samples.push(sample_of(&s, t, last_dt));
                    last_recorded = steps;
                }
            }
            Err(FlowError::StepFailure { dt: last_dt, reason, .. }) => {
                failure = Some(StepFailureInfo {
                    t,
                    dt: last_dt,
                    r: s.r.radii().to_vec(),
                    reason,
                });
                break Termination::StepFailure;
            }
            Err(e) => return Err(e),
        }
    };
    if last_recorded != steps {
        samples.push(sample_of(&s, t, last_dt));
    }

    let mut lower_bound_violations = 0u64;
    let mut lower_bound_margin = f64::INFINITY;
    for &(tt, m) in &history {
        let margin = m - r_lower_bound_curve(min_r0, vmax, tt);
        lower_bound_margin = lower_bound_margin.min(margin);
        if margin < 0.0 {
            lower_bound_violations += 1;
        }
    }
    let bound = velocity_bound(max_degree, sup_a, sup_b, cfg.p);

    Ok(FlowTrace {
        config: *cfg,
        samples,
        termination,
        failure,
        steps,
        rejected_steps: rejected,
        max_abs_u_velocity: vmax,
        sup_a,
        sup_b,
        max_degree,
        velocity_bound: bound,
        velocity_within_bound: vmax <= bound,
        k_range_violations: k_range,
        lower_bound_violations,
        lower_bound_margin,
        energy_increases: increases,
        wall_time: started.elapsed().as_secs_f64(),
    })
}
