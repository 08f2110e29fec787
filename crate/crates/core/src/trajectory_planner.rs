//! Continuous stage: fit controls to the coarse trajectory, then refine them
//! against the full cost.

use crate::costing::{
    cost_gradient, objective, rollout_adjoint, ControlObjective, CostContext, WeightScheme,
};
use crate::dynamics::{
    finite_difference_controls, rollout, rollout_trajectory, Control, ControlCaps,
};
use crate::error::{PlanError, Result};
use crate::optim::{minimize, OptimConfig, Status};
use crate::world::{Trajectory, VehicleState};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub heading_weight: f64,
    pub control_weight: f64,
    pub optim: OptimConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            heading_weight: 10.0,
            control_weight: 0.1,
            optim: OptimConfig {
                max_iter: 100,
                tol_g: 1e-9,
                tol_f: 1e-14,
                ..Default::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub controls: Vec<Control>,
    pub rms_error: f64,
    /// False when the iteration budget ran out or the search stalled.
    pub converged: bool,
}

fn flatten(u: &[Control]) -> Vec<f64> {
    u.iter().flat_map(|c| c.iter().copied()).collect()
}

fn unflatten(x: &[f64]) -> Vec<Control> {
    x.chunks(2).map(|c| [c[0], c[1]]).collect()
}

fn bounds(caps: &ControlCaps, n: usize) -> Vec<f64> {
    (0..n).flat_map(|_| caps.bounds()).collect()
}

/// Fit objective: squared position error, sine/cosine heading mismatch and
/// control magnitude.
pub fn fit_objective(target: &Trajectory, u: &[Control], cfg: &FitConfig) -> (f64, Vec<Control>) {
    let states = rollout(&target.states[0], u, target.dt);
    let mut f = 0.0;
    let mut direct = vec![[0.0; 7]; states.len()];
    for (t, (s, h)) in states.iter().zip(&target.states).enumerate().skip(1) {
        let (ex, ey) = (s.x - h.x, s.y - h.y);
        let (ds, dc) = (s.theta.sin() - h.theta.sin(), s.theta.cos() - h.theta.cos());
        f += ex * ex + ey * ey + cfg.heading_weight * (ds * ds + dc * dc);
        direct[t][0] = 2.0 * ex;
        direct[t][1] = 2.0 * ey;
        direct[t][2] = cfg.heading_weight * 2.0 * (ds * s.theta.cos() - dc * s.theta.sin());
    }
    let mut g = rollout_adjoint(&target.states[0], u, target.dt, &direct);
    for (gi, ui) in g.iter_mut().zip(u) {
        f += cfg.control_weight * (ui[0] * ui[0] + ui[1] * ui[1]);
        gi[0] += 2.0 * cfg.control_weight * ui[0];
        gi[1] += 2.0 * cfg.control_weight * ui[1];
    }
    (f, g)
}

/// Controls whose rollout best reproduces `coarse`, starting from the
/// finite-difference estimate.
pub fn fit_controls(coarse: &Trajectory, caps: &ControlCaps, cfg: &FitConfig) -> Result<FitResult> {
    let mut u0 = finite_difference_controls(coarse);
    for u in &mut u0 {
        caps.project(u);
    }
    let n = u0.len();
    let r = minimize(
        |x| {
            let (f, g) = fit_objective(coarse, &unflatten(x), cfg);
            (f, flatten(&g))
        },
        &flatten(&u0),
        &bounds(caps, n),
        &cfg.optim,
    )?;
    let controls = unflatten(&r.x);
    let states = rollout(&coarse.states[0], &controls, coarse.dt);
    let sq: f64 = states
        .iter()
        .zip(&coarse.states)
        .skip(1)
        .map(|(a, b)| (a.x - b.x).powi(2) + (a.y - b.y).powi(2))
        .sum();
    let rms_error = (sq / n.max(1) as f64).sqrt();
    if rms_error > 0.5 {
        log::warn!(
            "control fit residual {rms_error:.3} m after {} iterations",
            r.iterations
        );
    }
    Ok(FitResult {
        controls,
        rms_error,
        converged: matches!(r.status, Status::GradientTolerance | Status::CostTolerance),
    })
}

#[derive(Clone, Debug)]
pub struct RefineResult {
    pub controls: Vec<Control>,
    pub trajectory: Trajectory,
    pub f_initial: f64,
    pub f_final: f64,
    pub iterations: usize,
    pub status: Status,
}

/// Minimizes the cost over the controls from `u0`.
pub fn refine(
    u0: &[Control],
    ctx: &CostContext,
    x0: &VehicleState,
    w: &WeightScheme,
    caps: &ControlCaps,
    cfg: &OptimConfig,
) -> Result<RefineResult> {
    let obj = ControlObjective::new(ctx, *x0, w);
    let mut start = u0.to_vec();
    for u in &mut start {
        caps.project(u);
    }
    let r = minimize(
        |x| {
            let (f, g) = cost_gradient::<f64>(&obj, &unflatten(x));
            (f, flatten(&g))
        },
        &flatten(&start),
        &bounds(caps, start.len()),
        cfg,
    )
    .map_err(|e| match e {
        PlanError::NumericalFailure(m) => PlanError::NumericalFailure(format!(
            "refinement of behavior {}: {m}",
            ctx.behavior.kind.name()
        )),
        other => other,
    })?;
    let controls = unflatten(&r.x);
    if r.status == Status::Stalled {
        log::debug!("refinement stalled after {} iterations", r.iterations);
    }
    let f_final = objective(&obj, &controls);
    Ok(RefineResult {
        trajectory: rollout_trajectory(x0, &controls, ctx.dt),
        controls,
        f_initial: r.f_initial,
        f_final,
        iterations: r.iterations,
        status: r.status,
    })
}
