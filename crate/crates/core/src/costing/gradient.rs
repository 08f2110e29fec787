//! Gradients of the cost with respect to the control sequence.
//!
//! Every feature of row `t` depends only on `(X_{t-1}, X_t)`, so local
//! partials come from small forward-mode jets and an adjoint sweep through
//! the step Jacobians assembles the full gradient. Running the same routine
//! on dual numbers gives Hessian-vector products.

use super::{
    foot_points, pair_features, state_features, CostContext, CostVector, WeightScheme, NUM_FEATURES,
};
use crate::dynamics::{rollout, step_with_jacobian, Control, StepJacobian};
use crate::scalar::{Dual, Jet, Scalar};
use crate::world::VehicleState;

/// The refinement objective `u -> f(rollout(x0, u))` for fixed weights.
pub struct ControlObjective<'a> {
    pub ctx: &'a CostContext<'a>,
    pub x0: VehicleState,
    /// `sign_k * w[b, t, k]` per row.
    pub signed: Vec<[f64; NUM_FEATURES]>,
}

impl<'a> ControlObjective<'a> {
    pub fn new(ctx: &'a CostContext<'a>, x0: VehicleState, w: &WeightScheme) -> Self {
        Self {
            ctx,
            x0,
            signed: w.signed_rows(ctx.behavior_index, ctx.steps + 1),
        }
    }

    fn constant_term(&self) -> f64 {
        self.signed[0][super::idx::ROUTE_LANECHANGE] * self.ctx.route[0]
            + self.signed[0][super::idx::ROUTE_DEADEND] * self.ctx.route[1]
    }
}

fn real_states<S: Scalar>(states: &[VehicleState<S>]) -> Vec<VehicleState> {
    states.iter().map(|s| s.map(|v| v.re())).collect()
}

/// Objective value.
pub fn objective(obj: &ControlObjective, u: &[Control]) -> f64 {
    let states = rollout(&obj.x0, u, obj.ctx.dt);
    let feet = foot_points(obj.ctx, &states);
    let mut total = obj.constant_term();
    let mut s_prev = feet[0];
    for t in 1..states.len() {
        let (f, s) = state_features(obj.ctx, t, &states[t], feet[t]);
        let g = pair_features(obj.ctx, &states[t - 1], &states[t], s_prev, s);
        for k in 0..NUM_FEATURES {
            total += obj.signed[t][k] * (f[k] + g[k]);
        }
        s_prev = s;
    }
    total
}

fn seed<S: Scalar, const N: usize>(x: &VehicleState<S>, offset: usize) -> VehicleState<Jet<S, N>> {
    let a = x.to_array();
    VehicleState::from_array(std::array::from_fn(|i| Jet::variable(a[i], offset + i)))
}

/// Objective value and gradient, generic so that dual inputs yield
/// directional derivatives of the gradient.
pub fn cost_gradient<S: Scalar>(obj: &ControlObjective, u: &[Control<S>]) -> (S, Vec<Control<S>>) {
    let ctx = obj.ctx;
    let dt = ctx.dt;
    let n = u.len();
    let mut states: Vec<VehicleState<S>> = Vec::with_capacity(n + 1);
    let mut jacs: Vec<StepJacobian<S>> = Vec::with_capacity(n);
    states.push(obj.x0.map(S::cst));
    for ut in u {
        let (next, jac) = step_with_jacobian(states.last().unwrap(), ut, dt);
        states.push(next);
        jacs.push(jac);
    }
    let feet = foot_points(ctx, &real_states(&states));

    let mut value = S::cst(obj.constant_term());
    // direct[t] = partial of the objective with respect to X_t
    let mut direct = vec![[S::zero(); 7]; n + 1];
    let mut s_val = vec![S::cst(ctx.s0); n + 1];
    let mut s_grad = vec![[S::zero(); 7]; n + 1];
    for t in 1..=n {
        let xj = seed::<S, 7>(&states[t], 0);
        let (f, s) = state_features(ctx, t, &xj, feet[t]);
        let mut local = Jet::<S, 7>::constant(S::zero());
        for k in 0..NUM_FEATURES {
            if obj.signed[t][k] != 0.0 {
                local += f[k] * obj.signed[t][k];
            }
        }
        value += local.v;
        for i in 0..7 {
            direct[t][i] += local.d[i];
        }
        s_val[t] = s.v;
        s_grad[t] = s.d;
    }
    for t in 1..=n {
        let prev = seed::<S, 16>(&states[t - 1], 0);
        let cur = seed::<S, 16>(&states[t], 7);
        let sp = Jet::<S, 16>::variable(s_val[t - 1], 14);
        let sc = Jet::<S, 16>::variable(s_val[t], 15);
        let f = pair_features(ctx, &prev, &cur, sp, sc);
        let mut local = Jet::<S, 16>::constant(S::zero());
        for k in 0..NUM_FEATURES {
            if obj.signed[t][k] != 0.0 {
                local += f[k] * obj.signed[t][k];
            }
        }
        value += local.v;
        for i in 0..7 {
            direct[t - 1][i] += local.d[i] + local.d[14] * s_grad[t - 1][i];
            direct[t][i] += local.d[7 + i] + local.d[15] * s_grad[t][i];
        }
    }
    (value, adjoint(&jacs, &direct))
}

/// Pulls state partials back to the controls through the step Jacobians.
fn adjoint<S: Scalar>(jacs: &[StepJacobian<S>], direct: &[[S; 7]]) -> Vec<Control<S>> {
    let n = jacs.len();
    let mut grad = vec![[S::zero(); 2]; n];
    let mut lambda = direct[n];
    for t in (1..=n).rev() {
        let jac = &jacs[t - 1];
        for k in 0..2 {
            let mut acc = S::zero();
            for i in 0..7 {
                acc += jac.ju[i][k] * lambda[i];
            }
            grad[t - 1][k] = acc;
        }
        let mut next = direct[t - 1];
        for k in 0..7 {
            for i in 0..7 {
                next[k] += jac.jx[i][k] * lambda[i];
            }
        }
        lambda = next;
    }
    grad
}

/// Gradient with respect to the controls of any function whose partials with
/// respect to the rolled-out states are `direct[t]`.
pub fn rollout_adjoint(
    x0: &VehicleState,
    u: &[Control],
    dt: f64,
    direct: &[[f64; 7]],
) -> Vec<Control> {
    let mut x = *x0;
    let mut jacs = Vec::with_capacity(u.len());
    for ut in u {
        let (next, jac) = step_with_jacobian(&x, ut, dt);
        jacs.push(jac);
        x = next;
    }
    adjoint(&jacs, direct)
}

/// Hessian of the objective applied to `v`.
pub fn hessian_vector(obj: &ControlObjective, u: &[Control], v: &[Control]) -> Vec<Control> {
    let ud: Vec<Control<Dual>> = u
        .iter()
        .zip(v)
        .map(|(a, b)| [Jet { v: a[0], d: [b[0]] }, Jet { v: a[1], d: [b[1]] }])
        .collect();
    let (_, g) = cost_gradient(obj, &ud);
    g.iter().map(|c| [c[0].d[0], c[1].d[0]]).collect()
}

/// Directional derivative of every feature slot along `v`.
pub fn feature_directional(
    ctx: &CostContext,
    x0: &VehicleState,
    u: &[Control],
    v: &[Control],
) -> CostVector {
    let ud: Vec<Control<Dual>> = u
        .iter()
        .zip(v)
        .map(|(a, b)| [Jet { v: a[0], d: [b[0]] }, Jet { v: a[1], d: [b[1]] }])
        .collect();
    let states = rollout(&x0.map(Dual::cst), &ud, ctx.dt);
    let feet = foot_points(ctx, &real_states(&states));
    let mut out = CostVector::zeros(states.len());
    let mut s_prev = Dual::cst(ctx.s0);
    for t in 1..states.len() {
        let (f, s) = state_features(ctx, t, &states[t], feet[t]);
        let g = pair_features(ctx, &states[t - 1], &states[t], s_prev, s);
        for k in 0..NUM_FEATURES {
            out.rows[t][k] = f[k].d[0] + g[k].d[0];
        }
        s_prev = s;
    }
    out
}
