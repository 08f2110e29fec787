//! Weight learning from demonstrations: structured max-margin over the
//! discrete candidate set, imitation through a truncated unroll of the
//! continuous optimizer, and multiplicative weight updates.

use crate::behavioral::{derive_side_assignment, evaluate_candidates};
use crate::costing::{
    cost_gradient, evaluate, feature_directional, hessian_vector, idx, objective, rollout_adjoint,
    total_cost, ControlObjective, CostContext, CostVector, SideAssignment, Stage, WeightScheme,
    WeightVariant,
};
use crate::dynamics::{rollout, Control};
use crate::error::{PlanError, Result};
use crate::optim::OptimConfig;
use crate::planner::PlannerConfig;
use crate::trajectory_planner::{fit_controls, refine};
use crate::world::{allowed_behaviors, Behavior, BehaviorKind, Scenario, Trajectory, VehicleState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One demonstration: a scene with the behavior and trajectory driven in it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoExample {
    #[serde(default)]
    pub id: String,
    pub scenario: Scenario,
    pub human_behavior: BehaviorKind,
    pub human_trajectory: Trajectory,
    #[serde(default)]
    pub human_controls: Option<Vec<Control>>,
}

/// Dissimilarity between a candidate and the demonstration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskLoss {
    /// Multiplies the summed L1 position distance.
    pub l1_scale: f64,
    pub behavior_mismatch: f64,
    pub overlap: f64,
    pub lane_violation: f64,
}

impl Default for TaskLoss {
    fn default() -> Self {
        Self {
            l1_scale: 0.1,
            behavior_mismatch: 5.0,
            overlap: 10.0,
            lane_violation: 2.0,
        }
    }
}

/// What the task loss looks at in a `(behavior, trajectory)` pair.
#[derive(Clone, Copy, Debug)]
pub struct Outcome<'a> {
    pub behavior: BehaviorKind,
    pub states: &'a [VehicleState],
    pub overlap: bool,
    pub lane_violation: bool,
}

impl<'a> Outcome<'a> {
    /// Reads the outcome flags from a behavioral-stage feature matrix.
    pub fn from_costs(behavior: BehaviorKind, states: &'a [VehicleState], c: &CostVector) -> Self {
        let tot = c.totals();
        Self {
            behavior,
            states,
            overlap: tot[idx::OVERLAP] > 0.0,
            lane_violation: tot[idx::LANE_LEFT] + tot[idx::LANE_RIGHT] > 0.0,
        }
    }
}

impl TaskLoss {
    /// Outcome offsets only count when the human avoided the outcome.
    pub fn eval(&self, human: &Outcome, cand: &Outcome) -> f64 {
        let l1: f64 = human
            .states
            .iter()
            .zip(cand.states)
            .skip(1)
            .map(|(h, c)| (h.x - c.x).abs() + (h.y - c.y).abs())
            .sum();
        let mut d = self.l1_scale * l1;
        if human.behavior != cand.behavior {
            d += self.behavior_mismatch;
        }
        if cand.overlap && !human.overlap {
            d += self.overlap;
        }
        if cand.lane_violation && !human.lane_violation {
            d += self.lane_violation;
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub lambda_w: f64,
    pub lambda_m: f64,
    pub lambda_i: f64,
    pub top_k: usize,
    /// Unrolled gradient steps `M`.
    pub bptt_steps: usize,
    /// Inner step size `eta`, capped per example at `1 / lambda_max` of the
    /// control Hessian.
    pub eta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub batch_margin: usize,
    pub batch_imitation: usize,
    pub pretrain_steps: usize,
    /// Total update steps, pretraining included.
    pub total_steps: usize,
    pub validate_every: usize,
    pub seed: u64,
    pub power_iterations: usize,
    /// Divides each gradient coordinate by the root of its accumulated
    /// squares before the multiplicative update.
    pub adaptive: bool,
    /// Runs the unrolled steps in controls rescaled by the inverse square
    /// root of the Hessian diagonal at the refined optimum.
    pub precondition: bool,
    pub task_loss: TaskLoss,
    /// Refinement settings used while training.
    pub refine: OptimConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            lambda_w: 1e-3,
            lambda_m: 1.0,
            lambda_i: 1.0,
            top_k: 5,
            bptt_steps: 10,
            eta: 1e-2,
            gamma: 0.97,
            alpha: 1e-2,
            batch_margin: 8,
            batch_imitation: 4,
            pretrain_steps: 2000,
            total_steps: 4000,
            validate_every: 50,
            seed: 0,
            power_iterations: 10,
            adaptive: false,
            precondition: false,
            task_loss: TaskLoss::default(),
            refine: OptimConfig {
                max_iter: 60,
                ..Default::default()
            },
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PlanError::InvalidScenario(format!("learn config: {m}")));
        if [self.lambda_w, self.lambda_m, self.lambda_i]
            .iter()
            .any(|l| !(*l >= 0.0))
        {
            return bad("loss scales must be non-negative");
        }
        if !(self.eta > 0.0) || !(self.alpha > 0.0) {
            return bad("eta and alpha must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.top_k == 0 || self.bptt_steps == 0 {
            return bad("top_k and bptt_steps must be at least 1");
        }
        if self.batch_margin == 0 || self.batch_imitation == 0 {
            return bad("batch sizes must be at least 1");
        }
        Ok(())
    }
}

/// Sums rows into one when the weight layout has no time axis.
pub fn compact(c: &CostVector, variant: WeightVariant) -> CostVector {
    match variant {
        WeightVariant::PerBehaviorPerTimestep => c.clone(),
        _ => CostVector {
            rows: vec![c.totals()],
        },
    }
}

/// A costed candidate of the loss-augmented search.
#[derive(Clone, Debug)]
pub struct ScoredCandidate {
    pub behavior: usize,
    pub cost: CostVector,
    pub delta: f64,
}

/// Everything about a demonstration that does not depend on the weights.
#[derive(Clone, Debug)]
pub struct PreparedDemo<'a> {
    pub demo: &'a DemoExample,
    pub human_behavior: Behavior,
    pub human_cost: CostVector,
    pub candidates: Vec<ScoredCandidate>,
    pub side: SideAssignment,
    pub human_controls: Vec<Control>,
}

pub fn prepare<'a>(
    demo: &'a DemoExample,
    planner: &PlannerConfig,
    task: &TaskLoss,
    variant: WeightVariant,
) -> Result<PreparedDemo<'a>> {
    let sc = &demo.scenario;
    let tag = |e: PlanError| PlanError::InvalidScenario(format!("demo {}: {e}", demo.id));
    if demo.human_trajectory.steps() != sc.steps() {
        return Err(tag(PlanError::InvalidScenario(format!(
            "human trajectory has {} steps, scenario has {}",
            demo.human_trajectory.steps(),
            sc.steps()
        ))));
    }
    let human_behavior = allowed_behaviors(sc, &planner.path)
        .map_err(tag)?
        .into_iter()
        .find(|b| b.kind == demo.human_behavior)
        .ok_or_else(|| {
            tag(PlanError::InvalidScenario(format!(
                "{} is not available",
                demo.human_behavior.name()
            )))
        })?;
    let ctx = CostContext::new(sc, &human_behavior, &planner.cost, Stage::Behavioral, None)
        .map_err(tag)?;
    let human_full = evaluate(&ctx, &demo.human_trajectory);
    let human = Outcome::from_costs(
        demo.human_behavior,
        &demo.human_trajectory.states,
        &human_full,
    );

    let sets = evaluate_candidates(sc, &planner.path, &planner.grid, &planner.cost).map_err(tag)?;
    let mut candidates = Vec::new();
    for set in &sets {
        for (cand, c) in set.candidates.iter().zip(&set.costs) {
            let out = Outcome::from_costs(set.behavior.kind, &cand.trajectory.states, c);
            candidates.push(ScoredCandidate {
                behavior: set.behavior.kind.index(),
                cost: compact(c, variant),
                delta: task.eval(&human, &out),
            });
        }
    }
    let side = derive_side_assignment(&demo.human_trajectory, sc, &planner.cost);
    let human_controls = match &demo.human_controls {
        Some(u) if u.len() == sc.steps() => u.clone(),
        Some(_) => {
            return Err(tag(PlanError::InvalidScenario(
                "human controls do not match the horizon".into(),
            )))
        }
        None => fit_controls(&demo.human_trajectory, &planner.caps, &planner.fit)?.controls,
    };
    let human_cost = compact(&human_full, variant);
    Ok(PreparedDemo {
        demo,
        human_cost,
        human_behavior,
        candidates,
        side,
        human_controls,
    })
}

/// Structured hinge loss of one example, adding its subgradient into `grad`.
/// The human pair is part of the loss-augmented set, so the loss is never
/// negative.
pub fn max_margin_example(p: &PreparedDemo, w: &WeightScheme, k: usize, grad: &mut [f64]) -> f64 {
    let hb = p.demo.human_behavior.index();
    let f_h = total_cost(&p.human_cost, w, hb);
    // (score, candidate index or None for the human)
    let mut scored: Vec<(f64, Option<usize>)> = Vec::with_capacity(p.candidates.len() + 1);
    scored.push((-f_h, None));
    for (i, c) in p.candidates.iter().enumerate() {
        scored.push((c.delta - total_cost(&c.cost, w, c.behavior), Some(i)));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let k = k.clamp(1, scored.len());
    let scale = 1.0 / k as f64;
    for (_, who) in &scored[..k] {
        if let Some(i) = who {
            let c = &p.candidates[*i];
            w.accumulate_grad(hb, &p.human_cost, scale, grad);
            w.accumulate_grad(c.behavior, &c.cost, -scale, grad);
        }
    }
    f_h + scored[0].0
}

/// Mean max-margin loss and subgradient over a batch.
pub fn max_margin_grad(batch: &[&PreparedDemo], w: &WeightScheme, k: usize) -> (f64, Vec<f64>) {
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|p| {
            let mut g = vec![0.0; w.weights.len()];
            let l = max_margin_example(p, w, k, &mut g);
            (l, g)
        })
        .collect();
    average(parts, w.weights.len())
}

fn average(parts: Vec<(f64, Vec<f64>)>, n: usize) -> (f64, Vec<f64>) {
    let m = parts.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= m);
    (loss / m, grad)
}

/// Inner problem of the unroll: gradient, Hessian-vector product and the
/// mixed derivative with respect to the weights.
pub trait InnerProblem {
    fn value(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64]) -> Vec<f64>;
    fn hvp(&self, u: &[f64], v: &[f64]) -> Vec<f64>;
    /// Adds `scale * d(grad_u f(u) . v)/dw` into `out`.
    fn mixed(&self, u: &[f64], v: &[f64], scale: f64, out: &mut [f64]);
}

/// The refinement objective over flattened controls.
pub struct ControlProblem<'a> {
    pub obj: ControlObjective<'a>,
    pub w: &'a WeightScheme,
}

fn unflatten(x: &[f64]) -> Vec<Control> {
    x.chunks(2).map(|c| [c[0], c[1]]).collect()
}

fn flatten(u: &[Control]) -> Vec<f64> {
    u.iter().flat_map(|c| c.iter().copied()).collect()
}

impl<'a> ControlProblem<'a> {
    pub fn new(ctx: &'a CostContext<'a>, x0: VehicleState, w: &'a WeightScheme) -> Self {
        Self {
            obj: ControlObjective::new(ctx, x0, w),
            w,
        }
    }
}

impl InnerProblem for ControlProblem<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        objective(&self.obj, &unflatten(u))
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        flatten(&cost_gradient::<f64>(&self.obj, &unflatten(u)).1)
    }

    fn hvp(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        flatten(&hessian_vector(&self.obj, &unflatten(u), &unflatten(v)))
    }

    fn mixed(&self, u: &[f64], v: &[f64], scale: f64, out: &mut [f64]) {
        let ctx = self.obj.ctx;
        let dir = feature_directional(ctx, &self.obj.x0, &unflatten(u), &unflatten(v));
        self.w.accumulate_grad(ctx.behavior_index, &dir, scale, out);
    }
}

/// `f(D z)` for a fixed positive diagonal `D`, so plain gradient steps in
/// `z` are diagonally preconditioned steps in `u`.
pub struct Scaled<'a, P> {
    pub inner: &'a P,
    pub d: Vec<f64>,
}

impl<P: InnerProblem> Scaled<'_, P> {
    pub fn to_u(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.d).map(|(a, b)| a * b).collect()
    }

    pub fn to_z(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.d).map(|(a, b)| a / b).collect()
    }
}

impl<P: InnerProblem> InnerProblem for Scaled<'_, P> {
    fn value(&self, z: &[f64]) -> f64 {
        self.inner.value(&self.to_u(z))
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.to_u(&self.inner.gradient(&self.to_u(z)))
    }

    fn hvp(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        self.to_u(&self.inner.hvp(&self.to_u(z), &self.to_u(v)))
    }

    fn mixed(&self, z: &[f64], v: &[f64], scale: f64, out: &mut [f64]) {
        self.inner.mixed(&self.to_u(z), &self.to_u(v), scale, out);
    }
}

/// `1 / sqrt(|H_ii|)` from one Hessian-vector product per coordinate, with
/// tiny diagonals floored relative to the largest.
pub fn jacobi_scaling<P: InnerProblem>(p: &P, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            p.hvp(u, &e)[i].abs()
        })
        .collect();
    let floor = diag.iter().copied().fold(0.0, f64::max) * 1e-12;
    diag.iter()
        .map(|h| {
            if floor > 0.0 {
                1.0 / h.max(floor).sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// Largest Hessian eigenvalue magnitude by power iteration.
pub fn hessian_spectral_radius<P: InnerProblem>(p: &P, u: &[f64], iterations: usize) -> f64 {
    let n = u.len();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * (i % 7) as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..iterations.max(1) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let hv = p.hvp(u, &v);
        lambda = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = hv;
    }
    lambda
}

/// Result of `M` unrolled gradient steps and the reverse sweep.
#[derive(Clone, Debug)]
pub struct Unrolled {
    pub loss: f64,
    pub grad_w: Vec<f64>,
    pub u_final: Vec<f64>,
}

/// Iterates of `u_m = u_{m-1} - eta * grad f(u_{m-1})`, `u0` included.
pub fn unroll_forward<P: InnerProblem>(p: &P, u0: &[f64], eta: f64, m: usize) -> Vec<Vec<f64>> {
    let mut iterates = vec![u0.to_vec()];
    for _ in 0..m {
        let u = iterates.last().unwrap();
        let g = p.gradient(u);
        iterates.push(u.iter().zip(&g).map(|(a, b)| a - eta * b).collect());
    }
    iterates
}

/// Loss of the final iterate and its gradient with respect to the weights,
/// holding `u0` fixed. `outer` returns the loss and its gradient in `u`.
pub fn unroll_backward<P, F>(
    p: &P,
    u0: &[f64],
    eta: f64,
    m: usize,
    n_weights: usize,
    outer: F,
) -> Unrolled
where
    P: InnerProblem,
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let iterates = unroll_forward(p, u0, eta, m);
    let u_final = iterates[m].clone();
    let (loss, mut bar) = outer(&u_final);
    let mut grad_w = vec![0.0; n_weights];
    for step in (1..=m).rev() {
        let u_prev = &iterates[step - 1];
        p.mixed(u_prev, &bar, -eta, &mut grad_w);
        let hv = p.hvp(u_prev, &bar);
        for (b, h) in bar.iter_mut().zip(&hv) {
            *b -= eta * h;
        }
    }
    Unrolled {
        loss,
        grad_w,
        u_final,
    }
}

/// `(1/T) sum_t gamma^t |p_t - p_h,t|^2` over positions, and its gradient in
/// the controls.
pub fn imitation_loss(
    x0: &VehicleState,
    u: &[f64],
    human: &Trajectory,
    gamma: f64,
) -> (f64, Vec<f64>) {
    let controls = unflatten(u);
    let states = rollout(x0, &controls, human.dt);
    let n = controls.len().max(1) as f64;
    let mut loss = 0.0;
    let mut direct = vec![[0.0; 7]; states.len()];
    let mut g = 1.0;
    for (t, (s, h)) in states.iter().zip(&human.states).enumerate().skip(1) {
        g *= gamma;
        let (ex, ey) = (s.x - h.x, s.y - h.y);
        loss += g * (ex * ex + ey * ey) / n;
        direct[t][0] = 2.0 * g * ex / n;
        direct[t][1] = 2.0 * g * ey / n;
    }
    let grad = rollout_adjoint(x0, &controls, human.dt, &direct);
    (loss, flatten(&grad))
}

/// Imitation loss and weight gradient of one example: refine from the
/// demonstrated controls, then differentiate through `M` gradient steps.
pub fn imitation_example(
    p: &PreparedDemo,
    w: &WeightScheme,
    cfg: &LearnConfig,
    planner: &PlannerConfig,
) -> Result<(f64, Vec<f64>)> {
    let sc = &p.demo.scenario;
    let tag = |e: PlanError| match e {
        PlanError::NumericalFailure(m) => {
            PlanError::NumericalFailure(format!("demo {}: {m}", p.demo.id))
        }
        other => other,
    };
    let ctx = CostContext::new(
        sc,
        &p.human_behavior,
        &planner.cost,
        Stage::Trajectory,
        Some(&p.side),
    )
    .map_err(tag)?;
    let refined = refine(
        &p.human_controls,
        &ctx,
        &sc.sdv,
        w,
        &planner.caps,
        &cfg.refine,
    )
    .map_err(tag)?;
    let problem = ControlProblem::new(&ctx, sc.sdv, w);
    let u0 = flatten(&refined.controls);
    let human = &p.demo.human_trajectory;
    let r = if cfg.precondition {
        let scaled = Scaled {
            inner: &problem,
            d: jacobi_scaling(&problem, &u0),
        };
        let z0 = scaled.to_z(&u0);
        let eta = effective_eta(&scaled, &z0, cfg);
        let mut r = unroll_backward(&scaled, &z0, eta, cfg.bptt_steps, w.weights.len(), |z| {
            let (l, g) = imitation_loss(&sc.sdv, &scaled.to_u(z), human, cfg.gamma);
            (l, scaled.to_u(&g))
        });
        r.u_final = scaled.to_u(&r.u_final);
        r
    } else {
        let eta = effective_eta(&problem, &u0, cfg);
        unroll_backward(&problem, &u0, eta, cfg.bptt_steps, w.weights.len(), |u| {
            imitation_loss(&sc.sdv, u, human, cfg.gamma)
        })
    };
    if !r.loss.is_finite() || r.grad_w.iter().any(|g| !g.is_finite()) {
        return Err(PlanError::NumericalFailure(format!(
            "demo {}: non-finite imitation gradient",
            p.demo.id
        )));
    }
    Ok((r.loss, r.grad_w))
}

/// `min(eta, 1 / lambda_max)`, then halved until every unrolled step
/// descends.
pub fn effective_eta<P: InnerProblem>(p: &P, u0: &[f64], cfg: &LearnConfig) -> f64 {
    let lambda = hessian_spectral_radius(p, u0, cfg.power_iterations);
    let mut eta = if lambda > 0.0 && lambda.is_finite() {
        cfg.eta.min(1.0 / lambda)
    } else {
        cfg.eta
    };
    for _ in 0..60 {
        let values: Vec<f64> = unroll_forward(p, u0, eta, cfg.bptt_steps)
            .iter()
            .map(|u| p.value(u))
            .collect();
        if values.windows(2).all(|v| v[1] <= v[0]) {
            return eta;
        }
        eta *= 0.5;
    }
    0.0
}

pub fn imitation_grad(
    batch: &[&PreparedDemo],
    w: &WeightScheme,
    cfg: &LearnConfig,
    planner: &PlannerConfig,
) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<Result<(f64, Vec<f64>)>> = batch
        .par_iter()
        .map(|p| imitation_example(p, w, cfg, planner))
        .collect();
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(average(parts, w.weights.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss_margin: f64,
    pub loss_imitation: f64,
    pub grad_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<f64>,
}

/// Weights with the step they were taken at and the run's seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub seed: u64,
    pub weights: WeightScheme,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Best-validation weights of the last phase that ran.
    pub best: Checkpoint,
    /// Best max-margin weights, set when a joint phase followed.
    pub pretrained: Option<Checkpoint>,
    pub final_weights: WeightScheme,
    pub log: Vec<LogRecord>,
    pub halvings: usize,
}

/// Validation objective: max-margin loss, plus imitation in the joint phase.
pub fn validation_loss(
    val: &[PreparedDemo],
    w: &WeightScheme,
    joint: bool,
    cfg: &LearnConfig,
    planner: &PlannerConfig,
) -> Result<f64> {
    let refs: Vec<&PreparedDemo> = val.iter().collect();
    let (lm, _) = max_margin_grad(&refs, w, cfg.top_k);
    let mut total = cfg.lambda_m * lm;
    if joint && cfg.lambda_i > 0.0 {
        let (li, _) = imitation_grad(&refs, w, cfg, planner)?;
        total += cfg.lambda_i * li;
    }
    Ok(total)
}

fn sample_batch(rng: &mut ChaCha8Rng, n: usize, size: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, size.min(n)).into_vec()
}

/// Exponentiated-gradient training on prepared demonstrations.
pub fn train_prepared(
    train: &[PreparedDemo],
    val: &[PreparedDemo],
    init: &WeightScheme,
    cfg: &LearnConfig,
    planner: &PlannerConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    init.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(PlanError::InvalidScenario(
            "training needs non-empty train and validation sets".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = init.clone();
    let mut alpha = cfg.alpha;
    let mut log = Vec::with_capacity(cfg.total_steps);
    let mut best = Checkpoint {
        step: 0,
        seed: cfg.seed,
        weights: w.clone(),
    };
    let mut best_val = f64::INFINITY;
    let mut initial_loss: Option<f64> = None;
    let mut over = 0usize;
    let mut halvings = 0usize;
    let mut sq_sum = vec![0.0; w.weights.len()];
    let mut pretrained = None;

    for step in 0..cfg.total_steps {
        let joint = step >= cfg.pretrain_steps && cfg.lambda_i > 0.0;
        if step == cfg.pretrain_steps && step > 0 {
            // The joint phase starts from the best max-margin weights.
            w = best.weights.clone();
            pretrained = Some(best.clone());
            best_val = f64::INFINITY;
        }
        let bm: Vec<&PreparedDemo> = sample_batch(&mut rng, train.len(), cfg.batch_margin)
            .into_iter()
            .map(|i| &train[i])
            .collect();
        let (lm, gm) = if cfg.lambda_m > 0.0 {
            max_margin_grad(&bm, &w, cfg.top_k)
        } else {
            (0.0, vec![0.0; w.weights.len()])
        };
        let (li, gi) = if joint {
            let bi: Vec<&PreparedDemo> = sample_batch(&mut rng, train.len(), cfg.batch_imitation)
                .into_iter()
                .map(|i| &train[i])
                .collect();
            imitation_grad(&bi, &w, cfg, planner)?
        } else {
            (0.0, vec![0.0; w.weights.len()])
        };
        let lambda_i = if joint { cfg.lambda_i } else { 0.0 };
        let g: Vec<f64> = (0..w.weights.len())
            .map(|i| cfg.lambda_w * w.weights[i] + cfg.lambda_m * gm[i] + lambda_i * gi[i])
            .collect();
        let grad_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if cfg.adaptive {
            let scaled: Vec<f64> = g
                .iter()
                .zip(sq_sum.iter_mut())
                .map(|(gi, acc)| {
                    *acc += gi * gi;
                    if *acc > 0.0 {
                        gi / acc.sqrt()
                    } else {
                        0.0
                    }
                })
                .collect();
            w.exp_update(&scaled, alpha);
        } else {
            w.exp_update(&g, alpha);
        }

        let loss = cfg.lambda_m * lm + lambda_i * li;
        log::trace!("step {step}: margin {lm:.4} imitation {li:.4} |g| {grad_norm:.3e}");
        let base = *initial_loss.get_or_insert(loss);
        if loss > 10.0 * base.max(1e-9) {
            over += 1;
        } else {
            over = 0;
        }
        if over >= 50 {
            if halvings >= 3 {
                return Err(PlanError::Diverged(format!(
                    "loss stayed above ten times its initial value after {halvings} step-size halvings"
                )));
            }
            halvings += 1;
            alpha /= 2.0;
            over = 0;
            w = best.weights.clone();
            log::warn!("training diverging at step {step}; alpha halved to {alpha:e}");
        }

        let last = step + 1 == cfg.total_steps;
        let phase_end = step + 1 == cfg.pretrain_steps;
        let validation = if last
            || phase_end
            || (cfg.validate_every > 0 && (step + 1) % cfg.validate_every == 0)
        {
            let v = validation_loss(val, &w, joint, cfg, planner)?;
            if v < best_val {
                best_val = v;
                best = Checkpoint {
                    step: step + 1,
                    seed: cfg.seed,
                    weights: w.clone(),
                };
            }
            Some(v)
        } else {
            None
        };
        log.push(LogRecord {
            step,
            loss_margin: lm,
            loss_imitation: li,
            grad_norm,
            validation,
        });
    }
    Ok(TrainReport {
        pretrained,
        best,
        final_weights: w,
        log,
        halvings,
    })
}

pub fn prepare_all<'a>(
    set: &'a [DemoExample],
    planner: &PlannerConfig,
    task: &TaskLoss,
    variant: WeightVariant,
) -> Result<Vec<PreparedDemo<'a>>> {
    let v: Vec<Result<PreparedDemo>> = set
        .par_iter()
        .map(|d| prepare(d, planner, task, variant))
        .collect();
    v.into_iter().collect()
}

/// Prepares the demonstrations and trains.
pub fn train(
    train_set: &[DemoExample],
    val_set: &[DemoExample],
    init: &WeightScheme,
    cfg: &LearnConfig,
    planner: &PlannerConfig,
) -> Result<TrainReport> {
    let tr = prepare_all(train_set, planner, &cfg.task_loss, init.variant)?;
    let va = prepare_all(val_set, planner, &cfg.task_loss, init.variant)?;
    train_prepared(&tr, &va, init, cfg, planner)
}
