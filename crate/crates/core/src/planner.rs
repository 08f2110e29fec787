//! Full inference: discrete decision, control fit, continuous refinement.

use crate::behavioral::{decide, evaluate_candidates, BehaviorCandidates, BehavioralDecision};
use crate::costing::{CostConfig, CostContext, Stage, WeightScheme};
use crate::dynamics::ControlCaps;
use crate::error::Result;
use crate::optim::OptimConfig;
use crate::sampler::SampleGrid;
use crate::trajectory_planner::{fit_controls, refine, FitConfig, FitResult, RefineResult};
use crate::world::{PathConfig, Scenario};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub path: PathConfig,
    pub grid: SampleGrid,
    pub cost: CostConfig,
    pub caps: ControlCaps,
    pub fit: FitConfig,
    pub refine: OptimConfig,
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub decision: BehavioralDecision,
    pub fit: FitResult,
    pub refined: RefineResult,
}

pub fn plan(scenario: &Scenario, w: &WeightScheme, cfg: &PlannerConfig) -> Result<Plan> {
    let sets = evaluate_candidates(scenario, &cfg.path, &cfg.grid, &cfg.cost)?;
    plan_with_candidates(scenario, &sets, w, cfg)
}

/// Runs the remaining stages on an already costed candidate set.
pub fn plan_with_candidates(
    scenario: &Scenario,
    sets: &[BehaviorCandidates],
    w: &WeightScheme,
    cfg: &PlannerConfig,
) -> Result<Plan> {
    let decision = decide(scenario, sets, w, &cfg.cost)?;
    let fit = fit_controls(&decision.coarse, &cfg.caps, &cfg.fit)?;
    let ctx = CostContext::new(
        scenario,
        &decision.behavior,
        &cfg.cost,
        Stage::Trajectory,
        Some(&decision.interface.side_assignment),
    )?;
    let refined = refine(
        &fit.controls,
        &ctx,
        &scenario.sdv,
        w,
        &cfg.caps,
        &cfg.refine,
    )?;
    Ok(Plan {
        decision,
        fit,
        refined,
    })
}
