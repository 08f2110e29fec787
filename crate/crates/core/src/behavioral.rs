//! Discrete stage: exhaustive search over behaviors and sampled candidates,
//! then the interface handed to the continuous stage.

use crate::costing::{
    evaluate, total_cost, CostConfig, CostContext, CostVector, Side, SideAssignment, Stage,
    WeightScheme,
};
use crate::error::{PlanError, Result};
use crate::geometry::Point2;
use crate::sampler::{generate_candidates, Candidate, SampleGrid};
use crate::world::{allowed_behaviors, Behavior, PathConfig, Scenario, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Candidates of one behavior with their feature matrices.
#[derive(Clone, Debug)]
pub struct BehaviorCandidates {
    pub behavior: Behavior,
    pub candidates: Vec<Candidate>,
    pub costs: Vec<CostVector>,
}

/// Generates and costs every candidate of every allowed behavior. Behaviors
/// whose candidate generation fails are dropped; if all fail the first error
/// is returned.
pub fn evaluate_candidates(
    scenario: &Scenario,
    path_cfg: &PathConfig,
    grid: &SampleGrid,
    cost_cfg: &CostConfig,
) -> Result<Vec<BehaviorCandidates>> {
    let mut out = Vec::new();
    let mut first_err = None;
    for behavior in allowed_behaviors(scenario, path_cfg)? {
        let candidates = match generate_candidates(scenario, &behavior, grid) {
            Ok(c) => c,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        let ctx = CostContext::new(scenario, &behavior, cost_cfg, Stage::Behavioral, None)?;
        let costs: Vec<CostVector> = candidates
            .par_iter()
            .map(|c| evaluate(&ctx, &c.trajectory))
            .collect();
        out.push(BehaviorCandidates {
            behavior,
            candidates,
            costs,
        });
    }
    if out.is_empty() {
        return Err(first_err.unwrap_or(PlanError::NoFeasibleCandidate));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanInterface {
    pub left_boundary: Vec<Point2>,
    pub right_boundary: Vec<Point2>,
    pub side_assignment: SideAssignment,
}

#[derive(Clone, Debug)]
pub struct BehavioralDecision {
    pub behavior: Behavior,
    pub candidate_index: usize,
    pub coarse: Trajectory,
    pub cost: f64,
    pub cost_vector: CostVector,
    pub interface: PlanInterface,
}

/// Index of the minimum-cost `(behavior, candidate)`; earlier entries win
/// ties.
pub fn argmin(sets: &[BehaviorCandidates], w: &WeightScheme) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::INFINITY);
    for (bi, set) in sets.iter().enumerate() {
        for (ci, c) in set.costs.iter().enumerate() {
            let f = total_cost(c, w, set.behavior.kind.index());
            if f < best.2 {
                best = (bi, ci, f);
            }
        }
    }
    best
}

pub fn plan_discrete(
    scenario: &Scenario,
    w: &WeightScheme,
    path_cfg: &PathConfig,
    grid: &SampleGrid,
    cost_cfg: &CostConfig,
) -> Result<BehavioralDecision> {
    let sets = evaluate_candidates(scenario, path_cfg, grid, cost_cfg)?;
    decide(scenario, &sets, w, cost_cfg)
}

/// Picks the argmin from already costed candidates and builds the interface.
pub fn decide(
    scenario: &Scenario,
    sets: &[BehaviorCandidates],
    w: &WeightScheme,
    cost_cfg: &CostConfig,
) -> Result<BehavioralDecision> {
    let (bi, ci, cost) = argmin(sets, w);
    if !cost.is_finite() {
        return Err(PlanError::NoFeasibleCandidate);
    }
    let set = &sets[bi];
    let coarse = set.candidates[ci].trajectory.clone();
    let side_assignment = derive_side_assignment(&coarse, scenario, cost_cfg);
    Ok(BehavioralDecision {
        behavior: set.behavior.clone(),
        candidate_index: ci,
        coarse,
        cost,
        cost_vector: set.costs[ci].clone(),
        interface: PlanInterface {
            left_boundary: set.behavior.left_boundary.clone(),
            right_boundary: set.behavior.right_boundary.clone(),
            side_assignment,
        },
    })
}

/// Classifies each obstacle's most likely pose against the SDV pose at every
/// timestep: front/back when laterally inside the gate, left/right otherwise.
pub fn derive_side_assignment(
    coarse: &Trajectory,
    scenario: &Scenario,
    cfg: &CostConfig,
) -> SideAssignment {
    let sides = scenario
        .obstacles
        .iter()
        .map(|ob| {
            let (_, hw) = ob.half_extents();
            let gate = cfg.vehicle_width / 2.0 + hw + cfg.side_lat_margin;
            let poses = &ob.most_likely().poses;
            coarse
                .states
                .iter()
                .enumerate()
                .map(|(t, st)| {
                    let p = poses[t.min(poses.len() - 1)];
                    let (sh, ch) = st.theta.sin_cos();
                    let (dx, dy) = (p.x - st.x, p.y - st.y);
                    let lon = dx * ch + dy * sh;
                    let lat = dy * ch - dx * sh;
                    if lat.abs() < gate {
                        if lon >= 0.0 {
                            Side::Front
                        } else {
                            Side::Back
                        }
                    } else if lat > 0.0 {
                        Side::Left
                    } else {
                        Side::Right
                    }
                })
                .collect()
        })
        .collect();
    SideAssignment { sides }
}
