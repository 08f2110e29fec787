//! The shared linear cost `f = sum_t sum_k sign_k * w[b, t, k] * c[t, k]`.
//!
//! Features are kept per timestep. Row 0 holds the route features, which do
//! not depend on the trajectory; rows `1..=T` hold the state features of
//! state `t` and the rate features of the step `t-1 -> t`.

mod context;
mod features;
mod gradient;
mod weights;

pub use context::{CostContext, ObstacleAt, Stage};
pub use features::{behavioral_overlap, pair_features, state_features};
pub use gradient::{
    cost_gradient, feature_directional, hessian_vector, objective, rollout_adjoint,
    ControlObjective,
};
pub use weights::{WeightScheme, WeightVariant, DEFAULT_WEIGHTS, NUM_BEHAVIORS, REGISTRY_VERSION};

use crate::world::{Trajectory, VehicleState};
use serde::{Deserialize, Serialize};

pub const NUM_FEATURES: usize = 30;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "overlap",
    "obstacle",
    "obstacle_vulnerable",
    "path",
    "lane_left",
    "lane_right",
    "headway",
    "yield_pedestrian",
    "yield_crossing",
    "yield_stop_line",
    "route_lanechange",
    "route_deadend",
    "cost_to_go",
    "speed",
    "progress",
    "jerk",
    "jerk_violation_pos",
    "jerk_violation_neg",
    "accel",
    "accel_violation",
    "decel_violation",
    "lat_accel",
    "lat_accel_violation_left",
    "lat_accel_violation_right",
    "lat_jerk",
    "lat_jerk_violation_left",
    "lat_jerk_violation_right",
    "curvature",
    "twist",
    "wrench",
];

pub mod idx {
    pub const OVERLAP: usize = 0;
    pub const OBSTACLE: usize = 1;
    pub const OBSTACLE_VULNERABLE: usize = 2;
    pub const PATH: usize = 3;
    pub const LANE_LEFT: usize = 4;
    pub const LANE_RIGHT: usize = 5;
    pub const HEADWAY: usize = 6;
    pub const YIELD_PEDESTRIAN: usize = 7;
    pub const YIELD_CROSSING: usize = 8;
    pub const YIELD_STOP_LINE: usize = 9;
    pub const ROUTE_LANECHANGE: usize = 10;
    pub const ROUTE_DEADEND: usize = 11;
    pub const COST_TO_GO: usize = 12;
    pub const SPEED: usize = 13;
    pub const PROGRESS: usize = 14;
    pub const JERK: usize = 15;
    pub const JERK_VIOLATION_POS: usize = 16;
    pub const JERK_VIOLATION_NEG: usize = 17;
    pub const ACCEL: usize = 18;
    pub const ACCEL_VIOLATION: usize = 19;
    pub const DECEL_VIOLATION: usize = 20;
    pub const LAT_ACCEL: usize = 21;
    pub const LAT_ACCEL_VIOLATION_LEFT: usize = 22;
    pub const LAT_ACCEL_VIOLATION_RIGHT: usize = 23;
    pub const LAT_JERK: usize = 24;
    pub const LAT_JERK_VIOLATION_LEFT: usize = 25;
    pub const LAT_JERK_VIOLATION_RIGHT: usize = 26;
    pub const CURVATURE: usize = 27;
    pub const TWIST: usize = 28;
    pub const WRENCH: usize = 29;
}

/// `-1` for rewards, `+1` for costs.
pub fn feature_sign(k: usize) -> f64 {
    if k == idx::PROGRESS {
        -1.0
    } else {
        1.0
    }
}

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// Per-timestep feature matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostVector {
    pub rows: Vec<[f64; NUM_FEATURES]>,
}

impl CostVector {
    pub fn zeros(rows: usize) -> Self {
        Self {
            rows: vec![[0.0; NUM_FEATURES]; rows],
        }
    }

    /// Features summed over time.
    pub fn totals(&self) -> [f64; NUM_FEATURES] {
        let mut out = [0.0; NUM_FEATURES];
        for r in &self.rows {
            for k in 0..NUM_FEATURES {
                out[k] += r[k];
            }
        }
        out
    }

    pub fn get(&self, name: &str) -> f64 {
        feature_index(name).map_or(0.0, |k| self.rows.iter().map(|r| r[k]).sum())
    }

    pub fn sub(&self, o: &CostVector) -> CostVector {
        CostVector {
            rows: self
                .rows
                .iter()
                .zip(&o.rows)
                .map(|(a, b)| std::array::from_fn(|k| a[k] - b[k]))
                .collect(),
        }
    }
}

/// Constants of the cost features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub footprint_circles: usize,
    /// Safety distance `safety_distance + safety_time_gap * v`.
    pub safety_distance: f64,
    pub safety_time_gap: f64,
    pub comfort_decel: f64,
    pub hard_decel: f64,
    pub min_gap: f64,
    pub headway_lat_margin: f64,
    pub headway_lat_falloff: f64,
    pub margin_pedestrian: f64,
    pub margin_intersection: f64,
    pub yield_corridor: f64,
    /// `|sin|` of the heading difference above which a vehicle is crossing.
    pub crossing_sin: f64,
    pub lane_threshold: f64,
    pub deadend_threshold: f64,
    pub side_lat_margin: f64,
    pub side_lon_margin: f64,
    pub comfort_jerk: f64,
    pub comfort_accel: f64,
    pub comfort_decel_bound: f64,
    pub comfort_lat_accel: f64,
    pub comfort_lat_jerk: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            vehicle_length: 4.8,
            vehicle_width: 2.0,
            footprint_circles: 5,
            safety_distance: 3.0,
            safety_time_gap: 0.3,
            comfort_decel: 3.0,
            hard_decel: 8.0,
            min_gap: 4.0,
            headway_lat_margin: 0.3,
            headway_lat_falloff: 1.5,
            margin_pedestrian: 6.0,
            margin_intersection: 3.0,
            yield_corridor: 3.0,
            crossing_sin: 0.5,
            lane_threshold: 0.3,
            deadend_threshold: 100.0,
            side_lat_margin: 0.2,
            side_lon_margin: 0.5,
            comfort_jerk: 3.0,
            comfort_accel: 2.0,
            comfort_decel_bound: 3.0,
            comfort_lat_accel: 2.0,
            comfort_lat_jerk: 2.0,
        }
    }
}

impl CostConfig {
    /// Longitudinal offsets of the footprint circle centers and their radius.
    pub fn circles(&self) -> (Vec<f64>, f64) {
        let n = self.footprint_circles.max(1);
        let seg = self.vehicle_length / n as f64;
        let offs = (0..n)
            .map(|i| -self.vehicle_length / 2.0 + seg * (i as f64 + 0.5))
            .collect();
        let r = ((seg / 2.0).powi(2) + (self.vehicle_width / 2.0).powi(2)).sqrt();
        (offs, r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Front,
    Back,
    Left,
    Right,
}

/// `sides[obstacle][t]` for every obstacle and timestep of the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideAssignment {
    pub sides: Vec<Vec<Side>>,
}

/// Real-valued foot points of every state, each seeded from the previous.
pub fn foot_points(ctx: &CostContext, states: &[VehicleState]) -> Vec<f64> {
    let path = &ctx.behavior.driving_path;
    let mut out = Vec::with_capacity(states.len());
    let mut hint = ctx.s0;
    for (t, st) in states.iter().enumerate() {
        let s = if t == 0 {
            ctx.s0
        } else {
            let h = hint + states[t - 1].v.max(0.0) * ctx.dt;
            path.project(st.x, st.y, Some(h)).map(|r| r.0).unwrap_or(h)
        };
        out.push(s);
        hint = s;
    }
    out
}

/// Full feature matrix of a trajectory.
pub fn evaluate(ctx: &CostContext, traj: &Trajectory) -> CostVector {
    evaluate_states(ctx, &traj.states)
}

pub fn evaluate_states(ctx: &CostContext, states: &[VehicleState]) -> CostVector {
    let mut c = CostVector::zeros(states.len());
    c.rows[0][idx::ROUTE_LANECHANGE] = ctx.route[0];
    c.rows[0][idx::ROUTE_DEADEND] = ctx.route[1];
    let feet = foot_points(ctx, states);
    let mut prev_s = feet[0];
    for t in 1..states.len() {
        let (f, s) = state_features(ctx, t, &states[t], feet[t]);
        let g = pair_features(ctx, &states[t - 1], &states[t], prev_s, s);
        for k in 0..NUM_FEATURES {
            c.rows[t][k] = f[k] + g[k];
        }
        prev_s = s;
    }
    if ctx.stage == Stage::Behavioral {
        for (t, v) in behavioral_overlap(ctx, states) {
            c.rows[t][idx::OVERLAP] += v;
        }
    }
    c
}

/// `sum_t sum_k sign_k * w[b, t, k] * c[t, k]`.
pub fn total_cost(c: &CostVector, w: &WeightScheme, behavior: usize) -> f64 {
    let mut total = 0.0;
    for (t, row) in c.rows.iter().enumerate() {
        let ws = w.slice(behavior, t);
        for k in 0..NUM_FEATURES {
            total += feature_sign(k) * ws[k] * row[k];
        }
    }
    total
}
