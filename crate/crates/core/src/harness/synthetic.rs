//! Seeded synthetic scenes on parallel-lane roads, and expert demonstrations
//! produced by running the planner with hidden weights.

use crate::costing::{idx, WeightScheme, DEFAULT_WEIGHTS};
use crate::error::{PlanError, Result};
use crate::geometry::{rectangle, Point2};
use crate::learning::DemoExample;
use crate::planner::{plan, Plan, PlannerConfig};
use crate::world::{
    Lane, LaneMap, Obstacle, ObstacleClass, Pose, Prediction, Scenario, VehicleState,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const LANE_WIDTH: f64 = 3.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Straight,
    Curve,
    LeadVehicle,
    StalledLane,
    PedestrianCrossing,
    LaneChangeToRoute,
}

impl Template {
    pub const ALL: [Template; 6] = [
        Template::Straight,
        Template::Curve,
        Template::LeadVehicle,
        Template::StalledLane,
        Template::PedestrianCrossing,
        Template::LaneChangeToRoute,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::Straight => "straight",
            Template::Curve => "curve",
            Template::LeadVehicle => "lead_vehicle",
            Template::StalledLane => "stalled_lane",
            Template::PedestrianCrossing => "pedestrian_crossing",
            Template::LaneChangeToRoute => "lane_change_to_route",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Template::ALL
            .into_iter()
            .find(|t| t.name() == norm)
            .ok_or_else(|| PlanError::InvalidScenario(format!("unknown template '{s}'")))
    }
}

/// A road of parallel lanes following a constant-curvature reference line.
/// Lane `i` is offset `i * lane_width` to the left of lane 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Road {
    pub lanes: usize,
    pub lane_width: f64,
    pub length: f64,
    /// Curvature of the reference line (lane 0), positive to the left.
    pub curvature: f64,
    pub speed_limit: f64,
}

impl Road {
    /// World pose at arc length `s` of the reference line, offset `d` to the left.
    pub fn pose(&self, s: f64, d: f64) -> Pose {
        let k = self.curvature;
        let (x, y) = if k.abs() < 1e-12 {
            (s, 0.0)
        } else {
            ((k * s).sin() / k, (1.0 - (k * s).cos()) / k)
        };
        let th = k * s;
        Pose {
            x: x - th.sin() * d,
            y: y + th.cos() * d,
            theta: th,
        }
    }

    /// Curvature of the curve offset `d` from the reference line.
    pub fn curvature_at(&self, d: f64) -> f64 {
        self.curvature / (1.0 - self.curvature * d)
    }

    pub fn lane_id(i: usize) -> String {
        format!("L{i}")
    }

    fn line(&self, d: f64) -> Vec<Point2> {
        let n = (self.length / 2.0).ceil() as usize;
        (0..=n)
            .map(|i| {
                let p = self.pose(self.length * i as f64 / n as f64, d);
                Point2::new(p.x, p.y)
            })
            .collect()
    }

    pub fn build(&self) -> LaneMap {
        let lanes = (0..self.lanes)
            .map(|i| {
                let d = i as f64 * self.lane_width;
                Lane {
                    id: Self::lane_id(i),
                    centerline: self.line(d),
                    left_boundary: self.line(d + self.lane_width / 2.0),
                    right_boundary: self.line(d - self.lane_width / 2.0),
                    speed_limit: self.speed_limit,
                    successors: Vec::new(),
                    left_neighbor: (i + 1 < self.lanes).then(|| Self::lane_id(i + 1)),
                    left_change_allowed: i + 1 < self.lanes,
                    right_neighbor: (i > 0).then(|| Self::lane_id(i - 1)),
                    right_change_allowed: i > 0,
                    stop_line_s: None,
                }
            })
            .collect();
        LaneMap { lanes }
    }
}

const SDV_S: f64 = 40.0;

struct Builder {
    rng: ChaCha8Rng,
    road: Road,
    sdv_lane: usize,
    steps: usize,
    dt: f64,
}

impl Builder {
    fn new(template: Template, seed: u64) -> Self {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ template as u64);
        let lanes = rng.gen_range(2..=3);
        let curvature = if template == Template::Curve {
            let k: f64 = rng.gen_range(1.0 / 250.0..1.0 / 120.0);
            if rng.gen_bool(0.5) {
                k
            } else {
                -k
            }
        } else {
            0.0
        };
        let road = Road {
            lanes,
            lane_width: LANE_WIDTH,
            length: 420.0,
            curvature,
            speed_limit: rng.gen_range(12.0..20.0),
        };
        let sdv_lane = rng.gen_range(0..lanes);
        Self {
            rng,
            road,
            sdv_lane,
            steps: 20,
            dt: 0.5,
        }
    }

    fn d(&self, lane: usize) -> f64 {
        lane as f64 * self.road.lane_width
    }

    fn sdv(&mut self, v: f64) -> VehicleState {
        let d = self.d(self.sdv_lane);
        let p = self.road.pose(SDV_S, d);
        VehicleState {
            x: p.x,
            y: p.y,
            theta: p.theta,
            kappa: self.road.curvature_at(d),
            v,
            ..Default::default()
        }
    }

    /// Poses of a body moving along the road at constant speed and drift.
    fn along_road(&self, s0: f64, d0: f64, speed: f64, drift: f64) -> Vec<Pose> {
        (0..=self.steps)
            .map(|t| {
                let tt = t as f64 * self.dt;
                let (s, d) = (s0 + speed * tt, d0 + drift * tt);
                let mut p = self.road.pose(s, d);
                if speed.abs() > 1e-9 || drift.abs() > 1e-9 {
                    p.theta += drift.atan2(speed);
                }
                p
            })
            .collect()
    }

    fn vehicle(&self, id: &str, poses: Vec<Pose>) -> Obstacle {
        Obstacle {
            id: id.into(),
            class: ObstacleClass::Vehicle,
            polygon: rectangle(4.6, 1.9),
            predictions: vec![Prediction {
                probability: 1.0,
                poses,
            }],
            detected: true,
            ground_truth: None,
        }
    }

    fn other_lane(&mut self) -> Option<usize> {
        let choices: Vec<usize> = (0..self.road.lanes)
            .filter(|l| *l != self.sdv_lane)
            .collect();
        if choices.is_empty() {
            None
        } else {
            Some(choices[self.rng.gen_range(0..choices.len())])
        }
    }
}

/// Deterministic scene of the given template.
pub fn generate(template: Template, seed: u64) -> Scenario {
    let mut b = Builder::new(template, seed);
    let limit = b.road.speed_limit;
    let mut obstacles = Vec::new();
    let mut route: Vec<String> = (0..b.road.lanes).map(Road::lane_id).collect();
    let v0;
    match template {
        Template::Straight | Template::Curve => {
            v0 = b.rng.gen_range(0.6..1.05) * limit;
            if b.rng.gen_bool(0.5) {
                if let Some(l) = b.other_lane() {
                    let s = SDV_S + b.rng.gen_range(-20.0..40.0);
                    let speed = b.rng.gen_range(0.7..1.0) * limit;
                    let poses = b.along_road(s, b.d(l), speed, 0.0);
                    obstacles.push(b.vehicle("traffic", poses));
                }
            }
        }
        Template::LeadVehicle => {
            v0 = b.rng.gen_range(0.7..1.0) * limit;
            let gap = b.rng.gen_range(20.0..45.0);
            let speed = b.rng.gen_range(0.4..0.8) * v0;
            let poses = b.along_road(SDV_S + gap, b.d(b.sdv_lane), speed, 0.0);
            obstacles.push(b.vehicle("lead", poses));
        }
        Template::StalledLane => {
            v0 = b.rng.gen_range(0.6..0.95) * limit;
            let gap = b.rng.gen_range(35.0..70.0);
            let poses = b.along_road(SDV_S + gap, b.d(b.sdv_lane), 0.0, 0.0);
            let mut ob = b.vehicle("stalled", poses);
            ob.class = ObstacleClass::Static;
            obstacles.push(ob);
        }
        Template::PedestrianCrossing => {
            v0 = b.rng.gen_range(0.6..0.95) * limit;
            let gap = b.rng.gen_range(30.0..55.0);
            let walk = b.rng.gen_range(1.0..1.6);
            let from_right = b.rng.gen_bool(0.5);
            let (d0, drift) = if from_right {
                (-b.road.lane_width, walk)
            } else {
                (b.road.lanes as f64 * b.road.lane_width, -walk)
            };
            let crossing = b.along_road(SDV_S + gap, d0, 0.0, drift);
            let waiting = b.along_road(SDV_S + gap, d0, 0.0, 0.0);
            let p = b.rng.gen_range(0.7..0.9);
            obstacles.push(Obstacle {
                id: "pedestrian".into(),
                class: ObstacleClass::Pedestrian,
                polygon: rectangle(0.6, 0.6),
                predictions: vec![
                    Prediction {
                        probability: p,
                        poses: crossing,
                    },
                    Prediction {
                        probability: 1.0 - p,
                        poses: waiting,
                    },
                ],
                detected: true,
                ground_truth: None,
            });
        }
        Template::LaneChangeToRoute => {
            v0 = b.rng.gen_range(0.6..0.95) * limit;
            let target = b.other_lane().unwrap_or(0);
            route = vec![Road::lane_id(target)];
            if b.rng.gen_bool(0.4) {
                let s = SDV_S + b.rng.gen_range(-25.0..-10.0);
                let poses = b.along_road(s, b.d(target), 0.8 * v0, 0.0);
                obstacles.push(b.vehicle("follower", poses));
            }
        }
    }
    let sdv = b.sdv(v0);
    Scenario {
        name: format!("{template}-{seed}"),
        map: b.road.build(),
        route,
        sdv,
        obstacles,
        horizon_s: b.steps as f64 * b.dt,
        timestep_s: b.dt,
    }
}

/// `count` scenes cycling through every template, seeded from `seed`.
pub fn corpus(seed: u64, count: usize) -> Vec<Scenario> {
    (0..count)
        .map(|i| {
            let t = Template::ALL[i % Template::ALL.len()];
            generate(t, seed.wrapping_add(i as u64))
        })
        .collect()
}

/// Hidden weights of the synthetic expert.
pub fn expert_weights() -> WeightScheme {
    let mut w = DEFAULT_WEIGHTS;
    let scale: [(usize, f64); 7] = [
        (idx::PATH, 3.0),
        (idx::PROGRESS, 1.5),
        (idx::SPEED, 0.4),
        (idx::HEADWAY, 4.0),
        (idx::ROUTE_LANECHANGE, 3.0),
        (idx::JERK, 5.0),
        (idx::LAT_ACCEL, 3.0),
    ];
    for (k, f) in scale {
        w[k] *= f;
    }
    WeightScheme::shared(&w)
}

/// Runs the planner with `w` and records its output as a demonstration.
pub fn expert_demo(
    scenario: &Scenario,
    id: &str,
    w: &WeightScheme,
    planner: &PlannerConfig,
) -> Result<(DemoExample, Plan)> {
    let p = plan(scenario, w, planner)?;
    let demo = DemoExample {
        id: id.into(),
        scenario: scenario.clone(),
        human_behavior: p.decision.behavior.kind,
        human_trajectory: p.refined.trajectory.clone(),
        human_controls: Some(p.refined.controls.clone()),
    };
    Ok((demo, p))
}
