//! Open-loop metrics against demonstrated trajectories. Everything here reads
//! serialized trajectories and the scenario only.

use crate::costing::WeightScheme;
use crate::geometry::{polygons_intersect, polyline_project, rectangle, transform_polygon};
use crate::learning::DemoExample;
use crate::planner::{plan, PlannerConfig};
use crate::world::{BehaviorKind, ObstacleClass, Pose, Scenario, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const HORIZONS: [f64; 3] = [1.0, 2.0, 3.0];
/// Time resolution of the overlap check.
pub const OVERLAP_DT: f64 = 0.1;
/// Vehicles farther than this behind the SDV are excluded from the filtered
/// overlap rate.
pub const BEHIND_EXCLUSION: f64 = 25.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    /// The behavioral argmin, without continuous refinement.
    Discrete,
    /// Discrete decision followed by refinement.
    Joint,
}

/// Metrics of one planned trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub id: String,
    pub l2_at: [f64; 3],
    pub jerk: f64,
    pub lat_accel: f64,
    /// m/s
    pub speed_violation: f64,
    pub progress: f64,
    pub behavior_differs: bool,
    /// First colliding time, with and without the exclusion rule.
    pub overlap_time: Option<f64>,
    pub overlap_time_filtered: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenarios: usize,
    pub failures: usize,
    pub l2_at: [f64; 3],
    pub jerk: f64,
    pub lat_accel: f64,
    /// km/h
    pub speed_violation_kmh: f64,
    pub progress: f64,
    pub behavior_diff_pct: f64,
    pub overlap_pct: [f64; 3],
    pub overlap_filtered_pct: [f64; 3],
}

fn interp_pose(poses: &[Pose], dt: f64, t: f64) -> Pose {
    let k = (t / dt).floor().max(0.0) as usize;
    if k + 1 >= poses.len() {
        return *poses.last().unwrap();
    }
    let f = t / dt - k as f64;
    let (a, b) = (poses[k], poses[k + 1]);
    let dth = crate::geometry::wrap_angle(b.theta - a.theta);
    Pose {
        x: a.x + (b.x - a.x) * f,
        y: a.y + (b.y - a.y) * f,
        theta: a.theta + dth * f,
    }
}

fn traj_poses(t: &Trajectory) -> Vec<Pose> {
    t.states
        .iter()
        .map(|s| Pose {
            x: s.x,
            y: s.y,
            theta: s.theta,
        })
        .collect()
}

/// Position error at time `t`.
pub fn l2_at(plan: &Trajectory, human: &Trajectory, t: f64) -> f64 {
    let a = interp_pose(&traj_poses(plan), plan.dt, t);
    let b = interp_pose(&traj_poses(human), human.dt, t);
    (a.x - b.x).hypot(a.y - b.y)
}

/// Mean absolute jerk from the acceleration samples.
pub fn mean_jerk(t: &Trajectory) -> f64 {
    let n = t.steps();
    if n == 0 {
        return 0.0;
    }
    t.states
        .windows(2)
        .map(|w| ((w[1].a - w[0].a) / t.dt).abs())
        .sum::<f64>()
        / n as f64
}

pub fn mean_lat_accel(t: &Trajectory) -> f64 {
    let n = t.states.len().max(1);
    t.states
        .iter()
        .map(|s| (s.v * s.v * s.kappa).abs())
        .sum::<f64>()
        / n as f64
}

/// Mean over states of the speed above the limit of the nearest lane.
pub fn mean_speed_violation(t: &Trajectory, sc: &Scenario) -> f64 {
    let n = t.states.len().max(1);
    t.states
        .iter()
        .map(|s| {
            let limit = sc
                .map
                .lanes
                .iter()
                .map(|l| {
                    (
                        polyline_project(&l.centerline, &s.position()).0,
                        l.speed_limit,
                    )
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map_or(f64::INFINITY, |x| x.1);
            (s.v - limit).max(0.0)
        })
        .sum::<f64>()
        / n as f64
}

/// Distance travelled along the trajectory.
pub fn progress(t: &Trajectory) -> f64 {
    t.states
        .windows(2)
        .map(|w| w[0].position().dist(&w[1].position()))
        .sum()
}

/// First time at which the SDV box intersects a labeled obstacle box, checked
/// every 0.1 s. With `filtered`, undetected obstacles, obstacles whose
/// predictions never overlap the plan, and vehicles more than 25 m behind the
/// SDV are ignored.
pub fn first_overlap(
    plan: &Trajectory,
    sc: &Scenario,
    length: f64,
    width: f64,
    filtered: bool,
) -> Option<f64> {
    let body = rectangle(length, width);
    let sdv = traj_poses(plan);
    let horizon = plan.steps() as f64 * plan.dt;
    let n = (horizon / OVERLAP_DT).round() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * OVERLAP_DT).collect();
    let hits = |poses: &[Pose], poly: &[crate::geometry::Point2]| -> Option<f64> {
        times.iter().copied().find(|&t| {
            let a = interp_pose(&sdv, plan.dt, t);
            let b = interp_pose(poses, sc.timestep_s, t);
            let pa = transform_polygon(&body, a.x, a.y, a.theta);
            let pb = transform_polygon(poly, b.x, b.y, b.theta);
            polygons_intersect(&pa, &pb)
        })
    };
    let mut first: Option<f64> = None;
    for ob in &sc.obstacles {
        if filtered {
            if !ob.detected {
                continue;
            }
            if ob.class == ObstacleClass::Vehicle {
                let p0 = ob.true_poses()[0];
                let (sh, ch) = sc.sdv.theta.sin_cos();
                let lon = (p0.x - sc.sdv.x) * ch + (p0.y - sc.sdv.y) * sh;
                if lon < -BEHIND_EXCLUSION {
                    continue;
                }
            }
            let predicted = ob
                .predictions
                .iter()
                .any(|p| p.probability > 0.0 && hits(&p.poses, &ob.polygon).is_some());
            if !predicted {
                continue;
            }
        }
        if let Some(t) = hits(ob.true_poses(), &ob.polygon) {
            first = Some(first.map_or(t, |f: f64| f.min(t)));
        }
    }
    first
}

pub fn scenario_metrics(
    id: &str,
    plan: &Trajectory,
    behavior: BehaviorKind,
    demo: &DemoExample,
    cfg: &PlannerConfig,
) -> ScenarioMetrics {
    let sc = &demo.scenario;
    let (len, wid) = (cfg.cost.vehicle_length, cfg.cost.vehicle_width);
    ScenarioMetrics {
        id: id.to_string(),
        l2_at: HORIZONS.map(|h| l2_at(plan, &demo.human_trajectory, h)),
        jerk: mean_jerk(plan),
        lat_accel: mean_lat_accel(plan),
        speed_violation: mean_speed_violation(plan, sc),
        progress: progress(plan),
        behavior_differs: behavior != demo.human_behavior,
        overlap_time: first_overlap(plan, sc, len, wid, false),
        overlap_time_filtered: first_overlap(plan, sc, len, wid, true),
    }
}

pub fn aggregate(rows: &[ScenarioMetrics], failures: usize) -> MetricsReport {
    let n = rows.len();
    if n == 0 {
        return MetricsReport {
            failures,
            ..Default::default()
        };
    }
    let nf = n as f64;
    let mean = |f: &dyn Fn(&ScenarioMetrics) -> f64| rows.iter().map(f).sum::<f64>() / nf;
    let pct = |f: &dyn Fn(&ScenarioMetrics) -> bool| {
        100.0 * rows.iter().filter(|r| f(r)).count() as f64 / nf
    };
    MetricsReport {
        scenarios: n,
        failures,
        l2_at: [0, 1, 2].map(|i| mean(&|r| r.l2_at[i])),
        jerk: mean(&|r| r.jerk),
        lat_accel: mean(&|r| r.lat_accel),
        speed_violation_kmh: 3.6 * mean(&|r| r.speed_violation),
        progress: mean(&|r| r.progress),
        behavior_diff_pct: pct(&|r| r.behavior_differs),
        overlap_pct: HORIZONS.map(|h| pct(&|r| r.overlap_time.is_some_and(|t| t <= h + 1e-9))),
        overlap_filtered_pct: HORIZONS
            .map(|h| pct(&|r| r.overlap_time_filtered.is_some_and(|t| t <= h + 1e-9))),
    }
}

/// Plans every demonstration and scores the result. Failed scenarios are
/// logged and counted.
pub fn evaluate(
    dataset: &[DemoExample],
    w: &WeightScheme,
    cfg: &PlannerConfig,
    mode: InferenceMode,
) -> (MetricsReport, Vec<ScenarioMetrics>) {
    let results: Vec<Option<ScenarioMetrics>> = dataset
        .par_iter()
        .map(|demo| match plan(&demo.scenario, w, cfg) {
            Ok(p) => {
                let traj = match mode {
                    InferenceMode::Discrete => &p.decision.coarse,
                    InferenceMode::Joint => &p.refined.trajectory,
                };
                Some(scenario_metrics(
                    &demo.id,
                    traj,
                    p.decision.behavior.kind,
                    demo,
                    cfg,
                ))
            }
            Err(e) => {
                log::warn!("scenario {}: {e}", demo.id);
                None
            }
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    let rows: Vec<ScenarioMetrics> = results.into_iter().flatten().collect();
    (aggregate(&rows, failures), rows)
}

impl MetricsReport {
    /// Aligned text table with one header row and one value row.
    pub fn to_text(&self, label: &str) -> String {
        let head = [
            "method", "L2@1s", "L2@2s", "L2@3s", "jerk", "lat.acc", "spd.km/h", "progress",
            "diff.b%", "ovl@1%", "ovl@2%", "ovl@3%", "ovlF@1%", "ovlF@2%", "ovlF@3%",
        ];
        let vals = [
            label.to_string(),
            format!("{:.3}", self.l2_at[0]),
            format!("{:.3}", self.l2_at[1]),
            format!("{:.3}", self.l2_at[2]),
            format!("{:.3}", self.jerk),
            format!("{:.3}", self.lat_accel),
            format!("{:.2}", self.speed_violation_kmh),
            format!("{:.2}", self.progress),
            format!("{:.1}", self.behavior_diff_pct),
            format!("{:.1}", self.overlap_pct[0]),
            format!("{:.1}", self.overlap_pct[1]),
            format!("{:.1}", self.overlap_pct[2]),
            format!("{:.1}", self.overlap_filtered_pct[0]),
            format!("{:.1}", self.overlap_filtered_pct[1]),
            format!("{:.1}", self.overlap_filtered_pct[2]),
        ];
        let widths: Vec<usize> = head
            .iter()
            .zip(&vals)
            .map(|(h, v)| h.len().max(v.len()))
            .collect();
        let row = |cells: &mut dyn Iterator<Item = String>| {
            cells
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        format!(
            "{}\n{}\nscenarios {} failures {}\n",
            row(&mut head.iter().map(|s| s.to_string())),
            row(&mut vals.iter().cloned()),
            self.scenarios,
            self.failures
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic::{generate, Template};
    use crate::world::{Obstacle, Prediction, VehicleState};

    fn straight(v: f64, y: f64, steps: usize) -> Trajectory {
        Trajectory {
            dt: 0.5,
            states: (0..=steps)
                .map(|i| VehicleState {
                    x: v * 0.5 * i as f64,
                    y,
                    v,
                    ..Default::default()
                })
                .collect(),
        }
    }

    fn demo(human: Trajectory) -> DemoExample {
        DemoExample {
            id: "d".into(),
            scenario: generate(Template::Straight, 0),
            human_behavior: BehaviorKind::KeepLane,
            human_trajectory: human,
            human_controls: None,
        }
    }

    #[test]
    fn identical_plan_scores_zero() {
        let h = straight(10.0, 0.0, 20);
        let d = demo(h.clone());
        let m = scenario_metrics(
            "d",
            &h,
            BehaviorKind::KeepLane,
            &d,
            &PlannerConfig::default(),
        );
        assert_eq!(m.l2_at, [0.0; 3]);
        assert!(!m.behavior_differs);
    }

    #[test]
    fn lateral_offset_shows_in_every_horizon() {
        let h = straight(10.0, 0.0, 20);
        let d = demo(h.clone());
        let m = scenario_metrics(
            "d",
            &straight(10.0, 1.0, 20),
            BehaviorKind::KeepLane,
            &d,
            &PlannerConfig::default(),
        );
        for v in m.l2_at {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn collision_at_2_4_s_counts_only_at_3_s() {
        let mut sc = generate(Template::Straight, 0);
        sc.obstacles.clear();
        let plan = straight(10.0, 0.0, 20);
        // Static box whose rear edge the SDV front reaches at t = 2.4 s.
        let x = 10.0 * 2.4 + 2.4 + 1.0 - 0.05;
        let poses = vec![
            Pose {
                x,
                y: 0.0,
                theta: 0.0
            };
            21
        ];
        sc.obstacles.push(Obstacle {
            id: "wall".into(),
            class: ObstacleClass::Static,
            polygon: rectangle(2.0, 2.0),
            predictions: vec![Prediction {
                probability: 1.0,
                poses,
            }],
            detected: true,
            ground_truth: None,
        });
        let d = DemoExample {
            scenario: sc,
            ..demo(plan.clone())
        };
        let m = scenario_metrics(
            "d",
            &plan,
            BehaviorKind::KeepLane,
            &d,
            &PlannerConfig::default(),
        );
        let t = m.overlap_time.unwrap();
        assert!((t - 2.4).abs() < 1e-9, "{t}");
        let r = aggregate(&[m], 0);
        assert_eq!(r.overlap_pct, [0.0, 0.0, 100.0]);
    }

    #[test]
    fn exclusion_rule_drops_undetected_and_far_behind() {
        let mut sc = generate(Template::Straight, 0);
        sc.obstacles.clear();
        sc.sdv = VehicleState::default();
        let plan = straight(0.0, 0.0, 20);
        let at = |x: f64| {
            vec![
                Pose {
                    x,
                    y: 0.0,
                    theta: 0.0
                };
                21
            ]
        };
        let mut ob = Obstacle {
            id: "a".into(),
            class: ObstacleClass::Vehicle,
            polygon: rectangle(4.0, 2.0),
            predictions: vec![Prediction {
                probability: 1.0,
                poses: at(50.0),
            }],
            detected: false,
            ground_truth: Some(at(0.0)),
        };
        sc.obstacles.push(ob.clone());
        assert!(first_overlap(&plan, &sc, 4.8, 2.0, false).is_some());
        assert!(first_overlap(&plan, &sc, 4.8, 2.0, true).is_none());
        ob.detected = true;
        sc.obstacles[0] = ob.clone();
        assert!(
            first_overlap(&plan, &sc, 4.8, 2.0, true).is_none(),
            "prediction never overlapped"
        );
        ob.predictions[0].poses = at(0.0);
        ob.ground_truth = None;
        sc.obstacles[0] = ob;
        assert!(first_overlap(&plan, &sc, 4.8, 2.0, true).is_some());
    }
}
