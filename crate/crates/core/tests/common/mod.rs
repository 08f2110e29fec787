#![allow(dead_code)]

pub mod oracle;

use jointplan::dynamics::{rollout_trajectory, Control};
use jointplan::geometry::rectangle;
use jointplan::harness::synthetic::{generate, Road, Template, LANE_WIDTH};
use jointplan::world::{
    Obstacle, ObstacleClass, Pose, Prediction, Scenario, Trajectory, VehicleState,
};
use rand::Rng;

pub const STEPS: usize = 20;
pub const DT: f64 = 0.5;

pub fn straight_road(lanes: usize, limit: f64) -> Road {
    Road {
        lanes,
        lane_width: LANE_WIDTH,
        length: 420.0,
        curvature: 0.0,
        speed_limit: limit,
    }
}

/// SDV on `lane` at arc length `s`, heading along the road at speed `v`.
pub fn scene(road: &Road, lane: usize, s: f64, v: f64, obstacles: Vec<Obstacle>) -> Scenario {
    let d = lane as f64 * road.lane_width;
    let p = road.pose(s, d);
    let mut sc = Scenario {
        name: "hand".into(),
        map: road.build(),
        route: (0..road.lanes).map(Road::lane_id).collect(),
        sdv: VehicleState {
            x: p.x,
            y: p.y,
            theta: p.theta,
            kappa: road.curvature_at(d),
            v,
            ..Default::default()
        },
        obstacles,
        horizon_s: STEPS as f64 * DT,
        timestep_s: DT,
    };
    sc.validate().expect("hand scene is valid");
    sc
}

/// Constant-speed poses along the road, `d` to the left of lane 0.
pub fn cruise(road: &Road, s0: f64, d: f64, speed: f64) -> Vec<Pose> {
    (0..=STEPS)
        .map(|t| road.pose(s0 + speed * t as f64 * DT, d))
        .collect()
}

pub fn body(
    id: &str,
    class: ObstacleClass,
    length: f64,
    width: f64,
    preds: Vec<(f64, Vec<Pose>)>,
) -> Obstacle {
    Obstacle {
        id: id.into(),
        class,
        polygon: rectangle(length, width),
        predictions: preds
            .into_iter()
            .map(|(probability, poses)| Prediction { probability, poses })
            .collect(),
        detected: true,
        ground_truth: None,
    }
}

pub fn car(id: &str, poses: Vec<Pose>) -> Obstacle {
    body(id, ObstacleClass::Vehicle, 4.6, 1.9, vec![(1.0, poses)])
}

/// Uniform motion straight ahead from the SDV's initial state.
pub fn uniform(sc: &Scenario) -> Trajectory {
    rollout_trajectory(&sc.sdv, &vec![[0.0, 0.0]; sc.steps()], sc.timestep_s)
}

pub fn random_controls<R: Rng>(rng: &mut R, n: usize, jerk: f64, wrench: f64) -> Vec<Control> {
    (0..n)
        .map(|_| [rng.gen_range(-jerk..jerk), rng.gen_range(-wrench..wrench)])
        .collect()
}

/// A synthetic scene with extra random clutter: obstacles of every class,
/// multi-modal predictions, and sometimes a stop line.
pub fn random_scene<R: Rng>(rng: &mut R) -> Scenario {
    let t = Template::ALL[rng.gen_range(0..Template::ALL.len())];
    let mut sc = generate(t, rng.gen_range(0..1_000_000));
    let lanes = sc.map.lanes.len();
    let road = Road {
        lanes,
        lane_width: LANE_WIDTH,
        length: 420.0,
        curvature: 0.0,
        speed_limit: sc.map.lanes[0].speed_limit,
    };
    let straight = sc.map.lanes[0].centerline.iter().all(|p| p.y.abs() < 1e-9);
    if straight {
        for k in 0..rng.gen_range(0..3) {
            let class = [
                ObstacleClass::Vehicle,
                ObstacleClass::Pedestrian,
                ObstacleClass::Cyclist,
                ObstacleClass::Unknown,
                ObstacleClass::Static,
            ][rng.gen_range(0..5)];
            let n_pred = rng.gen_range(1..=3);
            let mut probs: Vec<f64> = (0..n_pred).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            let fix = 1.0 - probs[..n_pred - 1].iter().sum::<f64>();
            probs[n_pred - 1] = fix;
            let s0 = 40.0 + rng.gen_range(-10.0..80.0);
            let d0 = rng.gen_range(-3.0..(lanes as f64 * LANE_WIDTH));
            let preds = probs
                .into_iter()
                .map(|p| {
                    let speed = rng.gen_range(0.0..15.0);
                    let drift = rng.gen_range(-2.0..2.0);
                    let heading = rng.gen_range(-1.6..1.6);
                    let poses = (0..=STEPS)
                        .map(|i| {
                            let tt = i as f64 * DT;
                            let mut pose = road.pose(s0 + speed * tt, d0 + drift * tt);
                            pose.theta += heading;
                            pose
                        })
                        .collect();
                    (p, poses)
                })
                .collect();
            let (l, w) = if class == ObstacleClass::Pedestrian {
                (0.6, 0.6)
            } else {
                (rng.gen_range(1.5..5.0), rng.gen_range(0.6..2.2))
            };
            sc.obstacles
                .push(body(&format!("clutter{k}"), class, l, w, preds));
        }
        if rng.gen_bool(0.3) {
            let s = 40.0 + rng.gen_range(20.0..150.0);
            for lane in &mut sc.map.lanes {
                lane.stop_line_s = Some(s);
            }
        }
    }
    sc.validate().expect("random scene is valid");
    sc
}

/// Absolute difference scaled by `max(1, |b|)`.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
