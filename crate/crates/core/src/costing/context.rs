use super::{CostConfig, SideAssignment};
use crate::error::Result;
use crate::geometry::{polyline_length, polyline_project, transform_polygon, Point2};
use crate::world::{Behavior, Lane, ObstacleClass, Scenario};
use std::collections::{HashSet, VecDeque};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Behavioral,
    Trajectory,
}

/// One predicted obstacle pose at one timestep.
#[derive(Clone, Debug)]
pub struct ObstacleAt {
    pub obstacle: usize,
    pub class: ObstacleClass,
    pub probability: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub speed: f64,
    /// World-frame polygon.
    pub polygon: Vec<Point2>,
    /// Distance from the pose to the farthest polygon vertex.
    pub radius: f64,
    pub half_length: f64,
    pub half_width: f64,
}

/// Everything the features need that does not depend on the trajectory.
#[derive(Clone, Debug)]
pub struct CostContext<'a> {
    pub behavior: &'a Behavior,
    pub behavior_index: usize,
    pub cfg: &'a CostConfig,
    pub stage: Stage,
    pub side: Option<&'a SideAssignment>,
    pub dt: f64,
    pub steps: usize,
    /// Arc length of the SDV's initial foot point.
    pub s0: f64,
    /// Predicted obstacle poses, indexed by timestep.
    pub obstacles: Vec<Vec<ObstacleAt>>,
    /// `(stop arc length, probability)` induced by pedestrians, per timestep.
    pub pedestrian_lines: Vec<Vec<(f64, f64)>>,
    /// Same for vehicles crossing the path.
    pub crossing_lines: Vec<Vec<(f64, f64)>>,
    /// Static stop lines ahead of the SDV.
    pub stop_lines: Vec<f64>,
    /// `(arc length, speed limit)` of upcoming speed constraints.
    pub speed_constraints: Vec<(f64, f64)>,
    /// Route features: lane changes needed, dead-end violation.
    pub route: [f64; 2],
    pub circle_offsets: Vec<f64>,
    pub circle_radius: f64,
}

impl<'a> CostContext<'a> {
    pub fn new(
        scenario: &Scenario,
        behavior: &'a Behavior,
        cfg: &'a CostConfig,
        stage: Stage,
        side: Option<&'a SideAssignment>,
    ) -> Result<Self> {
        let path = &behavior.driving_path;
        let dt = scenario.timestep_s;
        let steps = scenario.steps();
        let (s0, _) = path.project(scenario.sdv.x, scenario.sdv.y, None)?;
        let (circle_offsets, circle_radius) = cfg.circles();

        let mut obstacles: Vec<Vec<ObstacleAt>> = vec![Vec::new(); steps + 1];
        let mut pedestrian_lines = vec![Vec::new(); steps + 1];
        let mut crossing_lines = vec![Vec::new(); steps + 1];
        for (oi, ob) in scenario.obstacles.iter().enumerate() {
            let (hl, hw) = ob.half_extents();
            let radius = ob.polygon.iter().map(|p| p.norm()).fold(0.0, f64::max);
            for pred in &ob.predictions {
                if pred.probability <= 0.0 {
                    continue;
                }
                for t in 0..=steps {
                    let pose = pred.poses[t];
                    let speed = if steps == 0 {
                        0.0
                    } else {
                        let (a, b) = if t == 0 { (0, 1) } else { (t - 1, t) };
                        let (pa, pb) = (pred.poses[a], pred.poses[b]);
                        (pb.x - pa.x).hypot(pb.y - pa.y) / dt
                    };
                    obstacles[t].push(ObstacleAt {
                        obstacle: oi,
                        class: ob.class,
                        probability: pred.probability,
                        x: pose.x,
                        y: pose.y,
                        theta: pose.theta,
                        speed,
                        polygon: transform_polygon(&ob.polygon, pose.x, pose.y, pose.theta),
                        radius,
                        half_length: hl,
                        half_width: hw,
                    });
                    let lines = match ob.class {
                        ObstacleClass::Pedestrian => &mut pedestrian_lines[t],
                        ObstacleClass::Vehicle => &mut crossing_lines[t],
                        _ => continue,
                    };
                    let Ok((sp, dp)) = path.project(pose.x, pose.y, None) else {
                        continue;
                    };
                    if dp.abs() > cfg.yield_corridor || sp <= s0 || sp > path.length() {
                        continue;
                    }
                    match ob.class {
                        ObstacleClass::Pedestrian => {
                            lines.push((sp - cfg.margin_pedestrian, pred.probability))
                        }
                        _ => {
                            let th = path.eval(sp).theta;
                            if (pose.theta - th).sin().abs() >= cfg.crossing_sin {
                                lines.push((sp - cfg.margin_intersection, pred.probability));
                            }
                        }
                    }
                }
            }
        }

        let stop_lines: Vec<f64> = path
            .stop_lines
            .iter()
            .copied()
            .filter(|s| *s > s0)
            .collect();
        let mut speed_constraints: Vec<(f64, f64)> = stop_lines.iter().map(|s| (*s, 0.0)).collect();
        let samples = path.samples();
        for w in samples.windows(2) {
            if w[1].s > s0 && w[1].speed_limit < w[0].speed_limit - 1e-9 {
                speed_constraints.push((w[1].s, w[1].speed_limit));
            }
        }

        let route = route_features(scenario, behavior, cfg)?;
        Ok(Self {
            behavior,
            behavior_index: behavior.kind.index(),
            cfg,
            stage,
            side,
            dt,
            steps,
            s0,
            obstacles,
            pedestrian_lines,
            crossing_lines,
            stop_lines,
            speed_constraints,
            route,
            circle_offsets,
            circle_radius,
        })
    }
}

/// Lane changes needed to reach the route from the target lane, by 0-1 BFS
/// over successor (free) and permitted-neighbor (one change) edges.
pub fn lane_changes_to_route(scenario: &Scenario, from: &str) -> f64 {
    let lanes = &scenario.map.lanes;
    let index = |id: &str| lanes.iter().position(|l| l.id == id);
    let Some(start) = index(from) else {
        return lanes.len() as f64;
    };
    let on_route: HashSet<&str> = scenario.route.iter().map(|s| s.as_str()).collect();
    let mut dist = vec![usize::MAX; lanes.len()];
    let mut queue = VecDeque::from([start]);
    dist[start] = 0;
    while let Some(i) = queue.pop_front() {
        let lane = &lanes[i];
        if on_route.contains(lane.id.as_str()) {
            return dist[i] as f64;
        }
        let free = lane.successors.iter().map(|s| (s, 0));
        let changes = lane
            .left_permitted()
            .into_iter()
            .chain(lane.right_permitted())
            .map(|s| (s, 1));
        for (next, cost) in free.chain(changes) {
            if let Some(j) = index(next) {
                let nd = dist[i] + cost;
                if nd < dist[j] {
                    dist[j] = nd;
                    if cost == 0 {
                        queue.push_front(j);
                    } else {
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    lanes.len() as f64
}

/// Distance from the SDV to the end of the target lane's successor chain, or
/// `None` when the chain reaches the route's destination or loops.
pub fn distance_to_dead_end(scenario: &Scenario, behavior: &Behavior) -> Option<f64> {
    let mut lane: &Lane = scenario.map.lane(&behavior.target_lane).ok()?;
    let (_, s_sdv) = polyline_project(&lane.centerline, &scenario.sdv.position());
    let mut dist = lane.end_s() - s_sdv;
    let mut seen = HashSet::from([lane.id.as_str()]);
    let destination = scenario.route.last()?;
    loop {
        if &lane.id == destination {
            return None;
        }
        let next = lane
            .successors
            .iter()
            .find(|s| scenario.route.contains(s))
            .or_else(|| lane.successors.first());
        let Some(next) = next else {
            return Some(dist);
        };
        if !seen.insert(next.as_str()) {
            return None;
        }
        lane = scenario.map.lane(next).ok()?;
        dist += polyline_length(&lane.centerline);
    }
}

fn route_features(scenario: &Scenario, behavior: &Behavior, cfg: &CostConfig) -> Result<[f64; 2]> {
    let changes = lane_changes_to_route(scenario, &behavior.target_lane);
    let dead = distance_to_dead_end(scenario, behavior)
        .map_or(0.0, |d| (cfg.deadend_threshold - d).max(0.0).powi(2));
    Ok([changes, dead])
}
