//! The planner input: lane map, route, SDV state and predicted obstacles,
//! plus the behavior vocabulary and driving-path construction.

use crate::error::{PlanError, Result};
use crate::frenet::{DrivingPath, SampleAttrs, DEFAULT_SPACING};
use crate::geometry::{
    convex_hull, is_convex_ccw, polyline_length, polyline_point_at, polyline_project,
    ray_polyline_hit, Point2,
};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

pub type LaneId = String;

pub const MAX_POLYGON_VERTICES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState<S = f64> {
    pub x: S,
    pub y: S,
    pub theta: S,
    pub kappa: S,
    pub v: S,
    pub a: S,
    pub kappa_dot: S,
}

impl Default for VehicleState<f64> {
    fn default() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            kappa: 0.0,
            v: 0.0,
            a: 0.0,
            kappa_dot: 0.0,
        }
    }
}

impl<S: Copy> VehicleState<S> {
    pub fn to_array(&self) -> [S; 7] {
        [
            self.x,
            self.y,
            self.theta,
            self.kappa,
            self.v,
            self.a,
            self.kappa_dot,
        ]
    }

    pub fn from_array(a: [S; 7]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            theta: a[2],
            kappa: a[3],
            v: a[4],
            a: a[5],
            kappa_dot: a[6],
        }
    }

    pub fn map<T, F: Fn(S) -> T>(&self, f: F) -> VehicleState<T> {
        VehicleState {
            x: f(self.x),
            y: f(self.y),
            theta: f(self.theta),
            kappa: f(self.kappa),
            v: f(self.v),
            a: f(self.a),
            kappa_dot: f(self.kappa_dot),
        }
    }
}

impl VehicleState {
    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// States on a uniform time grid; state 0 is the current SDV state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<VehicleState>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn positions(&self) -> Vec<Point2> {
        self.states.iter().map(|s| s.position()).collect()
    }

    /// Linear interpolation of the pose at time `t`.
    pub fn pose_at(&self, t: f64) -> (f64, f64, f64) {
        let k = (t / self.dt).floor().max(0.0) as usize;
        if k + 1 >= self.states.len() {
            let s = self.states.last().unwrap();
            return (s.x, s.y, s.theta);
        }
        let f = t / self.dt - k as f64;
        let (a, b) = (&self.states[k], &self.states[k + 1]);
        (
            a.x + (b.x - a.x) * f,
            a.y + (b.y - a.y) * f,
            a.theta + (b.theta - a.theta) * f,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    pub centerline: Vec<Point2>,
    #[serde(default)]
    pub left_boundary: Vec<Point2>,
    #[serde(default)]
    pub right_boundary: Vec<Point2>,
    pub speed_limit: f64,
    #[serde(default)]
    pub successors: Vec<LaneId>,
    #[serde(default)]
    pub left_neighbor: Option<LaneId>,
    #[serde(default)]
    pub left_change_allowed: bool,
    #[serde(default)]
    pub right_neighbor: Option<LaneId>,
    #[serde(default)]
    pub right_change_allowed: bool,
    /// Static stop line (stop sign or red signal), as arc length along the lane.
    #[serde(default)]
    pub stop_line_s: Option<f64>,
}

impl Lane {
    /// Arc length of the lane end.
    pub fn end_s(&self) -> f64 {
        polyline_length(&self.centerline)
    }

    pub fn left_permitted(&self) -> Option<&LaneId> {
        self.left_neighbor
            .as_ref()
            .filter(|_| self.left_change_allowed)
    }

    pub fn right_permitted(&self) -> Option<&LaneId> {
        self.right_neighbor
            .as_ref()
            .filter(|_| self.right_change_allowed)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LaneMap {
    pub lanes: Vec<Lane>,
}

impl LaneMap {
    pub fn lane(&self, id: &str) -> Result<&Lane> {
        self.lanes
            .iter()
            .find(|l| l.id == id)
            .ok_or_else(|| PlanError::UnknownLane(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.lanes.iter().any(|l| l.id == id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleClass {
    Vehicle,
    Pedestrian,
    Cyclist,
    Unknown,
    Static,
}

impl ObstacleClass {
    pub fn is_vulnerable(self) -> bool {
        matches!(self, ObstacleClass::Pedestrian | ObstacleClass::Cyclist)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probability: f64,
    /// One pose per scenario timestep, starting at t = 0.
    pub poses: Vec<Pose>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: String,
    pub class: ObstacleClass,
    /// Convex body-frame footprint.
    pub polygon: Vec<Point2>,
    pub predictions: Vec<Prediction>,
    /// Whether the upstream detector saw this obstacle.
    #[serde(default = "default_true")]
    pub detected: bool,
    /// Labeled future poses used for evaluation; defaults to the most likely
    /// prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<Pose>>,
}

fn default_true() -> bool {
    true
}

impl Obstacle {
    pub fn most_likely(&self) -> &Prediction {
        self.predictions
            .iter()
            .fold(&self.predictions[0], |best, p| {
                if p.probability > best.probability {
                    p
                } else {
                    best
                }
            })
    }

    pub fn true_poses(&self) -> &[Pose] {
        self.ground_truth
            .as_deref()
            .unwrap_or(&self.most_likely().poses)
    }

    /// Half extents (length, width) of the body polygon's bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        let (mut lx, mut ly) = (0.0f64, 0.0f64);
        for p in &self.polygon {
            lx = lx.max(p.x.abs());
            ly = ly.max(p.y.abs());
        }
        (lx, ly)
    }
}

fn default_horizon() -> f64 {
    10.0
}

fn default_timestep() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub map: LaneMap,
    pub route: Vec<LaneId>,
    pub sdv: VehicleState,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    #[serde(default = "default_timestep")]
    pub timestep_s: f64,
}

impl Scenario {
    pub fn steps(&self) -> usize {
        (self.horizon_s / self.timestep_s).round() as usize
    }

    /// Validates invariants and normalizes obstacle polygons (convex hull).
    pub fn validate(&mut self) -> Result<()> {
        let bad = |m: String| Err(PlanError::InvalidScenario(m));
        if !(self.horizon_s > 0.0) || !(self.timestep_s > 0.0) {
            return bad("horizon and timestep must be positive".into());
        }
        let ratio = self.horizon_s / self.timestep_s;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return bad(format!(
                "horizon {} is not a whole number of {} s steps",
                self.horizon_s, self.timestep_s
            ));
        }
        if !self.sdv.is_finite() {
            return bad("SDV state has non-finite fields".into());
        }
        if self.sdv.v < 0.0 {
            return bad("SDV speed must be non-negative".into());
        }
        let mut ids = HashSet::new();
        for lane in &self.map.lanes {
            if !ids.insert(lane.id.clone()) {
                return bad(format!("duplicate lane id '{}'", lane.id));
            }
            let distinct = lane.centerline.windows(2).all(|w| w[0].dist(&w[1]) > 1e-9);
            if lane.centerline.len() < 2 || !distinct {
                return bad(format!(
                    "lane '{}' centerline needs >= 2 distinct consecutive points",
                    lane.id
                ));
            }
            if !(lane.speed_limit > 0.0) {
                return bad(format!("lane '{}' speed limit must be positive", lane.id));
            }
            check_brackets(lane)?;
        }
        for lane in &self.map.lanes {
            let refs = lane
                .successors
                .iter()
                .chain(lane.left_neighbor.iter())
                .chain(lane.right_neighbor.iter());
            for r in refs {
                if !ids.contains(r) {
                    return Err(PlanError::UnknownLane(r.clone()));
                }
            }
        }
        if self.route.is_empty() {
            return bad("route is empty".into());
        }
        for r in &self.route {
            if !ids.contains(r) {
                return Err(PlanError::UnknownLane(r.clone()));
            }
        }
        let n_poses = self.steps() + 1;
        for ob in &mut self.obstacles {
            if ob.predictions.is_empty() {
                return bad(format!("obstacle '{}' has no predictions", ob.id));
            }
            let total: f64 = ob.predictions.iter().map(|p| p.probability).sum();
            if ob.predictions.iter().any(|p| p.probability < 0.0) || (total - 1.0).abs() > 1e-6 {
                return bad(format!(
                    "obstacle '{}' prediction probabilities sum to {total}",
                    ob.id
                ));
            }
            for p in &ob.predictions {
                if p.poses.len() < n_poses {
                    return bad(format!(
                        "obstacle '{}' prediction covers {} of {} timesteps",
                        ob.id,
                        p.poses.len(),
                        n_poses
                    ));
                }
            }
            if !is_convex_ccw(&ob.polygon) {
                ob.polygon = convex_hull(&ob.polygon);
            }
            if ob.polygon.len() < 3 {
                return bad(format!("obstacle '{}' polygon is degenerate", ob.id));
            }
            if ob.polygon.len() > MAX_POLYGON_VERTICES {
                return bad(format!(
                    "obstacle '{}' polygon has {} vertices (max {MAX_POLYGON_VERTICES})",
                    ob.id,
                    ob.polygon.len()
                ));
            }
        }
        Ok(())
    }

    /// Lane the SDV is driving in: nearest centerline within `limit` meters.
    pub fn localize(&self, limit: f64) -> Result<(&Lane, f64)> {
        let p = self.sdv.position();
        let mut best: Option<(&Lane, f64, f64)> = None;
        for lane in &self.map.lanes {
            let (d, s) = polyline_project(&lane.centerline, &p);
            if best.is_none_or(|b| d < b.1 - 1e-9) {
                best = Some((lane, d, s));
            }
        }
        match best {
            Some((lane, d, s)) if d <= limit => Ok((lane, s)),
            Some((_, d, _)) => Err(PlanError::OffMap { distance: d, limit }),
            None => Err(PlanError::OffMap {
                distance: f64::INFINITY,
                limit,
            }),
        }
    }
}

/// Boundaries must bracket the centerline: left offset >= 0 >= right offset.
fn check_brackets(lane: &Lane) -> Result<()> {
    if lane.left_boundary.len() < 2 || lane.right_boundary.len() < 2 {
        return Ok(());
    }
    let len = lane.end_s();
    let n = ((len / 5.0).ceil() as usize).max(2);
    for i in 1..n {
        let s = len * i as f64 / n as f64;
        let p = polyline_point_at(&lane.centerline, s);
        let q = polyline_point_at(&lane.centerline, (s + 0.1).min(len));
        let t = q.sub(&polyline_point_at(&lane.centerline, s - 0.1));
        let t = t.scale(1.0 / t.norm());
        let n_left = Point2::new(-t.y, t.x);
        let (dl, sl) = polyline_project(&lane.left_boundary, &p);
        let (dr, sr) = polyline_project(&lane.right_boundary, &p);
        let side_l = polyline_point_at(&lane.left_boundary, sl)
            .sub(&p)
            .dot(&n_left);
        let side_r = polyline_point_at(&lane.right_boundary, sr)
            .sub(&p)
            .dot(&n_left);
        if (dl > 1e-6 && side_l < 0.0) || (dr > 1e-6 && side_r > 0.0) {
            return Err(PlanError::InvalidScenario(format!(
                "lane '{}' boundaries do not bracket the centerline at s={s:.1}",
                lane.id
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    KeepLane,
    LeftLaneChange,
    RightLaneChange,
}

impl BehaviorKind {
    pub const ALL: [BehaviorKind; 3] = [
        BehaviorKind::KeepLane,
        BehaviorKind::LeftLaneChange,
        BehaviorKind::RightLaneChange,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BehaviorKind::KeepLane => "keep_lane",
            BehaviorKind::LeftLaneChange => "left_lane_change",
            BehaviorKind::RightLaneChange => "right_lane_change",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    pub kind: BehaviorKind,
    pub source_lane: LaneId,
    pub target_lane: LaneId,
    pub driving_path: DrivingPath,
    pub left_boundary: Vec<Point2>,
    pub right_boundary: Vec<Point2>,
}

/// Knobs for driving-path construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathConfig {
    pub spacing: f64,
    pub on_map_threshold: f64,
    pub back_margin: f64,
    pub lookahead: f64,
    pub blend_min_length: f64,
    pub blend_time_gap: f64,
    /// Fixed blend window; overrides the speed-dependent rule when set.
    pub blend_length: Option<f64>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            spacing: DEFAULT_SPACING,
            on_map_threshold: 5.0,
            back_margin: 10.0,
            lookahead: 300.0,
            blend_min_length: 30.0,
            blend_time_gap: 3.0,
            blend_length: None,
        }
    }
}

/// Behaviors permitted from the SDV's current lane, in the fixed order
/// keep, left, right.
/// Behavior implied by the lane nearest the trajectory's last position: the
/// starting lane means keep-lane, a permitted neighbor a change toward it.
/// Any other lane counts as keep-lane.
pub fn infer_behavior(
    scenario: &Scenario,
    traj: &Trajectory,
    cfg: &PathConfig,
) -> Result<BehaviorKind> {
    let (start, _) = scenario.localize(cfg.on_map_threshold)?;
    let Some(last) = traj.states.last() else {
        return Ok(BehaviorKind::KeepLane);
    };
    let p = last.position();
    let end = scenario
        .map
        .lanes
        .iter()
        .min_by(|a, b| {
            polyline_project(&a.centerline, &p)
                .0
                .total_cmp(&polyline_project(&b.centerline, &p).0)
        })
        .map(|l| &l.id);
    Ok(match end {
        Some(id) if start.left_permitted() == Some(id) => BehaviorKind::LeftLaneChange,
        Some(id) if start.right_permitted() == Some(id) => BehaviorKind::RightLaneChange,
        _ => BehaviorKind::KeepLane,
    })
}

pub fn allowed_behaviors(scenario: &Scenario, cfg: &PathConfig) -> Result<Vec<Behavior>> {
    let (lane, _) = scenario.localize(cfg.on_map_threshold)?;
    let mut out = vec![build_behavior(
        scenario,
        BehaviorKind::KeepLane,
        &lane.id,
        cfg,
    )?];
    if let Some(l) = lane.left_permitted() {
        out.push(build_behavior(
            scenario,
            BehaviorKind::LeftLaneChange,
            l,
            cfg,
        )?);
    }
    if let Some(r) = lane.right_permitted() {
        out.push(build_behavior(
            scenario,
            BehaviorKind::RightLaneChange,
            r,
            cfg,
        )?);
    }
    Ok(out)
}

pub fn build_behavior(
    scenario: &Scenario,
    kind: BehaviorKind,
    target_lane: &str,
    cfg: &PathConfig,
) -> Result<Behavior> {
    let (source, _) = scenario.localize(cfg.on_map_threshold)?;
    let (path, left, right) = build_driving_path(scenario, kind, target_lane, cfg)?;
    Ok(Behavior {
        kind,
        source_lane: source.id.clone(),
        target_lane: target_lane.to_string(),
        driving_path: path,
        left_boundary: left,
        right_boundary: right,
    })
}

/// A lane followed by successors, flattened to polylines.
struct LaneChain<'a> {
    lanes: Vec<&'a Lane>,
    /// Cumulative start arc length of each lane along the chain.
    starts: Vec<f64>,
    centerline: Vec<Point2>,
    left: Vec<Point2>,
    right: Vec<Point2>,
}

impl<'a> LaneChain<'a> {
    fn build(scenario: &'a Scenario, first: &'a Lane, min_len: f64) -> Result<Self> {
        let mut lanes = vec![first];
        let mut starts = vec![0.0];
        let mut total = first.end_s();
        let mut seen: HashSet<&str> = HashSet::from([first.id.as_str()]);
        while total < min_len {
            let cur = *lanes.last().unwrap();
            let next = cur
                .successors
                .iter()
                .find(|s| scenario.route.contains(s))
                .or_else(|| cur.successors.first());
            let Some(next) = next else { break };
            if !seen.insert(next.as_str()) {
                break;
            }
            let lane = scenario.map.lane(next)?;
            starts.push(total);
            total += lane.end_s();
            lanes.push(lane);
        }
        let mut centerline = Vec::new();
        let mut left = Vec::new();
        let mut right = Vec::new();
        for l in &lanes {
            centerline.extend(l.centerline.iter().copied());
            left.extend(l.left_boundary.iter().copied());
            right.extend(l.right_boundary.iter().copied());
        }
        centerline.dedup_by(|a, b| a.dist(b) < 1e-9);
        Ok(Self {
            lanes,
            starts,
            centerline,
            left,
            right,
        })
    }

    fn lane_at(&self, s: f64) -> &'a Lane {
        let i = self.starts.iter().rposition(|&st| st <= s).unwrap_or(0);
        self.lanes[i]
    }

    fn length(&self) -> f64 {
        polyline_length(&self.centerline)
    }
}

fn ease(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

/// Builds the driving path and the relevant lane boundaries for a behavior.
///
/// Keep-lane follows the current lane; a lane change blends the current
/// centerline into the target centerline with a quintic ease over
/// `max(blend_min_length, blend_time_gap * v)` meters starting at the SDV.
pub fn build_driving_path(
    scenario: &Scenario,
    kind: BehaviorKind,
    target_lane: &str,
    cfg: &PathConfig,
) -> Result<(DrivingPath, Vec<Point2>, Vec<Point2>)> {
    let (current, s_sdv) = scenario.localize(cfg.on_map_threshold)?;
    let target = scenario.map.lane(target_lane)?;
    match kind {
        BehaviorKind::KeepLane if target.id != current.id => {
            return Err(PlanError::InvalidScenario(format!(
                "keep_lane target '{}' is not the current lane '{}'",
                target.id, current.id
            )))
        }
        BehaviorKind::LeftLaneChange if current.left_permitted() != Some(&target.id) => {
            return Err(PlanError::InvalidScenario(format!(
                "lane '{}' is not a permitted left change from '{}'",
                target.id, current.id
            )))
        }
        BehaviorKind::RightLaneChange if current.right_permitted() != Some(&target.id) => {
            return Err(PlanError::InvalidScenario(format!(
                "lane '{}' is not a permitted right change from '{}'",
                target.id, current.id
            )))
        }
        _ => {}
    }
    let needed = s_sdv + cfg.lookahead;
    let cur_chain = LaneChain::build(scenario, current, needed)?;
    let s_start = (s_sdv - cfg.back_margin).max(0.0);
    let step = cfg.spacing * 0.5;

    let mut pts: Vec<Point2> = Vec::new();
    // (source arc length along input polyline) -> which side supplies attributes
    let blend = match kind {
        BehaviorKind::KeepLane => None,
        _ => Some(cfg.blend_length.unwrap_or_else(|| {
            cfg.blend_min_length
                .max(cfg.blend_time_gap * scenario.sdv.v)
        })),
    };
    let tgt_chain = match kind {
        BehaviorKind::KeepLane => None,
        _ => {
            let (_, s_t) = polyline_project(&target.centerline, &scenario.sdv.position());
            Some((
                LaneChain::build(scenario, target, s_t + cfg.lookahead)?,
                s_t,
            ))
        }
    };

    let cur_len = cur_chain.length();
    match (&tgt_chain, blend) {
        (Some((tc, _)), Some(w)) => {
            let blend_end = s_sdv + w;
            let mut sigma = s_start;
            let mut last_target_s = 0.0;
            while sigma <= blend_end.min(cur_len) + 1e-9 {
                let c = polyline_point_at(&cur_chain.centerline, sigma);
                let (_, ts) = polyline_project(&tc.centerline, &c);
                let t = polyline_point_at(&tc.centerline, ts);
                let e = ease((sigma - s_sdv) / w);
                pts.push(c.lerp(&t, e));
                last_target_s = ts;
                sigma += step;
            }
            let tc_len = tc.length();
            let mut ts = last_target_s + step;
            let end = (last_target_s + cfg.lookahead).min(tc_len);
            while ts <= end + 1e-9 {
                pts.push(polyline_point_at(&tc.centerline, ts));
                ts += step;
            }
        }
        _ => {
            let end = needed.min(cur_len);
            let mut sigma = s_start;
            while sigma <= end + 1e-9 {
                pts.push(polyline_point_at(&cur_chain.centerline, sigma));
                sigma += step;
            }
            if (end - (sigma - step)).abs() > 1e-6 {
                pts.push(polyline_point_at(&cur_chain.centerline, end));
            }
        }
    }

    let mut path = DrivingPath::from_polyline(&pts, cfg.spacing)?;

    let (left_b, right_b) = match (kind, &tgt_chain) {
        (BehaviorKind::LeftLaneChange, Some((tc, _))) => (tc.left.clone(), cur_chain.right.clone()),
        (BehaviorKind::RightLaneChange, Some((tc, _))) => {
            (cur_chain.left.clone(), tc.right.clone())
        }
        _ => (cur_chain.left.clone(), cur_chain.right.clone()),
    };

    // Per-sample attributes: speed limit of the underlying lane(s) and
    // boundary offsets by ray casting along the path normal.
    let blend_start_s = s_sdv - s_start;
    let samples = path.samples().to_vec();
    let mut attrs: Vec<SampleAttrs> = Vec::with_capacity(samples.len());
    let mut prev = SampleAttrs::default();
    for smp in &samples {
        let p = Point2::new(smp.x, smp.y);
        let (_, cs) = polyline_project(&cur_chain.centerline, &p);
        let cur_lane = cur_chain.lane_at(cs);
        let limit = match (&tgt_chain, blend) {
            (Some((tc, _)), Some(w)) => {
                let (_, ts) = polyline_project(&tc.centerline, &p);
                let tl = tc.lane_at(ts);
                if smp.s < blend_start_s {
                    cur_lane.speed_limit
                } else if smp.s <= blend_start_s + w {
                    cur_lane.speed_limit.min(tl.speed_limit)
                } else {
                    tl.speed_limit
                }
            }
            _ => cur_lane.speed_limit,
        };
        let n = Point2::new(-smp.theta.sin(), smp.theta.cos());
        let left = ray_polyline_hit(&p, &n, &left_b).unwrap_or(prev.left_offset);
        let right = ray_polyline_hit(&p, &n.scale(-1.0), &right_b)
            .map(|t| -t)
            .unwrap_or(prev.right_offset);
        let a = SampleAttrs {
            speed_limit: limit,
            left_offset: left,
            right_offset: right,
        };
        attrs.push(a);
        prev = a;
    }
    path.set_attributes(&attrs);

    // Stop lines of every lane on the chains, mapped onto the path.
    let mut stops = Vec::new();
    let chains: Vec<&LaneChain> = std::iter::once(&cur_chain)
        .chain(tgt_chain.iter().map(|(c, _)| c))
        .collect();
    for chain in chains {
        for lane in &chain.lanes {
            if let Some(ss) = lane.stop_line_s {
                let p = polyline_point_at(&lane.centerline, ss);
                if let Ok((s, d)) = path.project(p.x, p.y, None) {
                    if d.abs() < 2.5
                        && s > 0.0
                        && s < path.length()
                        && !stops.iter().any(|&x: &f64| (x - s).abs() < 1.0)
                    {
                        stops.push(s);
                    }
                }
            }
        }
    }
    stops.sort_by(f64::total_cmp);
    path.stop_lines = stops;
    Ok((path, left_b, right_b))
}
