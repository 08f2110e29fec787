//! Straightforward cost evaluator written against the feature definitions,
//! sharing only data types with the library.

use jointplan::costing::{CostConfig, Side, SideAssignment};
use jointplan::frenet::DrivingPath;
use jointplan::geometry::Point2;
use jointplan::world::{Behavior, ObstacleClass, Scenario, VehicleState};

pub const N: usize = 30;

const OVERLAP: usize = 0;
const OBSTACLE: usize = 1;
const OBSTACLE_VULNERABLE: usize = 2;
const PATH: usize = 3;
const LANE_LEFT: usize = 4;
const LANE_RIGHT: usize = 5;
const HEADWAY: usize = 6;
const YIELD_PED: usize = 7;
const YIELD_CROSS: usize = 8;
const YIELD_STOP: usize = 9;
const ROUTE_LC: usize = 10;
const ROUTE_DEAD: usize = 11;
const CTG: usize = 12;
const SPEED: usize = 13;
const PROGRESS: usize = 14;
const JERK: usize = 15;
const JERK_POS: usize = 16;
const JERK_NEG: usize = 17;
const ACCEL: usize = 18;
const ACCEL_VIOL: usize = 19;
const DECEL_VIOL: usize = 20;
const LAT_ACCEL: usize = 21;
const LAT_ACCEL_L: usize = 22;
const LAT_ACCEL_R: usize = 23;
const LAT_JERK: usize = 24;
const LAT_JERK_L: usize = 25;
const LAT_JERK_R: usize = 26;
const CURV: usize = 27;
const TWIST: usize = 28;
const WRENCH: usize = 29;

fn hinge2(x: f64) -> f64 {
    if x > 0.0 {
        x * x
    } else {
        0.0
    }
}

// Reference line ---------------------------------------------------------

struct Line<'a> {
    p: &'a DrivingPath,
}

impl Line<'_> {
    fn len(&self) -> f64 {
        self.p.samples().last().unwrap().s
    }

    fn seg(&self, s: f64) -> usize {
        let n = self.p.samples().len();
        if s <= 0.0 {
            return 0;
        }
        let i = (s / self.p.spacing()).floor() as usize;
        if i > n - 2 {
            n - 2
        } else {
            i
        }
    }

    /// (x, y, theta, kappa)
    fn at(&self, s: f64) -> (f64, f64, f64, f64) {
        let smp = self.p.samples();
        let len = self.len();
        if s < 0.0 || s > len {
            let e = if s < 0.0 {
                &smp[0]
            } else {
                &smp[smp.len() - 1]
            };
            let u = s - e.s;
            return (
                e.x + u * e.theta.cos(),
                e.y + u * e.theta.sin(),
                e.theta,
                0.0,
            );
        }
        let i = self.seg(s);
        let (a, b) = (&smp[i], &smp[i + 1]);
        let h = self.p.spacing();
        // Heading is the cubic matching theta and kappa at both ends.
        let delta = b.theta - a.theta - a.kappa * h;
        let dk = b.kappa - a.kappa;
        let c2 = (3.0 * delta - dk * h) / (h * h);
        let c3 = (dk * h - 2.0 * delta) / (h * h * h);
        let heading = |u: f64| a.theta + a.kappa * u + c2 * u * u + c3 * u * u * u;
        let u = s - a.s;
        let nodes = [
            0.0,
            -0.5384693101056831,
            0.5384693101056831,
            -0.906179845938664,
            0.906179845938664,
        ];
        let weights = [
            0.5688888888888889,
            0.4786286704993665,
            0.4786286704993665,
            0.2369268850561891,
            0.2369268850561891,
        ];
        let mut ix = 0.0;
        let mut iy = 0.0;
        for k in 0..5 {
            let th = heading(0.5 * u * (1.0 + nodes[k]));
            ix += weights[k] * th.cos();
            iy += weights[k] * th.sin();
        }
        (
            a.x + 0.5 * u * ix,
            a.y + 0.5 * u * iy,
            heading(u),
            a.kappa + 2.0 * c2 * u + 3.0 * c3 * u * u,
        )
    }

    fn polish(&self, x: f64, y: f64, mut s: f64) -> (f64, f64) {
        for _ in 0..60 {
            let (px, py, th, k) = self.at(s);
            let along = (x - px) * th.cos() + (y - py) * th.sin();
            let d = (y - py) * th.cos() - (x - px) * th.sin();
            let step = along / (1.0 - k * d);
            s += step;
            if step.abs() < 1e-14 {
                break;
            }
        }
        let (px, py, th, _) = self.at(s);
        (s, (y - py) * th.cos() - (x - px) * th.sin())
    }

    /// Closest sample within 12 m of the hint, then Newton.
    fn project_near(&self, x: f64, y: f64, hint: f64) -> (f64, f64) {
        let smp = self.p.samples();
        let h = self.p.spacing();
        let w = (12.0 / h) as usize;
        let c = ((hint.max(0.0) / h) as usize).min(smp.len() - 1);
        let mut best = c.saturating_sub(w);
        for i in c.saturating_sub(w)..=(c + w).min(smp.len() - 1) {
            let di = (smp[i].x - x).powi(2) + (smp[i].y - y).powi(2);
            let db = (smp[best].x - x).powi(2) + (smp[best].y - y).powi(2);
            if di < db {
                best = i;
            }
        }
        self.polish(x, y, smp[best].s)
    }

    fn project_global(&self, x: f64, y: f64) -> (f64, f64) {
        let smp = self.p.samples();
        let mut best = 0;
        for i in 0..smp.len() {
            let di = (smp[i].x - x).powi(2) + (smp[i].y - y).powi(2);
            let db = (smp[best].x - x).powi(2) + (smp[best].y - y).powi(2);
            if di < db {
                best = i;
            }
        }
        self.polish(x, y, smp[best].s)
    }

    fn boundaries(&self, s: f64) -> (f64, f64) {
        let smp = self.p.samples();
        let sc = s.clamp(0.0, self.len());
        let i = self.seg(sc);
        let (a, b) = (&smp[i], &smp[(i + 1).min(smp.len() - 1)]);
        let t = ((sc - a.s) / self.p.spacing()).clamp(0.0, 1.0);
        (
            a.left_offset + t * (b.left_offset - a.left_offset),
            a.right_offset + t * (b.right_offset - a.right_offset),
        )
    }

    /// Limit of the nearer sample of the segment containing `s`.
    fn limit(&self, s: f64) -> f64 {
        let smp = self.p.samples();
        let i = self.seg(s.max(0.0));
        if s / self.p.spacing() - i as f64 > 0.5 {
            smp[(i + 1).min(smp.len() - 1)].speed_limit
        } else {
            smp[i].speed_limit
        }
    }
}

// Geometry ----------------------------------------------------------------

fn place(body: &[Point2], x: f64, y: f64, th: f64) -> Vec<(f64, f64)> {
    body.iter()
        .map(|p| {
            (
                x + th.cos() * p.x - th.sin() * p.y,
                y + th.sin() * p.x + th.cos() * p.y,
            )
        })
        .collect()
}

fn dist_to_polygon(px: f64, py: f64, poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut inside = true;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let (ax, ay) = poly[i];
        let (bx, by) = poly[(i + 1) % n];
        let (ex, ey) = (bx - ax, by - ay);
        if (py - ay) * ex - (px - ax) * ey < 0.0 {
            inside = false;
        }
        let t = (((px - ax) * ex + (py - ay) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
        let (qx, qy) = (ax + t * ex, ay + t * ey);
        best = best.min((px - qx).hypot(py - qy));
    }
    if inside {
        0.0
    } else {
        best
    }
}

fn circles(cfg: &CostConfig) -> (Vec<f64>, f64) {
    let n = cfg.footprint_circles.max(1) as f64;
    let seg = cfg.vehicle_length / n;
    let offs = (0..cfg.footprint_circles.max(1))
        .map(|i| (i as f64 + 0.5) * seg - cfg.vehicle_length / 2.0)
        .collect();
    (
        offs,
        (seg * seg / 4.0 + cfg.vehicle_width * cfg.vehicle_width / 4.0).sqrt(),
    )
}

// Route -------------------------------------------------------------------

fn route_changes(sc: &Scenario, from: &str) -> f64 {
    let lanes = &sc.map.lanes;
    let mut dist: Vec<f64> = vec![f64::INFINITY; lanes.len()];
    let Some(start) = lanes.iter().position(|l| l.id == from) else {
        return lanes.len() as f64;
    };
    dist[start] = 0.0;
    // Bellman-Ford style relaxation; the graph is tiny.
    for _ in 0..lanes.len() + 1 {
        for (i, l) in lanes.iter().enumerate() {
            if !dist[i].is_finite() {
                continue;
            }
            let mut edges: Vec<(&String, f64)> = l.successors.iter().map(|s| (s, 0.0)).collect();
            if l.left_change_allowed {
                if let Some(n) = &l.left_neighbor {
                    edges.push((n, 1.0));
                }
            }
            if l.right_change_allowed {
                if let Some(n) = &l.right_neighbor {
                    edges.push((n, 1.0));
                }
            }
            for (id, c) in edges {
                if let Some(j) = lanes.iter().position(|l| &l.id == id) {
                    dist[j] = dist[j].min(dist[i] + c);
                }
            }
        }
    }
    let best = lanes
        .iter()
        .enumerate()
        .filter(|(_, l)| sc.route.contains(&l.id))
        .map(|(i, _)| dist[i])
        .fold(f64::INFINITY, f64::min);
    if best.is_finite() {
        best
    } else {
        lanes.len() as f64
    }
}

fn arc_of_projection(pts: &[Point2], x: f64, y: f64) -> f64 {
    let mut acc = 0.0;
    let mut best = (f64::INFINITY, 0.0);
    for w in pts.windows(2) {
        let (ex, ey) = (w[1].x - w[0].x, w[1].y - w[0].y);
        let l = ex.hypot(ey);
        let t = (((x - w[0].x) * ex + (y - w[0].y) * ey) / (l * l)).clamp(0.0, 1.0);
        let d = (x - w[0].x - t * ex).hypot(y - w[0].y - t * ey);
        if d < best.0 {
            best = (d, acc + t * l);
        }
        acc += l;
    }
    best.1
}

fn polyline_len(pts: &[Point2]) -> f64 {
    pts.windows(2)
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .sum()
}

fn dead_end(sc: &Scenario, b: &Behavior, threshold: f64) -> f64 {
    let Some(dest) = sc.route.last() else {
        return 0.0;
    };
    let Some(mut lane) = sc.map.lanes.iter().find(|l| l.id == b.target_lane) else {
        return 0.0;
    };
    let mut remaining =
        polyline_len(&lane.centerline) - arc_of_projection(&lane.centerline, sc.sdv.x, sc.sdv.y);
    let mut visited = vec![lane.id.clone()];
    loop {
        if &lane.id == dest {
            return 0.0;
        }
        let next = lane
            .successors
            .iter()
            .find(|s| sc.route.contains(s))
            .or(lane.successors.first());
        let Some(next) = next else {
            return hinge2(threshold - remaining);
        };
        if visited.contains(next) {
            return 0.0;
        }
        visited.push(next.clone());
        match sc.map.lanes.iter().find(|l| &l.id == next) {
            Some(l) => lane = l,
            None => return 0.0,
        }
        remaining += polyline_len(&lane.centerline);
    }
}

// Evaluator ---------------------------------------------------------------

/// Feature rows `0..=T` of `states` for `behavior`. `side` switches on the
/// continuous-stage overlap; without it the discrete indicator is used.
/// True when every state stays within 20 m of the path and clear of its
/// centres of curvature, where the Frenet frame is well defined.
pub fn regular(sc: &Scenario, b: &Behavior, states: &[VehicleState]) -> bool {
    let line = Line { p: &b.driving_path };
    let (mut s, _) = line.project_global(sc.sdv.x, sc.sdv.y);
    for t in 1..states.len() {
        let hint = s + states[t - 1].v.max(0.0) * sc.timestep_s;
        let (st, d) = line.project_near(states[t].x, states[t].y, hint);
        let (_, _, _, k) = line.at(st);
        if 1.0 - k * d < 0.2 || d.abs() > 20.0 {
            return false;
        }
        s = st;
    }
    true
}

pub fn evaluate(
    sc: &Scenario,
    b: &Behavior,
    cfg: &CostConfig,
    states: &[VehicleState],
    side: Option<&SideAssignment>,
) -> Vec<[f64; N]> {
    let line = Line { p: &b.driving_path };
    let dt = sc.timestep_s;
    let steps = states.len() - 1;
    let (offs, r) = circles(cfg);
    let mut rows = vec![[0.0; N]; states.len()];

    rows[0][ROUTE_LC] = route_changes(sc, &b.target_lane);
    rows[0][ROUTE_DEAD] = dead_end(sc, b, cfg.deadend_threshold);

    let (s0, _) = line.project_global(sc.sdv.x, sc.sdv.y);

    // Arc lengths along the path, each projection seeded near the previous.
    let mut arc = vec![s0];
    for t in 1..states.len() {
        let hint = arc[t - 1] + states[t - 1].v.max(0.0) * dt;
        arc.push(line.project_near(states[t].x, states[t].y, hint).0);
    }

    // Stop lines ahead and speed drops.
    let stops: Vec<f64> = b
        .driving_path
        .stop_lines
        .iter()
        .copied()
        .filter(|s| *s > s0)
        .collect();
    let mut drops: Vec<(f64, f64)> = stops.iter().map(|s| (*s, 0.0)).collect();
    let smp = b.driving_path.samples();
    for i in 1..smp.len() {
        if smp[i].s > s0 && smp[i].speed_limit < smp[i - 1].speed_limit - 1e-9 {
            drops.push((smp[i].s, smp[i].speed_limit));
        }
    }

    for t in 1..states.len() {
        let x = &states[t];
        let (s, d) = line.polish(x.x, x.y, arc[t]);
        let (_, _, path_th, _) = line.at(s);
        let row = &mut rows[t];

        row[PATH] = d * d;
        let (lo, ro) = line.boundaries(s);
        for &l in &offs {
            let dc = d + (x.theta - path_th).sin() * l;
            row[LANE_LEFT] = row[LANE_LEFT].max(hinge2(dc + r - lo + cfg.lane_threshold));
            row[LANE_RIGHT] = row[LANE_RIGHT].max(hinge2(ro + cfg.lane_threshold - dc + r));
        }

        let d_safe = cfg.safety_distance + cfg.safety_time_gap * x.v;
        for (oi, ob) in sc.obstacles.iter().enumerate() {
            let (mut hl, mut hw) = (0.0f64, 0.0f64);
            for p in &ob.polygon {
                hl = hl.max(p.x.abs());
                hw = hw.max(p.y.abs());
            }
            for pred in &ob.predictions {
                let p = pred.probability;
                if p <= 0.0 {
                    continue;
                }
                let pose = pred.poses[t];
                let poly = place(&ob.polygon, pose.x, pose.y, pose.theta);
                let prev = pred.poses[t - 1];
                let ob_speed = (pose.x - prev.x).hypot(pose.y - prev.y) / dt;
                let (dx, dy) = (pose.x - x.x, pose.y - x.y);
                let lon = dx * x.theta.cos() + dy * x.theta.sin();
                let lat = dy * x.theta.cos() - dx * x.theta.sin();

                let mut near = 0.0;
                for &l in &offs {
                    let dist =
                        dist_to_polygon(x.x + l * x.theta.cos(), x.y + l * x.theta.sin(), &poly);
                    near += hinge2(d_safe - dist);
                }
                let k = if matches!(ob.class, ObstacleClass::Pedestrian | ObstacleClass::Cyclist) {
                    OBSTACLE_VULNERABLE
                } else {
                    OBSTACLE
                };
                row[k] += p * x.v.max(0.0) * near;

                if ob.class == ObstacleClass::Vehicle && lon > 0.0 {
                    let gap = lon - cfg.vehicle_length / 2.0 - hl;
                    let safe = x.v * x.v / (2.0 * cfg.comfort_decel)
                        - ob_speed * ob_speed / (2.0 * cfg.hard_decel)
                        + cfg.min_gap;
                    let rel = 1.0
                        - (lat.abs() - cfg.vehicle_width / 2.0 - cfg.headway_lat_margin)
                            / cfg.headway_lat_falloff;
                    row[HEADWAY] += p * hinge2(safe - gap) * rel.clamp(0.0, 1.0);
                }

                if let Some(sa) = side {
                    let gw = cfg.vehicle_width / 2.0 + hw + cfg.side_lat_margin;
                    let gl = cfg.vehicle_length / 2.0 + hl + cfg.side_lon_margin;
                    let inside_lon = (gl - lon.abs()).max(0.0);
                    let inside_lat = (gw - lat.abs()).max(0.0);
                    let v = match sa.sides[oi][t] {
                        Side::Left => (gw - lat).max(0.0).min(inside_lon),
                        Side::Right => (gw + lat).max(0.0).min(inside_lon),
                        Side::Front => (gl - lon).max(0.0).min(inside_lat),
                        Side::Back => (gl + lon).max(0.0).min(inside_lat),
                    };
                    row[OVERLAP] += p * v * v;
                }

                // Yield lines from obstacles inside the corridor ahead.
                let feat = match ob.class {
                    ObstacleClass::Pedestrian => YIELD_PED,
                    ObstacleClass::Vehicle => YIELD_CROSS,
                    _ => continue,
                };
                let (sp, dp) = line.project_global(pose.x, pose.y);
                if dp.abs() > cfg.yield_corridor || sp <= s0 || sp > line.len() {
                    continue;
                }
                let stop = if feat == YIELD_PED {
                    sp - cfg.margin_pedestrian
                } else {
                    let (_, _, th, _) = line.at(sp);
                    if (pose.theta - th).sin().abs() < cfg.crossing_sin {
                        continue;
                    }
                    sp - cfg.margin_intersection
                };
                row[feat] += p * hinge2(s - stop);
            }
        }

        for &stop in &stops {
            row[YIELD_STOP] += hinge2(s - stop);
        }

        let lim = line.limit(s);
        if lim.is_finite() {
            row[SPEED] = hinge2(x.v - lim);
        }

        if t == steps {
            for &(at, vl) in &drops {
                if at - s > 0.0 {
                    let need = (x.v * x.v - vl * vl) / (2.0 * (at - s));
                    row[CTG] = row[CTG].max(hinge2(need - cfg.comfort_decel));
                }
            }
        }

        let ay = x.v * x.v * x.kappa;
        row[ACCEL] = x.a * x.a;
        row[ACCEL_VIOL] = hinge2(x.a - cfg.comfort_accel);
        row[DECEL_VIOL] = hinge2(-x.a - cfg.comfort_decel_bound);
        row[LAT_ACCEL] = ay * ay;
        row[LAT_ACCEL_L] = hinge2(ay - cfg.comfort_lat_accel);
        row[LAT_ACCEL_R] = hinge2(-ay - cfg.comfort_lat_accel);
        row[CURV] = x.kappa * x.kappa;
        row[TWIST] = x.kappa_dot * x.kappa_dot;

        let pv = &states[t - 1];
        let s_prev = if t == 1 {
            s0
        } else {
            line.polish(pv.x, pv.y, arc[t - 1]).0
        };
        row[PROGRESS] = s - s_prev;
        let j = (x.a - pv.a) / dt;
        row[JERK] = j * j;
        row[JERK_POS] = hinge2(j - cfg.comfort_jerk);
        row[JERK_NEG] = hinge2(-j - cfg.comfort_jerk);
        let lj = (ay - pv.v * pv.v * pv.kappa) / dt;
        row[LAT_JERK] = lj * lj;
        row[LAT_JERK_L] = hinge2(lj - cfg.comfort_lat_jerk);
        row[LAT_JERK_R] = hinge2(-lj - cfg.comfort_lat_jerk);
        let wr = (x.kappa_dot - pv.kappa_dot) / dt;
        row[WRENCH] = wr * wr;
    }

    if side.is_none() {
        for ob in &sc.obstacles {
            for pred in &ob.predictions {
                if pred.probability <= 0.0 {
                    continue;
                }
                'time: for t in 1..states.len() {
                    let x = &states[t];
                    let pose = pred.poses[t];
                    let poly = place(&ob.polygon, pose.x, pose.y, pose.theta);
                    for &l in &offs {
                        if dist_to_polygon(x.x + l * x.theta.cos(), x.y + l * x.theta.sin(), &poly)
                            < r
                        {
                            rows[t][OVERLAP] += pred.probability;
                            break 'time;
                        }
                    }
                }
            }
        }
    }
    rows
}
