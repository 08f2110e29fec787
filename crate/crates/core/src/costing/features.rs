use super::{idx, CostContext, Side, Stage, NUM_FEATURES};
use crate::geometry::point_polygon_distance;
use crate::scalar::Scalar;
use crate::world::{ObstacleClass, VehicleState};

/// Features of state `t` alone. Also returns the state's arc length on the
/// driving path, which the rate features consume.
pub fn state_features<S: Scalar>(
    ctx: &CostContext,
    t: usize,
    x: &VehicleState<S>,
    s_star: f64,
) -> ([S; NUM_FEATURES], S) {
    let cfg = ctx.cfg;
    let path = &ctx.behavior.driving_path;
    let mut f = [S::zero(); NUM_FEATURES];
    let (s, d, pp) = path.project_generic(x.x, x.y, s_star);
    let (sin_h, cos_h) = (x.theta.sin(), x.theta.cos());
    let v_pos = x.v.relu();

    f[idx::PATH] = d * d;

    let rel = (x.theta - pp.theta).sin();
    let (lo, ro) = path.boundary_offsets_generic(s);
    let r = ctx.circle_radius;
    let mut left = S::zero();
    let mut right = S::zero();
    for &l in &ctx.circle_offsets {
        let dc = d + rel * l;
        left = left.max((dc + r - (lo - cfg.lane_threshold)).hinge_sq());
        right = right.max((ro + cfg.lane_threshold - (dc - r)).hinge_sq());
    }
    f[idx::LANE_LEFT] = left;
    f[idx::LANE_RIGHT] = right;

    let d_safe = x.v * cfg.safety_time_gap + cfg.safety_distance;
    let reach = d_safe.re().max(0.0) + cfg.vehicle_length / 2.0 + r;
    let half_len = cfg.vehicle_length / 2.0;
    let half_wid = cfg.vehicle_width / 2.0;
    let sides = ctx.side.filter(|_| ctx.stage == Stage::Trajectory);
    for ob in &ctx.obstacles[t] {
        let dx = S::cst(ob.x) - x.x;
        let dy = S::cst(ob.y) - x.y;
        let lon = dx * cos_h + dy * sin_h;
        let lat = dy * cos_h - dx * sin_h;
        let center_dist = dx.re().hypot(dy.re());

        if center_dist - ob.radius <= reach {
            let mut acc = S::zero();
            for &l in &ctx.circle_offsets {
                let cx = x.x + cos_h * l;
                let cy = x.y + sin_h * l;
                let dist = point_polygon_distance(cx, cy, &ob.polygon);
                acc += (d_safe - dist).hinge_sq();
            }
            let k = if ob.class.is_vulnerable() {
                idx::OBSTACLE_VULNERABLE
            } else {
                idx::OBSTACLE
            };
            f[k] += acc * v_pos * ob.probability;
        }

        if ob.class == ObstacleClass::Vehicle && lon.re() > 0.0 {
            let gap = lon - half_len - ob.half_length;
            let want = x.v * x.v / (2.0 * cfg.comfort_decel)
                - ob.speed * ob.speed / (2.0 * cfg.hard_decel)
                + cfg.min_gap;
            let viol = (-gap + want).hinge_sq();
            if viol.re() > 0.0 {
                let inner = half_wid + cfg.headway_lat_margin;
                let weight = (-(lat.abs() - inner) / cfg.headway_lat_falloff + 1.0)
                    .min(S::cst(1.0))
                    .relu();
                f[idx::HEADWAY] += viol * weight * ob.probability;
            }
        }

        if let Some(sa) = sides {
            let gate_w = half_wid + ob.half_width + cfg.side_lat_margin;
            let gate_l = half_len + ob.half_length + cfg.side_lon_margin;
            let viol = match sa.sides[ob.obstacle][t] {
                Side::Left => (-lat + gate_w).relu().min((-lon.abs() + gate_l).relu()),
                Side::Right => (lat + gate_w).relu().min((-lon.abs() + gate_l).relu()),
                Side::Front => (-lon + gate_l).relu().min((-lat.abs() + gate_w).relu()),
                Side::Back => (lon + gate_l).relu().min((-lat.abs() + gate_w).relu()),
            };
            f[idx::OVERLAP] += viol * viol * ob.probability;
        }
    }

    for &(stop, p) in &ctx.pedestrian_lines[t] {
        f[idx::YIELD_PEDESTRIAN] += (s - stop).hinge_sq() * p;
    }
    for &(stop, p) in &ctx.crossing_lines[t] {
        f[idx::YIELD_CROSSING] += (s - stop).hinge_sq() * p;
    }
    for &stop in &ctx.stop_lines {
        f[idx::YIELD_STOP_LINE] += (s - stop).hinge_sq();
    }

    let limit = path.speed_limit_at(s.re());
    if limit.is_finite() {
        f[idx::SPEED] = (x.v - limit).hinge_sq();
    }

    if t == ctx.steps {
        let mut worst = S::zero();
        for &(sc, vl) in &ctx.speed_constraints {
            let gap = -s + sc;
            if gap.re() > 0.0 {
                let need = (x.v * x.v - vl * vl) / (gap * 2.0);
                worst = worst.max((need - cfg.comfort_decel).hinge_sq());
            }
        }
        f[idx::COST_TO_GO] = worst;
    }

    let lat_acc = x.v * x.v * x.kappa;
    f[idx::ACCEL] = x.a * x.a;
    f[idx::ACCEL_VIOLATION] = (x.a - cfg.comfort_accel).hinge_sq();
    f[idx::DECEL_VIOLATION] = (-x.a - cfg.comfort_decel_bound).hinge_sq();
    f[idx::LAT_ACCEL] = lat_acc * lat_acc;
    f[idx::LAT_ACCEL_VIOLATION_LEFT] = (lat_acc - cfg.comfort_lat_accel).hinge_sq();
    f[idx::LAT_ACCEL_VIOLATION_RIGHT] = (-lat_acc - cfg.comfort_lat_accel).hinge_sq();
    f[idx::CURVATURE] = x.kappa * x.kappa;
    f[idx::TWIST] = x.kappa_dot * x.kappa_dot;
    (f, s)
}

/// Rate features of the step `prev -> cur`, plus progress.
pub fn pair_features<S: Scalar>(
    ctx: &CostContext,
    prev: &VehicleState<S>,
    cur: &VehicleState<S>,
    s_prev: S,
    s_cur: S,
) -> [S; NUM_FEATURES] {
    let cfg = ctx.cfg;
    let inv = 1.0 / ctx.dt;
    let mut f = [S::zero(); NUM_FEATURES];
    f[idx::PROGRESS] = s_cur - s_prev;
    let j = (cur.a - prev.a) * inv;
    f[idx::JERK] = j * j;
    f[idx::JERK_VIOLATION_POS] = (j - cfg.comfort_jerk).hinge_sq();
    f[idx::JERK_VIOLATION_NEG] = (-j - cfg.comfort_jerk).hinge_sq();
    let lj = (cur.v * cur.v * cur.kappa - prev.v * prev.v * prev.kappa) * inv;
    f[idx::LAT_JERK] = lj * lj;
    f[idx::LAT_JERK_VIOLATION_LEFT] = (lj - cfg.comfort_lat_jerk).hinge_sq();
    f[idx::LAT_JERK_VIOLATION_RIGHT] = (-lj - cfg.comfort_lat_jerk).hinge_sq();
    let w = (cur.kappa_dot - prev.kappa_dot) * inv;
    f[idx::WRENCH] = w * w;
    f
}

/// Probability-weighted overlap indicator, one entry per predicted obstacle
/// trajectory that the SDV footprint touches, at the first touching step.
pub fn behavioral_overlap(ctx: &CostContext, states: &[VehicleState]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let r = ctx.circle_radius;
    let n = ctx.obstacles.first().map_or(0, |o| o.len());
    for j in 0..n {
        for (t, st) in states.iter().enumerate().skip(1) {
            let ob = &ctx.obstacles[t][j];
            if (ob.x - st.x).hypot(ob.y - st.y) > ob.radius + ctx.cfg.vehicle_length / 2.0 + r {
                continue;
            }
            let (sh, ch) = st.theta.sin_cos();
            let hit = ctx
                .circle_offsets
                .iter()
                .any(|&l| point_polygon_distance(st.x + ch * l, st.y + sh * l, &ob.polygon) < r);
            if hit {
                out.push((t, ob.probability));
                break;
            }
        }
    }
    out
}
