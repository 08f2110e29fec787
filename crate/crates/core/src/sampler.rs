//! Candidate trajectories for the behavioral stage: stitched quartic
//! longitudinal profiles crossed with stitched quintic lateral profiles in
//! the Frenet frame of a behavior's driving path.

use crate::error::{PlanError, Result};
use crate::frenet::{frenet_trajectory_to_bicycle, to_frenet, LateralProfile, LongitudinalProfile};
use crate::world::{Behavior, Scenario, Trajectory};
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Two quartics in local time, stitched at `t1` with zero acceleration there
/// and at `horizon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalPoly {
    pub t1: f64,
    pub horizon: f64,
    pub seg1: [f64; 5],
    pub seg2: [f64; 5],
}

/// Two quintics in local arc length, stitched at `s1`; identically zero past
/// `s_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LateralPoly {
    pub s0: f64,
    pub s1: f64,
    pub s_end: f64,
    pub seg1: [f64; 6],
    pub seg2: [f64; 6],
}

fn eval_poly<const N: usize>(c: &[f64; N], x: f64) -> (f64, f64, f64) {
    let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
    for k in (0..N).rev() {
        ddp = ddp * x + 2.0 * dp;
        dp = dp * x + p;
        p = p * x + c[k];
    }
    (p, dp, ddp)
}

impl LongitudinalProfile for LongitudinalPoly {
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t <= self.t1 {
            eval_poly(&self.seg1, t)
        } else {
            eval_poly(&self.seg2, t - self.t1)
        }
    }
}

impl LateralProfile for LateralPoly {
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        if s <= self.s1 {
            eval_poly(&self.seg1, s - self.s0)
        } else if s <= self.s_end {
            eval_poly(&self.seg2, s - self.s1)
        } else {
            (0.0, 0.0, 0.0)
        }
    }
}

const MIN_SPAN: f64 = 1e-3;

/// Quartic with given position, velocity and acceleration at 0, reaching
/// velocity `v_end` with zero acceleration at `t`.
fn quartic_to_speed(s: f64, v: f64, a: f64, v_end: f64, t: f64) -> Result<[f64; 5]> {
    let m = Matrix2::new(3.0 * t * t, 4.0 * t.powi(3), 6.0 * t, 12.0 * t * t);
    let rhs = Vector2::new(v_end - v - a * t, -a);
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| PlanError::SingularFit(format!("quartic over span {t}")))?;
    Ok([s, v, a / 2.0, x[0], x[1]])
}

/// Quintic with given (d, d', d'') at 0 and (d_end, 0, 0) at `l`.
fn quintic_to_rest(d: f64, dp: f64, dpp: f64, d_end: f64, l: f64) -> Result<[f64; 6]> {
    let (l2, l3) = (l * l, l * l * l);
    let m = Matrix3::new(
        l3,
        l3 * l,
        l3 * l2,
        3.0 * l2,
        4.0 * l3,
        5.0 * l3 * l,
        6.0 * l,
        12.0 * l2,
        20.0 * l3,
    );
    let rhs = Vector3::new(d_end - d - dp * l - dpp / 2.0 * l2, -dp - dpp * l, -dpp);
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| PlanError::SingularFit(format!("quintic over span {l}")))?;
    Ok([d, dp, dpp / 2.0, x[0], x[1], x[2]])
}

/// Fits the stitched longitudinal profile.
pub fn fit_longitudinal(
    init: (f64, f64, f64),
    mid: (f64, f64),
    end: (f64, f64),
) -> Result<LongitudinalPoly> {
    let (s0, v0, a0) = init;
    let (v1, t1) = mid;
    let (vt, horizon) = end;
    if !(t1 > MIN_SPAN && horizon - t1 > MIN_SPAN) {
        return Err(PlanError::SingularFit(format!(
            "stitch time {t1} must lie inside (0, {horizon})"
        )));
    }
    let seg1 = quartic_to_speed(s0, v0, a0, v1, t1)?;
    let (s1, _, _) = eval_poly(&seg1, t1);
    let seg2 = quartic_to_speed(s1, v1, 0.0, vt, horizon - t1)?;
    Ok(LongitudinalPoly {
        t1,
        horizon,
        seg1,
        seg2,
    })
}

/// Fits the stitched lateral profile merging back onto the path at `s_end`.
pub fn fit_lateral(
    init: (f64, f64, f64),
    s0: f64,
    mid: (f64, f64),
    s_end: f64,
) -> Result<LateralPoly> {
    let (d1, s1) = mid;
    if !(s1 - s0 > MIN_SPAN && s_end - s1 > MIN_SPAN) {
        return Err(PlanError::SingularFit(format!(
            "lateral stitch {s1} must lie inside ({s0}, {s_end})"
        )));
    }
    let seg1 = quintic_to_rest(init.0, init.1, init.2, d1, s1 - s0)?;
    let seg2 = quintic_to_rest(d1, 0.0, 0.0, 0.0, s_end - s1)?;
    Ok(LateralPoly {
        s0,
        s1,
        s_end,
        seg1,
        seg2,
    })
}

/// Single quintic from the initial lateral state straight to the path.
pub fn fit_lateral_merge(init: (f64, f64, f64), s0: f64, s_end: f64) -> Result<LateralPoly> {
    if !(s_end - s0 > MIN_SPAN) {
        return Err(PlanError::SingularFit(format!(
            "merge end {s_end} must follow {s0}"
        )));
    }
    let seg1 = quintic_to_rest(init.0, init.1, init.2, 0.0, s_end - s0)?;
    Ok(LateralPoly {
        s0,
        s1: s_end,
        s_end,
        seg1,
        seg2: [0.0; 6],
    })
}

/// Hard physical limits used for pruning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicalLimits {
    pub max_curvature: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    pub max_lat_accel: f64,
}

impl Default for PhysicalLimits {
    fn default() -> Self {
        Self {
            max_curvature: 0.2,
            max_accel: 4.0,
            max_decel: 8.0,
            max_lat_accel: 6.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleGrid {
    pub t1: Vec<f64>,
    /// Explicit mid speeds; when absent, `speed_count` values spread over
    /// `[0, speed_max_fraction * limit]`.
    pub mid_speeds: Option<Vec<f64>>,
    pub end_speeds: Option<Vec<f64>>,
    pub speed_count: usize,
    pub speed_max_fraction: f64,
    pub d1: Vec<f64>,
    /// Offsets of the lateral stitch point ahead of the SDV's arc length.
    pub s1_offsets: Vec<f64>,
    /// Minimum length of the second lateral segment.
    pub lateral_tail: f64,
    pub limits: PhysicalLimits,
}

impl Default for SampleGrid {
    fn default() -> Self {
        Self {
            t1: vec![2.5, 5.0],
            mid_speeds: None,
            end_speeds: None,
            speed_count: 7,
            speed_max_fraction: 1.1,
            d1: vec![-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0],
            s1_offsets: vec![10.0, 25.0],
            lateral_tail: 10.0,
            limits: PhysicalLimits::default(),
        }
    }
}

impl SampleGrid {
    fn speeds(&self, explicit: &Option<Vec<f64>>, limit: f64) -> Vec<f64> {
        match explicit {
            Some(v) => v.clone(),
            None => {
                let top = self.speed_max_fraction * limit;
                let n = self.speed_count.max(1);
                if n == 1 {
                    return vec![top];
                }
                (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PlanError::InvalidScenario(format!("sample grid: {m}")));
        if self.t1.is_empty() || self.d1.is_empty() || self.s1_offsets.is_empty() {
            return bad("every grid axis needs at least one value");
        }
        if self.speed_max_fraction < 0.0 || self.speed_max_fraction > 1.2 {
            return bad("speed fraction must lie in [0, 1.2]");
        }
        let explicit = self
            .mid_speeds
            .iter()
            .chain(self.end_speeds.iter())
            .flatten();
        if explicit.into_iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return bad("speeds must be non-negative");
        }
        if self.s1_offsets.iter().any(|s| *s <= 0.0) {
            return bad("lateral stitch offsets must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    pub t1: f64,
    pub mid_speed: f64,
    pub end_speed: f64,
    pub d1: f64,
    pub s1: f64,
    /// Set for the direct-merge lateral used when no stitch point is reachable.
    pub merge: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub trajectory: Trajectory,
    pub conditions: Conditions,
    pub lon: LongitudinalPoly,
    pub lat: LateralPoly,
}

fn feasible(traj: &Trajectory, lon: &LongitudinalPoly, lim: &PhysicalLimits) -> bool {
    let n = 100;
    for k in 0..=n {
        let t = lon.horizon * k as f64 / n as f64;
        if lon.eval(t).1 < -1e-9 {
            return false;
        }
    }
    traj.states.iter().skip(1).all(|s| {
        s.is_finite()
            && s.v >= -1e-9
            && s.kappa.abs() <= lim.max_curvature
            && s.a <= lim.max_accel
            && s.a >= -lim.max_decel
            && (s.v * s.v * s.kappa).abs() <= lim.max_lat_accel
    })
}

/// Generates the candidate set for one behavior in grid order.
pub fn generate_candidates(
    scenario: &Scenario,
    behavior: &Behavior,
    grid: &SampleGrid,
) -> Result<Vec<Candidate>> {
    let path = &behavior.driving_path;
    let x0 = scenario.sdv;
    let fs = to_frenet(path, &x0)?;
    let limit = path.speed_limit_at(fs.s);
    let limit = if limit.is_finite() {
        limit
    } else {
        x0.v.max(1.0)
    };
    let horizon = scenario.horizon_s;
    let dt = scenario.timestep_s;
    let steps = scenario.steps();
    let mids = grid.speeds(&grid.mid_speeds, limit);
    let ends = grid.speeds(&grid.end_speeds, limit);
    let lat_init = (fs.d, fs.d_prime, fs.d_pprime);
    let s1_min = grid
        .s1_offsets
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    let mut out = Vec::new();
    for &t1 in &grid.t1 {
        for &v1 in &mids {
            for &vt in &ends {
                let lon =
                    match fit_longitudinal((fs.s, fs.s_dot, fs.s_ddot), (v1, t1), (vt, horizon)) {
                        Ok(l) => l,
                        Err(_) => continue,
                    };
                let s_t = lon.eval(horizon).0;
                let mut push = |lat: LateralPoly, d1: f64, s1: f64, merge: bool| {
                    if let Ok(traj) = frenet_trajectory_to_bicycle(path, &lon, &lat, &x0, dt, steps)
                    {
                        if feasible(&traj, &lon, &grid.limits) {
                            out.push(Candidate {
                                trajectory: traj,
                                conditions: Conditions {
                                    t1,
                                    mid_speed: v1,
                                    end_speed: vt,
                                    d1,
                                    s1,
                                    merge,
                                },
                                lon,
                                lat,
                            });
                        }
                    }
                };
                if s_t < fs.s + s1_min {
                    if let Ok(lat) = fit_lateral_merge(lat_init, fs.s, fs.s + s1_min) {
                        push(lat, 0.0, fs.s + s1_min, true);
                    }
                    continue;
                }
                for &off in &grid.s1_offsets {
                    let s1 = fs.s + off;
                    if s_t < s1 {
                        continue;
                    }
                    let s_end = s_t.max(s1 + grid.lateral_tail);
                    for &d1 in &grid.d1 {
                        if let Ok(lat) = fit_lateral(lat_init, fs.s, (d1, s1), s_end) {
                            push(lat, d1, s1, false);
                        }
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(PlanError::NoFeasibleCandidate);
    }
    Ok(out)
}
