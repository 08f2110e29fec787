//! Arc-length parameterized driving paths and the Frenet transform between
//! bicycle-model states and path-relative coordinates.
//!
//! A [`DrivingPath`] stores uniformly spaced samples of heading and curvature.
//! Between samples the heading is the cubic Hermite interpolant of
//! `(theta_i, kappa_i)` and positions are the exact integral of that heading,
//! so position, heading, curvature and curvature rate stay mutually
//! consistent and differentiable in `s`.

use crate::error::{PlanError, Result};
use crate::geometry::{polyline_length, polyline_point_at, Point2};
use crate::scalar::Scalar;
use crate::world::{Trajectory, VehicleState};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SPACING: f64 = 0.5;

// 5-point Gauss-Legendre on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PathSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kappa: f64,
    pub dkappa: f64,
    /// Speed limit of the lane this sample was taken from.
    pub speed_limit: f64,
    /// Signed lateral offset of the left boundary (>= 0).
    pub left_offset: f64,
    /// Signed lateral offset of the right boundary (<= 0).
    pub right_offset: f64,
}

/// Reference-line quantities at one arc length.
#[derive(Clone, Copy, Debug)]
pub struct PathPoint<S> {
    pub x: S,
    pub y: S,
    pub theta: S,
    pub kappa: S,
    pub dkappa: S,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DrivingPath {
    samples: Vec<PathSample>,
    spacing: f64,
    /// Arc lengths of stop lines along the path.
    pub stop_lines: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrenetState {
    pub s: f64,
    pub s_dot: f64,
    pub s_ddot: f64,
    pub d: f64,
    pub d_prime: f64,
    pub d_pprime: f64,
}

/// Per-sample attributes supplied when a path is built from a polyline.
#[derive(Clone, Copy, Debug)]
pub struct SampleAttrs {
    pub speed_limit: f64,
    pub left_offset: f64,
    pub right_offset: f64,
}

impl Default for SampleAttrs {
    fn default() -> Self {
        Self {
            speed_limit: f64::INFINITY,
            left_offset: 1.85,
            right_offset: -1.85,
        }
    }
}

/// Longitudinal profile `s(t)` with its first two time derivatives.
pub trait LongitudinalProfile {
    fn eval(&self, t: f64) -> (f64, f64, f64);
}

/// Lateral profile `d(s)` with its first two arc-length derivatives.
pub trait LateralProfile {
    fn eval(&self, s: f64) -> (f64, f64, f64);
}

fn signed_curvature(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    let ab = b.sub(a);
    let bc = c.sub(b);
    let ac = c.sub(a);
    let den = ab.norm() * bc.norm() * ac.norm();
    if den < 1e-15 {
        0.0
    } else {
        2.0 * ab.cross(&bc) / den
    }
}

impl DrivingPath {
    /// Builds a path from a polyline, resampling it at `spacing`.
    pub fn from_polyline(pts: &[Point2], spacing: f64) -> Result<Self> {
        Self::from_polyline_with(pts, spacing, |_| SampleAttrs::default())
    }

    /// Like [`from_polyline`](Self::from_polyline), with per-sample attributes
    /// supplied by `attrs(s)` where `s` is the arc length along the input.
    pub fn from_polyline_with<F: Fn(f64) -> SampleAttrs>(
        pts: &[Point2],
        spacing: f64,
        attrs: F,
    ) -> Result<Self> {
        let mut clean: Vec<Point2> = Vec::with_capacity(pts.len());
        for p in pts {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(PlanError::DegeneratePath("non-finite vertex".into()));
            }
            if clean.last().is_none_or(|q: &Point2| q.dist(p) > 1e-9) {
                clean.push(*p);
            }
        }
        if clean.len() < 2 {
            return Err(PlanError::DegeneratePath(
                "centerline needs at least 2 distinct points".into(),
            ));
        }
        if !(spacing > 0.0) {
            return Err(PlanError::DegeneratePath("spacing must be positive".into()));
        }
        let total = polyline_length(&clean);
        let n = ((total / spacing).floor() as usize + 1).max(2);
        let h = if n == 2 && total < spacing {
            total
        } else {
            spacing
        };
        let q: Vec<Point2> = (0..n)
            .map(|i| polyline_point_at(&clean, i as f64 * h))
            .collect();

        let mut kappa = vec![0.0; n];
        if n >= 3 {
            for i in 1..n - 1 {
                kappa[i] = signed_curvature(&q[i - 1], &q[i], &q[i + 1]);
            }
            kappa[0] = kappa[1];
            kappa[n - 1] = kappa[n - 2];
            let raw = kappa.clone();
            for i in 0..n {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(n - 1);
                kappa[i] = raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            }
        }

        let chord = |a: &Point2, b: &Point2| (b.y - a.y).atan2(b.x - a.x);
        let mut theta = vec![0.0; n];
        for i in 0..n {
            theta[i] = if n == 2 {
                chord(&q[0], &q[1])
            } else if i == 0 {
                chord(&q[0], &q[1]) - kappa[0] * h / 2.0
            } else if i == n - 1 {
                chord(&q[n - 2], &q[n - 1]) + kappa[n - 1] * h / 2.0
            } else {
                chord(&q[i - 1], &q[i + 1])
            };
        }
        for i in 1..n {
            let mut dt = theta[i] - theta[i - 1];
            while dt > std::f64::consts::PI {
                dt -= std::f64::consts::TAU;
            }
            while dt < -std::f64::consts::PI {
                dt += std::f64::consts::TAU;
            }
            theta[i] = theta[i - 1] + dt;
        }

        let mut samples: Vec<PathSample> = (0..n)
            .map(|i| {
                let a = attrs(i as f64 * h);
                PathSample {
                    s: i as f64 * h,
                    x: q[i].x,
                    y: q[i].y,
                    theta: theta[i],
                    kappa: kappa[i],
                    dkappa: 0.0,
                    speed_limit: a.speed_limit,
                    left_offset: a.left_offset,
                    right_offset: a.right_offset,
                }
            })
            .collect();

        let mut path = DrivingPath {
            samples: Vec::new(),
            spacing: h,
            stop_lines: Vec::new(),
        };
        // Re-integrate positions so they agree with the interpolated heading.
        for i in 0..n - 1 {
            let (c2, c3) = hermite_coeffs(&samples[i], &samples[i + 1], h);
            samples[i].dkappa = 2.0 * c2;
            let (dx, dy) = integrate_heading(samples[i].theta, samples[i].kappa, c2, c3, h);
            samples[i + 1].x = samples[i].x + dx;
            samples[i + 1].y = samples[i].y + dy;
            if i == n - 2 {
                samples[i + 1].dkappa = 2.0 * c2 + 6.0 * c3 * h;
            }
        }
        path.samples = samples;
        Ok(path)
    }

    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Overwrites per-sample attributes; `attrs` must match the sample count.
    pub fn set_attributes(&mut self, attrs: &[SampleAttrs]) {
        for (smp, a) in self.samples.iter_mut().zip(attrs) {
            smp.speed_limit = a.speed_limit;
            smp.left_offset = a.left_offset;
            smp.right_offset = a.right_offset;
        }
    }

    pub fn length(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.s)
    }

    fn interval(&self, s: f64) -> usize {
        let n = self.samples.len();
        if n < 2 || s <= 0.0 {
            return 0;
        }
        ((s / self.spacing).floor() as usize).min(n - 2)
    }

    /// Evaluates the reference line at any `s`, generic so that derivatives
    /// flow through the foot point. Beyond either end the path continues as a
    /// straight tangent line.
    pub fn eval<S: Scalar>(&self, s: S) -> PathPoint<S> {
        let len = self.length();
        let sr = s.re();
        if sr < 0.0 || sr > len {
            let edge = if sr < 0.0 {
                &self.samples[0]
            } else {
                self.samples.last().unwrap()
            };
            let u = s - edge.s;
            let (st, ct) = edge.theta.sin_cos();
            return PathPoint {
                x: u * ct + edge.x,
                y: u * st + edge.y,
                theta: S::cst(edge.theta),
                kappa: S::zero(),
                dkappa: S::zero(),
            };
        }
        let i = self.interval(sr);
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        let (c2, c3) = hermite_coeffs(a, b, self.spacing);
        let u = s - a.s;
        let theta = ((u * c3 + c2) * u + a.kappa) * u + a.theta;
        let kappa = (u * (3.0 * c3) + 2.0 * c2) * u + a.kappa;
        let dkappa = u * (6.0 * c3) + 2.0 * c2;
        let half = u * 0.5;
        let mut dx = S::zero();
        let mut dy = S::zero();
        for k in 0..5 {
            let sig = half * (1.0 + GL_NODES[k]);
            let th = ((sig * c3 + c2) * sig + a.kappa) * sig + a.theta;
            dx += th.cos() * GL_WEIGHTS[k];
            dy += th.sin() * GL_WEIGHTS[k];
        }
        PathPoint {
            x: dx * half + a.x,
            y: dy * half + a.y,
            theta,
            kappa,
            dkappa,
        }
    }

    /// Clamped query for public use: the flag is set when `s` lies outside
    /// `[0, length]`.
    pub fn query(&self, s: f64) -> (PathPoint<f64>, bool) {
        let clamped = s.clamp(0.0, self.length());
        (self.eval(clamped), clamped != s)
    }

    pub fn sample_at(&self, s: f64) -> &PathSample {
        let i = ((s.max(0.0) / self.spacing).round() as usize).min(self.samples.len() - 1);
        &self.samples[i]
    }

    pub fn speed_limit_at(&self, s: f64) -> f64 {
        let i = self.interval(s.max(0.0));
        let frac = s / self.spacing - i as f64;
        if frac > 0.5 {
            self.samples[(i + 1).min(self.samples.len() - 1)].speed_limit
        } else {
            self.samples[i].speed_limit
        }
    }

    /// Linearly interpolated (left, right) boundary offsets at `s`.
    pub fn boundary_offsets_at(&self, s: f64) -> (f64, f64) {
        let sc = s.clamp(0.0, self.length());
        let i = self.interval(sc);
        let a = &self.samples[i];
        let b = &self.samples[(i + 1).min(self.samples.len() - 1)];
        let t = ((sc - a.s) / self.spacing).clamp(0.0, 1.0);
        (
            a.left_offset + (b.left_offset - a.left_offset) * t,
            a.right_offset + (b.right_offset - a.right_offset) * t,
        )
    }

    /// Generic form of [`boundary_offsets_at`](Self::boundary_offsets_at).
    pub fn boundary_offsets_generic<S: Scalar>(&self, s: S) -> (S, S) {
        let len = self.length();
        let sr = s.re();
        if sr <= 0.0 || sr >= len {
            let (l, r) = self.boundary_offsets_at(sr);
            return (S::cst(l), S::cst(r));
        }
        let i = self.interval(sr);
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        let t = (s - a.s) / self.spacing;
        (
            t * (b.left_offset - a.left_offset) + a.left_offset,
            t * (b.right_offset - a.right_offset) + a.right_offset,
        )
    }

    /// Newton refinement of the foot-point equation from `s0`.
    fn newton(&self, x: f64, y: f64, s0: f64) -> (f64, f64) {
        let mut s = s0;
        let mut d = 0.0;
        for _ in 0..30 {
            let p = self.eval(s);
            let (st, ct) = p.theta.sin_cos();
            let (rx, ry) = (x - p.x, y - p.y);
            let g = rx * ct + ry * st;
            d = ry * ct - rx * st;
            let den = 1.0 - p.kappa * d;
            let step = if den > 1e-3 { g / den } else { g };
            s += step;
            if step.abs() < 1e-13 {
                break;
            }
        }
        (s, d)
    }

    /// Projects a point onto the path, returning `(s, d)`.
    ///
    /// With a hint only a window around it is scanned. Without one the whole
    /// path is scanned and a second, equally close foot point is an error.
    pub fn project(&self, x: f64, y: f64, hint: Option<f64>) -> Result<(f64, f64)> {
        let n = self.samples.len();
        let d2 = |i: usize| {
            let p = &self.samples[i];
            (p.x - x).powi(2) + (p.y - y).powi(2)
        };
        if let Some(h) = hint {
            let w = (12.0 / self.spacing) as usize;
            let c = ((h.max(0.0) / self.spacing) as usize).min(n - 1);
            let lo = c.saturating_sub(w);
            let hi = (c + w).min(n - 1);
            let best = (lo..=hi).min_by(|&a, &b| d2(a).total_cmp(&d2(b))).unwrap();
            return Ok(self.newton(x, y, self.samples[best].s));
        }
        // Local minima of the sampled distance profile.
        let mut minima: Vec<usize> = Vec::new();
        for i in 0..n {
            let left = if i > 0 { d2(i - 1) } else { f64::INFINITY };
            let right = if i + 1 < n { d2(i + 1) } else { f64::INFINITY };
            let here = d2(i);
            if here <= left && here < right {
                minima.push(i);
            }
        }
        if minima.is_empty() {
            minima.push(0);
        }
        let mut refined: Vec<(f64, f64)> = minima
            .iter()
            .map(|&i| self.newton(x, y, self.samples[i].s))
            .collect();
        refined.sort_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
        let best = refined[0];
        for other in &refined[1..] {
            if (other.0 - best.0).abs() > 2.0 * self.spacing
                && (other.1.abs() - best.1.abs()).abs() < 1e-3
            {
                return Err(PlanError::AmbiguousProjection {
                    s1: best.0,
                    s2: other.0,
                });
            }
        }
        Ok(best)
    }

    /// Foot point of a generic point, starting from a converged real-valued
    /// foot point `s_star`. Two Newton steps in generic arithmetic carry exact
    /// first and second derivatives of `(s, d)` with respect to the point.
    pub fn project_generic<S: Scalar>(&self, x: S, y: S, s_star: f64) -> (S, S, PathPoint<S>) {
        let mut s = S::cst(s_star);
        for _ in 0..2 {
            let p = self.eval(s);
            let (st, ct) = (p.theta.sin(), p.theta.cos());
            let (rx, ry) = (x - p.x, y - p.y);
            let g = rx * ct + ry * st;
            let d = ry * ct - rx * st;
            let den = -(p.kappa * d) + 1.0;
            s += if den.re() > 1e-3 { g / den } else { g };
        }
        let p = self.eval(s);
        let d = (y - p.y) * p.theta.cos() - (x - p.x) * p.theta.sin();
        (s, d, p)
    }
}

/// Cubic Hermite heading coefficients `(c2, c3)` for one interval.
fn hermite_coeffs(a: &PathSample, b: &PathSample, h: f64) -> (f64, f64) {
    let delta = b.theta - a.theta - a.kappa * h;
    let dk = b.kappa - a.kappa;
    let c2 = (3.0 * delta - dk * h) / (h * h);
    let c3 = (dk * h - 2.0 * delta) / (h * h * h);
    (c2, c3)
}

fn integrate_heading(theta0: f64, k0: f64, c2: f64, c3: f64, u: f64) -> (f64, f64) {
    let half = u * 0.5;
    let (mut dx, mut dy) = (0.0, 0.0);
    for k in 0..5 {
        let sig = half * (1.0 + GL_NODES[k]);
        let th = theta0 + k0 * sig + c2 * sig * sig + c3 * sig * sig * sig;
        dx += th.cos() * GL_WEIGHTS[k];
        dy += th.sin() * GL_WEIGHTS[k];
    }
    (dx * half, dy * half)
}

fn check_singular(d: f64, kappa: f64) -> Result<()> {
    if 1.0 - kappa * d <= 1e-9 {
        return Err(PlanError::FrenetSingular { d, kappa });
    }
    Ok(())
}

/// Cartesian-to-Frenet transform.
pub fn to_frenet(path: &DrivingPath, state: &VehicleState) -> Result<FrenetState> {
    let (s, _) = path.project(state.x, state.y, None)?;
    to_frenet_at(path, state, s)
}

/// Frenet transform given an already known foot point.
pub fn to_frenet_at(path: &DrivingPath, state: &VehicleState, s: f64) -> Result<FrenetState> {
    let r = path.eval(s);
    let (st, ct) = r.theta.sin_cos();
    let d = (state.y - r.y) * ct - (state.x - r.x) * st;
    check_singular(d, r.kappa)?;
    let dtheta = state.theta - r.theta;
    let (sd, cd) = dtheta.sin_cos();
    if cd <= 1e-9 {
        return Err(PlanError::FrenetSingular { d, kappa: r.kappa });
    }
    let td = sd / cd;
    let omega = 1.0 - r.kappa * d;
    let d_prime = omega * td;
    let krd = r.dkappa * d + r.kappa * d_prime;
    let dtheta_prime = omega / cd * state.kappa - r.kappa;
    let d_pprime = -krd * td + omega / (cd * cd) * dtheta_prime;
    let s_dot = state.v * cd / omega;
    let s_ddot = (state.a * cd - s_dot * s_dot * (d_prime * dtheta_prime - krd)) / omega;
    Ok(FrenetState {
        s,
        s_dot,
        s_ddot,
        d,
        d_prime,
        d_pprime,
    })
}

/// Frenet-to-Cartesian transform. Curvature rate is not part of the Frenet
/// state and is returned as zero.
pub fn from_frenet(path: &DrivingPath, fs: &FrenetState) -> Result<VehicleState> {
    let r = path.eval(fs.s);
    check_singular(fs.d, r.kappa)?;
    let (st, ct) = r.theta.sin_cos();
    let omega = 1.0 - r.kappa * fs.d;
    let dtheta = fs.d_prime.atan2(omega);
    let (sd, cd) = dtheta.sin_cos();
    let td = sd / cd;
    let krd = r.dkappa * fs.d + r.kappa * fs.d_prime;
    let kappa = ((fs.d_pprime + krd * td) * cd * cd / omega + r.kappa) * cd / omega;
    let v = fs.s_dot * omega / cd;
    let dtheta_prime = omega / cd * kappa - r.kappa;
    let a = fs.s_ddot * omega / cd + fs.s_dot * fs.s_dot / cd * (fs.d_prime * dtheta_prime - krd);
    Ok(VehicleState {
        x: r.x - st * fs.d,
        y: r.y + ct * fs.d,
        theta: r.theta + dtheta,
        kappa,
        v,
        a,
        kappa_dot: 0.0,
    })
}

/// Maps a sampled `(s(t), d(s))` pair onto the bicycle-model state grid.
///
/// State 0 is `initial` verbatim; curvature rate at later steps is the
/// backward difference of curvature.
pub fn frenet_trajectory_to_bicycle<L: LongitudinalProfile, T: LateralProfile>(
    path: &DrivingPath,
    lon: &L,
    lat: &T,
    initial: &VehicleState,
    dt: f64,
    steps: usize,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(steps + 1);
    states.push(*initial);
    for k in 1..=steps {
        let t = k as f64 * dt;
        let (s, s_dot, s_ddot) = lon.eval(t);
        let (d, d_prime, d_pprime) = lat.eval(s);
        let mut st = from_frenet(
            path,
            &FrenetState {
                s,
                s_dot,
                s_ddot,
                d,
                d_prime,
                d_pprime,
            },
        )?;
        let prev: &VehicleState = &states[k - 1];
        st.kappa_dot = (st.kappa - prev.kappa) / dt;
        // Keep heading continuous with the previous state.
        st.theta = prev.theta + crate::geometry::wrap_angle(st.theta - prev.theta);
        states.push(st);
    }
    Ok(Trajectory { dt, states })
}
