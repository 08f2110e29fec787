//! Box-constrained quasi-Newton minimization.
//!
//! BFGS on the inverse Hessian with a projected backtracking line search.
//! Every accepted point satisfies the Armijo condition along the projected
//! path, so the objective never increases.

use crate::error::{PlanError, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub tol_g: f64,
    pub tol_f: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            tol_g: 1e-4,
            tol_f: 1e-8,
            max_iter: 200,
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    GradientTolerance,
    CostTolerance,
    MaxIterations,
    /// The line search found no decrease.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub f_initial: f64,
    pub iterations: usize,
    pub status: Status,
}

fn project(x: &mut DVector<f64>, bound: &[f64]) {
    for (i, v) in x.iter_mut().enumerate() {
        let b = bound[i];
        *v = v.clamp(-b, b);
    }
}

/// Gradient with the components that push into an active bound removed.
fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, bound: &[f64]) -> DVector<f64> {
    let mut pg = g.clone();
    for i in 0..x.len() {
        let b = bound[i];
        if (x[i] >= b - 1e-12 && g[i] < 0.0) || (x[i] <= -b + 1e-12 && g[i] > 0.0) {
            pg[i] = 0.0;
        }
    }
    pg
}

/// Minimizes `f` over `|x_i| <= bound_i`. `fg` returns value and gradient.
pub fn minimize<F>(mut fg: F, x0: &[f64], bound: &[f64], cfg: &OptimConfig) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    project(&mut x, bound);
    let eval = |fg: &mut F, x: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let (f, g) = fg(x.as_slice());
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(PlanError::NumericalFailure(format!(
                "non-finite objective or gradient (f = {f}) at |x| = {:.3e}",
                x.norm()
            )));
        }
        Ok((f, DVector::from_vec(g)))
    };
    let (mut f, mut g) = eval(&mut fg, &x)?;
    let f_initial = f;
    let mut h = DMatrix::<f64>::identity(n, n) * (1.0 / g.norm().max(1.0));
    let mut fresh = true;
    let mut status = Status::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let pg = projected_gradient(&x, &g, bound);
        if pg.norm() < cfg.tol_g {
            status = Status::GradientTolerance;
            break;
        }
        let mut p = -(&h * &pg);
        for i in 0..n {
            if pg[i] == 0.0 {
                p[i] = 0.0;
            }
        }
        if pg.dot(&p) >= 0.0 {
            h = DMatrix::identity(n, n) * (1.0 / pg.norm().max(1.0));
            fresh = true;
            p = -&pg * (1.0 / pg.norm().max(1.0));
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let mut xn = &x + &p * alpha;
            project(&mut xn, bound);
            let step = &xn - &x;
            if step.norm() == 0.0 {
                break;
            }
            let (fn_, gn) = eval(&mut fg, &xn)?;
            if fn_ <= f + cfg.armijo * g.dot(&step) && fn_ <= f {
                accepted = Some((xn, fn_, gn, step));
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        let Some((xn, fn_, gn, s)) = accepted else {
            if fresh {
                status = Status::Stalled;
                break;
            }
            h = DMatrix::identity(n, n) * (1.0 / pg.norm().max(1.0));
            fresh = true;
            continue;
        };
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            h = &h - (&hy * s.transpose() + &s * hy.transpose()) * rho
                + (&s * s.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }
        let decrease = f - fn_;
        x = xn;
        g = gn;
        let f_old = f;
        f = fn_;
        if decrease <= cfg.tol_f * f_old.abs().max(1.0) {
            status = Status::CostTolerance;
            break;
        }
    }
    Ok(OptimResult {
        x: x.as_slice().to_vec(),
        f,
        f_initial,
        iterations,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let fg = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (f, g)
        };
        let cfg = OptimConfig {
            tol_f: 0.0,
            max_iter: 500,
            ..Default::default()
        };
        let r = minimize(fg, &[-1.2, 1.0], &[10.0, 10.0], &cfg).unwrap();
        assert!(
            (r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4,
            "{:?}",
            r
        );
    }

    #[test]
    fn active_bound() {
        let fg = |x: &[f64]| {
            (
                (x[0] - 3.0).powi(2) + (x[1] + 0.5).powi(2),
                vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 0.5)],
            )
        };
        let r = minimize(fg, &[0.0, 0.0], &[1.0, 1.0], &OptimConfig::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-12);
        assert!((r.x[1] + 0.5).abs() < 1e-4);
        assert!(r.f <= r.f_initial);
    }

    #[test]
    fn nan_is_reported() {
        let fg = |_: &[f64]| (f64::NAN, vec![0.0]);
        assert!(matches!(
            minimize(fg, &[0.0], &[1.0], &OptimConfig::default()),
            Err(PlanError::NumericalFailure(_))
        ));
    }
}
