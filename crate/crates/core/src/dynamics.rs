//! Kinematic bicycle model driven by jerk and wrench.

use crate::scalar::{Jet, Scalar};
use crate::world::{Trajectory, VehicleState};
use serde::{Deserialize, Serialize};

/// Per-step control `(jerk, wrench)`.
pub type Control<S = f64> = [S; 2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlCaps {
    pub max_jerk: f64,
    pub max_wrench: f64,
}

impl Default for ControlCaps {
    fn default() -> Self {
        Self {
            max_jerk: 10.0,
            max_wrench: 0.4,
        }
    }
}

impl ControlCaps {
    pub fn bounds(&self) -> [f64; 2] {
        [self.max_jerk, self.max_wrench]
    }

    pub fn admits(&self, u: &Control) -> bool {
        u[0].is_finite()
            && u[1].is_finite()
            && u[0].abs() <= self.max_jerk + 1e-12
            && u[1].abs() <= self.max_wrench + 1e-12
    }

    pub fn project(&self, u: &mut Control) {
        u[0] = u[0].clamp(-self.max_jerk, self.max_jerk);
        u[1] = u[1].clamp(-self.max_wrench, self.max_wrench);
    }
}

/// One step of the dynamics.
///
/// Acceleration, speed, twist and curvature are integrated exactly for
/// piecewise-constant controls. Heading uses the midpoint speed and
/// curvature; position advances along the chord of a constant-curvature arc
/// whose length is the exact travelled distance.
pub fn step<S: Scalar>(x: &VehicleState<S>, u: &Control<S>, dt: f64) -> VehicleState<S> {
    let [j, w] = *u;
    let dt2 = dt * dt;
    let a1 = x.a + j * dt;
    let v1 = x.v + x.a * dt + j * (0.5 * dt2);
    let kd1 = x.kappa_dot + w * dt;
    let k1 = x.kappa + x.kappa_dot * dt + w * (0.5 * dt2);
    let vm = x.v + x.a * (0.5 * dt) + j * (dt2 / 8.0);
    let km = x.kappa + x.kappa_dot * (0.5 * dt) + w * (dt2 / 8.0);
    let dth = vm * km * dt;
    let ds = x.v * dt + x.a * (0.5 * dt2) + j * (dt2 * dt / 6.0);
    let half = dth * 0.5;
    let chord = ds * half.sinc();
    let hm = x.theta + half;
    VehicleState {
        x: x.x + chord * hm.cos(),
        y: x.y + chord * hm.sin(),
        theta: x.theta + dth,
        kappa: k1,
        v: v1,
        a: a1,
        kappa_dot: kd1,
    }
}

/// Step Jacobians: `jx[i][k] = d next_i / d state_k`, `ju[i][k] = d next_i / d u_k`.
#[derive(Clone, Copy, Debug)]
pub struct StepJacobian<S> {
    pub jx: [[S; 7]; 7],
    pub ju: [[S; 2]; 7],
}

pub fn step_with_jacobian<S: Scalar>(
    x: &VehicleState<S>,
    u: &Control<S>,
    dt: f64,
) -> (VehicleState<S>, StepJacobian<S>) {
    let xa = x.to_array();
    let xj = VehicleState::from_array(std::array::from_fn(|i| Jet::<S, 9>::variable(xa[i], i)));
    let uj = [Jet::variable(u[0], 7), Jet::variable(u[1], 8)];
    let n = step(&xj, &uj, dt).to_array();
    let mut jac = StepJacobian {
        jx: [[S::zero(); 7]; 7],
        ju: [[S::zero(); 2]; 7],
    };
    for i in 0..7 {
        jac.jx[i].copy_from_slice(&n[i].d[..7]);
        jac.ju[i].copy_from_slice(&n[i].d[7..]);
    }
    (VehicleState::from_array(n.map(|j| j.v)), jac)
}

/// Folds `step` over the controls; the result has `controls.len() + 1` states.
pub fn rollout<S: Scalar>(
    initial: &VehicleState<S>,
    controls: &[Control<S>],
    dt: f64,
) -> Vec<VehicleState<S>> {
    let mut out = Vec::with_capacity(controls.len() + 1);
    out.push(*initial);
    for u in controls {
        let next = step(out.last().unwrap(), u, dt);
        out.push(next);
    }
    out
}

pub fn rollout_trajectory(initial: &VehicleState, controls: &[Control], dt: f64) -> Trajectory {
    Trajectory {
        dt,
        states: rollout(initial, controls, dt),
    }
}

/// Controls recovered by finite differences of acceleration and twist.
pub fn finite_difference_controls(traj: &Trajectory) -> Vec<Control> {
    traj.states
        .windows(2)
        .map(|w| {
            [
                (w[1].a - w[0].a) / traj.dt,
                (w[1].kappa_dot - w[0].kappa_dot) / traj.dt,
            ]
        })
        .collect()
}

/// Derived signals, one entry per state. Rate signals (jerk, lateral jerk,
/// wrench) are backward differences and zero at index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsProfile {
    pub jerk: Vec<f64>,
    pub accel: Vec<f64>,
    pub lat_accel: Vec<f64>,
    pub lat_jerk: Vec<f64>,
    pub curvature: Vec<f64>,
    pub twist: Vec<f64>,
    pub wrench: Vec<f64>,
}

pub fn lat_accel<S: Scalar>(x: &VehicleState<S>) -> S {
    x.v * x.v * x.kappa
}

pub fn extract_profile(traj: &Trajectory) -> DynamicsProfile {
    let st = &traj.states;
    let dt = traj.dt;
    let diff = |f: &dyn Fn(&VehicleState) -> f64| -> Vec<f64> {
        std::iter::once(0.0)
            .chain(st.windows(2).map(|w| (f(&w[1]) - f(&w[0])) / dt))
            .collect()
    };
    DynamicsProfile {
        jerk: diff(&|s| s.a),
        accel: st.iter().map(|s| s.a).collect(),
        lat_accel: st.iter().map(lat_accel).collect(),
        lat_jerk: diff(&lat_accel),
        curvature: st.iter().map(|s| s.kappa).collect(),
        twist: st.iter().map(|s| s.kappa_dot).collect(),
        wrench: diff(&|s| s.kappa_dot),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(v: f64, kappa: f64) -> VehicleState {
        VehicleState {
            v,
            kappa,
            ..Default::default()
        }
    }

    #[test]
    fn straight_coast() {
        let n = step(&state(10.0, 0.0), &[0.0, 0.0], 0.5);
        assert!((n.x - 5.0).abs() < 1e-12 && n.y.abs() < 1e-12);
        assert_eq!((n.v, n.a, n.kappa, n.theta), (10.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn jerk_from_rest() {
        let n = step(&state(0.0, 0.0), &[2.0, 0.0], 1.0);
        assert_eq!(n.a, 2.0);
        assert_eq!(n.v, 1.0);
    }

    #[test]
    fn circle_is_exact() {
        let r = 50.0;
        let v = 10.0;
        let traj = rollout(&state(v, 1.0 / r), &[[0.0, 0.0]; 20], 0.5);
        for (t, s) in traj.iter().enumerate() {
            let phi = v * 0.5 * t as f64 / r;
            let (ex, ey) = (r * phi.sin(), r * (1.0 - phi.cos()));
            assert!((s.x - ex).hypot(s.y - ey) < 1e-9);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = VehicleState::from_array(std::array::from_fn(|i| match i {
                4 => rng.gen_range(0.0..20.0),
                3 => rng.gen_range(-0.1..0.1),
                6 => rng.gen_range(-0.05..0.05),
                _ => rng.gen_range(-3.0..3.0),
            }));
            let u = [rng.gen_range(-5.0..5.0), rng.gen_range(-0.3..0.3)];
            let (_, jac) = step_with_jacobian(&x, &u, 0.5);
            let h = 1e-6;
            for k in 0..9 {
                let mut xp = x.to_array();
                let mut xm = x.to_array();
                let mut up = u;
                let mut um = u;
                if k < 7 {
                    xp[k] += h;
                    xm[k] -= h;
                } else {
                    up[k - 7] += h;
                    um[k - 7] -= h;
                }
                let fp = step(&VehicleState::from_array(xp), &up, 0.5).to_array();
                let fm = step(&VehicleState::from_array(xm), &um, 0.5).to_array();
                for i in 0..7 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    let an = if k < 7 {
                        jac.jx[i][k]
                    } else {
                        jac.ju[i][k - 7]
                    };
                    assert!(
                        (fd - an).abs() <= 1e-6 * (1.0 + an.abs()),
                        "d{i}/d{k}: {an} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn profile_recovers_controls() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<Control> = (0..20)
            .map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-0.2..0.2)])
            .collect();
        let tr = rollout_trajectory(&state(8.0, 0.01), &u, 0.5);
        let p = extract_profile(&tr);
        for t in 1..=20 {
            assert!((p.jerk[t] - u[t - 1][0]).abs() < 1e-12);
            assert!((p.wrench[t] - u[t - 1][1]).abs() < 1e-12);
            assert_eq!(p.lat_accel[t], tr.states[t].v.powi(2) * tr.states[t].kappa);
        }
        assert_eq!(finite_difference_controls(&tr).len(), 20);
    }

    #[test]
    fn caps_are_checks() {
        let caps = ControlCaps::default();
        assert!(caps.admits(&[10.0, -0.4]));
        assert!(!caps.admits(&[10.5, 0.0]));
        let mut u = [-20.0, 1.0];
        caps.project(&mut u);
        assert_eq!(u, [-10.0, 0.4]);
    }
}
