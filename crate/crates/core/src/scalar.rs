//! Scalar abstraction used by every differentiable code path.
//!
//! Dynamics, Frenet projection and the cost features are written once, generic
//! over [`Scalar`]. Plain evaluation uses `f64`; gradients use the forward-mode
//! [`Jet`], and nesting a `Jet` inside a `Jet` yields second-order products
//! (Hessian-vector products) without any dense Hessian.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
{
    fn cst(v: f64) -> Self;
    /// Real (primal) part. Branching decisions are made on this value only.
    fn re(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn atan2(self, x: Self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn sq(self) -> Self {
        self * self
    }

    fn tan(self) -> Self {
        self.sin() / self.cos()
    }

    fn abs(self) -> Self {
        if self.re() < 0.0 {
            -self
        } else {
            self
        }
    }

    /// `max(0, self)`; the derivative at the corner is taken from the zero side.
    fn relu(self) -> Self {
        if self.re() > 0.0 {
            self
        } else {
            Self::zero()
        }
    }

    /// Squared hinge `max(0, self)^2`.
    fn hinge_sq(self) -> Self {
        let r = self.relu();
        r * r
    }

    fn min(self, other: Self) -> Self {
        if other.re() < self.re() {
            other
        } else {
            self
        }
    }

    fn max(self, other: Self) -> Self {
        if other.re() > self.re() {
            other
        } else {
            self
        }
    }

    /// `sin(x)/x`, smooth through zero.
    fn sinc(self) -> Self {
        if self.re().abs() < 1e-4 {
            let x2 = self * self;
            // 1 - x^2/6 + x^4/120
            (x2 * (x2 * (1.0 / 120.0) - 1.0 / 6.0)) + 1.0
        } else {
            self.sin() / self
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

/// Forward-mode dual number carrying `N` tangent directions over an inner
/// scalar `S`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<S, const N: usize> {
    pub v: S,
    pub d: [S; N],
}

impl<S: Scalar, const N: usize> Jet<S, N> {
    pub fn constant(v: S) -> Self {
        Self {
            v,
            d: [S::zero(); N],
        }
    }

    /// A variable seeded with a unit tangent in direction `i`.
    pub fn variable(v: S, i: usize) -> Self {
        let mut d = [S::zero(); N];
        d[i] = S::cst(1.0);
        Self { v, d }
    }

    #[inline]
    fn chain(self, v: S, dv: S) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = *x * dv;
        }
        Self { v, d }
    }
}

impl<S: Scalar, const N: usize> Add for Jet<S, N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d.iter()) {
            *a = *a + *b;
        }
        Self { v: self.v + o.v, d }
    }
}

impl<S: Scalar, const N: usize> Sub for Jet<S, N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d.iter()) {
            *a = *a - *b;
        }
        Self { v: self.v - o.v, d }
    }
}

impl<S: Scalar, const N: usize> Mul for Jet<S, N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d.iter()) {
            *a = *a * o.v + self.v * *b;
        }
        Self { v: self.v * o.v, d }
    }
}

impl<S: Scalar, const N: usize> Div for Jet<S, N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = S::cst(1.0) / o.v;
        let v = self.v * inv;
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d.iter()) {
            *a = (*a - v * *b) * inv;
        }
        Self { v, d }
    }
}

impl<S: Scalar, const N: usize> Neg for Jet<S, N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = -*a;
        }
        Self { v: -self.v, d }
    }
}

impl<S: Scalar, const N: usize> Add<f64> for Jet<S, N> {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        Self {
            v: self.v + o,
            d: self.d,
        }
    }
}

impl<S: Scalar, const N: usize> Sub<f64> for Jet<S, N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        Self {
            v: self.v - o,
            d: self.d,
        }
    }
}

impl<S: Scalar, const N: usize> Mul<f64> for Jet<S, N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = *a * o;
        }
        Self { v: self.v * o, d }
    }
}

impl<S: Scalar, const N: usize> Div<f64> for Jet<S, N> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self * (1.0 / o)
    }
}

impl<S: Scalar, const N: usize> AddAssign for Jet<S, N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar, const N: usize> SubAssign for Jet<S, N> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<S: Scalar, const N: usize> MulAssign for Jet<S, N> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<S: Scalar, const N: usize> Scalar for Jet<S, N> {
    fn cst(v: f64) -> Self {
        Self::constant(S::cst(v))
    }

    fn re(&self) -> f64 {
        self.v.re()
    }

    fn sin(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(s, c)
    }

    fn cos(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(c, -s)
    }

    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        // d sqrt(x) = 1 / (2 sqrt(x)); zero tangent at the origin.
        if r.re() == 0.0 {
            return Self::constant(r);
        }
        self.chain(r, S::cst(0.5) / r)
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }

    fn atan2(self, x: Self) -> Self {
        let v = self.v.atan2(x.v);
        let den = self.v * self.v + x.v * x.v;
        let mut d = self.d;
        for (i, a) in d.iter_mut().enumerate() {
            *a = (x.v * *a - self.v * x.d[i]) / den;
        }
        Self { v, d }
    }
}

/// Jet with a single tangent; the building block for directional derivatives.
pub type Dual<S = f64> = Jet<S, 1>;

pub fn dual(v: f64, dv: f64) -> Dual {
    Jet { v, d: [dv] }
}
