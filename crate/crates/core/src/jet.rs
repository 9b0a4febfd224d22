//! Forward-mode automatic differentiation with truncated Taylor jets.
//!
//! [`Dual1`] carries a value and gradient, [`Dual2`] additionally carries the
//! Hessian in packed upper-triangular storage, so `hess(i, j)` and `hess(j, i)`
//! read the same stored number and symmetry is exact.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Largest number of independent variables a jet can carry (sphere ambient
/// dimension for S^6).
pub const MAX_DIM: usize = 7;
const PACKED: usize = MAX_DIM * (MAX_DIM + 1) / 2;

#[inline]
pub(crate) fn packed_index(i: usize, j: usize) -> usize {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

/// Scalar type that the field evaluator is generic over.
pub trait JetScalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(value: f64, dim: usize) -> Self;
    fn variable(value: f64, index: usize, dim: usize) -> Self;
    fn value(&self) -> f64;
    fn dim(&self) -> usize;
    /// Applies a scalar function given its value and first two derivatives at
    /// `self.value()`.
    fn chain(&self, f: f64, df: f64, d2f: f64) -> Self;
    fn scale(&self, c: f64) -> Self;
    fn is_finite(&self) -> bool;

    fn exp(&self) -> Self {
        let e = self.value().exp();
        self.chain(e, e, e)
    }
    fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.chain(c, -s, -c)
    }
    fn sqrt(&self) -> Self {
        self.powf(0.5)
    }
    fn recip(&self) -> Self {
        let v = self.value();
        let r = 1.0 / v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
    /// Integer power; valid for negative bases.
    fn powi(&self, k: i32) -> Self {
        let v = self.value();
        match k {
            0 => Self::constant(1.0, self.dim()),
            1 => *self,
            _ => {
                let kf = k as f64;
                self.chain(v.powi(k), kf * v.powi(k - 1), kf * (kf - 1.0) * v.powi(k - 2))
            }
        }
    }
    /// Real power of a nonnegative base.
    fn powf(&self, c: f64) -> Self {
        if c.fract() == 0.0 && c.abs() < i32::MAX as f64 {
            return self.powi(c as i32);
        }
        let v = self.value();
        self.chain(v.powf(c), c * v.powf(c - 1.0), c * (c - 1.0) * v.powf(c - 2.0))
    }
}

impl JetScalar for f64 {
    fn constant(value: f64, _dim: usize) -> Self {
        value
    }
    fn variable(value: f64, _index: usize, _dim: usize) -> Self {
        value
    }
    fn value(&self) -> f64 {
        *self
    }
    fn dim(&self) -> usize {
        0
    }
    fn chain(&self, f: f64, _df: f64, _d2f: f64) -> Self {
        f
    }
    fn scale(&self, c: f64) -> Self {
        c * self
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

/// First-order jet: value and gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual1 {
    pub v: f64,
    pub g: [f64; MAX_DIM],
    pub d: usize,
}

impl Dual1 {
    pub fn grad(&self) -> &[f64] {
        &self.g[..self.d]
    }
}

impl JetScalar for Dual1 {
    fn constant(value: f64, dim: usize) -> Self {
        debug_assert!(dim <= MAX_DIM);
        Dual1 { v: value, g: [0.0; MAX_DIM], d: dim }
    }
    fn variable(value: f64, index: usize, dim: usize) -> Self {
        let mut out = Self::constant(value, dim);
        out.g[index] = 1.0;
        out
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn chain(&self, f: f64, df: f64, _d2f: f64) -> Self {
        let mut out = Self::constant(f, self.d);
        for i in 0..self.d {
            out.g[i] = df * self.g[i];
        }
        out
    }
    fn scale(&self, c: f64) -> Self {
        self.chain(c * self.v, c, 0.0)
    }
    fn is_finite(&self) -> bool {
        self.v.is_finite() && self.grad().iter().all(|x| x.is_finite())
    }
}

impl Add for Dual1 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = self;
        out.v += o.v;
        for i in 0..self.d {
            out.g[i] += o.g[i];
        }
        out
    }
}

impl Sub for Dual1 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for Dual1 {
    type Output = Self;
    fn neg(self) -> Self {
        let mut out = self;
        out.v = -out.v;
        for i in 0..self.d {
            out.g[i] = -out.g[i];
        }
        out
    }
}

impl Mul for Dual1 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v, self.d);
        for i in 0..self.d {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
        }
        out
    }
}

impl Div for Dual1 {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

/// Second-order jet: value, gradient and packed symmetric Hessian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub g: [f64; MAX_DIM],
    pub h: [f64; PACKED],
    pub d: usize,
}

impl Dual2 {
    pub fn grad(&self) -> &[f64] {
        &self.g[..self.d]
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.h[packed_index(i, j)]
    }

    /// Packed upper triangle, `d(d+1)/2` entries.
    pub fn hess_packed(&self) -> &[f64] {
        &self.h[..self.d * (self.d + 1) / 2]
    }

    pub fn laplacian(&self) -> f64 {
        (0..self.d).map(|i| self.hess(i, i)).sum()
    }
}

impl JetScalar for Dual2 {
    fn constant(value: f64, dim: usize) -> Self {
        debug_assert!(dim <= MAX_DIM);
        Dual2 { v: value, g: [0.0; MAX_DIM], h: [0.0; PACKED], d: dim }
    }
    fn variable(value: f64, index: usize, dim: usize) -> Self {
        let mut out = Self::constant(value, dim);
        out.g[index] = 1.0;
        out
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn chain(&self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Self::constant(f, self.d);
        for j in 0..self.d {
            out.g[j] = df * self.g[j];
            for i in 0..=j {
                let k = packed_index(i, j);
                out.h[k] = df * self.h[k] + d2f * self.g[i] * self.g[j];
            }
        }
        out
    }
    fn scale(&self, c: f64) -> Self {
        self.chain(c * self.v, c, 0.0)
    }
    fn is_finite(&self) -> bool {
        self.v.is_finite()
            && self.grad().iter().all(|x| x.is_finite())
            && self.hess_packed().iter().all(|x| x.is_finite())
    }
}

impl Add for Dual2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = self;
        out.v += o.v;
        for i in 0..self.d {
            out.g[i] += o.g[i];
        }
        for k in 0..self.d * (self.d + 1) / 2 {
            out.h[k] += o.h[k];
        }
        out
    }
}

impl Sub for Dual2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for Dual2 {
    type Output = Self;
    fn neg(self) -> Self {
        let mut out = self;
        out.v = -out.v;
        for i in 0..self.d {
            out.g[i] = -out.g[i];
        }
        for k in 0..self.d * (self.d + 1) / 2 {
            out.h[k] = -out.h[k];
        }
        out
    }
}

impl Mul for Dual2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v, self.d);
        for j in 0..self.d {
            out.g[j] = self.g[j] * o.v + self.v * o.g[j];
            for i in 0..=j {
                let k = packed_index(i, j);
                out.h[k] = self.h[k] * o.v
                    + self.v * o.h[k]
                    + (self.g[i] * o.g[j] + self.g[j] * o.g[i]);
            }
        }
        out
    }
}

impl Div for Dual2 {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}
