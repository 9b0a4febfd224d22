//! Deterministic product quadrature on `R^n` (spherical-radial) and on `S^n`
//! (hyperspherical angles), with error estimates from one grid doubling.
//!
//! Radial integrals `∫_0^∞ r^c h(r) dr` are mapped to `t ∈ (0, 1)` by
//! `r = t/(1-t)` and integrated with the Gauss–Jacobi rule for the weight
//! `t^c`, so a radial power weight `|x|^{-s}` never samples the origin. Polar
//! angles of the sphere use Gauss–Jacobi (Gegenbauer) nodes in `cos θ_i` with
//! the `sin` Jacobian folded into the weight function, and the last azimuth
//! uses the trapezoid rule.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CHUNK: usize = 512;
const FLOOR_ULPS: f64 = 64.0;

/// Node counts and refinement depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub radial_nodes: usize,
    /// Gauss nodes per polar angle; the azimuth gets twice as many.
    pub angular_nodes: usize,
    /// Number of node doublings on top of the base grid. The finest level is
    /// reported and compared against the one below it.
    pub refine_levels: usize,
    /// Estimates above this are flagged.
    pub tolerance: Option<f64>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { radial_nodes: 64, angular_nodes: 16, refine_levels: 1, tolerance: None }
    }
}

impl Budget {
    pub fn new(radial_nodes: usize, angular_nodes: usize) -> Self {
        Budget { radial_nodes, angular_nodes, ..Budget::default() }
    }

    /// The same budget with every node count multiplied by `2^k`.
    pub fn doubled(&self, k: usize) -> Self {
        Budget {
            radial_nodes: self.radial_nodes << k,
            angular_nodes: self.angular_nodes << k,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if self.radial_nodes == 0 || self.angular_nodes == 0 {
            return Err(Error::Config {
                key: "budget".into(),
                message: "node counts must be positive".into(),
            });
        }
        Ok(())
    }
}

/// A quadrature value with its a-posteriori error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub value: f64,
    pub error_estimate: f64,
    pub grid_levels: Vec<usize>,
    pub flagged: bool,
}

/// A quadrature sum together with `Σ|w g|`, the scale for rounding error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub scale: f64,
}

impl Measured {
    pub fn new(value: f64, scale: f64) -> Self {
        Measured { value, scale: scale.abs() }
    }

    /// A derived quantity whose rounding scale is its own magnitude.
    pub fn exact(value: f64) -> Self {
        Measured { value, scale: value.abs() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    EuclideanSphericalRadial,
    SphereProduct,
}

/// Largest product grid the constructors will build.
pub const MAX_GRID_NODES: usize = 1 << 24;

fn sphere_rule_len(d: usize, k: usize) -> usize {
    if d == 0 {
        2
    } else {
        k.saturating_pow(d as u32 - 1).saturating_mul(2 * k)
    }
}

fn check_size(nodes: usize) -> Result<()> {
    if nodes > MAX_GRID_NODES {
        return Err(Error::Constraint(format!(
            "quadrature grid of {nodes} nodes exceeds the limit of {MAX_GRID_NODES}; lower the node budget"
        )));
    }
    Ok(())
}

/// Flat list of nodes in `R^dim` with weights.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pub dim: usize,
    pub kind: GridKind,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    /// Product grid for the normalized surface measure on `S^n ⊂ R^{n+1}`.
    pub fn sphere(n: usize, angular_nodes: usize) -> Result<Self> {
        if n == 0 || n > 6 {
            return Err(Error::Constraint(format!("sphere dimension n = {n} outside 1..=6")));
        }
        if angular_nodes == 0 {
            return Err(Error::Constraint("angular_nodes must be positive".into()));
        }
        check_size(sphere_rule_len(n, angular_nodes))?;
        let (coords, mut weights) = sphere_rule(n, angular_nodes);
        let total: f64 = pairwise(&weights);
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(QuadratureGrid {
            dim: n + 1,
            kind: GridKind::SphereProduct,
            radial_nodes: 0,
            angular_nodes,
            coords,
            weights,
        })
    }

    /// Spherical-radial grid for `∫_{R^n} g(x) |x|^{-s} dx`; the weight is
    /// part of the node weights.
    pub fn euclidean(n: usize, s: f64, radial_nodes: usize, angular_nodes: usize) -> Result<Self> {
        if n == 0 || n > 6 {
            return Err(Error::Constraint(format!("dimension n = {n} outside 1..=6")));
        }
        if !s.is_finite() || s >= n as f64 {
            return Err(Error::Constraint(format!(
                "weight exponent s = {s} must satisfy s < n = {n} for integrability at the origin"
            )));
        }
        if radial_nodes == 0 || angular_nodes == 0 {
            return Err(Error::Constraint("node counts must be positive".into()));
        }
        check_size(radial_nodes.saturating_mul(sphere_rule_len(n - 1, angular_nodes)))?;
        let c = n as f64 - 1.0 - s;
        let (t, wt) = gauss_jacobi(radial_nodes, 0.0, c);
        let (dirs, dir_w) = sphere_rule(n - 1, angular_nodes);
        let dir_total: f64 = pairwise(&dir_w);
        let area = sphere_area(n - 1);
        let mut coords = Vec::with_capacity(radial_nodes * dir_w.len() * n);
        let mut weights = Vec::with_capacity(radial_nodes * dir_w.len());
        for (&x, &w) in t.iter().zip(&wt) {
            // Nodes are on [-1, 1]; t ∈ (0, 1) carries t^c / (c + 1) mass.
            let t = 0.5 * (1.0 + x);
            let r = t / (1.0 - t);
            let wr = w / (c + 1.0) * (1.0 - t).powf(-c - 2.0);
            for (omega, &wo) in dirs.chunks_exact(n).zip(&dir_w) {
                coords.extend(omega.iter().map(|o| r * o));
                weights.push(wr * wo / dir_total * area);
            }
        }
        Ok(QuadratureGrid {
            dim: n,
            kind: GridKind::EuclideanSphericalRadial,
            radial_nodes,
            angular_nodes,
            coords,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.coords.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest value of `g` over the nodes.
    pub fn max_over<G>(&self, g: G) -> Result<f64>
    where
        G: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let maxima: Vec<Result<f64>> = self
            .coords
            .par_chunks(CHUNK * self.dim)
            .map(|c| c.chunks_exact(self.dim).try_fold(0.0f64, |m, x| Ok(m.max(g(x)?))))
            .collect();
        maxima.into_iter().try_fold(0.0f64, |m, c| Ok(m.max(c?)))
    }

    /// Integrates `m` integrands at once. `g(x, out)` writes the `m` values at
    /// node `x`. Summation order is fixed, so results do not depend on the
    /// number of worker threads.
    pub fn integrate<G>(&self, m: usize, g: G) -> Result<Vec<Measured>>
    where
        G: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
    {
        let dim = self.dim;
        let chunks: Vec<Result<Vec<Measured>>> = self
            .weights
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, ws)| {
                let base = ci * CHUNK;
                let mut terms = vec![0.0; m * ws.len()];
                let mut scale = vec![0.0; m];
                let mut out = vec![0.0; m];
                for (i, &w) in ws.iter().enumerate() {
                    let x = &self.coords[(base + i) * dim..(base + i + 1) * dim];
                    g(x, &mut out)?;
                    for k in 0..m {
                        if !out[k].is_finite() {
                            return Err(Error::NonFiniteIntegrand { point: x.to_vec() });
                        }
                        let term = w * out[k];
                        terms[k * ws.len() + i] = term;
                        scale[k] += term.abs();
                    }
                }
                Ok((0..m)
                    .map(|k| Measured {
                        value: pairwise(&terms[k * ws.len()..(k + 1) * ws.len()]),
                        scale: scale[k],
                    })
                    .collect())
            })
            .collect();
        let mut per_chunk = Vec::with_capacity(chunks.len());
        for c in chunks {
            per_chunk.push(c?);
        }
        Ok((0..m)
            .map(|k| {
                let values: Vec<f64> = per_chunk.iter().map(|c| c[k].value).collect();
                let scales: Vec<f64> = per_chunk.iter().map(|c| c[k].scale).collect();
                Measured { value: pairwise(&values), scale: pairwise(&scales) }
            })
            .collect())
    }
}

/// Pairwise summation.
fn pairwise(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise(&xs[..mid]) + pairwise(&xs[mid..])
}

/// Area of the unit sphere `S^d ⊂ R^{d+1}`.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        0 => 2.0,
        1 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI / (d as f64 - 1.0) * sphere_area(d - 2),
    }
}

/// Unnormalized product rule on `S^d` (weights sum to 1 up to rounding).
fn sphere_rule(d: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    match d {
        0 => (vec![1.0, -1.0], vec![0.5, 0.5]),
        1 => {
            let m = 2 * k;
            let mut coords = Vec::with_capacity(2 * m);
            for j in 0..m {
                let (s, c) = (2.0 * std::f64::consts::PI * j as f64 / m as f64).sin_cos();
                coords.extend([c, s]);
            }
            (coords, vec![1.0 / m as f64; m])
        }
        _ => {
            let lambda = 0.5 * (d as f64 - 2.0);
            let (t, wt) = gauss_jacobi(k, lambda, lambda);
            let (inner, inner_w) = sphere_rule(d - 1, k);
            let mut coords = Vec::with_capacity(k * inner_w.len() * (d + 1));
            let mut weights = Vec::with_capacity(k * inner_w.len());
            for (&ti, &wi) in t.iter().zip(&wt) {
                let sin = (1.0 - ti * ti).max(0.0).sqrt();
                for (y, &wy) in inner.chunks_exact(d).zip(&inner_w) {
                    coords.push(ti);
                    coords.extend(y.iter().map(|yj| sin * yj));
                    weights.push(wi * wy);
                }
            }
            (coords, weights)
        }
    }
}

fn jacobi_recurrence(k: usize, alpha: f64, beta: f64) -> (f64, f64) {
    let kf = k as f64;
    let ab = alpha + beta;
    let two_k_ab = 2.0 * kf + ab;
    let a = if k == 0 {
        (beta - alpha) / (ab + 2.0)
    } else {
        (beta * beta - alpha * alpha) / (two_k_ab * (two_k_ab + 2.0))
    };
    let b = if k == 0 {
        0.0
    } else {
        let num = 4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab);
        let den = two_k_ab * two_k_ab * (two_k_ab + 1.0) * (two_k_ab - 1.0);
        (num / den).sqrt()
    };
    (a, b)
}

/// Gauss–Jacobi rule for the weight `(1-x)^α (1+x)^β` on `[-1, 1]`, with
/// weights normalized to sum to 1. Nodes come from the Golub–Welsch
/// eigenproblem and are polished by Newton steps on the orthonormal
/// recurrence; weights use the Christoffel function.
pub fn gauss_jacobi(k: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(k > 0 && alpha > -1.0 && beta > -1.0, "invalid Gauss-Jacobi request");
    let rec: Vec<(f64, f64)> = (0..=k).map(|j| jacobi_recurrence(j, alpha, beta)).collect();
    let mut jm = DMatrix::zeros(k, k);
    for i in 0..k {
        jm[(i, i)] = rec[i].0;
        if i + 1 < k {
            jm[(i, i + 1)] = rec[i + 1].1;
            jm[(i + 1, i)] = rec[i + 1].1;
        }
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jm).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    // p_0..p_k and p_k' of the orthonormal family, plus Σ_{j<k} p_j².
    let eval = |x: f64| {
        let (mut p_prev, mut p) = (0.0, 1.0);
        let (mut d_prev, mut d) = (0.0, 0.0);
        let mut sum_sq = 0.0;
        for j in 0..k {
            sum_sq += p * p;
            let (a, b) = rec[j];
            let b_next = rec[j + 1].1;
            let p_next = ((x - a) * p - b * p_prev) / b_next;
            let d_next = (p + (x - a) * d - b * d_prev) / b_next;
            (p_prev, p) = (p, p_next);
            (d_prev, d) = (d, d_next);
        }
        (p, d, sum_sq)
    };
    let mut weights = Vec::with_capacity(k);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, d, _) = eval(*x);
            if d == 0.0 {
                break;
            }
            let step = p / d;
            *x = (*x - step).clamp(-1.0, 1.0);
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        weights.push(1.0 / eval(*x).2);
    }
    let total = pairwise(&weights);
    weights.iter_mut().for_each(|w| *w /= total);
    (nodes, weights)
}

/// Runs `compute` on each refinement level and turns the finest two into
/// estimates: `error = |fine - coarse| + rounding floor`.
pub fn refine<F>(budget: &Budget, compute: F) -> Result<Vec<IntegralEstimate>>
where
    F: Fn(&Budget) -> Result<Vec<Measured>>,
{
    budget.validate()?;
    let levels: Vec<usize> = (0..=budget.refine_levels).collect();
    let mut prev: Option<Vec<Measured>> = None;
    let mut last = Vec::new();
    for &l in &levels {
        let cur = compute(&budget.doubled(l))?;
        prev = Some(std::mem::replace(&mut last, cur));
    }
    let coarse = if levels.len() > 1 { prev } else { None };
    Ok(last
        .iter()
        .enumerate()
        .map(|(i, fine)| {
            let diff = coarse.as_ref().map_or(0.0, |c| (fine.value - c[i].value).abs());
            let error_estimate = diff + FLOOR_ULPS * f64::EPSILON * fine.scale;
            IntegralEstimate {
                value: fine.value,
                error_estimate,
                grid_levels: levels.clone(),
                flagged: budget.tolerance.is_some_and(|t| error_estimate > t),
            }
        })
        .collect())
}

/// Scalar-or-fallible integrand output.
pub trait IntegrandValue {
    fn into_result(self) -> Result<f64>;
}

impl IntegrandValue for f64 {
    fn into_result(self) -> Result<f64> {
        Ok(self)
    }
}

impl IntegrandValue for Result<f64> {
    fn into_result(self) -> Result<f64> {
        self
    }
}

fn single<G, R>(grid_for: impl Fn(&Budget) -> Result<QuadratureGrid>, g: G, budget: &Budget) -> Result<IntegralEstimate>
where
    G: Fn(&[f64]) -> R + Sync,
    R: IntegrandValue,
{
    let mut est = refine(budget, |b| {
        grid_for(b)?.integrate(1, |x, out| {
            out[0] = g(x).into_result()?;
            Ok(())
        })
    })?;
    Ok(est.remove(0))
}

/// `∫_{R^n} g(x) dx`.
pub fn integrate_rn<G, R>(g: G, n: usize, budget: &Budget) -> Result<IntegralEstimate>
where
    G: Fn(&[f64]) -> R + Sync,
    R: IntegrandValue,
{
    integrate_weighted_rn(g, 0.0, n, budget)
}

/// `∫_{R^n} g(x) |x|^{-s} dx` for `s < n`.
pub fn integrate_weighted_rn<G, R>(g: G, s: f64, n: usize, budget: &Budget) -> Result<IntegralEstimate>
where
    G: Fn(&[f64]) -> R + Sync,
    R: IntegrandValue,
{
    single(|b| QuadratureGrid::euclidean(n, s, b.radial_nodes, b.angular_nodes), g, budget)
}

/// `∫_{S^n} g dσ` against the normalized surface measure.
pub fn integrate_sn<G, R>(g: G, n: usize, budget: &Budget) -> Result<IntegralEstimate>
where
    G: Fn(&[f64]) -> R + Sync,
    R: IntegrandValue,
{
    single(|b| QuadratureGrid::sphere(n, b.angular_nodes), g, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn oversized_grids_are_refused() {
        assert!(matches!(QuadratureGrid::euclidean(5, 0.0, 128, 32), Err(Error::Constraint(_))));
        let g = QuadratureGrid::euclidean(3, 0.0, 8, 4).unwrap();
        assert_eq!(g.len(), 8 * sphere_rule_len(2, 4));
        assert_eq!(QuadratureGrid::sphere(3, 5).unwrap().len(), sphere_rule_len(3, 5));
    }

    #[test]
    fn legendre_three_point_rule() {
        let (x, w) = gauss_jacobi(3, 0.0, 0.0);
        let r = (0.6f64).sqrt();
        assert!((x[0] + r).abs() < 1e-15 && x[1].abs() < 1e-15 && (x[2] - r).abs() < 1e-15);
        assert!((w[0] - 5.0 / 18.0).abs() < 1e-15 && (w[1] - 8.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_rule_is_exact_for_high_degree() {
        // ∫_{-1}^{1} (1+x)^2 x^4 dx / ∫ (1+x)^2 dx
        let (x, w) = gauss_jacobi(5, 0.0, 2.0);
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        let exact = (2.0 / 5.0 + 2.0 / 7.0) / (8.0 / 3.0);
        assert!((got - exact).abs() < 1e-14);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn gaussian_moments_on_r3() {
        let b = Budget::default();
        let g = |x: &[f64]| (-x.iter().map(|v| v * v).sum::<f64>()).exp();
        let e = integrate_rn(g, 3, &b).unwrap();
        assert!((e.value - PI.powf(1.5)).abs() < 1e-8);
        let e = integrate_weighted_rn(g, 1.0, 3, &b).unwrap();
        assert!((e.value - 2.0 * PI).abs() < 1e-8);
        let e = integrate_weighted_rn(g, 2.0, 3, &b).unwrap();
        assert!((e.value - 2.0 * PI.powf(1.5)).abs() < 1e-7);
    }

    #[test]
    fn singular_weight_is_rejected() {
        assert!(integrate_weighted_rn(|_: &[f64]| 1.0, 3.0, 3, &Budget::default()).is_err());
    }

    #[test]
    fn odd_integrands_vanish() {
        let b = Budget::default();
        let e = integrate_rn(|x: &[f64]| x[0] * (-(x[0] * x[0] + x[1] * x[1])).exp(), 2, &b).unwrap();
        assert!(e.value.abs() < 1e-12);
        let e = integrate_sn(|x: &[f64]| x[0], 2, &b).unwrap();
        assert!(e.value.abs() < 1e-14);
    }

    #[test]
    fn sphere_second_moment() {
        for n in 1..=5 {
            let e = integrate_sn(|x: &[f64]| x[0] * x[0], n, &Budget::new(8, 4)).unwrap();
            assert!((e.value - 1.0 / (n as f64 + 1.0)).abs() < 1e-14, "n = {n}");
            let one = integrate_sn(|_: &[f64]| 1.0, n, &Budget::new(8, 4)).unwrap();
            assert!((one.value - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn non_finite_integrand_names_the_node() {
        let e = integrate_sn(|x: &[f64]| 1.0 / (x[0] - x[0]), 2, &Budget::new(8, 4));
        assert!(matches!(e, Err(Error::NonFiniteIntegrand { .. })));
    }

    #[test]
    fn tolerance_flags_loose_estimates() {
        let b = Budget { tolerance: Some(1e-30), ..Budget::new(4, 2) };
        let e = integrate_rn(|x: &[f64]| (-x[0] * x[0]).exp(), 1, &b).unwrap();
        assert!(e.flagged);
    }
}
