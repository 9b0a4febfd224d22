//! Checkers for the improved CKN and uncertainty inequalities.
//!
//! Each checker integrates every functional that enters one inequality,
//! assembles the left side, the classical right side and the covariance
//! term, and reports the slack `lhs - (rhs_classical + cov_term)`. A check
//! holds when the slack is at least minus ten times the quadrature error
//! propagated into slack units.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Codomain, Domain, FieldSpec};
use crate::jet::{Dual1, Dual2};
use crate::phase::{flatten, split_terms, SplitTerms, RELATIVE_EPS_AMP};
use crate::quadrature::{refine, Budget, IntegralEstimate, Measured, QuadratureGrid};
use crate::sphere_stats::{compute_stats, Estimate, SphereStats};

/// Multiple of the propagated quadrature error that a slack may fall below
/// zero and still count as holding.
pub const TOLERANCE_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    CknComplex,
    CknVector,
    Hpw,
    SecondOrder,
    CknGeneral,
    SphereComplex,
    SphereComplexStar,
    SphereCorollary,
    SphereVector,
    SphereVectorEnergy,
}

impl TheoremId {
    pub const ALL: [TheoremId; 10] = [
        TheoremId::CknComplex,
        TheoremId::CknVector,
        TheoremId::Hpw,
        TheoremId::SecondOrder,
        TheoremId::CknGeneral,
        TheoremId::SphereComplex,
        TheoremId::SphereComplexStar,
        TheoremId::SphereCorollary,
        TheoremId::SphereVector,
        TheoremId::SphereVectorEnergy,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremId::CknComplex => "ckn_complex",
            TheoremId::CknVector => "ckn_vector",
            TheoremId::Hpw => "hpw",
            TheoremId::SecondOrder => "second_order",
            TheoremId::CknGeneral => "ckn_general",
            TheoremId::SphereComplex => "sphere_complex",
            TheoremId::SphereComplexStar => "sphere_complex_star",
            TheoremId::SphereCorollary => "sphere_corollary",
            TheoremId::SphereVector => "sphere_vector",
            TheoremId::SphereVectorEnergy => "sphere_vector_energy",
        }
    }

    /// Whether the theorem lives on the sphere.
    pub fn is_sphere(&self) -> bool {
        matches!(
            self,
            TheoremId::SphereComplex
                | TheoremId::SphereComplexStar
                | TheoremId::SphereCorollary
                | TheoremId::SphereVector
                | TheoremId::SphereVectorEnergy
        )
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown theorem `{s}`")))
    }
}

/// `(n, p, q)` inside the window `0 < q < 2 < p`, `2 < n < 2(p-q)/(p-2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCkn")]
pub struct CknParams {
    pub n: usize,
    pub p: f64,
    pub q: f64,
}

#[derive(Deserialize)]
struct RawCkn {
    n: usize,
    p: f64,
    q: f64,
}

impl TryFrom<RawCkn> for CknParams {
    type Error = Error;
    fn try_from(r: RawCkn) -> Result<Self> {
        CknParams::new(r.n, r.p, r.q)
    }
}

impl CknParams {
    pub fn new(n: usize, p: f64, q: f64) -> Result<Self> {
        let violated = |c: &str| Err(Error::Constraint(c.to_owned()));
        if !(p.is_finite() && q.is_finite()) {
            return violated("p and q must be finite");
        }
        if !(0.0 < q && q < 2.0) {
            return violated(&format!("0 < q < 2 (got q = {q})"));
        }
        if !(p > 2.0) {
            return violated(&format!("2 < p (got p = {p})"));
        }
        let nf = n as f64;
        if !(nf > 2.0) {
            return violated(&format!("2 < n (got n = {n})"));
        }
        let bound = 2.0 * (p - q) / (p - 2.0);
        if !(nf < bound) {
            return violated(&format!("n < 2(p-q)/(p-2) = {bound} (got n = {n})"));
        }
        if n > 6 {
            return violated(&format!("n <= 6 (got n = {n})"));
        }
        Ok(CknParams { n, p, q })
    }

    /// The classical constant `(n - q)² / p²`.
    pub fn constant(&self) -> f64 {
        ((self.n as f64 - self.q) / self.p).powi(2)
    }
}

/// `(n, p, r, α, β, γ)` of the general-parameter theorem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeneral")]
pub struct GeneralCknParams {
    pub n: usize,
    pub p: f64,
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Deserialize)]
struct RawGeneral {
    n: usize,
    p: f64,
    r: f64,
    alpha: f64,
    beta: f64,
    gamma: Option<f64>,
}

impl TryFrom<RawGeneral> for GeneralCknParams {
    type Error = Error;
    fn try_from(r: RawGeneral) -> Result<Self> {
        match r.gamma {
            Some(g) => GeneralCknParams::new(r.n, r.p, r.r, r.alpha, r.beta, g),
            None => GeneralCknParams::with_derived_gamma(r.n, r.p, r.r, r.alpha, r.beta),
        }
    }
}

impl GeneralCknParams {
    pub fn new(n: usize, p: f64, r: f64, alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let violated = |c: String| Err(Error::Constraint(c));
        if ![p, r, alpha, beta, gamma].iter().all(|v| v.is_finite()) {
            return violated("parameters must be finite".into());
        }
        if !(2..=6).contains(&n) {
            return violated(format!("2 <= n <= 6 (got n = {n})"));
        }
        if !(p > 2.0) {
            return violated(format!("p > 2 (got p = {p})"));
        }
        if !(r > p) {
            return violated(format!("r > p (got r = {r}, p = {p})"));
        }
        let nf = n as f64;
        let c1 = 1.0 / p + alpha / nf;
        if !(c1 > 0.0) {
            return violated(format!("1/p + alpha/n > 0 (got {c1})"));
        }
        let c2 = (p - 1.0) / (p * (r - 1.0)) + beta / nf;
        if !(c2 > 0.0) {
            return violated(format!("(p-1)/(p(r-1)) + beta/n > 0 (got {c2})"));
        }
        let c3 = 1.0 / r + gamma / nf;
        if !(c3 > 0.0) {
            return violated(format!("1/r + gamma/n > 0 (got {c3})"));
        }
        let expected = Self::derived_gamma(p, r, alpha, beta);
        if (gamma - expected).abs() > 1e-12 * expected.abs().max(1.0) {
            return violated(format!(
                "gamma = (alpha-1)/r + (p-1)beta/(pr) = {expected} (got gamma = {gamma})"
            ));
        }
        Ok(GeneralCknParams { n, p, r, alpha, beta, gamma })
    }

    pub fn with_derived_gamma(n: usize, p: f64, r: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(n, p, r, alpha, beta, Self::derived_gamma(p, r, alpha, beta))
    }

    pub fn derived_gamma(p: f64, r: f64, alpha: f64, beta: f64) -> f64 {
        (alpha - 1.0) / r + (p - 1.0) * beta / (p * r)
    }
}

/// One integral that entered a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedIntegral {
    pub name: String,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub theorem_id: TheoremId,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub lhs: f64,
    pub rhs_classical: f64,
    pub cov_term: f64,
    pub rhs_improved: f64,
    pub slack: f64,
    pub relative_margin: f64,
    pub holds: bool,
    /// Allowed negative slack: ten times the propagated quadrature error.
    pub tolerance: f64,
    pub quadrature_errors: Vec<f64>,
    pub integrals: Vec<NamedIntegral>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity_residual: Option<Estimate>,
}

impl InequalityReport {
    /// `lhs / rhs_classical`.
    pub fn ratio_classical(&self) -> f64 {
        self.lhs / self.rhs_classical
    }

    /// `lhs / rhs_improved`.
    pub fn ratio_improved(&self) -> f64 {
        self.lhs / self.rhs_improved
    }
}

/// A value with its absolute uncertainty.
#[derive(Clone, Copy, Debug)]
struct Term {
    value: f64,
    error: f64,
}

struct Assembly {
    id: TheoremId,
    n: usize,
    p: Option<f64>,
    q: Option<f64>,
    lhs: Term,
    rhs: Term,
    cov: Term,
    integrals: Vec<NamedIntegral>,
    identity_residual: Option<Estimate>,
}

impl Assembly {
    fn finish(self) -> InequalityReport {
        let rhs_improved = self.rhs.value + self.cov.value;
        let slack = self.lhs.value - rhs_improved;
        let propagated = (self.lhs.error.powi(2) + self.rhs.error.powi(2) + self.cov.error.powi(2)).sqrt();
        let tolerance = TOLERANCE_FACTOR * propagated;
        InequalityReport {
            theorem_id: self.id,
            n: self.n,
            p: self.p,
            q: self.q,
            lhs: self.lhs.value,
            rhs_classical: self.rhs.value,
            cov_term: self.cov.value,
            rhs_improved,
            slack,
            relative_margin: if self.lhs.value != 0.0 { slack / self.lhs.value } else { 0.0 },
            holds: slack >= -tolerance,
            tolerance,
            quadrature_errors: self.integrals.iter().map(|i| i.error).collect(),
            integrals: self.integrals,
            identity_residual: self.identity_residual,
        }
    }
}

/// Pointwise data at one Euclidean node.
struct PointData {
    split: SplitTerms,
    /// `(Δu)²` for second-order checks.
    lap_sq: f64,
}

impl PointData {
    fn amp(&self) -> f64 {
        self.split.amp_sq.sqrt()
    }
}

/// Which array of functions enters the integrands.
#[derive(Clone, Copy)]
enum Source<'a> {
    /// The field's components.
    Field(&'a FieldSpec),
    /// The gradient `∇u` of a real field, with the Hessian rows as gradients.
    Gradient(&'a FieldSpec),
}

impl Source<'_> {
    fn field(&self) -> &FieldSpec {
        match self {
            Source::Field(f) | Source::Gradient(f) => f,
        }
    }

    fn amplitude(&self, x: &[f64]) -> Result<f64> {
        Ok(match self {
            Source::Field(f) => f.values(x)?.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Source::Gradient(f) => {
                let j = f.eval::<Dual1>(x)?;
                j[0].grad().iter().map(|v| v * v).sum::<f64>().sqrt()
            }
        })
    }

    fn point(&self, x: &[f64], eps: f64) -> Result<PointData> {
        let dim = x.len();
        match self {
            Source::Field(f) => {
                let (values, grads) = flatten(&f.eval::<Dual1>(x)?);
                Ok(PointData { split: split_terms(&values, &grads, dim, eps), lap_sq: 0.0 })
            }
            Source::Gradient(f) => {
                let u = f.eval::<Dual2>(x)?[0];
                let values = u.grad().to_vec();
                let mut grads = Vec::with_capacity(dim * dim);
                for i in 0..dim {
                    grads.extend((0..dim).map(|k| u.hess(i, k)));
                }
                let lap = u.laplacian();
                Ok(PointData { split: split_terms(&values, &grads, dim, eps), lap_sq: lap * lap })
            }
        }
    }
}

type Integrand<'a> = Box<dyn Fn(&PointData) -> f64 + Sync + 'a>;

struct Weighted<'a> {
    name: &'static str,
    /// Weight `|x|^{-s}` folded into the grid.
    s: f64,
    g: Integrand<'a>,
}

fn weighted<'a>(name: &'static str, s: f64, g: impl Fn(&PointData) -> f64 + Sync + 'a) -> Weighted<'a> {
    Weighted { name, s, g: Box::new(g) }
}

/// Integrates each `g_i(x) |x|^{-s_i}` over `R^n`; integrals sharing a weight
/// share a grid.
fn integrate_all(src: Source<'_>, n: usize, budget: &Budget, list: &[Weighted<'_>]) -> Result<Vec<IntegralEstimate>> {
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, w) in list.iter().enumerate() {
        match groups.iter_mut().find(|(s, _)| *s == w.s) {
            Some((_, idx)) => idx.push(i),
            None => groups.push((w.s, vec![i])),
        }
    }
    refine(budget, |b| {
        let mut out = vec![Measured::default(); list.len()];
        for (s, idx) in &groups {
            let grid = QuadratureGrid::euclidean(n, *s, b.radial_nodes, b.angular_nodes)?;
            let eps = RELATIVE_EPS_AMP * grid.max_over(|x| src.amplitude(x))?;
            let sums = grid.integrate(idx.len(), |x, o| {
                let pd = src.point(x, eps)?;
                for (slot, &i) in o.iter_mut().zip(idx) {
                    *slot = (list[i].g)(&pd);
                }
                Ok(())
            })?;
            for (m, &i) in sums.into_iter().zip(idx) {
                out[i] = m;
            }
        }
        Ok(out)
    })
}

fn named(list: &[Weighted<'_>], est: &[IntegralEstimate]) -> Vec<NamedIntegral> {
    list.iter()
        .zip(est)
        .map(|(w, e)| NamedIntegral { name: w.name.to_owned(), value: e.value, error: e.error_estimate })
        .collect()
}

fn euclidean_dim(f: &FieldSpec, n: usize) -> Result<()> {
    match f.domain() {
        Domain::Euclidean(d) if d == n => Ok(()),
        Domain::Euclidean(d) => Err(Error::DimensionMismatch { expected: n, got: d }),
        Domain::SphereAmbient(_) => Err(Error::InvalidField("expected a Euclidean field".into())),
    }
}

/// Shared assembly for the `(n, p, q)` family, including HPW at `p = 2,
/// q = 0`: `∫G · ∫|f|^{2p-2}|x|^{2-2q} ≥ ((n-q)/p)² (∫|f|^p|x|^{-q})² +
/// (∫|f|^{p-1}(|f||Φ'_f|)|x|^{1-q})²`, where `G` is `|∇f|²` or, for second
/// order checks, `|Δu|²`.
fn ckn_family(id: TheoremId, src: Source<'_>, n: usize, p: f64, q: f64, budget: &Budget) -> Result<InequalityReport> {
    euclidean_dim(src.field(), n)?;
    let second = matches!(src, Source::Gradient(_));
    let mut list = vec![
        if second {
            weighted("laplacian_sq", 0.0, |d: &PointData| d.lap_sq)
        } else {
            weighted("grad_sq", 0.0, |d: &PointData| d.split.grad_sq)
        },
        weighted("weighted_power_2p_minus_2", 2.0 * q - 2.0, move |d: &PointData| d.amp().powf(2.0 * p - 2.0)),
        weighted("weighted_power_p", q, move |d: &PointData| d.amp().powf(p)),
        weighted("cov", q - 1.0, move |d: &PointData| d.amp().powf(p - 1.0) * d.split.amp_times_phase),
    ];
    if second {
        list.push(weighted("hessian_minus_laplacian", 0.0, |d: &PointData| d.split.grad_sq - d.lap_sq));
    }
    let est = integrate_all(src, n, budget, &list)?;
    let (i1, i2, i3, i4) = (&est[0], &est[1], &est[2], &est[3]);
    let c = ((n as f64 - q) / p).powi(2);
    let lhs = Term {
        value: i1.value * i2.value,
        error: i2.value.abs() * i1.error_estimate + i1.value.abs() * i2.error_estimate,
    };
    let rhs = Term { value: c * i3.value * i3.value, error: 2.0 * c * i3.value.abs() * i3.error_estimate };
    let cov = Term { value: i4.value * i4.value, error: 2.0 * i4.value.abs() * i4.error_estimate };
    let identity_residual = second.then(|| Estimate { value: est[4].value.abs(), error: est[4].error_estimate });
    Ok(Assembly {
        id,
        n,
        p: Some(p),
        q: Some(q),
        lhs,
        rhs,
        cov,
        integrals: named(&list, &est),
        identity_residual,
    }
    .finish())
}

/// Improved CKN for complex `f = u + iv` (real fields count as `v = 0`).
pub fn check_ckn_complex(params: &CknParams, f: &FieldSpec, budget: &Budget) -> Result<InequalityReport> {
    if !matches!(f.codomain(), Codomain::Complex | Codomain::Real) {
        return Err(Error::Codomain("ckn_complex takes a complex (or real) field".into()));
    }
    ckn_family(TheoremId::CknComplex, Source::Field(f), params.n, params.p, params.q, budget)
}

/// Improved CKN for real vector fields `f = (f_1, …, f_m)`.
pub fn check_ckn_vector(params: &CknParams, f: &FieldSpec, budget: &Budget) -> Result<InequalityReport> {
    if !matches!(f.codomain(), Codomain::Vector(_)) {
        return Err(Error::Codomain("ckn_vector takes a vector field".into()));
    }
    ckn_family(TheoremId::CknVector, Source::Field(f), params.n, params.p, params.q, budget)
}

/// Improved Heisenberg–Pauli–Weyl inequality (`p = 2`, `q = 0`).
pub fn check_hpw(n: usize, f: &FieldSpec, budget: &Budget) -> Result<InequalityReport> {
    if n == 0 {
        return Err(Error::Constraint("n >= 1".into()));
    }
    ckn_family(TheoremId::Hpw, Source::Field(f), n, 2.0, 0.0, budget)
}

/// The CKN inequality applied to `f = ∇u`, with `∫|Δu|²` on the left.
pub fn check_second_order(u: &FieldSpec, params: &CknParams, budget: &Budget) -> Result<InequalityReport> {
    if u.codomain() != Codomain::Real {
        return Err(Error::Codomain("second_order takes a real scalar field u".into()));
    }
    ckn_family(TheoremId::SecondOrder, Source::Gradient(u), params.n, params.p, params.q, budget)
}

/// `(∫|x|^{αp}|∇f|^p)(∫|x|^β|f|^{p(r-1)/(p-1)})^{p-1} ≥
/// ((n+γr)/r)^p (∫|x|^{γr}|f|^r)^p + (∫|x|^{rγ+1}|Φ'_f||f|^r)^p`.
pub fn check_ckn_general(params: &GeneralCknParams, f: &FieldSpec, budget: &Budget) -> Result<InequalityReport> {
    let GeneralCknParams { n, p, r, alpha, beta, gamma } = *params;
    euclidean_dim(f, n)?;
    let list = [
        weighted("grad_power", -alpha * p, move |d: &PointData| d.split.grad_sq.powf(0.5 * p)),
        weighted("weighted_power_b", -beta, move |d: &PointData| d.amp().powf(p * (r - 1.0) / (p - 1.0))),
        weighted("weighted_power_r", -gamma * r, move |d: &PointData| d.amp().powf(r)),
        weighted("cov", -(r * gamma + 1.0), move |d: &PointData| d.amp().powf(r - 1.0) * d.split.amp_times_phase),
    ];
    let est = integrate_all(Source::Field(f), n, budget, &list)?;
    let (a, b, c, d) = (&est[0], &est[1], &est[2], &est[3]);
    let k = ((n as f64 + gamma * r) / r).powf(p);
    let lhs = Term {
        value: a.value * b.value.powf(p - 1.0),
        error: b.value.powf(p - 1.0) * a.error_estimate
            + (p - 1.0) * a.value.abs() * b.value.powf(p - 2.0) * b.error_estimate,
    };
    let rhs = Term { value: k * c.value.powf(p), error: p * k * c.value.powf(p - 1.0) * c.error_estimate };
    let cov = Term { value: d.value.powf(p), error: p * d.value.powf(p - 1.0) * d.error_estimate };
    Ok(Assembly {
        id: TheoremId::CknGeneral,
        n,
        p: Some(p),
        q: None,
        lhs,
        rhs,
        cov,
        integrals: named(&list, &est),
        identity_residual: None,
    }
    .finish())
}

fn stat(name: &str, value: f64, error: f64) -> NamedIntegral {
    NamedIntegral { name: name.to_owned(), value, error }
}

/// `Vx · X ≥ (n²/4)|τ|^{2e} + C²` from precomputed stats.
fn sphere_report(
    id: TheoremId,
    s: &SphereStats,
    x: (&str, f64, f64),
    tau_power: i32,
    c: (&str, f64, f64),
) -> InequalityReport {
    let nf = s.n as f64;
    let tau = s.tau_norm_sq().sqrt();
    let dtau = s.tau_norm_error();
    let k = nf * nf / 4.0;
    let lhs = Term { value: s.var_x * x.1, error: x.1.abs() * s.var_x_error + s.var_x.abs() * x.2 };
    let rhs = Term {
        value: k * tau.powi(tau_power),
        error: k * tau_power as f64 * tau.powi(tau_power - 1) * dtau,
    };
    let cov = Term { value: c.1 * c.1, error: 2.0 * c.1.abs() * c.2 };
    let mut integrals = vec![stat("var_x", s.var_x, s.var_x_error), stat(x.0, x.1, x.2), stat(c.0, c.1, c.2)];
    for (k, (t, e)) in s.tau.iter().zip(&s.tau_error).enumerate() {
        integrals.push(stat(&format!("tau_{k}"), *t, *e));
    }
    Assembly { id, n: s.n, p: None, q: None, lhs, rhs, cov, integrals, identity_residual: None }.finish()
}

fn complex_stats(f: &FieldSpec, n: usize, budget: &Budget) -> Result<SphereStats> {
    if matches!(f.codomain(), Codomain::Vector(_)) {
        return Err(Error::Codomain("complex sphere theorems take a complex (or real) field".into()));
    }
    compute_stats(f, n, budget)
}

/// `V_x V_∇ ≥ (n²/4)|τ|⁴ + COV²`.
pub fn check_sphere_complex(f: &FieldSpec, n: usize, budget: &Budget) -> Result<InequalityReport> {
    let s = complex_stats(f, n, budget)?;
    Ok(sphere_report(
        TheoremId::SphereComplex,
        &s,
        ("var_freq", s.var_freq, s.var_freq_error),
        4,
        ("cov", s.cov, s.cov_error),
    ))
}

/// `V_x V*_∇ ≥ (n²/4)|τ|⁴ + COV*²`.
pub fn check_sphere_complex_star(f: &FieldSpec, n: usize, budget: &Budget) -> Result<InequalityReport> {
    let s = complex_stats(f, n, budget)?;
    let star = s.var_freq_star.zip(s.var_freq_star_error).expect("complex stats carry V*");
    let cov_star = s.cov_star.zip(s.cov_star_error).expect("complex stats carry COV*");
    Ok(sphere_report(
        TheoremId::SphereComplexStar,
        &s,
        ("var_freq_star", star.0, star.1),
        4,
        ("cov_star", cov_star.0, cov_star.1),
    ))
}

/// `V_x ∫|∇_{S^n} f|² ≥ (n²/4)|τ|² + COV²`.
pub fn check_sphere_corollary(f: &FieldSpec, n: usize, budget: &Budget) -> Result<InequalityReport> {
    let s = complex_stats(f, n, budget)?;
    Ok(sphere_report(
        TheoremId::SphereCorollary,
        &s,
        ("grad_energy", s.grad_energy, s.grad_energy_error),
        2,
        ("cov", s.cov, s.cov_error),
    ))
}

/// Both forms of the vector sphere theorem. Each report also carries the
/// residual of `|a(f)|² = (n²/4)|τ|²`, the identity that makes them
/// equivalent.
pub fn check_sphere_vector(
    f: &FieldSpec,
    n: usize,
    budget: &Budget,
) -> Result<(InequalityReport, InequalityReport)> {
    if !matches!(f.codomain(), Codomain::Vector(_)) {
        return Err(Error::Codomain("sphere_vector takes a vector field".into()));
    }
    let s = compute_stats(f, n, budget)?;
    let nf = n as f64;
    let a_norm = s.a_norm_sq().sqrt();
    let a_err = s.a_error.iter().map(|e| e * e).sum::<f64>().sqrt();
    let tau = s.tau_norm_sq().sqrt();
    let identity = Estimate {
        value: (s.a_norm_sq() - nf * nf / 4.0 * tau * tau).abs(),
        error: 2.0 * a_norm * a_err + nf * nf / 2.0 * tau * s.tau_norm_error(),
    };
    let mut variance = sphere_report(
        TheoremId::SphereVector,
        &s,
        ("var_freq", s.var_freq, s.var_freq_error),
        4,
        ("cov", s.cov, s.cov_error),
    );
    let mut energy = sphere_report(
        TheoremId::SphereVectorEnergy,
        &s,
        ("grad_energy", s.grad_energy, s.grad_energy_error),
        2,
        ("cov", s.cov, s.cov_error),
    );
    variance.identity_residual = Some(identity);
    energy.identity_residual = Some(identity);
    Ok((variance, energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ckn_window_names_the_violated_constraint() {
        let msg = |r: Result<CknParams>| r.unwrap_err().to_string();
        assert!(msg(CknParams::new(3, 3.0, 2.5)).contains("0 < q < 2"));
        assert!(msg(CknParams::new(3, 2.0, 1.0)).contains("2 < p"));
        assert!(msg(CknParams::new(3, 3.0, 1.5)).contains("n < 2(p-q)/(p-2)"));
        assert!(CknParams::new(3, 3.0, 1.0).is_ok());
        assert!(CknParams::new(3, 2.5, 1.5).is_ok());
    }

    #[test]
    fn general_window() {
        let g = GeneralCknParams::with_derived_gamma(3, 3.0, 4.0, 1.0, 1.0).unwrap();
        assert!((g.gamma - 1.0 / 6.0).abs() < 1e-15);
        let bad = GeneralCknParams::with_derived_gamma(3, 3.0, 4.0, -5.0, 1.0).unwrap_err();
        assert!(bad.to_string().contains("1/p + alpha/n"));
        let bad = GeneralCknParams::new(3, 3.0, 4.0, 1.0, 1.0, 0.5).unwrap_err();
        assert!(bad.to_string().contains("gamma = (alpha-1)/r"));
        let bad = GeneralCknParams::new(3, 3.0, 4.0, 1.0, 1.0, -1.0).unwrap_err();
        assert!(bad.to_string().contains("1/r + gamma/n"));
        let bad = GeneralCknParams::with_derived_gamma(3, 3.0, 4.0, 1.0, -1.0).unwrap_err();
        assert!(bad.to_string().contains("beta/n"));
    }

    #[test]
    fn gaussian_hpw_is_an_equality() {
        let f = FieldSpec::gaussian(3, 0.5).unwrap();
        let r = check_hpw(3, &f, &Budget::default()).unwrap();
        let exact = 9.0 / 4.0 * PI.powi(3);
        assert!((r.lhs - exact).abs() / exact < 1e-6);
        assert!(r.slack.abs() / r.lhs < 1e-6);
        assert!(r.holds);
        assert_eq!(r.cov_term, 0.0);
    }

    #[test]
    fn theorem_ids_round_trip() {
        for t in TheoremId::ALL {
            assert_eq!(t.as_str().parse::<TheoremId>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{t}\""));
        }
    }

    #[test]
    fn codomains_are_checked() {
        let p = CknParams::new(3, 3.0, 1.0).unwrap();
        let g = FieldSpec::gaussian(3, 0.5).unwrap();
        assert!(check_ckn_vector(&p, &g, &Budget::new(8, 4)).is_err());
        assert!(check_hpw(2, &g, &Budget::new(8, 4)).is_err());
    }
}
