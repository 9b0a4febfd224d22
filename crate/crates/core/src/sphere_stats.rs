//! Spherical means, variances and covariances of unit-energy fields on `S^n`.
//!
//! Fields are renormalized to unit energy internally. Each grid level makes
//! two passes: the first integrates the energy, the spatial mean `τ_f` and the
//! frequency mean `a(f)`; the second integrates the centered quantities that
//! depend on them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Codomain, FieldSpec};
use crate::phase::{flatten, split_terms, RELATIVE_EPS_AMP};
use crate::quadrature::{refine, Budget, IntegralEstimate, Measured, QuadratureGrid};
use crate::sphere_ops::{sphere_dim, SphereField};

/// A derived value with its error estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl From<&IntegralEstimate> for Estimate {
    fn from(e: &IntegralEstimate) -> Self {
        Estimate { value: e.value, error: e.error_estimate }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereStats {
    pub n: usize,
    pub codomain: Codomain,
    /// `∫|f|² dσ` after renormalization.
    pub energy: f64,
    /// `∫|f|² dσ` of the field as given.
    pub raw_energy: f64,
    /// Factor `1/sqrt(raw_energy)` applied to the field.
    pub normalization_factor: f64,
    pub tau: Vec<f64>,
    pub var_x: f64,
    /// `a(f)`; real for vector fields.
    pub a: Vec<Complex64>,
    pub a_star: Option<Vec<f64>>,
    pub var_freq: f64,
    pub var_freq_star: Option<f64>,
    pub cov: f64,
    pub cov_star: Option<f64>,
    /// `∫|∇_{S^n} f|² dσ`.
    pub grad_energy: f64,
    /// `Re a_k(f) - (n/2) τ_k`.
    pub mean_identity: Vec<f64>,
    pub tau_error: Vec<f64>,
    pub var_x_error: f64,
    pub a_error: Vec<f64>,
    pub a_star_error: Option<Vec<f64>>,
    pub var_freq_error: f64,
    pub var_freq_star_error: Option<f64>,
    pub cov_error: f64,
    pub cov_star_error: Option<f64>,
    pub grad_energy_error: f64,
    pub mean_identity_error: Vec<f64>,
}

impl SphereStats {
    pub fn tau_norm_sq(&self) -> f64 {
        self.tau.iter().map(|t| t * t).sum()
    }

    /// Error of `|τ|` from the component errors.
    pub fn tau_norm_error(&self) -> f64 {
        self.tau_error.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    /// `|a(f)|²` (Hermitian).
    pub fn a_norm_sq(&self) -> f64 {
        self.a.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Residuals of the variance decompositions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResiduals {
    /// `|V - (∫|∇|f| - a|f||² + ∫|f|²|Φ'_f|²)|`
    pub res1: Estimate,
    /// `|V* - (∫|∇|f||² + ∫|Φ'_f - a*|²|f|²)|`, complex fields only.
    pub res2: Option<Estimate>,
}

struct Layout {
    dim: usize,
}

impl Layout {
    const SCALARS: usize = 11;
    fn len(&self) -> usize {
        Self::SCALARS + 4 * self.dim
    }
    fn tau(&self, k: usize) -> usize {
        Self::SCALARS + k
    }
    fn a_re(&self, k: usize) -> usize {
        Self::SCALARS + self.dim + k
    }
    fn a_im(&self, k: usize) -> usize {
        Self::SCALARS + 2 * self.dim + k
    }
    fn identity(&self, k: usize) -> usize {
        Self::SCALARS + 3 * self.dim + k
    }
}

const ENERGY: usize = 0;
const VAR_X: usize = 1;
const VAR_FREQ: usize = 2;
const VAR_FREQ_STAR: usize = 3;
const COV: usize = 4;
const COV_STAR: usize = 5;
const GRAD_ENERGY: usize = 6;
const RES1: usize = 7;
const RES2: usize = 8;
const RAW_ENERGY: usize = 9;
const NORMALIZED_ENERGY: usize = 10;

/// Component values and gradients; real fields become `(u, 0)`.
fn components(sf: &SphereField, x: &[f64], complex: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut f, mut g) = flatten(&sf.jets(x)?);
    if complex && f.len() == 1 {
        f.push(0.0);
        g.extend(std::iter::repeat_n(0.0, x.len()));
    }
    Ok((f, g))
}

fn level(sf: &SphereField, budget: &Budget) -> Result<Vec<Measured>> {
    let n = sf.n();
    let dim = n + 1;
    let complex = !matches!(sf.codomain(), Codomain::Vector(_));
    let grid = QuadratureGrid::sphere(n, budget.angular_nodes)?;
    let lay = Layout { dim };
    let max_amp = grid.max_over(|x| {
        let j = sf.jets(x)?;
        Ok(j.iter().map(|c| c.v * c.v).sum::<f64>().sqrt())
    })?;
    let eps = RELATIVE_EPS_AMP * max_amp;

    // Pass 1: energy, τ, a.
    let first = grid.integrate(1 + 3 * dim, |x, out| {
        let (f, g) = components(sf, x, complex)?;
        let amp_sq: f64 = f.iter().map(|v| v * v).sum();
        out[0] = amp_sq;
        for k in 0..dim {
            out[1 + k] = x[k] * amp_sq;
            out[1 + dim + k] = f.iter().enumerate().map(|(c, fc)| fc * g[c * dim + k]).sum();
            out[1 + 2 * dim + k] = if complex { f[0] * g[dim + k] - f[1] * g[k] } else { 0.0 };
        }
        Ok(())
    })?;
    let e = first[0].value;
    if !(e.is_finite() && e > 0.0) {
        return Err(Error::Constraint(format!("field energy {e} must be finite and positive")));
    }
    let norm = |m: &Measured| Measured::new(m.value / e, m.scale / e);
    let tau: Vec<f64> = (0..dim).map(|k| first[1 + k].value / e).collect();
    let ar: Vec<f64> = (0..dim).map(|k| first[1 + dim + k].value / e).collect();
    let ai: Vec<f64> = (0..dim).map(|k| first[1 + 2 * dim + k].value / e).collect();
    let a_sq: f64 = ar.iter().chain(&ai).map(|v| v * v).sum();
    let ai_sq: f64 = ai.iter().map(|v| v * v).sum();

    // Pass 2: centered quantities and decomposition parts.
    const P2: usize = 9;
    let second = grid.integrate(P2, |x, out| {
        let (f, g) = components(sf, x, complex)?;
        let t = split_terms(&f, &g, dim, eps);
        let amp = t.amp_sq.sqrt();
        let dist_sq: f64 = (0..dim).map(|k| (x[k] - tau[k]).powi(2)).sum();
        let dist = dist_sq.sqrt();
        let mut var_freq = 0.0;
        let mut var_star = 0.0;
        let mut w_sq = 0.0;
        let mut fg_dot_ar = 0.0;
        let mut cross_dot_ai = 0.0;
        for k in 0..dim {
            let fg: f64 = f.iter().enumerate().map(|(c, fc)| fc * g[c * dim + k]).sum();
            fg_dot_ar += ar[k] * fg;
            if complex {
                let (u, v) = (f[0], f[1]);
                let (gu, gv) = (g[k], g[dim + k]);
                let re = gu - ar[k] * u + ai[k] * v;
                let im = gv - ar[k] * v - ai[k] * u;
                var_freq += re * re + im * im;
                let (sr, si) = (gv - ai[k] * u, -gu - ai[k] * v);
                var_star += sr * sr + si * si;
                let cross = u * gv - v * gu;
                cross_dot_ai += ai[k] * cross;
                let w = cross - ai[k] * t.amp_sq;
                w_sq += w * w;
            } else {
                for (c, fc) in f.iter().enumerate() {
                    let d = g[c * dim + k] - ar[k] * fc;
                    var_freq += d * d;
                }
            }
        }
        let apt_sq = t.amp_times_phase * t.amp_times_phase;
        out[0] = dist_sq * t.amp_sq;
        out[1] = var_freq;
        out[2] = var_star;
        out[3] = dist * amp * t.amp_times_phase;
        out[4] = dist * w_sq.sqrt();
        out[5] = t.grad_sq;
        // part1 + part2 of the first decomposition
        out[6] = t.amp_grad_sq - 2.0 * fg_dot_ar + a_sq * t.amp_sq + apt_sq;
        // part1 + part2 of the starred decomposition
        out[7] = t.amp_grad_sq + apt_sq - 2.0 * cross_dot_ai + ai_sq * t.amp_sq;
        out[8] = t.amp_sq;
        Ok(())
    })?;

    let mut res = vec![Measured::default(); lay.len()];
    res[RAW_ENERGY] = first[0];
    res[ENERGY] = norm(&first[0]);
    res[NORMALIZED_ENERGY] = norm(&second[8]);
    res[VAR_X] = norm(&second[0]);
    res[VAR_FREQ] = norm(&second[1]);
    res[VAR_FREQ_STAR] = norm(&second[2]);
    res[COV] = norm(&second[3]);
    res[COV_STAR] = norm(&second[4]);
    res[GRAD_ENERGY] = norm(&second[5]);
    res[RES1] = Measured::new(
        (second[1].value - second[6].value) / e,
        (second[1].scale + second[6].scale) / e,
    );
    res[RES2] = Measured::new(
        (second[2].value - second[7].value) / e,
        (second[2].scale + second[7].scale) / e,
    );
    let half_n = 0.5 * n as f64;
    for k in 0..dim {
        res[lay.tau(k)] = norm(&first[1 + k]);
        res[lay.a_re(k)] = norm(&first[1 + dim + k]);
        res[lay.a_im(k)] = norm(&first[1 + 2 * dim + k]);
        let d = first[1 + dim + k].value - half_n * first[1 + k].value;
        let s = first[1 + dim + k].scale + half_n * first[1 + k].scale;
        res[lay.identity(k)] = Measured::new(d / e, s / e);
    }
    Ok(res)
}

struct Analysis {
    n: usize,
    complex: bool,
    est: Vec<IntegralEstimate>,
}

fn analyze(f: &FieldSpec, budget: &Budget) -> Result<Analysis> {
    let n = sphere_dim(f.domain())?;
    let sf = SphereField::new(f)?;
    let complex = !matches!(f.codomain(), Codomain::Vector(_));
    let est = refine(budget, |b| level(&sf, b))?;
    Ok(Analysis { n, complex, est })
}

/// All spherical statistics of `f` (renormalized to unit energy) on `S^n`.
pub fn compute_stats(f: &FieldSpec, n: usize, budget: &Budget) -> Result<SphereStats> {
    check_n(f, n)?;
    let an = analyze(f, budget)?;
    Ok(assemble(&an, f.codomain()))
}

fn check_n(f: &FieldSpec, n: usize) -> Result<()> {
    let got = sphere_dim(f.domain())?;
    if got != n {
        return Err(Error::DimensionMismatch { expected: n + 1, got: got + 1 });
    }
    Ok(())
}

fn assemble(an: &Analysis, codomain: Codomain) -> SphereStats {
    let dim = an.n + 1;
    let lay = Layout { dim };
    let v = |i: usize| an.est[i].value;
    let er = |i: usize| an.est[i].error_estimate;
    let complex_only = |x: f64| an.complex.then_some(x);
    let raw_energy = v(RAW_ENERGY);
    SphereStats {
        n: an.n,
        codomain,
        energy: v(NORMALIZED_ENERGY),
        raw_energy,
        normalization_factor: 1.0 / raw_energy.sqrt(),
        tau: (0..dim).map(|k| v(lay.tau(k))).collect(),
        var_x: v(VAR_X),
        a: (0..dim).map(|k| Complex64::new(v(lay.a_re(k)), v(lay.a_im(k)))).collect(),
        a_star: an.complex.then(|| (0..dim).map(|k| v(lay.a_im(k))).collect()),
        var_freq: v(VAR_FREQ),
        var_freq_star: complex_only(v(VAR_FREQ_STAR)),
        cov: v(COV),
        cov_star: complex_only(v(COV_STAR)),
        grad_energy: v(GRAD_ENERGY),
        mean_identity: (0..dim).map(|k| v(lay.identity(k))).collect(),
        tau_error: (0..dim).map(|k| er(lay.tau(k))).collect(),
        var_x_error: er(VAR_X),
        a_error: (0..dim).map(|k| er(lay.a_re(k)).hypot(er(lay.a_im(k)))).collect(),
        a_star_error: an.complex.then(|| (0..dim).map(|k| er(lay.a_im(k))).collect()),
        var_freq_error: er(VAR_FREQ),
        var_freq_star_error: complex_only(er(VAR_FREQ_STAR)),
        cov_error: er(COV),
        cov_star_error: complex_only(er(COV_STAR)),
        grad_energy_error: er(GRAD_ENERGY),
        mean_identity_error: (0..dim).map(|k| er(lay.identity(k))).collect(),
    }
}

/// Residuals of the variance decompositions (`res2` for complex fields only).
pub fn variance_decomposition_residuals(
    f: &FieldSpec,
    n: usize,
    budget: &Budget,
) -> Result<DecompositionResiduals> {
    check_n(f, n)?;
    let an = analyze(f, budget)?;
    let abs = |i: usize| Estimate { value: an.est[i].value.abs(), error: an.est[i].error_estimate };
    Ok(DecompositionResiduals { res1: abs(RES1), res2: an.complex.then(|| abs(RES2)) })
}
