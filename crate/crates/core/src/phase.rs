//! Generalized phase derivative of real-vector and complex fields.
//!
//! For `f = (f_1, …, f_m)` with gradients `∂_k f_j`,
//!
//! ```text
//! |Φ'_f|² = Σ_k Σ_{j<l} (f_l ∂_k f_j - f_j ∂_k f_l)² / |f|⁴
//! ```
//!
//! and on the sphere `Γ_k` replaces `∂_k`. Complex fields are the pair
//! `(u, v)`, for which `Φ'_f = (u∇v - v∇u)/|f|²`. The amplitude-split form
//! `|f||Φ'_f| = sqrt(|∇f|² - |∇|f||²)` never divides by a vanishing amplitude
//! and is the one used inside integrals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Codomain, Domain, FieldSpec, Point};
use crate::jet::Dual1;
use crate::sphere_ops::SphereField;

/// Default amplitude threshold for pointwise evaluation.
pub const DEFAULT_EPS_AMP: f64 = 1e-12;

/// Relative amplitude threshold used inside integrals (times the largest
/// amplitude on the grid).
pub const RELATIVE_EPS_AMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Euclidean,
    Sphere,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseData {
    /// `|Φ'_f(x)|`; absent where `|f(x)|` is below the amplitude threshold.
    pub magnitude: Option<f64>,
    /// `|f(x)| |Φ'_f(x)|`.
    pub amp_times_phase: f64,
    /// `Φ'_f(x)` for complex fields.
    pub phase_vector: Option<Vec<f64>>,
}

/// The pointwise pieces of the amplitude-split identity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplitTerms {
    /// `|f|²`
    pub amp_sq: f64,
    /// `|∇f|²` (Frobenius)
    pub grad_sq: f64,
    /// `|∇|f||²`
    pub amp_grad_sq: f64,
    /// `sqrt(max(0, |∇f|² - |∇|f||²))`
    pub amp_times_phase: f64,
}

/// Gradient layout: `grads[c * dim + k] = ∂_k f_c`.
pub fn split_terms(values: &[f64], grads: &[f64], dim: usize, eps_amp: f64) -> SplitTerms {
    let amp_sq: f64 = values.iter().map(|v| v * v).sum();
    let amp = amp_sq.sqrt();
    let mut grad_sq = 0.0;
    let mut amp_grad_sq = 0.0;
    for k in 0..dim {
        let mut gk = 0.0;
        let mut dk = 0.0;
        for (c, &f) in values.iter().enumerate() {
            let g = grads[c * dim + k];
            gk += g * g;
            if amp > eps_amp {
                dk += (f / amp) * g;
            }
        }
        grad_sq += gk;
        amp_grad_sq += dk * dk;
    }
    if !(amp > eps_amp) {
        amp_grad_sq = grad_sq;
    }
    SplitTerms {
        amp_sq,
        grad_sq,
        amp_grad_sq,
        amp_times_phase: (grad_sq - amp_grad_sq).max(0.0).sqrt(),
    }
}

/// `Σ_k Σ_{j<l} (f_l ∂_k f_j - f_j ∂_k f_l)²`, i.e. `|f|⁴ |Φ'_f|²`.
pub fn cross_term_sum(values: &[f64], grads: &[f64], dim: usize) -> f64 {
    let m = values.len();
    let mut sum = 0.0;
    for k in 0..dim {
        for j in 0..m {
            for l in j + 1..m {
                let t = values[l] * grads[j * dim + k] - values[j] * grads[l * dim + k];
                sum += t * t;
            }
        }
    }
    sum
}

/// Flattens component jets into `(values, grads)`.
pub fn flatten(jets: &[Dual1]) -> (Vec<f64>, Vec<f64>) {
    let values = jets.iter().map(|j| j.v).collect();
    let grads = jets.iter().flat_map(|j| j.grad().iter().copied()).collect();
    (values, grads)
}

fn jets_at(f: &FieldSpec, x: &Point, setting: Setting) -> Result<Vec<Dual1>> {
    match (setting, f.domain()) {
        (Setting::Euclidean, Domain::Euclidean(_)) => f.eval::<Dual1>(x.coords()),
        (Setting::Sphere, Domain::SphereAmbient(_)) => SphereField::new(f)?.jets(x.coords()),
        _ => Err(Error::InvalidField(format!(
            "setting {setting:?} does not match domain {:?}",
            f.domain()
        ))),
    }
}

fn complex_phase_vector(values: &[f64], grads: &[f64], dim: usize, amp_sq: f64) -> Vec<f64> {
    let (u, v) = (values[0], values[1]);
    (0..dim).map(|k| (u * grads[dim + k] - v * grads[k]) / amp_sq).collect()
}

/// Direct cross-term form. Refuses points with `|f(x)| ≤ DEFAULT_EPS_AMP`.
pub fn phase_derivative_direct(f: &FieldSpec, x: &Point, setting: Setting) -> Result<PhaseData> {
    let jets = jets_at(f, x, setting)?;
    let dim = x.dim();
    let (values, grads) = flatten(&jets);
    let amp_sq: f64 = values.iter().map(|v| v * v).sum();
    let amp = amp_sq.sqrt();
    if !(amp > DEFAULT_EPS_AMP) {
        return Err(Error::SmallAmplitude { amplitude: amp, threshold: DEFAULT_EPS_AMP });
    }
    let magnitude = (cross_term_sum(&values, &grads, dim) / (amp_sq * amp_sq)).sqrt();
    Ok(PhaseData {
        magnitude: Some(magnitude),
        amp_times_phase: magnitude * amp,
        phase_vector: (f.codomain() == Codomain::Complex)
            .then(|| complex_phase_vector(&values, &grads, dim, amp_sq)),
    })
}

/// Amplitude-split form; defined everywhere.
pub fn amp_phase_split(f: &FieldSpec, x: &Point, setting: Setting) -> Result<PhaseData> {
    let jets = jets_at(f, x, setting)?;
    let dim = x.dim();
    let (values, grads) = flatten(&jets);
    let t = split_terms(&values, &grads, dim, DEFAULT_EPS_AMP);
    let amp = t.amp_sq.sqrt();
    let above = amp > DEFAULT_EPS_AMP;
    Ok(PhaseData {
        magnitude: above.then(|| t.amp_times_phase / amp),
        amp_times_phase: t.amp_times_phase,
        phase_vector: (above && f.codomain() == Codomain::Complex)
            .then(|| complex_phase_vector(&values, &grads, dim, t.amp_sq)),
    })
}
