//! The spherical gradient `∇_{S^n} = (Γ_0, …, Γ_n)ᵀ`, realised as the ambient
//! gradient of the degree-0 homogeneous extension `F(x) = f(x/|x|)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{restrict_to_sphere, Codomain, Domain, FieldSpec, Point};
use crate::jet::Dual1;
use crate::quadrature::{refine, Budget, IntegralEstimate, QuadratureGrid};

/// Accepted deviation of `|x|` from 1 for points on the sphere.
pub const SPHERE_TOLERANCE: f64 = 1e-12;

/// A tangent vector to `S^n` at `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: Vec<f64>,
    pub components: Vec<f64>,
}

impl TangentVector {
    /// `base · components`, zero up to rounding.
    pub fn normal_part(&self) -> f64 {
        self.base.iter().zip(&self.components).map(|(a, b)| a * b).sum()
    }
}

/// Checks `| |x| - 1 | ≤ SPHERE_TOLERANCE` and returns `x / |x|`.
pub fn unit_point(x: &[f64]) -> Result<Vec<f64>> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let deviation = (norm - 1.0).abs();
    if !(deviation <= SPHERE_TOLERANCE) {
        return Err(Error::OffSphere { point: x.to_vec(), deviation });
    }
    Ok(x.iter().map(|v| v / norm).collect())
}

/// Evaluates sphere fields through their homogeneous extension.
#[derive(Clone, Debug)]
pub struct SphereField {
    ext: FieldSpec,
    n: usize,
}

impl SphereField {
    pub fn new(field: &FieldSpec) -> Result<Self> {
        let n = field.domain().sphere_dim().ok_or_else(|| {
            Error::InvalidField("spherical operations need a sphere-ambient field".into())
        })?;
        Ok(SphereField { ext: restrict_to_sphere(field)?, n })
    }

    /// Sphere dimension `n` (ambient dimension `n + 1`).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn codomain(&self) -> Codomain {
        self.ext.codomain()
    }

    /// Component values and spherical gradients at a point of `S^n`.
    pub fn jets(&self, x: &[f64]) -> Result<Vec<Dual1>> {
        if x.len() != self.n + 1 {
            return Err(Error::DimensionMismatch { expected: self.n + 1, got: x.len() });
        }
        self.ext.eval::<Dual1>(&unit_point(x)?)
    }
}

/// `∇_{S^n} f(x)`, one tangent vector per real component.
pub fn spherical_gradient(field: &FieldSpec, x: &Point) -> Result<Vec<TangentVector>> {
    let sf = SphereField::new(field)?;
    let base = unit_point(x.coords())?;
    Ok(sf
        .jets(x.coords())?
        .iter()
        .map(|c| TangentVector { base: base.clone(), components: c.grad().to_vec() })
        .collect())
}

/// Closed form `Γ_j(x_k) = δ_jk - x_j x_k`.
pub fn gamma_coordinate(j: usize, k: usize, x: &Point) -> Result<f64> {
    let c = x.coords();
    let max = c.len() - 1;
    for index in [j, k] {
        if index > max {
            return Err(Error::IndexOutOfRange { index, max });
        }
    }
    let delta = if j == k { 1.0 } else { 0.0 };
    Ok(delta - c[j] * c[k])
}

fn real_sphere_field(f: &FieldSpec) -> Result<SphereField> {
    if f.codomain() != Codomain::Real {
        return Err(Error::Codomain("integration by parts takes real scalar fields".into()));
    }
    SphereField::new(f)
}

/// `|∫(Γ_j f) g dσ - n∫x_j f g dσ + ∫f (Γ_j g) dσ|`, computed as a single
/// integral so the error estimate refers to the residual itself.
pub fn integration_by_parts_residual(
    f: &FieldSpec,
    g: &FieldSpec,
    j: usize,
    budget: &Budget,
) -> Result<IntegralEstimate> {
    let (sf, sg) = (real_sphere_field(f)?, real_sphere_field(g)?);
    if f.domain() != g.domain() {
        return Err(Error::InvalidField("f and g must share a domain".into()));
    }
    let n = sf.n();
    if j > n {
        return Err(Error::IndexOutOfRange { index: j, max: n });
    }
    let nf = n as f64;
    let mut est = refine(budget, |b| {
        QuadratureGrid::sphere(n, b.angular_nodes)?.integrate(1, |x, out| {
            let (fj, gj) = (sf.jets(x)?[0], sg.jets(x)?[0]);
            out[0] = fj.g[j] * gj.v - nf * x[j] * fj.v * gj.v + fj.v * gj.g[j];
            Ok(())
        })
    })?;
    let mut r = est.remove(0);
    r.value = r.value.abs();
    Ok(r)
}

/// Sphere dimension of a domain, or an error for Euclidean ones.
pub(crate) fn sphere_dim(domain: Domain) -> Result<usize> {
    domain
        .sphere_dim()
        .ok_or_else(|| Error::InvalidField("expected a sphere-ambient field".into()))
}
