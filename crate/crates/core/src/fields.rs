//! Parametric test-function families and their derivative jets.
//!
//! A [`FieldSpec`] is a smooth real, complex or vector valued function on
//! either `R^n` or an ambient neighbourhood of `S^n ⊂ R^{n+1}`. Complex fields
//! are carried as the real pair `(u, v)` and vector fields as their `m` real
//! components, so every evaluation returns a flat list of real component jets.
//!
//! Coordinates inside custom expressions follow the usual indexing of each
//! domain: `(coord 1)` … `(coord n)` on `R^n` and `(coord 0)` … `(coord n)` on
//! the sphere ambient space.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Dual1, Dual2, JetScalar, MAX_DIM};

/// Where a field lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// `R^n`, coordinates `x_1..x_n`.
    Euclidean(usize),
    /// `R^{n+1}` around `S^n`, coordinates `x_0..x_n`. Holds the ambient
    /// dimension `n + 1`.
    SphereAmbient(usize),
}

impl Domain {
    /// Number of coordinates.
    pub fn dim(&self) -> usize {
        match *self {
            Domain::Euclidean(n) | Domain::SphereAmbient(n) => n,
        }
    }

    /// Index of the first coordinate in custom expressions.
    fn coord_base(&self) -> usize {
        match self {
            Domain::Euclidean(_) => 1,
            Domain::SphereAmbient(_) => 0,
        }
    }

    /// Dimension of the sphere for sphere-ambient domains.
    pub fn sphere_dim(&self) -> Option<usize> {
        match *self {
            Domain::SphereAmbient(n) => Some(n - 1),
            Domain::Euclidean(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Codomain {
    Real,
    Complex,
    Vector(usize),
}

impl Codomain {
    /// Number of real components carried per point.
    pub fn components(&self) -> usize {
        match *self {
            Codomain::Real => 1,
            Codomain::Complex => 2,
            Codomain::Vector(m) => m,
        }
    }
}

/// Closed-form expression tree over coordinates: `add`, `mul`, `pow`, `exp`,
/// `sin`, `cos`, numeric constants and `(coord k)`. `(param i)` is accepted in
/// search templates and must be bound before evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Param(usize),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Box<Expr>, f64),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    fn eval<S: JetScalar>(&self, x: &[S], base: usize) -> Result<S> {
        let dim = x.first().map_or(0, JetScalar::dim);
        Ok(match self {
            Expr::Const(c) => S::constant(*c, dim),
            Expr::Coord(k) => x[*k - base],
            Expr::Param(i) => {
                return Err(Error::InvalidField(format!("unbound parameter (param {i})")))
            }
            Expr::Add(terms) => {
                let mut acc = S::constant(0.0, dim);
                for t in terms {
                    acc = acc + t.eval(x, base)?;
                }
                acc
            }
            Expr::Mul(terms) => {
                let mut acc = S::constant(1.0, dim);
                for t in terms {
                    acc = acc * t.eval(x, base)?;
                }
                acc
            }
            Expr::Pow(b, c) => b.eval(x, base)?.powf(*c),
            Expr::Exp(a) => a.eval(x, base)?.exp(),
            Expr::Sin(a) => a.eval(x, base)?.sin(),
            Expr::Cos(a) => a.eval(x, base)?.cos(),
        })
    }

    fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().for_each(|t| t.visit(f)),
            Expr::Pow(a, _) | Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) => a.visit(f),
            Expr::Const(_) | Expr::Coord(_) | Expr::Param(_) => {}
        }
    }

    /// Number of distinct parameter slots (`max index + 1`).
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        self.visit(&mut |e| {
            if let Expr::Param(i) = e {
                count = count.max(i + 1);
            }
        });
        count
    }

    /// Replaces every `(param i)` by `params[i]`.
    pub fn bind(&self, params: &[f64]) -> Result<Expr> {
        let rec = |e: &Expr| e.bind(params);
        Ok(match self {
            Expr::Param(i) => Expr::Const(*params.get(*i).ok_or_else(|| {
                Error::InvalidField(format!("parameter {i} not supplied"))
            })?),
            Expr::Const(_) | Expr::Coord(_) => self.clone(),
            Expr::Add(ts) => Expr::Add(ts.iter().map(rec).collect::<Result<_>>()?),
            Expr::Mul(ts) => Expr::Mul(ts.iter().map(rec).collect::<Result<_>>()?),
            Expr::Pow(a, c) => Expr::Pow(Box::new(rec(a)?), *c),
            Expr::Exp(a) => Expr::Exp(Box::new(rec(a)?)),
            Expr::Sin(a) => Expr::Sin(Box::new(rec(a)?)),
            Expr::Cos(a) => Expr::Cos(Box::new(rec(a)?)),
        })
    }
}

fn tokenize(s: &str) -> Vec<String> {
    s.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_owned).collect()
}

fn parse_tokens(tokens: &[String], pos: &mut usize) -> Result<Expr> {
    let tok = tokens.get(*pos).ok_or_else(|| Error::Parse("unexpected end of input".into()))?;
    *pos += 1;
    if tok == ")" {
        return Err(Error::Parse("unexpected `)`".into()));
    }
    if tok != "(" {
        return tok
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Expr::Const)
            .ok_or_else(|| Error::Parse(format!("expected a number or `(`, found `{tok}`")));
    }
    let head = tokens.get(*pos).ok_or_else(|| Error::Parse("missing operator".into()))?.clone();
    *pos += 1;
    let mut args = Vec::new();
    loop {
        match tokens.get(*pos).map(String::as_str) {
            Some(")") => {
                *pos += 1;
                break;
            }
            Some(_) => args.push(parse_tokens(tokens, pos)?),
            None => return Err(Error::Parse(format!("unclosed `({head}`"))),
        }
    }
    let unary = |args: Vec<Expr>| -> Result<Box<Expr>> {
        let mut args = args;
        if args.len() != 1 {
            return Err(Error::Parse(format!("`{head}` takes one argument, got {}", args.len())));
        }
        Ok(Box::new(args.pop().unwrap()))
    };
    let index = |args: &[Expr]| -> Result<usize> {
        match args {
            [Expr::Const(c)] if *c >= 0.0 && c.fract() == 0.0 => Ok(*c as usize),
            _ => Err(Error::Parse(format!("`{head}` takes one nonnegative integer"))),
        }
    };
    match head.as_str() {
        "coord" => Ok(Expr::Coord(index(&args)?)),
        "param" => Ok(Expr::Param(index(&args)?)),
        "add" | "mul" if args.is_empty() => Err(Error::Parse(format!("`{head}` needs arguments"))),
        "add" => Ok(Expr::Add(args)),
        "mul" => Ok(Expr::Mul(args)),
        "pow" => match args.as_slice() {
            [_, Expr::Const(c)] => {
                let c = *c;
                let mut args = args;
                args.pop();
                Ok(Expr::Pow(Box::new(args.pop().unwrap()), c))
            }
            _ => Err(Error::Parse("`pow` takes an expression and a constant exponent".into())),
        },
        "exp" => Ok(Expr::Exp(unary(args)?)),
        "sin" => Ok(Expr::Sin(unary(args)?)),
        "cos" => Ok(Expr::Cos(unary(args)?)),
        other => Err(Error::Parse(format!("unknown operator `{other}`"))),
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tokens = tokenize(s);
        let mut pos = 0;
        let expr = parse_tokens(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Parse(format!("trailing input after position {pos}")));
        }
        Ok(expr)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, name: &str, ts: &[Expr]| {
            write!(f, "({name}")?;
            for t in ts {
                write!(f, " {t}")?;
            }
            write!(f, ")")
        };
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Coord(k) => write!(f, "(coord {k})"),
            Expr::Param(i) => write!(f, "(param {i})"),
            Expr::Add(ts) => list(f, "add", ts),
            Expr::Mul(ts) => list(f, "mul", ts),
            Expr::Pow(a, c) => write!(f, "(pow {a} {c:?})"),
            Expr::Exp(a) => write!(f, "(exp {a})"),
            Expr::Sin(a) => write!(f, "(sin {a})"),
            Expr::Cos(a) => write!(f, "(cos {a})"),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The function family. Nested families share the enclosing domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `exp(-b |x - c|^2)`; an empty center means the origin.
    GaussianReal {
        #[serde(default)]
        center: Vec<f64>,
        b: f64,
    },
    /// `exp(-b |x|^2) · exp(i k·x)`.
    ChirpedGaussian { k: Vec<f64>, b: f64 },
    /// `|x|^a exp(-b |x|^2)`.
    RadialPolyGaussian { a: f64, b: f64 },
    /// `a + b x_j` with `j` an index into the coordinate array.
    AffineHarmonic { a: f64, b: f64, j: usize },
    Custom { expr: Expr },
    /// `u + i v` from two real families.
    ComplexPair { re: Box<Family>, im: Box<Family> },
    /// `ρ exp(i φ)` from a real amplitude and a real phase.
    PolarComplex { amplitude: Box<Family>, phase: Box<Family> },
    /// `(f_1, …, f_m)` from `m >= 2` real families.
    VectorOfFields { components: Vec<Family> },
    /// `F(x) = f(x / |x|)`, the degree-0 homogeneous extension.
    SphereExtension { inner: Box<Family> },
}

impl Family {
    pub fn codomain(&self) -> Codomain {
        match self {
            Family::GaussianReal { .. }
            | Family::RadialPolyGaussian { .. }
            | Family::AffineHarmonic { .. }
            | Family::Custom { .. } => Codomain::Real,
            Family::ChirpedGaussian { .. }
            | Family::ComplexPair { .. }
            | Family::PolarComplex { .. } => Codomain::Complex,
            Family::VectorOfFields { components } => Codomain::Vector(components.len()),
            Family::SphereExtension { inner } => inner.codomain(),
        }
    }

    fn validate(&self, domain: &Domain) -> Result<()> {
        let dim = domain.dim();
        let bad = |msg: String| Err(Error::InvalidField(msg));
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let real = |f: &Family, what: &str| -> Result<()> {
            if f.codomain() != Codomain::Real {
                return Err(Error::InvalidField(format!("{what} must be real-valued")));
            }
            f.validate(domain)
        };
        match self {
            Family::GaussianReal { center, b } => {
                if !(b.is_finite() && *b > 0.0) {
                    return bad(format!("gaussian decay b = {b} must be positive"));
                }
                if !center.is_empty() && center.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: center.len() });
                }
                if !finite(center) {
                    return bad("gaussian center must be finite".into());
                }
            }
            Family::ChirpedGaussian { k, b } => {
                if !(b.is_finite() && *b > 0.0) {
                    return bad(format!("chirped gaussian decay b = {b} must be positive"));
                }
                if k.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: k.len() });
                }
                if !finite(k) {
                    return bad("wave vector must be finite".into());
                }
            }
            Family::RadialPolyGaussian { a, b } => {
                if !(a.is_finite() && *a >= 0.0) {
                    return bad(format!("radial exponent a = {a} must be >= 0"));
                }
                if !(b.is_finite() && *b > 0.0) {
                    return bad(format!("radial decay b = {b} must be positive"));
                }
            }
            Family::AffineHarmonic { a, b, j } => {
                if !(a.is_finite() && b.is_finite()) {
                    return bad("affine coefficients must be finite".into());
                }
                if *j >= dim {
                    return Err(Error::IndexOutOfRange { index: *j, max: dim - 1 });
                }
            }
            Family::Custom { expr } => {
                let base = domain.coord_base();
                let mut err = None;
                expr.visit(&mut |e| match e {
                    Expr::Coord(k) if *k < base || *k >= base + dim => {
                        err.get_or_insert(Error::IndexOutOfRange { index: *k, max: base + dim - 1 });
                    }
                    Expr::Param(i) => {
                        err.get_or_insert(Error::InvalidField(format!("unbound (param {i})")));
                    }
                    _ => {}
                });
                if let Some(e) = err {
                    return Err(e);
                }
            }
            Family::ComplexPair { re, im } => {
                real(re, "real part")?;
                real(im, "imaginary part")?;
            }
            Family::PolarComplex { amplitude, phase } => {
                real(amplitude, "amplitude")?;
                real(phase, "phase")?;
            }
            Family::VectorOfFields { components } => {
                if components.len() < 2 {
                    return bad(format!("vector fields need m >= 2 components, got {}", components.len()));
                }
                for c in components {
                    real(c, "vector component")?;
                }
            }
            Family::SphereExtension { inner } => {
                if !matches!(domain, Domain::SphereAmbient(_)) {
                    return bad("sphere extension requires a sphere-ambient domain".into());
                }
                inner.validate(domain)?;
            }
        }
        Ok(())
    }

    fn eval_into<S: JetScalar>(&self, x: &[S], base: usize, out: &mut Vec<S>) -> Result<()> {
        let dim = x.first().map_or(0, JetScalar::dim);
        let norm_sq = || x.iter().fold(S::constant(0.0, dim), |acc, &xi| acc + xi * xi);
        match self {
            Family::GaussianReal { center, b } => {
                let mut r2 = S::constant(0.0, dim);
                for (i, &xi) in x.iter().enumerate() {
                    let d = match center.get(i) {
                        Some(&c) => xi - S::constant(c, dim),
                        None => xi,
                    };
                    r2 = r2 + d * d;
                }
                out.push(r2.scale(-b).exp());
            }
            Family::ChirpedGaussian { k, b } => {
                let rho = norm_sq().scale(-b).exp();
                let mut phase = S::constant(0.0, dim);
                for (&xi, &ki) in x.iter().zip(k) {
                    phase = phase + xi.scale(ki);
                }
                out.push(rho * phase.cos());
                out.push(rho * phase.sin());
            }
            Family::RadialPolyGaussian { a, b } => {
                let r2 = norm_sq();
                let gauss = r2.scale(-b).exp();
                if *a == 0.0 {
                    out.push(gauss);
                } else {
                    out.push(r2.powf(0.5 * a) * gauss);
                }
            }
            Family::AffineHarmonic { a, b, j } => {
                out.push(x[*j].scale(*b) + S::constant(*a, dim));
            }
            Family::Custom { expr } => out.push(expr.eval(x, base)?),
            Family::ComplexPair { re, im } => {
                re.eval_into(x, base, out)?;
                im.eval_into(x, base, out)?;
            }
            Family::PolarComplex { amplitude, phase } => {
                let mut tmp = Vec::with_capacity(2);
                amplitude.eval_into(x, base, &mut tmp)?;
                phase.eval_into(x, base, &mut tmp)?;
                let (rho, phi) = (tmp[0], tmp[1]);
                out.push(rho * phi.cos());
                out.push(rho * phi.sin());
            }
            Family::VectorOfFields { components } => {
                for c in components {
                    c.eval_into(x, base, out)?;
                }
            }
            Family::SphereExtension { inner } => {
                let r2 = norm_sq();
                if r2.value() == 0.0 {
                    return Err(Error::Origin);
                }
                let inv_r = r2.powf(-0.5);
                let y: Vec<S> = x.iter().map(|&xi| xi * inv_r).collect();
                inner.eval_into(&y, base, out)?;
            }
        }
        Ok(())
    }
}

/// A validated test function: family plus domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFieldSpec", into = "RawFieldSpec")]
pub struct FieldSpec {
    family: Family,
    domain: Domain,
}

#[derive(Serialize, Deserialize)]
struct RawFieldSpec {
    #[serde(flatten)]
    family: Family,
    domain: Domain,
}

impl TryFrom<RawFieldSpec> for FieldSpec {
    type Error = Error;
    fn try_from(raw: RawFieldSpec) -> Result<Self> {
        FieldSpec::new(raw.family, raw.domain)
    }
}

impl From<FieldSpec> for RawFieldSpec {
    fn from(f: FieldSpec) -> Self {
        RawFieldSpec { family: f.family, domain: f.domain }
    }
}

impl FieldSpec {
    pub fn new(family: Family, domain: Domain) -> Result<Self> {
        let dim = domain.dim();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidField(format!("domain dimension {dim} outside 1..={MAX_DIM}")));
        }
        if matches!(domain, Domain::SphereAmbient(1)) {
            return Err(Error::InvalidField("sphere ambient dimension must be >= 2".into()));
        }
        family.validate(&domain)?;
        Ok(FieldSpec { family, domain })
    }

    pub fn gaussian(n: usize, b: f64) -> Result<Self> {
        Self::new(Family::GaussianReal { center: Vec::new(), b }, Domain::Euclidean(n))
    }

    pub fn chirped_gaussian(k: Vec<f64>, b: f64) -> Result<Self> {
        let n = k.len();
        Self::new(Family::ChirpedGaussian { k, b }, Domain::Euclidean(n))
    }

    pub fn radial_poly_gaussian(n: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(Family::RadialPolyGaussian { a, b }, Domain::Euclidean(n))
    }

    /// Real custom field from a prefix expression string.
    pub fn custom(domain: Domain, expr: &str) -> Result<Self> {
        Self::new(Family::Custom { expr: expr.parse()? }, domain)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("field specs always serialize")
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn codomain(&self) -> Codomain {
        self.family.codomain()
    }

    pub fn components(&self) -> usize {
        self.codomain().components()
    }

    /// Evaluates every real component with the given scalar type, seeding the
    /// coordinates as independent variables.
    pub fn eval<S: JetScalar>(&self, x: &[f64]) -> Result<Vec<S>> {
        let dim = self.dim();
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
        }
        let vars: Vec<S> = x.iter().enumerate().map(|(i, &xi)| S::variable(xi, i, dim)).collect();
        let mut out = Vec::with_capacity(self.components());
        self.family.eval_into(&vars, self.domain.coord_base(), &mut out)?;
        if let Some(component) = out.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { component, point: x.to_vec() });
        }
        Ok(out)
    }

    /// Plain component values.
    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.eval::<f64>(x)
    }
}

/// A point in `R^d` with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidField("points need at least one coordinate".into()));
        }
        if let Some(index) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index, point: coords });
        }
        Ok(Point(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Symmetric matrix in packed upper-triangular storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    packed: Vec<f64>,
}

impl SymMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[crate::jet::packed_index(i, j)]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.get(i, j)).collect()).collect()
    }
}

/// Value and gradient of every real component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jet1 {
    pub codomain: Codomain,
    pub value: Vec<f64>,
    pub grad: Vec<Vec<f64>>,
}

/// [`Jet1`] plus the Hessian of every real component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub codomain: Codomain,
    pub value: Vec<f64>,
    pub grad: Vec<Vec<f64>>,
    pub hess: Vec<SymMatrix>,
}

impl Jet1 {
    /// `(u, v)` of a complex field.
    pub fn complex_value(&self) -> Option<(f64, f64)> {
        (self.codomain == Codomain::Complex).then(|| (self.value[0], self.value[1]))
    }
}

pub fn eval_jet1(field: &FieldSpec, x: &Point) -> Result<Jet1> {
    let comps = field.eval::<Dual1>(x.coords())?;
    Ok(Jet1 {
        codomain: field.codomain(),
        value: comps.iter().map(|c| c.v).collect(),
        grad: comps.iter().map(|c| c.grad().to_vec()).collect(),
    })
}

pub fn eval_jet2(field: &FieldSpec, x: &Point) -> Result<Jet2> {
    let comps = field.eval::<Dual2>(x.coords())?;
    Ok(Jet2 {
        codomain: field.codomain(),
        value: comps.iter().map(|c| c.v).collect(),
        grad: comps.iter().map(|c| c.grad().to_vec()).collect(),
        hess: comps
            .iter()
            .map(|c| SymMatrix { dim: c.d, packed: c.hess_packed().to_vec() })
            .collect(),
    })
}

/// Wraps a sphere-ambient field into its degree-0 homogeneous extension
/// `F(x) = f(x/|x|)`, whose Euclidean gradient on `|x| = 1` is the spherical
/// gradient of `f`. Already-extended fields are returned unchanged.
pub fn restrict_to_sphere(field: &FieldSpec) -> Result<FieldSpec> {
    if !matches!(field.domain, Domain::SphereAmbient(_)) {
        return Err(Error::InvalidField("restrict_to_sphere needs a sphere-ambient field".into()));
    }
    if matches!(field.family, Family::SphereExtension { .. }) {
        return Ok(field.clone());
    }
    FieldSpec::new(Family::SphereExtension { inner: Box::new(field.family.clone()) }, field.domain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn gaussian_at_origin_is_critical() {
        let f = FieldSpec::gaussian(3, 0.5).unwrap();
        let j = eval_jet1(&f, &pt(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(j.value, vec![1.0]);
        assert_eq!(j.grad[0], vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn gaussian_hessian_at_origin_is_minus_identity() {
        let f = FieldSpec::gaussian(3, 0.5).unwrap();
        let j = eval_jet2(&f, &pt(&[0.0, 0.0, 0.0])).unwrap();
        let rows = j.hess[0].to_rows();
        for (i, row) in rows.iter().enumerate() {
            for (k, &h) in row.iter().enumerate() {
                assert_eq!(h, if i == k { -1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn bilinear_custom_hessian() {
        let f = FieldSpec::custom(Domain::Euclidean(2), "(mul (coord 1) (coord 2))").unwrap();
        for x in [[0.3, -1.2], [5.0, 2.0]] {
            let j = eval_jet2(&f, &pt(&x)).unwrap();
            assert_eq!(j.hess[0].to_rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        }
    }

    #[test]
    fn radial_gaussian_laplacian() {
        let f = FieldSpec::radial_poly_gaussian(3, 0.0, 1.0).unwrap();
        let j = eval_jet2(&f, &pt(&[1.0, 0.0, 0.0])).unwrap();
        let expected = -2.0 * (-1.0f64).exp();
        assert!((j.hess[0].trace() - expected).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = FieldSpec::gaussian(3, 0.5).unwrap();
        assert!(matches!(
            eval_jet1(&f, &pt(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn overflow_is_reported_with_component() {
        let f = FieldSpec::custom(Domain::Euclidean(1), "(exp (mul 1000 (coord 1)))").unwrap();
        match eval_jet1(&f, &pt(&[1.0])) {
            Err(Error::NonFinite { component: 0, point }) => assert_eq!(point, vec![1.0]),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn custom_grammar_rejects_unknown_ops() {
        assert!(matches!("(tan (coord 1))".parse::<Expr>(), Err(Error::Parse(_))));
        assert!(matches!("(log (coord 1))".parse::<Expr>(), Err(Error::Parse(_))));
        assert!(matches!("(pow (coord 1) (coord 2))".parse::<Expr>(), Err(Error::Parse(_))));
        assert!(matches!("(add (coord 1)".parse::<Expr>(), Err(Error::Parse(_))));
        assert!(FieldSpec::custom(Domain::Euclidean(2), "(coord 3)").is_err());
        assert!(FieldSpec::custom(Domain::Euclidean(2), "(coord 0)").is_err());
        assert!(FieldSpec::custom(Domain::SphereAmbient(3), "(coord 0)").is_ok());
    }

    #[test]
    fn expression_display_round_trips() {
        let src = "(add 1.5 (mul -2.0 (pow (coord 1) 3.0)) (exp (sin (cos (coord 2)))))";
        let e: Expr = src.parse().unwrap();
        assert_eq!(e.to_string().parse::<Expr>().unwrap(), e);
    }

    #[test]
    fn json_matches_documented_shape() {
        let f = FieldSpec::from_json(
            r#"{"family": "chirped_gaussian", "k": [2,0,0], "b": 0.5, "domain": {"euclidean": 3}}"#,
        )
        .unwrap();
        assert_eq!(f.codomain(), Codomain::Complex);
        assert_eq!(FieldSpec::from_json(&f.to_json()).unwrap(), f);

        let c = FieldSpec::from_json(
            r#"{"family": "custom", "expr": "(mul (coord 1) (coord 2))", "domain": {"euclidean": 2}}"#,
        )
        .unwrap();
        assert_eq!(c.codomain(), Codomain::Real);
        assert!(FieldSpec::from_json(r#"{"family": "gaussian_real", "b": -1, "domain": {"euclidean": 2}}"#).is_err());
    }

    #[test]
    fn vector_fields_need_two_real_components() {
        let g = Family::GaussianReal { center: vec![], b: 1.0 };
        let one = Family::VectorOfFields { components: vec![g.clone()] };
        assert!(FieldSpec::new(one, Domain::Euclidean(2)).is_err());
        let chirp = Family::ChirpedGaussian { k: vec![1.0, 0.0], b: 1.0 };
        let mixed = Family::VectorOfFields { components: vec![g, chirp] };
        assert!(FieldSpec::new(mixed, Domain::Euclidean(2)).is_err());
    }

    #[test]
    fn extension_is_undefined_at_origin() {
        let f = FieldSpec::custom(Domain::SphereAmbient(3), "(coord 0)").unwrap();
        let ext = restrict_to_sphere(&f).unwrap();
        assert!(matches!(eval_jet1(&ext, &pt(&[0.0, 0.0, 0.0])), Err(Error::Origin)));
        let e = FieldSpec::gaussian(3, 1.0).unwrap();
        assert!(restrict_to_sphere(&e).is_err());
    }

    #[test]
    fn extension_of_coordinate_field() {
        let f = FieldSpec::custom(Domain::SphereAmbient(3), "(coord 0)").unwrap();
        let ext = restrict_to_sphere(&f).unwrap();
        let j = eval_jet1(&ext, &pt(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(j.grad[0], vec![1.0, 0.0, 0.0]);
        let j = eval_jet1(&ext, &pt(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(j.grad[0][0], 0.0);
        let one = FieldSpec::custom(Domain::SphereAmbient(3), "1").unwrap();
        let j = eval_jet1(&restrict_to_sphere(&one).unwrap(), &pt(&[0.6, 0.8, 0.0])).unwrap();
        assert_eq!(j.grad[0], vec![0.0, 0.0, 0.0]);
    }
}
