//! Derivative-free extremal search of `lhs / rhs` over parametric families,
//! brute grid scans, and parameter sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Domain, Expr, Family, FieldSpec};
use crate::inequalities::{
    check_ckn_complex, check_ckn_general, check_ckn_vector, check_hpw, check_second_order, CknParams,
    GeneralCknParams, InequalityReport, TheoremId,
};
use crate::quadrature::Budget;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const DIAMETER_TOL: f64 = 1e-6;
const SPREAD_TOL: f64 = 1e-8;
const MAX_CONSECUTIVE_FAILURES: usize = 5;

/// Field templates with free real parameters `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ParamFamily {
    /// `exp(-b|x|²)`, `θ = [b]`.
    Gaussian { n: usize },
    /// `|x|^a exp(-b|x|²)`, `θ = [a, b]`.
    RadialPolyGaussian { n: usize },
    /// A real custom expression with `(param i)` slots.
    Custom { domain: Domain, expr: Expr },
}

impl ParamFamily {
    pub fn param_count(&self) -> usize {
        match self {
            ParamFamily::Gaussian { .. } => 1,
            ParamFamily::RadialPolyGaussian { .. } => 2,
            ParamFamily::Custom { expr, .. } => expr.param_count(),
        }
    }

    pub fn instantiate(&self, theta: &[f64]) -> Result<FieldSpec> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch { expected: self.param_count(), got: theta.len() });
        }
        match self {
            ParamFamily::Gaussian { n } => FieldSpec::gaussian(*n, theta[0]),
            ParamFamily::RadialPolyGaussian { n } => FieldSpec::radial_poly_gaussian(*n, theta[0], theta[1]),
            ParamFamily::Custom { domain, expr } => {
                FieldSpec::new(Family::Custom { expr: expr.bind(theta)? }, *domain)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    RatioClassical,
    RatioImproved,
}

/// Parameters of the theorem being probed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremParams {
    Hpw { n: usize },
    Ckn(CknParams),
    General(GeneralCknParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchProblem {
    pub theorem_id: TheoremId,
    pub params: TheoremParams,
    pub family: ParamFamily,
    pub bounds: Vec<[f64; 2]>,
    pub objective: Objective,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_iterations() -> usize {
    200
}

fn default_restarts() -> usize {
    3
}

impl SearchProblem {
    pub fn new(
        theorem_id: TheoremId,
        params: TheoremParams,
        family: ParamFamily,
        bounds: Vec<[f64; 2]>,
        objective: Objective,
        budget: Budget,
    ) -> Self {
        SearchProblem {
            theorem_id,
            params,
            family,
            bounds,
            objective,
            budget,
            max_iterations: default_max_iterations(),
            restarts: default_restarts(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.family.param_count();
        if k == 0 {
            return Err(Error::Search("the family has no free parameters".into()));
        }
        if self.bounds.len() != k {
            return Err(Error::Search(format!("expected {k} bounds, got {}", self.bounds.len())));
        }
        for (i, [lo, hi]) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Search(format!("bound {i} = [{lo}, {hi}] must be finite with lo < hi")));
            }
        }
        if self.restarts == 0 {
            return Err(Error::Search("at least one restart is required".into()));
        }
        let ok = matches!(
            (self.theorem_id, &self.params),
            (TheoremId::Hpw, TheoremParams::Hpw { .. })
                | (TheoremId::CknComplex | TheoremId::CknVector | TheoremId::SecondOrder, TheoremParams::Ckn(_))
                | (TheoremId::CknGeneral, TheoremParams::General(_))
        );
        if !ok {
            return Err(Error::Search(format!("parameters do not fit theorem {}", self.theorem_id)));
        }
        Ok(())
    }

    /// Runs the checker for one parameter vector.
    pub fn report(&self, theta: &[f64]) -> Result<InequalityReport> {
        let f = self.family.instantiate(theta)?;
        let b = &self.budget;
        match (self.theorem_id, &self.params) {
            (TheoremId::Hpw, TheoremParams::Hpw { n }) => check_hpw(*n, &f, b),
            (TheoremId::CknComplex, TheoremParams::Ckn(p)) => check_ckn_complex(p, &f, b),
            (TheoremId::CknVector, TheoremParams::Ckn(p)) => check_ckn_vector(p, &f, b),
            (TheoremId::SecondOrder, TheoremParams::Ckn(p)) => check_second_order(&f, p, b),
            (TheoremId::CknGeneral, TheoremParams::General(p)) => check_ckn_general(p, &f, b),
            (id, _) => Err(Error::Search(format!("theorem {id} is not searchable"))),
        }
    }

    /// Objective value at `theta`; non-finite ratios are failures.
    pub fn evaluate(&self, theta: &[f64]) -> Result<f64> {
        let r = self.report(theta)?;
        let v = match self.objective {
            Objective::RatioClassical => r.ratio_classical(),
            Objective::RatioImproved => r.ratio_improved(),
        };
        if !v.is_finite() {
            return Err(Error::Search(format!("objective is not finite at {theta:?}")));
        }
        Ok(v)
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, [lo, hi]) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Diameter,
    Spread,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub restart: usize,
    pub theta: Vec<f64>,
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub start: Vec<f64>,
    pub best_theta: Vec<f64>,
    pub best_ratio: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_theta: Vec<f64>,
    pub best_ratio: f64,
    pub evaluations: usize,
    pub runs: Vec<RunSummary>,
    pub trace: Vec<TraceEntry>,
}

impl SearchResult {
    /// Smallest successful objective value in the trace.
    pub fn min_trace_ratio(&self) -> f64 {
        self.trace.iter().filter_map(|t| t.ratio).fold(f64::INFINITY, f64::min)
    }
}

struct Run<'a> {
    problem: &'a SearchProblem,
    restart: usize,
    trace: Vec<TraceEntry>,
    failures: usize,
}

impl Run<'_> {
    /// Clamps, evaluates and records; `None` on failure.
    fn eval(&mut self, mut x: Vec<f64>) -> Result<(Vec<f64>, Option<f64>)> {
        self.problem.clamp(&mut x);
        let r = self.problem.evaluate(&x);
        let (ratio, error) = match r {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.trace.push(TraceEntry { restart: self.restart, theta: x.clone(), ratio, error });
        if ratio.is_some() {
            self.failures = 0;
        } else {
            self.failures += 1;
            if self.failures >= MAX_CONSECUTIVE_FAILURES {
                return Err(Error::Search(format!(
                    "{MAX_CONSECUTIVE_FAILURES} consecutive objective failures; last: {}",
                    self.trace.last().and_then(|t| t.error.clone()).unwrap_or_default()
                )));
            }
        }
        Ok((x, ratio))
    }
}

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect()
}

fn initial_simplex(problem: &SearchProblem, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let start: Vec<f64> = problem
        .bounds
        .iter()
        .map(|[lo, hi]| {
            let w = hi - lo;
            rng.random_range(lo + 0.25 * w..=hi - 0.25 * w)
        })
        .collect();
    let mut simplex = vec![start.clone()];
    for (i, [lo, hi]) in problem.bounds.iter().enumerate() {
        let step = 0.1 * (hi - lo);
        let mut v = start.clone();
        v[i] = if rng.random_bool(0.5) && v[i] + step <= *hi { v[i] + step } else { v[i] - step };
        simplex.push(v);
    }
    simplex
}

fn nelder_mead(problem: &SearchProblem, restart: usize) -> Result<(RunSummary, Vec<TraceEntry>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed.wrapping_add(restart as u64));
    let mut run = Run { problem, restart, trace: Vec::new(), failures: 0 };
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::new();
    for v in initial_simplex(problem, &mut rng) {
        let (x, f) = run.eval(v)?;
        let f = f.ok_or_else(|| Error::Search(format!("objective fails at initial vertex {x:?}")))?;
        pts.push((x, f));
    }
    let start = pts[0].0.clone();
    let k = problem.bounds.len();
    let mut iterations = 0;
    let stop = loop {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = pts[0].0.clone();
        let diameter = pts
            .iter()
            .map(|(x, _)| x.iter().zip(&best).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let spread = pts[k].1 - pts[0].1;
        if diameter < DIAMETER_TOL {
            break StopReason::Diameter;
        }
        if spread < SPREAD_TOL {
            break StopReason::Spread;
        }
        if iterations >= problem.max_iterations {
            break StopReason::MaxIterations;
        }
        iterations += 1;

        let mut centroid = vec![0.0; k];
        for (x, _) in &pts[..k] {
            centroid.iter_mut().zip(x).for_each(|(c, v)| *c += v / k as f64);
        }
        let (worst, f_worst) = pts[k].clone();
        let (xr, fr) = run.eval(affine(&centroid, &worst, -REFLECT))?;
        let mut accepted = None;
        if let Some(fr) = fr {
            if fr < pts[0].1 {
                let (xe, fe) = run.eval(affine(&centroid, &worst, -EXPAND))?;
                accepted = Some(match fe {
                    Some(fe) if fe < fr => (xe, fe),
                    _ => (xr, fr),
                });
            } else if fr < pts[k - 1].1 {
                accepted = Some((xr, fr));
            } else {
                let target = if fr < f_worst { &xr } else { &worst };
                let (xc, fc) = run.eval(affine(&centroid, target, CONTRACT))?;
                if let Some(fc) = fc {
                    if fc < fr.min(f_worst) {
                        accepted = Some((xc, fc));
                    }
                }
            }
        }
        match accepted {
            Some(p) => pts[k] = p,
            None => {
                for pt in pts.iter_mut().skip(1) {
                    let (x, f) = run.eval(affine(&best, &pt.0, SHRINK))?;
                    *pt = (x, f.unwrap_or(f64::INFINITY));
                }
            }
        }
    };
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let summary = RunSummary {
        start,
        best_theta: pts[0].0.clone(),
        best_ratio: pts[0].1,
        iterations,
        evaluations: run.trace.len(),
        stop,
    };
    Ok((summary, run.trace))
}

/// Nelder–Mead from `problem.restarts` seeded simplices; the best run wins.
pub fn minimize_ratio(problem: &SearchProblem) -> Result<SearchResult> {
    problem.validate()?;
    let runs: Vec<Result<(RunSummary, Vec<TraceEntry>)>> =
        (0..problem.restarts).into_par_iter().map(|r| nelder_mead(problem, r)).collect();
    let mut summaries = Vec::new();
    let mut trace = Vec::new();
    for r in runs {
        let (s, t) = r?;
        summaries.push(s);
        trace.extend(t);
    }
    let (best_theta, best_ratio) = trace
        .iter()
        .filter_map(|t| t.ratio.map(|r| (t.theta.clone(), r)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Search("no successful evaluation".into()))?;
    Ok(SearchResult { best_theta, best_ratio, evaluations: trace.len(), runs: summaries, trace })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScan {
    pub best_theta: Vec<f64>,
    pub best_ratio: f64,
    pub cells: Vec<TraceEntry>,
}

/// Evaluates the objective on a tensor grid with `per_axis` points per
/// parameter, endpoints included.
pub fn grid_scan(problem: &SearchProblem, per_axis: usize) -> Result<GridScan> {
    problem.validate()?;
    if per_axis < 2 {
        return Err(Error::Search("grid scans need at least 2 points per axis".into()));
    }
    let k = problem.bounds.len();
    let total = per_axis.pow(k as u32);
    let thetas: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            let mut theta = vec![0.0; k];
            for (d, [lo, hi]) in problem.bounds.iter().enumerate().rev() {
                let i = idx % per_axis;
                idx /= per_axis;
                theta[d] = lo + (hi - lo) * i as f64 / (per_axis - 1) as f64;
            }
            theta
        })
        .collect();
    let cells: Vec<TraceEntry> = thetas
        .into_par_iter()
        .map(|theta| {
            let r = problem.evaluate(&theta);
            TraceEntry {
                restart: 0,
                ratio: r.as_ref().ok().copied(),
                error: r.err().map(|e| e.to_string()),
                theta,
            }
        })
        .collect();
    let (best_theta, best_ratio) = cells
        .iter()
        .filter_map(|c| c.ratio.map(|r| (c.theta.clone(), r)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Search("every grid cell failed".into()))?;
    Ok(GridScan { best_theta, best_ratio, cells })
}

/// Cartesian product of `(n, p, q)` values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl SweepGrid {
    pub fn tuples(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &p in &self.p {
                for &q in &self.q {
                    out.push((n, p, q));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theorem_id: TheoremId,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub report: Option<InequalityReport>,
    pub skipped_reason: Option<String>,
}

/// One row per `(n, p, q)`; inadmissible tuples and failing cells carry a
/// reason instead of a report.
pub fn sweep(theorem_id: TheoremId, grid: &SweepGrid, field: &FieldSpec, budget: &Budget) -> Result<Vec<SweepRow>> {
    let check: fn(&CknParams, &FieldSpec, &Budget) -> Result<InequalityReport> = match theorem_id {
        TheoremId::CknComplex => check_ckn_complex,
        TheoremId::CknVector => check_ckn_vector,
        TheoremId::SecondOrder => |p, f, b| check_second_order(f, p, b),
        other => {
            return Err(Error::Search(format!(
                "sweeps cover ckn_complex, ckn_vector and second_order, not {other}"
            )))
        }
    };
    Ok(grid
        .tuples()
        .into_par_iter()
        .map(|(n, p, q)| {
            let outcome = CknParams::new(n, p, q).and_then(|params| check(&params, field, budget));
            let (report, skipped_reason) = match outcome {
                Ok(r) => (Some(r), None),
                Err(Error::Constraint(c)) => (None, Some(format!("violates {c}"))),
                Err(e) => (None, Some(format!("error: {e}"))),
            };
            SweepRow { theorem_id, n, p, q, report, skipped_reason }
        })
        .collect())
}

pub const SWEEP_HEADER: [&str; 11] = [
    "theorem_id",
    "n",
    "p",
    "q",
    "lhs",
    "rhs_classical",
    "cov_term",
    "slack",
    "relative_margin",
    "holds",
    "skipped_reason",
];

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with a fixed header; reals printed with 17 significant digits.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(SWEEP_HEADER).map_err(io)?;
    for row in rows {
        let mut rec = vec![row.theorem_id.to_string(), row.n.to_string(), num(row.p), num(row.q)];
        match &row.report {
            Some(r) => rec.extend([
                num(r.lhs),
                num(r.rhs_classical),
                num(r.cov_term),
                num(r.slack),
                num(r.relative_margin),
                r.holds.to_string(),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), 6)),
        }
        rec.push(row.skipped_reason.clone().unwrap_or_default());
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
