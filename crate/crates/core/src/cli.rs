//! Batch front-end: `verify`, `sweep`, `search` and `selftest`.
//!
//! Settings come from an optional JSON or TOML file (`--config`) and are
//! overridden by flags. Exit status is 0 when every check passes, 1 when a
//! mathematical check fails and 2 for usage or configuration errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{eval_jet1, eval_jet2, restrict_to_sphere, Domain, FieldSpec, Point};
use crate::inequalities::{
    check_ckn_complex, check_ckn_general, check_ckn_vector, check_hpw, check_second_order, check_sphere_complex,
    check_sphere_complex_star, check_sphere_corollary, check_sphere_vector, CknParams, GeneralCknParams,
    InequalityReport, TheoremId,
};
use crate::phase::{amp_phase_split, phase_derivative_direct, Setting};
use crate::quadrature::Budget;
use crate::search::{
    grid_scan, minimize_ratio, sweep, sweep_csv, GridScan, Objective, ParamFamily, SearchProblem, SearchResult,
    SweepGrid, TheoremParams,
};
use crate::sphere_ops::{gamma_coordinate, integration_by_parts_residual, spherical_gradient};
use crate::sphere_stats::{compute_stats, variance_decomposition_residuals};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Search ratios below this would falsify a theorem.
pub const RATIO_FLOOR: f64 = 1.0 - 1e-5;

#[derive(Debug, Parser)]
#[command(name = "ckn-lab", version, about = "Verify improved CKN and sphere uncertainty inequalities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Check one theorem instance and write its report.
    Verify,
    /// Check a theorem over a grid of (n, p, q) and write a table.
    Sweep,
    /// Minimize lhs/rhs over a parametric family.
    Search,
    /// Run the identity suite and write a pass/fail table.
    Selftest,
}

#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// JSON or TOML file with settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub theorem: Option<String>,
    /// Dimension (sphere dimension for sphere theorems); comma list for sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub p: Vec<f64>,
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub q: Vec<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Field description (JSON file).
    #[arg(long, global = true)]
    pub field: Option<PathBuf>,
    #[arg(long, global = true)]
    pub radial_nodes: Option<usize>,
    #[arg(long, global = true)]
    pub angular_nodes: Option<usize>,
    #[arg(long, global = true)]
    pub refine_levels: Option<usize>,
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// json or csv
    #[arg(long, global = true)]
    pub format: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: CKN_LAB_THREADS, then logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Largest dimension exercised by selftest.
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    /// Search family: gaussian or radial_poly_gaussian.
    #[arg(long, global = true)]
    pub family: Option<String>,
    /// Search bounds as lo:hi per parameter, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub bounds: Vec<String>,
    /// ratio_classical or ratio_improved
    #[arg(long, global = true)]
    pub objective: Option<String>,
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    #[arg(long, global = true)]
    pub max_iterations: Option<usize>,
    /// Also run a brute grid scan with this many points per axis.
    #[arg(long, global = true)]
    pub grid_scan: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum FieldSource {
    Path(PathBuf),
    Inline(Box<FieldSpec>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum FamilySource {
    Name(String),
    Spec(ParamFamily),
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    command: Option<Command>,
    theorem: Option<String>,
    n: Option<OneOrMany<usize>>,
    p: Option<OneOrMany<f64>>,
    q: Option<OneOrMany<f64>>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    r: Option<f64>,
    field: Option<FieldSource>,
    radial_nodes: Option<usize>,
    angular_nodes: Option<usize>,
    refine_levels: Option<usize>,
    tolerance: Option<f64>,
    out: Option<PathBuf>,
    format: Option<String>,
    seed: Option<u64>,
    threads: Option<usize>,
    n_max: Option<usize>,
    family: Option<FamilySource>,
    bounds: Option<Vec<[f64; 2]>>,
    objective: Option<Objective>,
    restarts: Option<usize>,
    max_iterations: Option<usize>,
    grid_scan: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Fully merged settings for one run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub theorem: Option<TheoremId>,
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub r: Option<f64>,
    pub field: Option<FieldSpec>,
    pub budget: Budget,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub threads: Option<usize>,
    pub n_max: usize,
    pub family: Option<ParamFamily>,
    pub bounds: Vec<[f64; 2]>,
    pub objective: Objective,
    pub restarts: Option<usize>,
    pub max_iterations: Option<usize>,
    pub grid_scan: Option<usize>,
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.to_owned(), message: message.into() }
}

fn read_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err("config", format!("{}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    if is_toml {
        toml::from_str(&text).map_err(|e| config_err("config", e.to_string()))
    } else {
        serde_json::from_str(&text).map_err(|e| config_err("config", e.to_string()))
    }
}

fn load_field(path: &Path) -> Result<FieldSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err("field", format!("{}: {e}", path.display())))?;
    FieldSpec::from_json(&text).map_err(|e| config_err("field", e.to_string()))
}

fn pick_vec<T: Clone>(flag: &[T], file: Option<OneOrMany<T>>) -> Vec<T> {
    if flag.is_empty() {
        file.map(OneOrMany::into_vec).unwrap_or_default()
    } else {
        flag.to_vec()
    }
}

fn parse_bounds(items: &[String]) -> Result<Vec<[f64; 2]>> {
    items
        .iter()
        .map(|s| {
            let (lo, hi) = s.split_once(':').ok_or_else(|| config_err("bounds", format!("`{s}` is not lo:hi")))?;
            let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| config_err("bounds", format!("`{v}`: {e}")));
            Ok([parse(lo)?, parse(hi)?])
        })
        .collect()
}

fn named_family(name: &str, n: Option<usize>) -> Result<ParamFamily> {
    let n = n.ok_or_else(|| config_err("n", "search families need a dimension"))?;
    match name {
        "gaussian" => Ok(ParamFamily::Gaussian { n }),
        "radial_poly_gaussian" => Ok(ParamFamily::RadialPolyGaussian { n }),
        other => Err(config_err("family", format!("unknown family `{other}` (use a config file for custom templates)"))),
    }
}

impl RunConfig {
    /// Defaults for `command` with nothing selected.
    pub fn defaults(command: Command) -> Self {
        RunConfig {
            command,
            theorem: None,
            n: Vec::new(),
            p: Vec::new(),
            q: Vec::new(),
            alpha: None,
            beta: None,
            gamma: None,
            r: None,
            field: None,
            budget: Budget::default(),
            out: None,
            format: if command == Command::Sweep { Format::Csv } else { Format::Json },
            seed: 0,
            threads: None,
            n_max: 3,
            family: None,
            bounds: Vec::new(),
            objective: Objective::RatioClassical,
            restarts: None,
            max_iterations: None,
            grid_scan: None,
        }
    }

    /// Merges the config file (if any) with flags; flags win.
    pub fn resolve(command: Command, flags: &Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(p) => read_config(p)?,
            None => FileConfig::default(),
        };
        if let Some(c) = file.command {
            if c != command {
                return Err(config_err("command", format!("config is for {c:?}, invoked {command:?}")));
            }
        }
        let theorem = flags
            .theorem
            .clone()
            .or(file.theorem)
            .map(|t| t.parse::<TheoremId>().map_err(|e| config_err("theorem", e.to_string())))
            .transpose()?;
        let n: Vec<usize> = pick_vec(&flags.n, file.n);
        let field = match (&flags.field, file.field) {
            (Some(p), _) => Some(load_field(p)?),
            (None, Some(FieldSource::Path(p))) => Some(load_field(&p)?),
            (None, Some(FieldSource::Inline(f))) => Some(*f),
            (None, None) => None,
        };
        let defaults = Budget::default();
        let budget = Budget {
            radial_nodes: flags.radial_nodes.or(file.radial_nodes).unwrap_or(defaults.radial_nodes),
            angular_nodes: flags.angular_nodes.or(file.angular_nodes).unwrap_or(defaults.angular_nodes),
            refine_levels: flags.refine_levels.or(file.refine_levels).unwrap_or(defaults.refine_levels),
            tolerance: flags.tolerance.or(file.tolerance),
        };
        if budget.radial_nodes == 0 {
            return Err(config_err("radial_nodes", "must be positive"));
        }
        if budget.angular_nodes == 0 {
            return Err(config_err("angular_nodes", "must be positive"));
        }
        let format = match flags.format.clone().or(file.format).as_deref() {
            None if command == Command::Sweep => Format::Csv,
            None | Some("json") => Format::Json,
            Some("csv") if command == Command::Sweep => Format::Csv,
            Some(other) => return Err(config_err("format", format!("`{other}` is not available for this command"))),
        };
        let threads = flags.threads.or(file.threads);
        if threads == Some(0) {
            return Err(config_err("threads", "must be positive"));
        }
        let family = match (&flags.family, file.family) {
            (Some(name), _) => Some(named_family(name, n.first().copied())?),
            (None, Some(FamilySource::Name(name))) => Some(named_family(&name, n.first().copied())?),
            (None, Some(FamilySource::Spec(f))) => Some(f),
            (None, None) => None,
        };
        let bounds = if flags.bounds.is_empty() { file.bounds.unwrap_or_default() } else { parse_bounds(&flags.bounds)? };
        let objective = match flags.objective.as_deref() {
            Some("ratio_classical") => Objective::RatioClassical,
            Some("ratio_improved") => Objective::RatioImproved,
            Some(other) => return Err(config_err("objective", format!("unknown objective `{other}`"))),
            None => file.objective.unwrap_or(Objective::RatioClassical),
        };
        Ok(RunConfig {
            command,
            theorem,
            n,
            p: pick_vec(&flags.p, file.p),
            q: pick_vec(&flags.q, file.q),
            alpha: flags.alpha.or(file.alpha),
            beta: flags.beta.or(file.beta),
            gamma: flags.gamma.or(file.gamma),
            r: flags.r.or(file.r),
            field,
            budget,
            out: flags.out.clone().or(file.out),
            format,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            threads,
            n_max: flags.n_max.or(file.n_max).unwrap_or(3),
            family,
            bounds,
            objective,
            restarts: flags.restarts.or(file.restarts),
            max_iterations: flags.max_iterations.or(file.max_iterations),
            grid_scan: flags.grid_scan.or(file.grid_scan),
        })
    }

    fn theorem(&self) -> Result<TheoremId> {
        self.theorem.ok_or_else(|| config_err("theorem", "required"))
    }

    fn single<T: Copy>(values: &[T], key: &str) -> Result<T> {
        match values {
            [v] => Ok(*v),
            [] => Err(config_err(key, "required")),
            _ => Err(config_err(key, "expects a single value here")),
        }
    }

    fn field(&self) -> Result<&FieldSpec> {
        self.field.as_ref().ok_or_else(|| config_err("field", "required"))
    }

    fn ckn(&self) -> Result<CknParams> {
        CknParams::new(Self::single(&self.n, "n")?, Self::single(&self.p, "p")?, Self::single(&self.q, "q")?)
    }

    fn general(&self) -> Result<GeneralCknParams> {
        let req = |v: Option<f64>, key: &str| v.ok_or_else(|| config_err(key, "required"));
        let (n, p) = (Self::single(&self.n, "n")?, Self::single(&self.p, "p")?);
        let (r, alpha, beta) = (req(self.r, "r")?, req(self.alpha, "alpha")?, req(self.beta, "beta")?);
        match self.gamma {
            Some(g) => GeneralCknParams::new(n, p, r, alpha, beta, g),
            None => GeneralCknParams::with_derived_gamma(n, p, r, alpha, beta),
        }
    }
}

struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + std::io::Write>(&mut self, w: &mut W, v: f32) -> std::io::Result<()> {
        write!(w, "{v:.8e}")
    }
}

/// JSON with every real printed to 17 significant digits.
pub fn to_json17<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes utf-8"))
}

/// Output text and whether every check passed.
pub struct Outcome {
    pub text: String,
    pub pass: bool,
    pub message: Option<String>,
}

/// Runs the checker selected by `cfg.theorem`; the sphere vector theorem yields two reports.
pub fn verify_reports(cfg: &RunConfig) -> Result<Vec<InequalityReport>> {
    let id = cfg.theorem()?;
    let b = &cfg.budget;
    let reports: Vec<InequalityReport> = match id {
        TheoremId::CknComplex => vec![check_ckn_complex(&cfg.ckn()?, cfg.field()?, b)?],
        TheoremId::CknVector => vec![check_ckn_vector(&cfg.ckn()?, cfg.field()?, b)?],
        TheoremId::SecondOrder => vec![check_second_order(cfg.field()?, &cfg.ckn()?, b)?],
        TheoremId::CknGeneral => vec![check_ckn_general(&cfg.general()?, cfg.field()?, b)?],
        TheoremId::Hpw => vec![check_hpw(RunConfig::single(&cfg.n, "n")?, cfg.field()?, b)?],
        TheoremId::SphereComplex => vec![check_sphere_complex(cfg.field()?, RunConfig::single(&cfg.n, "n")?, b)?],
        TheoremId::SphereComplexStar => {
            vec![check_sphere_complex_star(cfg.field()?, RunConfig::single(&cfg.n, "n")?, b)?]
        }
        TheoremId::SphereCorollary => vec![check_sphere_corollary(cfg.field()?, RunConfig::single(&cfg.n, "n")?, b)?],
        TheoremId::SphereVector | TheoremId::SphereVectorEnergy => {
            let (v, e) = check_sphere_vector(cfg.field()?, RunConfig::single(&cfg.n, "n")?, b)?;
            vec![v, e]
        }
    };
    Ok(reports)
}

fn verify(cfg: &RunConfig) -> Result<Outcome> {
    let id = cfg.theorem()?;
    let reports = verify_reports(cfg)?;
    let pass = reports.iter().all(|r| r.holds);
    let text = if reports.len() == 1 { to_json17(&reports[0])? } else { to_json17(&reports)? };
    let message = (!pass).then(|| format!("{id}: inequality violated beyond tolerance"));
    Ok(Outcome { text, pass, message })
}

fn run_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let grid = SweepGrid { n: cfg.n.clone(), p: cfg.p.clone(), q: cfg.q.clone() };
    let rows = sweep(cfg.theorem()?, &grid, cfg.field()?, &cfg.budget)?;
    let pass = rows.iter().all(|r| r.report.as_ref().is_none_or(|r| r.holds));
    let text = match cfg.format {
        Format::Csv => sweep_csv(&rows)?,
        Format::Json => to_json17(&rows)?,
    };
    Ok(Outcome { text, pass, message: (!pass).then(|| "at least one sweep cell violated its inequality".into()) })
}

#[derive(Serialize)]
struct SearchOutput {
    #[serde(flatten)]
    result: SearchResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_scan: Option<GridScan>,
}

fn run_search(cfg: &RunConfig) -> Result<Outcome> {
    let id = cfg.theorem()?;
    let params = match id {
        TheoremId::Hpw => TheoremParams::Hpw { n: RunConfig::single(&cfg.n, "n")? },
        TheoremId::CknGeneral => TheoremParams::General(cfg.general()?),
        _ => TheoremParams::Ckn(cfg.ckn()?),
    };
    let family = cfg.family.clone().ok_or_else(|| config_err("family", "required"))?;
    let mut problem = SearchProblem::new(id, params, family, cfg.bounds.clone(), cfg.objective, cfg.budget);
    problem.seed = cfg.seed;
    if let Some(r) = cfg.restarts {
        problem.restarts = r;
    }
    if let Some(m) = cfg.max_iterations {
        problem.max_iterations = m;
    }
    problem.validate().map_err(|e| config_err("search", e.to_string()))?;
    let result = minimize_ratio(&problem)?;
    let grid_scan = cfg.grid_scan.map(|k| grid_scan(&problem, k)).transpose()?;
    let floor_ok = result.min_trace_ratio() >= RATIO_FLOOR
        && grid_scan.as_ref().is_none_or(|g| g.best_ratio >= RATIO_FLOOR);
    let text = to_json17(&SearchOutput { result, grid_scan })?;
    Ok(Outcome {
        text,
        pass: floor_ok,
        message: (!floor_ok).then(|| format!("an evaluation fell below the ratio floor {RATIO_FLOOR}")),
    })
}

/// One row of the identity suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestRow {
    pub check: String,
    pub n: usize,
    pub cases: usize,
    /// Largest residual (or residual-to-bound ratio, see `bound`).
    pub worst: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub n_max: usize,
    pub rows: Vec<SelftestRow>,
    pub pass: bool,
}

fn row(check: &str, n: usize, cases: usize, worst: f64, bound: f64) -> SelftestRow {
    SelftestRow { check: check.to_owned(), n, cases, worst, bound, pass: worst <= bound }
}

fn coef(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    // Rounded so generated expressions print compactly and reparse exactly.
    (rng.random_range(lo..hi) * 1e4).round() / 1e4
}

fn gaussian_envelope(n: usize, b: f64) -> String {
    let squares: Vec<String> = (1..=n).map(|k| format!("(pow (coord {k}) 2)")).collect();
    format!("(exp (mul {b:?} (add {})))", squares.join(" "))
}

fn random_euclidean_scalar(rng: &mut ChaCha8Rng, n: usize) -> String {
    let i = rng.random_range(1..=n);
    let j = rng.random_range(1..=n);
    format!(
        "(mul (add {:?} (mul {:?} (coord {i})) (sin (mul {:?} (coord {j})))) {})",
        coef(rng, 0.5, 1.5),
        coef(rng, -1.0, 1.0),
        coef(rng, -1.0, 1.0),
        gaussian_envelope(n, -coef(rng, 0.3, 1.0))
    )
}

fn random_euclidean_field(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Result<FieldSpec> {
    let comps: Vec<String> = (0..m.max(2))
        .map(|_| format!(r#"{{"family": "custom", "expr": "{}"}}"#, random_euclidean_scalar(rng, n)))
        .collect();
    let json = if m == 0 {
        format!(r#"{{"family": "complex_pair", "re": {}, "im": {}, "domain": {{"euclidean": {n}}}}}"#, comps[0], comps[1])
    } else {
        format!(r#"{{"family": "vector_of_fields", "components": [{}], "domain": {{"euclidean": {n}}}}}"#, comps.join(","))
    };
    FieldSpec::from_json(&json)
}

fn random_sphere_scalar(rng: &mut ChaCha8Rng, n: usize, offset: f64) -> String {
    let i = rng.random_range(0..=n);
    let j = rng.random_range(0..=n);
    let k = rng.random_range(0..=n);
    format!(
        "(add {offset:?} (mul {:?} (coord {i})) (mul {:?} (coord {j}) (coord {k})) (mul {:?} (sin (coord {k}))))",
        coef(rng, -0.5, 0.5),
        coef(rng, -0.5, 0.5),
        coef(rng, -0.5, 0.5)
    )
}

fn random_sphere_complex(rng: &mut ChaCha8Rng, n: usize) -> Result<FieldSpec> {
    let amp = random_sphere_scalar(rng, n, 1.5);
    let phase = random_sphere_scalar(rng, n, 0.0);
    FieldSpec::from_json(&format!(
        r#"{{"family": "polar_complex", "amplitude": {{"family": "custom", "expr": "{amp}"}},
            "phase": {{"family": "custom", "expr": "{phase}"}}, "domain": {{"sphere_ambient": {}}}}}"#,
        n + 1
    ))
}

fn random_sphere_vector(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Result<FieldSpec> {
    let amp = random_sphere_scalar(rng, n, 1.5);
    let phase = random_sphere_scalar(rng, n, 0.0);
    let mut comps = vec![format!("(mul {amp} (cos {phase}))"), format!("(mul {amp} (sin {phase}))")];
    while comps.len() < m {
        comps.push(random_sphere_scalar(rng, n, 0.0));
    }
    let comps: Vec<String> = comps.iter().map(|e| format!(r#"{{"family": "custom", "expr": "{e}"}}"#)).collect();
    FieldSpec::from_json(&format!(
        r#"{{"family": "vector_of_fields", "components": [{}], "domain": {{"sphere_ambient": {}}}}}"#,
        comps.join(","),
        n + 1
    ))
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Point {
    Point::new((0..n).map(|_| rng.random_range(-radius..radius)).collect()).expect("finite")
}

fn random_sphere_point(rng: &mut ChaCha8Rng, dim: usize) -> Point {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.1 {
            return Point::new(v.iter().map(|x| x / norm).collect()).expect("finite");
        }
    }
}

/// Built-in families on `R^n` for the AD check.
fn ad_fields(rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<FieldSpec>> {
    let center: Vec<f64> = (0..n).map(|_| coef(rng, -0.5, 0.5)).collect();
    let k: Vec<f64> = (0..n).map(|_| coef(rng, -2.0, 2.0)).collect();
    let d = Domain::Euclidean(n);
    Ok(vec![
        FieldSpec::new(crate::fields::Family::GaussianReal { center, b: coef(rng, 0.3, 1.0) }, d)?,
        FieldSpec::chirped_gaussian(k, coef(rng, 0.3, 1.0))?,
        FieldSpec::radial_poly_gaussian(n, coef(rng, 0.5, 3.0), coef(rng, 0.3, 1.0))?,
        FieldSpec::new(crate::fields::Family::AffineHarmonic { a: coef(rng, -1.0, 1.0), b: coef(rng, -1.0, 1.0), j: 0 }, d)?,
        FieldSpec::custom(d, &random_euclidean_scalar(rng, n))?,
        random_euclidean_field(rng, n, 3)?,
    ])
}

/// Max relative gradient and Hessian errors of AD against central differences.
fn ad_errors(f: &FieldSpec, x: &Point) -> Result<(f64, f64)> {
    const H: f64 = 1e-5;
    let j2 = eval_jet2(f, x)?;
    let n = x.dim();
    let shifted = |d: &[(usize, f64)]| -> Result<Vec<f64>> {
        let mut y = x.coords().to_vec();
        for &(i, s) in d {
            y[i] += s;
        }
        f.values(&y)
    };
    let mut g_err: f64 = 0.0;
    let mut h_err: f64 = 0.0;
    for c in 0..j2.value.len() {
        let scale_g = j2.grad[c].iter().fold(j2.value[c].abs(), |m, v| m.max(v.abs())).max(1e-300);
        let scale_h = (0..n)
            .flat_map(|i| (0..n).map(move |k| (i, k)))
            .fold(scale_g, |m, (i, k)| m.max(j2.hess[c].get(i, k).abs()));
        for i in 0..n {
            let fd = (shifted(&[(i, H)])?[c] - shifted(&[(i, -H)])?[c]) / (2.0 * H);
            g_err = g_err.max((j2.grad[c][i] - fd).abs() / scale_g);
            for k in 0..n {
                let fd2 = (shifted(&[(i, H), (k, H)])?[c] - shifted(&[(i, H), (k, -H)])?[c]
                    - shifted(&[(i, -H), (k, H)])?[c]
                    + shifted(&[(i, -H), (k, -H)])?[c])
                    / (4.0 * H * H);
                h_err = h_err.max((j2.hess[c].get(i, k) - fd2).abs() / scale_h);
            }
        }
    }
    Ok((g_err, h_err))
}

/// The identity suite behind `selftest`.
pub fn selftest(n_max: usize, seed: u64, budget: &Budget) -> Result<SelftestReport> {
    if !(2..=4).contains(&n_max) {
        return Err(config_err("n_max", format!("must lie in 2..=4 (got {n_max})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();

    for n in 2..=n_max {
        let fields = ad_fields(&mut rng, n)?;
        let (mut g, mut h, mut cases) = (0.0f64, 0.0f64, 0);
        for i in 0..100 {
            let x = random_point(&mut rng, n, 1.5);
            let (ge, he) = ad_errors(&fields[i % fields.len()], &x)?;
            g = g.max(ge);
            h = h.max(he);
            cases += 1;
        }
        rows.push(row("ad_gradient_vs_finite_differences", n, cases, g, 1e-6));
        rows.push(row("ad_hessian_vs_second_differences", n, cases, h, 1e-4));
    }

    for n in 2..=n_max {
        let dim = n + 1;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = random_sphere_point(&mut rng, dim);
            for k in 0..dim {
                let f = FieldSpec::custom(Domain::SphereAmbient(dim), &format!("(coord {k})"))?;
                let t = &spherical_gradient(&f, &x)?[0];
                for j in 0..dim {
                    worst = worst.max((gamma_coordinate(j, k, &x)? - t.components[j]).abs());
                }
            }
        }
        rows.push(row("gamma_closed_form", n, 100, worst, 1e-12));

        let mut tangency: f64 = 0.0;
        let mut scaling: f64 = 0.0;
        for _ in 0..20 {
            let f = restrict_to_sphere(&random_sphere_complex(&mut rng, n)?)?;
            let x = random_sphere_point(&mut rng, dim);
            let j = eval_jet1(&f, &x)?;
            for g in &j.grad {
                tangency = tangency.max(g.iter().zip(x.coords()).map(|(a, b)| a * b).sum::<f64>().abs());
            }
            for lambda in [0.5, 2.0] {
                let y: Vec<f64> = x.coords().iter().map(|v| v * lambda).collect();
                for (a, b) in f.values(&y)?.iter().zip(&j.value) {
                    scaling = scaling.max((a - b).abs());
                }
            }
        }
        rows.push(row("extension_tangency", n, 20, tangency, 1e-12));
        rows.push(row("extension_homogeneity", n, 20, scaling, 1e-14));

        let mut ratio: f64 = 0.0;
        for _ in 0..5 {
            let a = FieldSpec::custom(Domain::SphereAmbient(dim), &random_sphere_scalar(&mut rng, n, 1.0))?;
            let b = FieldSpec::custom(Domain::SphereAmbient(dim), &random_sphere_scalar(&mut rng, n, 0.5))?;
            let j = rng.random_range(0..dim);
            let r = integration_by_parts_residual(&a, &b, j, budget)?;
            ratio = ratio.max(r.value / (10.0 * r.error_estimate));
        }
        rows.push(row("integration_by_parts_residual_over_10x_error", n, 5, ratio, 1.0));
    }

    for n in 2..=n_max {
        let mut worst: f64 = 0.0;
        let mut agreement: f64 = 0.0;
        let mut cases = 0;
        for m in [0, 2, 3, 4] {
            let f = random_euclidean_field(&mut rng, n, m)?;
            for _ in 0..25 {
                let x = random_point(&mut rng, n, 1.5);
                let s = amp_phase_split(&f, &x, Setting::Euclidean)?;
                let j = eval_jet1(&f, &x)?;
                let amp_sq: f64 = j.value.iter().map(|v| v * v).sum();
                if amp_sq.sqrt() <= 1e-6 {
                    continue;
                }
                let d = phase_derivative_direct(&f, &x, Setting::Euclidean)?;
                let mag = d.magnitude.expect("amplitude above threshold");
                let grad_sq: f64 = j.grad.iter().flatten().map(|g| g * g).sum();
                let amp_grad: Vec<f64> =
                    (0..n).map(|k| j.value.iter().zip(&j.grad).map(|(f, g)| f * g[k]).sum::<f64>()).collect();
                let amp_grad_sq = amp_grad.iter().map(|v| v * v).sum::<f64>() / amp_sq;
                let residual = (grad_sq - amp_grad_sq - amp_sq * mag * mag).abs() / grad_sq.max(1e-300);
                worst = worst.max(residual);
                agreement = agreement.max((s.amp_times_phase - mag * amp_sq.sqrt()).abs());
                cases += 1;
            }
        }
        rows.push(row("phase_identity_relative", n, cases, worst, 1e-10));
        rows.push(row("phase_split_vs_direct", n, cases, agreement, 1e-10));
    }

    for n in 2..=n_max {
        let (mut r1, mut r2, mut rv, mut mean_c, mut mean_v) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let cases = 3;
        for _ in 0..cases {
            let fc = random_sphere_complex(&mut rng, n)?;
            let d = variance_decomposition_residuals(&fc, n, budget)?;
            r1 = r1.max(d.res1.value / (10.0 * d.res1.error));
            let res2 = d.res2.expect("complex field");
            r2 = r2.max(res2.value / (10.0 * res2.error));
            let s = compute_stats(&fc, n, budget)?;
            for (v, e) in s.mean_identity.iter().zip(&s.mean_identity_error) {
                mean_c = mean_c.max(v.abs() / (10.0 * e));
            }
            let m = 2 + rng.random_range(0..2);
            let fv = random_sphere_vector(&mut rng, n, m)?;
            let d = variance_decomposition_residuals(&fv, n, budget)?;
            rv = rv.max(d.res1.value / (10.0 * d.res1.error));
            let s = compute_stats(&fv, n, budget)?;
            for (v, e) in s.mean_identity.iter().zip(&s.mean_identity_error) {
                mean_v = mean_v.max(v.abs() / (10.0 * e));
            }
        }
        rows.push(row("variance_decomposition_complex_res1_over_10x_error", n, cases, r1, 1.0));
        rows.push(row("variance_decomposition_complex_res2_over_10x_error", n, cases, r2, 1.0));
        rows.push(row("variance_decomposition_vector_over_10x_error", n, cases, rv, 1.0));
        rows.push(row("frequency_mean_complex_over_10x_error", n, cases, mean_c, 1.0));
        rows.push(row("frequency_mean_vector_over_10x_error", n, cases, mean_v, 1.0));
    }

    let params = CknParams::new(3, 3.0, 1.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..2 {
        let u = FieldSpec::custom(Domain::Euclidean(3), &random_euclidean_scalar(&mut rng, 3))?;
        let r = check_second_order(&u, &params, budget)?;
        let id = r.identity_residual.expect("second order reports carry the identity");
        worst = worst.max(id.value / (10.0 * id.error));
    }
    rows.push(row("hessian_laplacian_identity_over_10x_error", 3, 2, worst, 1.0));

    let pass = rows.iter().all(|r| r.pass);
    Ok(SelftestReport { seed, n_max, rows, pass })
}

fn run_selftest(cfg: &RunConfig) -> Result<Outcome> {
    let report = selftest(cfg.n_max, cfg.seed, &cfg.budget)?;
    let failed: Vec<String> = report.rows.iter().filter(|r| !r.pass).map(|r| format!("{} (n = {})", r.check, r.n)).collect();
    Ok(Outcome {
        text: to_json17(&report)?,
        pass: report.pass,
        message: (!report.pass).then(|| format!("failed rows: {}", failed.join(", "))),
    })
}

fn thread_count(cfg: &RunConfig) -> Result<Option<usize>> {
    if let Some(t) = cfg.threads {
        return Ok(Some(t));
    }
    match std::env::var("CKN_LAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|t| *t > 0)
            .map(Some)
            .ok_or_else(|| config_err("CKN_LAB_THREADS", format!("`{v}` is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

/// Executes a resolved configuration.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count(cfg)? {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| config_err("threads", e.to_string()))?;
    pool.install(|| match cfg.command {
        Command::Verify => verify(cfg),
        Command::Sweep => run_sweep(cfg),
        Command::Search => run_search(cfg),
        Command::Selftest => run_selftest(cfg),
    })
}

/// Parses arguments, runs, writes output, and returns the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    let outcome = RunConfig::resolve(cli.command, &cli.flags).and_then(|cfg| {
        let outcome = execute(&cfg)?;
        match &cfg.out {
            Some(path) => std::fs::write(path, format!("{}\n", outcome.text.trim_end()))?,
            None => writeln!(stdout, "{}", outcome.text.trim_end())?,
        }
        Ok(outcome)
    });
    match outcome {
        Ok(o) if o.pass => EXIT_PASS,
        Ok(o) => {
            let _ = writeln!(stderr, "check failed: {}", o.message.unwrap_or_default());
            EXIT_FAIL
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_USAGE
        }
    }
}
