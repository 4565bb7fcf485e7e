use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use driftlab::chaos::{chaos_terms, default_dipole, rotation_experiment, variance_oracle, ChaosConfig, ChaosEngine};
use driftlab::counterexamples::{
    nonexistence_diagnostic, nonexistence_eps_invariance, nonuniqueness_gap, radial_drift_threshold, DiagnosticVerdict, NonexistenceConfig,
    NonuniquenessConfig, RadialConfig,
};
use driftlab::estimators::{
    aleksandrov_ratio, bump_basis, caloric_oscillation_mc, exit_mean, exit_tail, harnack_ratio_mc, hitting_experiment, laplace_exit,
    moderated_drift, moment_bound, nested_cell_ladder, occupation_experiment, potential_many, random_family, resolvent_norm_scan,
    time_slab_targets, yukawa_potential, Anchor,
};
use driftlab::gehring::{
    g_bar, gamma_stop, greedy_select, improved_exponent, random_input, reverse_holder_constant, tau_lambda_decompose, BoxFunction,
    CellField, DyadicBox, ExponentConfig,
};
use driftlab::green::{
    a_infty_check, analytic_green_bm, doubling_scan, green_histogram, max_interior_z, negative_power_integral, reverse_holder_scan,
    CylinderFamily, GammaSampler, GreenGrid,
};
use driftlab::grid::{GridDomain, GridFunction};
use driftlab::heat::SpaceGrid;
use driftlab::morrey::{
    hat_b, heat_potential, maximal_function, mixed_norm, morrey_norm, normalized_norm, tightness, MixedNormSpec, SearchPolicy,
};
use driftlab::sde::{first_exit, hitting_time, refine_study, simulate, PathFunctional, Region, SimSpec};
use driftlab::stats::CurvePoint;
use driftlab::{Cylinder, MatrixField, ScalarField, SpaceTimePoint, VectorField};

use crate::config::{parse_params, ConfigError};

/// A CSV table emitted next to the report.
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: impl IntoIterator<Item = f64>) {
        self.rows.push(row.into_iter().map(fmt_num).collect());
    }

    fn curve(name: &str, ladder: &str, pts: &[CurvePoint]) -> Self {
        let mut t = Self::new(name, &[ladder, "estimate", "std_error"]);
        for p in pts {
            t.push([p.ladder, p.estimate, p.std_error]);
        }
        t
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Default)]
pub struct Output {
    pub result: Value,
    pub tables: Vec<Table>,
    /// Raw artifacts (name, bytes).
    pub files: Vec<(String, Vec<u8>)>,
    /// Built-in pass/fail of diagnostic operations.
    pub verdict: Option<bool>,
}

#[derive(Debug)]
pub enum OpError {
    Config(String),
    Run(driftlab::Error),
    Io(String),
}

impl std::fmt::Display for OpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OpError::Config(s) | OpError::Io(s) => f.write_str(s),
            OpError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for OpError {
    fn from(e: ConfigError) -> Self {
        OpError::Config(e.0)
    }
}

impl From<driftlab::Error> for OpError {
    fn from(e: driftlab::Error) -> Self {
        OpError::Run(e)
    }
}

type OpResult = Result<Output, OpError>;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn out(result: impl Serialize) -> Output {
    Output {
        result: to_value(&result),
        ..Default::default()
    }
}

fn params<T: DeserializeOwned>(v: &Value) -> Result<T, OpError> {
    Ok(parse_params(v)?)
}

fn validated(spec: &SimSpec) -> Result<(), OpError> {
    spec.validate()?;
    Ok(())
}

pub struct OpInfo {
    pub name: &'static str,
    pub summary: &'static str,
    run: fn(&Value) -> OpResult,
}

impl OpInfo {
    pub fn run(&self, p: &Value) -> OpResult {
        (self.run)(p)
    }
}

pub fn find(name: &str) -> Option<&'static OpInfo> {
    OPS.iter().find(|o| o.name == name)
}

macro_rules! op {
    ($name:literal, $summary:literal, $f:ident) => {
        OpInfo {
            name: $name,
            summary: $summary,
            run: $f,
        }
    };
}

pub static OPS: &[OpInfo] = &[
    op!("eval-drift", "drift values at space-time points", eval_drift),
    op!("eval-sigma", "diffusion matrices at space-time points", eval_sigma),
    op!("dilate", "parabolic dilation of a drift or diffusion", dilate),
    op!("mixed-norm", "mixed L_{q,p} norm and normalized norm on a cylinder", mixed_norm_op),
    op!(
        "morrey-norm",
        "Morrey norm by cylinder search (or normalized norm on a given cylinder)",
        morrey_norm_op
    ),
    op!("hat-b", "Morrey-type size of a drift below a radius cap", hat_b_op),
    op!("tightness", "exponent bookkeeping for a Morrey triple", tightness_op),
    op!("maximal-function", "parabolic maximal function on a grid", maximal_op),
    op!("heat-potential", "heat potential on a grid", heat_potential_op),
    op!("simulate", "Euler-Maruyama ensemble with optional trajectory dump", simulate_op),
    op!("first-exit", "per-path first exit records", first_exit_op),
    op!("hitting-time", "per-path hitting records", hitting_op),
    op!("refine-study", "path functional under step refinement", refine_op),
    op!("potential", "resolvent potentials of scalar functions", potential_op),
    op!(
        "aleksandrov-ratio",
        "potential over normalized norm, sup over a family",
        aleksandrov_op
    ),
    op!("moderated-drift", "moderated drift over anchors", moderated_op),
    op!("exit-mean", "mean exit time from a ball", exit_mean_op),
    op!("exit-tail", "exit-time tail curve and exponential fit", exit_tail_op),
    op!("laplace-exit", "Laplace transform of the cylinder exit time", laplace_op),
    op!("occupation", "occupation of nested sets before exit", occupation_op),
    op!("hitting", "hitting probabilities of target sets before exit", hitting_exp_op),
    op!("harnack", "Harnack ratio over a bump basis", harnack_op),
    op!("caloric-oscillation", "oscillation decay of a caloric function", oscillation_op),
    op!("resolvent-scan", "resolvent norm ratio over a lambda ladder", resolvent_op),
    op!("moment-bound", "fourth moment of the running maximum", moment_op),
    op!("green-histogram", "Monte Carlo Green density", green_histogram_op),
    op!("analytic-green", "Brownian Green density on a grid", analytic_green_op),
    op!("reverse-holder-scan", "reverse-Hölder ratios of a Green density", rh_scan_op),
    op!("doubling-scan", "doubling ratio of the spatial marginal", doubling_op),
    op!("a-infty", "A-infinity fit of the spatial marginal", a_infty_op),
    op!("negative-power", "negative power integral of a Green density", negative_power_op),
    op!("chaos-apply", "T or Q_k applied to a function on a node grid", chaos_apply_op),
    op!("chaos-terms", "variance, chaos terms and remainders", chaos_terms_op),
    op!("variance-oracle", "variance of f(x0 + w_t0)", variance_op),
    op!(
        "rotation",
        "remainder table for the rotation diffusion and the identity",
        rotation_op
    ),
    op!("gamma-stop", "stopping level of a dyadic box", gamma_op),
    op!(
        "reverse-holder-constant",
        "exhaustive dyadic reverse-Hölder constant",
        rh_constant_op
    ),
    op!("improved-exponent", "improved integrability exponent", exponent_op),
    op!("gehring-select", "stopping-time decomposition and greedy selection", select_op),
    op!(
        "nonexistence",
        "refinement ladder of the time-space weight under the singular drift",
        nonexistence_op
    ),
    op!("eps-invariance", "nonexistence ladders across drift sizes", eps_invariance_op),
    op!(
        "nonuniqueness",
        "gap between starts on both sides of the discontinuity",
        nonuniqueness_op
    ),
    op!(
        "radial-threshold",
        "drift integral ladders of the radial drift across sizes",
        radial_op
    ),
];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PointsCfg<F> {
    field: F,
    points: Vec<SpaceTimePoint>,
}

fn eval_drift(v: &Value) -> OpResult {
    let c: PointsCfg<VectorField> = params(v)?;
    c.field.validate()?;
    let vals = c.points.iter().map(|p| c.field.eval(p)).collect::<driftlab::Result<Vec<_>>>()?;
    Ok(out(json!({ "kind": c.field.kind_name(), "values": vals })))
}

fn eval_sigma(v: &Value) -> OpResult {
    let c: PointsCfg<MatrixField> = params(v)?;
    c.field.validate()?;
    let vals = c.points.iter().map(|p| c.field.eval(p)).collect::<driftlab::Result<Vec<_>>>()?;
    Ok(out(json!({ "kind": c.field.kind_name(), "cols": c.field.cols(), "values": vals })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DilateCfg {
    #[serde(default)]
    drift: Option<VectorField>,
    #[serde(default)]
    sigma: Option<MatrixField>,
    c: f64,
}

fn dilate(v: &Value) -> OpResult {
    let c: DilateCfg = params(v)?;
    let drift = c.drift.map(|b| b.dilate(c.c)).transpose()?;
    let sigma = c.sigma.map(|s| s.dilate(c.c)).transpose()?;
    Ok(out(json!({ "drift": drift, "sigma": sigma })))
}

/// A scalar function sampled on a grid, either a catalog field or `|b|` of a drift.
#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum Source {
    Scalar(ScalarField),
    DriftNorm(VectorField),
}

impl Source {
    fn sample(&self, grid: &GridDomain) -> Result<GridFunction<f64>, OpError> {
        Ok(match self {
            Source::Scalar(f) => {
                f.validate()?;
                GridFunction::sample_scalar(grid.clone(), f)?
            }
            Source::DriftNorm(b) => {
                b.validate()?;
                GridFunction::sample_drift_norm(grid.clone(), b)?
            }
        })
    }
}

fn checked_grid(g: GridDomain) -> Result<GridDomain, OpError> {
    g.validate()?;
    Ok(g)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NormCfg {
    source: Source,
    grid: GridDomain,
    spec: MixedNormSpec,
    #[serde(default)]
    region: Option<Cylinder>,
    #[serde(default)]
    search: SearchPolicy,
}

fn mixed_norm_op(v: &Value) -> OpResult {
    let c: NormCfg = params(v)?;
    c.spec.validate()?;
    let region = c
        .region
        .ok_or_else(|| OpError::Config("config error at `params.region`: required".into()))?;
    let f = c.source.sample(&checked_grid(c.grid)?)?;
    Ok(out(json!({
        "mixed_norm": mixed_norm(&f, &c.spec, &region)?,
        "normalized_norm": normalized_norm(&f, &c.spec, &region)?,
        "grid_fingerprint": f.fingerprint(),
    })))
}

fn morrey_norm_op(v: &Value) -> OpResult {
    let c: NormCfg = params(v)?;
    c.spec.validate()?;
    let f = c.source.sample(&checked_grid(c.grid)?)?;
    if let Some(region) = &c.region {
        return Ok(out(json!({
            "value": normalized_norm(&f, &c.spec, region)?,
            "mixed_norm": mixed_norm(&f, &c.spec, region)?,
            "region": region,
            "grid_fingerprint": f.fingerprint(),
        })));
    }
    let r = morrey_norm(&f, &c.spec, &c.search)?;
    let mut t = Table::new("levels", &["rho", "value", "n_cylinders"]);
    for l in &r.levels {
        t.push([l.rho, l.value, l.n_cylinders as f64]);
    }
    Ok(Output { tables: vec![t], ..out(r) })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HatBCfg {
    drift: VectorField,
    grid: GridDomain,
    spec: MixedNormSpec,
    rho_b: f64,
    #[serde(default)]
    search: SearchPolicy,
    /// Compare `hat_b(dilate(b, c), rho_b)` on `grid` against `hat_b(b, c rho_b)`
    /// on `grid` scaled parabolically by `c`.
    #[serde(default)]
    dilations: Vec<f64>,
}

fn scaled_grid(g: &GridDomain, c: f64) -> GridDomain {
    GridDomain {
        t_lo: g.t_lo * c * c,
        t_hi: g.t_hi * c * c,
        n_t: g.n_t,
        x_lo: g.x_lo.iter().map(|x| x * c).collect(),
        x_hi: g.x_hi.iter().map(|x| x * c).collect(),
        n_x: g.n_x.clone(),
    }
}

fn hat_b_op(v: &Value) -> OpResult {
    let c: HatBCfg = params(v)?;
    c.drift.validate()?;
    c.spec.validate()?;
    let grid = checked_grid(c.grid)?;
    let base = hat_b(&c.drift, &c.spec, c.rho_b, grid.clone(), &c.search)?;
    if c.dilations.is_empty() {
        return Ok(out(base));
    }
    let mut rows = Vec::new();
    let mut max_gap: f64 = 0.0;
    let mut t = Table::new("dilation", &["c", "dilated", "scaled", "rel_gap"]);
    for &k in &c.dilations {
        let lhs = hat_b(&c.drift.dilate(k)?, &c.spec, c.rho_b, grid.clone(), &c.search)?.value;
        let rhs = hat_b(&c.drift, &c.spec, k * c.rho_b, scaled_grid(&grid, k), &c.search)?.value;
        let gap = (lhs - rhs).abs() / rhs.abs();
        max_gap = max_gap.max(gap);
        t.push([k, lhs, rhs, gap]);
        rows.push(json!({ "c": k, "dilated": lhs, "scaled": rhs, "rel_gap": gap }));
    }
    Ok(Output {
        result: json!({ "kind": c.drift.kind_name(), "value": base.value, "dilation": rows, "max_rel_gap": max_gap }),
        tables: vec![t],
        ..Default::default()
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TightCfg {
    mu: f64,
    #[serde(with = "exponent")]
    q: f64,
    #[serde(with = "exponent")]
    p: f64,
}

mod exponent {
    use serde::{Deserialize, Deserializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

fn tightness_op(v: &Value) -> OpResult {
    let c: TightCfg = params(v)?;
    Ok(out(tightness(c.mu, c.q, c.p)?))
}

fn grid_table(name: &str, g: &GridFunction<f64>) -> Table {
    let dom = &g.domain;
    let d = dom.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.push("value".into());
    let mut t = Table {
        name: name.into(),
        header,
        rows: Vec::new(),
    };
    let ns = dom.n_space();
    let mut x = vec![0.0; d];
    for it in 0..dom.n_t {
        for ix in 0..ns {
            dom.space_center(ix, &mut x);
            let mut row = vec![dom.t_center(it)];
            row.extend(&x);
            row.push(g.values[it * ns + ix]);
            t.push(row);
        }
    }
    t
}

fn grid_summary(g: &GridFunction<f64>) -> Value {
    let max = g.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    json!({ "domain": g.domain, "max": max, "fingerprint": g.fingerprint(), "provenance": g.provenance })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaximalCfg {
    source: Source,
    grid: GridDomain,
    #[serde(default)]
    beta: f64,
}

fn maximal_op(v: &Value) -> OpResult {
    let c: MaximalCfg = params(v)?;
    let f = c.source.sample(&checked_grid(c.grid)?)?;
    let m = maximal_function(&f.abs(), c.beta)?;
    Ok(Output {
        result: grid_summary(&m),
        tables: vec![grid_table("maximal", &m)],
        ..Default::default()
    })
}

fn default_k() -> f64 {
    4.0
}
fn default_nodes() -> usize {
    8
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeatPotentialCfg {
    source: Source,
    grid: GridDomain,
    alpha: f64,
    #[serde(default = "default_k")]
    k: f64,
    #[serde(default = "default_nodes")]
    nodes: usize,
}

fn heat_potential_op(v: &Value) -> OpResult {
    let c: HeatPotentialCfg = params(v)?;
    let f = c.source.sample(&checked_grid(c.grid)?)?;
    let p = heat_potential(&f, c.alpha, c.k, c.nodes)?;
    Ok(Output {
        result: grid_summary(&p),
        tables: vec![grid_table("potential", &p)],
        ..Default::default()
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateCfg {
    spec: SimSpec,
    #[serde(default)]
    stride: Option<usize>,
}

fn simulate_op(v: &Value) -> OpResult {
    let c: SimulateCfg = params(v)?;
    validated(&c.spec)?;
    let batch = simulate(&c.spec, c.stride)?;
    let mut files = Vec::new();
    if c.stride.is_some() {
        let tmp = std::env::temp_dir().join(format!("driftlab-{}-{}.bin", std::process::id(), batch.fingerprint));
        batch.write_trajectories(&tmp)?;
        let bytes = std::fs::read(&tmp).map_err(|e| OpError::Io(e.to_string()))?;
        let _ = std::fs::remove_file(&tmp);
        files.push(("trajectories.bin".to_string(), bytes));
    }
    let d = c.spec.dim();
    let mut t = Table::new("final_states", &[]);
    t.header = std::iter::once("path_id".to_string())
        .chain((1..=d).map(|i| format!("x{i}")))
        .collect();
    for (p, row) in batch.final_states.chunks(d).enumerate() {
        t.push(std::iter::once(p as f64).chain(row.iter().copied()));
    }
    Ok(Output {
        result: to_value(&batch),
        tables: vec![t],
        files,
        verdict: None,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionCfg {
    spec: SimSpec,
    region: Region,
}

fn records_output(spec: &SimSpec, recs: Vec<driftlab::sde::ExitRecord>, name: &str) -> Output {
    let d = spec.dim();
    let mut t = Table::new(name, &[]);
    t.header = ["path_id", "time", "censored", "capped", "diverged"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=d).map(|i| format!("x{i}")))
        .collect();
    let mut n_censored = 0usize;
    let mut n_diverged = 0usize;
    let mut sum = 0.0;
    for (p, r) in recs.iter().enumerate() {
        n_censored += r.censored() as usize;
        n_diverged += r.diverged as usize;
        sum += r.time;
        // censored paths carry no state
        let state = (0..d).map(|i| r.state.get(i).copied().unwrap_or(f64::NAN));
        t.push(
            [
                p as f64,
                r.time,
                r.censored() as u8 as f64,
                r.capped as u8 as f64,
                r.diverged as u8 as f64,
            ]
            .into_iter()
            .chain(state),
        );
    }
    Output {
        result: json!({
            "fingerprint": spec.fingerprint(),
            "n_paths": recs.len(),
            "n_censored": n_censored,
            "n_diverged": n_diverged,
            "mean_time": sum / recs.len().max(1) as f64,
        }),
        tables: vec![t],
        ..Default::default()
    }
}

fn first_exit_op(v: &Value) -> OpResult {
    let c: RegionCfg = params(v)?;
    validated(&c.spec)?;
    let recs = first_exit(&c.spec, &c.region)?;
    Ok(records_output(&c.spec, recs, "exits"))
}

fn hitting_op(v: &Value) -> OpResult {
    let c: RegionCfg = params(v)?;
    validated(&c.spec)?;
    let recs = hitting_time(&c.spec, &c.region)?;
    Ok(records_output(&c.spec, recs, "hits"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RefineCfg {
    spec: SimSpec,
    functional: PathFunctional,
    h_ladder: Vec<f64>,
}

fn refine_op(v: &Value) -> OpResult {
    let c: RefineCfg = params(v)?;
    validated(&c.spec)?;
    let reps = refine_study(&c.spec, &c.functional, &c.h_ladder)?;
    let pts: Vec<CurvePoint> = c
        .h_ladder
        .iter()
        .zip(&reps)
        .map(|(&h, r)| CurvePoint {
            ladder: h,
            estimate: r.value,
            std_error: r.std_error,
        })
        .collect();
    Ok(Output {
        result: json!({ "functional": c.functional, "reports": reps }),
        tables: vec![Table::curve("ladder", "h", &pts)],
        ..Default::default()
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialCfg {
    spec: SimSpec,
    functions: Vec<ScalarField>,
    lambda: f64,
    #[serde(default)]
    stop: Option<Region>,
    /// Compare against the Yukawa quadrature (Brownian motion, `d = 3`, no stop).
    #[serde(default)]
    yukawa_oracle: bool,
}

fn potential_op(v: &Value) -> OpResult {
    let c: PotentialCfg = params(v)?;
    validated(&c.spec)?;
    for f in &c.functions {
        f.validate()?;
    }
    let reps = potential_many(&c.spec, &c.functions, c.lambda, c.stop.as_ref())?;
    let mut rows = Vec::new();
    let mut max_z: f64 = 0.0;
    for (f, r) in c.functions.iter().zip(&reps) {
        let oracle = if c.yukawa_oracle {
            Some(yukawa_potential(f, &c.spec.x0, c.lambda)?)
        } else {
            None
        };
        let z = oracle.map(|o| (r.value - o) / r.std_error);
        if let Some(z) = z {
            max_z = max_z.max(z.abs());
        }
        rows.push(json!({ "function": f, "estimate": r, "oracle": oracle, "z": z }));
    }
    Ok(out(
        json!({ "lambda": c.lambda, "rows": rows, "max_abs_z": if c.yukawa_oracle { Some(max_z) } else { None } }),
    ))
}

fn default_grid_n() -> usize {
    16
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AleksandrovCfg {
    spec: SimSpec,
    rho: f64,
    norm: MixedNormSpec,
    #[serde(default)]
    family: Option<Vec<ScalarField>>,
    #[serde(default)]
    n_indicators: usize,
    #[serde(default)]
    n_bumps: usize,
    #[serde(default)]
    family_seed: u64,
    #[serde(default = "default_grid_n")]
    grid_n: usize,
}

fn aleksandrov_op(v: &Value) -> OpResult {
    let c: AleksandrovCfg = params(v)?;
    validated(&c.spec)?;
    c.norm.validate()?;
    let family = match c.family {
        Some(f) => f,
        None => random_family(c.spec.t0, &c.spec.x0, c.rho, c.n_indicators, c.n_bumps, c.family_seed),
    };
    Ok(out(aleksandrov_ratio(&c.spec, &family, c.rho, &c.norm, c.grid_n)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeratedCfg {
    spec: SimSpec,
    rho: f64,
    anchors: Vec<Anchor>,
}

fn moderated_op(v: &Value) -> OpResult {
    let c: ModeratedCfg = params(v)?;
    validated(&c.spec)?;
    Ok(out(moderated_drift(&c.spec, c.rho, &c.anchors)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExitMeanCfg {
    spec: SimSpec,
    rho: f64,
    #[serde(default)]
    continuity_correction: bool,
}

fn exit_mean_op(v: &Value) -> OpResult {
    let c: ExitMeanCfg = params(v)?;
    validated(&c.spec)?;
    Ok(out(exit_mean(&c.spec, c.rho, c.continuity_correction)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExitTailCfg {
    spec: SimSpec,
    rho: f64,
    t_ladder: Vec<f64>,
    #[serde(default)]
    s_ladder: Vec<f64>,
}

fn exit_tail_op(v: &Value) -> OpResult {
    let c: ExitTailCfg = params(v)?;
    validated(&c.spec)?;
    let r = exit_tail(&c.spec, c.rho, &c.t_ladder, &c.s_ladder)?;
    Ok(Output {
        tables: vec![Table::curve("tail", "T", &r.curve)],
        ..out(r)
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LaplaceCfg {
    spec: SimSpec,
    rho: f64,
    lambdas: Vec<f64>,
}

fn laplace_op(v: &Value) -> OpResult {
    let c: LaplaceCfg = params(v)?;
    validated(&c.spec)?;
    let r = laplace_exit(&c.spec, c.rho, &c.lambdas)?;
    Ok(Output {
        tables: vec![Table::curve("laplace", "lambda", &r.curve)],
        ..out(r)
    })
}

fn default_kappa() -> f64 {
    0.5
}
fn default_cells() -> usize {
    8
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OccupationCfg {
    spec: SimSpec,
    radius: f64,
    #[serde(default = "default_kappa")]
    kappa: f64,
    /// Start time and center of the cylinder.
    s: f64,
    y: Vec<f64>,
    /// Volume fractions of the nested sets.
    fractions: Vec<f64>,
    #[serde(default = "default_cells")]
    cells_per_axis: usize,
    n_starts: usize,
}

fn ladder_table(name: &str, rows: &[driftlab::estimators::LadderRow]) -> Table {
    let mut t = Table::new(name, &["q", "estimate", "std_error"]);
    for r in rows {
        t.push([r.q, r.estimate.value, r.estimate.std_error]);
    }
    t
}

fn occupation_op(v: &Value) -> OpResult {
    let c: OccupationCfg = params(v)?;
    validated(&c.spec)?;
    let gammas = nested_cell_ladder(c.s, &c.y, c.radius, &c.fractions, c.cells_per_axis)?;
    let r = occupation_experiment(&c.spec, c.radius, c.kappa, c.s, &c.y, &gammas, c.n_starts)?;
    Ok(Output {
        tables: vec![ladder_table("occupation", &r.rows)],
        ..out(r)
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HittingExpCfg {
    spec: SimSpec,
    radius: f64,
    #[serde(default = "default_kappa")]
    kappa: f64,
    s: f64,
    y: Vec<f64>,
    /// Relative thicknesses of the time-slab targets.
    xis: Vec<f64>,
    #[serde(default = "default_cells")]
    cells_per_axis: usize,
    n_starts: usize,
}

fn hitting_exp_op(v: &Value) -> OpResult {
    let c: HittingExpCfg = params(v)?;
    validated(&c.spec)?;
    let targets = time_slab_targets(c.s, &c.y, c.radius, &c.xis, c.cells_per_axis)?;
    let r = hitting_experiment(&c.spec, c.radius, c.kappa, c.s, &c.y, &targets, c.n_starts)?;
    Ok(Output {
        tables: vec![ladder_table("hitting", &r.rows)],
        ..out(r)
    })
}

fn default_lattice() -> usize {
    5
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HarnackCfg {
    spec: SimSpec,
    radius: f64,
    horizon: f64,
    spacing: f64,
    count: usize,
    width: f64,
    #[serde(default = "default_lattice")]
    lattice: usize,
}

fn harnack_op(v: &Value) -> OpResult {
    let c: HarnackCfg = params(v)?;
    validated(&c.spec)?;
    let basis = bump_basis(&c.spec.x0, c.spacing, c.count, c.width);
    Ok(out(harnack_ratio_mc(&c.spec, c.radius, c.horizon, &basis, c.lattice)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OscillationCfg {
    spec: SimSpec,
    f: ScalarField,
    horizon: f64,
    radii: Vec<f64>,
    #[serde(default = "default_lattice")]
    lattice: usize,
}

fn oscillation_op(v: &Value) -> OpResult {
    let c: OscillationCfg = params(v)?;
    validated(&c.spec)?;
    c.f.validate()?;
    let r = caloric_oscillation_mc(&c.spec, &c.f, c.horizon, &c.radii, c.lattice)?;
    let mut t = Table::new("oscillation", &["r", "oscillation"]);
    for (a, b) in &r.rows {
        t.push([*a, *b]);
    }
    Ok(Output { tables: vec![t], ..out(r) })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolventCfg {
    spec: SimSpec,
    f: ScalarField,
    lambdas: Vec<f64>,
    norm: MixedNormSpec,
    grid: GridDomain,
    region: Cylinder,
}

fn resolvent_op(v: &Value) -> OpResult {
    let c: ResolventCfg = params(v)?;
    validated(&c.spec)?;
    c.f.validate()?;
    c.norm.validate()?;
    let r = resolvent_norm_scan(&c.spec, &c.f, &c.lambdas, &c.norm, &checked_grid(c.grid)?, &c.region)?;
    let mut t = Table::new("resolvent", &["lambda", "ratio"]);
    for (a, b) in &r.rows {
        t.push([*a, *b]);
    }
    Ok(Output { tables: vec![t], ..out(r) })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentCfg {
    spec: SimSpec,
    ts: Vec<f64>,
}

fn moment_op(v: &Value) -> OpResult {
    let c: MomentCfg = params(v)?;
    validated(&c.spec)?;
    let r = moment_bound(&c.spec, &c.ts)?;
    let mut t = Table::new("moments", &["t", "moment", "std_error", "ratio"]);
    for row in &r.rows {
        t.push([row.0, row.1, row.2, row.3]);
    }
    Ok(Output { tables: vec![t], ..out(r) })
}

fn green_tables(g: &GreenGrid) -> Result<Table, OpError> {
    let mut buf = Vec::new();
    g.write_csv(&mut buf)?;
    let text = String::from_utf8(buf).map_err(|e| OpError::Io(e.to_string()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().split(',').map(str::to_string).collect();
    Ok(Table {
        name: "green".into(),
        header,
        rows: lines.map(|l| l.split(',').map(str::to_string).collect()).collect(),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GreenHistCfg {
    spec: SimSpec,
    lambda: f64,
    grid: GridDomain,
    #[serde(default)]
    compare_analytic: bool,
}

fn green_histogram_op(v: &Value) -> OpResult {
    let c: GreenHistCfg = params(v)?;
    validated(&c.spec)?;
    let grid = checked_grid(c.grid)?;
    let g = green_histogram(&c.spec, c.lambda, grid.clone())?;
    let cmp = if c.compare_analytic {
        let oracle = analytic_green_bm(c.lambda, &c.spec.x0, grid)?;
        let (z, n) = max_interior_z(&g, &oracle)?;
        Some(json!({ "max_interior_z": z, "n_interior": n }))
    } else {
        None
    };
    Ok(Output {
        result: json!({ "summary": g.summary(), "comparison": cmp }),
        tables: vec![green_tables(&g)?],
        ..Default::default()
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalyticCfg {
    lambda: f64,
    x0: Vec<f64>,
    grid: GridDomain,
}

fn analytic_green_op(v: &Value) -> OpResult {
    let c: AnalyticCfg = params(v)?;
    let g = analytic_green_bm(c.lambda, &c.x0, checked_grid(c.grid)?)?;
    Ok(Output {
        result: to_value(&g.summary()),
        tables: vec![green_tables(&g)?],
        ..Default::default()
    })
}

/// Where a Green density comes from.
#[derive(Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
enum GreenSource {
    Analytic { lambda: f64, x0: Vec<f64>, grid: GridDomain },
    Histogram { spec: SimSpec, lambda: f64, grid: GridDomain },
    Constant { c: f64, grid: GridDomain },
}

impl GreenSource {
    fn density(&self) -> Result<GridFunction<f64>, OpError> {
        Ok(match self {
            GreenSource::Analytic { lambda, x0, grid } => analytic_green_bm(*lambda, x0, checked_grid(grid.clone())?)?.density,
            GreenSource::Histogram { spec, lambda, grid } => {
                validated(spec)?;
                green_histogram(spec, *lambda, checked_grid(grid.clone())?)?.density
            }
            GreenSource::Constant { c, grid } => GridFunction::constant(checked_grid(grid.clone())?, *c)?.declare_nonnegative(*c >= 0.0),
        })
    }

    fn marginal(&self) -> Result<GridFunction<f64>, OpError> {
        let g = self.density()?;
        let lambda = match self {
            GreenSource::Analytic { lambda, .. } | GreenSource::Histogram { lambda, .. } => *lambda,
            GreenSource::Constant { .. } => 1.0,
        };
        let gg = GreenGrid {
            lambda,
            x0: vec![0.0; g.dim()],
            density: g,
            std_error: None,
            n_paths: None,
            n_diverged: 0,
        };
        Ok(gg.marginal()?)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RhScanCfg {
    source: GreenSource,
    p: f64,
    #[serde(default)]
    family: CylinderFamily,
}

fn rh_scan_op(v: &Value) -> OpResult {
    let c: RhScanCfg = params(v)?;
    let g = c.source.density()?;
    let r = reverse_holder_scan(&g, c.p, &c.family)?;
    let mut t = Table::new("cylinders", &["t", "rho", "ratio"]);
    for row in &r.rows {
        t.push([row.t, row.rho, row.ratio]);
    }
    Ok(Output { tables: vec![t], ..out(r) })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DoublingCfg {
    source: GreenSource,
    #[serde(default)]
    max_side: Option<usize>,
    /// Scan the density slab by slab instead of the spatial marginal.
    #[serde(default)]
    full: bool,
}

fn doubling_op(v: &Value) -> OpResult {
    let c: DoublingCfg = params(v)?;
    let g = if c.full { c.source.density()? } else { c.source.marginal()? };
    Ok(out(doubling_scan(&g, c.max_side)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AInftyCfg {
    source: GreenSource,
    center: Vec<f64>,
    half: f64,
    sampler: GammaSampler,
    mu_grid: Vec<f64>,
}

fn a_infty_op(v: &Value) -> OpResult {
    let c: AInftyCfg = params(v)?;
    let g = c.source.marginal()?;
    Ok(out(a_infty_check(&g, &c.center, c.half, &c.sampler, &c.mu_grid)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NegPowerCfg {
    source: GreenSource,
    mu: f64,
    region: Cylinder,
    eps: f64,
}

fn negative_power_op(v: &Value) -> OpResult {
    let c: NegPowerCfg = params(v)?;
    let g = c.source.density()?;
    Ok(out(negative_power_integral(&g, c.mu, &c.region, c.eps)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeGrid {
    center: Vec<f64>,
    half: f64,
    n: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChaosApplyCfg {
    f: ScalarField,
    sigma: MatrixField,
    grid: NodeGrid,
    t: f64,
    s: f64,
    /// Column of `Q_k`; `T_{t,s}` when absent.
    #[serde(default)]
    k: Option<usize>,
}

fn chaos_apply_op(v: &Value) -> OpResult {
    let c: ChaosApplyCfg = params(v)?;
    c.f.validate()?;
    c.sigma.validate()?;
    let grid = SpaceGrid::centered(&c.grid.center, c.grid.half, c.grid.n)?;
    let eng = ChaosEngine::new(grid.clone(), c.sigma)?;
    let f = eng.sample(&c.f, c.s)?;
    let g = match c.k {
        None => eng.apply_t(&f, c.t, c.s)?,
        Some(k) => eng.apply_q(k, &f, c.t, c.s)?,
    };
    let d = grid.dim();
    let mut t = Table::new("nodes", &[]);
    t.header = (1..=d)
        .map(|i| format!("x{i}"))
        .chain(std::iter::once("value".to_string()))
        .collect();
    let mut idx = vec![0usize; d];
    for (node, val) in g.iter().enumerate() {
        let mut r = node;
        for a in (0..d).rev() {
            idx[a] = r % grid.n[a];
            r /= grid.n[a];
        }
        t.push((0..d).map(|a| grid.lo[a] + idx[a] as f64 * grid.h[a]).chain(std::iter::once(*val)));
    }
    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Output {
        result: json!({ "operator": c.k.map_or("T".to_string(), |k| format!("Q_{k}")), "min": min, "max": max, "n_nodes": g.len() }),
        tables: vec![t],
        ..Default::default()
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChaosCfg {
    f: ScalarField,
    sigma: MatrixField,
    x0: Vec<f64>,
    t0: f64,
    #[serde(default)]
    chaos: ChaosConfig,
}

fn chaos_terms_op(v: &Value) -> OpResult {
    let c: ChaosCfg = params(v)?;
    c.f.validate()?;
    c.sigma.validate()?;
    let tab = chaos_terms(&c.f, &c.sigma, &c.x0, c.t0, &c.chaos)?;
    let mut t = Table::new("terms", &["m", "S", "remainder"]);
    for (m, (s, r)) in tab.s.iter().zip(&tab.remainder).enumerate() {
        t.push([(m + 1) as f64, *s, *r]);
    }
    Ok(Output {
        tables: vec![t],
        ..out(tab)
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VarianceCfg {
    f: ScalarField,
    x0: Vec<f64>,
    t0: f64,
    #[serde(default)]
    chaos: ChaosConfig,
}

fn variance_op(v: &Value) -> OpResult {
    let c: VarianceCfg = params(v)?;
    c.f.validate()?;
    Ok(out(json!({ "V": variance_oracle(&c.f, &c.x0, c.t0, &c.chaos)? })))
}

fn default_x0s() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0], vec![4.0, 0.0]]
}
fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RotationCfg {
    #[serde(default)]
    f: Option<ScalarField>,
    #[serde(default = "default_x0s")]
    x0s: Vec<Vec<f64>>,
    #[serde(default = "one")]
    t0: f64,
    #[serde(default)]
    chaos: ChaosConfig,
}

fn rotation_op(v: &Value) -> OpResult {
    let c: RotationCfg = params(v)?;
    let f = c.f.unwrap_or_else(default_dipole);
    f.validate()?;
    let r = rotation_experiment(&f, &c.x0s, c.t0, &c.chaos)?;
    let mut buf = Vec::new();
    r.write_csv(&mut buf)?;
    let m = c.chaos.m_max;
    let last = |tab: &driftlab::chaos::ChaosTermTable| tab.ratios().get(m - 1).copied().unwrap_or(f64::NAN);
    let signature: Vec<Value> = r
        .rows
        .iter()
        .map(|row| json!({ "x0": row.x0, "rotation": last(&row.rotation), "identity": last(&row.identity) }))
        .collect();
    let finals: Vec<(f64, f64)> = r.rows.iter().map(|row| (last(&row.rotation), last(&row.identity))).collect();
    // remainder at the first start over the largest remainder elsewhere
    let separation = finals.first().map(|f0| f0.0 / finals[1..].iter().map(|f| f.0).fold(0.0, f64::max));
    let identity_monotone = r
        .rows
        .iter()
        .all(|row| row.identity.ratios().windows(2).all(|w| w[1] <= w[0] + 1e-9));
    let identity_final_max = finals.iter().map(|f| f.1).fold(0.0, f64::max);
    Ok(Output {
        result: json!({
            "report": r,
            "final_remainder_over_v": signature,
            "separation": separation,
            "identity_monotone": identity_monotone,
            "identity_final_max": identity_final_max,
        }),
        files: vec![("remainders.csv".into(), buf)],
        ..Default::default()
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaCfg {
    level: u32,
    k: Vec<i64>,
}

fn gamma_op(v: &Value) -> OpResult {
    let c: GammaCfg = params(v)?;
    let b = DyadicBox::new(c.level, c.k)?;
    Ok(out(json!({ "box": b.label(), "extent": b.extent(), "gamma": gamma_stop(&b) })))
}

fn default_gl() -> usize {
    4
}
fn default_p() -> f64 {
    2.0
}

/// Cell field of a time-independent catalog function on the dyadic cells.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CellFieldCfg {
    f: ScalarField,
    #[serde(default = "default_gl")]
    nodes: usize,
}

impl CellFieldCfg {
    fn build(&self, depth: u32) -> Result<CellField<f64>, OpError> {
        self.f.validate()?;
        let f = &self.f;
        let bad = std::cell::Cell::new(None);
        let field = CellField::separable(
            f.dim,
            depth,
            |_| 1.0,
            |x| match f.eval(0.0, x) {
                Ok(v) => v,
                Err(e) => {
                    bad.set(Some(e.to_string()));
                    0.0
                }
            },
            self.nodes,
        )?;
        if let Some(e) = bad.take() {
            return Err(OpError::Config(format!("config error at `params.field.f`: {e}")));
        }
        Ok(field)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RhConstCfg {
    field: CellFieldCfg,
    depth: u32,
    #[serde(default = "default_p")]
    p: f64,
    #[serde(default)]
    max_level: Option<u32>,
}

fn rh_constant_op(v: &Value) -> OpResult {
    let c: RhConstCfg = params(v)?;
    let f = c.field.build(c.depth)?;
    let r = reverse_holder_constant(&f, c.p, c.max_level)?;
    let mut t = Table::new("levels", &["level", "max_ratio", "n_boxes"]);
    for l in &r.levels {
        t.push([l.level as f64, l.max_ratio, l.n_boxes as f64]);
    }
    Ok(Output {
        tables: vec![t],
        result: json!({ "a": r.a, "argmax": r.argmax.label(), "report": r }),
        ..Default::default()
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExponentCfg {
    field: CellFieldCfg,
    /// Middle depth; the refinement uses `depth - 1`, `depth`, `depth + 1`.
    depth: u32,
    #[serde(default = "default_p")]
    p: f64,
    /// Reverse-Hölder constant; computed at `depth` when absent.
    #[serde(default)]
    a: Option<f64>,
    /// Defaults to `a`.
    #[serde(default)]
    b: Option<f64>,
    #[serde(default)]
    exponent: ExponentConfig,
}

fn exponent_op(v: &Value) -> OpResult {
    let c: ExponentCfg = params(v)?;
    if c.depth < 2 {
        return Err(OpError::Config("config error at `params.depth`: must be at least 2".into()));
    }
    let fs = [c.field.build(c.depth - 1)?, c.field.build(c.depth)?, c.field.build(c.depth + 1)?];
    let a = match c.a {
        Some(a) => a,
        None => reverse_holder_constant(&fs[1], c.p, None)?.a,
    };
    let b = c.b.unwrap_or(a);
    let r = improved_exponent([&fs[0], &fs[1], &fs[2]], c.p, a, b, &c.exponent)?;
    let mut result = to_value(&r);
    result["n_violated"] = json!(r.violated_boxes.len());
    Ok(Output {
        result,
        ..Default::default()
    })
}

fn default_multiples() -> Vec<f64> {
    vec![1.001, 1.5, 3.0, 10.0]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectCfg {
    dim: usize,
    depth: u32,
    #[serde(default = "default_p")]
    p: f64,
    /// Seeds of randomized inputs; ignored when `field` is given.
    #[serde(default)]
    seeds: Vec<u64>,
    #[serde(default)]
    field: Option<CellFieldCfg>,
    /// `lambda` as multiples of `g_bar`.
    #[serde(default = "default_multiples")]
    multiples: Vec<f64>,
}

fn select_op(v: &Value) -> OpResult {
    let c: SelectCfg = params(v)?;
    let inputs: Vec<(String, BoxFunction<f64>)> = match &c.field {
        Some(f) => {
            if f.f.dim != c.dim {
                return Err(OpError::Config(
                    "config error at `params.field.f.dim`: differs from `params.dim`".into(),
                ));
            }
            let cf = f.build(c.depth)?.powf(c.p);
            vec![("field".into(), BoxFunction::build(&cf)?)]
        }
        None => c
            .seeds
            .iter()
            .map(|&s| random_input(c.dim, c.depth, c.p, s).map(|g| (format!("seed {s}"), g)))
            .collect::<driftlab::Result<_>>()?,
    };
    if inputs.is_empty() {
        return Err(OpError::Config("config error at `params.seeds`: need a seed or a field".into()));
    }
    let mut rows = Vec::new();
    let mut all_hold = true;
    let mut t = Table::new(
        "selection",
        &["input", "lambda", "measure_stopped", "measure_selected", "cover_violations"],
    );
    for (i, (label, g)) in inputs.iter().enumerate() {
        let gb = g_bar(g);
        for &m in &c.multiples {
            let r = greedy_select(tau_lambda_decompose(g, gb * m)?);
            all_hold &= r.weak_type_holds && r.covering_holds && r.cover_violations == 0 && r.sandwich_violations == 0;
            t.push([i as f64, r.lambda, r.measure_stopped, r.measure_selected, r.cover_violations as f64]);
            rows.push(json!({
                "input": label,
                "multiple": m,
                "lambda": r.lambda,
                "g_bar": r.g_bar,
                "n_stopped": r.stopped.len(),
                "n_selected": r.selected.len(),
                "measure_stopped": r.measure_stopped,
                "measure_selected": r.measure_selected,
                "integral_above": r.integral_above,
                "weak_type_holds": r.weak_type_holds,
                "covering_holds": r.covering_holds,
                "cover_violations": r.cover_violations,
                "sandwich_violations": r.sandwich_violations,
            }));
        }
    }
    Ok(Output {
        result: json!({ "rows": rows, "all_hold": all_hold }),
        tables: vec![t],
        verdict: Some(all_hold),
        ..Default::default()
    })
}

fn verdict_table(name: &str, v: &DiagnosticVerdict) -> Table {
    Table::curve(name, "ladder", &v.ladder)
}

fn nonexistence_op(v: &Value) -> OpResult {
    let c: NonexistenceConfig = params(v)?;
    let r = nonexistence_diagnostic(&c)?;
    let pass = r.drift.pass && !DiagnosticVerdict::divergence("", r.control.ladder.clone(), c.threshold, c.min_rungs).pass;
    Ok(Output {
        tables: vec![verdict_table("drift", &r.drift), verdict_table("control", &r.control)],
        verdict: Some(pass),
        ..out(r)
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InvarianceCfg {
    base: NonexistenceConfig,
    eps: Vec<f64>,
}

fn eps_invariance_op(v: &Value) -> OpResult {
    let c: InvarianceCfg = params(v)?;
    let r = nonexistence_eps_invariance(&c.base, &c.eps)?;
    Ok(Output {
        verdict: Some(r.verdict.pass),
        ..out(r)
    })
}

fn nonuniqueness_op(v: &Value) -> OpResult {
    let c: NonuniquenessConfig = params(v)?;
    let r = nonuniqueness_gap(&c)?;
    let mut t = Table::new("gap", &["delta", "p_plus", "p_minus", "gap", "std_error"]);
    for row in &r.rows {
        t.push([row.delta, row.p_plus, row.p_minus, row.gap, row.std_error]);
    }
    Ok(Output {
        tables: vec![t],
        verdict: Some(r.verdict.pass),
        ..out(r)
    })
}

fn radial_op(v: &Value) -> OpResult {
    let c: RadialConfig = params(v)?;
    let r = radial_drift_threshold(&c)?;
    let tables = r.rows.iter().map(|(e, d, _)| verdict_table(&format!("eps_{e}"), d)).collect();
    Ok(Output {
        tables,
        verdict: Some(r.separates),
        ..out(r)
    })
}
