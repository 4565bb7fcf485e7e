//! Nonexistence and nonuniqueness examples as refinement-ladder diagnostics.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::fields::{DriftKind, MatrixField, VectorField};
use crate::rng::derive_seed;
use crate::sde::{refine_study, DriftPolicy, PathFunctional, SimSpec, Simulator};
use crate::stats::{linear_fit, CurvePoint, EstimateReport, LinearFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Divergence,
    Bounded,
    Gap,
    Invariance,
}

/// Outcome of a registered diagnostic; `pass` is a pure function of the ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticVerdict {
    pub kind: VerdictKind,
    pub label: String,
    /// Ladder value (step size or offset) against the statistic.
    pub ladder: Vec<CurvePoint>,
    /// Successive ratios `estimate[i+1] / estimate[i]`.
    pub ratios: Vec<f64>,
    pub trend: Option<LinearFit>,
    /// The number compared against `threshold`.
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn ratios(ladder: &[CurvePoint]) -> Vec<f64> {
    ladder
        .windows(2)
        .map(|w| {
            if w[0].estimate == 0.0 && w[1].estimate == 0.0 {
                1.0
            } else {
                w[1].estimate / w[0].estimate
            }
        })
        .collect()
}

impl DiagnosticVerdict {
    /// Fires when the ladder has at least `min_rungs` rungs and every ratio is at least `threshold`.
    pub fn divergence(label: impl Into<String>, ladder: Vec<CurvePoint>, threshold: f64, min_rungs: usize) -> Self {
        let r = ratios(&ladder);
        let stat = r.iter().copied().fold(f64::INFINITY, f64::min);
        let pass = ladder.len() >= min_rungs && !r.is_empty() && r.iter().all(|q| q.is_finite()) && stat >= threshold;
        Self {
            kind: VerdictKind::Divergence,
            label: label.into(),
            trend: power_trend(&ladder),
            ladder,
            ratios: r,
            statistic: stat,
            threshold,
            pass,
        }
    }

    /// Passes when the last `final_rungs` ratios are at most `threshold`.
    pub fn bounded(label: impl Into<String>, ladder: Vec<CurvePoint>, threshold: f64, final_rungs: usize) -> Self {
        let r = ratios(&ladder);
        let tail = &r[r.len().saturating_sub(final_rungs)..];
        let stat = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pass = tail.len() == final_rungs && tail.iter().all(|q| q.is_finite()) && stat <= threshold;
        Self {
            kind: VerdictKind::Bounded,
            label: label.into(),
            trend: power_trend(&ladder),
            ladder,
            ratios: r,
            statistic: stat,
            threshold,
            pass,
        }
    }
}

/// `log estimate` against `log ladder`.
fn power_trend(ladder: &[CurvePoint]) -> Option<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = ladder
        .iter()
        .filter(|p| p.ladder > 0.0 && p.estimate > 0.0)
        .map(|p| (p.ladder.ln(), p.estimate.ln()))
        .unzip();
    linear_fit(&x, &y)
}

fn curve(ladder: &[f64], reports: &[EstimateReport]) -> Vec<CurvePoint> {
    ladder
        .iter()
        .zip(reports)
        .map(|(&h, r)| CurvePoint {
            ladder: h,
            estimate: r.value,
            std_error: r.std_error,
        })
        .collect()
}

/// `E int_0^T s^{-alpha} |w_s|^{-beta} ds` for `d`-dimensional Brownian motion:
/// `E|Z|^{-beta} T^{1-alpha-beta/2} / (1-alpha-beta/2)`.
pub fn bm_time_space_oracle(alpha: f64, beta: f64, d: usize, horizon: f64) -> Result<f64> {
    let e = 1.0 - alpha - 0.5 * beta;
    if !(e > 0.0) || !(beta < d as f64) {
        return Err(invalid("alpha", "need alpha + beta/2 < 1 and beta < d"));
    }
    let moment = 2f64.powf(-0.5 * beta) * gamma(0.5 * (d as f64 - beta)) / gamma(0.5 * d as f64);
    Ok(moment * horizon.powf(e) / e)
}

fn default_threshold() -> f64 {
    1.5
}
fn default_min_rungs() -> usize {
    4
}
fn default_eps() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonexistenceConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub dim: usize,
    pub horizon: f64,
    /// Halving ladder of step sizes, coarsest first.
    pub h_ladder: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub policy: DriftPolicy,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_min_rungs")]
    pub min_rungs: usize,
}

impl NonexistenceConfig {
    fn spec(&self, drift: VectorField) -> SimSpec {
        SimSpec {
            sigma: MatrixField::identity(self.dim),
            drift,
            t0: 0.0,
            x0: vec![0.0; self.dim],
            horizon: self.horizon,
            h: self.h_ladder[0],
            n_paths: self.n_paths,
            seed: self.seed,
            policy: self.policy.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        if (self.alpha + self.beta - 1.0).abs() > 1e-12 || !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(invalid("alpha", "need alpha, beta > 0 with alpha + beta = 1"));
        }
        if self.h_ladder.len() < 2 {
            return Err(Error::Empty("h ladder with at least two rungs".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonexistenceReport {
    pub drift: DiagnosticVerdict,
    /// Same functional under `b = 0`; passes when it stays bounded.
    pub control: DiagnosticVerdict,
    pub control_oracle: f64,
    /// Control ladder extrapolated to `h = 0` along `h^{1-alpha-beta/2}`.
    pub control_extrapolated: Option<f64>,
    /// `D(h)` against `ln(1/h)` for the drift ladder.
    pub log_growth: Option<LinearFit>,
    pub cap_hits: u64,
}

fn time_space_ladder(spec: &SimSpec, cfg: &NonexistenceConfig) -> Result<Vec<CurvePoint>> {
    let f = PathFunctional::TimeSpaceWeight {
        alpha: cfg.alpha,
        beta: cfg.beta,
    };
    Ok(curve(&cfg.h_ladder, &refine_study(spec, &f, &cfg.h_ladder)?))
}

/// Refinement ladder of `E int_0^T s^{-alpha} |x_s|^{-beta} ds` from the origin under
/// `eps * example_3_22_1`, against the Brownian control.
pub fn nonexistence_diagnostic(cfg: &NonexistenceConfig) -> Result<NonexistenceReport> {
    cfg.validate()?;
    let drift = VectorField::new(
        cfg.dim,
        DriftKind::Example3221 {
            alpha: cfg.alpha,
            beta: cfg.beta,
            eps: cfg.eps,
        },
    )?;
    let spec = cfg.spec(drift);
    let ladder = time_space_ladder(&spec, cfg)?;
    let fine = spec.with_h(*cfg.h_ladder.last().unwrap());
    let sim = Simulator::new(&fine)?;
    let cap_hits = sim.map_paths(|s, p| s.run_path(p, |_, _, _| true).cap_hits as u64).iter().sum();
    let control_spec = cfg.spec(VectorField::zero(cfg.dim));
    let control = time_space_ladder(&control_spec, cfg)?;
    let e = 1.0 - cfg.alpha - 0.5 * cfg.beta;
    let (xs, ys): (Vec<f64>, Vec<f64>) = control.iter().map(|p| (p.ladder.powf(e), p.estimate)).unzip();
    let control_extrapolated = linear_fit(&xs, &ys).map(|f| f.intercept);
    let (lx, ly): (Vec<f64>, Vec<f64>) = ladder.iter().map(|p| (-p.ladder.ln(), p.estimate)).unzip();
    let log_growth = linear_fit(&lx, &ly);
    Ok(NonexistenceReport {
        log_growth,
        drift: DiagnosticVerdict::divergence("example_3_22_1", ladder, cfg.threshold, cfg.min_rungs),
        control: DiagnosticVerdict::bounded("zero drift", control, 1.1, 2),
        control_oracle: bm_time_space_oracle(cfg.alpha, cfg.beta, cfg.dim, cfg.horizon)?,
        control_extrapolated,
        cap_hits,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    /// `(eps, c = eps^{1/alpha}, verdict)`; the `eps` problem runs on `[0, c^2 T]` with steps `c^2 h`.
    pub runs: Vec<(f64, f64, DiagnosticVerdict)>,
    /// Largest relative gap between rescaled ladders (`D_eps = c^{1-alpha} D_1`).
    pub max_rel_gap: f64,
    pub verdict: DiagnosticVerdict,
}

/// Runs the nonexistence diagnostic for each `eps` on the parabolically rescaled
/// window with the seed of `cfg`, so every ladder is the `eps = 1` ladder times
/// `c^{1-alpha}` path by path.
pub fn nonexistence_eps_invariance(cfg: &NonexistenceConfig, eps: &[f64]) -> Result<InvarianceReport> {
    cfg.validate()?;
    let mut runs = Vec::new();
    let mut base: Option<Vec<CurvePoint>> = None;
    let mut max_gap = 0.0f64;
    let mut agree = true;
    for &e in eps {
        if !(e > 0.0) {
            return Err(invalid("eps", "must be positive"));
        }
        let c = e.powf(1.0 / cfg.alpha);
        let scaled = NonexistenceConfig {
            eps: e,
            horizon: c * c * cfg.horizon,
            h_ladder: cfg.h_ladder.iter().map(|h| c * c * h).collect(),
            ..cfg.clone()
        };
        let drift = VectorField::new(
            cfg.dim,
            DriftKind::Example3221 {
                alpha: cfg.alpha,
                beta: cfg.beta,
                eps: e,
            },
        )?;
        let ladder = time_space_ladder(&scaled.spec(drift), &scaled)?;
        let unscaled: Vec<CurvePoint> = ladder
            .iter()
            .map(|p| CurvePoint {
                ladder: p.ladder / (c * c),
                estimate: p.estimate / c.powf(1.0 - cfg.alpha),
                std_error: p.std_error / c.powf(1.0 - cfg.alpha),
            })
            .collect();
        if let Some(b) = &base {
            for (u, v) in unscaled.iter().zip(b) {
                max_gap = max_gap.max((u.estimate - v.estimate).abs() / v.estimate.abs().max(f64::MIN_POSITIVE));
            }
        } else {
            base = Some(unscaled);
        }
        let v = DiagnosticVerdict::divergence(format!("eps={e}"), ladder, cfg.threshold, cfg.min_rungs);
        if let Some((_, _, first)) = runs.first() {
            let first: &DiagnosticVerdict = first;
            agree &= first.pass == v.pass;
        }
        runs.push((e, c, v));
    }
    let ladder = runs
        .iter()
        .map(|(e, _, v)| CurvePoint {
            ladder: *e,
            estimate: v.statistic,
            std_error: 0.0,
        })
        .collect();
    let tol = 1e-6;
    Ok(InvarianceReport {
        verdict: DiagnosticVerdict {
            kind: VerdictKind::Invariance,
            label: "eps rescaling".into(),
            ratios: Vec::new(),
            trend: None,
            ladder,
            statistic: max_gap,
            threshold: tol,
            pass: agree && max_gap <= tol,
        },
        runs,
        max_rel_gap: max_gap,
    })
}

fn default_gap_threshold() -> f64 {
    0.45
}
fn default_z() -> f64 {
    3.0
}
fn default_target() -> f64 {
    0.75
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonuniquenessConfig {
    pub q: f64,
    #[serde(default = "one_dim")]
    pub dim: usize,
    /// Decreasing offsets of the start `x^1 = +-delta`.
    pub deltas: Vec<f64>,
    /// Frozen `t0`; sized by the pilot when absent.
    #[serde(default)]
    pub t0: Option<f64>,
    /// Candidate `t0` values for the pilot, largest accepted wins.
    #[serde(default = "default_t0_ladder")]
    pub t0_ladder: Vec<f64>,
    #[serde(default = "default_target")]
    pub pilot_target: f64,
    /// Coarsest step; each offset runs with `min(h, (delta / steps_per_delta)^2)`.
    pub h: f64,
    #[serde(default = "default_steps_per_delta")]
    pub steps_per_delta: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// `+1` for the drift of the example, `-1` for its sign flip, `0` for Brownian motion.
    #[serde(default = "default_sign")]
    pub sign: f64,
    /// The drift is singular only at `t = 0`, where it is dropped; a loose cap keeps later steps unclipped.
    #[serde(default = "loose_cap")]
    pub policy: DriftPolicy,
    #[serde(default = "default_gap_threshold")]
    pub threshold: f64,
    #[serde(default = "default_z")]
    pub z: f64,
}

fn one_dim() -> usize {
    1
}
fn loose_cap() -> DriftPolicy {
    DriftPolicy::CapDisplacement { kappa: 1e3 }
}
fn default_sign() -> f64 {
    1.0
}
fn default_t0_ladder() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3, 1.25e-3]
}
fn default_steps_per_delta() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotRow {
    pub t0: f64,
    pub p_a: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub delta: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub gap: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonuniquenessReport {
    pub t0: f64,
    pub pilot: Vec<PilotRow>,
    pub rows: Vec<GapRow>,
    /// Intercept of the weighted linear fit of the gap against `delta`.
    pub gap_limit: f64,
    pub gap_limit_se: f64,
    pub verdict: DiagnosticVerdict,
}

/// `P(sup_{t<=t0} |w'_t| <= 1, inf_{t<=t0} (3 t^{1-1/q} + w^1_t) >= 0)` on the step grid.
fn pilot_probability(cfg: &NonuniquenessConfig, t0: f64, label: u64) -> Result<(f64, f64)> {
    let spec = SimSpec {
        horizon: t0,
        seed: derive_seed(cfg.seed, label),
        ..SimSpec::brownian(vec![0.0; cfg.dim], t0, cfg.h.min(1e-3 * t0), cfg.n_paths, 0)
    };
    let sim = Simulator::new(&spec)?;
    let e = 1.0 - 1.0 / cfg.q;
    let hits: Vec<f64> = sim.map_paths(|s, p| {
        let mut ok = true;
        s.run_path(p, |_, t, w| {
            let s = t - spec.t0;
            ok = 3.0 * s.powf(e) + w[0] >= 0.0 && w[1..].iter().map(|v| v * v).sum::<f64>() <= 1.0;
            ok
        });
        if ok {
            1.0
        } else {
            0.0
        }
    });
    let n = hits.len() as f64;
    let p = hits.iter().sum::<f64>() / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

/// `P(inf_{t<=t0} x^1_t >= 0)` (or `sup <= 0` when `below`) from `x^1 = x1`, other
/// coordinates 0, on the step grid of the offset `|x1|`.
pub fn stay_on_side(cfg: &NonuniquenessConfig, x1: f64, t0: f64, seed: u64, below: bool) -> Result<(f64, f64)> {
    let mut x0 = vec![0.0; cfg.dim];
    x0[0] = x1;
    let drift = if cfg.sign == 0.0 {
        VectorField::zero(cfg.dim)
    } else {
        VectorField::new(cfg.dim, DriftKind::Example3222 { q: cfg.q, sign: cfg.sign })?
    };
    let spec = SimSpec {
        drift,
        seed,
        policy: cfg.policy.clone(),
        ..SimSpec::brownian(x0, t0, step_for(cfg, x1.abs()).min(t0), cfg.n_paths, seed)
    };
    let sim = Simulator::new(&spec)?;
    let vals: Vec<f64> = sim
        .map_paths(|s, p| {
            let mut ok = true;
            let o = s.run_path(p, |_, _, x| {
                ok = if below { x[0] <= 0.0 } else { x[0] >= 0.0 };
                ok
            });
            (o.diverged, ok)
        })
        .into_iter()
        .filter(|v| !v.0)
        .map(|v| if v.1 { 1.0 } else { 0.0 })
        .collect();
    if vals.is_empty() {
        return Err(Error::Empty("every path diverged".into()));
    }
    let n = vals.len() as f64;
    let p = vals.iter().sum::<f64>() / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

fn step_for(cfg: &NonuniquenessConfig, delta: f64) -> f64 {
    cfg.h.min((delta / cfg.steps_per_delta).powi(2))
}

/// Sizes `t0` by the pilot (largest ladder value with `P(A) >= target`).
pub fn pilot_t0(cfg: &NonuniquenessConfig) -> Result<(f64, Vec<PilotRow>)> {
    let mut rows = Vec::new();
    let mut best: Option<f64> = None;
    for (i, &t0) in cfg.t0_ladder.iter().enumerate() {
        let (p, se) = pilot_probability(cfg, t0, 0xA000 + i as u64)?;
        rows.push(PilotRow { t0, p_a: p, std_error: se });
        if p >= cfg.pilot_target && best.is_none_or(|b| t0 > b) {
            best = Some(t0);
        }
    }
    let t0 = best.ok_or_else(|| Error::Precondition("no t0 on the ladder reaches the pilot target".into()))?;
    Ok((t0, rows))
}

/// `p_+(delta) - p_-(delta)` for the event `{x^1 >= 0 on [0, t0]}` from `x^1 = +-delta`,
/// its weighted linear extrapolation to `delta = 0`, and the gap verdict.
pub fn nonuniqueness_gap(cfg: &NonuniquenessConfig) -> Result<NonuniquenessReport> {
    if !(cfg.q > 1.0 && cfg.q < 2.0) {
        return Err(invalid("q", "must lie in (1, 2)"));
    }
    if cfg.deltas.is_empty() || cfg.deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(invalid("deltas", "need positive offsets"));
    }
    let (t0, pilot) = match cfg.t0 {
        Some(t) => (t, Vec::new()),
        None => pilot_t0(cfg)?,
    };
    let mut rows = Vec::new();
    for (i, &d) in cfg.deltas.iter().enumerate() {
        let (pp, sp) = stay_on_side(cfg, d, t0, derive_seed(cfg.seed, 2 * i as u64), false)?;
        let (pm, sm) = stay_on_side(cfg, -d, t0, derive_seed(cfg.seed, 2 * i as u64 + 1), false)?;
        rows.push(GapRow {
            delta: d,
            p_plus: pp,
            p_minus: pm,
            gap: pp - pm,
            std_error: (sp * sp + sm * sm).sqrt(),
        });
    }
    let (limit, limit_se) = weighted_intercept(&rows);
    let ladder = rows
        .iter()
        .map(|r| CurvePoint {
            ladder: r.delta,
            estimate: r.gap,
            std_error: r.std_error,
        })
        .collect();
    let stat = limit - cfg.z * limit_se;
    Ok(NonuniquenessReport {
        t0,
        pilot,
        verdict: DiagnosticVerdict {
            kind: VerdictKind::Gap,
            label: format!("example_3_22_2 sign={}", cfg.sign),
            ratios: Vec::new(),
            trend: None,
            ladder,
            statistic: stat,
            threshold: cfg.threshold,
            pass: stat >= cfg.threshold,
        },
        rows,
        gap_limit: limit,
        gap_limit_se: limit_se,
    })
}

/// Intercept and its standard error of the weighted fit `gap = a + b delta`
/// (weights `1/se^2`, floored at `1/n`-level precision); a single row is its own limit.
fn weighted_intercept(rows: &[GapRow]) -> (f64, f64) {
    if rows.len() == 1 {
        return (rows[0].gap, rows[0].std_error);
    }
    let floor = rows.iter().map(|r| r.std_error).filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1e-6 };
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in rows {
        let w = 1.0 / r.std_error.max(floor).powi(2);
        sw += w;
        sx += w * r.delta;
        sy += w * r.gap;
        sxx += w * r.delta * r.delta;
        sxy += w * r.delta * r.gap;
    }
    let det = sw * sxx - sx * sx;
    if det.abs() <= 1e-300 {
        return (sy / sw, (1.0 / sw).sqrt());
    }
    let a = (sxx * sy - sx * sxy) / det;
    (a, (sxx / det).sqrt())
}

fn default_eps_small() -> f64 {
    0.05
}
fn default_bounded_threshold() -> f64 {
    1.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialConfig {
    pub eps: Vec<f64>,
    #[serde(default = "three")]
    pub dim: usize,
    pub horizon: f64,
    pub h_ladder: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub policy: DriftPolicy,
    #[serde(default = "default_eps_small")]
    pub eps_small: f64,
    #[serde(default = "default_threshold")]
    pub divergence_threshold: f64,
    #[serde(default = "default_bounded_threshold")]
    pub bounded_threshold: f64,
}

fn three() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialReport {
    /// Per `eps`: the divergence verdict and the bounded verdict of the same ladder.
    pub rows: Vec<(f64, DiagnosticVerdict, DiagnosticVerdict)>,
    /// Every `eps <= eps_small` is bounded and every `eps >= 1` diverges.
    pub separates: bool,
}

/// `int_0^T |b(x_s)| ds` ladders for `b = -eps d x/|x|^2`, `sigma = sqrt 2 I`, from the origin.
pub fn radial_drift_threshold(cfg: &RadialConfig) -> Result<RadialReport> {
    if cfg.h_ladder.len() < 2 {
        return Err(Error::Empty("h ladder with at least two rungs".into()));
    }
    let mut rows = Vec::new();
    let mut separates = true;
    for &e in &cfg.eps {
        let spec = SimSpec {
            sigma: MatrixField::scaled_identity(cfg.dim, 2f64.sqrt()),
            drift: VectorField::new(cfg.dim, DriftKind::RadialInverse { c: e * cfg.dim as f64 })?,
            t0: 0.0,
            x0: vec![0.0; cfg.dim],
            horizon: cfg.horizon,
            h: cfg.h_ladder[0],
            n_paths: cfg.n_paths,
            seed: cfg.seed,
            policy: cfg.policy.clone(),
        };
        let ladder = curve(&cfg.h_ladder, &refine_study(&spec, &PathFunctional::DriftIntegral, &cfg.h_ladder)?);
        let div = DiagnosticVerdict::divergence(format!("eps={e}"), ladder.clone(), cfg.divergence_threshold, 4);
        let bnd = DiagnosticVerdict::bounded(format!("eps={e}"), ladder, cfg.bounded_threshold, 2);
        if e <= cfg.eps_small {
            separates &= bnd.pass && !div.pass;
        }
        if e >= 1.0 {
            separates &= div.pass;
        }
        rows.push((e, div, bnd));
    }
    Ok(RadialReport { rows, separates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(h: f64, v: f64) -> CurvePoint {
        CurvePoint {
            ladder: h,
            estimate: v,
            std_error: 0.0,
        }
    }

    #[test]
    fn verdicts_are_functions_of_the_ladder() {
        let growing = vec![pt(0.1, 1.0), pt(0.05, 1.6), pt(0.025, 2.6), pt(0.0125, 4.0)];
        assert!(DiagnosticVerdict::divergence("g", growing.clone(), 1.5, 4).pass);
        assert!(!DiagnosticVerdict::divergence("g", growing[..3].to_vec(), 1.5, 4).pass);
        let flat = vec![pt(0.1, 1.0), pt(0.05, 1.2), pt(0.025, 1.25), pt(0.0125, 1.26)];
        assert!(DiagnosticVerdict::bounded("f", flat.clone(), 1.1, 2).pass);
        assert!(!DiagnosticVerdict::divergence("f", flat, 1.5, 4).pass);
    }

    #[test]
    fn oracle_moment() {
        // d = 2, beta = 1: E|Z|^{-1} = sqrt(pi/2) / sqrt 2 * ... = Gamma(1/2)/(sqrt 2 Gamma(1))
        let v = bm_time_space_oracle(0.0, 1.0, 2, 1.0).unwrap();
        assert!((v - std::f64::consts::PI.sqrt() / 2f64.sqrt() / 0.5).abs() < 1e-12);
        assert!(bm_time_space_oracle(0.5, 1.0, 2, 1.0).is_err());
    }

    #[test]
    fn zero_eps_gives_zero_drift_integral() {
        let cfg = RadialConfig {
            eps: vec![0.0],
            dim: 3,
            horizon: 0.1,
            h_ladder: vec![0.01, 0.005, 0.0025],
            n_paths: 20,
            seed: 1,
            policy: DriftPolicy::default(),
            eps_small: 0.05,
            divergence_threshold: 1.5,
            bounded_threshold: 1.1,
        };
        let r = radial_drift_threshold(&cfg).unwrap();
        assert!(r.rows[0].1.ladder.iter().all(|p| p.estimate == 0.0));
        assert!(r.rows[0].2.pass && !r.rows[0].1.pass);
    }

    #[test]
    fn weighted_intercept_recovers_a_line() {
        let rows: Vec<GapRow> = [0.1, 0.05, 0.01]
            .iter()
            .map(|&d| GapRow {
                delta: d,
                p_plus: 0.0,
                p_minus: 0.0,
                gap: 0.7 - 2.0 * d,
                std_error: 0.01,
            })
            .collect();
        let (a, se) = weighted_intercept(&rows);
        assert!((a - 0.7).abs() < 1e-12 && se > 0.0);
    }
}
