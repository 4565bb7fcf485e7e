//! Monte Carlo estimators for potentials, exit times, occupation and hitting,
//! Harnack ratios, oscillation of caloric functions and resolvent norms.
//!
//! Path integrals use left-endpoint states with exact time weights
//! `int_{kh}^{(k+1)h} e^{-lambda s} ds`, truncated at the horizon, and stop at
//! the first grid state outside the stopping domain. States on a singular set
//! contribute zero.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::fields::{ScalarField, ScalarKind};
use crate::geometry::{dist, norm, Cylinder};
use crate::grid::{GridDomain, GridFunction};
use crate::morrey::{mixed_norm, normalized_norm, MixedNormSpec};
use crate::quadrature::gauss_legendre_on;
use crate::rng::{derive_seed, path_rng};
use crate::sde::{CellSet, Region, SimSpec, Simulator};
use crate::stats::{linear_fit, mean_se, power_fit, CurvePoint, EstimateReport, LinearFit};

/// Integrand evaluated at a left-endpoint state.
pub type Integrand<'a> = dyn Fn(f64, &[f64]) -> f64 + Sync + 'a;

fn step_weight(s0: f64, s1: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        s1 - s0
    } else {
        ((-lambda * s0).exp() - (-lambda * s1).exp()) / lambda
    }
}

/// Per-path values of `int_0^{stop ^ T} e^{-lambda s} f(t0+s, x_s) ds` for every
/// `(lambda, f)` pair, `lambda`-major. Diverged paths are dropped and counted.
pub fn path_integrals(spec: &SimSpec, stop: Option<&Region>, lambdas: &[f64], fs: &[&Integrand]) -> Result<(Vec<Vec<f64>>, usize)> {
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(invalid("lambda", "must be nonnegative"));
    }
    let sim = Simulator::new(spec)?;
    let n = sim.n_steps();
    let (h, horizon) = (spec.h, spec.horizon);
    let m = lambdas.len() * fs.len();
    let per_path = sim.map_paths(|s, p| {
        let mut acc = vec![0.0; m];
        let mut vals = vec![0.0; fs.len()];
        let o = s.run_path(p, |k, t, x| {
            if stop.is_some_and(|r| !r.contains(t, x)) || k == n {
                return false;
            }
            let s0 = k as f64 * h;
            let s1 = ((k + 1) as f64 * h).min(horizon);
            for (v, f) in vals.iter_mut().zip(fs) {
                *v = f(t, x);
            }
            for (li, &l) in lambdas.iter().enumerate() {
                let w = step_weight(s0, s1, l);
                for (fi, v) in vals.iter().enumerate() {
                    acc[li * fs.len() + fi] += w * v;
                }
            }
            true
        });
        (acc, o.diverged)
    });
    let diverged = per_path.iter().filter(|p| p.1).count();
    let mut cols = vec![Vec::with_capacity(per_path.len()); m];
    for (acc, div) in per_path {
        if !div {
            for (c, v) in cols.iter_mut().zip(acc) {
                c.push(v);
            }
        }
    }
    Ok((cols, diverged))
}

fn scalar_integrand(f: &ScalarField) -> impl Fn(f64, &[f64]) -> f64 + Sync + '_ {
    move |t, x| f.eval(t, x).unwrap_or(0.0)
}

/// `E int_0^{stop ^ T} e^{-lambda s} f(t0+s, x_s) ds` for several `f` on shared paths.
pub fn potential_many(spec: &SimSpec, fs: &[ScalarField], lambda: f64, stop: Option<&Region>) -> Result<Vec<EstimateReport>> {
    for f in fs {
        if f.dim != spec.dim() {
            return Err(Error::Dimension {
                expected: spec.dim(),
                got: f.dim,
            });
        }
        if !f.is_nonnegative() {
            return Err(invalid("f", format!("{} is not nonnegative", f.kind_name())));
        }
    }
    let closures: Vec<_> = fs.iter().map(scalar_integrand).collect();
    let refs: Vec<&Integrand> = closures.iter().map(|c| c as &Integrand).collect();
    let (cols, div) = path_integrals(spec, stop, &[lambda], &refs)?;
    let fp = spec.fingerprint();
    Ok(cols
        .iter()
        .map(|c| EstimateReport::from_samples(c, fp.clone()).with_diverged(div))
        .collect())
}

pub fn potential(spec: &SimSpec, f: &ScalarField, lambda: f64, stop: Option<&Region>) -> Result<EstimateReport> {
    Ok(potential_many(spec, std::slice::from_ref(f), lambda, stop)?.remove(0))
}

/// `int_0^inf e^{-lambda s} E f(x0 + W_s) ds` for three-dimensional Brownian
/// motion through the kernel `e^{-sqrt(2 lambda) r} / (2 pi r)`, for ball
/// indicators and Gaussian bumps (spherical averages in closed form, one radial
/// Gauss–Legendre quadrature).
pub fn yukawa_potential(f: &ScalarField, x0: &[f64], lambda: f64) -> Result<f64> {
    if f.dim != 3 || x0.len() != 3 {
        return Err(invalid("f", "the Yukawa oracle is three dimensional"));
    }
    if !(lambda > 0.0) {
        return Err(invalid("lambda", "must be positive"));
    }
    let k = (2.0 * lambda).sqrt();
    let pi = std::f64::consts::PI;
    // int G(r) A(r) dr with A the f-weighted area of the sphere of radius r around x0
    let radial = |a: f64, b: f64, area: &dyn Fn(f64) -> f64| -> f64 {
        let mut total = 0.0;
        let pieces = 64;
        for j in 0..pieces {
            let (lo, hi) = (a + (b - a) * j as f64 / pieces as f64, a + (b - a) * (j + 1) as f64 / pieces as f64);
            let (rs, ws) = gauss_legendre_on(16, lo, hi);
            for (r, w) in rs.iter().zip(&ws) {
                total += w * (-k * r).exp() / (2.0 * pi * r) * area(*r);
            }
        }
        total
    };
    match &f.kind {
        ScalarKind::IndicatorBall { center, radius } => {
            let dd = dist(x0, center);
            let a = *radius;
            let area = |r: f64| {
                if r + dd <= a {
                    4.0 * pi * r * r
                } else if r >= dd + a || r <= dd - a {
                    0.0
                } else {
                    pi * r * (a * a - (r - dd) * (r - dd)) / dd
                }
            };
            let lo = (dd - a).max(0.0);
            let hi = dd + a;
            if dd < a {
                // kink at r = a - dd
                let kink = a - dd;
                Ok(radial(0.0, kink, &area) + radial(kink, hi, &area))
            } else {
                Ok(radial(lo, hi, &area))
            }
        }
        ScalarKind::GaussianBump { center, width, amplitude } => {
            let dd = dist(x0, center);
            let w2 = width * width;
            let area = |r: f64| {
                let z = r * dd / w2;
                let shell = if z < 1e-8 {
                    (-(r * r + dd * dd) / (2.0 * w2)).exp()
                } else {
                    // exp(-(r^2+D^2)/2w^2) sinh(z)/z, written without overflow
                    ((-(r - dd) * (r - dd) / (2.0 * w2)).exp() - (-(r + dd) * (r + dd) / (2.0 * w2)).exp()) / (2.0 * z)
                };
                4.0 * pi * r * r * amplitude * shell
            };
            // the kernel is below e^{-60} past 60 / k
            let hi = (dd + 12.0 * width).min(60.0 / k);
            Ok(radial(0.0, hi, &area))
        }
        _ => Err(invalid("f", "the Yukawa oracle handles indicator_ball and gaussian_bump")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AleksandrovRow {
    pub kind: String,
    pub potential: EstimateReport,
    pub norm: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AleksandrovReport {
    pub rho: f64,
    pub n_hat: f64,
    pub argmax: usize,
    pub rows: Vec<AleksandrovRow>,
    /// Members with zero norm on the cylinder.
    pub n_skipped: usize,
}

/// Indicators of random sub-cylinders and Gaussian bumps inside `C_rho(t0, x0)`.
pub fn random_family(t0: f64, x0: &[f64], rho: f64, n_indicators: usize, n_bumps: usize, seed: u64) -> Vec<ScalarField> {
    let d = x0.len();
    let mut rng = path_rng(derive_seed(seed, 0xF00D), 0);
    let mut out = Vec::with_capacity(n_indicators + n_bumps);
    let in_ball = |rng: &mut rand_chacha::ChaCha8Rng, r: f64| -> Vec<f64> {
        loop {
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if norm(&y) < 1.0 {
                return x0.iter().zip(&y).map(|(c, v)| c + r * v).collect();
            }
        }
    };
    for _ in 0..n_indicators {
        let r = rho * rng.gen_range(0.125..0.5);
        let center = in_ball(&mut rng, rho - r);
        let t = t0 + rng.gen_range(0.0..(rho * rho - r * r));
        out.push(ScalarField {
            dim: d,
            kind: ScalarKind::IndicatorCylinder { t, center, rho: r },
        });
    }
    for _ in 0..n_bumps {
        let center = in_ball(&mut rng, 0.5 * rho);
        let width = rho * rng.gen_range(0.125..0.5);
        out.push(ScalarField {
            dim: d,
            kind: ScalarKind::GaussianBump {
                center,
                width,
                amplitude: 1.0,
            },
        });
    }
    out
}

/// `sup_f E int_0^{tau_rho} f / (rho^2 normalized_norm(f))` with `tau_rho` the
/// exit from `C_rho(t0, x0)` (lid included). The norm is taken on a grid of
/// `grid_n` cells per spatial axis and `grid_n / 2` in time over the cylinder.
pub fn aleksandrov_ratio(
    spec: &SimSpec,
    family: &[ScalarField],
    rho: f64,
    norm_spec: &MixedNormSpec,
    grid_n: usize,
) -> Result<AleksandrovReport> {
    if family.is_empty() {
        return Err(Error::Empty("test function family".into()));
    }
    if !(rho > 0.0) || rho * rho < spec.h {
        return Err(invalid("rho", "need rho^2 >= h > 0"));
    }
    let d = spec.dim();
    let run = SimSpec {
        horizon: rho * rho,
        ..spec.clone()
    };
    let stop = Region::Cylinder {
        t: spec.t0,
        center: spec.x0.clone(),
        rho,
    };
    let pots = potential_many(&run, family, 0.0, Some(&stop))?;
    let dom = GridDomain::new(
        (spec.t0, spec.t0 + rho * rho),
        (grid_n / 2).max(1),
        spec.x0.iter().map(|c| c - rho).collect(),
        spec.x0.iter().map(|c| c + rho).collect(),
        vec![grid_n; d],
    )?;
    let cyl = Cylinder::new(spec.t0, spec.x0.clone(), rho)?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (f, p) in family.iter().zip(pots) {
        let g = GridFunction::<f64>::sample_scalar(dom.clone(), f)?;
        let nrm = normalized_norm(&g, norm_spec, &cyl)?;
        if nrm > 0.0 {
            rows.push(AleksandrovRow {
                kind: f.kind_name().to_string(),
                ratio: p.value / (rho * rho * nrm),
                potential: p,
                norm: nrm,
            });
        } else {
            skipped += 1;
        }
    }
    let (argmax, n_hat) = rows.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |(bi, bv), (i, r)| if r.ratio > bv { (i, r.ratio) } else { (bi, bv) },
    );
    if rows.is_empty() {
        return Err(Error::Empty("every family member has zero norm".into()));
    }
    Ok(AleksandrovReport {
        rho,
        n_hat,
        argmax,
        rows,
        n_skipped: skipped,
    })
}

/// Start `(t, x)` and the center `y` of the cylinder `C_rho(t, y)` to exit from
/// (`x` when absent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub t: f64,
    pub x: Vec<f64>,
    #[serde(default)]
    pub y: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeratedDriftReport {
    pub rho: f64,
    pub value: f64,
    pub std_error: f64,
    pub argmax: usize,
    pub per_anchor: Vec<EstimateReport>,
}

/// `max_anchor rho^{-1} E int_0^{tau_rho} |b(t+s, x_s)| ds`, each anchor on its own seed.
pub fn moderated_drift(spec: &SimSpec, rho: f64, anchors: &[Anchor]) -> Result<ModeratedDriftReport> {
    if anchors.is_empty() {
        return Err(Error::Empty("anchor grid".into()));
    }
    if !(rho > 0.0) || rho * rho < spec.h {
        return Err(invalid("rho", "need rho^2 >= h > 0"));
    }
    let d = spec.dim();
    let drift = &spec.drift;
    let integrand = move |t: f64, x: &[f64]| {
        let mut b = [0.0f64; 16];
        let b = &mut b[..d];
        match drift.eval_into(t, x, b) {
            Ok(()) => norm(b),
            Err(_) => 0.0,
        }
    };
    let per_anchor = anchors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let s = SimSpec {
                t0: a.t,
                x0: a.x.clone(),
                horizon: rho * rho,
                seed: derive_seed(spec.seed, i as u64),
                ..spec.clone()
            };
            let stop = Region::Cylinder {
                t: a.t,
                center: a.y.clone().unwrap_or_else(|| a.x.clone()),
                rho,
            };
            let (cols, div) = path_integrals(&s, Some(&stop), &[0.0], &[&integrand])?;
            let scaled: Vec<f64> = cols[0].iter().map(|v| v / rho).collect();
            Ok(EstimateReport::from_samples(&scaled, s.fingerprint()).with_diverged(div))
        })
        .collect::<Result<Vec<_>>>()?;
    let (argmax, best) = per_anchor.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |(bi, bv), (i, r)| if r.value > bv { (i, r.value) } else { (bi, bv) },
    );
    Ok(ModeratedDriftReport {
        rho,
        value: best,
        std_error: per_anchor[argmax].std_error,
        argmax,
        per_anchor,
    })
}

/// Exit times from `B_rho(x0)` with censoring at the horizon.
fn exit_times(spec: &SimSpec, rho: f64) -> Result<(Vec<Option<f64>>, usize)> {
    let sim = Simulator::new(spec)?;
    let ball = Region::Ball {
        center: spec.x0.clone(),
        radius: rho,
    };
    let recs = sim.map_paths(|s, p| s.exit_record(p, &ball));
    let div = recs.iter().filter(|r| r.diverged).count();
    let times = recs.into_iter().filter(|r| !r.diverged).map(|r| r.step.map(|_| r.time)).collect();
    Ok((times, div))
}

/// Boundary shift `beta sqrt(h)` for discretely monitored Brownian exits,
/// `beta = -zeta(1/2) / sqrt(2 pi)`.
pub const EXIT_SHIFT: f64 = 0.582_597_157_939_010_6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitMeanReport {
    pub estimate: EstimateReport,
    /// Ball radius actually monitored.
    pub radius: f64,
    /// Paths still inside at the horizon, counted with the horizon as exit time.
    pub n_censored: usize,
}

/// `E tau'_rho` from `B_rho(x0)`. With `continuity_correction` the monitored ball
/// shrinks by `EXIT_SHIFT s sqrt(h)` (`s^2` the mean diagonal of `a` at the
/// start), which removes the leading overshoot bias of grid-time detection.
pub fn exit_mean(spec: &SimSpec, rho: f64, continuity_correction: bool) -> Result<ExitMeanReport> {
    let radius = if continuity_correction {
        let a = spec.sigma.diffusion_at(spec.t0, &spec.x0)?;
        let d = spec.dim();
        let s = ((0..d).map(|i| a[i * d + i]).sum::<f64>() / d as f64).sqrt();
        rho - EXIT_SHIFT * s * spec.h.sqrt()
    } else {
        rho
    };
    if !(radius > 0.0) {
        return Err(invalid("rho", "radius vanishes after the continuity correction"));
    }
    let (times, div) = exit_times(spec, radius)?;
    if times.iter().all(|t| t.is_none()) {
        return Err(Error::AllCensored);
    }
    let censored = times.iter().filter(|t| t.is_none()).count();
    let vals: Vec<f64> = times.iter().map(|t| t.unwrap_or(spec.horizon)).collect();
    Ok(ExitMeanReport {
        estimate: EstimateReport::from_samples(&vals, spec.fingerprint()).with_diverged(div),
        radius,
        n_censored: censored,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitTailReport {
    pub rho: f64,
    /// `P(tau' > T)` per ladder value.
    pub curve: Vec<CurvePoint>,
    /// `ln P = ln N - rate T` over points with at least 20 survivors.
    pub fit: Option<LinearFit>,
    pub n_hat: f64,
    pub rate: f64,
    pub rate_rho2: f64,
    /// `1 - P(tau' >= rho^2)`.
    pub p0_hat: f64,
    /// `P(tau' <= s)` on the small-time ladder.
    pub small_time: Vec<CurvePoint>,
    /// `c` in `P(tau_rho <= s) <= C exp(-c rho^2 / s)`.
    pub small_time_c: Option<f64>,
    pub n_paths: usize,
    pub diverged: usize,
}

/// Survival curve of the exit time from `B_rho(x0)` and its exponential fit.
pub fn exit_tail(spec: &SimSpec, rho: f64, t_ladder: &[f64], s_ladder: &[f64]) -> Result<ExitTailReport> {
    if t_ladder.is_empty() {
        return Err(Error::Empty("T ladder".into()));
    }
    if t_ladder.iter().any(|t| *t > spec.horizon * (1.0 + 1e-12)) {
        return Err(invalid("horizon", "must cover the T ladder"));
    }
    let (times, div) = exit_times(spec, rho)?;
    if times.iter().all(|t| t.is_none()) {
        return Err(Error::AllCensored);
    }
    let n = times.len() as f64;
    let prob = |count: usize| {
        let p = count as f64 / n;
        (p, (p * (1.0 - p) / n).sqrt())
    };
    let survivors = |t: f64| times.iter().filter(|s| s.is_none_or(|v| v > t)).count();
    let curve: Vec<CurvePoint> = t_ladder
        .iter()
        .map(|&t| {
            let (p, se) = prob(survivors(t));
            CurvePoint {
                ladder: t,
                estimate: p,
                std_error: se,
            }
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = t_ladder
        .iter()
        .filter_map(|&t| {
            let c = survivors(t);
            (c >= 20).then(|| (t, (c as f64 / n).ln()))
        })
        .unzip();
    let fit = linear_fit(&xs, &ys);
    let (n_hat, rate) = fit.map_or((f64::NAN, f64::NAN), |f| (f.intercept.exp(), -f.slope));
    let p0_hat = 1.0 - times.iter().filter(|s| s.is_none_or(|v| v >= rho * rho)).count() as f64 / n;
    let early = |s: f64| times.iter().filter(|v| v.is_some_and(|v| v <= s)).count();
    let small_time: Vec<CurvePoint> = s_ladder
        .iter()
        .map(|&s| {
            let (p, se) = prob(early(s));
            CurvePoint {
                ladder: s,
                estimate: p,
                std_error: se,
            }
        })
        .collect();
    let (sx, sy): (Vec<f64>, Vec<f64>) = s_ladder
        .iter()
        .filter_map(|&s| {
            let c = early(s);
            (c >= 5).then(|| (1.0 / s, (c as f64 / n).ln()))
        })
        .unzip();
    let small_time_c = linear_fit(&sx, &sy).map(|f| -f.slope / (rho * rho));
    Ok(ExitTailReport {
        rho,
        curve,
        fit,
        n_hat,
        rate,
        rate_rho2: rate * rho * rho,
        p0_hat,
        small_time,
        small_time_c,
        n_paths: times.len(),
        diverged: div,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceExitReport {
    pub rho: f64,
    pub curve: Vec<CurvePoint>,
    /// `-ln E e^{-lambda tau_rho} / sqrt(lambda)` per ladder value (NaN at 0).
    pub envelope: Vec<f64>,
}

/// `E e^{-lambda tau_rho}` with `tau_rho` the exit from `C_rho(t0, x0)`, lid included.
pub fn laplace_exit(spec: &SimSpec, rho: f64, lambdas: &[f64]) -> Result<LaplaceExitReport> {
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(invalid("lambda", "must be nonnegative"));
    }
    let run = SimSpec {
        horizon: rho * rho,
        ..spec.clone()
    };
    let sim = Simulator::new(&run)?;
    let cyl = Region::Cylinder {
        t: spec.t0,
        center: spec.x0.clone(),
        rho,
    };
    let recs = sim.map_paths(|s, p| s.exit_record(p, &cyl));
    let taus: Vec<f64> = recs.iter().filter(|r| !r.diverged).map(|r| r.time.min(rho * rho)).collect();
    let mut curve = Vec::new();
    let mut envelope = Vec::new();
    for &l in lambdas {
        let vals: Vec<f64> = taus.iter().map(|t| (-l * t).exp()).collect();
        let (m, se) = mean_se(&vals);
        curve.push(CurvePoint {
            ladder: l,
            estimate: m,
            std_error: se,
        });
        envelope.push(if l > 0.0 { -m.ln() / l.sqrt() } else { f64::NAN });
    }
    Ok(LaplaceExitReport { rho, curve, envelope })
}

/// `n` points uniform in `B_r(center)`.
pub fn sample_ball(center: &[f64], r: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = center.len();
    let mut rng = path_rng(derive_seed(seed, 0xBA11), 0);
    (0..n)
        .map(|_| loop {
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if norm(&y) < 1.0 {
                break center.iter().zip(&y).map(|(c, v)| c + r * v).collect();
            }
        })
        .collect()
}

/// Runs `paths_per_start` paths from each start at time `t`, start `i` on seed
/// `derive_seed(seed, i)`, and collects `eval` per path in start order.
fn pooled<T: Send>(
    spec: &SimSpec,
    t: f64,
    starts: &[Vec<f64>],
    paths_per_start: usize,
    horizon: f64,
    eval: impl Fn(&Simulator, u64) -> T + Sync,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(starts.len() * paths_per_start);
    for (i, x) in starts.iter().enumerate() {
        let s = SimSpec {
            t0: t,
            x0: x.clone(),
            horizon,
            n_paths: paths_per_start,
            seed: derive_seed(spec.seed, i as u64),
            ..spec.clone()
        };
        let sim = Simulator::new(&s)?;
        out.extend(sim.map_paths(|s, p| eval(s, p)));
    }
    Ok(out)
}

/// Nested unions of cells of `C_R(s, y)` with exact volume fractions `qs`
/// (largest first): cells ordered by decreasing first coordinate, ties by index.
pub fn nested_cell_ladder(s: f64, y: &[f64], r: f64, qs: &[f64], n: usize) -> Result<Vec<(Region, f64)>> {
    let d = y.len();
    let dom = GridDomain::new(
        (s, s + r * r),
        n,
        y.iter().map(|c| c - r).collect(),
        y.iter().map(|c| c + r).collect(),
        vec![n; d],
    )?;
    let all = CellSet::from_predicate(dom.clone(), |_, x| dist(x, y) < r)?;
    let ns = dom.n_space();
    let mut order = all.cells.clone();
    let mut x = vec![0.0; d];
    let key = |c: usize, x: &mut Vec<f64>| {
        dom.space_center(c % ns, x);
        x[0]
    };
    order.sort_by(|a, b| key(*b, &mut x.clone()).total_cmp(&key(*a, &mut x)).then(a.cmp(b)));
    qs.iter()
        .map(|&q| {
            if !(q > 0.0 && q <= 1.0) {
                return Err(invalid("q", "must lie in (0, 1]"));
            }
            let k = ((q * order.len() as f64).round() as usize).max(1);
            let set = all.subset(order[..k].to_vec())?;
            let exact = k as f64 / order.len() as f64;
            Ok((Region::Cells(set), exact))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub q: f64,
    pub estimate: EstimateReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationReport {
    pub radius: f64,
    pub rows: Vec<LadderRow>,
    /// Slope of `ln(occupation / R^2)` against `ln q`.
    pub gamma_hat: Option<f64>,
    pub fit: Option<LinearFit>,
}

/// Occupation of each `Gamma` before exit from `C_R(s, y)`, from `n_starts`
/// uniform starts in `B_{kappa R}(y)` at time `s`, pooled.
pub fn occupation_experiment(
    spec: &SimSpec,
    r: f64,
    kappa: f64,
    s: f64,
    y: &[f64],
    gammas: &[(Region, f64)],
    n_starts: usize,
) -> Result<OccupationReport> {
    if gammas.is_empty() {
        return Err(Error::Empty("Gamma ladder".into()));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(invalid("kappa", "must lie in (0, 1)"));
    }
    let starts = sample_ball(y, kappa * r, n_starts.max(1), spec.seed);
    let per = spec.n_paths.div_ceil(starts.len());
    let dom = Region::Cylinder {
        t: s,
        center: y.to_vec(),
        rho: r,
    };
    let h = spec.h;
    let vals = pooled(spec, s, &starts, per, r * r, |sim, p| {
        let mut acc = vec![0.0; gammas.len()];
        let n = sim.n_steps();
        let o = sim.run_path(p, |k, t, x| {
            if !dom.contains(t, x) || k == n {
                return false;
            }
            for (a, (g, _)) in acc.iter_mut().zip(gammas) {
                if g.contains(t, x) {
                    *a += h;
                }
            }
            true
        });
        (acc, o.diverged)
    })?;
    let div = vals.iter().filter(|v| v.1).count();
    let fp = spec.fingerprint();
    let rows: Vec<LadderRow> = gammas
        .iter()
        .enumerate()
        .map(|(i, (_, q))| {
            let xs: Vec<f64> = vals.iter().filter(|v| !v.1).map(|v| v.0[i]).collect();
            LadderRow {
                q: *q,
                estimate: EstimateReport::from_samples(&xs, fp.clone()).with_diverged(div),
            }
        })
        .collect();
    let qs: Vec<f64> = rows.iter().map(|r| r.q).collect();
    let occ: Vec<f64> = rows.iter().map(|row| row.estimate.value / (r * r)).collect();
    let fit = power_fit(&qs, &occ);
    Ok(OccupationReport {
        radius: r,
        gamma_hat: fit.map(|f| f.slope),
        fit,
        rows,
    })
}

/// `Gamma_xi = {cells of C_R(s, y) with time >= s + (1 - xi) R^2}`; `|Gamma| / |C_R| = xi`
/// up to the time grid.
pub fn time_slab_targets(s: f64, y: &[f64], r: f64, xis: &[f64], n: usize) -> Result<Vec<(Region, f64)>> {
    let d = y.len();
    let dom = GridDomain::new(
        (s, s + r * r),
        n,
        y.iter().map(|c| c - r).collect(),
        y.iter().map(|c| c + r).collect(),
        vec![n; d],
    )?;
    let all = CellSet::from_predicate(dom.clone(), |_, x| dist(x, y) < r)?;
    xis.iter()
        .map(|&xi| {
            if !(0.0..=1.0).contains(&xi) {
                return Err(invalid("xi", "must lie in [0, 1]"));
            }
            let cut = s + (1.0 - xi) * r * r;
            let set = CellSet::from_predicate(dom.clone(), |t, x| t >= cut && dist(x, y) < r)?;
            let frac = set.len() as f64 / all.len() as f64;
            Ok((Region::Cells(set), frac))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingReport {
    pub radius: f64,
    /// `q` is `|Gamma| / |C_R|`.
    pub rows: Vec<LadderRow>,
}

/// `P(hit Gamma before leaving C_{2R}(s, y))` from starts in `B_{kappa R}(y)` at time `s`.
pub fn hitting_experiment(
    spec: &SimSpec,
    r: f64,
    kappa: f64,
    s: f64,
    y: &[f64],
    targets: &[(Region, f64)],
    n_starts: usize,
) -> Result<HittingReport> {
    if targets.is_empty() {
        return Err(Error::Empty("target ladder".into()));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(invalid("kappa", "must lie in (0, 1)"));
    }
    let starts = sample_ball(y, kappa * r, n_starts.max(1), spec.seed);
    let per = spec.n_paths.div_ceil(starts.len());
    let dom = Region::Cylinder {
        t: s,
        center: y.to_vec(),
        rho: 2.0 * r,
    };
    let vals = pooled(spec, s, &starts, per, 4.0 * r * r, |sim, p| {
        targets
            .iter()
            .map(|(g, _)| {
                let mut hit = false;
                let o = sim.run_path(p, |_, t, x| {
                    if g.contains(t, x) {
                        hit = true;
                        return false;
                    }
                    dom.contains(t, x)
                });
                (if hit { 1.0 } else { 0.0 }, o.diverged)
            })
            .collect::<Vec<_>>()
    })?;
    let fp = spec.fingerprint();
    let rows = targets
        .iter()
        .enumerate()
        .map(|(i, (_, q))| {
            let xs: Vec<f64> = vals.iter().filter(|v| !v[i].1).map(|v| v[i].0).collect();
            let div = vals.iter().filter(|v| v[i].1).count();
            LadderRow {
                q: *q,
                estimate: EstimateReport::from_samples(&xs, fp.clone()).with_diverged(div),
            }
        })
        .collect();
    Ok(HittingReport { radius: r, rows })
}

/// `E f(x + W_tau)` in closed form for constants and Gaussian bumps.
pub fn heat_flow_bm(f: &ScalarField, tau: f64, x: &[f64]) -> Result<f64> {
    let d = f.dim;
    match &f.kind {
        ScalarKind::Constant { c } => Ok(*c),
        ScalarKind::GaussianBump { center, width, amplitude } => {
            let s2 = width * width + tau;
            let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(amplitude * (width * width / s2).powf(0.5 * d as f64) * (-r2 / (2.0 * s2)).exp())
        }
        ScalarKind::HalfSpace { axis, offset } => {
            if tau == 0.0 {
                return Ok(if x[*axis] > *offset { 1.0 } else { 0.0 });
            }
            Ok(0.5 * erfc(-(x[*axis] - offset) / (2.0 * tau).sqrt()))
        }
        _ => Err(invalid("f", "no closed-form heat flow for this kind")),
    }
}

/// Gaussian bumps of width `width` centered on a `count^d` lattice of spacing
/// `spacing` around `origin`.
pub fn bump_basis(origin: &[f64], spacing: f64, count: usize, width: f64) -> Vec<ScalarField> {
    let d = origin.len();
    let total = count.pow(d as u32);
    let off = 0.5 * (count as f64 - 1.0);
    (0..total)
        .map(|mut i| {
            let mut c = vec![0.0; d];
            for a in (0..d).rev() {
                c[a] = origin[a] + ((i % count) as f64 - off) * spacing;
                i /= count;
            }
            ScalarField {
                dim: d,
                kind: ScalarKind::GaussianBump {
                    center: c,
                    width,
                    amplitude: 1.0,
                },
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub n_hat: f64,
    pub argmax_basis: usize,
    pub argmax_x: Vec<f64>,
    /// `(basis, x)` pairs skipped because `u(0, x) = 0`.
    pub excluded: usize,
}

/// Points of an `n^d` lattice on `[-R/2, R/2]^d` with `|x| <= R/2`, shifted by `origin`.
fn harnack_points(origin: &[f64], r: f64, n: usize) -> Vec<Vec<f64>> {
    let d = origin.len();
    let n = n.max(2);
    let mut out = Vec::new();
    for mut i in 0..n.pow(d as u32) {
        let mut y = vec![0.0; d];
        for a in (0..d).rev() {
            y[a] = -0.5 * r + r * (i % n) as f64 / (n - 1) as f64;
            i /= n;
        }
        if norm(&y) <= 0.5 * r * (1.0 + 1e-12) {
            out.push(origin.iter().zip(&y).map(|(o, v)| o + v).collect());
        }
    }
    out
}

fn harnack_reduce(ratios: impl Iterator<Item = (usize, Vec<f64>, Option<f64>)>) -> HarnackReport {
    let mut best = (f64::NEG_INFINITY, 0, Vec::new());
    let mut excluded = 0;
    for (b, x, r) in ratios {
        match r {
            Some(v) if v > best.0 => best = (v, b, x),
            Some(_) => {}
            None => excluded += 1,
        }
    }
    HarnackReport {
        n_hat: best.0,
        argmax_basis: best.1,
        argmax_x: best.2,
        excluded,
    }
}

/// `sup u(R^2, origin) / u(0, origin + x)` over the basis and `|x| <= R/2` for
/// Brownian motion, `u(t, x) = E f(x + W_{T - t})` in closed form.
pub fn harnack_ratio_bm(origin: &[f64], r: f64, horizon: f64, basis: &[ScalarField], n: usize) -> Result<HarnackReport> {
    if !(horizon > r * r) {
        return Err(invalid("horizon", "must exceed R^2"));
    }
    if basis.is_empty() {
        return Err(Error::Empty("basis".into()));
    }
    let pts = harnack_points(origin, r, n);
    let mut rows = Vec::new();
    for (b, f) in basis.iter().enumerate() {
        let top = heat_flow_bm(f, horizon - r * r, origin)?;
        for x in &pts {
            let bottom = heat_flow_bm(f, horizon, x)?;
            rows.push((b, x.clone(), (bottom > 0.0).then(|| top / bottom)));
        }
    }
    Ok(harnack_reduce(rows.into_iter()))
}

/// Same ratio with `u` estimated by Monte Carlo under `spec`'s coefficients
/// (`spec.x0` is the origin; each start has its own seed).
pub fn harnack_ratio_mc(spec: &SimSpec, r: f64, horizon: f64, basis: &[ScalarField], n: usize) -> Result<HarnackReport> {
    if !(horizon > r * r) {
        return Err(invalid("horizon", "must exceed R^2"));
    }
    if basis.is_empty() {
        return Err(Error::Empty("basis".into()));
    }
    let origin = spec.x0.clone();
    let pts = harnack_points(&origin, r, n);
    let finals = |t: f64, x: &[f64], label: u64| -> Result<Vec<Vec<f64>>> {
        let s = SimSpec {
            t0: t,
            x0: x.to_vec(),
            horizon: horizon - t,
            seed: derive_seed(spec.seed, label),
            ..spec.clone()
        };
        let sim = Simulator::new(&s)?;
        Ok(sim
            .map_paths(|s, p| {
                let mut last = Vec::new();
                let o = s.run_path(p, |_, _, x| {
                    last.clear();
                    last.extend_from_slice(x);
                    true
                });
                (!o.diverged).then_some(last)
            })
            .into_iter()
            .flatten()
            .collect())
    };
    let mean_of = |f: &ScalarField, xs: &[Vec<f64>]| {
        let v: Vec<f64> = xs.iter().map(|x| f.eval(spec.t0 + horizon, x).unwrap_or(0.0)).collect();
        mean_se(&v).0
    };
    let top_paths = finals(spec.t0 + r * r, &origin, 0)?;
    let bottoms: Vec<Vec<Vec<f64>>> = pts
        .iter()
        .enumerate()
        .map(|(i, x)| finals(spec.t0, x, 1 + i as u64))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (b, f) in basis.iter().enumerate() {
        let top = mean_of(f, &top_paths);
        for (x, paths) in pts.iter().zip(&bottoms) {
            let bottom = mean_of(f, paths);
            rows.push((b, x.clone(), (bottom > 0.0).then(|| top / bottom)));
        }
    }
    Ok(harnack_reduce(rows.into_iter()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    /// `(r, osc_{C_r} u)`.
    pub rows: Vec<(f64, f64)>,
    pub alpha_hat: Option<f64>,
    pub fit: Option<LinearFit>,
}

/// Sample points of `C_r(t, x)`: `m` times from the bottom to just below the
/// lid, spatial `m^d` lattice points inside the ball.
fn cylinder_points(t: f64, x: &[f64], r: f64, m: usize) -> Vec<(f64, Vec<f64>)> {
    let d = x.len();
    let m = m.max(2);
    let mut out = Vec::new();
    for j in 0..m {
        let tj = t + r * r * j as f64 / m as f64;
        for mut i in 0..m.pow(d as u32) {
            let mut y = vec![0.0; d];
            for a in (0..d).rev() {
                y[a] = -r + 2.0 * r * (i % m) as f64 / (m - 1) as f64;
                i /= m;
            }
            if norm(&y) < r * (1.0 + 1e-12) {
                out.push((tj, x.iter().zip(&y).map(|(c, v)| c + 0.999 * v).collect()));
            }
        }
    }
    out
}

fn oscillation_report(rows: Vec<(f64, f64)>) -> OscillationReport {
    let (rs, os): (Vec<f64>, Vec<f64>) = rows.iter().copied().unzip();
    let fit = power_fit(&rs, &os);
    OscillationReport {
        rows,
        alpha_hat: fit.map(|f| f.slope),
        fit,
    }
}

/// Oscillation of `u(t, x) = E f(x + W_{T - t})` over `C_r(t, x)` for each `r`,
/// closed form, and the fitted exponent of `osc ~ r^alpha`.
pub fn caloric_oscillation_bm(f: &ScalarField, horizon: f64, t: f64, x: &[f64], radii: &[f64], m: usize) -> Result<OscillationReport> {
    let rows = radii
        .iter()
        .map(|&r| {
            if t + r * r >= horizon {
                return Err(invalid("radii", "cylinders must end before the horizon"));
            }
            let vals = cylinder_points(t, x, r, m)
                .iter()
                .map(|(s, y)| heat_flow_bm(f, horizon - s, y))
                .collect::<Result<Vec<_>>>()?;
            let (lo, hi) = vals
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            Ok((r, hi - lo))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(oscillation_report(rows))
}

/// Same oscillation with `u` from Monte Carlo under `spec`'s coefficients.
pub fn caloric_oscillation_mc(spec: &SimSpec, f: &ScalarField, horizon: f64, radii: &[f64], m: usize) -> Result<OscillationReport> {
    let (t, x) = (spec.t0, spec.x0.clone());
    let mut label = 0u64;
    let mut rows = Vec::new();
    for &r in radii {
        if t + r * r >= t + horizon {
            return Err(invalid("radii", "cylinders must end before the horizon"));
        }
        let mut vals = Vec::new();
        for (s, y) in cylinder_points(t, &x, r, m) {
            let run = SimSpec {
                t0: s,
                x0: y,
                horizon: t + horizon - s,
                seed: derive_seed(spec.seed, label),
                ..spec.clone()
            };
            label += 1;
            let sim = Simulator::new(&run)?;
            let end = t + horizon;
            let samples: Vec<f64> = sim
                .map_paths(|s, p| {
                    let mut v = 0.0;
                    let o = s.run_path(p, |k, _, x| {
                        if k == s.n_steps() {
                            v = f.eval(end, x).unwrap_or(0.0);
                        }
                        true
                    });
                    (!o.diverged).then_some(v)
                })
                .into_iter()
                .flatten()
                .collect();
            vals.push(mean_se(&samples).0);
        }
        let (lo, hi) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        rows.push((r, hi - lo));
    }
    Ok(oscillation_report(rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventReport {
    /// `(lambda, ||R_lambda f|| / ||f||)`.
    pub rows: Vec<(f64, f64)>,
    pub fit: Option<LinearFit>,
}

/// `R_lambda f(t, x) = E int_0^T e^{-lambda s} f(t+s, x_s) ds` at the cell
/// centers of `grid` (each on its own seed), then the ratio of mixed norms over `region`.
pub fn resolvent_norm_scan(
    spec: &SimSpec,
    f: &ScalarField,
    lambdas: &[f64],
    norm_spec: &MixedNormSpec,
    grid: &GridDomain,
    region: &Cylinder,
) -> Result<ResolventReport> {
    if lambdas.is_empty() {
        return Err(Error::Empty("lambda ladder".into()));
    }
    let fg = GridFunction::<f64>::sample_scalar(grid.clone(), f)?;
    let fnorm = mixed_norm(&fg, norm_spec, region)?;
    if !(fnorm > 0.0) {
        return Err(invalid("f", "has zero norm on the region"));
    }
    let ns = grid.n_space();
    let integrand = scalar_integrand(f);
    let cells: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let mut x = vec![0.0; grid.dim()];
            grid.space_center(c % ns, &mut x);
            let s = SimSpec {
                t0: grid.t_center(c / ns),
                x0: x,
                seed: derive_seed(spec.seed, c as u64),
                ..spec.clone()
            };
            match path_integrals(&s, None, lambdas, &[&integrand]) {
                Ok((cols, _)) => cols.iter().map(|c| mean_se(c).0).collect(),
                Err(_) => vec![f64::NAN; lambdas.len()],
            }
        })
        .collect();
    let mut rows = Vec::new();
    for (li, &l) in lambdas.iter().enumerate() {
        let vals: Vec<f64> = cells.iter().map(|v| v[li]).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(invalid("spec", "a resolvent cell failed to simulate"));
        }
        let rg = GridFunction::new(grid.clone(), vals, format!("R[{l}]"))?;
        rows.push((l, mixed_norm(&rg, norm_spec, region)? / fnorm));
    }
    let (ls, rs): (Vec<f64>, Vec<f64>) = rows.iter().copied().unzip();
    Ok(ResolventReport {
        fit: power_fit(&ls, &rs),
        rows,
    })
}

/// A fitted constant with a free-form fit diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedConstant {
    pub value: f64,
    pub diagnostic: String,
}

/// Empirical surrogates of the regularity constants, assembled from the
/// estimators above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    pub dim: usize,
    pub sb0_hat: Option<FittedConstant>,
    pub sp0_hat: Option<FittedConstant>,
    pub gamma_hat: Option<FittedConstant>,
    pub d0_hat: Option<FittedConstant>,
}

impl RegularityConstants {
    pub fn from_runs(
        dim: usize,
        drift: Option<&ModeratedDriftReport>,
        tail: Option<&ExitTailReport>,
        occupation: Option<&OccupationReport>,
        d0: Option<FittedConstant>,
    ) -> Self {
        Self {
            dim,
            sb0_hat: drift.map(|m| FittedConstant {
                value: m.value,
                diagnostic: format!("moderated drift at rho={} (se {:.3e})", m.rho, m.std_error),
            }),
            sp0_hat: tail.map(|t| FittedConstant {
                value: t.p0_hat,
                diagnostic: format!("1 - P(tau' >= rho^2) at rho={}", t.rho),
            }),
            gamma_hat: occupation.and_then(|o| {
                o.gamma_hat.map(|g| FittedConstant {
                    value: g,
                    diagnostic: format!("occupation ladder slope, r2={:.4}", o.fit.map_or(f64::NAN, |f| f.r2)),
                })
            }),
            d0_hat: d0,
        }
    }

    /// Names of the constants that fall outside their admissible ranges.
    pub fn violations(&self) -> Vec<&'static str> {
        let d = self.dim as f64;
        let mut out = Vec::new();
        if self.sp0_hat.as_ref().is_some_and(|c| !(c.value > 0.0 && c.value < 1.0)) {
            out.push("sp0_hat");
        }
        if self.gamma_hat.as_ref().is_some_and(|c| !(c.value > 0.0 && c.value <= 1.0)) {
            out.push("gamma_hat");
        }
        if self.d0_hat.as_ref().is_some_and(|c| !(c.value > 0.5 * d && c.value < d)) {
            out.push("d0_hat");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentBoundReport {
    /// `(t, E sup_{r <= t} |x_r - x0|^4, std_error, ratio to t^2 + t^4)`.
    pub rows: Vec<(f64, f64, f64, f64)>,
    pub n_hat: f64,
}

/// `E sup_{r <= t} |x_r - x0|^4` on a time ladder and the fitted `N` in `<= N (t^2 + t^4)`.
pub fn moment_bound(spec: &SimSpec, ts: &[f64]) -> Result<MomentBoundReport> {
    if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0)) {
        return Err(invalid("ts", "need positive times"));
    }
    let tmax = ts.iter().copied().fold(0.0, f64::max);
    let run = SimSpec {
        horizon: tmax,
        ..spec.clone()
    };
    let sim = Simulator::new(&run)?;
    let marks: Vec<usize> = ts
        .iter()
        .map(|t| {
            SimSpec {
                horizon: *t,
                ..run.clone()
            }
            .n_steps()
        })
        .collect();
    let x0 = spec.x0.clone();
    let per = sim.map_paths(|s, p| {
        let mut sup = 0.0f64;
        let mut out = vec![0.0; marks.len()];
        let o = s.run_path(p, |k, _, x| {
            sup = sup.max(dist(x, &x0));
            for (o, m) in out.iter_mut().zip(&marks) {
                if k == *m {
                    *o = sup.powi(4);
                }
            }
            true
        });
        (out, o.diverged)
    });
    let mut rows = Vec::new();
    let mut n_hat = 0.0f64;
    for (i, &t) in ts.iter().enumerate() {
        let xs: Vec<f64> = per.iter().filter(|p| !p.1).map(|p| p.0[i]).collect();
        let (m, se) = mean_se(&xs);
        let ratio = m / (t * t + t.powi(4));
        n_hat = n_hat.max(ratio);
        rows.push((t, m, se, ratio));
    }
    Ok(MomentBoundReport { rows, n_hat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{DriftKind, VectorField};
    use crate::morrey::NormOrder;

    #[test]
    fn potential_of_constants() {
        let spec = SimSpec::brownian(vec![0.0, 0.0], 1.0, 0.01, 50, 1);
        let one = ScalarField::constant(2, 1.0);
        let p = potential(&spec, &one, 0.0, None).unwrap();
        assert!((p.value - 1.0).abs() < 1e-12 && p.std_error < 1e-12);
        let long = SimSpec::brownian(vec![0.0, 0.0], 20.0, 0.01, 10, 1);
        let p = potential(&long, &one, 2.0, None).unwrap();
        assert!((p.value - 0.5).abs() < 0.005);
    }

    #[test]
    fn potential_is_monotone_and_linear() {
        let spec = SimSpec::brownian(vec![0.0, 0.0], 2.0, 0.01, 400, 9);
        let f = ScalarField::new(
            2,
            ScalarKind::IndicatorBall {
                center: vec![0.3, 0.0],
                radius: 0.5,
            },
        )
        .unwrap();
        let g = ScalarField::new(
            2,
            ScalarKind::GaussianBump {
                center: vec![0.0, 0.0],
                width: 0.5,
                amplitude: 1.0,
            },
        )
        .unwrap();
        let both = ScalarField::new(
            2,
            ScalarKind::GaussianBump {
                center: vec![0.0, 0.0],
                width: 0.5,
                amplitude: 3.0,
            },
        )
        .unwrap();
        let r = potential_many(&spec, &[f.clone(), g.clone(), both], 0.5, None).unwrap();
        assert!((r[2].value - 3.0 * r[1].value).abs() < 1e-9);
        let l1 = potential(&spec, &f, 1.0, None).unwrap();
        let l2 = potential(&spec, &f, 2.0, None).unwrap();
        assert!(l2.value <= l1.value);
        let short = potential(
            &spec.clone().with_h(0.01),
            &f,
            1.0,
            Some(&Region::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            }),
        )
        .unwrap();
        assert!(short.value <= l1.value);
    }

    #[test]
    fn yukawa_oracle_for_a_centered_ball() {
        // closed form for x0 at the center: int_0^a e^{-kr}/(2 pi r) 4 pi r^2 dr
        let f = ScalarField::new(
            3,
            ScalarKind::IndicatorBall {
                center: vec![0.0; 3],
                radius: 0.7,
            },
        )
        .unwrap();
        let k = 2f64.sqrt();
        let a = 0.7;
        let exact = 2.0 * (1.0 - (1.0 + k * a) * (-k * a).exp()) / (k * k);
        let v = yukawa_potential(&f, &[0.0; 3], 1.0).unwrap();
        assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
        // total mass of the kernel is 1/lambda
        let wide = ScalarField::new(
            3,
            ScalarKind::GaussianBump {
                center: vec![0.0; 3],
                width: 1e3,
                amplitude: 1.0,
            },
        )
        .unwrap();
        assert!((yukawa_potential(&wide, &[0.2, 0.0, 0.0], 2.0).unwrap() - 0.5).abs() < 1e-4);
    }

    #[test]
    fn moderated_drift_bounds() {
        let spec = SimSpec::brownian(vec![0.0, 0.0], 1.0, 0.01, 200, 2);
        let anchors = vec![Anchor {
            t: 0.0,
            x: vec![0.0, 0.0],
            y: None,
        }];
        let z = moderated_drift(&spec, 0.5, &anchors).unwrap();
        assert_eq!(z.value, 0.0);
        let mut s = spec.clone();
        s.drift = VectorField::new(2, DriftKind::Constant { v: vec![3.0, 4.0] }).unwrap();
        let m = moderated_drift(&s, 0.5, &anchors).unwrap();
        assert!(m.value <= 5.0 * 0.5 + 1e-12 && m.value > 0.0);
    }

    #[test]
    fn exit_tail_and_laplace_shapes() {
        let spec = SimSpec::brownian(vec![0.0, 0.0], 3.0, 0.005, 4000, 4);
        let ts: Vec<f64> = (1..=6).map(|i| 0.25 * i as f64).collect();
        let r = exit_tail(&spec, 1.0, &ts, &[0.05, 0.1, 0.2]).unwrap();
        assert!(r.curve.windows(2).all(|w| w[1].estimate <= w[0].estimate));
        assert!(r.p0_hat > 0.0 && r.p0_hat < 1.0);
        assert!(r.fit.unwrap().r2 > 0.98);
        let lap = laplace_exit(&spec, 1.0, &[0.0, 1.0, 4.0, 16.0]).unwrap();
        assert_eq!(lap.curve[0].estimate, 1.0);
        assert!(lap.curve.windows(2).all(|w| w[1].estimate < w[0].estimate));
        let mean = exit_mean(&spec, 1.0, true).unwrap();
        assert!((mean.estimate.value - 0.5).abs() < 0.03, "{}", mean.estimate.value);
        let all_in = SimSpec::brownian(vec![0.0, 0.0], 0.01, 0.005, 10, 4);
        assert!(matches!(exit_tail(&all_in, 10.0, &[0.01], &[]), Err(Error::AllCensored)));
    }

    #[test]
    fn occupation_and_hitting_ladders() {
        let spec = SimSpec::brownian(vec![0.0, 0.0], 1.0, 0.01, 2000, 7);
        let y = [0.0, 0.0];
        let ladder = nested_cell_ladder(0.0, &y, 1.0, &[1.0, 0.5, 0.25, 0.125], 8).unwrap();
        let occ = occupation_experiment(&spec, 1.0, 0.5, 0.0, &y, &ladder, 10).unwrap();
        assert!(occ.rows.windows(2).all(|w| w[1].estimate.value <= w[0].estimate.value));
        let g = occ.gamma_hat.unwrap();
        assert!(g > 0.0 && g <= 1.2, "{g}");
        let targets = time_slab_targets(0.0, &y, 1.0, &[0.0, 0.5, 0.9, 1.0], 8).unwrap();
        let mut with_empty = vec![(Region::Empty, 0.0)];
        with_empty.extend(targets);
        let hit = hitting_experiment(&spec, 1.0, 0.5, 0.0, &y, &with_empty, 10).unwrap();
        assert_eq!(hit.rows[0].estimate.value, 0.0);
        assert_eq!(hit.rows[4].estimate.value, 1.0);
        assert!(hit.rows[3].estimate.value >= hit.rows[2].estimate.value);
    }

    #[test]
    fn harnack_basics() {
        let one = vec![ScalarField::constant(2, 1.0)];
        assert_eq!(harnack_ratio_bm(&[0.0, 0.0], 1.0, 2.0, &one, 5).unwrap().n_hat, 1.0);
        let basis = bump_basis(&[0.0, 0.0], 0.5, 3, 0.2);
        let a = harnack_ratio_bm(&[0.0, 0.0], 1.0, 2.0, &basis, 5).unwrap();
        let shifted = bump_basis(&[3.0, -1.0], 0.5, 3, 0.2);
        let b = harnack_ratio_bm(&[3.0, -1.0], 1.0, 2.0, &shifted, 5).unwrap();
        assert!(a.n_hat.is_finite() && a.n_hat > 1.0);
        assert!((a.n_hat - b.n_hat).abs() < 0.01 * a.n_hat);
    }

    #[test]
    fn oscillation_of_half_space_profile() {
        let f = ScalarField::new(2, ScalarKind::HalfSpace { axis: 0, offset: 0.0 }).unwrap();
        let r = caloric_oscillation_bm(&f, 1.0, 0.0, &[0.0, 0.0], &[0.02, 0.04, 0.08, 0.16], 5).unwrap();
        assert!((r.alpha_hat.unwrap() - 1.0).abs() < 0.1);
        let c = ScalarField::constant(2, 2.0);
        let z = caloric_oscillation_bm(&c, 1.0, 0.0, &[0.0, 0.0], &[0.1, 0.2], 3).unwrap();
        assert!(z.rows.iter().all(|r| r.1 == 0.0));
    }

    #[test]
    fn resolvent_of_one_is_exact() {
        let spec = SimSpec::brownian(vec![0.0, 0.0], 30.0, 0.05, 4, 3);
        let grid = GridDomain::new((0.0, 1.0), 2, vec![-1.0, -1.0], vec![1.0, 1.0], vec![2, 2]).unwrap();
        let region = Cylinder::new(0.0, vec![0.0, 0.0], 1.0).unwrap();
        let ns = MixedNormSpec::new(2.0, 2.0, NormOrder::TimeOuter).unwrap();
        let r = resolvent_norm_scan(&spec, &ScalarField::constant(2, 1.0), &[1.0, 2.0, 4.0], &ns, &grid, &region).unwrap();
        for (l, v) in &r.rows {
            let exact = (1.0 - (-l * 30.0f64).exp()) / l;
            assert!((v - exact).abs() < 1e-12);
        }
        assert!((r.fit.unwrap().slope + 1.0).abs() < 1e-9);
    }

    #[test]
    fn aleksandrov_with_constant_is_capped() {
        let spec = SimSpec::brownian(vec![0.0, 0.0], 1.0, 0.005, 500, 8);
        let ns = MixedNormSpec::new(3.0, 3.0, NormOrder::Bracket).unwrap();
        let r = aleksandrov_ratio(&spec, &[ScalarField::constant(2, 1.0)], 0.5, &ns, 8).unwrap();
        assert!(r.n_hat <= 1.0 && r.n_hat > 0.0);
        let fam = random_family(0.0, &[0.0, 0.0], 0.5, 10, 10, 3);
        assert_eq!(fam.len(), 20);
        let r = aleksandrov_ratio(&spec, &fam, 0.5, &ns, 8).unwrap();
        assert!(r.n_hat.is_finite());
        assert!(aleksandrov_ratio(&spec, &[], 0.5, &ns, 8).is_err());
    }

    #[test]
    fn moment_bound_for_brownian_motion() {
        let spec = SimSpec::brownian(vec![0.0, 0.0], 1.0, 0.01, 500, 5);
        let r = moment_bound(&spec, &[0.1, 0.5, 1.0]).unwrap();
        assert!(r.n_hat.is_finite() && r.n_hat > 0.0);
        assert!(r.rows.windows(2).all(|w| w[1].1 >= w[0].1));
    }
}
