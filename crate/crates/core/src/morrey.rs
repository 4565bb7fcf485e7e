//! Mixed norms, Morrey norms, the parabolic maximal function and heat potentials
//! on space-time cell grids.
//!
//! All integrals are midpoint sums over the cells whose centers lie in the
//! region. A normalized norm divides by the norm of `1` over the same cells,
//! so it is exactly one for constants whatever the cell layout.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::fields::VectorField;
use crate::geometry::Cylinder;
use crate::grid::{GridDomain, GridFunction};
use crate::heat::{smooth, SpaceGrid};
use crate::num::Real;
use crate::quadrature::gauss_legendre_on;

/// Exponents serialize as numbers, with infinity written as `"inf"`.
pub mod exponent {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
                other => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {other:?}"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormOrder {
    /// `(int (int |f|^p dx)^{q/p} dt)^{1/q}`.
    TimeOuter,
    /// `(int (int |f|^q dt)^{p/q} dx)^{1/p}`.
    SpaceOuter,
    /// Time-outer when `p > q`, space-outer when `q >= p`.
    Bracket,
}

fn infinity() -> f64 {
    f64::INFINITY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedNormSpec {
    #[serde(with = "exponent")]
    pub q: f64,
    #[serde(with = "exponent")]
    pub p: f64,
    pub order: NormOrder,
    #[serde(default)]
    pub beta: f64,
    #[serde(with = "exponent", default = "infinity")]
    pub rho_max: f64,
}

impl MixedNormSpec {
    pub fn new(q: f64, p: f64, order: NormOrder) -> Result<Self> {
        let s = Self {
            q,
            p,
            order,
            beta: 0.0,
            rho_max: f64::INFINITY,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_beta(mut self, beta: f64, rho_max: f64) -> Self {
        self.beta = beta;
        self.rho_max = rho_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 1.0) {
            return Err(invalid("spec.q", "exponent must be > 1 or inf"));
        }
        if !(self.p > 1.0) {
            return Err(invalid("spec.p", "exponent must be > 1 or inf"));
        }
        if !(self.beta >= 0.0) {
            return Err(invalid("spec.beta", "must be nonnegative"));
        }
        if !(self.rho_max > 0.0) {
            return Err(invalid("spec.rho_max", "must be positive"));
        }
        Ok(())
    }

    /// The concrete iteration order; `Bracket` ties go to space-outer.
    pub fn resolved_order(&self) -> NormOrder {
        match self.order {
            NormOrder::Bracket if self.p > self.q => NormOrder::TimeOuter,
            NormOrder::Bracket => NormOrder::SpaceOuter,
            o => o,
        }
    }
}

/// Exponent triple with `nu = 1 - mu/p - 1/q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessTriple {
    pub mu: f64,
    #[serde(with = "exponent")]
    pub q: f64,
    #[serde(with = "exponent")]
    pub p: f64,
    pub nu: f64,
    pub tight: bool,
}

pub fn tightness(mu: f64, q: f64, p: f64) -> Result<TightnessTriple> {
    if !(q >= 1.0) || !(p >= 1.0) {
        return Err(invalid("q", "exponents must lie in [1, inf]"));
    }
    let nu = 1.0 - mu / p - 1.0 / q;
    Ok(TightnessTriple {
        mu,
        q,
        p,
        nu,
        tight: nu >= 0.0,
    })
}

/// Cells of a grid selected by a cylinder.
pub(crate) struct CylinderCells {
    pub(crate) t_range: (usize, usize),
    pub(crate) space: Vec<usize>,
}

pub(crate) fn cylinder_cells(domain: &GridDomain, c: &Cylinder) -> Result<CylinderCells> {
    let d = domain.dim();
    if c.dim() != d {
        return Err(Error::Dimension { expected: d, got: c.dim() });
    }
    let lo: Vec<f64> = c.x.iter().map(|v| v - c.rho).collect();
    let hi: Vec<f64> = c.x.iter().map(|v| v + c.rho).collect();
    let tol = 1e-9 * (1.0 + c.rho);
    let inside = c.t >= domain.t_lo - tol
        && c.t_end() <= domain.t_hi + tol
        && (0..d).all(|i| lo[i] >= domain.x_lo[i] - tol && hi[i] <= domain.x_hi[i] + tol);
    if !inside {
        return Err(Error::OutsideGrid(format!(
            "cylinder t={} x={:?} rho={} leaves the grid",
            c.t, c.x, c.rho
        )));
    }
    let t_range = domain.t_range(c.t, c.t_end());
    let ranges: Vec<(usize, usize)> = (0..d).map(|i| domain.x_range(i, lo[i], hi[i])).collect();
    let mut space = Vec::new();
    if ranges.iter().all(|r| r.1 > r.0) {
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        let r2 = c.rho * c.rho;
        'outer: loop {
            let mut s = 0.0;
            for i in 0..d {
                let v = domain.x_center(i, idx[i]) - c.x[i];
                s += v * v;
            }
            if s < r2 {
                space.push(domain.flatten(&idx));
            }
            for i in (0..d).rev() {
                idx[i] += 1;
                if idx[i] < ranges[i].1 {
                    continue 'outer;
                }
                idx[i] = ranges[i].0;
            }
            break;
        }
    }
    if space.is_empty() || t_range.1 <= t_range.0 {
        return Err(Error::Empty("cylinder contains no cell centers".into()));
    }
    Ok(CylinderCells { t_range, space })
}

#[inline]
fn pow_abs<S: Real>(v: S, p: f64) -> S {
    let a = v.abs();
    if p == 2.0 {
        a * a
    } else if p == 1.0 {
        a
    } else {
        a.powf(S::lit(p))
    }
}

#[inline]
fn root<S: Real>(v: S, p: f64) -> S {
    if p == 2.0 {
        v.sqrt()
    } else {
        v.powf(S::lit(1.0 / p))
    }
}

/// Returns `(mixed norm of f, mixed norm of 1)` over the selected cells.
fn norm_pair<S: Real>(f: &GridFunction<S>, q: f64, p: f64, order: NormOrder, cells: &CylinderCells) -> (S, S) {
    let dom = &f.domain;
    let ns = dom.n_space();
    let dt = dom.dt();
    let dv = dom.space_cell_volume();
    let nt = cells.t_range.1 - cells.t_range.0;
    let nx = cells.space.len();
    let unit_t = if q.is_infinite() { 1.0 } else { (nt as f64 * dt).powf(1.0 / q) };
    let unit_x = if p.is_infinite() { 1.0 } else { (nx as f64 * dv).powf(1.0 / p) };
    let unit = S::lit(unit_t * unit_x);
    let value = match order {
        NormOrder::TimeOuter | NormOrder::Bracket => {
            let mut outer = S::zero();
            for it in cells.t_range.0..cells.t_range.1 {
                let row = &f.values[it * ns..(it + 1) * ns];
                let inner = if p.is_infinite() {
                    cells.space.iter().fold(S::zero(), |m, &ix| m.max(row[ix].abs()))
                } else {
                    let s: S = cells.space.iter().map(|&ix| pow_abs(row[ix], p)).sum();
                    root(s * S::lit(dv), p)
                };
                if q.is_infinite() {
                    outer = outer.max(inner);
                } else {
                    outer = outer + pow_abs(inner, q) * S::lit(dt);
                }
            }
            if q.is_infinite() {
                outer
            } else {
                root(outer, q)
            }
        }
        NormOrder::SpaceOuter => {
            let mut outer = S::zero();
            for &ix in &cells.space {
                let inner = if q.is_infinite() {
                    (cells.t_range.0..cells.t_range.1).fold(S::zero(), |m, it| m.max(f.values[it * ns + ix].abs()))
                } else {
                    let s: S = (cells.t_range.0..cells.t_range.1)
                        .map(|it| pow_abs(f.values[it * ns + ix], q))
                        .sum();
                    root(s * S::lit(dt), q)
                };
                if p.is_infinite() {
                    outer = outer.max(inner);
                } else {
                    outer = outer + pow_abs(inner, p) * S::lit(dv);
                }
            }
            if p.is_infinite() {
                outer
            } else {
                root(outer, p)
            }
        }
    };
    (value, unit)
}

/// Midpoint discretization of the iterated `L_{q,p}` norm over `region`.
pub fn mixed_norm<S: Real>(f: &GridFunction<S>, spec: &MixedNormSpec, region: &Cylinder) -> Result<S> {
    spec.validate()?;
    f.check_nonnegative()?;
    let cells = cylinder_cells(&f.domain, region)?;
    Ok(norm_pair(f, spec.q, spec.p, spec.resolved_order(), &cells).0)
}

/// `mixed_norm(f) / mixed_norm(1)` on the same cells.
pub fn normalized_norm<S: Real>(f: &GridFunction<S>, spec: &MixedNormSpec, region: &Cylinder) -> Result<S> {
    spec.validate()?;
    f.check_nonnegative()?;
    let cells = cylinder_cells(&f.domain, region)?;
    let (v, u) = norm_pair(f, spec.q, spec.p, spec.resolved_order(), &cells);
    Ok(v / u)
}

fn default_levels() -> usize {
    8
}
fn default_offsets() -> usize {
    3
}
fn default_budget() -> usize {
    4096
}
fn yes() -> bool {
    true
}
fn default_min_cells() -> f64 {
    1.0
}

/// The searched cylinder family: radius ladder `rho_top 2^{-j}`, `j = 0..=levels`;
/// anchors on a lattice of step `rho / offsets` through the box midpoint (time
/// step `rho^2 / offsets` from the lower lid), coarsened by factors of two until
/// at most `max_per_level` cylinders remain; radii below `min_radius_cells` cell
/// widths are skipped. `refine` adds a golden-section pass on the radius at the
/// best anchor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchPolicy {
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_offsets")]
    pub offsets: usize,
    #[serde(default = "default_budget")]
    pub max_per_level: usize,
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default = "default_min_cells")]
    pub min_radius_cells: f64,
}

impl Default for SearchPolicy {
    fn default() -> Self {
        Self {
            levels: 8,
            offsets: 3,
            max_per_level: 4096,
            refine: true,
            min_radius_cells: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelBest {
    pub rho: f64,
    pub value: f64,
    pub n_cylinders: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorreyReport {
    pub value: f64,
    pub argmax_cylinder: Cylinder,
    pub spec: MixedNormSpec,
    pub grid_fingerprint: String,
    pub n_cylinders: usize,
    pub levels: Vec<LevelBest>,
}

fn lattice(mid: f64, reach: f64, step: f64) -> Vec<f64> {
    // points mid + m step with |m step| <= reach
    let tol = 1e-9 * step.max(reach.abs());
    if reach < -tol {
        return Vec::new();
    }
    let m = ((reach + tol) / step).floor() as i64;
    (-m..=m).map(|k| mid + k as f64 * step).collect()
}

fn anchors_for(domain: &GridDomain, rho: f64, policy: &SearchPolicy) -> Vec<(f64, Vec<f64>)> {
    let d = domain.dim();
    let offsets = policy.offsets.max(1) as f64;
    let mut factor = 1.0;
    loop {
        let step = rho / offsets * factor;
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let mid = 0.5 * (domain.x_lo[i] + domain.x_hi[i]);
                let reach = 0.5 * (domain.x_hi[i] - domain.x_lo[i]) - rho;
                lattice(mid, reach, step)
            })
            .collect();
        let r2 = rho * rho;
        let span = domain.t_hi - domain.t_lo - r2;
        let tol = 1e-9 * (domain.t_hi - domain.t_lo);
        let times: Vec<f64> = if span < -tol {
            Vec::new()
        } else if r2 / offsets >= domain.dt() {
            let ts = r2 / offsets * factor * factor;
            let m = ((span + tol) / ts).floor() as usize;
            (0..=m).map(|k| domain.t_lo + k as f64 * ts).collect()
        } else {
            let stride = (factor * factor) as usize;
            (0..domain.n_t)
                .step_by(stride.max(1))
                .map(|k| (domain.t_center(k) - 0.5 * r2).clamp(domain.t_lo, domain.t_lo + span.max(0.0)))
                .collect()
        };
        let count = times.len() * axes.iter().map(|a| a.len()).product::<usize>();
        if count <= policy.max_per_level.max(1) || axes.iter().all(|a| a.len() <= 1) && times.len() <= 1 {
            let mut out = Vec::with_capacity(count);
            for &t in &times {
                let mut idx = vec![0usize; d];
                if axes.iter().any(|a| a.is_empty()) {
                    break;
                }
                'sp: loop {
                    out.push((t, (0..d).map(|i| axes[i][idx[i]]).collect()));
                    for i in (0..d).rev() {
                        idx[i] += 1;
                        if idx[i] < axes[i].len() {
                            continue 'sp;
                        }
                        idx[i] = 0;
                    }
                    break;
                }
            }
            return out;
        }
        factor *= 2.0;
    }
}

fn score<S: Real>(f: &GridFunction<S>, spec: &MixedNormSpec, order: NormOrder, c: &Cylinder) -> Option<f64> {
    let cells = cylinder_cells(&f.domain, c).ok()?;
    let (v, u) = norm_pair(f, spec.q, spec.p, order, &cells);
    let n = (v / u).to_f64_lossy();
    Some(if spec.beta == 0.0 { n } else { c.rho.powf(spec.beta) * n })
}

/// Largest radius of a cylinder anchored at `(t, x)` that stays in the grid.
fn fit_radius(domain: &GridDomain, t: f64, x: &[f64]) -> f64 {
    let mut r = (domain.t_hi - t).max(0.0).sqrt();
    for i in 0..domain.dim() {
        r = r.min(x[i] - domain.x_lo[i]).min(domain.x_hi[i] - x[i]);
    }
    r
}

/// Sup of `rho^beta * normalized_norm` over the searched family. The value is a
/// lower bound for the sup over all cylinders of radius at most `rho_max`.
pub fn morrey_norm<S: Real>(f: &GridFunction<S>, spec: &MixedNormSpec, policy: &SearchPolicy) -> Result<MorreyReport> {
    spec.validate()?;
    f.check_nonnegative()?;
    let dom = &f.domain;
    let order = spec.resolved_order();
    let half_min = (0..dom.dim())
        .map(|i| 0.5 * (dom.x_hi[i] - dom.x_lo[i]))
        .fold(f64::INFINITY, f64::min);
    let rho_top = spec.rho_max.min(half_min).min((dom.t_hi - dom.t_lo).sqrt());
    let min_rho = policy.min_radius_cells * (0..dom.dim()).map(|i| dom.dx(i)).fold(0.0, f64::max);
    let mut best: Option<(f64, Cylinder)> = None;
    let mut levels = Vec::new();
    let mut total = 0usize;
    for j in 0..=policy.levels {
        let rho = rho_top * 0.5f64.powi(j as i32);
        if rho < min_rho * (1.0 - 1e-12) {
            break;
        }
        let anchors = anchors_for(dom, rho, policy);
        let scores: Vec<Option<f64>> = anchors
            .par_iter()
            .map(|(t, x)| score(f, spec, order, &Cylinder { t: *t, x: x.clone(), rho }))
            .collect();
        total += anchors.len();
        // first index wins ties, independent of scheduling
        let mut lvl: Option<(f64, usize)> = None;
        for (i, s) in scores.iter().enumerate() {
            if let Some(v) = s {
                if lvl.is_none_or(|(b, _)| *v > b) {
                    lvl = Some((*v, i));
                }
            }
        }
        if let Some((v, i)) = lvl {
            levels.push(LevelBest {
                rho,
                value: v,
                n_cylinders: anchors.len(),
            });
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                let (t, x) = anchors[i].clone();
                best = Some((v, Cylinder { t, x, rho }));
            }
        }
    }
    let Some((mut value, mut arg)) = best else {
        return Err(Error::Empty("cylinder search family".into()));
    };
    if policy.refine {
        let cap = fit_radius(dom, arg.t, &arg.x).min(spec.rho_max);
        let (mut a, mut b) = ((0.5 * arg.rho).max(min_rho), (2.0 * arg.rho).min(cap));
        let eval = |r: f64| {
            score(
                f,
                spec,
                order,
                &Cylinder {
                    t: arg.t,
                    x: arg.x.clone(),
                    rho: r,
                },
            )
            .unwrap_or(f64::NEG_INFINITY)
        };
        if b > a {
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = b - g * (b - a);
            let mut e = a + g * (b - a);
            let (mut fc, mut fe) = (eval(c), eval(e));
            let mut cands = vec![(c, fc), (e, fe)];
            for _ in 0..24 {
                if fc >= fe {
                    b = e;
                    e = c;
                    fe = fc;
                    c = b - g * (b - a);
                    fc = eval(c);
                    cands.push((c, fc));
                } else {
                    a = c;
                    c = e;
                    fc = fe;
                    e = a + g * (b - a);
                    fe = eval(e);
                    cands.push((e, fe));
                }
            }
            total += cands.len();
            for (r, v) in cands {
                if v > value {
                    value = v;
                    arg = Cylinder { rho: r, ..arg.clone() };
                }
            }
        }
    }
    Ok(MorreyReport {
        value,
        argmax_cylinder: arg,
        spec: spec.clone(),
        grid_fingerprint: f.fingerprint(),
        n_cylinders: total,
        levels,
    })
}

/// `sup_{r <= rho_b} r * normalized_norm(|b|)`: the Morrey norm with `beta = 1` of `|b|`
/// sampled on `domain` (singular cells shifted).
pub fn hat_b(b: &VectorField, spec: &MixedNormSpec, rho_b: f64, domain: GridDomain, policy: &SearchPolicy) -> Result<MorreyReport> {
    if !(rho_b > 0.0) {
        return Err(invalid("rho_b", "must be positive"));
    }
    let g = GridFunction::<f64>::sample_drift_norm(domain, b)?;
    let s = spec.clone().with_beta(1.0, rho_b);
    morrey_norm(&g, &s, policy)
}

/// Parabolic maximal function over dyadic blocks of cells: spatial blocks of
/// `2^j` cells per axis with time extent the nearest number of time cells to
/// the squared spatial side, on the standard lattice and the lattice shifted by
/// half a block. Each cell takes the largest `r_j^beta` times block average over
/// the blocks containing it, `r_j` half the spatial side.
pub fn maximal_function<S: Real>(f: &GridFunction<S>, beta: f64) -> Result<GridFunction<S>> {
    if let Some((cell, v)) = f.values.iter().enumerate().find(|(_, v)| **v < S::zero()) {
        return Err(Error::Negative {
            cell,
            value: v.to_f64_lossy(),
        });
    }
    let dom = &f.domain;
    let d = dom.dim();
    let ns = dom.n_space();
    let nmax = *dom.n_x.iter().max().unwrap_or(&1);
    let dxm = (0..d).map(|i| dom.dx(i)).fold(0.0, f64::max);
    let mut out = f.values.clone();
    let mut j = 0u32;
    loop {
        let sb = 1usize << j;
        let side = sb as f64 * dxm;
        let tb = ((side * side / dom.dt()).round() as usize).clamp(1, dom.n_t);
        let weight = S::lit((0.5 * side).powf(beta));
        let shifts: Vec<(usize, usize)> = if sb == 1 { vec![(0, 0)] } else { vec![(0, 0), (sb / 2, tb / 2)] };
        for (sx, st) in shifts {
            let nbx: Vec<usize> = dom.n_x.iter().map(|n| (n + sx).div_ceil(sb)).collect();
            let nbt = (dom.n_t + st).div_ceil(tb);
            let nb_space: usize = nbx.iter().product();
            let mut sums = vec![S::zero(); nbt * nb_space];
            let mut counts = vec![0usize; nbt * nb_space];
            let mut idx = vec![0usize; d];
            let block_of = |it: usize, idx: &[usize]| {
                let mut b = 0;
                for i in 0..d {
                    b = b * nbx[i] + (idx[i] + sx) / sb;
                }
                ((it + st) / tb) * nb_space + b
            };
            for it in 0..dom.n_t {
                for ix in 0..ns {
                    dom.unflatten(ix, &mut idx);
                    let b = block_of(it, &idx);
                    sums[b] = sums[b] + f.values[it * ns + ix];
                    counts[b] += 1;
                }
            }
            for it in 0..dom.n_t {
                for ix in 0..ns {
                    dom.unflatten(ix, &mut idx);
                    let b = block_of(it, &idx);
                    let avg = sums[b] / S::from_usize_lossy(counts[b]);
                    let v = weight * avg;
                    let o = &mut out[it * ns + ix];
                    if v > *o {
                        *o = v;
                    }
                }
            }
        }
        if sb >= nmax {
            break;
        }
        j += 1;
    }
    Ok(GridFunction::new(dom.clone(), out, format!("maximal({})", f.provenance))?.declare_nonnegative(true))
}

/// `P_{alpha,k} f(t,x) = int_0^inf int s^{-(d+2-alpha)/2} e^{-|y|^2/(k s)} f(t+s, x+y) dy ds`
/// at cell centers. The spatial integral is `(pi k s)^{d/2}` times a Gaussian
/// convolution of variance `k s / 2`; in time `f` is constant on each cell and
/// the `s`-integral over a cell is done by Gauss–Legendre in `u = s^{alpha/2}`.
/// `f` is taken to vanish outside the grid.
pub fn heat_potential<S: Real>(f: &GridFunction<S>, alpha: f64, k: f64, nodes: usize) -> Result<GridFunction<S>> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha", "must be positive"));
    }
    if !(k > 0.0) {
        return Err(invalid("k", "must be positive"));
    }
    let dom = &f.domain;
    let d = dom.dim();
    let ns = dom.n_space();
    let grid = SpaceGrid::new(
        (0..d).map(|i| dom.x_lo[i] + 0.5 * dom.dx(i)).collect(),
        (0..d).map(|i| dom.dx(i)).collect(),
        dom.n_x.clone(),
    )?;
    let dt = dom.dt();
    let pref = (std::f64::consts::PI * k).powf(0.5 * d as f64) * 2.0 / alpha;
    let nodes = nodes.max(1);
    // contribution of time cell j to output cell i depends on (j, j - i)
    let rows: Vec<Vec<S>> = (0..dom.n_t)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![S::zero(); ns];
            for j in i..dom.n_t {
                let slice = &f.values[j * ns..(j + 1) * ns];
                if slice.iter().all(|v| *v == S::zero()) {
                    continue;
                }
                let off = (j - i) as f64 * dt;
                let s0 = if j == i { 0.0 } else { off - 0.5 * dt };
                let s1 = off + 0.5 * dt;
                let (us, ws) = gauss_legendre_on(nodes, s0.powf(0.5 * alpha), s1.powf(0.5 * alpha));
                for (u, w) in us.iter().zip(&ws) {
                    let s = u.powf(2.0 / alpha);
                    let var = vec![0.5 * k * s; d];
                    let g = smooth(slice, &grid, &var).expect("grid sizes agree");
                    let c = S::lit(pref * w);
                    for (a, v) in acc.iter_mut().zip(&g) {
                        *a = *a + c * *v;
                    }
                }
            }
            acc
        })
        .collect();
    let values: Vec<S> = rows.into_iter().flatten().collect();
    GridFunction::new(dom.clone(), values, format!("P[{alpha},{k}]({})", f.provenance))
}

/// `c(alpha, beta, k) = (pi k)^{d/2} B(alpha/2, beta/2)` with `P_a P_b = c P_{a+b}`.
pub fn composition_constant(alpha: f64, beta: f64, k: f64, d: usize) -> f64 {
    (std::f64::consts::PI * k).powf(0.5 * d as f64) * beta_fn(0.5 * alpha, 0.5 * beta)
}

/// `c(d)` with `u = c(d) P_{2,4}(u_t + Laplace u)` for compactly supported smooth `u`.
pub fn inversion_constant(d: usize) -> f64 {
    -(4.0 * std::f64::consts::PI).powf(-0.5 * d as f64)
}

fn beta_fn(a: f64, b: f64) -> f64 {
    statrs::function::beta::beta(a, b)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn grid_of(vals: Vec<f64>) -> GridFunction<f64> {
        let dom = GridDomain::centered((0.0, 1.0), 4, 2, 1.0, 6).unwrap();
        GridFunction::new(dom, vals, "prop").unwrap()
    }

    fn region() -> Cylinder {
        Cylinder::new(0.0, vec![0.0, 0.0], 1.0).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn homogeneous_and_monotone(vals in prop::collection::vec(0.0f64..5.0, 144), c in 0.0f64..4.0, q in 1.1f64..6.0, p in 1.1f64..6.0) {
            let f = grid_of(vals.clone());
            let s = MixedNormSpec::new(q, p, NormOrder::TimeOuter).unwrap();
            let n = mixed_norm(&f, &s, &region()).unwrap();
            let cf = f.map(|v| c * v).unwrap();
            prop_assert!((mixed_norm(&cf, &s, &region()).unwrap() - c * n).abs() <= 1e-9 * (1.0 + c * n));
            let bigger = grid_of(vals.iter().map(|v| v + 0.5).collect());
            prop_assert!(mixed_norm(&bigger, &s, &region()).unwrap() >= n);
        }

        #[test]
        fn normalized_norm_grows_with_exponent(vals in prop::collection::vec(0.0f64..5.0, 144), q in 2.2f64..8.0, p in 1.1f64..6.0) {
            let f = grid_of(vals);
            for order in [NormOrder::TimeOuter, NormOrder::SpaceOuter] {
                let lo = MixedNormSpec::new(q / 2.0, p, order).unwrap();
                let hi = MixedNormSpec::new(q, p, order).unwrap();
                let a = normalized_norm(&f, &lo, &region()).unwrap();
                let b = normalized_norm(&f, &hi, &region()).unwrap();
                prop_assert!(a <= b * (1.0 + 1e-12));
            }
        }

        #[test]
        fn maximal_dominates_and_scales(vals in prop::collection::vec(0.0f64..5.0, 144), c in 0.0f64..4.0) {
            let f = grid_of(vals);
            let m = maximal_function(&f, 0.0).unwrap();
            prop_assert!(m.values.iter().zip(&f.values).all(|(a, b)| a >= b));
            let mc = maximal_function(&f.map(|v| c * v).unwrap(), 0.0).unwrap();
            prop_assert!(m.values.iter().zip(&mc.values).all(|(a, b)| (c * a - b).abs() <= 1e-9 * (1.0 + b)));
        }

        #[test]
        fn finer_search_never_lowers_the_bound(vals in prop::collection::vec(0.0f64..5.0, 144)) {
            let f = grid_of(vals);
            let s = MixedNormSpec::new(2.0, 2.0, NormOrder::TimeOuter).unwrap().with_beta(0.5, 1.0);
            let coarse = SearchPolicy { offsets: 1, levels: 2, refine: false, ..SearchPolicy::default() };
            let fine = SearchPolicy { offsets: 3, levels: 2, refine: false, ..SearchPolicy::default() };
            let a = morrey_norm(&f, &s, &coarse).unwrap().value;
            let b = morrey_norm(&f, &s, &fine).unwrap().value;
            prop_assert!(b >= a);
        }
    }
}
