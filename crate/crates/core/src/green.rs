//! Green's densities from `e^{-lambda t}`-weighted occupation histograms, the
//! Brownian oracle, and scans for reverse Hölder, doubling, A-infinity and
//! negative-power integrability.
//!
//! Time in a [`GreenGrid`] is elapsed time since the start of the paths.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Cylinder;
use crate::grid::{GridDomain, GridFunction};
use crate::morrey::cylinder_cells;
use crate::quadrature::gauss_legendre_on;
use crate::rng::{derive_seed, path_rng};
use crate::sde::{SimSpec, Simulator};

const BLOCK: u64 = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenGrid {
    pub lambda: f64,
    pub x0: Vec<f64>,
    /// Cell mass over cell volume (and over the path count for histograms).
    pub density: GridFunction<f64>,
    /// Per-cell standard errors of a Monte Carlo density.
    pub std_error: Option<Vec<f64>>,
    pub n_paths: Option<usize>,
    pub n_diverged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenSummary {
    pub mass: f64,
    pub lambda: f64,
    pub grid: GridDomain,
    pub n_paths: Option<usize>,
    pub n_diverged: usize,
    pub fingerprint: String,
}

impl GreenGrid {
    pub fn domain(&self) -> &GridDomain {
        &self.density.domain
    }

    /// `sum G * cell volume`.
    pub fn mass(&self) -> f64 {
        neumaier(self.density.values.iter().copied()) * self.domain().cell_volume()
    }

    /// `g(x) = sum_t G(t, x) dt` as a one-slab grid function.
    pub fn marginal(&self) -> Result<GridFunction<f64>> {
        let dom = self.domain();
        let ns = dom.n_space();
        let dt = dom.dt();
        let values = (0..ns)
            .map(|ix| neumaier((0..dom.n_t).map(|it| self.density.values[it * ns + ix])) * dt)
            .collect();
        let slab = GridDomain::new((dom.t_lo, dom.t_hi), 1, dom.x_lo.clone(), dom.x_hi.clone(), dom.n_x.clone())?;
        Ok(GridFunction::new(slab, values, format!("marginal({})", self.density.provenance))?.declare_nonnegative(true))
    }

    pub fn summary(&self) -> GreenSummary {
        GreenSummary {
            mass: self.mass(),
            lambda: self.lambda,
            grid: self.domain().clone(),
            n_paths: self.n_paths,
            n_diverged: self.n_diverged,
            fingerprint: self.density.fingerprint(),
        }
    }

    /// Rows `t, x_1..x_d, G[, std_error]` at cell centers.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let dom = self.domain();
        let d = dom.dim();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.push("G".into());
        if self.std_error.is_some() {
            header.push("std_error".into());
        }
        out.write_record(&header)?;
        let ns = dom.n_space();
        let mut x = vec![0.0; d];
        for it in 0..dom.n_t {
            for ix in 0..ns {
                dom.space_center(ix, &mut x);
                let i = it * ns + ix;
                let mut row = vec![dom.t_center(it).to_string()];
                row.extend(x.iter().map(|v| v.to_string()));
                row.push(format!("{:e}", self.density.values[i]));
                if let Some(se) = &self.std_error {
                    row.push(format!("{:e}", se[i]));
                }
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Compensated sum; exact enough that a constant block sums to the correctly
/// rounded multiple.
pub(crate) fn neumaier(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

fn cell_of(dom: &GridDomain, r: f64, x: &[f64]) -> Option<usize> {
    let it = dom.t_index(r)?;
    let ix = dom.x_index(x)?;
    Some(it * dom.n_space() + ix)
}

/// Histogram of `e^{-lambda r}`-weighted occupation in elapsed time `r`. Step
/// `k` carries the exact weight `int_{kh}^{(k+1)h} e^{-lambda r} dr`, split
/// evenly between its two end states and binned in the time cell of `kh`, so
/// the total mass never exceeds `1/lambda`.
pub fn green_histogram(spec: &SimSpec, lambda: f64, domain: GridDomain) -> Result<GreenGrid> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", "must be positive"));
    }
    domain.validate()?;
    if domain.is_empty() {
        return Err(Error::Empty("green grid".into()));
    }
    if domain.dim() != spec.dim() {
        return Err(Error::Dimension {
            expected: spec.dim(),
            got: domain.dim(),
        });
    }
    let sim = Simulator::new(spec)?;
    let h = spec.h;
    let n = spec.n_paths as u64;
    let cells = domain.len();
    let t_hi = domain.t_hi;
    let n_steps = sim.n_steps();
    let weight = |r: f64| ((-lambda * r).exp() - (-lambda * (r + h)).exp()) / lambda;
    let blocks: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut sum = vec![0.0; cells];
            let mut sq = vec![0.0; cells];
            let mut diverged = 0;
            let mut visits: Vec<(usize, f64)> = Vec::new();
            for path in b * BLOCK..((b + 1) * BLOCK).min(n) {
                visits.clear();
                let mut push = |c: Option<usize>, w: f64| {
                    if let Some(c) = c {
                        match visits.last_mut() {
                            Some((lc, lw)) if *lc == c => *lw += w,
                            _ => visits.push((c, w)),
                        }
                    }
                };
                let out = sim.run_path(path, |k, _, x| {
                    let r = k as f64 * h;
                    if k > 0 {
                        // second half of the previous step, at its end state
                        let rp = r - h;
                        if rp >= t_hi {
                            return false;
                        }
                        push(cell_of(&domain, rp, x), 0.5 * weight(rp));
                    }
                    if k < n_steps && r < t_hi {
                        push(cell_of(&domain, r, x), 0.5 * weight(r));
                    }
                    true
                });
                if out.diverged {
                    diverged += 1;
                }
                visits.sort_by_key(|v| v.0);
                let mut i = 0;
                while i < visits.len() {
                    let c = visits[i].0;
                    let mut w = 0.0;
                    while i < visits.len() && visits[i].0 == c {
                        w += visits[i].1;
                        i += 1;
                    }
                    sum[c] += w;
                    sq[c] += w * w;
                }
            }
            (sum, sq, diverged)
        })
        .collect();
    let mut sum = vec![0.0; cells];
    let mut sq = vec![0.0; cells];
    let mut n_diverged = 0;
    for (s, q, dv) in blocks {
        for c in 0..cells {
            sum[c] += s[c];
            sq[c] += q[c];
        }
        n_diverged += dv;
    }
    let vol = domain.cell_volume();
    let nf = n as f64;
    let mut density = Vec::with_capacity(cells);
    let mut se = Vec::with_capacity(cells);
    for c in 0..cells {
        let mean = sum[c] / nf;
        let var = if n > 1 {
            ((sq[c] - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        density.push(mean / vol);
        se.push((var / nf).sqrt() / vol);
    }
    let provenance = format!("green_histogram[{}]", spec.fingerprint());
    Ok(GreenGrid {
        lambda,
        x0: spec.x0.clone(),
        density: GridFunction::new(domain, density, provenance)?.declare_nonnegative(true),
        std_error: Some(se),
        n_paths: Some(spec.n_paths),
        n_diverged,
    })
}

fn interval_prob(a: f64, b: f64, mean: f64, t: f64) -> f64 {
    use statrs::function::erf::erfc;
    let s = (2.0 * t).sqrt();
    let (za, zb) = ((a - mean) / s, (b - mean) / s);
    // differences of erfc on the side where they do not cancel
    if za >= 0.0 {
        0.5 * (erfc(za) - erfc(zb))
    } else if zb <= 0.0 {
        0.5 * (erfc(-zb) - erfc(-za))
    } else {
        1.0 - 0.5 * (erfc(zb) + erfc(-za))
    }
}

/// Cell averages of `e^{-lambda t} (2 pi t)^{-d/2} e^{-|x - x0|^2 / (2t)}`.
/// Each time cell is integrated by Gauss–Legendre in `u = sqrt(t)`; space is exact.
pub fn analytic_green_bm(lambda: f64, x0: &[f64], domain: GridDomain) -> Result<GreenGrid> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", "must be positive"));
    }
    domain.validate()?;
    let d = domain.dim();
    if x0.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: x0.len(),
        });
    }
    if domain.t_lo < 0.0 {
        return Err(invalid("grid.t_lo", "elapsed time starts at 0"));
    }
    let ns = domain.n_space();
    let vol = domain.cell_volume();
    let dt = domain.dt();
    let values: Vec<f64> = (0..domain.len())
        .into_par_iter()
        .map(|c| {
            let (it, ix) = (c / ns, c % ns);
            let mut idx = vec![0usize; d];
            domain.unflatten(ix, &mut idx);
            let t0 = domain.t_lo + it as f64 * dt;
            let (us, ws) = gauss_legendre_on(32, t0.sqrt(), (t0 + dt).sqrt());
            let mut mass = 0.0;
            for (u, w) in us.iter().zip(&ws) {
                let t = u * u;
                let mut p = (-lambda * t).exp() * 2.0 * u;
                for i in 0..d {
                    let dx = domain.dx(i);
                    let a = domain.x_lo[i] + idx[i] as f64 * dx;
                    p *= interval_prob(a, a + dx, x0[i], t);
                }
                mass += w * p;
            }
            mass / vol
        })
        .collect();
    Ok(GreenGrid {
        lambda,
        x0: x0.to_vec(),
        density: GridFunction::new(domain, values, format!("analytic_green_bm[{lambda}]"))?.declare_nonnegative(true),
        std_error: None,
        n_paths: None,
        n_diverged: 0,
    })
}

/// Largest `|mc - oracle| / se` over cells off the boundary layer of the grid
/// (in every index, time included) with positive standard error.
pub fn max_interior_z(mc: &GreenGrid, oracle: &GreenGrid) -> Result<(f64, usize)> {
    let dom = mc.domain();
    if dom != oracle.domain() {
        return Err(invalid("oracle", "grids differ"));
    }
    let se = mc.std_error.as_ref().ok_or_else(|| invalid("mc", "needs standard errors"))?;
    let ns = dom.n_space();
    let mut idx = vec![0usize; dom.dim()];
    let (mut worst, mut count) = (0.0f64, 0usize);
    for it in 1..dom.n_t.saturating_sub(1) {
        for ix in 0..ns {
            dom.unflatten(ix, &mut idx);
            if idx.iter().zip(&dom.n_x).any(|(i, n)| *i == 0 || *i + 1 == *n) {
                continue;
            }
            let c = it * ns + ix;
            if se[c] > 0.0 {
                worst = worst.max((mc.density.values[c] - oracle.density.values[c]).abs() / se[c]);
                count += 1;
            }
        }
    }
    Ok((worst, count))
}

fn default_max_cylinders() -> usize {
    100
}

/// Cylinders `C` with `2C = [t, t + 4 rho^2) x B_{2 rho}(x)` inside the grid:
/// for each radius (default: halvings of the largest admissible one), anchors
/// on a lattice of step `rho` through the box midpoint and times `t_lo + j rho^2`;
/// thinned to `max_cylinders` evenly spaced members.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderFamily {
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    #[serde(default = "default_max_cylinders")]
    pub max_cylinders: usize,
}

impl Default for CylinderFamily {
    fn default() -> Self {
        Self {
            radii: None,
            max_cylinders: 100,
        }
    }
}

impl CylinderFamily {
    pub fn enumerate(&self, dom: &GridDomain) -> Vec<Cylinder> {
        let d = dom.dim();
        let half_min = (0..d).map(|i| 0.5 * (dom.x_hi[i] - dom.x_lo[i])).fold(f64::INFINITY, f64::min);
        let top = (0.5 * half_min).min(0.5 * (dom.t_hi - dom.t_lo).sqrt());
        let dx = (0..d).map(|i| dom.dx(i)).fold(0.0, f64::max);
        let radii = self.radii.clone().unwrap_or_else(|| {
            (0..8)
                .map(|j| top * 0.5f64.powi(j))
                .filter(|r| *r >= dx && r * r >= dom.dt())
                .collect()
        });
        let tol = 1e-9;
        let mut out = Vec::new();
        for &rho in &radii {
            let axes: Vec<Vec<f64>> = (0..d)
                .map(|i| {
                    let mid = 0.5 * (dom.x_lo[i] + dom.x_hi[i]);
                    let reach = 0.5 * (dom.x_hi[i] - dom.x_lo[i]) - 2.0 * rho;
                    if reach < -tol {
                        return Vec::new();
                    }
                    let m = ((reach + tol) / rho).floor() as i64;
                    (-m..=m).map(|k| mid + k as f64 * rho).collect()
                })
                .collect();
            let span = dom.t_hi - dom.t_lo - 4.0 * rho * rho;
            if span < -tol || axes.iter().any(|a| a.is_empty()) {
                continue;
            }
            let mt = ((span + tol) / (rho * rho)).floor() as usize;
            for j in 0..=mt {
                let t = dom.t_lo + j as f64 * rho * rho;
                let mut idx = vec![0usize; d];
                'sp: loop {
                    out.push(Cylinder {
                        t,
                        x: (0..d).map(|i| axes[i][idx[i]]).collect(),
                        rho,
                    });
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
        }
        if out.len() > self.max_cylinders && self.max_cylinders > 0 {
            let n = out.len();
            let k = self.max_cylinders;
            out = (0..k).map(|i| out[i * n / k].clone()).collect();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub rho: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReverseHolderReport {
    pub p: f64,
    pub sup_ratio: f64,
    pub argmax: Option<Cylinder>,
    pub rows: Vec<RatioRow>,
    /// Cylinders dropped because `2C` carries no mass or `C` has no cell centers.
    pub n_skipped: usize,
}

fn doubled(c: &Cylinder) -> Cylinder {
    Cylinder {
        t: c.t,
        x: c.x.clone(),
        rho: 2.0 * c.rho,
    }
}

/// `sup_C (avg_C G^{p'})^{1/p'} / avg_{2C} G` with `p' = p / (p - 1)`.
pub fn reverse_holder_scan(g: &GridFunction<f64>, p: f64, family: &CylinderFamily) -> Result<ReverseHolderReport> {
    if !(p > 1.0) {
        return Err(invalid("p", "must be > 1"));
    }
    g.check_nonnegative()?;
    let pp = p / (p - 1.0);
    let ns = g.domain.n_space();
    let cyls = family.enumerate(&g.domain);
    if cyls.is_empty() {
        return Err(Error::Empty("cylinder family".into()));
    }
    let avg = |c: &Cylinder, pow: f64| -> Option<f64> {
        let cells = cylinder_cells(&g.domain, c).ok()?;
        let n = (cells.t_range.1 - cells.t_range.0) * cells.space.len();
        let s = neumaier((cells.t_range.0..cells.t_range.1).flat_map(|it| {
            cells.space.iter().map(move |&ix| {
                let v = g.values[it * ns + ix];
                if pow == 1.0 {
                    v
                } else {
                    v.powf(pow)
                }
            })
        }));
        Some(s / n as f64)
    };
    let evals: Vec<Option<f64>> = cyls
        .par_iter()
        .map(|c| {
            let big = avg(&doubled(c), 1.0)?;
            let small = avg(c, pp)?;
            (big > 0.0).then(|| small.powf(1.0 / pp) / big)
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = 0;
    let mut best: Option<(f64, usize)> = None;
    for (i, (c, r)) in cyls.iter().zip(&evals).enumerate() {
        match r {
            Some(v) => {
                if best.is_none_or(|(b, _)| *v > b) {
                    best = Some((*v, i));
                }
                rows.push(RatioRow {
                    t: c.t,
                    x: c.x.clone(),
                    rho: c.rho,
                    ratio: *v,
                });
            }
            None => skipped += 1,
        }
    }
    Ok(ReverseHolderReport {
        p,
        sup_ratio: best.map_or(f64::NAN, |b| b.0),
        argmax: best.map(|b| cyls[b.1].clone()),
        rows,
        n_skipped: skipped,
    })
}

/// Cell-aligned cube: cells `lo[i]..lo[i] + side` on each axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCube {
    pub lo: Vec<usize>,
    pub side: usize,
}

impl CellCube {
    /// The cube of the cells whose centers lie in the sup-norm ball `|x - center|_inf < half`.
    pub fn around(dom: &GridDomain, center: &[f64], half: f64) -> Result<Self> {
        let d = dom.dim();
        let mut lo = Vec::with_capacity(d);
        let mut side = None;
        for i in 0..d {
            let (a, b) = dom.x_range(i, center[i] - half, center[i] + half);
            if b <= a {
                return Err(Error::Empty("cube has no cells".into()));
            }
            if let Some(s) = side {
                if s != b - a {
                    return Err(invalid("cube", "axes give different cell counts"));
                }
            }
            side = Some(b - a);
            lo.push(a);
        }
        Ok(Self {
            lo,
            side: side.unwrap_or(0),
        })
    }

    fn cells(&self, dom: &GridDomain) -> Vec<usize> {
        let d = self.lo.len();
        let mut out = Vec::with_capacity(self.side.pow(d as u32));
        let mut off = vec![0usize; d];
        'l: loop {
            let idx: Vec<usize> = (0..d).map(|i| self.lo[i] + off[i]).collect();
            out.push(dom.flatten(&idx));
            for i in (0..d).rev() {
                off[i] += 1;
                if off[i] < self.side {
                    continue 'l;
                }
                off[i] = 0;
            }
            break;
        }
        out
    }

    fn center(&self, dom: &GridDomain) -> Vec<f64> {
        (0..self.lo.len())
            .map(|i| dom.x_lo[i] + (self.lo[i] as f64 + 0.5 * self.side as f64) * dom.dx(i))
            .collect()
    }

    fn mass(&self, g: &GridFunction<f64>) -> f64 {
        let dom = &g.domain;
        let ns = dom.n_space();
        let cells = self.cells(dom);
        neumaier(
            (0..dom.n_t)
                .flat_map(|it| cells.iter().map(move |&c| it * ns + c))
                .map(|i| g.values[i]),
        ) * dom.cell_volume()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub sup_ratio: f64,
    pub argmax_center: Vec<f64>,
    pub argmax_half_side: f64,
    pub n_balls: usize,
    /// Balls with `g(B) = 0`, left out of the sup.
    pub n_empty: usize,
}

/// `sup g(2B) / g(B)` over cell-aligned cubes `B` of even side `2^j` cells
/// (`j >= 1`) placed with stride half a side, `2B` the concentric cube of twice
/// the side, kept when `2B` fits. Pass `max_side` to stop the ladder early.
pub fn doubling_scan(g: &GridFunction<f64>, max_side: Option<usize>) -> Result<DoublingReport> {
    g.check_nonnegative()?;
    let dom = &g.domain;
    let d = dom.dim();
    let nmin = *dom.n_x.iter().min().unwrap_or(&0);
    let cap = max_side.unwrap_or(nmin / 2).min(nmin / 2);
    let mut cubes = Vec::new();
    let mut side = 2;
    while side <= cap {
        let step = side / 2;
        let axes: Vec<Vec<usize>> = (0..d)
            .map(|i| (step..).step_by(step).take_while(|lo| lo + side + step <= dom.n_x[i]).collect())
            .collect();
        if axes.iter().all(|a| !a.is_empty()) {
            let mut idx = vec![0usize; d];
            'l: loop {
                cubes.push(CellCube {
                    lo: (0..d).map(|i| axes[i][idx[i]]).collect(),
                    side,
                });
                for i in (0..d).rev() {
                    idx[i] += 1;
                    if idx[i] < axes[i].len() {
                        continue 'l;
                    }
                    idx[i] = 0;
                }
                break;
            }
        }
        side *= 2;
    }
    if cubes.is_empty() {
        return Err(Error::Empty("ball family".into()));
    }
    let ratios: Vec<Option<f64>> = cubes
        .par_iter()
        .map(|b| {
            let big = CellCube {
                lo: b.lo.iter().map(|l| l - b.side / 2).collect(),
                side: 2 * b.side,
            };
            let m = b.mass(g);
            (m > 0.0).then(|| big.mass(g) / m)
        })
        .collect();
    let mut best: Option<(f64, usize)> = None;
    let mut empty = 0;
    for (i, r) in ratios.iter().enumerate() {
        match r {
            Some(v) if best.is_none_or(|(b, _)| *v > b) => best = Some((*v, i)),
            Some(_) => {}
            None => empty += 1,
        }
    }
    let (v, i) = best.ok_or_else(|| Error::Empty("every ball has zero mass".into()))?;
    Ok(DoublingReport {
        sup_ratio: v,
        argmax_center: cubes[i].center(dom),
        argmax_half_side: 0.5 * cubes[i].side as f64 * dom.dx(0),
        n_balls: cubes.len(),
        n_empty: empty,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSampler {
    /// `Gamma_0 = B`, then repeated halving along alternating axes.
    Bisection { depth: usize },
    /// Random cell subsets, each cell kept with a per-set probability in `[0.05, 1)`.
    RandomCells { count: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AInftyRow {
    pub measure_ratio: f64,
    pub mass_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AInftyReport {
    /// Smallest `mu` with `g(Gamma)/g(B) >= (|Gamma|/|B|)^mu` on every sample (`N = 1`).
    pub mu_hat: f64,
    pub n_hat: f64,
    pub violations: usize,
    /// `(mu, N(mu))` with `N(mu) = max (|Gamma|/|B|)^mu / (g(Gamma)/g(B))`.
    pub table: Vec<(f64, f64)>,
    pub rows: Vec<AInftyRow>,
}

fn gamma_sets(cube: &CellCube, dom: &GridDomain, sampler: &GammaSampler) -> Vec<Vec<usize>> {
    let all = cube.cells(dom);
    match sampler {
        GammaSampler::Bisection { depth } => {
            let d = cube.lo.len();
            let mut out = vec![all.clone()];
            let lo = cube.lo.clone();
            let mut hi: Vec<usize> = cube.lo.iter().map(|l| l + cube.side).collect();
            let mut idx = vec![0usize; d];
            for j in 0..*depth {
                let axis = j % d;
                if hi[axis] - lo[axis] < 2 {
                    break;
                }
                hi[axis] = lo[axis] + (hi[axis] - lo[axis]) / 2;
                out.push(
                    all.iter()
                        .copied()
                        .filter(|&c| {
                            dom.unflatten(c, &mut idx);
                            (0..d).all(|i| idx[i] >= lo[i] && idx[i] < hi[i])
                        })
                        .collect(),
                );
            }
            out
        }
        GammaSampler::RandomCells { count, seed } => (0..*count)
            .map(|i| {
                let mut rng = path_rng(derive_seed(*seed, 0xA1), i as u64);
                let q: f64 = rng.gen_range(0.05..1.0);
                let mut set: Vec<usize> = all.iter().copied().filter(|_| rng.gen::<f64>() < q).collect();
                if set.is_empty() {
                    set.push(all[rng.gen_range(0..all.len())]);
                }
                set
            })
            .collect(),
    }
}

/// Fits `(mu, N)` in `N g(Gamma)/g(B) >= (|Gamma|/|B|)^mu` over sampled `Gamma` in `B`.
pub fn a_infty_check(g: &GridFunction<f64>, center: &[f64], half: f64, sampler: &GammaSampler, mu_grid: &[f64]) -> Result<AInftyReport> {
    g.check_nonnegative()?;
    let dom = &g.domain;
    let cube = CellCube::around(dom, center, half)?;
    let ns = dom.n_space();
    let mass = |cells: &[usize]| neumaier((0..dom.n_t).flat_map(|it| cells.iter().map(move |&c| g.values[it * ns + c])));
    let all = cube.cells(dom);
    let total = mass(&all);
    if !(total > 0.0) {
        return Err(Error::Empty("g(B) = 0".into()));
    }
    let rows: Vec<AInftyRow> = gamma_sets(&cube, dom, sampler)
        .iter()
        .map(|s| AInftyRow {
            measure_ratio: s.len() as f64 / all.len() as f64,
            mass_ratio: mass(s) / total,
        })
        .collect();
    let mut mu_hat = 0.0f64;
    for r in &rows {
        if r.measure_ratio < 1.0 {
            if r.mass_ratio <= 0.0 {
                mu_hat = f64::INFINITY;
            } else {
                mu_hat = mu_hat.max(r.mass_ratio.ln() / r.measure_ratio.ln());
            }
        }
    }
    let n_of = |mu: f64| rows.iter().map(|r| r.measure_ratio.powf(mu) / r.mass_ratio).fold(0.0f64, f64::max);
    let n_hat = if mu_hat.is_finite() { n_of(mu_hat).max(1.0) } else { f64::INFINITY };
    let violations = rows
        .iter()
        .filter(|r| n_hat * r.mass_ratio < r.measure_ratio.powf(mu_hat) * (1.0 - 1e-12))
        .count();
    Ok(AInftyReport {
        mu_hat,
        n_hat,
        violations,
        table: mu_grid.iter().map(|&m| (m, n_of(m))).collect(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativePowerReport {
    pub mu: f64,
    pub value: f64,
    /// Volume of the counted cells (those with `G > 0`).
    pub volume: f64,
    pub n_cells: usize,
    /// Cells in the region with `G = 0`; left out of `value` and `volume`.
    pub n_zero: usize,
}

/// `int G^{-mu}` over the cells of `region` with center time `>= eps`.
pub fn negative_power_integral(g: &GridFunction<f64>, mu: f64, region: &Cylinder, eps: f64) -> Result<NegativePowerReport> {
    if !(mu >= 0.0) {
        return Err(invalid("mu", "must be nonnegative"));
    }
    if !(eps > 0.0) {
        return Err(invalid("eps", "must be positive"));
    }
    g.check_nonnegative()?;
    let dom = &g.domain;
    let cells = cylinder_cells(dom, region)?;
    let ns = dom.n_space();
    let vol = dom.cell_volume();
    let mut terms = Vec::new();
    let mut zero = 0;
    for it in cells.t_range.0..cells.t_range.1 {
        if dom.t_center(it) < eps {
            continue;
        }
        for &ix in &cells.space {
            let v = g.values[it * ns + ix];
            if v > 0.0 {
                terms.push(if mu == 0.0 { 1.0 } else { v.powf(-mu) });
            } else {
                zero += 1;
            }
        }
    }
    Ok(NegativePowerReport {
        mu,
        value: neumaier(terms.iter().copied()) * vol,
        volume: terms.len() as f64 * vol,
        n_cells: terms.len(),
        n_zero: zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{DriftKind, VectorField};

    fn small_grid() -> GridDomain {
        GridDomain::new((0.0, 1.0), 4, vec![-2.0, -2.0], vec![2.0, 2.0], vec![8, 8]).unwrap()
    }

    #[test]
    fn histogram_mass_is_bounded() {
        let spec = SimSpec::brownian(vec![0.0, 0.0], 1.0, 0.01, 2000, 3);
        for lambda in [0.5, 1.0, 4.0] {
            let g = green_histogram(&spec, lambda, small_grid()).unwrap();
            assert!(g.mass() <= 1.0 / lambda);
            assert!(g.mass() > 0.0);
        }
        assert!(green_histogram(&spec, 0.0, small_grid()).is_err());
    }

    #[test]
    fn analytic_mass_approaches_inverse_lambda() {
        let lambda = 2.0;
        let dom = GridDomain::new((0.0, 6.0), 24, vec![-12.0, -12.0], vec![12.0, 12.0], vec![24, 24]).unwrap();
        let g = analytic_green_bm(lambda, &[0.0, 0.0], dom).unwrap();
        let exact = (1.0 - (-lambda * 6.0f64).exp()) / lambda;
        assert!((g.mass() - exact).abs() < 1e-6, "{} vs {exact}", g.mass());
        // g is radial: symmetric under swapping axes and reflecting
        let m = g.marginal().unwrap();
        let n = 24;
        for i in 0..n {
            for j in 0..n {
                let a = m.values[i * n + j];
                assert!((a - m.values[j * n + i]).abs() < 1e-12 * a.max(1e-300));
                assert!((a - m.values[(n - 1 - i) * n + j]).abs() < 1e-12 * a.max(1e-300));
            }
        }
    }

    #[test]
    fn histogram_matches_oracle() {
        let spec = SimSpec::brownian(vec![0.0, 0.0], 1.0, 1.0 / 200.0, 20_000, 11);
        let mc = green_histogram(&spec, 1.0, small_grid()).unwrap();
        let or = analytic_green_bm(1.0, &[0.0, 0.0], small_grid()).unwrap();
        let (z, n) = max_interior_z(&mc, &or).unwrap();
        assert!(n > 50 && z < 4.5, "z = {z} over {n}");
    }

    #[test]
    fn symmetric_drift_gives_symmetric_density() {
        // odd cell count so the start is a cell center, not a cell face
        let dom = GridDomain::new((0.0, 1.0), 4, vec![-2.1, -2.1], vec![2.1, 2.1], vec![7, 7]).unwrap();
        let mut spec = SimSpec::brownian(vec![0.0, 0.0], 1.0, 0.01, 20_000, 5);
        spec.drift = VectorField::new(2, DriftKind::Linear { k: -1.0 }).unwrap();
        let g = green_histogram(&spec, 1.0, dom).unwrap();
        let se = g.std_error.as_ref().unwrap();
        let mut worst = 0.0f64;
        for it in 0..4 {
            for i in 0..7 {
                for j in 0..7 {
                    let a = it * 49 + i * 7 + j;
                    let b = it * 49 + (6 - i) * 7 + j;
                    let s = (se[a] * se[a] + se[b] * se[b]).sqrt();
                    if s > 0.0 {
                        worst = worst.max((g.density.values[a] - g.density.values[b]).abs() / s);
                    }
                }
            }
        }
        assert!(worst < 4.5, "{worst}");
    }

    #[test]
    fn constant_density_scans() {
        let dom = GridDomain::new((0.0, 1.0), 16, vec![-1.0, -1.0], vec![1.0, 1.0], vec![16, 16]).unwrap();
        for c in [0.3, 1.0, 7.1] {
            let g = GridFunction::<f64>::constant(dom.clone(), c).unwrap();
            let rh = reverse_holder_scan(&g, 3.0, &CylinderFamily::default()).unwrap();
            assert!(rh.rows.iter().all(|r| (r.ratio - 1.0).abs() < 1e-12));
            let db = doubling_scan(&g, None).unwrap();
            assert_eq!(db.sup_ratio, 4.0);
            let np = negative_power_integral(&g, 0.0, &Cylinder::new(0.0, vec![0.0, 0.0], 1.0).unwrap(), 0.05).unwrap();
            assert_eq!(np.value, np.volume);
            let np2 = negative_power_integral(&g, 0.5, &Cylinder::new(0.0, vec![0.0, 0.0], 1.0).unwrap(), 0.05).unwrap();
            assert!((np2.value - c.powf(-0.5) * np2.volume).abs() < 1e-12);
        }
    }

    #[test]
    fn a_infty_trivial_cases() {
        let dom = GridDomain::new((0.0, 1.0), 1, vec![-1.0, -1.0], vec![1.0, 1.0], vec![16, 16]).unwrap();
        let g = GridFunction::<f64>::constant(dom, 2.0).unwrap();
        let r = a_infty_check(&g, &[0.0, 0.0], 1.0, &GammaSampler::Bisection { depth: 1 }, &[1.0]).unwrap();
        assert_eq!(r.rows[0].mass_ratio, 1.0);
        assert!((r.rows[1].mass_ratio - 0.5).abs() < 1e-15);
        assert!((r.mu_hat - 1.0).abs() < 1e-12 && r.n_hat == 1.0 && r.violations == 0);
        let rnd = a_infty_check(&g, &[0.0, 0.0], 1.0, &GammaSampler::RandomCells { count: 20, seed: 1 }, &[]).unwrap();
        assert!(rnd.violations == 0 && (rnd.mu_hat - 1.0).abs() < 1e-9);
    }

    #[test]
    fn doubling_is_at_least_one() {
        let dom = GridDomain::new((0.0, 2.0), 8, vec![-2.0, -2.0], vec![2.0, 2.0], vec![16, 16]).unwrap();
        let g = analytic_green_bm(1.0, &[0.0, 0.0], dom).unwrap().marginal().unwrap();
        let r = doubling_scan(&g, None).unwrap();
        assert!(r.sup_ratio >= 1.0 && r.sup_ratio.is_finite());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = analytic_green_bm(1.0, &[0.0, 0.0], small_grid()).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,x1,x2,G\n"));
        assert_eq!(s.lines().count(), 1 + 4 * 64);
    }
}
