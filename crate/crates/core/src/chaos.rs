//! Chaos-term tables for `dx = sigma dw` with constant `a = sigma sigma^*`.
//!
//! With `T_{t,s}` the heat semigroup of `a` and `Q^k_{t,s} f = sigma^{ik}(t,.) D_i T_{t,s} f`,
//! the `m`-th term is
//!
//! `S_m = sum_k int_{t0 > t_1 > ... > t_m > 0} [T_{0,t_m} Q^{k_m}_{t_m,t_{m-1}} ... Q^{k_1}_{t_1,t0} f (x0)]^2 dt`
//!
//! and `V - S_1 - ... - S_m` is the part of the variance of `f(x_{t0})` not yet
//! explained. The time integral uses collapsed coordinates `t_j = t_{j-1} u_j`
//! with Gauss–Legendre nodes in each `u_j`, so the chains form a tree and one
//! pass fills every order up to `m_max`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::fields::{MatrixField, ScalarField};
use crate::grid::hex;
use crate::heat::{SemigroupEngine, SpaceGrid};
use crate::quadrature::gauss_legendre_on;

/// `T` and `Q` on one node grid. Sigma is tabulated once at the nodes; every
/// catalog diffusion is time independent.
pub struct ChaosEngine {
    pub engine: SemigroupEngine,
    pub sigma: MatrixField,
    table: Vec<f64>,
    cols: usize,
}

impl ChaosEngine {
    pub fn new(grid: SpaceGrid, sigma: MatrixField) -> Result<Self> {
        if sigma.dim != grid.dim() {
            return Err(Error::Dimension {
                expected: grid.dim(),
                got: sigma.dim,
            });
        }
        let a = sigma
            .constant_a()
            .ok_or_else(|| invalid("sigma", "the semigroup needs a constant diffusion matrix"))?;
        let engine = SemigroupEngine::new(grid, &a)?;
        let d = sigma.dim;
        let cols = sigma.cols();
        let n = engine.grid.len();
        let mut table = vec![0.0; n * d * cols];
        let mut x = vec![0.0; d];
        for i in 0..n {
            engine.grid.node(i, &mut x);
            sigma.eval_into(0.0, &x, &mut table[i * d * cols..(i + 1) * d * cols])?;
        }
        Ok(Self {
            engine,
            sigma,
            table,
            cols,
        })
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.engine.grid
    }

    pub fn sample(&self, f: &ScalarField, t: f64) -> Result<Vec<f64>> {
        let d = self.grid().dim();
        if f.dim != d {
            return Err(Error::Dimension { expected: d, got: f.dim });
        }
        let mut x = vec![0.0; d];
        (0..self.grid().len())
            .map(|i| {
                self.grid().node(i, &mut x);
                f.eval(t, &x)
            })
            .collect()
    }

    pub fn apply_t(&self, f: &[f64], t: f64, s: f64) -> Result<Vec<f64>> {
        self.engine.apply(f, t, s)
    }

    pub fn apply_t_at(&self, f: &[f64], t: f64, s: f64, node: usize) -> Result<f64> {
        self.engine.apply_at(f, t, s, node)
    }

    /// `Q^k_{t,s} f` for every column `k` in `cols`, from one smoothing.
    pub fn apply_q_columns(&self, cols: &[usize], f: &[f64], t: f64, s: f64) -> Result<Vec<Vec<f64>>> {
        let grad = self.engine.gradient_of_apply(f, t, s)?;
        let d = self.grid().dim();
        let dc = d * self.cols;
        Ok(cols
            .iter()
            .map(|&k| {
                (0..f.len())
                    .map(|n| {
                        let sig = &self.table[n * dc..(n + 1) * dc];
                        (0..d).map(|i| sig[i * self.cols + k] * grad[i][n]).sum()
                    })
                    .collect()
            })
            .collect())
    }

    pub fn apply_q(&self, k: usize, f: &[f64], t: f64, s: f64) -> Result<Vec<f64>> {
        if k >= self.cols {
            return Err(invalid("k", format!("column {k} out of range for {} columns", self.cols)));
        }
        Ok(self.apply_q_columns(&[k], f, t, s)?.pop().expect("one column"))
    }
}

fn default_n() -> usize {
    128
}
fn default_nodes() -> usize {
    8
}
fn default_m() -> usize {
    3
}
fn default_floor() -> f64 {
    1e-3
}
fn default_budget() -> usize {
    200_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosConfig {
    /// Nodes per axis; even, so that `x0` is a node.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Defaults to `6 sqrt(t0) + |x0|`.
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default = "default_nodes")]
    pub nodes_per_level: usize,
    #[serde(default = "default_m")]
    pub m_max: usize,
    /// Smoothing gaps below `gap_floor * t0` are raised to it.
    #[serde(default = "default_floor")]
    pub gap_floor: f64,
    /// Repeat with the floor doubled and extrapolate linearly to a zero floor.
    #[serde(default)]
    pub richardson: bool,
    /// Upper bound on the number of grid smoothings.
    #[serde(default = "default_budget")]
    pub max_smoothings: usize,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self {
            n: 128,
            half_width: None,
            nodes_per_level: 8,
            m_max: 3,
            gap_floor: 1e-3,
            richardson: false,
            max_smoothings: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosTermTable {
    pub t0: f64,
    pub x0: Vec<f64>,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    pub remainder: Vec<f64>,
    pub extrapolation_order: usize,
    pub n_smoothings: usize,
    pub fingerprint: String,
}

impl ChaosTermTable {
    /// `remainder_m / V`, or zero when `V = 0`.
    pub fn ratios(&self) -> Vec<f64> {
        self.remainder.iter().map(|r| if self.v > 0.0 { r / self.v } else { 0.0 }).collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "m,S,remainder")?;
        for (m, (s, r)) in self.s.iter().zip(&self.remainder).enumerate() {
            writeln!(w, "{},{s:e},{r:e}", m + 1)?;
        }
        Ok(())
    }
}

fn check_point(t0: f64, x0: &[f64], d: usize) -> Result<()> {
    if !(t0 > 0.0) {
        return Err(invalid("t0", "must be positive"));
    }
    if x0.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: x0.len(),
        });
    }
    Ok(())
}

fn engine_for(sigma: &MatrixField, x0: &[f64], t0: f64, cfg: &ChaosConfig) -> Result<ChaosEngine> {
    let half = cfg
        .half_width
        .unwrap_or_else(|| 6.0 * t0.sqrt() + x0.iter().map(|v| v * v).sum::<f64>().sqrt());
    let grid = SpaceGrid::centered(x0, half, cfg.n)?;
    ChaosEngine::new(grid, sigma.clone())
}

/// `T_{0,t0}(f^2)(x0) - (T_{0,t0} f(x0))^2` with `a = I`.
pub fn variance_oracle(f: &ScalarField, x0: &[f64], t0: f64, cfg: &ChaosConfig) -> Result<f64> {
    let sigma = MatrixField::identity(f.dim);
    let eng = engine_for(&sigma, x0, t0, cfg)?;
    variance_on(&eng, f, x0, t0)
}

fn variance_on(eng: &ChaosEngine, f: &ScalarField, x0: &[f64], t0: f64) -> Result<f64> {
    check_point(t0, x0, eng.grid().dim())?;
    let node = eng.grid().node_index(x0).ok_or_else(|| invalid("x0", "must be a grid node"))?;
    let fv = eng.sample(f, t0)?;
    let f2: Vec<f64> = fv.iter().map(|v| v * v).collect();
    let m1 = eng.apply_t_at(&fv, 0.0, t0, node)?;
    let m2 = eng.apply_t_at(&f2, 0.0, t0, node)?;
    Ok(m2 - m1 * m1)
}

/// Number of grid smoothings for `m_max` levels with `c` live columns.
pub fn smoothing_count(nodes: usize, cols: usize, m_max: usize) -> usize {
    // level j smooths once per chain of length j - 1
    let mut total = 0usize;
    let mut chains = 1usize;
    for _ in 0..m_max {
        chains = chains.saturating_mul(nodes);
        total = total.saturating_add(chains);
        chains = chains.saturating_mul(cols);
    }
    total
}

struct Tree<'a> {
    eng: &'a ChaosEngine,
    cols: Vec<usize>,
    u: Vec<f64>,
    w: Vec<f64>,
    m_max: usize,
    floor: f64,
    node: usize,
}

impl Tree<'_> {
    /// Adds the contributions of every chain below `g` (a `Q`-iterate living at
    /// time `t_prev`, depth `level`) to `acc`.
    fn descend(&self, g: &[f64], t_prev: f64, weight: f64, level: usize, acc: &mut [f64]) -> Result<()> {
        for (ui, wi) in self.u.iter().zip(&self.w) {
            self.step(g, t_prev, weight, level, *ui, *wi, acc)?;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn step(&self, g: &[f64], t_prev: f64, weight: f64, level: usize, u: f64, wu: f64, acc: &mut [f64]) -> Result<()> {
        let t = t_prev * u;
        let w = weight * t_prev * wu;
        let s_eff = t.max(0.0) + (t_prev - t).max(self.floor);
        let qs = self.eng.apply_q_columns(&self.cols, g, t, s_eff)?;
        for q in &qs {
            let v = self.eng.apply_t_at(q, 0.0, t, self.node)?;
            acc[level] += w * v * v;
            if level + 1 < self.m_max {
                self.descend(q, t, w, level + 1, acc)?;
            }
        }
        Ok(())
    }
}

fn terms_once(eng: &ChaosEngine, f: &[f64], x0: &[f64], t0: f64, cfg: &ChaosConfig, floor: f64) -> Result<Vec<f64>> {
    let node = eng.grid().node_index(x0).ok_or_else(|| invalid("x0", "must be a grid node"))?;
    let (u, w) = gauss_legendre_on(cfg.nodes_per_level, 0.0, 1.0);
    let tree = Tree {
        eng,
        cols: eng.sigma.nonzero_columns(),
        u,
        w,
        m_max: cfg.m_max,
        floor,
        node,
    };
    // top level in parallel, summed in node order
    let parts: Vec<Result<Vec<f64>>> = (0..tree.u.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; cfg.m_max];
            tree.step(f, t0, 1.0, 0, tree.u[i], tree.w[i], &mut acc)?;
            Ok(acc)
        })
        .collect();
    let mut s = vec![0.0; cfg.m_max];
    for p in parts {
        for (a, b) in s.iter_mut().zip(p?) {
            *a += b;
        }
    }
    Ok(s)
}

/// Fills `S_1..S_{m_max}`, `V` and the remainders at `(t0, x0)`.
pub fn chaos_terms(f: &ScalarField, sigma: &MatrixField, x0: &[f64], t0: f64, cfg: &ChaosConfig) -> Result<ChaosTermTable> {
    check_point(t0, x0, f.dim)?;
    if cfg.m_max == 0 || cfg.m_max > 3 {
        return Err(invalid("m_max", "must lie in 1..=3"));
    }
    if cfg.nodes_per_level == 0 {
        return Err(invalid("nodes_per_level", "must be positive"));
    }
    let cols = sigma.nonzero_columns().len();
    let runs = if cfg.richardson { 2 } else { 1 };
    let needed = smoothing_count(cfg.nodes_per_level, cols, cfg.m_max).saturating_mul(runs);
    if needed > cfg.max_smoothings {
        return Err(Error::Budget {
            requested: needed,
            budget: cfg.max_smoothings,
        });
    }
    let eng = engine_for(sigma, x0, t0, cfg)?;
    let fv = eng.sample(f, t0)?;
    let v = variance_on(&eng, f, x0, t0)?;
    let floor = cfg.gap_floor * t0;
    let mut s = terms_once(&eng, &fv, x0, t0, cfg, floor)?;
    if cfg.richardson {
        let s2 = terms_once(&eng, &fv, x0, t0, cfg, 2.0 * floor)?;
        for (a, b) in s.iter_mut().zip(&s2) {
            *a = 2.0 * *a - b;
        }
    }
    let mut remainder = Vec::with_capacity(s.len());
    let mut r = v;
    for sm in &s {
        r -= sm;
        remainder.push(r);
    }
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&(f, sigma, x0, t0, cfg))?);
    Ok(ChaosTermTable {
        t0,
        x0: x0.to_vec(),
        v,
        s,
        remainder,
        extrapolation_order: usize::from(cfg.richardson),
        n_smoothings: needed,
        fingerprint: hex(&h.finalize()[..8]),
    })
}

/// `x^1 exp(-|x|^2 / (2 w^2))`, the default non-radial test function.
pub fn default_dipole() -> ScalarField {
    ScalarField::new(2, crate::fields::ScalarKind::Dipole { axis: 0, width: 2.0 }).expect("valid dipole")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationRow {
    pub x0: Vec<f64>,
    pub rotation: ChaosTermTable,
    pub identity: ChaosTermTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationReport {
    pub t0: f64,
    pub f: ScalarField,
    pub rows: Vec<RotationRow>,
}

impl RotationReport {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "x0_1,x0_2,sigma,m,V,S,remainder_over_V")?;
        for row in &self.rows {
            for (name, tab) in [("rotation", &row.rotation), ("identity", &row.identity)] {
                for (m, ratio) in tab.ratios().iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{name},{},{:e},{:e},{:e}",
                        row.x0[0],
                        row.x0[1],
                        m + 1,
                        tab.v,
                        tab.s[m],
                        ratio
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Remainder tables for the rotation diffusion and the identity control at each `x0`.
pub fn rotation_experiment(f: &ScalarField, x0s: &[Vec<f64>], t0: f64, cfg: &ChaosConfig) -> Result<RotationReport> {
    if f.dim != 2 {
        return Err(Error::Dimension { expected: 2, got: f.dim });
    }
    let rot = MatrixField::rotation();
    let id = MatrixField::identity(2);
    let rows = x0s
        .iter()
        .map(|x0| {
            Ok(RotationRow {
                x0: x0.clone(),
                rotation: chaos_terms(f, &rot, x0, t0, cfg)?,
                identity: chaos_terms(f, &id, x0, t0, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RotationReport { t0, f: f.clone(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ScalarKind;

    fn coord(axis: usize) -> ScalarField {
        ScalarField::new(2, ScalarKind::Coordinate { axis }).unwrap()
    }

    fn square(axis: usize) -> ScalarField {
        ScalarField::new(2, ScalarKind::CoordinateSquare { axis }).unwrap()
    }

    fn small() -> ChaosConfig {
        ChaosConfig {
            n: 64,
            nodes_per_level: 4,
            m_max: 2,
            ..ChaosConfig::default()
        }
    }

    #[test]
    fn q_of_linear_and_square() {
        let grid = SpaceGrid::centered(&[0.0, 0.0], 4.0, 64).unwrap();
        let eng = ChaosEngine::new(grid, MatrixField::identity(2)).unwrap();
        let lin = eng.sample(&coord(0), 0.0).unwrap();
        let sq = eng.sample(&square(0), 0.0).unwrap();
        let q1 = eng.apply_q(0, &lin, 0.0, 0.2).unwrap();
        let q2 = eng.apply_q(1, &lin, 0.0, 0.2).unwrap();
        let qs = eng.apply_q(0, &sq, 0.0, 0.2).unwrap();
        let c = eng.grid().node_index(&[0.5, -1.0]).unwrap();
        assert!((q1[c] - 1.0).abs() < 1e-9);
        assert!(q2[c].abs() < 1e-9);
        assert!((qs[c] - 1.0).abs() < 1e-9);
        assert!(eng.apply_q(0, &lin, 0.5, 0.5).is_err());
        assert_eq!(eng.apply_t(&lin, 0.3, 0.3).unwrap(), lin);
    }

    #[test]
    fn rotation_kills_radial_functions_tangentially() {
        let grid = SpaceGrid::centered(&[0.0, 0.0], 5.0, 100).unwrap();
        let eng = ChaosEngine::new(grid, MatrixField::rotation()).unwrap();
        let f = ScalarField::new(
            2,
            ScalarKind::GaussianBump {
                center: vec![0.0, 0.0],
                width: 1.0,
                amplitude: 1.0,
            },
        )
        .unwrap();
        let fv = eng.sample(&f, 0.0).unwrap();
        let q_tan = eng.apply_q(1, &fv, 0.0, 0.2).unwrap();
        let q_rad = eng.apply_q(0, &fv, 0.0, 0.2).unwrap();
        let peak = q_rad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tan = q_tan.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // centered differences are only rotation invariant to O(h^2)
        assert!(peak > 0.1 && tan < 1e-3 * peak, "{peak} {tan}");
    }

    #[test]
    fn variance_examples() {
        let cfg = small();
        let c = ScalarField::constant(2, 3.0);
        assert!(variance_oracle(&c, &[0.0, 0.0], 1.0, &cfg).unwrap().abs() < 1e-6);
        let v = variance_oracle(&coord(0), &[0.5, 0.0], 0.7, &cfg).unwrap();
        assert!((v - 0.7).abs() < 1e-6);
        let v = variance_oracle(&square(0), &[1.0, 0.0], 1.0, &cfg).unwrap();
        assert!((v - 6.0).abs() < 6e-3, "{v}");
    }

    #[test]
    fn linear_function_is_first_chaos() {
        let t = chaos_terms(&coord(0), &MatrixField::identity(2), &[0.3, 0.0], 1.0, &small()).unwrap();
        assert!((t.s[0] - 1.0).abs() < 1e-6);
        assert!(t.s[1].abs() < 1e-9);
        assert!(t.remainder[0].abs() < 1e-6);
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = ChaosConfig {
            max_smoothings: 10,
            ..small()
        };
        let e = chaos_terms(&coord(0), &MatrixField::identity(2), &[0.0, 0.0], 1.0, &cfg).unwrap_err();
        assert!(matches!(e, Error::Budget { requested: 36, .. }));
        assert_eq!(smoothing_count(8, 2, 3), 8 + 128 + 2048);
    }

    #[test]
    fn json_layout() {
        let t = chaos_terms(&coord(0), &MatrixField::identity(2), &[0.0, 0.0], 1.0, &small()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&t).unwrap();
        for key in ["t0", "x0", "V", "S", "remainder"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("m,S,remainder\n1,"));
    }
}
