//! Uniform space-time cell grids.
//!
//! Cells are indexed time-major: `idx = it * n_space + ix`, where the spatial
//! multi-index is row-major with axis 0 slowest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::geometry::norm;
use crate::num::Real;

/// Bounding box and resolution of a space-time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub t_lo: f64,
    pub t_hi: f64,
    pub n_t: usize,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub n_x: Vec<usize>,
}

impl GridDomain {
    pub fn new(t: (f64, f64), n_t: usize, x_lo: Vec<f64>, x_hi: Vec<f64>, n_x: Vec<usize>) -> Result<Self> {
        let g = Self {
            t_lo: t.0,
            t_hi: t.1,
            n_t,
            x_lo,
            x_hi,
            n_x,
        };
        g.validate()?;
        Ok(g)
    }

    /// `[t0, t1) x [-half, half)^d` with `n_t` time cells and `n` cells per space axis.
    pub fn centered(t: (f64, f64), n_t: usize, d: usize, half: f64, n: usize) -> Result<Self> {
        Self::new(t, n_t, vec![-half; d], vec![half; d], vec![n; d])
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_lo.is_empty() || self.x_lo.len() != self.x_hi.len() || self.x_lo.len() != self.n_x.len() {
            return Err(invalid("grid", "axis arrays must be nonempty and of equal length"));
        }
        if !(self.t_hi > self.t_lo) || self.n_t == 0 {
            return Err(invalid("grid.t", "need t_hi > t_lo and n_t >= 1"));
        }
        for i in 0..self.dim() {
            if !(self.x_hi[i] > self.x_lo[i]) || self.n_x[i] == 0 {
                return Err(invalid("grid.x", format!("axis {i} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.x_lo.len()
    }

    pub fn n_space(&self) -> usize {
        self.n_x.iter().product()
    }

    pub fn len(&self) -> usize {
        self.n_t * self.n_space()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dt(&self) -> f64 {
        (self.t_hi - self.t_lo) / self.n_t as f64
    }

    pub fn dx(&self, axis: usize) -> f64 {
        (self.x_hi[axis] - self.x_lo[axis]) / self.n_x[axis] as f64
    }

    pub fn space_cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.dx(i)).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.dt() * self.space_cell_volume()
    }

    pub fn t_center(&self, it: usize) -> f64 {
        self.t_lo + (it as f64 + 0.5) * self.dt()
    }

    pub fn x_center(&self, axis: usize, i: usize) -> f64 {
        self.x_lo[axis] + (i as f64 + 0.5) * self.dx(axis)
    }

    /// Spatial multi-index of a flat spatial index.
    pub fn unflatten(&self, mut ix: usize, out: &mut [usize]) {
        for axis in (0..self.dim()).rev() {
            out[axis] = ix % self.n_x[axis];
            ix /= self.n_x[axis];
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for axis in 0..self.dim() {
            f = f * self.n_x[axis] + idx[axis];
        }
        f
    }

    pub fn space_center(&self, ix: usize, out: &mut [f64]) {
        let mut idx = vec![0; self.dim()];
        self.unflatten(ix, &mut idx);
        for axis in 0..self.dim() {
            out[axis] = self.x_center(axis, idx[axis]);
        }
    }

    /// Index of the time cell containing `t`, if any.
    pub fn t_index(&self, t: f64) -> Option<usize> {
        if t < self.t_lo || t >= self.t_hi {
            return None;
        }
        Some((((t - self.t_lo) / self.dt()) as usize).min(self.n_t - 1))
    }

    /// Flat spatial index of the cell containing `x`, if any.
    pub fn x_index(&self, x: &[f64]) -> Option<usize> {
        let mut f = 0;
        for axis in 0..self.dim() {
            if x[axis] < self.x_lo[axis] || x[axis] >= self.x_hi[axis] {
                return None;
            }
            let i = (((x[axis] - self.x_lo[axis]) / self.dx(axis)) as usize).min(self.n_x[axis] - 1);
            f = f * self.n_x[axis] + i;
        }
        Some(f)
    }

    pub fn contains_box(&self, t0: f64, t1: f64, x_lo: &[f64], x_hi: &[f64]) -> bool {
        let tol = 1e-12;
        t0 >= self.t_lo - tol
            && t1 <= self.t_hi + tol
            && (0..self.dim()).all(|i| x_lo[i] >= self.x_lo[i] - tol && x_hi[i] <= self.x_hi[i] + tol)
    }

    /// Half-open index range `[lo, hi)` of time cells whose centers lie in `[t0, t1)`.
    pub fn t_range(&self, t0: f64, t1: f64) -> (usize, usize) {
        center_range(self.t_lo, self.dt(), self.n_t, t0, t1)
    }

    /// Index range of cells on `axis` whose centers lie in `[a, b]`.
    pub fn x_range(&self, axis: usize, a: f64, b: f64) -> (usize, usize) {
        let h = self.dx(axis);
        let lo = ((a - self.x_lo[axis]) / h - 0.5).ceil().max(0.0) as usize;
        let hi = (((b - self.x_lo[axis]) / h - 0.5).floor() + 1.0).max(0.0) as usize;
        (lo.min(self.n_x[axis]), hi.min(self.n_x[axis]))
    }
}

fn center_range(lo: f64, h: f64, n: usize, a: f64, b: f64) -> (usize, usize) {
    // centers lo + (i + 1/2) h in [a, b)
    let first = ((a - lo) / h - 0.5).ceil().max(0.0) as usize;
    let last = ((b - lo) / h - 0.5).ceil().max(0.0) as usize;
    (first.min(n), last.min(n))
}

/// Cell values on a [`GridDomain`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction<S> {
    pub domain: GridDomain,
    pub values: Vec<S>,
    /// Declared nonnegative; norm computations reject negative cells.
    pub nonnegative: bool,
    pub provenance: String,
}

impl<S: Real> GridFunction<S> {
    pub fn new(domain: GridDomain, values: Vec<S>, provenance: impl Into<String>) -> Result<Self> {
        domain.validate()?;
        if values.len() != domain.len() {
            return Err(Error::Dimension {
                expected: domain.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "all cell values must be finite"));
        }
        Ok(Self {
            domain,
            values,
            nonnegative: false,
            provenance: provenance.into(),
        })
    }

    pub fn constant(domain: GridDomain, c: S) -> Result<Self> {
        let n = domain.len();
        Ok(Self::new(domain, vec![c; n], "constant")?.declare_nonnegative(c >= S::zero()))
    }

    pub fn declare_nonnegative(mut self, flag: bool) -> Self {
        self.nonnegative = flag;
        self
    }

    /// Samples `f(t, x)` at cell centers.
    pub fn from_fn(domain: GridDomain, provenance: &str, f: impl Fn(f64, &[f64]) -> f64) -> Result<Self> {
        domain.validate()?;
        let ns = domain.n_space();
        let mut values = Vec::with_capacity(domain.len());
        let mut x = vec![0.0; domain.dim()];
        for it in 0..domain.n_t {
            let t = domain.t_center(it);
            for ix in 0..ns {
                domain.space_center(ix, &mut x);
                values.push(S::lit(f(t, &x)));
            }
        }
        Self::new(domain, values, provenance)
    }

    /// Samples a fallible `f` at cell centers; a cell whose center is singular is
    /// re-sampled at the center shifted by half the cell diagonal.
    pub fn sample_with_shift(domain: GridDomain, provenance: &str, f: impl Fn(f64, &[f64]) -> Result<f64>) -> Result<Self> {
        domain.validate()?;
        let ns = domain.n_space();
        let d = domain.dim();
        let mut values = Vec::with_capacity(domain.len());
        let mut x = vec![0.0; d];
        for it in 0..domain.n_t {
            let t = domain.t_center(it);
            for ix in 0..ns {
                domain.space_center(ix, &mut x);
                let v = match f(t, &x) {
                    Ok(v) => v,
                    Err(Error::Singular { .. }) => {
                        let xs: Vec<f64> = (0..d).map(|i| x[i] + 0.5 * domain.dx(i)).collect();
                        f(t + 0.5 * domain.dt(), &xs)?
                    }
                    Err(e) => return Err(e),
                };
                values.push(S::lit(v));
            }
        }
        Self::new(domain, values, provenance)
    }

    pub fn sample_scalar(domain: GridDomain, field: &ScalarField) -> Result<Self> {
        if field.dim != domain.dim() {
            return Err(Error::Dimension {
                expected: domain.dim(),
                got: field.dim,
            });
        }
        let name = format!("scalar:{}", field.kind_name());
        Ok(Self::sample_with_shift(domain, &name, |t, x| field.eval(t, x))?.declare_nonnegative(field.is_nonnegative()))
    }

    /// Samples `|b|`.
    pub fn sample_drift_norm(domain: GridDomain, field: &VectorField) -> Result<Self> {
        if field.dim != domain.dim() {
            return Err(Error::Dimension {
                expected: domain.dim(),
                got: field.dim,
            });
        }
        let name = format!("drift_norm:{}", field.kind_name());
        Ok(Self::sample_with_shift(domain, &name, |t, x| {
            let mut b = vec![0.0; x.len()];
            field.eval_into(t, x, &mut b)?;
            Ok(norm(&b))
        })?
        .declare_nonnegative(true))
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn at(&self, it: usize, ix: usize) -> S {
        self.values[it * self.domain.n_space() + ix]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Result<Self> {
        Ok(Self::new(
            self.domain.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
            self.provenance.clone(),
        )?
        .declare_nonnegative(self.nonnegative))
    }

    pub fn abs(&self) -> Self {
        let mut g = self.clone();
        g.values.iter_mut().for_each(|v| *v = v.abs());
        g.nonnegative = true;
        g
    }

    /// Short content hash of the domain and the cell values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.domain).unwrap_or_default());
        for v in &self.values {
            h.update(v.to_f64_lossy().to_le_bytes());
        }
        hex(&h.finalize()[..8])
    }

    pub fn check_nonnegative(&self) -> Result<()> {
        if self.nonnegative {
            if let Some((cell, v)) = self.values.iter().enumerate().find(|(_, v)| **v < S::zero()) {
                return Err(Error::Negative {
                    cell,
                    value: v.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
