//! Heat semigroup on uniform spatial grids by separable Gaussian convolution.
//!
//! For a per-axis variance `v` and spacing `h` the 1D kernel is the sampled,
//! renormalized Gaussian truncated at six standard deviations when
//! `sqrt(v) >= h`, and the discrete heat kernel `e^{-tau} I_n(tau)`,
//! `tau = v / h^2`, below that. The discrete kernel has mass one, mean zero and
//! variance exactly `v`, so short smoothing times stay consistent with long ones.
//! Values outside the grid are taken to be zero.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::num::Real;

/// Nodes `lo_i + j h_i`, `j = 0..n_i`, row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub lo: Vec<f64>,
    pub h: Vec<f64>,
    pub n: Vec<usize>,
}

impl SpaceGrid {
    pub fn new(lo: Vec<f64>, h: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != h.len() || lo.len() != n.len() {
            return Err(invalid("grid", "axis arrays must be nonempty and of equal length"));
        }
        if h.iter().any(|v| !(*v > 0.0)) || n.iter().any(|v| *v < 3) {
            return Err(invalid("grid", "need positive spacing and at least 3 nodes per axis"));
        }
        Ok(Self { lo, h, n })
    }

    /// `n` nodes per axis on `[center - half, center + half)`, with `center` a node.
    pub fn centered(center: &[f64], half: f64, n: usize) -> Result<Self> {
        if !n.is_multiple_of(2) {
            return Err(invalid("n", "must be even so the center is a node"));
        }
        let h = 2.0 * half / n as f64;
        Self::new(
            center.iter().map(|c| c - half).collect(),
            vec![h; center.len()],
            vec![n; center.len()],
        )
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, idx: usize, out: &mut [f64]) {
        let mut r = idx;
        for axis in (0..self.dim()).rev() {
            out[axis] = self.lo[axis] + (r % self.n[axis]) as f64 * self.h[axis];
            r /= self.n[axis];
        }
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n[axis + 1..].iter().product()
    }

    /// Index of the node at `x`, if `x` is a node up to rounding.
    pub fn node_index(&self, x: &[f64]) -> Option<usize> {
        let mut f = 0;
        for axis in 0..self.dim() {
            let r = (x[axis] - self.lo[axis]) / self.h[axis];
            let j = r.round();
            if (r - j).abs() > 1e-9 || j < 0.0 || j as usize >= self.n[axis] {
                return None;
            }
            f = f * self.n[axis] + j as usize;
        }
        Some(f)
    }

    pub fn sample<S: Real>(&self, f: impl Fn(&[f64]) -> f64) -> Vec<S> {
        let mut x = vec![0.0; self.dim()];
        (0..self.len())
            .map(|i| {
                self.node(i, &mut x);
                S::lit(f(&x))
            })
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }
}

/// `e^{-x} I_n(x)` by the power series; used for `x < 1`.
fn scaled_bessel_i(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let mut sum = term;
    let mut m = 0usize;
    loop {
        m += 1;
        term *= half * half / (m as f64 * (m + n) as f64);
        sum += term;
        if term < 1e-18 * sum || m > 200 {
            break;
        }
    }
    (-x).exp() * sum
}

/// Symmetric 1D kernel `w[0..=r]` (offsets `0..=r`) for variance `var` on spacing `h`.
pub fn kernel_1d(var: f64, h: f64) -> Vec<f64> {
    if var <= 0.0 {
        return vec![1.0];
    }
    let sd = var.sqrt();
    if sd >= h {
        let r = (6.0 * sd / h).ceil() as usize;
        let mut w: Vec<f64> = (0..=r).map(|j| (-(j as f64 * h).powi(2) / (2.0 * var)).exp()).collect();
        let total = w[0] + 2.0 * w[1..].iter().sum::<f64>();
        w.iter_mut().for_each(|v| *v /= total);
        w
    } else {
        let tau = var / (h * h);
        let mut w = Vec::new();
        for j in 0..64 {
            let v = scaled_bessel_i(j, tau);
            w.push(v);
            if j >= 1 && v < 1e-18 {
                break;
            }
        }
        w
    }
}

fn convolve_axis<S: Real>(values: &[S], grid: &SpaceGrid, axis: usize, w: &[f64]) -> Vec<S> {
    if w.len() == 1 {
        return values.to_vec();
    }
    let n = grid.n[axis];
    let stride = grid.stride(axis);
    let outer = values.len() / (n * stride);
    let ws: Vec<S> = w.iter().map(|&v| S::lit(v)).collect();
    let r = w.len() - 1;
    let mut out = vec![S::zero(); values.len()];
    let mut line = vec![S::zero(); n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for (i, l) in line.iter_mut().enumerate() {
                *l = values[base + i * stride];
            }
            for i in 0..n {
                let mut acc = ws[0] * line[i];
                let lo = r.min(i);
                let hi = r.min(n - 1 - i);
                for j in 1..=lo.min(hi) {
                    acc = acc + ws[j] * (line[i - j] + line[i + j]);
                }
                for j in (lo.min(hi) + 1)..=lo {
                    acc = acc + ws[j] * line[i - j];
                }
                for j in (lo.min(hi) + 1)..=hi {
                    acc = acc + ws[j] * line[i + j];
                }
                out[base + i * stride] = acc;
            }
        }
    }
    out
}

/// Convolution with the product kernel of per-axis variances `var`.
pub fn smooth<S: Real>(values: &[S], grid: &SpaceGrid, var: &[f64]) -> Result<Vec<S>> {
    if values.len() != grid.len() {
        return Err(Error::Dimension {
            expected: grid.len(),
            got: values.len(),
        });
    }
    let mut cur = values.to_vec();
    for axis in 0..grid.dim() {
        let w = kernel_1d(var[axis], grid.h[axis]);
        cur = convolve_axis(&cur, grid, axis, &w);
    }
    Ok(cur)
}

/// The smoothed function at a single node; cost is one pass over the grid.
pub fn smooth_at<S: Real>(values: &[S], grid: &SpaceGrid, var: &[f64], node: usize) -> S {
    let d = grid.dim();
    let mut center = vec![0usize; d];
    let mut r = node;
    for axis in (0..d).rev() {
        center[axis] = r % grid.n[axis];
        r /= grid.n[axis];
    }
    let ws: Vec<Vec<f64>> = (0..d).map(|a| kernel_1d(var[a], grid.h[a])).collect();
    // weights per axis over the whole line, zero beyond the kernel radius
    let axis_w: Vec<Vec<S>> = (0..d)
        .map(|a| {
            (0..grid.n[a])
                .map(|j| {
                    let off = j.abs_diff(center[a]);
                    S::lit(ws[a].get(off).copied().unwrap_or(0.0))
                })
                .collect()
        })
        .collect();
    let mut acc = S::zero();
    let mut idx = vec![0usize; d];
    for v in values.iter() {
        let mut w = S::one();
        for a in 0..d {
            w = w * axis_w[a][idx[a]];
        }
        if w != S::zero() {
            acc = acc + w * *v;
        }
        for a in (0..d).rev() {
            idx[a] += 1;
            if idx[a] < grid.n[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    acc
}

/// Centered difference along `axis`; one-sided at the two ends.
pub fn derivative<S: Real>(values: &[S], grid: &SpaceGrid, axis: usize) -> Vec<S> {
    let n = grid.n[axis];
    let stride = grid.stride(axis);
    let h = S::lit(grid.h[axis]);
    let two_h = S::lit(2.0 * grid.h[axis]);
    let mut out = vec![S::zero(); values.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let j = (i / stride) % n;
        *o = if j == 0 {
            (values[i + stride] - values[i]) / h
        } else if j == n - 1 {
            (values[i] - values[i - stride]) / h
        } else {
            (values[i + stride] - values[i - stride]) / two_h
        };
    }
    out
}

/// Transition operators of `dx = sigma dw` with constant diagonal `a = sigma sigma^*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupEngine {
    pub grid: SpaceGrid,
    /// Diagonal of `a`.
    pub a_diag: Vec<f64>,
}

impl SemigroupEngine {
    /// Rejects a non-diagonal `a` (row-major `d x d`).
    pub fn new(grid: SpaceGrid, a: &[f64]) -> Result<Self> {
        let d = grid.dim();
        if a.len() != d * d {
            return Err(Error::Dimension {
                expected: d * d,
                got: a.len(),
            });
        }
        for i in 0..d {
            for j in 0..d {
                if i != j && a[i * d + j].abs() > 1e-12 {
                    return Err(invalid("a", "only diagonal diffusion matrices are supported"));
                }
            }
            if !(a[i * d + i] > 0.0) {
                return Err(invalid("a", "diagonal must be positive"));
            }
        }
        Ok(Self {
            grid,
            a_diag: (0..d).map(|i| a[i * d + i]).collect(),
        })
    }

    fn var(&self, tau: f64) -> Vec<f64> {
        self.a_diag.iter().map(|a| a * tau).collect()
    }

    /// `T_{t,s} f`.
    pub fn apply<S: Real>(&self, f: &[S], t: f64, s: f64) -> Result<Vec<S>> {
        if s < t {
            return Err(invalid("s", "T_{t,s} needs s >= t"));
        }
        smooth(f, &self.grid, &self.var(s - t))
    }

    /// `T_{t,s} f` at one node.
    pub fn apply_at<S: Real>(&self, f: &[S], t: f64, s: f64, node: usize) -> Result<S> {
        if s < t {
            return Err(invalid("s", "T_{t,s} needs s >= t"));
        }
        if f.len() != self.grid.len() {
            return Err(Error::Dimension {
                expected: self.grid.len(),
                got: f.len(),
            });
        }
        Ok(smooth_at(f, &self.grid, &self.var(s - t), node))
    }

    /// `D_i T_{t,s} f` for every axis `i`.
    pub fn gradient_of_apply<S: Real>(&self, f: &[S], t: f64, s: f64) -> Result<Vec<Vec<S>>> {
        if !(s > t) {
            return Err(invalid("s", "the derivative of T_{t,s} f needs s > t"));
        }
        let g = self.apply(f, t, s)?;
        Ok((0..self.grid.dim()).map(|i| derivative(&g, &self.grid, i)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_kernel_moments() {
        for var in [0.01, 0.3, 0.9] {
            let w = kernel_1d(var, 1.0);
            let mass = w[0] + 2.0 * w[1..].iter().sum::<f64>();
            let second: f64 = 2.0 * w.iter().enumerate().map(|(j, v)| (j * j) as f64 * v).sum::<f64>();
            assert!((mass - 1.0).abs() < 1e-14);
            assert!((second - var).abs() < 1e-14);
        }
    }

    #[test]
    fn sampled_kernel_variance() {
        let w = kernel_1d(4.0, 0.5);
        let second: f64 = 2.0 * w.iter().enumerate().map(|(j, v)| (j as f64 * 0.5).powi(2) * v).sum::<f64>();
        assert!((second - 4.0).abs() < 4e-6);
    }

    #[test]
    fn gaussian_is_mapped_to_wider_gaussian() {
        let grid = SpaceGrid::centered(&[0.0, 0.0], 8.0, 128).unwrap();
        let f: Vec<f64> = grid.sample(|x| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp());
        let eng = SemigroupEngine::new(grid.clone(), &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let tau = 0.7;
        let g = eng.apply(&f, 0.0, tau).unwrap();
        let mut x = [0.0; 2];
        let mut err: f64 = 0.0;
        for i in 0..grid.len() {
            grid.node(i, &mut x);
            if x[0].abs() < 4.0 && x[1].abs() < 4.0 {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let exact = (-r2 / (2.0 * (1.0 + tau))).exp() / (1.0 + tau);
                err = err.max((g[i] - exact).abs());
            }
        }
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn point_evaluation_matches_full_smoothing() {
        let grid = SpaceGrid::centered(&[0.5, -0.5], 3.0, 32).unwrap();
        let f: Vec<f64> = grid.sample(|x| x[0].sin() + x[1] * x[1]);
        let full = smooth(&f, &grid, &[0.3, 0.01]).unwrap();
        let node = grid.node_index(&[0.5, -0.5]).unwrap();
        let p = smooth_at(&f, &grid, &[0.3, 0.01], node);
        assert!((p - full[node]).abs() < 1e-12);
    }

    #[test]
    fn rejects_backward_time_and_coincident_derivative() {
        let grid = SpaceGrid::centered(&[0.0], 1.0, 8).unwrap();
        let eng = SemigroupEngine::new(grid, &[1.0]).unwrap();
        let f = vec![1.0f64; 8];
        assert!(eng.apply(&f, 1.0, 0.5).is_err());
        assert!(eng.gradient_of_apply(&f, 1.0, 1.0).is_err());
        assert_eq!(eng.apply(&f, 0.5, 0.5).unwrap(), f);
    }

    #[test]
    fn rejects_off_diagonal_a() {
        let grid = SpaceGrid::centered(&[0.0, 0.0], 1.0, 8).unwrap();
        assert!(SemigroupEngine::new(grid, &[1.0, 0.2, 0.2, 1.0]).is_err());
    }
}
