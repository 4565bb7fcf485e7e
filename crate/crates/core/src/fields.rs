//! Closed-form space-time fields: drifts, diffusion matrices and test functions.
//!
//! Every field is a pure descriptor (kind + parameters) that serializes to
//! `{"kind": ..., "dim": ..., "params": {...}}`. Evaluation at a point of the
//! declared singular set is an [`Error::Singular`]; callers that need a value
//! there apply their own floor (see [`VectorField::eval_floored_into`]).
//!
//! The optional `scale` key carries a parabolic dilation `c`:
//! a drift becomes `c b(c^2 t, c x)` and a diffusion `sigma(c^2 t, c x)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{dist, norm, SpaceTimePoint};

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

fn inv_sqrt3() -> f64 {
    1.0 / 3f64.sqrt()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Where a field stops being finite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SingularSet {
    /// The spatial origin.
    pub origin: bool,
    /// The hyperplane `x^axis = 0`.
    pub hyperplane: Option<usize>,
    /// The time slice `t = 0`.
    pub time_zero: bool,
}

impl SingularSet {
    pub fn is_empty(&self) -> bool {
        !self.origin && self.hyperplane.is_none() && !self.time_zero
    }
}

/// Drift catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum DriftKind {
    #[serde(rename = "zero")]
    Zero,
    #[serde(rename = "constant")]
    Constant { v: Vec<f64> },
    /// `-k x`.
    #[serde(rename = "linear")]
    Linear { k: f64 },
    /// `A exp(-|x-c|^2 / 2w^2) e` for a fixed direction `e`.
    #[serde(rename = "gaussian_bump")]
    GaussianBump {
        amplitude: f64,
        width: f64,
        center: Vec<f64>,
        direction: Vec<f64>,
    },
    /// `-c x/|x|^2`, scale invariant, singular at the origin.
    #[serde(rename = "radial_inverse")]
    RadialInverse { c: f64 },
    /// `-eps t^{-alpha} |x|^{-beta} x/|x|` on `0 < t <= 1`, with `alpha + beta = 1`.
    #[serde(rename = "example_3_22_1")]
    Example3221 {
        alpha: f64,
        beta: f64,
        #[serde(default = "one")]
        eps: f64,
    },
    /// `b^1 = sign * t^{-1/q} 1_{0<t<=1, |x^1|<=1} sgn x^1`, other components zero.
    #[serde(rename = "example_3_22_2")]
    Example3222 {
        q: f64,
        #[serde(default = "one")]
        sign: f64,
    },
    /// Magnitude `c / (|x|^gamma (|x| + sqrt t)^{1-gamma})` for `t >= 0`, pointing to the origin.
    #[serde(rename = "mixed_singular")]
    MixedSingular { c: f64, gamma: f64 },
    /// `b^1 = -|x^1|^{-alpha} 1_{|x^1|<1} sgn x^1`, other components zero.
    #[serde(rename = "one_coordinate_power")]
    OneCoordinatePower { alpha: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub dim: usize,
    #[serde(flatten)]
    pub kind: DriftKind,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
}

impl VectorField {
    pub fn new(dim: usize, kind: DriftKind) -> Result<Self> {
        let f = Self { dim, kind, scale: 1.0 };
        f.validate()?;
        Ok(f)
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            kind: DriftKind::Zero,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if !(self.scale > 0.0) {
            return Err(invalid("scale", "must be positive"));
        }
        let d = self.dim;
        match &self.kind {
            DriftKind::Constant { v } if v.len() != d => return Err(Error::Dimension { expected: d, got: v.len() }),
            DriftKind::GaussianBump {
                width, center, direction, ..
            } => {
                if center.len() != d || direction.len() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        got: center.len().min(direction.len()),
                    });
                }
                if !(*width > 0.0) {
                    return Err(invalid("params.width", "must be positive"));
                }
            }
            DriftKind::Example3221 { alpha, beta, .. } => {
                if !(*alpha > 0.0 && *alpha < 1.0 && *beta > 0.0 && *beta < 1.0) {
                    return Err(invalid("params.alpha", "alpha and beta must lie in (0,1)"));
                }
                if (alpha + beta - 1.0).abs() > 1e-12 {
                    return Err(invalid("params.beta", "alpha + beta must equal 1"));
                }
            }
            DriftKind::Example3222 { q, sign } => {
                if !(*q > 1.0 && *q < 2.0) {
                    return Err(invalid("params.q", "must lie in (1,2)"));
                }
                if sign.abs() != 1.0 {
                    return Err(invalid("params.sign", "must be +1 or -1"));
                }
            }
            DriftKind::MixedSingular { gamma, .. } => {
                if !(*gamma >= 0.0 && *gamma < 1.0) {
                    return Err(invalid("params.gamma", "must lie in [0,1)"));
                }
            }
            DriftKind::OneCoordinatePower { alpha } if !(*alpha > 0.0 && *alpha < 1.0) => {
                return Err(invalid("params.alpha", "must lie in (0,1)"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            DriftKind::Zero => "zero",
            DriftKind::Constant { .. } => "constant",
            DriftKind::Linear { .. } => "linear",
            DriftKind::GaussianBump { .. } => "gaussian_bump",
            DriftKind::RadialInverse { .. } => "radial_inverse",
            DriftKind::Example3221 { .. } => "example_3_22_1",
            DriftKind::Example3222 { .. } => "example_3_22_2",
            DriftKind::MixedSingular { .. } => "mixed_singular",
            DriftKind::OneCoordinatePower { .. } => "one_coordinate_power",
        }
    }

    pub fn singular_set(&self) -> SingularSet {
        match self.kind {
            DriftKind::RadialInverse { .. } | DriftKind::MixedSingular { .. } => SingularSet {
                origin: true,
                ..Default::default()
            },
            DriftKind::Example3221 { .. } => SingularSet {
                origin: true,
                time_zero: true,
                ..Default::default()
            },
            DriftKind::Example3222 { .. } => SingularSet {
                time_zero: true,
                ..Default::default()
            },
            DriftKind::OneCoordinatePower { .. } => SingularSet {
                hyperplane: Some(0),
                ..Default::default()
            },
            _ => SingularSet::default(),
        }
    }

    /// True when `|b|` is bounded by [`Self::sup_norm`].
    pub fn sup_norm(&self) -> Option<f64> {
        match &self.kind {
            DriftKind::Zero => Some(0.0),
            DriftKind::Constant { v } => Some(self.scale * norm(v)),
            DriftKind::GaussianBump { amplitude, direction, .. } => Some(self.scale * amplitude.abs() * norm(direction)),
            _ => None,
        }
    }

    pub fn eval(&self, p: &SpaceTimePoint) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(p.t, &p.x, &mut out)?;
        Ok(out)
    }

    /// Evaluates `b(t,x)` into `out`.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        if self.scale == 1.0 {
            return self.eval_raw(t, x, out);
        }
        let c = self.scale;
        let xs: Vec<f64> = x.iter().map(|v| c * v).collect();
        self.eval_raw(c * c * t, &xs, out)?;
        for o in out.iter_mut() {
            *o *= c;
        }
        Ok(())
    }

    fn singular(&self, t: f64, x: &[f64]) -> Error {
        Error::Singular {
            kind: self.kind_name().to_string(),
            t,
            x: x.to_vec(),
        }
    }

    fn eval_raw(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        match &self.kind {
            DriftKind::Zero => {}
            DriftKind::Constant { v } => out.copy_from_slice(v),
            DriftKind::Linear { k } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -k * xi;
                }
            }
            DriftKind::GaussianBump {
                amplitude,
                width,
                center,
                direction,
            } => {
                let r = dist(x, center);
                let g = amplitude * (-r * r / (2.0 * width * width)).exp();
                for (o, e) in out.iter_mut().zip(direction) {
                    *o = g * e;
                }
            }
            DriftKind::RadialInverse { c } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                if r2 == 0.0 {
                    return Err(self.singular(t, x));
                }
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -c * xi / r2;
                }
            }
            DriftKind::Example3221 { alpha, beta, eps } => {
                if !(0.0..=1.0).contains(&t) {
                    return Ok(());
                }
                let r = norm(x);
                if t == 0.0 || r == 0.0 {
                    return Err(self.singular(t, x));
                }
                let m = eps * t.powf(-alpha) * r.powf(-beta);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -m * xi / r;
                }
            }
            DriftKind::Example3222 { q, sign: s } => {
                if !(0.0..=1.0).contains(&t) || x[0].abs() > 1.0 {
                    return Ok(());
                }
                if t == 0.0 {
                    if x[0] == 0.0 {
                        return Ok(());
                    }
                    return Err(self.singular(t, x));
                }
                out[0] = s * t.powf(-1.0 / q) * sign(x[0]);
            }
            DriftKind::MixedSingular { c, gamma } => {
                if t < 0.0 {
                    return Ok(());
                }
                let r = norm(x);
                if r == 0.0 {
                    return Err(self.singular(t, x));
                }
                let m = c / (r.powf(*gamma) * (r + t.sqrt()).powf(1.0 - gamma));
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -m * xi / r;
                }
            }
            DriftKind::OneCoordinatePower { alpha } => {
                let r = x[0];
                if r.abs() >= 1.0 {
                    return Ok(());
                }
                if r == 0.0 {
                    return Err(self.singular(t, x));
                }
                out[0] = -r.abs().powf(-alpha) * sign(r);
            }
        }
        Ok(())
    }

    /// Evaluates after pushing `(t,x)` off the singular set: radii and
    /// coordinate distances are floored at `floor`, times at `floor^2`.
    /// A point lying exactly on the singular set yields zero (the indicator
    /// convention of the catalog formulas). Returns whether a floor was applied.
    pub fn eval_floored_into(&self, t: f64, x: &[f64], floor: f64, out: &mut [f64]) -> Result<bool> {
        let sing = self.singular_set();
        if sing.is_empty() {
            self.eval_into(t, x, out)?;
            return Ok(false);
        }
        // Work in the undilated frame so the floor refers to the physical point.
        let mut xs = x.to_vec();
        let mut ts = t;
        let mut touched = false;
        if sing.origin {
            let r = norm(&xs);
            if r == 0.0 {
                out.iter_mut().for_each(|o| *o = 0.0);
                return Ok(true);
            }
            if r < floor {
                xs.iter_mut().for_each(|v| *v *= floor / r);
                touched = true;
            }
        }
        if let Some(axis) = sing.hyperplane {
            let v = xs[axis];
            if v == 0.0 {
                out.iter_mut().for_each(|o| *o = 0.0);
                return Ok(true);
            }
            if v.abs() < floor {
                xs[axis] = floor * sign(v);
                touched = true;
            }
        }
        if sing.time_zero {
            let tf = floor * floor;
            if ts >= 0.0 && ts < tf {
                ts = tf;
                touched = true;
            }
        }
        match self.eval_into(ts, &xs, out) {
            Ok(()) => Ok(touched),
            Err(Error::Singular { .. }) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                Ok(true)
            }
            Err(e) => Err(e),
        }
    }

    /// `c b(c^2 t, c x)`.
    pub fn dilate(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(invalid("c", "dilation factor must be positive"));
        }
        Ok(Self {
            scale: self.scale * c,
            ..self.clone()
        })
    }
}

/// Diffusion catalog. `sigma` is `d x d1`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum SigmaKind {
    #[serde(rename = "identity")]
    Identity {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Columns `x/|x|` and `(-x^2, x^1)/|x|`; identity at the origin. `d = 2`.
    #[serde(rename = "rotation_sigma")]
    RotationSigma,
    /// `2 I + 1_{x != 0} zeta(x) sin(ln|ln|x||)` with `zeta` a smooth symmetric
    /// matrix of norm `<= amp` supported in `|x| < 1/2`.
    #[serde(rename = "oscillating_log")]
    OscillatingLog {
        #[serde(default = "one")]
        amp: f64,
    },
    /// `d = 3`, `d1 = 12`: `alpha I` followed by `beta/|x|` times three shifted copies of `x`.
    /// `zero_value` replaces `x^i/|x|` at the origin.
    #[serde(rename = "block_radial")]
    BlockRadial {
        alpha: f64,
        beta: f64,
        #[serde(default = "inv_sqrt3")]
        zero_value: f64,
    },
    /// `diag(1 + amp sin x^i)`, `amp < 1`.
    #[serde(rename = "smooth_diagonal")]
    SmoothDiagonal { amp: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixField {
    pub dim: usize,
    #[serde(flatten)]
    pub kind: SigmaKind,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
}

impl MatrixField {
    pub fn new(dim: usize, kind: SigmaKind) -> Result<Self> {
        let f = Self { dim, kind, scale: 1.0 };
        f.validate()?;
        Ok(f)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            kind: SigmaKind::Identity { scale: 1.0 },
            scale: 1.0,
        }
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        Self {
            dim,
            kind: SigmaKind::Identity { scale: s },
            scale: 1.0,
        }
    }

    pub fn rotation() -> Self {
        Self {
            dim: 2,
            kind: SigmaKind::RotationSigma,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if !(self.scale > 0.0) {
            return Err(invalid("scale", "must be positive"));
        }
        match &self.kind {
            SigmaKind::RotationSigma if self.dim != 2 => Err(Error::Dimension {
                expected: 2,
                got: self.dim,
            }),
            SigmaKind::BlockRadial { alpha, beta, .. } => {
                if self.dim != 3 {
                    return Err(Error::Dimension {
                        expected: 3,
                        got: self.dim,
                    });
                }
                if alpha * alpha + beta * beta == 0.0 {
                    return Err(invalid("params.alpha", "alpha and beta cannot both vanish"));
                }
                Ok(())
            }
            SigmaKind::OscillatingLog { amp } if !(*amp >= 0.0 && *amp <= 1.0) => Err(invalid("params.amp", "must lie in [0,1]")),
            SigmaKind::SmoothDiagonal { amp } if !(amp.abs() < 1.0) => Err(invalid("params.amp", "must satisfy |amp| < 1")),
            SigmaKind::Identity { scale } if *scale < 0.0 => Err(invalid("params.scale", "must be nonnegative")),
            _ => Ok(()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SigmaKind::Identity { .. } => "identity",
            SigmaKind::RotationSigma => "rotation_sigma",
            SigmaKind::OscillatingLog { .. } => "oscillating_log",
            SigmaKind::BlockRadial { .. } => "block_radial",
            SigmaKind::SmoothDiagonal { .. } => "smooth_diagonal",
        }
    }

    /// Number of columns `d1`.
    pub fn cols(&self) -> usize {
        match self.kind {
            SigmaKind::BlockRadial { .. } => 12,
            _ => self.dim,
        }
    }

    /// Lower ellipticity constant: eigenvalues of `sigma sigma^*` lie in `[delta, 1/delta]`.
    /// Zero for a degenerate (vanishing) diffusion.
    pub fn ellipticity(&self) -> f64 {
        let sym = |v: f64| if v <= 0.0 { 0.0 } else { v.min(1.0 / v) };
        match &self.kind {
            SigmaKind::Identity { scale } => sym(scale * scale),
            SigmaKind::RotationSigma => 1.0,
            SigmaKind::OscillatingLog { amp } => {
                let lo = (2.0 - amp).powi(2);
                let hi = (2.0 + amp).powi(2);
                lo.min(1.0 / hi).min(1.0)
            }
            SigmaKind::BlockRadial { alpha, beta, .. } => sym(alpha * alpha + beta * beta),
            SigmaKind::SmoothDiagonal { amp } => {
                let lo = (1.0 - amp.abs()).powi(2);
                let hi = (1.0 + amp.abs()).powi(2);
                lo.min(1.0 / hi)
            }
        }
    }

    /// Constant diffusion matrix `a = sigma sigma^*` when it does not depend on `(t,x)`.
    pub fn constant_a(&self) -> Option<Vec<f64>> {
        let d = self.dim;
        let diag = |v: f64| {
            let mut a = vec![0.0; d * d];
            for i in 0..d {
                a[i * d + i] = v;
            }
            a
        };
        match &self.kind {
            SigmaKind::Identity { scale } => Some(diag(scale * scale)),
            SigmaKind::RotationSigma => Some(diag(1.0)),
            SigmaKind::BlockRadial { alpha, beta, .. } => Some(diag(alpha * alpha + beta * beta)),
            _ => None,
        }
    }

    /// Columns that vanish identically, decided from the descriptor alone.
    pub fn nonzero_columns(&self) -> Vec<usize> {
        match &self.kind {
            SigmaKind::Identity { scale } if *scale == 0.0 => vec![],
            SigmaKind::BlockRadial { alpha, beta, .. } => {
                let mut cols = Vec::new();
                if *alpha != 0.0 {
                    cols.extend(0..3);
                }
                if *beta != 0.0 {
                    cols.extend(3..12);
                }
                cols
            }
            _ => (0..self.cols()).collect(),
        }
    }

    pub fn eval(&self, p: &SpaceTimePoint) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim * self.cols()];
        self.eval_into(p.t, &p.x, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        if out.len() != self.dim * self.cols() {
            return Err(Error::Dimension {
                expected: self.dim * self.cols(),
                got: out.len(),
            });
        }
        if self.scale == 1.0 {
            self.eval_raw(t, x, out);
        } else {
            let c = self.scale;
            let xs: Vec<f64> = x.iter().map(|v| c * v).collect();
            self.eval_raw(c * c * t, &xs, out);
        }
        Ok(())
    }

    fn eval_raw(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let d1 = self.cols();
        out.iter_mut().for_each(|o| *o = 0.0);
        match &self.kind {
            SigmaKind::Identity { scale } => {
                for i in 0..d {
                    out[i * d1 + i] = *scale;
                }
            }
            SigmaKind::RotationSigma => {
                let r = norm(x);
                if r == 0.0 {
                    out[0] = 1.0;
                    out[3] = 1.0;
                } else {
                    // column 1 = x/|x|, column 2 = (-x2, x1)/|x|
                    out[0] = x[0] / r;
                    out[2] = x[1] / r;
                    out[1] = -x[1] / r;
                    out[3] = x[0] / r;
                }
            }
            SigmaKind::OscillatingLog { amp } => {
                let r = norm(x);
                let mut osc = 0.0;
                if r > 0.0 && r < 0.5 {
                    let s = 2.0 * r;
                    let cutoff = (1.0 - 1.0 / (1.0 - s * s)).exp();
                    osc = amp * cutoff * r.ln().abs().ln().sin();
                }
                // zeta = osc * J with J the projection onto (1,...,1)/sqrt(d)
                let jd = 1.0 / d as f64;
                for i in 0..d {
                    for k in 0..d {
                        out[i * d1 + k] = osc * jd + if i == k { 2.0 } else { 0.0 };
                    }
                }
            }
            SigmaKind::BlockRadial { alpha, beta, zero_value } => {
                let r = norm(x);
                let unit: [f64; 3] = if r == 0.0 {
                    [*zero_value; 3]
                } else {
                    [x[0] / r, x[1] / r, x[2] / r]
                };
                for i in 0..3 {
                    out[i * d1 + i] = *alpha;
                    for j in 0..3 {
                        out[i * d1 + 3 + 3 * i + j] = beta * unit[j];
                    }
                }
            }
            SigmaKind::SmoothDiagonal { amp } => {
                for i in 0..d {
                    out[i * d1 + i] = 1.0 + amp * x[i].sin();
                }
            }
        }
    }

    /// `a = sigma sigma^*` at `(t,x)`, row-major `d x d`.
    pub fn diffusion_at(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let d1 = self.cols();
        let mut s = vec![0.0; d * d1];
        self.eval_into(t, x, &mut s)?;
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..d1).map(|k| s[i * d1 + k] * s[j * d1 + k]).sum();
            }
        }
        Ok(a)
    }

    /// `sigma(c^2 t, c x)`.
    pub fn dilate(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(invalid("c", "dilation factor must be positive"));
        }
        Ok(Self {
            scale: self.scale * c,
            ..self.clone()
        })
    }
}

/// Scalar test functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum ScalarKind {
    #[serde(rename = "constant")]
    Constant { c: f64 },
    #[serde(rename = "indicator_ball")]
    IndicatorBall { center: Vec<f64>, radius: f64 },
    /// Indicator of `[t, t + rho^2) x B_rho(center)`.
    #[serde(rename = "indicator_cylinder")]
    IndicatorCylinder { t: f64, center: Vec<f64>, rho: f64 },
    /// `amplitude exp(-|x - center|^2 / 2 width^2)`.
    #[serde(rename = "gaussian_bump")]
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `x^axis exp(-|x|^2 / 2 width^2)`: smooth, odd, angular mode one.
    #[serde(rename = "dipole")]
    Dipole { axis: usize, width: f64 },
    /// `|x - center|^{-a}`, singular at `center`.
    #[serde(rename = "inverse_power")]
    InversePower {
        a: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    #[serde(rename = "coordinate")]
    Coordinate { axis: usize },
    #[serde(rename = "coordinate_square")]
    CoordinateSquare { axis: usize },
    /// `1_{x^axis > offset}`.
    #[serde(rename = "half_space")]
    HalfSpace { axis: usize, offset: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub dim: usize,
    #[serde(flatten)]
    pub kind: ScalarKind,
}

impl ScalarField {
    pub fn new(dim: usize, kind: ScalarKind) -> Result<Self> {
        let f = Self { dim, kind };
        f.validate()?;
        Ok(f)
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self {
            dim,
            kind: ScalarKind::Constant { c },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        let check_len = |v: &Vec<f64>| {
            if v.len() != d {
                Err(Error::Dimension { expected: d, got: v.len() })
            } else {
                Ok(())
            }
        };
        let check_axis = |a: usize| {
            if a >= d {
                Err(invalid("params.axis", format!("axis {a} out of range for dim {d}")))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            ScalarKind::IndicatorBall { center, radius } => {
                check_len(center)?;
                if !(*radius > 0.0) {
                    return Err(invalid("params.radius", "must be positive"));
                }
            }
            ScalarKind::IndicatorCylinder { center, rho, .. } => {
                check_len(center)?;
                if !(*rho > 0.0) {
                    return Err(invalid("params.rho", "must be positive"));
                }
            }
            ScalarKind::GaussianBump { center, width, .. } => {
                check_len(center)?;
                if !(*width > 0.0) {
                    return Err(invalid("params.width", "must be positive"));
                }
            }
            ScalarKind::Dipole { axis, width } => {
                check_axis(*axis)?;
                if !(*width > 0.0) {
                    return Err(invalid("params.width", "must be positive"));
                }
            }
            ScalarKind::InversePower { center: Some(c), .. } => check_len(c)?,
            ScalarKind::Coordinate { axis } | ScalarKind::CoordinateSquare { axis } | ScalarKind::HalfSpace { axis, .. } => {
                check_axis(*axis)?
            }
            _ => {}
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ScalarKind::Constant { .. } => "constant",
            ScalarKind::IndicatorBall { .. } => "indicator_ball",
            ScalarKind::IndicatorCylinder { .. } => "indicator_cylinder",
            ScalarKind::GaussianBump { .. } => "gaussian_bump",
            ScalarKind::Dipole { .. } => "dipole",
            ScalarKind::InversePower { .. } => "inverse_power",
            ScalarKind::Coordinate { .. } => "coordinate",
            ScalarKind::CoordinateSquare { .. } => "coordinate_square",
            ScalarKind::HalfSpace { .. } => "half_space",
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match &self.kind {
            ScalarKind::Constant { c } => *c >= 0.0,
            ScalarKind::GaussianBump { amplitude, .. } => *amplitude >= 0.0,
            ScalarKind::Dipole { .. } | ScalarKind::Coordinate { .. } => false,
            _ => true,
        }
    }

    pub fn singular_set(&self) -> SingularSet {
        match self.kind {
            ScalarKind::InversePower { a, .. } if a > 0.0 => SingularSet {
                origin: true,
                ..Default::default()
            },
            _ => SingularSet::default(),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(match &self.kind {
            ScalarKind::Constant { c } => *c,
            ScalarKind::IndicatorBall { center, radius } => {
                if dist(x, center) < *radius {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarKind::IndicatorCylinder { t: t0, center, rho } => {
                if t >= *t0 && t < t0 + rho * rho && dist(x, center) < *rho {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarKind::GaussianBump { center, width, amplitude } => {
                let r = dist(x, center);
                amplitude * (-r * r / (2.0 * width * width)).exp()
            }
            ScalarKind::Dipole { axis, width } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                x[*axis] * (-r2 / (2.0 * width * width)).exp()
            }
            ScalarKind::InversePower { a, center } => {
                let r = match center {
                    Some(c) => dist(x, c),
                    None => norm(x),
                };
                if r == 0.0 && *a > 0.0 {
                    return Err(Error::Singular {
                        kind: "inverse_power".into(),
                        t,
                        x: x.to_vec(),
                    });
                }
                r.powf(-a)
            }
            ScalarKind::Coordinate { axis } => x[*axis],
            ScalarKind::CoordinateSquare { axis } => x[*axis] * x[*axis],
            ScalarKind::HalfSpace { axis, offset } => {
                if x[*axis] > *offset {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }
}

/// One row of the field catalog listing.
#[derive(Clone, Debug, Serialize)]
pub struct CatalogEntry {
    pub family: &'static str,
    pub kind: &'static str,
    pub params: &'static str,
    pub citation: &'static str,
}

pub fn catalog() -> Vec<CatalogEntry> {
    let e = |family, kind, params, citation| CatalogEntry {
        family,
        kind,
        params,
        citation,
    };
    vec![
        e("drift", "zero", "-", "control drift"),
        e("drift", "constant", "v[d]", "bounded smooth test drift"),
        e("drift", "linear", "k", "bounded-on-compacts restoring drift -k x"),
        e(
            "drift",
            "gaussian_bump",
            "amplitude, width, center[d], direction[d]",
            "bounded smooth test drift",
        ),
        e(
            "drift",
            "radial_inverse",
            "c",
            "-c x/|x|^2; c = eps d, sigma = sqrt2 I: no solution from 0 for eps = 1",
        ),
        e(
            "drift",
            "example_3_22_1",
            "alpha, beta (alpha+beta=1), eps",
            "-t^-alpha |x|^-beta x/|x|: no solution from the origin",
        ),
        e(
            "drift",
            "example_3_22_2",
            "q in (1,2), sign",
            "t^-1/q sgn x^1 on |x^1|<=1: no weak uniqueness",
        ),
        e(
            "drift",
            "mixed_singular",
            "c, gamma",
            "c |x|^-gamma (|x|+sqrt t)^(gamma-1): admissible Morrey drift",
        ),
        e(
            "drift",
            "one_coordinate_power",
            "alpha < 1",
            "-|x^1|^-alpha sgn x^1: moderated drift finite, mixed norm infinite",
        ),
        e("sigma", "identity", "scale", "scaled identity"),
        e(
            "sigma",
            "rotation_sigma",
            "-",
            "d=2 columns x/|x| and x*/|x|: a = I, no strong solution from 0",
        ),
        e(
            "sigma",
            "oscillating_log",
            "amp <= 1",
            "2 I + zeta(x) sin(ln|ln|x||): discontinuous at 0, weak solutions exist",
        ),
        e(
            "sigma",
            "block_radial",
            "alpha, beta, zero_value",
            "d=3, d1=12 block diffusion, 0/0 := zero_value",
        ),
        e("sigma", "smooth_diagonal", "amp < 1", "diag(1 + amp sin x^i)"),
        e("scalar", "constant", "c", "test function"),
        e("scalar", "indicator_ball", "center[d], radius", "test function"),
        e("scalar", "indicator_cylinder", "t, center[d], rho", "test function"),
        e("scalar", "gaussian_bump", "center[d], width, amplitude", "smooth test function"),
        e("scalar", "dipole", "axis, width", "smooth non-radial test function"),
        e("scalar", "inverse_power", "a, center[d]?", "|x|^-a"),
        e("scalar", "coordinate", "axis", "x^axis"),
        e("scalar", "coordinate_square", "axis", "(x^axis)^2"),
        e("scalar", "half_space", "axis, offset", "discontinuous test function"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(t: f64, x: &[f64]) -> SpaceTimePoint {
        SpaceTimePoint::new(t, x.to_vec()).unwrap()
    }

    #[test]
    fn radial_inverse_at_unit_radius() {
        let b = VectorField::new(3, DriftKind::RadialInverse { c: 3.0 }).unwrap();
        assert_eq!(b.eval(&pt(0.0, &[1.0, 0.0, 0.0])).unwrap(), vec![-3.0, 0.0, 0.0]);
    }

    #[test]
    fn example_3_22_1_at_unit_point() {
        let b = VectorField::new(
            2,
            DriftKind::Example3221 {
                alpha: 0.5,
                beta: 0.5,
                eps: 1.0,
            },
        )
        .unwrap();
        assert_eq!(b.eval(&pt(1.0, &[1.0, 0.0])).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn mixed_singular_magnitude_at_time_zero() {
        let b = VectorField::new(2, DriftKind::MixedSingular { c: 1.0, gamma: 0.8 }).unwrap();
        let x = [2.0 / 2f64.sqrt(), 2.0 / 2f64.sqrt()];
        let v = b.eval(&pt(0.0, &x)).unwrap();
        // independent closed form: 2^-0.8 * 2^-0.2
        let expected = 2f64.powf(-0.8) * 2f64.powf(-0.2);
        assert!((norm(&v) - expected).abs() < 1e-14);
        assert!((norm(&v) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn singular_points_are_errors() {
        let b = VectorField::new(3, DriftKind::RadialInverse { c: 1.0 }).unwrap();
        assert!(matches!(b.eval(&pt(0.0, &[0.0, 0.0, 0.0])), Err(Error::Singular { .. })));
        let b = VectorField::new(
            2,
            DriftKind::Example3221 {
                alpha: 0.5,
                beta: 0.5,
                eps: 1.0,
            },
        )
        .unwrap();
        assert!(b.eval(&pt(0.0, &[1.0, 0.0])).is_err());
        let b = VectorField::new(2, DriftKind::OneCoordinatePower { alpha: 0.9 }).unwrap();
        assert!(b.eval(&pt(0.3, &[0.0, 1.0])).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(VectorField::new(
            2,
            DriftKind::Example3221 {
                alpha: 0.5,
                beta: 0.6,
                eps: 1.0
            }
        )
        .is_err());
        assert!(VectorField::new(2, DriftKind::Example3222 { q: 2.5, sign: 1.0 }).is_err());
        assert!(MatrixField::new(3, SigmaKind::RotationSigma).is_err());
    }

    #[test]
    fn floored_evaluation_is_finite_and_flags() {
        let b = VectorField::new(3, DriftKind::RadialInverse { c: 3.0 }).unwrap();
        let mut out = [0.0; 3];
        assert!(b.eval_floored_into(0.0, &[1e-9, 0.0, 0.0], 0.01, &mut out).unwrap());
        assert!((out[0] + 300.0).abs() < 1e-9);
        assert!(b.eval_floored_into(0.0, &[0.0, 0.0, 0.0], 0.01, &mut out).unwrap());
        assert_eq!(out, [0.0; 3]);
        assert!(!b.eval_floored_into(0.0, &[1.0, 0.0, 0.0], 0.01, &mut out).unwrap());
    }

    #[test]
    fn rotation_sigma_is_orthonormal() {
        let s = MatrixField::rotation();
        let a = s.diffusion_at(0.0, &[1.0, 0.0]).unwrap();
        assert_eq!(a, vec![1.0, 0.0, 0.0, 1.0]);
        let sig = s.eval(&pt(0.0, &[1.0, 0.0])).unwrap();
        // columns (1,0) and (0,1)
        assert_eq!(sig, vec![1.0, 0.0, 0.0, 1.0]);
        let a0 = s.diffusion_at(0.0, &[0.0, 0.0]).unwrap();
        assert_eq!(a0, vec![1.0, 0.0, 0.0, 1.0]);
        let a1 = s.diffusion_at(0.0, &[0.3, -1.7]).unwrap();
        for (v, e) in a1.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_sigma_everywhere() {
        let s = MatrixField::identity(3);
        let v = s.eval(&pt(0.7, &[1.0, -2.0, 5.0])).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(v[i * 3 + k], if i == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn block_radial_with_only_alpha() {
        let s = MatrixField::new(
            3,
            SigmaKind::BlockRadial {
                alpha: 1.0,
                beta: 0.0,
                zero_value: inv_sqrt3(),
            },
        )
        .unwrap();
        let v = s.eval(&pt(0.0, &[0.4, 0.1, -2.0])).unwrap();
        for i in 0..3 {
            for k in 0..12 {
                let e = if k == i { 1.0 } else { 0.0 };
                assert_eq!(v[i * 12 + k], e);
            }
        }
        let a = s.diffusion_at(0.0, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(a, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.nonzero_columns(), vec![0, 1, 2]);
    }

    #[test]
    fn block_radial_diffusion_is_scalar() {
        let s = MatrixField::new(
            3,
            SigmaKind::BlockRadial {
                alpha: 1.0,
                beta: 0.5,
                zero_value: inv_sqrt3(),
            },
        )
        .unwrap();
        for x in [[0.0, 0.0, 0.0], [0.2, -0.3, 1.1]] {
            let a = s.diffusion_at(0.0, &x).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let e = if i == j { 1.25 } else { 0.0 };
                    assert!((a[i * 3 + j] - e).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn every_sigma_is_uniformly_elliptic_on_samples() {
        let fields = vec![
            MatrixField::scaled_identity(2, 1.5),
            MatrixField::rotation(),
            MatrixField::new(3, SigmaKind::OscillatingLog { amp: 1.0 }).unwrap(),
            MatrixField::new(2, SigmaKind::OscillatingLog { amp: 0.7 }).unwrap(),
            MatrixField::new(
                3,
                SigmaKind::BlockRadial {
                    alpha: 1.0,
                    beta: 0.3,
                    zero_value: inv_sqrt3(),
                },
            )
            .unwrap(),
            MatrixField::new(2, SigmaKind::SmoothDiagonal { amp: 0.5 }).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for f in fields {
            let delta = f.ellipticity();
            let d = f.dim;
            for _ in 0..1000 {
                let scale: f64 = [1e-3, 0.3, 1.0, 5.0][rng.gen_range(0..4)];
                let x: Vec<f64> = (0..d).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
                let a = f.diffusion_at(rng.gen_range(0.0..1.0), &x).unwrap();
                for _ in 0..100 {
                    let xi: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let n2: f64 = xi.iter().map(|v| v * v).sum();
                    let mut q = 0.0;
                    for i in 0..d {
                        for j in 0..d {
                            q += xi[i] * a[i * d + j] * xi[j];
                        }
                    }
                    assert!(q >= delta * n2 * (1.0 - 1e-12), "{} lower", f.kind_name());
                    assert!(q <= n2 / delta * (1.0 + 1e-12), "{} upper", f.kind_name());
                }
            }
        }
    }

    #[test]
    fn dilation_examples() {
        let b = VectorField::new(2, DriftKind::RadialInverse { c: 1.0 }).unwrap();
        let bh = b.dilate(0.5).unwrap();
        let x = [0.3, -0.8];
        let v = b.eval(&pt(0.0, &x)).unwrap();
        let vh = bh.eval(&pt(0.0, &x)).unwrap();
        for (p, q) in v.iter().zip(&vh) {
            assert!((p - q).abs() < 1e-14);
        }
        let k = VectorField::new(2, DriftKind::Constant { v: vec![1.0, -2.0] }).unwrap();
        let kh = k.dilate(0.25).unwrap();
        assert_eq!(kh.eval(&pt(3.0, &x)).unwrap(), vec![0.25, -0.5]);
    }

    #[test]
    fn time_space_drift_picks_up_c_to_minus_alpha() {
        let b = VectorField::new(
            2,
            DriftKind::Example3221 {
                alpha: 0.5,
                beta: 0.5,
                eps: 1.0,
            },
        )
        .unwrap();
        let bh = b.dilate(0.25).unwrap();
        // c * (c^2 t)^{-alpha} (c|x|)^{-beta} at (1, e1): exponent 1 - 2 alpha - beta = -alpha
        let v = bh.eval(&pt(1.0, &[1.0, 0.0])).unwrap();
        let direct = 0.25 * (0.0625f64).powf(-0.5) * 0.25f64.powf(-0.5);
        assert!((v[0] + direct).abs() < 1e-14);
        assert!((v[0] + 0.25f64.powf(-0.5)).abs() < 1e-14);
        // so eps = c^alpha is mapped back to the unit drift
        let small = VectorField::new(
            2,
            DriftKind::Example3221 {
                alpha: 0.5,
                beta: 0.5,
                eps: 0.5,
            },
        )
        .unwrap()
        .dilate(0.25)
        .unwrap();
        let w = small.eval(&pt(1.0, &[0.3, -0.4])).unwrap();
        let u = b.eval(&pt(1.0, &[0.3, -0.4])).unwrap();
        assert!((w[0] - u[0]).abs() < 1e-14 && (w[1] - u[1]).abs() < 1e-14);
    }

    #[test]
    fn double_dilation_composes() {
        let b = VectorField::new(2, DriftKind::MixedSingular { c: 0.7, gamma: 0.4 }).unwrap();
        let two = b.dilate(0.5).unwrap().dilate(0.3).unwrap();
        let one = b.dilate(0.15).unwrap();
        let p = pt(0.37, &[0.2, -0.9]);
        let (u, v) = (two.eval(&p).unwrap(), one.eval(&p).unwrap());
        for (a, c) in u.iter().zip(&v) {
            assert!((a - c).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn serde_layout() {
        let b = VectorField::new(3, DriftKind::RadialInverse { c: 3.0 }).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"dim":3,"kind":"radial_inverse","params":{"c":3.0}}"#);
        let back: VectorField = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        let z: VectorField = serde_json::from_str(r#"{"dim":2,"kind":"zero"}"#).unwrap();
        assert_eq!(z, VectorField::zero(2));
        let r: MatrixField = serde_json::from_str(r#"{"dim":2,"kind":"rotation_sigma"}"#).unwrap();
        assert_eq!(r, MatrixField::rotation());
        let e: VectorField = serde_json::from_str(r#"{"dim":2,"kind":"example_3_22_1","params":{"alpha":0.5,"beta":0.5}}"#).unwrap();
        assert_eq!(e.kind_name(), "example_3_22_1");
    }

    #[test]
    fn catalog_listing() {
        let c = catalog();
        assert!(c.len() >= 10);
        assert!(c.iter().any(|e| e.kind == "example_3_22_1"));
        assert!(c.iter().any(|e| e.kind == "rotation_sigma"));
    }
}
