//! Estimate records, deterministic reductions and least-squares fits.

use serde::{Deserialize, Serialize};

use crate::num::pairwise_sum;

/// Point estimate with its Monte Carlo standard error and run fingerprint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Samples excluded because their path diverged.
    #[serde(default)]
    pub diverged: usize,
    pub fingerprint: String,
}

impl EstimateReport {
    /// Mean and `sample std / sqrt(n)` of `xs`, reduced in a fixed order.
    pub fn from_samples(xs: &[f64], fingerprint: impl Into<String>) -> Self {
        let (value, std_error) = mean_se(xs);
        Self {
            value,
            std_error,
            n_samples: xs.len(),
            diverged: 0,
            fingerprint: fingerprint.into(),
        }
    }

    pub fn exact(value: f64, fingerprint: impl Into<String>) -> Self {
        Self {
            value,
            std_error: 0.0,
            n_samples: 0,
            diverged: 0,
            fingerprint: fingerprint.into(),
        }
    }

    pub fn with_diverged(mut self, n: usize) -> Self {
        self.diverged = n;
        self
    }

    /// `|self - other| / sqrt(se1^2 + se2^2)`; infinite when both errors vanish and values differ.
    pub fn z_score(&self, value: f64, oracle_se: f64) -> f64 {
        let se = (self.std_error.powi(2) + oracle_se.powi(2)).sqrt();
        let diff = (self.value - value).abs();
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / se
        }
    }
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Fits `log y = a + slope log x` over positive pairs.
pub fn power_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    linear_fit(&lx, &ly)
}

/// One row of an exported ladder curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub ladder: f64,
    pub estimate: f64,
    pub std_error: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_error() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fits_exact_lines_and_powers() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v.powf(-1.5)).collect();
        let f = power_fit(&x, &y).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-12);
    }
}
