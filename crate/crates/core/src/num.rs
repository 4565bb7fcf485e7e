//! Scalar abstraction shared by the grid, norm, quadrature and dyadic code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the deterministic numerics (f32 or f64).
pub trait Real: Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum<S: Real>(xs: &[S]) -> S {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        let mut acc = S::zero();
        for &x in xs {
            acc = acc + x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume<S: Real>(d: usize) -> S {
    // V_d = pi^{d/2} / Gamma(d/2 + 1), via the two-step recurrence V_d = 2 pi / d * V_{d-2}.
    let pi = S::PI();
    let two = S::lit(2.0);
    let mut v = if d.is_multiple_of(2) { S::one() } else { two };
    let mut k = if d.is_multiple_of(2) { 2 } else { 3 };
    while k <= d {
        v = v * two * pi / S::from_usize_lossy(k);
        k += 2;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume::<f64>(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume::<f64>(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume::<f64>(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
        let v4 = std::f64::consts::PI.powi(2) / 2.0;
        assert!((unit_ball_volume::<f64>(4) - v4).abs() < 1e-14);
        assert!((unit_ball_volume::<f32>(3) - 4.18879).abs() < 1e-5);
    }

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-10);
    }
}
