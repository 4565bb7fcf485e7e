//! Gauss rules and the collapsed-coordinate rule on the ordered time simplex.

use crate::error::{invalid, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    (x.iter().map(|v| m + r * v).collect(), w.iter().map(|v| r * v).collect())
}

/// Gauss–Hermite rule for the standard normal weight: `E g(Z) ~ sum w_i g(x_i)`.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton on the orthonormal physicists' Hermite recurrence, then rescale.
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let s2 = std::f64::consts::SQRT_2;
    let spi = std::f64::consts::PI.sqrt();
    let mut out: Vec<(f64, f64)> = x.iter().zip(&w).map(|(a, b)| (a * s2, b / spi)).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.into_iter().unzip()
}

/// Tensor rule on `{t0 > t_1 > ... > t_m > 0}` in collapsed coordinates
/// `t_1 = t0 u_1`, `t_{j+1} = t_j u_{j+1}` with Jacobian `prod_{j<m} t_j`.
#[derive(Clone, Debug)]
pub struct SimplexRule {
    /// Node times, `m` per node, in decreasing order.
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SimplexRule {
    pub fn new(t0: f64, m: usize, per_level: usize) -> Result<Self> {
        if m == 0 || per_level == 0 {
            return Err(invalid("quad", "need m >= 1 and at least one node per level"));
        }
        if !(t0 > 0.0) {
            return Err(invalid("t0", "must be positive"));
        }
        let (u, wu) = gauss_legendre_on(per_level, 0.0, 1.0);
        let total = per_level.pow(m as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; m];
        for _ in 0..total {
            let mut ts = Vec::with_capacity(m);
            let mut prev = t0;
            let mut w = 1.0;
            for &k in &idx {
                // dt_j = t_{j-1} du_j
                w *= prev * wu[k];
                prev *= u[k];
                ts.push(prev);
            }
            nodes.push(ts);
            weights.push(w);
            for j in (0..m).rev() {
                idx[j] += 1;
                if idx[j] < per_level {
                    break;
                }
                idx[j] = 0;
            }
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(n, w)| w * f(n)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // int x^14 = 2/15
        let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((m - 2.0 / 15.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(5);
        let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((m - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_matches_normal_moments() {
        for n in [1, 4, 10, 20] {
            let (x, w) = gauss_hermite_normal(n);
            let mom = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
            assert!((mom(0) - 1.0).abs() < 1e-12);
            if n >= 2 {
                assert!((mom(2) - 1.0).abs() < 1e-12);
            }
            if n >= 4 {
                assert!((mom(4) - 3.0).abs() < 1e-11);
                assert!((mom(6) - 15.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn simplex_volume_and_moment() {
        // |Gamma_m(t0)| = t0^m / m!
        for m in 1..=3 {
            let r = SimplexRule::new(2.0, m, 6).unwrap();
            let fact: f64 = (1..=m).map(|k| k as f64).product();
            assert!((r.integrate(|_| 1.0) - 2f64.powi(m as i32) / fact).abs() < 1e-12);
        }
        // int_{t0>t1>t2>0} t2 dt = t0^3/6
        let r = SimplexRule::new(1.5, 2, 4).unwrap();
        assert!((r.integrate(|t| t[1]) - 1.5f64.powi(3) / 6.0).abs() < 1e-12);
    }
}
