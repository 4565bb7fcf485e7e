//! Points, balls and parabolic cylinders.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::num::unit_ball_volume;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: Vec<f64>,
}

impl SpaceTimePoint {
    pub fn new(t: f64, x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(invalid("x", "dimension must be at least 1"));
        }
        if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("x", "components must be finite"));
        }
        Ok(Self { t, x })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("radius", "must be positive"));
        }
        Ok(Self { center, radius })
    }

    /// Open ball membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        dist(x, &self.center) < self.radius
    }

    pub fn volume(&self) -> f64 {
        unit_ball_volume::<f64>(self.center.len()) * self.radius.powi(self.center.len() as i32)
    }

    pub fn dilate(&self, mu: f64) -> Ball {
        Ball {
            center: self.center.clone(),
            radius: self.radius * mu,
        }
    }
}

/// Forward parabolic cylinder `[t, t + rho^2) x B_rho(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub t: f64,
    pub x: Vec<f64>,
    pub rho: f64,
}

impl Cylinder {
    pub fn new(t: f64, x: Vec<f64>, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(invalid("rho", "must be positive"));
        }
        Ok(Self { t, x, rho })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn t_end(&self) -> f64 {
        self.t + self.rho * self.rho
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        t >= self.t && t < self.t_end() && dist(x, &self.x) < self.rho
    }

    pub fn volume(&self) -> f64 {
        self.rho * self.rho * unit_ball_volume::<f64>(self.dim()) * self.rho.powi(self.dim() as i32)
    }

    /// `mu C_rho(t,x) = C_{mu rho}(t,x)`.
    pub fn dilate(&self, mu: f64) -> Cylinder {
        Cylinder {
            t: self.t,
            x: self.x.clone(),
            rho: self.rho * mu,
        }
    }

    pub fn ball(&self) -> Ball {
        Ball {
            center: self.x.clone(),
            radius: self.rho,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_volume_is_rho_squared_times_ball() {
        let c = Cylinder::new(0.0, vec![0.0; 3], 0.5).unwrap();
        let ball = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!((c.volume() - 0.25 * ball).abs() < 1e-14);
    }

    #[test]
    fn cylinder_membership_is_half_open_in_time() {
        let c = Cylinder::new(1.0, vec![0.0, 0.0], 1.0).unwrap();
        assert!(c.contains(1.0, &[0.0, 0.0]));
        assert!(!c.contains(2.0, &[0.0, 0.0]));
        assert!(!c.contains(1.5, &[1.0, 0.0]));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Cylinder::new(0.0, vec![0.0], 0.0).is_err());
        assert!(SpaceTimePoint::new(0.0, vec![]).is_err());
        assert!(SpaceTimePoint::new(0.0, vec![f64::NAN]).is_err());
    }
}
