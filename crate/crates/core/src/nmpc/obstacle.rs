use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spherical keep-out zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    /// NED center, m.
    pub center: [f64; 3],
    /// Keep-out radius D_min, m.
    pub radius: f64,
}

impl ObstacleSpec {
    pub fn new(center: [f64; 3], radius: f64) -> Result<Self> {
        let o = Self { center, radius };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.iter().all(|c| c.is_finite()) || !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "obstacle needs a finite center and radius > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }
}

/// Signed clearance `‖p − c‖ − D_min`; negative inside the keep-out sphere.
pub fn obstacle_margin(position: &Vector3<f64>, obstacle: &ObstacleSpec) -> f64 {
    (position - obstacle.center()).norm() - obstacle.radius
}

/// Gradient of [`obstacle_margin`] with respect to position. At the center,
/// where the distance is not differentiable, an arbitrary unit vector is used.
pub fn obstacle_margin_gradient(position: &Vector3<f64>, obstacle: &ObstacleSpec) -> Vector3<f64> {
    let d = position - obstacle.center();
    let n = d.norm();
    if n > 1e-12 { d / n } else { Vector3::new(0.0, 1.0, 0.0) }
}

/// Smallest margin over all obstacles, `+∞` when there are none.
pub fn min_margin(position: &Vector3<f64>, obstacles: &[ObstacleSpec]) -> f64 {
    obstacles
        .iter()
        .map(|o| obstacle_margin(position, o))
        .fold(f64::INFINITY, f64::min)
}
