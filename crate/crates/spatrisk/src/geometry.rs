//! Planar regions and the distributions of distances inside them.
//!
//! The risk reduction to one dimension integrates the damage covariance
//! against the density of the distance between two independent uniform
//! points of the region, so those densities are the load-bearing piece
//! here. Both have closed forms; the square one is two branches glued at
//! the side length.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "shape")]
pub enum Region {
    Square { side: f64 },
    Disk { radius: f64 },
}

impl Region {
    pub fn square(side: f64) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "square side must be positive and finite, got {side}"
            )));
        }
        Ok(Region::Square { side })
    }

    pub fn disk(radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "disk radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Region::Disk { radius })
    }

    pub fn area(&self) -> f64 {
        match *self {
            Region::Square { side } => side * side,
            Region::Disk { radius } => PI * radius * radius,
        }
    }

    /// Largest distance between two points of the region.
    pub fn diameter(&self) -> f64 {
        match *self {
            Region::Square { side } => side * std::f64::consts::SQRT_2,
            Region::Disk { radius } => 2.0 * radius,
        }
    }

    /// The region dilated by a positive factor about the origin.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be positive and finite, got {lambda}"
            )));
        }
        Ok(match *self {
            Region::Square { side } => Region::Square { side: side * lambda },
            Region::Disk { radius } => Region::Disk { radius: radius * lambda },
        })
    }

    /// Density of |S - T| for S, T independent uniform on the region.
    /// Zero outside (0, diameter()).
    pub fn distance_density(&self, h: f64) -> f64 {
        if h <= 0.0 || h >= self.diameter() {
            return 0.0;
        }
        match *self {
            Region::Square { side } => {
                let t = h / side;
                let f = if t <= 1.0 {
                    2.0 * PI * t - 8.0 * t * t + 2.0 * t * t * t
                } else {
                    // second branch: support of the distance between the
                    // corners; vanishes at sqrt(2)
                    8.0 * t
                        * (PI / 4.0 - (1.0 / t).acos() + (t * t - 1.0).sqrt() - 1.0
                            + (2.0 - t * t) / 4.0)
                };
                f / side
            }
            Region::Disk { radius } => {
                let u = h / (2.0 * radius);
                (2.0 * h / (radius * radius))
                    * ((2.0 / PI) * u.acos() - (h / (PI * radius)) * (1.0 - u * u).sqrt())
            }
        }
    }

    /// E|S - T| in closed form.
    pub fn mean_distance(&self) -> f64 {
        match *self {
            // (2 + sqrt(2) + 5 asinh(1)) / 15 per unit side
            Region::Square { side } => side * 0.521_405_433_164_720_7,
            // 128 R / (45 pi)
            Region::Disk { radius } => radius * 128.0 / (45.0 * PI),
        }
    }
}

/// Fraction of a disk of radius `r` covered by its translate at distance
/// `h`: area of the lens over the disk area. Decreases from 1 at h = 0 to
/// 0 at h = 2r; this is the pair-overlap factor of the random-disk
/// truncation in the truncated extremal Gaussian model.
pub fn disk_overlap_fraction(h: f64, r: f64) -> f64 {
    debug_assert!(r > 0.0);
    let u = h.abs() / (2.0 * r);
    if u >= 1.0 {
        return 0.0;
    }
    (2.0 / PI) * (u.acos() - u * (1.0 - u * u).sqrt())
}
