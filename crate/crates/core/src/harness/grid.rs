use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Polar discretization of 2-D targets: `n_radii` equal-width rings on
/// `[0, r_max)` times `n_angles` equal sectors. Cell `ring·n_angles + sector`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarGrid {
    pub n_radii: usize,
    pub n_angles: usize,
    pub r_max: f64,
}

impl Default for PolarGrid {
    fn default() -> Self {
        Self {
            n_radii: 8,
            n_angles: 16,
            r_max: 0.8,
        }
    }
}

impl PolarGrid {
    pub fn new(n_radii: usize, n_angles: usize, r_max: f64) -> Result<Self> {
        let g = Self {
            n_radii,
            n_angles,
            r_max,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_radii == 0 || self.n_angles == 0 || !(self.r_max > 0.0 && self.r_max.is_finite())
        {
            return Err(Error::InvalidParameter(format!("bad polar grid {self:?}")));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_radii * self.n_angles
    }

    pub fn ring_width(&self) -> f64 {
        self.r_max / self.n_radii as f64
    }

    /// Cell containing `p`, or `None` beyond `r_max`.
    pub fn cell(&self, p: &[f64]) -> Option<usize> {
        let r = p[0].hypot(p[1]);
        if r.is_nan() || r >= self.r_max {
            return None;
        }
        let ring = ((r / self.ring_width()) as usize).min(self.n_radii - 1);
        Some(ring * self.n_angles + self.sector(p))
    }

    fn sector(&self, p: &[f64]) -> usize {
        let theta = p[1].atan2(p[0]).rem_euclid(TAU);
        ((theta / TAU * self.n_angles as f64) as usize).min(self.n_angles - 1)
    }

    pub fn ring_of(&self, cell: usize) -> usize {
        cell / self.n_angles
    }

    /// Polar midpoint of a cell.
    pub fn center(&self, cell: usize) -> [f64; 2] {
        let r = (self.ring_of(cell) as f64 + 0.5) * self.ring_width();
        let theta = ((cell % self.n_angles) as f64 + 0.5) * TAU / self.n_angles as f64;
        [r * theta.cos(), r * theta.sin()]
    }

    /// Radial edges `[r_i, r_{i+1})` of ring `i`.
    pub fn ring_bounds(&self, ring: usize) -> (f64, f64) {
        let w = self.ring_width();
        (ring as f64 * w, (ring + 1) as f64 * w)
    }
}
