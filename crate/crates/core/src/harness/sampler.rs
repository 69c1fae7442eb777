use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::grid::PolarGrid;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng};

/// Law of the target radius Δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialLaw {
    Uniform { lo: f64, hi: f64 },
    Exp { rate: f64 },
}

impl RadialLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RadialLaw::Uniform { lo, hi } => lo >= 0.0 && hi >= lo && hi.is_finite(),
            RadialLaw::Exp { rate } => rate > 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad radial law {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            RadialLaw::Uniform { lo, hi } if lo == hi => lo,
            RadialLaw::Uniform { lo, hi } => rng.random_range(lo..hi),
            RadialLaw::Exp { rate } => Exp::new(rate).expect("validated rate").sample(rng),
        }
    }

    pub fn cdf(&self, r: f64) -> f64 {
        match *self {
            RadialLaw::Uniform { lo, hi } if lo == hi => f64::from(r >= lo),
            RadialLaw::Uniform { lo, hi } => ((r - lo) / (hi - lo)).clamp(0.0, 1.0),
            RadialLaw::Exp { rate } => 1.0 - (-rate * r.max(0.0)).exp(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RadialLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            RadialLaw::Exp { rate } => 1.0 / rate,
        }
    }

    /// Support bounds, `(0, ∞)` for the exponential law.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            RadialLaw::Uniform { lo, hi } => (lo, hi),
            RadialLaw::Exp { .. } => (0.0, f64::INFINITY),
        }
    }

    /// `uniform(lo, hi)` or `exp(rate)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot parse radial law '{s}'"));
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args: Vec<f64> = rest
            .strip_suffix(')')
            .ok_or_else(bad)?
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let law = match (name.trim(), args.as_slice()) {
            ("uniform", &[lo, hi]) => RadialLaw::Uniform { lo, hi },
            ("exp", &[rate]) => RadialLaw::Exp { rate },
            _ => return Err(bad()),
        };
        law.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(law)
    }
}

impl std::fmt::Display for RadialLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RadialLaw::Uniform { lo, hi } => write!(f, "uniform({lo:?}, {hi:?})"),
            RadialLaw::Exp { rate } => write!(f, "exp({rate:?})"),
        }
    }
}

/// A task: goal position (point navigation) or wind vector (wind navigation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Task {
    pub target: [f64; 2],
}

/// Targets `Δ(cos θ, sin θ)` with `θ ~ U(0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSampler {
    pub radial: RadialLaw,
}

impl TaskSampler {
    pub fn new(radial: RadialLaw) -> Result<Self> {
        radial.validate()?;
        Ok(Self { radial })
    }

    pub fn sample_with(&self, rng: &mut StreamRng) -> Task {
        let r = self.radial.sample(rng);
        let theta = rng.random_range(0.0..TAU);
        Task {
            target: [r * theta.cos(), r * theta.sin()],
        }
    }

    /// Probability of each grid cell, and the mass beyond `r_max`.
    pub fn cell_probs(&self, grid: &PolarGrid) -> (Vec<f64>, f64) {
        let mut p = Vec::with_capacity(grid.n_cells());
        for ring in 0..grid.n_radii {
            let (a, b) = grid.ring_bounds(ring);
            let m = ring_mass(&self.radial, a, b) / grid.n_angles as f64;
            p.extend(std::iter::repeat_n(m, grid.n_angles));
        }
        let inside = ring_mass(&self.radial, 0.0, grid.r_max);
        (p, 1.0 - inside)
    }
}

/// `P(a ≤ Δ < b)`.
fn ring_mass(law: &RadialLaw, a: f64, b: f64) -> f64 {
    match *law {
        RadialLaw::Uniform { lo, hi } if lo == hi => f64::from(lo >= a && lo < b),
        _ => law.cdf(b) - law.cdf(a),
    }
}

/// One task drawn from stream 0 under `seed`.
pub fn sample_task(sampler: &TaskSampler, seed: u64) -> Task {
    sampler.sample_with(&mut stream_rng(seed, 0))
}
