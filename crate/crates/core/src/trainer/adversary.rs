//! Adversarial task distributions and their gradient estimators.
//!
//! The adversary descends `E_q[return] + λ · KL(p ‖ q)`. Over a finite set of
//! training tasks `q_i ∝ w_i p_i` is parameterized by `θ = log w`; in a
//! latent space `q = N(μ, diag σ²)` is parameterized by `(μ, log σ)` against
//! the prior `p = N(0, I)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::models::SIGMA_FLOOR;
use crate::rng::StreamRng;
use crate::task::{kl_categorical, DiagonalGaussian};

#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryParams {
    /// Log-weights over training tasks.
    Reweighted {
        log_weights: Vec<f64>,
    },
    Latent {
        mean: Vec<f64>,
        log_std: Vec<f64>,
    },
}

impl AdversaryParams {
    /// Unit weights: `q = p`.
    pub fn uniform_weights(n_tasks: usize) -> Self {
        AdversaryParams::Reweighted {
            log_weights: vec![0.0; n_tasks],
        }
    }

    /// The prior `N(0, I)`.
    pub fn prior(dim: usize) -> Self {
        AdversaryParams::Latent {
            mean: vec![0.0; dim],
            log_std: vec![0.0; dim],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        match self {
            AdversaryParams::Reweighted { log_weights } => log_weights.clone(),
            AdversaryParams::Latent { mean, log_std } => {
                mean.iter().chain(log_std).copied().collect()
            }
        }
    }

    pub fn gaussian(&self) -> Option<DiagonalGaussian> {
        match self {
            AdversaryParams::Latent { mean, log_std } => {
                DiagonalGaussian::new(mean.clone(), log_std.iter().map(|l| l.exp()).collect()).ok()
            }
            AdversaryParams::Reweighted { .. } => None,
        }
    }

    /// Applies `θ ← θ − step · g` with optional per-coordinate clipping of
    /// the move; returns whether a standard deviation hit the floor.
    pub fn descend(&mut self, grad: &[f64], step: f64, trust_region: Option<f64>) -> bool {
        let clip = |d: f64| match trust_region {
            Some(r) => d.clamp(-r, r),
            None => d,
        };
        match self {
            AdversaryParams::Reweighted { log_weights } => {
                for (t, g) in log_weights.iter_mut().zip(grad) {
                    *t -= clip(step * g);
                }
                // Only ratios matter; keep the scale anchored.
                let mean = log_weights.iter().sum::<f64>() / log_weights.len() as f64;
                log_weights.iter_mut().for_each(|t| *t -= mean);
                false
            }
            AdversaryParams::Latent { mean, log_std } => {
                let d = mean.len();
                for (m, g) in mean.iter_mut().zip(&grad[..d]) {
                    *m -= clip(step * g);
                }
                let floor = SIGMA_FLOOR.ln();
                let mut clamped = false;
                for (l, g) in log_std.iter_mut().zip(&grad[d..]) {
                    *l -= clip(step * g);
                    if *l < floor {
                        *l = floor;
                        clamped = true;
                    }
                }
                clamped
            }
        }
    }
}

/// `q_i ∝ exp(θ_i) p_i`.
pub fn reweighted_probs(log_weights: &[f64], base: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = log_weights
        .iter()
        .zip(base)
        .map(|(t, p)| {
            if *p > 0.0 {
                t + p.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `KL(p ‖ q)` for the reweighted family (always finite).
pub fn reweighted_kl(q: &[f64], base: &[f64]) -> f64 {
    kl_categorical(base, q)
        .map(|d| d.value())
        .unwrap_or(f64::INFINITY)
}

/// Exact gradient in `θ` of `E_q[ret] + λ KL(p ‖ q)`:
/// `q_i (ret_i − E_q ret) + λ (q_i − p_i)`.
pub fn reweighted_exact_gradient(
    q: &[f64],
    base: &[f64],
    returns: &[f64],
    lambda: f64,
) -> Vec<f64> {
    let mean: f64 = q.iter().zip(returns).map(|(a, b)| a * b).sum();
    q.iter()
        .zip(returns)
        .zip(base)
        .map(|((qi, r), p)| qi * (r - mean) + lambda * (qi - p))
        .collect()
}

/// Single-sample score-function estimate for task `i ~ q`:
/// `(ret_i − b)(e_i − q) + λ (q − p)`.
pub fn reweighted_score_gradient(
    q: &[f64],
    base: &[f64],
    sampled: usize,
    ret: f64,
    baseline: f64,
    lambda: f64,
) -> Vec<f64> {
    q.iter()
        .zip(base)
        .enumerate()
        .map(|(j, (qj, p))| {
            let indicator = if j == sampled { 1.0 } else { 0.0 };
            (ret - baseline) * (indicator - qj) + lambda * (qj - p)
        })
        .collect()
}

/// `KL(N(0, I) ‖ N(μ, σ²))`.
pub fn latent_kl(mean: &[f64], log_std: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .map(|(m, l)| {
            let s2 = (2.0 * l).exp();
            l + (1.0 + m * m) / (2.0 * s2) - 0.5
        })
        .sum()
}

/// Gradient of [`latent_kl`] in `(μ, log σ)`.
pub fn latent_kl_gradient(mean: &[f64], log_std: &[f64]) -> Vec<f64> {
    let s2: Vec<f64> = log_std.iter().map(|l| (2.0 * l).exp()).collect();
    let gm = mean.iter().zip(&s2).map(|(m, s)| m / s);
    let gl = mean.iter().zip(&s2).map(|(m, s)| 1.0 - (1.0 + m * m) / s);
    gm.chain(gl).collect()
}

/// `∇_{(μ, log σ)} log q(z)`.
pub fn latent_score(mean: &[f64], log_std: &[f64], z: &[f64]) -> Vec<f64> {
    let s2: Vec<f64> = log_std.iter().map(|l| (2.0 * l).exp()).collect();
    let gm = (0..mean.len()).map(|j| (z[j] - mean[j]) / s2[j]);
    let gl = (0..mean.len()).map(|j| (z[j] - mean[j]).powi(2) / s2[j] - 1.0);
    gm.chain(gl).collect()
}

/// Draws `z ~ N(μ, σ²)`.
pub fn latent_sample(mean: &[f64], log_std: &[f64], rng: &mut StreamRng) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(m, l)| {
            let e: f64 = StandardNormal.sample(rng);
            m + l.exp() * e
        })
        .collect()
}

/// Log density of `z` under `N(μ, σ²)`.
pub fn latent_log_density(mean: &[f64], log_std: &[f64], z: &[f64]) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    (0..mean.len())
        .map(|j| {
            let u = (z[j] - mean[j]) / log_std[j].exp();
            -0.5 * u * u - log_std[j] - HALF_LN_2PI
        })
        .sum()
}

/// Draws a task index from `q`.
pub fn sample_index(q: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in q.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    q.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Scalar exponential moving-average baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub value: Option<f64>,
    pub decay: f64,
}

impl Baseline {
    pub fn new(decay: f64) -> Self {
        Self { value: None, decay }
    }

    pub fn get(&self) -> f64 {
        self.value.unwrap_or(0.0)
    }

    pub fn update(&mut self, x: f64) {
        self.value = Some(match self.value {
            None => x,
            Some(v) => self.decay * v + (1.0 - self.decay) * x,
        });
    }
}
