//! Linear-Gaussian latent task models.
//!
//! Both models encode experience into a diagonal-Gaussian posterior over a
//! latent task code `z` with an affine encoder and decode `z` affinely: into
//! a goal summary for sparse-reward tasks ([`StructuredRewardModel`]) or into
//! an additive dynamics shift ([`StructuredDynamicsModel`]). Gradients of the
//! ELBO losses are written out by hand and checked against finite
//! differences.

pub mod checkpoint;
pub mod dynamics;
pub mod linalg;
pub mod reward;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng};
use crate::task::DiagonalGaussian;
pub use checkpoint::Checkpoint;
pub use dynamics::{dynamics_predict, StructuredDynamicsModel};

pub use linalg::Mat;
pub use reward::{reward_predict, StructuredRewardModel};

/// Lower bound on every learned standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// One task episode: states, actions and per-state rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn new(states: Vec<Vec<f64>>, actions: Vec<Vec<f64>>, rewards: Vec<f64>) -> Result<Self> {
        if rewards.len() != states.len() {
            return Err(Error::LengthMismatch {
                expected: states.len(),
                got: rewards.len(),
            });
        }
        if actions.len() != states.len() {
            return Err(Error::LengthMismatch {
                expected: states.len(),
                got: actions.len(),
            });
        }
        Ok(Self {
            states,
            actions,
            rewards,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Reward-weighted mean of the visited states; `None` without reward.
pub fn goal_summary(traj: &Trajectory) -> Option<Vec<f64>> {
    let total: f64 = traj.rewards.iter().sum();
    if total <= 0.0 || traj.states.is_empty() {
        return None;
    }
    let mut mean = vec![0.0; traj.states[0].len()];
    for (s, &r) in traj.states.iter().zip(&traj.rewards) {
        if r != 0.0 {
            linalg::axpy(&mut mean, r / total, s);
        }
    }
    Some(mean)
}

/// Loss and flat gradient of a batch objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Trajectories left out of the batch (no reward, or too short).
    pub skipped: usize,
}

/// Models whose parameters are a list of named matrices.
pub trait ParamModel {
    fn named(&self) -> Vec<(&'static str, &Mat)>;
    fn named_mut(&mut self) -> Vec<(&'static str, &mut Mat)>;

    fn n_params(&self) -> usize {
        self.named().iter().map(|(_, m)| m.data().len()).sum()
    }

    /// Parameters concatenated in declaration order.
    fn params(&self) -> Vec<f64> {
        self.named()
            .iter()
            .flat_map(|(_, m)| m.data().iter().copied())
            .collect()
    }

    fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.n_params();
        if flat.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: flat.len(),
            });
        }
        let mut off = 0;
        for (_, m) in self.named_mut() {
            let len = m.data().len();
            m.data_mut().copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(())
    }
}

/// Affine Gaussian encoder `q(z | x) = N(W x + b, diag(exp(logstd))²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineEncoder {
    pub weight: Mat,
    pub bias: Mat,
    pub logstd: Mat,
}

impl AffineEncoder {
    pub fn zeros(input_dim: usize, latent_dim: usize) -> Self {
        Self {
            weight: Mat::zeros(latent_dim, input_dim),
            bias: Mat::zeros(latent_dim, 1),
            logstd: Mat::zeros(latent_dim, 1),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.bias.rows()
    }

    /// Posterior mean and floored standard deviation.
    pub fn posterior(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut mu = self.weight.mul_vec(x);
        linalg::axpy(&mut mu, 1.0, self.bias.data());
        let sigma = self
            .logstd
            .data()
            .iter()
            .map(|l| l.exp().max(SIGMA_FLOOR))
            .collect();
        (mu, sigma)
    }

    /// Samples `z = μ + σ ⊙ η`, adds the KL to the prior to `loss` and
    /// returns `(z, μ, σ)`.
    fn reparam(&self, x: &[f64], eta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let (mu, sigma) = self.posterior(x);
        let z: Vec<f64> = mu
            .iter()
            .zip(&sigma)
            .zip(eta)
            .map(|((m, s), e)| m + s * e)
            .collect();
        let kl = kl_to_prior(&mu, &sigma);
        (z, mu, sigma, kl)
    }

    /// Backpropagates `g_z` through the reparameterization and adds the KL
    /// gradient, scaled by `scale`.
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        grad: &mut AffineEncoder,
        x: &[f64],
        mu: &[f64],
        sigma: &[f64],
        eta: &[f64],
        g_z: &[f64],
        kl_weight: f64,
        scale: f64,
    ) {
        let floored: Vec<bool> = self
            .logstd
            .data()
            .iter()
            .map(|l| l.exp() < SIGMA_FLOOR)
            .collect();
        let g_mu: Vec<f64> = g_z.iter().zip(mu).map(|(g, m)| g + kl_weight * m).collect();
        grad.weight.add_outer(scale, &g_mu, x);
        linalg::axpy(grad.bias.data_mut(), scale, &g_mu);
        for j in 0..mu.len() {
            if !floored[j] {
                let s = sigma[j];
                grad.logstd.data_mut()[j] +=
                    scale * (g_z[j] * s * eta[j] + kl_weight * (s * s - 1.0));
            }
        }
    }
}

/// `KL(N(μ, diag σ²) ‖ N(0, I))`.
pub fn kl_to_prior(mu: &[f64], sigma: &[f64]) -> f64 {
    mu.iter()
        .zip(sigma)
        .map(|(m, s)| 0.5 * (m * m + s * s - 1.0) - s.ln())
        .sum()
}

/// One standard-normal vector per trajectory.
pub fn draw_noise(rng: &mut StreamRng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// A task decoded from a latent code.
#[derive(Debug, Clone, PartialEq)]
pub enum ImaginedTask {
    /// Decoded goal summary `ĥ`.
    Goal(Vec<f64>),
    /// Decoded additive dynamics term `W z`.
    Shift(Vec<f64>),
}

impl ImaginedTask {
    pub fn vector(&self) -> &[f64] {
        match self {
            ImaginedTask::Goal(v) | ImaginedTask::Shift(v) => v,
        }
    }
}

/// Maps latent codes to tasks.
pub trait LatentDecoder {
    fn latent_dim(&self) -> usize;
    fn decode(&self, z: &[f64]) -> ImaginedTask;
}

/// Draws `n` latent codes from `q_phi` (stream 0 under `seed`) and decodes
/// them.
pub fn imagine_tasks<D: LatentDecoder + ?Sized>(
    model: &D,
    q_phi: &DiagonalGaussian,
    n: usize,
    seed: u64,
) -> Result<Vec<ImaginedTask>> {
    if n == 0 {
        return Err(Error::InvalidParameter("imagine_tasks needs n >= 1".into()));
    }
    if q_phi.dim() != model.latent_dim() {
        return Err(Error::LengthMismatch {
            expected: model.latent_dim(),
            got: q_phi.dim(),
        });
    }
    let mut rng = stream_rng(seed, 0);
    Ok((0..n)
        .map(|_| model.decode(&q_phi.sample(&mut rng)))
        .collect())
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -=
                self.learning_rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Full-batch ELBO training settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

/// Loss per step of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub losses: Vec<f64>,
    pub skipped: usize,
}

pub(crate) fn fit_with<M, F>(model: &mut M, cfg: &FitConfig, mut loss_grad: F) -> Result<FitReport>
where
    M: ParamModel,
    F: FnMut(&M, &mut StreamRng) -> Result<LossGrad>,
{
    let mut rng = stream_rng(cfg.seed, 0);
    let mut params = model.params();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut skipped = 0;
    for _ in 0..cfg.steps {
        let lg = loss_grad(model, &mut rng)?;
        if !lg.loss.is_finite() {
            return Err(Error::InvalidParameter("ELBO loss diverged".into()));
        }
        skipped = lg.skipped;
        losses.push(lg.loss);
        adam.step(&mut params, &lg.grad);
        model.set_params(&params)?;
    }
    Ok(FitReport { losses, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(states: Vec<Vec<f64>>, rewards: Vec<f64>) -> Trajectory {
        let actions = vec![vec![0.0]; states.len()];
        Trajectory::new(states, actions, rewards).unwrap()
    }

    #[test]
    fn goal_summary_examples() {
        let s = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 4.0]];
        let t = traj(s.clone(), vec![0.0, 1.0, 1.0]);
        assert_eq!(goal_summary(&t), Some(vec![2.0, 3.0]));
        assert_eq!(goal_summary(&traj(s.clone(), vec![0.0; 3])), None);
        let single = traj(s, vec![0.0, 0.0, 1.0]);
        assert_eq!(goal_summary(&single), Some(vec![3.0, 4.0]));
    }

    #[test]
    fn trajectory_lengths_checked() {
        assert!(Trajectory::new(vec![vec![0.0]], vec![vec![0.0]], vec![]).is_err());
    }

    #[test]
    fn prior_kl_zero_at_prior() {
        assert_eq!(kl_to_prior(&[0.0; 3], &[1.0; 3]), 0.0);
        assert!(kl_to_prior(&[0.1, 0.0], &[1.0, 1.0]) > 0.0);
        assert!(kl_to_prior(&[0.0], &[0.9]) > 0.0);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-3));
    }
}
