//! Goal-summary reward model.
//!
//! Encoder `q(z | h̄)` over the reward-weighted state mean `h̄`, decoder
//! `ĥ = D z + b`, and reward head `r(s) = exp(−‖M ⊙ (s − ĥ)‖² / σ²)`.
//! Per trajectory the loss is
//! `‖h̄ − ĥ‖² + Σ_t (r(s_t) − r_t)² + kl_weight · KL(q(z | h̄) ‖ N(0, I))`
//! with one reparameterized draw `z = μ + σ_z ⊙ η`; the batch loss is the
//! mean over trajectories that have a goal summary.

use super::linalg::{dot, Mat};
use super::{
    draw_noise, fit_with, goal_summary, AffineEncoder, FitConfig, FitReport, ImaginedTask,
    LatentDecoder, LossGrad, ParamModel, Trajectory,
};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::task::DiagonalGaussian;

/// Initial `log σ` of the reward head.
pub const INITIAL_LOG_SIGMA: f64 = -5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredRewardModel {
    pub encoder: AffineEncoder,
    /// `state_dim × latent_dim`.
    pub dec_weight: Mat,
    pub dec_bias: Mat,
    /// 1×1.
    pub log_sigma: Mat,
    /// 0/1 per state coordinate.
    pub mask: Vec<f64>,
    /// Include the reward-prediction term; off gives the plain VAE ablation.
    pub reward_head: bool,
    pub kl_weight: f64,
}

impl StructuredRewardModel {
    /// Zero encoder/decoder weights, unit posterior, full mask.
    pub fn new(state_dim: usize, latent_dim: usize) -> Self {
        Self {
            encoder: AffineEncoder::zeros(state_dim, latent_dim),
            dec_weight: Mat::zeros(state_dim, latent_dim),
            dec_bias: Mat::zeros(state_dim, 1),
            log_sigma: Mat::from_vec(1, 1, vec![INITIAL_LOG_SIGMA]).unwrap(),
            mask: vec![1.0; state_dim],
            reward_head: true,
            kl_weight: 1.0,
        }
    }

    /// Small random weights from `rng`.
    pub fn random(state_dim: usize, latent_dim: usize, rng: &mut StreamRng) -> Self {
        let mut m = Self::new(state_dim, latent_dim);
        let mut p = m.params();
        let noise = draw_noise(rng, 1, p.len()).remove(0);
        let n_sigma = p.len() - 1;
        for (x, e) in p.iter_mut().zip(noise).take(n_sigma) {
            *x = 0.1 * e;
        }
        m.set_params(&p).expect("same length");
        m
    }

    pub fn with_mask(mut self, mask: Vec<f64>) -> Result<Self> {
        if mask.len() != self.state_dim() {
            return Err(Error::LengthMismatch {
                expected: self.state_dim(),
                got: mask.len(),
            });
        }
        if mask.iter().any(|m| *m != 0.0 && *m != 1.0) {
            return Err(Error::InvalidParameter(
                "mask entries must be 0 or 1".into(),
            ));
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.dec_bias.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.data()[0].exp()
    }

    /// `ĥ = D z + b`.
    pub fn decode_goal(&self, z: &[f64]) -> Vec<f64> {
        let mut h = self.dec_weight.mul_vec(z);
        super::linalg::axpy(&mut h, 1.0, self.dec_bias.data());
        h
    }

    /// Posterior over `z` for a goal summary.
    pub fn posterior(&self, h_bar: &[f64]) -> DiagonalGaussian {
        let (mu, sigma) = self.encoder.posterior(h_bar);
        DiagonalGaussian::new(mu, sigma).expect("floored stddev")
    }

    /// Decoded goal at the posterior mean.
    pub fn reconstruct(&self, h_bar: &[f64]) -> Vec<f64> {
        self.decode_goal(&self.encoder.posterior(h_bar).0)
    }

    /// Negative ELBO and gradient with a fresh draw per trajectory.
    pub fn elbo(&self, batch: &[Trajectory], rng: &mut StreamRng) -> Result<LossGrad> {
        let noise = draw_noise(rng, batch.len(), self.latent_dim());
        self.elbo_with_noise(batch, &noise)
    }

    /// Negative ELBO and gradient for fixed per-trajectory noise.
    pub fn elbo_with_noise(&self, batch: &[Trajectory], noise: &[Vec<f64>]) -> Result<LossGrad> {
        if noise.len() != batch.len() {
            return Err(Error::LengthMismatch {
                expected: batch.len(),
                got: noise.len(),
            });
        }
        let sigma2 = self.sigma().powi(2);
        let mut grad = self.zeros_like();
        let kept: Vec<(Vec<f64>, &Trajectory, &Vec<f64>)> = batch
            .iter()
            .zip(noise)
            .filter_map(|(t, e)| goal_summary(t).map(|h| (h, t, e)))
            .collect();
        let skipped = batch.len() - kept.len();
        if kept.is_empty() {
            return Err(Error::EmptyBatch { skipped });
        }
        let scale = 1.0 / kept.len() as f64;
        let mut loss = 0.0;
        for (h_bar, traj, eta) in &kept {
            if h_bar.len() != self.state_dim() {
                return Err(Error::LengthMismatch {
                    expected: self.state_dim(),
                    got: h_bar.len(),
                });
            }
            let (z, mu, sig, kl) = self.encoder.reparam(h_bar, eta);
            let h_hat = self.decode_goal(&z);
            let mut g_h: Vec<f64> = h_hat
                .iter()
                .zip(h_bar)
                .map(|(a, b)| 2.0 * (a - b))
                .collect();
            let mut l = h_hat
                .iter()
                .zip(h_bar)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
            if self.reward_head {
                let mut g_ls = 0.0;
                for (s, &r) in traj.states.iter().zip(&traj.rewards) {
                    let u: Vec<f64> = s.iter().zip(&h_hat).map(|(a, b)| a - b).collect();
                    let q: f64 = u.iter().zip(&self.mask).map(|(x, m)| m * x * x).sum();
                    let p = (-q / sigma2).exp();
                    let e = p - r;
                    l += e * e;
                    let c = 4.0 * e * p / sigma2;
                    for j in 0..u.len() {
                        g_h[j] += c * self.mask[j] * u[j];
                    }
                    g_ls += c * q;
                }
                grad.log_sigma.data_mut()[0] += scale * g_ls;
            }
            l += self.kl_weight * kl;
            loss += scale * l;
            grad.dec_weight.add_outer(scale, &g_h, &z);
            super::linalg::axpy(grad.dec_bias.data_mut(), scale, &g_h);
            let g_z = self.dec_weight.tmul_vec(&g_h);
            self.encoder.backward(
                &mut grad.encoder,
                h_bar,
                &mu,
                &sig,
                eta,
                &g_z,
                self.kl_weight,
                scale,
            );
        }
        Ok(LossGrad {
            loss,
            grad: grad.params(),
            skipped,
        })
    }

    /// Adam on the full batch with a fresh draw per step.
    pub fn fit(&mut self, batch: &[Trajectory], cfg: &FitConfig) -> Result<FitReport> {
        fit_with(self, cfg, |m, rng| m.elbo(batch, rng))
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        let n = z.n_params();
        z.set_params(&vec![0.0; n]).expect("same length");
        z
    }
}

/// `exp(−‖M ⊙ (s − ĥ)‖² / σ²)`.
pub fn reward_predict(s: &[f64], h_hat: &[f64], model: &StructuredRewardModel) -> Result<f64> {
    if s.len() != h_hat.len() || s.len() != model.mask.len() {
        return Err(Error::LengthMismatch {
            expected: model.mask.len(),
            got: s.len().min(h_hat.len()),
        });
    }
    let u: Vec<f64> = s
        .iter()
        .zip(h_hat)
        .zip(&model.mask)
        .map(|((a, b), m)| m * (a - b))
        .collect();
    Ok((-dot(&u, &u) / model.sigma().powi(2)).exp())
}

impl ParamModel for StructuredRewardModel {
    fn named(&self) -> Vec<(&'static str, &Mat)> {
        vec![
            ("enc_weight", &self.encoder.weight),
            ("enc_bias", &self.encoder.bias),
            ("enc_logstd", &self.encoder.logstd),
            ("dec_weight", &self.dec_weight),
            ("dec_bias", &self.dec_bias),
            ("log_sigma", &self.log_sigma),
        ]
    }

    fn named_mut(&mut self) -> Vec<(&'static str, &mut Mat)> {
        vec![
            ("enc_weight", &mut self.encoder.weight),
            ("enc_bias", &mut self.encoder.bias),
            ("enc_logstd", &mut self.encoder.logstd),
            ("dec_weight", &mut self.dec_weight),
            ("dec_bias", &mut self.dec_bias),
            ("log_sigma", &mut self.log_sigma),
        ]
    }
}

impl LatentDecoder for StructuredRewardModel {
    fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }

    fn decode(&self, z: &[f64]) -> ImaginedTask {
        ImaginedTask::Goal(self.decode_goal(z))
    }
}
