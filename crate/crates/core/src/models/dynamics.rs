//! Additive-shift dynamics model.
//!
//! Next states are predicted as `base(s, a) + W z` where `base` is affine in
//! `[s; a]` and shared by all tasks, so the latent code only moves the
//! dynamics by an additive term. The encoder reads the mean of the
//! transition features `[s_t, a_t, s_{t+1}]`. Per trajectory the loss is
//! `Σ_t ‖base(s_t, a_t) + W z − s_{t+1}‖² + kl_weight · KL(q(z | ·) ‖ N(0, I))`.

use super::linalg::{axpy, Mat};
use super::{
    draw_noise, fit_with, AffineEncoder, FitConfig, FitReport, ImaginedTask, LatentDecoder,
    LossGrad, ParamModel, Trajectory,
};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::task::DiagonalGaussian;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredDynamicsModel {
    /// `state_dim × (state_dim + action_dim)`.
    pub base_weight: Mat,
    pub base_bias: Mat,
    /// `W`, `state_dim × latent_dim`.
    pub shift_weight: Mat,
    /// Reads `2·state_dim + action_dim` pooled features.
    pub encoder: AffineEncoder,
    pub kl_weight: f64,
    action_dim: usize,
}

impl StructuredDynamicsModel {
    pub fn new(state_dim: usize, action_dim: usize, latent_dim: usize) -> Self {
        Self {
            base_weight: Mat::zeros(state_dim, state_dim + action_dim),
            base_bias: Mat::zeros(state_dim, 1),
            shift_weight: Mat::zeros(state_dim, latent_dim),
            encoder: AffineEncoder::zeros(2 * state_dim + action_dim, latent_dim),
            kl_weight: 1.0,
            action_dim,
        }
    }

    pub fn random(
        state_dim: usize,
        action_dim: usize,
        latent_dim: usize,
        rng: &mut StreamRng,
    ) -> Self {
        let mut m = Self::new(state_dim, action_dim, latent_dim);
        let p: Vec<f64> = draw_noise(rng, 1, m.n_params())
            .remove(0)
            .iter()
            .map(|e| 0.1 * e)
            .collect();
        m.set_params(&p).expect("same length");
        m
    }

    pub fn state_dim(&self) -> usize {
        self.base_bias.rows()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }

    /// Task-independent part `B [s; a] + b`.
    pub fn base(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = s.iter().chain(a).copied().collect();
        let mut out = self.base_weight.mul_vec(&x);
        axpy(&mut out, 1.0, self.base_bias.data());
        out
    }

    /// `W z`.
    pub fn shift(&self, z: &[f64]) -> Vec<f64> {
        self.shift_weight.mul_vec(z)
    }

    /// Mean of `[s_t, a_t, s_{t+1}]` over the trajectory's transitions.
    pub fn pooled_features(&self, traj: &Trajectory) -> Option<Vec<f64>> {
        let n = traj.len().checked_sub(1).filter(|n| *n > 0)?;
        let mut f = vec![0.0; 2 * self.state_dim() + self.action_dim];
        for t in 0..n {
            let row: Vec<f64> = traj.states[t]
                .iter()
                .chain(&traj.actions[t])
                .chain(&traj.states[t + 1])
                .copied()
                .collect();
            axpy(&mut f, 1.0 / n as f64, &row);
        }
        Some(f)
    }

    pub fn posterior(&self, traj: &Trajectory) -> Option<DiagonalGaussian> {
        let (mu, sigma) = self.encoder.posterior(&self.pooled_features(traj)?);
        Some(DiagonalGaussian::new(mu, sigma).expect("floored stddev"))
    }

    fn check_dims(&self, traj: &Trajectory) -> Result<()> {
        let (sd, ad) = (self.state_dim(), self.action_dim);
        if let Some(s) = traj.states.iter().find(|s| s.len() != sd) {
            return Err(Error::LengthMismatch {
                expected: sd,
                got: s.len(),
            });
        }
        if let Some(a) = traj.actions.iter().find(|a| a.len() != ad) {
            return Err(Error::LengthMismatch {
                expected: ad,
                got: a.len(),
            });
        }
        Ok(())
    }

    pub fn elbo(&self, batch: &[Trajectory], rng: &mut StreamRng) -> Result<LossGrad> {
        let noise = draw_noise(rng, batch.len(), self.latent_dim());
        self.elbo_with_noise(batch, &noise)
    }

    /// Negative ELBO and gradient for fixed per-trajectory noise.
    /// Trajectories with fewer than two states are skipped.
    pub fn elbo_with_noise(&self, batch: &[Trajectory], noise: &[Vec<f64>]) -> Result<LossGrad> {
        if noise.len() != batch.len() {
            return Err(Error::LengthMismatch {
                expected: batch.len(),
                got: noise.len(),
            });
        }
        for t in batch {
            self.check_dims(t)?;
        }
        let kept: Vec<(Vec<f64>, &Trajectory, &Vec<f64>)> = batch
            .iter()
            .zip(noise)
            .filter_map(|(t, e)| self.pooled_features(t).map(|f| (f, t, e)))
            .collect();
        let skipped = batch.len() - kept.len();
        if kept.is_empty() {
            return Err(Error::EmptyBatch { skipped });
        }
        let scale = 1.0 / kept.len() as f64;
        let mut grad = self.clone();
        let n = grad.n_params();
        grad.set_params(&vec![0.0; n]).expect("same length");
        let mut loss = 0.0;
        for (feat, traj, eta) in &kept {
            let (z, mu, sig, kl) = self.encoder.reparam(feat, eta);
            let wz = self.shift(&z);
            let mut g_z_pre = vec![0.0; self.state_dim()];
            let mut l = 0.0;
            for t in 0..traj.len() - 1 {
                let (s, a) = (&traj.states[t], &traj.actions[t]);
                let x: Vec<f64> = s.iter().chain(a).copied().collect();
                let mut pred = self.base_weight.mul_vec(&x);
                axpy(&mut pred, 1.0, self.base_bias.data());
                axpy(&mut pred, 1.0, &wz);
                let e: Vec<f64> = pred
                    .iter()
                    .zip(&traj.states[t + 1])
                    .map(|(p, y)| p - y)
                    .collect();
                l += e.iter().map(|v| v * v).sum::<f64>();
                grad.base_weight.add_outer(2.0 * scale, &e, &x);
                axpy(grad.base_bias.data_mut(), 2.0 * scale, &e);
                axpy(&mut g_z_pre, 2.0, &e);
            }
            l += self.kl_weight * kl;
            loss += scale * l;
            grad.shift_weight.add_outer(scale, &g_z_pre, &z);
            let g_z = self.shift_weight.tmul_vec(&g_z_pre);
            self.encoder.backward(
                &mut grad.encoder,
                feat,
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

    pub fn fit(&mut self, batch: &[Trajectory], cfg: &FitConfig) -> Result<FitReport> {
        fit_with(self, cfg, |m, rng| m.elbo(batch, rng))
    }
}

/// `W z + base(s, a)`.
pub fn dynamics_predict(
    s: &[f64],
    a: &[f64],
    z: &[f64],
    model: &StructuredDynamicsModel,
) -> Result<Vec<f64>> {
    if s.len() != model.state_dim() {
        return Err(Error::LengthMismatch {
            expected: model.state_dim(),
            got: s.len(),
        });
    }
    if a.len() != model.action_dim() {
        return Err(Error::LengthMismatch {
            expected: model.action_dim(),
            got: a.len(),
        });
    }
    if z.len() != model.latent_dim() {
        return Err(Error::LengthMismatch {
            expected: model.latent_dim(),
            got: z.len(),
        });
    }
    let mut out = model.base(s, a);
    axpy(&mut out, 1.0, &model.shift(z));
    Ok(out)
}

impl ParamModel for StructuredDynamicsModel {
    fn named(&self) -> Vec<(&'static str, &Mat)> {
        vec![
            ("base_weight", &self.base_weight),
            ("base_bias", &self.base_bias),
            ("shift_weight", &self.shift_weight),
            ("enc_weight", &self.encoder.weight),
            ("enc_bias", &self.encoder.bias),
            ("enc_logstd", &self.encoder.logstd),
        ]
    }

    fn named_mut(&mut self) -> Vec<(&'static str, &mut Mat)> {
        vec![
            ("base_weight", &mut self.base_weight),
            ("base_bias", &mut self.base_bias),
            ("shift_weight", &mut self.shift_weight),
            ("enc_weight", &mut self.encoder.weight),
            ("enc_bias", &mut self.encoder.bias),
            ("enc_logstd", &mut self.encoder.logstd),
        ]
    }
}

impl LatentDecoder for StructuredDynamicsModel {
    fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }

    fn decode(&self, z: &[f64]) -> ImaginedTask {
        ImaginedTask::Shift(self.shift(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::reward::tests::fd_rel_error;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_traj(rng: &mut StreamRng, len: usize) -> Trajectory {
        let s = (0..len)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let a = (0..len)
            .map(|_| vec![rng.random_range(-1.0..1.0)])
            .collect();
        Trajectory::new(s, a, vec![0.0; len]).unwrap()
    }

    fn identity_base(m: &mut StructuredDynamicsModel) {
        m.base_weight = Mat::eye(2, 3);
    }

    #[test]
    fn predict_examples() {
        let mut m = StructuredDynamicsModel::new(2, 1, 2);
        identity_base(&mut m);
        let s = [0.3, -0.1];
        assert_eq!(
            dynamics_predict(&s, &[0.0], &[0.0, 0.0], &m).unwrap(),
            m.base(&s, &[0.0])
        );
        assert_eq!(
            dynamics_predict(&s, &[0.0], &[5.0, 5.0], &m).unwrap(),
            m.base(&s, &[0.0])
        );
        m.shift_weight = Mat::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let p = dynamics_predict(&s, &[0.0], &[0.1, 0.7], &m).unwrap();
        assert!((p[0] - 0.4).abs() < 1e-15 && (p[1] - 0.0).abs() < 1e-15);
        assert!(dynamics_predict(&s, &[0.0, 1.0], &[0.0, 0.0], &m).is_err());
    }

    #[test]
    fn exact_base_and_prior_give_zero_loss() {
        let mut m = StructuredDynamicsModel::new(2, 1, 2);
        identity_base(&mut m);
        let still =
            Trajectory::new(vec![vec![0.2, 0.2]; 3], vec![vec![0.0]; 3], vec![0.0; 3]).unwrap();
        let lg = m.elbo_with_noise(&[still], &[vec![0.4, -1.2]]).unwrap();
        assert!(lg.loss.abs() < 1e-15);
    }

    #[test]
    fn shifted_transition_reconstructed_by_posterior_mean() {
        // s' = base(s, a) + W·1 with posterior mean 1 and a tiny stddev.
        let mut m = StructuredDynamicsModel::new(2, 1, 1);
        identity_base(&mut m);
        m.shift_weight = Mat::from_vec(2, 1, vec![0.3, -0.1]).unwrap();
        m.encoder.bias.data_mut()[0] = 1.0;
        m.encoder.logstd.data_mut()[0] = (1e-4f64).ln();
        let s = vec![0.5, 0.5];
        let next = vec![0.8, 0.4];
        let t = Trajectory::new(vec![s, next], vec![vec![0.0]; 2], vec![0.0; 2]).unwrap();
        let z = m.posterior(&t).unwrap();
        let pred = dynamics_predict(&t.states[0], &[0.0], z.mean(), &m).unwrap();
        assert!(pred
            .iter()
            .zip(&t.states[1])
            .all(|(a, b)| (a - b).abs() < 1e-6));
        let lg = m.elbo_with_noise(&[t], &[vec![1.0]]).unwrap();
        let kl = super::super::kl_to_prior(&[1.0], &[1e-4]);
        assert!((lg.loss - kl).abs() < 1e-6);
    }

    #[test]
    fn zero_noise_decouples_w_from_sampling() {
        // With η = 0 the W gradient is the residual times the posterior mean.
        let mut rng = stream_rng(8, 0);
        let m = StructuredDynamicsModel::random(2, 1, 2, &mut rng);
        let t = random_traj(&mut rng, 4);
        let lg = m
            .elbo_with_noise(std::slice::from_ref(&t), &[vec![0.0, 0.0]])
            .unwrap();
        let mu = m.posterior(&t).unwrap().mean().to_vec();
        let mut expected = Mat::zeros(2, 2);
        let wz = m.shift(&mu);
        for k in 0..3 {
            let mut pred = m.base(&t.states[k], &t.actions[k]);
            axpy(&mut pred, 1.0, &wz);
            let e: Vec<f64> = pred
                .iter()
                .zip(&t.states[k + 1])
                .map(|(p, y)| 2.0 * (p - y))
                .collect();
            expected.add_outer(1.0, &e, &mu);
        }
        let off = 2 * 3 + 2;
        assert!(lg.grad[off..off + 4]
            .iter()
            .zip(expected.data())
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = stream_rng(22, 0);
        for draw in 0..20 {
            let m = StructuredDynamicsModel::random(2, 1, 3, &mut rng);
            let batch: Vec<Trajectory> = (0..3).map(|_| random_traj(&mut rng, 6)).collect();
            let noise = draw_noise(&mut rng, 3, 3);
            let lg = m.elbo_with_noise(&batch, &noise).unwrap();
            let f = |p: &[f64]| {
                let mut mm = m.clone();
                mm.set_params(p).unwrap();
                mm.elbo_with_noise(&batch, &noise).unwrap().loss
            };
            let err = fd_rel_error(f, &m.params(), &lg.grad, 1e-5);
            assert!(err <= 1e-4, "draw {draw}: rel err {err}");
        }
    }

    #[test]
    fn short_trajectories_are_skipped() {
        let m = StructuredDynamicsModel::new(2, 1, 1);
        let short = Trajectory::new(vec![vec![0.0, 0.0]], vec![vec![0.0]], vec![0.0]).unwrap();
        assert!(matches!(
            m.elbo_with_noise(&[short], &[vec![0.0]]),
            Err(Error::EmptyBatch { skipped: 1 })
        ));
    }

    #[test]
    fn fit_learns_additive_wind() {
        // s' = s + 0.1 a + 0.1 w with a per-task wind w.
        let mut rng = stream_rng(30, 0);
        let winds: Vec<[f64; 2]> = (0..40)
            .map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)])
            .collect();
        let batch: Vec<Trajectory> = winds
            .iter()
            .map(|w| {
                let mut s = vec![vec![0.0, 0.0]];
                let mut a = Vec::new();
                for _ in 0..10 {
                    let act = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                    let last = s.last().unwrap().clone();
                    s.push(vec![
                        last[0] + 0.1 * act[0] + 0.1 * w[0],
                        last[1] + 0.1 * act[1] + 0.1 * w[1],
                    ]);
                    a.push(act);
                }
                a.push(vec![0.0, 0.0]);
                Trajectory::new(s, a, vec![0.0; 11]).unwrap()
            })
            .collect();
        let mut m = StructuredDynamicsModel::random(2, 2, 2, &mut rng);
        m.kl_weight = 0.01;
        let r = m
            .fit(
                &batch,
                &FitConfig {
                    steps: 3000,
                    learning_rate: 0.01,
                    seed: 1,
                },
            )
            .unwrap();
        assert!(r.losses.last().unwrap() < &(0.1 * r.losses[0]));
    }
}
