use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{check_arms, RewardOracle, RewardSignal, SelectionLog, SelectionRecord};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::task::EpsilonGrid;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CemConfig {
    pub iters: usize,
    pub per_iter: usize,
    pub elite_frac: f64,
    pub sigma_min: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            iters: 10,
            per_iter: 25,
            elite_frac: 0.4,
            sigma_min: 0.01,
        }
    }
}

impl CemConfig {
    pub fn n_elite(&self) -> usize {
        (self.per_iter as f64 * self.elite_frac).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 || self.per_iter == 0 {
            return Err(Error::InvalidParameter(
                "CEM needs at least one round of one episode".into(),
            ));
        }
        if !(self.elite_frac > 0.0 && self.elite_frac <= 1.0) || self.n_elite() == 0 {
            return Err(Error::InvalidParameter(format!(
                "elite fraction {} selects no elites from {}",
                self.elite_frac, self.per_iter
            )));
        }
        if self.sigma_min.is_nan() || self.sigma_min <= 0.0 {
            return Err(Error::InvalidParameter("sigma_min must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CemState {
    pub mu_eps: f64,
    pub sigma_eps: f64,
}

/// Fits `(μ, σ)` to the elite ε values, `σ` floored at `sigma_min`.
fn fit(elites: &[f64], sigma_min: f64) -> CemState {
    let n = elites.len() as f64;
    let mu = elites.iter().sum::<f64>() / n;
    let var = elites.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / n;
    CemState {
        mu_eps: mu,
        sigma_eps: var.sqrt().max(sigma_min),
    }
}

/// Cross-entropy search over the grid of robustness levels.
///
/// The first round picks arms uniformly; later rounds draw `ε ~ N(μ, σ)` and
/// snap to the nearest grid level. Elites are ranked by the selector
/// statistic, ties going to the earlier meta-episode.
pub fn cem_run(
    grid: &EpsilonGrid,
    oracle: &mut dyn RewardOracle,
    cfg: &CemConfig,
    seed: u64,
    signal: RewardSignal,
) -> Result<(CemState, SelectionLog)> {
    cfg.validate()?;
    signal.validate()?;
    let eps = grid.levels();
    check_arms(eps, oracle)?;
    let mut pick_rng = stream_rng(seed, 0);
    let mut play_rng = stream_rng(seed, 1);
    let mut state = CemState {
        mu_eps: f64::NAN,
        sigma_eps: f64::NAN,
    };
    let mut log = SelectionLog::default();
    for round in 0..cfg.iters {
        let mut scored = Vec::with_capacity(cfg.per_iter);
        for _ in 0..cfg.per_iter {
            let arm = if round == 0 {
                pick_rng.random_range(0..eps.len())
            } else {
                let normal =
                    Normal::new(state.mu_eps, state.sigma_eps).expect("sigma floored above zero");
                grid.nearest(normal.sample(&mut pick_rng))
            };
            let out = oracle.play(arm, &mut play_rng);
            scored.push((signal.statistic(&out), eps[arm]));
            log.records.push(SelectionRecord {
                meta_episode: log.len(),
                arm,
                epsilon: eps[arm],
                ret: out.ret,
                success_rate: out.success_rate,
            });
        }
        // stable sort keeps earlier episodes first among equal scores
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let elites: Vec<f64> = scored[..cfg.n_elite()].iter().map(|s| s.1).collect();
        state = fit(&elites, cfg.sigma_min);
    }
    Ok((state, log))
}
