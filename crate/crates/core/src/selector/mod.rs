//! Test-time selection of the robustness level.
//!
//! Each member of a robust population is a bandit arm. A [`RewardOracle`]
//! plays one meta-episode with the chosen arm; the selectors decide which arm
//! to play next from the observed outcomes.
//!
//! Posterior updates consume a statistic in `[0, 1]`. By default that is the
//! meta-episode's average success rate; [`RewardSignal::NormalizedReturn`]
//! maps raw returns through declared bounds instead.

mod cem;
mod thompson;

pub use cem::{cem_run, CemConfig, CemState};
pub use thompson::{thompson_run, update_beta, BetaBanditState, ThompsonResult};

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Default meta-test budget.
pub const DEFAULT_META_EPISODES: usize = 250;

/// Outcome of one meta-episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub ret: f64,
    /// Average success over the meta-episode's episodes, in `[0, 1]`.
    pub success_rate: f64,
}

/// Plays meta-episodes with a chosen arm.
pub trait RewardOracle {
    fn n_arms(&self) -> usize;
    fn play(&mut self, arm: usize, rng: &mut StreamRng) -> Outcome;
}

/// Arms with independent Bernoulli successes; return equals success.
#[derive(Clone, Debug)]
pub struct BernoulliArms {
    pub means: Vec<f64>,
}

impl RewardOracle for BernoulliArms {
    fn n_arms(&self) -> usize {
        self.means.len()
    }

    fn play(&mut self, arm: usize, rng: &mut StreamRng) -> Outcome {
        let hit = if rng.random::<f64>() < self.means[arm] {
            1.0
        } else {
            0.0
        };
        Outcome {
            ret: hit,
            success_rate: hit,
        }
    }
}

/// Which statistic feeds the selector.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum RewardSignal {
    #[default]
    SuccessRate,
    /// `(ret − lo) / (hi − lo)`, clamped to `[0, 1]`.
    NormalizedReturn { lo: f64, hi: f64 },
}

impl RewardSignal {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RewardSignal::SuccessRate => Ok(()),
            RewardSignal::NormalizedReturn { lo, hi }
                if lo.is_finite() && hi.is_finite() && hi > lo =>
            {
                Ok(())
            }
            RewardSignal::NormalizedReturn { lo, hi } => Err(Error::InvalidParameter(format!(
                "return bounds [{lo}, {hi}] are not a proper interval"
            ))),
        }
    }

    pub fn statistic(&self, outcome: &Outcome) -> f64 {
        match *self {
            RewardSignal::SuccessRate => outcome.success_rate.clamp(0.0, 1.0),
            RewardSignal::NormalizedReturn { lo, hi } => {
                ((outcome.ret - lo) / (hi - lo)).clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionRecord {
    pub meta_episode: usize,
    pub arm: usize,
    pub epsilon: f64,
    pub ret: f64,
    pub success_rate: f64,
}

/// One record per played meta-episode, in play order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelectionLog {
    pub records: Vec<SelectionRecord>,
}

impl SelectionLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn arms(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().map(|r| r.arm)
    }

    /// Fraction of plays per arm.
    pub fn frequencies(&self, n_arms: usize) -> Vec<f64> {
        let mut f = vec![0.0; n_arms];
        for a in self.arms() {
            f[a] += 1.0;
        }
        let n = self.len().max(1) as f64;
        f.iter_mut().for_each(|x| *x /= n);
        f
    }

    /// Running `t·R* − Σ_{s≤t} R_{i_s}` after each record.
    pub fn cumulative_regret(&self, true_means: &[f64]) -> Result<Vec<f64>> {
        let best = check_means(self, true_means)?;
        let mut acc = 0.0;
        Ok(self
            .records
            .iter()
            .map(|r| {
                acc += best - true_means[r.arm];
                acc
            })
            .collect())
    }

    /// Writes the log as CSV. `cumulative_regret` is left blank without true means.
    pub fn write_csv(&self, path: &Path, true_means: Option<&[f64]>) -> Result<()> {
        let regret = true_means.map(|m| self.cumulative_regret(m)).transpose()?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "meta_episode",
            "arm",
            "epsilon",
            "return",
            "success_rate",
            "cumulative_regret",
        ])?;
        for (i, r) in self.records.iter().enumerate() {
            let cr = regret
                .as_ref()
                .map(|v| format!("{:?}", v[i]))
                .unwrap_or_default();
            w.write_record([
                r.meta_episode.to_string(),
                r.arm.to_string(),
                format!("{:?}", r.epsilon),
                format!("{:?}", r.ret),
                format!("{:?}", r.success_rate),
                cr,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_means(log: &SelectionLog, true_means: &[f64]) -> Result<f64> {
    if true_means.is_empty() {
        return Err(Error::InvalidParameter("no arms".into()));
    }
    if let Some(r) = log.records.iter().find(|r| r.arm >= true_means.len()) {
        return Err(Error::LengthMismatch {
            expected: r.arm + 1,
            got: true_means.len(),
        });
    }
    Ok(true_means.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Test-time regret `N·R* − Σ_t R_{i_t}` using the expected return of each pulled arm.
pub fn bandit_regret(log: &SelectionLog, true_means: &[f64]) -> Result<f64> {
    let best = check_means(log, true_means)?;
    Ok(log.records.iter().map(|r| best - true_means[r.arm]).sum())
}

fn check_arms(epsilons: &[f64], oracle: &dyn RewardOracle) -> Result<()> {
    if epsilons.is_empty() {
        return Err(Error::InvalidParameter("population has no arms".into()));
    }
    if oracle.n_arms() != epsilons.len() {
        return Err(Error::LengthMismatch {
            expected: epsilons.len(),
            got: oracle.n_arms(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_of(arms: &[usize]) -> SelectionLog {
        SelectionLog {
            records: arms
                .iter()
                .enumerate()
                .map(|(t, &arm)| SelectionRecord {
                    meta_episode: t,
                    arm,
                    epsilon: 0.0,
                    ret: 0.0,
                    success_rate: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn regret_plug_values() {
        assert_eq!(bandit_regret(&log_of(&[0; 10]), &[0.9, 0.1]).unwrap(), 0.0);
        let r = bandit_regret(&log_of(&[1; 10]), &[0.9, 0.1]).unwrap();
        assert!((r - 8.0).abs() < 1e-12);
        let identical = bandit_regret(&log_of(&[0, 1, 2, 1]), &[0.4, 0.4, 0.4]).unwrap();
        assert_eq!(identical, 0.0);
    }

    #[test]
    fn regret_rejects_short_means() {
        assert!(matches!(
            bandit_regret(&log_of(&[0, 2]), &[0.5, 0.5]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn cumulative_regret_ends_at_total() {
        let log = log_of(&[1, 0, 1, 1]);
        let c = log.cumulative_regret(&[0.7, 0.2]).unwrap();
        assert!((c[3] - bandit_regret(&log, &[0.7, 0.2]).unwrap()).abs() < 1e-15);
        assert!(c.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn normalized_signal_clamps() {
        let s = RewardSignal::NormalizedReturn { lo: -10.0, hi: 0.0 };
        assert_eq!(
            s.statistic(&Outcome {
                ret: -5.0,
                success_rate: 0.0
            }),
            0.5
        );
        assert_eq!(
            s.statistic(&Outcome {
                ret: 3.0,
                success_rate: 0.0
            }),
            1.0
        );
        assert!(RewardSignal::NormalizedReturn { lo: 1.0, hi: 1.0 }
            .validate()
            .is_err());
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sel.csv");
        log_of(&[0, 1]).write_csv(&p, Some(&[0.9, 0.1])).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "meta_episode,arm,epsilon,return,success_rate,cumulative_regret"
        );
        assert_eq!(lines[2], "1,1,0.0,0.0,0.0,0.8");
        log_of(&[0]).write_csv(&p, None).unwrap();
        assert!(std::fs::read_to_string(&p)
            .unwrap()
            .lines()
            .nth(1)
            .unwrap()
            .ends_with(','));
    }
}
