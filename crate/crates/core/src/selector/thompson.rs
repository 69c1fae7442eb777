use rand_distr::{Beta, Distribution};

use super::{check_arms, RewardOracle, RewardSignal, SelectionLog, SelectionRecord};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Per-arm Beta posteriors, initialised at `Beta(1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaBanditState {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl BetaBanditState {
    pub fn new(n_arms: usize) -> Self {
        Self {
            a: vec![1.0; n_arms],
            b: vec![1.0; n_arms],
        }
    }

    pub fn n_arms(&self) -> usize {
        self.a.len()
    }

    pub fn posterior_mean(&self, arm: usize) -> f64 {
        self.a[arm] / (self.a[arm] + self.b[arm])
    }
}

/// Adds `rate` to `a[arm]` and `1 − rate` to `b[arm]`.
pub fn update_beta(mut state: BetaBanditState, arm: usize, rate: f64) -> Result<BetaBanditState> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidParameter(format!(
            "success rate {rate} outside [0, 1]"
        )));
    }
    if arm >= state.n_arms() {
        return Err(Error::GoalOutOfRange {
            index: arm,
            n_goals: state.n_arms(),
        });
    }
    state.a[arm] += rate;
    state.b[arm] += 1.0 - rate;
    Ok(state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThompsonResult {
    pub frequencies: Vec<f64>,
    pub log: SelectionLog,
    pub state: BetaBanditState,
}

/// Thompson sampling over the arms labelled by `epsilons` for `n` meta-episodes.
///
/// Posterior draws use stream 0 under `seed`, oracle plays stream 1, so the
/// selection sequence depends only on `(seed, oracle)`. Ties in the sampled
/// values go to the lower arm index.
pub fn thompson_run(
    epsilons: &[f64],
    oracle: &mut dyn RewardOracle,
    n: usize,
    seed: u64,
    signal: RewardSignal,
) -> Result<ThompsonResult> {
    check_arms(epsilons, oracle)?;
    signal.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter(
            "need at least one meta-episode".into(),
        ));
    }
    let mut pick_rng = stream_rng(seed, 0);
    let mut play_rng = stream_rng(seed, 1);
    let mut state = BetaBanditState::new(epsilons.len());
    let mut log = SelectionLog::default();
    for t in 0..n {
        let arm = if state.n_arms() == 1 {
            0
        } else {
            let mut best = (0, f64::NEG_INFINITY);
            for i in 0..state.n_arms() {
                let theta = Beta::new(state.a[i], state.b[i])
                    .expect("beta parameters stay >= 1")
                    .sample(&mut pick_rng);
                if theta > best.1 {
                    best = (i, theta);
                }
            }
            best.0
        };
        let out = oracle.play(arm, &mut play_rng);
        state = update_beta(state, arm, signal.statistic(&out))?;
        log.records.push(SelectionRecord {
            meta_episode: t,
            arm,
            epsilon: epsilons[arm],
            ret: out.ret,
            success_rate: out.success_rate,
        });
    }
    Ok(ThompsonResult {
        frequencies: log.frequencies(epsilons.len()),
        log,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selector::{bandit_regret, BernoulliArms};
    use proptest::prelude::*;

    #[test]
    fn update_examples() {
        let s = update_beta(BetaBanditState::new(2), 1, 1.0).unwrap();
        assert_eq!((s.a[1], s.b[1]), (2.0, 1.0));
        let s = update_beta(s, 1, 0.5).unwrap();
        assert_eq!((s.a[1], s.b[1]), (2.5, 1.5));
        let s = update_beta(s, 0, 0.0).unwrap();
        assert_eq!((s.a[0], s.b[0]), (1.0, 2.0));
        assert!(update_beta(s.clone(), 0, 1.5).is_err());
        assert!(update_beta(s, 0, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn posteriors_only_grow(updates in prop::collection::vec((0usize..3, 0.0f64..=1.0), 1..100)) {
            let mut s = BetaBanditState::new(3);
            for (arm, rate) in updates {
                let before = s.clone();
                s = update_beta(s, arm, rate).unwrap();
                prop_assert!((s.a[arm] + s.b[arm] - before.a[arm] - before.b[arm] - 1.0).abs() < 1e-12);
                for i in 0..3 {
                    prop_assert!(s.a[i] >= before.a[i] && s.b[i] >= before.b[i]);
                }
            }
        }
    }

    #[test]
    fn single_arm_always_played() {
        let mut o = BernoulliArms { means: vec![0.3] };
        let r = thompson_run(&[0.0], &mut o, 40, 1, RewardSignal::SuccessRate).unwrap();
        assert!(r.log.arms().all(|a| a == 0));
        assert_eq!(r.frequencies, vec![1.0]);
    }

    #[test]
    fn separated_arms_concentrate() {
        let mut late = 0.0;
        let mut regret = 0.0;
        let (mut early_avg, mut late_avg) = (0.0, 0.0);
        for seed in 0..20 {
            let mut o = BernoulliArms {
                means: vec![0.9, 0.1],
            };
            let r =
                thompson_run(&[0.0, 0.1], &mut o, 250, seed, RewardSignal::SuccessRate).unwrap();
            late += r.log.records[200..].iter().filter(|x| x.arm == 0).count() as f64 / 50.0 / 20.0;
            regret += bandit_regret(&r.log, &o.means).unwrap() / 20.0;
            let c = r.log.cumulative_regret(&o.means).unwrap();
            early_avg += c[124] / 125.0 / 20.0;
            late_avg += (c[249] - c[124]) / 125.0 / 20.0;
        }
        assert!(late >= 0.9, "late pick rate {late}");
        assert!(regret <= 0.25 * 250.0);
        assert!(late_avg <= early_avg);
    }

    #[test]
    fn replay_is_identical() {
        let run = || {
            let mut o = BernoulliArms {
                means: vec![0.4, 0.6, 0.5],
            };
            thompson_run(&[0.0, 0.1, 0.2], &mut o, 100, 5, RewardSignal::SuccessRate).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_mismatched_oracle() {
        let mut o = BernoulliArms { means: vec![0.4] };
        assert!(thompson_run(&[0.0, 0.1], &mut o, 10, 0, RewardSignal::SuccessRate).is_err());
        assert!(thompson_run(&[0.0], &mut o, 0, 0, RewardSignal::SuccessRate).is_err());
    }
}
