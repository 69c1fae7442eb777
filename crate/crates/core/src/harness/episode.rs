use super::env::EnvSpec;
use super::sampler::{Task, TaskSampler};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng};
use crate::selector::{Outcome, RewardOracle};
use crate::task::{GoalPolicy, SearchPolicy};
use crate::trainer::adversary::sample_index;
use crate::trainer::Objective;

#[derive(Debug, Clone, PartialEq)]
pub struct MetaEpisodeResult {
    /// One return per episode.
    pub returns: Vec<f64>,
    pub episode_success: Vec<bool>,
    pub success: bool,
    /// Cell where the goal was found.
    pub found: Option<usize>,
}

impl MetaEpisodeResult {
    pub fn total_return(&self) -> f64 {
        self.returns.iter().sum()
    }

    pub fn success_rate(&self) -> f64 {
        self.episode_success.iter().filter(|&&s| s).count() as f64
            / self.episode_success.len() as f64
    }
}

/// Runs `k` episodes of goal search on one task.
///
/// Each episode before discovery visits a cell drawn from the policy; the
/// episode succeeds if that cell holds the true target, and every later
/// episode returns to it. Targets outside the grid are never found.
pub fn run_meta_episode_with(
    policy: &dyn GoalPolicy,
    spec: &EnvSpec,
    task: &Task,
    rng: &mut StreamRng,
) -> Result<MetaEpisodeResult> {
    if policy.n_goals() != spec.grid.n_cells() {
        return Err(Error::LengthMismatch {
            expected: spec.grid.n_cells(),
            got: policy.n_goals(),
        });
    }
    let k = spec.env.k();
    let truth = spec.grid.cell(&task.target);
    let mut found = None;
    let mut returns = Vec::with_capacity(k);
    let mut episode_success = Vec::with_capacity(k);
    for _ in 0..k {
        let visited = match found {
            Some(c) => c,
            None => {
                let c = sample_index(policy.probs(), rng);
                if Some(c) == truth {
                    found = Some(c);
                }
                c
            }
        };
        let hit = found.is_some();
        episode_success.push(hit);
        returns.push(if spec.dense {
            spec.dense_return(visited, &task.target)
        } else {
            f64::from(hit)
        });
    }
    Ok(MetaEpisodeResult {
        returns,
        episode_success,
        success: found.is_some(),
        found,
    })
}

/// [`run_meta_episode_with`] on stream 0 under `seed`.
pub fn run_meta_episode(
    policy: &dyn GoalPolicy,
    spec: &EnvSpec,
    task: &Task,
    seed: u64,
) -> Result<MetaEpisodeResult> {
    run_meta_episode_with(policy, spec, task, &mut stream_rng(seed, 0))
}

/// Expected meta-episode success rate of `policy` on tasks from `sampler`.
pub fn expected_success_rate(
    policy: &dyn GoalPolicy,
    spec: &EnvSpec,
    sampler: &TaskSampler,
) -> f64 {
    let (cells, _) = sampler.cell_probs(&spec.grid);
    let obj = Objective::Success { k: spec.env.k() };
    cells
        .iter()
        .zip(policy.probs())
        .map(|(w, &p)| w * obj.value(p))
        .sum()
}

/// Each arm is a population member; each play samples a fresh task.
#[derive(Debug, Clone)]
pub struct PopulationOracle<'a> {
    pub policies: Vec<&'a SearchPolicy>,
    pub spec: EnvSpec,
    pub sampler: TaskSampler,
}

impl RewardOracle for PopulationOracle<'_> {
    fn n_arms(&self) -> usize {
        self.policies.len()
    }

    fn play(&mut self, arm: usize, rng: &mut StreamRng) -> Outcome {
        let task = self.sampler.sample_with(rng);
        let r = run_meta_episode_with(self.policies[arm], &self.spec, &task, rng)
            .expect("population policies match the grid");
        Outcome {
            ret: r.total_return(),
            success_rate: r.success_rate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::env::{Env, PointNavEnv};
    use crate::harness::grid::PolarGrid;
    use crate::harness::sampler::RadialLaw;
    use crate::task::CategoricalTaskDist;

    fn spec() -> EnvSpec {
        EnvSpec::new(
            Env::Point(PointNavEnv::default()),
            PolarGrid::new(2, 4, 1.0).unwrap(),
        )
    }

    #[test]
    fn point_mass_on_goal_succeeds_at_once() {
        let s = spec();
        let task = Task { target: [0.7, 0.1] };
        let c = s.grid.cell(&task.target).unwrap();
        let pol = CategoricalTaskDist::point_mass(8, c).unwrap();
        let r = run_meta_episode(&pol, &s, &task, 0).unwrap();
        assert_eq!(r.returns, vec![1.0, 1.0]);
        assert_eq!(r.found, Some(c));
    }

    #[test]
    fn unreachable_goal_fails() {
        let s = spec();
        let pol = SearchPolicy::uniform(8).unwrap();
        let r = run_meta_episode(&pol, &s, &Task { target: [2.0, 0.0] }, 0).unwrap();
        assert!(!r.success && r.found.is_none());
        assert_eq!(r.returns, vec![0.0, 0.0]);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let pol = SearchPolicy::uniform(5).unwrap();
        assert!(run_meta_episode(&pol, &spec(), &Task { target: [0.0, 0.0] }, 0).is_err());
    }

    #[test]
    fn uniform_search_success_matches_geometric_law() {
        let s = spec();
        let g: f64 = 8.0;
        let pol = SearchPolicy::uniform(8).unwrap();
        let task = Task { target: [0.2, 0.3] };
        let mut rng = stream_rng(11, 0);
        let n = 100_000;
        let mut hits = 0.0;
        for _ in 0..n {
            hits += f64::from(
                run_meta_episode_with(&pol, &s, &task, &mut rng)
                    .unwrap()
                    .success,
            );
        }
        let p = 1.0 - (1.0 - 1.0 / g).powi(2);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() <= 3.0 * se);
    }

    #[test]
    fn search_success_matches_product_formula() {
        let s = spec();
        let pol = SearchPolicy::from_probs(&[0.3, 0.05, 0.05, 0.1, 0.2, 0.1, 0.1, 0.1]).unwrap();
        let task = Task {
            target: [0.1, 0.05],
        };
        let c = s.grid.cell(&task.target).unwrap();
        let p = 1.0 - (1.0 - pol.probs()[c]).powi(2);
        let mut rng = stream_rng(12, 0);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| {
                run_meta_episode_with(&pol, &s, &task, &mut rng)
                    .unwrap()
                    .success
            })
            .count();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() <= 3.0 * se);
    }

    #[test]
    fn expected_rate_matches_oracle_average() {
        let s = spec();
        let sampler = TaskSampler::new(RadialLaw::Uniform { lo: 0.0, hi: 0.8 }).unwrap();
        let pol = SearchPolicy::from_probs(&[0.2, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]).unwrap();
        let want = expected_success_rate(&pol, &s, &sampler);
        let mut oracle = PopulationOracle {
            policies: vec![&pol],
            spec: s,
            sampler,
        };
        let mut rng = stream_rng(13, 0);
        let n = 50_000;
        let got = (0..n)
            .map(|_| oracle.play(0, &mut rng).success_rate)
            .sum::<f64>()
            / n as f64;
        assert!((got - want).abs() < 4.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn dense_returns_track_distance() {
        let mut s = spec();
        s.dense = true;
        let task = Task { target: [0.3, 0.2] };
        let c = s.grid.cell(&task.target).unwrap();
        let pol = CategoricalTaskDist::point_mass(8, c).unwrap();
        let r = run_meta_episode(&pol, &s, &task, 0).unwrap();
        assert!(r
            .returns
            .iter()
            .all(|&x| x <= 0.0 && x == s.dense_return(c, &task.target)));
        assert!(r.success);
    }
}
