//! Meta-policy objectives and the policy ascent step.
//!
//! Given the distribution of task cells a batch induces, the tabular
//! policy's expected return is available in closed form, so the ascent step
//! uses the exact gradient through the softmax and backtracks until the
//! objective does not decrease.

use crate::task::{GoalPolicy, SearchPolicy};

/// Per-task return of a tabular search policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `−1/π(g)`: minus the expected number of episodes to find the goal.
    Regret,
    /// Mean success over `k` episodes, `(1/k) Σ_{i≤k} [1 − (1 − π(g))^i]`.
    Success { k: usize },
}

impl Objective {
    /// Return on a task whose goal cell the policy visits with probability `p`.
    pub fn value(self, p: f64) -> f64 {
        match self {
            Objective::Regret => -1.0 / p,
            Objective::Success { k } => {
                let miss = 1.0 - p;
                (1..=k).map(|i| 1.0 - miss.powi(i as i32)).sum::<f64>() / k as f64
            }
        }
    }

    /// `d value / d p`.
    pub fn derivative(self, p: f64) -> f64 {
        match self {
            Objective::Regret => 1.0 / (p * p),
            Objective::Success { k } => {
                let miss = 1.0 - p;
                (1..=k)
                    .map(|i| i as f64 * miss.powi(i as i32 - 1))
                    .sum::<f64>()
                    / k as f64
            }
        }
    }
}

/// `Σ_c w_c · value(π_c)` for non-negative cell weights `w`.
pub fn policy_objective(probs: &[f64], cell_weights: &[f64], objective: Objective) -> f64 {
    probs
        .iter()
        .zip(cell_weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(p, w)| w * objective.value(*p))
        .sum()
}

/// Gradient of [`policy_objective`] with respect to the logits:
/// `w_j v'(π_j) π_j − π_j Σ_c w_c v'(π_c) π_c`.
pub fn policy_gradient(probs: &[f64], cell_weights: &[f64], objective: Objective) -> Vec<f64> {
    let a: Vec<f64> = probs
        .iter()
        .zip(cell_weights)
        .map(|(p, w)| {
            if *w > 0.0 {
                w * objective.derivative(*p) * p
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = a.iter().sum();
    a.iter().zip(probs).map(|(aj, p)| aj - p * total).collect()
}

/// One ascent step on `policy_objective` for fixed cell weights.
///
/// The step is halved (up to 30 times) until the objective does not
/// decrease; if no trial step qualifies the policy is returned unchanged.
pub fn meta_policy_step(
    policy: &SearchPolicy,
    cell_weights: &[f64],
    objective: Objective,
    step: f64,
) -> SearchPolicy {
    if step <= 0.0 {
        return policy.clone();
    }
    let before = policy_objective(policy.probs(), cell_weights, objective);
    let grad = policy_gradient(policy.probs(), cell_weights, objective);
    let mut alpha = step;
    for _ in 0..30 {
        let logits: Vec<f64> = policy
            .logits()
            .iter()
            .zip(&grad)
            .map(|(l, g)| l + alpha * g)
            .collect();
        if let Ok(next) = SearchPolicy::from_logits(logits) {
            if policy_objective(next.probs(), cell_weights, objective) >= before {
                return next;
            }
        }
        alpha *= 0.5;
    }
    policy.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::optimal_policy;
    use crate::models::reward::tests::fd_rel_error;
    use crate::rng::stream_rng;
    use crate::task::{tv_distance, CategoricalTaskDist};
    use rand::Rng;

    #[test]
    fn success_value_matches_hand_count() {
        let o = Objective::Success { k: 2 };
        assert!((o.value(0.5) - (0.5 + 0.75) / 2.0).abs() < 1e-15);
        assert_eq!(o.value(1.0), 1.0);
        assert_eq!(Objective::Regret.value(0.25), -4.0);
    }

    #[test]
    fn zero_step_keeps_policy() {
        let p = SearchPolicy::from_logits(vec![0.1, -0.3, 0.7]).unwrap();
        assert_eq!(
            meta_policy_step(&p, &[0.2, 0.3, 0.5], Objective::Regret, 0.0),
            p
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = stream_rng(12, 0);
        for obj in [
            Objective::Regret,
            Objective::Success { k: 2 },
            Objective::Success { k: 5 },
        ] {
            for _ in 0..20 {
                let n = rng.random_range(2..7);
                let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let p = SearchPolicy::from_logits(logits.clone()).unwrap();
                let g = policy_gradient(p.probs(), &w, obj);
                let f = |l: &[f64]| {
                    let q = SearchPolicy::from_logits(l.to_vec()).unwrap();
                    policy_objective(q.probs(), &w, obj)
                };
                assert!(fd_rel_error(f, &logits, &g, 1e-6) <= 1e-5);
            }
        }
    }

    #[test]
    fn exact_ascent_is_monotone_and_reaches_optimum() {
        let mut rng = stream_rng(13, 0);
        for _ in 0..10 {
            let n = rng.random_range(2..7);
            let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let q = CategoricalTaskDist::from_masses(&q).unwrap();
            let mut pi = SearchPolicy::uniform(n).unwrap();
            let mut last = policy_objective(pi.probs(), q.probs(), Objective::Regret);
            for _ in 0..5000 {
                pi = meta_policy_step(&pi, q.probs(), Objective::Regret, 0.5);
                let now = policy_objective(pi.probs(), q.probs(), Objective::Regret);
                assert!(now >= last);
                last = now;
            }
            let star = optimal_policy(&q);
            assert!(tv_distance(pi.probs(), star.probs()).unwrap() <= 0.01);
        }
    }
}
