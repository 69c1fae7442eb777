//! Closed forms for the tabular search family.
//!
//! A search policy `π` visits goal `g` with probability `π(g)` per episode, so
//! its regret on `g` is `1/π(g)`. Against a concentrated training
//! distribution `(1-β) U(S₀) + β U(S₁)` and a total-variation uncertainty
//! set of radius `ε`, the robust policy, the adversary's shift and the cost
//! of picking the wrong radius all have closed forms, collected here. The
//! [`brute`] submodule holds grid oracles for each of them.

pub mod brute;

use crate::error::{Error, Result};
use crate::task::{
    make_concentrated, CategoricalTaskDist, ClosedFormPolicy, GoalPolicy, GoalSpace,
};

pub use brute::{
    brute_force_kl_robust_policy, brute_force_optimal_policy, brute_force_robust_policy,
    brute_force_worst_case, kl_worst_case, tv_worst_case, BRUTE_FORCE_MAX_GOALS,
};

/// A concentrated training distribution together with a robustness radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustSetup {
    pub space: GoalSpace,
    pub beta: f64,
    pub epsilon: f64,
}

impl RobustSetup {
    pub fn new(space: GoalSpace, beta: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        make_concentrated(space, beta)?;
        Ok(Self {
            space,
            beta,
            epsilon,
        })
    }

    /// Same space and concentration at another radius.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.space, self.beta, epsilon)
    }

    /// The training distribution `p_D`.
    pub fn train_dist(&self) -> CategoricalTaskDist {
        make_concentrated(self.space, self.beta).expect("validated on construction")
    }
}

/// Expected and per-goal regret of a policy under a task distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub expected_regret: f64,
    pub per_goal_regret: Vec<f64>,
}

/// `1/π(goal)`; infinite when the policy never visits the goal.
pub fn task_regret<P: GoalPolicy + ?Sized>(policy: &P, goal: usize) -> Result<f64> {
    let probs = policy.probs();
    let p = *probs.get(goal).ok_or(Error::GoalOutOfRange {
        index: goal,
        n_goals: probs.len(),
    })?;
    Ok(if p > 0.0 { 1.0 / p } else { f64::INFINITY })
}

/// `E_{g~q}[1/π(g)]`. Goals with zero task mass contribute nothing even if
/// their regret is infinite.
pub fn expected_regret<P: GoalPolicy + ?Sized>(policy: &P, dist: &[f64]) -> Result<RegretReport> {
    let probs = policy.probs();
    if probs.len() != dist.len() {
        return Err(Error::LengthMismatch {
            expected: probs.len(),
            got: dist.len(),
        });
    }
    let per_goal_regret: Vec<f64> = probs
        .iter()
        .map(|&p| if p > 0.0 { 1.0 / p } else { f64::INFINITY })
        .collect();
    let expected_regret = regret_value(probs, dist);
    Ok(RegretReport {
        expected_regret,
        per_goal_regret,
    })
}

/// Unchecked `Σ q(g)/π(g)` over the support of `q`.
pub(crate) fn regret_value(policy: &[f64], dist: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&p, &q) in policy.iter().zip(dist) {
        if q > 0.0 {
            if p <= 0.0 {
                return f64::INFINITY;
            }
            total += q / p;
        }
    }
    total
}

/// Regret-minimizing policy for a known task distribution: `π*(g) ∝ √q(g)`.
pub fn optimal_policy(dist: &CategoricalTaskDist) -> ClosedFormPolicy {
    let roots: Vec<f64> = dist.probs().iter().map(|q| q.sqrt()).collect();
    ClosedFormPolicy::from_masses(&roots).expect("a distribution has positive mass")
}

/// Effective shift `ε̄ = min(ε + β, 1 − |S₀|/|S|)`.
pub fn epsilon_bar(setup: &RobustSetup) -> f64 {
    (setup.epsilon + setup.beta).min(setup.space.max_beta())
}

/// The ε-robust policy: per-goal mass `√((1−ε̄)/|S₀|)` on the core and
/// `√(ε̄/|S₁|)` elsewhere, normalized.
pub fn robust_policy(setup: &RobustSetup) -> ClosedFormPolicy {
    piecewise_policy(setup.space, epsilon_bar(setup))
}

pub(crate) fn piecewise_policy(space: GoalSpace, eps_bar: f64) -> ClosedFormPolicy {
    let core = ((1.0 - eps_bar) / space.n_core() as f64).sqrt();
    let outer = if space.n_outer() == 0 {
        0.0
    } else {
        (eps_bar / space.n_outer() as f64).sqrt()
    };
    let masses: Vec<f64> = (0..space.n_goals())
        .map(|g| if space.is_core(g) { core } else { outer })
        .collect();
    ClosedFormPolicy::from_masses(&masses).expect("core mass is positive")
}

/// The adversary's shift inside the TV ball of radius `epsilon` around a
/// concentrated `p_d`: `q^ε = (1−ε̄) U(S₀) + ε̄ U(S₁)`.
///
/// This maximizes the regret of any policy that is constant on `S₀` and on
/// `S₁` with less mass per outer goal than per core goal, the robust
/// policies included.
pub fn worst_case_shift(
    p_d: &CategoricalTaskDist,
    epsilon: f64,
    n_core: usize,
) -> Result<CategoricalTaskDist> {
    let space = GoalSpace::new(p_d.len(), n_core)?;
    let beta: f64 = p_d.probs()[n_core..].iter().sum();
    let expected = make_concentrated(space, beta.min(space.max_beta()))?;
    if p_d
        .probs()
        .iter()
        .zip(expected.probs())
        .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::InvalidDistribution(
            "training distribution is not constant on the core and outer sets".into(),
        ));
    }
    let setup = RobustSetup::new(space, beta.min(space.max_beta()), epsilon)?;
    make_concentrated(space, epsilon_bar(&setup))
}

/// Which robustness level sits on the boundary of the mismatch factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySide {
    /// `ε̄₁ = 0`: the test shift has no outer mass.
    First,
    /// `ε̄₂ = 0`: the deployed policy never visits outer goals.
    Second,
    Both,
}

/// Excess regret of deploying `π^{ε₂}` when the test shift is `q^{ε₁}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExcessRegret {
    /// Both effective shifts in `(0, 1)`: `(c + 1/c − 2)·√(ε̄₁(1−ε̄₁)|S₀||S₁|)`.
    Interior(f64),
    /// The mismatch factor is undefined; `value` is the limit of the regret
    /// difference (possibly `+∞`).
    Boundary { side: BoundarySide, value: f64 },
}

impl ExcessRegret {
    pub fn value(self) -> f64 {
        match self {
            ExcessRegret::Interior(v) => v,
            ExcessRegret::Boundary { value, .. } => value,
        }
    }
}

/// Mismatch factor `c = √((1/ε̄₂ − 1)/(1/ε̄₁ − 1))` for `ε̄₁, ε̄₂ ∈ (0, 1)`.
pub fn mismatch_factor(eps_bar1: f64, eps_bar2: f64) -> f64 {
    ((1.0 / eps_bar2 - 1.0) / (1.0 / eps_bar1 - 1.0)).sqrt()
}

/// `Regret(π^{ε₂}, q^{ε₁}) − Regret(π^{ε₁}, q^{ε₁})` in closed form.
pub fn excess_regret(space: GoalSpace, beta: f64, eps1: f64, eps2: f64) -> Result<ExcessRegret> {
    let e1 = epsilon_bar(&RobustSetup::new(space, beta, eps1)?);
    let e2 = epsilon_bar(&RobustSetup::new(space, beta, eps2)?);
    let n0 = space.n_core() as f64;
    let n1 = space.n_outer() as f64;
    Ok(match (e1 > 0.0, e2 > 0.0) {
        (true, true) => {
            let c = mismatch_factor(e1, e2);
            ExcessRegret::Interior((c + 1.0 / c - 2.0) * (e1 * (1.0 - e1) * n0 * n1).sqrt())
        }
        (true, false) => ExcessRegret::Boundary {
            side: BoundarySide::Second,
            value: f64::INFINITY,
        },
        // q^{ε₁} is uniform on the core; π^{ε₂} wastes outer mass on it.
        (false, true) => ExcessRegret::Boundary {
            side: BoundarySide::First,
            value: (n0 * n1 * e2 / (1.0 - e2)).sqrt(),
        },
        (false, false) => ExcessRegret::Boundary {
            side: BoundarySide::Both,
            value: 0.0,
        },
    })
}

/// `(1−ε̄)|S₀| + ε̄|S₁| + 2√(ε̄(1−ε̄)|S₀||S₁|)`, the regret of `π^ε` on `q^ε`.
pub fn robust_regret(space: GoalSpace, eps_bar: f64) -> f64 {
    let n0 = space.n_core() as f64;
    let n1 = space.n_outer() as f64;
    (1.0 - eps_bar) * n0 + eps_bar * n1 + 2.0 * (eps_bar * (1.0 - eps_bar) * n0 * n1).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::task::SearchPolicy;
    use proptest::prelude::*;
    use rand::Rng;

    fn space(n: usize, n0: usize) -> GoalSpace {
        GoalSpace::new(n, n0).unwrap()
    }

    #[test]
    fn task_regret_examples() {
        let p = ClosedFormPolicy::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert_eq!(task_regret(&p, 0).unwrap(), 2.0);
        assert_eq!(task_regret(&p, 2).unwrap(), f64::INFINITY);
        assert!(matches!(
            task_regret(&p, 3),
            Err(Error::GoalOutOfRange { .. })
        ));
        let u = SearchPolicy::uniform(10).unwrap();
        assert!((task_regret(&u, 7).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn expected_regret_examples() {
        let u = SearchPolicy::uniform(4).unwrap();
        let r = expected_regret(&u, &[0.25; 4]).unwrap();
        assert!((r.expected_regret - 4.0).abs() < 1e-12);
        let p = ClosedFormPolicy::new(vec![0.2, 0.8]).unwrap();
        assert!((expected_regret(&p, &[0.0, 1.0]).unwrap().expected_regret - 1.25).abs() < 1e-15);
        let zero = ClosedFormPolicy::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(
            expected_regret(&zero, &[1.0, 0.0]).unwrap().expected_regret,
            1.0
        );
        assert_eq!(
            expected_regret(&zero, &[0.5, 0.5]).unwrap().expected_regret,
            f64::INFINITY
        );
        assert!(expected_regret(&zero, &[1.0]).is_err());
    }

    #[test]
    fn robust_regret_on_own_shift() {
        let s = space(10, 2);
        let pi = piecewise_policy(s, 0.25);
        let q = make_concentrated(s, 0.25).unwrap();
        let direct = expected_regret(&pi, q.probs()).unwrap().expected_regret;
        let formula = 1.5 + 2.0 + 2.0 * 3f64.sqrt();
        assert!((robust_regret(s, 0.25) - formula).abs() < 1e-12);
        assert!((direct - formula).abs() < 1e-12);
        assert!((direct - 6.964_101_615_137_754).abs() < 1e-9);
    }

    #[test]
    fn optimal_policy_examples() {
        let u = optimal_policy(&CategoricalTaskDist::uniform(5).unwrap());
        assert!(u.probs().iter().all(|p| (p - 0.2).abs() < 1e-15));
        let p = optimal_policy(&CategoricalTaskDist::new(vec![0.64, 0.36]).unwrap());
        assert!((p.probs()[0] - 4.0 / 7.0).abs() < 1e-15);
        assert!((p.probs()[1] - 3.0 / 7.0).abs() < 1e-15);
        let d = optimal_policy(&CategoricalTaskDist::new(vec![1.0, 0.0]).unwrap());
        assert_eq!(d.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn optimal_policy_matches_fine_line_search() {
        // E[1/π] on the 1-simplex at resolution 1e-4.
        let q = [0.64, 0.36];
        let best = (1..10_000)
            .map(|i| i as f64 * 1e-4)
            .min_by(|a, b| {
                let f = |x: f64| q[0] / x + q[1] / (1.0 - x);
                f(*a).partial_cmp(&f(*b)).unwrap()
            })
            .unwrap();
        assert!((best - 4.0 / 7.0).abs() <= 1e-4);
    }

    #[test]
    fn epsilon_bar_examples() {
        let s = space(10, 2);
        assert_eq!(epsilon_bar(&RobustSetup::new(s, 0.05, 0.2).unwrap()), 0.25);
        assert!((epsilon_bar(&RobustSetup::new(s, 0.05, 0.9).unwrap()) - 0.8).abs() < 1e-15);
        assert_eq!(epsilon_bar(&RobustSetup::new(s, 0.0, 0.0).unwrap()), 0.0);
        assert!(RobustSetup::new(s, 0.05, -0.1).is_err());
        assert!(RobustSetup::new(s, 0.9, 0.1).is_err());
    }

    #[test]
    fn robust_policy_examples() {
        let s = space(10, 2);
        let capped = robust_policy(&RobustSetup::new(s, 0.05, 5.0).unwrap());
        assert!(capped.probs().iter().all(|p| (p - 0.1).abs() < 1e-15));
        let core_only = robust_policy(&RobustSetup::new(s, 0.0, 0.0).unwrap());
        assert_eq!(&core_only.probs()[..2], &[0.5, 0.5]);
        assert!(core_only.probs()[2..].iter().all(|p| *p == 0.0));
        let pi = robust_policy(&RobustSetup::new(s, 0.05, 0.2).unwrap());
        let z = 2.0 * (0.75f64 / 2.0).sqrt() + 8.0 * (0.25f64 / 8.0).sqrt();
        assert!((z - 2.638_958_434_0).abs() < 1e-9);
        assert!((pi.probs()[0] - 0.232_050_807_568_877_3).abs() < 1e-12);
        assert!((pi.probs()[9] - 0.066_987_298_107_780_68).abs() < 1e-12);
    }

    #[test]
    fn worst_case_shift_examples() {
        let s = space(10, 2);
        let p_d = make_concentrated(s, 0.05).unwrap();
        let same = worst_case_shift(&p_d, 0.0, 2).unwrap();
        assert!(crate::task::tv_distance(same.probs(), p_d.probs()).unwrap() < 1e-15);
        let q = worst_case_shift(&p_d, 0.2, 2).unwrap();
        assert!((q.probs()[0] - 0.375).abs() < 1e-15);
        assert!(q.probs()[2..].iter().all(|x| (x - 0.03125).abs() < 1e-15));
        let tv = crate::task::tv_distance(p_d.probs(), q.probs()).unwrap();
        assert!(tv <= 0.2 + 1e-12);
        let lumpy = CategoricalTaskDist::new(vec![0.6, 0.3, 0.1]).unwrap();
        assert!(worst_case_shift(&lumpy, 0.1, 2).is_err());
    }

    #[test]
    fn worked_excess_regret() {
        let s = space(10, 2);
        let e = excess_regret(s, 0.05, 0.2, 0.0).unwrap();
        let c = mismatch_factor(0.25, 0.05);
        assert!((c - (19.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((e.value() - 1.583_044_530_014_604_5).abs() < 1e-12);
        let q = make_concentrated(s, 0.25).unwrap();
        let direct = expected_regret(&piecewise_policy(s, 0.05), q.probs())
            .unwrap()
            .expected_regret
            - expected_regret(&piecewise_policy(s, 0.25), q.probs())
                .unwrap()
                .expected_regret;
        assert!((e.value() - direct).abs() < 1e-12);
    }

    #[test]
    fn excess_regret_boundaries() {
        let s = space(10, 2);
        assert_eq!(
            excess_regret(s, 0.05, 0.3, 0.3).unwrap(),
            ExcessRegret::Interior(0.0)
        );
        assert_eq!(
            excess_regret(s, 0.0, 0.2, 0.0).unwrap(),
            ExcessRegret::Boundary {
                side: BoundarySide::Second,
                value: f64::INFINITY
            }
        );
        assert_eq!(
            excess_regret(s, 0.0, 0.0, 0.0).unwrap(),
            ExcessRegret::Boundary {
                side: BoundarySide::Both,
                value: 0.0
            }
        );
        // ε̄₁ = 0: compare the limit with the direct difference.
        let e = excess_regret(s, 0.0, 0.0, 0.2).unwrap();
        assert!(matches!(
            e,
            ExcessRegret::Boundary {
                side: BoundarySide::First,
                ..
            }
        ));
        let q = make_concentrated(s, 0.0).unwrap();
        let direct = expected_regret(&piecewise_policy(s, 0.2), q.probs())
            .unwrap()
            .expected_regret
            - expected_regret(&piecewise_policy(s, 0.0), q.probs())
                .unwrap()
                .expected_regret;
        assert!((e.value() - direct).abs() < 1e-12);
    }

    #[test]
    fn robust_policy_beats_perturbations_on_its_shift() {
        let mut rng = stream_rng(3, 1);
        for _ in 0..40 {
            let n = rng.random_range(2..9);
            let n0 = rng.random_range(1..n);
            let s = space(n, n0);
            let beta = rng.random::<f64>() * s.max_beta();
            let eps = rng.random::<f64>() * 0.5;
            let setup = RobustSetup::new(s, beta, eps).unwrap();
            let pi = robust_policy(&setup);
            let q = worst_case_shift(&setup.train_dist(), eps, n0).unwrap();
            let base = expected_regret(&pi, q.probs()).unwrap().expected_regret;
            for _ in 0..100 {
                let masses: Vec<f64> = pi
                    .probs()
                    .iter()
                    .map(|p| (p * (1.0 + 0.3 * (rng.random::<f64>() - 0.5))).max(1e-9))
                    .collect();
                let other = ClosedFormPolicy::from_masses(&masses).unwrap();
                let r = expected_regret(&other, q.probs()).unwrap().expected_regret;
                assert!(base <= r + 1e-9);
            }
        }
    }

    #[test]
    fn optimal_policy_beats_random_policies() {
        let mut rng = stream_rng(4, 1);
        for _ in 0..500 {
            let n = rng.random_range(1..7);
            let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let q = CategoricalTaskDist::from_masses(&q).unwrap();
            let star = optimal_policy(&q);
            let best = expected_regret(&star, q.probs()).unwrap().expected_regret;
            for _ in 0..100 {
                let m: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-6).collect();
                let pi = ClosedFormPolicy::from_masses(&m).unwrap();
                let r = expected_regret(&pi, q.probs()).unwrap().expected_regret;
                let tv = crate::task::tv_distance(pi.probs(), star.probs()).unwrap();
                assert!(best <= r + 1e-12);
                if tv > 1e-6 {
                    assert!(best < r);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn excess_regret_identity(
            n in 2usize..16, frac in 0.0f64..1.0,
            b in 0.0f64..1.0, e1 in 0.0f64..1.0, e2 in 0.0f64..1.0,
        ) {
            let n0 = ((n as f64 * frac) as usize).clamp(1, n - 1);
            let s = space(n, n0);
            let beta = b * s.max_beta() * 0.5;
            let (eps1, eps2) = (e1 * s.max_beta(), e2 * s.max_beta());
            let bar = |e: f64| epsilon_bar(&RobustSetup::new(s, beta, e).unwrap());
            prop_assume!(bar(eps1) > 0.0 && bar(eps2) > 0.0);
            let q = make_concentrated(s, bar(eps1)).unwrap();
            let direct = expected_regret(&piecewise_policy(s, bar(eps2)), q.probs()).unwrap().expected_regret
                - expected_regret(&piecewise_policy(s, bar(eps1)), q.probs()).unwrap().expected_regret;
            let e = excess_regret(s, beta, eps1, eps2).unwrap().value();
            prop_assert!(e >= 0.0);
            prop_assert!((e - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
        }

        #[test]
        fn mismatch_factor_symmetry(a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let c = mismatch_factor(a, b);
            prop_assert!((c * mismatch_factor(b, a) - 1.0).abs() < 1e-12);
            let f = |c: f64| c + 1.0 / c - 2.0;
            prop_assert!((f(c) - f(1.0 / c)).abs() < 1e-9);
        }

        #[test]
        fn robust_policies_grow_more_conservative(
            n in 2usize..12, frac in 0.0f64..1.0, b in 0.0f64..1.0,
        ) {
            let n0 = ((n as f64 * frac) as usize).clamp(1, n - 1);
            let s = space(n, n0);
            let beta = b * s.max_beta();
            let p_d = make_concentrated(s, beta).unwrap();
            let mut last = 0.0;
            for i in 0..=20 {
                let setup = RobustSetup::new(s, beta, i as f64 * 0.05).unwrap();
                let r = expected_regret(&robust_policy(&setup), p_d.probs()).unwrap().expected_regret;
                prop_assert!(r >= last - 1e-12);
                last = r;
            }
        }

        #[test]
        fn worst_case_shift_stays_in_ball(
            n in 2usize..12, frac in 0.0f64..1.0, b in 0.0f64..1.0, eps in 0.0f64..1.5,
        ) {
            let n0 = ((n as f64 * frac) as usize).clamp(1, n - 1);
            let s = space(n, n0);
            let p_d = make_concentrated(s, b * s.max_beta()).unwrap();
            let q = worst_case_shift(&p_d, eps, n0).unwrap();
            prop_assert!(crate::task::tv_distance(p_d.probs(), q.probs()).unwrap() <= eps + 1e-12);
        }
    }
}
