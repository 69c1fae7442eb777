//! Goal spaces, task distributions, divergences and the tabular meta-policy
//! family shared by the rest of the crate.
//!
//! A task is "reach goal `g`". Task distributions are categorical over goals,
//! reweighted empirical distributions over a finite set of training tasks, or
//! diagonal Gaussians over latent task codes. The tabular meta-policy is a
//! distribution over goals: the goal its exploratory phase visits.

use crate::error::{Error, Result};

/// Tolerance on probability vectors summing to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Smallest probability a [`SearchPolicy`] reports for any goal.
///
/// Softmax underflows to exactly zero for logit gaps beyond ~745; the floor
/// keeps the support full so regret stays finite.
pub const PROB_FLOOR: f64 = 1e-300;

/// Finite set of goals, the first `n_core` of which form the core set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoalSpace {
    n_goals: usize,
    n_core: usize,
}

impl GoalSpace {
    pub fn new(n_goals: usize, n_core: usize) -> Result<Self> {
        if n_goals == 0 || n_core == 0 || n_core > n_goals {
            return Err(Error::InvalidGoalSpace(format!(
                "need 1 <= n_core <= n_goals, got n_core = {n_core}, n_goals = {n_goals}"
            )));
        }
        Ok(Self { n_goals, n_core })
    }

    pub fn n_goals(&self) -> usize {
        self.n_goals
    }

    pub fn n_core(&self) -> usize {
        self.n_core
    }

    /// Number of goals outside the core set.
    pub fn n_outer(&self) -> usize {
        self.n_goals - self.n_core
    }

    pub fn is_core(&self, goal: usize) -> bool {
        goal < self.n_core
    }

    /// Largest admissible concentration, `1 - n_core / n_goals`.
    pub fn max_beta(&self) -> f64 {
        1.0 - self.n_core as f64 / self.n_goals as f64
    }
}

/// Categorical distribution over goals.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalTaskDist {
    probs: Vec<f64>,
}

impl CategoricalTaskDist {
    /// Validates a probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution(
                "empty probability vector".into(),
            ));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("bad probability {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative masses into a distribution.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidDistribution(
                "masses must be finite and >= 0".into(),
            ));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("total mass is zero".into()));
        }
        Ok(Self {
            probs: masses.iter().map(|m| m / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_masses(&vec![1.0; n])
    }

    /// Point mass on `goal`.
    pub fn point_mass(n: usize, goal: usize) -> Result<Self> {
        if goal >= n {
            return Err(Error::GoalOutOfRange {
                index: goal,
                n_goals: n,
            });
        }
        let mut probs = vec![0.0; n];
        probs[goal] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Training tasks reweighted by strictly positive weights.
///
/// With a base distribution `p` over the tasks, the induced distribution is
/// `q_i = w_i p_i / sum_j w_j p_j`; against the uniform empirical base this is
/// `w_i / sum_j w_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightedEmpiricalDist {
    weights: Vec<f64>,
}

impl ReweightedEmpiricalDist {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no training tasks".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "weight {w} is not positive"
            )));
        }
        Ok(Self { weights })
    }

    /// All-ones weights over `n_tr` tasks.
    pub fn unit(n_tr: usize) -> Result<Self> {
        Self::new(vec![1.0; n_tr])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_tasks(&self) -> usize {
        self.weights.len()
    }

    /// `q_i = w_i / sum_j w_j`.
    pub fn as_categorical(&self) -> CategoricalTaskDist {
        let total: f64 = self.weights.iter().sum();
        CategoricalTaskDist {
            probs: self.weights.iter().map(|w| w / total).collect(),
        }
    }

    /// `q_i ∝ w_i base_i`.
    pub fn reweight(&self, base: &CategoricalTaskDist) -> Result<CategoricalTaskDist> {
        check_len(base.len(), self.weights.len())?;
        let masses: Vec<f64> = self
            .weights
            .iter()
            .zip(base.probs())
            .map(|(w, p)| w * p)
            .collect();
        CategoricalTaskDist::from_masses(&masses)
    }
}

/// Diagonal Gaussian over latent task codes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    stddev: Vec<f64>,
}

/// Latent dimension used when none is configured.
pub const DEFAULT_LATENT_DIM: usize = 16;

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, stddev: Vec<f64>) -> Result<Self> {
        check_len(mean.len(), stddev.len())?;
        if mean.is_empty() {
            return Err(Error::InvalidDistribution(
                "zero-dimensional Gaussian".into(),
            ));
        }
        if stddev.iter().any(|s| !s.is_finite() || *s <= 0.0) || mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::InvalidDistribution(
                "stddev must be positive and finite".into(),
            ));
        }
        Ok(Self { mean, stddev })
    }

    /// The prior `N(0, I)`.
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            stddev: vec![1.0; dim],
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn stddev(&self) -> &[f64] {
        &self.stddev
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log density at `z`.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
        self.mean
            .iter()
            .zip(&self.stddev)
            .zip(z)
            .map(|((m, s), x)| {
                let u = (x - m) / s;
                -0.5 * u * u - s.ln() - HALF_LN_2PI
            })
            .sum()
    }

    /// Draws `mean + stddev * eta` with `eta ~ N(0, I)`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        self.mean
            .iter()
            .zip(&self.stddev)
            .map(|(m, s)| {
                let eta: f64 = StandardNormal.sample(rng);
                m + s * eta
            })
            .collect()
    }
}

/// Result of a divergence that may be unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    Finite(f64),
    /// The second argument misses mass the first one has.
    Infinite,
}

impl Divergence {
    pub fn value(self) -> f64 {
        match self {
            Divergence::Finite(v) => v,
            Divergence::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Divergence::Finite(_))
    }
}

/// A distribution over goals that a meta-policy's exploration visits.
pub trait GoalPolicy {
    fn probs(&self) -> &[f64];

    fn n_goals(&self) -> usize {
        self.probs().len()
    }
}

/// Tabular meta-policy parameterized by softmax logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPolicy {
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl SearchPolicy {
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidParameter(
                "policy needs at least one goal".into(),
            ));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidParameter("logits must be finite".into()));
        }
        let probs = softmax(&logits);
        Ok(Self { logits, probs })
    }

    /// Uniform policy (all logits zero).
    pub fn uniform(n_goals: usize) -> Result<Self> {
        Self::from_logits(vec![0.0; n_goals])
    }

    /// Policy whose probabilities match `probs` (zeros become the floor).
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        let logits = probs.iter().map(|p| p.max(PROB_FLOOR).ln()).collect();
        Self::from_logits(logits)
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

impl GoalPolicy for SearchPolicy {
    fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Softmax with the [`PROB_FLOOR`] applied after normalization.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter()
        .map(|e| (e / total).max(PROB_FLOOR))
        .collect()
}

/// Goal distribution given in closed form; zero entries are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormPolicy {
    probs: Vec<f64>,
}

impl ClosedFormPolicy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let dist = CategoricalTaskDist::new(probs)?;
        Ok(Self { probs: dist.probs })
    }

    pub(crate) fn from_masses(masses: &[f64]) -> Result<Self> {
        let dist = CategoricalTaskDist::from_masses(masses)?;
        Ok(Self { probs: dist.probs })
    }
}

impl GoalPolicy for ClosedFormPolicy {
    fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl GoalPolicy for CategoricalTaskDist {
    fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Strictly increasing robustness levels starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonGrid {
    levels: Vec<f64>,
}

impl EpsilonGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        match levels.first() {
            None => return Err(Error::InvalidGrid("empty grid".into())),
            Some(&first) if first != 0.0 => {
                return Err(Error::InvalidGrid(format!(
                    "first level must be 0, got {first}"
                )))
            }
            _ => {}
        }
        if levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidGrid("levels must be finite".into()));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "levels must be strictly increasing".into(),
            ));
        }
        Ok(Self { levels })
    }

    /// `{0.0, 0.1, ..., 0.8}`, used for out-of-support shifts.
    pub fn out_of_support_default() -> Self {
        Self {
            levels: (0..=8).map(|i| i as f64 / 10.0).collect(),
        }
    }

    /// `{0.0, 0.05, ..., 0.4}`, used for in-support shifts.
    pub fn in_support_default() -> Self {
        Self {
            levels: (0..=8).map(|i| i as f64 / 20.0).collect(),
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Index of the level closest to `eps`; ties go to the lower index.
    pub fn nearest(&self, eps: f64) -> usize {
        let mut best = 0;
        for (i, l) in self.levels.iter().enumerate() {
            if (l - eps).abs() < (self.levels[best] - eps).abs() {
                best = i;
            }
        }
        best
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

/// `(1 - beta) Uniform(core) + beta Uniform(outer)`.
pub fn make_concentrated(space: GoalSpace, beta: f64) -> Result<CategoricalTaskDist> {
    let max = space.max_beta();
    if !(beta.is_finite() && beta >= 0.0 && beta <= max + SUM_TOLERANCE) {
        return Err(Error::BetaOutOfRange { beta, max });
    }
    let core = (1.0 - beta) / space.n_core() as f64;
    let outer = if space.n_outer() == 0 {
        0.0
    } else {
        beta / space.n_outer() as f64
    };
    let probs = (0..space.n_goals())
        .map(|g| if space.is_core(g) { core } else { outer })
        .collect();
    Ok(CategoricalTaskDist { probs })
}

/// Total variation distance `½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p.len(), q.len())?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `KL(p ‖ q) = Σ p_i ln(p_i / q_i)` in nats.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<Divergence> {
    check_len(p.len(), q.len())?;
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(Divergence::Infinite);
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(Divergence::Finite(total.max(0.0)))
}

/// Closed-form `KL(p ‖ q)` between diagonal Gaussians.
pub fn kl_gaussians(p: &DiagonalGaussian, q: &DiagonalGaussian) -> Result<f64> {
    check_len(p.dim(), q.dim())?;
    let kl: f64 = (0..p.dim())
        .map(|j| {
            let (mp, sp) = (p.mean[j], p.stddev[j]);
            let (mq, sq) = (q.mean[j], q.stddev[j]);
            (sq / sp).ln() + (sp * sp + (mp - mq).powi(2)) / (2.0 * sq * sq) - 0.5
        })
        .sum();
    Ok(kl.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn concentrated_examples() {
        let s = GoalSpace::new(4, 2).unwrap();
        assert!(close(
            make_concentrated(s, 0.0).unwrap().probs(),
            &[0.5, 0.5, 0.0, 0.0],
            1e-15
        ));
        assert!(close(
            make_concentrated(s, 0.5).unwrap().probs(),
            &[0.25; 4],
            1e-15
        ));
        assert!(close(
            make_concentrated(s, 0.2).unwrap().probs(),
            &[0.4, 0.4, 0.1, 0.1],
            1e-15
        ));
    }

    #[test]
    fn concentrated_rejects_bad_beta() {
        let s = GoalSpace::new(4, 2).unwrap();
        assert!(matches!(
            make_concentrated(s, 0.6),
            Err(Error::BetaOutOfRange { .. })
        ));
        assert!(make_concentrated(s, -0.1).is_err());
        let full = GoalSpace::new(3, 3).unwrap();
        assert!(make_concentrated(full, 0.1).is_err());
        assert!(close(
            make_concentrated(full, 0.0).unwrap().probs(),
            &[1.0 / 3.0; 3],
            1e-15
        ));
    }

    #[test]
    fn goal_space_validation() {
        assert!(GoalSpace::new(0, 0).is_err());
        assert!(GoalSpace::new(3, 4).is_err());
        assert!(GoalSpace::new(3, 0).is_err());
    }

    #[test]
    fn tv_examples() {
        let p = [0.3, 0.7];
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((tv_distance(&[0.5, 0.5], &[0.75, 0.25]).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            tv_distance(&[1.0], &[0.5, 0.5]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn kl_examples() {
        let p = [0.2, 0.8];
        assert_eq!(kl_categorical(&p, &p).unwrap(), Divergence::Finite(0.0));
        let kl = kl_categorical(&[0.5, 0.5], &[0.75, 0.25]).unwrap().value();
        let by_hand = 0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln();
        assert!((kl - by_hand).abs() < 1e-15);
        assert!((kl - 0.143_841_036_225_890_1).abs() < 1e-12);
        let kl = kl_categorical(&[1.0, 0.0], &[0.5, 0.5]).unwrap().value();
        assert!((kl - 2f64.ln()).abs() < 1e-15);
        assert_eq!(
            kl_categorical(&[0.5, 0.5], &[1.0, 0.0]).unwrap(),
            Divergence::Infinite
        );
    }

    #[test]
    fn kl_reweighted_matches_empirical_formula() {
        let w = ReweightedEmpiricalDist::new(vec![2.0, 1.0, 0.5, 3.0]).unwrap();
        let q = w.as_categorical();
        let n = 4.0;
        let total: f64 = w.weights().iter().sum();
        let formula: f64 = w
            .weights()
            .iter()
            .map(|wi| (total / (n * wi)).ln() / n)
            .sum();
        let kl = kl_categorical(&[0.25; 4], q.probs()).unwrap().value();
        assert!((kl - formula).abs() < 1e-14);
    }

    #[test]
    fn gaussian_kl_examples() {
        let std = DiagonalGaussian::standard(16);
        assert_eq!(kl_gaussians(&std, &std).unwrap(), 0.0);
        let p = DiagonalGaussian::new(vec![0.0], vec![1.0]).unwrap();
        let q = DiagonalGaussian::new(vec![1.0], vec![1.0]).unwrap();
        assert!((kl_gaussians(&p, &q).unwrap() - 0.5).abs() < 1e-15);
        let q = DiagonalGaussian::new(vec![0.0], vec![2.0]).unwrap();
        let expected = 2f64.ln() + 0.125 - 0.5;
        assert!((kl_gaussians(&p, &q).unwrap() - expected).abs() < 1e-15);
        assert!(kl_gaussians(&p, &std).is_err());
    }

    #[test]
    fn as_categorical_examples() {
        let u = ReweightedEmpiricalDist::unit(4).unwrap().as_categorical();
        assert!(close(u.probs(), &[0.25; 4], 1e-15));
        let q = ReweightedEmpiricalDist::new(vec![2.0, 1.0, 1.0])
            .unwrap()
            .as_categorical();
        assert!(close(q.probs(), &[0.5, 0.25, 0.25], 1e-15));
        let one = ReweightedEmpiricalDist::new(vec![5.0])
            .unwrap()
            .as_categorical();
        assert_eq!(one.probs(), &[1.0]);
        assert!(ReweightedEmpiricalDist::new(vec![1.0, 0.0]).is_err());
        assert!(ReweightedEmpiricalDist::new(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn epsilon_grid_validation() {
        assert!(EpsilonGrid::new(vec![0.0, 0.1, 0.1]).is_err());
        assert!(EpsilonGrid::new(vec![0.1, 0.2]).is_err());
        assert!(EpsilonGrid::new(vec![]).is_err());
        let g = EpsilonGrid::out_of_support_default();
        assert_eq!(g.len(), 9);
        assert!((g.levels()[8] - 0.8).abs() < 1e-15);
        assert!((EpsilonGrid::in_support_default().levels()[8] - 0.4).abs() < 1e-15);
        assert_eq!(g.nearest(0.149), 1);
        assert_eq!(g.nearest(-3.0), 0);
        assert_eq!(g.nearest(5.0), 8);
    }

    #[test]
    fn softmax_floor_keeps_support() {
        let p = SearchPolicy::from_logits(vec![0.0, -2000.0]).unwrap();
        assert!(p.probs()[1] > 0.0);
        assert!(SearchPolicy::from_logits(vec![f64::NAN]).is_err());
    }

    #[test]
    fn gaussian_log_density_standard() {
        let g = DiagonalGaussian::standard(2);
        let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * (1.0 + 4.0);
        assert!((g.log_density(&[1.0, 2.0]) - expected).abs() < 1e-12);
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |m| {
            CategoricalTaskDist::from_masses(&m)
                .ok()
                .map(|d| d.probs().to_vec())
        })
    }

    fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..8).prop_flat_map(|n| (simplex(n), simplex(n), simplex(n)))
    }

    proptest! {
        #[test]
        fn concentrated_is_piecewise_constant(n in 2usize..30, frac in 0.0f64..1.0, bfrac in 0.0f64..=1.0) {
            let n_core = ((n as f64 * frac) as usize).clamp(1, n);
            let space = GoalSpace::new(n, n_core).unwrap();
            let beta = bfrac * space.max_beta();
            let p = make_concentrated(space, beta).unwrap();
            let sum: f64 = p.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(p.probs()[..n_core].iter().all(|x| *x == p.probs()[0]));
            prop_assert!(p.probs()[n_core..].iter().all(|x| *x == p.probs()[n - 1]));
        }

        #[test]
        fn tv_is_a_metric((p, q, r) in triple()) {
            let pq = tv_distance(&p, &q).unwrap();
            prop_assert!((0.0..=1.0 + 1e-15).contains(&pq));
            prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() <= 1e-15);
            prop_assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-12);
            prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
            if pq == 0.0 {
                prop_assert!(p == q);
            }
        }

        #[test]
        fn search_policy_is_a_distribution(logits in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            let p = SearchPolicy::from_logits(logits).unwrap();
            prop_assert!(p.probs().iter().all(|x| *x > 0.0));
            let sum: f64 = p.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn kl_nonnegative_on_random_pairs() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(11, 0);
        for _ in 0..1000 {
            let n = rng.random_range(1..8);
            let draw = |rng: &mut crate::rng::StreamRng| {
                let m: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
                CategoricalTaskDist::from_masses(&m).unwrap()
            };
            let p = draw(&mut rng);
            let q = draw(&mut rng);
            let kl = kl_categorical(p.probs(), q.probs()).unwrap().value();
            assert!(kl >= 0.0);
            if tv_distance(p.probs(), q.probs()).unwrap() > 1e-9 {
                assert!(kl > 0.0);
            }
            assert_eq!(kl_categorical(p.probs(), p.probs()).unwrap().value(), 0.0);
        }
    }

    fn simpson_kl_1d(mp: f64, sp: f64, mq: f64, sq: f64) -> f64 {
        let logpdf = |x: f64, m: f64, s: f64| {
            let u = (x - m) / s;
            -0.5 * u * u - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        };
        let (a, b, n) = (mp - 14.0 * sp, mp + 14.0 * sp, 20_000);
        let h = (b - a) / n as f64;
        let f = |x: f64| {
            let lp = logpdf(x, mp, sp);
            lp.exp() * (lp - logpdf(x, mq, sq))
        };
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn gaussian_kl_matches_quadrature() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(5, 0);
        for _ in 0..200 {
            let mp = rng.random_range(-3.0..3.0);
            let mq = rng.random_range(-3.0..3.0);
            let sp = rng.random_range(0.2..5.0);
            let sq = rng.random_range(0.2..5.0);
            let p = DiagonalGaussian::new(vec![mp], vec![sp]).unwrap();
            let q = DiagonalGaussian::new(vec![mq], vec![sq]).unwrap();
            let closed = kl_gaussians(&p, &q).unwrap();
            assert!(
                (closed - simpson_kl_1d(mp, sp, mq, sq)).abs() < 1e-6,
                "{mp} {sp} {mq} {sq}"
            );
        }
    }
}
