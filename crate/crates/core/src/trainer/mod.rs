//! Robust meta-policy populations.
//!
//! For every level `ε` of an [`EpsilonGrid`] the trainer alternates three
//! updates per iteration, in this order: a meta-policy ascent step on the
//! tasks drawn from the current adversary, an adversary descent step on
//! `E_q[return] + λ · KL(p ‖ q)`, and a projected dual step
//! `λ ← max(0, λ + α (KL − ε))`. The `ε = 0` entry is trained on the
//! training distribution alone.

pub mod adversary;
pub mod policy;

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{Checkpoint, Mat};
use crate::rng::{path_stream, stream_rng, StreamRng};
use crate::task::{CategoricalTaskDist, EpsilonGrid, GoalPolicy, SearchPolicy};
pub use adversary::AdversaryParams;
use adversary::*;
pub use policy::{meta_policy_step, policy_gradient, policy_objective, Objective};

/// Lowest tolerated rejection-sampling acceptance rate over a window.
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-3;

/// How the adversary's gradient is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Closed-form gradient over the finite task set; latent adversaries
    /// always use the score-function estimator.
    Exact,
    /// Score-function estimator over `batch_tasks` sampled tasks with a
    /// moving-average baseline.
    ScoreFunction,
}

/// Per-task return used as the training signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Regret,
    Success,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub epsilon: f64,
    pub step_policy: f64,
    pub step_adversary: f64,
    pub step_dual: f64,
    pub iterations: usize,
    pub batch_tasks: usize,
    /// Episodes per meta-episode.
    pub k: usize,
    pub seed: u64,
    pub objective: ObjectiveKind,
    pub gradient_mode: GradientMode,
    /// Policy ascent steps per iteration.
    pub policy_inner_steps: usize,
    pub kl_tolerance: f64,
    /// Iterations over which the rejection-sampling acceptance rate is judged.
    pub window: usize,
    pub baseline_decay: f64,
    /// Per-coordinate cap on adversary parameter moves.
    pub trust_region: Option<f64>,
    /// Start each level's adversary from the previous level's final one.
    pub warm_start: bool,
    pub lambda_init: f64,
    /// Final fraction of iterations whose policies are averaged into the
    /// returned one; 0 keeps the last iterate.
    pub policy_averaging: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            step_policy: 0.5,
            step_adversary: 0.05,
            step_dual: 0.5,
            iterations: 2000,
            batch_tasks: 64,
            k: 2,
            seed: 0,
            objective: ObjectiveKind::Regret,
            gradient_mode: GradientMode::Exact,
            policy_inner_steps: 1,
            kl_tolerance: 0.02,
            window: 100,
            baseline_decay: 0.9,
            trust_region: None,
            warm_start: false,
            lambda_init: 0.0,
            policy_averaging: 0.0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.step_policy > 0.0 && self.step_adversary > 0.0 && self.step_dual > 0.0) {
            return bad("step sizes must be positive");
        }
        if self.iterations == 0 || self.batch_tasks == 0 || self.k == 0 || self.window == 0 {
            return bad("iterations, batch_tasks, k and window must be >= 1");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline_decay must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.policy_averaging) {
            return bad("policy_averaging must be in [0, 1)");
        }
        if self.epsilon < 0.0 || self.kl_tolerance < 0.0 || self.lambda_init < 0.0 {
            return bad("epsilon, kl_tolerance and lambda_init must be >= 0");
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        match self.objective {
            ObjectiveKind::Regret => Objective::Regret,
            ObjectiveKind::Success => Objective::Success { k: self.k },
        }
    }
}

/// Lagrange multiplier of the KL constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualState {
    pub lambda: f64,
}

/// `λ ← max(0, λ + α (KL − ε))`.
pub fn dual_step(state: DualState, kl: f64, cfg: &TrainerConfig) -> DualState {
    DualState {
        lambda: (state.lambda + cfg.step_dual * (kl - cfg.epsilon)).max(0.0),
    }
}

/// Complementary slackness up to `tol`: an inactive constraint has `λ ≈ 0`,
/// an active one has `KL ≈ ε`.
pub fn kkt_satisfied(kl: f64, lambda: f64, epsilon: f64, tol: f64) -> bool {
    (kl <= epsilon + tol && lambda <= tol) || ((kl - epsilon).abs() <= tol && lambda > 0.0)
}

/// Maps latent codes to task cells; `None` for codes that decode outside the
/// task grid.
pub trait CellDecoder: Send + Sync {
    fn cell(&self, z: &[f64]) -> Option<usize>;
}

impl<F: Fn(&[f64]) -> Option<usize> + Send + Sync> CellDecoder for F {
    fn cell(&self, z: &[f64]) -> Option<usize> {
        self(z)
    }
}

/// Where the adversary lives and how its tasks map onto the policy's cells.
#[derive(Clone)]
pub enum TaskSpace {
    /// Training tasks with base probabilities; task `i` is cell `task_cells[i]`.
    Reweighted {
        base: CategoricalTaskDist,
        task_cells: Vec<usize>,
        n_cells: usize,
    },
    /// Latent codes decoded to cells, plus the real training cells for the
    /// `ε = 0` entry. Codes decoding outside the grid are dropped.
    Latent {
        decoder: Arc<dyn CellDecoder>,
        latent_dim: usize,
        train_cells: Vec<usize>,
        n_cells: usize,
    },
}

impl std::fmt::Debug for TaskSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskSpace::Reweighted {
                n_cells,
                task_cells,
                ..
            } => {
                write!(
                    f,
                    "Reweighted {{ n_tasks: {}, n_cells: {n_cells} }}",
                    task_cells.len()
                )
            }
            TaskSpace::Latent {
                latent_dim,
                n_cells,
                ..
            } => {
                write!(
                    f,
                    "Latent {{ latent_dim: {latent_dim}, n_cells: {n_cells} }}"
                )
            }
        }
    }
}

impl TaskSpace {
    /// One task per goal with base `p_d` (the analytic family).
    pub fn goals(p_d: CategoricalTaskDist) -> Self {
        let n = p_d.len();
        TaskSpace::Reweighted {
            base: p_d,
            task_cells: (0..n).collect(),
            n_cells: n,
        }
    }

    /// Uniform empirical distribution over training tasks in the given cells.
    pub fn empirical(task_cells: Vec<usize>, n_cells: usize) -> Result<Self> {
        let base = CategoricalTaskDist::uniform(task_cells.len())?;
        Self::reweighted(base, task_cells, n_cells)
    }

    pub fn reweighted(
        base: CategoricalTaskDist,
        task_cells: Vec<usize>,
        n_cells: usize,
    ) -> Result<Self> {
        check_cells(&task_cells, n_cells)?;
        if base.len() != task_cells.len() {
            return Err(Error::LengthMismatch {
                expected: task_cells.len(),
                got: base.len(),
            });
        }
        Ok(TaskSpace::Reweighted {
            base,
            task_cells,
            n_cells,
        })
    }

    pub fn latent(
        decoder: Arc<dyn CellDecoder>,
        latent_dim: usize,
        train_cells: Vec<usize>,
        n_cells: usize,
    ) -> Result<Self> {
        check_cells(&train_cells, n_cells)?;
        if train_cells.is_empty() || latent_dim == 0 {
            return Err(Error::InvalidParameter(
                "latent space needs training cells and a latent dimension".into(),
            ));
        }
        Ok(TaskSpace::Latent {
            decoder,
            latent_dim,
            train_cells,
            n_cells,
        })
    }

    pub fn n_cells(&self) -> usize {
        match self {
            TaskSpace::Reweighted { n_cells, .. } | TaskSpace::Latent { n_cells, .. } => *n_cells,
        }
    }

    /// Adversary at `q = p`.
    pub fn initial_adversary(&self) -> AdversaryParams {
        match self {
            TaskSpace::Reweighted { task_cells, .. } => {
                AdversaryParams::uniform_weights(task_cells.len())
            }
            TaskSpace::Latent { latent_dim, .. } => AdversaryParams::prior(*latent_dim),
        }
    }

    /// Cell distribution of the training tasks.
    pub fn train_cell_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_cells()];
        match self {
            TaskSpace::Reweighted {
                base, task_cells, ..
            } => {
                for (p, &c) in base.probs().iter().zip(task_cells) {
                    w[c] += p;
                }
            }
            TaskSpace::Latent { train_cells, .. } => {
                for &c in train_cells {
                    w[c] += 1.0 / train_cells.len() as f64;
                }
            }
        }
        w
    }

    /// `KL(p ‖ q_φ)`.
    pub fn kl(&self, adv: &AdversaryParams) -> f64 {
        match (self, adv) {
            (TaskSpace::Reweighted { base, .. }, AdversaryParams::Reweighted { log_weights }) => {
                reweighted_kl(&reweighted_probs(log_weights, base.probs()), base.probs())
            }
            (TaskSpace::Latent { .. }, AdversaryParams::Latent { mean, log_std }) => {
                latent_kl(mean, log_std)
            }
            _ => f64::NAN,
        }
    }
}

fn check_cells(cells: &[usize], n_cells: usize) -> Result<()> {
    match cells.iter().find(|&&c| c >= n_cells) {
        Some(&c) => Err(Error::GoalOutOfRange {
            index: c,
            n_goals: n_cells,
        }),
        None => Ok(()),
    }
}

/// One row of a training log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub iteration: usize,
    pub epsilon: f64,
    pub objective: f64,
    pub kl: f64,
    pub lambda: f64,
    /// Rejection-sampling acceptance rate; `None` without rejection.
    pub acceptance_rate: Option<f64>,
}

/// A trained level of the population.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustEntry {
    pub epsilon: f64,
    pub policy: SearchPolicy,
    pub adversary: AdversaryParams,
    pub lambda: f64,
    /// Multiplier of the lower KL bound (disjoint-support training only).
    pub lambda_lower: f64,
    pub final_kl: f64,
    /// Final KL within the tolerated band.
    pub converged: bool,
    /// Some adversary standard deviation was clamped to the floor.
    pub sigma_clamped: bool,
    /// Diagnostic when training of this level was abandoned.
    pub aborted: Option<String>,
    pub log: Vec<TrainLogRow>,
}

impl RobustEntry {
    pub fn kkt_satisfied(&self, tol: f64) -> bool {
        kkt_satisfied(self.final_kl, self.lambda, self.epsilon, tol)
    }
}

/// Trained policies in increasing `ε`, the first at `ε = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustPopulation {
    pub entries: Vec<RobustEntry>,
}

impl RobustPopulation {
    pub fn epsilons(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.epsilon).collect()
    }

    pub fn policies(&self) -> Vec<&SearchPolicy> {
        self.entries.iter().map(|e| &e.policy).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whether any level aborted, clamped a stddev or produced non-finite values.
    pub fn has_numerical_failure(&self) -> bool {
        self.entries.iter().any(|e| {
            e.aborted.is_some()
                || e.sigma_clamped
                || !(e.final_kl.is_finite() && e.lambda.is_finite())
                || e.policy.probs().iter().any(|p| !p.is_finite())
        })
    }

    pub fn log_rows(&self) -> impl Iterator<Item = &TrainLogRow> {
        self.entries.iter().flat_map(|e| e.log.iter())
    }

    /// Training log as CSV: iteration, epsilon, objective, kl, lambda,
    /// acceptance_rate.
    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "iteration",
            "epsilon",
            "objective",
            "kl",
            "lambda",
            "acceptance_rate",
        ])?;
        for r in self.log_rows() {
            w.write_record([
                r.iteration.to_string(),
                r.epsilon.to_string(),
                r.objective.to_string(),
                r.kl.to_string(),
                r.lambda.to_string(),
                r.acceptance_rate.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("population").with_meta("entries", self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            let row = |v: &[f64]| Mat::from_vec(1, v.len(), v.to_vec()).expect("row");
            ck = ck
                .with_meta(&format!("epsilon.{i}"), format!("{:?}", e.epsilon))
                .with_meta(&format!("lambda.{i}"), format!("{:?}", e.lambda))
                .with_meta(
                    &format!("lambda_lower.{i}"),
                    format!("{:?}", e.lambda_lower),
                )
                .with_meta(&format!("final_kl.{i}"), format!("{:?}", e.final_kl))
                .with_meta(&format!("converged.{i}"), e.converged)
                .with_meta(&format!("sigma_clamped.{i}"), e.sigma_clamped)
                .with_param(&format!("policy.{i}"), row(e.policy.logits()));
            if let Some(msg) = &e.aborted {
                ck = ck.with_meta(&format!("aborted.{i}"), msg);
            }
            ck = match &e.adversary {
                AdversaryParams::Reweighted { log_weights } => {
                    ck.with_param(&format!("adv_log_weights.{i}"), row(log_weights))
                }
                AdversaryParams::Latent { mean, log_std } => ck
                    .with_param(&format!("adv_mean.{i}"), row(mean))
                    .with_param(&format!("adv_log_std.{i}"), row(log_std)),
            };
        }
        ck
    }

    /// Restores policies, adversaries and multipliers; training logs are not
    /// stored in checkpoints.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if ck.kind != "population" {
            return Err(bad(format!("expected kind population, found {}", ck.kind)));
        }
        let get = |key: String| -> Result<&str> {
            ck.meta(&key)
                .ok_or_else(|| bad(format!("missing meta {key}")))
        };
        let num = |key: String| -> Result<f64> {
            get(key.clone())?
                .parse()
                .map_err(|_| bad(format!("bad meta {key}")))
        };
        let flag = |key: String| -> Result<bool> {
            get(key.clone())?
                .parse()
                .map_err(|_| bad(format!("bad meta {key}")))
        };
        let n: usize = get("entries".into())?
            .parse()
            .map_err(|_| bad("bad entries".into()))?;
        let mut entries = Vec::with_capacity(n);
        for i in 0..n {
            let policy =
                SearchPolicy::from_logits(ck.param(&format!("policy.{i}"))?.data().to_vec())?;
            let adversary = match ck.param(&format!("adv_log_weights.{i}")) {
                Ok(w) => AdversaryParams::Reweighted {
                    log_weights: w.data().to_vec(),
                },
                Err(_) => AdversaryParams::Latent {
                    mean: ck.param(&format!("adv_mean.{i}"))?.data().to_vec(),
                    log_std: ck.param(&format!("adv_log_std.{i}"))?.data().to_vec(),
                },
            };
            entries.push(RobustEntry {
                epsilon: num(format!("epsilon.{i}"))?,
                policy,
                adversary,
                lambda: num(format!("lambda.{i}"))?,
                lambda_lower: num(format!("lambda_lower.{i}"))?,
                final_kl: num(format!("final_kl.{i}"))?,
                converged: flag(format!("converged.{i}"))?,
                sigma_clamped: flag(format!("sigma_clamped.{i}"))?,
                aborted: ck.meta(&format!("aborted.{i}")).map(str::to_string),
                log: Vec::new(),
            });
        }
        EpsilonGrid::new(entries.iter().map(|e| e.epsilon).collect())?;
        Ok(Self { entries })
    }
}

/// Rejection rule of disjoint-support training.
#[derive(Debug, Clone)]
struct Rejection {
    previous: AdversaryParams,
    beta: f64,
    lower: f64,
}

impl Rejection {
    fn accepts(&self, space: &TaskSpace, sample: &Sample) -> bool {
        if self.beta == f64::INFINITY {
            return true;
        }
        let log_q = match (&self.previous, sample, space) {
            (AdversaryParams::Latent { mean, log_std }, Sample::Latent { z, .. }, _) => {
                latent_log_density(mean, log_std, z)
            }
            (
                AdversaryParams::Reweighted { log_weights },
                Sample::Task(i),
                TaskSpace::Reweighted { base, .. },
            ) => reweighted_probs(log_weights, base.probs())[*i].ln(),
            _ => f64::INFINITY,
        };
        log_q <= self.beta
    }
}

#[derive(Debug, Clone)]
enum Sample {
    Task(usize),
    Latent { z: Vec<f64> },
}

/// Trains one level. `rejection` switches on the disjoint-support variant.
fn train_level(
    space: &TaskSpace,
    cfg: &TrainerConfig,
    init: AdversaryParams,
    rejection: Option<&Rejection>,
    rng: &mut StreamRng,
) -> RobustEntry {
    let eps = cfg.epsilon;
    let objective = cfg.objective();
    let mut policy = SearchPolicy::uniform(space.n_cells()).expect("n_cells >= 1");
    let mut adv = init;
    let mut dual = DualState {
        lambda: cfg.lambda_init,
    };
    let mut lower = DualState { lambda: 0.0 };
    let mut baseline = Baseline::new(cfg.baseline_decay);
    let mut log = Vec::with_capacity(cfg.iterations);
    let mut sigma_clamped = false;
    let mut aborted = None;
    let mut window: std::collections::VecDeque<(usize, usize)> = std::collections::VecDeque::new();

    if eps == 0.0 && rejection.is_none() {
        let weights = space.train_cell_weights();
        for it in 0..cfg.iterations {
            for _ in 0..cfg.policy_inner_steps {
                policy = meta_policy_step(&policy, &weights, objective, cfg.step_policy);
            }
            log.push(TrainLogRow {
                iteration: it,
                epsilon: eps,
                objective: policy_objective(policy.probs(), &weights, objective),
                kl: 0.0,
                lambda: 0.0,
                acceptance_rate: None,
            });
        }
        return RobustEntry {
            epsilon: eps,
            policy,
            adversary: adv,
            lambda: 0.0,
            lambda_lower: 0.0,
            final_kl: 0.0,
            converged: true,
            sigma_clamped: false,
            aborted: None,
            log,
        };
    }

    // Latent adversaries have no closed-form expectation and always sample.
    let exact = rejection.is_none()
        && cfg.gradient_mode == GradientMode::Exact
        && matches!(space, TaskSpace::Reweighted { .. });
    let avg_start = cfg.iterations - (cfg.policy_averaging * cfg.iterations as f64) as usize;
    let mut avg = vec![0.0; space.n_cells()];
    let mut n_avg = 0usize;
    for it in 0..cfg.iterations {
        // Tasks under the current adversary.
        let mut cell_weights = vec![0.0; space.n_cells()];
        let mut kept: Vec<(Sample, usize)> = Vec::new();
        let mut drawn = 0;
        match (space, &adv) {
            (
                TaskSpace::Reweighted {
                    base, task_cells, ..
                },
                AdversaryParams::Reweighted { log_weights },
            ) => {
                let q = reweighted_probs(log_weights, base.probs());
                if exact {
                    for (qi, &c) in q.iter().zip(task_cells) {
                        cell_weights[c] += qi;
                    }
                } else {
                    for _ in 0..cfg.batch_tasks {
                        let i = sample_index(&q, rng);
                        drawn += 1;
                        let s = Sample::Task(i);
                        if rejection.is_none_or(|r| r.accepts(space, &s)) {
                            kept.push((s, task_cells[i]));
                        }
                    }
                }
            }
            (TaskSpace::Latent { decoder, .. }, AdversaryParams::Latent { mean, log_std }) => {
                for _ in 0..cfg.batch_tasks {
                    let z = latent_sample(mean, log_std, rng);
                    drawn += 1;
                    if let Some(c) = decoder.cell(&z) {
                        let s = Sample::Latent { z };
                        if rejection.is_none_or(|r| r.accepts(space, &s)) {
                            kept.push((s, c));
                        }
                    }
                }
            }
            _ => unreachable!("adversary matches its task space"),
        }
        if !exact {
            for (_, c) in &kept {
                cell_weights[*c] += 1.0 / kept.len() as f64;
            }
        }

        // Policy ascent.
        if exact || !kept.is_empty() {
            for _ in 0..cfg.policy_inner_steps {
                policy = meta_policy_step(&policy, &cell_weights, objective, cfg.step_policy);
            }
        }
        let probs = policy.probs();
        if it >= avg_start && cfg.policy_averaging > 0.0 {
            avg.iter_mut().zip(probs).for_each(|(a, p)| *a += p);
            n_avg += 1;
        }

        // Adversary descent.
        let lam = dual.lambda - lower.lambda;
        let grad = match (space, &adv) {
            (
                TaskSpace::Reweighted {
                    base, task_cells, ..
                },
                AdversaryParams::Reweighted { log_weights },
            ) => {
                let q = reweighted_probs(log_weights, base.probs());
                if exact {
                    let rets: Vec<f64> = task_cells
                        .iter()
                        .map(|&c| objective.value(probs[c]))
                        .collect();
                    reweighted_exact_gradient(&q, base.probs(), &rets, lam)
                } else {
                    let mean_ret = batch_mean(&kept, |c| objective.value(probs[c]));
                    let b = baseline.value.unwrap_or(mean_ret);
                    let mut g: Vec<f64> = q
                        .iter()
                        .zip(base.probs())
                        .map(|(qj, p)| lam * (qj - p))
                        .collect();
                    for (s, c) in &kept {
                        let Sample::Task(i) = s else { unreachable!() };
                        let r = objective.value(probs[*c]);
                        for (j, gj) in g.iter_mut().enumerate() {
                            let ind = if j == *i { 1.0 } else { 0.0 };
                            *gj += (r - b) * (ind - q[j]) / kept.len() as f64;
                        }
                    }
                    if !kept.is_empty() {
                        baseline.update(mean_ret);
                    }
                    g
                }
            }
            (TaskSpace::Latent { .. }, AdversaryParams::Latent { mean, log_std }) => {
                let mean_ret = batch_mean(&kept, |c| objective.value(probs[c]));
                let b = baseline.value.unwrap_or(mean_ret);
                let mut g: Vec<f64> = latent_kl_gradient(mean, log_std)
                    .iter()
                    .map(|x| lam * x)
                    .collect();
                for (s, c) in &kept {
                    let Sample::Latent { z, .. } = s else {
                        unreachable!()
                    };
                    let r = objective.value(probs[*c]);
                    for (gj, sc) in g.iter_mut().zip(latent_score(mean, log_std, z)) {
                        *gj += (r - b) * sc / kept.len() as f64;
                    }
                }
                if !kept.is_empty() {
                    baseline.update(mean_ret);
                }
                g
            }
            _ => unreachable!("adversary matches its task space"),
        };
        sigma_clamped |= adv.descend(&grad, cfg.step_adversary, cfg.trust_region);

        // Dual ascent.
        let kl = space.kl(&adv);
        dual = dual_step(dual, kl, cfg);
        let mut acceptance_rate = None;
        if let Some(r) = rejection {
            lower = DualState {
                lambda: (lower.lambda + cfg.step_dual * (r.lower - kl)).max(0.0),
            };
            window.push_back((kept.len(), drawn));
            if window.len() > cfg.window {
                window.pop_front();
            }
            let (acc, tot) = window.iter().fold((0, 0), |(a, t), (x, y)| (a + x, t + y));
            let rate = if tot == 0 {
                0.0
            } else {
                acc as f64 / tot as f64
            };
            acceptance_rate = Some(rate);
            let stalled = r.beta == f64::NEG_INFINITY
                || (window.len() == cfg.window && rate < MIN_ACCEPTANCE_RATE);
            if stalled {
                aborted = Some(
                    Error::RejectionStalled {
                        epsilon: eps,
                        rate,
                        floor: MIN_ACCEPTANCE_RATE,
                    }
                    .to_string(),
                );
            }
        }
        log.push(TrainLogRow {
            iteration: it,
            epsilon: eps,
            objective: policy_objective(policy.probs(), &cell_weights, objective),
            kl,
            lambda: dual.lambda,
            acceptance_rate,
        });
        if aborted.is_some() {
            break;
        }
    }
    if n_avg > 0 {
        let probs: Vec<f64> = avg.iter().map(|a| a / n_avg as f64).collect();
        policy = SearchPolicy::from_probs(&probs).expect("average of distributions");
    }
    let kl = space.kl(&adv);
    let lower_bound = rejection.map_or(0.0, |r| r.lower);
    let converged =
        aborted.is_none() && kl <= eps + cfg.kl_tolerance && kl >= lower_bound - cfg.kl_tolerance;
    RobustEntry {
        epsilon: eps,
        policy,
        adversary: adv,
        lambda: dual.lambda,
        lambda_lower: lower.lambda,
        final_kl: kl,
        converged,
        sigma_clamped,
        aborted,
        log,
    }
}

/// Mean return of a batch; the first batch also seeds the baseline.
fn batch_mean(kept: &[(Sample, usize)], ret: impl Fn(usize) -> f64) -> f64 {
    kept.iter().map(|(_, c)| ret(*c)).sum::<f64>() / kept.len().max(1) as f64
}

fn level_rng(cfg: &TrainerConfig, index: usize) -> StreamRng {
    stream_rng(cfg.seed, path_stream(&[index as u64]))
}

/// Trains one policy per grid level. Levels are independent (each with its
/// own random stream) and may run in parallel; with `warm_start` they run in
/// order, each adversary starting from the previous level's.
pub fn train_robust_population(
    space: &TaskSpace,
    grid: &EpsilonGrid,
    cfg: &TrainerConfig,
    exec: Execution,
) -> Result<RobustPopulation> {
    cfg.validate()?;
    let level_cfg = |eps: f64| TrainerConfig {
        epsilon: eps,
        ..cfg.clone()
    };
    let entries = if cfg.warm_start {
        let mut out: Vec<RobustEntry> = Vec::with_capacity(grid.len());
        for (i, &eps) in grid.levels().iter().enumerate() {
            let init = out
                .last()
                .map_or_else(|| space.initial_adversary(), |e| e.adversary.clone());
            out.push(train_level(
                space,
                &level_cfg(eps),
                init,
                None,
                &mut level_rng(cfg, i),
            ));
        }
        out
    } else {
        exec.map(grid.len(), |i| {
            let eps = grid.levels()[i];
            train_level(
                space,
                &level_cfg(eps),
                space.initial_adversary(),
                None,
                &mut level_rng(cfg, i),
            )
        })
    };
    Ok(RobustPopulation { entries })
}

/// Disjoint-support variant: level `i` keeps only tasks `x` with
/// `log q^{i−1}(x) ≤ beta_rs` for its policy and adversary updates, and its
/// adversary is held inside `ε_{i−1} ≤ KL ≤ ε_i` by two multipliers. Levels
/// train in order. `beta_rs = +∞` disables rejection; `−∞` rejects
/// everything and aborts the level.
pub fn train_disjoint_support(
    space: &TaskSpace,
    grid: &EpsilonGrid,
    cfg: &TrainerConfig,
    beta_rs: f64,
) -> Result<RobustPopulation> {
    cfg.validate()?;
    if grid.len() < 2 {
        return Err(Error::InvalidGrid(
            "disjoint-support training needs at least two levels".into(),
        ));
    }
    if beta_rs.is_nan() {
        return Err(Error::InvalidParameter("beta_rs is NaN".into()));
    }
    let levels = grid.levels();
    let mut entries: Vec<RobustEntry> = Vec::with_capacity(levels.len());
    let first = TrainerConfig {
        epsilon: 0.0,
        ..cfg.clone()
    };
    entries.push(train_level(
        space,
        &first,
        space.initial_adversary(),
        None,
        &mut level_rng(cfg, 0),
    ));
    for i in 1..levels.len() {
        let rejection = Rejection {
            previous: entries[i - 1].adversary.clone(),
            beta: beta_rs,
            lower: levels[i - 1],
        };
        let level = TrainerConfig {
            epsilon: levels[i],
            ..cfg.clone()
        };
        let init = if cfg.warm_start {
            rejection.previous.clone()
        } else {
            space.initial_adversary()
        };
        entries.push(train_level(
            space,
            &level,
            init,
            Some(&rejection),
            &mut level_rng(cfg, i),
        ));
    }
    Ok(RobustPopulation { entries })
}

/// One adversary descent step outside the training loop, with the exact
/// gradient for reweighted adversaries and a `batch_tasks`-sample
/// score-function estimate for latent ones (zero baseline).
pub fn adversary_step(
    phi: &AdversaryParams,
    policy: &SearchPolicy,
    lambda: f64,
    cfg: &TrainerConfig,
    space: &TaskSpace,
    rng: &mut StreamRng,
) -> (AdversaryParams, bool) {
    let objective = cfg.objective();
    let probs = policy.probs();
    let grad = match (space, phi) {
        (
            TaskSpace::Reweighted {
                base, task_cells, ..
            },
            AdversaryParams::Reweighted { log_weights },
        ) => {
            let q = reweighted_probs(log_weights, base.probs());
            let rets: Vec<f64> = task_cells
                .iter()
                .map(|&c| objective.value(probs[c]))
                .collect();
            reweighted_exact_gradient(&q, base.probs(), &rets, lambda)
        }
        (TaskSpace::Latent { decoder, .. }, AdversaryParams::Latent { mean, log_std }) => {
            let mut g: Vec<f64> = latent_kl_gradient(mean, log_std)
                .iter()
                .map(|x| lambda * x)
                .collect();
            let n = cfg.batch_tasks as f64;
            for _ in 0..cfg.batch_tasks {
                let z = latent_sample(mean, log_std, rng);
                if let Some(c) = decoder.cell(&z) {
                    let r = objective.value(probs[c]);
                    for (gj, sc) in g.iter_mut().zip(latent_score(mean, log_std, &z)) {
                        *gj += r * sc / n;
                    }
                }
            }
            g
        }
        _ => return (phi.clone(), false),
    };
    let mut next = phi.clone();
    let clamped = next.descend(&grad, cfg.step_adversary, cfg.trust_region);
    (next, clamped)
}
