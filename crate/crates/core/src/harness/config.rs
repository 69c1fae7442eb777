//! Experiment configuration.
//!
//! UTF-8 text made of `[section]` headers and `key = value` lines. `#` starts
//! a comment. Every key is optional and falls back to its default; unknown
//! sections, unknown keys and repeated keys are errors. See the README for
//! the full key list.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::env::{Env, EnvSpec, PointNavEnv, WindNavEnv};
use super::grid::PolarGrid;
use super::sampler::{RadialLaw, TaskSampler};
use crate::error::{Error, Result};
use crate::selector::{CemConfig, RewardSignal, DEFAULT_META_EPISODES};
use crate::task::EpsilonGrid;
use crate::trainer::{GradientMode, ObjectiveKind, TrainerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Linear-Gaussian fit of the training targets, `ĥ = m + L z`.
    Analytic,
    /// Structured reward (point) or dynamics (wind) VAE.
    Vae,
    /// Reweighting of the training tasks.
    Reweighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorKind {
    Thompson,
    Cem,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub n_train: usize,
    pub latent_dim: usize,
    pub fit_steps: usize,
    pub learning_rate: f64,
    pub kl_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Analytic,
            n_train: 400,
            latent_dim: 2,
            fit_steps: 1500,
            learning_rate: 0.02,
            kl_weight: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    pub meta_episodes: usize,
    pub signal: RewardSignal,
    pub cem: CemConfig,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            kind: SelectorKind::Thompson,
            meta_episodes: DEFAULT_META_EPISODES,
            signal: RewardSignal::SuccessRate,
            cem: CemConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvSpec,
    pub train: TaskSampler,
    pub tests: Vec<TaskSampler>,
    pub epsilons: EpsilonGrid,
    /// Rejection threshold; switches on disjoint-support training.
    pub disjoint_beta: Option<f64>,
    pub trainer: TrainerConfig,
    pub model: ModelConfig,
    pub selector: SelectorConfig,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let band = |lo, hi| TaskSampler {
            radial: RadialLaw::Uniform { lo, hi },
        };
        Self {
            name: "point-shift".into(),
            env: EnvSpec::new(Env::Point(PointNavEnv::default()), PolarGrid::default()),
            train: band(0.0, 0.5),
            tests: vec![
                band(0.0, 0.5),
                band(0.5, 0.55),
                band(0.55, 0.6),
                band(0.6, 0.65),
                band(0.65, 0.7),
            ],
            epsilons: EpsilonGrid::out_of_support_default(),
            disjoint_beta: None,
            trainer: TrainerConfig {
                iterations: 1500,
                policy_inner_steps: 5,
                trust_region: Some(0.02),
                policy_averaging: 0.5,
                ..Default::default()
            },
            model: ModelConfig::default(),
            selector: SelectorConfig::default(),
            seeds: (0..8).collect(),
            output: None,
        }
    }
}

fn cfg_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

struct Entry {
    value: String,
    line: usize,
}

/// Keys of one section; keys not taken by the builder are reported.
struct Section {
    name: String,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some(e) => e.value.parse().map_err(|_| {
                cfg_err(
                    e.line,
                    format!("cannot parse {}.{key} = '{}'", self.name, e.value),
                )
            }),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((k, e)) => Err(cfg_err(
                e.line,
                format!("unknown key '{k}' in [{}]", self.name),
            )),
        }
    }
}

const SECTIONS: [&str; 8] = [
    "experiment",
    "env",
    "discretization",
    "tasks",
    "population",
    "trainer",
    "model",
    "selector",
];

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut out: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(cfg_err(line, format!("unknown section [{name}]")));
            }
            if out.contains_key(&name) {
                return Err(cfg_err(line, format!("repeated section [{name}]")));
            }
            out.insert(
                name.clone(),
                Section {
                    name: name.clone(),
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| cfg_err(line, format!("expected key = value, got '{body}'")))?;
        let sec = current
            .as_ref()
            .ok_or_else(|| cfg_err(line, "key outside any section"))?;
        let entries = &mut out.get_mut(sec).expect("section registered").entries;
        let k = k.trim().to_string();
        if entries.contains_key(&k) {
            return Err(cfg_err(line, format!("repeated key '{k}'")));
        }
        entries.insert(
            k,
            Entry {
                value: v.trim().to_string(),
                line,
            },
        );
    }
    Ok(out)
}

/// Splits on commas outside parentheses.
fn split_top(s: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let (mut depth, mut cur) = (0i32, String::new());
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    if !cur.trim().is_empty() {
        parts.push(cur.trim().to_string());
    }
    parts
}

fn parse_seeds(e: &Entry) -> Result<Vec<u64>> {
    let bad = || cfg_err(e.line, format!("cannot parse seeds '{}'", e.value));
    let seeds: Vec<u64> = if let Some((a, b)) = e.value.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        (a..b).collect()
    } else {
        split_top(&e.value)
            .iter()
            .map(|s| s.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(cfg_err(e.line, "at least one seed is required"));
    }
    Ok(seeds)
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        v => Err(cfg_err(
            e.line,
            format!("expected true or false, got '{v}'"),
        )),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut secs = split_sections(text)?;
        let mut sec = |name: &str| {
            secs.remove(name).unwrap_or(Section {
                name: name.into(),
                entries: BTreeMap::new(),
            })
        };
        let d = Self::default();

        let mut s = sec("experiment");
        let name = s.take("name").map_or(d.name.clone(), |e| e.value);
        let env_name =
            s.take("env")
                .map_or(Ok("point".to_string()), |e| match e.value.as_str() {
                    "point" | "wind" => Ok(e.value),
                    v => Err(cfg_err(e.line, format!("unknown env '{v}'"))),
                })?;
        let seeds = s
            .take("seeds")
            .map_or(Ok(d.seeds.clone()), |e| parse_seeds(&e))?;
        let output = s.take("output").map(|e| PathBuf::from(e.value));
        s.finish()?;

        let mut s = sec("env");
        let env = if env_name == "point" {
            let p = PointNavEnv::default();
            Env::Point(PointNavEnv {
                horizon: s.parse("horizon", p.horizon)?,
                k: s.parse("k", p.k)?,
                delta: s.parse("delta", p.delta)?,
                max_step: s.parse("max_step", p.max_step)?,
                arena: s.parse("arena", p.arena)?,
                goal: p.goal,
            })
        } else {
            let w = WindNavEnv::default();
            Env::Wind(WindNavEnv {
                horizon: s.parse("horizon", w.horizon)?,
                k: s.parse("k", w.k)?,
                dt: s.parse("dt", w.dt)?,
                action_bound: s.parse("action_bound", w.action_bound)?,
                arena: s.parse("arena", w.arena)?,
                ..w
            })
        };
        let dense = s.take("dense").map_or(Ok(false), |e| parse_bool(&e))?;
        s.finish()?;
        if env.k() == 0 {
            return Err(Error::Config("env.k must be at least 1".into()));
        }

        let mut s = sec("discretization");
        let g = PolarGrid::default();
        let grid = PolarGrid {
            n_radii: s.parse("n_radii", g.n_radii)?,
            n_angles: s.parse("n_angles", g.n_angles)?,
            r_max: s.parse("r_max", g.r_max)?,
        };
        s.finish()?;
        grid.validate().map_err(|e| Error::Config(e.to_string()))?;

        let mut s = sec("tasks");
        let law = |e: &Entry| RadialLaw::parse(&e.value).map_err(|err| cfg_err(e.line, err));
        let train = s.take("train").map_or(Ok(d.train), |e| {
            law(&e).map(|radial| TaskSampler { radial })
        })?;
        let tests = match s.take("test") {
            None => d.tests.clone(),
            Some(e) => split_top(&e.value)
                .iter()
                .map(|t| {
                    law(&Entry {
                        value: t.clone(),
                        line: e.line,
                    })
                    .map(|radial| TaskSampler { radial })
                })
                .collect::<Result<_>>()?,
        };
        s.finish()?;
        if tests.is_empty() {
            return Err(Error::Config("tasks.test lists no distributions".into()));
        }

        let mut s = sec("population");
        let epsilons = match s.take("epsilons") {
            None => d.epsilons.clone(),
            Some(e) => match e.value.as_str() {
                "out_of_support" => EpsilonGrid::out_of_support_default(),
                "in_support" => EpsilonGrid::in_support_default(),
                v => {
                    let levels = split_top(v)
                        .iter()
                        .map(|x| {
                            x.parse::<f64>()
                                .map_err(|_| cfg_err(e.line, format!("bad epsilon '{x}'")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    EpsilonGrid::new(levels).map_err(|err| cfg_err(e.line, err))?
                }
            },
        };
        let disjoint_beta = match s.take("disjoint_beta") {
            None => None,
            Some(e) => Some(parse_beta(&e)?),
        };
        s.finish()?;

        let mut s = sec("trainer");
        let t = &d.trainer;
        let mut trainer = TrainerConfig {
            iterations: s.parse("iterations", t.iterations)?,
            step_policy: s.parse("step_policy", t.step_policy)?,
            step_adversary: s.parse("step_adversary", t.step_adversary)?,
            step_dual: s.parse("step_dual", t.step_dual)?,
            batch_tasks: s.parse("batch_tasks", t.batch_tasks)?,
            policy_inner_steps: s.parse("policy_inner_steps", t.policy_inner_steps)?,
            kl_tolerance: s.parse("kl_tolerance", t.kl_tolerance)?,
            window: s.parse("window", t.window)?,
            baseline_decay: s.parse("baseline_decay", t.baseline_decay)?,
            lambda_init: s.parse("lambda_init", t.lambda_init)?,
            policy_averaging: s.parse("policy_averaging", t.policy_averaging)?,
            k: env.k(),
            ..t.clone()
        };
        if let Some(e) = s.take("objective") {
            trainer.objective = match e.value.as_str() {
                "regret" => ObjectiveKind::Regret,
                "success" => ObjectiveKind::Success,
                v => return Err(cfg_err(e.line, format!("unknown objective '{v}'"))),
            };
        }
        if let Some(e) = s.take("gradient") {
            trainer.gradient_mode = match e.value.as_str() {
                "exact" => GradientMode::Exact,
                "score" => GradientMode::ScoreFunction,
                v => return Err(cfg_err(e.line, format!("unknown gradient mode '{v}'"))),
            };
        }
        if let Some(e) = s.take("trust_region") {
            let r: f64 = e
                .value
                .parse()
                .map_err(|_| cfg_err(e.line, "bad trust_region"))?;
            trainer.trust_region = Some(r);
        }
        if let Some(e) = s.take("warm_start") {
            trainer.warm_start = parse_bool(&e)?;
        }
        s.finish()?;
        trainer
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;

        let mut s = sec("model");
        let m = ModelConfig::default();
        let kind = match s.take("kind") {
            None => m.kind,
            Some(e) => match e.value.as_str() {
                "analytic" => ModelKind::Analytic,
                "vae" => ModelKind::Vae,
                "reweighted" => ModelKind::Reweighted,
                v => return Err(cfg_err(e.line, format!("unknown model '{v}'"))),
            },
        };
        let model = ModelConfig {
            kind,
            n_train: s.parse("n_train", m.n_train)?,
            latent_dim: s.parse("latent_dim", m.latent_dim)?,
            fit_steps: s.parse("fit_steps", m.fit_steps)?,
            learning_rate: s.parse("learning_rate", m.learning_rate)?,
            kl_weight: s.parse("kl_weight", m.kl_weight)?,
        };
        s.finish()?;
        if model.n_train == 0 || model.latent_dim == 0 {
            return Err(Error::Config(
                "model.n_train and model.latent_dim must be positive".into(),
            ));
        }

        let mut s = sec("selector");
        let sd = SelectorConfig::default();
        let kind = match s.take("kind") {
            None => sd.kind,
            Some(e) => match e.value.as_str() {
                "thompson" => SelectorKind::Thompson,
                "cem" => SelectorKind::Cem,
                v => return Err(cfg_err(e.line, format!("unknown selector '{v}'"))),
            },
        };
        let meta_episodes = s.parse("meta_episodes", sd.meta_episodes)?;
        let signal_name = s.take("signal");
        let lo: Option<f64> = s
            .take("return_lo")
            .map(|e| {
                e.value
                    .parse()
                    .map_err(|_| cfg_err(e.line, "bad return_lo"))
            })
            .transpose()?;
        let hi: Option<f64> = s
            .take("return_hi")
            .map(|e| {
                e.value
                    .parse()
                    .map_err(|_| cfg_err(e.line, "bad return_hi"))
            })
            .transpose()?;
        let signal = match signal_name.as_ref().map(|e| (e.value.as_str(), e.line)) {
            None | Some(("success", _)) => RewardSignal::SuccessRate,
            Some(("return", line)) => match (lo, hi) {
                (Some(lo), Some(hi)) => RewardSignal::NormalizedReturn { lo, hi },
                _ => {
                    return Err(cfg_err(
                        line,
                        "signal = return needs return_lo and return_hi",
                    ))
                }
            },
            Some((v, line)) => return Err(cfg_err(line, format!("unknown signal '{v}'"))),
        };
        signal
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let cem = CemConfig {
            iters: s.parse("cem_iters", sd.cem.iters)?,
            per_iter: s.parse("cem_per_iter", sd.cem.per_iter)?,
            elite_frac: s.parse("cem_elite_frac", sd.cem.elite_frac)?,
            sigma_min: s.parse("cem_sigma_min", sd.cem.sigma_min)?,
        };
        s.finish()?;
        cem.validate().map_err(|e| Error::Config(e.to_string()))?;
        if meta_episodes == 0 {
            return Err(Error::Config(
                "selector.meta_episodes must be positive".into(),
            ));
        }

        Ok(Self {
            name,
            env: EnvSpec { env, grid, dense },
            train,
            tests,
            epsilons,
            disjoint_beta,
            trainer,
            model,
            selector: SelectorConfig {
                kind,
                meta_episodes,
                signal,
                cem,
            },
            seeds,
            output,
        })
    }

    /// Meta-episodes per selector run.
    pub fn selector_budget(&self) -> usize {
        match self.selector.kind {
            SelectorKind::Thompson => self.selector.meta_episodes,
            SelectorKind::Cem => self.selector.cem.iters * self.selector.cem.per_iter,
        }
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let _ = writeln!(
            o,
            "[experiment]\nname = {}\nenv = {}",
            self.name,
            self.env.env.name()
        );
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(o, "seeds = {}", seeds.join(", "));
        if let Some(p) = &self.output {
            let _ = writeln!(o, "output = {}", p.display());
        }
        let _ = writeln!(o, "\n[env]");
        match self.env.env {
            Env::Point(p) => {
                let _ = writeln!(
                    o,
                    "horizon = {}\nk = {}\ndelta = {:?}\nmax_step = {:?}\narena = {:?}",
                    p.horizon, p.k, p.delta, p.max_step, p.arena
                );
            }
            Env::Wind(w) => {
                let _ = writeln!(
                    o,
                    "horizon = {}\nk = {}\ndt = {:?}\naction_bound = {:?}\narena = {:?}",
                    w.horizon, w.k, w.dt, w.action_bound, w.arena
                );
            }
        }
        let _ = writeln!(o, "dense = {}", self.env.dense);
        let g = self.env.grid;
        let _ = writeln!(
            o,
            "\n[discretization]\nn_radii = {}\nn_angles = {}\nr_max = {:?}",
            g.n_radii, g.n_angles, g.r_max
        );
        let tests: Vec<String> = self.tests.iter().map(|t| t.radial.to_string()).collect();
        let _ = writeln!(
            o,
            "\n[tasks]\ntrain = {}\ntest = {}",
            self.train.radial,
            tests.join(", ")
        );
        let _ = writeln!(
            o,
            "\n[population]\nepsilons = {}",
            list(self.epsilons.levels())
        );
        if let Some(b) = self.disjoint_beta {
            let _ = writeln!(o, "disjoint_beta = {b:?}");
        }
        let t = &self.trainer;
        let _ = writeln!(
            o,
            "\n[trainer]\niterations = {}\nstep_policy = {:?}\nstep_adversary = {:?}\nstep_dual = {:?}\nbatch_tasks = {}\npolicy_inner_steps = {}\nkl_tolerance = {:?}\nwindow = {}\nbaseline_decay = {:?}\nlambda_init = {:?}\npolicy_averaging = {:?}\nobjective = {}\ngradient = {}\nwarm_start = {}",
            t.iterations,
            t.step_policy,
            t.step_adversary,
            t.step_dual,
            t.batch_tasks,
            t.policy_inner_steps,
            t.kl_tolerance,
            t.window,
            t.baseline_decay,
            t.lambda_init,
            t.policy_averaging,
            match t.objective {
                ObjectiveKind::Regret => "regret",
                ObjectiveKind::Success => "success",
            },
            match t.gradient_mode {
                GradientMode::Exact => "exact",
                GradientMode::ScoreFunction => "score",
            },
            t.warm_start
        );
        if let Some(r) = t.trust_region {
            let _ = writeln!(o, "trust_region = {r:?}");
        }
        let m = &self.model;
        let kind = match m.kind {
            ModelKind::Analytic => "analytic",
            ModelKind::Vae => "vae",
            ModelKind::Reweighted => "reweighted",
        };
        let _ = writeln!(
            o,
            "\n[model]\nkind = {kind}\nn_train = {}\nlatent_dim = {}\nfit_steps = {}\nlearning_rate = {:?}\nkl_weight = {:?}",
            m.n_train, m.latent_dim, m.fit_steps, m.learning_rate, m.kl_weight
        );
        let s = &self.selector;
        let kind = match s.kind {
            SelectorKind::Thompson => "thompson",
            SelectorKind::Cem => "cem",
        };
        let _ = writeln!(
            o,
            "\n[selector]\nkind = {kind}\nmeta_episodes = {}",
            s.meta_episodes
        );
        match s.signal {
            RewardSignal::SuccessRate => {
                let _ = writeln!(o, "signal = success");
            }
            RewardSignal::NormalizedReturn { lo, hi } => {
                let _ = writeln!(o, "signal = return\nreturn_lo = {lo:?}\nreturn_hi = {hi:?}");
            }
        }
        let _ = writeln!(
            o,
            "cem_iters = {}\ncem_per_iter = {}\ncem_elite_frac = {:?}\ncem_sigma_min = {:?}",
            s.cem.iters, s.cem.per_iter, s.cem.elite_frac, s.cem.sigma_min
        );
        o
    }
}

fn parse_beta(e: &Entry) -> Result<f64> {
    match e.value.as_str() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        v => v
            .parse()
            .map_err(|_| cfg_err(e.line, format!("bad disjoint_beta '{v}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.trainer.k, 2);
        assert_eq!(
            c,
            ExperimentConfig {
                trainer: TrainerConfig {
                    k: 2,
                    ..c.trainer.clone()
                },
                ..ExperimentConfig::default()
            }
        );
    }

    #[test]
    fn parses_sections_and_lists() {
        let c = ExperimentConfig::parse(
            "# sweep\n[experiment]\nenv = wind\nseeds = 3..6\n[env]\ndt = 0.2 # coarser\n\
             [tasks]\ntrain = exp(5)\ntest = uniform(0, 0.1), exp(2)\n\
             [population]\nepsilons = 0, 0.25\ndisjoint_beta = -inf\n[selector]\nkind = cem\nsignal = return\nreturn_lo = -2\nreturn_hi = 0\n",
        )
        .unwrap();
        assert_eq!(c.seeds, vec![3, 4, 5]);
        assert!(matches!(c.env.env, Env::Wind(w) if w.dt == 0.2 && w.k == 1));
        assert_eq!(c.tests.len(), 2);
        assert_eq!(c.epsilons.levels(), &[0.0, 0.25]);
        assert_eq!(c.disjoint_beta, Some(f64::NEG_INFINITY));
        assert_eq!(c.selector.kind, SelectorKind::Cem);
        assert_eq!(c.selector_budget(), 250);
    }

    #[test]
    fn rejects_unknowns() {
        for bad in [
            "[experiment]\ncolour = red\n",
            "[nope]\n",
            "name = x\n",
            "[env]\ndt = 0.1\n",
            "[experiment]\nseeds = \n",
            "[trainer]\niterations = many\n",
            "[experiment]\nname = a\nname = b\n",
            "[tasks]\ntrain = uniform(1, 0)\n",
            "[selector]\nsignal = return\n",
            "[population]\nepsilons = 0.1, 0.2\n",
        ] {
            assert!(
                matches!(ExperimentConfig::parse(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn text_round_trip() {
        let mut c =
            ExperimentConfig::parse("[experiment]\nenv = wind\n[trainer]\ntrust_region = 0.5\n")
                .unwrap();
        c.output = Some("out/x".into());
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        let d = ExperimentConfig::parse("").unwrap();
        assert_eq!(ExperimentConfig::parse(&d.to_text()).unwrap(), d);
    }
}
