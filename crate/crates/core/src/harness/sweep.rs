//! End-to-end sweeps: population training per seed, then one selection run
//! and two fixed-level baselines per (test distribution, seed).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::chart::{emit_chart, ChartSpec, Series};
use super::config::{ExperimentConfig, ModelKind, SelectorKind};
use super::env::Env;
use super::episode::{expected_success_rate, PopulationOracle};
use super::sampler::{RadialLaw, TaskSampler};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{FitConfig, StructuredDynamicsModel, StructuredRewardModel, Trajectory};
use crate::rng::{path_stream, stream_rng};
use crate::selector::{cem_run, thompson_run, RewardOracle, SelectionLog};
use crate::trainer::{
    train_disjoint_support, train_robust_population, RobustPopulation, TaskSpace, TrainerConfig,
};

/// Rounds at the end of a selection run that decide the selected level.
pub const SELECTION_TAIL: usize = 50;

/// Evaluation phases, in output order.
pub const PHASES: [&str; 3] = ["adapt", "mid", "conservative"];

/// Training targets for `seed`.
fn train_targets(cfg: &ExperimentConfig, seed: u64) -> Vec<super::sampler::Task> {
    let mut rng = stream_rng(seed, path_stream(&[1]));
    (0..cfg.model.n_train)
        .map(|_| cfg.train.sample_with(&mut rng))
        .collect()
}

/// Lower Cholesky factor of the sample covariance, with its mean.
fn gaussian_fit(points: &[[f64; 2]]) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = points.len() as f64;
    let m = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let mut c = [[0.0; 2]; 2];
    for p in points {
        let d = [p[0] - m[0], p[1] - m[1]];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] += d[i] * d[j] / n;
            }
        }
    }
    let a = c[0][0].max(1e-12).sqrt();
    let b = c[1][0] / a;
    let d = (c[1][1] - b * b).max(1e-12).sqrt();
    (m, [[a, 0.0], [b, d]])
}

/// Builds the adversary's task space for one seed.
pub fn build_task_space(cfg: &ExperimentConfig, seed: u64) -> Result<TaskSpace> {
    let grid = cfg.env.grid;
    let tasks = train_targets(cfg, seed);
    let train_cells: Vec<usize> = tasks.iter().filter_map(|t| grid.cell(&t.target)).collect();
    if train_cells.is_empty() {
        return Err(Error::Config(
            "no training task falls inside the discretization".into(),
        ));
    }
    let n = grid.n_cells();
    match cfg.model.kind {
        ModelKind::Reweighted => TaskSpace::empirical(train_cells, n),
        ModelKind::Analytic => {
            let pts: Vec<[f64; 2]> = tasks.iter().map(|t| t.target).collect();
            let (m, l) = gaussian_fit(&pts);
            let decoder = move |z: &[f64]| {
                grid.cell(&[
                    m[0] + l[0][0] * z[0],
                    m[1] + l[1][0] * z[0] + l[1][1] * z[1],
                ])
            };
            TaskSpace::latent(Arc::new(decoder), 2, train_cells, n)
        }
        ModelKind::Vae => {
            let mut rng = stream_rng(seed, path_stream(&[4]));
            let demos: Vec<Trajectory> = tasks
                .iter()
                .map(|t| cfg.env.env.demo(t, &mut rng))
                .collect::<Result<_>>()?;
            let fit = FitConfig {
                steps: cfg.model.fit_steps,
                learning_rate: cfg.model.learning_rate,
                seed,
            };
            let d = cfg.model.latent_dim;
            match cfg.env.env {
                Env::Point(_) => {
                    let mut model = StructuredRewardModel::random(2, d, &mut rng);
                    model.kl_weight = cfg.model.kl_weight;
                    model.fit(&demos, &fit)?;
                    let decoder = move |z: &[f64]| grid.cell(&model.decode_goal(z));
                    TaskSpace::latent(Arc::new(decoder), d, train_cells, n)
                }
                Env::Wind(w) => {
                    let mut model = StructuredDynamicsModel::random(2, 2, d, &mut rng);
                    model.kl_weight = cfg.model.kl_weight;
                    model.fit(&demos, &fit)?;
                    let decoder = move |z: &[f64]| {
                        let s = model.shift(z);
                        grid.cell(&[s[0] / w.dt, s[1] / w.dt])
                    };
                    TaskSpace::latent(Arc::new(decoder), d, train_cells, n)
                }
            }
        }
    }
}

/// Trains the population for one seed.
pub fn train_population(
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Execution,
) -> Result<RobustPopulation> {
    let space = build_task_space(cfg, seed)?;
    let tcfg = TrainerConfig {
        seed,
        k: cfg.env.env.k(),
        ..cfg.trainer.clone()
    };
    match cfg.disjoint_beta {
        Some(b) => train_disjoint_support(&space, &cfg.epsilons, &tcfg, b),
        None => train_robust_population(&space, &cfg.epsilons, &tcfg, exec),
    }
}

/// Expected success rate of every population member on `test`.
pub fn true_means(cfg: &ExperimentConfig, pop: &RobustPopulation, test: &TaskSampler) -> Vec<f64> {
    pop.entries
        .iter()
        .map(|e| expected_success_rate(&e.policy, &cfg.env, test))
        .collect()
}

/// One selector run on `test`; `stream` separates independent runs.
pub fn run_selector(
    cfg: &ExperimentConfig,
    pop: &RobustPopulation,
    test: &TaskSampler,
    stream: u64,
) -> Result<SelectionLog> {
    let mut oracle = PopulationOracle {
        policies: pop.policies(),
        spec: cfg.env,
        sampler: *test,
    };
    let eps = pop.epsilons();
    match cfg.selector.kind {
        SelectorKind::Thompson => Ok(thompson_run(
            &eps,
            &mut oracle,
            cfg.selector.meta_episodes,
            stream,
            cfg.selector.signal,
        )?
        .log),
        SelectorKind::Cem => {
            let grid = crate::task::EpsilonGrid::new(eps)?;
            Ok(cem_run(
                &grid,
                &mut oracle,
                &cfg.selector.cem,
                stream,
                cfg.selector.signal,
            )?
            .1)
        }
    }
}

fn fixed_arm(
    pop: &RobustPopulation,
    cfg: &ExperimentConfig,
    test: &TaskSampler,
    arm: usize,
    stream: u64,
) -> SelectionLog {
    let mut oracle = PopulationOracle {
        policies: pop.policies(),
        spec: cfg.env,
        sampler: *test,
    };
    let mut rng = stream_rng(stream, 1);
    let mut log = SelectionLog::default();
    for t in 0..cfg.selector_budget() {
        let out = oracle.play(arm, &mut rng);
        log.records.push(crate::selector::SelectionRecord {
            meta_episode: t,
            arm,
            epsilon: pop.entries[arm].epsilon,
            ret: out.ret,
            success_rate: out.success_rate,
        });
    }
    log
}

/// Most played arm over the final rounds, ties to the lower index.
pub fn selected_arm(log: &SelectionLog, n_arms: usize) -> usize {
    let tail = &log.records[log.len().saturating_sub(SELECTION_TAIL)..];
    let mut counts = vec![0usize; n_arms];
    for r in tail {
        counts[r.arm] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn stderr(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64).sqrt()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Results of one (test distribution, seed) cell.
#[derive(Debug, Clone)]
struct CellResult {
    /// Log per phase, in [`PHASES`] order.
    logs: Vec<SelectionLog>,
    means: Vec<f64>,
}

/// Per-test-distribution aggregate over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub test: RadialLaw,
    /// `(mean, stderr)` of the average success rate per phase, in [`PHASES`] order.
    pub success: Vec<(f64, f64)>,
    /// Selected ε per seed.
    pub selected_epsilons: Vec<f64>,
    pub selected_epsilon_median: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub summary: Vec<SummaryRow>,
    pub numerical_failure: bool,
    pub files: Vec<PathBuf>,
}

fn shift_bounds(law: &RadialLaw) -> (String, String) {
    let (lo, hi) = law.bounds();
    (format!("{lo:?}"), format!("{hi:?}"))
}

/// Runs the sweep described by `cfg` into `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<SweepOutcome> {
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| Error::Config("no output directory configured".into()))?;
    run_experiment_in(cfg, &out, exec)
}

/// Runs the sweep into `out`. Outputs depend only on `(cfg, seeds)`.
pub fn run_experiment_in(
    cfg: &ExperimentConfig,
    out: &Path,
    exec: Execution,
) -> Result<SweepOutcome> {
    std::fs::create_dir_all(out)?;
    let seeds = &cfg.seeds;
    let pops: Vec<RobustPopulation> = exec
        .map(seeds.len(), |i| train_population(cfg, seeds[i], exec))
        .into_iter()
        .collect::<Result<_>>()?;
    let m = cfg.epsilons.len();
    let fixed = [m / 2, m - 1];

    let n_cells = cfg.tests.len() * seeds.len();
    let cells: Vec<CellResult> = exec
        .map(n_cells, |c| {
            let (d, si) = (c / seeds.len(), c % seeds.len());
            let (pop, test, seed) = (&pops[si], &cfg.tests[d], seeds[si]);
            let adapt = run_selector(cfg, pop, test, stream_seed(seed, 0))?;
            let mut logs = vec![adapt];
            for (p, &arm) in fixed.iter().enumerate() {
                logs.push(fixed_arm(
                    pop,
                    cfg,
                    test,
                    arm,
                    stream_seed(seed, p as u64 + 1),
                ));
            }
            Ok(CellResult {
                logs,
                means: true_means(cfg, pop, test),
            })
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let mut files = Vec::new();
    let sweep_path = out.join("sweep.csv");
    write_sweep_csv(&sweep_path, cfg, &cells)?;
    files.push(sweep_path);

    let means_path = out.join("arm_means.csv");
    write_means_csv(&means_path, cfg, &cells)?;
    files.push(means_path);

    let eps = cfg.epsilons.levels();
    let summary: Vec<SummaryRow> = cfg
        .tests
        .iter()
        .enumerate()
        .map(|(d, test)| {
            let cs = &cells[d * seeds.len()..(d + 1) * seeds.len()];
            let success = (0..PHASES.len())
                .map(|p| {
                    let per_seed: Vec<f64> = cs.iter().map(|c| mean_success(&c.logs[p])).collect();
                    (mean(&per_seed), stderr(&per_seed))
                })
                .collect();
            let selected: Vec<f64> = cs
                .iter()
                .map(|c| eps[selected_arm(&c.logs[0], m)])
                .collect();
            SummaryRow {
                test: test.radial,
                success,
                selected_epsilon_median: median(&selected),
                selected_epsilons: selected,
            }
        })
        .collect();
    let summary_path = out.join("summary.csv");
    write_summary_csv(&summary_path, cfg, &summary)?;
    files.push(summary_path.clone());

    let config_path = out.join("config.txt");
    std::fs::write(&config_path, cfg.to_text())?;
    files.push(config_path);
    for (pop, seed) in pops.iter().zip(seeds) {
        let p = out.join(format!("population_seed{seed}.ckpt"));
        pop.to_checkpoint().save(&p)?;
        files.push(p);
        let p = out.join(format!("train_log_seed{seed}.csv"));
        pop.write_log_csv(&p)?;
        files.push(p);
    }

    let series = PHASES
        .iter()
        .map(|p| Series {
            y: format!("{p}_success"),
            err: Some(format!("{p}_stderr")),
        })
        .collect();
    let chart = ChartSpec {
        title: format!("{}: success rate vs. test shift", cfg.name),
        x: "shift_mean".into(),
        series,
        x_label: "mean target radius".into(),
        y_label: "success rate".into(),
    };
    let p = out.join("success.svg");
    emit_chart(&summary_path, &chart, &p)?;
    files.push(p);
    let chart = ChartSpec {
        title: format!("{}: selected robustness level", cfg.name),
        x: "shift_mean".into(),
        series: vec![Series {
            y: "selected_epsilon_median".into(),
            err: None,
        }],
        x_label: "mean target radius".into(),
        y_label: "epsilon".into(),
    };
    let p = out.join("epsilon.svg");
    emit_chart(&summary_path, &chart, &p)?;
    files.push(p);

    Ok(SweepOutcome {
        summary,
        numerical_failure: pops.iter().any(RobustPopulation::has_numerical_failure),
        files,
    })
}

/// Test distributions share streams (common random numbers), so bands that
/// cover the same cells see the same meta-episodes.
fn stream_seed(seed: u64, phase: u64) -> u64 {
    path_stream(&[2, seed, phase])
}

fn mean_success(log: &SelectionLog) -> f64 {
    log.records.iter().map(|r| r.success_rate).sum::<f64>() / log.len() as f64
}

fn write_sweep_csv(path: &Path, cfg: &ExperimentConfig, cells: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "experiment",
        "env",
        "phase",
        "epsilon",
        "test_shift_lo",
        "test_shift_hi",
        "seed",
        "meta_episode",
        "arm",
        "return",
        "success_rate",
        "cumulative_regret",
    ])?;
    let n_seeds = cfg.seeds.len();
    for (c, cell) in cells.iter().enumerate() {
        let (d, si) = (c / n_seeds, c % n_seeds);
        let (lo, hi) = shift_bounds(&cfg.tests[d].radial);
        for (phase, log) in PHASES.iter().zip(&cell.logs) {
            let regret = log.cumulative_regret(&cell.means)?;
            for (r, cr) in log.records.iter().zip(regret) {
                w.write_record([
                    cfg.name.clone(),
                    cfg.env.env.name().to_string(),
                    phase.to_string(),
                    format!("{:?}", r.epsilon),
                    lo.clone(),
                    hi.clone(),
                    cfg.seeds[si].to_string(),
                    r.meta_episode.to_string(),
                    r.arm.to_string(),
                    format!("{:?}", r.ret),
                    format!("{:?}", r.success_rate),
                    format!("{cr:?}"),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_means_csv(path: &Path, cfg: &ExperimentConfig, cells: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "test_distribution",
        "seed",
        "arm",
        "epsilon",
        "expected_success",
    ])?;
    let n_seeds = cfg.seeds.len();
    for (c, cell) in cells.iter().enumerate() {
        let (d, si) = (c / n_seeds, c % n_seeds);
        for (arm, m) in cell.means.iter().enumerate() {
            w.write_record([
                cfg.tests[d].radial.to_string(),
                cfg.seeds[si].to_string(),
                arm.to_string(),
                format!("{:?}", cfg.epsilons.levels()[arm]),
                format!("{m:?}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_summary_csv(path: &Path, cfg: &ExperimentConfig, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "experiment",
        "env",
        "test_distribution",
        "test_shift_lo",
        "test_shift_hi",
        "shift_mean",
        "n_seeds",
    ]
    .map(String::from)
    .to_vec();
    for p in PHASES {
        header.push(format!("{p}_success"));
        header.push(format!("{p}_stderr"));
    }
    header.push("selected_epsilon_median".into());
    w.write_record(&header)?;
    for r in rows {
        let (lo, hi) = shift_bounds(&r.test);
        let mut rec = vec![
            cfg.name.clone(),
            cfg.env.env.name().to_string(),
            r.test.to_string(),
            lo,
            hi,
            format!("{:?}", r.test.mean()),
            cfg.seeds.len().to_string(),
        ];
        for (m, se) in &r.success {
            rec.push(format!("{m:?}"));
            rec.push(format!("{se:?}"));
        }
        rec.push(format!("{:?}", r.selected_epsilon_median));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable table of a sweep summary.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<22}", "test");
    for p in PHASES {
        let _ = write!(s, " {p:>14}");
    }
    let _ = writeln!(s, " {:>10}", "eps_median");
    for r in rows {
        let _ = write!(s, "{:<22}", r.test.to_string());
        for (m, se) in &r.success {
            let _ = write!(s, " {:>7.3}±{:<6.3}", m, se);
        }
        let _ = writeln!(s, " {:>10.3}", r.selected_epsilon_median);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::grid::PolarGrid;
    use crate::task::EpsilonGrid;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.env.grid = PolarGrid::new(4, 2, 0.8).unwrap();
        c.epsilons = EpsilonGrid::new(vec![0.0, 0.3]).unwrap();
        c.trainer.iterations = 60;
        c.model.n_train = 50;
        c.selector.meta_episodes = 40;
        c.seeds = vec![0, 1];
        c.tests = vec![
            c.train,
            TaskSampler {
                radial: RadialLaw::Uniform { lo: 0.6, hi: 0.7 },
            },
        ];
        c
    }

    #[test]
    fn single_level_population_always_plays_arm_zero() {
        let mut c = tiny();
        c.epsilons = EpsilonGrid::new(vec![0.0]).unwrap();
        c.tests = vec![c.train];
        let dir = tempfile::tempdir().unwrap();
        let o = run_experiment_in(&c, dir.path(), Execution::Serial).unwrap();
        assert_eq!(o.summary[0].selected_epsilons, vec![0.0, 0.0]);
        let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert!(text
            .lines()
            .skip(1)
            .all(|l| l.split(',').nth(8) == Some("0")));
    }

    #[test]
    fn serial_and_parallel_agree_bytewise() {
        let c = tiny();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment_in(&c, a.path(), Execution::Serial).unwrap();
        run_experiment_in(&c, b.path(), Execution::Parallel).unwrap();
        for f in ["sweep.csv", "summary.csv", "success.svg"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let text = std::fs::read_to_string(a.path().join("sweep.csv")).unwrap();
        // 2 tests x 2 seeds x 3 phases x 40 episodes
        assert_eq!(text.lines().count(), 1 + 2 * 2 * 3 * 40);
        for line in text.lines().skip(1) {
            let eps: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
            assert!(c.epsilons.levels().contains(&eps));
        }
    }

    #[test]
    fn model_kinds_build() {
        let mut c = tiny();
        for kind in [ModelKind::Reweighted, ModelKind::Vae] {
            c.model.kind = kind;
            c.model.fit_steps = 30;
            let space = build_task_space(&c, 0).unwrap();
            assert_eq!(space.n_cells(), 8);
        }
        c.env.env = Env::Wind(crate::harness::env::WindNavEnv::default());
        c.model.kind = ModelKind::Vae;
        assert_eq!(build_task_space(&c, 0).unwrap().n_cells(), 8);
    }

    #[test]
    fn gaussian_fit_recovers_covariance() {
        let pts = [[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [0.0, -2.0]];
        let (m, l) = gaussian_fit(&pts);
        assert_eq!(m, [0.0, 0.0]);
        assert!(
            (l[0][0] - 0.5f64.sqrt()).abs() < 1e-12
                && l[1][0].abs() < 1e-12
                && (l[1][1] - 2f64.sqrt()).abs() < 1e-12
        );
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[0.1, 0.3]), 0.2);
        assert_eq!(stderr(&[1.0]), 0.0);
        let log = SelectionLog {
            records: (0..60)
                .map(|t| crate::selector::SelectionRecord {
                    meta_episode: t,
                    arm: if t < 20 { 0 } else { 1 + t % 2 },
                    epsilon: 0.0,
                    ret: 0.0,
                    success_rate: 0.0,
                })
                .collect(),
        };
        assert_eq!(selected_arm(&log, 3), 1);
    }
}
