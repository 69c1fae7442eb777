use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use metarobust::analytic::{
    epsilon_bar, excess_regret, expected_regret, robust_policy, worst_case_shift, RobustSetup,
};
use metarobust::harness::chart::Series;
use metarobust::harness::config::ExperimentConfig;
use metarobust::harness::sweep::{
    format_summary, run_experiment_in, run_selector, selected_arm, train_population, true_means,
};
use metarobust::harness::{emit_chart, ChartSpec};
use metarobust::models::Checkpoint;
use metarobust::task::{make_concentrated, GoalSpace};
use metarobust::trainer::RobustPopulation;
use metarobust::{Error, Execution};

#[derive(Parser)]
#[command(
    name = "metarobust",
    version,
    about = "Robust meta-policy populations and test-time selection"
)]
struct Cli {
    /// Experiment config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the configured seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (output file for `chart`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run everything on one thread.
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form robust policies and excess-regret table.
    Analytic {
        #[arg(long, default_value_t = 10)]
        n_goals: usize,
        #[arg(long, default_value_t = 2)]
        n_core: usize,
        #[arg(long, default_value_t = 0.05)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.1, 0.2, 0.3, 0.4])]
        epsilons: Vec<f64>,
    },
    /// Train a robust population for one seed.
    Train,
    /// Run the configured selector on a saved population.
    Select {
        #[arg(long)]
        population: PathBuf,
        /// Index into the configured test distributions.
        #[arg(long, default_value_t = 0)]
        test: usize,
    },
    /// End-to-end sweep over test distributions and seeds.
    Sweep,
    /// Line chart from CSV columns.
    Chart {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long, value_delimiter = ',', required = true)]
        y: Vec<String>,
        /// Error columns, matched to `--y` by position.
        #[arg(long, value_delimiter = ',')]
        err: Vec<String>,
        #[arg(long, default_value = "")]
        title: String,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            e => Failure::Other(e.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn analytic(
    out: &Path,
    n_goals: usize,
    n_core: usize,
    beta: f64,
    epsilons: &[f64],
) -> Result<(), Failure> {
    let space = GoalSpace::new(n_goals, n_core)?;
    let p_d = make_concentrated(space, beta)?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let mut w = csv::Writer::from_path(out.join("analytic.csv")).map_err(Error::from)?;
    w.write_record([
        "epsilon1",
        "epsilon2",
        "epsilon_bar1",
        "epsilon_bar2",
        "excess_regret",
        "direct_difference",
    ])
    .map_err(Error::from)?;
    println!("|S| = {n_goals}, |S0| = {n_core}, beta = {beta}");
    println!(
        "{:>8} {:>8} {:>10} {:>10} {:>14} {:>14}",
        "eps1", "eps2", "ebar1", "ebar2", "excess", "direct"
    );
    for &e1 in epsilons {
        let s1 = RobustSetup::new(space, beta, e1)?;
        let q1 = worst_case_shift(&p_d, e1, n_core)?;
        let base = expected_regret(&robust_policy(&s1), q1.probs())?.expected_regret;
        for &e2 in epsilons {
            let s2 = RobustSetup::new(space, beta, e2)?;
            let ex = excess_regret(space, beta, e1, e2)?.value();
            let direct = expected_regret(&robust_policy(&s2), q1.probs())?.expected_regret - base;
            let (b1, b2) = (epsilon_bar(&s1), epsilon_bar(&s2));
            println!("{e1:>8.3} {e2:>8.3} {b1:>10.4} {b2:>10.4} {ex:>14.6} {direct:>14.6}");
            w.write_record([e1, e2, b1, b2, ex, direct].map(|v| format!("{v:?}")))
                .map_err(Error::from)?;
        }
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn check_population(pop: &RobustPopulation) -> Result<(), Failure> {
    if pop.has_numerical_failure() {
        let bad: Vec<String> = pop
            .entries
            .iter()
            .filter(|e| e.aborted.is_some() || !e.final_kl.is_finite())
            .map(|e| {
                format!(
                    "epsilon {}: {}",
                    e.epsilon,
                    e.aborted.as_deref().unwrap_or("non-finite KL")
                )
            })
            .collect();
        return Err(Failure::Numerical(bad.join("; ")));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let exec = if cli.serial {
        Execution::Serial
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Analytic {
            n_goals,
            n_core,
            beta,
            epsilons,
        } => analytic(&out_dir(cli, None), *n_goals, *n_core, *beta, epsilons),
        Command::Train => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, Some(&cfg));
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            let seed = cfg.seeds[0];
            let pop = train_population(&cfg, seed, exec)?;
            pop.to_checkpoint().save(&out.join("population.ckpt"))?;
            pop.write_log_csv(&out.join("train_log.csv"))?;
            for e in &pop.entries {
                println!(
                    "epsilon {:>5.3}  kl {:>8.5}  lambda {:>8.4}  converged {}",
                    e.epsilon, e.final_kl, e.lambda, e.converged
                );
            }
            check_population(&pop)
        }
        Command::Select { population, test } => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, Some(&cfg));
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            let pop = RobustPopulation::from_checkpoint(&Checkpoint::load(population)?)?;
            let dist = cfg.tests.get(*test).ok_or_else(|| {
                Failure::Config(format!(
                    "test index {test} out of range ({} configured)",
                    cfg.tests.len()
                ))
            })?;
            let log = run_selector(&cfg, &pop, dist, cfg.seeds[0])?;
            let means = true_means(&cfg, &pop, dist);
            log.write_csv(&out.join("selection.csv"), Some(&means))?;
            let freq = log.frequencies(pop.len());
            for (e, f) in pop.entries.iter().zip(&freq) {
                println!("epsilon {:>5.3}  played {:>6.3}", e.epsilon, f);
            }
            println!(
                "selected epsilon {}",
                pop.entries[selected_arm(&log, pop.len())].epsilon
            );
            Ok(())
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, Some(&cfg));
            let o = run_experiment_in(&cfg, &out, exec)?;
            print!("{}", format_summary(&o.summary));
            println!("wrote {} files to {}", o.files.len(), out.display());
            if o.numerical_failure {
                return Err(Failure::Numerical(
                    "a population level aborted or diverged".into(),
                ));
            }
            Ok(())
        }
        Command::Chart {
            csv,
            x,
            y,
            err,
            title,
        } => {
            if !err.is_empty() && err.len() != y.len() {
                return Err(Failure::Config(
                    "--err must list one column per --y column".into(),
                ));
            }
            let series = y
                .iter()
                .enumerate()
                .map(|(i, c)| Series {
                    y: c.clone(),
                    err: err.get(i).cloned(),
                })
                .collect();
            let spec = ChartSpec {
                title: title.clone(),
                x: x.clone(),
                series,
                x_label: x.clone(),
                y_label: y.join(", "),
            };
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("chart.svg"));
            emit_chart(csv, &spec, &out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
