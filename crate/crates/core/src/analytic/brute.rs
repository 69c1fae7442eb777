//! Grid oracles for the closed forms.
//!
//! Candidates are the simplex points whose coordinates are multiples of
//! `1/m`, enumerated in lexicographic order of their integer counts. The
//! first coordinate partitions the work; chunks are reduced in order with a
//! strict comparison, so the earliest (lowest lexicographic) optimum wins
//! regardless of how the chunks were scheduled.

use super::regret_value;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::task::{kl_categorical, CategoricalTaskDist, ClosedFormPolicy, GoalPolicy};

/// Largest goal count the grid oracles accept.
pub const BRUTE_FORCE_MAX_GOALS: usize = 6;

fn grid_units(n_goals: usize, grid_step: f64) -> Result<usize> {
    if n_goals > BRUTE_FORCE_MAX_GOALS {
        return Err(Error::GridTooLarge {
            n_goals,
            limit: BRUTE_FORCE_MAX_GOALS,
        });
    }
    if n_goals == 0 {
        return Err(Error::InvalidDistribution("no goals".into()));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "grid step {grid_step} not in (0, 1]"
        )));
    }
    let m = (1.0 / grid_step).round();
    if (m * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "1/grid_step = {} is not an integer",
            1.0 / grid_step
        )));
    }
    Ok(m as usize)
}

/// Nearest grid point to `p` in L1 (largest-remainder rounding, ties to the
/// lower index).
pub fn nearest_grid_point(p: &[f64], m: usize) -> Vec<f64> {
    let scaled: Vec<f64> = p.iter().map(|x| x * m as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (scaled[a] - scaled[a].floor(), scaled[b] - scaled[b].floor());
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(m.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts.iter().map(|&c| c as f64 / m as f64).collect()
}

struct Search<'a, F> {
    n: usize,
    m: usize,
    /// Optional L1 ball `(center, radius)` the candidates must lie in.
    ball: Option<(&'a [f64], f64)>,
    score: F,
    maximize: bool,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Search<'_, F> {
    fn better(&self, a: f64, b: f64) -> bool {
        if self.maximize {
            a > b
        } else {
            a < b
        }
    }

    fn run(&self, exec: Execution) -> Option<(Vec<f64>, f64)> {
        let chunks = exec.map(self.m + 1, |c0| self.chunk(c0));
        let mut best: Option<(Vec<f64>, f64)> = None;
        for cand in chunks.into_iter().flatten() {
            if best.as_ref().is_none_or(|(_, v)| self.better(cand.1, *v)) {
                best = Some(cand);
            }
        }
        best
    }

    fn chunk(&self, c0: usize) -> Option<(Vec<f64>, f64)> {
        let mut point = vec![0.0; self.n];
        let mut best = None;
        self.dfs(0, self.m, 0.0, &mut point, &mut best, Some(c0));
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        depth: usize,
        remaining: usize,
        l1: f64,
        point: &mut [f64],
        best: &mut Option<(Vec<f64>, f64)>,
        fixed: Option<usize>,
    ) {
        let h = 1.0 / self.m as f64;
        let last = depth + 1 == self.n;
        let range = match fixed {
            Some(c) if c > remaining || (last && c != remaining) => return,
            Some(c) => c..=c,
            None if last => remaining..=remaining,
            None => 0..=remaining,
        };
        for c in range {
            let x = c as f64 * h;
            point[depth] = x;
            let mut l1_here = l1;
            if let Some((center, radius)) = self.ball {
                l1_here += (x - center[depth]).abs();
                let rest_q = (remaining - c) as f64 * h;
                let rest_p: f64 = center[depth + 1..].iter().sum();
                if l1_here + (rest_q - rest_p).abs() > radius {
                    continue;
                }
            }
            if last {
                let v = (self.score)(point);
                if best.as_ref().is_none_or(|(_, b)| self.better(v, *b)) {
                    *best = Some((point.to_vec(), v));
                }
            } else {
                self.dfs(depth + 1, remaining - c, l1_here, point, best, None);
            }
        }
    }
}

/// Grid distribution inside the TV ball of radius `epsilon` around `p_d`
/// that maximizes the policy's expected regret.
///
/// The ball is widened by the TV distance from `p_d` to its nearest grid
/// point so it always contains at least one candidate.
pub fn brute_force_worst_case<P: GoalPolicy + ?Sized>(
    policy: &P,
    p_d: &CategoricalTaskDist,
    epsilon: f64,
    grid_step: f64,
    exec: Execution,
) -> Result<CategoricalTaskDist> {
    let n = p_d.len();
    if policy.n_goals() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: policy.n_goals(),
        });
    }
    let m = grid_units(n, grid_step)?;
    let anchor = nearest_grid_point(p_d.probs(), m);
    let d0 = crate::task::tv_distance(p_d.probs(), &anchor)?;
    let radius = 2.0 * (epsilon.max(0.0) + d0) + 1e-12;
    let pi = policy.probs();
    let search = Search {
        n,
        m,
        ball: Some((p_d.probs(), radius)),
        score: |q: &[f64]| regret_value(pi, q),
        maximize: true,
    };
    let (q, _) = search
        .run(exec)
        .expect("the nearest grid point lies in the ball");
    CategoricalTaskDist::from_masses(&q)
}

/// `max_q E_q[1/π]` over `TV(p, q) ≤ ε`: move up to `ε` of mass from the
/// lowest-regret goals onto the highest-regret goal.
pub fn tv_worst_case(regrets: &[f64], p: &[f64], epsilon: f64) -> f64 {
    let (top, &r_max) = regrets
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, r)| {
            if *r > *acc.1 {
                (i, r)
            } else {
                acc
            }
        });
    if epsilon > 0.0 && r_max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut value: f64 = p
        .iter()
        .zip(regrets)
        .map(|(&pi, &r)| if pi > 0.0 { pi * r } else { 0.0 })
        .sum();
    let mut budget = epsilon.min(1.0 - p[top]).max(0.0);
    // Donors in increasing (regret, index) order, found by selection so the
    // grid searches stay allocation-free.
    let mut last: Option<(f64, usize)> = None;
    while budget > 0.0 {
        let next = (0..p.len())
            .filter(|&i| i != top && last.is_none_or(|l| (regrets[i], i) > l))
            .min_by(|&a, &b| regrets[a].partial_cmp(&regrets[b]).unwrap().then(a.cmp(&b)));
        let Some(i) = next else { break };
        last = Some((regrets[i], i));
        let moved = p[i].min(budget);
        if moved > 0.0 && regrets[i] < r_max {
            value += moved * (r_max - regrets[i]);
        }
        budget -= moved;
    }
    value
}

/// `max_q E_q[r]` over `KL(p ‖ q) ≤ ε` for a fully supported `p`.
///
/// The maximizer is `q_i ∝ p_i/(η − r_i)` with `η > max r` chosen so the
/// constraint is tight; `η` is found by bisection on the monotone KL curve.
/// If the constraint cannot bind, all mass goes to the argmax set.
pub fn kl_worst_case(regrets: &[f64], p: &[f64], epsilon: f64) -> Result<(Vec<f64>, f64)> {
    if p.len() != regrets.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: regrets.len(),
        });
    }
    if p.iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidDistribution(
            "KL oracle needs full support".into(),
        ));
    }
    if regrets.iter().any(|r| !r.is_finite()) {
        let q = p.to_vec();
        return Ok((q, f64::INFINITY));
    }
    let value = |q: &[f64]| q.iter().zip(regrets).map(|(a, b)| a * b).sum::<f64>();
    let r_max = regrets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let r_min = regrets.iter().cloned().fold(f64::INFINITY, f64::min);
    if epsilon <= 0.0 || r_max - r_min <= 1e-15 * r_max.abs().max(1.0) {
        return Ok((p.to_vec(), value(p)));
    }
    let top_mass: f64 = p
        .iter()
        .zip(regrets)
        .filter(|(_, r)| **r == r_max)
        .map(|(x, _)| x)
        .sum();
    if -top_mass.ln() <= epsilon {
        let q: Vec<f64> = p
            .iter()
            .zip(regrets)
            .map(|(x, r)| if *r == r_max { x / top_mass } else { 0.0 })
            .collect();
        let v = value(&q);
        return Ok((q, v));
    }
    let tilt = |eta: f64| -> Vec<f64> {
        let m: Vec<f64> = p.iter().zip(regrets).map(|(x, r)| x / (eta - r)).collect();
        let z: f64 = m.iter().sum();
        m.into_iter().map(|x| x / z).collect()
    };
    let kl = |q: &[f64]| {
        kl_categorical(p, q)
            .map(|d| d.value())
            .unwrap_or(f64::INFINITY)
    };
    let span = r_max - r_min;
    let mut lo = 0.0f64; // offset above r_max: KL(lo) > ε
    let mut hi = span;
    while kl(&tilt(r_max + hi)) > epsilon {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kl(&tilt(r_max + mid)) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = tilt(r_max + hi);
    let v = value(&q);
    Ok((q, v))
}

fn regrets_of(pi: &[f64]) -> [f64; BRUTE_FORCE_MAX_GOALS] {
    let mut r = [0.0; BRUTE_FORCE_MAX_GOALS];
    for (r, &x) in r.iter_mut().zip(pi) {
        *r = if x > 0.0 { 1.0 / x } else { f64::INFINITY };
    }
    r
}

/// Grid policy minimizing `E_q[1/π]`.
pub fn brute_force_optimal_policy(
    dist: &CategoricalTaskDist,
    grid_step: f64,
    exec: Execution,
) -> Result<ClosedFormPolicy> {
    let n = dist.len();
    let m = grid_units(n, grid_step)?;
    let q = dist.probs();
    let search = Search {
        n,
        m,
        ball: None,
        score: |pi: &[f64]| regret_value(pi, q),
        maximize: false,
    };
    let (pi, _) = search.run(exec).expect("grid is non-empty");
    ClosedFormPolicy::from_masses(&pi)
}

/// Grid policy minimizing the worst-case regret over the TV ball of radius
/// `epsilon` around `p_d`; the inner maximum is exact.
pub fn brute_force_robust_policy(
    p_d: &CategoricalTaskDist,
    epsilon: f64,
    grid_step: f64,
    exec: Execution,
) -> Result<ClosedFormPolicy> {
    let n = p_d.len();
    let m = grid_units(n, grid_step)?;
    let p = p_d.probs();
    let score = |pi: &[f64]| tv_worst_case(&regrets_of(pi)[..n], p, epsilon);
    let (pi, _) = Search {
        n,
        m,
        ball: None,
        score,
        maximize: false,
    }
    .run(exec)
    .expect("grid is non-empty");
    ClosedFormPolicy::from_masses(&pi)
}

/// Grid policy minimizing the worst-case regret over the KL ball
/// `KL(p_d ‖ q) ≤ epsilon`; the inner maximum is exact.
pub fn brute_force_kl_robust_policy(
    p_d: &CategoricalTaskDist,
    epsilon: f64,
    grid_step: f64,
    exec: Execution,
) -> Result<ClosedFormPolicy> {
    let n = p_d.len();
    let m = grid_units(n, grid_step)?;
    let p = p_d.probs();
    if p.iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidDistribution(
            "KL oracle needs full support".into(),
        ));
    }
    let score = |pi: &[f64]| {
        if pi.iter().any(|&x| x <= 0.0) {
            return f64::INFINITY;
        }
        kl_worst_case(&regrets_of(pi)[..n], p, epsilon)
            .map(|(_, v)| v)
            .unwrap_or(f64::INFINITY)
    };
    let (pi, _) = Search {
        n,
        m,
        ball: None,
        score,
        maximize: false,
    }
    .run(exec)
    .expect("grid is non-empty");
    ClosedFormPolicy::from_masses(&pi)
}
