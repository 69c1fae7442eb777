use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;

use super::grid::PolarGrid;
use super::sampler::Task;
use crate::error::Result;
use crate::models::Trajectory;
use crate::rng::StreamRng;

fn clamp2(v: [f64; 2], bound: f64) -> [f64; 2] {
    [v[0].clamp(-bound, bound), v[1].clamp(-bound, bound)]
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Sparse point navigation: reward 1 within `delta` of the goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointNavEnv {
    pub delta: f64,
    pub horizon: usize,
    pub k: usize,
    /// Per-step movement bound (∞-norm).
    pub max_step: f64,
    /// Positions live in `[−arena, arena]²`.
    pub arena: f64,
    pub goal: [f64; 2],
}

impl Default for PointNavEnv {
    fn default() -> Self {
        Self {
            delta: 0.05,
            horizon: 60,
            k: 2,
            max_step: 0.05,
            arena: 1.0,
            goal: [0.0, 0.0],
        }
    }
}

impl PointNavEnv {
    pub fn step(&self, s: [f64; 2], a: [f64; 2]) -> [f64; 2] {
        let a = clamp2(a, self.max_step);
        clamp2([s[0] + a[0], s[1] + a[1]], self.arena)
    }

    pub fn reward(&self, s: [f64; 2]) -> f64 {
        f64::from(dist(&s, &self.goal) <= self.delta)
    }

    /// Straight-line demonstration from the origin to the goal; `horizon`
    /// states, each with the action taken there and its reward.
    pub fn demo(&self) -> Result<Trajectory> {
        let mut s = [0.0, 0.0];
        let (mut states, mut actions, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..self.horizon {
            let a = clamp2([self.goal[0] - s[0], self.goal[1] - s[1]], self.max_step);
            states.push(s.to_vec());
            actions.push(a.to_vec());
            rewards.push(self.reward(s));
            s = self.step(s, a);
        }
        Trajectory::new(states, actions, rewards)
    }
}

/// Wind navigation: a single integrator pushed by a task-specific wind
/// toward a goal fixed across tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindNavEnv {
    pub wind: [f64; 2],
    pub horizon: usize,
    pub k: usize,
    pub goal: [f64; 2],
    pub dt: f64,
    /// Action bound (∞-norm).
    pub action_bound: f64,
    pub arena: f64,
}

impl Default for WindNavEnv {
    fn default() -> Self {
        Self {
            wind: [0.0, 0.0],
            horizon: 25,
            k: 1,
            goal: [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
            dt: 0.1,
            action_bound: 0.1,
            arena: 1.0,
        }
    }
}

/// `s' = s + a·dt + w·dt` with the action clamped to its bound and the
/// result clamped to the arena.
pub fn wind_step(env: &WindNavEnv, s: [f64; 2], a: [f64; 2]) -> [f64; 2] {
    let a = clamp2(a, env.action_bound);
    clamp2(
        [
            s[0] + (a[0] + env.wind[0]) * env.dt,
            s[1] + (a[1] + env.wind[1]) * env.dt,
        ],
        env.arena,
    )
}

impl WindNavEnv {
    pub fn reward(&self, s: [f64; 2]) -> f64 {
        -dist(&s, &self.goal)
    }

    /// Random bounded actions from the origin.
    pub fn demo(&self, rng: &mut StreamRng) -> Result<Trajectory> {
        let mut s = [0.0, 0.0];
        let (mut states, mut actions, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
        let b = self.action_bound;
        for _ in 0..self.horizon {
            let a = [rng.random_range(-b..=b), rng.random_range(-b..=b)];
            states.push(s.to_vec());
            actions.push(a.to_vec());
            rewards.push(self.reward(s));
            s = wind_step(self, s, a);
        }
        Trajectory::new(states, actions, rewards)
    }
}

/// Environment family; the `goal`/`wind` fields act as templates and are
/// overwritten per task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Env {
    Point(PointNavEnv),
    Wind(WindNavEnv),
}

impl Env {
    pub fn k(&self) -> usize {
        match self {
            Env::Point(e) => e.k,
            Env::Wind(e) => e.k,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Env::Point(_) => "point",
            Env::Wind(_) => "wind",
        }
    }

    pub fn with_task(&self, task: &Task) -> Env {
        match *self {
            Env::Point(e) => Env::Point(PointNavEnv {
                goal: task.target,
                ..e
            }),
            Env::Wind(e) => Env::Wind(WindNavEnv {
                wind: task.target,
                ..e
            }),
        }
    }

    pub fn demo(&self, task: &Task, rng: &mut StreamRng) -> Result<Trajectory> {
        match self.with_task(task) {
            Env::Point(e) => e.demo(),
            Env::Wind(e) => e.demo(rng),
        }
    }
}

/// Environment plus the goal discretization policies search over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub env: Env,
    pub grid: PolarGrid,
    /// Negative-distance returns instead of binary success.
    pub dense: bool,
}

impl EnvSpec {
    pub fn new(env: Env, grid: PolarGrid) -> Self {
        Self {
            env,
            grid,
            dense: false,
        }
    }

    /// Dense return for visiting `cell` when the true target is `target`.
    pub fn dense_return(&self, cell: usize, target: &[f64; 2]) -> f64 {
        -dist(&self.grid.center(cell), target)
    }
}
