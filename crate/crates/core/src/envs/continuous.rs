//! Continuous copy of the grid maze with noisy steps and an RBF embedding.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::grid::{GridLayout, GOAL_REWARD};
use crate::domain::Action;

pub const MAZE_SIDE: f64 = 3.0;
pub const STEP_LENGTH: f64 = 0.3;
pub const STEP_NOISE_VAR: f64 = 0.02;
pub const GOAL_RADIUS: f64 = 0.25;
pub const RBF_GRID: usize = 10;
pub const RBF_VAR: f64 = 0.1;
pub const TRACE_DECAY: f64 = 0.9;

pub type Point = [f64; 2];

/// Axis-aligned closed rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    /// Whether the segment `p → q` touches the rectangle (Liang-Barsky).
    pub fn hits_segment(&self, p: Point, q: Point) -> bool {
        let d = [q[0] - p[0], q[1] - p[1]];
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        let checks = [
            (-d[0], p[0] - self.x0),
            (d[0], self.x1 - p[0]),
            (-d[1], p[1] - self.y0),
            (d[1], self.y1 - p[1]),
        ];
        for (den, num) in checks {
            if den == 0.0 {
                if num < 0.0 {
                    return false;
                }
            } else {
                let t = num / den;
                if den < 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

/// Result of one continuous step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuousStep {
    pub position: Point,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

/// Square maze of side [`MAZE_SIDE`] whose walls are the blocked cells of a
/// grid layout scaled to the continuous extent. `x` runs along columns and
/// `y` along rows (downwards), matching the grid action directions.
#[derive(Clone, Debug)]
pub struct ContinuousMaze {
    side: f64,
    walls: Vec<Rect>,
    noise_sd: f64,
}

impl ContinuousMaze {
    pub fn from_layout(layout: &GridLayout) -> Self {
        let cw = MAZE_SIDE / layout.width() as f64;
        let ch = MAZE_SIDE / layout.height() as f64;
        let walls = (0..layout.n_cells())
            .filter(|&s| layout.is_blocked(s))
            .map(|s| {
                let (r, c) = layout.coords(s);
                Rect {
                    x0: c as f64 * cw,
                    y0: r as f64 * ch,
                    x1: (c + 1) as f64 * cw,
                    y1: (r + 1) as f64 * ch,
                }
            })
            .collect();
        ContinuousMaze {
            side: MAZE_SIDE,
            walls,
            noise_sd: STEP_NOISE_VAR.sqrt(),
        }
    }

    /// Disable step noise (deterministic moves).
    pub fn without_noise(mut self) -> Self {
        self.noise_sd = 0.0;
        self
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn walls(&self) -> &[Rect] {
        &self.walls
    }

    /// Strictly inside the outer boundary and not touching any wall.
    pub fn is_free(&self, p: Point) -> bool {
        p[0] > 0.0
            && p[0] < self.side
            && p[1] > 0.0
            && p[1] < self.side
            && !self.walls.iter().any(|w| w.contains(p))
    }

    pub fn path_clear(&self, p: Point, q: Point) -> bool {
        self.is_free(q) && !self.walls.iter().any(|w| w.hits_segment(p, q))
    }

    /// Move by one noisy step; moves that would touch a wall leave the agent
    /// in place.
    pub fn move_from<R: Rng + ?Sized>(&self, p: Point, a: Action, rng: &mut R) -> Point {
        let (dy, dx) = a.grid_delta();
        let mut q = [p[0] + STEP_LENGTH * dx as f64, p[1] + STEP_LENGTH * dy as f64];
        if self.noise_sd > 0.0 {
            let n = Normal::new(0.0, self.noise_sd).expect("positive sd");
            q[0] += n.sample(rng);
            q[1] += n.sample(rng);
        }
        if self.path_clear(p, q) {
            q
        } else {
            p
        }
    }

    pub fn sample_free<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        loop {
            let p = [rng.random::<f64>() * self.side, rng.random::<f64>() * self.side];
            if self.is_free(p) {
                return p;
            }
        }
    }

    /// Start and goal in free space, the start outside the goal radius.
    pub fn sample_start_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> (Point, Point) {
        loop {
            let start = self.sample_free(rng);
            let goal = self.sample_free(rng);
            if distance(start, goal) >= GOAL_RADIUS {
                return (start, goal);
            }
        }
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Gaussian radial basis functions on a regular lattice of centres.
#[derive(Clone, Debug)]
pub struct RbfEmbedding {
    centres: Vec<Point>,
    var: f64,
    scale: f64,
}

impl RbfEmbedding {
    /// `RBF_GRID²` centres at cell midpoints of the maze, each with variance
    /// [`RBF_VAR`] and peak `1 / (2π · var · 10)`.
    pub fn standard() -> Self {
        let spacing = MAZE_SIDE / RBF_GRID as f64;
        let mut centres = Vec::with_capacity(RBF_GRID * RBF_GRID);
        for i in 0..RBF_GRID {
            for j in 0..RBF_GRID {
                centres.push([(j as f64 + 0.5) * spacing, (i as f64 + 0.5) * spacing]);
            }
        }
        RbfEmbedding {
            centres,
            var: RBF_VAR,
            scale: 1.0 / (2.0 * std::f64::consts::PI * RBF_VAR * 10.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.centres.len()
    }

    pub fn centres(&self) -> &[Point] {
        &self.centres
    }

    pub fn embed(&self, p: Point) -> Vec<f64> {
        self.centres
            .iter()
            .map(|c| {
                let d2 = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2);
                self.scale * (-d2 / (2.0 * self.var)).exp()
            })
            .collect()
    }
}

/// State vector: current embedding plus a discounted trace of the past ones.
#[derive(Clone, Debug)]
pub struct TracedState {
    decay: f64,
    trace: Vec<f64>,
}

impl TracedState {
    pub fn new(dim: usize) -> Self {
        TracedState {
            decay: TRACE_DECAY,
            trace: vec![0.0; dim],
        }
    }

    pub fn reset(&mut self) {
        self.trace.iter_mut().for_each(|x| *x = 0.0);
    }

    /// Fold in a new activation and return the resulting state vector.
    pub fn observe(&mut self, phi: &[f64]) -> &[f64] {
        for (t, p) in self.trace.iter_mut().zip(phi) {
            *t = p + self.decay * *t;
        }
        &self.trace
    }

    pub fn value(&self) -> &[f64] {
        &self.trace
    }
}

/// Continuous maze running episodes towards one goal.
#[derive(Clone, Debug)]
pub struct ContinuousEnv {
    maze: ContinuousMaze,
    embedding: RbfEmbedding,
    traced: TracedState,
    start: Point,
    goal: Point,
    position: Point,
    steps: usize,
    max_steps: usize,
}

impl ContinuousEnv {
    pub fn new(maze: ContinuousMaze, start: Point, goal: Point, max_steps: usize) -> Self {
        let embedding = RbfEmbedding::standard();
        let traced = TracedState::new(embedding.dim());
        ContinuousEnv {
            maze,
            embedding,
            traced,
            start,
            goal,
            position: start,
            steps: 0,
            max_steps,
        }
    }

    pub fn maze(&self) -> &ContinuousMaze {
        &self.maze
    }

    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }

    pub fn goal(&self) -> Point {
        self.goal
    }

    pub fn position(&self) -> Point {
        self.position
    }

    pub fn set_task(&mut self, start: Point, goal: Point) {
        self.start = start;
        self.goal = goal;
    }

    /// Begin an episode; returns the initial state vector.
    pub fn reset(&mut self) -> Vec<f64> {
        self.position = self.start;
        self.steps = 0;
        self.traced.reset();
        let phi = self.embedding.embed(self.position);
        self.traced.observe(&phi).to_vec()
    }

    /// Step and return the outcome with the new state vector.
    pub fn step<R: Rng + ?Sized>(&mut self, a: Action, rng: &mut R) -> (ContinuousStep, Vec<f64>) {
        self.position = self.maze.move_from(self.position, a, rng);
        self.steps += 1;
        let terminal = distance(self.position, self.goal) < GOAL_RADIUS;
        let phi = self.embedding.embed(self.position);
        let state = self.traced.observe(&phi).to_vec();
        (
            ContinuousStep {
                position: self.position,
                reward: if terminal { GOAL_REWARD } else { 0.0 },
                terminal,
                truncated: !terminal && self.steps >= self.max_steps,
            },
            state,
        )
    }
}
