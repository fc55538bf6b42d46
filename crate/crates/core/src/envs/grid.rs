//! Tabular grid worlds: layouts, deterministic dynamics and goal/puddle tasks.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;

use crate::domain::{Action, StateId, N_ACTIONS};
use crate::error::{BsrError, Result};

pub const GRID_SIDE: usize = 8;
pub const GOAL_REWARD: f64 = 10.0;
pub const PUDDLE_PENALTY: f64 = -1.0;

const DEFAULT_MAZE: &str = include_str!("../../layouts/maze8.txt");

/// Blocked/free cells of a rectangular grid, indexed `row * width + col`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLayout {
    width: usize,
    height: usize,
    blocked: Vec<bool>,
}

impl GridLayout {
    pub fn open(width: usize, height: usize) -> Self {
        GridLayout {
            width,
            height,
            blocked: vec![false; width * height],
        }
    }

    /// Parse an ASCII layout: `#` blocked, `.` free, one row per line from
    /// the top. Blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(BsrError::Layout("layout has no rows".into()));
        }
        let width = rows[0].chars().count();
        let mut blocked = Vec::with_capacity(width * rows.len());
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(BsrError::Layout(format!(
                    "row {r} has {} cells, expected {width}",
                    line.chars().count()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => blocked.push(true),
                    '.' => blocked.push(false),
                    other => {
                        return Err(BsrError::Layout(format!(
                            "unexpected character '{other}' at row {r}, column {c}"
                        )))
                    }
                }
            }
        }
        Ok(GridLayout {
            width,
            height: rows.len(),
            blocked,
        })
    }

    /// Parse and require the 8×8 shape used by the maze experiments, with a
    /// connected free region.
    pub fn parse_maze(text: &str) -> Result<Self> {
        let layout = Self::parse(text)?;
        if layout.width != GRID_SIDE || layout.height != GRID_SIDE {
            return Err(BsrError::Layout(format!(
                "maze layouts must be {GRID_SIDE}x{GRID_SIDE}, got {}x{}",
                layout.height, layout.width
            )));
        }
        if layout.free_cells().len() < 2 {
            return Err(BsrError::Layout("maze needs at least two free cells".into()));
        }
        if !layout.is_connected() {
            return Err(BsrError::Layout("free cells are not all connected".into()));
        }
        Ok(layout)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse_maze(&std::fs::read_to_string(path)?)
    }

    /// The bundled walled maze.
    pub fn default_maze() -> Self {
        Self::parse_maze(DEFAULT_MAZE).expect("bundled layout is valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_cells(&self) -> usize {
        self.blocked.len()
    }

    pub fn index(&self, row: usize, col: usize) -> StateId {
        row * self.width + col
    }

    pub fn coords(&self, s: StateId) -> (usize, usize) {
        (s / self.width, s % self.width)
    }

    pub fn is_blocked(&self, s: StateId) -> bool {
        self.blocked[s]
    }

    pub fn set_blocked(&mut self, s: StateId, blocked: bool) {
        self.blocked[s] = blocked;
    }

    pub fn free_cells(&self) -> Vec<StateId> {
        (0..self.n_cells()).filter(|&s| !self.blocked[s]).collect()
    }

    /// The cell reached by moving from `s`; walls and edges leave it in place.
    pub fn neighbour(&self, s: StateId, a: Action) -> StateId {
        let (r, c) = self.coords(s);
        let (dr, dc) = a.grid_delta();
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 || nr >= self.height as isize || nc >= self.width as isize {
            return s;
        }
        let n = self.index(nr as usize, nc as usize);
        if self.blocked[n] {
            s
        } else {
            n
        }
    }

    /// Quadrant 0..4 in reading order (top-left, top-right, bottom-left,
    /// bottom-right).
    pub fn quadrant(&self, s: StateId) -> usize {
        let (r, c) = self.coords(s);
        (r * 2 / self.height) * 2 + c * 2 / self.width
    }

    pub fn is_connected(&self) -> bool {
        match self.free_cells().first() {
            None => true,
            Some(&s) => {
                let world = GridWorld::new(self.clone());
                let seen = world.reachable_from(s);
                self.free_cells().iter().all(|&c| seen[c])
            }
        }
    }

    /// ASCII rendering in the parse format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(if self.blocked[self.index(r, c)] { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

/// Deterministic grid dynamics as a successor table, which allows
/// non-geometric links such as the Y-maze teleport.
#[derive(Clone, Debug)]
pub struct GridWorld {
    layout: GridLayout,
    next: Vec<[StateId; N_ACTIONS]>,
}

impl GridWorld {
    pub fn new(layout: GridLayout) -> Self {
        let next = (0..layout.n_cells())
            .map(|s| Action::ALL.map(|a| layout.neighbour(s, a)))
            .collect();
        GridWorld { layout, next }
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn n_states(&self) -> usize {
        self.next.len()
    }

    pub fn next_state(&self, s: StateId, a: Action) -> StateId {
        self.next[s][a.index()]
    }

    pub fn set_next(&mut self, s: StateId, a: Action, to: StateId) {
        self.next[s][a.index()] = to;
    }

    /// Redirect every transition into `from` so that it lands on `to`.
    pub fn redirect(&mut self, from: StateId, to: StateId) {
        for row in &mut self.next {
            for n in row.iter_mut() {
                if *n == from {
                    *n = to;
                }
            }
        }
    }

    pub fn reachable_from(&self, s: StateId) -> Vec<bool> {
        let mut seen = vec![false; self.n_states()];
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.next[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Shortest number of steps between two cells, if reachable.
    pub fn distance(&self, from: StateId, to: StateId) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.n_states()];
        let mut queue = VecDeque::from([from]);
        dist[from] = 0;
        while let Some(u) = queue.pop_front() {
            if u == to {
                return Some(dist[u]);
            }
            for &v in &self.next[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        None
    }
}

/// Cells of the quadrant diagonally opposite the goal, except walls.
pub fn puddles_opposite(layout: &GridLayout, goal: StateId) -> Vec<bool> {
    let q = 3 - layout.quadrant(goal);
    (0..layout.n_cells())
        .map(|s| !layout.is_blocked(s) && layout.quadrant(s) == q && s != goal)
        .collect()
}

/// Reward structure of one task: goal cells paying [`GOAL_REWARD`] once per
/// episode each, and optional puddle cells paying [`PUDDLE_PENALTY`] on every
/// entry. The episode ends when every goal has been collected.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTask {
    pub start: StateId,
    pub goals: Vec<StateId>,
    pub puddles: Vec<bool>,
}

impl GridTask {
    pub fn single(start: StateId, goal: StateId, n_states: usize) -> Self {
        GridTask {
            start,
            goals: vec![goal],
            puddles: vec![false; n_states],
        }
    }

    /// True reward weights over one-hot features: the goal reward on goal
    /// cells, the puddle penalty on puddles.
    pub fn reward_vector(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self
            .puddles
            .iter()
            .map(|&p| if p { PUDDLE_PENALTY } else { 0.0 })
            .collect();
        for &g in &self.goals {
            w[g] += GOAL_REWARD;
        }
        w
    }
}

/// Result of one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridStep {
    pub next_state: StateId,
    pub reward: f64,
    /// All goals collected.
    pub terminal: bool,
    /// The step cap was reached without terminating.
    pub truncated: bool,
}

/// A grid world running episodes of one task.
#[derive(Clone, Debug)]
pub struct GridEnv {
    world: GridWorld,
    task: GridTask,
    max_steps: usize,
    state: StateId,
    steps: usize,
    collected: Vec<bool>,
}

impl GridEnv {
    pub fn new(world: GridWorld, task: GridTask, max_steps: usize) -> Result<Self> {
        let mut env = GridEnv {
            state: task.start,
            collected: vec![false; task.goals.len()],
            world,
            task: task.clone(),
            max_steps,
            steps: 0,
        };
        env.set_task(task)?;
        Ok(env)
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    pub fn task(&self) -> &GridTask {
        &self.task
    }

    pub fn n_states(&self) -> usize {
        self.world.n_states()
    }

    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Goals already collected this episode, aligned with `task().goals`.
    pub fn collected(&self) -> &[bool] {
        &self.collected
    }

    pub fn set_world(&mut self, world: GridWorld) -> Result<()> {
        if world.n_states() != self.world.n_states() {
            return Err(BsrError::Dimension {
                expected: self.world.n_states(),
                got: world.n_states(),
            });
        }
        self.world = world;
        Ok(())
    }

    /// Install a new task; goals must be free and reachable from the start.
    pub fn set_task(&mut self, task: GridTask) -> Result<()> {
        let n = self.world.n_states();
        if task.start >= n || task.goals.iter().any(|&g| g >= n) || task.puddles.len() != n {
            return Err(BsrError::Config("task cells out of range".into()));
        }
        let layout = self.world.layout();
        if layout.is_blocked(task.start) || task.goals.iter().any(|&g| layout.is_blocked(g)) {
            return Err(BsrError::Config("task uses a blocked cell".into()));
        }
        if task.goals.contains(&task.start) {
            return Err(BsrError::Config("start coincides with a goal".into()));
        }
        let seen = self.world.reachable_from(task.start);
        if task.goals.iter().any(|&g| !seen[g]) {
            return Err(BsrError::Config("goal unreachable from start".into()));
        }
        self.collected = vec![false; task.goals.len()];
        self.task = task;
        self.state = self.task.start;
        self.steps = 0;
        Ok(())
    }

    /// Begin an episode at the task's start cell.
    pub fn reset(&mut self) -> StateId {
        self.reset_at(self.task.start)
    }

    pub fn reset_at(&mut self, start: StateId) -> StateId {
        self.state = start;
        self.steps = 0;
        self.collected.iter_mut().for_each(|c| *c = false);
        start
    }

    pub fn step(&mut self, a: Action) -> GridStep {
        let next = self.world.next_state(self.state, a);
        let mut reward = 0.0;
        if self.task.puddles[next] {
            reward += PUDDLE_PENALTY;
        }
        if let Some(i) = self.task.goals.iter().position(|&g| g == next) {
            if !self.collected[i] {
                self.collected[i] = true;
                reward += GOAL_REWARD;
            }
        }
        self.state = next;
        self.steps += 1;
        let terminal = self.collected.iter().all(|&c| c);
        GridStep {
            next_state: next,
            reward,
            terminal,
            truncated: !terminal && self.steps >= self.max_steps,
        }
    }

    /// Reward weights with the already-collected goals zeroed, for value
    /// evaluation only.
    pub fn value_mask(&self, w: &[f64]) -> Vec<f64> {
        forage_value_mask(w, &self.task.goals, &self.collected)
    }
}

/// Copy of `w` with the entries of collected reward cells set to zero.
pub fn forage_value_mask(w: &[f64], goals: &[StateId], collected: &[bool]) -> Vec<f64> {
    let mut out = w.to_vec();
    for (&g, &c) in goals.iter().zip(collected) {
        if c {
            out[g] = 0.0;
        }
    }
    out
}

/// Uniformly drawn distinct start and goal cells, the goal reachable from the
/// start.
pub fn sample_start_goal<R: Rng + ?Sized>(world: &GridWorld, rng: &mut R) -> (StateId, StateId) {
    let free = world.layout().free_cells();
    loop {
        let start = free[rng.random_range(0..free.len())];
        let goal = free[rng.random_range(0..free.len())];
        if start != goal && world.reachable_from(start)[goal] {
            return (start, goal);
        }
    }
}

/// `n` distinct free cells, uniformly without replacement.
pub fn sample_cells<R: Rng + ?Sized>(layout: &GridLayout, n: usize, rng: &mut R) -> Vec<StateId> {
    let free = layout.free_cells();
    rand::seq::index::sample(rng, free.len(), n.min(free.len()))
        .into_iter()
        .map(|i| free[i])
        .collect()
}

/// A free cell outside `exclude`.
pub fn sample_cell_excluding<R: Rng + ?Sized>(
    layout: &GridLayout,
    exclude: &[StateId],
    rng: &mut R,
) -> StateId {
    let free: Vec<StateId> = layout
        .free_cells()
        .into_iter()
        .filter(|s| !exclude.contains(s))
        .collect();
    free[rng.random_range(0..free.len())]
}
