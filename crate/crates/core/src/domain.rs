//! Shared domain vocabulary: actions, transitions and feature embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{BsrError, Result};

pub const N_ACTIONS: usize = 4;

/// Tabular states are plain indices, `row * cols + col` for grid tasks.
pub type StateId = usize;

/// The four compass moves shared by every task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// (row, column) displacement on a grid; rows grow downwards.
    pub fn grid_delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

/// One experienced step, tagged with the context that selected the action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition<S> {
    pub state: S,
    pub action: Action,
    pub next_state: S,
    pub reward: f64,
    pub context: usize,
}

/// Tabular one-hot embedding.
pub fn one_hot(index: StateId, dim: usize) -> Result<Vec<f64>> {
    if index >= dim {
        return Err(BsrError::Config(format!(
            "state index {index} out of range for feature dimension {dim}"
        )));
    }
    let mut v = vec![0.0; dim];
    v[index] = 1.0;
    Ok(v)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy in nats of a probability vector.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|x| **x > 0.0).map(|x| -x * x.ln()).sum()
}
