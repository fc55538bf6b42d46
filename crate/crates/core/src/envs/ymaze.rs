//! Grid-world double Y-maze with three goal arms and two barrier positions.
//!
//! ```text
//! T # A # # # B # X      T, A, B: goals; X is folded into T
//! . # . # # # . # .
//! . L . # # # . R .      L, R: barrier cells
//! # # . # # # . # #
//! # # . . . . . # #
//! # # # # S # # # #      S: start box
//! ```

use rand::seq::SliceRandom;
use rand::Rng;

use super::grid::{GridLayout, GridTask, GridWorld};
use crate::domain::{Action, StateId};

pub const YMAZE_ROWS: usize = 6;
pub const YMAZE_COLS: usize = 9;

const LAYOUT: &str = "\
.#.###.#.
.#.###.#.
...###...
##.###.##
##.....##
####.####
";

/// The four trial types: goal on the left arm, the top goal with the right
/// route barred, the top goal with the left route barred, goal on the right
/// arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrialType {
    One,
    Two,
    Three,
    Four,
}

impl TrialType {
    pub const ALL: [TrialType; 4] = [TrialType::One, TrialType::Two, TrialType::Three, TrialType::Four];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<TrialType> {
        Self::ALL.get(i).copied()
    }

    /// Goal-location context: the two top-goal trial types share one.
    pub fn goal_context(self) -> usize {
        match self {
            TrialType::One => 0,
            TrialType::Two | TrialType::Three => 1,
            TrialType::Four => 2,
        }
    }

    pub fn is_barrier_trial(self) -> bool {
        matches!(self, TrialType::Two | TrialType::Three)
    }
}

#[derive(Clone, Debug)]
pub struct YMaze {
    layout: GridLayout,
    pub start: StateId,
    pub top: StateId,
    pub left_goal: StateId,
    pub right_goal: StateId,
    pub mirror: StateId,
    pub left_barrier: StateId,
    pub right_barrier: StateId,
}

impl Default for YMaze {
    fn default() -> Self {
        Self::new()
    }
}

impl YMaze {
    pub fn new() -> Self {
        let layout = GridLayout::parse(LAYOUT).expect("valid Y-maze layout");
        let at = |r, c| layout.index(r, c);
        YMaze {
            start: at(5, 4),
            top: at(0, 0),
            left_goal: at(0, 2),
            right_goal: at(0, 6),
            mirror: at(0, 8),
            left_barrier: at(2, 1),
            right_barrier: at(2, 7),
            layout,
        }
    }

    pub fn n_states(&self) -> usize {
        self.layout.n_cells()
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn goal(&self, tt: TrialType) -> StateId {
        match tt {
            TrialType::One => self.left_goal,
            TrialType::Two | TrialType::Three => self.top,
            TrialType::Four => self.right_goal,
        }
    }

    /// Dynamics for a trial type: barrier in place on the barred route, the
    /// top-right corner folded onto the top-left one.
    pub fn world(&self, tt: TrialType) -> GridWorld {
        let mut layout = self.layout.clone();
        match tt {
            TrialType::Two => layout.set_blocked(self.right_barrier, true),
            TrialType::Three => layout.set_blocked(self.left_barrier, true),
            _ => {}
        }
        let mut world = GridWorld::new(layout);
        world.redirect(self.mirror, self.top);
        let below_mirror = self.mirror + YMAZE_COLS;
        world.set_next(self.top, Action::Right, below_mirror);
        world.set_next(self.mirror, Action::Right, self.top);
        world
    }

    pub fn task(&self, tt: TrialType) -> GridTask {
        GridTask::single(self.start, self.goal(tt), self.n_states())
    }
}

/// Trial-type sequence of `blocks` blocks, each a random ordering of all four
/// types, so every block holds exactly three type changes.
pub fn block_schedule<R: Rng + ?Sized>(blocks: usize, rng: &mut R) -> Vec<[TrialType; 4]> {
    (0..blocks)
        .map(|_| {
            let mut b = TrialType::ALL;
            b.shuffle(rng);
            b
        })
        .collect()
}
