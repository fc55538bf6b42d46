//! Task environments: grid maze, puddle world, continuous maze, open-field
//! foraging and the Y-maze.

pub mod continuous;
pub mod grid;
pub mod ymaze;

pub use continuous::{ContinuousEnv, ContinuousMaze, ContinuousStep, Point, RbfEmbedding, TracedState};
pub use grid::{
    forage_value_mask, puddles_opposite, sample_cell_excluding, sample_cells, sample_start_goal,
    GridEnv, GridLayout, GridStep, GridTask, GridWorld, GOAL_REWARD, PUDDLE_PENALTY,
};
pub use ymaze::{block_schedule, TrialType, YMaze};
