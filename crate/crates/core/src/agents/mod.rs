//! The agent zoo: inferred-context agents (BSR, BSR2, GSR) and the SSR, SSR+,
//! EW, KQ and GPI baselines, in tabular and network form.

mod context;
mod neural;
mod tabular;

pub use context::{ContextModel, FilterTraceRow};
pub use neural::NeuralAgent;
pub use tabular::{agent_step, StepRecord, TabularAgent};

use rand::Rng;

use crate::config::OffsetMode;
use crate::domain::{argmax, Action, N_ACTIONS};
use crate::sr::SuccessorMap;

/// Exploration rate for an episode: linear from 1 down towards 0 over
/// `anneal_episodes`, never below `target`.
pub fn epsilon_schedule(episode: usize, anneal_episodes: usize, target: f64) -> f64 {
    let eps = if anneal_episodes == 0 {
        0.0
    } else {
        1.0 - episode as f64 / anneal_episodes as f64
    };
    eps.max(target).min(1.0)
}

/// Linear anneal from `start` to `end` over `episodes`, constant afterwards.
pub fn alpha_cr_schedule(episode: usize, start: f64, end: f64, episodes: usize) -> f64 {
    if episodes == 0 || episode >= episodes {
        return end;
    }
    start + (end - start) * episode as f64 / episodes as f64
}

/// Shift every context's reward weights by the exploration offset.
pub fn apply_exploration_offset(
    w: &mut [Vec<f64>],
    w_cr: &[Vec<f64>],
    c_ws: f64,
    alpha_ws: f64,
    mode: OffsetMode,
) {
    match mode {
        OffsetMode::None => {}
        OffsetMode::Constant => {
            let d = alpha_ws * c_ws;
            for wj in w.iter_mut() {
                wj.iter_mut().for_each(|x| *x += d);
            }
        }
        OffsetMode::ConstantCr => {
            for (wj, cr) in w.iter_mut().zip(w_cr) {
                for (x, c) in wj.iter_mut().zip(cr) {
                    *x += alpha_ws * (c_ws + c);
                }
            }
        }
    }
}

/// ε-greedy over action values; greedy ties go to the lowest action.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64; N_ACTIONS], epsilon: f64, rng: &mut R) -> Action {
    if rng.random::<f64>() < epsilon {
        Action::ALL[rng.random_range(0..N_ACTIONS)]
    } else {
        Action::ALL[argmax(q)]
    }
}

/// Sample a context index from belief weights.
pub fn sample_context<R: Rng + ?Sized>(omega: &[f64], rng: &mut R) -> usize {
    crate::crfilter::sample_discrete(omega, rng)
}

/// Action values of a GPI agent: for each action the maximum over the given
/// maps, each evaluated with its own reward weights.
pub fn gpi_q_values(maps: &[&SuccessorMap], ws: &[&[f64]], s: usize) -> [f64; N_ACTIONS] {
    let mut best = [f64::NEG_INFINITY; N_ACTIONS];
    for (m, w) in maps.iter().zip(ws) {
        let q = m.q_values(s, w).expect("matching dimensions");
        for (b, v) in best.iter_mut().zip(q) {
            *b = b.max(v);
        }
    }
    best
}

/// ε-greedy action over the GPI values of all stored maps.
pub fn gpi_select_action<R: Rng + ?Sized>(
    maps: &[&SuccessorMap],
    ws: &[&[f64]],
    s: usize,
    epsilon: f64,
    rng: &mut R,
) -> Action {
    epsilon_greedy(&gpi_q_values(maps, ws, s), epsilon, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, RngRole};
    use approx::assert_relative_eq;

    #[test]
    fn epsilon_schedule_examples() {
        assert_eq!(epsilon_schedule(0, 250, 0.0), 1.0);
        assert_eq!(epsilon_schedule(250, 250, 0.0), 0.0);
        assert_eq!(epsilon_schedule(1000, 250, 0.0), 0.0);
        assert_relative_eq!(epsilon_schedule(125, 250, 0.0), 0.5);
        assert_relative_eq!(epsilon_schedule(225, 250, 0.2), 0.2);
        assert_relative_eq!(epsilon_schedule(100, 250, 0.2), 0.6);
    }

    #[test]
    fn alpha_cr_schedule_examples() {
        assert_eq!(alpha_cr_schedule(0, 0.15, 0.0, 6000), 0.15);
        assert_relative_eq!(alpha_cr_schedule(4000, 0.005, 0.001, 4000), 0.001);
        assert_relative_eq!(alpha_cr_schedule(2000, 0.005, 0.001, 4000), 0.003);
        assert_relative_eq!(alpha_cr_schedule(9000, 0.005, 0.001, 4000), 0.001);
    }

    #[test]
    fn offset_modes() {
        let mut w = vec![vec![0.0; 3]; 2];
        let cr = vec![vec![0.0, 5.0, 0.0], vec![0.0; 3]];
        apply_exploration_offset(&mut w, &cr, 1.0, 0.01, OffsetMode::None);
        assert!(w.iter().flatten().all(|x| *x == 0.0));
        apply_exploration_offset(&mut w, &cr, 1.0, 0.01, OffsetMode::Constant);
        assert!(w.iter().flatten().all(|x| (*x - 0.01).abs() < 1e-15));
        let mut w = vec![vec![0.0; 3]; 2];
        apply_exploration_offset(&mut w, &cr, 1.0, 0.01, OffsetMode::ConstantCr);
        assert_relative_eq!(w[0][1], 0.06, epsilon = 1e-15);
        assert_relative_eq!(w[0][0], 0.01, epsilon = 1e-15);
        assert_relative_eq!(w[1][1], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn cr_offset_shifts_greedy_choice() {
        // Two reachable cells: Up leads to cell 0, Down to cell 1. Map rows
        // are one-step occupancies, the CR map favours cell 1.
        let mut m = SuccessorMap::zeros(2, 2);
        m.row_mut(0, Action::Up)[0] = 1.0;
        m.row_mut(0, Action::Down)[1] = 1.0;
        let mut w = vec![vec![0.0, 0.0]];
        let cr = vec![vec![0.0, 5.0]];
        assert_eq!(m.greedy_action(0, &w[0]), Action::Up);
        apply_exploration_offset(&mut w, &cr, 1.0, 0.01, OffsetMode::ConstantCr);
        assert_eq!(m.greedy_action(0, &w[0]), Action::Down);
    }

    #[test]
    fn pure_exploration_is_uniform() {
        let mut rng = stream(2, RngRole::Action);
        let q = [5.0, 0.0, 0.0, 0.0];
        let mut counts = [0usize; 4];
        let n = 40_000;
        for _ in 0..n {
            counts[epsilon_greedy(&q, 1.0, &mut rng).index()] += 1;
        }
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() < 4.0 * sd, "{counts:?}");
        }
        assert_eq!(epsilon_greedy(&q, 0.0, &mut rng), Action::Up);
    }

    #[test]
    fn context_sampling_matches_omega() {
        let omega = [0.1, 0.2, 0.3, 0.4];
        let mut rng = stream(5, RngRole::Action);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_context(&omega, &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(omega) {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
        assert_eq!(sample_context(&[0.0, 0.0, 1.0, 0.0], &mut rng), 2);
    }

    #[test]
    fn gpi_single_map_is_plain_greedy() {
        let mut m = SuccessorMap::zeros(3, 3);
        m.row_mut(1, Action::Left)[0] = 1.0;
        m.row_mut(1, Action::Right)[2] = 1.0;
        let w = [0.0, 0.0, 1.0];
        let mut rng = stream(0, RngRole::Action);
        assert_eq!(gpi_select_action(&[&m], &[&w], 1, 0.0, &mut rng), m.greedy_action(1, &w));
    }

    #[test]
    fn gpi_follows_dominant_map() {
        let mut a = SuccessorMap::zeros(3, 3);
        a.row_mut(1, Action::Left)[0] = 1.0;
        let mut b = SuccessorMap::zeros(3, 3);
        b.row_mut(1, Action::Right)[2] = 0.1;
        let w = [1.0, 0.0, 1.0];
        let mut rng = stream(0, RngRole::Action);
        let act = gpi_select_action(&[&a, &b], &[&w, &w], 1, 0.0, &mut rng);
        assert_eq!(act, Action::Left);
    }

    #[test]
    fn gpi_prefers_broad_wrong_map_where_sampling_does_not() {
        // Three cells in a line, 0 - 1 - 2, agent at 1, reward at 2.
        // The sharp map from the current task puts occupancy 0.9 on the
        // rewarded cell after Right. A broadly tuned map from an old task
        // spreads large occupancy over cells 0 and 2 after Left.
        let mut sharp = SuccessorMap::zeros(3, 3);
        sharp.row_mut(1, Action::Right)[2] = 0.9;
        sharp.row_mut(1, Action::Left)[0] = 0.9;
        let mut broad = SuccessorMap::zeros(3, 3);
        broad.row_mut(1, Action::Left).copy_from_slice(&[3.0, 1.0, 1.5]);
        broad.row_mut(1, Action::Right).copy_from_slice(&[1.0, 1.0, 1.0]);
        let w = [0.0, 0.0, 1.0];
        let mut rng = stream(0, RngRole::Action);
        let gpi = gpi_select_action(&[&sharp, &broad], &[&w, &w], 1, 0.0, &mut rng);
        assert_eq!(gpi, Action::Left);
        let ctx = sample_context(&[1.0, 0.0], &mut rng);
        let maps = [&sharp, &broad];
        assert_eq!(maps[ctx].greedy_action(1, &w), Action::Right);
    }
}
