//! Tabular successor maps, value read-out and TD learning.

use nalgebra::DMatrix;

use crate::domain::{argmax, dot, Action, StateId, N_ACTIONS};
use crate::error::{check_dim, BsrError, Result};

/// Expected discounted future feature occupancies, one row per (state, action).
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessorMap {
    n_states: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SuccessorMap {
    pub fn zeros(n_states: usize, dim: usize) -> Self {
        SuccessorMap {
            n_states,
            dim,
            data: vec![0.0; n_states * N_ACTIONS * dim],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn offset(&self, s: StateId, a: Action) -> usize {
        (s * N_ACTIONS + a.index()) * self.dim
    }

    pub fn row(&self, s: StateId, a: Action) -> &[f64] {
        let o = self.offset(s, a);
        &self.data[o..o + self.dim]
    }

    pub fn row_mut(&mut self, s: StateId, a: Action) -> &mut [f64] {
        let o = self.offset(s, a);
        &mut self.data[o..o + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
    }

    /// `Σ_i weights[i] · maps[i]`; all maps must share one shape.
    pub fn weighted_sum(maps: &[SuccessorMap], weights: &[f64]) -> Result<SuccessorMap> {
        let first = maps
            .first()
            .ok_or_else(|| BsrError::Config("weighted sum of no maps".into()))?;
        check_dim(maps.len(), weights.len())?;
        let mut out = SuccessorMap::zeros(first.n_states, first.dim);
        for (m, &w) in maps.iter().zip(weights) {
            check_dim(out.data.len(), m.data.len())?;
            if w != 0.0 {
                for (x, y) in out.data.iter_mut().zip(&m.data) {
                    *x += w * y;
                }
            }
        }
        Ok(out)
    }

    /// `Q[a] = M(s, a, :) · w` for every action.
    pub fn q_values(&self, s: StateId, w: &[f64]) -> Result<[f64; N_ACTIONS]> {
        check_dim(self.dim, w.len())?;
        if s >= self.n_states {
            return Err(BsrError::Config(format!(
                "state {s} out of range for a map over {} states",
                self.n_states
            )));
        }
        Ok(self.q_unchecked(s, w))
    }

    fn q_unchecked(&self, s: StateId, w: &[f64]) -> [f64; N_ACTIONS] {
        let mut q = [0.0; N_ACTIONS];
        for a in Action::ALL {
            q[a.index()] = dot(self.row(s, a), w);
        }
        q
    }

    /// Greedy action under `w`; ties go to the lowest action index.
    pub fn greedy_action(&self, s: StateId, w: &[f64]) -> Action {
        let q = self.q_unchecked(s, w);
        Action::from_index(argmax(&q)).expect("argmax over four actions")
    }

    pub fn max_q(&self, s: StateId, w: &[f64]) -> f64 {
        self.q_unchecked(s, w)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// One Bellman backup of row `(s, a)` towards `φ(s') + γ M(s', a*, :)`,
    /// with `a*` greedy under `w`. The step size is `alpha_sr / divisor`.
    /// Terminal next states are backed up like any other.
    #[allow(clippy::too_many_arguments)]
    pub fn td_update(
        &mut self,
        s: StateId,
        a: Action,
        s_next: StateId,
        phi_next: &[f64],
        w: &[f64],
        gamma: f64,
        alpha_sr: f64,
        divisor: f64,
    ) -> Result<()> {
        check_dim(self.dim, phi_next.len())?;
        check_dim(self.dim, w.len())?;
        let a_star = self.greedy_action(s_next, w);
        self.backup(s, a, s_next, a_star, phi_next, gamma, alpha_sr / divisor);
        Ok(())
    }

    /// Backup with an explicit bootstrap action.
    #[allow(clippy::too_many_arguments)]
    pub fn backup(
        &mut self,
        s: StateId,
        a: Action,
        s_next: StateId,
        a_next: Action,
        phi_next: &[f64],
        gamma: f64,
        step: f64,
    ) {
        if step == 0.0 {
            return;
        }
        let next = self.offset(s_next, a_next);
        let cur = self.offset(s, a);
        for j in 0..self.dim {
            let target = phi_next[j] + gamma * self.data[next + j];
            let m = &mut self.data[cur + j];
            *m += step * (target - *m);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Delta-rule regression of reward weights onto an observed reward.
pub fn reward_weight_update(w: &mut [f64], phi_next: &[f64], reward: f64, alpha_w: f64) {
    let err = reward - dot(phi_next, w);
    if err == 0.0 || alpha_w == 0.0 {
        return;
    }
    for (wi, pi) in w.iter_mut().zip(phi_next) {
        *wi += alpha_w * err * pi;
    }
}

/// State-to-state successor matrix `Σ_k γ^k P^{k+1} = (I − γP)⁻¹ P`, i.e.
/// occupancies counted from the next state onwards.
pub fn analytic_sr(p: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(BsrError::Dimension { expected: n, got: p.ncols() });
    }
    for (i, row) in p.row_iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|x| *x < 0.0) {
            return Err(BsrError::Config(format!("row {i} of the policy matrix is not stochastic")));
        }
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(BsrError::Config(format!("analytic SR needs gamma in [0, 1), got {gamma}")));
    }
    let a = DMatrix::<f64>::identity(n, n) - p * gamma;
    let inv = a
        .try_inverse()
        .ok_or_else(|| BsrError::Numerical("I - gamma P is singular".into()))?;
    Ok(inv * p)
}

/// State-action successor map for deterministic dynamics: row `(s, a)` is
/// `e_{s'} + γ SR(s', :)` with `s' = next(s, a)`.
pub fn analytic_state_action_sr(
    n_states: usize,
    next: impl Fn(StateId, Action) -> StateId,
    policy_matrix: &DMatrix<f64>,
    gamma: f64,
) -> Result<SuccessorMap> {
    let sr = analytic_sr(policy_matrix, gamma)?;
    let mut m = SuccessorMap::zeros(n_states, n_states);
    for s in 0..n_states {
        for a in Action::ALL {
            let sn = next(s, a);
            let row = m.row_mut(s, a);
            for (j, r) in row.iter_mut().enumerate() {
                *r = gamma * sr[(sn, j)];
            }
            row[sn] += 1.0;
        }
    }
    Ok(m)
}
