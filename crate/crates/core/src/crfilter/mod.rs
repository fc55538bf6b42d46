//! Convolved-reward observations and particle filtering over reward contexts.
//!
//! Rewards collected around a visited state are smoothed with a symmetric
//! discount kernel into a single convolved-reward (CR) value. Each context
//! owns a CR map, a linear predictor of those values, and a particle filter
//! with Chinese-restaurant-process proposals tracks which context generated
//! the recent observations.

mod gsr;
mod particles;

pub use gsr::{GaussianPosterior, GsrBank};
pub use particles::{
    crp_prior, crp_probabilities, crp_propose, winner_take_all, FilterStep, FlushStep,
    ParticleFilter,
};
pub(crate) use particles::sample_discrete;

use std::f64::consts::PI;

use crate::domain::dot;
use crate::error::{BsrError, Result};

/// Symmetric kernel `[γ^f, …, γ, 1, γ, …, γ^f]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrKernel {
    weights: Vec<f64>,
    delay: usize,
}

impl CrKernel {
    pub fn new(gamma: f64, delay: usize) -> Result<Self> {
        if delay == 0 {
            return Err(BsrError::Config("filter delay must be positive".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(BsrError::Config(format!("kernel discount must be in (0, 1], got {gamma}")));
        }
        let weights = (0..=2 * delay)
            .map(|i| gamma.powi((i as i32 - delay as i32).abs()))
            .collect();
        Ok(CrKernel { weights, delay })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Kernel-weighted reward over a `2f+1` window. `mask` marks real steps
    /// (padding is zero in both vectors). When normalising, the result is
    /// divided by `mask · K`; `None` means no real step fell in the window.
    pub fn cr_value(&self, rewards: &[f64], mask: &[f64], normalize: bool) -> Option<f64> {
        debug_assert_eq!(rewards.len(), self.len());
        debug_assert_eq!(mask.len(), self.len());
        let mass = dot(mask, &self.weights);
        if mass == 0.0 {
            return None;
        }
        let raw: f64 = rewards
            .iter()
            .zip(mask)
            .zip(&self.weights)
            .map(|((r, m), k)| r * m * k)
            .sum();
        Some(if normalize { raw / mass } else { raw })
    }
}

/// Normal density of `v` with the given mean and standard deviation.
pub fn likelihood(v: f64, mean: f64, sd: f64) -> f64 {
    log_likelihood(v, mean, sd).exp()
}

pub fn log_likelihood(v: f64, mean: f64, sd: f64) -> f64 {
    let z = (v - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

/// Delta-rule step of a CR map towards an observed CR value.
pub fn cr_map_update(w_cr: &mut [f64], phi: &[f64], v_cr: f64, alpha_cr: f64) {
    let err = v_cr - dot(phi, w_cr);
    for (w, p) in w_cr.iter_mut().zip(phi) {
        *w += alpha_cr * err * p;
    }
}

/// End-of-episode CR map pass: every observation of the episode updates the
/// map of the context that is most likely under the final belief weights.
pub fn bsr2_episode_update(
    observations: &[(Vec<f64>, f64)],
    omega_end: &[f64],
    maps: &mut [Vec<f64>],
    alpha_cr: f64,
) {
    if observations.is_empty() {
        return;
    }
    let target = crate::domain::argmax(omega_end);
    for (phi, v) in observations {
        cr_map_update(&mut maps[target], phi, *v, alpha_cr);
    }
}

/// Rewards and states of the current episode, producing CR observations
/// once enough steps have elapsed after a state.
///
/// Time `τ = 0` is the start state; `rewards[τ]` is the reward received on
/// arriving at `states[τ]`, so position 0 never carries a real reward.
#[derive(Clone, Debug)]
pub struct CrTracker<S> {
    kernel: CrKernel,
    normalize: bool,
    states: Vec<S>,
    rewards: Vec<f64>,
    next: usize,
}

/// A CR observation for the state visited at episode time `tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrObservation<S> {
    pub tau: usize,
    pub state: S,
    pub value: f64,
}

impl<S: Clone> CrTracker<S> {
    pub fn new(kernel: CrKernel, normalize: bool) -> Self {
        CrTracker {
            kernel,
            normalize,
            states: Vec::new(),
            rewards: Vec::new(),
            next: 0,
        }
    }

    pub fn kernel(&self) -> &CrKernel {
        &self.kernel
    }

    pub fn begin(&mut self, start: S) {
        self.states.clear();
        self.rewards.clear();
        self.states.push(start);
        self.rewards.push(0.0);
        self.next = 0;
    }

    /// Steps taken so far this episode.
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn record(&mut self, next_state: S, reward: f64) {
        self.states.push(next_state);
        self.rewards.push(reward);
    }

    fn value_at(&self, tau: usize) -> Option<f64> {
        let f = self.kernel.delay as isize;
        let last = self.steps() as isize;
        let mut r = vec![0.0; self.kernel.len()];
        let mut m = vec![0.0; self.kernel.len()];
        for j in -f..=f {
            let t = tau as isize + j;
            if t >= 1 && t <= last {
                r[(j + f) as usize] = self.rewards[t as usize];
                m[(j + f) as usize] = 1.0;
            }
        }
        self.kernel.cr_value(&r, &m, self.normalize)
    }

    /// The observation that became available with the latest step, if any:
    /// after `t ≥ f` steps the state at `t − f` has its full window.
    pub fn ready(&mut self) -> Option<CrObservation<S>> {
        let t = self.steps();
        let f = self.kernel.delay;
        if t < f || self.next > t - f {
            return None;
        }
        let tau = t - f;
        self.next = tau + 1;
        self.value_at(tau).map(|value| CrObservation {
            tau,
            state: self.states[tau].clone(),
            value,
        })
    }

    /// Observations for the states not yet filtered, with zero padding
    /// beyond the final step. Marks them as consumed.
    pub fn trailing(&mut self) -> Vec<CrObservation<S>> {
        let last = self.steps();
        let out = (self.next..=last)
            .filter_map(|tau| {
                self.value_at(tau).map(|value| CrObservation {
                    tau,
                    state: self.states[tau].clone(),
                    value,
                })
            })
            .collect();
        self.next = last + 1;
        out
    }
}
