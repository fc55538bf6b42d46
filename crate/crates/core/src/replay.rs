//! Per-context replay memories.

use std::collections::VecDeque;

use rand::Rng;

use crate::domain::Transition;
use crate::error::{BsrError, Result};
use crate::sr::SuccessorMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Capacity {
    /// Ring of at most this many transitions.
    Transitions(usize),
    /// Keep transitions from the most recent this-many episodes.
    Episodes(usize),
}

/// FIFO memory of the transitions whose action was selected by one context.
#[derive(Clone, Debug)]
pub struct ContextBuffer<S> {
    context: usize,
    capacity: Capacity,
    items: VecDeque<(usize, Transition<S>)>,
}

impl<S: Clone> ContextBuffer<S> {
    pub fn new(context: usize, capacity: Capacity) -> Self {
        ContextBuffer {
            context,
            capacity,
            items: VecDeque::new(),
        }
    }

    pub fn context(&self) -> usize {
        self.context
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<S>> {
        self.items.iter().map(|(_, t)| t)
    }

    /// Append a transition recorded during `episode`, evicting the oldest
    /// entries beyond capacity.
    pub fn push(&mut self, t: Transition<S>, episode: usize) -> Result<()> {
        if t.context != self.context {
            return Err(BsrError::Contract(format!(
                "transition from context {} pushed into buffer {}",
                t.context, self.context
            )));
        }
        self.items.push_back((episode, t));
        match self.capacity {
            Capacity::Transitions(n) => {
                while self.items.len() > n {
                    self.items.pop_front();
                }
            }
            Capacity::Episodes(n) => self.evict_before(episode + 1 - n.min(episode + 1)),
        }
        Ok(())
    }

    /// Drop everything recorded before `episode`.
    pub fn evict_before(&mut self, episode: usize) {
        while matches!(self.items.front(), Some((e, _)) if *e < episode) {
            self.items.pop_front();
        }
    }

    /// `min(n, len)` transitions drawn uniformly with replacement.
    pub fn sample_minibatch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition<S>> {
        let m = n.min(self.items.len());
        (0..m)
            .map(|_| &self.items[rng.random_range(0..self.items.len())].1)
            .collect()
    }
}

/// Apply one TD backup per replayed transition (full backup, terminal or not).
#[allow(clippy::too_many_arguments)]
pub fn replay_update(
    map: &mut SuccessorMap,
    minibatch: &[&Transition<usize>],
    features: impl Fn(usize) -> Vec<f64>,
    w: &[f64],
    gamma: f64,
    alpha_sr: f64,
    divisor: f64,
) -> Result<()> {
    for t in minibatch {
        map.td_update(
            t.state,
            t.action,
            t.next_state,
            &features(t.next_state),
            w,
            gamma,
            alpha_sr,
            divisor,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{one_hot, Action};
    use crate::rng::{stream, RngRole};

    fn tr(seq: usize, context: usize) -> Transition<usize> {
        Transition {
            state: seq,
            action: Action::Up,
            next_state: seq + 1,
            reward: 0.0,
            context,
        }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut b = ContextBuffer::new(0, Capacity::Transitions(300));
        b.push(tr(0, 0), 0).unwrap();
        assert_eq!(b.len(), 1);
        for i in 1..301 {
            b.push(tr(i, 0), 0).unwrap();
        }
        assert_eq!(b.len(), 300);
        assert_eq!(b.iter().next().unwrap().state, 1);
    }

    #[test]
    fn fifo_order_survives_wraparound() {
        let mut b = ContextBuffer::new(1, Capacity::Transitions(37));
        for i in 0..1000 {
            b.push(tr(i, 1), 0).unwrap();
        }
        let seq: Vec<usize> = b.iter().map(|t| t.state).collect();
        assert_eq!(seq, (963..1000).collect::<Vec<_>>());
    }

    #[test]
    fn episode_capacity() {
        let mut b = ContextBuffer::new(0, Capacity::Episodes(2));
        b.push(tr(0, 0), 0).unwrap();
        b.push(tr(1, 0), 1).unwrap();
        assert_eq!(b.len(), 2);
        b.push(tr(2, 0), 2).unwrap();
        assert_eq!(b.iter().map(|t| t.state).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn context_mismatch_is_rejected() {
        let mut b = ContextBuffer::new(0, Capacity::Transitions(3));
        assert!(matches!(b.push(tr(0, 2), 0), Err(BsrError::Contract(_))));
    }

    #[test]
    fn minibatch_sizes() {
        let mut rng = stream(1, RngRole::Replay);
        let mut b = ContextBuffer::new(0, Capacity::Transitions(300));
        assert!(b.sample_minibatch(5, &mut rng).is_empty());
        for i in 0..3 {
            b.push(tr(i, 0), 0).unwrap();
        }
        assert_eq!(b.sample_minibatch(5, &mut rng).len(), 3);
        for i in 3..10 {
            b.push(tr(i, 0), 0).unwrap();
        }
        assert_eq!(b.sample_minibatch(5, &mut rng).len(), 5);
    }

    #[test]
    fn minibatch_sampling_is_uniform() {
        let mut rng = stream(2, RngRole::Replay);
        let mut b = ContextBuffer::new(0, Capacity::Transitions(10));
        for i in 0..10 {
            b.push(tr(i, 0), 0).unwrap();
        }
        let mut hits = [0usize; 10];
        let draws = 20_000;
        for _ in 0..draws {
            for t in b.sample_minibatch(5, &mut rng) {
                hits[t.state] += 1;
            }
        }
        let n = (draws * 5) as f64;
        let sd = (n * 0.1 * 0.9).sqrt();
        for h in hits {
            assert!((h as f64 - n * 0.1).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn replay_of_one_transition_equals_direct_update() {
        let feats = |s: usize| one_hot(s, 4).unwrap();
        let w = [0.0, 0.0, 0.0, 10.0];
        let t = tr(1, 0);
        let mut a = SuccessorMap::zeros(4, 4);
        a.row_mut(2, Action::Down).copy_from_slice(&[0.0, 0.0, 0.5, 1.0]);
        let mut b = a.clone();
        replay_update(&mut a, &[&t], feats, &w, 0.9, 0.3, 1.0).unwrap();
        b.td_update(1, Action::Up, 2, &feats(2), &w, 0.9, 0.3, 1.0).unwrap();
        assert_eq!(a, b);
        let before = a.clone();
        replay_update(&mut a, &[], feats, &w, 0.9, 0.3, 1.0).unwrap();
        assert_eq!(a, before);
    }
}
