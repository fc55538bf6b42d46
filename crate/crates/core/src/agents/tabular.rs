//! Tabular agents over one-hot state features.

use rand::Rng as _;
use serde::Serialize;

use super::context::ContextModel;
use super::{
    alpha_cr_schedule, apply_exploration_offset, epsilon_greedy, epsilon_schedule, gpi_q_values,
    sample_context,
};
use crate::config::{AgentKind, GpiRewardMode, RunConfig, UpdatePolicy};
use crate::domain::{one_hot, Action, StateId, Transition};
use crate::envs::GridEnv;
use crate::error::{BsrError, Result};
use crate::replay::{replay_update, Capacity, ContextBuffer};
use crate::rng::{hash_words, stream, Rng, RngRole};
use crate::sr::{reward_weight_update, SuccessorMap};

/// Bookkeeping for GPI: which maps hold a policy and which is being learned.
#[derive(Clone, Debug)]
struct GpiSlots {
    used: usize,
    current: usize,
    stored_w: Vec<Option<Vec<f64>>>,
}

/// What happened on one environment step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub state: StateId,
    pub action: Action,
    pub context: usize,
    pub next_state: StateId,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

/// Any of the tabular agent kinds, holding `k` successor maps with their
/// reward weights, replay buffers and the context model.
#[derive(Clone, Debug)]
pub struct TabularAgent {
    cfg: RunConfig,
    n_states: usize,
    maps: Vec<SuccessorMap>,
    w: Vec<Vec<f64>>,
    context: ContextModel,
    buffers: Vec<ContextBuffer<StateId>>,
    gpi: Option<GpiSlots>,
    action_rng: Rng,
    replay_rng: Rng,
    slot_rng: Rng,
    episode: usize,
    epsilon: f64,
    alpha_cr: f64,
}

impl TabularAgent {
    pub fn new(cfg: &RunConfig, n_states: usize) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.k;
        let mut init = stream(hash_words(&[cfg.seed, 0x7a]), RngRole::Init);
        let w = (0..k)
            .map(|_| (0..n_states).map(|_| init.random_range(-0.01..0.01)).collect())
            .collect();
        let buffers = (0..k)
            .map(|j| ContextBuffer::new(j, Capacity::Transitions(cfg.buffer_capacity)))
            .collect();
        let gpi = (cfg.agent == AgentKind::Gpi).then(|| GpiSlots {
            used: 1,
            current: 0,
            stored_w: vec![None; k],
        });
        Ok(TabularAgent {
            n_states,
            maps: vec![SuccessorMap::zeros(n_states, n_states); k],
            w,
            context: ContextModel::new(cfg, n_states)?,
            buffers,
            gpi,
            action_rng: stream(cfg.seed, RngRole::Action),
            replay_rng: stream(cfg.seed, RngRole::Replay),
            slot_rng: stream(hash_words(&[cfg.seed, 0x5107]), RngRole::Init),
            episode: 0,
            epsilon: 1.0,
            alpha_cr: cfg.alpha_cr_start,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn kind(&self) -> AgentKind {
        self.cfg.agent
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn maps(&self) -> &[SuccessorMap] {
        &self.maps
    }

    pub fn reward_weights(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn context(&self) -> &ContextModel {
        &self.context
    }

    pub fn context_mut(&mut self) -> &mut ContextModel {
        &mut self.context
    }

    pub fn buffers(&self) -> &[ContextBuffer<StateId>] {
        &self.buffers
    }

    pub fn omega(&self) -> &[f64] {
        self.context.omega()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Index of the map GPI is currently learning.
    pub fn gpi_current(&self) -> Option<usize> {
        self.gpi.as_ref().map(|g| g.current)
    }

    fn phi(&self, s: StateId) -> Vec<f64> {
        one_hot(s, self.n_states).expect("state within the grid")
    }

    /// Replace every context's reward weights with known task rewards.
    pub fn provide_reward(&mut self, w_true: &[f64]) {
        for wj in &mut self.w {
            wj.copy_from_slice(w_true);
        }
    }

    /// Pin the oracle context (KQ/KG).
    pub fn set_known_context(&mut self, context: usize) {
        self.context.set_known(context);
    }

    pub fn begin_episode(&mut self, episode: usize, s0: StateId) {
        self.episode = episode;
        self.epsilon = epsilon_schedule(episode, self.cfg.epsilon_anneal_episodes, self.cfg.epsilon);
        self.alpha_cr = alpha_cr_schedule(
            episode,
            self.cfg.alpha_cr_start,
            self.cfg.alpha_cr_end,
            self.cfg.alpha_cr_episodes,
        );
        if self.cfg.offset_per_episode {
            self.apply_offset();
        }
        let phi0 = self.phi(s0);
        self.context.begin_episode(episode, phi0);
    }

    fn apply_offset(&mut self) {
        apply_exploration_offset(
            &mut self.w,
            self.context.cr_maps(),
            self.cfg.c_ws,
            self.cfg.alpha_ws,
            self.cfg.offset,
        );
    }

    fn gpi_weights(&self, j: usize) -> &[f64] {
        let g = self.gpi.as_ref().expect("GPI agent");
        match (&g.stored_w[j], self.cfg.gpi_reward) {
            (Some(w), GpiRewardMode::Stored) if j != g.current => w,
            _ => &self.w[g.current],
        }
    }

    /// Offset, context sampling and ε-greedy action choice. Reward entries in
    /// `masked` are treated as zero when valuing actions.
    pub fn act(&mut self, s: StateId, masked: &[StateId]) -> (Action, usize) {
        if !self.cfg.offset_per_episode {
            self.apply_offset();
        }
        let mask = |w: &[f64]| {
            let mut w = w.to_vec();
            for &m in masked {
                w[m] = 0.0;
            }
            w
        };
        if let Some(g) = &self.gpi {
            let ws: Vec<Vec<f64>> = (0..g.used).map(|j| mask(self.gpi_weights(j))).collect();
            let maps: Vec<&SuccessorMap> = self.maps[..g.used].iter().collect();
            let refs: Vec<&[f64]> = ws.iter().map(|w| w.as_slice()).collect();
            let q = gpi_q_values(&maps, &refs, s);
            let ctx = g.current;
            (epsilon_greedy(&q, self.epsilon, &mut self.action_rng), ctx)
        } else {
            let ctx = sample_context(self.context.omega(), &mut self.action_rng);
            let w = mask(&self.w[ctx]);
            let q = self.maps[ctx].q_values(s, &w).expect("matching dimensions");
            (epsilon_greedy(&q, self.epsilon, &mut self.action_rng), ctx)
        }
    }

    fn update_targets(&self, ctx: usize) -> Vec<usize> {
        if let Some(g) = &self.gpi {
            return vec![g.current];
        }
        if self.cfg.agent == AgentKind::Kq {
            return vec![ctx];
        }
        match self.cfg.update_policy {
            UpdatePolicy::AllMaps => (0..self.cfg.k).collect(),
            UpdatePolicy::MostLikely => vec![self.context.most_likely()],
            UpdatePolicy::Sampled => vec![ctx],
        }
    }

    /// Learn from one transition: store it, regress the reward weights, run
    /// direct and replay TD updates and feed the context model.
    pub fn learn(&mut self, s: StateId, a: Action, ctx: usize, s_next: StateId, r: f64) -> Result<()> {
        let t = Transition {
            state: s,
            action: a,
            next_state: s_next,
            reward: r,
            context: ctx,
        };
        self.buffers[ctx].push(t, self.episode)?;
        let phi = self.phi(s_next);
        for wj in &mut self.w {
            reward_weight_update(wj, &phi, r, self.cfg.alpha_w);
        }
        let targets = self.update_targets(ctx);
        let divisor = targets.len() as f64;
        let n = self.n_states;
        for j in targets {
            let w = match &self.gpi {
                Some(g) => self.w[g.current].clone(),
                None => self.w[j].clone(),
            };
            self.maps[j].td_update(s, a, s_next, &phi, &w, self.cfg.gamma, self.cfg.alpha_sr, divisor)?;
            let batch = self.buffers[j].sample_minibatch(self.cfg.replay_batch, &mut self.replay_rng);
            replay_update(
                &mut self.maps[j],
                &batch,
                |x| one_hot(x, n).expect("state within the grid"),
                &w,
                self.cfg.gamma,
                self.cfg.alpha_sr,
                divisor,
            )?;
        }
        self.context.observe(phi, r, ctx, self.alpha_cr)
    }

    pub fn end_episode(&mut self) -> Result<()> {
        self.context.end_episode(self.alpha_cr)
    }

    /// Signalled task change for GPI: move to a fresh map, or overwrite a
    /// uniformly chosen one and clear its replay buffer.
    pub fn gpi_task_change(&mut self) -> Result<usize> {
        let k = self.cfg.k;
        let Some(g) = self.gpi.as_mut() else {
            return Err(BsrError::Contract(format!(
                "task change signal sent to a {} agent",
                self.cfg.agent
            )));
        };
        g.stored_w[g.current] = Some(self.w[g.current].clone());
        let next = if g.used < k {
            g.used += 1;
            g.used - 1
        } else {
            let j = self.slot_rng.random_range(0..k);
            self.maps[j].reset();
            self.buffers[j].clear();
            j
        };
        g.stored_w[next] = None;
        g.current = next;
        self.context.set_known(next);
        Ok(next)
    }

    /// Firing-rate proxy: row `(s, a)` of one context's map.
    pub fn firing(&self, ctx: usize, s: StateId, a: Action) -> &[f64] {
        self.maps[ctx].row(s, a)
    }

    /// Belief-weighted average of the maps.
    pub fn weighted_map(&self) -> SuccessorMap {
        SuccessorMap::weighted_sum(&self.maps, self.context.omega()).expect("maps share one shape")
    }

    /// Digest of all learnable state, for read-only checks.
    pub fn fingerprint(&self) -> u64 {
        let mut words: Vec<u64> = self
            .maps
            .iter()
            .flat_map(|m| m.as_slice().iter().map(|x| x.to_bits()))
            .collect();
        words.extend(self.w.iter().flatten().map(|x| x.to_bits()));
        words.extend(self.context.fingerprint());
        words.extend(self.buffers.iter().map(|b| b.len() as u64));
        hash_words(&words)
    }
}

/// One full agent-environment step: act, move, learn.
pub fn agent_step(agent: &mut TabularAgent, env: &mut GridEnv, masked: &[StateId]) -> Result<StepRecord> {
    let s = env.state();
    let (a, ctx) = agent.act(s, masked);
    let out = env.step(a);
    agent.learn(s, a, ctx, out.next_state, out.reward)?;
    Ok(StepRecord {
        state: s,
        action: a,
        context: ctx,
        next_state: out.next_state,
        reward: out.reward,
        terminal: out.terminal,
        truncated: out.truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Profile;
    use crate::envs::{GridLayout, GridTask, GridWorld};

    fn env() -> GridEnv {
        let world = GridWorld::new(GridLayout::default_maze());
        GridEnv::new(world, GridTask::single(0, 2, 64), 75).unwrap()
    }

    #[test]
    fn one_step_stores_one_transition() {
        let cfg = RunConfig::new(Profile::Exp1, AgentKind::Bsr);
        let mut agent = TabularAgent::new(&cfg, 64).unwrap();
        let mut e = env();
        agent.begin_episode(0, e.reset());
        agent_step(&mut agent, &mut e, &[]).unwrap();
        let sizes: Vec<usize> = agent.buffers().iter().map(|b| b.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 1);
    }

    #[test]
    fn all_maps_update_fans_out() {
        let cfg = RunConfig::new(Profile::Exp1, AgentKind::Bsr);
        let mut agent = TabularAgent::new(&cfg, 64).unwrap();
        let mut e = env();
        agent.begin_episode(0, e.reset());
        agent.learn(0, Action::Right, 1, 1, 0.0).unwrap();
        for m in agent.maps() {
            assert!(m.as_slice().iter().any(|x| *x != 0.0));
        }
    }

    #[test]
    fn stored_transitions_carry_raw_rewards() {
        let mut cfg = RunConfig::new(Profile::Exp2, AgentKind::Bsr);
        cfg.alpha_ws = 0.5;
        let mut agent = TabularAgent::new(&cfg, 64).unwrap();
        let mut e = env();
        agent.begin_episode(0, e.reset());
        for _ in 0..30 {
            let rec = agent_step(&mut agent, &mut e, &[]).unwrap();
            if rec.terminal {
                break;
            }
        }
        for b in agent.buffers() {
            for t in b.iter() {
                assert!(t.reward == 0.0 || t.reward == 10.0);
            }
        }
    }

    #[test]
    fn gpi_activates_free_slots_then_overwrites() {
        let cfg = RunConfig::new(Profile::Exp1, AgentKind::Gpi);
        let mut agent = TabularAgent::new(&cfg, 64).unwrap();
        assert_eq!(agent.gpi_task_change().unwrap(), 1);
        assert_eq!(agent.gpi_task_change().unwrap(), 2);
        assert_eq!(agent.gpi_task_change().unwrap(), 3);
        agent.learn(0, Action::Right, 3, 1, 0.0).unwrap();
        let mut counts = [0usize; 4];
        for _ in 0..1000 {
            let j = agent.gpi_task_change().unwrap();
            assert!(agent.buffers()[j].is_empty());
            assert!(agent.maps()[j].as_slice().iter().all(|x| *x == 0.0));
            counts[j] += 1;
        }
        for c in counts {
            assert!((c as f64 - 250.0).abs() < 3.0 * (1000.0f64 * 0.25 * 0.75).sqrt());
        }
    }

    #[test]
    fn gpi_reset_leaves_other_buffers() {
        let cfg = RunConfig::new(Profile::Exp1, AgentKind::Gpi);
        let mut agent = TabularAgent::new(&cfg, 64).unwrap();
        for j in 0..4 {
            if j > 0 {
                agent.gpi_task_change().unwrap();
            }
            agent.learn(0, Action::Right, j, 1, 0.0).unwrap();
        }
        let j = agent.gpi_task_change().unwrap();
        for (i, b) in agent.buffers().iter().enumerate() {
            assert_eq!(b.len(), usize::from(i != j));
        }
    }

    #[test]
    fn task_change_rejected_for_non_gpi() {
        let cfg = RunConfig::new(Profile::Exp1, AgentKind::Bsr);
        let mut agent = TabularAgent::new(&cfg, 64).unwrap();
        assert!(matches!(agent.gpi_task_change(), Err(BsrError::Contract(_))));
    }

    #[test]
    fn kq_samples_only_the_known_context() {
        let cfg = RunConfig::new(Profile::Exp1, AgentKind::Kq);
        let mut agent = TabularAgent::new(&cfg, 64).unwrap();
        agent.set_known_context(2);
        let mut e = env();
        agent.begin_episode(0, e.reset());
        for _ in 0..20 {
            assert_eq!(agent_step(&mut agent, &mut e, &[]).unwrap().context, 2);
        }
    }
}
