//! Network agents over traced RBF features.

use rand::Rng as _;

use super::context::ContextModel;
use super::{alpha_cr_schedule, apply_exploration_offset, epsilon_greedy, epsilon_schedule, sample_context};
use crate::config::{AgentKind, GpiRewardMode, RunConfig, UpdatePolicy};
use crate::domain::{Action, Transition, N_ACTIONS};
use crate::error::{BsrError, Result};
use crate::neural::{episode_end_w_pass, NetSample, NetSettings, SuccessorNetwork};
use crate::replay::{Capacity, ContextBuffer};
use crate::rng::{hash_words, stream, Rng, RngRole};
use crate::sr::reward_weight_update;

#[derive(Clone, Debug)]
struct GpiSlots {
    used: usize,
    current: usize,
    stored_w: Vec<Option<Vec<f64>>>,
}

/// A network agent: one successor network per context, reward weights,
/// episode-limited replay memories and the shared context model.
#[derive(Clone, Debug)]
pub struct NeuralAgent {
    cfg: RunConfig,
    dim: usize,
    nets: Vec<SuccessorNetwork>,
    w: Vec<Vec<f64>>,
    context: ContextModel,
    buffers: Vec<ContextBuffer<Vec<f64>>>,
    gpi: Option<GpiSlots>,
    episode_steps: Vec<(Vec<f64>, f64)>,
    steps_in_episode: usize,
    action_rng: Rng,
    replay_rng: Rng,
    dropout_rng: Rng,
    init_rng: Rng,
    slot_rng: Rng,
    episode: usize,
    epsilon: f64,
    alpha_cr: f64,
}

impl NeuralAgent {
    pub fn new(cfg: &RunConfig, dim: usize) -> Result<Self> {
        cfg.validate()?;
        if cfg.agent == AgentKind::Gsr {
            return Err(BsrError::Config("gsr has no network form".into()));
        }
        let k = cfg.k;
        let settings = NetSettings {
            dim,
            hidden: cfg.hidden.clone(),
            lr: cfg.alpha_sr,
            decay: cfg.rms_decay,
            eps: cfg.rms_eps,
            dropout: cfg.dropout,
            gamma: cfg.gamma,
        };
        let mut init_rng = stream(hash_words(&[cfg.seed, 0x4e4e]), RngRole::Init);
        let nets = (0..k).map(|_| SuccessorNetwork::new(settings.clone(), &mut init_rng)).collect();
        let w = (0..k)
            .map(|_| (0..dim).map(|_| init_rng.random_range(-0.01..0.01)).collect())
            .collect();
        let buffers = (0..k)
            .map(|j| ContextBuffer::new(j, Capacity::Episodes(cfg.buffer_episodes)))
            .collect();
        let gpi = (cfg.agent == AgentKind::Gpi).then(|| GpiSlots {
            used: 1,
            current: 0,
            stored_w: vec![None; k],
        });
        Ok(NeuralAgent {
            dim,
            nets,
            w,
            context: ContextModel::new(cfg, dim)?,
            buffers,
            gpi,
            episode_steps: Vec::new(),
            steps_in_episode: 0,
            action_rng: stream(cfg.seed, RngRole::Action),
            replay_rng: stream(cfg.seed, RngRole::Replay),
            dropout_rng: stream(cfg.seed, RngRole::Dropout),
            init_rng,
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

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn networks(&self) -> &[SuccessorNetwork] {
        &self.nets
    }

    pub fn reward_weights(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn context(&self) -> &ContextModel {
        &self.context
    }

    pub fn buffers(&self) -> &[ContextBuffer<Vec<f64>>] {
        &self.buffers
    }

    pub fn omega(&self) -> &[f64] {
        self.context.omega()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_known_context(&mut self, context: usize) {
        self.context.set_known(context);
    }

    pub fn begin_episode(&mut self, episode: usize, x0: &[f64]) {
        self.episode = episode;
        self.epsilon = epsilon_schedule(episode, self.cfg.epsilon_anneal_episodes, self.cfg.epsilon);
        self.alpha_cr = alpha_cr_schedule(
            episode,
            self.cfg.alpha_cr_start,
            self.cfg.alpha_cr_end,
            self.cfg.alpha_cr_episodes,
        );
        let keep_from = (episode + 1).saturating_sub(self.cfg.buffer_episodes);
        for b in &mut self.buffers {
            b.evict_before(keep_from);
        }
        self.steps_in_episode = 0;
        self.episode_steps.clear();
        if self.cfg.offset_per_episode {
            self.apply_offset();
        }
        self.context.begin_episode(episode, x0.to_vec());
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

    /// Target sync, offset, context sampling and ε-greedy choice.
    pub fn act(&mut self, x: &[f64]) -> (Action, usize) {
        if self.cfg.sync_every > 0 && self.steps_in_episode % self.cfg.sync_every == 0 {
            for n in &mut self.nets {
                n.sync_target();
            }
        }
        self.steps_in_episode += 1;
        if !self.cfg.offset_per_episode {
            self.apply_offset();
        }
        if let Some(g) = &self.gpi {
            let mut best = [f64::NEG_INFINITY; N_ACTIONS];
            for j in 0..g.used {
                let q = self.nets[j].q_values(x, self.gpi_weights(j));
                for (b, v) in best.iter_mut().zip(q) {
                    *b = b.max(v);
                }
            }
            let ctx = g.current;
            (epsilon_greedy(&best, self.epsilon, &mut self.action_rng), ctx)
        } else {
            let ctx = sample_context(self.context.omega(), &mut self.action_rng);
            let q = self.nets[ctx].q_values(x, &self.w[ctx]);
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

    /// Store the transition, regress reward weights, run one direct and one
    /// minibatch network update per target context and feed the context
    /// model.
    pub fn learn(&mut self, x: &[f64], a: Action, ctx: usize, x_next: &[f64], r: f64) -> Result<()> {
        let t = Transition {
            state: x.to_vec(),
            action: a,
            next_state: x_next.to_vec(),
            reward: r,
            context: ctx,
        };
        self.buffers[ctx].push(t, self.episode)?;
        for wj in &mut self.w {
            reward_weight_update(wj, x_next, r, self.cfg.alpha_w);
        }
        self.episode_steps.push((x_next.to_vec(), r));
        for j in self.update_targets(ctx) {
            let w = match &self.gpi {
                Some(g) => self.w[g.current].clone(),
                None => self.w[j].clone(),
            };
            let direct = [NetSample {
                state: x,
                action: a,
                next_state: x_next,
            }];
            self.nets[j].td_update(&direct, &w, &mut self.dropout_rng);
            let batch: Vec<NetSample<'_>> = self.buffers[j]
                .sample_minibatch(self.cfg.replay_batch, &mut self.replay_rng)
                .into_iter()
                .map(|t| NetSample {
                    state: &t.state,
                    action: t.action,
                    next_state: &t.next_state,
                })
                .collect();
            self.nets[j].td_update(&batch, &w, &mut self.dropout_rng);
        }
        self.context.observe(x_next.to_vec(), r, ctx, self.alpha_cr)
    }

    /// Flush the context model and replay the episode once more for the
    /// reward weights.
    pub fn end_episode(&mut self) -> Result<()> {
        self.context.end_episode(self.alpha_cr)?;
        for wj in &mut self.w {
            episode_end_w_pass(&self.episode_steps, wj, self.cfg.alpha_w);
        }
        Ok(())
    }

    /// Signalled task change for GPI: a fresh network in a free slot, or a
    /// re-initialised uniformly chosen one with its memory cleared.
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
            self.nets[j].reinitialize(&mut self.init_rng);
            self.buffers[j].clear();
            j
        };
        g.stored_w[next] = None;
        g.current = next;
        self.context.set_known(next);
        Ok(next)
    }
}
