//! Reward-context inference shared by tabular and network agents.

use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, RunConfig};
use crate::crfilter::{
    bsr2_episode_update, cr_map_update, log_likelihood, CrKernel, CrObservation, CrTracker,
    GaussianPosterior, GsrBank, ParticleFilter,
};
use crate::domain::{argmax, dot};
use crate::error::Result;
use crate::rng::{stream, Rng, RngRole};

use rand::Rng as _;

/// One filtered observation, for the optional per-step trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterTraceRow {
    pub episode: usize,
    pub tau: usize,
    pub v_cr: f64,
    pub omega: Vec<f64>,
    pub winner: usize,
}

#[derive(Clone, Debug)]
enum Inference {
    /// Particle filter with a common set of delta-rule CR maps.
    Filter(ParticleFilter),
    /// Particle filter with per-particle conjugate posteriors.
    Gaussian(ParticleFilter, GsrBank),
    /// Belief weights set from outside (single map, uniform, oracle, GPI).
    Fixed,
}

/// CR maps and belief weights over `k` contexts. Observations are indexed by
/// their time within the episode; the features of each visited state are
/// kept until the episode ends.
#[derive(Clone, Debug)]
pub struct ContextModel {
    kind: AgentKind,
    k: usize,
    sigma: f64,
    inference: Inference,
    w_cr: Vec<Vec<f64>>,
    omega: Vec<f64>,
    tracker: CrTracker<usize>,
    phis: Vec<Vec<f64>>,
    acting: Vec<usize>,
    deferred: Vec<(Vec<f64>, f64)>,
    episode: usize,
    record_trace: bool,
    trace: Vec<FilterTraceRow>,
    proposal_rng: Rng,
    resample_rng: Rng,
}

impl ContextModel {
    pub fn new(cfg: &RunConfig, dim: usize) -> Result<Self> {
        let k = cfg.k;
        let mut init = stream(cfg.seed, RngRole::Init);
        let w_cr = (0..k)
            .map(|_| (0..dim).map(|_| init.random_range(-0.01..0.01)).collect())
            .collect();
        let inference = match cfg.agent {
            AgentKind::Bsr | AgentKind::Bsr2 | AgentKind::Gsr => {
                let pf = ParticleFilter::new(
                    cfg.n_particles,
                    cfg.particle_window,
                    k,
                    cfg.alpha_dp,
                    cfg.resampling,
                    &mut init,
                );
                if cfg.agent == AgentKind::Gsr {
                    let prior = GaussianPosterior::isotropic(dim, 0.0, 1.0);
                    Inference::Gaussian(pf, GsrBank::new(cfg.n_particles, k, prior, cfg.sigma_cr))
                } else {
                    Inference::Filter(pf)
                }
            }
            _ => Inference::Fixed,
        };
        let omega = if cfg.agent == AgentKind::Ew {
            vec![1.0 / k as f64; k]
        } else {
            let mut e = vec![0.0; k];
            e[0] = 1.0;
            e
        };
        let mut model = ContextModel {
            kind: cfg.agent,
            k,
            sigma: cfg.sigma_cr,
            inference,
            w_cr,
            omega,
            tracker: CrTracker::new(CrKernel::new(cfg.gamma, cfg.filter_delay)?, cfg.normalize_cr),
            phis: Vec::new(),
            acting: Vec::new(),
            deferred: Vec::new(),
            episode: 0,
            record_trace: cfg.record_filter_trace,
            trace: Vec::new(),
            proposal_rng: stream(cfg.seed, RngRole::Proposal),
            resample_rng: stream(cfg.seed, RngRole::Resample),
        };
        if let Inference::Gaussian(..) = model.inference {
            model.refresh_gaussian_maps();
        }
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn omega(&self) -> &[f64] {
        match &self.inference {
            Inference::Filter(pf) | Inference::Gaussian(pf, _) => pf.omega(),
            Inference::Fixed => &self.omega,
        }
    }

    pub fn most_likely(&self) -> usize {
        argmax(self.omega())
    }

    /// Pin the belief weights on one context (oracle and GPI agents).
    pub fn set_known(&mut self, context: usize) {
        if let Inference::Fixed = self.inference {
            self.omega.iter_mut().for_each(|x| *x = 0.0);
            self.omega[context] = 1.0;
        }
    }

    pub fn cr_maps(&self) -> &[Vec<f64>] {
        &self.w_cr
    }

    pub fn trace(&self) -> &[FilterTraceRow] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<FilterTraceRow> {
        std::mem::take(&mut self.trace)
    }

    pub fn begin_episode(&mut self, episode: usize, phi0: Vec<f64>) {
        self.episode = episode;
        self.tracker.begin(0);
        self.phis.clear();
        self.phis.push(phi0);
        self.acting.clear();
        self.deferred.clear();
    }

    /// Record a step: the reward received on arriving at a state with
    /// features `phi_next`, after acting under `context`. Filters the
    /// observation that became available, if any.
    pub fn observe(&mut self, phi_next: Vec<f64>, reward: f64, context: usize, alpha_cr: f64) -> Result<()> {
        self.acting.push(context);
        self.phis.push(phi_next);
        let tau = self.phis.len() - 1;
        self.tracker.record(tau, reward);
        if let Some(obs) = self.tracker.ready() {
            self.assimilate(&obs, alpha_cr)?;
        }
        Ok(())
    }

    fn acting_at(&self, tau: usize) -> usize {
        self.acting
            .get(tau)
            .or(self.acting.last())
            .copied()
            .unwrap_or(0)
    }

    fn assimilate(&mut self, obs: &CrObservation<usize>, alpha_cr: f64) -> Result<()> {
        let v = obs.value;
        let winner = match &mut self.inference {
            Inference::Filter(pf) => {
                let phi = &self.phis[obs.state];
                let means: Vec<f64> = self.w_cr.iter().map(|w| dot(phi, w)).collect();
                let sigma = self.sigma;
                let step = pf.step(
                    |_, c| log_likelihood(v, means[c], sigma),
                    &mut self.proposal_rng,
                    &mut self.resample_rng,
                );
                step.winner
            }
            Inference::Gaussian(pf, bank) => {
                let phi = &self.phis[obs.state];
                let step = pf.step(
                    |p, c| bank.log_predictive(p, c, phi, v),
                    &mut self.proposal_rng,
                    &mut self.resample_rng,
                );
                bank.assimilate(&step.proposals, phi, v)?;
                bank.reindex(&step.ancestors);
                step.winner
            }
            Inference::Fixed => self.acting_at(obs.state),
        };
        self.apply_cr_update(obs.state, v, winner, alpha_cr);
        Ok(())
    }

    fn apply_cr_update(&mut self, tau: usize, v: f64, winner: usize, alpha_cr: f64) {
        match (&self.inference, self.kind) {
            (Inference::Gaussian(..), _) => self.refresh_gaussian_maps(),
            (_, AgentKind::Bsr2) => self.deferred.push((self.phis[tau].clone(), v)),
            _ => cr_map_update(&mut self.w_cr[winner], &self.phis[tau], v, alpha_cr),
        }
        if self.record_trace {
            self.trace.push(FilterTraceRow {
                episode: self.episode,
                tau,
                v_cr: v,
                omega: self.omega().to_vec(),
                winner,
            });
        }
    }

    fn refresh_gaussian_maps(&mut self) {
        if let Inference::Gaussian(_, bank) = &self.inference {
            for c in 0..self.k {
                self.w_cr[c] = bank.mean_map(c);
            }
        }
    }

    /// Filter the trailing observations of the episode jointly and run any
    /// deferred end-of-episode CR map updates.
    pub fn end_episode(&mut self, alpha_cr: f64) -> Result<()> {
        let obs = self.tracker.trailing();
        if !obs.is_empty() {
            let winners: Vec<usize> = match &mut self.inference {
                Inference::Filter(pf) => {
                    let means: Vec<Vec<f64>> = obs
                        .iter()
                        .map(|o| self.w_cr.iter().map(|w| dot(&self.phis[o.state], w)).collect())
                        .collect();
                    let sigma = self.sigma;
                    pf.flush(
                        obs.len(),
                        |_, j, c| log_likelihood(obs[j].value, means[j][c], sigma),
                        &mut self.proposal_rng,
                        &mut self.resample_rng,
                    )
                    .map(|f| f.winners)
                    .unwrap_or_default()
                }
                Inference::Gaussian(pf, bank) => {
                    let phis = &self.phis;
                    let flush = pf.flush(
                        obs.len(),
                        |p, j, c| bank.log_predictive(p, c, &phis[obs[j].state], obs[j].value),
                        &mut self.proposal_rng,
                        &mut self.resample_rng,
                    );
                    match flush {
                        Some(f) => {
                            for (j, o) in obs.iter().enumerate() {
                                let col: Vec<usize> = f.proposals.iter().map(|s| s[j]).collect();
                                bank.assimilate(&col, &phis[o.state], o.value)?;
                            }
                            bank.reindex(&f.ancestors);
                            f.winners
                        }
                        None => Vec::new(),
                    }
                }
                Inference::Fixed => obs.iter().map(|o| self.acting_at(o.state)).collect(),
            };
            for (o, w) in obs.iter().zip(winners) {
                self.apply_cr_update(o.state, o.value, w, alpha_cr);
            }
        }
        if self.kind == AgentKind::Bsr2 {
            let omega = self.omega().to_vec();
            bsr2_episode_update(&self.deferred, &omega, &mut self.w_cr, alpha_cr);
            self.deferred.clear();
        }
        Ok(())
    }

    /// Bit pattern digest of the learnable state.
    pub fn fingerprint(&self) -> Vec<u64> {
        let mut out: Vec<u64> = self.w_cr.iter().flatten().map(|x| x.to_bits()).collect();
        out.extend(self.omega().iter().map(|x| x.to_bits()));
        if let Inference::Filter(pf) | Inference::Gaussian(pf, _) = &self.inference {
            for p in 0..pf.n_particles() {
                out.extend(pf.row(p).map(|c| c as u64));
            }
        }
        out
    }
}
