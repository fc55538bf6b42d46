//! Experiment drivers, sweeps, summaries and result files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{FilterTraceRow, NeuralAgent, TabularAgent};
use crate::analysis::{
    flicker_trace, one_way_anova, splitter_decode, trial_progress_stat, FlickerSample, FlickerStep, MeanSem,
};
use crate::config::{AgentKind, Profile, RunConfig};
use crate::domain::{entropy, Action, StateId, N_ACTIONS};
use crate::envs::{
    block_schedule, puddles_opposite, sample_cell_excluding, sample_cells, sample_start_goal, ContinuousEnv,
    ContinuousMaze, GridEnv, GridLayout, GridTask, GridWorld, Point, TrialType, YMaze,
};
use crate::error::{BsrError, Result};
use crate::rng::{hash_str, hash_words, stream, Rng, RngRole};

/// Forage sessions analysed for trial-progress statistics (inclusive).
pub const FORAGE_SESSIONS: (usize, usize) = (25, 140);
/// Trials per session entering the trial-progress statistic.
pub const FORAGE_TRIALS: usize = 16;
/// Episodes allowed per Y-maze segment before it is abandoned.
const SEGMENT_EPISODE_CAP: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    pub reward: f64,
    /// The goal (or, when foraging, every reward) was reached.
    pub success: bool,
    /// Episodes since the last task change (0 = first episode of a task).
    pub since_change: usize,
    pub epsilon: f64,
    pub most_likely: usize,
    pub entropy: f64,
    pub session: Option<usize>,
    pub trial_type: Option<usize>,
    /// Part of the recorded phase (Y-maze blocks after pre-training).
    pub recorded: bool,
}

/// Firing vector at the first step of a Y-maze episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartBoxRecord {
    pub episode: usize,
    pub trial_type: usize,
    pub success: bool,
    pub firing: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionFlicker {
    pub session: usize,
    pub per_trial: Vec<Option<f64>>,
    pub steps: Vec<FlickerStep>,
    pub skipped: usize,
    pub degenerate: bool,
}

/// Everything a run produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub episodes: Vec<EpisodeRecord>,
    pub total_steps: usize,
    pub total_reward: f64,
    pub flicker: Vec<SessionFlicker>,
    pub start_box: Vec<StartBoxRecord>,
    pub filter_trace: Vec<FilterTraceRow>,
}

impl RunArtifacts {
    fn new(cfg: &RunConfig) -> Self {
        RunArtifacts {
            config: cfg.clone(),
            episodes: Vec::new(),
            total_steps: 0,
            total_reward: 0.0,
            flicker: Vec::new(),
            start_box: Vec::new(),
            filter_trace: Vec::new(),
        }
    }

    fn push(&mut self, rec: EpisodeRecord) {
        self.total_steps += rec.steps;
        self.total_reward += rec.reward;
        self.episodes.push(rec);
    }

    /// Steps of the first episode after each task change (the run's first
    /// task excluded).
    pub fn change_episode_steps(&self) -> Vec<usize> {
        self.episodes
            .iter()
            .filter(|e| e.since_change == 0 && e.episode > 0)
            .map(|e| e.steps)
            .collect()
    }
}

/// Run one experiment with the schedule of its profile.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    if cfg.agent == AgentKind::Gpi && cfg.change_every == 0 {
        return Err(BsrError::Config(
            "gpi needs task change signals; change_every must be positive".into(),
        ));
    }
    info!("running {} seed {}", cfg.label(), cfg.seed);
    match cfg.profile {
        Profile::Exp1 | Profile::Exp2 => run_grid_tasks(cfg),
        Profile::Exp3 => run_continuous(cfg),
        Profile::Forage => run_forage(cfg),
        Profile::Ymaze => run_ymaze(cfg),
    }
}

fn load_layout(cfg: &RunConfig) -> Result<GridLayout> {
    match &cfg.layout {
        Some(path) => GridLayout::from_file(Path::new(path)),
        None => Ok(GridLayout::default_maze()),
    }
}

struct EpisodeOutcome {
    steps: usize,
    reward: f64,
    success: bool,
}

/// Run one grid episode. `on_act` sees every choice before the agent learns
/// from it. Collected rewards are masked when valuing actions.
fn grid_episode<F>(
    agent: &mut TabularAgent,
    env: &mut GridEnv,
    episode: usize,
    start: Option<StateId>,
    mut on_act: F,
) -> Result<EpisodeOutcome>
where
    F: FnMut(&TabularAgent, usize, StateId, Action, usize),
{
    let mut s = match start {
        Some(s) => env.reset_at(s),
        None => env.reset(),
    };
    agent.begin_episode(episode, s);
    let mut out = EpisodeOutcome {
        steps: 0,
        reward: 0.0,
        success: false,
    };
    let mut masked = Vec::new();
    loop {
        masked.clear();
        masked.extend(
            env.task()
                .goals
                .iter()
                .zip(env.collected())
                .filter(|(_, c)| **c)
                .map(|(g, _)| *g),
        );
        let (a, ctx) = agent.act(s, &masked);
        on_act(agent, out.steps, s, a, ctx);
        let step = env.step(a);
        agent.learn(s, a, ctx, step.next_state, step.reward)?;
        out.steps += 1;
        out.reward += step.reward;
        if step.terminal {
            out.success = true;
        }
        if step.terminal || step.truncated {
            break;
        }
        s = step.next_state;
    }
    agent.end_episode()?;
    Ok(out)
}

fn record(
    episode: usize,
    out: &EpisodeOutcome,
    since_change: usize,
    epsilon: f64,
    omega: &[f64],
) -> EpisodeRecord {
    EpisodeRecord {
        episode,
        steps: out.steps,
        reward: out.reward,
        success: out.success,
        since_change,
        epsilon,
        most_likely: crate::domain::argmax(omega),
        entropy: entropy(omega),
        session: None,
        trial_type: None,
        recorded: true,
    }
}

fn finish_tabular(mut art: RunArtifacts, agent: &mut TabularAgent) -> RunArtifacts {
    art.filter_trace = agent.context_mut().take_trace();
    art
}

/// Experiments I and II: start and goal resampled every `change_every`
/// episodes. Experiment I supplies the reward function and signals every
/// change; Experiment II adds puddles and only GPI hears of changes.
fn run_grid_tasks(cfg: &RunConfig) -> Result<RunArtifacts> {
    let layout = load_layout(cfg)?;
    let world = GridWorld::new(layout.clone());
    let n = world.n_states();
    let mut sched = stream(cfg.seed, RngRole::Schedule);
    let mut agent = TabularAgent::new(cfg, n)?;
    let (s0, g0) = sample_start_goal(&world, &mut sched);
    let mut env = GridEnv::new(world.clone(), GridTask::single(s0, g0, n), cfg.max_steps)?;
    let mut art = RunArtifacts::new(cfg);
    let change_every = cfg.change_every.max(1);
    for ep in 0..cfg.episodes {
        if ep % change_every == 0 {
            let (s, g) = if ep == 0 { (s0, g0) } else { sample_start_goal(&world, &mut sched) };
            let puddles = if cfg.profile == Profile::Exp2 {
                puddles_opposite(&layout, g)
            } else {
                vec![false; n]
            };
            env.set_task(GridTask {
                start: s,
                goals: vec![g],
                puddles,
            })?;
            if ep > 0 && cfg.agent == AgentKind::Gpi {
                agent.gpi_task_change()?;
            }
            if cfg.agent == AgentKind::Kq {
                agent.set_known_context(layout.quadrant(g) % cfg.k);
            }
            if cfg.profile == Profile::Exp1 {
                agent.provide_reward(&env.task().reward_vector());
            }
        }
        let out = grid_episode(&mut agent, &mut env, ep, None, |_, _, _, _, _| {})?;
        art.push(record(ep, &out, ep % change_every, agent.epsilon(), agent.omega()));
    }
    Ok(finish_tabular(art, &mut agent))
}

fn point_quadrant(p: Point, side: f64) -> usize {
    let q = |v: f64| usize::from(v >= side / 2.0);
    q(p[1]) * 2 + q(p[0])
}

/// Experiment III: the continuous maze, run until the step budget (and the
/// episode limit, when set) is used up.
fn run_continuous(cfg: &RunConfig) -> Result<RunArtifacts> {
    let layout = load_layout(cfg)?;
    let maze = ContinuousMaze::from_layout(&layout);
    let side = maze.side();
    let mut sched = stream(cfg.seed, RngRole::Schedule);
    let mut env_rng = stream(cfg.seed, RngRole::Environment);
    let (s0, g0) = maze.sample_start_goal(&mut sched);
    let mut env = ContinuousEnv::new(maze, s0, g0, cfg.max_steps);
    let mut agent = NeuralAgent::new(cfg, env.dim())?;
    let mut art = RunArtifacts::new(cfg);
    let change_every = cfg.change_every.max(1);
    let budget = if cfg.total_steps == 0 { usize::MAX } else { cfg.total_steps };
    let mut ep = 0;
    while art.total_steps < budget && (cfg.episodes == 0 || ep < cfg.episodes) {
        if ep % change_every == 0 && ep > 0 {
            let (s, g) = env.maze().sample_start_goal(&mut sched);
            env.set_task(s, g);
            if cfg.agent == AgentKind::Gpi {
                agent.gpi_task_change()?;
            }
        }
        if cfg.agent == AgentKind::Kq {
            agent.set_known_context(point_quadrant(env.goal(), side) % cfg.k);
        }
        let mut x = env.reset();
        agent.begin_episode(ep, &x);
        let mut out = EpisodeOutcome {
            steps: 0,
            reward: 0.0,
            success: false,
        };
        loop {
            let (a, ctx) = agent.act(&x);
            let (step, x_next) = env.step(a, &mut env_rng);
            agent.learn(&x, a, ctx, &x_next, step.reward)?;
            out.steps += 1;
            out.reward += step.reward;
            out.success |= step.terminal;
            if step.terminal || step.truncated || art.total_steps + out.steps >= budget {
                break;
            }
            x = x_next;
        }
        agent.end_episode()?;
        art.push(record(ep, &out, ep % change_every, agent.epsilon(), agent.omega()));
        if ep % 100 == 0 {
            log::debug!("{} episode {ep}: {} steps so far", cfg.label(), art.total_steps);
        }
        ep += 1;
    }
    Ok(art)
}

/// Reward-free random walk; the agent is only inspected, never updated.
fn probe(agent: &TabularAgent, env: &mut GridEnv, steps: usize, rng: &mut Rng) -> Result<()> {
    let before = agent.fingerprint();
    let free = env.world().layout().free_cells();
    env.reset_at(free[rng.random_range(0..free.len())]);
    for _ in 0..steps {
        env.step(Action::ALL[rng.random_range(0..N_ACTIONS)]);
    }
    if agent.fingerprint() != before {
        return Err(BsrError::Contract("probe modified the agent".into()));
    }
    Ok(())
}

/// Open-field foraging: three reward cells per session, unsignalled except
/// to GPI, with probes before and after the session's trials.
fn run_forage(cfg: &RunConfig) -> Result<RunArtifacts> {
    let layout = match &cfg.layout {
        Some(path) => GridLayout::from_file(Path::new(path))?,
        None => GridLayout::open(8, 8),
    };
    let world = GridWorld::new(layout.clone());
    let n = world.n_states();
    let mut sched = stream(cfg.seed, RngRole::Schedule);
    let mut probe_rng = stream(cfg.seed, RngRole::Probe);
    let mut agent = TabularAgent::new(cfg, n)?;
    let mut env = GridEnv::new(world, GridTask::single(0, 1, n), cfg.max_steps)?;
    let mut art = RunArtifacts::new(cfg);
    let mut ep = 0;
    for session in 0..cfg.sessions {
        let goals = sample_cells(&layout, 3, &mut sched);
        let pre = agent.weighted_map();
        probe(&agent, &mut env, cfg.probe_steps, &mut probe_rng)?;
        // The rewards move when the trials start, after the pre probe.
        if session > 0 && cfg.agent == AgentKind::Gpi {
            agent.gpi_task_change()?;
        }
        let mut visits: Vec<(usize, StateId, Action, Vec<f64>)> = Vec::new();
        for trial in 0..cfg.trials_per_session {
            let start = sample_cell_excluding(&layout, &goals, &mut sched);
            env.set_task(GridTask {
                start,
                goals: goals.clone(),
                puddles: vec![false; n],
            })?;
            let out = grid_episode(&mut agent, &mut env, ep, None, |ag, _, s, a, ctx| {
                visits.push((trial, s, a, ag.firing(ctx, s, a).to_vec()));
            })?;
            let mut rec = record(ep, &out, trial, agent.epsilon(), agent.omega());
            rec.session = Some(session);
            art.push(rec);
            ep += 1;
        }
        let post = agent.weighted_map();
        probe(&agent, &mut env, cfg.probe_steps, &mut probe_rng)?;
        let samples: Vec<FlickerSample> = visits
            .into_iter()
            .map(|(trial, s, a, firing)| FlickerSample {
                trial,
                firing,
                pre: pre.row(s, a).to_vec(),
                post: post.row(s, a).to_vec(),
            })
            .collect();
        let tr = flicker_trace(&samples, cfg.trials_per_session);
        if tr.degenerate {
            warn!("{} session {session}: degenerate flicker trace", cfg.label());
        }
        art.flicker.push(SessionFlicker {
            session,
            per_trial: tr.per_trial.iter().map(|v| v.is_finite().then_some(*v)).collect(),
            steps: tr.steps,
            skipped: tr.skipped,
            degenerate: tr.degenerate,
        });
    }
    Ok(finish_tabular(art, &mut agent))
}

/// Y-maze: pre-training with random trial types, then blocks of all four
/// types, each segment lasting until enough successful episodes.
fn run_ymaze(cfg: &RunConfig) -> Result<RunArtifacts> {
    let y = YMaze::new();
    let n = y.n_states();
    let mut sched = stream(cfg.seed, RngRole::Schedule);
    let mut agent = TabularAgent::new(cfg, n)?;
    let mut env = GridEnv::new(y.world(TrialType::One), y.task(TrialType::One), cfg.max_steps)?;
    let mut art = RunArtifacts::new(cfg);
    let mut current: Option<TrialType> = None;
    let switch = |tt: TrialType, env: &mut GridEnv, agent: &mut TabularAgent, first: bool| -> Result<()> {
        env.set_world(y.world(tt))?;
        env.set_task(y.task(tt))?;
        if !first && agent.kind() == AgentKind::Gpi {
            agent.gpi_task_change()?;
        }
        if agent.kind() == AgentKind::Kq {
            agent.set_known_context(tt.goal_context() % agent.config().k);
        }
        Ok(())
    };
    let change_every = cfg.change_every.max(1);
    let mut since = 0;
    for ep in 0..cfg.pretrain_episodes {
        if ep % change_every == 0 {
            let tt = TrialType::ALL[sched.random_range(0..4)];
            if current != Some(tt) {
                switch(tt, &mut env, &mut agent, current.is_none())?;
                since = 0;
            }
            current = Some(tt);
        }
        let out = grid_episode(&mut agent, &mut env, ep, None, |_, _, _, _, _| {})?;
        let mut rec = record(ep, &out, since, agent.epsilon(), agent.omega());
        rec.trial_type = current.map(TrialType::index);
        rec.recorded = false;
        art.push(rec);
        since += 1;
    }
    let mut ep = cfg.pretrain_episodes;
    for block in block_schedule(cfg.blocks, &mut sched) {
        for tt in block {
            if current != Some(tt) {
                switch(tt, &mut env, &mut agent, current.is_none())?;
                since = 0;
                current = Some(tt);
            }
            let mut successes = 0;
            let mut tries = 0;
            while successes < cfg.successes_per_segment && tries < SEGMENT_EPISODE_CAP {
                let mut first: Option<Vec<f64>> = None;
                let out = grid_episode(&mut agent, &mut env, ep, None, |ag, t, s, a, ctx| {
                    if t == 0 {
                        first = Some(ag.firing(ctx, s, a).to_vec());
                    }
                })?;
                art.start_box.push(StartBoxRecord {
                    episode: ep,
                    trial_type: tt.index(),
                    success: out.success,
                    firing: first.unwrap_or_default(),
                });
                let mut rec = record(ep, &out, since, agent.epsilon(), agent.omega());
                rec.trial_type = Some(tt.index());
                art.push(rec);
                successes += usize::from(out.success);
                tries += 1;
                since += 1;
                ep += 1;
            }
            if successes < cfg.successes_per_segment {
                warn!("{}: segment for trial type {} abandoned after {tries} episodes", cfg.label(), tt.index() + 1);
            }
        }
    }
    Ok(finish_tabular(art, &mut agent))
}

/// Per-trial z-difference traces of the analysed forage sessions.
pub fn forage_traces(art: &RunArtifacts) -> Vec<Vec<f64>> {
    art.flicker
        .iter()
        .filter(|f| (FORAGE_SESSIONS.0..=FORAGE_SESSIONS.1).contains(&f.session))
        .map(|f| f.per_trial.iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect()
}

/// Trial-progress Spearman statistic over the analysed sessions of runs.
pub fn forage_progress(arts: &[RunArtifacts]) -> MeanSem {
    let traces: Vec<Vec<f64>> = arts.iter().flat_map(forage_traces).collect();
    trial_progress_stat(&traces, FORAGE_TRIALS)
}

/// Mean z-difference per trial over the analysed sessions of runs.
pub fn forage_mean_trace(arts: &[RunArtifacts]) -> Vec<f64> {
    let traces: Vec<Vec<f64>> = arts.iter().flat_map(forage_traces).collect();
    let width = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    (0..width)
        .map(|i| {
            let vals: Vec<f64> = traces.iter().filter_map(|t| t.get(i)).copied().filter(|v| v.is_finite()).collect();
            crate::analysis::mean(&vals)
        })
        .collect()
}

/// Confusion matrix of trial type decoded from start-box vectors of the
/// successful recorded trials. Each run is decoded on its own, since context
/// labels are not comparable across runs, and the matrices are averaged.
pub fn splitter_matrix(arts: &[RunArtifacts]) -> Result<Vec<Vec<f64>>> {
    let mut total = vec![vec![0.0; 4]; 4];
    let mut decoded = 0;
    for art in arts {
        let trials: Vec<(usize, Vec<f64>)> = art
            .start_box
            .iter()
            .filter(|r| r.success && !r.firing.is_empty())
            .map(|r| (r.trial_type, r.firing.clone()))
            .collect();
        if trials.is_empty() {
            continue;
        }
        let m = splitter_decode(&trials, 4)?;
        for (t, row) in total.iter_mut().zip(&m) {
            for (x, y) in t.iter_mut().zip(row) {
                *x += y;
            }
        }
        decoded += 1;
    }
    if decoded == 0 {
        return splitter_decode(&[], 4);
    }
    for row in &mut total {
        row.iter_mut().for_each(|x| *x /= decoded as f64);
    }
    Ok(total)
}

/// Mean steps of recorded Y-maze episodes on barrier trials and on open
/// trials.
pub fn barrier_steps(arts: &[RunArtifacts]) -> (f64, f64) {
    let mut barred = Vec::new();
    let mut open = Vec::new();
    for e in arts.iter().flat_map(|a| a.episodes.iter()).filter(|e| e.recorded) {
        let Some(tt) = e.trial_type.and_then(TrialType::from_index) else {
            continue;
        };
        if tt.is_barrier_trial() {
            barred.push(e.steps as f64);
        } else {
            open.push(e.steps as f64);
        }
    }
    (crate::analysis::mean(&barred), crate::analysis::mean(&open))
}

/// Sweep cell: one agent at one (ε, α_sr) setting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellResult {
    pub agent: AgentKind,
    pub label: String,
    pub epsilon: f64,
    pub alpha_sr: f64,
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
    pub summary: Option<MeanSem>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub profile: Profile,
    pub metric: &'static str,
    pub cells: Vec<CellResult>,
    /// Index into `cells` of the best cell per agent label.
    pub best: BTreeMap<String, usize>,
}

/// Score a run is ranked by, and whether lower is better.
pub fn run_metric(art: &RunArtifacts) -> f64 {
    if lower_is_better(art.config.profile) {
        art.total_steps as f64
    } else {
        art.total_reward
    }
}

pub fn lower_is_better(profile: Profile) -> bool {
    matches!(profile, Profile::Exp1 | Profile::Forage | Profile::Ymaze)
}

/// Seed of one replicate of a sweep cell; depends only on the cell.
pub fn cell_seed(base: u64, label: &str, epsilon: f64, alpha_sr: f64, replicate: usize) -> u64 {
    hash_words(&[base, hash_str(label), epsilon.to_bits(), alpha_sr.to_bits(), replicate as u64])
}

/// Run every configuration × ε × α_sr cell for `seeds` replicates, in
/// parallel. Failing runs are recorded in their cell.
pub fn sweep(
    templates: &[RunConfig],
    epsilons: &[f64],
    alphas: &[f64],
    seeds: usize,
    base_seed: u64,
) -> SweepSummary {
    let profile = templates.first().map(|t| t.profile).unwrap_or(Profile::Exp1);
    let mut cells = Vec::new();
    for t in templates {
        for &eps in epsilons {
            for &alpha in alphas {
                cells.push((t.clone(), eps, alpha));
            }
        }
    }
    let jobs: Vec<(usize, RunConfig)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, (t, eps, alpha))| {
            (0..seeds).map(move |r| {
                let mut cfg = t.clone();
                cfg.epsilon = *eps;
                cfg.alpha_sr = *alpha;
                cfg.seed = cell_seed(base_seed, &t.label(), *eps, *alpha, r);
                (i, cfg)
            })
        })
        .collect();
    let outcomes: Vec<(usize, u64, std::result::Result<f64, String>)> = jobs
        .par_iter()
        .map(|(i, cfg)| {
            let res = run_experiment(cfg).map(|a| run_metric(&a)).map_err(|e| e.to_string());
            (*i, cfg.seed, res)
        })
        .collect();
    let mut results: Vec<CellResult> = cells
        .iter()
        .map(|(t, eps, alpha)| CellResult {
            agent: t.agent,
            label: t.label(),
            epsilon: *eps,
            alpha_sr: *alpha,
            seeds: Vec::new(),
            values: Vec::new(),
            summary: None,
            errors: Vec::new(),
        })
        .collect();
    for (i, seed, res) in outcomes {
        let cell = &mut results[i];
        cell.seeds.push(seed);
        match res {
            Ok(v) => cell.values.push(v),
            Err(e) => cell.errors.push(e),
        }
    }
    for c in &mut results {
        if !c.values.is_empty() {
            c.summary = Some(MeanSem::of(&c.values));
        }
    }
    let lower = lower_is_better(profile);
    let mut best: BTreeMap<String, usize> = BTreeMap::new();
    for (i, c) in results.iter().enumerate() {
        let Some(s) = c.summary else { continue };
        let better = match best.get(&c.label) {
            None => true,
            Some(&j) => {
                let b = results[j].summary.expect("best cells have results").mean;
                if lower {
                    s.mean < b
                } else {
                    s.mean > b
                }
            }
        };
        if better {
            best.insert(c.label.clone(), i);
        }
    }
    SweepSummary {
        profile,
        metric: if lower { "total_steps" } else { "total_reward" },
        cells: results,
        best,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub seed: u64,
    pub episodes: usize,
    pub total_steps: usize,
    pub total_reward: f64,
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupSummary {
    pub label: String,
    pub runs: usize,
    pub total_steps: MeanSem,
    pub total_reward: MeanSem,
    /// Mean episode length per episode index, across runs.
    pub episode_curve: Vec<f64>,
    pub trial_progress: Option<MeanSem>,
    pub splitter: Option<Vec<Vec<f64>>>,
    /// Mean steps on barrier and open trials (Y-maze).
    pub barrier_steps: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub runs: Vec<RunSummary>,
    pub groups: Vec<GroupSummary>,
    pub anova_total_steps: Option<f64>,
    pub anova_total_reward: Option<f64>,
}

/// Totals per run, per-label group statistics and ANOVAs across groups.
pub fn summarize(arts: &[RunArtifacts]) -> Report {
    let runs = arts
        .iter()
        .map(|a| RunSummary {
            label: a.config.label(),
            seed: a.config.seed,
            episodes: a.episodes.len(),
            total_steps: a.total_steps,
            total_reward: a.total_reward,
            config: a.config.clone(),
        })
        .collect();
    let mut by_label: BTreeMap<String, Vec<RunArtifacts>> = BTreeMap::new();
    for a in arts {
        by_label.entry(a.config.label()).or_default().push(a.clone());
    }
    let mut groups = Vec::new();
    let mut step_groups = Vec::new();
    let mut reward_groups = Vec::new();
    for (label, group) in &by_label {
        let steps: Vec<f64> = group.iter().map(|a| a.total_steps as f64).collect();
        let rewards: Vec<f64> = group.iter().map(|a| a.total_reward).collect();
        let width = group.iter().map(|a| a.episodes.len()).max().unwrap_or(0);
        let episode_curve = (0..width)
            .map(|i| {
                let v: Vec<f64> = group.iter().filter_map(|a| a.episodes.get(i)).map(|e| e.steps as f64).collect();
                crate::analysis::mean(&v)
            })
            .collect();
        let profile = group[0].config.profile;
        groups.push(GroupSummary {
            label: label.clone(),
            runs: group.len(),
            total_steps: MeanSem::of(&steps),
            total_reward: MeanSem::of(&rewards),
            episode_curve,
            trial_progress: (profile == Profile::Forage).then(|| forage_progress(group)),
            splitter: (profile == Profile::Ymaze).then(|| splitter_matrix(group).ok()).flatten(),
            barrier_steps: (profile == Profile::Ymaze).then(|| barrier_steps(group)),
        });
        step_groups.push(steps);
        reward_groups.push(rewards);
    }
    Report {
        runs,
        groups,
        anova_total_steps: one_way_anova(&step_groups).ok(),
        anova_total_reward: one_way_anova(&reward_groups).ok(),
    }
}

#[derive(Serialize)]
struct FlickerRow {
    session: usize,
    trial: usize,
    step: usize,
    z_diff: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_matrix(path: &Path, m: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = std::iter::once("actual".to_string())
        .chain((1..=m.len()).map(|j| format!("decoded_{j}")))
        .collect();
    w.write_record(&header)?;
    for (i, row) in m.iter().enumerate() {
        let rec: Vec<String> = std::iter::once((i + 1).to_string())
            .chain(row.iter().map(|x| x.to_string()))
            .collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a run's artifacts into `dir`: the full record as JSON plus CSV
/// views of episodes, flicker traces and filter traces.
pub fn write_artifacts(dir: &Path, art: &RunArtifacts) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("artifacts.json"), serde_json::to_vec(art)?)?;
    fs::write(dir.join("config.toml"), art.config.to_toml_string())?;
    write_csv(&dir.join("episodes.csv"), &art.episodes)?;
    if !art.flicker.is_empty() {
        write_csv(
            &dir.join("flicker.csv"),
            art.flicker.iter().flat_map(|f| {
                f.steps.iter().map(move |s| FlickerRow {
                    session: f.session,
                    trial: s.trial,
                    step: s.step,
                    z_diff: s.z_diff,
                })
            }),
        )?;
    }
    if !art.start_box.is_empty() {
        if let Ok(m) = splitter_matrix(std::slice::from_ref(art)) {
            write_matrix(&dir.join("splitter.csv"), &m)?;
        }
    }
    if !art.filter_trace.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("filter_trace.csv"))?;
        w.write_record(["episode", "tau", "v_cr", "winner", "omega"])?;
        for r in &art.filter_trace {
            let omega: Vec<String> = r.omega.iter().map(|x| x.to_string()).collect();
            w.write_record([
                r.episode.to_string(),
                r.tau.to_string(),
                r.v_cr.to_string(),
                r.winner.to_string(),
                omega.join(" "),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Load every `artifacts.json` below `dir`, in path order.
pub fn read_artifacts(dir: &Path) -> Result<Vec<RunArtifacts>> {
    let mut paths = Vec::new();
    collect_artifact_paths(dir, &mut paths)?;
    paths.sort();
    paths
        .iter()
        .map(|p| Ok(serde_json::from_slice(&fs::read(p)?)?))
        .collect()
}

fn collect_artifact_paths(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_artifact_paths(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "artifacts.json") {
            out.push(path);
        }
    }
    Ok(())
}

/// Write a report as JSON with a CSV of group totals and one splitter
/// matrix per Y-maze group.
pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(report)?)?;
    #[derive(Serialize)]
    struct Row<'a> {
        label: &'a str,
        runs: usize,
        steps_mean: f64,
        steps_sem: f64,
        reward_mean: f64,
        reward_sem: f64,
        trial_progress_mean: Option<f64>,
        trial_progress_sem: Option<f64>,
    }
    write_csv(
        &dir.join("summary.csv"),
        report.groups.iter().map(|g| Row {
            label: &g.label,
            runs: g.runs,
            steps_mean: g.total_steps.mean,
            steps_sem: g.total_steps.sem,
            reward_mean: g.total_reward.mean,
            reward_sem: g.total_reward.sem,
            trial_progress_mean: g.trial_progress.map(|t| t.mean),
            trial_progress_sem: g.trial_progress.map(|t| t.sem),
        }),
    )?;
    for g in &report.groups {
        if let Some(m) = &g.splitter {
            write_matrix(&dir.join(format!("splitter_{}.csv", g.label.replace('/', "_"))), m)?;
        }
    }
    Ok(())
}

pub fn write_sweep(dir: &Path, summary: &SweepSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(summary)?)?;
    #[derive(Serialize)]
    struct Row<'a> {
        label: &'a str,
        epsilon: f64,
        alpha_sr: f64,
        runs: usize,
        failures: usize,
        mean: Option<f64>,
        sem: Option<f64>,
        best: bool,
    }
    write_csv(
        &dir.join("sweep.csv"),
        summary.cells.iter().enumerate().map(|(i, c)| Row {
            label: &c.label,
            epsilon: c.epsilon,
            alpha_sr: c.alpha_sr,
            runs: c.values.len(),
            failures: c.errors.len(),
            mean: c.summary.map(|s| s.mean),
            sem: c.summary.map(|s| s.sem),
            best: summary.best.get(&c.label) == Some(&i),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quick(profile: Profile, agent: AgentKind) -> RunConfig {
        let mut cfg = RunConfig::new(profile, agent);
        cfg.n_particles = 20;
        match profile {
            Profile::Exp1 | Profile::Exp2 => cfg.episodes = 60,
            Profile::Exp3 => {
                cfg.total_steps = 300;
                cfg.hidden = vec![16];
            }
            Profile::Forage => {
                cfg.sessions = 3;
                cfg.trials_per_session = 4;
            }
            Profile::Ymaze => {
                cfg.pretrain_episodes = 40;
                cfg.blocks = 1;
                cfg.successes_per_segment = 2;
            }
        }
        cfg
    }

    #[test]
    fn exp1_runs_requested_episodes() {
        let art = run_experiment(&quick(Profile::Exp1, AgentKind::Bsr)).unwrap();
        assert_eq!(art.episodes.len(), 60);
        assert_eq!(art.total_steps, art.episodes.iter().map(|e| e.steps).sum::<usize>());
        assert!(art.episodes.iter().all(|e| e.steps <= 75));
        assert_eq!(art.change_episode_steps().len(), 2);
    }

    #[test]
    fn epsilon_reaches_target_after_annealing() {
        let mut cfg = quick(Profile::Exp1, AgentKind::Ssr);
        cfg.epsilon = 0.0;
        cfg.epsilon_anneal_episodes = 20;
        cfg.episodes = 30;
        let art = run_experiment(&cfg).unwrap();
        assert_eq!(art.episodes[0].epsilon, 1.0);
        assert!(art.episodes[20..].iter().all(|e| e.epsilon == 0.0));
    }

    #[test]
    fn gpi_without_signals_is_rejected() {
        let mut cfg = quick(Profile::Exp1, AgentKind::Gpi);
        cfg.change_every = 0;
        assert!(matches!(run_experiment(&cfg), Err(BsrError::Config(_))));
    }

    #[test]
    fn every_profile_runs() {
        for (p, a) in [
            (Profile::Exp2, AgentKind::Gpi),
            (Profile::Exp3, AgentKind::Bsr),
            (Profile::Forage, AgentKind::Bsr),
            (Profile::Ymaze, AgentKind::Kq),
        ] {
            let art = run_experiment(&quick(p, a)).unwrap();
            assert!(art.total_steps > 0, "{p}");
        }
    }

    #[test]
    fn forage_records_sessions() {
        let art = run_experiment(&quick(Profile::Forage, AgentKind::Ssr)).unwrap();
        assert_eq!(art.flicker.len(), 3);
        assert_eq!(art.episodes.len(), 12);
        assert!(art.flicker.iter().all(|f| f.per_trial.len() == 4));
    }

    #[test]
    fn ymaze_records_start_box() {
        let art = run_experiment(&quick(Profile::Ymaze, AgentKind::Bsr)).unwrap();
        let recorded = art.episodes.iter().filter(|e| e.recorded).count();
        assert_eq!(recorded, art.start_box.len());
        assert!(art.start_box.iter().filter(|r| r.success).count() >= 8);
        assert!(art.start_box.iter().all(|r| r.firing.len() == 54));
    }

    #[test]
    fn exp3_respects_step_budget() {
        let art = run_experiment(&quick(Profile::Exp3, AgentKind::Ssr)).unwrap();
        assert_eq!(art.total_steps, 300);
    }

    #[test]
    fn empty_sweep_is_empty() {
        let s = sweep(&[], &[0.1], &[0.01], 1, 0);
        assert!(s.cells.is_empty());
        assert!(s.best.is_empty());
    }

    #[test]
    fn unit_sweep_matches_single_run() {
        let cfg = quick(Profile::Exp1, AgentKind::Ssr);
        let s = sweep(std::slice::from_ref(&cfg), &[0.1], &[0.001], 1, 9);
        let mut direct = cfg.clone();
        direct.epsilon = 0.1;
        direct.alpha_sr = 0.001;
        direct.seed = cell_seed(9, &cfg.label(), 0.1, 0.001, 0);
        let art = run_experiment(&direct).unwrap();
        assert_eq!(s.cells[0].values, vec![art.total_steps as f64]);
    }

    #[test]
    fn cell_seeds_ignore_other_cells() {
        let a = cell_seed(1, "bsr", 0.1, 0.01, 0);
        assert_eq!(a, cell_seed(1, "bsr", 0.1, 0.01, 0));
        assert_ne!(a, cell_seed(1, "bsr", 0.1, 0.01, 1));
        assert_ne!(a, cell_seed(1, "ssr", 0.1, 0.01, 0));
    }

    #[test]
    fn summarize_single_run_equals_totals() {
        let art = run_experiment(&quick(Profile::Exp1, AgentKind::Ssr)).unwrap();
        let r = summarize(std::slice::from_ref(&art));
        assert_eq!(r.runs[0].total_steps, art.total_steps);
        assert_relative_eq!(r.groups[0].total_steps.mean, art.total_steps as f64);
        assert_eq!(r.runs[0].config, art.config);
        assert_eq!(r, summarize(std::slice::from_ref(&art)));
    }
}
