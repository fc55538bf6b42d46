//! Run configuration: experiment profiles, agent kinds and hyperparameters.
//!
//! A [`RunConfig`] is always resolved from a profile and an agent kind, which
//! fix the tabulated defaults; a structured text (TOML) file may then
//! override any key. Unknown keys are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{BsrError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Signalled goal changes in the walled grid maze.
    Exp1,
    /// Unsignalled goal changes with puddles.
    Exp2,
    /// Continuous maze with successor networks.
    Exp3,
    /// Three-reward open-field foraging with probes.
    Forage,
    /// Y-maze with barrier trials.
    Ymaze,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Bsr,
    /// Context maps updated once at the end of each episode.
    Bsr2,
    /// Conjugate Gaussian posteriors per particle.
    Gsr,
    Ssr,
    /// Single map with the constant exploration offset.
    SsrPlus,
    /// Uniform, fixed belief weights.
    Ew,
    /// Oracle context: goal quadrant (goal location in the Y-maze).
    Kq,
    Gpi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    None,
    Constant,
    ConstantCr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdatePolicy {
    AllMaps,
    MostLikely,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    Multinomial,
    Systematic,
}

/// How GPI values its stored maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpiRewardMode {
    /// Every map is evaluated with the current reward weights.
    Shared,
    /// Each map keeps the reward weights frozen when its task ended.
    Stored,
}

macro_rules! impl_name {
    ($ty:ty { $($variant:ident => $name:literal),* $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $name),* })
            }
        }

        impl FromStr for $ty {
            type Err = BsrError;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().replace('-', "_").as_str() {
                    $($name => Ok(Self::$variant),)*
                    other => Err(BsrError::Config(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

impl_name!(Profile { Exp1 => "exp1", Exp2 => "exp2", Exp3 => "exp3", Forage => "forage", Ymaze => "ymaze" });
impl_name!(AgentKind {
    Bsr => "bsr", Bsr2 => "bsr2", Gsr => "gsr", Ssr => "ssr", SsrPlus => "ssr_plus",
    Ew => "ew", Kq => "kq", Gpi => "gpi",
});
impl_name!(OffsetMode { None => "none", Constant => "constant", ConstantCr => "constant_cr" });
impl_name!(UpdatePolicy { AllMaps => "all_maps", MostLikely => "most_likely", Sampled => "sampled" });

impl Profile {
    pub fn is_continuous(self) -> bool {
        self == Profile::Exp3
    }
}

impl AgentKind {
    pub fn uses_filter(self) -> bool {
        matches!(self, AgentKind::Bsr | AgentKind::Bsr2 | AgentKind::Gsr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub agent: AgentKind,
    pub seed: u64,

    /// Maximum number of contexts (successor maps).
    pub k: usize,
    pub gamma: f64,
    /// Target exploration rate reached by the annealing schedule.
    pub epsilon: f64,
    pub epsilon_anneal_episodes: usize,

    pub alpha_sr: f64,
    pub alpha_w: f64,
    pub alpha_cr_start: f64,
    pub alpha_cr_end: f64,
    pub alpha_cr_episodes: usize,
    pub alpha_ws: f64,
    pub c_ws: f64,
    pub offset: OffsetMode,
    /// Apply the exploration offset once before each episode (the default)
    /// or, when false, before every action.
    pub offset_per_episode: bool,

    pub alpha_dp: f64,
    pub sigma_cr: f64,
    pub filter_delay: usize,
    pub n_particles: usize,
    pub particle_window: usize,
    pub resampling: Resampling,
    /// Divide CR values by the kernel mass of the real (unpadded) steps.
    pub normalize_cr: bool,

    pub update_policy: UpdatePolicy,
    pub replay_batch: usize,
    pub buffer_capacity: usize,
    pub buffer_episodes: usize,
    pub gpi_reward: GpiRewardMode,

    pub episodes: usize,
    pub change_every: usize,
    pub max_steps: usize,
    /// Step budget for step-limited profiles (0 = episode-limited); when set,
    /// `episodes = 0` means no episode limit.
    pub total_steps: usize,
    pub sessions: usize,
    pub trials_per_session: usize,
    pub probe_steps: usize,
    pub pretrain_episodes: usize,
    pub blocks: usize,
    pub successes_per_segment: usize,

    /// ASCII layout file; the bundled layout is used when absent.
    pub layout: Option<String>,

    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub sync_every: usize,
    pub minibatch: usize,

    pub record_filter_trace: bool,
}

/// (epsilon, alpha_sr) best settings per profile, agent and offset.
fn tabulated_settings(profile: Profile, agent: AgentKind, offset: OffsetMode) -> (f64, f64) {
    use AgentKind::*;
    use OffsetMode::*;
    match profile {
        Profile::Exp1 => match agent {
            Bsr | Bsr2 | Gsr => (0.0, 0.005),
            Gpi => (0.05, 0.001),
            Ssr | SsrPlus => (0.1, 0.001),
            Kq => (0.05, 0.001),
            Ew => (0.05, 0.005),
        },
        Profile::Exp2 => match (agent, offset) {
            (Bsr | Bsr2 | Gsr, None) => (0.55, 0.01),
            (Bsr | Bsr2 | Gsr, Constant) => (0.15, 0.05),
            (Bsr | Bsr2 | Gsr, ConstantCr) => (0.05, 0.05),
            (Ssr | SsrPlus | Kq, None) => (0.6, 0.005),
            (Ssr | SsrPlus | Kq, Constant) => (0.25, 0.005),
            (Ssr | SsrPlus | Kq, ConstantCr) => (0.15, 0.01),
            (Ew, None) => (0.55, 0.005),
            (Ew, Constant) => (0.35, 0.05),
            (Ew, ConstantCr) => (0.15, 0.05),
            (Gpi, _) => (0.55, 0.01),
        },
        Profile::Exp3 => match agent {
            Bsr | Bsr2 | Gsr | Ew | Kq => (0.3, 0.0005),
            Gpi => (0.35, 0.0005),
            SsrPlus => (0.4, 0.0005),
            Ssr => (0.45, 0.0005),
        },
        Profile::Forage | Profile::Ymaze => (0.2, 0.1),
    }
}

fn default_offset(profile: Profile, agent: AgentKind) -> OffsetMode {
    match (profile, agent) {
        (_, AgentKind::SsrPlus) => OffsetMode::Constant,
        // Without offsets the agents lock onto dead-end arms and stop reaching goals.
        (Profile::Ymaze, AgentKind::Gpi) => OffsetMode::Constant,
        (Profile::Ymaze, _) => OffsetMode::ConstantCr,
        (Profile::Exp2 | Profile::Exp3, AgentKind::Bsr | AgentKind::Bsr2 | AgentKind::Gsr) => {
            OffsetMode::ConstantCr
        }
        _ => OffsetMode::None,
    }
}

impl RunConfig {
    /// Defaults for a profile/agent pair, with the agent's default offset mode.
    pub fn new(profile: Profile, agent: AgentKind) -> Self {
        Self::with_offset(profile, agent, default_offset(profile, agent))
    }

    pub fn with_offset(profile: Profile, agent: AgentKind, offset: OffsetMode) -> Self {
        let (epsilon, alpha_sr) = tabulated_settings(profile, agent, offset);
        let k = match agent {
            AgentKind::Ssr | AgentKind::SsrPlus => 1,
            _ => 4,
        };
        let mut cfg = RunConfig {
            profile,
            agent,
            seed: 0,
            k,
            gamma: 0.99,
            epsilon,
            epsilon_anneal_episodes: 250,
            alpha_sr,
            alpha_w: 1.0,
            alpha_cr_start: 0.15,
            alpha_cr_end: 0.0,
            alpha_cr_episodes: 6000,
            alpha_ws: 0.01,
            c_ws: 1.0,
            offset,
            offset_per_episode: true,
            alpha_dp: 2.0,
            sigma_cr: 1.6,
            filter_delay: 3,
            n_particles: 100,
            particle_window: 10,
            resampling: Resampling::Multinomial,
            normalize_cr: true,
            update_policy: UpdatePolicy::AllMaps,
            replay_batch: 5,
            buffer_capacity: 300,
            buffer_episodes: 200,
            gpi_reward: GpiRewardMode::Shared,
            episodes: 4500,
            change_every: 20,
            max_steps: 75,
            total_steps: 0,
            sessions: 0,
            trials_per_session: 0,
            probe_steps: 0,
            pretrain_episodes: 0,
            blocks: 0,
            successes_per_segment: 0,
            layout: None,
            hidden: vec![150],
            dropout: 0.1,
            rms_decay: 0.9,
            rms_eps: 1e-8,
            sync_every: 80,
            minibatch: 15,
            record_filter_trace: false,
        };
        match profile {
            Profile::Exp1 => {}
            Profile::Exp2 => {
                cfg.change_every = 30;
                cfg.gpi_reward = GpiRewardMode::Stored;
            }
            Profile::Exp3 => {
                cfg.change_every = 30;
                cfg.total_steps = 250_000;
                cfg.episodes = 0;
                cfg.filter_delay = 4;
                cfg.particle_window = 50;
                cfg.replay_batch = 15;
                cfg.alpha_w = 0.005;
                cfg.alpha_cr_start = 0.005;
                cfg.alpha_cr_end = 0.001;
                cfg.alpha_cr_episodes = 4000;
                cfg.alpha_ws = 0.0002;
                cfg.normalize_cr = false;
                cfg.update_policy = UpdatePolicy::MostLikely;
            }
            Profile::Forage => {
                cfg.alpha_w = 0.5;
                cfg.sigma_cr = 1.0;
                cfg.sessions = 150;
                cfg.trials_per_session = 30;
                cfg.probe_steps = 75;
                cfg.change_every = 30;
                cfg.episodes = 150 * 30;
            }
            Profile::Ymaze => {
                cfg.alpha_w = 0.5;
                cfg.sigma_cr = 1.0;
                cfg.pretrain_episodes = 500;
                cfg.change_every = 20;
                cfg.blocks = 24;
                cfg.successes_per_segment = 10;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(BsrError::Config(m));
        if self.k == 0 {
            return err("k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return err(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return err(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        for (name, v) in [
            ("alpha_sr", self.alpha_sr),
            ("alpha_w", self.alpha_w),
            ("alpha_cr_start", self.alpha_cr_start),
            ("alpha_cr_end", self.alpha_cr_end),
            ("alpha_ws", self.alpha_ws),
            ("dropout", self.dropout),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return err(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if self.alpha_dp <= 0.0 {
            return err(format!("alpha_dp must be positive, got {}", self.alpha_dp));
        }
        if self.sigma_cr <= 0.0 {
            return err(format!("sigma_cr must be positive, got {}", self.sigma_cr));
        }
        if self.filter_delay == 0 {
            return err("filter_delay must be positive".into());
        }
        if self.n_particles == 0 || self.particle_window == 0 {
            return err("n_particles and particle_window must be at least 1".into());
        }
        if self.dropout >= 1.0 {
            return err(format!("dropout must be below 1, got {}", self.dropout));
        }
        if matches!(self.agent, AgentKind::Ssr | AgentKind::SsrPlus) && self.k != 1 {
            return err(format!("{} uses a single map, k must be 1", self.agent));
        }
        if self.profile == Profile::Exp3 && matches!(self.agent, AgentKind::Gsr | AgentKind::Kq) {
            return err(format!("agent {} is not available in profile exp3", self.agent));
        }
        if self.profile == Profile::Forage && self.agent == AgentKind::Kq {
            return err("kq has no oracle context in the forage profile".into());
        }
        if self.max_steps == 0 {
            return err("max_steps must be positive".into());
        }
        Ok(())
    }

    /// Parse a TOML override file on top of the defaults it names.
    ///
    /// `profile`, `agent` and `offset` select the defaults (falling back to
    /// the supplied ones); every other key overrides a single field.
    pub fn from_toml_str(text: &str, profile: Profile, agent: AgentKind) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        let pick = |key: &str| table.get(key).and_then(|v| v.as_str()).map(str::to_owned);
        let profile = match pick("profile") {
            Some(p) => p.parse()?,
            None => profile,
        };
        let agent = match pick("agent") {
            Some(a) => a.parse()?,
            None => agent,
        };
        let base = match pick("offset") {
            Some(o) => RunConfig::with_offset(profile, agent, o.parse()?),
            None => RunConfig::new(profile, agent),
        };
        base.merged(table)
    }

    pub fn from_toml_file(path: &Path, profile: Profile, agent: AgentKind) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, profile, agent)
    }

    /// Overlay arbitrary keys; unknown keys and ill-typed values are errors.
    pub fn merged(&self, overrides: toml::Table) -> Result<Self> {
        let mut table = toml::Table::try_from(self)
            .map_err(|e| BsrError::Config(format!("cannot serialise config: {e}")))?;
        for (key, value) in overrides {
            table.insert(key, value);
        }
        let cfg: RunConfig = table.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("RunConfig always serialises")
    }

    /// Short label such as `bsr-4/constant_cr`.
    pub fn label(&self) -> String {
        let mut s = match self.agent {
            AgentKind::Ssr | AgentKind::SsrPlus => self.agent.to_string(),
            _ => format!("{}-{}", self.agent, self.k),
        };
        if self.offset != OffsetMode::None {
            s.push('/');
            s.push_str(&self.offset.to_string());
        }
        if self.profile == Profile::Exp3 && self.agent.uses_filter() {
            s.push('/');
            s.push_str(&self.update_policy.to_string());
        }
        s
    }
}
