use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{ArchConfig, CriticKind};
use crate::error::{Error, Result};

/// The method roster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Completion from a single glimpse (the pretrained model).
    OneView,
    /// Completion with uniformly random motions.
    RndActions,
    /// REINFORCE with visit rewards drawn uniformly at random per view.
    RndRewards,
    /// REINFORCE on the final reconstruction error only.
    Ltla,
    /// Actor-critic whose critic sees the whole viewgrid.
    AsymmAc,
    /// REINFORCE with reward-sidekick visit rewards.
    OursRew,
    /// REINFORCE with demonstration-sidekick supervision.
    OursDemo,
    OursRewAc,
    OursDemoAc,
    /// The demonstration sidekick drives at test time too.
    DemoActions,
}

/// How the policy is updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Learner {
    /// No policy learning.
    None,
    Reinforce,
    ActorCritic,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::OneView,
        Method::RndActions,
        Method::RndRewards,
        Method::Ltla,
        Method::AsymmAc,
        Method::OursRew,
        Method::OursDemo,
        Method::OursRewAc,
        Method::OursDemoAc,
        Method::DemoActions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::OneView => "one-view",
            Method::RndActions => "rnd-actions",
            Method::RndRewards => "rnd-rewards",
            Method::Ltla => "ltla",
            Method::AsymmAc => "asymm-ac",
            Method::OursRew => "ours-rew",
            Method::OursDemo => "ours-demo",
            Method::OursRewAc => "ours-rew-ac",
            Method::OursDemoAc => "ours-demo-ac",
            Method::DemoActions => "demo-actions",
        }
    }

    pub fn learner(self) -> Learner {
        match self {
            Method::OneView | Method::RndActions | Method::DemoActions => Learner::None,
            Method::AsymmAc | Method::OursRewAc | Method::OursDemoAc => Learner::ActorCritic,
            _ => Learner::Reinforce,
        }
    }

    pub fn critic(self) -> Option<CriticKind> {
        match self {
            Method::AsymmAc => Some(CriticKind::Full),
            Method::OursRewAc | Method::OursDemoAc => Some(CriticKind::Partial),
            _ => None,
        }
    }

    /// Needs reward-sidekick score maps.
    pub fn uses_scores(self) -> bool {
        matches!(self, Method::OursRew | Method::OursRewAc)
    }

    /// Needs demonstration-sidekick coverage matrices.
    pub fn uses_coverage(self) -> bool {
        matches!(self, Method::OursDemo | Method::OursDemoAc | Method::DemoActions)
    }

    pub fn uses_sidekick(self) -> bool {
        self.uses_scores() || self.uses_coverage()
    }

    /// Relies on information unavailable to the agent at test time.
    pub fn full_observability_at_test(self) -> bool {
        self == Method::DemoActions
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::InvalidArgument(format!("unknown method {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub method: Method,
    pub arch: ArchConfig,
    /// Glimpse budget `T`.
    pub budget: usize,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda_r: f64,
    pub lambda_p: f64,
    pub entropy_weight: f64,
    pub baseline_decay: f64,
    pub reward_decay_factor: f64,
    pub reward_decay_interval: usize,
    /// Demonstrated prefix length at epoch 0; `None` means `T - 1`.
    pub tsup_start: Option<usize>,
    pub tsup_interval: usize,
    /// Freeze Sense and Fuse after pretraining.
    pub freeze_sense_fuse: bool,
    /// Validate every this many epochs (and after the last one).
    pub val_every: usize,
    /// Start poses per validation sample, spread evenly over the grid;
    /// `None` enumerates all of them.
    pub val_starts: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Ltla,
            arch: ArchConfig::default(),
            budget: 4,
            epochs: 300,
            pretrain_epochs: 300,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 1e-6,
            lambda_r: 1.0,
            lambda_p: 1.0,
            entropy_weight: 0.01,
            baseline_decay: 0.9,
            reward_decay_factor: 5.0,
            reward_decay_interval: 200,
            tsup_start: None,
            tsup_interval: 50,
            freeze_sense_fuse: true,
            val_every: 1,
            val_starts: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The desk-scale profile: halved widths and validation on 8 of the
    /// start poses, so a 300 epoch run takes a few minutes on one core.
    pub fn desk() -> Self {
        TrainConfig {
            arch: ArchConfig::desk(),
            val_starts: Some(8),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.budget == 0 {
            return bad("budget T must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.lambda_r < 0.0 || self.lambda_p < 0.0 {
            return bad("loss weights must be nonnegative".into());
        }
        if !(1e-4..=3e-3).contains(&self.lr) {
            return bad(format!("learning rate {} outside [1e-4, 3e-3]", self.lr));
        }
        if self.reward_decay_interval == 0 || self.tsup_interval == 0 || self.val_every == 0 {
            return bad("schedule intervals must be positive".into());
        }
        if self.reward_decay_factor < 1.0 {
            return bad("reward decay factor must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline decay must be in [0, 1)".into());
        }
        Ok(())
    }

    /// Budget actually used by the method (`one-view` always glimpses once).
    pub fn effective_budget(&self) -> usize {
        if self.method == Method::OneView {
            1
        } else {
            self.budget
        }
    }

    /// Number of leading steps the demonstration drives at `epoch`.
    pub fn t_sup(&self, epoch: usize) -> usize {
        let start = self.tsup_start.unwrap_or(self.budget.saturating_sub(1));
        start.saturating_sub(epoch / self.tsup_interval)
    }

    /// Sidekick reward multiplier at `epoch`.
    pub fn reward_scale(&self, epoch: usize) -> f64 {
        let k = (epoch / self.reward_decay_interval) as i32;
        self.reward_decay_factor.powi(-k)
    }
}
