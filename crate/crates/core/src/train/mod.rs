//! Learning: one-glimpse pretraining, reconstruction loss with azimuth
//! alignment, shaped rewards, REINFORCE with a baseline, actor-critic
//! variants, entropy regularization, demonstration supervision and the
//! schedules that anneal the sidekicks away.

mod config;
mod losses;
mod objective;
mod run;

pub use config::{Learner, Method, TrainConfig};
pub use losses::{
    compute_rewards, critic_loss, demo_cross_entropy, negative_entropy, policy_gradient_term, reached_scores,
    reconstruction_loss, reconstruction_mse, returns_to_go, Baseline, RewardTrace,
};
pub use objective::{build_targets, surrogate, surrogate_value, LossParts, ObjectiveSpec, StepTarget, Targets};
pub use run::{method_eval_policy, pretrain_one_view, train, EpochRecord, TrainInputs, TrainOutcome};
