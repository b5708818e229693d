//! Active visual exploration on discrete viewgrids.
//!
//! An agent observes an environment through a handful of narrow glimpses,
//! moving its camera between them with a small set of relative motions, and
//! must reconstruct every view of the environment from what it saw. Policies
//! are trained with REINFORCE or actor-critic, optionally guided by two
//! *sidekicks* that use full observability during training only:
//!
//! * a reward sidekick that scores every view by how well the whole viewgrid
//!   can be completed from it alone, keeps the best non-redundant ones with
//!   greedy suppression and pays visit rewards for them;
//! * a demonstration sidekick that greedily builds motion-constrained
//!   trajectories maximizing cumulative coverage and supervises the agent's
//!   first decisions, with supervision annealed away over training.
//!
//! Module map:
//!
//! * [`env`]: viewgrids, poses, motions, synthetic data, dataset files
//! * [`nn`]: dense/conv/recurrent layers with hand-written backward passes,
//!   optimizers, gradient checking, checkpoints
//! * [`agent`]: the Sense/Fuse/Aggregate/Decode/Act completion agent and rollouts
//! * [`sidekick`]: information scores, suppression, coverage, demonstrations
//! * [`train`]: losses, rewards, policy-gradient updates, schedules, methods
//! * [`eval`]: avg/adv metrics, belief-perturbation heatmaps, image export
//! * [`pipeline`]: staged experiment driver behind the `sidekick` binary

pub mod agent;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sidekick;
pub mod train;

pub use error::{Error, Result};
