//! The recurrent observation-completion agent.
//!
//! At each glimpse the agent encodes the view and its proprioception
//! (Sense), fuses the two codes (Fuse), folds them into its belief with a
//! gated recurrent cell (Aggregate), decodes a full viewgrid prediction from
//! the belief (Decode) and picks the next relative motion (Act).
//!
//! The decoded viewgrid is egocentric: column 0 is the azimuth of the first
//! glimpse. Losses and metrics roll it back by the starting azimuth.

mod arch;
mod episode;
mod model;
mod rollout;

pub use arch::{ArchConfig, CriticKind, DecoderKind, EncoderKind};
pub use episode::{load_episode, save_episode, EpisodeLog};
pub use model::{Agent, AgentMeta, BeliefState, EpisodeGrads, StepCache, StepOutput};
pub use rollout::{rollout, rollout_batch, ActionMode, ActionSource, BatchRollout, RolloutOptions};
