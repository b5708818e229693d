//! Sidekicks with full observability that guide the partially observing
//! agent.
//!
//! Both are powered by a one-glimpse completion model. The reward sidekick
//! scores every view by how well the whole grid can be reconstructed from
//! it alone and keeps the best `K` after non-maximal suppression. The
//! demonstration sidekick scores how well each view explains every other
//! view and greedily builds motion-constrained trajectories that maximize
//! the cumulative coverage.

mod cache;
mod coverage;
mod model;
mod score;

pub use cache::{load_cache, precompute_cache, save_cache, SidekickCache, SidekickConfig, SidekickEntry};
pub use coverage::{
    coverage_distances, coverage_matrix, coverage_objective, demo_step, demo_trajectory, CoverageMatrix,
    DemoTrajectory,
};
pub use model::{view_mse, OneViewModel};
pub use score::{info_distances, info_score, minmax_invert, nms_select, score_map, NmsSelection, ScoreMap};
