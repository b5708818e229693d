//! Evaluation metrics and policy visualization.

mod metrics;
mod perturb;
mod render;

pub use metrics::{
    eval_starts, improvement, median, start_errors, summarize, EvalPolicy, EvalReport, EvalSettings, MethodResult,
};
pub use perturb::{belief_perturbation, episode_heatmaps, heatmap, heatmap_from_decodes, Heatmap, PerturbConfig, Perturbation};
pub use render::{
    blend, colormap, montage_size, render_episode, render_grid, save_png, Overlay, GAP, HEAT_ALPHA,
};
