//! Viewgrid environments: geometry, camera poses and motions, observation
//! extraction, synthetic generation and dataset files.

mod geometry;
mod grid;
mod io;
pub(crate) mod io_util {
    pub(crate) use super::io::{read_bytes, read_json, write_bytes, write_json};
}
mod motion;
mod synth;

pub use geometry::GridGeometry;
pub use grid::{observe, roll_azimuth_flat, Dataset, Split, Viewgrid};
pub use io::{load_dataset, montage, save_dataset, tile_origin, write_previews, DatasetManifest, DATASET_FORMAT_VERSION};
pub use motion::{action_space, apply_motion, Action, Pose, Proprioception, STAY_ACTION};
pub use synth::{generate_synthetic, SynthSpec};
