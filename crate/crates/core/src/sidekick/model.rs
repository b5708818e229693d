use ndarray::Axis;

use crate::agent::{rollout_batch, ActionSource, Agent, RolloutOptions};
use crate::env::{roll_azimuth_flat, GridGeometry, Pose, Viewgrid};
use crate::error::{Error, Result};

/// A completion model conditioned on a single view at a known pose.
pub trait OneViewModel {
    fn geometry(&self) -> GridGeometry;

    /// Identifies the model's parameters; sidekick caches are keyed by it.
    fn checksum(&self) -> String;

    /// The full viewgrid, in absolute coordinates, predicted from only the
    /// view of `grid` at `pose`.
    fn complete(&self, grid: &Viewgrid, pose: Pose) -> Result<Vec<f32>>;

    /// Completions from every single view, in pose-index order.
    fn complete_all(&self, grid: &Viewgrid) -> Result<Vec<Vec<f32>>> {
        let g = self.geometry();
        Pose::all(&g).map(|p| self.complete(grid, p)).collect()
    }
}

/// Mean squared error between two equally long pixel buffers.
pub fn view_mse(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    s / a.len() as f64
}

/// A trained completion agent unrolled for one glimpse. Its egocentric
/// decode is rolled back by the known starting azimuth.
impl OneViewModel for Agent<f32> {
    fn geometry(&self) -> GridGeometry {
        *Agent::geometry(self)
    }

    fn checksum(&self) -> String {
        self.params().checksum()
    }

    fn complete(&self, grid: &Viewgrid, pose: Pose) -> Result<Vec<f32>> {
        let r = rollout_batch(
            self,
            &[grid],
            &[pose],
            1,
            &ActionSource::argmax(),
            &mut crate::rng::stream(0, "one-view"),
            RolloutOptions::inference(),
        )?;
        let g = *Agent::geometry(self);
        Ok(roll_azimuth_flat(r.final_decoded().row(0).as_slice().expect("contiguous"), &g, pose.azim))
    }

    fn complete_all(&self, grid: &Viewgrid) -> Result<Vec<Vec<f32>>> {
        let g = *Agent::geometry(self);
        if *grid.geometry() != g {
            return Err(Error::GeometryMismatch {
                expected: g.to_string(),
                found: grid.geometry().to_string(),
            });
        }
        let poses: Vec<Pose> = Pose::all(&g).collect();
        let grids = vec![grid; poses.len()];
        let r = rollout_batch(
            self,
            &grids,
            &poses,
            1,
            &ActionSource::argmax(),
            &mut crate::rng::stream(0, "one-view"),
            RolloutOptions::inference(),
        )?;
        Ok(r
            .final_decoded()
            .axis_iter(Axis(0))
            .zip(&poses)
            .map(|(row, p)| roll_azimuth_flat(&row.to_vec(), &g, p.azim))
            .collect())
    }
}
