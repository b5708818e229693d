use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GridGeometry, Pose, Proprioception};
use crate::error::{Error, Result};

/// Every view of one environment, stored as a row-major `[N, M, C, H, W]`
/// tensor with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Viewgrid {
    geometry: GridGeometry,
    pixels: Vec<f32>,
    id: String,
}

impl Viewgrid {
    pub fn new(geometry: GridGeometry, pixels: Vec<f32>, id: impl Into<String>) -> Result<Self> {
        geometry.validate()?;
        if pixels.len() != geometry.grid_len() {
            return Err(Error::shape(
                "viewgrid pixels",
                geometry.dims(),
                pixels.len(),
            ));
        }
        if let Some(bad) = pixels.iter().position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pixel {bad} = {} outside [0, 1]",
                pixels[bad]
            )));
        }
        Ok(Viewgrid {
            geometry,
            pixels,
            id: id.into(),
        })
    }

    /// A grid with every pixel set to `value`.
    pub fn constant(geometry: GridGeometry, value: f32, id: impl Into<String>) -> Result<Self> {
        Viewgrid::new(geometry, vec![value; geometry.grid_len()], id)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// The `[C, H, W]` slice of the view at `pose`. Panics on an invalid pose.
    pub fn view(&self, pose: Pose) -> &[f32] {
        assert!(pose.is_valid(&self.geometry), "pose {pose:?} outside grid");
        let len = self.geometry.view_len();
        let start = pose.index(&self.geometry) * len;
        &self.pixels[start..start + len]
    }

    /// Rolls the azimuth axis so that the view at azimuth `a` moves to
    /// azimuth `(a + k) mod M`.
    pub fn roll_azimuth(&self, k: usize) -> Viewgrid {
        Viewgrid {
            geometry: self.geometry,
            pixels: roll_azimuth_flat(&self.pixels, &self.geometry, k),
            id: self.id.clone(),
        }
    }
}

/// Rolls a flattened `[N, M, C, H, W]` buffer so that the view at azimuth
/// `a` moves to `(a + k) mod M`. With `k` the starting azimuth this maps an
/// egocentric decode onto the absolute grid.
pub fn roll_azimuth_flat<T: Copy + Default>(data: &[T], g: &GridGeometry, k: usize) -> Vec<T> {
    let len = g.view_len();
    let mut out = vec![T::default(); data.len()];
    for e in 0..g.n_elev {
        for a in 0..g.n_azim {
            let dst = g.view_index(e, (a + k) % g.n_azim) * len;
            let src = g.view_index(e, a) * len;
            out[dst..dst + len].copy_from_slice(&data[src..src + len]);
        }
    }
    out
}

/// Extracts the view at `pose` and the proprioception relative to `prev_pose`.
pub fn observe<'g>(
    grid: &'g Viewgrid,
    pose: Pose,
    prev_pose: Option<Pose>,
) -> Result<(&'g [f32], Proprioception)> {
    let g = grid.geometry();
    for p in std::iter::once(pose).chain(prev_pose) {
        if !p.is_valid(g) {
            return Err(Error::GeometryMismatch {
                expected: format!("pose within {}x{}", g.n_elev, g.n_azim),
                found: format!("{p:?}"),
            });
        }
    }
    Ok((grid.view(pose), Proprioception::new(pose, prev_pose, g)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?}"))),
        }
    }
}

/// An ordered collection of viewgrids sharing one geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    geometry: GridGeometry,
    split: Split,
    samples: Vec<Viewgrid>,
}

impl Dataset {
    pub fn new(geometry: GridGeometry, split: Split, samples: Vec<Viewgrid>) -> Result<Self> {
        geometry.validate()?;
        if let Some(s) = samples.iter().find(|s| *s.geometry() != geometry) {
            return Err(Error::GeometryMismatch {
                expected: geometry.to_string(),
                found: s.geometry().to_string(),
            });
        }
        Ok(Dataset {
            geometry,
            split,
            samples,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn samples(&self) -> &[Viewgrid] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// A copy restricted to the first `n` samples.
    pub fn take(&self, n: usize) -> Dataset {
        Dataset {
            geometry: self.geometry,
            split: self.split,
            samples: self.samples.iter().take(n).cloned().collect(),
        }
    }

    /// Content identifier: SHA-256 over geometry, sample ids and pixels.
    pub fn content_id(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.geometry.to_string().as_bytes());
        for s in &self.samples {
            h.update(s.id().as_bytes());
            for p in s.pixels() {
                h.update(p.to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..16])
    }
}
