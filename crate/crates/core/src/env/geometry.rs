use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a viewgrid: `n_elev x n_azim` views of `channels x view_h x view_w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridGeometry {
    pub n_elev: usize,
    pub n_azim: usize,
    pub channels: usize,
    pub view_h: usize,
    pub view_w: usize,
}

impl GridGeometry {
    pub fn new(
        n_elev: usize,
        n_azim: usize,
        channels: usize,
        view_h: usize,
        view_w: usize,
    ) -> Result<Self> {
        let g = GridGeometry {
            n_elev,
            n_azim,
            channels,
            view_h,
            view_w,
        };
        g.validate()?;
        Ok(g)
    }

    /// 4 elevations x 8 azimuths of 32x32 RGB views.
    pub fn sun360() -> Self {
        GridGeometry {
            n_elev: 4,
            n_azim: 8,
            channels: 3,
            view_h: 32,
            view_w: 32,
        }
    }

    /// 5 elevations x 9 azimuths of 32x32 grayscale views.
    pub fn modelnet_hard() -> Self {
        GridGeometry {
            n_elev: 5,
            n_azim: 9,
            channels: 1,
            view_h: 32,
            view_w: 32,
        }
    }

    /// The small grayscale profile used for quick experiments.
    pub fn desk() -> Self {
        GridGeometry {
            n_elev: 4,
            n_azim: 8,
            channels: 1,
            view_h: 16,
            view_w: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_elev < 1 {
            return Err(Error::InvalidGeometry("need at least one elevation".into()));
        }
        if self.n_azim < 2 {
            return Err(Error::InvalidGeometry("need at least two azimuths".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidGeometry(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if self.view_h != self.view_w || self.view_h < 4 {
            return Err(Error::InvalidGeometry(format!(
                "views must be square and at least 4x4, got {}x{}",
                self.view_h, self.view_w
            )));
        }
        Ok(())
    }

    pub fn n_views(&self) -> usize {
        self.n_elev * self.n_azim
    }

    pub fn view_len(&self) -> usize {
        self.channels * self.view_h * self.view_w
    }

    pub fn grid_len(&self) -> usize {
        self.n_views() * self.view_len()
    }

    /// Row-major index of the view at `(elev, azim)`.
    pub fn view_index(&self, elev: usize, azim: usize) -> usize {
        elev * self.n_azim + azim
    }

    pub fn dims(&self) -> [usize; 5] {
        [
            self.n_elev,
            self.n_azim,
            self.channels,
            self.view_h,
            self.view_w,
        ]
    }
}

impl fmt::Display for GridGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}x{}",
            self.n_elev, self.n_azim, self.channels, self.view_h, self.view_w
        )
    }
}

impl FromStr for GridGeometry {
    type Err = Error;

    /// Parses `NxMxCxHxW`, e.g. `4x8x3x32x32`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        if parts.len() != 5 {
            return Err(Error::InvalidGeometry(format!(
                "expected NxMxCxHxW, got {s:?}"
            )));
        }
        let mut v = [0usize; 5];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .trim()
                .parse()
                .map_err(|_| Error::InvalidGeometry(format!("bad dimension {p:?} in {s:?}")))?;
        }
        GridGeometry::new(v[0], v[1], v[2], v[3], v[4])
    }
}
