use serde::{Deserialize, Serialize};

use super::GridGeometry;

/// Camera pose on the viewgrid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub elev: usize,
    pub azim: usize,
}

impl Pose {
    pub fn new(elev: usize, azim: usize) -> Self {
        Pose { elev, azim }
    }

    pub fn is_valid(&self, geom: &GridGeometry) -> bool {
        self.elev < geom.n_elev && self.azim < geom.n_azim
    }

    pub fn index(&self, geom: &GridGeometry) -> usize {
        geom.view_index(self.elev, self.azim)
    }

    pub fn from_index(index: usize, geom: &GridGeometry) -> Self {
        Pose {
            elev: index / geom.n_azim,
            azim: index % geom.n_azim,
        }
    }

    /// Every pose of the grid in row-major order.
    pub fn all(geom: &GridGeometry) -> impl Iterator<Item = Pose> + '_ {
        (0..geom.n_views()).map(move |i| Pose::from_index(i, geom))
    }

    /// Chebyshev distance with azimuth wrap-around.
    pub fn grid_distance(&self, other: &Pose, n_azim: usize) -> usize {
        let de = self.elev.abs_diff(other.elev);
        let da = self.azim.abs_diff(other.azim);
        de.max(da.min(n_azim - da))
    }
}

/// Relative camera motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub d_elev: i32,
    pub d_azim: i32,
}

impl Action {
    pub const fn new(d_elev: i32, d_azim: i32) -> Self {
        Action { d_elev, d_azim }
    }

    /// Position in [`action_space`], if the motion is one of the 15.
    pub fn index(self) -> Option<usize> {
        ACTIONS.iter().position(|&a| a == self)
    }
}

const ACTIONS: [Action; 15] = {
    let mut out = [Action::new(0, 0); 15];
    let mut i = 0;
    while i < 15 {
        out[i] = Action::new((i / 5) as i32 - 1, (i % 5) as i32 - 2);
        i += 1;
    }
    out
};

/// Index of the stay action `(0, 0)` in [`action_space`].
pub const STAY_ACTION: usize = 7;

/// The 3 elevation x 5 azimuth motion neighborhood in row-major order,
/// `(-1,-2)` first and `(1,2)` last. The set does not depend on the grid
/// size; elevation motions past the boundary are clamped by [`apply_motion`].
pub fn action_space(_geom: &GridGeometry) -> &'static [Action] {
    &ACTIONS
}

/// Applies a motion: azimuth wraps modulo `M`, elevation clamps to `[0, N-1]`.
pub fn apply_motion(pose: Pose, action: Action, geom: &GridGeometry) -> Pose {
    let n = geom.n_elev as i64;
    let m = geom.n_azim as i64;
    let elev = (pose.elev as i64 + i64::from(action.d_elev)).clamp(0, n - 1);
    let azim = (pose.azim as i64 + i64::from(action.d_azim)).rem_euclid(m);
    Pose {
        elev: elev as usize,
        azim: azim as usize,
    }
}

/// Signed shortest azimuth offset from `from` to `to`, in `(-M/2, M/2]`.
pub(crate) fn wrapped_delta(from: usize, to: usize, n_azim: usize) -> i32 {
    let m = n_azim as i64;
    let mut d = (to as i64 - from as i64).rem_euclid(m);
    if d > m / 2 {
        d -= m;
    }
    d as i32
}

/// Proprioceptive input: absolute elevation plus the relative motion that
/// brought the camera here. `azim_abs` is only filled in for consumers with
/// full observability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proprioception {
    pub elev_abs: usize,
    pub d_elev_prev: i32,
    pub d_azim_prev: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub azim_abs: Option<usize>,
}

impl Proprioception {
    pub fn new(cur: Pose, prev: Option<Pose>, geom: &GridGeometry) -> Self {
        let (d_elev_prev, d_azim_prev) = match prev {
            Some(p) => (
                cur.elev as i32 - p.elev as i32,
                wrapped_delta(p.azim, cur.azim, geom.n_azim),
            ),
            None => (0, 0),
        };
        Proprioception {
            elev_abs: cur.elev,
            d_elev_prev,
            d_azim_prev,
            azim_abs: None,
        }
    }

    pub fn with_absolute_azimuth(mut self, azim: usize) -> Self {
        self.azim_abs = Some(azim);
        self
    }

    /// Number of network input features produced by [`Self::features`].
    pub const N_FEATURES: usize = 3;

    /// Scaled network input `[elev / (N-1), d_elev, d_azim / 2]`.
    pub fn features(&self, geom: &GridGeometry) -> [f64; 3] {
        let elev = if geom.n_elev > 1 {
            self.elev_abs as f64 / (geom.n_elev - 1) as f64
        } else {
            0.0
        };
        [elev, f64::from(self.d_elev_prev), f64::from(self.d_azim_prev) / 2.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> GridGeometry {
        GridGeometry::new(4, 8, 1, 8, 8).unwrap()
    }

    #[test]
    fn motion_examples() {
        let g = geom();
        assert_eq!(apply_motion(Pose::new(1, 0), Action::new(0, 1), &g), Pose::new(1, 1));
        assert_eq!(apply_motion(Pose::new(1, 7), Action::new(0, 1), &g), Pose::new(1, 0));
        assert_eq!(apply_motion(Pose::new(0, 3), Action::new(-1, 0), &g), Pose::new(0, 3));
        assert_eq!(apply_motion(Pose::new(3, 0), Action::new(1, -2), &g), Pose::new(3, 6));
    }

    #[test]
    fn action_space_layout() {
        let acts = action_space(&geom());
        assert_eq!(acts.len(), 15);
        assert_eq!(acts[0], Action::new(-1, -2));
        assert_eq!(acts[14], Action::new(1, 2));
        assert_eq!(acts[STAY_ACTION], Action::new(0, 0));
        for i in 0..acts.len() {
            for j in i + 1..acts.len() {
                assert_ne!(acts[i], acts[j]);
            }
        }
    }

    #[test]
    fn motion_stays_in_range_exhaustively() {
        for (n, m) in [(1, 2), (2, 3), (4, 8), (5, 9)] {
            let g = GridGeometry::new(n, m, 1, 4, 4).unwrap();
            for p in Pose::all(&g) {
                for &a in action_space(&g) {
                    assert!(apply_motion(p, a, &g).is_valid(&g));
                }
            }
        }
    }

    #[test]
    fn azimuth_wrap_is_cyclic() {
        let g = geom();
        for p in Pose::all(&g) {
            let mut q = p;
            for _ in 0..g.n_azim {
                q = apply_motion(q, Action::new(0, 1), &g);
            }
            assert_eq!(p, q);
        }
    }

    #[test]
    fn proprioception_is_relative_and_wrap_aware() {
        let g = geom();
        let p = Proprioception::new(Pose::new(1, 0), Some(Pose::new(1, 7)), &g);
        assert_eq!(p.d_azim_prev, 1);
        let p = Proprioception::new(Pose::new(1, 6), Some(Pose::new(1, 0)), &g);
        assert_eq!(p.d_azim_prev, -2);
        let p = Proprioception::new(Pose::new(2, 5), None, &g);
        assert_eq!((p.elev_abs, p.d_elev_prev, p.d_azim_prev), (2, 0, 0));
        assert_eq!(p.azim_abs, None);
    }

    #[test]
    fn grid_distance_wraps() {
        assert_eq!(Pose::new(0, 0).grid_distance(&Pose::new(0, 7), 8), 1);
        assert_eq!(Pose::new(0, 0).grid_distance(&Pose::new(2, 4), 8), 4);
        assert_eq!(Pose::new(3, 1).grid_distance(&Pose::new(0, 1), 8), 3);
    }
}
