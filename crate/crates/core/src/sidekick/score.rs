use serde::{Deserialize, Serialize};

use super::model::{view_mse, OneViewModel};
use crate::env::{GridGeometry, Pose, Viewgrid};
use crate::error::{Error, Result};

/// Per-view informativeness of one sample plus the views kept by NMS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap {
    pub sample_id: String,
    pub geometry: GridGeometry,
    /// `[N, M]` scores in `[0, 1]`, pose-index order.
    pub scores: Vec<f32>,
    pub selected: Vec<Pose>,
    pub k: usize,
    pub nms_radius: usize,
    /// Set when suppression left fewer than `k` candidates.
    pub relaxed: bool,
}

impl ScoreMap {
    /// A map with every score zero and nothing selected.
    pub fn zeros(geometry: GridGeometry, sample_id: impl Into<String>) -> Self {
        ScoreMap {
            sample_id: sample_id.into(),
            geometry,
            scores: vec![0.0; geometry.n_views()],
            selected: Vec::new(),
            k: 0,
            nms_radius: 0,
            relaxed: false,
        }
    }

    pub fn score(&self, pose: Pose) -> f32 {
        self.scores[pose.index(&self.geometry)]
    }

    /// Visit rewards: the score at selected views, zero elsewhere.
    pub fn reward_map(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.scores.len()];
        for p in &self.selected {
            let i = p.index(&self.geometry);
            out[i] = self.scores[i];
        }
        out
    }
}

/// Min-max inversion: the smallest distance scores 1, the largest 0. All
/// scores are 1 when every distance is equal.
pub fn minmax_invert(d: &[f64]) -> Vec<f64> {
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![1.0; d.len()];
    }
    d.iter().map(|&v| (hi - v) / (hi - lo)).collect()
}

fn check_model(model: &dyn OneViewModel, grid: &Viewgrid) -> Result<()> {
    let g = model.geometry();
    if *grid.geometry() != g {
        return Err(Error::GeometryMismatch {
            expected: g.to_string(),
            found: grid.geometry().to_string(),
        });
    }
    Ok(())
}

/// Reconstruction error of the whole grid from each single view.
pub fn info_distances(model: &dyn OneViewModel, grid: &Viewgrid) -> Result<Vec<f64>> {
    check_model(model, grid)?;
    let completions = model.complete_all(grid)?;
    if completions.len() != grid.geometry().n_views() {
        return Err(Error::shape("one-view completions", grid.geometry().n_views(), completions.len()));
    }
    completions
        .iter()
        .map(|c| {
            if c.len() != grid.pixels().len() {
                return Err(Error::shape("one-view completion", grid.pixels().len(), c.len()));
            }
            let d = view_mse(c, grid.pixels());
            if d.is_finite() {
                Ok(d)
            } else {
                Err(Error::NonFinite("one-view completion error".into()))
            }
        })
        .collect()
}

/// Per-view scores in `[0, 1]`, pose-index order.
pub fn info_score(model: &dyn OneViewModel, grid: &Viewgrid) -> Result<Vec<f32>> {
    Ok(minmax_invert(&info_distances(model, grid)?)
        .into_iter()
        .map(|v| v as f32)
        .collect())
}

/// Scores plus NMS selection for one sample.
pub fn score_map(model: &dyn OneViewModel, grid: &Viewgrid, k: usize, radius: usize) -> Result<ScoreMap> {
    let scores = info_score(model, grid)?;
    let sel = nms_select(&scores, grid.geometry(), k, radius)?;
    Ok(ScoreMap {
        sample_id: grid.id().to_string(),
        geometry: *grid.geometry(),
        scores,
        selected: sel.selected,
        k,
        nms_radius: radius,
        relaxed: sel.relaxed,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NmsSelection {
    pub selected: Vec<Pose>,
    pub relaxed: bool,
}

/// Greedy non-maximal suppression over an `[N, M]` score grid.
///
/// Repeatedly takes the best unsuppressed view and suppresses its
/// Chebyshev neighborhood (azimuth wraps, elevation does not). Ties go to
/// the smaller `(elev, azim)`. When every remaining view is suppressed
/// before `k` picks, the best unselected views are taken anyway and
/// `relaxed` is set.
pub fn nms_select(scores: &[f32], geom: &GridGeometry, k: usize, radius: usize) -> Result<NmsSelection> {
    let n = geom.n_views();
    if scores.len() != n {
        return Err(Error::shape("score grid", n, scores.len()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("K must be in 1..={n}, got {k}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score grid".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut suppressed = vec![false; n];
    let mut taken = vec![false; n];
    let mut out = NmsSelection {
        selected: Vec::with_capacity(k),
        relaxed: false,
    };
    while out.selected.len() < k {
        let pick = match order.iter().find(|&&i| !suppressed[i] && !taken[i]) {
            Some(&i) => i,
            None => {
                out.relaxed = true;
                *order.iter().find(|&&i| !taken[i]).expect("k <= n")
            }
        };
        taken[pick] = true;
        let p = Pose::from_index(pick, geom);
        out.selected.push(p);
        for q in Pose::all(geom) {
            if p.grid_distance(&q, geom.n_azim) <= radius {
                suppressed[q.index(geom)] = true;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Stub {
        geom: GridGeometry,
        distances: Vec<f64>,
    }

    impl OneViewModel for Stub {
        fn geometry(&self) -> GridGeometry {
            self.geom
        }
        fn checksum(&self) -> String {
            "stub".into()
        }
        fn complete(&self, grid: &Viewgrid, pose: Pose) -> Result<Vec<f32>> {
            let d = self.distances[pose.index(&self.geom)].sqrt() as f32;
            Ok(grid.pixels().iter().map(|&v| v + d).collect())
        }
    }

    fn zero_grid(geom: GridGeometry) -> Viewgrid {
        Viewgrid::constant(geom, 0.0, "z").unwrap()
    }

    #[test]
    fn minmax_endpoints() {
        let geom = GridGeometry::new(1, 4, 1, 4, 4).unwrap();
        let stub = Stub {
            geom,
            distances: vec![1.0, 0.0, 1.0, 1.0],
        };
        let s = info_score(&stub, &zero_grid(geom)).unwrap();
        assert_eq!(s, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_distance_scores_all_one() {
        let geom = GridGeometry::new(2, 2, 1, 4, 4).unwrap();
        let stub = Stub {
            geom,
            distances: vec![0.3; 4],
        };
        assert_eq!(info_score(&stub, &zero_grid(geom)).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn tiled_view_stub_matches_brute_force() {
        struct Tile(GridGeometry);
        impl OneViewModel for Tile {
            fn geometry(&self) -> GridGeometry {
                self.0
            }
            fn checksum(&self) -> String {
                "tile".into()
            }
            fn complete(&self, grid: &Viewgrid, pose: Pose) -> Result<Vec<f32>> {
                Ok(grid.view(pose).repeat(self.0.n_views()))
            }
        }
        let geom = GridGeometry::new(2, 2, 1, 4, 4).unwrap();
        let px: Vec<f32> = (0..geom.grid_len()).map(|i| ((i * 37) % 101) as f32 / 100.0).collect();
        let grid = Viewgrid::new(geom, px, "t").unwrap();
        let mut d = Vec::new();
        for src in 0..4 {
            let mut acc = 0.0;
            for v in 0..geom.grid_len() {
                let pred = grid.pixels()[src * 16 + v % 16] as f64;
                acc += (pred - grid.pixels()[v] as f64).powi(2);
            }
            d.push(acc / geom.grid_len() as f64);
        }
        let (lo, hi) = (d.iter().cloned().fold(9.0, f64::min), d.iter().cloned().fold(-9.0, f64::max));
        let expect: Vec<f32> = d.iter().map(|&v| ((hi - v) / (hi - lo)) as f32).collect();
        assert_eq!(info_score(&Tile(geom), &grid).unwrap(), expect);
    }

    #[test]
    fn nms_example_row() {
        let geom = GridGeometry::new(1, 5, 1, 4, 4).unwrap();
        let sel = nms_select(&[0.9, 0.8, 0.1, 0.7, 0.2], &geom, 2, 1).unwrap();
        let az: Vec<usize> = sel.selected.iter().map(|p| p.azim).collect();
        assert_eq!(az, vec![0, 3]);
        assert!(!sel.relaxed);
    }

    #[test]
    fn nms_single_positive() {
        let geom = GridGeometry::new(3, 4, 1, 4, 4).unwrap();
        let mut s = vec![0.0; 12];
        s[6] = 0.4;
        let sel = nms_select(&s, &geom, 1, 1).unwrap();
        assert_eq!(sel.selected, vec![Pose::new(1, 2)]);
    }

    #[test]
    fn nms_relaxes_when_exhausted() {
        let geom = GridGeometry::new(1, 4, 1, 4, 4).unwrap();
        let sel = nms_select(&[0.1, 0.5, 0.3, 0.2], &geom, 3, 1).unwrap();
        assert!(sel.relaxed);
        assert_eq!(sel.selected.len(), 3);
        assert!(nms_select(&[0.0; 4], &geom, 5, 1).is_err());
    }

    #[test]
    fn reward_map_keeps_selected_only() {
        let geom = GridGeometry::new(1, 5, 1, 4, 4).unwrap();
        let m = ScoreMap {
            sample_id: "x".into(),
            geometry: geom,
            scores: vec![0.9, 0.8, 0.1, 0.7, 0.2],
            selected: vec![Pose::new(0, 0), Pose::new(0, 3)],
            k: 2,
            nms_radius: 1,
            relaxed: false,
        };
        assert_eq!(m.reward_map(), vec![0.9, 0.0, 0.0, 0.7, 0.0]);
    }
}
