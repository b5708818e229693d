use serde::{Deserialize, Serialize};

use super::model::{view_mse, OneViewModel};
use super::score::minmax_invert;
use crate::env::{action_space, apply_motion, GridGeometry, Pose, Viewgrid};
use crate::error::{Error, Result};

/// `cov[i][j]`: how well the view at pose `i` alone explains the view at
/// pose `j`, normalized to `[0, 1]` over all pairs of one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    pub sample_id: String,
    pub geometry: GridGeometry,
    /// Row-major `[MN, MN]`.
    pub cov: Vec<f32>,
}

impl CoverageMatrix {
    pub fn new(sample_id: impl Into<String>, geometry: GridGeometry, cov: Vec<f32>) -> Result<Self> {
        let n = geometry.n_views();
        if cov.len() != n * n {
            return Err(Error::shape("coverage matrix", n * n, cov.len()));
        }
        Ok(CoverageMatrix {
            sample_id: sample_id.into(),
            geometry,
            cov,
        })
    }

    pub fn n_views(&self) -> usize {
        self.geometry.n_views()
    }

    pub fn get(&self, from: usize, to: usize) -> f32 {
        self.cov[from * self.n_views() + to]
    }
}

/// Per-pair distances `d[i][j]` between view `j` of the completion from
/// view `i` and the true view `j`.
pub fn coverage_distances(model: &dyn OneViewModel, grid: &Viewgrid) -> Result<Vec<f64>> {
    let g = model.geometry();
    if *grid.geometry() != g {
        return Err(Error::GeometryMismatch {
            expected: g.to_string(),
            found: grid.geometry().to_string(),
        });
    }
    let n = g.n_views();
    let vl = g.view_len();
    let completions = model.complete_all(grid)?;
    let mut d = Vec::with_capacity(n * n);
    for c in &completions {
        if c.len() != grid.pixels().len() {
            return Err(Error::shape("one-view completion", grid.pixels().len(), c.len()));
        }
        for j in 0..n {
            d.push(view_mse(&c[j * vl..(j + 1) * vl], &grid.pixels()[j * vl..(j + 1) * vl]));
        }
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("coverage distances".into()));
    }
    Ok(d)
}

pub fn coverage_matrix(model: &dyn OneViewModel, grid: &Viewgrid) -> Result<CoverageMatrix> {
    let cov = minmax_invert(&coverage_distances(model, grid)?)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    CoverageMatrix::new(grid.id(), *grid.geometry(), cov)
}

/// Mean over target views of the clipped coverage accumulated from the
/// distinct poses in `theta`: `(1/MN) sum_j min(1, sum_i cov[i][j])`.
pub fn coverage_objective(cov: &CoverageMatrix, theta: &[Pose]) -> f64 {
    let g = &cov.geometry;
    let n = cov.n_views();
    let mut rows: Vec<usize> = theta.iter().map(|p| p.index(g)).collect();
    rows.sort_unstable();
    rows.dedup();
    let mut total = 0.0;
    for j in 0..n {
        let acc: f64 = rows.iter().map(|&i| f64::from(cov.get(i, j))).sum();
        total += acc.min(1.0);
    }
    total / n as f64
}

/// Greedy demonstration step from `pose`: the action whose reached pose,
/// added to the visited set `theta` and `pose`, maximizes coverage. Ties go
/// to the earlier action.
pub fn demo_step(cov: &CoverageMatrix, theta: &[Pose], pose: Pose) -> usize {
    let g = &cov.geometry;
    let mut set = theta.to_vec();
    set.push(pose);
    set.push(pose);
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &a) in action_space(g).iter().enumerate() {
        *set.last_mut().expect("non-empty") = apply_motion(pose, a, g);
        let c = coverage_objective(cov, &set);
        if c > best.1 {
            best = (i, c);
        }
    }
    best.0
}

/// A sidekick-generated trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoTrajectory {
    pub start: Pose,
    /// `T` poses, start first.
    pub poses: Vec<Pose>,
    /// `T-1` greedy action indices.
    pub actions: Vec<usize>,
    /// Coverage of the first `t+1` poses, for every `t`.
    pub objective: Vec<f64>,
}

/// Rolls the greedy demonstration out from `start` for `budget` glimpses.
pub fn demo_trajectory(cov: &CoverageMatrix, start: Pose, budget: usize) -> Result<DemoTrajectory> {
    let g = &cov.geometry;
    if budget == 0 {
        return Err(Error::InvalidArgument("budget T must be at least 1".into()));
    }
    if !start.is_valid(g) {
        return Err(Error::InvalidArgument(format!("start pose {start:?} outside grid")));
    }
    let mut poses = vec![start];
    let mut actions = Vec::with_capacity(budget - 1);
    let mut objective = vec![coverage_objective(cov, &poses)];
    for _ in 1..budget {
        let cur = *poses.last().expect("non-empty");
        let a = demo_step(cov, &poses[..poses.len() - 1], cur);
        poses.push(apply_motion(cur, action_space(g)[a], g));
        actions.push(a);
        objective.push(coverage_objective(cov, &poses));
    }
    Ok(DemoTrajectory {
        start,
        poses,
        actions,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::STAY_ACTION;

    fn geom(n: usize, m: usize) -> GridGeometry {
        GridGeometry::new(n, m, 1, 4, 4).unwrap()
    }

    #[test]
    fn saturates_at_one() {
        let g = geom(1, 2);
        let cov = CoverageMatrix::new("s", g, vec![0.7, 0.6, 0.5, 0.9]).unwrap();
        assert_eq!(coverage_objective(&cov, &[Pose::new(0, 0), Pose::new(0, 1)]), 1.0);
    }

    #[test]
    fn half_row_gives_half() {
        let g = geom(2, 2);
        let mut c = vec![0.0; 16];
        c[..4].fill(0.5);
        let cov = CoverageMatrix::new("s", g, c).unwrap();
        assert_eq!(coverage_objective(&cov, &[Pose::new(0, 0)]), 0.5);
        assert_eq!(coverage_objective(&cov, &[Pose::new(0, 0), Pose::new(0, 0)]), 0.5);
    }

    #[test]
    fn single_useful_neighbor_is_chosen() {
        let g = geom(1, 6);
        let mut c = vec![0.0; 36];
        c[2 * 6 + 4] = 1.0;
        let cov = CoverageMatrix::new("s", g, c).unwrap();
        let a = demo_step(&cov, &[], Pose::new(0, 0));
        let reached = apply_motion(Pose::new(0, 0), action_space(&g)[a], &g);
        assert_eq!(reached, Pose::new(0, 2));
    }

    #[test]
    fn ties_take_first_action() {
        let g = geom(2, 4);
        let cov = CoverageMatrix::new("s", g, vec![0.0; 64]).unwrap();
        assert_eq!(demo_step(&cov, &[], Pose::new(1, 1)), 0);
        let full = CoverageMatrix::new("s", g, vec![1.0; 64]).unwrap();
        assert_eq!(demo_step(&full, &[Pose::new(0, 0)], Pose::new(1, 1)), 0);
        assert_ne!(STAY_ACTION, 0);
    }

    #[test]
    fn trajectory_of_one_glimpse() {
        let g = geom(2, 3);
        let cov = CoverageMatrix::new("s", g, vec![0.2; 36]).unwrap();
        let t = demo_trajectory(&cov, Pose::new(1, 2), 1).unwrap();
        assert_eq!(t.poses, vec![Pose::new(1, 2)]);
        assert!(t.actions.is_empty());
    }

    #[test]
    fn trajectory_objective_is_monotone() {
        let g = geom(2, 3);
        let c: Vec<f32> = (0..36).map(|i| ((i * 7919) % 97) as f32 / 200.0).collect();
        let cov = CoverageMatrix::new("s", g, c).unwrap();
        let t = demo_trajectory(&cov, Pose::new(0, 1), 3).unwrap();
        assert!(t.objective.windows(2).all(|w| w[1] >= w[0]));
        assert!(t.objective.iter().all(|&v| v <= 1.0));
    }
}
