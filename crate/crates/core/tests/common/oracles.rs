//! Brute-force references for the sidekicks. Each trial function returns
//! the number of disagreements over `trials` random inputs.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewgrid_sidekick::env::{GridGeometry, Pose};
use viewgrid_sidekick::sidekick::{coverage_objective, demo_step, nms_select, CoverageMatrix};

pub fn random_geometry(rng: &mut ChaCha8Rng) -> GridGeometry {
    GridGeometry::new(rng.gen_range(1..=5), rng.gen_range(2..=9), 1, 4, 4).unwrap()
}

/// Scores drawn from a coarse lattice so ties are common.
pub fn random_scores(n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let levels = rng.gen_range(2..=12);
    (0..n).map(|_| rng.gen_range(0..levels) as f32 / levels as f32).collect()
}

fn wrap_dist(a: usize, b: usize, m: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(m - d)
}

/// Literal greedy suppression: every round takes the highest score among
/// views farther than `radius` from all picks so far (first in row-major
/// order on ties), falling back to any unpicked view.
pub fn brute_nms(scores: &[f32], g: &GridGeometry, k: usize, radius: usize) -> (Vec<(usize, usize)>, bool) {
    let views: Vec<(usize, usize)> = (0..g.n_elev).flat_map(|e| (0..g.n_azim).map(move |a| (e, a))).collect();
    let score = |v: (usize, usize)| scores[v.0 * g.n_azim + v.1];
    let best = |pool: Vec<(usize, usize)>| {
        let mut best: Option<(usize, usize)> = None;
        for v in pool {
            if best.map_or(true, |b| score(v) > score(b)) {
                best = Some(v);
            }
        }
        best
    };
    let mut picks: Vec<(usize, usize)> = Vec::new();
    let mut relaxed = false;
    for _ in 0..k {
        let far = |v: &(usize, usize)| {
            picks
                .iter()
                .all(|p| p.0.abs_diff(v.0).max(wrap_dist(p.1, v.1, g.n_azim)) > radius)
        };
        let open: Vec<_> = views.iter().copied().filter(|v| !picks.contains(v) && far(v)).collect();
        let pick = match best(open) {
            Some(v) => v,
            None => {
                relaxed = true;
                best(views.iter().copied().filter(|v| !picks.contains(v)).collect()).unwrap()
            }
        };
        picks.push(pick);
    }
    (picks, relaxed)
}

/// `(mismatches, trials that needed the relaxed fallback)`.
pub fn nms_trials(trials: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bad, mut relaxed_seen) = (0, 0);
    for _ in 0..trials {
        let g = random_geometry(&mut rng);
        let scores = random_scores(g.n_views(), &mut rng);
        let k = rng.gen_range(1..=g.n_views().min(6));
        let radius = rng.gen_range(0..=2);
        let got = nms_select(&scores, &g, k, radius).unwrap();
        let (want, relaxed) = brute_nms(&scores, &g, k, radius);
        let got_pairs: Vec<_> = got.selected.iter().map(|p| (p.elev, p.azim)).collect();
        bad += usize::from(got_pairs != want || got.relaxed != relaxed);
        relaxed_seen += usize::from(relaxed);
    }
    (bad, relaxed_seen)
}

pub fn random_coverage(g: GridGeometry, rng: &mut ChaCha8Rng) -> CoverageMatrix {
    let n = g.n_views();
    let levels = rng.gen_range(2..=10);
    let cov = (0..n * n).map(|_| rng.gen_range(0..=levels) as f32 / levels as f32 * 0.6).collect();
    CoverageMatrix::new("r", g, cov).unwrap()
}

/// `(1/MN) sum_j min(1, sum_{i in distinct(theta)} cov[i][j])`.
pub fn brute_objective(c: &CoverageMatrix, theta: &[Pose]) -> f64 {
    let g = c.geometry;
    let n = g.n_views();
    let rows: BTreeSet<usize> = theta.iter().map(|p| p.elev * g.n_azim + p.azim).collect();
    (0..n)
        .map(|j| rows.iter().map(|&i| f64::from(c.cov[i * n + j])).sum::<f64>().min(1.0))
        .sum::<f64>()
        / n as f64
}

pub fn random_pose(g: &GridGeometry, rng: &mut ChaCha8Rng) -> Pose {
    Pose::new(rng.gen_range(0..g.n_elev), rng.gen_range(0..g.n_azim))
}

/// Exhaustive argmax over the 15 motions, first on ties.
pub fn brute_demo_step(c: &CoverageMatrix, theta: &[Pose], pose: Pose) -> usize {
    let g = c.geometry;
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..15 {
        let (de, da) = (a as i64 / 5 - 1, a as i64 % 5 - 2);
        let reached = Pose::new(
            (pose.elev as i64 + de).clamp(0, g.n_elev as i64 - 1) as usize,
            (pose.azim as i64 + da).rem_euclid(g.n_azim as i64) as usize,
        );
        let mut set = theta.to_vec();
        set.push(pose);
        set.push(reached);
        let v = brute_objective(c, &set);
        if v > best.1 {
            best = (a, v);
        }
    }
    best.0
}

pub fn demo_trials(trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..trials {
        let g = random_geometry(&mut rng);
        let c = random_coverage(g, &mut rng);
        let theta: Vec<Pose> = (0..rng.gen_range(0..4)).map(|_| random_pose(&g, &mut rng)).collect();
        let pose = random_pose(&g, &mut rng);
        bad += usize::from(demo_step(&c, &theta, pose) != brute_demo_step(&c, &theta, pose));
    }
    bad
}

/// Trials where coverage decreased when a pose was added, exceeded 1 or
/// disagreed with the reference.
pub fn coverage_trials(trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..trials {
        let g = random_geometry(&mut rng);
        let c = random_coverage(g, &mut rng);
        let mut set: Vec<Pose> = Vec::new();
        let mut prev = coverage_objective(&c, &set);
        let mut ok = prev == 0.0;
        for _ in 0..rng.gen_range(1..8) {
            set.push(random_pose(&g, &mut rng));
            let v = coverage_objective(&c, &set);
            ok &= v >= prev && v <= 1.0 && v == brute_objective(&c, &set);
            prev = v;
        }
        bad += usize::from(!ok);
    }
    bad
}
