use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::env::{Pose, Viewgrid};
use crate::error::{Error, Result};
use crate::nn::Scalar;

/// Reconstruction loss of an egocentric decode against the absolute grid:
/// the sum over views of the per-view mean squared pixel error, with
/// decoded azimuth column `c` compared to true azimuth `(c + start_azim)
/// mod M`. Returns the loss and its gradient in the decode's layout.
pub fn reconstruction_loss<F: Scalar>(
    decoded: ArrayView1<F>,
    truth: &Viewgrid,
    start_azim: usize,
) -> Result<(f64, Array1<F>)> {
    let g = truth.geometry();
    if decoded.len() != g.grid_len() {
        return Err(Error::shape("decoded grid", g.grid_len(), decoded.len()));
    }
    let vl = g.view_len();
    let scale = 1.0 / vl as f64;
    let mut grad = Array1::zeros(decoded.len());
    let mut loss = 0.0;
    let px = truth.pixels();
    for e in 0..g.n_elev {
        for c in 0..g.n_azim {
            let ego = g.view_index(e, c) * vl;
            let abs = g.view_index(e, (c + start_azim) % g.n_azim) * vl;
            for k in 0..vl {
                let d = decoded[ego + k].f64() - f64::from(px[abs + k]);
                loss += d * d * scale;
                grad[ego + k] = F::of(2.0 * d * scale);
            }
        }
    }
    Ok((loss, grad))
}

/// Mean per-pixel error, the reported metric (before the x1000 display
/// scaling).
pub fn reconstruction_mse<F: Scalar>(decoded: ArrayView1<F>, truth: &Viewgrid, start_azim: usize) -> Result<f64> {
    let (loss, _) = reconstruction_loss(decoded, truth, start_azim)?;
    Ok(loss / truth.geometry().n_views() as f64)
}

/// Per-step rewards of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardTrace {
    /// Scaled sidekick reward for the view reached by each action.
    pub sidekick: Vec<f64>,
    /// Final reconstruction loss, charged to the last action.
    pub final_rec: f64,
    pub rewards: Vec<f64>,
}

/// `r_t = scale * score(reached pose)`, with `-final_rec` added to the
/// last action's reward. An episode without actions gets no rewards.
pub fn compute_rewards(reached_scores: &[f64], final_rec: f64, reward_scale: f64) -> RewardTrace {
    let sidekick: Vec<f64> = reached_scores.iter().map(|s| reward_scale * s).collect();
    let mut rewards = sidekick.clone();
    if let Some(last) = rewards.last_mut() {
        *last -= final_rec;
    }
    RewardTrace {
        sidekick,
        final_rec,
        rewards,
    }
}

/// Scores of the poses reached by each action (`poses[1..]`) in a reward
/// map laid out in pose-index order.
pub fn reached_scores(poses: &[Pose], reward_map: &[f32], n_azim: usize) -> Vec<f64> {
    poses
        .iter()
        .skip(1)
        .map(|p| f64::from(reward_map[p.elev * n_azim + p.azim]))
        .collect()
}

pub fn returns_to_go(rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc += rewards[t];
        out[t] = acc;
    }
    out
}

/// Per-timestep exponential moving average of returns, starting at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub decay: f64,
    pub values: Vec<f64>,
}

impl Baseline {
    pub fn new(decay: f64, steps: usize) -> Self {
        Baseline {
            decay,
            values: vec![0.0; steps],
        }
    }

    pub fn get(&self, t: usize) -> f64 {
        self.values[t]
    }

    pub fn update(&mut self, t: usize, mean_return: f64) {
        let b = &mut self.values[t];
        *b = self.decay * *b + (1.0 - self.decay) * mean_return;
    }
}

/// Softmax probabilities of one logit row, in f64.
pub fn probs<F: Scalar>(logits: ArrayView1<F>) -> Vec<f64> {
    let max = logits.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v.f64() - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Surrogate `-A log pi(a)` and its logit gradient `A (p - onehot(a))`.
pub fn policy_gradient_term<F: Scalar>(logits: ArrayView1<F>, action: usize, advantage: f64) -> (f64, Vec<f64>) {
    let p = probs(logits);
    let loss = -advantage * p[action].ln();
    let mut g: Vec<f64> = p.iter().map(|&v| advantage * v).collect();
    g[action] -= advantage;
    (loss, g)
}

/// Cross-entropy to a one-hot target, `-log pi(target)`, and its logit
/// gradient `p - onehot(target)`.
pub fn demo_cross_entropy<F: Scalar>(logits: ArrayView1<F>, target: usize) -> (f64, Vec<f64>) {
    policy_gradient_term(logits, target, 1.0)
}

/// `sum p log p` and its logit gradient `p (log p - sum p log p)`.
pub fn negative_entropy<F: Scalar>(logits: ArrayView1<F>) -> (f64, Vec<f64>) {
    let p = probs(logits);
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum();
    let g = p
        .iter()
        .map(|&v| if v > 0.0 { v * (v.ln() - h) } else { 0.0 })
        .collect();
    (h, g)
}

/// `(v - R)^2` and its derivative in `v`.
pub fn critic_loss(value: f64, ret: f64) -> (f64, f64) {
    let d = value - ret;
    (d * d, 2.0 * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GridGeometry;
    use ndarray::Array1;

    fn grid(g: GridGeometry, f: impl Fn(usize) -> f32) -> Viewgrid {
        Viewgrid::new(g, (0..g.grid_len()).map(f).collect(), "x").unwrap()
    }

    #[test]
    fn shifted_truth_has_zero_loss() {
        let g = GridGeometry::new(2, 3, 1, 4, 4).unwrap();
        let v = grid(g, |i| (i % 7) as f32 / 7.0);
        for k in 0..3 {
            // The agent started at azimuth k; its column 0 is true column k.
            let ego = v.roll_azimuth((3 - k) % 3);
            let d = Array1::from(ego.pixels().to_vec());
            let (l, gr) = reconstruction_loss(d.view(), &v, k).unwrap();
            assert_eq!(l, 0.0);
            assert!(gr.iter().all(|&x: &f32| x == 0.0));
        }
    }

    #[test]
    fn misaligned_seam_costs() {
        let g = GridGeometry::new(1, 3, 1, 4, 4).unwrap();
        let v = grid(g, |i| (i / 16) as f32 / 2.0);
        let d = Array1::from(v.pixels().to_vec());
        assert_eq!(reconstruction_loss(d.view(), &v, 0).unwrap().0, 0.0);
        assert!(reconstruction_loss(d.view(), &v, 1).unwrap().0 > 0.0);
    }

    #[test]
    fn direct_summation_oracle() {
        let g = GridGeometry::new(2, 3, 1, 4, 4).unwrap();
        let v = grid(g, |i| ((i * 31) % 17) as f32 / 17.0);
        let d: Array1<f64> = (0..g.grid_len()).map(|i| ((i * 13) % 11) as f64 / 11.0).collect();
        for start in 0..3 {
            let mut want = 0.0;
            for e in 0..2 {
                for a in 0..3 {
                    let mut view = 0.0;
                    for k in 0..16 {
                        let pred = d[(e * 3 + a) * 16 + k];
                        let t = v.pixels()[(e * 3 + (a + start) % 3) * 16 + k] as f64;
                        view += (pred - t).powi(2);
                    }
                    want += view / 16.0;
                }
            }
            let (l, _) = reconstruction_loss(d.view(), &v, start).unwrap();
            assert!((l - want).abs() < 1e-12);
            let m = reconstruction_mse(d.view(), &v, start).unwrap();
            assert!((m - want / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_examples() {
        let r = compute_rewards(&[0.2, 0.5, 0.1], 0.05, 1.0);
        let want = [0.2, 0.5, 0.05];
        for (a, b) in r.rewards.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let r = compute_rewards(&[0.0, 0.0, 0.0], 0.05, 1.0);
        assert_eq!(r.rewards, vec![0.0, 0.0, -0.05]);
        assert!(compute_rewards(&[], 0.3, 1.0).rewards.is_empty());
        assert_eq!(returns_to_go(&[1.0, 2.0, 3.0]), vec![6.0, 5.0, 3.0]);
    }

    #[test]
    fn policy_terms() {
        let z = Array1::<f64>::zeros(15);
        let (l, g) = policy_gradient_term(z.view(), 3, 0.0);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let (_, g) = policy_gradient_term(z.view(), 3, 1.0);
        // Descending the surrogate raises the taken action's logit.
        assert!(g[3] < 0.0 && g.iter().enumerate().all(|(i, &v)| i == 3 || v > 0.0));
        let (ce, _) = demo_cross_entropy(z.view(), 0);
        assert!((ce - 15f64.ln()).abs() < 1e-12);
        let mut sharp = Array1::<f64>::zeros(15);
        sharp[2] = 800.0;
        assert!(demo_cross_entropy(sharp.view(), 2).0.abs() < 1e-12);
        let (h, g) = negative_entropy(z.view());
        assert!((h + 15f64.ln()).abs() < 1e-12);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        assert!(negative_entropy(sharp.view()).0.abs() < 1e-12);
        assert_eq!(critic_loss(1.0, 0.5).0, 0.25);
        assert_eq!(critic_loss(0.5, 0.5).1, 0.0);
    }

    #[test]
    fn baseline_ema() {
        let mut b = Baseline::new(0.9, 2);
        assert_eq!(b.get(1), 0.0);
        b.update(1, 1.0);
        assert!((b.get(1) - 0.1).abs() < 1e-15);
        assert_eq!(b.get(0), 0.0);
    }
}
