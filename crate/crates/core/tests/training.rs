mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, WeightedIndex};

#[test]
fn zeroed_reward_sidekick_reduces_to_plain_policy_gradient() {
    let [plain, zeroed, paid] = common::degenerate_runs();
    assert_eq!(plain.log.len(), 10);
    assert!(common::identical_trajectories(&plain, &zeroed));
    assert_ne!(plain.log[0].checksum, plain.log[9].checksum, "parameters never moved");
    assert!(!common::identical_trajectories(&plain, &paid));
}

/// The baseline term `b * grad log pi(a)` has zero mean under the policy,
/// so subtracting a baseline leaves the gradient estimate unbiased.
#[test]
fn baseline_term_has_zero_mean() {
    let logits = [0.3, -1.2, 2.0, 0.0, 0.7, -0.4, 1.1, 0.2, -2.0, 0.5, 0.9, -0.8, 0.1, 1.5, -0.3];
    let z: f64 = logits.iter().map(|v: &f64| v.exp()).sum();
    let p: Vec<f64> = logits.iter().map(|v| v.exp() / z).collect();
    let dist = WeightedIndex::new(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 20_000;
    let b = 1.7;
    let mut sum = vec![0.0; p.len()];
    let mut sq = vec![0.0; p.len()];
    for _ in 0..n {
        let a = dist.sample(&mut rng);
        for k in 0..p.len() {
            let g = b * (f64::from(u8::from(k == a)) - p[k]);
            sum[k] += g;
            sq[k] += g * g;
        }
    }
    for k in 0..p.len() {
        let mean = sum[k] / n as f64;
        let sd = (sq[k] / n as f64 - mean * mean).sqrt() / (n as f64).sqrt();
        assert!(mean.abs() <= 3.0 * sd + 1e-12, "action {k}: mean {mean} vs 3 sd {}", 3.0 * sd);
    }
}
