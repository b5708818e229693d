//! Checks the hand-written backward pass of a conv, pool and deconv stack
//! against central finite differences at 64-bit.

use ndarray::Array2;
use rand::SeedableRng;
use viewgrid_sidekick::nn::{
    build_sequential, finite_diff_check, Activation, GradCheckConfig, Gradients, Group, GroupMask, LayerSpec,
    ParamStore, Shape,
};

fn main() -> viewgrid_sidekick::Result<()> {
    for seed in 0..3 {
        let mut store = ParamStore::<f64>::new(seed);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let specs = [
            LayerSpec::conv(3),
            LayerSpec::act(Activation::Relu),
            LayerSpec::Pool,
            LayerSpec::deconv(2),
            LayerSpec::act(Activation::Sigmoid),
        ];
        let net = build_sequential(&specs, Shape::Spatial { c: 1, h: 8, w: 8 }, &mut store, Group::Sense, "enc", &mut rng)?;
        let x = Array2::from_shape_fn((2, 64), |(i, j)| ((i * 64 + j) as f64 * 0.37).sin());
        let target = Array2::from_elem((2, 128), 0.3);

        let cache = net.forward(&store, x.view())?;
        let dy = (cache.output() - &target) * 2.0;
        let mut g = Gradients::new(&store, GroupMask::all());
        net.backward(&store, &cache, dy.view(), &mut g, false)?;
        let analytic = g.to_dense(&store);
        let report = finite_diff_check(
            &mut store,
            &analytic,
            |s| {
                let y = net.forward(s, x.view()).expect("forward");
                (y.output() - &target).mapv(|v| v * v).sum()
            },
            GradCheckConfig::default(),
        );
        for g in &report.groups {
            println!(
                "seed {seed} {:?}: {} entries, max relative error {:.2e} ({})",
                g.group, g.n_checked, g.max_rel_err, g.worst_param
            );
        }
        assert!(report.passed());
    }
    Ok(())
}
