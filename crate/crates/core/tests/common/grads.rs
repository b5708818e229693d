//! Finite-difference probes. Each returns the worst relative error found
//! and where it occurred.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewgrid_sidekick::agent::{rollout_batch, ActionMode, ActionSource, Agent, ArchConfig, CriticKind, RolloutOptions};
use viewgrid_sidekick::env::{generate_synthetic, GridGeometry, Pose, SynthSpec, Viewgrid};
use viewgrid_sidekick::nn::{
    build_sequential, finite_diff_check, Activation, GradCheckConfig, GradCheckReport, Gradients, Group, GroupMask,
    Gru, LayerSpec, ParamStore, Shape,
};
use viewgrid_sidekick::train::{
    build_targets, critic_loss, demo_cross_entropy, negative_entropy, policy_gradient_term, reconstruction_loss,
    surrogate, surrogate_value, Baseline, Learner, ObjectiveSpec,
};

pub const TOL: f64 = 1e-4;

#[derive(Clone, Debug, Default)]
pub struct Worst {
    pub err: f64,
    pub at: String,
}

impl Worst {
    pub fn add(&mut self, err: f64, at: impl FnOnce() -> String) {
        if err > self.err || (self.at.is_empty() && err >= self.err) {
            self.err = err;
            self.at = at();
        }
    }

    pub fn merge(&mut self, other: Worst) {
        if other.err > self.err || self.at.is_empty() {
            *self = other;
        }
    }

    fn report(&mut self, r: &GradCheckReport, only: Option<Group>, label: &str) {
        for g in r.groups.iter().filter(|g| only.map_or(true, |o| o == g.group)) {
            self.add(g.max_rel_err, || format!("{label} {:?} {} {:?}", g.group, g.worst_param, g.worst_values));
        }
    }
}

fn rel(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-5)
}

fn cfg(seed: u64, samples: Option<usize>) -> GradCheckConfig {
    GradCheckConfig {
        seed,
        samples_per_param: samples,
        ..GradCheckConfig::default()
    }
}

fn input(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Parameter and input gradients of `sum(w * net(x))`.
pub fn stack(specs: &[LayerSpec], shape: Shape, seed: u64, samples: Option<usize>) -> Worst {
    let n_in = match shape {
        Shape::Flat(n) => n,
        Shape::Spatial { c, h, w } => c * h * w,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new(seed);
    let net = build_sequential(specs, shape, &mut store, Group::Decode, "net", &mut rng).unwrap();
    let x = input(3, n_in, &mut rng);
    let cache = net.forward(&store, x.view()).unwrap();
    let w = input(3, cache.output().ncols(), &mut rng);
    let mut g = Gradients::new(&store, GroupMask::all());
    let dx = net.backward(&store, &cache, w.view(), &mut g, true).unwrap().unwrap();
    let analytic = g.to_dense(&store);
    let report = finite_diff_check(
        &mut store,
        &analytic,
        |s| (net.forward(s, x.view()).unwrap().output() * &w).sum(),
        cfg(seed, samples),
    );
    let mut worst = Worst::default();
    worst.report(&report, None, "param");
    let eps = 1e-6;
    for k in 0..12 {
        let (i, j) = (k % 3, (k * 7) % n_in);
        let f = |d: f64| {
            let mut xp = x.clone();
            xp[[i, j]] += d;
            (net.forward(&store, xp.view()).unwrap().output() * &w).sum()
        };
        let num = (f(eps) - f(-eps)) / (2.0 * eps);
        worst.add(rel(dx[[i, j]], num), || format!("input [{i},{j}]"));
    }
    worst
}

/// Every layer kind and activation.
pub fn layer_suite(seed: u64, samples: Option<usize>) -> Worst {
    let mut worst = Worst::default();
    for f in [Activation::Identity, Activation::Relu, Activation::Sigmoid, Activation::Tanh] {
        worst.merge(stack(
            &[LayerSpec::dense(7), LayerSpec::act(f), LayerSpec::dense(4)],
            Shape::Flat(5),
            seed,
            samples,
        ));
    }
    worst.merge(stack(
        &[LayerSpec::conv(3), LayerSpec::act(Activation::Tanh), LayerSpec::Pool, LayerSpec::dense(5)],
        Shape::Spatial { c: 2, h: 8, w: 8 },
        seed,
        samples,
    ));
    worst.merge(stack(
        &[
            LayerSpec::dense(2 * 2 * 4),
            LayerSpec::Reshape { c: 4, h: 2, w: 2 },
            LayerSpec::deconv(3),
            LayerSpec::act(Activation::Sigmoid),
            LayerSpec::deconv(2),
        ],
        Shape::Flat(6),
        seed,
        samples,
    ));
    worst.merge(gru(seed, samples));
    worst
}

/// A GRU unrolled for three steps.
pub fn gru(seed: u64, samples: Option<usize>) -> Worst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new(seed);
    let gru = Gru::new(&mut store, Group::Aggregate, "gru", 4, 3, &mut rng);
    let xs: Vec<Array2<f64>> = (0..3).map(|_| input(2, 4, &mut rng)).collect();
    let w = input(2, 3, &mut rng);
    let unroll = |s: &ParamStore<f64>| {
        let mut h = Array2::zeros((2, 3));
        let mut caches = Vec::new();
        for x in &xs {
            let (hn, c) = gru.forward(s, x.view(), h.view()).unwrap();
            caches.push(c);
            h = hn;
        }
        (h, caches)
    };
    let (_, caches) = unroll(&store);
    let mut g = Gradients::new(&store, GroupMask::all());
    let mut dh = w.clone();
    for c in caches.iter().rev() {
        let (_, prev) = gru.backward(&store, c, dh.view(), &mut g, true).unwrap();
        dh = prev;
    }
    let analytic = g.to_dense(&store);
    let report = finite_diff_check(&mut store, &analytic, |s| (&unroll(s).0 * &w).sum(), cfg(seed, samples));
    let mut worst = Worst::default();
    worst.report(&report, None, "gru");
    worst
}

fn logit_fn(label: &str, seed: u64, f: impl Fn(&Array1<f64>) -> (f64, Vec<f64>)) -> Worst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Array1::from_shape_fn(15, |_| rng.gen_range(-2.0..2.0));
    let (_, g) = f(&z);
    let mut worst = Worst::default();
    for k in 0..z.len() {
        let eps = 1e-6;
        let mut up = z.clone();
        up[k] += eps;
        let mut dn = z.clone();
        dn[k] -= eps;
        let num = (f(&up).0 - f(&dn).0) / (2.0 * eps);
        worst.add(rel(g[k], num), || format!("{label} logit {k}"));
    }
    worst
}

/// Policy-gradient, cross-entropy, entropy, critic and reconstruction terms
/// on their own inputs.
pub fn loss_terms(seed: u64) -> Worst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let (a, adv, d) = (rng.gen_range(0..15), rng.gen_range(-2.0..2.0), rng.gen_range(0..15));
    let mut worst = logit_fn("policy gradient", seed, |z| policy_gradient_term(z.view(), a, adv));
    worst.merge(logit_fn("demo", seed, |z| demo_cross_entropy(z.view(), d)));
    worst.merge(logit_fn("entropy", seed, |z| negative_entropy(z.view())));
    let (v, r) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let (_, dv) = critic_loss(v, r);
    let num = (critic_loss(v + 1e-6, r).0 - critic_loss(v - 1e-6, r).0) / 2e-6;
    worst.add(rel(dv, num), || "critic".into());

    let g = GridGeometry::new(2, 4, 1, 4, 4).unwrap();
    let ds = generate_synthetic(&SynthSpec::new(g, 1, seed)).unwrap();
    let grid = &ds.samples()[0];
    let dec = Array1::from_shape_fn(g.grid_len(), |_| rng.gen_range(0.0..1.0));
    let start = rng.gen_range(0..4);
    let (_, grad) = reconstruction_loss(dec.view(), grid, start).unwrap();
    for k in (0..dec.len()).step_by(7) {
        let mut up = dec.clone();
        up[k] += 1e-6;
        let mut dn = dec.clone();
        dn[k] -= 1e-6;
        let num = (reconstruction_loss(up.view(), grid, start).unwrap().0
            - reconstruction_loss(dn.view(), grid, start).unwrap().0)
            / 2e-6;
        worst.add(rel(grad[k], num), || format!("reconstruction {k}"));
    }
    worst
}

pub struct Setup {
    pub agent: Agent<f64>,
    pub grids: Vec<Viewgrid>,
    pub starts: Vec<Pose>,
    pub maps: Vec<Vec<f32>>,
}

pub fn setup(seed: u64, arch: ArchConfig, critic: Option<CriticKind>) -> Setup {
    let g = GridGeometry::new(2, 4, 1, 4, 4).unwrap();
    let ds = generate_synthetic(&SynthSpec::new(g, 3, seed + 100)).unwrap();
    let mut agent = Agent::<f64>::new(g, arch, seed).unwrap();
    if let Some(k) = critic {
        agent.attach_critic(k).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Zero-initialized biases meet all-zero proprioception at a ReLU kink,
    // where central differences are meaningless. Jitter moves off it.
    for id in agent.params().ids().collect::<Vec<_>>() {
        agent.params_mut().value_mut(id).mapv_inplace(|v| v + rng.gen_range(-0.1..0.1));
    }
    let starts = (0..3).map(|_| Pose::new(rng.gen_range(0..2), rng.gen_range(0..4))).collect();
    let maps = (0..3)
        .map(|_| (0..g.n_views()).map(|_| if rng.gen_bool(0.4) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect())
        .collect();
    Setup {
        agent,
        grids: ds.samples().to_vec(),
        starts,
        maps,
    }
}

pub fn spec(learner: Learner, lambda_r: f64, lambda_p: f64, entropy: f64, demo: bool) -> ObjectiveSpec {
    ObjectiveSpec {
        learner,
        lambda_r,
        lambda_p,
        entropy_weight: entropy,
        reward_scale: 0.8,
        demo_supervision: demo,
    }
}

/// Unrolls, builds frozen targets, backpropagates the surrogate and
/// compares against finite differences of the same surrogate recomputed by
/// replaying the recorded actions. `only` restricts the comparison to one
/// parameter group.
pub fn agent(
    s: &Setup,
    spec: &ObjectiveSpec,
    demos: Option<Vec<Vec<usize>>>,
    only: Option<Group>,
    seed: u64,
    samples: Option<usize>,
) -> Worst {
    let budget = 4;
    let grids: Vec<&Viewgrid> = s.grids.iter().collect();
    let source = match demos {
        Some(d) => ActionSource::with_prefixes(ActionMode::Sample, d),
        None => ActionSource::sample(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rollout_batch(&s.agent, &grids, &s.starts, budget, &source, &mut rng, RolloutOptions::training()).unwrap();
    let maps: Vec<Option<&[f32]>> = s.maps.iter().map(|m| Some(m.as_slice())).collect();
    let mut baseline = Baseline::new(0.9, budget - 1);
    baseline.values = vec![-0.05, 0.02, -0.1];
    let targets = build_targets(&r, &grids, &maps, spec, &baseline).unwrap();
    let (_, up) = surrogate(&r, &grids, &targets).unwrap();
    let mut g = Gradients::new(s.agent.params(), GroupMask::all());
    r.backward(&s.agent, &up, &mut g).unwrap();
    let analytic = g.to_dense(s.agent.params());

    let replay = ActionSource::with_prefixes(ActionMode::Argmax, r.actions.clone());
    let mut store = s.agent.params().clone();
    let mut probe = s.agent.clone();
    let report = finite_diff_check(
        &mut store,
        &analytic,
        |st| {
            probe.load_values_from(st).unwrap();
            let rr = rollout_batch(
                &probe,
                &grids,
                &s.starts,
                budget,
                &replay,
                &mut ChaCha8Rng::seed_from_u64(0),
                RolloutOptions::training(),
            )
            .unwrap();
            assert_eq!(rr.actions, r.actions);
            surrogate_value(&rr, &grids, &targets).unwrap()
        },
        cfg(seed, samples),
    );
    assert!(
        report.groups.iter().any(|g| only.map_or(true, |o| o == g.group) && g.n_checked > 0),
        "nothing checked"
    );
    let mut worst = Worst::default();
    worst.report(&report, only, "agent");
    worst
}

/// Small conv/deconv agent widths.
pub fn conv_arch() -> ArchConfig {
    ArchConfig {
        view_code: 5,
        prop_code: 3,
        fuse: 4,
        hidden: 3,
        act_hidden: 4,
        critic_hidden: 3,
        conv_channels: [2, 2],
        deconv_channels: [2, 2],
        ..ArchConfig::convolutional()
    }
}

/// Every loss path through the unrolled agent: reconstruction, policy
/// gradient, entropy, demonstration cross-entropy, both critics and the
/// combined objective on the dense and convolutional agents.
pub fn agent_suite(seed: u64, samples: Option<usize>) -> Worst {
    let tiny = || setup(seed, ArchConfig::tiny(), None);
    let demos = || Some(vec![vec![2, 9], vec![14], vec![0, 7, 3]]);
    let mut w = Worst::default();
    w.merge(agent(&tiny(), &spec(Learner::None, 1.0, 0.0, 0.0, false), None, None, seed, samples));
    w.merge(agent(&tiny(), &spec(Learner::Reinforce, 0.0, 1.0, 0.0, false), None, None, seed, samples));
    w.merge(agent(&tiny(), &spec(Learner::Reinforce, 0.0, 1e-9, 0.3, false), None, None, seed, samples));
    w.merge(agent(&tiny(), &spec(Learner::Reinforce, 0.0, 1.0, 0.0, true), demos(), None, seed, samples));
    for kind in [CriticKind::Partial, CriticKind::Full] {
        let s = setup(seed, ArchConfig::tiny(), Some(kind));
        w.merge(agent(&s, &spec(Learner::ActorCritic, 0.0, 0.0, 0.0, false), None, Some(Group::Critic), seed, samples));
    }
    w.merge(agent(&tiny(), &spec(Learner::Reinforce, 1.0, 0.7, 0.05, true), demos(), None, seed, samples));
    let conv = setup(seed, conv_arch(), None);
    w.merge(agent(&conv, &spec(Learner::Reinforce, 1.0, 0.5, 0.05, false), None, None, seed, samples));
    w
}
