//! Analytic gradients against central finite differences at 64-bit, for
//! every layer kind, every loss term and the full unrolled agent.

mod common;

use common::grads::{self, Worst, TOL};
use viewgrid_sidekick::agent::{ArchConfig, CriticKind};
use viewgrid_sidekick::nn::Group;
use viewgrid_sidekick::train::Learner;

const SEEDS: u64 = 10;

fn ok(what: &str, seed: u64, w: Worst) {
    assert!(w.err < TOL, "{what} seed {seed}: relative error {:.3e} at {}", w.err, w.at);
}

#[test]
fn layers_and_recurrence() {
    for seed in 0..SEEDS {
        ok("layers", seed, grads::layer_suite(seed, None));
    }
}

#[test]
fn loss_terms_in_isolation() {
    for seed in 0..SEEDS {
        ok("losses", seed, grads::loss_terms(seed));
    }
}

fn agent_case(what: &str, spec: viewgrid_sidekick::train::ObjectiveSpec, demos: bool) {
    for seed in 0..SEEDS {
        let s = grads::setup(seed, ArchConfig::tiny(), None);
        let d = demos.then(|| vec![vec![2, 9], vec![14], vec![0, 7, 3]]);
        ok(what, seed, grads::agent(&s, &spec, d, None, seed, None));
    }
}

#[test]
fn reconstruction_path_through_time() {
    agent_case("rec", grads::spec(Learner::None, 1.0, 0.0, 0.0, false), false);
}

#[test]
fn policy_gradient_path() {
    agent_case("reinforce", grads::spec(Learner::Reinforce, 0.0, 1.0, 0.0, false), false);
}

#[test]
fn entropy_path() {
    agent_case("entropy", grads::spec(Learner::Reinforce, 0.0, 1e-9, 0.3, false), false);
}

#[test]
fn demonstration_path() {
    agent_case("demo", grads::spec(Learner::Reinforce, 0.0, 1.0, 0.0, true), true);
}

#[test]
fn full_objective_unrolled() {
    agent_case("full", grads::spec(Learner::Reinforce, 1.0, 0.7, 0.05, true), true);
}

#[test]
fn critic_path() {
    for kind in [CriticKind::Partial, CriticKind::Full] {
        for seed in 0..SEEDS {
            let s = grads::setup(seed, ArchConfig::tiny(), Some(kind));
            let spec = grads::spec(Learner::ActorCritic, 0.0, 0.0, 0.0, false);
            ok(&format!("critic {kind:?}"), seed, grads::agent(&s, &spec, None, Some(Group::Critic), seed, None));
        }
    }
}

#[test]
fn full_objective_convolutional_agent() {
    for seed in 0..SEEDS {
        let s = grads::setup(seed, grads::conv_arch(), None);
        let spec = grads::spec(Learner::Reinforce, 1.0, 0.5, 0.05, false);
        ok("conv agent", seed, grads::agent(&s, &spec, None, None, seed, None));
    }
}
