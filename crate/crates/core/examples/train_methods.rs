//! Pretrains the one-view model, builds the sidekick cache and trains
//! `ltla`, `ours-rew` and `ours-demo` with REINFORCE on a small split,
//! printing validation curves and test errors.

use viewgrid_sidekick::env::{generate_synthetic, GridGeometry, Split, SynthSpec};
use viewgrid_sidekick::eval::{start_errors, summarize, EvalSettings};
use viewgrid_sidekick::sidekick::{precompute_cache, SidekickConfig};
use viewgrid_sidekick::train::{method_eval_policy, pretrain_one_view, train, Method, TrainConfig, TrainInputs};

fn main() -> viewgrid_sidekick::Result<()> {
    let geom = GridGeometry::desk();
    let train_ds = generate_synthetic(&SynthSpec::new(geom, 80, 1))?;
    let val = generate_synthetic(&SynthSpec::new(geom, 16, 2).with_split(Split::Val))?;
    let test = generate_synthetic(&SynthSpec::new(geom, 16, 3).with_split(Split::Test))?;
    let base = TrainConfig {
        epochs: 60,
        pretrain_epochs: 40,
        val_every: 10,
        tsup_interval: 15,
        reward_decay_interval: 40,
        ..TrainConfig::desk()
    };
    let inputs = TrainInputs {
        val: Some(&val),
        ..TrainInputs::new(&train_ds)
    };
    let pre = pretrain_one_view(&base, inputs, None)?.agent;
    let cache = precompute_cache(&train_ds, &pre, &SidekickConfig::desk())?;

    for method in [Method::Ltla, Method::OursRew, Method::OursDemo] {
        let cfg = TrainConfig { method, ..base.clone() };
        let out = train(
            &cfg,
            TrainInputs {
                pretrained: Some(&pre),
                sidekick: Some(&cache),
                ..inputs
            },
            None,
        )?;
        let curve: Vec<String> = out.val_curve().iter().map(|(e, v)| format!("{e}:{v:.1}")).collect();
        let settings = EvalSettings {
            policy: method_eval_policy(method, cfg.seed, None)?,
            ..EvalSettings::new(cfg.budget)
        };
        let errors: Vec<Vec<f64>> = start_errors(&out.agent, &test, &settings)?
            .into_iter()
            .map(|r| r.into_iter().map(|e| e * 1000.0).collect())
            .collect();
        let (avg, adv) = summarize(&errors);
        println!("{method:<10} val {}", curve.join(" "));
        println!("{:<10} test avg {avg:.2} adv {adv:.2}", "");
    }
    Ok(())
}
