//! Trains the actor-critic variants: `asymm-ac`, whose critic also sees the
//! absolute pose and the whole viewgrid, and `ours-rew-ac`, which adds
//! reward-sidekick shaping to a partially observing critic.

use viewgrid_sidekick::env::{generate_synthetic, GridGeometry, Split, SynthSpec};
use viewgrid_sidekick::sidekick::{precompute_cache, SidekickConfig};
use viewgrid_sidekick::train::{pretrain_one_view, train, Method, TrainConfig, TrainInputs};

fn main() -> viewgrid_sidekick::Result<()> {
    let geom = GridGeometry::desk();
    let train_ds = generate_synthetic(&SynthSpec::new(geom, 60, 4))?;
    let val = generate_synthetic(&SynthSpec::new(geom, 12, 5).with_split(Split::Val))?;
    let base = TrainConfig {
        epochs: 40,
        pretrain_epochs: 30,
        val_every: 10,
        ..TrainConfig::desk()
    };
    let inputs = TrainInputs {
        val: Some(&val),
        ..TrainInputs::new(&train_ds)
    };
    let pre = pretrain_one_view(&base, inputs, None)?.agent;
    let cache = precompute_cache(&train_ds, &pre, &SidekickConfig::desk())?;
    for method in [Method::AsymmAc, Method::OursRewAc] {
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
        println!("{method} ({:?} critic)", out.agent.critic_kind().expect("critic attached"));
        for r in out.log.iter().filter(|r| r.avg.is_some()) {
            println!(
                "  epoch {:>3} val {:.2} critic loss {:.4} return {:.4}",
                r.epoch,
                r.avg.unwrap_or_default(),
                r.train.critic,
                r.train.mean_return
            );
        }
    }
    Ok(())
}
