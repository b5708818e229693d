//! Evaluates trained policies under the avg and adv metrics and prints the
//! report table with improvements over `one-view`.

use viewgrid_sidekick::env::{generate_synthetic, GridGeometry, Split, SynthSpec};
use viewgrid_sidekick::eval::{start_errors, EvalReport, EvalSettings, MethodResult};
use viewgrid_sidekick::train::{method_eval_policy, pretrain_one_view, train, Method, TrainConfig, TrainInputs};

fn main() -> viewgrid_sidekick::Result<()> {
    let geom = GridGeometry::desk();
    let train_ds = generate_synthetic(&SynthSpec::new(geom, 60, 8))?;
    let test = generate_synthetic(&SynthSpec::new(geom, 12, 9).with_split(Split::Test))?;
    let base = TrainConfig {
        epochs: 40,
        pretrain_epochs: 40,
        val_every: 40,
        ..TrainConfig::desk()
    };
    let pre = pretrain_one_view(&base, TrainInputs::new(&train_ds), None)?.agent;

    let mut rows = Vec::new();
    for method in [Method::OneView, Method::RndActions, Method::Ltla] {
        let cfg = TrainConfig { method, ..base.clone() };
        let agent = train(
            &cfg,
            TrainInputs {
                pretrained: Some(&pre),
                ..TrainInputs::new(&train_ds)
            },
            None,
        )?
        .agent;
        let settings = EvalSettings {
            policy: method_eval_policy(method, cfg.seed, None)?,
            ..EvalSettings::new(cfg.effective_budget())
        };
        // All 32 start poses of every test sample.
        let errors = start_errors(&agent, &test, &settings)?;
        rows.push(MethodResult::from_errors(method.name(), errors, vec![cfg.seed]));
    }
    let report = EvalReport::new(geom, Split::Test, base.budget, rows)?;
    print!("{}", report.to_table());
    Ok(())
}
