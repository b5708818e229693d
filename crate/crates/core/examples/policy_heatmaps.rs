//! Trains a short `ltla` run, then perturbs the belief at every decision
//! step to find which views the policy is most sensitive to, and renders
//! the episode with heatmap overlays to a PNG.

use viewgrid_sidekick::agent::{rollout, ActionSource};
use viewgrid_sidekick::env::{generate_synthetic, GridGeometry, Pose, SynthSpec};
use viewgrid_sidekick::eval::{episode_heatmaps, render_episode, save_png, PerturbConfig};
use viewgrid_sidekick::rng;
use viewgrid_sidekick::train::{pretrain_one_view, train, Method, TrainConfig, TrainInputs};

fn main() -> viewgrid_sidekick::Result<()> {
    let geom = GridGeometry::desk();
    let ds = generate_synthetic(&SynthSpec::new(geom, 60, 12))?;
    let cfg = TrainConfig {
        method: Method::Ltla,
        epochs: 40,
        pretrain_epochs: 30,
        val_every: 40,
        ..TrainConfig::desk()
    };
    let pre = pretrain_one_view(&cfg, TrainInputs::new(&ds), None)?.agent;
    let agent = train(
        &cfg,
        TrainInputs {
            pretrained: Some(&pre),
            ..TrainInputs::new(&ds)
        },
        None,
    )?
    .agent;

    let grid = &ds.samples()[0];
    let ep = rollout(&agent, grid, Pose::new(1, 2), cfg.budget, &ActionSource::argmax(), &mut rng::stream(0, "viz"))?;
    let maps = episode_heatmaps(&agent, &ep, &PerturbConfig::default())?;
    for (t, (p, h)) in maps.iter().enumerate() {
        let hottest = (0..geom.n_elev)
            .flat_map(|e| (0..geom.n_azim).map(move |a| (e, a)))
            .max_by(|x, y| h.at(x.0, x.1).total_cmp(&h.at(y.0, y.1)))
            .expect("non-empty grid");
        println!(
            "t={t}: |delta|/|a| {:.3}, objective {:.2e} after {} iterations, hottest view {hottest:?}",
            p.ratio, p.objective, p.iterations
        );
    }
    let heat: Vec<_> = maps.into_iter().map(|(_, h)| Some(h)).collect();
    let path = std::env::temp_dir().join("viewgrid-heatmaps.png");
    save_png(&render_episode(&ep, Some(grid), &heat)?, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
