//! Builds the coverage matrix of one sample and the greedy,
//! motion-constrained demonstration from every start pose.

use viewgrid_sidekick::env::{action_space, generate_synthetic, GridGeometry, Pose, SynthSpec};
use viewgrid_sidekick::sidekick::{coverage_matrix, demo_trajectory};
use viewgrid_sidekick::train::{pretrain_one_view, TrainConfig, TrainInputs};

fn main() -> viewgrid_sidekick::Result<()> {
    let geom = GridGeometry::desk();
    let train = generate_synthetic(&SynthSpec::new(geom, 60, 1))?;
    let cfg = TrainConfig {
        pretrain_epochs: 30,
        ..TrainConfig::desk()
    };
    let model = pretrain_one_view(&cfg, TrainInputs::new(&train), None)?.agent;
    let cov = coverage_matrix(&model, &train.samples()[0])?;

    let actions = action_space(&geom);
    let mut best = (0.0, Pose::new(0, 0));
    for start in Pose::all(&geom) {
        let demo = demo_trajectory(&cov, start, 4)?;
        let reached = *demo.objective.last().expect("one value per glimpse");
        let moves: Vec<String> = demo
            .actions
            .iter()
            .map(|&a| format!("({:+},{:+})", actions[a].d_elev, actions[a].d_azim))
            .collect();
        println!(
            "start ({}, {}): {} coverage {:.3}",
            start.elev,
            start.azim,
            moves.join(" "),
            reached
        );
        if reached > best.0 {
            best = (reached, start);
        }
    }
    println!("best start ({}, {}) with coverage {:.3}", best.1.elev, best.1.azim, best.0);
    Ok(())
}
