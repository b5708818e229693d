//! Pretrains a small one-view model, then scores every view of a sample by
//! how well the whole grid is completed from it and keeps the best
//! non-redundant views.

use viewgrid_sidekick::env::{generate_synthetic, GridGeometry, Pose, Split, SynthSpec};
use viewgrid_sidekick::sidekick::score_map;
use viewgrid_sidekick::train::{pretrain_one_view, TrainConfig, TrainInputs};

fn main() -> viewgrid_sidekick::Result<()> {
    let geom = GridGeometry::desk();
    let train = generate_synthetic(&SynthSpec::new(geom, 60, 1))?;
    let val = generate_synthetic(&SynthSpec::new(geom, 10, 2).with_split(Split::Val))?;
    let cfg = TrainConfig {
        pretrain_epochs: 30,
        ..TrainConfig::desk()
    };
    let model = pretrain_one_view(&cfg, TrainInputs { val: Some(&val), ..TrainInputs::new(&train) }, None)?.agent;

    let map = score_map(&model, &val.samples()[0], 4, 1)?;
    println!("scores (1 = most informative), selected views in brackets");
    for e in 0..geom.n_elev {
        let row: Vec<String> = (0..geom.n_azim)
            .map(|a| {
                let p = Pose::new(e, a);
                let s = map.scores[p.index(&geom)];
                if map.selected.contains(&p) {
                    format!("[{s:.2}]")
                } else {
                    format!(" {s:.2} ")
                }
            })
            .collect();
        println!("{}", row.join(""));
    }
    if map.relaxed {
        println!("suppression was relaxed to reach K views");
    }
    Ok(())
}
