//! Helpers shared by the integration tests and the acceptance run.
#![allow(dead_code)]

pub mod grads;
pub mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// Every file under `dir`, by relative path.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

use viewgrid_sidekick::agent::{Agent, ArchConfig};
use viewgrid_sidekick::env::{generate_synthetic, Dataset, GridGeometry, Pose, Split, SynthSpec};
use viewgrid_sidekick::sidekick::{ScoreMap, SidekickCache, SidekickConfig, SidekickEntry};
use viewgrid_sidekick::train::{pretrain_one_view, train, Method, TrainConfig, TrainInputs, TrainOutcome};

/// A dataset and config small enough to train for a few epochs in
/// milliseconds.
pub fn small_run() -> (Dataset, TrainConfig) {
    let g = GridGeometry::new(2, 4, 1, 4, 4).unwrap();
    let ds = generate_synthetic(&SynthSpec::new(g, 12, 3).with_split(Split::Train)).unwrap();
    let cfg = TrainConfig {
        arch: ArchConfig::tiny(),
        budget: 3,
        epochs: 10,
        pretrain_epochs: 3,
        batch_size: 5,
        seed: 42,
        ..TrainConfig::default()
    };
    (ds, cfg)
}

/// A score cache for `ds`; every view scores `value` and, when `value` is
/// positive, every view is selected.
pub fn uniform_cache(ds: &Dataset, pre: &Agent<f32>, value: f32) -> SidekickCache {
    SidekickCache {
        dataset_id: ds.content_id(),
        model_checksum: pre.params().checksum(),
        geometry: *ds.geometry(),
        config: SidekickConfig {
            coverage: false,
            ..SidekickConfig::desk()
        },
        entries: ds
            .samples()
            .iter()
            .map(|s| {
                let mut m = ScoreMap::zeros(*ds.geometry(), s.id());
                if value > 0.0 {
                    m.scores.fill(value);
                    m.selected = Pose::all(ds.geometry()).collect();
                }
                SidekickEntry {
                    scores: Some(m),
                    coverage: None,
                }
            })
            .collect(),
    }
}

/// `ltla`, `ours-rew` on zeroed scores and `ours-rew` on unit scores, all
/// from the same pretrained model and seed.
pub fn degenerate_runs() -> [TrainOutcome; 3] {
    let (ds, cfg) = small_run();
    let pre = pretrain_one_view(&cfg, TrainInputs::new(&ds), None).unwrap().agent;
    let run = |method: Method, cache: &SidekickCache| {
        let cfg = TrainConfig { method, ..cfg.clone() };
        let inputs = TrainInputs {
            pretrained: Some(&pre),
            sidekick: Some(cache),
            ..TrainInputs::new(&ds)
        };
        train(&cfg, inputs, None).unwrap()
    };
    let zero = uniform_cache(&ds, &pre, 0.0);
    [
        run(Method::Ltla, &zero),
        run(Method::OursRew, &zero),
        run(Method::OursRew, &uniform_cache(&ds, &pre, 1.0)),
    ]
}

/// Epoch-by-epoch parameter checksums and losses agree bit for bit.
pub fn identical_trajectories(a: &TrainOutcome, b: &TrainOutcome) -> bool {
    a.log.len() == b.log.len()
        && a.log
            .iter()
            .zip(&b.log)
            .all(|(x, y)| x.checksum == y.checksum && x.train.total.to_bits() == y.train.total.to_bits())
        && a.agent.params().checksum() == b.agent.params().checksum()
}
