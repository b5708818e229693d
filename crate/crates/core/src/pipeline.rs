//! Staged experiment driver.
//!
//! Every stage writes its artifacts, a `config.json` snapshot and finally a
//! `stamp.json` holding a key derived from the resolved configuration and
//! the checksums of its inputs. A stage whose directory already carries a
//! matching stamp is loaded instead of rerun.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::agent::Agent;
use crate::env::io_util::{read_json, write_json};
use crate::env::{generate_synthetic, load_dataset, save_dataset, Dataset, GridGeometry, Split, SynthSpec};
use crate::error::{Error, Result};
use crate::eval::{start_errors, EvalReport, EvalSettings, MethodResult};
use crate::sidekick::{load_cache, precompute_cache, save_cache, SidekickCache, SidekickConfig};
use crate::train::{method_eval_policy, pretrain_one_view, train, EpochRecord, Method, TrainConfig, TrainInputs};

pub const STAMP_FILE: &str = "stamp.json";
pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "log.jsonl";
pub const MODEL_DIR: &str = "model";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub stage: String,
    pub key: String,
    pub inputs: Vec<String>,
}

/// Content key of a stage run.
pub fn stage_key(stage: &str, config: &Value, inputs: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update(config.to_string().as_bytes());
    for i in inputs {
        h.update([0u8]);
        h.update(i.as_bytes());
    }
    hex::encode(&h.finalize()[..16])
}

/// True when `dir` holds a finished run with this key.
pub fn is_complete(dir: &Path, key: &str) -> bool {
    read_json::<Stamp>(&dir.join(STAMP_FILE)).is_ok_and(|s| s.key == key)
}

fn prepare(dir: &Path) -> Result<()> {
    // A stale stamp must not survive a partial rerun.
    let stamp = dir.join(STAMP_FILE);
    if stamp.exists() {
        fs::remove_file(&stamp).map_err(|e| Error::io(format!("removing {}", stamp.display()), e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn finish(dir: &Path, stage: &str, key: &str, config: &Value, inputs: &[String]) -> Result<()> {
    write_json(&dir.join(CONFIG_FILE), config)?;
    write_json(
        &dir.join(STAMP_FILE),
        &Stamp {
            stage: stage.into(),
            key: key.into(),
            inputs: inputs.to_vec(),
        },
    )
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Json {
        context: "stage config".into(),
        source: e,
    })
}

/// A stage result and whether it was loaded from an earlier run.
#[derive(Clone, Debug)]
pub struct Staged<T> {
    pub value: T,
    pub key: String,
    pub reused: bool,
}

/// Generates (or reloads) a synthetic dataset.
pub fn gen_data_stage(spec: &SynthSpec, dir: &Path) -> Result<Staged<Dataset>> {
    let config = to_value(spec)?;
    let key = stage_key("gen-data", &config, &[]);
    if is_complete(dir, &key) {
        return Ok(Staged {
            value: load_dataset(dir)?,
            key,
            reused: true,
        });
    }
    prepare(dir)?;
    let ds = generate_synthetic(spec)?;
    save_dataset(&ds, dir)?;
    finish(dir, "gen-data", &key, &config, &[])?;
    Ok(Staged {
        value: ds,
        key,
        reused: false,
    })
}

fn read_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    BufReader::new(f)
        .lines()
        .map(|l| {
            let l = l.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            serde_json::from_str(&l).map_err(|e| Error::Json {
                context: path.display().to_string(),
                source: e,
            })
        })
        .collect()
}

/// A trained model and its per-epoch log.
#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub agent: Agent<f32>,
    pub log: Vec<EpochRecord>,
}

impl TrainedRun {
    pub fn val_curve(&self) -> Vec<(usize, f64)> {
        self.log.iter().filter_map(|r| r.avg.map(|a| (r.epoch, a))).collect()
    }
}

/// Loads a finished training stage from its directory.
pub fn load_run(dir: &Path) -> Result<TrainedRun> {
    Ok(TrainedRun {
        agent: Agent::load(&dir.join(MODEL_DIR))?,
        log: read_log(&dir.join(LOG_FILE))?,
    })
}

fn run_logged(
    dir: &Path,
    f: impl FnOnce(&mut dyn Write) -> Result<crate::train::TrainOutcome>,
) -> Result<TrainedRun> {
    let path = dir.join(LOG_FILE);
    let file = File::create(&path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let out = f(&mut w)?;
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    let step = out.log.last().map_or(0, |r| r.epoch as u64 + 1);
    out.agent.save(&dir.join(MODEL_DIR), step, json!({}))?;
    Ok(TrainedRun {
        agent: out.agent,
        log: out.log,
    })
}

/// The part of a configuration that affects pretraining.
fn pretrain_config(cfg: &TrainConfig) -> Value {
    json!({
        "arch": cfg.arch,
        "epochs": cfg.pretrain_epochs,
        "batch_size": cfg.batch_size,
        "lr": cfg.lr,
        "weight_decay": cfg.weight_decay,
        "val_every": cfg.val_every,
        "val_starts": cfg.val_starts,
        "seed": cfg.seed,
    })
}

/// One-view pretraining.
pub fn pretrain_stage(cfg: &TrainConfig, train_ds: &Dataset, val: Option<&Dataset>, dir: &Path) -> Result<Staged<TrainedRun>> {
    let config = pretrain_config(cfg);
    let inputs = vec![train_ds.content_id(), val.map_or_else(String::new, Dataset::content_id)];
    let key = stage_key("pretrain", &config, &inputs);
    if is_complete(dir, &key) {
        return Ok(Staged {
            value: load_run(dir)?,
            key,
            reused: true,
        });
    }
    prepare(dir)?;
    let run = run_logged(dir, |w| pretrain_one_view(cfg, TrainInputs { val, ..TrainInputs::new(train_ds) }, Some(w)))?;
    finish(dir, "pretrain", &key, &config, &inputs)?;
    Ok(Staged {
        value: run,
        key,
        reused: false,
    })
}

/// Sidekick scores and coverage for one dataset.
pub fn sidekick_stage(
    ds: &Dataset,
    model: &Agent<f32>,
    cfg: &SidekickConfig,
    dir: &Path,
) -> Result<Staged<SidekickCache>> {
    let config = to_value(cfg)?;
    let inputs = vec![ds.content_id(), model.params().checksum()];
    let key = stage_key("sidekick", &config, &inputs);
    if is_complete(dir, &key) {
        let cache = load_cache(dir)?;
        cache.verify(&inputs[0], &inputs[1])?;
        return Ok(Staged {
            value: cache,
            key,
            reused: true,
        });
    }
    prepare(dir)?;
    let cache = precompute_cache(ds, model, cfg)?;
    save_cache(&cache, dir)?;
    finish(dir, "sidekick", &key, &config, &inputs)?;
    Ok(Staged {
        value: cache,
        key,
        reused: false,
    })
}

/// Full training of one method from the pretrained model.
pub fn train_stage(cfg: &TrainConfig, inputs: TrainInputs<'_>, dir: &Path) -> Result<Staged<TrainedRun>> {
    let config = to_value(cfg)?;
    let mut keys = vec![
        inputs.train.content_id(),
        inputs.val.map_or_else(String::new, Dataset::content_id),
    ];
    keys.push(inputs.pretrained.map_or_else(String::new, |a| a.params().checksum()));
    for c in [inputs.sidekick, inputs.val_sidekick] {
        keys.push(c.map_or_else(String::new, |c| format!("{}:{}", c.dataset_id, c.model_checksum)));
    }
    let key = stage_key("train", &config, &keys);
    if is_complete(dir, &key) {
        return Ok(Staged {
            value: load_run(dir)?,
            key,
            reused: true,
        });
    }
    prepare(dir)?;
    let run = run_logged(dir, |w| train(cfg, inputs, Some(w)))?;
    finish(dir, "train", &key, &config, &keys)?;
    Ok(Staged {
        value: run,
        key,
        reused: false,
    })
}

/// Sizes and seed of the synthetic train/val/test splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub geometry: GridGeometry,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl DataSpec {
    pub fn desk() -> Self {
        DataSpec {
            geometry: GridGeometry::desk(),
            n_train: 200,
            n_val: 50,
            n_test: 50,
            seed: 7,
        }
    }

    /// Split specs; each split draws from its own seed.
    pub fn split(&self, split: Split) -> SynthSpec {
        let (n, offset) = match split {
            Split::Train => (self.n_train, 0),
            Split::Val => (self.n_val, 1),
            Split::Test => (self.n_test, 2),
        };
        SynthSpec::new(self.geometry, n, self.seed.wrapping_mul(3).wrapping_add(offset)).with_split(split)
    }
}

/// Several methods trained over several seeds and evaluated on one test
/// split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub data: DataSpec,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Shared settings; `method` and `seed` are set per run.
    pub config: TrainConfig,
    pub sidekick: SidekickConfig,
    /// Test start poses per sample; `None` evaluates all of them.
    pub eval_starts: Option<usize>,
}

impl StudySpec {
    /// The desk-scale ordering study: 4x8x1x16x16 grids, 200/50/50 samples,
    /// T = 4, 300 epochs, three seeds.
    pub fn desk() -> Self {
        StudySpec {
            data: DataSpec::desk(),
            methods: vec![Method::OneView, Method::RndActions, Method::Ltla, Method::OursRew],
            seeds: vec![0, 1, 2],
            config: TrainConfig::desk(),
            sidekick: SidekickConfig::desk(),
            eval_starts: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub report: EvalReport,
    /// Validation curves `(epoch, avg x1000)` per method, one per seed.
    pub curves: BTreeMap<String, Vec<Vec<(usize, f64)>>>,
}

impl StudyOutcome {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.report.methods.iter().find(|r| r.method == m.name())
    }
}

/// Output layout of a study under one root directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn data(&self, split: Split) -> PathBuf {
        self.root.join("data").join(split.to_string())
    }

    pub fn pretrain(&self, seed: u64) -> PathBuf {
        self.root.join(format!("seed-{seed}")).join("pretrain")
    }

    pub fn sidekick(&self, seed: u64, split: Split) -> PathBuf {
        self.root.join(format!("seed-{seed}")).join(format!("sidekick-{split}"))
    }

    pub fn run(&self, seed: u64, method: Method) -> PathBuf {
        self.root.join(format!("seed-{seed}")).join(method.name())
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

/// Runs (or resumes) a study. `progress` receives one line per finished
/// stage.
pub fn run_study(spec: &StudySpec, root: &Path, mut progress: impl FnMut(&str)) -> Result<StudyOutcome> {
    let layout = Layout::new(root);
    fs::create_dir_all(root).map_err(|e| Error::io(format!("creating {}", root.display()), e))?;
    write_json(&root.join("study.json"), spec)?;
    let mut note = |what: &str, reused: bool| progress(&format!("{what}{}", if reused { " (reused)" } else { "" }));

    let mut data = BTreeMap::new();
    for split in [Split::Train, Split::Val, Split::Test] {
        let s = gen_data_stage(&spec.data.split(split), &layout.data(split))?;
        note(&format!("data {split}"), s.reused);
        data.insert(split.to_string(), s.value);
    }
    let (train_ds, val_ds, test_ds) = (&data["train"], &data["val"], &data["test"]);

    let mut per_method: HashMap<Method, Vec<(u64, Vec<Vec<f64>>)>> = HashMap::new();
    let mut curves: BTreeMap<String, Vec<Vec<(usize, f64)>>> = BTreeMap::new();
    for &seed in &spec.seeds {
        let base = TrainConfig {
            seed,
            ..spec.config.clone()
        };
        let pre = pretrain_stage(&base, train_ds, Some(val_ds), &layout.pretrain(seed))?;
        note(&format!("seed {seed}: pretrain"), pre.reused);
        let pre = pre.value.agent;
        let needs = |f: fn(Method) -> bool| spec.methods.iter().any(|&m| f(m));
        let cache = if needs(Method::uses_sidekick) {
            let s = sidekick_stage(train_ds, &pre, &spec.sidekick, &layout.sidekick(seed, Split::Train))?;
            note(&format!("seed {seed}: sidekick train"), s.reused);
            Some(s.value)
        } else {
            None
        };
        // Full-observability methods are driven by the demonstration sidekick
        // at validation and test time too.
        let (val_cache, test_cache) = if needs(Method::full_observability_at_test) {
            let v = sidekick_stage(val_ds, &pre, &spec.sidekick, &layout.sidekick(seed, Split::Val))?;
            note(&format!("seed {seed}: sidekick val"), v.reused);
            let t = sidekick_stage(test_ds, &pre, &spec.sidekick, &layout.sidekick(seed, Split::Test))?;
            note(&format!("seed {seed}: sidekick test"), t.reused);
            (Some(v.value), Some(t.value))
        } else {
            (None, None)
        };
        for &method in &spec.methods {
            let cfg = TrainConfig { method, ..base.clone() };
            let inputs = TrainInputs {
                val: Some(val_ds),
                pretrained: Some(&pre),
                sidekick: cache.as_ref(),
                val_sidekick: val_cache.as_ref().filter(|_| method.full_observability_at_test()),
                ..TrainInputs::new(train_ds)
            };
            let run = train_stage(&cfg, inputs, &layout.run(seed, method))?;
            note(&format!("seed {seed}: {method}"), run.reused);
            let settings = EvalSettings {
                starts: spec.eval_starts,
                policy: method_eval_policy(method, seed, test_cache.as_ref())?,
                ..EvalSettings::new(cfg.effective_budget())
            };
            let errors = start_errors(&run.value.agent, test_ds, &settings)?;
            per_method.entry(method).or_default().push((seed, errors));
            curves.entry(method.name().to_string()).or_default().push(run.value.val_curve());
        }
    }
    let methods = spec
        .methods
        .iter()
        .map(|&m| {
            let mut r = MethodResult::from_seeds(m.name(), per_method.remove(&m).unwrap_or_default())?;
            r.full_observability = m.full_observability_at_test();
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::new(spec.data.geometry, Split::Test, spec.config.budget, methods)?;
    let out = StudyOutcome { report, curves };
    write_json(&layout.report(), &out)?;
    fs::write(root.join("report.txt"), out.report.to_table())
        .map_err(|e| Error::io(format!("writing report under {}", root.display()), e))?;
    Ok(out)
}

/// First epoch whose validation error is at or below `target`.
pub fn epochs_to_reach(curve: &[(usize, f64)], target: f64) -> Option<usize> {
    curve.iter().find(|&&(_, v)| v <= target).map(|&(e, _)| e + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ArchConfig;

    #[test]
    fn keys_depend_on_config_and_inputs() {
        let a = stage_key("x", &json!({"a": 1}), &["d".into()]);
        assert_eq!(a, stage_key("x", &json!({"a": 1}), &["d".into()]));
        assert_ne!(a, stage_key("x", &json!({"a": 2}), &["d".into()]));
        assert_ne!(a, stage_key("x", &json!({"a": 1}), &["e".into()]));
        assert_ne!(a, stage_key("y", &json!({"a": 1}), &["d".into()]));
    }

    #[test]
    fn reach_epochs() {
        let c = [(0, 5.0), (1, 4.0), (2, 3.0)];
        assert_eq!(epochs_to_reach(&c, 4.0), Some(2));
        assert_eq!(epochs_to_reach(&c, 1.0), None);
    }

    #[test]
    fn tiny_study_runs_and_resumes() {
        let spec = StudySpec {
            data: DataSpec {
                geometry: GridGeometry::new(2, 4, 1, 4, 4).unwrap(),
                n_train: 6,
                n_val: 2,
                n_test: 2,
                seed: 1,
            },
            methods: vec![Method::OneView, Method::Ltla, Method::OursRew, Method::DemoActions],
            seeds: vec![0],
            config: TrainConfig {
                arch: ArchConfig::tiny(),
                epochs: 2,
                pretrain_epochs: 2,
                batch_size: 4,
                ..TrainConfig::default()
            },
            sidekick: SidekickConfig::desk(),
            eval_starts: Some(3),
        };
        let dir = tempfile::tempdir().unwrap();
        let mut lines = Vec::new();
        let a = run_study(&spec, dir.path(), |l| lines.push(l.to_string())).unwrap();
        assert!(lines.iter().all(|l| !l.contains("reused")));
        assert_eq!(a.report.methods.len(), 4);
        assert!(a.method(Method::DemoActions).unwrap().full_observability);
        assert_eq!(a.curves["ltla"][0].len(), 2);
        let mut again = Vec::new();
        let b = run_study(&spec, dir.path(), |l| again.push(l.to_string())).unwrap();
        assert!(again.iter().all(|l| l.contains("reused")), "{again:?}");
        assert_eq!(a.report, b.report);
    }
}
