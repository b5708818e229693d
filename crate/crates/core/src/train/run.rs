use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Learner, Method, TrainConfig};
use super::losses::Baseline;
use super::objective::{build_targets, surrogate, LossParts, ObjectiveSpec};
use crate::agent::{rollout_batch, ActionMode, ActionSource, Agent, RolloutOptions};
use crate::env::{Dataset, Pose, Viewgrid};
use crate::error::{Error, Result};
use crate::eval::{start_errors, summarize, EvalPolicy, EvalSettings};
use crate::nn::{Adam, AdamConfig, Gradients, Group, GroupMask};
use crate::rng;
use crate::sidekick::{demo_trajectory, SidekickCache};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    /// Validation mean error x1000, on validation epochs.
    pub avg: Option<f64>,
    pub adv: Option<f64>,
    pub reward_scale: f64,
    pub t_sup: usize,
    pub wall_time: f64,
    /// Batch-mean training losses.
    pub train: LossParts,
    /// Parameter checksum at the end of the epoch.
    pub checksum: String,
}

/// Data a training run draws on.
#[derive(Clone, Copy, Debug)]
pub struct TrainInputs<'a> {
    pub train: &'a Dataset,
    pub val: Option<&'a Dataset>,
    /// The one-glimpse model every full run starts from.
    pub pretrained: Option<&'a Agent<f32>>,
    /// Sidekick outputs for `train`.
    pub sidekick: Option<&'a SidekickCache>,
    /// Sidekick outputs for `val` (only `demo-actions` validation needs it).
    pub val_sidekick: Option<&'a SidekickCache>,
}

impl<'a> TrainInputs<'a> {
    pub fn new(train: &'a Dataset) -> Self {
        TrainInputs {
            train,
            val: None,
            pretrained: None,
            sidekick: None,
            val_sidekick: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub agent: Agent<f32>,
    pub log: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// `(epoch, avg)` for every validated epoch.
    pub fn val_curve(&self) -> Vec<(usize, f64)> {
        self.log.iter().filter_map(|r| r.avg.map(|a| (r.epoch, a))).collect()
    }
}

/// How actions are produced at evaluation time for a method.
pub fn method_eval_policy(method: Method, seed: u64, cache: Option<&SidekickCache>) -> Result<EvalPolicy<'_>> {
    Ok(match method {
        Method::RndActions => EvalPolicy::Random { seed },
        Method::DemoActions => EvalPolicy::Demo(cache.ok_or_else(|| Error::MissingDependency {
            stage: "sidekick".into(),
            hint: "demo-actions needs a coverage cache for the evaluated split".into(),
        })?),
        _ => EvalPolicy::Argmax,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum DemoPrefix {
    None,
    /// The scheduled `t_sup` leading steps.
    Scheduled,
    /// Every step.
    Full,
}

struct Session<'a> {
    cfg: &'a TrainConfig,
    budget: usize,
    learner: Learner,
    active: GroupMask,
    mode: ActionMode,
    demo: DemoPrefix,
    reward_maps: Vec<Option<Vec<f32>>>,
    inputs: TrainInputs<'a>,
    eval_method: Method,
}

fn write_record(sink: &mut Option<&mut dyn Write>, rec: &EpochRecord) -> Result<()> {
    if let Some(w) = sink {
        let line = serde_json::to_string(rec).map_err(|e| Error::Json {
            context: "training log".into(),
            source: e,
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io("writing training log", e))?;
    }
    Ok(())
}

impl Session<'_> {
    fn run(&self, agent: &mut Agent<f32>, mut sink: Option<&mut dyn Write>) -> Result<Vec<EpochRecord>> {
        let cfg = self.cfg;
        let ds = self.inputs.train;
        if ds.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let g = *agent.geometry();
        if *ds.geometry() != g {
            return Err(Error::GeometryMismatch {
                expected: g.to_string(),
                found: ds.geometry().to_string(),
            });
        }
        let mut adam = Adam::new(AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        });
        let mut baseline = Baseline::new(cfg.baseline_decay, self.budget.saturating_sub(1));
        let mut env_rng = rng::stream(cfg.seed, "train/env");
        let mut act_rng = rng::stream(cfg.seed, "train/actions");
        let clock = Instant::now();
        let mut log = Vec::new();
        let epochs = if self.budget == 1 && self.eval_method == Method::OneView {
            cfg.pretrain_epochs
        } else {
            cfg.epochs
        };
        for epoch in 0..epochs {
            let t_sup = match self.demo {
                DemoPrefix::None => 0,
                DemoPrefix::Scheduled => cfg.t_sup(epoch).min(self.budget.saturating_sub(1)),
                DemoPrefix::Full => self.budget.saturating_sub(1),
            };
            let spec = ObjectiveSpec {
                learner: self.learner,
                lambda_r: cfg.lambda_r,
                lambda_p: cfg.lambda_p,
                entropy_weight: cfg.entropy_weight,
                reward_scale: cfg.reward_scale(epoch),
                demo_supervision: self.demo == DemoPrefix::Scheduled,
            };
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut env_rng);
            let starts: Vec<Pose> = order
                .iter()
                .map(|_| Pose::from_index(env_rng.gen_range(0..g.n_views()), &g))
                .collect();
            let mut sum = LossParts::default();
            let mut batches = 0.0;
            for (idx, st) in order.chunks(cfg.batch_size).zip(starts.chunks(cfg.batch_size)) {
                let grids: Vec<&Viewgrid> = idx.iter().map(|&i| &ds.samples()[i]).collect();
                let forced = if t_sup > 0 {
                    let cache = self.inputs.sidekick.expect("checked when the session was built");
                    let mut f = Vec::with_capacity(idx.len());
                    for (&i, &p) in idx.iter().zip(st) {
                        let mut a = demo_trajectory(cache.coverage(i)?, p, self.budget)?.actions;
                        a.truncate(t_sup);
                        f.push(a);
                    }
                    f
                } else {
                    Vec::new()
                };
                let source = ActionSource::with_prefixes(self.mode, forced);
                let r = rollout_batch(agent, &grids, st, self.budget, &source, &mut act_rng, RolloutOptions::training())?;
                let maps: Vec<Option<&[f32]>> = idx.iter().map(|&i| self.reward_maps[i].as_deref()).collect();
                let targets = build_targets(&r, &grids, &maps, &spec, &baseline)?;
                let (parts, up) = surrogate(&r, &grids, &targets)?;
                let mut grads = Gradients::new(agent.params(), self.active);
                r.backward(agent, &up, &mut grads)?;
                agent.params_mut().accumulate(&grads, 1.0);
                adam.step_groups(agent.params_mut(), self.active)?;
                if self.learner == Learner::Reinforce {
                    targets.update_baseline(&mut baseline);
                }
                add_parts(&mut sum, &parts);
                batches += 1.0;
            }
            scale_parts(&mut sum, 1.0 / batches);
            let validate = (epoch + 1) % cfg.val_every == 0 || epoch + 1 == epochs;
            let (avg, adv) = match (self.inputs.val, validate) {
                (Some(val), true) => {
                    let settings = EvalSettings {
                        starts: cfg.val_starts,
                        policy: method_eval_policy(self.eval_method, cfg.seed, self.inputs.val_sidekick)?,
                        ..EvalSettings::new(self.budget)
                    };
                    let (a, d) = summarize(&start_errors(agent, val, &settings)?);
                    (Some(a * 1000.0), Some(d * 1000.0))
                }
                _ => (None, None),
            };
            let rec = EpochRecord {
                epoch,
                split: "val".into(),
                avg,
                adv,
                reward_scale: spec.reward_scale,
                t_sup,
                wall_time: clock.elapsed().as_secs_f64(),
                train: sum,
                checksum: agent.params().checksum(),
            };
            log::debug!("epoch {epoch}: loss {:.5} val {:?}", rec.train.total, rec.avg);
            write_record(&mut sink, &rec)?;
            log.push(rec);
        }
        Ok(log)
    }
}

fn add_parts(acc: &mut LossParts, p: &LossParts) {
    acc.rec += p.rec;
    acc.final_mse += p.final_mse;
    acc.policy += p.policy;
    acc.demo += p.demo;
    acc.neg_entropy += p.neg_entropy;
    acc.critic += p.critic;
    acc.mean_return += p.mean_return;
    acc.total += p.total;
}

fn scale_parts(acc: &mut LossParts, s: f64) {
    for v in [
        &mut acc.rec,
        &mut acc.final_mse,
        &mut acc.policy,
        &mut acc.demo,
        &mut acc.neg_entropy,
        &mut acc.critic,
        &mut acc.mean_return,
        &mut acc.total,
    ] {
        *v *= s;
    }
}

/// Trains Sense, Fuse, Aggregate and Decode to complete the grid from one
/// glimpse, from a random start per sample and epoch. The result powers
/// both sidekicks and seeds every full run.
pub fn pretrain_one_view(
    cfg: &TrainConfig,
    inputs: TrainInputs<'_>,
    sink: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut agent = Agent::new(*inputs.train.geometry(), cfg.arch.clone(), cfg.seed)?;
    let session = Session {
        cfg,
        budget: 1,
        learner: Learner::None,
        active: GroupMask::only(&[Group::Sense, Group::Fuse, Group::Aggregate, Group::Decode]),
        mode: ActionMode::Argmax,
        demo: DemoPrefix::None,
        reward_maps: vec![None; inputs.train.len()],
        inputs,
        eval_method: Method::OneView,
    };
    let log = session.run(&mut agent, sink)?;
    Ok(TrainOutcome { agent, log })
}

/// Visit-reward maps for the training samples.
fn reward_maps(cfg: &TrainConfig, inputs: &TrainInputs<'_>) -> Result<Vec<Option<Vec<f32>>>> {
    let ds = inputs.train;
    let n = ds.geometry().n_views();
    Ok(match cfg.method {
        Method::RndRewards => (0..ds.len())
            .map(|i| {
                let mut r = rng::stream(cfg.seed, &format!("rnd-rewards/{i}"));
                Some((0..n).map(|_| r.gen::<f32>()).collect())
            })
            .collect(),
        m if m.uses_scores() => {
            let cache = inputs.sidekick.expect("checked by caller");
            (0..ds.len())
                .map(|i| cache.scores(i).map(|s| Some(s.reward_map())))
                .collect::<Result<_>>()?
        }
        _ => vec![None; ds.len()],
    })
}

/// Runs the configured method starting from the pretrained one-view model.
/// Sense and Fuse stay frozen when configured; Aggregate, Decode and Act
/// are warm-started.
pub fn train(cfg: &TrainConfig, inputs: TrainInputs<'_>, sink: Option<&mut dyn Write>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pre = inputs.pretrained.ok_or_else(|| Error::MissingDependency {
        stage: "pretrain".into(),
        hint: "run `sidekick pretrain` first".into(),
    })?;
    if *pre.geometry() != *inputs.train.geometry() {
        return Err(Error::GeometryMismatch {
            expected: inputs.train.geometry().to_string(),
            found: pre.geometry().to_string(),
        });
    }
    let method = cfg.method;
    if method.uses_sidekick() {
        let cache = inputs.sidekick.ok_or_else(|| Error::MissingDependency {
            stage: "sidekick".into(),
            hint: format!("{method} needs a sidekick cache; run `sidekick sidekick` first"),
        })?;
        cache.verify(&inputs.train.content_id(), &pre.params().checksum())?;
    }
    let mut agent = pre.clone();
    if method == Method::OneView {
        return Ok(TrainOutcome { agent, log: Vec::new() });
    }
    if let Some(kind) = method.critic() {
        agent.attach_critic(kind)?;
    }
    let mut frozen = GroupMask::none();
    if cfg.freeze_sense_fuse {
        frozen = frozen.with(Group::Sense).with(Group::Fuse);
    }
    agent.params_mut().set_frozen(frozen);
    let learner = method.learner();
    let mut active = GroupMask::all();
    if cfg.lambda_r == 0.0 {
        active = active.without(Group::Decode);
    }
    if learner == Learner::None || cfg.lambda_p == 0.0 {
        active = active.without(Group::Act);
    }
    if learner != Learner::ActorCritic {
        active = active.without(Group::Critic);
    }
    let session = Session {
        cfg,
        budget: cfg.budget,
        learner,
        active,
        mode: if method == Method::RndActions {
            ActionMode::Random
        } else {
            ActionMode::Sample
        },
        demo: match method {
            Method::OursDemo | Method::OursDemoAc => DemoPrefix::Scheduled,
            Method::DemoActions => DemoPrefix::Full,
            _ => DemoPrefix::None,
        },
        reward_maps: reward_maps(cfg, &inputs)?,
        inputs,
        eval_method: method,
    };
    let log = session.run(&mut agent, sink)?;
    Ok(TrainOutcome { agent, log })
}
