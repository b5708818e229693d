use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, WeightedIndex};

use super::episode::EpisodeLog;
use super::model::{Agent, EpisodeGrads, StepCache};
use crate::env::{action_space, apply_motion, observe, Pose, Proprioception, Viewgrid};
use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Gradients, Scalar, SeqCache};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionMode {
    /// Sample from the agent's policy.
    Sample,
    /// Take the most likely action (first on ties).
    Argmax,
    /// Uniform over the action space, ignoring the policy.
    Random,
}

/// Where actions come from. Each episode may carry a forced prefix of
/// action indices (a script, a demonstration or a sidekick's choices); once
/// it runs out, `mode` takes over.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSource {
    pub mode: ActionMode,
    pub forced: Vec<Vec<usize>>,
}

impl ActionSource {
    pub fn new(mode: ActionMode) -> Self {
        ActionSource {
            mode,
            forced: Vec::new(),
        }
    }

    pub fn sample() -> Self {
        Self::new(ActionMode::Sample)
    }

    pub fn argmax() -> Self {
        Self::new(ActionMode::Argmax)
    }

    pub fn random() -> Self {
        Self::new(ActionMode::Random)
    }

    /// A single fully scripted episode.
    pub fn scripted(actions: Vec<usize>) -> Self {
        ActionSource {
            mode: ActionMode::Argmax,
            forced: vec![actions],
        }
    }

    /// Per-episode forced prefixes, then `mode`.
    pub fn with_prefixes(mode: ActionMode, forced: Vec<Vec<usize>>) -> Self {
        ActionSource { mode, forced }
    }

    fn forced(&self, episode: usize, t: usize) -> Option<usize> {
        self.forced.get(episode).and_then(|f| f.get(t)).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RolloutOptions {
    /// Keep activations for [`BatchRollout::backward`].
    pub keep_cache: bool,
    /// Decode at every step, not only the last.
    pub decode_all: bool,
}

impl RolloutOptions {
    pub fn training() -> Self {
        RolloutOptions {
            keep_cache: true,
            decode_all: true,
        }
    }

    pub fn inference() -> Self {
        RolloutOptions {
            keep_cache: false,
            decode_all: false,
        }
    }
}

/// A batch of episodes unrolled in lockstep.
#[derive(Clone, Debug)]
pub struct BatchRollout<F> {
    pub budget: usize,
    /// `[B][T]` visited poses, start first.
    pub poses: Vec<Vec<Pose>>,
    pub props: Vec<Vec<Proprioception>>,
    /// `[T]` decoded grids `[B, grid_len]`; `None` where not decoded.
    pub decoded: Vec<Option<Array2<F>>>,
    /// `[T]` beliefs `[B, hidden]`.
    pub beliefs: Vec<Array2<F>>,
    /// `[T-1]` action logits `[B, 15]`.
    pub logits: Vec<Array2<F>>,
    /// `[T-1]` critic values `[B, 1]`, empty without a critic.
    pub values: Vec<Array2<F>>,
    /// `[B][T-1]` chosen action indices.
    pub actions: Vec<Vec<usize>>,
    /// `[B][T-1]` whether the action came from the forced prefix.
    pub forced: Vec<Vec<bool>>,
    caches: Vec<StepCache<F>>,
    grid_cache: Option<SeqCache<F>>,
}

impl<F: Scalar> BatchRollout<F> {
    pub fn batch(&self) -> usize {
        self.poses.len()
    }

    pub fn starts(&self) -> Vec<Pose> {
        self.poses.iter().map(|p| p[0]).collect()
    }

    pub fn has_cache(&self) -> bool {
        !self.caches.is_empty()
    }

    /// Backpropagates upstream gradients through the unrolled batch.
    pub fn backward(&self, agent: &Agent<F>, up: &EpisodeGrads<F>, g: &mut Gradients<F>) -> Result<()> {
        if !self.has_cache() {
            return Err(Error::InvalidArgument("rollout ran without keep_cache".into()));
        }
        agent.backward(&self.caches, self.grid_cache.as_ref(), up, g)
    }

    /// Final decoded grid for every episode.
    pub fn final_decoded(&self) -> &Array2<F> {
        self.decoded[self.budget - 1].as_ref().expect("last step is always decoded")
    }

    /// Extracts episode `b` as a standalone log.
    pub fn episode(&self, b: usize, grid: &Viewgrid) -> EpisodeLog {
        let g = grid.geometry();
        let f32row = |a: &Array2<F>| a.row(b).iter().map(|v| v.f64() as f32).collect::<Vec<f32>>();
        EpisodeLog {
            geometry: *g,
            sample_id: grid.id().to_string(),
            budget: self.budget,
            poses: self.poses[b].clone(),
            props: self.props[b].clone(),
            actions: self.actions[b].clone(),
            forced: self.forced[b].clone(),
            views: self.poses[b].iter().map(|&p| grid.view(p).to_vec()).collect(),
            policies: self.logits.iter().map(|l| f32row(&softmax_rows(l.view()))).collect(),
            decoded: self.decoded.iter().map(|d| d.as_ref().map(f32row).unwrap_or_default()).collect(),
            beliefs: self.beliefs.iter().map(f32row).collect(),
            values: self.values.iter().map(|v| v[[b, 0]].f64() as f32).collect(),
        }
    }
}

fn argmax<F: Scalar>(row: ndarray::ArrayView1<F>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Unrolls the agent on a batch of grids for `budget` glimpses each.
///
/// Exactly `budget - 1` motions are executed per episode. The policy head
/// is evaluated at every decision step, including forced ones, so the
/// logits are available for supervision.
pub fn rollout_batch<F: Scalar, R: Rng>(
    agent: &Agent<F>,
    grids: &[&Viewgrid],
    starts: &[Pose],
    budget: usize,
    source: &ActionSource,
    rng: &mut R,
    opts: RolloutOptions,
) -> Result<BatchRollout<F>> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget T must be at least 1".into()));
    }
    if grids.len() != starts.len() || grids.is_empty() {
        return Err(Error::shape("rollout batch", grids.len(), starts.len()));
    }
    let geom = *agent.geometry();
    for grid in grids {
        if *grid.geometry() != geom {
            return Err(Error::GeometryMismatch {
                expected: geom.to_string(),
                found: grid.geometry().to_string(),
            });
        }
    }
    let actions_all = action_space(&geom);
    let b = grids.len();
    let vl = geom.view_len();
    let grid_code = agent.critic_grid_code(grids)?;
    let mut out = BatchRollout {
        budget,
        poses: starts.iter().map(|&s| vec![s]).collect(),
        props: vec![Vec::with_capacity(budget); b],
        decoded: Vec::with_capacity(budget),
        beliefs: Vec::with_capacity(budget),
        logits: Vec::new(),
        values: Vec::new(),
        actions: vec![Vec::new(); b],
        forced: vec![Vec::new(); b],
        caches: Vec::new(),
        grid_cache: None,
    };
    let mut h = Array2::<F>::zeros((b, agent.hidden()));
    let mut prev: Vec<Option<Pose>> = vec![None; b];
    for t in 0..budget {
        let mut views = Array2::<F>::zeros((b, vl));
        for i in 0..b {
            let pose = out.poses[i][t];
            let (view, prop) = observe(grids[i], pose, prev[i])?;
            for (d, &v) in views.row_mut(i).iter_mut().zip(view) {
                *d = F::of(f64::from(v));
            }
            out.props[i].push(prop);
        }
        let props: Vec<Proprioception> = out.props.iter().map(|p| p[t]).collect();
        let prop_rows = agent.prop_rows(&props);
        let deciding = t + 1 < budget;
        let extra = grid_code.as_ref().map(|(code, _)| {
            let cur: Vec<Pose> = out.poses.iter().map(|p| p[t]).collect();
            agent.critic_extra(&cur, code)
        });
        let want_decode = opts.decode_all || !deciding;
        let (step, cache) = agent.step(
            h.view(),
            views.view(),
            prop_rows.view(),
            want_decode,
            deciding,
            extra.as_ref().map(|e| e.view()),
        )?;
        h = step.belief.clone();
        out.beliefs.push(step.belief);
        out.decoded.push(step.decoded);
        if opts.keep_cache {
            out.caches.push(cache);
        }
        if !deciding {
            break;
        }
        let logits = step.logits.expect("act head evaluated");
        let probs = softmax_rows(logits.view());
        for i in 0..b {
            let (a, forced) = match source.forced(i, t) {
                Some(a) if a < actions_all.len() => (a, true),
                Some(a) => return Err(Error::InvalidArgument(format!("forced action {a} out of range"))),
                None => {
                    let a = match source.mode {
                        ActionMode::Argmax => argmax(probs.row(i)),
                        ActionMode::Random => rng.gen_range(0..actions_all.len()),
                        ActionMode::Sample => {
                            let w: Vec<f64> = probs.row(i).iter().map(|p| p.f64()).collect();
                            WeightedIndex::new(&w)
                                .map_err(|e| Error::NonFinite(format!("policy: {e}")))?
                                .sample(rng)
                        }
                    };
                    (a, false)
                }
            };
            let cur = out.poses[i][t];
            prev[i] = Some(cur);
            out.poses[i].push(apply_motion(cur, actions_all[a], &geom));
            out.actions[i].push(a);
            out.forced[i].push(forced);
        }
        out.logits.push(logits);
        if let Some(v) = step.value {
            out.values.push(v);
        }
    }
    if opts.keep_cache {
        out.grid_cache = grid_code.map(|(_, c)| c);
    }
    debug_assert_eq!(out.beliefs.len(), budget);
    debug_assert!(out.decoded.last().is_some_and(|d| d.as_ref().is_some_and(|d| d.len_of(Axis(0)) == b)));
    Ok(out)
}

/// Unrolls one episode and returns its log.
pub fn rollout<F: Scalar, R: Rng>(
    agent: &Agent<F>,
    grid: &Viewgrid,
    start: Pose,
    budget: usize,
    source: &ActionSource,
    rng: &mut R,
) -> Result<EpisodeLog> {
    let opts = RolloutOptions {
        keep_cache: false,
        decode_all: true,
    };
    let r = rollout_batch(agent, &[grid], &[start], budget, source, rng, opts)?;
    Ok(r.episode(0, grid))
}
