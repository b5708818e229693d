use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::Learner;
use super::losses::{
    compute_rewards, critic_loss, demo_cross_entropy, negative_entropy, policy_gradient_term, reached_scores,
    reconstruction_loss, returns_to_go, Baseline, RewardTrace,
};
use crate::agent::{BatchRollout, EpisodeGrads};
use crate::env::Viewgrid;
use crate::error::{Error, Result};
use crate::nn::Scalar;

/// How a batch's losses are weighted.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec {
    pub learner: Learner,
    pub lambda_r: f64,
    pub lambda_p: f64,
    pub entropy_weight: f64,
    pub reward_scale: f64,
    /// Forced steps are demonstrations: supervise them with cross-entropy
    /// instead of the policy gradient.
    pub demo_supervision: bool,
}

/// Frozen per-action learning targets.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTarget {
    pub action: usize,
    /// Policy-gradient advantage; `None` when the step is not trained by
    /// the policy gradient.
    pub advantage: Option<f64>,
    /// Demonstrated action for cross-entropy supervision.
    pub demo: Option<usize>,
    pub ret: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    /// `[B][T-1]`.
    pub steps: Vec<Vec<StepTarget>>,
    pub rewards: Vec<RewardTrace>,
    pub spec: ObjectiveSpec,
    pub train_critic: bool,
}

impl Targets {
    /// Batch-mean return-to-go at each step.
    pub fn mean_returns(&self) -> Vec<f64> {
        let n = self.steps.len() as f64;
        let t_len = self.steps.first().map_or(0, Vec::len);
        (0..t_len)
            .map(|t| self.steps.iter().map(|s| s[t].ret).sum::<f64>() / n)
            .collect()
    }

    /// Moves the baseline toward this batch's returns.
    pub fn update_baseline(&self, baseline: &mut Baseline) {
        for (t, r) in self.mean_returns().into_iter().enumerate() {
            baseline.update(t, r);
        }
    }
}

/// Batch-mean loss components.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// Reconstruction loss summed over steps.
    pub rec: f64,
    /// Final-step mean per-pixel error.
    pub final_mse: f64,
    pub policy: f64,
    pub demo: f64,
    pub neg_entropy: f64,
    pub critic: f64,
    pub mean_return: f64,
    pub total: f64,
}

/// Rewards, returns and advantages for a rollout. `reward_maps[b]` is the
/// visit-reward map of episode `b` (`None` for no sidekick rewards). The
/// baseline is read, not updated.
pub fn build_targets<F: Scalar>(
    rollout: &BatchRollout<F>,
    grids: &[&Viewgrid],
    reward_maps: &[Option<&[f32]>],
    spec: &ObjectiveSpec,
    baseline: &Baseline,
) -> Result<Targets> {
    let b = rollout.batch();
    if grids.len() != b || reward_maps.len() != b {
        return Err(Error::shape("batch targets", b, grids.len()));
    }
    let t_act = rollout.budget - 1;
    if baseline.values.len() < t_act {
        return Err(Error::shape("baseline steps", t_act, baseline.values.len()));
    }
    let critic = spec.learner == Learner::ActorCritic;
    if critic && rollout.values.len() != t_act {
        return Err(Error::InvalidArgument("actor-critic needs a critic".into()));
    }
    let fin = rollout.final_decoded();
    let mut steps = Vec::with_capacity(b);
    let mut rewards = Vec::with_capacity(b);
    for i in 0..b {
        let start = rollout.poses[i][0];
        let (final_rec, _) = reconstruction_loss(fin.row(i), grids[i], start.azim)?;
        let n_azim = grids[i].geometry().n_azim;
        let scores = match reward_maps[i] {
            Some(m) => reached_scores(&rollout.poses[i], m, n_azim),
            None => vec![0.0; t_act],
        };
        let trace = compute_rewards(&scores, final_rec, spec.reward_scale);
        let rets = returns_to_go(&trace.rewards);
        let mut ep = Vec::with_capacity(t_act);
        for (t, &ret) in rets.iter().enumerate() {
            let action = rollout.actions[i][t];
            let forced = rollout.forced[i][t];
            let (advantage, demo) = match spec.learner {
                Learner::None => (None, None),
                _ if forced && spec.demo_supervision => (None, Some(action)),
                Learner::Reinforce => (Some(ret - baseline.get(t)), None),
                Learner::ActorCritic => (Some(ret - rollout.values[t][[i, 0]].f64()), None),
            };
            ep.push(StepTarget {
                action,
                advantage,
                demo,
                ret,
            });
        }
        steps.push(ep);
        rewards.push(trace);
    }
    Ok(Targets {
        steps,
        rewards,
        spec: spec.clone(),
        train_critic: critic,
    })
}

/// Evaluates the batch-mean surrogate objective with frozen targets and
/// its gradients with respect to every head output.
///
/// ```text
/// J = 1/n sum_b [ lambda_r sum_t L_rec^t
///               + lambda_p sum_t ( -A_t log pi(a_t) | -log pi(demo_t) )
///               + beta sum_t sum_a pi log pi
///               + sum_t (v_t - R_t)^2 ]
/// ```
pub fn surrogate<F: Scalar>(
    rollout: &BatchRollout<F>,
    grids: &[&Viewgrid],
    targets: &Targets,
) -> Result<(LossParts, EpisodeGrads<F>)> {
    let b = rollout.batch();
    let n = b as f64;
    let budget = rollout.budget;
    let spec = &targets.spec;
    let mut parts = LossParts::default();
    let mut up = EpisodeGrads::empty(budget);
    for t in 0..budget {
        let Some(dec) = &rollout.decoded[t] else { continue };
        let mut grad = Array2::<F>::zeros(dec.raw_dim());
        for i in 0..b {
            let start = rollout.poses[i][0].azim;
            let (l, g) = reconstruction_loss(dec.row(i), grids[i], start)?;
            parts.rec += l / n;
            if t + 1 == budget {
                parts.final_mse += l / grids[i].geometry().n_views() as f64 / n;
            }
            grad.row_mut(i).assign(&(g * F::of(spec.lambda_r / n)));
        }
        if spec.lambda_r > 0.0 {
            up.decoded[t] = Some(grad);
        }
    }
    let policy_on = spec.learner != Learner::None && spec.lambda_p > 0.0;
    for t in 0..budget.saturating_sub(1) {
        let logits = &rollout.logits[t];
        let mut gl = Array2::<F>::zeros(logits.raw_dim());
        let mut gv = targets.train_critic.then(|| Array2::<F>::zeros((b, 1)));
        let mut any = false;
        for i in 0..b {
            let st = &targets.steps[i][t];
            let z = logits.row(i);
            let mut acc = vec![0.0; z.len()];
            if let (true, Some(a)) = (policy_on, st.advantage) {
                let (l, g) = policy_gradient_term(z, st.action, a);
                parts.policy += l / n;
                acc.iter_mut().zip(&g).for_each(|(x, y)| *x += spec.lambda_p * y);
                any = true;
            }
            if let (true, Some(d)) = (policy_on, st.demo) {
                let (l, g) = demo_cross_entropy(z, d);
                parts.demo += l / n;
                acc.iter_mut().zip(&g).for_each(|(x, y)| *x += spec.lambda_p * y);
                any = true;
            }
            if policy_on && spec.entropy_weight > 0.0 {
                let (h, g) = negative_entropy(z);
                parts.neg_entropy += h / n;
                acc.iter_mut().zip(&g).for_each(|(x, y)| *x += spec.entropy_weight * y);
                any = true;
            }
            for (dst, v) in gl.row_mut(i).iter_mut().zip(&acc) {
                *dst = F::of(v / n);
            }
            if let Some(gv) = gv.as_mut() {
                let (l, d) = critic_loss(rollout.values[t][[i, 0]].f64(), st.ret);
                parts.critic += l / n;
                gv[[i, 0]] = F::of(d / n);
            }
        }
        if any {
            up.logits[t] = Some(gl);
        }
        up.value[t] = gv;
    }
    parts.mean_return = targets
        .steps
        .iter()
        .filter_map(|s| s.first().map(|x| x.ret))
        .sum::<f64>()
        / n;
    parts.total = spec.lambda_r * parts.rec
        + spec.lambda_p * (parts.policy + parts.demo)
        + if policy_on { spec.entropy_weight * parts.neg_entropy } else { 0.0 }
        + parts.critic;
    Ok((parts, up))
}

/// Scalar version of [`surrogate`] for finite-difference checks.
pub fn surrogate_value<F: Scalar>(rollout: &BatchRollout<F>, grids: &[&Viewgrid], targets: &Targets) -> Result<f64> {
    Ok(surrogate(rollout, grids, targets)?.0.total)
}

