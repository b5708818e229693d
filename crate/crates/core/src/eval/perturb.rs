use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, EpisodeLog};
use crate::env::{roll_azimuth_flat, GridGeometry, Proprioception};
use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Scalar};

/// Settings for the belief perturbation search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub max_iters: usize,
    /// Upper bound on `|delta| / |a|`.
    pub constraint: f64,
    /// Norm of the random starting perturbation relative to `|a|`. The
    /// objective has zero gradient at `delta = 0`, so the ascent needs a
    /// nudge to get going.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            lr: 1e-4,
            weight_decay: 0.1,
            momentum: 0.9,
            max_iters: 200,
            constraint: 0.75,
            init_scale: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub delta: Vec<f64>,
    /// `sum_k (pi_k(a) - pi_k(a + delta))^2` at the returned delta.
    pub objective: f64,
    /// `|delta| / |a|`.
    pub ratio: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting point first.
    pub trace: Vec<f64>,
}

impl Perturbation {
    pub fn is_zero(&self) -> bool {
        self.delta.iter().all(|&v| v == 0.0)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Objective<'a> {
    agent: &'a Agent<f64>,
    belief: Array1<f64>,
    prop: Array2<f64>,
    p0: Array1<f64>,
}

impl Objective<'_> {
    fn shifted(&self, delta: &[f64]) -> Array2<f64> {
        let mut b = self.belief.clone();
        b.iter_mut().zip(delta).for_each(|(x, d)| *x += d);
        b.insert_axis(Axis(0))
    }

    fn value(&self, delta: &[f64]) -> Result<f64> {
        let logits = self.agent.policy_logits(self.shifted(delta).view(), self.prop.view())?;
        let p = softmax_rows(logits.view());
        let j: f64 = p.row(0).iter().zip(&self.p0).map(|(a, b)| (b - a).powi(2)).sum();
        if !j.is_finite() {
            return Err(Error::NonFinite("perturbation objective".into()));
        }
        Ok(j)
    }

    /// Objective and its gradient with respect to delta.
    fn grad(&self, delta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p0 = &self.p0;
        let (_, dx) = self.agent.policy_logits_grad(self.shifted(delta).view(), self.prop.view(), |z| {
            let p = softmax_rows(z.view());
            let p = p.row(0);
            let dp: Vec<f64> = p.iter().zip(p0).map(|(a, b)| 2.0 * (a - b)).collect();
            let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
            Array2::from_shape_fn(z.raw_dim(), |(_, k)| p[k] * (dp[k] - dot))
        })?;
        Ok((self.value(delta)?, dx.row(0).to_vec()))
    }
}

/// Searches for the belief change that most alters the action distribution
/// while keeping `|delta| <= C |a|`.
///
/// Momentum ascent with monotone accept: a step that lowers the objective is
/// rejected, the velocity reset and the step size halved. The search stops
/// before the norm ratio would cross the constraint and returns the last
/// feasible iterate. If the objective never becomes positive the zero
/// perturbation is returned.
pub fn belief_perturbation<F: Scalar>(
    agent: &Agent<F>,
    belief: &[F],
    prop: &Proprioception,
    cfg: &PerturbConfig,
) -> Result<Perturbation> {
    if belief.len() != agent.hidden() {
        return Err(Error::shape("belief", agent.hidden(), belief.len()));
    }
    let agent64 = agent.cast::<f64>();
    let a: Vec<f64> = belief.iter().map(|v| v.f64()).collect();
    let prop_row = agent64.prop_rows(std::slice::from_ref(prop));
    let belief = Array1::from(a.clone());
    let logits = agent64.policy_logits(belief.view().insert_axis(Axis(0)), prop_row.view())?;
    let p0 = softmax_rows(logits.view()).row(0).to_owned();
    let obj = Objective {
        agent: &agent64,
        belief,
        prop: prop_row,
        p0,
    };
    let zero = |iterations| Perturbation {
        delta: vec![0.0; a.len()],
        objective: 0.0,
        ratio: 0.0,
        iterations,
        trace: vec![0.0],
    };
    let a_norm = norm(&a);
    let limit = cfg.constraint * a_norm;
    if a_norm == 0.0 || cfg.init_scale >= cfg.constraint {
        return Ok(zero(0));
    }

    let mut rng = crate::rng::stream(cfg.seed, "perturb");
    let mut delta: Vec<f64> = (0..a.len()).map(|_| rng.sample(StandardNormal)).collect();
    let scale = cfg.init_scale * a_norm / norm(&delta).max(f64::MIN_POSITIVE);
    delta.iter_mut().for_each(|d| *d *= scale);

    let (mut j, mut grad) = obj.grad(&delta)?;
    let mut trace = vec![j];
    let mut velocity = vec![0.0; a.len()];
    let mut lr = cfg.lr;
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        // Descent on -J with L2 decay on delta.
        let next_v: Vec<f64> = velocity
            .iter()
            .zip(&grad)
            .zip(&delta)
            .map(|((v, g), d)| cfg.momentum * v - g + cfg.weight_decay * d)
            .collect();
        let cand: Vec<f64> = delta.iter().zip(&next_v).map(|(d, v)| d - lr * v).collect();
        if norm(&cand) > limit {
            break;
        }
        let (cj, cg) = obj.grad(&cand)?;
        if cj >= j {
            delta = cand;
            velocity = next_v;
            j = cj;
            grad = cg;
            trace.push(j);
        } else {
            velocity.iter_mut().for_each(|v| *v = 0.0);
            lr *= 0.5;
        }
    }
    if j <= 0.0 {
        return Ok(zero(iterations));
    }
    Ok(Perturbation {
        ratio: norm(&delta) / a_norm,
        delta,
        objective: j,
        iterations,
        trace,
    })
}

/// Per-view intensity of the decode change under a belief perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub geometry: GridGeometry,
    /// Summed squared decode difference per view, `[N, M]` row-major, in
    /// absolute azimuth coordinates.
    pub raw: Vec<f64>,
    /// `raw` divided by its maximum (all zeros when the maximum is zero).
    pub intensity: Vec<f64>,
    pub ratio: f64,
}

impl Heatmap {
    pub fn at(&self, elev: usize, azim: usize) -> f64 {
        self.intensity[self.geometry.view_index(elev, azim)]
    }
}

/// Heatmap from two decodes of the same egocentric grid, rolled to absolute
/// azimuths by `start_azim`.
pub fn heatmap_from_decodes(
    geometry: &GridGeometry,
    base: &[f64],
    perturbed: &[f64],
    start_azim: usize,
    ratio: f64,
) -> Result<Heatmap> {
    let n = geometry.grid_len();
    if base.len() != n || perturbed.len() != n {
        return Err(Error::shape("decoded grid", n, base.len().min(perturbed.len())));
    }
    let vl = geometry.view_len();
    let ego: Vec<f64> = base
        .chunks(vl)
        .zip(perturbed.chunks(vl))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (y - x).powi(2)).sum())
        .collect();
    let view_geom = GridGeometry {
        channels: 1,
        view_h: 1,
        view_w: 1,
        ..*geometry
    };
    let raw = roll_azimuth_flat(&ego, &view_geom, start_azim);
    let max = raw.iter().cloned().fold(0.0, f64::max);
    let intensity = if max > 0.0 {
        raw.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; raw.len()]
    };
    Ok(Heatmap {
        geometry: *geometry,
        raw,
        intensity,
        ratio,
    })
}

/// `H_t` for a belief and its perturbation.
pub fn heatmap<F: Scalar>(agent: &Agent<F>, belief: &[F], delta: &[f64], start_azim: usize) -> Result<Heatmap> {
    if belief.len() != delta.len() {
        return Err(Error::shape("perturbation", belief.len(), delta.len()));
    }
    let agent64 = agent.cast::<f64>();
    let a = Array1::from_iter(belief.iter().map(|v| v.f64()));
    let shifted = &a + &Array1::from(delta.to_vec());
    let rows = ndarray::stack![Axis(0), a.view(), shifted.view()];
    let dec = agent64.decode_rows(rows.view())?;
    let ratio = norm(delta) / norm(a.as_slice().expect("contiguous")).max(f64::MIN_POSITIVE);
    heatmap_from_decodes(
        agent.geometry(),
        dec.row(0).as_slice().expect("contiguous"),
        dec.row(1).as_slice().expect("contiguous"),
        start_azim,
        ratio,
    )
}

/// Perturbation and heatmap for every decision step of an episode (all
/// steps but the last). Each step uses its own perturbation seed.
pub fn episode_heatmaps(
    agent: &Agent<f32>,
    ep: &EpisodeLog,
    cfg: &PerturbConfig,
) -> Result<Vec<(Perturbation, Heatmap)>> {
    let start = ep.start().azim;
    ep.beliefs
        .iter()
        .zip(&ep.props)
        .take(ep.actions.len())
        .enumerate()
        .map(|(t, (b, prop))| {
            let c = PerturbConfig {
                seed: cfg.seed.wrapping_add(t as u64),
                ..*cfg
            };
            let p = belief_perturbation(agent, b, prop, &c)?;
            let h = heatmap(agent, b, &p.delta, start)?;
            Ok((p, h))
        })
        .collect()
}
