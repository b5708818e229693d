use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::arch::{ArchConfig, CriticKind};
use crate::env::{action_space, GridGeometry, Pose, Proprioception, Viewgrid};
use crate::error::{Error, Result};
use crate::nn::{
    build_sequential, load_checkpoint, save_checkpoint, softmax_rows, CheckpointMeta, Gradients, Group,
    GroupMask, Gru, GruCache, ParamStore, Scalar, SeqCache, Sequential,
};
use crate::rng;

/// Everything needed to rebuild an agent's parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentMeta {
    pub arch: ArchConfig,
    pub geometry: GridGeometry,
    pub critic: Option<CriticKind>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
struct CriticNet {
    kind: CriticKind,
    head: Sequential,
    grid: Option<Sequential>,
}

#[derive(Clone, Debug, PartialEq)]
struct Network {
    view_enc: Sequential,
    prop_enc: Sequential,
    fuse: Sequential,
    agg: Gru,
    decode: Sequential,
    act: Sequential,
    critic: Option<CriticNet>,
}

/// The aggregator's hidden vector after `t` glimpses.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState<F> {
    pub a: Array1<F>,
    pub t: usize,
}

impl<F: Scalar> BeliefState<F> {
    /// The start state: all zeros, no glimpses yet.
    pub fn initial(hidden: usize) -> Self {
        BeliefState {
            a: Array1::zeros(hidden),
            t: 0,
        }
    }
}

/// Batched outputs of one glimpse.
#[derive(Clone, Debug)]
pub struct StepOutput<F> {
    /// Belief after folding in this glimpse, `[B, hidden]`.
    pub belief: Array2<F>,
    /// Egocentric decoded viewgrid, `[B, grid_len]`, values in `[0, 1]`.
    pub decoded: Option<Array2<F>>,
    /// Action logits, `[B, 15]`.
    pub logits: Option<Array2<F>>,
    /// Critic value, `[B, 1]`.
    pub value: Option<Array2<F>>,
}

/// Activations of one glimpse kept for backpropagation through time.
#[derive(Clone, Debug)]
pub struct StepCache<F> {
    view: SeqCache<F>,
    prop: SeqCache<F>,
    fuse: SeqCache<F>,
    gru: GruCache<F>,
    decode: Option<SeqCache<F>>,
    act: Option<SeqCache<F>>,
    critic: Option<SeqCache<F>>,
}

/// Upstream gradients for a whole unrolled batch, indexed by step. A `None`
/// slot (or a step whose head was not evaluated) contributes nothing.
#[derive(Clone, Debug)]
pub struct EpisodeGrads<F> {
    pub decoded: Vec<Option<Array2<F>>>,
    pub logits: Vec<Option<Array2<F>>>,
    pub value: Vec<Option<Array2<F>>>,
}

impl<F> EpisodeGrads<F> {
    pub fn empty(steps: usize) -> Self {
        EpisodeGrads {
            decoded: (0..steps).map(|_| None).collect(),
            logits: (0..steps).map(|_| None).collect(),
            value: (0..steps).map(|_| None).collect(),
        }
    }
}

/// A completion agent: layer structure plus its parameters.
#[derive(Clone, Debug)]
pub struct Agent<F> {
    meta: AgentMeta,
    net: Network,
    params: ParamStore<F>,
}

fn row<F: Scalar>(v: &[f64]) -> Array2<F> {
    Array2::from_shape_fn((1, v.len()), |(_, j)| F::of(v[j]))
}

impl<F: Scalar> Agent<F> {
    /// Builds a freshly initialized agent. Parameters are drawn from the
    /// `init` stream of `seed`, so equal seeds give equal agents.
    pub fn new(geometry: GridGeometry, arch: ArchConfig, seed: u64) -> Result<Self> {
        geometry.validate()?;
        let mut params = ParamStore::new(seed);
        let mut r = rng::stream(seed, "init");
        let (shape, specs) = arch.view_encoder(&geometry)?;
        let view_enc = build_sequential(&specs, shape, &mut params, Group::Sense, "sense.view", &mut r)?;
        let (shape, specs) = arch.prop_encoder();
        let prop_enc = build_sequential(&specs, shape, &mut params, Group::Sense, "sense.prop", &mut r)?;
        let (shape, specs) = arch.fuser();
        let fuse = build_sequential(&specs, shape, &mut params, Group::Fuse, "fuse", &mut r)?;
        let agg = Gru::new(&mut params, Group::Aggregate, "aggregate", arch.fuse, arch.hidden, &mut r);
        let (shape, specs) = arch.decoder(&geometry)?;
        let decode = build_sequential(&specs, shape, &mut params, Group::Decode, "decode", &mut r)?;
        let (shape, specs) = arch.actor(action_space(&geometry).len());
        let act = build_sequential(&specs, shape, &mut params, Group::Act, "act", &mut r)?;
        Ok(Agent {
            meta: AgentMeta {
                arch,
                geometry,
                critic: None,
                seed,
            },
            net: Network {
                view_enc,
                prop_enc,
                fuse,
                agg,
                decode,
                act,
                critic: None,
            },
            params,
        })
    }

    /// Adds a freshly initialized critic (drawn from the `init/critic`
    /// stream). Fails if one is already attached.
    pub fn attach_critic(&mut self, kind: CriticKind) -> Result<()> {
        if self.net.critic.is_some() {
            return Err(Error::InvalidArgument("agent already has a critic".into()));
        }
        let arch = &self.meta.arch;
        let mut r = rng::stream(self.meta.seed, "init/critic");
        let (shape, specs) = arch.critic_head(kind);
        let head = build_sequential(&specs, shape, &mut self.params, Group::Critic, "critic.head", &mut r)?;
        let grid = match kind {
            CriticKind::Partial => None,
            CriticKind::Full => {
                let (shape, specs) = arch.critic_grid(&self.meta.geometry);
                Some(build_sequential(
                    &specs,
                    shape,
                    &mut self.params,
                    Group::Critic,
                    "critic.grid",
                    &mut r,
                )?)
            }
        };
        self.net.critic = Some(CriticNet { kind, head, grid });
        self.meta.critic = Some(kind);
        Ok(())
    }

    pub fn meta(&self) -> &AgentMeta {
        &self.meta
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.meta.geometry
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.meta.arch
    }

    pub fn hidden(&self) -> usize {
        self.meta.arch.hidden
    }

    pub fn critic_kind(&self) -> Option<CriticKind> {
        self.net.critic.as_ref().map(|c| c.kind)
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    /// Same agent in another precision.
    pub fn cast<G: Scalar>(&self) -> Agent<G> {
        Agent {
            meta: self.meta.clone(),
            net: self.net.clone(),
            params: self.params.cast(),
        }
    }

    /// Writes the agent as a checkpoint; `extra` lands in the manifest.
    pub fn save(&self, dir: &Path, step: u64, extra: serde_json::Value) -> Result<()> {
        let meta = CheckpointMeta {
            architecture: serde_json::to_value(&self.meta).map_err(|e| Error::Json {
                context: "agent meta".into(),
                source: e,
            })?,
            geometry: Some(self.meta.geometry),
            step,
            seed: self.meta.seed,
            extra,
        };
        save_checkpoint(dir, &self.params, &meta)
    }

    /// Copies parameter values by name from `other`. Every parameter of
    /// `self` must be present with the same shape.
    pub fn load_values_from<G: Scalar>(&mut self, other: &ParamStore<G>) -> Result<()> {
        for id in self.params.ids().collect::<Vec<_>>() {
            let name = self.params.param(id).name.clone();
            let src = other.find(&name).ok_or_else(|| Error::ShapeMismatch {
                context: "checkpoint parameters".into(),
                expected: name.clone(),
                found: "missing".into(),
            })?;
            let v = other.value(src);
            if v.shape() != self.params.value(id).shape() {
                return Err(Error::shape(
                    format!("checkpoint parameter {name}"),
                    self.params.value(id).shape(),
                    v.shape(),
                ));
            }
            *self.params.value_mut(id) = v.mapv(|x| F::of(x.f64()));
        }
        Ok(())
    }

    /// Feature row for one glimpse's view.
    pub fn view_row(view: &[f32]) -> Array2<F> {
        Array2::from_shape_fn((1, view.len()), |(_, j)| F::of(f64::from(view[j])))
    }

    fn check_view(&self, view: &[f32]) -> Result<()> {
        if view.len() != self.meta.geometry.view_len() {
            return Err(Error::shape("view", self.meta.geometry.view_len(), view.len()));
        }
        Ok(())
    }

    /// Sense: independent codes for the view and the proprioception.
    pub fn sense(&self, view: &[f32], prop: &Proprioception) -> Result<(Array1<F>, Array1<F>)> {
        self.check_view(view)?;
        let v = self.net.view_enc.forward(&self.params, Self::view_row(view).view())?;
        let p = self
            .net
            .prop_enc
            .forward(&self.params, row::<F>(&prop.features(&self.meta.geometry)).view())?;
        Ok((v.output().row(0).to_owned(), p.output().row(0).to_owned()))
    }

    /// Fuse: joint code of the sensed tuple.
    pub fn fuse(&self, view_code: &Array1<F>, prop_code: &Array1<F>) -> Result<Array1<F>> {
        let x = concatenate![Axis(0), view_code.view(), prop_code.view()].insert_axis(Axis(0));
        Ok(self.net.fuse.forward(&self.params, x.view())?.output().row(0).to_owned())
    }

    /// Aggregate: folds a fused code into the belief.
    pub fn aggregate(&self, belief: &BeliefState<F>, fused: &Array1<F>) -> Result<BeliefState<F>> {
        let (h, _) = self.net.agg.forward(
            &self.params,
            fused.view().insert_axis(Axis(0)),
            belief.a.view().insert_axis(Axis(0)),
        )?;
        Ok(BeliefState {
            a: h.row(0).to_owned(),
            t: belief.t + 1,
        })
    }

    /// Decode: egocentric viewgrid prediction, flattened `[N, M, C, H, W]`.
    pub fn decode(&self, belief: &BeliefState<F>) -> Result<Array1<F>> {
        Ok(self.decode_rows(belief.a.view().insert_axis(Axis(0)))?.row(0).to_owned())
    }

    pub fn decode_rows(&self, beliefs: ArrayView2<F>) -> Result<Array2<F>> {
        Ok(self.net.decode.forward(&self.params, beliefs)?.acts.pop().expect("output"))
    }

    /// Act: distribution over the 15 relative motions.
    pub fn act(&self, belief: &BeliefState<F>, prop: &Proprioception) -> Result<Array1<F>> {
        let logits = self.policy_logits(
            belief.a.view().insert_axis(Axis(0)),
            row::<F>(&prop.features(&self.meta.geometry)).view(),
        )?;
        Ok(softmax_rows(logits.view()).row(0).to_owned())
    }

    pub fn policy_logits(&self, beliefs: ArrayView2<F>, props: ArrayView2<F>) -> Result<Array2<F>> {
        let x = concatenate![Axis(1), beliefs, props];
        Ok(self.net.act.forward(&self.params, x.view())?.acts.pop().expect("output"))
    }

    /// Logits and the gradient of `sum(dlogits * logits)` with respect to
    /// the beliefs. Used by the perturbation search.
    pub fn policy_logits_grad(
        &self,
        beliefs: ArrayView2<F>,
        props: ArrayView2<F>,
        dlogits: impl Fn(&Array2<F>) -> Array2<F>,
    ) -> Result<(Array2<F>, Array2<F>)> {
        let x = concatenate![Axis(1), beliefs, props];
        let cache = self.net.act.forward(&self.params, x.view())?;
        let dy = dlogits(cache.output());
        let mut g = Gradients::new(&self.params, GroupMask::none());
        let dx = self
            .net
            .act
            .backward(&self.params, &cache, dy.view(), &mut g, true)?
            .expect("dx requested");
        let h = beliefs.ncols();
        Ok((cache.acts.last().expect("output").clone(), dx.slice(s![.., ..h]).to_owned()))
    }

    /// Proprioception rows for a batch.
    pub fn prop_rows(&self, props: &[Proprioception]) -> Array2<F> {
        let g = &self.meta.geometry;
        let mut out = Array2::zeros((props.len(), Proprioception::N_FEATURES));
        for (i, p) in props.iter().enumerate() {
            for (j, v) in p.features(g).iter().enumerate() {
                out[[i, j]] = F::of(*v);
            }
        }
        out
    }

    /// Whole-viewgrid code for the full-observability critic: every view is
    /// encoded by Sense (no gradient) and the codes fused by the critic's
    /// grid layers. Returns the code `[B, critic_hidden]` and the cache of
    /// the grid layers.
    pub fn critic_grid_code(&self, grids: &[&Viewgrid]) -> Result<Option<(Array2<F>, SeqCache<F>)>> {
        let Some(grid_net) = self.net.critic.as_ref().and_then(|c| c.grid.as_ref()) else {
            return Ok(None);
        };
        let g = &self.meta.geometry;
        let (nv, vl) = (g.n_views(), g.view_len());
        let mut views = Array2::zeros((grids.len() * nv, vl));
        for (b, grid) in grids.iter().enumerate() {
            if grid.geometry() != g {
                return Err(Error::GeometryMismatch {
                    expected: g.to_string(),
                    found: grid.geometry().to_string(),
                });
            }
            for (k, px) in grid.pixels().chunks(vl).enumerate() {
                for (d, &v) in views.row_mut(b * nv + k).iter_mut().zip(px) {
                    *d = F::of(f64::from(v));
                }
            }
        }
        let codes = self.net.view_enc.forward(&self.params, views.view())?;
        let code_len = self.meta.arch.view_code;
        let flat = codes
            .output()
            .clone()
            .into_shape_with_order((grids.len(), nv * code_len))
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let cache = grid_net.forward(&self.params, flat.view())?;
        Ok(Some((cache.output().clone(), cache)))
    }

    /// Extra full-critic features: absolute azimuth fraction and grid code.
    pub fn critic_extra(&self, poses: &[Pose], grid_code: &Array2<F>) -> Array2<F> {
        let m = self.meta.geometry.n_azim as f64;
        let az = Array2::from_shape_fn((poses.len(), 1), |(i, _)| F::of(poses[i].azim as f64 / m));
        concatenate![Axis(1), az, grid_code.view()]
    }

    /// One batched glimpse: Sense, Fuse, Aggregate, then the requested
    /// heads. `critic_extra` is required for the full critic.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        belief: ArrayView2<F>,
        views: ArrayView2<F>,
        props: ArrayView2<F>,
        want_decode: bool,
        want_act: bool,
        critic_extra: Option<ArrayView2<F>>,
    ) -> Result<(StepOutput<F>, StepCache<F>)> {
        let n = &self.net;
        let p = &self.params;
        let view = n.view_enc.forward(p, views)?;
        let prop = n.prop_enc.forward(p, props)?;
        let fin = concatenate![Axis(1), view.output().view(), prop.output().view()];
        let fuse = n.fuse.forward(p, fin.view())?;
        let (h, gru) = n.agg.forward(p, fuse.output().view(), belief)?;
        let decode = if want_decode {
            Some(n.decode.forward(p, h.view())?)
        } else {
            None
        };
        let act = if want_act {
            let x = concatenate![Axis(1), h.view(), props];
            Some(n.act.forward(p, x.view())?)
        } else {
            None
        };
        let critic = match (&n.critic, want_act) {
            (Some(c), true) => {
                let x = match (c.kind, critic_extra) {
                    (CriticKind::Partial, _) => concatenate![Axis(1), h.view(), props],
                    (CriticKind::Full, Some(extra)) => concatenate![Axis(1), h.view(), props, extra],
                    (CriticKind::Full, None) => {
                        return Err(Error::InvalidArgument(
                            "full critic needs the absolute pose and grid code".into(),
                        ))
                    }
                };
                Some(c.head.forward(p, x.view())?)
            }
            _ => None,
        };
        let out = StepOutput {
            belief: h,
            decoded: decode.as_ref().map(|c| c.output().clone()),
            logits: act.as_ref().map(|c| c.output().clone()),
            value: critic.as_ref().map(|c| c.output().clone()),
        };
        Ok((
            out,
            StepCache {
                view,
                prop,
                fuse,
                gru,
                decode,
                act,
                critic,
            },
        ))
    }

    /// Backpropagation through time over one unrolled batch.
    ///
    /// Decode and act gradients flow into the belief and on through the
    /// recurrence into Fuse and Sense. The critic regresses on a detached
    /// belief: its loss only reaches the critic's own layers.
    pub fn backward(
        &self,
        steps: &[StepCache<F>],
        grid_cache: Option<&SeqCache<F>>,
        up: &EpisodeGrads<F>,
        g: &mut Gradients<F>,
    ) -> Result<()> {
        if up.decoded.len() != steps.len() || up.logits.len() != steps.len() || up.value.len() != steps.len() {
            return Err(Error::shape("episode gradients", steps.len(), up.decoded.len()));
        }
        let n = &self.net;
        let p = &self.params;
        let hd = self.meta.arch.hidden;
        let n_prop = Proprioception::N_FEATURES;
        let through_state = g.wants_any(GroupMask::only(&[Group::Aggregate, Group::Fuse, Group::Sense]));
        let need_fused = g.wants_any(GroupMask::only(&[Group::Fuse, Group::Sense]));
        let need_sensed = g.wants_any(GroupMask::only(&[Group::Sense]));
        let mut d_grid: Option<Array2<F>> = None;
        let mut carry: Option<Array2<F>> = None;
        for (t, c) in steps.iter().enumerate().rev() {
            let mut dh = carry.take();
            let add = |dh: &mut Option<Array2<F>>, d: ArrayView2<F>| match dh {
                Some(acc) => *acc += &d,
                None => *dh = Some(d.to_owned()),
            };
            if let (Some(cache), Some(dy)) = (&c.decode, &up.decoded[t]) {
                if let Some(dx) = n.decode.backward(p, cache, dy.view(), g, through_state)? {
                    add(&mut dh, dx.view());
                }
            }
            if let (Some(cache), Some(dy)) = (&c.act, &up.logits[t]) {
                if let Some(dx) = n.act.backward(p, cache, dy.view(), g, through_state)? {
                    add(&mut dh, dx.slice(s![.., ..hd]));
                }
            }
            if let (Some(cn), Some(cache), Some(dy)) = (&n.critic, &c.critic, &up.value[t]) {
                let full = cn.kind == CriticKind::Full;
                if let Some(dx) = cn.head.backward(p, cache, dy.view(), g, full)? {
                    let code = dx.slice(s![.., hd + n_prop + 1..]);
                    match &mut d_grid {
                        Some(acc) => *acc += &code,
                        None => d_grid = Some(code.to_owned()),
                    }
                }
            }
            if !through_state {
                continue;
            }
            let Some(dh) = dh else { continue };
            let (dx, dh_prev) = n.agg.backward(p, &c.gru, dh.view(), g, need_fused)?;
            carry = Some(dh_prev);
            if let Some(dfused) = dx {
                if let Some(din) = n.fuse.backward(p, &c.fuse, dfused.view(), g, need_sensed)? {
                    let vc = self.meta.arch.view_code;
                    n.view_enc.backward(p, &c.view, din.slice(s![.., ..vc]), g, false)?;
                    n.prop_enc.backward(p, &c.prop, din.slice(s![.., vc..]), g, false)?;
                }
            }
        }
        if let (Some(d), Some(cache), Some(grid)) = (
            d_grid,
            grid_cache,
            n.critic.as_ref().and_then(|c| c.grid.as_ref()),
        ) {
            grid.backward(p, cache, d.view(), g, false)?;
        }
        Ok(())
    }
}

impl Agent<f32> {
    /// Loads an agent saved with [`Agent::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let (store, cmeta) = load_checkpoint(dir)?;
        let meta: AgentMeta =
            serde_json::from_value(cmeta.architecture.clone()).map_err(|e| Error::MalformedManifest {
                path: dir.join("manifest.json"),
                reason: format!("architecture: {e}"),
            })?;
        let mut agent = Agent::new(meta.geometry, meta.arch.clone(), meta.seed)?;
        if let Some(kind) = meta.critic {
            agent.attach_critic(kind)?;
        }
        if store.len() != agent.params.len() {
            return Err(Error::shape("checkpoint tensor count", agent.params.len(), store.len()));
        }
        agent.load_values_from(&store)?;
        agent.params.set_frozen(store.frozen());
        Ok(agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::STAY_ACTION;

    fn geom() -> GridGeometry {
        GridGeometry::new(2, 3, 1, 4, 4).unwrap()
    }

    fn agent() -> Agent<f64> {
        Agent::new(geom(), ArchConfig::tiny(), 5).unwrap()
    }

    fn zero_group(a: &mut Agent<f64>, group: Group) {
        for id in a.params.ids().collect::<Vec<_>>() {
            if a.params.param(id).group == group {
                a.params.value_mut(id).fill(0.0);
            }
        }
    }

    #[test]
    fn sense_codes_are_independent_and_repeatable() {
        let a = agent();
        let prop = Proprioception::new(Pose::new(1, 0), None, &geom());
        let v1 = vec![0.2f32; 16];
        let v2: Vec<f32> = (0..16).map(|i| i as f32 / 16.0).collect();
        let (c1, p1) = a.sense(&v1, &prop).unwrap();
        let (c2, p2) = a.sense(&v2, &prop).unwrap();
        assert_eq!(p1, p2);
        assert_ne!(c1, c2);
        assert_eq!(a.sense(&v1, &prop).unwrap().0, c1);
    }

    #[test]
    fn zero_weight_sense_gives_zero_codes() {
        let mut a = agent();
        zero_group(&mut a, Group::Sense);
        let prop = Proprioception::new(Pose::new(1, 2), Some(Pose::new(0, 1)), &geom());
        let (c, p) = a.sense(&[0.7; 16], &prop).unwrap();
        assert!(c.iter().chain(p.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn aggregate_is_order_sensitive() {
        let a = agent();
        let f1 = Array1::from(vec![0.5, -0.2, 0.1, 0.9, 0.3]);
        let f2 = Array1::from(vec![-0.4, 0.8, 0.2, -0.1, 0.6]);
        let b0 = BeliefState::initial(a.hidden());
        let ab = a.aggregate(&a.aggregate(&b0, &f1).unwrap(), &f2).unwrap();
        let ba = a.aggregate(&a.aggregate(&b0, &f2).unwrap(), &f1).unwrap();
        assert_eq!(ab.t, 2);
        assert!(ab.a.iter().zip(ba.a.iter()).any(|(x, y)| (x - y).abs() > 1e-6));
        let again = a.aggregate(&a.aggregate(&b0, &f1).unwrap(), &f2).unwrap();
        assert_eq!(ab, again);
    }

    #[test]
    fn decode_shape_and_range() {
        let a = agent();
        let b = BeliefState {
            a: Array1::from(vec![3.0, -2.0, 1.0, 0.5]),
            t: 1,
        };
        let d = a.decode(&b).unwrap();
        assert_eq!(d.len(), geom().grid_len());
        assert!(d.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(a.decode(&b).unwrap(), d);
    }

    #[test]
    fn sun360_decoder_emits_full_grid() {
        let arch = ArchConfig {
            hidden: 8,
            view_code: 8,
            fuse: 8,
            ..ArchConfig::convolutional()
        };
        let a: Agent<f32> = Agent::new(GridGeometry::sun360(), arch, 1).unwrap();
        let d = a.decode(&BeliefState::initial(8)).unwrap();
        assert_eq!(d.len(), 4 * 8 * 3 * 32 * 32);
    }

    #[test]
    fn zero_policy_head_is_uniform() {
        let mut a = agent();
        zero_group(&mut a, Group::Act);
        let prop = Proprioception::new(Pose::new(0, 0), None, &geom());
        let b = BeliefState {
            a: Array1::from(vec![1.0, 2.0, -1.0, 0.0]),
            t: 1,
        };
        let pi = a.act(&b, &prop).unwrap();
        assert_eq!(pi.len(), 15);
        assert!(pi.iter().all(|&v| (v - 1.0 / 15.0).abs() < 1e-12));
        assert!(STAY_ACTION < pi.len());
    }

    #[test]
    fn checkpoint_round_trip_with_critic() {
        let mut a: Agent<f32> = Agent::new(geom(), ArchConfig::tiny(), 9).unwrap();
        a.attach_critic(CriticKind::Full).unwrap();
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path(), 3, serde_json::Value::Null).unwrap();
        let b = Agent::load(dir.path()).unwrap();
        assert_eq!(b.critic_kind(), Some(CriticKind::Full));
        assert_eq!(a.params().checksum(), b.params().checksum());
        assert!(a.attach_critic(CriticKind::Partial).is_err());
    }
}
