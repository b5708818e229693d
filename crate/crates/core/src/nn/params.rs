use std::fmt;

use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Ix1, Ix2, IxDyn};
use serde::{Deserialize, Serialize};

use super::Scalar;

/// Parameter groups of the completion agent (plus its critic).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Sense,
    Fuse,
    Aggregate,
    Decode,
    Act,
    Critic,
}

impl Group {
    pub const ALL: [Group; 6] = [
        Group::Sense,
        Group::Fuse,
        Group::Aggregate,
        Group::Decode,
        Group::Act,
        Group::Critic,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Group::Sense => "sense",
            Group::Fuse => "fuse",
            Group::Aggregate => "aggregate",
            Group::Decode => "decode",
            Group::Act => "act",
            Group::Critic => "critic",
        };
        f.write_str(s)
    }
}

/// A set of parameter groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct GroupMask(u8);

impl GroupMask {
    pub fn all() -> Self {
        GroupMask(0x3f)
    }

    pub fn none() -> Self {
        GroupMask(0)
    }

    pub fn only(groups: &[Group]) -> Self {
        GroupMask(groups.iter().fold(0, |m, g| m | g.bit()))
    }

    pub fn without(self, g: Group) -> Self {
        GroupMask(self.0 & !g.bit())
    }

    pub fn with(self, g: Group) -> Self {
        GroupMask(self.0 | g.bit())
    }

    pub fn contains(self, g: Group) -> bool {
        self.0 & g.bit() != 0
    }

    pub fn intersect(self, other: GroupMask) -> Self {
        GroupMask(self.0 & other.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub group: Group,
    pub value: ArrayD<F>,
}

/// Named parameter tensors with same-shaped gradient accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<F> {
    params: Vec<Param<F>>,
    grads: Vec<ArrayD<F>>,
    frozen: GroupMask,
    seed: u64,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            params: Vec::new(),
            grads: Vec::new(),
            frozen: GroupMask::none(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, group: Group, value: ArrayD<F>) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.grads.push(ArrayD::zeros(value.raw_dim()));
        self.params.push(Param { name, group, value });
        ParamId(self.params.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub fn params(&self) -> &[Param<F>] {
        &self.params
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<F> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<F> {
        &mut self.params[id.0].value
    }

    pub fn value1(&self, id: ParamId) -> ArrayView1<'_, F> {
        self.params[id.0].value.view().into_dimensionality::<Ix1>().expect("rank-1 parameter")
    }

    pub fn value2(&self, id: ParamId) -> ArrayView2<'_, F> {
        let v = &self.params[id.0].value;
        let rows = v.shape()[0];
        let cols = v.len() / rows.max(1);
        v.view()
            .into_shape_with_order(IxDyn(&[rows, cols]))
            .expect("contiguous parameter")
            .into_dimensionality::<Ix2>()
            .expect("rank-2 view")
    }

    pub fn grad(&self, id: ParamId) -> &ArrayD<F> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut ArrayD<F> {
        &mut self.grads[id.0]
    }

    pub fn grads(&self) -> &[ArrayD<F>] {
        &self.grads
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn frozen(&self) -> GroupMask {
        self.frozen
    }

    /// Frozen groups are skipped by the optimizers and receive no gradient.
    pub fn set_frozen(&mut self, frozen: GroupMask) {
        self.frozen = frozen;
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(F::zero());
        }
    }

    /// Adds a gradient buffer into the accumulators, scaled by `scale`.
    pub fn accumulate(&mut self, grads: &Gradients<F>, scale: F) {
        for (acc, g) in self.grads.iter_mut().zip(&grads.grads) {
            if let Some(g) = g {
                acc.scaled_add(scale, g);
            }
        }
    }

    /// Converts every tensor to another precision.
    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    group: p.group,
                    value: p.value.mapv(|v| G::of(v.f64())),
                })
                .collect(),
            grads: self.grads.iter().map(|g| g.mapv(|v| G::of(v.f64()))).collect(),
            frozen: self.frozen,
            seed: self.seed,
        }
    }

    /// SHA-256 of the parameter names and 32-bit little-endian values.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut order: Vec<usize> = (0..self.params.len()).collect();
        order.sort_by(|&a, &b| self.params[a].name.cmp(&self.params[b].name));
        let mut h = Sha256::new();
        for i in order {
            let p = &self.params[i];
            h.update(p.name.as_bytes());
            for v in p.value.iter() {
                h.update((v.f64() as f32).to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..16])
    }
}

/// A gradient buffer aligned with a [`ParamStore`]. Only groups in the mask
/// (and not frozen in the store it was created from) receive gradient;
/// slots for the rest stay unallocated.
#[derive(Clone, Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<ArrayD<F>>>,
    groups: Vec<Group>,
    mask: GroupMask,
}

impl<F: Scalar> Gradients<F> {
    pub fn new(store: &ParamStore<F>, mask: GroupMask) -> Self {
        let mask = GroupMask(mask.0 & !store.frozen.0);
        Gradients {
            grads: vec![None; store.len()],
            groups: store.params.iter().map(|p| p.group).collect(),
            mask,
        }
    }

    pub fn mask(&self) -> GroupMask {
        self.mask
    }

    /// Whether gradient for `id` is wanted; callers skip the work otherwise.
    pub fn wants(&self, id: ParamId) -> bool {
        self.mask.contains(self.groups[id.0])
    }

    /// Whether any group in `groups` is wanted.
    pub fn wants_any(&self, groups: GroupMask) -> bool {
        self.mask.intersect(groups) != GroupMask::none()
    }

    fn slot(&mut self, id: ParamId, shape: &[usize]) -> &mut ArrayD<F> {
        self.grads[id.0].get_or_insert_with(|| ArrayD::zeros(IxDyn(shape)))
    }

    pub fn add2(&mut self, id: ParamId, shape: &[usize], delta: ArrayView2<F>) {
        if !self.wants(id) {
            return;
        }
        let slot = self.slot(id, shape);
        let cols = delta.ncols();
        let mut view: ArrayViewMut2<F> = slot
            .view_mut()
            .into_shape_with_order((delta.nrows(), cols))
            .expect("gradient shape");
        view += &delta;
    }

    pub fn add1(&mut self, id: ParamId, shape: &[usize], delta: ArrayView1<F>) {
        if !self.wants(id) {
            return;
        }
        let slot = self.slot(id, shape);
        let mut view: ArrayViewMut1<F> = slot
            .view_mut()
            .into_shape_with_order(delta.len())
            .expect("gradient shape");
        view += &delta;
    }

    pub fn get(&self, id: ParamId) -> Option<&ArrayD<F>> {
        self.grads[id.0].as_ref()
    }

    /// Dense copy of every slot, zero-filled where nothing was written.
    pub fn to_dense(&self, store: &ParamStore<F>) -> Vec<ArrayD<F>> {
        self.grads
            .iter()
            .zip(&store.params)
            .map(|(g, p)| g.clone().unwrap_or_else(|| ArrayD::zeros(p.value.raw_dim())))
            .collect()
    }

    /// Largest absolute gradient entry over the parameters of `group`.
    pub fn group_max_abs(&self, group: Group) -> f64 {
        self.grads
            .iter()
            .zip(&self.groups)
            .filter(|(_, g)| **g == group)
            .filter_map(|(a, _)| a.as_ref())
            .flat_map(|a| a.iter().map(|v| v.f64().abs()))
            .fold(0.0, f64::max)
    }

    /// Adds `other * scale` into this buffer.
    pub fn merge(&mut self, other: &Gradients<F>, scale: F) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                if !self.mask.contains(self.groups[i]) {
                    continue;
                }
                let slot = self.grads[i].get_or_insert_with(|| ArrayD::zeros(g.raw_dim()));
                slot.scaled_add(scale, g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn masked_groups_receive_nothing() {
        let mut store = ParamStore::<f64>::new(0);
        let a = store.add("a", Group::Act, ArrayD::zeros(IxDyn(&[2, 2])));
        let d = store.add("d", Group::Decode, ArrayD::zeros(IxDyn(&[2, 2])));
        let mut g = Gradients::new(&store, GroupMask::all().without(Group::Act));
        let delta = array![[1.0, 2.0], [3.0, 4.0]];
        g.add2(a, &[2, 2], delta.view());
        g.add2(d, &[2, 2], delta.view());
        assert!(g.get(a).is_none());
        assert_eq!(g.group_max_abs(Group::Decode), 4.0);
        store.accumulate(&g, 1.0);
        store.accumulate(&g, 1.0);
        assert_eq!(store.grad(d)[[1, 1]], 8.0);
        assert_eq!(store.grad(a)[[1, 1]], 0.0);
    }

    #[test]
    fn frozen_groups_are_masked() {
        let mut store = ParamStore::<f32>::new(0);
        store.add("s", Group::Sense, ArrayD::zeros(IxDyn(&[1])));
        store.set_frozen(GroupMask::only(&[Group::Sense]));
        let g = Gradients::new(&store, GroupMask::all());
        assert!(!g.mask().contains(Group::Sense));
        assert!(g.mask().contains(Group::Decode));
    }
}
