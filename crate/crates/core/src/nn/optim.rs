use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::{GroupMask, ParamStore, Scalar};
use crate::error::{Error, Result};

fn check_grads<F: Scalar>(store: &ParamStore<F>) -> Result<()> {
    for (p, g) in store.params().iter().zip(store.grads()) {
        if store.frozen().contains(p.group) {
            continue;
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {} (group {})",
                p.name, p.group
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    pub config: AdamConfig,
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
    t: u64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Frozen groups are left untouched.
    pub fn step(&mut self, store: &mut ParamStore<F>) -> Result<()> {
        self.step_groups(store, GroupMask::all())
    }

    /// Like [`Adam::step`] but only groups in `active` move, weight decay
    /// included.
    pub fn step_groups(&mut self, store: &mut ParamStore<F>, active: GroupMask) -> Result<()> {
        check_grads(store)?;
        if self.m.len() != store.len() {
            self.m = store.params().iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let bc1 = F::of(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = F::of(1.0 - c.beta2.powi(self.t as i32));
        let (lr, eps, wd) = (F::of(c.lr), F::of(c.eps), F::of(c.weight_decay));
        let one = F::one();
        let frozen = store.frozen();
        for id in store.ids().collect::<Vec<_>>() {
            let group = store.param(id).group;
            if frozen.contains(group) || !active.contains(group) {
                continue;
            }
            let i = id.index();
            let grad = store.grad(id).clone();
            let value = store.value_mut(id);
            ndarray::Zip::from(value)
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(&grad)
                .for_each(|w, m, v, &g| {
                    let g = g + wd * *w;
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *w -= lr * mh / (vh.sqrt() + eps);
                });
        }
        store.zero_grads();
        Ok(())
    }
}

/// SGD with momentum and L2 weight decay: `v = mu v + (g + wd w)`,
/// `w -= lr v`.
#[derive(Clone, Debug)]
pub struct SgdMomentum<F> {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<ArrayD<F>>,
}

impl<F: Scalar> SgdMomentum<F> {
    pub fn new(lr: f64, weight_decay: f64, momentum: f64) -> Self {
        SgdMomentum {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore<F>) -> Result<()> {
        check_grads(store)?;
        if self.velocity.len() != store.len() {
            self.velocity = store.params().iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
        }
        let (lr, mu, wd) = (F::of(self.lr), F::of(self.momentum), F::of(self.weight_decay));
        let frozen = store.frozen();
        for id in store.ids().collect::<Vec<_>>() {
            if frozen.contains(store.param(id).group) {
                continue;
            }
            let grad = store.grad(id).clone();
            let vel = &mut self.velocity[id.index()];
            ndarray::Zip::from(store.value_mut(id))
                .and(vel)
                .and(&grad)
                .for_each(|w, v, &g| {
                    *v = mu * *v + g + wd * *w;
                    *w -= lr * *v;
                });
        }
        store.zero_grads();
        Ok(())
    }
}
