use std::collections::BTreeMap;

use ndarray::ArrayD;
use rand::seq::index::sample;
use rand::SeedableRng;
use serde::Serialize;

use super::{Group, ParamStore};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error. Central differences of a
    /// loss of size `L` carry roughly `L * 1e-16 / eps` of roundoff, so entries
    /// below this floor are compared absolutely.
    pub floor: f64,
    /// Entries checked per parameter tensor; `None` checks all of them.
    pub samples_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            tolerance: 1e-4,
            floor: 1e-5,
            samples_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupReport {
    pub group: Group,
    pub max_rel_err: f64,
    pub worst_param: String,
    /// `(analytic, numeric)` at the worst entry.
    pub worst_values: (f64, f64),
    pub n_checked: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> Vec<Group> {
        self.groups.iter().filter(|g| !g.passed).map(|g| g.group).collect()
    }
}

/// `|a - f| / max(|a|, |f|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic gradients (aligned with the store's parameters)
/// against central finite differences of `loss`, per parameter group.
pub fn finite_diff_check<L>(
    store: &mut ParamStore<f64>,
    analytic: &[ArrayD<f64>],
    mut loss: L,
    cfg: GradCheckConfig,
) -> GradCheckReport
where
    L: FnMut(&ParamStore<f64>) -> f64,
{
    assert_eq!(analytic.len(), store.len(), "one gradient per parameter");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut per_group: BTreeMap<Group, GroupReport> = BTreeMap::new();
    for id in store.ids().collect::<Vec<_>>() {
        let (group, name, len) = {
            let p = store.param(id);
            (p.group, p.name.clone(), p.value.len())
        };
        let picks: Vec<usize> = match cfg.samples_per_param {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        let entry = per_group.entry(group).or_insert_with(|| GroupReport {
            group,
            max_rel_err: 0.0,
            worst_param: String::new(),
            worst_values: (0.0, 0.0),
            n_checked: 0,
            passed: true,
        });
        for flat in picks {
            let orig = store.value(id).as_slice().expect("contiguous")[flat];
            store.value_mut(id).as_slice_mut().expect("contiguous")[flat] = orig + cfg.eps;
            let up = loss(store);
            store.value_mut(id).as_slice_mut().expect("contiguous")[flat] = orig - cfg.eps;
            let down = loss(store);
            store.value_mut(id).as_slice_mut().expect("contiguous")[flat] = orig;
            let numeric = (up - down) / (2.0 * cfg.eps);
            let a = analytic[id.index()].as_slice().expect("contiguous")[flat];
            let err = relative_error(a, numeric, cfg.floor);
            entry.n_checked += 1;
            if err > entry.max_rel_err {
                entry.max_rel_err = err;
                entry.worst_param = format!("{name}[{flat}]");
                entry.worst_values = (a, numeric);
            }
        }
    }
    let groups = per_group
        .into_values()
        .map(|mut g| {
            g.passed = g.max_rel_err < cfg.tolerance;
            g
        })
        .collect();
    GradCheckReport {
        tolerance: cfg.tolerance,
        groups,
    }
}
