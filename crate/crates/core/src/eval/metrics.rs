use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{rollout_batch, ActionMode, ActionSource, Agent, RolloutOptions};
use crate::env::{Dataset, GridGeometry, Pose, Split, Viewgrid};
use crate::error::{Error, Result};
use crate::sidekick::{demo_trajectory, SidekickCache};
use crate::train::reconstruction_mse;

/// How actions are chosen during evaluation.
#[derive(Clone, Copy, Debug)]
pub enum EvalPolicy<'a> {
    /// The agent's most likely action.
    Argmax,
    /// Uniform random motions from a seeded stream.
    Random { seed: u64 },
    /// The demonstration sidekick drives (needs full observability).
    Demo(&'a SidekickCache),
}

#[derive(Clone, Copy, Debug)]
pub struct EvalSettings<'a> {
    pub budget: usize,
    /// Start poses per sample spread evenly over the grid; `None` is all.
    pub starts: Option<usize>,
    pub policy: EvalPolicy<'a>,
    /// Episodes unrolled together.
    pub batch: usize,
}

impl<'a> EvalSettings<'a> {
    pub fn new(budget: usize) -> Self {
        EvalSettings {
            budget,
            starts: None,
            policy: EvalPolicy::Argmax,
            batch: 256,
        }
    }
}

/// The start poses evaluated for each sample.
pub fn eval_starts(g: &GridGeometry, count: Option<usize>) -> Vec<Pose> {
    let n = g.n_views();
    match count {
        None => Pose::all(g).collect(),
        Some(k) => {
            // Diagonal sweep: elevations cycle while azimuths advance evenly.
            let k = k.clamp(1, n);
            (0..k)
                .map(|s| Pose::new(s % g.n_elev, (s * g.n_azim / k) % g.n_azim))
                .collect()
        }
    }
}

/// Final mean per-pixel error for every sample and start, `[sample][start]`.
pub fn start_errors(agent: &Agent<f32>, ds: &Dataset, settings: &EvalSettings) -> Result<Vec<Vec<f64>>> {
    let g = *agent.geometry();
    if *ds.geometry() != g {
        return Err(Error::GeometryMismatch {
            expected: g.to_string(),
            found: ds.geometry().to_string(),
        });
    }
    let starts = eval_starts(&g, settings.starts);
    let jobs: Vec<(usize, Pose)> = (0..ds.len())
        .flat_map(|i| starts.iter().map(move |&p| (i, p)))
        .collect();
    let seed = match settings.policy {
        EvalPolicy::Random { seed } => seed,
        _ => 0,
    };
    // Chunks run in parallel; each draws from its own stream so results do
    // not depend on the worker count.
    let chunks: Vec<Vec<f64>> = jobs
        .par_chunks(settings.batch.max(1))
        .enumerate()
        .map(|(c, chunk)| -> Result<Vec<f64>> {
            let mut rng = crate::rng::stream(seed, &format!("eval/actions/{c}"));
            let grids: Vec<&Viewgrid> = chunk.iter().map(|&(i, _)| &ds.samples()[i]).collect();
            let poses: Vec<Pose> = chunk.iter().map(|&(_, p)| p).collect();
            let source = match settings.policy {
                EvalPolicy::Argmax => ActionSource::argmax(),
                EvalPolicy::Random { .. } => ActionSource::random(),
                EvalPolicy::Demo(cache) => {
                    let mut forced = Vec::with_capacity(chunk.len());
                    for &(i, p) in chunk {
                        forced.push(demo_trajectory(cache.coverage(i)?, p, settings.budget)?.actions);
                    }
                    ActionSource::with_prefixes(ActionMode::Argmax, forced)
                }
            };
            let r = rollout_batch(agent, &grids, &poses, settings.budget, &source, &mut rng, RolloutOptions::inference())?;
            let fin = r.final_decoded();
            chunk
                .iter()
                .enumerate()
                .map(|(k, &(_, p))| reconstruction_mse(fin.row(k), grids[k], p.azim))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::with_capacity(starts.len()); ds.len()];
    for (&(i, _), e) in jobs.iter().zip(chunks.into_iter().flatten()) {
        out[i].push(e);
    }
    Ok(out)
}

/// `(avg, adv)`: mean over all samples and starts, and mean over samples
/// of the worst start.
pub fn summarize(errors: &[Vec<f64>]) -> (f64, f64) {
    let all: Vec<f64> = errors.iter().flatten().copied().collect();
    let avg = all.iter().sum::<f64>() / all.len().max(1) as f64;
    let adv = errors
        .iter()
        .map(|e| e.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / errors.len().max(1) as f64;
    (avg, adv)
}

/// Relative error reduction against a baseline, in percent.
pub fn improvement(base: f64, model: f64) -> f64 {
    (base - model) / base * 100.0
}

/// One row of the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    /// Mean error x1000.
    pub avg: f64,
    /// Worst-start error x1000.
    pub adv: f64,
    pub avg_improvement: Option<f64>,
    pub adv_improvement: Option<f64>,
    /// Needs information unavailable to the agent at test time.
    pub full_observability: bool,
    pub seeds: Vec<u64>,
    /// Per-seed avg and adv x1000, in `seeds` order.
    #[serde(default)]
    pub seed_avg: Vec<f64>,
    #[serde(default)]
    pub seed_adv: Vec<f64>,
    /// Per-sample, per-start errors x1000 (first seed).
    pub errors: Vec<Vec<f64>>,
}

impl MethodResult {
    pub fn from_errors(method: impl Into<String>, errors: Vec<Vec<f64>>, seeds: Vec<u64>) -> Self {
        let scaled: Vec<Vec<f64>> = errors
            .iter()
            .map(|r| r.iter().map(|e| e * 1000.0).collect())
            .collect();
        let (avg, adv) = summarize(&scaled);
        MethodResult {
            method: method.into(),
            avg,
            adv,
            avg_improvement: None,
            adv_improvement: None,
            full_observability: false,
            seed_avg: vec![avg; seeds.len()],
            seed_adv: vec![adv; seeds.len()],
            seeds,
            errors: scaled,
        }
    }

    /// Combines runs over several seeds: `avg` and `adv` are the medians of
    /// the per-seed values. Medians keep `adv >= avg`.
    pub fn from_seeds(method: impl Into<String>, runs: Vec<(u64, Vec<Vec<f64>>)>) -> Result<Self> {
        let method = method.into();
        if runs.is_empty() {
            return Err(Error::InvalidArgument(format!("{method}: no runs")));
        }
        let per: Vec<MethodResult> = runs
            .iter()
            .map(|(s, e)| MethodResult::from_errors(method.clone(), e.clone(), vec![*s]))
            .collect();
        let seed_avg: Vec<f64> = per.iter().map(|m| m.avg).collect();
        let seed_adv: Vec<f64> = per.iter().map(|m| m.adv).collect();
        let mut first = per.into_iter().next().expect("nonempty");
        first.avg = median(&seed_avg);
        first.adv = median(&seed_adv);
        first.seeds = runs.iter().map(|(s, _)| *s).collect();
        first.seed_avg = seed_avg;
        first.seed_adv = seed_adv;
        Ok(first)
    }
}

/// Median; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub geometry: GridGeometry,
    pub split: Split,
    pub budget: usize,
    pub baseline: String,
    pub methods: Vec<MethodResult>,
}

impl EvalReport {
    pub fn new(geometry: GridGeometry, split: Split, budget: usize, methods: Vec<MethodResult>) -> Result<Self> {
        let mut r = EvalReport {
            geometry,
            split,
            budget,
            baseline: "one-view".into(),
            methods,
        };
        r.fill_improvements();
        r.check()?;
        Ok(r)
    }

    /// Fills improvement columns against the `one-view` row, if present.
    pub fn fill_improvements(&mut self) {
        let Some(base) = self.methods.iter().find(|m| m.method == self.baseline).cloned() else {
            return;
        };
        for m in &mut self.methods {
            m.avg_improvement = Some(improvement(base.avg, m.avg));
            m.adv_improvement = Some(improvement(base.adv, m.adv));
        }
    }

    /// Every row must have `adv >= avg`.
    pub fn check(&self) -> Result<()> {
        for m in &self.methods {
            if m.adv + 1e-9 < m.avg {
                return Err(Error::InvalidArgument(format!(
                    "{}: adv {} below avg {}",
                    m.method, m.adv, m.avg
                )));
            }
        }
        Ok(())
    }

    /// Aligned text table: mean x1000 and improvement for avg and adv.
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<14} {:>9} {:>9} {:>9} {:>9}",
            "method", "avg", "avg %", "adv", "adv %"
        );
        for m in &self.methods {
            let name = if m.full_observability {
                format!("{}*", m.method)
            } else {
                m.method.clone()
            };
            let _ = writeln!(
                s,
                "{:<14} {:>9.2} {:>9} {:>9.2} {:>9}",
                name,
                m.avg,
                pct(m.avg_improvement),
                m.adv,
                pct(m.adv_improvement)
            );
        }
        if self.methods.iter().any(|m| m.full_observability) {
            s.push_str("* requires full observability at test time\n");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_and_adv() {
        assert_eq!(summarize(&[vec![2.0, 4.0]]), (3.0, 4.0));
        assert_eq!(summarize(&[vec![0.0, 0.0], vec![0.0, 0.0]]), (0.0, 0.0));
    }

    #[test]
    fn improvement_formula() {
        assert!((improvement(38.31, 23.44) - 38.82).abs() < 0.01);
        assert_eq!(improvement(10.0, 10.0), 0.0);
    }

    #[test]
    fn seed_medians() {
        let runs = vec![
            (0, vec![vec![0.003, 0.005]]),
            (1, vec![vec![0.001, 0.001]]),
            (2, vec![vec![0.002, 0.010]]),
        ];
        let m = MethodResult::from_seeds("x", runs).unwrap();
        assert!((m.avg - 4.0).abs() < 1e-9);
        assert!((m.adv - 5.0).abs() < 1e-9);
        assert_eq!(m.seeds, vec![0, 1, 2]);
        assert_eq!(median(&[1.0, 4.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn report_marks_full_observability() {
        let g = GridGeometry::desk();
        let base = MethodResult::from_errors("one-view", vec![vec![0.004, 0.006]], vec![0]);
        let mut demo = MethodResult::from_errors("demo-actions", vec![vec![0.002, 0.003]], vec![0]);
        demo.full_observability = true;
        let r = EvalReport::new(g, Split::Test, 4, vec![base, demo]).unwrap();
        let t = r.to_table();
        assert!(t.contains("demo-actions*"));
        assert!((r.methods[1].avg_improvement.unwrap() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn start_subsets_spread_evenly() {
        let g = GridGeometry::desk();
        assert_eq!(eval_starts(&g, None).len(), 32);
        let s = eval_starts(&g, Some(4));
        assert_eq!(s, vec![Pose::new(0, 0), Pose::new(1, 2), Pose::new(2, 4), Pose::new(3, 6)]);
    }
}
