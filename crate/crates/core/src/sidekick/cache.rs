use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::coverage::{coverage_distances, CoverageMatrix};
use super::model::OneViewModel;
use super::score::{minmax_invert, nms_select, ScoreMap};
use crate::env::io_util::{read_bytes, read_json, write_bytes, write_json};
use crate::env::{Dataset, GridGeometry, Pose};
use crate::error::{Error, Result};

pub const SIDEKICK_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidekickConfig {
    pub k: usize,
    pub nms_radius: usize,
    pub scores: bool,
    pub coverage: bool,
}

impl SidekickConfig {
    /// `K = 4`, radius 1, both sidekicks.
    pub fn desk() -> Self {
        SidekickConfig {
            k: 4,
            nms_radius: 1,
            scores: true,
            coverage: true,
        }
    }

    /// `K = 5`, radius 2.
    pub fn modelnet_hard() -> Self {
        SidekickConfig {
            k: 5,
            nms_radius: 2,
            ..Self::desk()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SidekickEntry {
    pub scores: Option<ScoreMap>,
    pub coverage: Option<CoverageMatrix>,
}

/// Precomputed sidekick outputs for a dataset, keyed by the dataset's
/// content id and the one-view model's checksum.
#[derive(Clone, Debug, PartialEq)]
pub struct SidekickCache {
    pub dataset_id: String,
    pub model_checksum: String,
    pub geometry: GridGeometry,
    pub config: SidekickConfig,
    pub entries: Vec<SidekickEntry>,
}

impl SidekickCache {
    /// Fails with [`Error::StaleCache`] unless the cache was built for this
    /// dataset and model.
    pub fn verify(&self, dataset_id: &str, model_checksum: &str) -> Result<()> {
        if self.dataset_id != dataset_id {
            return Err(Error::StaleCache(format!(
                "built for dataset {}, not {dataset_id}",
                self.dataset_id
            )));
        }
        if self.model_checksum != model_checksum {
            return Err(Error::StaleCache(format!(
                "built with model {}, not {model_checksum}",
                self.model_checksum
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self, i: usize) -> Result<&ScoreMap> {
        self.entries
            .get(i)
            .and_then(|e| e.scores.as_ref())
            .ok_or_else(|| Error::MissingDependency {
                stage: "sidekick".into(),
                hint: format!("no score map for sample {i}; rebuild the cache with scores enabled"),
            })
    }

    pub fn coverage(&self, i: usize) -> Result<&CoverageMatrix> {
        self.entries
            .get(i)
            .and_then(|e| e.coverage.as_ref())
            .ok_or_else(|| Error::MissingDependency {
                stage: "sidekick".into(),
                hint: format!("no coverage matrix for sample {i}; rebuild the cache with coverage enabled"),
            })
    }
}

/// Runs the one-view model over every sample. Completions are shared
/// between the two sidekicks.
pub fn precompute_cache(ds: &Dataset, model: &(dyn OneViewModel + Sync), config: &SidekickConfig) -> Result<SidekickCache> {
    let g = *ds.geometry();
    if model.geometry() != g {
        return Err(Error::GeometryMismatch {
            expected: g.to_string(),
            found: model.geometry().to_string(),
        });
    }
    let n = g.n_views();
    let entries = ds
        .samples()
        .par_iter()
        .map(|grid| -> Result<SidekickEntry> {
            let d = coverage_distances(model, grid)?;
            let scores = if config.scores {
                // Whole-grid error from view i is the mean of its per-target errors.
                let info: Vec<f64> = d.chunks(n).map(|r| r.iter().sum::<f64>() / n as f64).collect();
                let s: Vec<f32> = minmax_invert(&info).into_iter().map(|v| v as f32).collect();
                let sel = nms_select(&s, &g, config.k, config.nms_radius)?;
                Some(ScoreMap {
                    sample_id: grid.id().to_string(),
                    geometry: g,
                    scores: s,
                    selected: sel.selected,
                    k: config.k,
                    nms_radius: config.nms_radius,
                    relaxed: sel.relaxed,
                })
            } else {
                None
            };
            let coverage = if config.coverage {
                let c = minmax_invert(&d).into_iter().map(|v| v as f32).collect();
                Some(CoverageMatrix::new(grid.id(), g, c)?)
            } else {
                None
            };
            Ok(SidekickEntry { scores, coverage })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SidekickCache {
        dataset_id: ds.content_id(),
        model_checksum: model.checksum(),
        geometry: g,
        config: config.clone(),
        entries,
    })
}

#[derive(Serialize, Deserialize)]
struct EntryMeta {
    sample_id: String,
    selected: Vec<Pose>,
    relaxed: bool,
    scores_offset: Option<u64>,
    coverage_offset: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    endianness: String,
    dataset_id: String,
    model_checksum: String,
    geometry: GridGeometry,
    config: SidekickConfig,
    payload_sha256: String,
    entries: Vec<EntryMeta>,
}

/// Writes `sidekick.json` and `sidekick.bin` (per sample: scores `[N, M]`
/// then coverage `[MN, MN]`, f32 little-endian).
pub fn save_cache(cache: &SidekickCache, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut bytes: Vec<u8> = Vec::new();
    let mut metas = Vec::with_capacity(cache.entries.len());
    let put = |bytes: &mut Vec<u8>, v: &[f32]| {
        let off = bytes.len() as u64;
        for x in v {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        off
    };
    for e in &cache.entries {
        let id = e
            .scores
            .as_ref()
            .map(|s| s.sample_id.clone())
            .or_else(|| e.coverage.as_ref().map(|c| c.sample_id.clone()))
            .unwrap_or_default();
        metas.push(EntryMeta {
            sample_id: id,
            selected: e.scores.as_ref().map(|s| s.selected.clone()).unwrap_or_default(),
            relaxed: e.scores.as_ref().is_some_and(|s| s.relaxed),
            scores_offset: e.scores.as_ref().map(|s| put(&mut bytes, &s.scores)),
            coverage_offset: e.coverage.as_ref().map(|c| put(&mut bytes, &c.cov)),
        });
    }
    let manifest = Manifest {
        format_version: SIDEKICK_FORMAT_VERSION,
        endianness: "little".into(),
        dataset_id: cache.dataset_id.clone(),
        model_checksum: cache.model_checksum.clone(),
        geometry: cache.geometry,
        config: cache.config.clone(),
        payload_sha256: hex::encode(Sha256::digest(&bytes)),
        entries: metas,
    };
    write_json(&dir.join("sidekick.json"), &manifest)?;
    write_bytes(&dir.join("sidekick.bin"), &bytes)
}

pub fn load_cache(dir: &Path) -> Result<SidekickCache> {
    let mpath = dir.join("sidekick.json");
    let m: Manifest = read_json(&mpath)?;
    if m.format_version != SIDEKICK_FORMAT_VERSION || m.endianness != "little" {
        return Err(Error::MalformedManifest {
            path: mpath,
            reason: format!("unsupported format {}", m.format_version),
        });
    }
    let bpath = dir.join("sidekick.bin");
    let bytes = read_bytes(&bpath)?;
    let found = hex::encode(Sha256::digest(&bytes));
    if found != m.payload_sha256 {
        return Err(Error::ChecksumMismatch {
            expected: m.payload_sha256,
            found,
        });
    }
    let g = m.geometry;
    let n = g.n_views();
    let read = |off: u64, len: usize| -> Result<Vec<f32>> {
        let start = off as usize;
        let end = start + len * 4;
        if end > bytes.len() {
            return Err(Error::TruncatedPayload {
                path: bpath.clone(),
                expected: end as u64,
                found: bytes.len() as u64,
            });
        }
        Ok(bytes[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };
    let mut entries = Vec::with_capacity(m.entries.len());
    for e in m.entries {
        let scores = match e.scores_offset {
            Some(off) => Some(ScoreMap {
                sample_id: e.sample_id.clone(),
                geometry: g,
                scores: read(off, n)?,
                selected: e.selected,
                k: m.config.k,
                nms_radius: m.config.nms_radius,
                relaxed: e.relaxed,
            }),
            None => None,
        };
        let coverage = match e.coverage_offset {
            Some(off) => Some(CoverageMatrix::new(e.sample_id, g, read(off, n * n)?)?),
            None => None,
        };
        entries.push(SidekickEntry { scores, coverage });
    }
    Ok(SidekickCache {
        dataset_id: m.dataset_id,
        model_checksum: m.model_checksum,
        geometry: g,
        config: m.config,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_synthetic, SynthSpec, Viewgrid};
    use crate::sidekick::{coverage_matrix, score_map};

    struct Blur(GridGeometry);

    impl OneViewModel for Blur {
        fn geometry(&self) -> GridGeometry {
            self.0
        }
        fn checksum(&self) -> String {
            "blur".into()
        }
        fn complete(&self, grid: &Viewgrid, pose: Pose) -> Result<Vec<f32>> {
            let mean = grid.view(pose).iter().sum::<f32>() / self.0.view_len() as f32;
            Ok(grid
                .pixels()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let p = Pose::from_index(i / self.0.view_len(), &self.0);
                    if p.grid_distance(&pose, self.0.n_azim) <= 1 {
                        v
                    } else {
                        mean
                    }
                })
                .collect())
        }
    }

    fn setup() -> (Dataset, Blur) {
        let g = GridGeometry::new(2, 4, 1, 4, 4).unwrap();
        (generate_synthetic(&SynthSpec::new(g, 10, 4)).unwrap(), Blur(g))
    }

    #[test]
    fn builds_one_entry_per_sample_and_matches_direct_scoring() {
        let (ds, m) = setup();
        let cfg = SidekickConfig {
            k: 2,
            nms_radius: 1,
            scores: true,
            coverage: true,
        };
        let c = precompute_cache(&ds, &m, &cfg).unwrap();
        assert_eq!(c.len(), 10);
        let direct = score_map(&m, &ds.samples()[3], 2, 1).unwrap();
        let cached = c.scores(3).unwrap();
        assert_eq!(cached.selected, direct.selected);
        for (a, b) in cached.scores.iter().zip(&direct.scores) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(c.coverage(3).unwrap(), &coverage_matrix(&m, &ds.samples()[3]).unwrap());
    }

    #[test]
    fn round_trip_and_staleness() {
        let (ds, m) = setup();
        let c = precompute_cache(&ds, &m, &SidekickConfig::desk()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_cache(&c, dir.path()).unwrap();
        let back = load_cache(dir.path()).unwrap();
        assert_eq!(back, c);
        back.verify(&ds.content_id(), "blur").unwrap();
        assert!(matches!(back.verify(&ds.content_id(), "other"), Err(Error::StaleCache(_))));
        let mut bytes = fs::read(dir.path().join("sidekick.bin")).unwrap();
        bytes[5] ^= 1;
        fs::write(dir.path().join("sidekick.bin"), bytes).unwrap();
        assert!(matches!(load_cache(dir.path()), Err(Error::ChecksumMismatch { .. })));
    }
}
