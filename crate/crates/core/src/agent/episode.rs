use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::io_util::{read_bytes, read_json, write_bytes, write_json};
use crate::env::{GridGeometry, Pose, Proprioception};
use crate::error::{Error, Result};

pub const EPISODE_FORMAT_VERSION: u32 = 1;

/// Everything that happened in one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub geometry: GridGeometry,
    pub sample_id: String,
    pub budget: usize,
    /// `T` poses, start first.
    pub poses: Vec<Pose>,
    pub props: Vec<Proprioception>,
    /// `T-1` action indices.
    pub actions: Vec<usize>,
    pub forced: Vec<bool>,
    /// `T` observed views.
    pub views: Vec<Vec<f32>>,
    /// `T-1` action distributions.
    pub policies: Vec<Vec<f32>>,
    /// `T` egocentric decoded grids (empty where a step was not decoded).
    pub decoded: Vec<Vec<f32>>,
    /// `T` belief vectors.
    pub beliefs: Vec<Vec<f32>>,
    /// `T-1` critic values, empty without a critic.
    pub values: Vec<f32>,
}

impl EpisodeLog {
    pub fn start(&self) -> Pose {
        self.poses[0]
    }
}

#[derive(Serialize, Deserialize)]
struct Block {
    name: String,
    rows: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    endianness: String,
    geometry: GridGeometry,
    sample_id: String,
    budget: usize,
    poses: Vec<Pose>,
    props: Vec<Proprioception>,
    actions: Vec<usize>,
    forced: Vec<bool>,
    blocks: Vec<Block>,
}

/// Writes `episode.json` and `episode.bin` (f32 little-endian blocks:
/// views, policies, decoded, beliefs, values) into `dir`.
pub fn save_episode(log: &EpisodeLog, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut bytes = Vec::new();
    let mut blocks = Vec::new();
    let one = [log.values.clone()];
    let parts: [(&str, &[Vec<f32>]); 5] = [
        ("views", &log.views),
        ("policies", &log.policies),
        ("decoded", &log.decoded),
        ("beliefs", &log.beliefs),
        ("values", &one),
    ];
    for (name, rows) in parts {
        blocks.push(Block {
            name: name.into(),
            rows: rows.iter().map(Vec::len).collect(),
        });
        for v in rows.iter().flatten() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: EPISODE_FORMAT_VERSION,
        endianness: "little".into(),
        geometry: log.geometry,
        sample_id: log.sample_id.clone(),
        budget: log.budget,
        poses: log.poses.clone(),
        props: log.props.clone(),
        actions: log.actions.clone(),
        forced: log.forced.clone(),
        blocks,
    };
    write_json(&dir.join("episode.json"), &manifest)?;
    write_bytes(&dir.join("episode.bin"), &bytes)
}

pub fn load_episode(dir: &Path) -> Result<EpisodeLog> {
    let mpath = dir.join("episode.json");
    let m: Manifest = read_json(&mpath)?;
    let malformed = |reason: String| Error::MalformedManifest {
        path: mpath.clone(),
        reason,
    };
    if m.format_version != EPISODE_FORMAT_VERSION || m.endianness != "little" {
        return Err(malformed(format!("unsupported format {}", m.format_version)));
    }
    if m.poses.len() != m.budget || m.actions.len() + 1 != m.budget.max(1) {
        return Err(malformed("pose/action counts disagree with the budget".into()));
    }
    let bpath = dir.join("episode.bin");
    let bytes = read_bytes(&bpath)?;
    let expected: usize = m.blocks.iter().flat_map(|b| &b.rows).sum::<usize>() * 4;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload {
            path: bpath,
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut take = |name: &str| -> Result<Vec<Vec<f32>>> {
        let block = m
            .blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| malformed(format!("missing block {name}")))?;
        Ok(block.rows.iter().map(|&n| floats.by_ref().take(n).collect()).collect())
    };
    let views = take("views")?;
    let policies = take("policies")?;
    let decoded = take("decoded")?;
    let beliefs = take("beliefs")?;
    let values = take("values")?.into_iter().next().unwrap_or_default();
    Ok(EpisodeLog {
        geometry: m.geometry,
        sample_id: m.sample_id,
        budget: m.budget,
        poses: m.poses,
        props: m.props,
        actions: m.actions,
        forced: m.forced,
        views,
        policies,
        decoded,
        beliefs,
        values,
    })
}
