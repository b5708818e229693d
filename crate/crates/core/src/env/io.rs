use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{Dataset, GridGeometry, Split, Viewgrid};
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const DATA: &str = "data.bin";

/// `manifest.json` of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub geometry: GridGeometry,
    pub n_samples: usize,
    pub split: Split,
    pub endianness: String,
    pub dtype: String,
    pub sample_ids: Vec<String>,
    /// Raw payload values are divided by this on load; externally prepared
    /// 8-bit data can set 255.
    #[serde(default = "one")]
    pub value_scale: f32,
    #[serde(default)]
    pub dataset_id: String,
}

fn one() -> f32 {
    1.0
}

/// Writes `manifest.json` and `data.bin` into `dir`, creating it if needed.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        geometry: *ds.geometry(),
        n_samples: ds.len(),
        split: ds.split(),
        endianness: "little".into(),
        dtype: "f32".into(),
        sample_ids: ds.samples().iter().map(|s| s.id().to_string()).collect(),
        value_scale: 1.0,
        dataset_id: ds.content_id(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;

    let mut bytes = Vec::with_capacity(ds.len() * ds.geometry().grid_len() * 4);
    for s in ds.samples() {
        for p in s.pixels() {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
    }
    write_bytes(&dir.join(DATA), &bytes)
}

/// Reads a dataset directory written by [`save_dataset`] or prepared
/// externally in the same format.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: DatasetManifest = read_json(&manifest_path)?;
    let malformed = |reason: String| Error::MalformedManifest {
        path: manifest_path.clone(),
        reason,
    };
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(malformed(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    if manifest.endianness != "little" || manifest.dtype != "f32" {
        return Err(malformed(format!(
            "unsupported encoding {}/{}",
            manifest.endianness, manifest.dtype
        )));
    }
    if manifest.sample_ids.len() != manifest.n_samples {
        return Err(malformed(format!(
            "{} sample ids for {} samples",
            manifest.sample_ids.len(),
            manifest.n_samples
        )));
    }
    if !(manifest.value_scale.is_finite() && manifest.value_scale > 0.0) {
        return Err(malformed(format!("bad value_scale {}", manifest.value_scale)));
    }
    let geom = manifest.geometry;
    geom.validate()
        .map_err(|e| malformed(format!("geometry: {e}")))?;

    let data_path = dir.join(DATA);
    let bytes = read_bytes(&data_path)?;
    let per_sample = geom.grid_len() * 4;
    let expected = per_sample * manifest.n_samples;
    if bytes.len() != expected {
        let n = manifest.n_samples.max(1);
        let whole_views = bytes.len() % n == 0 && (bytes.len() / n) % (geom.view_len() * 4) == 0;
        if bytes.len() > expected || whole_views {
            return Err(Error::ShapeMismatch {
                context: format!("payload {}", data_path.display()),
                expected: format!("{} samples of {geom}", manifest.n_samples),
                found: format!(
                    "{} bytes ({} views of {}x{}x{} per sample)",
                    bytes.len(),
                    bytes.len() / n / (geom.view_len() * 4).max(1),
                    geom.channels,
                    geom.view_h,
                    geom.view_w
                ),
            });
        }
        return Err(Error::TruncatedPayload {
            path: data_path,
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }

    let scale = manifest.value_scale;
    let samples = bytes
        .chunks_exact(per_sample)
        .zip(&manifest.sample_ids)
        .map(|(chunk, id)| {
            let px = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) / scale)
                .collect();
            Viewgrid::new(geom, px, id.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(geom, manifest.split, samples)
}

/// Renders a viewgrid as an `N x M` tile montage separated by `gap` pixels.
pub fn montage(grid: &Viewgrid, gap: u32) -> RgbImage {
    let g = grid.geometry();
    let (h, w) = (g.view_h as u32, g.view_w as u32);
    let width = g.n_azim as u32 * w + (g.n_azim as u32 + 1) * gap;
    let height = g.n_elev as u32 * h + (g.n_elev as u32 + 1) * gap;
    let mut img = RgbImage::from_pixel(width, height, Rgb([32, 32, 32]));
    let plane = g.view_h * g.view_w;
    for e in 0..g.n_elev {
        for a in 0..g.n_azim {
            let view = grid.view(super::Pose::new(e, a));
            let (x0, y0) = tile_origin(g, e, a, gap);
            for y in 0..g.view_h {
                for x in 0..g.view_w {
                    let px = |c: usize| to_u8(view[c.min(g.channels - 1) * plane + y * g.view_w + x]);
                    img.put_pixel(x0 + x as u32, y0 + y as u32, Rgb([px(0), px(1), px(2)]));
                }
            }
        }
    }
    img
}

/// Top-left pixel of tile `(elev, azim)` in a [`montage`].
pub fn tile_origin(g: &GridGeometry, elev: usize, azim: usize, gap: u32) -> (u32, u32) {
    (
        gap + azim as u32 * (g.view_w as u32 + gap),
        gap + elev as u32 * (g.view_h as u32 + gap),
    )
}

pub(crate) fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes one montage PNG per sample into `dir/preview/`.
pub fn write_previews(ds: &Dataset, dir: &Path, limit: usize) -> Result<Vec<PathBuf>> {
    let out = dir.join("preview");
    fs::create_dir_all(&out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    ds.samples()
        .iter()
        .take(limit)
        .enumerate()
        .map(|(i, s)| {
            let path = out.join(format!("{i:05}.png"));
            montage(s, 1).save(&path)?;
            Ok(path)
        })
        .collect()
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })?;
    write_bytes(path, text.as_bytes())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::MalformedManifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(bytes)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::NotFound(path.to_path_buf())),
        Err(e) => Err(Error::io(format!("reading {}", path.display()), e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_synthetic, SynthSpec};

    fn sample_ds(geom: GridGeometry) -> Dataset {
        generate_synthetic(&SynthSpec::new(geom, 3, 4)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_ds(GridGeometry::new(2, 3, 3, 4, 4).unwrap());
        save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn missing_manifest_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::NotFound(_))));
    }

    #[test]
    fn fewer_azimuths_in_payload_is_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let small = sample_ds(GridGeometry::new(4, 7, 1, 4, 4).unwrap());
        save_dataset(&small, dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let mut m: DatasetManifest = read_json(&path).unwrap();
        m.geometry.n_azim = 8;
        write_json(&path, &m).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn cut_payload_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample_ds(GridGeometry::new(2, 3, 1, 4, 4).unwrap()), dir.path()).unwrap();
        let data = dir.path().join(DATA);
        let bytes = fs::read(&data).unwrap();
        fs::write(&data, &bytes[..bytes.len() - 6]).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::TruncatedPayload { .. })));
    }

    #[test]
    fn garbage_manifest_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST), b"{not json").unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::MalformedManifest { .. })
        ));
    }

    #[test]
    fn value_scale_normalizes_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridGeometry::new(1, 2, 1, 4, 4).unwrap();
        let m = DatasetManifest {
            format_version: 1,
            geometry: g,
            n_samples: 1,
            split: Split::Test,
            endianness: "little".into(),
            dtype: "f32".into(),
            sample_ids: vec!["ext".into()],
            value_scale: 255.0,
            dataset_id: String::new(),
        };
        write_json(&dir.path().join(MANIFEST), &m).unwrap();
        let bytes: Vec<u8> = (0..g.grid_len()).flat_map(|_| 51.0f32.to_le_bytes()).collect();
        fs::write(dir.path().join(DATA), bytes).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert!(ds.samples()[0].pixels().iter().all(|&p| (p - 0.2).abs() < 1e-6));
    }

    #[test]
    fn previews_have_montage_size() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_ds(GridGeometry::new(2, 3, 1, 4, 4).unwrap());
        let paths = write_previews(&ds, dir.path(), 2).unwrap();
        assert_eq!(paths.len(), 2);
        let img = image::open(&paths[0]).unwrap();
        assert_eq!((img.width(), img.height()), (3 * 4 + 4, 2 * 4 + 3));
    }
}
