//! Dataset manifests: a JSON array of `{rgb_path, depth_path, domain_tag}`
//! records with paths relative to the manifest's directory. Unlabeled
//! datasets are written with `depth_path: null`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::io::{load_pfm, load_ppm, save_pfm, save_ppm};
use super::sample::{DatasetHandle, DepthSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub rgb_path: String,
    pub depth_path: Option<String>,
    pub domain_tag: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes every sample as PPM (+ PFM when labeled) into `dir` together with
/// `manifest.json`. Invalid depth pixels are stored as 0.
pub fn write_dataset(ds: &DatasetHandle, dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let rgb_name = format!("rgb_{i:05}.ppm");
        save_ppm(ds.rgb(i), dir.join(&rgb_name))?;
        let depth_path = if ds.labeled() {
            let (depth, mask) = ds.ground_truth(i)?;
            let name = format!("depth_{i:05}.pfm");
            let stored = Array2::from_shape_fn(depth.dim(), |ix| if mask[ix] { depth[ix] } else { 0.0 });
            save_pfm(&stored, dir.join(&name))?;
            Some(name)
        } else {
            None
        };
        entries.push(ManifestEntry {
            rgb_path: rgb_name,
            depth_path,
            domain_tag: ds.domain_tag().to_string(),
        });
    }
    write_manifest(&entries, dir.join(MANIFEST_FILE))?;
    Ok(entries)
}

pub fn write_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(entries)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn resolve(manifest: &Path, relative: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(relative)
}

/// Loads a manifest into a handle. The dataset is labeled only if every
/// entry carries a depth map; the validity mask is `depth > 0`.
pub fn load_dataset(manifest: impl AsRef<Path>, seed: u64) -> Result<DatasetHandle> {
    let manifest = manifest.as_ref();
    let entries = read_manifest(manifest)?;
    let labeled_count = entries.iter().filter(|e| e.depth_path.is_some()).count();
    if labeled_count != 0 && labeled_count != entries.len() {
        return Err(Error::Config(format!(
            "{}: {labeled_count} of {} entries have depth; mixed datasets are not supported",
            manifest.display(),
            entries.len()
        )));
    }
    let labeled = labeled_count > 0;
    let tag = entries.first().map(|e| e.domain_tag.clone()).unwrap_or_default();
    let samples = entries
        .iter()
        .map(|e| {
            let rgb = load_ppm(resolve(manifest, &e.rgb_path))?;
            let (depth, valid_mask) = match &e.depth_path {
                Some(p) => {
                    let depth = load_pfm(resolve(manifest, p))?;
                    let mask = depth.mapv(|d| d > 0.0);
                    (depth, mask)
                }
                None => (Array2::zeros((0, 0)), Array2::from_elem((0, 0), false)),
            };
            DepthSample::new(rgb, depth, valid_mask, e.domain_tag.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetHandle::new(samples, labeled, tag, seed))
}
