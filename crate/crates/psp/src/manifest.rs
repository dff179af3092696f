//! Dataset manifests: one feature-file path per line. Relative paths are
//! resolved against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use psp_core::data::VideoSample;

use crate::error::{Error, Result};
use crate::features::{load_features, save_features};

pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| base.join(l))
        .collect())
}

pub fn write_manifest(path: &Path, entries: &[PathBuf]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&e.display().to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads every video listed in a manifest, in order.
pub fn load_dataset(manifest: &Path) -> Result<Vec<VideoSample>> {
    read_manifest(manifest)?
        .iter()
        .map(|p| load_features(p))
        .collect()
}

/// Writes `<video_id>.avef` files into `dir` and a `manifest.txt` listing
/// them by file name. Returns the manifest path.
pub fn write_dataset(dir: &Path, samples: &[VideoSample]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let name = PathBuf::from(format!("{}.avef", s.video_id));
        save_features(s, &dir.join(&name))?;
        entries.push(name);
    }
    let manifest = dir.join("manifest.txt");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
