//! Dataset directories: `video_NNN.dcat` observation files, matching
//! `video_NNN.csv` annotations and a `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dacat::data::{load_annotations, load_embeddings, SyntheticConfig, Video};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub num_phases: usize,
    pub d_raw: usize,
    /// File stems, in dataset order.
    pub videos: Vec<String>,
    /// Generator settings when the data is synthetic.
    pub generator: Option<SyntheticConfig>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub struct Dataset {
    pub manifest: DatasetManifest,
    pub videos: Vec<Video>,
}

/// Loads a dataset directory. Without a manifest every `*.dcat` file with a
/// sibling `*.csv` is taken in name order, and `num_phases` must be given.
pub fn load_dataset(dir: &Path, num_phases: Option<usize>) -> Result<Dataset> {
    if !dir.is_dir() {
        bail!("dataset directory {} does not exist", dir.display());
    }
    let manifest_path = dir.join(MANIFEST);
    let mut manifest: DatasetManifest = if manifest_path.exists() {
        read_json(&manifest_path)?
    } else {
        let Some(k) = num_phases else {
            bail!("{} has no {MANIFEST}; pass --phases", dir.display());
        };
        let mut stems: Vec<String> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "dcat"))
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .collect();
        stems.sort();
        DatasetManifest {
            num_phases: k,
            d_raw: 0,
            videos: stems,
            generator: None,
        }
    };
    if let Some(k) = num_phases {
        if k != manifest.num_phases {
            bail!("--phases {k} disagrees with the dataset's {} phases", manifest.num_phases);
        }
    }
    if manifest.videos.is_empty() {
        bail!("no videos found in {}", dir.display());
    }
    let mut videos = Vec::with_capacity(manifest.videos.len());
    for stem in &manifest.videos {
        let (obs_path, ann_path) = video_paths(dir, stem);
        let emb = load_embeddings(&obs_path).with_context(|| format!("loading {}", obs_path.display()))?;
        let labels = load_annotations(&ann_path, manifest.num_phases)
            .with_context(|| format!("loading {}", ann_path.display()))?;
        if emb.frames() != labels.len() {
            bail!(
                "{}: {} frames but {} labels",
                stem,
                emb.frames(),
                labels.len()
            );
        }
        if manifest.d_raw == 0 {
            manifest.d_raw = emb.dim;
        } else if emb.dim != manifest.d_raw {
            bail!("{}: dimension {} but dataset has {}", stem, emb.dim, manifest.d_raw);
        }
        videos.push(Video::new(emb.to_f64(), emb.dim, labels)?);
    }
    Ok(Dataset { manifest, videos })
}

pub fn video_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.dcat")), dir.join(format!("{stem}.csv")))
}

pub fn video_stem(index: usize) -> String {
    format!("video_{index:03}")
}
