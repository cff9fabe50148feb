//! Model manifest: a JSON index naming each layer's shape and the raw
//! files beside it (little-endian int8 weight blobs, f32 per-channel
//! scales). Blob paths are relative to the manifest file.

use crate::AppError;
use bbs_core::planner::{LayerDims, QuantizedLayer};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub model: String,
    pub layers: Vec<ManifestLayer>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestLayer {
    pub name: String,
    #[serde(flatten)]
    pub dims: LayerDims,
    pub weights: String,
    pub scales: String,
    pub channels: usize,
}

pub struct LoadedManifest {
    pub manifest: Manifest,
    pub dir: PathBuf,
}

impl LoadedManifest {
    /// Parses the manifest and checks every declared file's size against
    /// its dims without reading blob contents.
    pub fn open(path: &Path) -> Result<Self, AppError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AppError::Data(format!("reading {}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| AppError::Data(format!("parsing {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();

        if manifest.layers.is_empty() {
            return Err(AppError::Data(format!("{}: no layers", path.display())));
        }
        let mut seen = std::collections::HashSet::new();
        for layer in &manifest.layers {
            if !seen.insert(&layer.name) {
                return Err(AppError::Data(format!("duplicate layer name {}", layer.name)));
            }
            if layer.channels != layer.dims.channels() {
                return Err(AppError::Data(format!(
                    "layer {}: channel count {} does not match dims ({})",
                    layer.name,
                    layer.channels,
                    layer.dims.channels()
                )));
            }
            let expect_w = layer.channels as u64 * layer.dims.reduction_len() as u64;
            check_size(&dir.join(&layer.weights), expect_w, &layer.name)?;
            check_size(&dir.join(&layer.scales), 4 * layer.channels as u64, &layer.name)?;
        }
        Ok(LoadedManifest { manifest, dir })
    }

    /// Builds the in-memory layers. `with_weights = false` leaves the
    /// weight tensors zeroed for consumers that only need shapes (the
    /// compressed container carries everything else they use).
    pub fn load_layers(&self, with_weights: bool) -> Result<Vec<QuantizedLayer>, AppError> {
        self.manifest
            .layers
            .iter()
            .map(|ml| {
                let k = ml.dims.reduction_len();
                let weight = if with_weights {
                    read_i8_blob(&self.dir.join(&ml.weights))?
                } else {
                    vec![0i8; ml.channels * k]
                };
                let scales =
                    if with_weights { read_f32_blob(&self.dir.join(&ml.scales))? } else { vec![] };
                QuantizedLayer::new(ml.name.clone(), ml.dims, weight, scales)
                    .map_err(AppError::from)
            })
            .collect()
    }
}

fn check_size(path: &Path, expect: u64, layer: &str) -> Result<(), AppError> {
    let meta = fs::metadata(path)
        .map_err(|e| AppError::Data(format!("layer {layer}: {}: {e}", path.display())))?;
    if meta.len() != expect {
        return Err(AppError::Data(format!(
            "layer {layer}: {} is {} bytes, dims say {expect}",
            path.display(),
            meta.len()
        )));
    }
    Ok(())
}

pub fn read_i8_blob(path: &Path) -> Result<Vec<i8>, AppError> {
    let bytes = fs::read(path).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    Ok(bytes.into_iter().map(|b| b as i8).collect())
}

pub fn read_f32_blob(path: &Path) -> Result<Vec<f32>, AppError> {
    let bytes = fs::read(path).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    if bytes.len() % 4 != 0 {
        return Err(AppError::Data(format!("{}: not a whole number of f32", path.display())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

/// Writes via a temp file in the target directory plus rename, so readers
/// never observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)
        .map_err(|e| AppError::Data(format!("creating {}: {e}", dir.display())))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| AppError::Data(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| AppError::Data(format!("renaming into {}: {e}", path.display())))
}
