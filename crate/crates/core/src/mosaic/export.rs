use serde::{Deserialize, Serialize};

use super::{MosaicError, PatchRaster};
use crate::numfmt::to_json_string;
use crate::pixmap::{load_pixmap, save_pixmap};
use crate::raster::Raster;

/// Metadata written next to an exported patch pixmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSidecar {
    pub label: String,
    pub source_image: String,
    pub width: usize,
    pub height: usize,
    pub origin_g: [f64; 2],
    pub step: f64,
    pub centroid: [f64; 2],
    /// Alternating run lengths of the row-major mask, starting with an
    /// invalid run (possibly of length zero).
    pub mask_runs: Vec<usize>,
}

pub fn mask_runs(mask: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut length = 0usize;
    for &m in mask {
        if m == current {
            length += 1;
        } else {
            runs.push(length);
            current = m;
            length = 1;
        }
    }
    runs.push(length);
    runs
}

fn expand_runs(runs: &[usize], total: usize) -> Result<Vec<bool>, MosaicError> {
    let mut mask = Vec::with_capacity(total);
    for (k, &run) in runs.iter().enumerate() {
        if run > total - mask.len() {
            return Err(MosaicError::Layout("mask runs exceed the grid".into()));
        }
        mask.extend(std::iter::repeat_n(k % 2 == 1, run));
    }
    if mask.len() != total {
        return Err(MosaicError::Layout(format!(
            "mask runs cover {} of {total} cells",
            mask.len()
        )));
    }
    Ok(mask)
}

/// Encode a patch as a P5 pixmap (invalid cells written as 0) plus sidecar
/// JSON.
pub fn save_patch(patch: &PatchRaster) -> Result<(Vec<u8>, String), MosaicError> {
    let samples = patch
        .samples()
        .iter()
        .zip(patch.mask())
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    let raster = Raster::new(patch.width(), patch.height(), 1, samples)?;
    let sidecar = PatchSidecar {
        label: patch.label().to_string(),
        source_image: patch.source_image().to_string(),
        width: patch.width(),
        height: patch.height(),
        origin_g: patch.origin_g().into(),
        step: patch.step(),
        centroid: patch.centroid().into(),
        mask_runs: mask_runs(patch.mask()),
    };
    let json = to_json_string(&sidecar).map_err(|e| MosaicError::Layout(e.to_string()))?;
    Ok((save_pixmap(&raster), json))
}

/// Decode a patch written by [`save_patch`]. Samples come back quantized to
/// the pixmap's 8-bit levels.
pub fn load_patch(pixmap: &[u8], sidecar: &[u8]) -> Result<PatchRaster, MosaicError> {
    let meta: PatchSidecar =
        serde_json::from_slice(sidecar).map_err(|e| MosaicError::Layout(e.to_string()))?;
    let raster = load_pixmap(pixmap).map_err(|e| MosaicError::Layout(e.to_string()))?;
    if raster.channels() != 1 || raster.width() != meta.width || raster.height() != meta.height {
        return Err(MosaicError::Layout(format!(
            "pixmap is {}x{}x{}, sidecar says {}x{}",
            raster.width(),
            raster.height(),
            raster.channels(),
            meta.width,
            meta.height
        )));
    }
    let mask = expand_runs(&meta.mask_runs, meta.width * meta.height)?;
    PatchRaster::new(
        meta.label,
        meta.source_image,
        meta.width,
        meta.height,
        raster.into_samples(),
        mask,
        meta.origin_g,
        meta.step,
    )
}
