use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::MosaicError;

/// One region of interest: a pixel polygon in a named ground image.
///
/// Vertices use the reconstruction's pixel convention, where the top-left
/// corner of the image is `(0, 0)` and pixel centers sit at half-integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub image: String,
    #[serde(default)]
    pub label: Option<String>,
    pub vertices: Vec<[f64; 2]>,
    /// Excluded from the least-squares set and optimized independently
    /// for the drift analysis.
    #[serde(default)]
    pub extra: bool,
}

impl RoiSpec {
    /// Explicit label, or `<image>#<index>` when none is given.
    pub fn label_or(&self, index: usize) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}#{}", self.image, index))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoiConfig {
    pub rois: Vec<RoiSpec>,
}

impl RoiConfig {
    /// Labels resolved for every roi, in file order.
    pub fn labels(&self) -> Vec<String> {
        self.rois.iter().enumerate().map(|(i, r)| r.label_or(i)).collect()
    }
}

/// Parse and validate a roi configuration document.
pub fn parse_roi_config(bytes: &[u8]) -> Result<RoiConfig, MosaicError> {
    let config: RoiConfig =
        serde_json::from_slice(bytes).map_err(|e| MosaicError::RoiConfig(e.to_string()))?;
    validate_rois(&config)?;
    Ok(config)
}

pub fn validate_rois(config: &RoiConfig) -> Result<(), MosaicError> {
    if config.rois.is_empty() {
        return Err(MosaicError::RoiConfig("no regions of interest".into()));
    }
    let mut seen = BTreeSet::new();
    for (label, roi) in config.labels().into_iter().zip(&config.rois) {
        if roi.vertices.len() < 3 {
            return Err(MosaicError::RoiConfig(format!(
                "roi '{label}' has {} vertices, need at least 3",
                roi.vertices.len()
            )));
        }
        if roi.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MosaicError::RoiConfig(format!("roi '{label}' has a non-finite vertex")));
        }
        if !seen.insert(label.clone()) {
            return Err(MosaicError::RoiConfig(format!("duplicate roi label '{label}'")));
        }
    }
    Ok(())
}

/// Absolute polygon area by the shoelace formula.
pub fn polygon_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let [x0, y0] = vertices[i];
            let [x1, y1] = vertices[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    0.5 * twice.abs()
}

/// Even-odd point-in-polygon test.
pub fn polygon_contains(vertices: &[[f64; 2]], x: f64, y: f64) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let [xi, yi] = vertices[i];
        let [xj, yj] = vertices[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = parse_roi_config(
            br#"{"rois":[{"image":"a.ppm","vertices":[[0,0],[4,0],[4,3]]},
                         {"image":"a.ppm","label":"B","vertices":[[0,0],[1,0],[0,1]],"extra":true}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.labels(), vec!["a.ppm#0".to_string(), "B".to_string()]);
        assert!(cfg.rois[1].extra);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(parse_roi_config(b"{}").is_err());
        assert!(parse_roi_config(br#"{"rois":[]}"#).is_err());
        assert!(parse_roi_config(br#"{"rois":[{"image":"a","vertices":[[0,0],[1,1]]}]}"#).is_err());
        let dup = br#"{"rois":[{"image":"a","label":"x","vertices":[[0,0],[1,0],[0,1]]},
                               {"image":"b","label":"x","vertices":[[0,0],[1,0],[0,1]]}]}"#;
        assert!(parse_roi_config(dup).is_err());
    }

    #[test]
    fn polygon_helpers() {
        let square = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]];
        assert_eq!(polygon_area(&square), 4.0);
        assert!(polygon_contains(&square, 1.0, 1.0));
        assert!(!polygon_contains(&square, 3.0, 1.0));
        assert!(!polygon_contains(&square, 1.0, -0.1));
    }
}
