//! Detection list input for the ROI-extraction command: a JSON array of
//! boxes with optional score, class, and class-probability annotations.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pool::BoundingBox;

#[derive(Debug, Clone, Deserialize)]
pub struct Detection {
    pub bbox: [f64; 4],
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub class: Option<String>,
    #[serde(default)]
    pub class_probs: Option<Vec<f64>>,
}

impl Detection {
    pub fn bounding_box(&self) -> Result<BoundingBox> {
        let [x, y, w, h] = self.bbox;
        BoundingBox::new(x, y, w, h)
    }
}

/// Reads a JSON array of detections.
pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("detections: {e}")))
}
