// SPDX-License-Identifier: Apache-2.0

//! COCO-like annotation and detection files. Boxes are `[x, y, w, h]` on
//! disk and corner form in memory. One record per box: several records may
//! share an image.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, FormatError};
use crate::eval::{Detection, GroundTruth};
use crate::loss::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CocoFile {
    pub images: Vec<ImageInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Vec<Record>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<Record>>,
    #[serde(default)]
    pub categories: Vec<Category>,
}

impl CocoFile {
    fn records(&self, section: &'static str) -> Result<&[Record], FormatError> {
        let recs = match section {
            "annotations" => self.annotations.as_deref(),
            _ => self.detections.as_deref(),
        };
        recs.ok_or(FormatError::MissingSection(section))
    }

    fn validate(&self, section: &'static str) -> Result<(), FormatError> {
        let ids: HashSet<u64> = self.images.iter().map(|i| i.id).collect();
        for (index, r) in self.records(section)?.iter().enumerate() {
            if !ids.contains(&r.image_id) {
                return Err(FormatError::DanglingImage {
                    section,
                    index,
                    image_id: r.image_id,
                });
            }
            if !r.bbox.iter().all(|v| v.is_finite()) {
                return Err(FormatError::Record {
                    section,
                    index,
                    msg: "non-finite bbox coordinate".into(),
                });
            }
            if r.bbox[2] < 0.0 || r.bbox[3] < 0.0 {
                return Err(FormatError::NegativeExtent {
                    section,
                    index,
                    bbox: r.bbox,
                });
            }
            if section == "detections" {
                match r.score {
                    None => {
                        return Err(FormatError::Record {
                            section,
                            index,
                            msg: "missing score".into(),
                        })
                    }
                    Some(s) if !(0.0..=1.0).contains(&s) => {
                        return Err(FormatError::Record {
                            section,
                            index,
                            msg: format!("score {s} outside [0, 1]"),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn ground_truths(&self) -> Result<Vec<GroundTruth>, FormatError> {
        self.validate("annotations")?;
        self.records("annotations")?
            .iter()
            .enumerate()
            .map(|(index, r)| {
                Ok(GroundTruth {
                    image_id: r.image_id,
                    class_id: r.category_id,
                    bbox: to_box(r, "annotations", index)?,
                })
            })
            .collect()
    }

    pub fn detections(&self) -> Result<Vec<Detection>, FormatError> {
        self.validate("detections")?;
        self.records("detections")?
            .iter()
            .enumerate()
            .map(|(index, r)| {
                Ok(Detection {
                    image_id: r.image_id,
                    class_id: r.category_id,
                    bbox: to_box(r, "detections", index)?,
                    score: r.score.unwrap_or_default(),
                })
            })
            .collect()
    }

    pub fn from_ground_truths(images: Vec<ImageInfo>, categories: Vec<Category>, gts: &[GroundTruth]) -> Self {
        Self {
            images,
            annotations: Some(gts.iter().map(|g| from_box(g.image_id, g.class_id, &g.bbox, None)).collect()),
            detections: None,
            categories,
        }
    }

    pub fn from_detections(images: Vec<ImageInfo>, categories: Vec<Category>, dets: &[Detection]) -> Self {
        Self {
            images,
            annotations: None,
            detections: Some(
                dets.iter()
                    .map(|d| from_box(d.image_id, d.class_id, &d.bbox, Some(d.score)))
                    .collect(),
            ),
            categories,
        }
    }
}

fn to_box(r: &Record, section: &'static str, index: usize) -> Result<BBox, FormatError> {
    let [x, y, w, h] = r.bbox;
    BBox::from_xywh(x, y, w, h).map_err(|e| FormatError::Record {
        section,
        index,
        msg: e.to_string(),
    })
}

fn from_box(image_id: u64, category_id: u32, b: &BBox, score: Option<f64>) -> Record {
    Record {
        image_id,
        category_id,
        bbox: [b.x1, b.y1, b.width(), b.height()],
        score,
    }
}

pub fn parse_annotations(text: &str) -> Result<Vec<GroundTruth>, FormatError> {
    serde_json::from_str::<CocoFile>(text)?.ground_truths()
}

pub fn parse_detections(text: &str) -> Result<Vec<Detection>, FormatError> {
    serde_json::from_str::<CocoFile>(text)?.detections()
}

/// Reads and validates an annotation file, keeping images and categories.
pub fn read_annotation_file(path: &Path) -> Result<CocoFile, FormatError> {
    let file: CocoFile = serde_json::from_str(&read_file(path)?)?;
    file.validate("annotations")?;
    Ok(file)
}

pub fn read_detection_file(path: &Path) -> Result<CocoFile, FormatError> {
    let file: CocoFile = serde_json::from_str(&read_file(path)?)?;
    file.validate("detections")?;
    Ok(file)
}

pub fn load_annotations(path: &Path) -> Result<Vec<GroundTruth>, FormatError> {
    read_annotation_file(path)?.ground_truths()
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>, FormatError> {
    read_detection_file(path)?.detections()
}

pub fn write_annotation_file(file: &CocoFile) -> Result<String, FormatError> {
    file.validate("annotations")?;
    Ok(serde_json::to_string_pretty(file)? + "\n")
}

pub fn write_detection_file(file: &CocoFile) -> Result<String, FormatError> {
    file.validate("detections")?;
    Ok(serde_json::to_string_pretty(file)? + "\n")
}
