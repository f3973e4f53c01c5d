//! MS-COCO instance-segmentation JSON (polygon subset).
//!
//! Export writes a fixed key order with coordinates and boxes at two decimals
//! and areas at four, so datasets diff cleanly. Area and bbox are computed
//! from the rounded polygon. Import validates the structure and reports the
//! JSON path of the first problem.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::annotator::{AnnotationCategory, DroppedAnnotation, FrameAnnotations};
use crate::error::{Error, Result};
use crate::geometry::{Polygon2D, Vec2};

/// Largest accepted mismatch between a stored bbox/area and its polygon.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub segmentation: Vec<Vec<f64>>,
    pub area: f64,
    pub bbox: [f64; 4],
    pub iscrowd: u8,
    /// Scene pallet the record belongs to (not part of core COCO).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<u32>,
    /// Face id for face records (not part of core COCO).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<String>,
}

impl CocoAnnotation {
    /// First segmentation polygon as points.
    pub fn polygon(&self) -> Polygon2D {
        self.segmentation
            .first()
            .map(|flat| flat_to_polygon(flat))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

impl Default for CocoDataset {
    fn default() -> Self {
        Self {
            images: vec![],
            annotations: vec![],
            categories: default_categories(),
        }
    }
}

pub fn default_categories() -> Vec<CocoCategory> {
    AnnotationCategory::ALL
        .iter()
        .map(|c| CocoCategory {
            id: c.id(),
            name: c.name().into(),
        })
        .collect()
}

/// File name recorded for an image id.
pub fn image_file_name(image_id: u64) -> String {
    format!("{image_id:06}.ppm")
}

/// Rounds to two decimals; `-0` becomes `0`.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0 + 0.0
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0 + 0.0
}

fn flat_to_polygon(flat: &[f64]) -> Polygon2D {
    Polygon2D::cleaned(flat.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect())
}

fn flat_area(flat: &[f64]) -> f64 {
    let n = flat.len() / 2;
    let mut s = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        s += flat[2 * i] * flat[2 * j + 1] - flat[2 * j] * flat[2 * i + 1];
    }
    (s / 2.0).abs()
}

fn flat_bbox(flat: &[f64]) -> [f64; 4] {
    let xs = flat.iter().step_by(2);
    let ys = flat.iter().skip(1).step_by(2);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    [x0, y0, round2(x1 - x0), round2(y1 - y0)]
}

/// Builds the dataset for `frames` in the given order. Every frame becomes
/// one image of `width × height`; annotation ids run from 1.
pub fn export_dataset(frames: &[FrameAnnotations], width: u32, height: u32) -> Result<CocoDataset> {
    let mut seen = BTreeSet::new();
    let mut ds = CocoDataset::default();
    for f in frames {
        if !seen.insert(f.image_id) {
            return Err(Error::DuplicateImageId(f.image_id));
        }
        ds.images.push(CocoImage {
            id: f.image_id,
            file_name: image_file_name(f.image_id),
            width,
            height,
        });
        for r in &f.records {
            let flat: Vec<f64> = r
                .polygon
                .vertices()
                .iter()
                .flat_map(|v| [round2(v.x), round2(v.y)])
                .collect();
            ds.annotations.push(CocoAnnotation {
                id: ds.annotations.len() as u64 + 1,
                image_id: f.image_id,
                category_id: r.category.id(),
                area: round4(flat_area(&flat)),
                bbox: flat_bbox(&flat),
                segmentation: vec![flat],
                iscrowd: 0,
                instance_id: Some(r.instance_id),
                face: r.face.clone(),
            });
        }
    }
    Ok(ds)
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn fixed(xs: &[f64], digits: usize) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{:.*}", digits, x + 0.0)).collect();
    format!("[{}]", parts.join(", "))
}

/// Stable, diff-friendly JSON: one image, annotation or category per line.
pub fn to_json(ds: &CocoDataset) -> String {
    let mut out = String::from("{\n  \"images\": [");
    for (i, im) in ds.images.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        let _ = write!(
            out,
            "    {{\"id\": {}, \"file_name\": {}, \"width\": {}, \"height\": {}}}",
            im.id,
            json_str(&im.file_name),
            im.width,
            im.height
        );
    }
    out.push_str(if ds.images.is_empty() { "],\n" } else { "\n  ],\n" });
    out.push_str("  \"annotations\": [");
    for (i, a) in ds.annotations.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        let segs: Vec<String> = a.segmentation.iter().map(|s| fixed(s, 2)).collect();
        let _ = write!(
            out,
            "    {{\"id\": {}, \"image_id\": {}, \"category_id\": {}, \"segmentation\": [{}], \"area\": {:.4}, \"bbox\": {}, \"iscrowd\": {}",
            a.id,
            a.image_id,
            a.category_id,
            segs.join(", "),
            a.area + 0.0,
            fixed(&a.bbox, 2),
            a.iscrowd
        );
        if let Some(id) = a.instance_id {
            let _ = write!(out, ", \"instance_id\": {id}");
        }
        if let Some(face) = &a.face {
            let _ = write!(out, ", \"face\": {}", json_str(face));
        }
        out.push('}');
    }
    out.push_str(if ds.annotations.is_empty() { "],\n" } else { "\n  ],\n" });
    out.push_str("  \"categories\": [");
    for (i, c) in ds.categories.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        let _ = write!(out, "    {{\"id\": {}, \"name\": {}}}", c.id, json_str(&c.name));
    }
    out.push_str(if ds.categories.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
    out
}

/// Parses and validates a dataset. Unknown fields are ignored.
pub fn import_dataset(text: &str) -> Result<CocoDataset> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let ds: CocoDataset = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::InvalidCoco(format!("{path}: {}", e.inner()))
    })?;
    validate(&ds)?;
    Ok(ds)
}

pub fn validate(ds: &CocoDataset) -> Result<()> {
    let bad = |path: String, msg: &str| Err(Error::InvalidCoco(format!("{path}: {msg}")));
    let mut cats = BTreeSet::new();
    for (i, c) in ds.categories.iter().enumerate() {
        if !cats.insert(c.id) {
            return bad(format!("categories[{i}].id"), "duplicate category id");
        }
    }
    let mut images = BTreeSet::new();
    for (i, im) in ds.images.iter().enumerate() {
        if !images.insert(im.id) {
            return bad(format!("images[{i}].id"), "duplicate image id");
        }
    }
    for (i, a) in ds.annotations.iter().enumerate() {
        let at = |field: &str| format!("annotations[{i}].{field}");
        if a.id != i as u64 + 1 {
            return bad(at("id"), "annotation ids must be unique and consecutive from 1");
        }
        if !images.contains(&a.image_id) {
            return bad(at("image_id"), "references a missing image");
        }
        if !cats.contains(&a.category_id) {
            return bad(at("category_id"), "references a missing category");
        }
        if a.iscrowd != 0 {
            return bad(at("iscrowd"), "only polygon annotations (iscrowd = 0) are supported");
        }
        if a.segmentation.len() != 1 {
            return bad(at("segmentation"), "expected exactly one polygon");
        }
        let flat = &a.segmentation[0];
        if flat.len() < 6 || flat.len() % 2 != 0 {
            return bad(at("segmentation[0]"), "polygon needs an even number (>= 6) of coordinates");
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return bad(at("segmentation[0]"), "non-finite coordinate");
        }
        if (flat_area(flat) - a.area).abs() > CONSISTENCY_TOLERANCE {
            return bad(at("area"), "does not match the polygon");
        }
        let bb = flat_bbox(flat);
        if bb.iter().zip(&a.bbox).any(|(x, y)| (x - y).abs() > CONSISTENCY_TOLERANCE) {
            return bad(at("bbox"), "does not match the polygon");
        }
    }
    Ok(())
}

/// Splits images into train and test sets. Image `i` (in id order) goes to
/// test when `floor((i + 1) f) > floor(i f)`, which spreads test images evenly.
/// Annotation ids are renumbered from 1 in each part.
pub fn split_dataset(ds: &CocoDataset, test_fraction: f64) -> Result<(CocoDataset, CocoDataset)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside [0, 1]")));
    }
    let mut ids: Vec<u64> = ds.images.iter().map(|im| im.id).collect();
    ids.sort_unstable();
    let test_ids: BTreeSet<u64> = ids
        .iter()
        .enumerate()
        .filter(|(i, _)| ((*i as f64 + 1.0) * test_fraction).floor() > (*i as f64 * test_fraction).floor())
        .map(|(_, id)| *id)
        .collect();
    let part = |want_test: bool| {
        let mut out = CocoDataset {
            images: ds
                .images
                .iter()
                .filter(|im| test_ids.contains(&im.id) == want_test)
                .cloned()
                .collect(),
            annotations: vec![],
            categories: ds.categories.clone(),
        };
        for a in ds.annotations.iter().filter(|a| test_ids.contains(&a.image_id) == want_test) {
            out.annotations.push(CocoAnnotation {
                id: out.annotations.len() as u64 + 1,
                ..a.clone()
            });
        }
        out
    };
    Ok((part(false), part(true)))
}

/// Drop decisions of one image, as stored in the sidecar file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDrops {
    pub image_id: u64,
    pub dropped: Vec<DroppedAnnotation>,
}

/// Sidecar written next to the annotations.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DropsFile {
    pub frames: Vec<FrameDrops>,
}

impl DropsFile {
    pub fn from_frames(frames: &[FrameAnnotations]) -> Self {
        Self {
            frames: frames
                .iter()
                .map(|f| FrameDrops {
                    image_id: f.image_id,
                    dropped: f.dropped.clone(),
                })
                .collect(),
        }
    }

    pub fn histogram(&self) -> BTreeMap<String, usize> {
        let mut h = BTreeMap::new();
        for d in self.frames.iter().flat_map(|f| &f.dropped) {
            *h.entry(d.reason.to_string()).or_insert(0) += 1;
        }
        h
    }

    pub fn total(&self) -> usize {
        self.frames.iter().map(|f| f.dropped.len()).sum()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("drops serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::InvalidCoco(format!("drops {}: {}", e.path(), e.inner())))
    }
}
