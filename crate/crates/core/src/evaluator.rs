//! COCO-style detection metrics: AP over IoU 0.50:0.05:0.95, AP50, AP75,
//! per-category AP, average recall and best-threshold F1.
//!
//! Matching follows the COCO evaluator: per image and category, detections
//! (top 100 by score) are taken in descending score order and each one
//! claims the unmatched ground truth with the highest IoU at or above the
//! threshold. AP is the 101-point interpolated area under the precision
//! envelope.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coco::CocoDataset;
use crate::error::{Error, Result};
use crate::geometry::{clip_polygon_convex, polygon_area, Polygon2D, Vec2};
use crate::raster::{mask_iou, rasterize_polygon, Mask};

pub const MAX_DETECTIONS: usize = 100;
pub const RECALL_POINTS: usize = 101;
/// Supersampling factor of the raster IoU fallback.
pub const RASTER_SUPERSAMPLE: f64 = 4.0;

/// `0.50, 0.55, …, 0.95`.
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouType {
    Segm,
    Bbox,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetGeometry {
    Polygon(Polygon2D),
    Bbox([f64; 4]),
    Mask(Mask),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u32,
    pub geometry: DetGeometry,
    pub score: f64,
}

/// Detections that are exact copies of the ground truth with score 1.
pub fn detections_from_gt(gt: &CocoDataset) -> Vec<Detection> {
    gt.annotations
        .iter()
        .map(|a| Detection {
            image_id: a.image_id,
            category_id: a.category_id,
            geometry: DetGeometry::Polygon(a.polygon()),
            score: 1.0,
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawSegmentation {
    Polygons(Vec<Vec<f64>>),
    Rle { size: [u32; 2], counts: RleCounts },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RleCounts {
    Raw(Vec<u64>),
    Compressed(String),
}

#[derive(Debug, Deserialize)]
struct RawDetection {
    image_id: u64,
    category_id: u32,
    #[serde(default)]
    segmentation: Option<RawSegmentation>,
    #[serde(default)]
    bbox: Option<[f64; 4]>,
    score: f64,
}

/// Decodes COCO's compressed RLE count string.
pub fn decode_rle_string(s: &str) -> Result<Vec<u64>> {
    let bytes = s.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0;
        loop {
            let Some(&b) = bytes.get(p) else {
                return Err(Error::InvalidCoco("truncated RLE counts".into()));
            };
            let c = b as i64 - 48;
            if !(0..64).contains(&c) || k > 12 {
                return Err(Error::InvalidCoco("malformed RLE counts".into()));
            }
            x |= (c & 0x1f) << (5 * k);
            p += 1;
            k += 1;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        counts.push(x);
    }
    counts
        .into_iter()
        .map(|c| u64::try_from(c).map_err(|_| Error::InvalidCoco("negative RLE run".into())))
        .collect()
}

/// Column-major run lengths (starting with background) to a mask.
pub fn rle_to_mask(counts: &[u64], width: u32, height: u32) -> Result<Mask> {
    let total = width as u64 * height as u64;
    if counts.iter().sum::<u64>() != total {
        return Err(Error::InvalidCoco(format!(
            "RLE covers {} pixels, expected {total}",
            counts.iter().sum::<u64>()
        )));
    }
    let mut mask = Mask::new(width, height);
    let mut i = 0u64;
    for (k, &run) in counts.iter().enumerate() {
        if k % 2 == 1 {
            for j in i..i + run {
                mask.set((j / height as u64) as u32, (j % height as u64) as u32, true);
            }
        }
        i += run;
    }
    Ok(mask)
}

/// Parses a COCO results file: a list of `{image_id, category_id,
/// segmentation | bbox, score}`. Segmentations may be polygons or RLE.
pub fn parse_detections(text: &str, iou_type: IouType) -> Result<Vec<Detection>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: Vec<RawDetection> = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::InvalidCoco(format!("detections {}: {}", e.path(), e.inner())))?;
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let bad = |msg: String| Error::InvalidCoco(format!("detections [{i}]: {msg}"));
            if !r.score.is_finite() {
                return Err(bad("score is not finite".into()));
            }
            let geometry = match (iou_type, r.segmentation, r.bbox) {
                (IouType::Bbox, _, Some(b)) => DetGeometry::Bbox(b),
                (IouType::Bbox, _, None) => return Err(bad("bbox missing".into())),
                (IouType::Segm, Some(RawSegmentation::Polygons(p)), _) => {
                    let flat = p.first().ok_or_else(|| bad("empty segmentation".into()))?;
                    if flat.len() < 6 || flat.len() % 2 != 0 || flat.iter().any(|v| !v.is_finite()) {
                        return Err(bad("polygon needs an even number (>= 6) of finite coordinates".into()));
                    }
                    DetGeometry::Polygon(Polygon2D::cleaned(
                        flat.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect(),
                    ))
                }
                (IouType::Segm, Some(RawSegmentation::Rle { size, counts }), _) => {
                    let counts = match counts {
                        RleCounts::Raw(c) => c,
                        RleCounts::Compressed(s) => decode_rle_string(&s).map_err(|e| bad(e.to_string()))?,
                    };
                    let [h, w] = size;
                    DetGeometry::Mask(rle_to_mask(&counts, w, h).map_err(|e| bad(e.to_string()))?)
                }
                (IouType::Segm, None, _) => return Err(bad("segmentation missing".into())),
            };
            Ok(Detection {
                image_id: r.image_id,
                category_id: r.category_id,
                geometry,
                score: r.score,
            })
        })
        .collect()
}

fn rect_polygon(b: [f64; 4]) -> Polygon2D {
    Polygon2D::cleaned(vec![
        Vec2::new(b[0], b[1]),
        Vec2::new(b[0] + b[2], b[1]),
        Vec2::new(b[0] + b[2], b[1] + b[3]),
        Vec2::new(b[0], b[1] + b[3]),
    ])
}

fn polygon_bounds(p: &Polygon2D) -> Option<[f64; 4]> {
    crate::geometry::polygon_bbox(p).ok()
}

pub fn bbox_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let ih = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Polygon IoU. Exact when either polygon is convex; otherwise both are
/// rasterized at 4× supersampling over their joint bounds.
pub fn polygon_iou(a: &Polygon2D, b: &Polygon2D) -> f64 {
    let (Some(ba), Some(bb)) = (polygon_bounds(a), polygon_bounds(b)) else {
        return 0.0;
    };
    if bbox_iou(ba, bb) == 0.0 {
        return 0.0;
    }
    let (area_a, area_b) = (polygon_area(a), polygon_area(b));
    let inter = if b.is_convex() {
        Some(polygon_area(&clip_polygon_convex(a, b)))
    } else if a.is_convex() {
        Some(polygon_area(&clip_polygon_convex(b, a)))
    } else {
        None
    };
    match inter {
        Some(i) => {
            let union = area_a + area_b - i;
            if union > 0.0 {
                (i / union).clamp(0.0, 1.0)
            } else {
                0.0
            }
        }
        None => raster_iou(a, b, ba, bb),
    }
}

fn raster_iou(a: &Polygon2D, b: &Polygon2D, ba: [f64; 4], bb: [f64; 4]) -> f64 {
    let x0 = ba[0].min(bb[0]).floor();
    let y0 = ba[1].min(bb[1]).floor();
    let x1 = (ba[0] + ba[2]).max(bb[0] + bb[2]).ceil();
    let y1 = (ba[1] + ba[3]).max(bb[1] + bb[3]).ceil();
    let s = RASTER_SUPERSAMPLE;
    let w = ((x1 - x0) * s) as u32 + 1;
    let h = ((y1 - y0) * s) as u32 + 1;
    let scale = |p: &Polygon2D| {
        Polygon2D::cleaned(
            p.vertices()
                .iter()
                .map(|v| Vec2::new((v.x - x0) * s, (v.y - y0) * s))
                .collect(),
        )
    };
    mask_iou(&rasterize_polygon(&scale(a), w, h), &rasterize_polygon(&scale(b), w, h)).unwrap_or(0.0)
}

fn gt_iou(det: &DetGeometry, gt_poly: &Polygon2D, gt_bbox: [f64; 4], image_size: (u32, u32), iou_type: IouType) -> f64 {
    match iou_type {
        IouType::Bbox => {
            let db = match det {
                DetGeometry::Bbox(b) => *b,
                DetGeometry::Polygon(p) => polygon_bounds(p).unwrap_or([0.0; 4]),
                DetGeometry::Mask(m) => mask_bounds(m),
            };
            bbox_iou(db, gt_bbox)
        }
        IouType::Segm => match det {
            DetGeometry::Polygon(p) => polygon_iou(p, gt_poly),
            DetGeometry::Bbox(b) => polygon_iou(&rect_polygon(*b), gt_poly),
            DetGeometry::Mask(m) => {
                if bbox_iou(mask_bounds(m), gt_bbox) == 0.0 {
                    return 0.0;
                }
                let (w, h) = if image_size.0 > 0 { image_size } else { (m.width(), m.height()) };
                mask_iou(m, &rasterize_polygon(gt_poly, w, h)).unwrap_or(0.0)
            }
        },
    }
}

fn mask_bounds(m: &Mask) -> [f64; 4] {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    let mut any = false;
    for (x, y) in m.pixels() {
        any = true;
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x + 1);
        y1 = y1.max(y + 1);
    }
    if !any {
        return [0.0; 4];
    }
    [x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64]
}

/// One matched detection/ground-truth pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchPair {
    /// Index into the detection list passed in.
    pub detection: usize,
    pub gt_id: u64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdMatches {
    pub iou_threshold: f64,
    pub pairs: Vec<MatchPair>,
}

/// Outcome of one detection at one threshold, used for accumulation.
#[derive(Debug, Clone, Copy)]
struct Scored {
    score: f64,
    /// Global order for stable tie breaking.
    order: usize,
    tp: bool,
}

struct Evaluation {
    /// `[category][threshold]` scored detections.
    scored: BTreeMap<u32, Vec<Vec<Scored>>>,
    gt_counts: BTreeMap<u32, usize>,
    det_counts: BTreeMap<u32, usize>,
    matches: Vec<ThresholdMatches>,
}

fn sort_by_score(idx: &mut [usize], score: impl Fn(usize) -> f64) {
    idx.sort_by(|&a, &b| score(b).partial_cmp(&score(a)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
}

fn evaluate(gt: &CocoDataset, dets: &[Detection], thresholds: &[f64], iou_type: IouType) -> Evaluation {
    let sizes: BTreeMap<u64, (u32, u32)> = gt.images.iter().map(|im| (im.id, (im.width, im.height))).collect();
    let mut gt_groups: BTreeMap<(u64, u32), Vec<usize>> = BTreeMap::new();
    for (i, a) in gt.annotations.iter().enumerate() {
        gt_groups.entry((a.image_id, a.category_id)).or_default().push(i);
    }
    let mut det_groups: BTreeMap<(u64, u32), Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        det_groups.entry((d.image_id, d.category_id)).or_default().push(i);
    }
    let mut gt_counts: BTreeMap<u32, usize> = BTreeMap::new();
    for c in &gt.categories {
        gt_counts.insert(c.id, 0);
    }
    for a in &gt.annotations {
        *gt_counts.entry(a.category_id).or_default() += 1;
    }
    let mut det_counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut scored: BTreeMap<u32, Vec<Vec<Scored>>> = BTreeMap::new();
    let mut matches: Vec<ThresholdMatches> = thresholds
        .iter()
        .map(|&t| ThresholdMatches {
            iou_threshold: t,
            pairs: vec![],
        })
        .collect();

    let mut keys: Vec<(u64, u32)> = gt_groups.keys().chain(det_groups.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    for key in keys {
        let gts: Vec<usize> = {
            let mut g = gt_groups.get(&key).cloned().unwrap_or_default();
            g.sort_by_key(|&i| gt.annotations[i].id);
            g
        };
        let mut ds = det_groups.get(&key).cloned().unwrap_or_default();
        sort_by_score(&mut ds, |i| dets[i].score);
        ds.truncate(MAX_DETECTIONS);
        *det_counts.entry(key.1).or_default() += ds.len();

        let gt_polys: Vec<(Polygon2D, [f64; 4])> =
            gts.iter().map(|&i| (gt.annotations[i].polygon(), gt.annotations[i].bbox)).collect();
        let size = sizes.get(&key.0).copied().unwrap_or((0, 0));
        let ious: Vec<Vec<f64>> = ds
            .iter()
            .map(|&d| {
                gt_polys
                    .iter()
                    .map(|(p, b)| gt_iou(&dets[d].geometry, p, *b, size, iou_type))
                    .collect()
            })
            .collect();

        let per_cat = scored
            .entry(key.1)
            .or_insert_with(|| vec![Vec::new(); thresholds.len()]);
        for (ti, &t) in thresholds.iter().enumerate() {
            let mut taken = vec![false; gts.len()];
            for (k, &d) in ds.iter().enumerate() {
                let mut best: Option<usize> = None;
                for g in 0..gts.len() {
                    if taken[g] || ious[k][g] < t {
                        continue;
                    }
                    // Strictly higher IoU wins; gts are in id order so ties keep the lower id.
                    if best.is_none_or(|b| ious[k][g] > ious[k][b]) {
                        best = Some(g);
                    }
                }
                if let Some(g) = best {
                    taken[g] = true;
                    matches[ti].pairs.push(MatchPair {
                        detection: d,
                        gt_id: gt.annotations[gts[g]].id,
                        iou: ious[k][g],
                    });
                }
                per_cat[ti].push(Scored {
                    score: dets[d].score,
                    order: d,
                    tp: best.is_some(),
                });
            }
        }
    }
    Evaluation {
        scored,
        gt_counts,
        det_counts,
        matches,
    }
}

/// Greedy matches per IoU threshold.
pub fn match_detections(gt: &CocoDataset, dets: &[Detection], iou_threshold: f64, iou_type: IouType) -> Vec<MatchPair> {
    evaluate(gt, dets, &[iou_threshold], iou_type)
        .matches
        .pop()
        .map(|m| m.pairs)
        .unwrap_or_default()
}

fn sorted(mut s: Vec<Scored>) -> Vec<Scored> {
    s.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then(a.order.cmp(&b.order)));
    s
}

/// 101-point interpolated AP and final recall.
fn ap_and_recall(s: &[Scored], num_gt: usize) -> (f64, f64) {
    if num_gt == 0 {
        return (0.0, 0.0);
    }
    let s = sorted(s.to_vec());
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(s.len());
    let mut precision = Vec::with_capacity(s.len());
    for (k, d) in s.iter().enumerate() {
        tp += d.tp as usize;
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let mut sum = 0.0;
    for r in 0..RECALL_POINTS {
        let target = r as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&x| x < target);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    (sum / RECALL_POINTS as f64, recall.last().copied().unwrap_or(0.0))
}

/// Best F1 over score thresholds; returns `(f1, threshold)`. Cuts are only
/// placed between distinct scores.
fn best_f1(s: &[Scored], num_gt: usize) -> (f64, Option<f64>) {
    let s = sorted(s.to_vec());
    let mut best = (0.0, None);
    let mut tp = 0usize;
    for (k, d) in s.iter().enumerate() {
        tp += d.tp as usize;
        if s.get(k + 1).is_some_and(|n| n.score == d.score) {
            continue;
        }
        let p = tp as f64 / (k + 1) as f64;
        let r = if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        if f1 > best.0 {
            best = (f1, Some(d.score));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar: f64,
    pub f1: f64,
    /// Score threshold at which `f1` is reached.
    pub f1_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryReport {
    pub category_id: u32,
    pub name: String,
    pub num_gt: usize,
    pub num_detections: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub iou_type: IouType,
    pub iou_thresholds: Vec<f64>,
    pub categories: Vec<CategoryReport>,
    /// AP, AP50, AP75 and AR are means over categories with ground truth; F1
    /// pools all categories at one score threshold.
    pub overall: Metrics,
    pub matches: Vec<ThresholdMatches>,
}

impl EvalReport {
    pub fn category(&self, id: u32) -> Option<&CategoryReport> {
        self.categories.iter().find(|c| c.category_id == id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn compute_report(gt: &CocoDataset, dets: &[Detection], iou_type: IouType) -> Result<EvalReport> {
    if gt.annotations.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let thresholds = iou_thresholds();
    let i50 = 0;
    let i75 = 5;
    let ev = evaluate(gt, dets, &thresholds, iou_type);
    let names: BTreeMap<u32, &str> = gt.categories.iter().map(|c| (c.id, c.name.as_str())).collect();

    let mut categories = Vec::new();
    let mut pooled50 = Vec::new();
    for (&cat, &num_gt) in &ev.gt_counts {
        let per_t = ev
            .scored
            .get(&cat)
            .cloned()
            .unwrap_or_else(|| vec![Vec::new(); thresholds.len()]);
        let (aps, recalls): (Vec<f64>, Vec<f64>) = per_t.iter().map(|s| ap_and_recall(s, num_gt)).unzip();
        let (f1, f1_threshold) = best_f1(&per_t[i50], num_gt);
        pooled50.extend(per_t[i50].iter().copied());
        categories.push(CategoryReport {
            category_id: cat,
            name: names.get(&cat).map(|s| s.to_string()).unwrap_or_else(|| format!("category {cat}")),
            num_gt,
            num_detections: ev.det_counts.get(&cat).copied().unwrap_or(0),
            metrics: Metrics {
                ap: mean(&aps),
                ap50: aps[i50],
                ap75: aps[i75],
                ar: mean(&recalls),
                f1,
                f1_threshold,
            },
        });
    }
    let with_gt: Vec<&Metrics> = categories.iter().filter(|c| c.num_gt > 0).map(|c| &c.metrics).collect();
    let avg = |f: fn(&Metrics) -> f64| mean(&with_gt.iter().map(|m| f(m)).collect::<Vec<_>>());
    let (f1, f1_threshold) = best_f1(&pooled50, gt.annotations.len());
    let overall = Metrics {
        ap: avg(|m| m.ap),
        ap50: avg(|m| m.ap50),
        ap75: avg(|m| m.ap75),
        ar: avg(|m| m.ar),
        f1,
        f1_threshold,
    };
    Ok(EvalReport {
        iou_type,
        iou_thresholds: thresholds,
        categories,
        overall,
        matches: ev.matches,
    })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Text report: a classification table (AP_f, AP_b, AP, AP50, AP75) and a
/// recall/F1 table, one row per labelled report.
pub fn format_tables(rows: &[(String, &EvalReport)]) -> String {
    let cat_ap = |r: &EvalReport, id: u32| r.category(id).filter(|c| c.num_gt > 0).map(|c| c.metrics.ap);
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(7);
    let mut out = String::from("Classification results\n");
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}", "", "AP_f", "AP_b", "AP", "AP50", "AP75");
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}",
            label,
            cell(cat_ap(r, 1)),
            cell(cat_ap(r, 2)),
            cell(Some(r.overall.ap)),
            cell(Some(r.overall.ap50)),
            cell(Some(r.overall.ap75)),
        );
    }
    out.push_str("\nAverage recall and F1 score\n");
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}", "", "Recall", "F1");
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}",
            label,
            cell(Some(r.overall.ar)),
            cell(Some(r.overall.f1))
        );
    }
    out
}
