//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use palletsynth::coco::{default_categories, CocoAnnotation, CocoDataset, CocoImage};
use palletsynth::geometry::{Polygon2D, Vec2, Vec3};
use palletsynth::raster::Mask;

/// Hull vertices by brute force: for every ordered pair `(a, b)` that keeps
/// all points on its non-negative side, the two extreme points on the line
/// are hull vertices. `None` for fewer than three distinct or all-collinear
/// points.
pub fn brute_hull(points: &[Vec2]) -> Option<BTreeSet<(u64, u64)>> {
    let mut uniq: Vec<Vec2> = Vec::new();
    for p in points {
        if !uniq.contains(p) {
            uniq.push(*p);
        }
    }
    let mut out = BTreeSet::new();
    for &a in &uniq {
        for &b in &uniq {
            if a == b {
                continue;
            }
            let d = b - a;
            if uniq.iter().any(|&p| d.cross(p - a) < 0.0) {
                continue;
            }
            let on_line: Vec<Vec2> = uniq.iter().copied().filter(|&p| d.cross(p - a) == 0.0).collect();
            if on_line.len() == uniq.len() {
                return None;
            }
            let key = |p: &Vec2| d.dot(*p - a);
            let lo = on_line.iter().min_by(|p, q| key(p).total_cmp(&key(q))).unwrap();
            let hi = on_line.iter().max_by(|p, q| key(p).total_cmp(&key(q))).unwrap();
            out.insert(bits(*lo));
            out.insert(bits(*hi));
        }
    }
    (out.len() >= 3).then_some(out)
}

pub fn bits(p: Vec2) -> (u64, u64) {
    (p.x.to_bits(), p.y.to_bits())
}

pub struct PlaneHit {
    pub t: f64,
    /// Smallest barycentric weight of the plane hit point.
    pub min_weight: f64,
}

/// Ray/plane intersection followed by barycentric weights from sub-triangle
/// areas. `None` when the ray is (nearly) parallel to the plane.
pub fn plane_barycentric(origin: Vec3, dir: Vec3, tri: [Vec3; 3]) -> Option<PlaneHit> {
    let [a, b, c] = tri;
    let n = (b - a).cross(c - a);
    let nn = n.dot(n);
    let denom = n.dot(dir);
    if denom.abs() <= 1e-9 * nn.sqrt() {
        return None;
    }
    let t = n.dot(a - origin) / denom;
    let p = origin + dir * t;
    let wa = n.dot((b - p).cross(c - p)) / nn;
    let wb = n.dot((c - p).cross(a - p)) / nn;
    let wc = n.dot((a - p).cross(b - p)) / nn;
    Some(PlaneHit {
        t,
        min_weight: wa.min(wb).min(wc),
    })
}

/// Distance from `q` to segment `ab`.
pub fn segment_distance(q: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    let t = if len2 == 0.0 { 0.0 } else { ((q - a).dot(d) / len2).clamp(0.0, 1.0) };
    q.distance(a + d * t)
}

pub fn near_boundary(q: Vec2, poly: &Polygon2D, tol: f64) -> bool {
    poly.edges().any(|(a, b)| segment_distance(q, a, b) <= tol)
}

/// COCO's compressed RLE string for column-major run lengths.
pub fn encode_rle_string(counts: &[u64]) -> String {
    let mut s = String::new();
    for i in 0..counts.len() {
        let mut x = counts[i] as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut c = x & 0x1f;
            x >>= 5;
            let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                c |= 0x20;
            }
            s.push((c as u8 + 48) as char);
            if !more {
                break;
            }
        }
    }
    s
}

/// Column-major run lengths of a mask, starting with background.
pub fn mask_runs(mask: &Mask) -> Vec<u64> {
    let mut runs = vec![];
    let mut current = false;
    let mut len = 0u64;
    for x in 0..mask.width() {
        for y in 0..mask.height() {
            let v = mask.get(x, y);
            if v != current {
                runs.push(len);
                len = 0;
                current = v;
            }
            len += 1;
        }
    }
    runs.push(len);
    runs
}

pub fn square(x: f64, y: f64, s: f64) -> Vec<f64> {
    vec![x, y, x + s, y, x + s, y + s, x, y + s]
}

/// Ground truth from `(image_id, category_id, flat polygon)` triples on
/// 200×200 images.
pub fn gt_dataset(polys: &[(u64, u32, Vec<f64>)]) -> CocoDataset {
    let mut ds = CocoDataset {
        images: vec![],
        annotations: vec![],
        categories: default_categories(),
    };
    let mut ids: Vec<u64> = polys.iter().map(|p| p.0).collect();
    ids.sort();
    ids.dedup();
    for id in ids {
        ds.images.push(CocoImage {
            id,
            file_name: format!("{id:06}.ppm"),
            width: 200,
            height: 200,
        });
    }
    for (image_id, cat, flat) in polys {
        let xs = flat.iter().step_by(2);
        let ys = flat.iter().skip(1).step_by(2);
        let x0 = xs.clone().copied().fold(f64::INFINITY, f64::min);
        let x1 = xs.copied().fold(f64::NEG_INFINITY, f64::max);
        let y0 = ys.clone().copied().fold(f64::INFINITY, f64::min);
        let y1 = ys.copied().fold(f64::NEG_INFINITY, f64::max);
        let poly = Polygon2D::cleaned(flat.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect());
        ds.annotations.push(CocoAnnotation {
            id: ds.annotations.len() as u64 + 1,
            image_id: *image_id,
            category_id: *cat,
            segmentation: vec![flat.clone()],
            area: poly.signed_area().abs(),
            bbox: [x0, y0, x1 - x0, y1 - y0],
            iscrowd: 0,
            instance_id: None,
            face: None,
        });
    }
    ds
}
