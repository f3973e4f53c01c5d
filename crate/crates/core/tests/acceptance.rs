//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on failure.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use palletsynth::annotator::{annotate_frame, trace_body, AnnotationCategory, AnnotatorConfig, DropReason};
use palletsynth::camera::project;
use palletsynth::cli::{cmd_annotate, cmd_generate, AnnotateArgs, CameraArgs, CategoryArg, GenerateArgs};
use palletsynth::coco::{export_dataset, import_dataset};
use palletsynth::evaluator::{compute_report, detections_from_gt, format_tables, parse_detections, DetGeometry, Detection, IouType};
use palletsynth::geometry::{
    clip_polygon_convex, clip_polygon_to_rect, convex_hull, ray_triangle_intersect, Polygon2D, Ray, ScreenRect, Triangle,
    Vec2, Vec3,
};
use palletsynth::raster::{depth_at, mask_iou, mask_of, pixel_hull_mask, rasterize, rasterize_polygon};
use palletsynth::scene::{generate_scenario, ScenarioConfig};
use palletsynth::scene::{Owner, ScenarioCategory};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::*;

const ORACLE_IOU: f64 = 0.99;
const ORACLE_SECONDS: f64 = 60.0;
const QUANTITY_SECONDS: f64 = 600.0;
const RAY_TOLERANCE: f64 = 1e-6;
const DISCONTINUITY_PX: f64 = 2.0;
const EXPECTED_IMAGES: [(ScenarioCategory, usize); 5] = [
    (ScenarioCategory::Individual, 840),
    (ScenarioCategory::Stacked, 2100),
    (ScenarioCategory::OnRacking, 2520),
    (ScenarioCategory::OnForklifts, 1680),
    (ScenarioCategory::Combined, 7140),
];

type Outcome = Result<String, String>;

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 oracle equivalence", Box::new(criterion_1)),
        ("2 occlusion soundness", Box::new(criterion_2)),
        ("3 geometry properties", Box::new(criterion_3)),
        ("4 evaluator correctness", Box::new(criterion_4)),
        ("5 dataset quantities", Box::new(|| criterion_5(&scratch.path().join("c5")))),
        ("6 determinism", Box::new(|| criterion_6(&scratch.path().join("c5"), &scratch.path().join("c6")))),
        ("7 detections ingestion", Box::new(criterion_7)),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
    }
    println!(
        "criterion 7 trained-model results: documented only; Mask R-CNN training on GPU is outside this suite"
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Emitted body polygons against the convex hull of the instance's rendered
/// pixels on single-pallet frames.
fn criterion_1() -> Outcome {
    let started = Instant::now();
    let cfg = ScenarioConfig::default().with_count(ScenarioCategory::Individual, 1);
    let intr = cfg.intrinsics;
    let (mut bodies, mut worst) = (0, 1.0f64);
    let mut failures = vec![];
    for seed in 0..50u64 {
        let scene = generate_scenario(ScenarioCategory::Individual, seed, &cfg).map_err(|e| e.to_string())?;
        let poses = scene.camera_poses().map_err(|e| e.to_string())?;
        let pose = poses[(seed as usize * 7) % poses.len()];
        let frame = annotate_frame(&scene, &pose, 1, &AnnotatorConfig::default());
        let buffer = rasterize(&scene, &pose, &intr);
        for rec in frame.records.iter().filter(|r| r.category == AnnotationCategory::PalletBody) {
            let oracle = pixel_hull_mask(&mask_of(&buffer, rec.instance_id, None));
            let ours = rasterize_polygon(&rec.polygon, intr.width, intr.height);
            let iou = mask_iou(&ours, &oracle).map_err(|e| e.to_string())?;
            bodies += 1;
            worst = worst.min(iou);
            if iou < ORACLE_IOU {
                failures.push(format!("seed {seed}: IoU {iou:.4}"));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        failures.is_empty() && bodies > 0 && secs < ORACLE_SECONDS,
        format!(
            "50 frames, {bodies} bodies, min IoU {worst:.4}, {secs:.1} s{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}

/// Occlusion verdicts against the depth oracle at each hull vertex's exact
/// sub-pixel position.
fn criterion_2() -> Outcome {
    let cfg = ScenarioConfig::default();
    let intr = cfg.intrinsics;
    let acfg = AnnotatorConfig::default();
    let (mut drops, mut confirmed, mut emitted, mut exempt) = (0, 0, 0, 0);
    let mut failures = vec![];
    for seed in 0..50u64 {
        let scene = generate_scenario(ScenarioCategory::Combined, seed, &cfg).map_err(|e| e.to_string())?;
        let poses = scene.camera_poses().map_err(|e| e.to_string())?;
        let pose = poses[(seed as usize * 97 + 13) % poses.len()];
        for pallet in scene.pallets() {
            let trace = trace_body(&scene, &pose, pallet, &acfg);
            let owner = Owner::Pallet(pallet.instance_id);
            let occluded_at = |v: Vec3, q: Vec2| {
                let dist = (v - pose.position).length();
                depth_at(&scene, &pose, &intr, q, Some(owner)).is_some_and(|(d, _)| d < dist * (1.0 - 1e-4))
            };
            match &trace.outcome {
                Err(DropReason::HullVertexOccluded) => {
                    drops += 1;
                    let ok = trace
                        .hull_vertices
                        .iter()
                        .zip(&trace.hull_blocked)
                        .filter(|(_, b)| **b)
                        .any(|(v, _)| occluded_at(*v, project(*v, &pose, &intr).screen));
                    if ok {
                        confirmed += 1;
                    } else {
                        failures.push(format!("seed {seed} pallet {}: unconfirmed drop", pallet.instance_id));
                    }
                }
                Ok(_) => {
                    emitted += 1;
                    for v in &trace.hull_vertices {
                        let q = project(*v, &pose, &intr).screen;
                        if !occluded_at(*v, q) {
                            continue;
                        }
                        let near_edge = (0..16).any(|k| {
                            let a = k as f64 * std::f64::consts::TAU / 16.0;
                            !occluded_at(*v, q + Vec2::new(a.cos(), a.sin()) * DISCONTINUITY_PX)
                        });
                        if near_edge {
                            exempt += 1;
                        } else {
                            failures.push(format!("seed {seed} pallet {}: emitted with occluded vertex", pallet.instance_id));
                        }
                    }
                }
                Err(_) => {}
            }
        }
    }
    check(
        failures.is_empty() && drops > 0 && emitted > 0,
        format!(
            "{confirmed}/{drops} drops confirmed, {emitted} emitted bodies clean, {exempt} vertices at discontinuities{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let mut problems = vec![];

    // Hull against the half-plane brute force. Half the sets live on a
    // small integer grid so duplicates and collinear runs are common.
    let mut hull_ok = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..=50);
        let pts: Vec<Vec2> = if case % 2 == 0 {
            let g = rng.random_range(1..=8) as f64;
            (0..n)
                .map(|_| Vec2::new(rng.random_range(0..=g as i32) as f64, rng.random_range(0..=g as i32) as f64))
                .collect()
        } else {
            (0..n)
                .map(|_| Vec2::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)))
                .collect()
        };
        let expected = brute_hull(&pts);
        let good = match (convex_hull(&pts), expected) {
            (Err(_), None) => true,
            (Ok(h), Some(exp)) => {
                let v = h.vertices();
                let got: BTreeSet<_> = v.iter().map(|p| bits(*p)).collect();
                let turns_right = (0..v.len()).all(|i| {
                    let (a, b, c) = (v[i], v[(i + 1) % v.len()], v[(i + 2) % v.len()]);
                    (b - a).cross(c - b) > 0.0
                });
                got == exp && got.len() == v.len() && turns_right
            }
            _ => false,
        };
        if good {
            hull_ok += 1;
        } else if problems.len() < 5 {
            problems.push(format!("hull case {case}"));
        }
    }

    // Möller–Trumbore against plane intersection plus barycentric weights.
    let (mut ray_ok, mut ray_exempt, mut ray_hits) = (0, 0, 0);
    let mut v3 = |r: f64| Vec3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r));
    let mut ray_cases = vec![];
    for _ in 0..10_000 {
        ray_cases.push((v3(5.0), v3(5.0), v3(5.0), v3(10.0), v3(1.0)));
    }
    for (case, (a, b, c, origin, jitter)) in ray_cases.into_iter().enumerate() {
        let Ok(tri) = Triangle::new(a, b, c) else {
            ray_exempt += 1;
            continue;
        };
        // Aim near the triangle so roughly half the rays hit.
        let target = (a + b + c) / 3.0 + jitter * 3.0;
        let Ok(ray) = Ray::new(origin, target - origin) else {
            ray_exempt += 1;
            continue;
        };
        let got = ray_triangle_intersect(&ray, &tri);
        let Some(hit) = plane_barycentric(ray.origin(), ray.direction(), [a, b, c]) else {
            ray_exempt += 1;
            continue;
        };
        if hit.min_weight.abs() < 1e-9 || (hit.t - palletsynth::geometry::RAY_EPSILON).abs() < 1e-9 {
            ray_exempt += 1;
            continue;
        }
        let expected = (hit.min_weight >= 0.0 && hit.t > palletsynth::geometry::RAY_EPSILON).then_some(hit.t);
        let good = match (got, expected) {
            (None, None) => true,
            (Some(t), Some(e)) => (t - e).abs() <= RAY_TOLERANCE,
            _ => false,
        };
        ray_hits += expected.is_some() as usize;
        if good {
            ray_ok += 1;
        } else if problems.len() < 10 {
            problems.push(format!("ray case {case}: {got:?} vs {expected:?}"));
        }
    }

    // Clipping: the clipped polygon covers exactly the pixel centres that
    // lie in both inputs. Centres within 1e-7 of an edge are ambiguous.
    let (w, h) = (64u32, 48u32);
    let random_convex = |rng: &mut StdRng| -> Polygon2D {
        loop {
            let n = rng.random_range(3..=12);
            let pts: Vec<Vec2> = (0..n)
                .map(|_| Vec2::new(rng.random_range(-32.0..96.0), rng.random_range(-24.0..72.0)))
                .collect();
            if let Ok(p) = convex_hull(&pts) {
                return p;
            }
        }
    };
    let mut clip_ok = 0;
    let rect_poly = Polygon2D::cleaned(vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(w as f64, 0.0),
        Vec2::new(w as f64, h as f64),
        Vec2::new(0.0, h as f64),
    ]);
    for case in 0..500 {
        let subject = random_convex(&mut rng);
        let clipper = if case % 2 == 0 { rect_poly.clone() } else { random_convex(&mut rng) };
        let clipped = if case % 2 == 0 {
            clip_polygon_to_rect(&subject, ScreenRect::new(w as f64, h as f64))
        } else {
            clip_polygon_convex(&subject, &clipper)
        };
        let got = rasterize_polygon(&clipped, w, h);
        let a = rasterize_polygon(&subject, w, h);
        let b = rasterize_polygon(&clipper, w, h);
        let mut good = true;
        for y in 0..h {
            for x in 0..w {
                let q = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                if near_boundary(q, &subject, 1e-7) || near_boundary(q, &clipper, 1e-7) {
                    continue;
                }
                if got.get(x, y) != (a.get(x, y) && b.get(x, y)) {
                    good = false;
                }
            }
        }
        if good {
            clip_ok += 1;
        } else if problems.len() < 15 {
            problems.push(format!("clip case {case}"));
        }
    }

    check(
        problems.is_empty(),
        format!(
            "hull {hull_ok}/1000, rays {ray_ok}/{} agree ({ray_hits} hits, {ray_exempt} boundary cases skipped), clip {clip_ok}/500{}",
            10_000 - ray_exempt,
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join(", ")) }
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut problems = vec![];

    // Ground truth fed back as detections.
    let cfg = ScenarioConfig::default();
    let scene = generate_scenario(ScenarioCategory::Stacked, 4, &cfg).map_err(|e| e.to_string())?;
    let poses = scene.camera_poses().map_err(|e| e.to_string())?;
    let frames: Vec<_> = poses
        .iter()
        .take(40)
        .enumerate()
        .map(|(i, p)| annotate_frame(&scene, p, i as u64 + 1, &AnnotatorConfig::default()))
        .collect();
    let gt = export_dataset(&frames, cfg.intrinsics.width, cfg.intrinsics.height).map_err(|e| e.to_string())?;
    for iou_type in [IouType::Segm, IouType::Bbox] {
        let r = compute_report(&gt, &detections_from_gt(&gt), iou_type).map_err(|e| e.to_string())?;
        let m = &r.overall;
        if [m.ap, m.ap50, m.ap75, m.ar, m.f1] != [1.0; 5] {
            problems.push(format!("{iou_type:?} gt-as-detections: {m:?}"));
        }
    }

    // Detections shifted by a quarter of their width: IoU exactly 0.6.
    let fixture = gt_dataset(&[(1, 2, square(0.0, 0.0, 40.0)), (1, 1, square(100.0, 100.0, 40.0))]);
    let shifted = vec![
        poly_det(1, 2, square(10.0, 0.0, 40.0), 0.9),
        poly_det(1, 1, square(100.0, 110.0, 40.0), 0.8),
    ];
    let r = compute_report(&fixture, &shifted, IouType::Segm).map_err(|e| e.to_string())?;
    if r.overall.ap50 != 1.0 || r.overall.ap75 != 0.0 {
        problems.push(format!("IoU-0.6 fixture: AP50 {} AP75 {}", r.overall.ap50, r.overall.ap75));
    }

    // A lowest-score false positive never raises AP; order never matters.
    let mut rng = StdRng::seed_from_u64(4);
    for case in 0..200 {
        let mut polys = vec![];
        let mut dets = vec![];
        for image in 1..=rng.random_range(1..=3u64) {
            for _ in 0..rng.random_range(1..=4) {
                let cat = rng.random_range(1..=2u32);
                let (x, y, s) = (rng.random_range(0.0..120.0), rng.random_range(0.0..120.0), rng.random_range(10.0..40.0));
                polys.push((image, cat, square(x, y, s)));
                if rng.random_bool(0.8) {
                    let (dx, dy) = (rng.random_range(-0.3..0.3) * s, rng.random_range(-0.3..0.3) * s);
                    dets.push(poly_det(image, cat, square(x + dx, y + dy, s), rng.random_range(0.1..1.0)));
                }
            }
            for _ in 0..rng.random_range(0..3) {
                let (x, y) = (rng.random_range(0.0..150.0), rng.random_range(0.0..150.0));
                dets.push(poly_det(image, rng.random_range(1..=2), square(x, y, 20.0), rng.random_range(0.1..1.0)));
            }
        }
        let gt = gt_dataset(&polys);
        let base = compute_report(&gt, &dets, IouType::Segm).map_err(|e| e.to_string())?;
        let image = rng.random_range(1..=gt.images.len() as u64);
        let mut more = dets.clone();
        more.push(poly_det(image, rng.random_range(1..=2), square(170.0, 170.0, 20.0), 0.01));
        let extended = compute_report(&gt, &more, IouType::Segm).map_err(|e| e.to_string())?;
        let pairs = std::iter::once((&base.overall, &extended.overall))
            .chain(base.categories.iter().zip(&extended.categories).map(|(a, b)| (&a.metrics, &b.metrics)));
        for (a, b) in pairs {
            if b.ap > a.ap || b.ap50 > a.ap50 || b.ap75 > a.ap75 {
                problems.push(format!("case {case}: AP rose from {} to {}", a.ap, b.ap));
            }
        }
        let mut shuffled = dets.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let permuted = compute_report(&gt, &shuffled, IouType::Segm).map_err(|e| e.to_string())?;
        if permuted.overall != base.overall || permuted.categories != base.categories {
            problems.push(format!("case {case}: detection order changed the metrics"));
        }
    }
    problems.truncate(5);
    check(
        problems.is_empty(),
        format!(
            "gt-as-detections on {} annotations scores 1.000, IoU-0.6 fixture AP50 1.0 / AP75 0.0, 200 random fixtures{}",
            gt.annotations.len(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join(", ")) }
        ),
    )
}

fn poly_det(image_id: u64, category_id: u32, flat: Vec<f64>, score: f64) -> Detection {
    Detection {
        image_id,
        category_id,
        geometry: DetGeometry::Polygon(Polygon2D::cleaned(
            flat.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect(),
        )),
        score,
    }
}

fn no_camera() -> CameraArgs {
    CameraArgs {
        width: None,
        height: None,
        fov: None,
    }
}

fn generate_and_annotate(dir: &Path, jobs: usize) -> Result<Vec<(ScenarioCategory, usize)>, String> {
    let scenes = dir.join("scenes");
    let paths = cmd_generate(&GenerateArgs {
        category: CategoryArg::All,
        seed: 0,
        count: None,
        camera: no_camera(),
        out: scenes,
    })
    .map_err(|e| e.to_string())?;
    let mut counts = vec![];
    for (cat, path) in ScenarioCategory::ALL.into_iter().zip(paths) {
        let summary = cmd_annotate(&AnnotateArgs {
            scene: Some(path),
            category: None,
            seed: 0,
            count: None,
            camera: no_camera(),
            min_area: palletsynth::annotator::DEFAULT_MIN_AREA,
            jobs,
            preview: false,
            test_fraction: 0.0,
            out: dir.join(cat.as_str()),
        })
        .map_err(|e| e.to_string())?;
        counts.push((cat, summary.images));
    }
    Ok(counts)
}

fn criterion_5(dir: &Path) -> Outcome {
    let started = Instant::now();
    let counts = generate_and_annotate(dir, 0)?;
    let secs = started.elapsed().as_secs_f64();
    let mut ok = secs < QUANTITY_SECONDS;
    let mut parts = vec![];
    for ((cat, got), (_, want)) in counts.iter().zip(EXPECTED_IMAGES) {
        let text = fs::read_to_string(dir.join(cat.as_str()).join("annotations.json")).map_err(|e| e.to_string())?;
        let ds = import_dataset(&text).map_err(|e| e.to_string())?;
        ok &= *got == want && ds.images.len() == want && ds.images.iter().all(|im| (im.width, im.height) == (1920, 1080));
        parts.push(format!("{cat} {got}/{want}"));
    }
    check(ok, format!("{}, 1920x1080, {secs:.1} s", parts.join(", ")))
}

fn criterion_6(first: &Path, second: &Path) -> Outcome {
    if !first.join("scenes").exists() {
        generate_and_annotate(first, 0)?;
    }
    generate_and_annotate(second, 1)?;
    let mut compared = 0;
    let mut diffs = vec![];
    let mut files = vec![];
    for cat in ScenarioCategory::ALL {
        files.push(Path::new("scenes").join(format!("{cat}-0.toml")));
        files.push(Path::new(cat.as_str()).join("annotations.json"));
        files.push(Path::new(cat.as_str()).join("drops.json"));
    }
    for f in files {
        let a = fs::read(first.join(&f)).map_err(|e| e.to_string())?;
        let b = fs::read(second.join(&f)).map_err(|e| e.to_string())?;
        compared += 1;
        if a != b {
            diffs.push(f.display().to_string());
        }
    }
    check(
        diffs.is_empty(),
        format!(
            "{compared} files byte-identical across runs with all cores and --jobs 1{}",
            if diffs.is_empty() { String::new() } else { format!("; differ: {}", diffs.join(", ")) }
        ),
    )
}

/// A results file in the usual detector-output shape: polygons, compressed
/// RLE and raw RLE side by side.
fn criterion_7() -> Outcome {
    let gt = gt_dataset(&[
        (1, 1, square(10.0, 10.0, 50.0)),
        (1, 2, square(80.0, 80.0, 60.0)),
        (2, 2, square(30.0, 40.0, 70.0)),
    ]);
    let mask = |a: &palletsynth::coco::CocoAnnotation| rasterize_polygon(&a.polygon(), 200, 200);
    let compressed = serde_json::to_string(&encode_rle_string(&mask_runs(&mask(&gt.annotations[1])))).unwrap();
    let raw = mask_runs(&mask(&gt.annotations[2]));
    let text = format!(
        r#"[
  {{"image_id": 1, "category_id": 1, "segmentation": [[10, 10, 60, 10, 60, 60, 10, 60]], "bbox": [10, 10, 50, 50], "score": 0.97}},
  {{"image_id": 1, "category_id": 2, "segmentation": {{"size": [200, 200], "counts": {compressed}}}, "bbox": [80, 80, 60, 60], "score": 0.91}},
  {{"image_id": 2, "category_id": 2, "segmentation": {{"size": [200, 200], "counts": {raw:?}}}, "bbox": [30, 40, 70, 70], "score": 0.88}},
  {{"image_id": 2, "category_id": 1, "segmentation": [[150, 150, 190, 150, 190, 190]], "bbox": [150, 150, 40, 40], "score": 0.40}}
]"#
    );
    let segm = parse_detections(&text, IouType::Segm).map_err(|e| e.to_string())?;
    let bbox = parse_detections(&text, IouType::Bbox).map_err(|e| e.to_string())?;
    let rs = compute_report(&gt, &segm, IouType::Segm).map_err(|e| e.to_string())?;
    let rb = compute_report(&gt, &bbox, IouType::Bbox).map_err(|e| e.to_string())?;
    let tables = format_tables(&[("Segm".to_string(), &rs), ("Bbox".to_string(), &rb)]);
    let layout = ["Classification results", "AP_f", "AP_b", "AP50", "AP75", "Average recall and F1 score", "Recall", "F1"]
        .iter()
        .all(|h| tables.contains(h));
    check(
        layout && rs.overall.ap50 == 1.0 && rb.overall.ap50 == 1.0,
        format!(
            "4 detections (polygon, compressed RLE, raw RLE), segm AP50 {:.3}, bbox AP50 {:.3}, tables rendered",
            rs.overall.ap50, rb.overall.ap50
        ),
    )
}
