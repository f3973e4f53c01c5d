//! Per-frame pallet face and body annotations.
//!
//! Bodies: project the outline, cull if any vertex is behind the camera, sort
//! clockwise, take the convex hull, drop the whole body if any hull vertex is
//! hidden by another object, then clip to the viewport.
//!
//! Faces: drop the face if any loop vertex is behind the camera or the face is
//! seen from behind, otherwise keep only the loop vertices with a clear line
//! of sight (the pallet's own planks count as blockers), project them in loop
//! order and clip.
//!
//! Partially occluded bodies whose hull vertices stay visible are labelled
//! with their full hull; nothing subtracts occluded regions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::camera::{project, CameraPose};
use crate::error::Result;
use crate::geometry::{
    clip_polygon_to_rect, clockwise_order, convex_hull_indices, polygon_area, polygon_bbox, Polygon2D, Ray,
    ScreenRect, Vec2, Vec3,
};
use crate::parallel::map_ordered;
use crate::scene::{Owner, PalletInstance, Scene};

/// Default smallest emitted polygon area, px².
pub const DEFAULT_MIN_AREA: f64 = 64.0;
/// Blocking hits must lie this fraction of the eye-to-vertex distance away
/// from both ends of the segment.
pub const SEGMENT_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnnotationCategory {
    PalletFace = 1,
    PalletBody = 2,
}

impl AnnotationCategory {
    pub const ALL: [AnnotationCategory; 2] = [AnnotationCategory::PalletFace, AnnotationCategory::PalletBody];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            AnnotationCategory::PalletFace => "pallet_face",
            AnnotationCategory::PalletBody => "pallet_body",
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.id() == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DropReason {
    BehindCamera,
    HullVertexOccluded,
    FaceVertexBehindCamera,
    FullyOffscreen,
    BelowMinArea,
    TooFewVisibleVertices,
}

impl DropReason {
    pub const ALL: [DropReason; 6] = [
        DropReason::BehindCamera,
        DropReason::HullVertexOccluded,
        DropReason::FaceVertexBehindCamera,
        DropReason::FullyOffscreen,
        DropReason::BelowMinArea,
        DropReason::TooFewVisibleVertices,
    ];
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_id: u64,
    pub instance_id: u32,
    pub category: AnnotationCategory,
    /// Face id for face records.
    pub face: Option<String>,
    pub polygon: Polygon2D,
    /// `(x, y, w, h)` in pixels.
    pub bbox: [f64; 4],
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedAnnotation {
    pub instance_id: u32,
    pub category: AnnotationCategory,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub face: Option<String>,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnnotations {
    pub image_id: u64,
    pub pose: CameraPose,
    pub records: Vec<AnnotationRecord>,
    pub dropped: Vec<DroppedAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotatorConfig {
    pub min_area: f64,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

/// True if something other than `exclude` crosses the open segment from
/// `eye` to `target`, ignoring hits within `SEGMENT_EPSILON · d` of either end.
pub fn segment_blocked(scene: &Scene, eye: Vec3, target: Vec3, exclude: Option<Owner>) -> bool {
    let d = (target - eye).length();
    if !(d > 0.0) {
        return false;
    }
    let Ok(ray) = Ray::new(eye, target - eye) else {
        return false;
    };
    let eps = SEGMENT_EPSILON * d;
    let (t_lo, t_hi) = (eps, d - eps);
    scene
        .objects()
        .iter()
        .filter(|o| Some(o.owner) != exclude)
        .filter(|o| o.aabb.hit_by(&ray, t_lo, t_hi))
        .any(|o| {
            o.triangles.iter().any(|tri| {
                crate::geometry::ray_triangle_intersect(&ray, tri).is_some_and(|t| t > t_lo && t < t_hi)
            })
        })
}

/// Line-of-sight check for a labelled vertex of pallet `owner`; the owner's
/// own triangles never block.
pub fn vertex_blocked(scene: &Scene, pose: &CameraPose, vertex: Vec3, owner: u32) -> bool {
    segment_blocked(scene, pose.position, vertex, Some(Owner::Pallet(owner)))
}

/// Intermediate state of the body pipeline, for auditing drop decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyTrace {
    /// World positions of the hull vertices (empty when culled before the hull).
    pub hull_vertices: Vec<Vec3>,
    /// Outline indices of the hull vertices.
    pub hull_indices: Vec<usize>,
    pub hull_blocked: Vec<bool>,
    pub outcome: std::result::Result<AnnotationRecord, DropReason>,
}

pub fn trace_body(scene: &Scene, pose: &CameraPose, instance: &PalletInstance, cfg: &AnnotatorConfig) -> BodyTrace {
    let intr = scene.intrinsics();
    let world: Vec<Vec3> = instance
        .model
        .body_outline()
        .iter()
        .map(|v| instance.transform.apply_point(*v))
        .collect();
    let drop = |reason, hull_vertices, hull_indices, hull_blocked| BodyTrace {
        hull_vertices,
        hull_indices,
        hull_blocked,
        outcome: Err(reason),
    };

    let mut screen = Vec::with_capacity(world.len());
    for v in &world {
        let p = project(*v, pose, intr);
        if p.behind {
            return drop(DropReason::BehindCamera, vec![], vec![], vec![]);
        }
        screen.push(p.screen);
    }

    let Ok(order) = clockwise_order(&screen) else {
        return drop(DropReason::BelowMinArea, vec![], vec![], vec![]);
    };
    let sorted: Vec<Vec2> = order.iter().map(|&i| screen[i]).collect();
    let Ok(hull) = convex_hull_indices(&sorted) else {
        return drop(DropReason::BelowMinArea, vec![], vec![], vec![]);
    };
    // Correlate hull positions back to outline indices.
    let hull_indices: Vec<usize> = hull.iter().map(|&k| order[k]).collect();
    let hull_vertices: Vec<Vec3> = hull_indices.iter().map(|&i| world[i]).collect();
    let hull_blocked: Vec<bool> = hull_vertices
        .iter()
        .map(|v| vertex_blocked(scene, pose, *v, instance.instance_id))
        .collect();
    if hull_blocked.iter().any(|b| *b) {
        return drop(DropReason::HullVertexOccluded, hull_vertices, hull_indices, hull_blocked);
    }

    let polygon = Polygon2D::cleaned(hull.iter().map(|&k| sorted[k]).collect());
    let clipped = clip_polygon_to_rect(&polygon, ScreenRect::new(intr.width as f64, intr.height as f64));
    if clipped.is_empty() {
        return drop(DropReason::FullyOffscreen, hull_vertices, hull_indices, hull_blocked);
    }
    let area = polygon_area(&clipped);
    if area < cfg.min_area {
        return drop(DropReason::BelowMinArea, hull_vertices, hull_indices, hull_blocked);
    }
    let bbox = polygon_bbox(&clipped).expect("non-empty polygon");
    BodyTrace {
        hull_vertices,
        hull_indices,
        hull_blocked,
        outcome: Ok(AnnotationRecord {
            image_id: 0,
            instance_id: instance.instance_id,
            category: AnnotationCategory::PalletBody,
            face: None,
            polygon: clipped,
            bbox,
            area,
        }),
    }
}

/// Body annotation for one pallet (image id left at 0).
pub fn annotate_body(
    scene: &Scene,
    pose: &CameraPose,
    instance: &PalletInstance,
    cfg: &AnnotatorConfig,
) -> std::result::Result<AnnotationRecord, DropReason> {
    trace_body(scene, pose, instance, cfg).outcome
}

/// Face annotations for one pallet, in face-id order (image ids left at 0).
pub fn annotate_faces(
    scene: &Scene,
    pose: &CameraPose,
    instance: &PalletInstance,
    cfg: &AnnotatorConfig,
) -> Vec<(String, std::result::Result<AnnotationRecord, DropReason>)> {
    let intr = scene.intrinsics();
    let rect = ScreenRect::new(intr.width as f64, intr.height as f64);
    let local = instance.model.mesh().aabb();
    let centre = instance.transform.apply_point((local.min + local.max) * 0.5);
    instance
        .model
        .faces()
        .iter()
        .map(|(name, face_loop)| {
            let world: Vec<Vec3> = face_loop.iter().map(|v| instance.transform.apply_point(*v)).collect();
            let outcome = (|| {
                let projected: Vec<_> = world.iter().map(|v| project(*v, pose, intr)).collect();
                if projected.iter().any(|p| p.behind) {
                    return Err(DropReason::FaceVertexBehindCamera);
                }
                // Seen from behind, the face surface is hidden by its own
                // pallet even where its corners are in plain sight.
                if !faces_camera(&world, centre, pose.position) {
                    return Err(DropReason::TooFewVisibleVertices);
                }
                // Own planks block here: a rear face hides behind its pallet.
                let visible: Vec<Vec2> = world
                    .iter()
                    .zip(&projected)
                    .filter(|(v, _)| !segment_blocked(scene, pose.position, **v, None))
                    .map(|(_, p)| p.screen)
                    .collect();
                if visible.len() < 3 {
                    return Err(DropReason::TooFewVisibleVertices);
                }
                let polygon = Polygon2D::cleaned(visible);
                if polygon.is_empty() {
                    return Err(DropReason::BelowMinArea);
                }
                let clipped = clip_polygon_to_rect(&polygon, rect);
                if clipped.is_empty() {
                    return Err(DropReason::FullyOffscreen);
                }
                let area = polygon_area(&clipped);
                if area < cfg.min_area {
                    return Err(DropReason::BelowMinArea);
                }
                Ok(AnnotationRecord {
                    image_id: 0,
                    instance_id: instance.instance_id,
                    category: AnnotationCategory::PalletFace,
                    face: Some(name.clone()),
                    bbox: polygon_bbox(&clipped).expect("non-empty polygon"),
                    polygon: clipped,
                    area,
                })
            })();
            (name.clone(), outcome)
        })
        .collect()
}

/// True when `eye` is strictly on the outer side of the face plane, the
/// outer side being the one away from `centre`.
fn faces_camera(face: &[Vec3], centre: Vec3, eye: Vec3) -> bool {
    let mut n = Vec3::ZERO;
    let mut mean = Vec3::ZERO;
    for (i, a) in face.iter().enumerate() {
        let b = face[(i + 1) % face.len()];
        n += Vec3::new((a.y - b.y) * (a.z + b.z), (a.z - b.z) * (a.x + b.x), (a.x - b.x) * (a.y + b.y));
        mean += *a;
    }
    let mean = mean / face.len() as f64;
    let n = if n.dot(mean - centre) < 0.0 { -n } else { n };
    n.dot(eye - mean) > 0.0
}

/// All records and drops for one camera pose, ordered by
/// `(instance_id, category, face id)`.
pub fn annotate_frame(scene: &Scene, pose: &CameraPose, image_id: u64, cfg: &AnnotatorConfig) -> FrameAnnotations {
    let mut pallets: Vec<&PalletInstance> = scene.pallets().iter().collect();
    pallets.sort_by_key(|p| p.instance_id);
    let mut records = Vec::new();
    let mut dropped = Vec::new();
    for p in pallets {
        for (face, outcome) in annotate_faces(scene, pose, p, cfg) {
            match outcome {
                Ok(mut r) => {
                    r.image_id = image_id;
                    records.push(r);
                }
                Err(reason) => dropped.push(DroppedAnnotation {
                    instance_id: p.instance_id,
                    category: AnnotationCategory::PalletFace,
                    face: Some(face),
                    reason,
                }),
            }
        }
        match annotate_body(scene, pose, p, cfg) {
            Ok(mut r) => {
                r.image_id = image_id;
                records.push(r);
            }
            Err(reason) => dropped.push(DroppedAnnotation {
                instance_id: p.instance_id,
                category: AnnotationCategory::PalletBody,
                face: None,
                reason,
            }),
        }
    }
    FrameAnnotations {
        image_id,
        pose: *pose,
        records,
        dropped,
    }
}

/// Annotates every pose; image ids are `first_image_id + index`. The result
/// is identical for every `jobs` value.
pub fn annotate_poses(
    scene: &Scene,
    poses: &[CameraPose],
    first_image_id: u64,
    cfg: &AnnotatorConfig,
    jobs: usize,
) -> Result<Vec<FrameAnnotations>> {
    map_ordered(poses, jobs, |i, pose| annotate_frame(scene, pose, first_image_id + i as u64, cfg))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::camera::{look_at, CameraIntrinsics};
    use crate::geometry::{RigidTransform, Vec3};
    use crate::scene::mesh::{box_mesh, PalletModel, PALLET_HEIGHT};
    use crate::scene::{MeshSource, ModelEntry, PropInstance, SceneParts};

    fn scene_with(pallets: &[RigidTransform], props: &[([f64; 3], Vec3)], pose: CameraPose) -> Scene {
        let model = Arc::new(PalletModel::stringer());
        Scene::new(SceneParts {
            seed: 0,
            category: None,
            intrinsics: CameraIntrinsics::default(),
            models: vec![ModelEntry {
                id: "m".into(),
                source: MeshSource::StringerPallet,
                model: model.clone(),
            }],
            pallets: pallets
                .iter()
                .enumerate()
                .map(|(i, t)| crate::scene::PalletInstance {
                    instance_id: i as u32 + 1,
                    model_id: "m".into(),
                    model: model.clone(),
                    transform: *t,
                })
                .collect(),
            props: props
                .iter()
                .enumerate()
                .map(|(i, (size, at))| PropInstance {
                    name: format!("p{i}"),
                    source: MeshSource::Box { size: *size },
                    mesh: Arc::new(box_mesh((*size).into()).unwrap()),
                    transform: RigidTransform::translation(*at),
                })
                .collect(),
            spheres: vec![],
            manual_poses: vec![pose],
        })
        .unwrap()
    }

    fn front_pose() -> CameraPose {
        look_at(Vec3::new(3.0, 0.3, 0.0), Vec3::new(0.0, 0.07, 0.0), Vec3::Y).unwrap()
    }

    #[test]
    fn isolated_pallet_gets_body_and_front_face() {
        let pose = front_pose();
        let scene = scene_with(&[RigidTransform::IDENTITY], &[], pose);
        let frame = annotate_frame(&scene, &pose, 7, &AnnotatorConfig::default());
        let cats: Vec<_> = frame.records.iter().map(|r| (r.category, r.face.clone())).collect();
        assert_eq!(
            cats,
            vec![
                (AnnotationCategory::PalletFace, Some("front".into())),
                (AnnotationCategory::PalletBody, None)
            ]
        );
        assert_eq!(frame.dropped.len(), 1);
        assert_eq!(frame.dropped[0].face.as_deref(), Some("rear"));
        assert_eq!(frame.dropped[0].reason, DropReason::TooFewVisibleVertices);
        assert!(frame.records.iter().all(|r| r.image_id == 7));
        let body = &frame.records[1];
        assert!(body.polygon.is_convex());
        assert!(body.polygon.signed_area() > 0.0);
    }

    #[test]
    fn rear_face_stays_unlabelled_from_above() {
        // Three rear corners are in line of sight from here.
        let pose = look_at(Vec3::new(1.5, 1.0, 2.5), Vec3::new(0.0, 0.07, 0.0), Vec3::Y).unwrap();
        let scene = scene_with(&[RigidTransform::IDENTITY], &[], pose);
        let rear = scene.pallets()[0].model.faces()["rear"]
            .iter()
            .filter(|v| !segment_blocked(&scene, pose.position, **v, None))
            .count();
        assert!(rear >= 3);
        let faces = annotate_faces(&scene, &pose, &scene.pallets()[0], &AnnotatorConfig::default());
        assert!(faces[0].1.is_ok());
        assert_eq!(faces[1], ("rear".to_string(), Err(DropReason::TooFewVisibleVertices)));
    }

    #[test]
    fn no_occluders_means_nothing_blocks() {
        let pose = front_pose();
        let scene = scene_with(&[RigidTransform::IDENTITY], &[], pose);
        let p = &scene.pallets()[0];
        for v in p.model.body_outline() {
            assert!(!vertex_blocked(&scene, &pose, p.transform.apply_point(*v), 1));
        }
    }

    #[test]
    fn wall_between_blocks() {
        let pose = front_pose();
        let scene = scene_with(&[RigidTransform::IDENTITY], &[([0.05, 5.0, 5.0], Vec3::new(1.5, 0.0, 0.0))], pose);
        let corner = Vec3::new(0.6, 0.144, 0.5);
        assert!(vertex_blocked(&scene, &pose, corner, 1));
        let frame = annotate_frame(&scene, &pose, 0, &AnnotatorConfig::default());
        assert!(frame.records.is_empty());
        assert!(frame
            .dropped
            .iter()
            .any(|d| d.category == AnnotationCategory::PalletBody && d.reason == DropReason::HullVertexOccluded));
    }

    #[test]
    fn pallet_behind_camera_is_culled() {
        let pose = look_at(Vec3::new(3.0, 1.0, 0.0), Vec3::new(6.0, 1.0, 0.0), Vec3::Y).unwrap();
        let scene = scene_with(&[RigidTransform::IDENTITY], &[], pose);
        assert_eq!(
            annotate_body(&scene, &pose, &scene.pallets()[0], &AnnotatorConfig::default()),
            Err(DropReason::BehindCamera)
        );
        let faces = annotate_faces(&scene, &pose, &scene.pallets()[0], &AnnotatorConfig::default());
        assert!(faces.iter().all(|(_, o)| *o == Err(DropReason::FaceVertexBehindCamera)));
    }

    #[test]
    fn face_straddling_left_edge_is_clipped() {
        // Aim to the right of the pallet so the front face crosses x = 0.
        let eye = Vec3::new(2.5, 0.4, 0.0);
        let mut pose = look_at(eye, Vec3::new(0.6, 0.07, 0.0), Vec3::Y).unwrap();
        for k in -80..=80 {
            pose = look_at(eye, Vec3::new(0.6, 0.07, 0.02 * k as f64), Vec3::Y).unwrap();
            let scene = scene_with(&[RigidTransform::IDENTITY], &[], pose);
            let faces = annotate_faces(&scene, &pose, &scene.pallets()[0], &AnnotatorConfig::default());
            let front = faces[0].1.as_ref().ok().cloned();
            let raw_min_x = scene.pallets()[0]
                .model
                .faces()["front"]
                .iter()
                .map(|v| project(*v, &pose, scene.intrinsics()).screen.x)
                .fold(f64::INFINITY, f64::min);
            let raw_max_x = scene.pallets()[0]
                .model
                .faces()["front"]
                .iter()
                .map(|v| project(*v, &pose, scene.intrinsics()).screen.x)
                .fold(f64::NEG_INFINITY, f64::max);
            if raw_min_x < 0.0 && raw_max_x > 40.0 {
                let rec = front.expect("front face still partly visible");
                assert!(rec.polygon.vertices().iter().all(|v| v.x >= 0.0));
                assert!(rec.polygon.vertices().iter().any(|v| v.x == 0.0));
                return;
            }
        }
        panic!("never straddled the edge: {pose:?}");
    }

    #[test]
    fn camera_inside_stack_drops_face_with_vertex_behind() {
        // Eye level with the middle of a stack, right at its front plane.
        let h = PALLET_HEIGHT;
        let stack: Vec<_> = (0..3).map(|k| RigidTransform::translation(Vec3::new(0.0, k as f64 * h, 0.0))).collect();
        let pose = look_at(Vec3::new(0.6, 1.5 * h, 0.0), Vec3::new(0.6, 1.5 * h, 3.0), Vec3::Y).unwrap();
        let scene = scene_with(&stack, &[], pose);
        let faces = annotate_faces(&scene, &pose, &scene.pallets()[1], &AnnotatorConfig::default());
        let front = faces.iter().find(|(n, _)| n == "front").unwrap();
        assert_eq!(front.1, Err(DropReason::FaceVertexBehindCamera));
    }

    #[test]
    fn empty_scene_has_no_records() {
        let pose = front_pose();
        let scene = scene_with(&[], &[], pose);
        let frame = annotate_frame(&scene, &pose, 1, &AnnotatorConfig::default());
        assert!(frame.records.is_empty() && frame.dropped.is_empty());
    }

    #[test]
    fn min_area_drops_tiny_bodies() {
        let pose = look_at(Vec3::new(300.0, 120.0, 80.0), Vec3::ZERO, Vec3::Y).unwrap();
        let scene = scene_with(&[RigidTransform::IDENTITY], &[], pose);
        assert_eq!(
            annotate_body(&scene, &pose, &scene.pallets()[0], &AnnotatorConfig::default()),
            Err(DropReason::BelowMinArea)
        );
    }

    #[test]
    fn offscreen_body() {
        let pose = look_at(Vec3::new(6.0, 1.0, -1.0), Vec3::new(6.0, 1.0, 6.0), Vec3::Y).unwrap();
        let scene = scene_with(&[RigidTransform::IDENTITY], &[], pose);
        assert_eq!(
            annotate_body(&scene, &pose, &scene.pallets()[0], &AnnotatorConfig::default()),
            Err(DropReason::FullyOffscreen)
        );
    }

    #[test]
    fn parallel_matches_sequential() {
        let poses: Vec<_> = (0..12)
            .map(|k| {
                let a = k as f64 * 0.5;
                look_at(Vec3::new(3.0 * a.cos(), 1.0, 3.0 * a.sin()), Vec3::ZERO, Vec3::Y).unwrap()
            })
            .collect();
        let scene = scene_with(&[RigidTransform::IDENTITY], &[], poses[0]);
        let cfg = AnnotatorConfig::default();
        let seq = annotate_poses(&scene, &poses, 1, &cfg, 1).unwrap();
        let par = annotate_poses(&scene, &poses, 1, &cfg, 4).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.last().unwrap().image_id, 12);
    }
}
