//! Triangle meshes: Wavefront loading and the built-in procedural shapes.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Triangle, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    triangles: Vec<Triangle>,
    name: String,
}

impl TriangleMesh {
    pub fn new(name: impl Into<String>, triangles: Vec<Triangle>) -> Result<Self> {
        let name = name.into();
        if triangles.is_empty() {
            return Err(Error::InvalidMesh {
                path: name,
                reason: "empty mesh".into(),
            });
        }
        Ok(Self { triangles, name })
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles.iter().map(Triangle::area).sum()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.triangles.iter().flat_map(|t| t.vertices()))
    }
}

pub fn load_mesh_obj(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}

/// Parses the `v`/`f` subset of Wavefront OBJ. Faces with more than three
/// corners are fan-split from their first corner; every other record is ignored.
pub fn parse_obj(text: &str, name: &str) -> Result<TriangleMesh> {
    let err = |line: usize, reason: String| Error::InvalidMesh {
        path: name.to_string(),
        reason: format!("line {line}: {reason}"),
    };
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(lineno, format!("bad vertex coordinate: {e}")))?;
                if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                    return Err(err(lineno, "vertex needs three finite coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let corners = tokens
                    .map(|t| resolve_index(t, vertices.len()))
                    .collect::<Option<Vec<usize>>>()
                    .ok_or_else(|| err(lineno, "invalid face index".into()))?;
                if corners.len() < 3 {
                    return Err(err(lineno, "face needs at least three corners".into()));
                }
                for k in 1..corners.len() - 1 {
                    let tri = Triangle::new(vertices[corners[0]], vertices[corners[k]], vertices[corners[k + 1]])
                        .map_err(|e| err(lineno, e.to_string()))?;
                    triangles.push(tri);
                }
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(Error::InvalidMesh {
            path: name.to_string(),
            reason: "empty mesh".into(),
        });
    }
    TriangleMesh::new(name, triangles)
}

/// 1-based index, negative counts back from the most recent vertex.
fn resolve_index(token: &str, count: usize) -> Option<usize> {
    let idx: i64 = token.split('/').next()?.parse().ok()?;
    let resolved = match idx {
        0 => return None,
        i if i > 0 => i - 1,
        i => count as i64 + i,
    };
    (0..count as i64).contains(&resolved).then_some(resolved as usize)
}

fn push_box(out: &mut Vec<Triangle>, min: Vec3, max: Vec3) {
    let c = |x: bool, y: bool, z: bool| {
        Vec3::new(
            if x { max.x } else { min.x },
            if y { max.y } else { min.y },
            if z { max.z } else { min.z },
        )
    };
    // Outward-facing quads, counter-clockwise seen from outside.
    let quads = [
        [c(true, false, false), c(true, true, false), c(true, true, true), c(true, false, true)],
        [c(false, false, false), c(false, false, true), c(false, true, true), c(false, true, false)],
        [c(false, true, false), c(false, true, true), c(true, true, true), c(true, true, false)],
        [c(false, false, false), c(true, false, false), c(true, false, true), c(false, false, true)],
        [c(false, false, true), c(true, false, true), c(true, true, true), c(false, true, true)],
        [c(false, false, false), c(false, true, false), c(true, true, false), c(true, false, false)],
    ];
    for q in quads {
        out.push(Triangle { a: q[0], b: q[1], c: q[2] });
        out.push(Triangle { a: q[0], b: q[2], c: q[3] });
    }
}

/// Axis-aligned box centred on the origin.
pub fn box_mesh(size: Vec3) -> Result<TriangleMesh> {
    if !(size.x > 0.0 && size.y > 0.0 && size.z > 0.0 && size.is_finite()) {
        return Err(Error::InvalidMesh {
            path: "builtin:box".into(),
            reason: format!("box size {:?} must be positive", <[f64; 3]>::from(size)),
        });
    }
    let half = size * 0.5;
    let mut tris = Vec::with_capacity(12);
    push_box(&mut tris, -half, half);
    TriangleMesh::new("builtin:box", tris)
}

pub const PALLET_LENGTH: f64 = 1.2;
pub const PALLET_WIDTH: f64 = 1.0;
pub const PALLET_HEIGHT: f64 = 0.144;
const DECK_THICKNESS: f64 = 0.022;
const BOARD_WIDTH: f64 = 0.145;
const STRINGER_WIDTH: f64 = 0.1;

/// Outline vertices, face loops and mesh of a 1200×1000×144 mm stringer
/// pallet. Local frame: origin at the bottom centre, stringers along x, fork
/// entries (faces) at x = ±0.6.
pub fn stringer_pallet() -> (TriangleMesh, Vec<Vec3>, BTreeMap<String, Vec<Vec3>>) {
    let (hl, hw, h) = (PALLET_LENGTH / 2.0, PALLET_WIDTH / 2.0, PALLET_HEIGHT);
    let mut tris = Vec::new();
    let board_x = |k: usize, n: usize| -hl + BOARD_WIDTH / 2.0 + k as f64 * (PALLET_LENGTH - BOARD_WIDTH) / (n - 1) as f64;
    for k in 0..5 {
        let x = board_x(k, 5);
        push_box(
            &mut tris,
            Vec3::new(x - BOARD_WIDTH / 2.0, h - DECK_THICKNESS, -hw),
            Vec3::new(x + BOARD_WIDTH / 2.0, h, hw),
        );
    }
    for k in 0..3 {
        let x = board_x(k, 3);
        push_box(
            &mut tris,
            Vec3::new(x - BOARD_WIDTH / 2.0, 0.0, -hw),
            Vec3::new(x + BOARD_WIDTH / 2.0, DECK_THICKNESS, hw),
        );
    }
    for z in [-hw + STRINGER_WIDTH / 2.0, 0.0, hw - STRINGER_WIDTH / 2.0] {
        push_box(
            &mut tris,
            Vec3::new(-hl, DECK_THICKNESS, z - STRINGER_WIDTH / 2.0),
            Vec3::new(hl, h - DECK_THICKNESS, z + STRINGER_WIDTH / 2.0),
        );
    }
    let mesh = TriangleMesh::new("builtin:stringer_pallet", tris).expect("non-empty");

    let mut outline = Vec::with_capacity(8);
    for y in [0.0, h] {
        for (x, z) in [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)] {
            outline.push(Vec3::new(x, y, z));
        }
    }
    let face = |x: f64| {
        vec![
            Vec3::new(x, 0.0, -hw),
            Vec3::new(x, 0.0, hw),
            Vec3::new(x, h, hw),
            Vec3::new(x, h, -hw),
        ]
    };
    let faces = BTreeMap::from([("front".to_string(), face(hl)), ("rear".to_string(), face(-hl))]);
    (mesh, outline, faces)
}

/// Triangle → face tags for a model: a triangle belongs to a face when all
/// its corners lie on the face plane and its centroid lies inside the loop.
pub(crate) fn tag_face_triangles(mesh: &TriangleMesh, faces: &BTreeMap<String, Vec<Vec3>>) -> Vec<Option<u16>> {
    let planes: Vec<Option<FacePlane>> = faces.values().map(|l| FacePlane::new(l)).collect();
    mesh.triangles()
        .iter()
        .map(|t| {
            planes.iter().enumerate().find_map(|(i, plane)| {
                let plane = plane.as_ref()?;
                plane.covers(t).then_some(i as u16)
            })
        })
        .collect()
}

struct FacePlane {
    origin: Vec3,
    normal: Vec3,
    u: Vec3,
    v: Vec3,
    loop2d: Vec<(f64, f64)>,
}

impl FacePlane {
    fn new(loop3d: &[Vec3]) -> Option<Self> {
        // Newell normal.
        let mut n = Vec3::ZERO;
        for i in 0..loop3d.len() {
            let a = loop3d[i];
            let b = loop3d[(i + 1) % loop3d.len()];
            n += Vec3::new((a.y - b.y) * (a.z + b.z), (a.z - b.z) * (a.x + b.x), (a.x - b.x) * (a.y + b.y));
        }
        let normal = n.normalized()?;
        let helper = if normal.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        let u = normal.cross(helper).normalized()?;
        let v = normal.cross(u);
        let origin = loop3d[0];
        let loop2d = loop3d.iter().map(|p| ((*p - origin).dot(u), (*p - origin).dot(v))).collect();
        Some(Self {
            origin,
            normal,
            u,
            v,
            loop2d,
        })
    }

    fn covers(&self, t: &Triangle) -> bool {
        const PLANE_TOL: f64 = 1e-6;
        if t.vertices().iter().any(|p| (*p - self.origin).dot(self.normal).abs() > PLANE_TOL) {
            return false;
        }
        let c = (t.a + t.b + t.c) / 3.0 - self.origin;
        let (px, py) = (c.dot(self.u), c.dot(self.v));
        let mut inside = false;
        let n = self.loop2d.len();
        for i in 0..n {
            let (ax, ay) = self.loop2d[i];
            let (bx, by) = self.loop2d[(i + 1) % n];
            if (ay > py) != (by > py) && px < ax + (py - ay) * (bx - ax) / (by - ay) {
                inside = !inside;
            }
        }
        inside
    }
}

/// A pallet mesh with its labelled outline and named face loops, all in the
/// model's local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PalletModel {
    mesh: Arc<TriangleMesh>,
    body_outline: Vec<Vec3>,
    faces: BTreeMap<String, Vec<Vec3>>,
    triangle_faces: Vec<Option<u16>>,
}

impl PalletModel {
    pub fn new(mesh: Arc<TriangleMesh>, body_outline: Vec<Vec3>, faces: BTreeMap<String, Vec<Vec3>>) -> Result<Self> {
        if body_outline.len() < 4 {
            return Err(Error::InvalidScene(format!(
                "model {} has {} body outline vertices, need at least 4",
                mesh.name(),
                body_outline.len()
            )));
        }
        if faces.len() > u16::MAX as usize {
            return Err(Error::InvalidScene("too many faces".into()));
        }
        for (id, face) in &faces {
            if face.len() < 3 {
                return Err(Error::InvalidScene(format!("face {id} has fewer than 3 vertices")));
            }
            for v in face {
                let near = mesh.triangles().iter().any(|t| t.distance_to_point(*v) <= 1e-3);
                if !near {
                    return Err(Error::InvalidScene(format!(
                        "face {id} vertex {:?} is farther than 1 mm from the mesh",
                        <[f64; 3]>::from(*v)
                    )));
                }
            }
        }
        if body_outline.iter().chain(faces.values().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidScene("model vertex is not finite".into()));
        }
        let triangle_faces = tag_face_triangles(&mesh, &faces);
        Ok(Self {
            mesh,
            body_outline,
            faces,
            triangle_faces,
        })
    }

    pub fn stringer() -> Self {
        let (mesh, outline, faces) = stringer_pallet();
        Self::new(Arc::new(mesh), outline, faces).expect("builtin pallet is valid")
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn body_outline(&self) -> &[Vec3] {
        &self.body_outline
    }

    /// Face loops in face-id order; the position is the face index.
    pub fn faces(&self) -> &BTreeMap<String, Vec<Vec3>> {
        &self.faces
    }

    pub fn face_name(&self, index: u16) -> Option<&str> {
        self.faces.keys().nth(index as usize).map(String::as_str)
    }

    /// Face index of each mesh triangle, if it lies on a face loop.
    pub fn triangle_faces(&self) -> &[Option<u16>] {
        &self.triangle_faces
    }

    /// Vertical extent of the mesh; the stacking step.
    pub fn height(&self) -> f64 {
        let bb = self.mesh.aabb();
        bb.max.y - bb.min.y
    }
}
