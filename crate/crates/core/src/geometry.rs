//! Vectors, rigid transforms and the 2D/3D primitives the annotator is built on.
//!
//! Screen space is y-down with the origin at the top-left pixel corner. "Clockwise"
//! always means clockwise as seen on screen in that convention.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum ray parameter accepted as a hit, in metres.
pub const RAY_EPSILON: f64 = 1e-6;
/// Triangles with a smaller area are rejected at construction.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;
/// Consecutive polygon vertices closer than this (px) are merged.
pub const MIN_VERTEX_SEPARATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Option<Vec3> {
        let len = self.length();
        (len > 0.0 && len.is_finite()).then(|| self / len)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// z component of the 3D cross product, in raw (y-down) coordinates.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).length()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Mat3 {
    pub rows: [[f64; 3]; 3],
}

impl From<[[f64; 3]; 3]> for Mat3 {
    fn from(rows: [[f64; 3]; 3]) -> Self {
        Mat3 { rows }
    }
}

impl From<Mat3> for [[f64; 3]; 3] {
    fn from(m: Mat3) -> Self {
        m.rows
    }
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3 {
            rows: [[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]],
        }
    }

    pub fn column(&self, i: usize) -> Vec3 {
        Vec3::new(self.rows[0][i], self.rows[1][i], self.rows[2][i])
    }

    /// Rotation about the world +y axis (yaw), right-handed.
    pub fn rotation_y(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3 {
            rows: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        }
    }

    pub fn rotation_x(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3 {
            rows: [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        }
    }

    pub fn rotation_z(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3 {
            rows: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn transpose(&self) -> Mat3 {
        let r = &self.rows;
        Mat3 {
            rows: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let r = &self.rows;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut rows = [[0.0; 3]; 3];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.rows[i][k] * o.rows[k][j]).sum();
            }
        }
        Mat3 { rows }
    }

    pub fn determinant(&self) -> f64 {
        let r = &self.rows;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    /// Largest absolute entry of RᵀR − I.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().mul_mat(self);
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.rows[i][j] - target).abs());
            }
        }
        worst
    }

    pub fn is_rotation(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
            && self.orthonormality_error() <= 1e-9
            && (self.determinant() - 1.0).abs() <= 1e-9
    }
}

/// Proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !rotation.is_rotation() {
            return Err(Error::Geometry("rotation is not orthonormal with det +1".into()));
        }
        if !translation.is_finite() {
            return Err(Error::Geometry("translation is not finite".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_yaw(yaw: f64, translation: Vec3) -> Self {
        Self {
            rotation: Mat3::rotation_y(yaw),
            translation,
        }
    }

    pub fn translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::IDENTITY,
            translation,
        }
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.mul_vec(v)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.mul_mat(&other.rotation),
            translation: self.apply_point(other.translation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    origin: Vec3,
    direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        if !origin.is_finite() {
            return Err(Error::Geometry("ray origin is not finite".into()));
        }
        let direction = direction
            .normalized()
            .ok_or_else(|| Error::Geometry("ray direction has zero length".into()))?;
        Ok(Self { origin, direction })
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Ray {
        Ray {
            origin: tf.apply_point(self.origin),
            direction: tf.apply_vector(self.direction),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
}

impl Triangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::Geometry("triangle vertex is not finite".into()));
        }
        let area = 0.5 * (b - a).cross(c - a).length();
        if !(area > MIN_TRIANGLE_AREA) {
            return Err(Error::Geometry(format!("degenerate triangle (area {area:e})")));
        }
        Ok(Self { a, b, c })
    }

    pub fn area(&self) -> f64 {
        0.5 * (self.b - self.a).cross(self.c - self.a).length()
    }

    pub fn normal(&self) -> Vec3 {
        (self.b - self.a)
            .cross(self.c - self.a)
            .normalized()
            .unwrap_or(Vec3::Y)
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Triangle {
        Triangle {
            a: tf.apply_point(self.a),
            b: tf.apply_point(self.b),
            c: tf.apply_point(self.c),
        }
    }

    pub fn vertices(&self) -> [Vec3; 3] {
        [self.a, self.b, self.c]
    }

    /// Euclidean distance from `p` to the closed triangle.
    pub fn distance_to_point(&self, p: Vec3) -> f64 {
        (closest_point_on_triangle(p, self) - p).length()
    }
}

// Ericson, "Real-Time Collision Detection", 5.1.5.
fn closest_point_on_triangle(p: Vec3, t: &Triangle) -> Vec3 {
    let (a, b, c) = (t.a, t.b, t.c);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<I: IntoIterator<Item = Vec3>>(points: I) -> Self {
        points.into_iter().fold(Aabb::empty(), |acc, p| acc.including(p))
    }

    pub fn including(self, p: Vec3) -> Self {
        Aabb {
            min: self.min.min(p),
            max: self.max.max(p),
        }
    }

    /// Smallest per-axis overlap; negative when the boxes are apart.
    pub fn penetration_depth(&self, o: &Aabb) -> f64 {
        let dx = self.max.x.min(o.max.x) - self.min.x.max(o.min.x);
        let dy = self.max.y.min(o.max.y) - self.min.y.max(o.min.y);
        let dz = self.max.z.min(o.max.z) - self.min.z.max(o.min.z);
        dx.min(dy).min(dz)
    }

    /// Slab test against the parameter interval `[t_min, t_max]`.
    pub fn hit_by(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        let o = ray.origin();
        let d = ray.direction();
        let mut lo = t_min;
        let mut hi = t_max;
        for (orig, dir, bmin, bmax) in [
            (o.x, d.x, self.min.x, self.max.x),
            (o.y, d.y, self.min.y, self.max.y),
            (o.z, d.z, self.min.z, self.max.z),
        ] {
            if dir.abs() < 1e-300 {
                if orig < bmin || orig > bmax {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / dir;
            let mut t0 = (bmin - orig) * inv;
            let mut t1 = (bmax - orig) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            lo = lo.max(t0);
            hi = hi.min(t1);
            if lo > hi {
                return false;
            }
        }
        true
    }
}

/// Oriented box: a local [`Aabb`] carried by a rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Vec3,
    pub axes: [Vec3; 3],
    pub half: [f64; 3],
}

impl Obb {
    pub fn new(local: &Aabb, tf: &RigidTransform) -> Self {
        let c = (local.min + local.max) * 0.5;
        let h = (local.max - local.min) * 0.5;
        Self {
            center: tf.apply_point(c),
            axes: [0, 1, 2].map(|i| tf.rotation.column(i)),
            half: [h.x, h.y, h.z],
        }
    }

    fn radius(&self, l: Vec3) -> f64 {
        (0..3).map(|i| self.half[i] * self.axes[i].dot(l).abs()).sum()
    }

    /// Smallest overlap over the separating-axis candidates; 0 when disjoint
    /// or touching.
    pub fn penetration_depth(&self, o: &Obb) -> f64 {
        let mut axes: Vec<Vec3> = self.axes.iter().chain(&o.axes).copied().collect();
        for a in self.axes {
            for b in o.axes {
                if let Some(n) = a.cross(b).normalized().filter(|_| a.cross(b).length() > 1e-9) {
                    axes.push(n);
                }
            }
        }
        let d = o.center - self.center;
        let mut best = f64::INFINITY;
        for l in axes {
            let overlap = self.radius(l) + o.radius(l) - d.dot(l).abs();
            if overlap <= 0.0 {
                return 0.0;
            }
            best = best.min(overlap);
        }
        best
    }
}

/// Möller–Trumbore intersection; returns the hit distance along the unit ray
/// when it exceeds [`RAY_EPSILON`]. Edges count as inside.
pub fn ray_triangle_intersect(ray: &Ray, tri: &Triangle) -> Option<f64> {
    let e1 = tri.b - tri.a;
    let e2 = tri.c - tri.a;
    let p = ray.direction().cross(e2);
    let det = e1.dot(p);
    // Relative parallel test so the cutoff does not depend on triangle scale.
    if det.abs() <= 1e-14 * e1.length() * e2.length() {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = ray.origin() - tri.a;
    let u = s.dot(p) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.direction().dot(q) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv_det;
    (t > RAY_EPSILON).then_some(t)
}

/// Closed polygon in screen space. An empty polygon has no vertices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon2D {
    vertices: Vec<Vec2>,
}

impl Polygon2D {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Strict constructor: rejects non-finite input, fewer than 3 vertices,
    /// and consecutive vertices closer than [`MIN_VERTEX_SEPARATION`].
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.is_empty() {
            return Ok(Self::empty());
        }
        if vertices.len() < 3 {
            return Err(Error::Geometry(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::Geometry("polygon vertex is not finite".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i].distance(vertices[(i + 1) % n]) < MIN_VERTEX_SEPARATION {
                return Err(Error::Geometry(format!("polygon vertices {i} and {} coincide", (i + 1) % n)));
            }
        }
        Ok(Self { vertices })
    }

    /// Merges near-coincident consecutive vertices; collapses to empty when
    /// fewer than 3 remain.
    pub fn cleaned(vertices: Vec<Vec2>) -> Self {
        let mut out: Vec<Vec2> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if out.last().is_none_or(|l| l.distance(v) >= MIN_VERTEX_SEPARATION) {
                out.push(v);
            }
        }
        while out.len() > 1 && out[0].distance(out[out.len() - 1]) < MIN_VERTEX_SEPARATION {
            out.pop();
        }
        if out.len() < 3 {
            out.clear();
        }
        Self { vertices: out }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Vec2> {
        self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace sum over raw coordinates. Positive means clockwise on screen.
    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    /// True when every turn has the same orientation (collinear turns allowed).
    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let scale = self.perimeter().max(1.0);
        let tol = 1e-12 * scale * scale;
        let mut sign = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            let turn = (b - a).cross(c - b);
            if turn.abs() <= tol {
                continue;
            }
            if sign == 0.0 {
                sign = turn.signum();
            } else if turn.signum() != sign {
                return false;
            }
        }
        true
    }

    pub fn contains(&self, p: Vec2) -> bool {
        // Even-odd crossing test.
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

/// Pixel-space viewport `[0, width] × [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenRect {
    pub width: f64,
    pub height: f64,
}

impl ScreenRect {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        p.x >= -tol && p.y >= -tol && p.x <= self.width + tol && p.y <= self.height + tol
    }
}

/// Orders points clockwise (on screen) about their centroid.
///
/// The angle of each point is `atan2` of its offset from the arithmetic-mean
/// centroid, measured with screen y flipped so that a descending sort walks
/// the points clockwise on screen. The point with the greatest angle comes
/// first; equal angles are broken by increasing distance from the centroid.
pub fn clockwise_sort(points: &[Vec2]) -> Result<Vec<Vec2>> {
    Ok(clockwise_order(points)?.into_iter().map(|i| points[i]).collect())
}

/// Permutation behind [`clockwise_sort`]: `result[k]` is the input index of
/// the k-th sorted point.
pub fn clockwise_order(points: &[Vec2]) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::Geometry("degenerate point set".into()));
    }
    if points.len() == 1 {
        return Ok(vec![0]);
    }
    if points.iter().all(|p| *p == points[0]) {
        return Err(Error::Geometry("degenerate point set".into()));
    }
    let n = points.len() as f64;
    let centroid = Vec2::new(
        points.iter().map(|p| p.x).sum::<f64>() / n,
        points.iter().map(|p| p.y).sum::<f64>() / n,
    );
    let keyed: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let d = *p - centroid;
            // `+ 0.0` folds -0 into +0 so the negative x axis gets +π.
            ((-d.y + 0.0).atan2(d.x), d.length())
        })
        .collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        keyed[j]
            .0
            .total_cmp(&keyed[i].0)
            .then(keyed[i].1.total_cmp(&keyed[j].1))
            .then(i.cmp(&j))
    });
    Ok(order)
}

/// Jarvis march. Returns the strictly extreme points, clockwise on screen,
/// starting from the left-most (then top-most) point.
pub fn convex_hull(points: &[Vec2]) -> Result<Polygon2D> {
    let idx = convex_hull_indices(points)?;
    Ok(Polygon2D {
        vertices: idx.into_iter().map(|i| points[i]).collect(),
    })
}

/// Indices (into `points`) of the hull vertices, in hull order. Among exact
/// duplicates the lowest index is used.
pub fn convex_hull_indices(points: &[Vec2]) -> Result<Vec<usize>> {
    let degenerate = || Error::Geometry("degenerate hull".into());
    if points.len() < 3 || points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(degenerate());
    }
    let start = (0..points.len())
        .min_by(|&i, &j| {
            points[i]
                .x
                .total_cmp(&points[j].x)
                .then(points[i].y.total_cmp(&points[j].y))
                .then(i.cmp(&j))
        })
        .expect("non-empty");

    let extent = points
        .iter()
        .map(|p| (p.x - points[start].x).abs().max((p.y - points[start].y).abs()))
        .fold(0.0, f64::max);
    if extent == 0.0 {
        return Err(degenerate());
    }
    // Cross products below this are treated as collinear.
    let tol = 1e-12 * extent * extent;

    let mut hull = vec![start];
    let mut current = start;
    loop {
        let origin = points[current];
        let mut candidate: Option<usize> = None;
        for (i, &p) in points.iter().enumerate() {
            if p == origin {
                continue;
            }
            let Some(c) = candidate else {
                candidate = Some(i);
                continue;
            };
            let to_c = points[c] - origin;
            let to_p = p - origin;
            let turn = to_c.cross(to_p);
            // Positive signed area is clockwise on screen, so a candidate
            // must keep every other point on its non-negative side.
            if turn < -tol || (turn.abs() <= tol && to_p.length() > to_c.length()) {
                candidate = Some(i);
            }
        }
        let next = candidate.ok_or_else(degenerate)?;
        if points[next] == points[start] {
            break;
        }
        if hull.len() > points.len() {
            return Err(degenerate());
        }
        hull.push(next);
        current = next;
    }
    if hull.len() < 3 {
        return Err(degenerate());
    }
    Ok(hull)
}

/// Sutherland–Hodgman clip against `[0, width] × [0, height]`.
pub fn clip_polygon_to_rect(poly: &Polygon2D, rect: ScreenRect) -> Polygon2D {
    if poly.is_empty() {
        return Polygon2D::empty();
    }
    let (w, h) = (rect.width, rect.height);
    let mut verts = poly.vertices.clone();
    // (inside test, intersection with boundary)
    type Inside = fn(Vec2, f64, f64) -> bool;
    type Cut = fn(Vec2, Vec2, f64, f64) -> Vec2;
    let planes: [(Inside, Cut); 4] = [
        (|p, _, _| p.x >= 0.0, |a, b, _, _| lerp_at_x(a, b, 0.0)),
        (|p, w, _| p.x <= w, |a, b, w, _| lerp_at_x(a, b, w)),
        (|p, _, _| p.y >= 0.0, |a, b, _, _| lerp_at_y(a, b, 0.0)),
        (|p, _, h| p.y <= h, |a, b, _, h| lerp_at_y(a, b, h)),
    ];
    for (inside, cut) in planes {
        if verts.is_empty() {
            break;
        }
        let mut out = Vec::with_capacity(verts.len() + 4);
        let n = verts.len();
        for i in 0..n {
            let cur = verts[i];
            let prev = verts[(i + n - 1) % n];
            let cur_in = inside(cur, w, h);
            let prev_in = inside(prev, w, h);
            if cur_in {
                if !prev_in {
                    out.push(cut(prev, cur, w, h));
                }
                out.push(cur);
            } else if prev_in {
                out.push(cut(prev, cur, w, h));
            }
        }
        verts = out;
    }
    Polygon2D::cleaned(verts)
}

fn lerp_at_x(a: Vec2, b: Vec2, x: f64) -> Vec2 {
    let t = (x - a.x) / (b.x - a.x);
    Vec2::new(x, a.y + t * (b.y - a.y))
}

fn lerp_at_y(a: Vec2, b: Vec2, y: f64) -> Vec2 {
    let t = (y - a.y) / (b.y - a.y);
    Vec2::new(a.x + t * (b.x - a.x), y)
}

/// Intersection of `subject` with the convex polygon `clip` (either winding).
pub fn clip_polygon_convex(subject: &Polygon2D, clip: &Polygon2D) -> Polygon2D {
    if subject.is_empty() || clip.is_empty() {
        return Polygon2D::empty();
    }
    let orientation = clip.signed_area().signum();
    if orientation == 0.0 {
        return Polygon2D::empty();
    }
    let mut verts = subject.vertices.clone();
    for (a, b) in clip.edges() {
        if verts.is_empty() {
            break;
        }
        let edge = b - a;
        let side = |p: Vec2| orientation * edge.cross(p - a);
        let mut out = Vec::with_capacity(verts.len() + 2);
        let n = verts.len();
        for i in 0..n {
            let cur = verts[i];
            let prev = verts[(i + n - 1) % n];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(prev + (cur - prev) * (sp / (sp - sc)));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
        }
        verts = out;
    }
    Polygon2D::cleaned(verts)
}

pub fn polygon_area(poly: &Polygon2D) -> f64 {
    poly.signed_area().abs()
}

/// Axis-aligned `(x, y, w, h)` bounds.
pub fn polygon_bbox(poly: &Polygon2D) -> Result<[f64; 4]> {
    if poly.is_empty() {
        return Err(Error::Geometry("empty polygon".into()));
    }
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in &poly.vertices {
        min = Vec2::new(min.x.min(v.x), min.y.min(v.y));
        max = Vec2::new(max.x.max(v.x), max.y.max(v.y));
    }
    Ok([min.x, min.y, max.x - min.x, max.y - min.y])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v2(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    fn cyclic_eq(a: &[Vec2], b: &[Vec2]) -> bool {
        a.len() == b.len() && (0..a.len()).any(|s| (0..a.len()).all(|i| a[(i + s) % a.len()] == b[i]))
    }

    #[test]
    fn axis_aligned_hit_and_parallel_miss() {
        let tri = Triangle::new(
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(1.0, -1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        let hit = Ray::new(Vec3::new(0.0, 0.0, -1.0), Vec3::Z).unwrap();
        assert_eq!(ray_triangle_intersect(&hit, &tri), Some(1.0));
        let parallel = Ray::new(Vec3::new(0.0, 0.0, -1.0), Vec3::X).unwrap();
        assert_eq!(ray_triangle_intersect(&parallel, &tri), None);
    }

    #[test]
    fn hit_behind_origin_is_ignored() {
        let tri = Triangle::new(
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(1.0, -1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        let away = Ray::new(Vec3::new(0.0, 0.0, -1.0), -Vec3::Z).unwrap();
        assert_eq!(ray_triangle_intersect(&away, &tri), None);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let err = Triangle::new(Vec3::ZERO, Vec3::X, Vec3::X * 2.0).unwrap_err();
        assert!(err.to_string().contains("degenerate"));
    }

    #[test]
    fn zero_direction_ray_rejected() {
        assert!(Ray::new(Vec3::ZERO, Vec3::ZERO).is_err());
    }

    #[test]
    fn square_sorts_clockwise() {
        let scrambled = [v2(2.0, 2.0), v2(0.0, 0.0), v2(0.0, 2.0), v2(2.0, 0.0)];
        let sorted = clockwise_sort(&scrambled).unwrap();
        let expected = [v2(0.0, 2.0), v2(0.0, 0.0), v2(2.0, 0.0), v2(2.0, 2.0)];
        assert!(cyclic_eq(&sorted, &expected), "{sorted:?}");
        // Greatest angle first: top-left (0,0) sits at 135° with y flipped.
        assert_eq!(sorted[0], v2(0.0, 0.0));
    }

    #[test]
    fn single_point_sort_is_identity() {
        assert_eq!(clockwise_sort(&[v2(5.0, 5.0)]).unwrap(), vec![v2(5.0, 5.0)]);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let err = clockwise_sort(&[v2(1.0, 1.0), v2(1.0, 1.0)]).unwrap_err();
        assert!(err.to_string().contains("degenerate point set"));
        assert!(clockwise_sort(&[]).is_err());
    }

    #[test]
    fn equal_angles_break_by_distance() {
        // Centroid (0,0); (1,0) and (2,0) share angle 0.
        let pts = [v2(2.0, 0.0), v2(1.0, 0.0), v2(-3.0, 0.0)];
        let sorted = clockwise_sort(&pts).unwrap();
        assert_eq!(sorted, vec![v2(-3.0, 0.0), v2(1.0, 0.0), v2(2.0, 0.0)]);
    }

    #[test]
    fn hull_drops_interior_point() {
        let pts = [v2(0.0, 0.0), v2(2.0, 0.0), v2(2.0, 2.0), v2(0.0, 2.0), v2(1.0, 1.0)];
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.vertices(), &[v2(0.0, 0.0), v2(2.0, 0.0), v2(2.0, 2.0), v2(0.0, 2.0)]);
        assert!(hull.signed_area() > 0.0);
    }

    #[test]
    fn hull_of_triangle_is_identity() {
        let pts = [v2(0.0, 0.0), v2(4.0, 1.0), v2(1.0, 3.0)];
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.len(), 3);
        for p in pts {
            assert!(hull.vertices().contains(&p));
        }
    }

    #[test]
    fn hull_excludes_collinear_edge_points() {
        let pts = [v2(0.0, 0.0), v2(1.0, 0.0), v2(2.0, 0.0), v2(2.0, 2.0), v2(0.0, 2.0), v2(0.0, 1.0)];
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.len(), 4);
        assert!(!hull.vertices().contains(&v2(1.0, 0.0)));
        assert!(!hull.vertices().contains(&v2(0.0, 1.0)));
    }

    #[test]
    fn hull_handles_duplicates() {
        let pts = [v2(0.0, 0.0), v2(0.0, 0.0), v2(3.0, 0.0), v2(0.0, 3.0), v2(3.0, 0.0)];
        let idx = convex_hull_indices(&pts).unwrap();
        assert_eq!(idx, vec![0, 2, 3]);
    }

    #[test]
    fn degenerate_hulls() {
        assert!(convex_hull(&[v2(0.0, 0.0), v2(1.0, 1.0)]).is_err());
        let err = convex_hull(&[v2(0.0, 0.0), v2(1.0, 1.0), v2(2.0, 2.0), v2(3.0, 3.0)]).unwrap_err();
        assert!(err.to_string().contains("degenerate hull"));
        assert!(convex_hull(&[v2(1.0, 1.0); 5]).is_err());
    }

    #[test]
    fn clip_inside_is_unchanged() {
        let sq = Polygon2D::new(vec![v2(1.0, 1.0), v2(2.0, 1.0), v2(2.0, 2.0), v2(1.0, 2.0)]).unwrap();
        assert_eq!(clip_polygon_to_rect(&sq, ScreenRect::new(100.0, 100.0)), sq);
    }

    #[test]
    fn clip_fully_outside_is_empty() {
        let sq = Polygon2D::new(vec![v2(-5.0, 1.0), v2(-2.0, 1.0), v2(-2.0, 4.0), v2(-5.0, 4.0)]).unwrap();
        assert!(clip_polygon_to_rect(&sq, ScreenRect::new(100.0, 100.0)).is_empty());
    }

    #[test]
    fn clip_half_overlap() {
        let sq = Polygon2D::new(vec![v2(-1.0, -1.0), v2(1.0, -1.0), v2(1.0, 1.0), v2(-1.0, 1.0)]).unwrap();
        let clipped = clip_polygon_to_rect(&sq, ScreenRect::new(2.0, 2.0));
        let expected = [v2(0.0, 0.0), v2(1.0, 0.0), v2(1.0, 1.0), v2(0.0, 1.0)];
        assert!(cyclic_eq(clipped.vertices(), &expected), "{clipped:?}");
    }

    #[test]
    fn area_and_bbox_of_unit_square() {
        let cw = Polygon2D::new(vec![v2(0.0, 0.0), v2(1.0, 0.0), v2(1.0, 1.0), v2(0.0, 1.0)]).unwrap();
        let ccw = Polygon2D::new(vec![v2(0.0, 0.0), v2(0.0, 1.0), v2(1.0, 1.0), v2(1.0, 0.0)]).unwrap();
        assert_eq!(polygon_area(&cw), 1.0);
        assert_eq!(polygon_area(&ccw), 1.0);
        assert_eq!(polygon_bbox(&cw).unwrap(), [0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn empty_polygon_area_and_bbox() {
        let e = Polygon2D::empty();
        assert_eq!(polygon_area(&e), 0.0);
        assert!(polygon_bbox(&e).unwrap_err().to_string().contains("empty polygon"));
    }

    #[test]
    fn polygon_constructor_invariants() {
        assert!(Polygon2D::new(vec![v2(0.0, 0.0), v2(1.0, 0.0)]).is_err());
        assert!(Polygon2D::new(vec![v2(0.0, 0.0), v2(0.0, 0.0), v2(1.0, 1.0)]).is_err());
        let cleaned = Polygon2D::cleaned(vec![v2(0.0, 0.0), v2(0.0, 0.0), v2(1.0, 0.0), v2(1.0, 1.0), v2(0.0, 0.0)]);
        assert_eq!(cleaned.len(), 3);
        assert!(Polygon2D::cleaned(vec![v2(0.0, 0.0), v2(1.0, 0.0), v2(0.0, 0.0)]).is_empty());
    }

    #[test]
    fn rigid_transform_validation_and_inverse() {
        let bad = Mat3 {
            rows: [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
        assert!(RigidTransform::new(bad, Vec3::ZERO).is_err());
        let mirror = Mat3 {
            rows: [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
        assert!(RigidTransform::new(mirror, Vec3::ZERO).is_err());
        let tf = RigidTransform::new(
            Mat3::rotation_y(0.3).mul_mat(&Mat3::rotation_x(-1.1)),
            Vec3::new(1.0, 2.0, 3.0),
        )
        .unwrap();
        let p = Vec3::new(0.4, -2.0, 7.0);
        let back = tf.inverse().apply_point(tf.apply_point(p));
        assert!((back - p).length() < 1e-12);
    }

    #[test]
    fn point_triangle_distance() {
        let tri = Triangle::new(Vec3::ZERO, Vec3::X, Vec3::Y).unwrap();
        assert!((tri.distance_to_point(Vec3::new(0.25, 0.25, 2.0)) - 2.0).abs() < 1e-12);
        assert!((tri.distance_to_point(Vec3::new(-1.0, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        assert_eq!(tri.distance_to_point(Vec3::new(0.5, 0.5, 0.0)), 0.0);
    }

    #[test]
    fn aabb_slab_and_penetration() {
        let b = Aabb::from_points([Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)]);
        let ray = Ray::new(Vec3::new(-1.0, 0.5, 0.5), Vec3::X).unwrap();
        assert!(b.hit_by(&ray, 0.0, 10.0));
        assert!(!b.hit_by(&ray, 0.0, 0.5));
        let c = Aabb::from_points([Vec3::new(0.9, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0)]);
        assert!((b.penetration_depth(&c) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn obb_overlap_respects_rotation() {
        let local = Aabb::from_points([Vec3::new(-0.6, 0.0, -0.5), Vec3::new(0.6, 0.144, 0.5)]);
        let a = Obb::new(&local, &RigidTransform::IDENTITY);
        // Rotated by 45° and moved so the AABBs overlap but the boxes do not.
        let b = Obb::new(&local, &RigidTransform::from_yaw(std::f64::consts::FRAC_PI_4, Vec3::new(1.5, 0.0, 1.3)));
        assert_eq!(a.penetration_depth(&b), 0.0);
        let c = Obb::new(&local, &RigidTransform::translation(Vec3::new(1.1, 0.0, 0.0)));
        assert!((a.penetration_depth(&c) - 0.1).abs() < 1e-12);
        let stacked = Obb::new(&local, &RigidTransform::translation(Vec3::new(0.0, 0.144, 0.0)));
        assert!(a.penetration_depth(&stacked) < 1e-12);
    }

    #[test]
    fn convex_clip_of_overlapping_squares() {
        let a = Polygon2D::new(vec![v2(0.0, 0.0), v2(10.0, 0.0), v2(10.0, 10.0), v2(0.0, 10.0)]).unwrap();
        let b = Polygon2D::new(vec![v2(5.0, 0.0), v2(5.0, 10.0), v2(15.0, 10.0), v2(15.0, 0.0)]).unwrap();
        let i = clip_polygon_convex(&a, &b);
        assert!((polygon_area(&i) - 50.0).abs() < 1e-9);
    }
}
