//! Software z-buffer rasterizer. Produces per-pixel instance/face ids used to
//! check annotations at pixel level, and flat-shaded preview images.
//!
//! Pixel `(x, y)` is sampled at its centre `(x + 0.5, y + 0.5)`. Triangles are
//! clipped against a near plane, filled with edge functions and the top-left
//! rule, and depth is interpolated perspective-correctly. The stored depth is
//! the Euclidean distance from the camera centre along the pixel ray.

use std::path::Path;

use crate::annotator::{AnnotationCategory, FrameAnnotations};
use crate::camera::{project_camera_frame, unproject_direction, CameraIntrinsics, CameraPose};
use crate::error::{Error, Result};
use crate::geometry::{convex_hull, Polygon2D, Vec2, Vec3};
use crate::scene::{Owner, Scene};

/// Camera-frame near plane, metres.
pub const NEAR_PLANE: f64 = 1e-3;
/// Sentinel for "no instance".
pub const NO_INSTANCE: u32 = u32::MAX;
/// Sentinel for "no face".
pub const NO_FACE: u16 = u16::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct IdBuffer {
    width: u32,
    height: u32,
    instance: Vec<u32>,
    face: Vec<u16>,
    depth: Vec<f64>,
}

impl IdBuffer {
    fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            instance: vec![NO_INSTANCE; n],
            face: vec![NO_FACE; n],
            depth: vec![f64::INFINITY; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn instance(&self, x: u32, y: u32) -> Option<u32> {
        Some(self.instance[self.index(x, y)]).filter(|&i| i != NO_INSTANCE)
    }

    pub fn face(&self, x: u32, y: u32) -> Option<u16> {
        Some(self.face[self.index(x, y)]).filter(|&f| f != NO_FACE)
    }

    /// Distance to the nearest surface through the pixel centre (props
    /// included); infinite where nothing was drawn.
    pub fn depth(&self, x: u32, y: u32) -> f64 {
        self.depth[self.index(x, y)]
    }

    pub fn instance_ids(&self) -> &[u32] {
        &self.instance
    }

    pub fn face_ids(&self) -> &[u16] {
        &self.face
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Set pixels as `(x, y)`, row-major.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }
}

/// A triangle in screen space, wound so its edge functions are non-negative
/// inside.
#[derive(Debug, Clone, Copy)]
struct ScreenTri {
    p: [Vec2; 3],
    inv_z: [f64; 3],
    area2: f64,
}

impl ScreenTri {
    fn new(mut p: [Vec2; 3], mut z: [f64; 3]) -> Option<Self> {
        let mut area2 = (p[1] - p[0]).cross(p[2] - p[0]);
        if !area2.is_finite() || area2 == 0.0 {
            return None;
        }
        if area2 < 0.0 {
            p.swap(1, 2);
            z.swap(1, 2);
            area2 = -area2;
        }
        Some(Self {
            p,
            inv_z: [1.0 / z[0], 1.0 / z[1], 1.0 / z[2]],
            area2,
        })
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let xs = self.p.map(|v| v.x);
        let ys = self.p.map(|v| v.y);
        (
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ys.iter().copied().fold(f64::INFINITY, f64::min),
            ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }

    /// Camera-frame z at `q` if the triangle covers it.
    fn sample(&self, q: Vec2) -> Option<f64> {
        let mut w = [0.0; 3];
        for (i, wi) in w.iter_mut().enumerate() {
            let a = self.p[(i + 1) % 3];
            let b = self.p[(i + 2) % 3];
            let e = b - a;
            let v = e.cross(q - a);
            if v < 0.0 || (v == 0.0 && !is_top_left(e)) {
                return None;
            }
            *wi = v;
        }
        let inv_z = (w[0] * self.inv_z[0] + w[1] * self.inv_z[1] + w[2] * self.inv_z[2]) / self.area2;
        (inv_z > 0.0).then(|| 1.0 / inv_z)
    }
}

fn is_top_left(e: Vec2) -> bool {
    (e.y == 0.0 && e.x > 0.0) || e.y < 0.0
}

/// Clips a camera-frame triangle to `z >= NEAR_PLANE` and fans the result.
fn near_clip(tri: [Vec3; 3]) -> Vec<[Vec3; 3]> {
    let inside = |v: &Vec3| v.z >= NEAR_PLANE;
    if tri.iter().all(inside) {
        return vec![tri];
    }
    let mut poly = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        if inside(&a) {
            poly.push(a);
        }
        if inside(&a) != inside(&b) {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut v = a + (b - a) * t;
            v.z = NEAR_PLANE;
            poly.push(v);
        }
    }
    (1..poly.len().saturating_sub(1)).map(|i| [poly[0], poly[i], poly[i + 1]]).collect()
}

fn screen_tris(tri: [Vec3; 3], pose: &CameraPose, intr: &CameraIntrinsics) -> Vec<ScreenTri> {
    near_clip(tri.map(|v| pose.world_to_camera(v)))
        .into_iter()
        .filter_map(|c| {
            let p = c.map(|v| project_camera_frame(v, intr).screen);
            ScreenTri::new(p, c.map(|v| v.z))
        })
        .collect()
}

fn ray_length_factor(q: Vec2, intr: &CameraIntrinsics) -> f64 {
    unproject_direction(q, intr).length()
}

/// Full render state: ids plus the winning triangle per pixel.
struct Render {
    ids: IdBuffer,
    /// `(object index, triangle index)` of the winning triangle.
    source: Vec<(u32, u32)>,
}

fn render(scene: &Scene, pose: &CameraPose, intr: &CameraIntrinsics) -> Render {
    let (w, h) = (intr.width, intr.height);
    let mut ids = IdBuffer::new(w, h);
    let mut priority = vec![u64::MAX; ids.depth.len()];
    let mut source = vec![(u32::MAX, u32::MAX); ids.depth.len()];
    // Pixel ray length per pixel is reused across triangles.
    let factor: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| ray_length_factor(Vec2::new(x as f64 + 0.5, y as f64 + 0.5), intr))
        .collect();

    for (oi, obj) in scene.objects().iter().enumerate() {
        let prio = obj.owner.priority();
        let instance = match obj.owner {
            Owner::Pallet(id) => id,
            Owner::Prop(_) => NO_INSTANCE,
        };
        for (ti, tri) in obj.triangles.iter().enumerate() {
            let face = obj.faces.get(ti).copied().flatten().unwrap_or(NO_FACE);
            for st in screen_tris(tri.vertices(), pose, intr) {
                let (x0, x1, y0, y1) = st.bounds();
                let Some((xa, xb)) = pixel_span(x0, x1, w) else { continue };
                let Some((ya, yb)) = pixel_span(y0, y1, h) else { continue };
                for y in ya..=yb {
                    for x in xa..=xb {
                        let q = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                        let Some(z) = st.sample(q) else { continue };
                        let i = y as usize * w as usize + x as usize;
                        let d = z * factor[i];
                        if d < ids.depth[i] || (d == ids.depth[i] && prio < priority[i]) {
                            ids.depth[i] = d;
                            ids.instance[i] = instance;
                            ids.face[i] = face;
                            priority[i] = prio;
                            source[i] = (oi as u32, ti as u32);
                        }
                    }
                }
            }
        }
    }
    Render { ids, source }
}

/// Inclusive range of pixel indices whose centres fall in `[lo, hi]`, clamped to `0..n`.
fn pixel_span(lo: f64, hi: f64, n: u32) -> Option<(u32, u32)> {
    if !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    let a = (lo - 0.5).ceil().max(0.0);
    let b = (hi - 0.5).floor().min(n as f64 - 1.0);
    (a <= b).then(|| (a as u32, b as u32))
}

/// Renders instance ids, face ids and depth for one pose.
pub fn rasterize(scene: &Scene, pose: &CameraPose, intr: &CameraIntrinsics) -> IdBuffer {
    render(scene, pose, intr).ids
}

/// Nearest surface through an arbitrary sub-pixel position `q`, skipping
/// `exclude`. Uses the same coverage test and depth as [`rasterize`], so at
/// pixel centres it reproduces the buffer exactly. Returns the distance and
/// the owner hit.
pub fn depth_at(
    scene: &Scene,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    q: Vec2,
    exclude: Option<Owner>,
) -> Option<(f64, Owner)> {
    let factor = ray_length_factor(q, intr);
    let mut best: Option<(f64, Owner)> = None;
    for obj in scene.objects() {
        if Some(obj.owner) == exclude {
            continue;
        }
        for tri in &obj.triangles {
            for st in screen_tris(tri.vertices(), pose, intr) {
                let (x0, x1, y0, y1) = st.bounds();
                if q.x < x0 || q.x > x1 || q.y < y0 || q.y > y1 {
                    continue;
                }
                let Some(z) = st.sample(q) else { continue };
                let d = z * factor;
                let better = match best {
                    None => true,
                    Some((bd, bo)) => d < bd || (d == bd && obj.owner.priority() < bo.priority()),
                };
                if better {
                    best = Some((d, obj.owner));
                }
            }
        }
    }
    best
}

/// Pixels carrying `instance_id` (and `face_id`, if given).
pub fn mask_of(buffer: &IdBuffer, instance_id: u32, face_id: Option<u16>) -> Mask {
    Mask {
        width: buffer.width,
        height: buffer.height,
        bits: buffer
            .instance
            .iter()
            .zip(&buffer.face)
            .map(|(&i, &f)| i == instance_id && face_id.is_none_or(|want| f == want))
            .collect(),
    }
}

/// Scan-converts a polygon by centre sampling with the even-odd rule. Each
/// scanline covers pixel centres in `[x_in, x_out)`.
pub fn rasterize_polygon(poly: &Polygon2D, width: u32, height: u32) -> Mask {
    let mut mask = Mask::new(width, height);
    if poly.is_empty() {
        return mask;
    }
    let mut xs = Vec::new();
    for y in 0..height {
        let cy = y as f64 + 0.5;
        xs.clear();
        for (a, b) in poly.edges() {
            // Half-open in y so shared vertices count once.
            if (a.y <= cy && cy < b.y) || (b.y <= cy && cy < a.y) {
                xs.push(a.x + (cy - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let a = (pair[0] - 0.5).ceil().max(0.0);
            let b = (pair[1] - 0.5).ceil().min(width as f64);
            let mut x = a;
            while x < b {
                mask.set(x as u32, y, true);
                x += 1.0;
            }
        }
    }
    mask
}

/// `|a ∧ b| / |a ∨ b|`, 1 when both are empty.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::MaskDimensionMismatch(
            a.width as usize,
            a.height as usize,
            b.width as usize,
            b.height as usize,
        ));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Every pixel whose centre lies inside or on the convex hull of the set
/// pixel centres of `mask`.
pub fn pixel_hull_mask(mask: &Mask) -> Mask {
    let centres: Vec<Vec2> = mask
        .pixels()
        .map(|(x, y)| Vec2::new(x as f64 + 0.5, y as f64 + 0.5))
        .collect();
    let Ok(hull) = convex_hull(&centres) else {
        return mask.clone();
    };
    let v = hull.vertices();
    let (mut x0, mut x1, mut y0, mut y1) = (u32::MAX, 0, u32::MAX, 0);
    for (x, y) in mask.pixels() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let mut out = Mask::new(mask.width, mask.height);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let q = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
            let inside = (0..v.len()).all(|i| (v[(i + 1) % v.len()] - v[i]).cross(q - v[i]) >= -1e-9);
            if inside {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, fill: [u8; 3]) -> Self {
        Self {
            width,
            height,
            rgb: fill.repeat(width as usize * height as usize),
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, c: [u8; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_ppm())
    }
}

pub const BACKGROUND: [u8; 3] = [32, 32, 40];
pub const FACE_COLOR: [u8; 3] = [255, 64, 64];
pub const BODY_COLOR: [u8; 3] = [64, 255, 96];

const PALLET_BASE: [f64; 3] = [196.0, 150.0, 96.0];
const PROP_BASE: [f64; 3] = [140.0, 140.0, 150.0];

/// Flat-shaded render with annotation outlines drawn on top (faces red,
/// bodies green).
pub fn render_preview(
    scene: &Scene,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    annotations: &FrameAnnotations,
) -> Image {
    let r = render(scene, pose, intr);
    let mut img = Image::new(intr.width, intr.height, BACKGROUND);
    let objects = scene.objects();
    for y in 0..intr.height {
        for x in 0..intr.width {
            let i = y as usize * intr.width as usize + x as usize;
            let (oi, ti) = r.source[i];
            if oi == u32::MAX {
                continue;
            }
            let obj = &objects[oi as usize];
            let n = obj.triangles[ti as usize].normal();
            let q = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
            let dir = pose.camera_to_world_dir(unproject_direction(q, intr));
            let lambert = (n.dot(dir) / dir.length()).abs();
            let shade = 0.25 + 0.75 * lambert;
            let base = match obj.owner {
                Owner::Pallet(_) => PALLET_BASE,
                Owner::Prop(_) => PROP_BASE,
            };
            img.put(x, y, base.map(|c| (c * shade).round().clamp(0.0, 255.0) as u8));
        }
    }
    for rec in &annotations.records {
        let color = match rec.category {
            AnnotationCategory::PalletFace => FACE_COLOR,
            AnnotationCategory::PalletBody => BODY_COLOR,
        };
        for (a, b) in rec.polygon.edges() {
            draw_segment(&mut img, a, b, color);
        }
    }
    img
}

/// Marks every pixel containing a sample of segment `a`–`b` (samples at most
/// 0.25 px apart, endpoints included). Points on the right/bottom image edge
/// land in the last column/row.
fn draw_segment(img: &mut Image, a: Vec2, b: Vec2, color: [u8; 3]) {
    let steps = ((b - a).length() * 4.0).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let p = a + (b - a) * t;
        if let Some((x, y)) = pixel_of(p, img.width, img.height) {
            img.put(x, y, color);
        }
    }
}

/// Pixel containing `p`, with the far image edges folded into the last pixel.
pub fn pixel_of(p: Vec2, width: u32, height: u32) -> Option<(u32, u32)> {
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= width as f64 && p.y <= height as f64) {
        return None;
    }
    Some(((p.x.floor() as u32).min(width - 1), (p.y.floor() as u32).min(height - 1)))
}
