//! Procedural scenes for the five warehouse scenario categories.
//!
//! Default sphere counts make each category's image count a multiple of the
//! 84-pose default orbit: 10, 25, 30 and 20 spheres give 840, 2100, 2520 and
//! 1680 images, and the combined scene is their union (7140).

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use super::mesh::{box_mesh, PalletModel, PALLET_LENGTH, PALLET_WIDTH};
use super::rng::SceneRng;
use super::{MeshSource, ModelEntry, PalletInstance, PropInstance, ScenarioCategory, Scene, SceneParts};
use crate::camera::{default_elevation_rings, CameraIntrinsics, SphereOfInterest, DEFAULT_AZIMUTH_STEPS};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec2, Vec3};

const MODEL_ID: &str = "stringer";
const MAX_ATTEMPTS_PER_ITEM: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitConfig {
    /// Ring elevations, radians.
    pub elevation_rings: Vec<f64>,
    pub azimuth_steps: u32,
    pub radius_min: f64,
    pub radius_max: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            elevation_rings: default_elevation_rings(),
            azimuth_steps: DEFAULT_AZIMUTH_STEPS,
            radius_min: 2.5,
            radius_max: 4.5,
        }
    }
}

impl OrbitConfig {
    pub fn poses_per_sphere(&self) -> usize {
        self.elevation_rings.len() * self.azimuth_steps as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndividualConfig {
    pub pallets: usize,
    pub spheres: usize,
    /// Floor extent (x, z) in metres, centred on the zone origin.
    pub floor: [f64; 2],
    pub min_spacing: f64,
}

impl Default for IndividualConfig {
    fn default() -> Self {
        Self {
            pallets: 12,
            spheres: 10,
            floor: [14.0, 14.0],
            min_spacing: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedConfig {
    pub stacks: usize,
    pub min_height: usize,
    pub max_height: usize,
    /// Explicit per-stack heights; overrides `stacks` and the height range.
    pub stack_heights: Option<Vec<usize>>,
    pub spheres: usize,
    pub floor: [f64; 2],
    pub min_spacing: f64,
}

impl Default for StackedConfig {
    fn default() -> Self {
        Self {
            stacks: 8,
            min_height: 2,
            max_height: 6,
            stack_heights: None,
            spheres: 25,
            floor: [12.0, 12.0],
            min_spacing: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RackingConfig {
    pub racks: usize,
    pub bays: usize,
    /// Beam top heights above the floor level, metres.
    pub beam_levels: Vec<f64>,
    /// Probability that a slot holds a pallet.
    pub occupancy: f64,
    pub aisle: f64,
    pub spheres: usize,
}

impl Default for RackingConfig {
    fn default() -> Self {
        Self {
            racks: 3,
            bays: 3,
            beam_levels: vec![1.5, 3.0],
            occupancy: 0.75,
            aisle: 3.5,
            spheres: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForkliftConfig {
    pub forklifts: usize,
    pub spheres: usize,
    pub floor: [f64; 2],
    pub min_spacing: f64,
    pub lift_min: f64,
    pub lift_max: f64,
}

impl Default for ForkliftConfig {
    fn default() -> Self {
        Self {
            forklifts: 4,
            spheres: 20,
            floor: [16.0, 16.0],
            min_spacing: 0.5,
            lift_min: 0.05,
            lift_max: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioConfig {
    pub intrinsics: CameraIntrinsics,
    pub orbit: OrbitConfig,
    pub individual: IndividualConfig,
    pub stacked: StackedConfig,
    pub racking: RackingConfig,
    pub forklifts: ForkliftConfig,
}

impl ScenarioConfig {
    /// Sets the main object count of a category: pallets (individual), stacks,
    /// racks or forklifts. For `Combined` every category is set.
    pub fn with_count(mut self, category: ScenarioCategory, count: usize) -> Self {
        match category {
            ScenarioCategory::Individual => self.individual.pallets = count,
            ScenarioCategory::Stacked => {
                self.stacked.stacks = count;
                self.stacked.stack_heights = None;
            }
            ScenarioCategory::OnRacking => self.racking.racks = count,
            ScenarioCategory::OnForklifts => self.forklifts.forklifts = count,
            ScenarioCategory::Combined => {
                for c in ScenarioCategory::ALL.into_iter().filter(|c| *c != ScenarioCategory::Combined) {
                    self = self.with_count(c, count);
                }
            }
        }
        self
    }

    /// Images the category yields with this configuration.
    pub fn image_count(&self, category: ScenarioCategory) -> usize {
        let per = self.orbit.poses_per_sphere();
        match category {
            ScenarioCategory::Individual => self.individual.spheres * per,
            ScenarioCategory::Stacked => self.stacked.spheres * per,
            ScenarioCategory::OnRacking => self.racking.spheres * per,
            ScenarioCategory::OnForklifts => self.forklifts.spheres * per,
            ScenarioCategory::Combined => [
                ScenarioCategory::Individual,
                ScenarioCategory::Stacked,
                ScenarioCategory::OnRacking,
                ScenarioCategory::OnForklifts,
            ]
            .into_iter()
            .map(|c| self.image_count(c))
            .sum(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let o = &self.orbit;
        if o.azimuth_steps == 0 || o.elevation_rings.is_empty() {
            return bad("orbit needs at least one ring and one azimuth step");
        }
        if !(o.radius_min > 0.0 && o.radius_min <= o.radius_max && o.radius_max.is_finite()) {
            return bad("orbit radius range must be positive and ordered");
        }
        let s = &self.stacked;
        if s.min_height == 0 || s.min_height > s.max_height {
            return bad("stack height range must be positive and ordered");
        }
        if s.stack_heights.as_ref().is_some_and(|h| h.contains(&0)) {
            return bad("explicit stack heights must be positive");
        }
        if !(0.0..=1.0).contains(&self.racking.occupancy) {
            return bad("rack occupancy must lie in [0, 1]");
        }
        if self.racking.beam_levels.iter().any(|l| !(*l > 0.0)) {
            return bad("beam levels must be above the floor");
        }
        let f = &self.forklifts;
        if !(f.lift_min >= 0.04 && f.lift_min <= f.lift_max) {
            return bad("fork lift range must start at or above the fork thickness (0.04 m)");
        }
        for spacing in [self.individual.min_spacing, s.min_spacing, f.min_spacing] {
            if !(spacing >= 0.0) {
                return bad("spacing must be non-negative");
            }
        }
        self.intrinsics.validate()
    }
}

/// Builds a scene for `category`. Pure in `(category, seed, config)`.
pub fn generate_scenario(category: ScenarioCategory, seed: u64, config: &ScenarioConfig) -> Result<Scene> {
    config.validate()?;
    let model = Arc::new(PalletModel::stringer());
    let mut b = Builder {
        model: model.clone(),
        pallets: Vec::new(),
        props: Vec::new(),
        spheres: Vec::new(),
    };
    let zones = [
        (ScenarioCategory::Individual, Vec3::new(0.0, 0.0, 0.0)),
        (ScenarioCategory::Stacked, Vec3::new(30.0, 0.0, 0.0)),
        (ScenarioCategory::OnRacking, Vec3::new(60.0, 0.0, 0.0)),
        (ScenarioCategory::OnForklifts, Vec3::new(90.0, 0.0, 0.0)),
    ];
    for (stream, (cat, origin)) in zones.into_iter().enumerate() {
        if category != cat && category != ScenarioCategory::Combined {
            continue;
        }
        let origin = if category == ScenarioCategory::Combined { origin } else { Vec3::ZERO };
        let mut rng = SceneRng::new(seed, stream as u64);
        match cat {
            ScenarioCategory::Individual => b.individual(&mut rng, origin, config)?,
            ScenarioCategory::Stacked => b.stacked(&mut rng, origin, config)?,
            ScenarioCategory::OnRacking => b.racking(&mut rng, origin, config)?,
            ScenarioCategory::OnForklifts => b.forklifts(&mut rng, origin, config)?,
            ScenarioCategory::Combined => unreachable!(),
        }
    }
    Scene::new(SceneParts {
        seed,
        category: Some(category),
        intrinsics: config.intrinsics,
        models: vec![ModelEntry {
            id: MODEL_ID.into(),
            source: MeshSource::StringerPallet,
            model,
        }],
        pallets: b.pallets,
        props: b.props,
        spheres: b.spheres,
        manual_poses: vec![],
    })
}

/// Rectangle on the floor plane in an object's local frame.
#[derive(Debug, Clone, Copy)]
struct Footprint {
    half_x: f64,
    half_z: f64,
    offset_x: f64,
}

#[derive(Debug, Clone, Copy)]
struct Placement {
    x: f64,
    z: f64,
    yaw: f64,
}

impl Placement {
    fn corners(&self, fp: &Footprint) -> [Vec2; 4] {
        let (s, c) = self.yaw.sin_cos();
        // Same convention as Mat3::rotation_y restricted to (x, z).
        let world = |lx: f64, lz: f64| Vec2::new(self.x + c * lx + s * lz, self.z - s * lx + c * lz);
        let (x0, x1) = (fp.offset_x - fp.half_x, fp.offset_x + fp.half_x);
        [world(x0, -fp.half_z), world(x1, -fp.half_z), world(x1, fp.half_z), world(x0, fp.half_z)]
    }

    fn transform(&self, y: f64) -> RigidTransform {
        RigidTransform::from_yaw(self.yaw, Vec3::new(self.x, y, self.z))
    }
}

fn rects_overlap(a: &[Vec2; 4], b: &[Vec2; 4]) -> bool {
    for poly in [a, b] {
        for i in 0..4 {
            let edge = poly[(i + 1) % 4] - poly[i];
            let axis = Vec2::new(-edge.y, edge.x);
            let (amin, amax) = project_span(a, axis);
            let (bmin, bmax) = project_span(b, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
    }
    true
}

fn project_span(poly: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    poly.iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn rect_distance(a: &[Vec2; 4], b: &[Vec2; 4]) -> f64 {
    if rects_overlap(a, b) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for (p, q) in [(a, b), (b, a)] {
        for &pt in p.iter() {
            for i in 0..4 {
                best = best.min(point_segment_distance(pt, q[i], q[(i + 1) % 4]));
            }
        }
    }
    best
}

/// Rejection-samples `count` yawed footprints inside a floor rectangle,
/// keeping every pair at least `spacing` apart.
fn place_footprints(
    rng: &mut SceneRng,
    count: usize,
    fp: Footprint,
    floor: [f64; 2],
    spacing: f64,
) -> Result<Vec<Placement>> {
    let need = count as f64 * (2.0 * fp.half_x + spacing) * (2.0 * fp.half_z + spacing);
    let reach = (fp.offset_x.abs() + fp.half_x).hypot(fp.half_z);
    let (hx, hz) = (floor[0] / 2.0 - reach, floor[1] / 2.0 - reach);
    if count > 0 && (need > floor[0] * floor[1] || hx < 0.0 || hz < 0.0) {
        return Err(Error::PlacementOverflow(format!(
            "{count} footprints need {need:.1} m² but the floor offers {:.1} m²",
            floor[0] * floor[1]
        )));
    }
    let mut placed: Vec<(Placement, [Vec2; 4])> = Vec::with_capacity(count);
    for k in 0..count {
        let mut attempts = 0;
        loop {
            if attempts == MAX_ATTEMPTS_PER_ITEM {
                return Err(Error::PlacementOverflow(format!(
                    "could not place item {} of {count} after {MAX_ATTEMPTS_PER_ITEM} attempts",
                    k + 1
                )));
            }
            attempts += 1;
            let cand = Placement {
                x: rng.uniform(-hx, hx),
                z: rng.uniform(-hz, hz),
                yaw: rng.uniform(0.0, 2.0 * PI),
            };
            let corners = cand.corners(&fp);
            if placed.iter().all(|(_, c)| rect_distance(&corners, c) >= spacing) {
                placed.push((cand, corners));
                break;
            }
        }
    }
    Ok(placed.into_iter().map(|(p, _)| p).collect())
}

struct Builder {
    model: Arc<PalletModel>,
    pallets: Vec<PalletInstance>,
    props: Vec<PropInstance>,
    spheres: Vec<SphereOfInterest>,
}

const PALLET_FOOTPRINT: Footprint = Footprint {
    half_x: PALLET_LENGTH / 2.0,
    half_z: PALLET_WIDTH / 2.0,
    offset_x: 0.0,
};

impl Builder {
    fn add_pallet(&mut self, transform: RigidTransform) -> Vec3 {
        let instance_id = self.pallets.len() as u32 + 1;
        self.pallets.push(PalletInstance {
            instance_id,
            model_id: MODEL_ID.into(),
            model: self.model.clone(),
            transform,
        });
        transform.apply_point(Vec3::new(0.0, self.model.height() / 2.0, 0.0))
    }

    fn add_box(&mut self, name: String, size: [f64; 3], transform: RigidTransform) -> Result<()> {
        self.props.push(PropInstance {
            name,
            source: MeshSource::Box { size },
            mesh: Arc::new(box_mesh(size.into())?),
            transform,
        });
        Ok(())
    }

    fn add_spheres(&mut self, rng: &mut SceneRng, count: usize, foci: &[Vec3], fallback: Vec3, orbit: &OrbitConfig) {
        for i in 0..count {
            let center = foci.get(i % foci.len().max(1)).copied().unwrap_or(fallback);
            let radius = rng.uniform(orbit.radius_min, orbit.radius_max);
            self.spheres.push(SphereOfInterest {
                center,
                radius,
                azimuth_steps: orbit.azimuth_steps,
                elevation_rings: orbit.elevation_rings.clone(),
            });
        }
    }

    fn individual(&mut self, rng: &mut SceneRng, origin: Vec3, cfg: &ScenarioConfig) -> Result<()> {
        let c = &cfg.individual;
        let spots = place_footprints(rng, c.pallets, PALLET_FOOTPRINT, c.floor, c.min_spacing)?;
        let foci: Vec<Vec3> = spots
            .iter()
            .map(|p| self.add_pallet(p.transform(0.0).with_offset(origin)))
            .collect();
        self.add_spheres(rng, c.spheres, &foci, origin + Vec3::new(0.0, 0.5, 0.0), &cfg.orbit);
        Ok(())
    }

    fn stacked(&mut self, rng: &mut SceneRng, origin: Vec3, cfg: &ScenarioConfig) -> Result<()> {
        let c = &cfg.stacked;
        let heights: Vec<usize> = match &c.stack_heights {
            Some(h) => h.clone(),
            None => (0..c.stacks).map(|_| rng.range_inclusive(c.min_height, c.max_height)).collect(),
        };
        let spots = place_footprints(rng, heights.len(), PALLET_FOOTPRINT, c.floor, c.min_spacing)?;
        let step = self.model.height();
        let mut foci = Vec::with_capacity(spots.len());
        for (spot, &h) in spots.iter().zip(&heights) {
            for level in 0..h {
                self.add_pallet(spot.transform(level as f64 * step).with_offset(origin));
            }
            foci.push(origin + Vec3::new(spot.x, h as f64 * step / 2.0, spot.z));
        }
        self.add_spheres(rng, c.spheres, &foci, origin + Vec3::new(0.0, 0.5, 0.0), &cfg.orbit);
        Ok(())
    }

    fn racking(&mut self, rng: &mut SceneRng, origin: Vec3, cfg: &ScenarioConfig) -> Result<()> {
        const BAY: f64 = 1.4;
        const UPRIGHT: f64 = 0.08;
        const FRAME_Z: f64 = 0.46;
        const BEAM_Z: f64 = 0.45;
        let c = &cfg.racking;
        let top = c.beam_levels.iter().copied().fold(0.0, f64::max);
        let upright_h = top + 0.4;
        let levels: Vec<f64> = std::iter::once(0.0).chain(c.beam_levels.iter().copied()).collect();
        let width = c.bays as f64 * BAY;
        // Pallet x axis (face direction) points along world -z, toward the aisle.
        let pallet_yaw = FRAC_PI_2;

        let mut slots = Vec::new();
        for r in 0..c.racks {
            let rack_origin = origin + Vec3::new(-width / 2.0, 0.0, r as f64 * (2.0 * FRAME_Z + c.aisle));
            for j in 0..=c.bays {
                for side in [-1.0, 1.0] {
                    let at = rack_origin + Vec3::new(j as f64 * BAY, upright_h / 2.0, side * FRAME_Z);
                    self.add_box(
                        format!("rack{r}.upright{j}{}", if side < 0.0 { "b" } else { "f" }),
                        [UPRIGHT, upright_h, UPRIGHT],
                        RigidTransform::translation(at),
                    )?;
                }
            }
            for j in 0..c.bays {
                for (li, &level) in c.beam_levels.iter().enumerate() {
                    for side in [-1.0, 1.0] {
                        let at = rack_origin + Vec3::new((j as f64 + 0.5) * BAY, level - 0.05, side * BEAM_Z);
                        self.add_box(
                            format!("rack{r}.beam{j}.{li}{}", if side < 0.0 { "b" } else { "f" }),
                            [BAY - UPRIGHT, 0.1, 0.05],
                            RigidTransform::translation(at),
                        )?;
                    }
                }
                for &level in &levels {
                    slots.push(rack_origin + Vec3::new((j as f64 + 0.5) * BAY, level, 0.0));
                }
            }
        }
        let mut occupied: Vec<Vec3> = slots.iter().copied().filter(|_| rng.chance(c.occupancy)).collect();
        if occupied.is_empty() && !slots.is_empty() {
            occupied.push(slots[0]);
        }
        let foci: Vec<Vec3> = occupied
            .iter()
            .map(|&at| self.add_pallet(RigidTransform::from_yaw(pallet_yaw, at)))
            .collect();
        self.add_spheres(rng, c.spheres, &foci, origin + Vec3::new(0.0, 1.0, 0.0), &cfg.orbit);
        Ok(())
    }

    fn forklifts(&mut self, rng: &mut SceneRng, origin: Vec3, cfg: &ScenarioConfig) -> Result<()> {
        let c = &cfg.forklifts;
        let fp = Footprint {
            half_x: 1.45,
            half_z: 0.55,
            offset_x: -0.25,
        };
        let spots = place_footprints(rng, c.forklifts, fp, c.floor, c.min_spacing)?;
        let mut foci = Vec::with_capacity(spots.len());
        for (k, spot) in spots.iter().enumerate() {
            let lift = rng.uniform(c.lift_min, c.lift_max);
            let frame = spot.transform(0.0).with_offset(origin);
            let part = |local: Vec3| RigidTransform {
                rotation: frame.rotation,
                translation: frame.apply_point(local),
            };
            let mut parts: Vec<(&str, [f64; 3], Vec3)> = vec![
                ("chassis", [1.5, 1.2, 1.1], Vec3::new(-0.95, 0.7, 0.0)),
                ("guard", [1.2, 0.05, 1.0], Vec3::new(-0.9, 2.225, 0.0)),
                ("mast.l", [0.08, 2.4, 0.08], Vec3::new(-0.15, 1.2, -0.35)),
                ("mast.r", [0.08, 2.4, 0.08], Vec3::new(-0.15, 1.2, 0.35)),
                ("carriage", [0.04, 0.5, 1.0], Vec3::new(-0.07, lift + 0.25, 0.0)),
                ("fork.l", [1.1, 0.04, 0.12], Vec3::new(0.55, lift - 0.02, -0.3)),
                ("fork.r", [1.1, 0.04, 0.12], Vec3::new(0.55, lift - 0.02, 0.3)),
            ];
            for (x, z) in [(-1.45, -0.45), (-1.45, 0.45), (-0.35, -0.45), (-0.35, 0.45)] {
                parts.push(("post", [0.05, 0.9, 0.05], Vec3::new(x, 1.75, z)));
            }
            for (i, (name, size, at)) in parts.into_iter().enumerate() {
                self.add_box(format!("forklift{k}.{name}{i}"), size, part(at))?;
            }
            foci.push(self.add_pallet(part(Vec3::new(0.6, lift, 0.0))));
        }
        self.add_spheres(rng, c.spheres, &foci, origin + Vec3::new(0.0, 1.0, 0.0), &cfg.orbit);
        Ok(())
    }
}

trait WithOffset {
    fn with_offset(self, offset: Vec3) -> Self;
}

impl WithOffset for RigidTransform {
    fn with_offset(mut self, offset: Vec3) -> Self {
        self.translation += offset;
        self
    }
}
