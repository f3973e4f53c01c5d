//! Scene description: pallet models and instances, props, camera sources.
//!
//! A [`Scene`] is validated at construction and immutable afterwards. It
//! carries a world-space copy of every triangle grouped by owning object so
//! that ray casts and rasterization share one geometry source.

mod format;
mod generate;
pub mod mesh;
mod rng;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use format::{load_scene, parse_scene, save_scene, scene_to_string};
pub use generate::{
    generate_scenario, ForkliftConfig, IndividualConfig, OrbitConfig, RackingConfig, ScenarioConfig, StackedConfig,
};
pub use mesh::{load_mesh_obj, parse_obj, PalletModel, TriangleMesh};
pub use rng::SceneRng;

use crate::camera::{generate_orbit_poses, CameraIntrinsics, CameraPose, SphereOfInterest};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Obb, RigidTransform, Triangle};

/// Pallets may overlap by at most this much (m) along their shallowest axis.
pub const MAX_INTERPENETRATION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioCategory {
    Individual,
    Stacked,
    OnRacking,
    OnForklifts,
    Combined,
}

impl ScenarioCategory {
    pub const ALL: [ScenarioCategory; 5] = [
        ScenarioCategory::Individual,
        ScenarioCategory::Stacked,
        ScenarioCategory::OnRacking,
        ScenarioCategory::OnForklifts,
        ScenarioCategory::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioCategory::Individual => "individual",
            ScenarioCategory::Stacked => "stacked",
            ScenarioCategory::OnRacking => "on-racking",
            ScenarioCategory::OnForklifts => "on-forklifts",
            ScenarioCategory::Combined => "combined",
        }
    }
}

impl fmt::Display for ScenarioCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown category {s:?}")))
    }
}

/// Where a mesh comes from; kept so a scene can be written back out.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    StringerPallet,
    Box { size: [f64; 3] },
    /// Path as written in the scene file, relative to the file's directory.
    Obj(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEntry {
    pub id: String,
    pub source: MeshSource,
    pub model: Arc<PalletModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PalletInstance {
    pub instance_id: u32,
    pub model_id: String,
    pub model: Arc<PalletModel>,
    pub transform: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropInstance {
    pub name: String,
    pub source: MeshSource,
    pub mesh: Arc<TriangleMesh>,
    pub transform: RigidTransform,
}

/// Who a world triangle belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    Pallet(u32),
    Prop(u32),
}

impl Owner {
    /// Total order used to break exact depth ties: pallets by instance id,
    /// then props.
    pub fn priority(self) -> u64 {
        match self {
            Owner::Pallet(id) => id as u64,
            Owner::Prop(i) => (1u64 << 40) + i as u64,
        }
    }
}

/// One scene object in world space.
#[derive(Debug, Clone)]
pub struct SceneObject {
    pub owner: Owner,
    pub aabb: Aabb,
    pub triangles: Vec<Triangle>,
    pub faces: Vec<Option<u16>>,
}

/// Everything except the derived world geometry, used to build a [`Scene`].
#[derive(Debug, Clone, Default)]
pub struct SceneParts {
    pub seed: u64,
    pub category: Option<ScenarioCategory>,
    pub intrinsics: CameraIntrinsics,
    pub models: Vec<ModelEntry>,
    pub pallets: Vec<PalletInstance>,
    pub props: Vec<PropInstance>,
    pub spheres: Vec<SphereOfInterest>,
    pub manual_poses: Vec<CameraPose>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    parts: SceneParts,
    objects: Vec<SceneObject>,
    pallet_index: HashMap<u32, usize>,
}

impl PartialEq for Scene {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = (&self.parts, &other.parts);
        a.seed == b.seed
            && a.category == b.category
            && a.intrinsics == b.intrinsics
            && a.models == b.models
            && a.pallets == b.pallets
            && a.props == b.props
            && a.spheres == b.spheres
            && a.manual_poses == b.manual_poses
    }
}

impl Scene {
    pub fn new(parts: SceneParts) -> Result<Self> {
        validate(&parts)?;
        let mut objects = Vec::with_capacity(parts.pallets.len() + parts.props.len());
        let mut pallet_index = HashMap::with_capacity(parts.pallets.len());
        for p in &parts.pallets {
            let triangles: Vec<Triangle> = p.model.mesh().triangles().iter().map(|t| t.transformed(&p.transform)).collect();
            pallet_index.insert(p.instance_id, objects.len());
            objects.push(SceneObject {
                owner: Owner::Pallet(p.instance_id),
                aabb: Aabb::from_points(triangles.iter().flat_map(|t| t.vertices())),
                triangles,
                faces: p.model.triangle_faces().to_vec(),
            });
        }
        for (i, prop) in parts.props.iter().enumerate() {
            let triangles: Vec<Triangle> = prop.mesh.triangles().iter().map(|t| t.transformed(&prop.transform)).collect();
            objects.push(SceneObject {
                owner: Owner::Prop(i as u32),
                aabb: Aabb::from_points(triangles.iter().flat_map(|t| t.vertices())),
                faces: vec![None; triangles.len()],
                triangles,
            });
        }
        Ok(Self {
            parts,
            objects,
            pallet_index,
        })
    }

    pub fn parts(&self) -> &SceneParts {
        &self.parts
    }

    pub fn into_parts(self) -> SceneParts {
        self.parts
    }

    pub fn seed(&self) -> u64 {
        self.parts.seed
    }

    pub fn category(&self) -> Option<ScenarioCategory> {
        self.parts.category
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.parts.intrinsics
    }

    pub fn pallets(&self) -> &[PalletInstance] {
        &self.parts.pallets
    }

    pub fn props(&self) -> &[PropInstance] {
        &self.parts.props
    }

    pub fn spheres(&self) -> &[SphereOfInterest] {
        &self.parts.spheres
    }

    pub fn manual_poses(&self) -> &[CameraPose] {
        &self.parts.manual_poses
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn pallet(&self, instance_id: u32) -> Option<&PalletInstance> {
        self.pallet_index.get(&instance_id).map(|&i| &self.parts.pallets[i])
    }

    /// World-space AABB of a pallet instance.
    pub fn pallet_aabb(&self, instance_id: u32) -> Option<Aabb> {
        self.pallet_index.get(&instance_id).map(|&i| self.objects[i].aabb)
    }

    /// Copy of this scene with different intrinsics.
    pub fn with_intrinsics(&self, intrinsics: CameraIntrinsics) -> Result<Scene> {
        let mut parts = self.parts.clone();
        parts.intrinsics = intrinsics;
        Scene::new(parts)
    }

    /// Every camera pose: spheres in order, then manual poses.
    pub fn camera_poses(&self) -> Result<Vec<CameraPose>> {
        let mut poses = Vec::with_capacity(self.image_count());
        for s in &self.parts.spheres {
            poses.extend(generate_orbit_poses(s)?);
        }
        poses.extend(self.parts.manual_poses.iter().copied());
        Ok(poses)
    }

    pub fn image_count(&self) -> usize {
        self.parts.spheres.iter().map(SphereOfInterest::pose_count).sum::<usize>() + self.parts.manual_poses.len()
    }
}

fn validate(parts: &SceneParts) -> Result<()> {
    let invalid = |m: String| Err(Error::InvalidScene(m));
    parts
        .intrinsics
        .validate()
        .map_err(|e| Error::InvalidScene(e.to_string()))?;

    let mut model_ids = BTreeSet::new();
    for m in &parts.models {
        if !model_ids.insert(m.id.as_str()) {
            return invalid(format!("duplicate model id {:?}", m.id));
        }
    }
    let mut ids = BTreeSet::new();
    for p in &parts.pallets {
        if !ids.insert(p.instance_id) {
            return invalid(format!("duplicate instance id {}", p.instance_id));
        }
        if !model_ids.contains(p.model_id.as_str()) {
            return Err(Error::UnknownModel(p.model_id.clone()));
        }
        if !p.transform.rotation.is_rotation() || !p.transform.translation.is_finite() {
            return invalid(format!("pallet {} has an invalid transform", p.instance_id));
        }
    }
    for prop in &parts.props {
        if !prop.transform.rotation.is_rotation() || !prop.transform.translation.is_finite() {
            return invalid(format!("prop {:?} has an invalid transform", prop.name));
        }
    }
    for s in &parts.spheres {
        s.validate().map_err(|e| Error::InvalidScene(e.to_string()))?;
    }
    for pose in &parts.manual_poses {
        if !pose.rotation.is_rotation() || !pose.position.is_finite() {
            return invalid("manual pose has an invalid rotation".into());
        }
    }
    if parts.spheres.is_empty() && parts.manual_poses.is_empty() {
        return invalid("no camera source (sphere or manual pose)".into());
    }

    let boxes: Vec<(u32, Obb)> = parts
        .pallets
        .iter()
        .map(|p| (p.instance_id, Obb::new(&p.model.mesh().aabb(), &p.transform)))
        .collect();
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            let depth = boxes[i].1.penetration_depth(&boxes[j].1);
            if depth > MAX_INTERPENETRATION {
                return invalid(format!(
                    "pallets {} and {} interpenetrate by {:.4} m",
                    boxes[i].0, boxes[j].0, depth
                ));
            }
        }
    }
    Ok(())
}
