//! Text scene files (TOML, `format_version = 1`). See `docs/scene_format.md`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::mesh::{box_mesh, load_mesh_obj, PalletModel, TriangleMesh};
use super::{MeshSource, ModelEntry, PalletInstance, PropInstance, ScenarioCategory, Scene, SceneParts};
use crate::camera::{CameraIntrinsics, CameraPose, SphereOfInterest};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, RigidTransform, Vec3};
use crate::io::write_atomic;

pub const FORMAT_VERSION: u32 = 1;
const BUILTIN_PALLET: &str = "builtin:stringer_pallet";
const BUILTIN_BOX: &str = "builtin:box";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    format_version: u32,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<ScenarioCategory>,
    intrinsics: CameraIntrinsics,
    #[serde(default)]
    models: Vec<ModelRecord>,
    #[serde(default)]
    pallets: Vec<PalletRecord>,
    #[serde(default)]
    props: Vec<PropRecord>,
    #[serde(default)]
    spheres: Vec<SphereOfInterest>,
    #[serde(default)]
    poses: Vec<CameraPose>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    id: String,
    mesh: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body_outline: Option<Vec<Vec3>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    faces: Vec<FaceRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaceRecord {
    id: String,
    #[serde(rename = "loop")]
    vertices: Vec<Vec3>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PalletRecord {
    instance_id: u32,
    model: String,
    rotation: Mat3,
    translation: Vec3,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropRecord {
    name: String,
    mesh: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    size: Option<[f64; 3]>,
    rotation: Mat3,
    translation: Vec3,
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_scene(&text, &base)
}

/// Parses scene text; OBJ paths resolve against `base_dir`.
pub fn parse_scene(text: &str, base_dir: &Path) -> Result<Scene> {
    let file: SceneFile = toml::from_str(text).map_err(|e| Error::MalformedScene(e.to_string().trim_end().to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::MalformedScene(format!(
            "format_version: expected {FORMAT_VERSION}, found {}",
            file.format_version
        )));
    }

    let mut mesh_cache: HashMap<PathBuf, Arc<TriangleMesh>> = HashMap::new();
    let mut load_obj = |rel: &str| -> Result<Arc<TriangleMesh>> {
        let full = base_dir.join(rel);
        if let Some(m) = mesh_cache.get(&full) {
            return Ok(m.clone());
        }
        let mesh = Arc::new(load_mesh_obj(&full)?);
        mesh_cache.insert(full, mesh.clone());
        Ok(mesh)
    };

    let mut models = Vec::with_capacity(file.models.len());
    for (i, rec) in file.models.into_iter().enumerate() {
        let (source, model) = if rec.mesh == BUILTIN_PALLET {
            if rec.body_outline.is_some() || !rec.faces.is_empty() {
                return Err(Error::MalformedScene(format!(
                    "models[{i}]: builtin pallet takes no body_outline or faces"
                )));
            }
            (MeshSource::StringerPallet, PalletModel::stringer())
        } else if rec.mesh.starts_with("builtin:") {
            return Err(Error::MalformedScene(format!("models[{i}].mesh: unknown builtin {:?}", rec.mesh)));
        } else {
            let outline = rec
                .body_outline
                .ok_or_else(|| Error::MalformedScene(format!("models[{i}]: missing body_outline")))?;
            let mut faces = BTreeMap::new();
            for f in rec.faces {
                if faces.insert(f.id.clone(), f.vertices).is_some() {
                    return Err(Error::MalformedScene(format!("models[{i}]: duplicate face id {:?}", f.id)));
                }
            }
            let mesh = load_obj(&rec.mesh)?;
            (MeshSource::Obj(rec.mesh), PalletModel::new(mesh, outline, faces)?)
        };
        models.push(ModelEntry {
            id: rec.id,
            source,
            model: Arc::new(model),
        });
    }

    let mut pallets = Vec::with_capacity(file.pallets.len());
    for rec in file.pallets {
        let model = models
            .iter()
            .find(|m| m.id == rec.model)
            .ok_or_else(|| Error::UnknownModel(rec.model.clone()))?
            .model
            .clone();
        pallets.push(PalletInstance {
            instance_id: rec.instance_id,
            model_id: rec.model,
            model,
            transform: RigidTransform {
                rotation: rec.rotation,
                translation: rec.translation,
            },
        });
    }

    let mut props = Vec::with_capacity(file.props.len());
    for (i, rec) in file.props.into_iter().enumerate() {
        let (source, mesh) = match (rec.mesh.as_str(), rec.size) {
            (BUILTIN_BOX, Some(size)) => (MeshSource::Box { size }, Arc::new(box_mesh(size.into())?)),
            (BUILTIN_BOX, None) => {
                return Err(Error::MalformedScene(format!("props[{i}]: builtin:box needs a size")));
            }
            (other, _) if other.starts_with("builtin:") => {
                return Err(Error::MalformedScene(format!("props[{i}].mesh: unknown builtin {other:?}")));
            }
            (path, None) => (MeshSource::Obj(path.to_string()), load_obj(path)?),
            (_, Some(_)) => {
                return Err(Error::MalformedScene(format!("props[{i}]: size is only valid for builtin:box")));
            }
        };
        props.push(PropInstance {
            name: rec.name,
            source,
            mesh,
            transform: RigidTransform {
                rotation: rec.rotation,
                translation: rec.translation,
            },
        });
    }

    Scene::new(SceneParts {
        seed: file.seed,
        category: file.category,
        intrinsics: file.intrinsics,
        models,
        pallets,
        props,
        spheres: file.spheres,
        manual_poses: file.poses,
    })
}

pub fn scene_to_string(scene: &Scene) -> Result<String> {
    let parts = scene.parts();
    let file = SceneFile {
        format_version: FORMAT_VERSION,
        seed: parts.seed,
        category: parts.category,
        intrinsics: parts.intrinsics,
        models: parts
            .models
            .iter()
            .map(|m| match &m.source {
                MeshSource::Obj(path) => ModelRecord {
                    id: m.id.clone(),
                    mesh: path.clone(),
                    body_outline: Some(m.model.body_outline().to_vec()),
                    faces: m
                        .model
                        .faces()
                        .iter()
                        .map(|(id, v)| FaceRecord {
                            id: id.clone(),
                            vertices: v.clone(),
                        })
                        .collect(),
                },
                _ => ModelRecord {
                    id: m.id.clone(),
                    mesh: BUILTIN_PALLET.into(),
                    body_outline: None,
                    faces: vec![],
                },
            })
            .collect(),
        pallets: parts
            .pallets
            .iter()
            .map(|p| PalletRecord {
                instance_id: p.instance_id,
                model: p.model_id.clone(),
                rotation: p.transform.rotation,
                translation: p.transform.translation,
            })
            .collect(),
        props: parts
            .props
            .iter()
            .map(|p| {
                let (mesh, size) = match &p.source {
                    MeshSource::Box { size } => (BUILTIN_BOX.to_string(), Some(*size)),
                    MeshSource::Obj(path) => (path.clone(), None),
                    MeshSource::StringerPallet => (BUILTIN_PALLET.to_string(), None),
                };
                PropRecord {
                    name: p.name.clone(),
                    mesh,
                    size,
                    rotation: p.transform.rotation,
                    translation: p.transform.translation,
                }
            })
            .collect(),
        spheres: parts.spheres.clone(),
        poses: parts.manual_poses.clone(),
    };
    toml::to_string(&file).map_err(|e| Error::MalformedScene(format!("cannot serialize scene: {e}")))
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    write_atomic(path, scene_to_string(scene)?.as_bytes())
}
