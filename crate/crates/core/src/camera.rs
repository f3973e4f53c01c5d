//! Pinhole projection and automatic orbit routes.
//!
//! Camera frame: +x right, +y up, +z along the optical axis. A pose's rotation
//! maps camera-frame directions to world directions, so its columns are the
//! camera's right, up and forward axes expressed in world coordinates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec2, Vec3};

/// Camera-frame depth at or below which a point counts as behind the camera.
pub const BEHIND_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    /// Vertical field of view in radians.
    pub vertical_fov: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 1080,
            vertical_fov: 60f64.to_radians(),
        }
    }
}

impl CameraIntrinsics {
    pub fn new(width: u32, height: u32, vertical_fov: f64) -> Result<Self> {
        let intr = Self {
            width,
            height,
            vertical_fov,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidCamera(format!(
                "viewport {}x{} is smaller than 16x16",
                self.width, self.height
            )));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < PI) {
            return Err(Error::InvalidCamera(format!(
                "vertical fov {} rad outside (0, pi)",
                self.vertical_fov
            )));
        }
        Ok(())
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        (self.height as f64 / 2.0) / (self.vertical_fov / 2.0).tan()
    }

    pub fn principal_point(&self) -> Vec2 {
        Vec2::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    pub rotation: Mat3,
}

impl CameraPose {
    pub fn new(position: Vec3, rotation: Mat3) -> Result<Self> {
        if !position.is_finite() {
            return Err(Error::InvalidCamera("pose position is not finite".into()));
        }
        if !rotation.is_rotation() {
            return Err(Error::InvalidCamera("pose rotation is not orthonormal".into()));
        }
        Ok(Self { position, rotation })
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2)
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.transpose().mul_vec(p - self.position)
    }

    pub fn camera_to_world_dir(&self, d: Vec3) -> Vec3 {
        self.rotation.mul_vec(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub screen: Vec2,
    /// Camera-frame z in metres.
    pub depth: f64,
    pub behind: bool,
}

/// Projects a world point. Screen coordinates are unbounded; points behind
/// the camera report `behind` and carry a non-finite screen position.
pub fn project(point: Vec3, pose: &CameraPose, intr: &CameraIntrinsics) -> Projection {
    project_camera_frame(pose.world_to_camera(point), intr)
}

pub fn project_camera_frame(pc: Vec3, intr: &CameraIntrinsics) -> Projection {
    if pc.z <= BEHIND_EPSILON {
        return Projection {
            screen: Vec2::new(f64::NAN, f64::NAN),
            depth: pc.z,
            behind: true,
        };
    }
    let f = intr.focal();
    let c = intr.principal_point();
    Projection {
        screen: Vec2::new(c.x + f * pc.x / pc.z, c.y - f * pc.y / pc.z),
        depth: pc.z,
        behind: false,
    }
}

/// Camera-frame direction through a (sub)pixel position, unnormalized with z = 1.
pub fn unproject_direction(screen: Vec2, intr: &CameraIntrinsics) -> Vec3 {
    let f = intr.focal();
    let c = intr.principal_point();
    Vec3::new((screen.x - c.x) / f, -(screen.y - c.y) / f, 1.0)
}

/// Pose at `eye` looking at `target`, rolled so `up` stays up on screen.
pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<CameraPose> {
    let forward = (target - eye)
        .normalized()
        .ok_or_else(|| Error::InvalidCamera("eye coincides with target".into()))?;
    let up = up.normalized().ok_or(Error::DegenerateLookAt)?;
    let side = up.cross(forward);
    if side.length() < 1e-9 {
        return Err(Error::DegenerateLookAt);
    }
    let right = side.normalized().ok_or(Error::DegenerateLookAt)?;
    let true_up = forward.cross(right);
    Ok(CameraPose {
        position: eye,
        rotation: Mat3::from_columns(right, true_up, forward),
    })
}

/// A focal sphere the automatic camera mode orbits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereOfInterest {
    pub center: Vec3,
    pub radius: f64,
    pub azimuth_steps: u32,
    /// Elevation of each ring, radians.
    pub elevation_rings: Vec<f64>,
}

impl SphereOfInterest {
    pub fn validate(&self) -> Result<()> {
        if !self.center.is_finite() {
            return Err(Error::InvalidCamera("sphere center is not finite".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidCamera(format!("sphere radius {} must be positive", self.radius)));
        }
        if self.azimuth_steps < 1 {
            return Err(Error::InvalidCamera("sphere needs at least one azimuth step".into()));
        }
        // The poles are checked by generate_orbit_poses so they surface as a
        // look-at failure rather than a range error.
        if let Some(phi) = self.elevation_rings.iter().find(|phi| !(phi.abs() <= PI / 2.0)) {
            return Err(Error::InvalidCamera(format!("elevation {phi} rad outside [-pi/2, pi/2]")));
        }
        Ok(())
    }

    pub fn pose_count(&self) -> usize {
        self.azimuth_steps as usize * self.elevation_rings.len()
    }
}

/// Orbit poses, elevation-major then azimuth-minor, each looking at the center.
pub fn generate_orbit_poses(sphere: &SphereOfInterest) -> Result<Vec<CameraPose>> {
    sphere.validate()?;
    let mut poses = Vec::with_capacity(sphere.pose_count());
    for &phi in &sphere.elevation_rings {
        if (phi.abs() - PI / 2.0).abs() < 1e-12 {
            return Err(Error::DegenerateLookAt);
        }
        for k in 0..sphere.azimuth_steps {
            let theta = 2.0 * PI * k as f64 / sphere.azimuth_steps as f64;
            let offset = Vec3::new(phi.cos() * theta.cos(), phi.sin(), phi.cos() * theta.sin());
            let eye = sphere.center + offset * sphere.radius;
            poses.push(look_at(eye, sphere.center, Vec3::Y)?);
        }
    }
    Ok(poses)
}

/// Three rings at 10°, 25° and 40° with 28 azimuths: 84 poses per sphere.
pub fn default_elevation_rings() -> Vec<f64> {
    [10.0f64, 25.0, 40.0].iter().map(|d| d.to_radians()).collect()
}

pub const DEFAULT_AZIMUTH_STEPS: u32 = 28;
