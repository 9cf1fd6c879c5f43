//! Orbit cameras with pinhole intrinsics. World space is z-up.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ViewKey};

/// A camera on a sphere around `look_at`, looking at its center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub radius: f64,
    /// Degrees, measured from +x towards +y.
    pub azimuth: f64,
    /// Degrees above the xy-plane.
    pub elevation: f64,
    /// Vertical field of view in degrees.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub look_at: [f64; 3],
}

/// World-to-camera transform and intrinsics. Camera axes are x right,
/// y down, z forward.
#[derive(Clone, Copy, Debug)]
pub struct ViewTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub focal: f64,
    pub center: [f64; 2],
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn orbit(radius: f64, azimuth: f64, elevation: f64, fov_y: f64, size: usize) -> Self {
        Self {
            radius,
            azimuth,
            elevation,
            fov_y,
            width: size,
            height: size,
            look_at: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.radius, self.azimuth, self.elevation, self.fov_y]
            .iter()
            .chain(self.look_at.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("camera has non-finite fields"));
        }
        if self.radius <= 0.0 {
            return Err(Error::invalid(format!("camera radius {} must be positive", self.radius)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera image size must be at least 1x1"));
        }
        if !(self.fov_y > 0.0 && self.fov_y < 180.0) {
            return Err(Error::invalid(format!("fov_y {} outside (0, 180)", self.fov_y)));
        }
        Ok(())
    }

    pub fn with_size(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn eye(&self) -> Vector3<f64> {
        let az = self.azimuth.to_radians();
        let el = self.elevation.to_radians();
        Vector3::from(self.look_at)
            + self.radius * Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y.to_radians()).tan()
    }

    pub fn view(&self) -> ViewTransform {
        let eye = self.eye();
        let forward = (Vector3::from(self.look_at) - eye).normalize();
        let mut right = forward.cross(&Vector3::z());
        if right.norm() < 1e-9 {
            // Looking straight up or down.
            right = forward.cross(&Vector3::y());
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        ViewTransform {
            rotation,
            translation: -(rotation * eye),
            focal: self.focal(),
            center: [0.5 * self.width as f64, 0.5 * self.height as f64],
            width: self.width,
            height: self.height,
        }
    }

    /// Identity of the pose, independent of image size and intrinsics.
    pub fn view_key(&self) -> ViewKey {
        ViewKey([
            self.radius.to_bits(),
            self.azimuth.to_bits(),
            self.elevation.to_bits(),
            self.look_at[0].to_bits(),
            self.look_at[1].to_bits(),
            self.look_at[2].to_bits(),
        ])
    }

    /// `count` azimuths evenly spaced over [-180, 180).
    pub fn turntable(radius: f64, elevation: f64, fov_y: f64, size: usize, count: usize) -> Vec<Camera> {
        (0..count)
            .map(|i| {
                let az = -180.0 + 360.0 * i as f64 / count as f64;
                Camera::orbit(radius, az, elevation, fov_y, size)
            })
            .collect()
    }
}

impl ViewTransform {
    pub fn to_camera(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}
