//! Perspective projection of 3D Gaussians to screen-space splats.

use nalgebra::{Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

use super::{soft_threshold, ALPHA_THRESHOLD, LOW_PASS, NEAR_PLANE};
use crate::camera::{Camera, ViewTransform};
use crate::math::covariance_unchecked;
use crate::types::GaussianCloud;

/// A Gaussian projected to the image plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat2D {
    /// Pixel coordinates; pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.
    pub mean2d: [f64; 2],
    /// Screen covariance `(xx, xy, yy)` in px², low-pass included.
    pub cov2d: [f64; 3],
    /// Inverse of `cov2d`, as `(xx, xy, yy)`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub color: [f64; 3],
    pub opacity: f64,
    pub source_index: usize,
    /// Mahalanobis² at which `opacity · G` falls to the alpha threshold.
    pub max_power: f64,
    /// Half-extent of the support ellipse's bounding box, in px.
    pub extent: [f64; 2],
}

impl Splat2D {
    /// Alpha of this splat at a pixel center before the upper clamp, with
    /// the offset from the mean. `None` outside its support.
    #[inline]
    pub fn alpha_at(&self, px: f64, py: f64) -> Option<(f64, f64, f64)> {
        self.sample(px, py).map(|s| (s.alpha, s.dx, s.dy))
    }

    #[inline]
    pub(crate) fn sample(&self, px: f64, py: f64) -> Option<Sample> {
        let dx = px - self.mean2d[0];
        let dy = py - self.mean2d[1];
        let m2 = self.conic[0] * dx * dx + 2.0 * self.conic[1] * dx * dy + self.conic[2] * dy * dy;
        if m2 >= self.max_power {
            return None;
        }
        let raw = self.opacity * (-0.5 * m2).exp();
        let (alpha, slope) = soft_threshold(raw);
        (alpha > 0.0).then_some(Sample { alpha, raw, slope, dx, dy })
    }

    /// Inclusive pixel rectangle `[x0, x1] × [y0, y1]` holding every pixel
    /// center inside the support, or `None` when it misses the image.
    pub fn pixel_rect(&self, width: usize, height: usize) -> Option<[usize; 4]> {
        let x0 = (self.mean2d[0] - self.extent[0] - 0.5).ceil().max(0.0);
        let x1 = (self.mean2d[0] + self.extent[0] - 0.5).floor().min(width as f64 - 1.0);
        let y0 = (self.mean2d[1] - self.extent[1] - 0.5).ceil().max(0.0);
        let y1 = (self.mean2d[1] + self.extent[1] - 0.5).floor().min(height as f64 - 1.0);
        if !(x0 <= x1 && y0 <= y1) {
            return None;
        }
        Some([x0 as usize, x1 as usize, y0 as usize, y1 as usize])
    }
}

pub(crate) struct Sample {
    pub alpha: f64,
    /// `opacity · G`.
    pub raw: f64,
    /// `d alpha / d raw`.
    pub slope: f64,
    pub dx: f64,
    pub dy: f64,
}

/// Camera-space quantities shared by projection and its adjoint.
pub(crate) struct Projection {
    pub t: Vector3<f64>,
    /// Perspective Jacobian at `t` times the view rotation.
    pub m: Matrix2x3<f64>,
}

pub(crate) fn linearize(view: &ViewTransform, position: [f64; 3]) -> Projection {
    let t = view.to_camera(Vector3::from(position));
    let f = view.focal;
    let (x, y, z) = (t.x, t.y, t.z);
    let jacobian = Matrix2x3::new(f / z, 0.0, -f * x / (z * z), 0.0, f / z, -f * y / (z * z));
    Projection { t, m: jacobian * view.rotation }
}

/// Projects one Gaussian. Returns `None` when it is behind the near plane,
/// too transparent to contribute, or its support misses every pixel.
pub fn project_gaussian(
    view: &ViewTransform,
    position: [f64; 3],
    cov3d: &Matrix3<f64>,
    color: [f64; 3],
    opacity: f64,
    source_index: usize,
) -> Option<Splat2D> {
    if !(opacity > ALPHA_THRESHOLD) {
        return None;
    }
    let proj = linearize(view, position);
    let depth = proj.t.z;
    if !(depth > NEAR_PLANE) {
        return None;
    }
    let mean2d = [
        view.focal * proj.t.x / depth + view.center[0],
        view.focal * proj.t.y / depth + view.center[1],
    ];
    let c = proj.m * cov3d * proj.m.transpose();
    let cov2d = [c[(0, 0)] + LOW_PASS, 0.5 * (c[(0, 1)] + c[(1, 0)]), c[(1, 1)] + LOW_PASS];
    let det = cov2d[0] * cov2d[2] - cov2d[1] * cov2d[1];
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let conic = [cov2d[2] / det, -cov2d[1] / det, cov2d[0] / det];
    let max_power = 2.0 * (opacity / ALPHA_THRESHOLD).ln();
    let extent = [(max_power * cov2d[0]).sqrt(), (max_power * cov2d[2]).sqrt()];
    let splat = Splat2D {
        mean2d,
        cov2d,
        conic,
        depth,
        color,
        opacity,
        source_index,
        max_power,
        extent,
    };
    splat.pixel_rect(view.width, view.height)?;
    Some(splat)
}

/// Projects every Gaussian of a cloud and returns the visible splats sorted
/// front to back, ties broken by source index.
pub fn project_cloud(cloud: &GaussianCloud, camera: &Camera) -> Vec<Splat2D> {
    let view = camera.view();
    let mut splats: Vec<Splat2D> = (0..cloud.len())
        .into_par_iter()
        .filter_map(|i| {
            let a = cloud.activated(i);
            let cov = covariance_unchecked(a.scale, a.rotation);
            project_gaussian(&view, cloud.positions[i].map(f64::from), &cov, a.color, a.opacity, i)
        })
        .collect();
    splats.par_sort_unstable_by(|a, b| {
        a.depth.total_cmp(&b.depth).then(a.source_index.cmp(&b.source_index))
    });
    splats
}
