//! Differentiable Gaussian splatting on the CPU.
//!
//! Gaussians are projected to screen-space ellipses, sorted by depth and
//! alpha-composited front to back. [`render`] bins splats into 16×16 tiles
//! and stops a pixel once it is nearly opaque; [`reference_render`] walks
//! every splat for every pixel and is the correctness oracle for it.
//! [`render_backward`] is the analytic adjoint of [`render`].

mod backward;
mod composite;
mod forward;
mod project;
mod tiles;

use std::io::Write;
use std::path::Path;

pub use backward::{render_backward, CloudGradients};
pub use composite::{composite_ray, RayResult};
pub use forward::{reference_render, render};
pub use project::{project_cloud, project_gaussian, Splat2D};

/// Near clipping distance in camera space.
pub const NEAR_PLANE: f64 = 0.01;
/// Added to the diagonal of every screen-space covariance, in px².
pub const LOW_PASS: f64 = 0.3;
/// Upper clamp of a single splat's alpha.
pub const MAX_ALPHA: f64 = 0.99;
/// A pixel stops compositing once its transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-5;
/// Splat contributions `r = α·G` at or below this are zero. Above it the
/// alpha ramps in with a smoothstep slope and becomes `r − 1.5·threshold`
/// from twice the threshold on, so alpha is twice continuously
/// differentiable across the support edge.
pub const ALPHA_THRESHOLD: f64 = 1.0 / 255.0;

/// Alpha for a raw contribution `r = α·G`, and `d alpha / d r`.
#[inline]
pub fn soft_threshold(r: f64) -> (f64, f64) {
    const T: f64 = ALPHA_THRESHOLD;
    if r <= T {
        (0.0, 0.0)
    } else if r < 2.0 * T {
        let u = (r - T) / T;
        let u3 = u * u * u;
        (T * (u3 - 0.5 * u3 * u), u * u * (3.0 - 2.0 * u))
    } else {
        (r - 1.5 * T, 1.0)
    }
}
pub const TILE_SIZE: usize = 16;

/// Set in [`RenderedImage::contrib_count`] when a pixel terminated early.
pub const EARLY_STOP_FLAG: u32 = 1 << 31;

/// Output of a forward render plus the buffers the backward pass needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    /// Row-major H×W×3.
    pub rgb: Vec<f64>,
    /// Product of `1 - alpha` over every composited splat.
    pub final_transmittance: Vec<f64>,
    /// Number of splats with non-zero alpha at the pixel, possibly or-ed
    /// with [`EARLY_STOP_FLAG`].
    pub contrib_count: Vec<u32>,
    /// Sum of compositing weights `alpha_i · T_i`.
    pub weight_sum: Vec<f64>,
    /// Tile-list entries walked per pixel; empty for reference renders.
    pub(crate) traversed: Vec<u32>,
}

impl RenderedImage {
    pub(crate) fn new(width: usize, height: usize, with_traversal: bool) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            rgb: vec![0.0; n * 3],
            final_transmittance: vec![1.0; n],
            contrib_count: vec![0; n],
            weight_sum: vec![0.0; n],
            traversed: if with_traversal { vec![0; n] } else { Vec::new() },
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn contributors(&self, x: usize, y: usize) -> u32 {
        self.contrib_count[y * self.width + x] & !EARLY_STOP_FLAG
    }

    pub fn stopped_early(&self, x: usize, y: usize) -> bool {
        self.contrib_count[y * self.width + x] & EARLY_STOP_FLAG != 0
    }

    /// 8-bit RGB, clamped.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgb.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn rgb_f32(&self) -> Vec<f32> {
        self.rgb.iter().map(|v| *v as f32).collect()
    }

    /// Raw dump for inspection: little-endian f32 RGB followed by f32
    /// transmittance, then u32 contribution counts.
    pub fn write_raw(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for v in &self.rgb {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        for v in &self.final_transmittance {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        for v in &self.contrib_count {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }
}
