//! Adjoint of the tiled renderer.
//!
//! Per pixel, the splats walked by the forward pass are revisited back to
//! front. Transmittance before each splat is recovered by dividing the
//! saved final transmittance by `1 − α`, which is safe because alphas are
//! clamped below 1. Screen-space gradients are reduced per tile and summed
//! over tiles in a fixed order, then chained through the projection onto
//! the raw parameters.

use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;

use super::project::{linearize, project_cloud};
use super::tiles::TileBins;
use super::{RenderedImage, Splat2D, MAX_ALPHA};
use crate::camera::{Camera, ViewTransform};
use crate::error::{Error, Result};
use crate::math::{
    covariance_unchecked, normalize_quat_vjp, quat_to_rotation, quat_to_rotation_vjp, SH_C0,
};
use crate::types::GaussianCloud;

/// Gradients of a scalar loss with respect to every raw cloud parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CloudGradients {
    pub positions: Vec<[f64; 3]>,
    pub colors_dc: Vec<[f64; 3]>,
    pub opacities_raw: Vec<f64>,
    pub scales_raw: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
}

impl CloudGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            positions: vec![[0.0; 3]; n],
            colors_dc: vec![[0.0; 3]; n],
            opacities_raw: vec![0.0; n],
            scales_raw: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `self += other * scale`.
    pub fn add_scaled(&mut self, other: &CloudGradients, scale: f64) {
        fn axpy<const N: usize>(a: &mut [[f64; N]], b: &[[f64; N]], s: f64) {
            for (x, y) in a.iter_mut().zip(b) {
                for k in 0..N {
                    x[k] += y[k] * s;
                }
            }
        }
        axpy(&mut self.positions, &other.positions, scale);
        axpy(&mut self.colors_dc, &other.colors_dc, scale);
        axpy(&mut self.scales_raw, &other.scales_raw, scale);
        axpy(&mut self.rotations, &other.rotations, scale);
        for (x, y) in self.opacities_raw.iter_mut().zip(&other.opacities_raw) {
            *x += y * scale;
        }
    }

    /// All gradients flattened in the order positions, colors, opacities,
    /// scales, rotations.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * GaussianCloud::PARAMS_PER_GAUSSIAN);
        out.extend(self.positions.iter().flatten());
        out.extend(self.colors_dc.iter().flatten());
        out.extend(&self.opacities_raw);
        out.extend(self.scales_raw.iter().flatten());
        out.extend(self.rotations.iter().flatten());
        out
    }
}

/// Screen-space gradient of one splat.
#[derive(Clone, Copy, Debug, Default)]
struct SplatGrad {
    mean: [f64; 2],
    /// With respect to conic `(xx, xy, yy)`, where `xy` enters twice.
    conic: [f64; 3],
    color: [f64; 3],
    opacity: f64,
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

/// Gradient of `Σ grad_rgb · image` with respect to the cloud's raw
/// parameters, for the image produced by [`super::render`] with the same
/// inputs.
pub fn render_backward(
    cloud: &GaussianCloud,
    camera: &Camera,
    background: [f64; 3],
    forward: &RenderedImage,
    grad_rgb: &[f64],
) -> Result<CloudGradients> {
    cloud.validate()?;
    camera.validate()?;
    let (width, height) = (camera.width, camera.height);
    if forward.width != width || forward.height != height || forward.traversed.len() != width * height {
        return Err(Error::ShapeMismatch(
            "forward buffers do not come from a tiled render of this camera".into(),
        ));
    }
    if grad_rgb.len() != width * height * 3 {
        return Err(Error::ShapeMismatch(format!(
            "grad_rgb has {} values, expected {}",
            grad_rgb.len(),
            width * height * 3
        )));
    }
    let splats = project_cloud(cloud, camera);
    let bins = TileBins::build(&splats, width, height);

    let per_tile: Vec<Vec<SplatGrad>> = (0..bins.count())
        .into_par_iter()
        .map(|t| backward_tile(&bins, t, &splats, forward, grad_rgb, background))
        .collect();

    let mut screen = vec![SplatGrad::default(); splats.len()];
    for (t, local) in per_tile.iter().enumerate() {
        for (g, &idx) in local.iter().zip(bins.tile(t)) {
            screen[idx as usize].add(g);
        }
    }

    let view = camera.view();
    let chained: Vec<ParamGrad> = splats
        .par_iter()
        .zip(screen.par_iter())
        .map(|(s, g)| chain_to_params(&view, cloud, s, g))
        .collect();

    let mut out = CloudGradients::zeros(cloud.len());
    for (s, g) in splats.iter().zip(chained) {
        let i = s.source_index;
        out.positions[i] = g.position;
        out.colors_dc[i] = g.color_dc;
        out.opacities_raw[i] = g.opacity_raw;
        out.scales_raw[i] = g.scale_raw;
        out.rotations[i] = g.rotation;
    }
    Ok(out)
}

fn backward_tile(
    bins: &TileBins,
    t: usize,
    splats: &[Splat2D],
    forward: &RenderedImage,
    grad_rgb: &[f64],
    background: [f64; 3],
) -> Vec<SplatGrad> {
    let list = bins.tile(t);
    let mut local = vec![SplatGrad::default(); list.len()];
    if list.is_empty() {
        return local;
    }
    let [x0, x1, y0, y1] = bins.pixel_bounds(t, forward.width, forward.height);
    for y in y0..y1 {
        let py = y as f64 + 0.5;
        for x in x0..x1 {
            let p = y * forward.width + x;
            let g = [grad_rgb[p * 3], grad_rgb[p * 3 + 1], grad_rgb[p * 3 + 2]];
            if g == [0.0; 3] {
                continue;
            }
            let px = x as f64 + 0.5;
            let mut trans = forward.final_transmittance[p];
            // Color arriving from behind the current splat, background included.
            let mut behind = [trans * background[0], trans * background[1], trans * background[2]];
            let walked = forward.traversed[p] as usize;
            for k in (0..walked).rev() {
                let s = &splats[list[k] as usize];
                let Some(smp) = s.sample(px, py) else { continue };
                let a = smp.alpha.min(MAX_ALPHA);
                let one_minus = 1.0 - a;
                let t_before = trans / one_minus;
                let w = a * t_before;
                let acc = &mut local[k];
                let mut d_alpha = 0.0;
                for ch in 0..3 {
                    acc.color[ch] += g[ch] * w;
                    d_alpha += g[ch] * (s.color[ch] * t_before - behind[ch] / one_minus);
                    behind[ch] += s.color[ch] * w;
                }
                trans = t_before;
                if smp.alpha < MAX_ALPHA {
                    let (dx, dy) = (smp.dx, smp.dy);
                    let d_raw = d_alpha * smp.slope;
                    acc.opacity += d_raw * (smp.raw / s.opacity);
                    let d_power = d_raw * smp.raw;
                    let [ca, cb, cc] = s.conic;
                    acc.mean[0] += d_power * (ca * dx + cb * dy);
                    acc.mean[1] += d_power * (cb * dx + cc * dy);
                    acc.conic[0] -= 0.5 * d_power * dx * dx;
                    acc.conic[1] -= d_power * dx * dy;
                    acc.conic[2] -= 0.5 * d_power * dy * dy;
                }
            }
        }
    }
    local
}

struct ParamGrad {
    position: [f64; 3],
    color_dc: [f64; 3],
    opacity_raw: f64,
    scale_raw: [f64; 3],
    rotation: [f64; 4],
}

fn chain_to_params(view: &ViewTransform, cloud: &GaussianCloud, s: &Splat2D, g: &SplatGrad) -> ParamGrad {
    let i = s.source_index;
    let a = cloud.activated(i);
    let proj = linearize(view, cloud.positions[i].map(f64::from));
    let rot = quat_to_rotation(a.rotation);
    let sigma = covariance_unchecked(a.scale, a.rotation);

    // conic = cov2d⁻¹, as full symmetric matrices.
    let q = Matrix2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
    let gq = Matrix2::new(g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2]);
    let g_cov2d = -(q * gq * q);

    // cov2d = M Σ Mᵀ + low-pass, M = J W.
    let g_sigma: Matrix3<f64> = proj.m.transpose() * g_cov2d * proj.m;
    let g_m = 2.0 * g_cov2d * proj.m * sigma;
    let g_j = g_m * view.rotation.transpose();

    let f = view.focal;
    let (x, y, z) = (proj.t.x, proj.t.y, proj.t.z);
    let (z2, z3) = (z * z, z * z * z);
    let mut g_t = Vector3::new(
        g.mean[0] * f / z,
        g.mean[1] * f / z,
        -g.mean[0] * f * x / z2 - g.mean[1] * f * y / z2,
    );
    g_t.x += g_j[(0, 2)] * (-f / z2);
    g_t.y += g_j[(1, 2)] * (-f / z2);
    g_t.z += g_j[(0, 0)] * (-f / z2)
        + g_j[(0, 2)] * (2.0 * f * x / z3)
        + g_j[(1, 1)] * (-f / z2)
        + g_j[(1, 2)] * (2.0 * f * y / z3);
    let g_pos = view.rotation.transpose() * g_t;

    // Σ = A Aᵀ, A = R S.
    let scale = Vector3::from(a.scale);
    let am = rot * Matrix3::from_diagonal(&scale);
    let g_a = 2.0 * g_sigma * am;
    let mut g_scale_raw = [0.0; 3];
    let mut g_rot = Matrix3::zeros();
    for col in 0..3 {
        let mut gs = 0.0;
        for row in 0..3 {
            gs += g_a[(row, col)] * rot[(row, col)];
            g_rot[(row, col)] = g_a[(row, col)] * scale[col];
        }
        // exp activation
        g_scale_raw[col] = gs * scale[col];
    }
    let raw_q = cloud.rotations[i].map(f64::from);
    let g_q = normalize_quat_vjp(raw_q, quat_to_rotation_vjp(a.rotation, &g_rot));

    let dc = cloud.colors_dc[i];
    let color_dc = std::array::from_fn(|k| {
        let unclamped = 0.5 + SH_C0 * f64::from(dc[k]);
        if unclamped > 0.0 && unclamped < 1.0 {
            g.color[k] * SH_C0
        } else {
            0.0
        }
    });

    ParamGrad {
        position: [g_pos.x, g_pos.y, g_pos.z],
        color_dc,
        opacity_raw: g.opacity * a.opacity * (1.0 - a.opacity),
        scale_raw: g_scale_raw,
        rotation: g_q,
    }
}
