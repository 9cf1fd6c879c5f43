#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatforge::math::{logit, rgb_to_dc};
use splatforge::raster::{project_cloud, render, render_backward, CloudGradients};
use splatforge::{Camera, GaussianCloud};

/// Random cloud inside `[-extent, extent]³` with moderate opacities and
/// colors away from the clamp boundaries.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, extent: f32, scale: (f64, f64)) -> GaussianCloud {
    let mut c = GaussianCloud::default();
    for _ in 0..n {
        c.positions.push(std::array::from_fn(|_| rng.random_range(-extent..extent)));
        c.colors_dc
            .push(std::array::from_fn(|_| rgb_to_dc(rng.random_range(0.05..0.95)) as f32));
        c.opacities_raw.push(logit(rng.random_range(0.05..0.9)) as f32);
        c.scales_raw.push(std::array::from_fn(|_| rng.random_range(scale.0.ln()..scale.1.ln()) as f32));
        c.rotations.push(std::array::from_fn(|_| rng.random_range(-1.0f32..1.0)));
    }
    c
}

pub fn random_camera(rng: &mut ChaCha8Rng, size: usize) -> Camera {
    Camera::orbit(
        rng.random_range(2.0..3.5),
        rng.random_range(-180.0..180.0),
        rng.random_range(-10.0..60.0),
        49.0,
        size,
    )
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn loss(cloud: &GaussianCloud, cam: &Camera, bg: [f64; 3], g: &[f64]) -> f64 {
    let img = render(cloud, cam, bg).unwrap();
    img.rgb.iter().zip(g).map(|(a, b)| a * b).sum()
}

/// Mutable access to raw parameter `k` of Gaussian `i`, in the order
/// positions, colors, opacity, scales, rotations.
pub fn param(cloud: &mut GaussianCloud, i: usize, k: usize) -> &mut f32 {
    match k {
        0..=2 => &mut cloud.positions[i][k],
        3..=5 => &mut cloud.colors_dc[i][k - 3],
        6 => &mut cloud.opacities_raw[i],
        7..=9 => &mut cloud.scales_raw[i][k - 7],
        _ => &mut cloud.rotations[i][k - 10],
    }
}

fn analytic(grads: &CloudGradients, i: usize, k: usize) -> f64 {
    match k {
        0..=2 => grads.positions[i][k],
        3..=5 => grads.colors_dc[i][k - 3],
        6 => grads.opacities_raw[i],
        7..=9 => grads.scales_raw[i][k - 7],
        _ => grads.rotations[i][k - 10],
    }
}

fn depth_order(cloud: &GaussianCloud, cam: &Camera) -> Vec<usize> {
    project_cloud(cloud, cam).iter().map(|s| s.source_index).collect()
}

pub struct GradientCheck {
    /// Relative errors of coordinates whose gradient exceeds 1e-6.
    pub errors: Vec<f64>,
    /// Coordinates whose ±h perturbation reorders the depth sort, where the
    /// loss jumps and central differences measure nothing.
    pub reordered: usize,
}

/// Sixth-order central differences with h = 1e-3 over every raw parameter of a random
/// scene, against a random linear loss on the image.
pub fn gradient_check(seed: u64, n: usize, size: usize) -> GradientCheck {
    let mut r = rng(seed);
    let cloud = random_cloud(&mut r, n, 0.6, (0.03, 0.2));
    let cam = random_camera(&mut r, size);
    let bg: [f64; 3] = std::array::from_fn(|_| r.random());
    let g: Vec<f64> = (0..size * size * 3).map(|_| r.random_range(-1.0..1.0)).collect();
    let img = render(&cloud, &cam, bg).unwrap();
    let grads = render_backward(&cloud, &cam, bg, &img, &g).unwrap();
    let base_order = depth_order(&cloud, &cam);
    let h = 1e-3f32;
    let mut out = GradientCheck { errors: Vec::new(), reordered: 0 };
    for i in 0..n {
        for k in 0..GaussianCloud::PARAMS_PER_GAUSSIAN {
            let shifted: Vec<(GaussianCloud, f64)> = [-3.0f32, -2.0, -1.0, 1.0, 2.0, 3.0]
                .iter()
                .map(|m| {
                    let mut c = cloud.clone();
                    let x = *param(&mut c, i, k);
                    *param(&mut c, i, k) = x + m * h;
                    let actual = f64::from(*param(&mut c, i, k)) - f64::from(x);
                    (c, actual)
                })
                .collect();
            if shifted.iter().any(|(c, _)| depth_order(c, &cam) != base_order) {
                out.reordered += 1;
                continue;
            }
            let f: Vec<f64> = shifted.iter().map(|(c, _)| loss(c, &cam, bg, &g)).collect();
            let nodes: Vec<f64> = shifted.iter().map(|(_, x)| *x).collect();
            let fd = lagrange_slope(&nodes, &f);
            let a = analytic(&grads, i, k);
            if a.abs().max(fd.abs()) > 1e-6 {
                out.errors.push((a - fd).abs() / a.abs().max(fd.abs()));
            }
        }
    }
    out
}

/// Derivative at zero of the polynomial through `(x[j], f[j])`. Works on the
/// f32-rounded offsets actually applied, so the stencil stays exact.
fn lagrange_slope(x: &[f64], f: &[f64]) -> f64 {
    let n = x.len();
    (0..n)
        .map(|j| {
            let w: f64 = (0..n)
                .filter(|&m| m != j)
                .map(|m| {
                    (0..n)
                        .filter(|&l| l != j && l != m)
                        .map(|l| -x[l] / (x[j] - x[l]))
                        .product::<f64>()
                        / (x[j] - x[m])
                })
                .sum();
            w * f[j]
        })
        .sum()
}
