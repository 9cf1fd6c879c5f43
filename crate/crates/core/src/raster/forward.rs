use rayon::prelude::*;

use super::composite::composite_ray;
use super::project::project_cloud;
use super::tiles::TileBins;
use super::{RenderedImage, Splat2D, EARLY_STOP_FLAG, MAX_ALPHA, MIN_TRANSMITTANCE, TILE_SIZE};
use crate::camera::Camera;
use crate::error::Result;
use crate::types::GaussianCloud;

/// Mutable views of one band of `TILE_SIZE` image rows.
struct Band<'a> {
    y0: usize,
    rgb: &'a mut [f64],
    transmittance: &'a mut [f64],
    count: &'a mut [u32],
    weight_sum: &'a mut [f64],
    traversed: &'a mut [u32],
}

fn bands(image: &mut RenderedImage) -> Vec<Band<'_>> {
    let w = image.width;
    let rows = TILE_SIZE;
    image
        .rgb
        .chunks_mut(rows * w * 3)
        .zip(image.final_transmittance.chunks_mut(rows * w))
        .zip(image.contrib_count.chunks_mut(rows * w))
        .zip(image.weight_sum.chunks_mut(rows * w))
        .zip(image.traversed.chunks_mut(rows * w))
        .enumerate()
        .map(|(i, ((((rgb, transmittance), count), weight_sum), traversed))| Band {
            y0: i * rows,
            rgb,
            transmittance,
            count,
            weight_sum,
            traversed,
        })
        .collect()
}

/// Renders with tile binning and per-pixel early termination.
pub fn render(cloud: &GaussianCloud, camera: &Camera, background: [f64; 3]) -> Result<RenderedImage> {
    cloud.validate()?;
    camera.validate()?;
    let splats = project_cloud(cloud, camera);
    Ok(render_splats(&splats, camera.width, camera.height, background))
}

pub(crate) fn render_splats(splats: &[Splat2D], width: usize, height: usize, background: [f64; 3]) -> RenderedImage {
    let bins = TileBins::build(splats, width, height);
    let mut image = RenderedImage::new(width, height, true);
    bands(&mut image).into_par_iter().for_each(|band| {
        let ty = band.y0 / TILE_SIZE;
        let band_rows = band.transmittance.len() / width;
        for tx in 0..bins.tiles_x {
            let list = bins.tile(ty * bins.tiles_x + tx);
            let x_end = ((tx + 1) * TILE_SIZE).min(width);
            for row in 0..band_rows {
                let py = (band.y0 + row) as f64 + 0.5;
                for x in tx * TILE_SIZE..x_end {
                    let px = x as f64 + 0.5;
                    let mut rgb = [0.0; 3];
                    let mut t = 1.0;
                    let mut weight_sum = 0.0;
                    let mut contributors = 0u32;
                    let mut walked = list.len();
                    let mut stopped = false;
                    for (k, &idx) in list.iter().enumerate() {
                        let s = &splats[idx as usize];
                        let Some((alpha, _, _)) = s.alpha_at(px, py) else { continue };
                        let a = alpha.min(MAX_ALPHA);
                        let w = a * t;
                        rgb[0] += s.color[0] * w;
                        rgb[1] += s.color[1] * w;
                        rgb[2] += s.color[2] * w;
                        weight_sum += w;
                        t *= 1.0 - a;
                        contributors += 1;
                        if t < MIN_TRANSMITTANCE {
                            walked = k + 1;
                            stopped = true;
                            break;
                        }
                    }
                    let p = row * width + x;
                    for ch in 0..3 {
                        band.rgb[p * 3 + ch] = rgb[ch] + t * background[ch];
                    }
                    band.transmittance[p] = t;
                    band.weight_sum[p] = weight_sum;
                    band.count[p] = contributors | if stopped { EARLY_STOP_FLAG } else { 0 };
                    band.traversed[p] = walked as u32;
                }
            }
        }
    });
    image
}

/// Renders by compositing every visible splat at every pixel, without
/// tiling or early termination.
pub fn reference_render(cloud: &GaussianCloud, camera: &Camera, background: [f64; 3]) -> Result<RenderedImage> {
    cloud.validate()?;
    camera.validate()?;
    let splats = project_cloud(cloud, camera);
    let (width, height) = (camera.width, camera.height);
    let mut image = RenderedImage::new(width, height, false);
    let rows: Vec<_> = image
        .rgb
        .chunks_mut(width * 3)
        .zip(image.final_transmittance.chunks_mut(width))
        .zip(image.contrib_count.chunks_mut(width))
        .zip(image.weight_sum.chunks_mut(width))
        .enumerate()
        .collect();
    rows.into_par_iter().for_each(|(y, (((rgb, trans), count), wsum))| {
        let py = y as f64 + 0.5;
        let mut ray = Vec::new();
        for x in 0..width {
            let px = x as f64 + 0.5;
            ray.clear();
            ray.extend(splats.iter().filter_map(|s| s.alpha_at(px, py).map(|(a, _, _)| (s.color, a))));
            let r = composite_ray(&ray, 0.0);
            for ch in 0..3 {
                rgb[x * 3 + ch] = r.rgb[ch] + r.transmittance * background[ch];
            }
            trans[x] = r.transmittance;
            wsum[x] = r.weight_sum;
            count[x] = r.consumed as u32;
        }
    });
    Ok(image)
}
