//! Box downscaling of `H × W × 3` images and its adjoint.

use crate::error::{Error, Result};

/// Averages `k × k` blocks.
pub fn downscale(image: &[f64], width: usize, height: usize, k: usize) -> Result<Vec<f64>> {
    if k == 0 || width % k != 0 || height % k != 0 {
        return Err(Error::invalid(format!("{width}x{height} is not divisible by {k}")));
    }
    if image.len() != width * height * 3 {
        return Err(Error::ShapeMismatch(format!("{} values for {width}x{height}x3", image.len())));
    }
    if k == 1 {
        return Ok(image.to_vec());
    }
    let (w, h) = (width / k, height / k);
    let norm = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * 3;
            for dy in 0..k {
                let row = ((y * k + dy) * width + x * k) * 3;
                for dx in 0..k {
                    for c in 0..3 {
                        out[o + c] += image[row + dx * 3 + c];
                    }
                }
            }
            for c in 0..3 {
                out[o + c] *= norm;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`downscale`]: each coarse value spread over its block with
/// weight `1 / k²`. `width` and `height` are the coarse dimensions.
pub fn downscale_adjoint(grad: &[f64], width: usize, height: usize, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("zero downscale factor"));
    }
    if grad.len() != width * height * 3 {
        return Err(Error::ShapeMismatch(format!("{} values for {width}x{height}x3", grad.len())));
    }
    let fw = width * k;
    let norm = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; fw * height * k * 3];
    for (fy, row) in out.chunks_mut(fw * 3).enumerate() {
        let src = &grad[(fy / k) * width * 3..(fy / k + 1) * width * 3];
        for (fx, px) in row.chunks_mut(3).enumerate() {
            for c in 0..3 {
                px[c] = src[(fx / k) * 3 + c] * norm;
            }
        }
    }
    Ok(out)
}
