use super::MAX_ALPHA;

/// Front-to-back compositing result for a single ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayResult {
    /// Accumulated color, background excluded.
    pub rgb: [f64; 3],
    pub transmittance: f64,
    /// Entries of the input consumed before stopping.
    pub consumed: usize,
    /// Sum of compositing weights.
    pub weight_sum: f64,
    pub stopped_early: bool,
}

/// Composites `(color, alpha)` pairs sorted front to back:
/// `C = Σ cᵢ αᵢ Πⱼ<ᵢ (1 − αⱼ)`.
///
/// Alphas are clamped to `[0, MAX_ALPHA]`. Compositing stops once the
/// transmittance drops below `min_transmittance`; pass `0.0` to walk the
/// whole list.
pub fn composite_ray(splats: &[([f64; 3], f64)], min_transmittance: f64) -> RayResult {
    let mut rgb = [0.0; 3];
    let mut t = 1.0;
    let mut weight_sum = 0.0;
    for (k, (c, alpha)) in splats.iter().enumerate() {
        let a = alpha.clamp(0.0, MAX_ALPHA);
        let w = a * t;
        for ch in 0..3 {
            rgb[ch] += c[ch] * w;
        }
        weight_sum += w;
        t *= 1.0 - a;
        if t < min_transmittance {
            return RayResult { rgb, transmittance: t, consumed: k + 1, weight_sum, stopped_early: true };
        }
    }
    RayResult { rgb, transmittance: t, consumed: splats.len(), weight_sum, stopped_early: false }
}
