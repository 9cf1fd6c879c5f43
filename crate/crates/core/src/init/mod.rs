//! Gaussian initialization from a coarse 3D-prior point cloud.
//!
//! The seed cloud is densified by noisy point growing: candidates are drawn
//! uniformly in the seed bounding box and kept when their nearest seed lies
//! within `keep_distance`. Kept points take the nearest seed's color plus a
//! small non-negative random offset. The merged cloud then seeds one
//! Gaussian per point.

pub mod kdtree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{logit, rgb_to_dc};
use crate::types::{Aabb, ColoredPointCloud, GaussianCloud, TriangleMesh};
use kdtree::KdTree;

/// Initial activated opacity of every Gaussian.
pub const INITIAL_OPACITY: f64 = 0.1;
/// Floor on initial scales, so coincident points keep a finite log-scale.
pub const MIN_SCALE: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowConfig {
    /// Uniform candidates drawn in the bounding box.
    pub num_candidates: usize,
    /// A candidate is kept when its nearest seed is closer than this.
    pub keep_distance: f64,
    /// Upper bound of the per-channel color offset.
    pub perturb_max: f64,
    /// Scale of the sampling box about the seed box center.
    pub bbox_scale: f64,
    pub rng_seed: u64,
}

impl Default for GrowConfig {
    fn default() -> Self {
        Self {
            num_candidates: 500_000,
            keep_distance: 0.01,
            perturb_max: 0.2,
            bbox_scale: 1.0,
            rng_seed: 0,
        }
    }
}

impl GrowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_distance > 0.0) {
            return Err(Error::invalid(format!("keep_distance {} must be > 0", self.keep_distance)));
        }
        if !(self.perturb_max >= 0.0) {
            return Err(Error::invalid(format!("perturb_max {} must be >= 0", self.perturb_max)));
        }
        if !(self.bbox_scale > 0.0) {
            return Err(Error::invalid(format!("bbox_scale {} must be > 0", self.bbox_scale)));
        }
        Ok(())
    }
}

/// Vertices and colors of a mesh, in vertex order.
pub fn mesh_to_point_cloud(mesh: &TriangleMesh) -> Result<ColoredPointCloud> {
    mesh.validate()?;
    let colors = mesh
        .vertex_colors
        .as_ref()
        .ok_or(Error::MissingAttribute("mesh vertex colors"))?;
    ColoredPointCloud::new(mesh.vertices.clone(), colors.clone())
}

/// Pairs `positions` with colors drawn uniformly from `[0, 1]³`.
pub fn random_colors(positions: &[[f32; 3]], rng_seed: u64) -> Result<ColoredPointCloud> {
    if positions.is_empty() {
        return Err(Error::EmptyInput("random_colors positions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let colors = positions
        .iter()
        .map(|_| std::array::from_fn(|_| rng.random::<f32>()))
        .collect();
    ColoredPointCloud::new(positions.to_vec(), colors)
}

/// Points grown around a seed cloud, before merging.
#[derive(Clone, Debug, Default)]
pub struct GrownPoints {
    pub positions: Vec<[f32; 3]>,
    /// Index of the nearest seed of each grown point.
    pub nearest_seed: Vec<usize>,
    /// Color offset applied to the nearest seed color, before clamping.
    pub offsets: Vec<[f32; 3]>,
    /// Final clamped colors.
    pub colors: Vec<[f32; 3]>,
    /// Number of candidates drawn.
    pub candidates: usize,
    /// Box the candidates were drawn from.
    pub bbox: Option<Aabb>,
}

/// Draws the uniform candidates and perturbation offsets for growing.
///
/// Each candidate consumes six draws (position, then offset) from a single
/// stream, so candidate `k` is independent of how many others are kept.
pub fn draw_candidates(bbox: &Aabb, cfg: &GrowConfig) -> Vec<([f32; 3], [f32; 3])> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    (0..cfg.num_candidates)
        .map(|_| {
            let p: [f32; 3] = std::array::from_fn(|k| {
                let u: f64 = rng.random();
                (bbox.min_bound[k] + u * (bbox.max_bound[k] - bbox.min_bound[k])) as f32
            });
            let a: [f32; 3] = std::array::from_fn(|_| (rng.random::<f64>() * cfg.perturb_max) as f32);
            (p, a)
        })
        .collect()
}

/// Noisy point growing with color perturbation, without the final merge.
pub fn grow_points(seeds: &ColoredPointCloud, cfg: &GrowConfig) -> Result<GrownPoints> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::EmptyInput("seed point cloud"));
    }
    let bbox = Aabb::of(&seeds.positions)?.scaled(cfg.bbox_scale);
    let tree = KdTree::build(&seeds.positions);
    let candidates = draw_candidates(&bbox, cfg);
    let keep2 = cfg.keep_distance * cfg.keep_distance;

    // par_iter + collect preserves candidate order.
    let kept: Vec<Option<(usize, [f32; 3], [f32; 3])>> = candidates
        .par_iter()
        .map(|(p, offset)| {
            let hit = tree.nearest(p.map(f64::from))?;
            (hit.dist2 < keep2).then_some((hit.index, *p, *offset))
        })
        .collect();

    let mut grown = GrownPoints { candidates: candidates.len(), bbox: Some(bbox), ..Default::default() };
    for (seed, p, offset) in kept.into_iter().flatten() {
        let base = seeds.colors[seed];
        grown.positions.push(p);
        grown.nearest_seed.push(seed);
        grown.offsets.push(offset);
        grown.colors.push(std::array::from_fn(|k| (base[k] + offset[k]).clamp(0.0, 1.0)));
    }
    Ok(grown)
}

/// Seed cloud followed by its grown points.
pub fn grow_and_perturb(seeds: &ColoredPointCloud, cfg: &GrowConfig) -> Result<ColoredPointCloud> {
    let grown = grow_points(seeds, cfg)?;
    let mut out = seeds.clone();
    out.positions.extend(grown.positions);
    out.colors.extend(grown.colors);
    Ok(out)
}

/// Translates the cloud so its mean position is the origin.
pub fn center_at_origin(pt: &ColoredPointCloud) -> Result<(ColoredPointCloud, [f64; 3])> {
    if pt.is_empty() {
        return Err(Error::EmptyInput("center_at_origin"));
    }
    let mut sum = [0.0f64; 3];
    for p in &pt.positions {
        for k in 0..3 {
            sum[k] += f64::from(p[k]);
        }
    }
    let center = sum.map(|s| s / pt.len() as f64);
    let positions = pt
        .positions
        .iter()
        .map(|p| std::array::from_fn(|k| (f64::from(p[k]) - center[k]) as f32))
        .collect();
    Ok((ColoredPointCloud { positions, colors: pt.colors.clone() }, center))
}

/// Appends a randomly colored ground layer at the bottom of the cloud.
///
/// Ground points are uniform over the xy footprint expanded by `margin` on
/// every side, at the cloud's minimum z. At least one point is added.
pub fn add_ground_plane(
    pt: &ColoredPointCloud,
    density: f64,
    margin: f64,
    rng_seed: u64,
) -> Result<ColoredPointCloud> {
    if !(density > 0.0) || !density.is_finite() {
        return Err(Error::invalid(format!("ground density {density} must be > 0")));
    }
    if !(margin >= 0.0) {
        return Err(Error::invalid(format!("ground margin {margin} must be >= 0")));
    }
    let bbox = Aabb::of(&pt.positions)?;
    let lo = [bbox.min_bound[0] - margin, bbox.min_bound[1] - margin];
    let hi = [bbox.max_bound[0] + margin, bbox.max_bound[1] + margin];
    let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let count = ((area * density).round() as usize).max(1);
    let z = bbox.min_bound[2] as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = pt.clone();
    out.positions.reserve(count);
    out.colors.reserve(count);
    for _ in 0..count {
        let x = lo[0] + rng.random::<f64>() * (hi[0] - lo[0]);
        let y = lo[1] + rng.random::<f64>() * (hi[1] - lo[1]);
        out.positions.push([x as f32, y as f32, z]);
        out.colors.push(std::array::from_fn(|_| rng.random::<f32>()));
    }
    Ok(out)
}

/// Distance from every point to its nearest other point.
pub fn nearest_neighbor_distances(positions: &[[f32; 3]]) -> Vec<f64> {
    let tree = KdTree::build(positions);
    positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            tree.nearest_excluding(p.map(f64::from), i)
                .map_or(f64::INFINITY, |n| n.dist2.sqrt())
        })
        .collect()
}

/// One Gaussian per point: opacity 0.1, isotropic scale equal to the
/// nearest-neighbor distance, identity rotation.
pub fn init_gaussians(pt: &ColoredPointCloud) -> Result<GaussianCloud> {
    if pt.len() < 2 {
        return Err(Error::InsufficientPoints { needed: 2, got: pt.len() });
    }
    let nn = nearest_neighbor_distances(&pt.positions);
    let opacity_raw = logit(INITIAL_OPACITY) as f32;
    Ok(GaussianCloud {
        positions: pt.positions.clone(),
        colors_dc: pt.colors.iter().map(|c| c.map(|v| rgb_to_dc(f64::from(v)) as f32)).collect(),
        opacities_raw: vec![opacity_raw; pt.len()],
        scales_raw: nn.iter().map(|d| [d.max(MIN_SCALE).ln() as f32; 3]).collect(),
        rotations: vec![[1.0, 0.0, 0.0, 0.0]; pt.len()],
    })
}
