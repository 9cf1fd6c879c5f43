//! Asset and geometry containers shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, SH_C0};

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min_bound: [f64; 3],
    pub max_bound: [f64; 3],
}

impl Aabb {
    pub fn of(points: &[[f32; 3]]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyInput("bounding box of zero points"))?;
        let mut min_bound = first.map(f64::from);
        let mut max_bound = min_bound;
        for p in &points[1..] {
            for k in 0..3 {
                let v = f64::from(p[k]);
                min_bound[k] = min_bound[k].min(v);
                max_bound[k] = max_bound[k].max(v);
            }
        }
        Ok(Self { min_bound, max_bound })
    }

    pub fn center(&self) -> [f64; 3] {
        std::array::from_fn(|k| 0.5 * (self.min_bound[k] + self.max_bound[k]))
    }

    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|k| self.max_bound[k] - self.min_bound[k])
    }

    /// Scales the box about its center.
    pub fn scaled(&self, factor: f64) -> Self {
        let c = self.center();
        let e = self.extent();
        Self {
            min_bound: std::array::from_fn(|k| c[k] - 0.5 * e[k] * factor),
            max_bound: std::array::from_fn(|k| c[k] + 0.5 * e[k] * factor),
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.min_bound[k] && p[k] <= self.max_bound[k])
    }
}

/// Component-wise bounds of a point set.
pub fn aabb_of(points: &[[f32; 3]]) -> Result<Aabb> {
    Aabb::of(points)
}

/// Positions with RGB colors in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ColoredPointCloud {
    pub positions: Vec<[f32; 3]>,
    pub colors: Vec<[f32; 3]>,
}

impl ColoredPointCloud {
    pub fn new(positions: Vec<[f32; 3]>, colors: Vec<[f32; 3]>) -> Result<Self> {
        if positions.len() != colors.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} positions but {} colors",
                positions.len(),
                colors.len()
            )));
        }
        if colors.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("point colors must lie in [0, 1]"));
        }
        Ok(Self { positions, colors })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Appends `other` after the points already present.
    pub fn extend(&mut self, other: &ColoredPointCloud) {
        self.positions.extend_from_slice(&other.positions);
        self.colors.extend_from_slice(&other.colors);
    }
}

/// Triangle mesh with optional per-vertex colors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f32; 3]>,
    pub vertex_colors: Option<Vec<[f32; 3]>>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(
        vertices: Vec<[f32; 3]>,
        vertex_colors: Option<Vec<[f32; 3]>>,
        faces: Vec<[u32; 3]>,
    ) -> Result<Self> {
        let mesh = Self { vertices, vertex_colors, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::InsufficientPoints { needed: 3, got: self.vertices.len() });
        }
        if let Some(colors) = &self.vertex_colors {
            if colors.len() != self.vertices.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} vertices but {} vertex colors",
                    self.vertices.len(),
                    colors.len()
                )));
            }
        }
        let n = self.vertices.len() as u32;
        if let Some(face) = self.faces.iter().find(|f| f.iter().any(|i| *i >= n)) {
            return Err(Error::invalid(format!("face {face:?} indexes past {n} vertices")));
        }
        Ok(())
    }
}

/// The optimizable splat asset. Attributes are stored pre-activation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianCloud {
    pub positions: Vec<[f32; 3]>,
    /// Degree-0 SH coefficients.
    pub colors_dc: Vec<[f32; 3]>,
    /// Opacity logits.
    pub opacities_raw: Vec<f32>,
    /// Log scales.
    pub scales_raw: Vec<[f32; 3]>,
    /// (w, x, y, z) quaternions, normalized on use.
    pub rotations: Vec<[f32; 4]>,
}

/// Activated attributes of one Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivatedGaussian {
    pub opacity: f64,
    pub scale: [f64; 3],
    pub rotation: [f64; 4],
    pub color: [f64; 3],
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::EmptyInput("gaussian cloud"));
        }
        let lens = [
            self.colors_dc.len(),
            self.opacities_raw.len(),
            self.scales_raw.len(),
            self.rotations.len(),
        ];
        if lens.iter().any(|l| *l != n) {
            return Err(Error::ShapeMismatch(format!(
                "attribute lengths {lens:?} differ from {n} positions"
            )));
        }
        let finite = self.positions.iter().flatten().all(|v| v.is_finite())
            && self.colors_dc.iter().flatten().all(|v| v.is_finite())
            && self.opacities_raw.iter().all(|v| v.is_finite())
            && self.scales_raw.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("gaussian cloud contains NaN or Inf"));
        }
        if self.rotations.iter().any(|q| q.iter().all(|v| *v == 0.0)) {
            return Err(Error::invalid("zero-norm rotation quaternion"));
        }
        Ok(())
    }

    /// Applies the logistic, exponential and normalization activations.
    pub fn activated(&self, i: usize) -> ActivatedGaussian {
        activate_params(
            self.opacities_raw[i],
            self.scales_raw[i],
            self.rotations[i],
            self.colors_dc[i],
        )
    }

    /// Number of scalar parameters per Gaussian across all groups.
    pub const PARAMS_PER_GAUSSIAN: usize = 3 + 3 + 1 + 3 + 4;
}

/// Activates one Gaussian's raw parameters.
pub fn activate_params(
    opacity_raw: f32,
    scale_raw: [f32; 3],
    rotation: [f32; 4],
    color_dc: [f32; 3],
) -> ActivatedGaussian {
    ActivatedGaussian {
        opacity: math::sigmoid(f64::from(opacity_raw)),
        scale: scale_raw.map(|s| f64::from(s).exp()),
        rotation: math::normalize_quat(rotation.map(f64::from)),
        color: color_dc.map(|c| (0.5 + SH_C0 * f64::from(c)).clamp(0.0, 1.0)),
    }
}
