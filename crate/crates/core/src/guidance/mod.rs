//! Score distillation: noising, the distillation residual and the noise
//! predictors that supply `ε̂`.
//!
//! Predictors are only ever evaluated. Nothing here differentiates through
//! them; the residual `w(t)(ε̂ − ε)` is handed to the renderer's adjoint as a
//! constant per-pixel gradient.

mod remote;
mod schedule;

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

pub use remote::{
    decode_f32_le, encode_f32_le, HealthReport, PriorAsset, PriorBranch, RemoteGuidance, ReturnMode,
    GUIDANCE_URL_ENV,
};
pub use schedule::{NoiseSchedule, TimestepSchedule, Weighting};

use crate::camera::Camera;
use crate::error::{Error, Result, ViewKey};

/// A batch of RGB images stored `B × H × W × 3`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ImageBatch {
    pub fn new(batch: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * height * width * 3 {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {batch}x{height}x{width}x3 batch",
                data.len()
            )));
        }
        Ok(Self { batch, height, width, data })
    }

    pub fn zeros(batch: usize, height: usize, width: usize) -> Self {
        Self { batch, height, width, data: vec![0.0; batch * height * width * 3] }
    }

    /// Stacks equally sized `H × W × 3` images.
    pub fn stack(height: usize, width: usize, images: &[&[f64]]) -> Result<Self> {
        let mut data = Vec::with_capacity(images.len() * height * width * 3);
        for img in images {
            if img.len() != height * width * 3 {
                return Err(Error::ShapeMismatch(format!(
                    "image has {} values, expected {}",
                    img.len(),
                    height * width * 3
                )));
            }
            data.extend_from_slice(img);
        }
        Self::new(images.len(), height, width, data)
    }

    /// Standard-normal batch of the given shape.
    pub fn standard_normal(batch: usize, height: usize, width: usize, rng: &mut impl Rng) -> Self {
        let data = (0..batch * height * width * 3).map(|_| rng.sample(StandardNormal)).collect();
        Self { batch, height, width, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.batch, self.height, self.width, 3]
    }

    pub fn image(&self, b: usize) -> &[f64] {
        let n = self.height * self.width * 3;
        &self.data[b * n..(b + 1) * n]
    }

    fn check_same_shape(&self, other: &ImageBatch) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }
}

/// `z_t = √ᾱ_t · x + √(1 − ᾱ_t) · ε`.
pub fn add_noise(x: &ImageBatch, t: f64, epsilon: &ImageBatch, schedule: &NoiseSchedule) -> Result<ImageBatch> {
    x.check_same_shape(epsilon)?;
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::invalid(format!("timestep fraction {t} outside (0, 1)")));
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x.data.iter().zip(&epsilon.data).map(|(x, e)| a * x + b * e).collect();
    Ok(ImageBatch { data, ..*x })
}

/// `w_t · (ε̂ − ε)`. A non-finite prediction is a guidance failure.
pub fn sds_gradient(epsilon_hat: &ImageBatch, epsilon: &ImageBatch, w_t: f64) -> Result<ImageBatch> {
    epsilon_hat.check_same_shape(epsilon)?;
    if epsilon_hat.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Guidance("predictor returned non-finite values".into()));
    }
    let data = epsilon_hat.data.iter().zip(&epsilon.data).map(|(h, e)| w_t * (h - e)).collect();
    Ok(ImageBatch { data, ..*epsilon })
}

/// Everything a predictor may see for one batch.
#[derive(Clone, Debug)]
pub struct GuidanceRequest {
    pub prompt: String,
    /// Timestep fraction in (0, 1).
    pub t: f64,
    pub guidance_scale: f64,
    pub seed: u64,
    /// Camera of each image, in batch order.
    pub views: Vec<Camera>,
    /// Clean renders `x`, values in [0, 1].
    pub images: ImageBatch,
    /// `z_t` built from `images` and `epsilon`.
    pub noised: ImageBatch,
    pub epsilon: ImageBatch,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GuidanceOutput {
    /// The predicted noise `ε̂`, to be compared against the request's `ε`.
    EpsilonHat(ImageBatch),
    /// `ε̂ − ε` already carried back to image pixels by the predictor.
    PixelGradient(ImageBatch),
}

pub trait NoisePredictor: Send + Sync {
    fn predict(&self, request: &GuidanceRequest) -> Result<GuidanceOutput>;
}

/// Per-pixel image gradient `w(t)(ε̂ − ε)` for a predictor's output.
pub fn residual_gradient(request: &GuidanceRequest, output: GuidanceOutput, w_t: f64) -> Result<ImageBatch> {
    match output {
        GuidanceOutput::EpsilonHat(eps_hat) => sds_gradient(&eps_hat, &request.epsilon, w_t),
        GuidanceOutput::PixelGradient(mut g) => {
            g.check_same_shape(&request.images)?;
            if g.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Guidance("predictor returned non-finite values".into()));
            }
            g.data.iter_mut().for_each(|v| *v *= w_t);
            Ok(g)
        }
    }
}

/// Deterministic stand-in predictor: `ε̂ = ε + λ (x − x_target)` with one
/// registered target image per camera pose.
#[derive(Clone, Debug, Default)]
pub struct MockGuidance {
    pub strength: f64,
    targets: HashMap<ViewKey, Vec<f64>>,
}

impl MockGuidance {
    pub fn new(strength: f64) -> Self {
        Self { strength, targets: HashMap::new() }
    }

    /// Registers an `H × W × 3` target for a camera pose, replacing any
    /// previous one.
    pub fn add_target(&mut self, camera: &Camera, image: Vec<f64>) {
        self.targets.insert(camera.view_key(), image);
    }

    pub fn target(&self, camera: &Camera) -> Option<&[f64]> {
        self.targets.get(&camera.view_key()).map(Vec::as_slice)
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }
}

impl NoisePredictor for MockGuidance {
    fn predict(&self, request: &GuidanceRequest) -> Result<GuidanceOutput> {
        let x = &request.images;
        if request.views.len() != x.batch {
            return Err(Error::ShapeMismatch(format!(
                "{} views for a batch of {}",
                request.views.len(),
                x.batch
            )));
        }
        let mut data = Vec::with_capacity(x.data.len());
        for (b, view) in request.views.iter().enumerate() {
            let key = view.view_key();
            let target = self.targets.get(&key).ok_or(Error::MissingTarget(key))?;
            let img = x.image(b);
            if target.len() != img.len() {
                return Err(Error::ShapeMismatch(format!(
                    "target for {key} has {} values, render has {}",
                    target.len(),
                    img.len()
                )));
            }
            let eps = request.epsilon.image(b);
            data.extend(img.iter().zip(target).zip(eps).map(|((x, y), e)| e + self.strength * (x - y)));
        }
        Ok(GuidanceOutput::EpsilonHat(ImageBatch { data, ..*x }))
    }
}
