use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, ParamGroup};
use super::config::{Background, CameraRanges, TrainConfig};
use super::resample::{downscale, downscale_adjoint};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::guidance::{
    add_noise, residual_gradient, GuidanceRequest, ImageBatch, NoisePredictor, NoiseSchedule,
};
use crate::io::{read_splat, save_splat};
use crate::raster::{render, render_backward, CloudGradients};
use crate::types::GaussianCloud;

/// RNG for one iteration. Each iteration owns a separate stream of the
/// seeded generator, so resuming needs no saved RNG state.
pub fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

/// Orbit camera drawn uniformly from the ranges, looking at the origin.
pub fn sample_camera(rng: &mut impl Rng, ranges: &CameraRanges, size: usize) -> Camera {
    let radius = rng.random_range(ranges.radius[0]..=ranges.radius[1]);
    let azimuth = rng.random_range(ranges.azimuth[0]..=ranges.azimuth[1]);
    let elevation = rng.random_range(ranges.elevation[0]..=ranges.elevation[1]);
    Camera::orbit(radius, azimuth, elevation, ranges.fov_y, size)
}

/// Renders at the camera's size and box-filters by `factor`.
pub fn render_for_guidance(cloud: &GaussianCloud, camera: &Camera, background: [f64; 3], factor: usize) -> Result<Vec<f64>> {
    let img = render(cloud, camera, background)?;
    downscale(&img.rgb, img.width, img.height, factor)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupNorms {
    pub position: f64,
    pub color: f64,
    pub opacity: f64,
    pub scaling: f64,
    pub rotation: f64,
}

impl GroupNorms {
    pub fn of(grads: &CloudGradients) -> Self {
        let n = |g: ParamGroup| g.grads(grads).iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            position: n(ParamGroup::Position),
            color: n(ParamGroup::Color),
            opacity: n(ParamGroup::Opacity),
            scaling: n(ParamGroup::Scaling),
            rotation: n(ParamGroup::Rotation),
        }
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: usize,
    pub t: f64,
    pub grad_norms: GroupNorms,
    /// Skipped iterations so far, this one included.
    pub skips: usize,
    pub skipped: bool,
    /// Parameter groups left unchanged because of non-finite gradients.
    pub nonfinite_groups: usize,
    pub ms: f64,
}

/// Mean gradient of one batch together with what produced it.
#[derive(Clone, Debug)]
pub struct BatchGradient {
    pub grads: CloudGradients,
    pub t: f64,
    pub views: Vec<Camera>,
    pub background: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct CheckpointState {
    /// Next iteration to run.
    iteration: usize,
    skips: usize,
    rng_seed: u64,
    ply: String,
    adam: Adam,
}

pub struct Trainer {
    config: TrainConfig,
    cloud: GaussianCloud,
    adam: Adam,
    schedule: NoiseSchedule,
    iteration: usize,
    skips: usize,
}

impl Trainer {
    pub fn new(cloud: GaussianCloud, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        cloud.validate()?;
        let schedule = config.noise_schedule.build()?;
        let adam = Adam::new(&cloud);
        Ok(Self { config, cloud, adam, schedule, iteration: 0, skips: 0 })
    }

    pub fn cloud(&self) -> &GaussianCloud {
        &self.cloud
    }

    pub fn into_cloud(self) -> GaussianCloud {
        self.cloud
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    /// Next iteration to run.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn skips(&self) -> usize {
        self.skips
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    fn sample_views(&self, rng: &mut ChaCha8Rng) -> Vec<Camera> {
        let size = self.config.render_resolution;
        (0..self.config.batch_size)
            .map(|_| {
                if self.config.fixed_views.is_empty() {
                    sample_camera(rng, &self.config.camera, size)
                } else {
                    let i = rng.random_range(0..self.config.fixed_views.len());
                    self.config.fixed_views[i].with_size(size, size)
                }
            })
            .collect()
    }

    /// The batch-mean gradient the current iteration would apply, or a
    /// guidance error.
    pub fn gradient(&self, predictor: &dyn NoisePredictor) -> Result<BatchGradient> {
        let cfg = &self.config;
        let mut rng = iteration_rng(cfg.rng_seed, self.iteration);
        let views = self.sample_views(&mut rng);
        let background = match cfg.background {
            Background::Random => [rng.random(), rng.random(), rng.random()],
            Background::Fixed(c) => c,
        };
        let t = cfg.timesteps.sample(self.iteration, &mut rng);
        let (gr, k) = (cfg.guidance_resolution, cfg.downscale_factor());

        let renders = views.iter().map(|v| render(&self.cloud, v, background)).collect::<Result<Vec<_>>>()?;
        let small = renders
            .iter()
            .map(|r| downscale(&r.rgb, r.width, r.height, k))
            .collect::<Result<Vec<_>>>()?;
        let images = ImageBatch::stack(gr, gr, &small.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
        let epsilon = ImageBatch::standard_normal(views.len(), gr, gr, &mut rng);
        let noised = add_noise(&images, t, &epsilon, &self.schedule)?;
        let request = GuidanceRequest {
            prompt: cfg.prompt.clone(),
            t,
            guidance_scale: cfg.guidance_scale,
            seed: rng.next_u64(),
            views: views.clone(),
            images,
            noised,
            epsilon,
        };
        let output = predictor.predict(&request)?;
        let w = cfg.weighting.weight(self.schedule.alpha_bar(t));
        let pixel_grad = residual_gradient(&request, output, w)?;

        let mut grads = CloudGradients::zeros(self.cloud.len());
        for (b, (view, fwd)) in views.iter().zip(&renders).enumerate() {
            let g = downscale_adjoint(pixel_grad.image(b), gr, gr, k)?;
            let single = render_backward(&self.cloud, view, background, fwd, &g)?;
            grads.add_scaled(&single, 1.0);
        }
        let mut mean = CloudGradients::zeros(self.cloud.len());
        mean.add_scaled(&grads, 1.0 / views.len() as f64);
        Ok(BatchGradient { grads: mean, t, views, background })
    }

    /// Runs one iteration. Guidance failures skip it; too many skips abort.
    pub fn step(&mut self, predictor: &dyn NoisePredictor) -> Result<IterationMetrics> {
        if self.is_done() {
            return Err(Error::invalid("training already finished"));
        }
        let start = Instant::now();
        let iter = self.iteration;
        let mut metrics = IterationMetrics {
            iter,
            t: f64::NAN,
            grad_norms: GroupNorms::default(),
            skips: self.skips,
            skipped: false,
            nonfinite_groups: 0,
            ms: 0.0,
        };
        match self.gradient(predictor) {
            Ok(batch) => {
                metrics.t = batch.t;
                metrics.grad_norms = GroupNorms::of(&batch.grads);
                metrics.nonfinite_groups =
                    self.adam.step(&mut self.cloud, &batch.grads, &self.config.learning_rates, &self.config.adam);
            }
            Err(Error::Guidance(msg)) => {
                self.skips += 1;
                metrics.skips = self.skips;
                metrics.skipped = true;
                if self.skips as f64 > self.config.max_skip_fraction * self.config.iterations as f64 {
                    return Err(Error::Aborted(format!(
                        "{} of {} iterations skipped by iteration {iter}; last guidance error: {msg}",
                        self.skips, self.config.iterations
                    )));
                }
            }
            Err(e) => return Err(e),
        }
        self.iteration += 1;
        metrics.ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(metrics)
    }

    /// Runs the remaining iterations, calling `on_iteration` after each.
    pub fn run(
        &mut self,
        predictor: &dyn NoisePredictor,
        mut on_iteration: impl FnMut(&Trainer, &IterationMetrics) -> Result<()>,
    ) -> Result<()> {
        while !self.is_done() {
            let m = self.step(predictor)?;
            on_iteration(self, &m)?;
        }
        Ok(())
    }

    /// Writes `ckpt_NNNNNN.ply` and `ckpt_NNNNNN.json` into `dir` and returns
    /// the JSON path.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let stem = format!("ckpt_{:06}", self.iteration);
        let ply = format!("{stem}.ply");
        save_splat(&dir.join(&ply), &self.cloud)?;
        let state = CheckpointState {
            iteration: self.iteration,
            skips: self.skips,
            rng_seed: self.config.rng_seed,
            ply,
            adam: self.adam.clone(),
        };
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, serde_json::to_vec(&state).map_err(|e| Error::invalid(e.to_string()))?)?;
        Ok(json)
    }

    /// Continues from a checkpoint written by [`Trainer::save_checkpoint`].
    pub fn resume(checkpoint: &Path, config: TrainConfig) -> Result<Self> {
        let text = std::fs::read(checkpoint)?;
        let state: CheckpointState = serde_json::from_slice(&text)
            .map_err(|e| Error::Parse { offset: e.column() as u64, message: format!("checkpoint: {e}") })?;
        if state.rng_seed != config.rng_seed {
            return Err(Error::Config(format!(
                "checkpoint was trained with seed {}, config has {}",
                state.rng_seed, config.rng_seed
            )));
        }
        let dir = checkpoint.parent().unwrap_or(Path::new("."));
        let cloud = read_splat(&dir.join(&state.ply))?;
        if !state.adam.matches(&cloud) {
            return Err(Error::ShapeMismatch("optimizer state does not match checkpoint cloud".into()));
        }
        let mut trainer = Self::new(cloud, config)?;
        trainer.adam = state.adam;
        trainer.iteration = state.iteration;
        trainer.skips = state.skips;
        Ok(trainer)
    }
}

/// Trains `cloud` for `config.iterations` iterations.
pub fn train(
    cloud: GaussianCloud,
    predictor: &dyn NoisePredictor,
    config: TrainConfig,
    on_iteration: impl FnMut(&Trainer, &IterationMetrics) -> Result<()>,
) -> Result<GaussianCloud> {
    let mut trainer = Trainer::new(cloud, config)?;
    trainer.run(predictor, on_iteration)?;
    Ok(trainer.into_cloud())
}
