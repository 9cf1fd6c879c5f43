use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::guidance::{NoiseSchedule, TimestepSchedule, Weighting};

/// Uniform ranges for sampled training cameras. Angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRanges {
    pub radius: [f64; 2],
    pub azimuth: [f64; 2],
    pub elevation: [f64; 2],
    pub fov_y: f64,
}

impl Default for CameraRanges {
    fn default() -> Self {
        Self { radius: [1.5, 4.0], azimuth: [-180.0, 180.0], elevation: [-10.0, 60.0], fov_y: 49.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub position: f64,
    pub color: f64,
    pub opacity: f64,
    pub scaling: f64,
    pub rotation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self { position: 5e-5, color: 1.25e-2, opacity: 1e-2, scaling: 1e-3, rotation: 1e-2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-15 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub num_train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { num_train_steps: 1000, beta_start: 0.000_85, beta_end: 0.012 }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::scaled_linear(self.num_train_steps, self.beta_start, self.beta_end)
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Background composited behind the splats during training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    /// A fresh uniform RGB color per iteration, shared by the batch.
    Random,
    Fixed([f64; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub prompt: String,
    pub iterations: usize,
    pub batch_size: usize,
    pub guidance_scale: f64,
    pub render_resolution: usize,
    pub guidance_resolution: usize,
    pub camera: CameraRanges,
    /// When non-empty, batches are drawn uniformly from these poses instead
    /// of `camera`.
    pub fixed_views: Vec<Camera>,
    pub learning_rates: LearningRates,
    pub adam: AdamConfig,
    pub timesteps: TimestepSchedule,
    pub noise_schedule: ScheduleConfig,
    pub weighting: Weighting,
    pub rng_seed: u64,
    pub background: Background,
    /// Save a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
    /// Abort once skipped iterations exceed this fraction of `iterations`.
    pub max_skip_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            prompt: String::new(),
            iterations: 1200,
            batch_size: 4,
            guidance_scale: 100.0,
            render_resolution: 1024,
            guidance_resolution: 512,
            camera: CameraRanges::default(),
            fixed_views: Vec::new(),
            learning_rates: LearningRates::default(),
            adam: AdamConfig::default(),
            timesteps: TimestepSchedule::default(),
            noise_schedule: ScheduleConfig::default(),
            weighting: Weighting::default(),
            rng_seed: 0,
            background: Background::Random,
            checkpoint_every: 0,
            max_skip_fraction: 0.1,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
        return Err(Error::Config(format!("{name} range {r:?} is empty or degenerate")));
    }
    Ok(())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.guidance_resolution == 0 || self.render_resolution == 0 {
            return Err(Error::Config("resolutions must be positive".into()));
        }
        if self.guidance_resolution > self.render_resolution
            || self.render_resolution % self.guidance_resolution != 0
        {
            return Err(Error::Config(format!(
                "render_resolution {} must be a multiple of guidance_resolution {}",
                self.render_resolution, self.guidance_resolution
            )));
        }
        let lr = &self.learning_rates;
        for (name, v) in [
            ("position", lr.position),
            ("color", lr.color),
            ("opacity", lr.opacity),
            ("scaling", lr.scaling),
            ("rotation", lr.rotation),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("learning rate for {name} must be positive, got {v}")));
            }
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps >= 0.0) {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps must be non-negative".into()));
        }
        check_range("radius", self.camera.radius)?;
        check_range("azimuth", self.camera.azimuth)?;
        check_range("elevation", self.camera.elevation)?;
        if self.camera.radius[0] <= 0.0 {
            return Err(Error::Config("camera radius must be positive".into()));
        }
        if !(self.camera.fov_y > 0.0 && self.camera.fov_y < 180.0) {
            return Err(Error::Config(format!("fov_y {} outside (0, 180)", self.camera.fov_y)));
        }
        for v in &self.fixed_views {
            v.validate().map_err(|e| Error::Config(format!("fixed view: {e}")))?;
        }
        self.timesteps.validate()?;
        self.noise_schedule.build()?;
        if let Background::Fixed(c) = self.background {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config(format!("background {c:?} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.max_skip_fraction) {
            return Err(Error::Config("max_skip_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Box-filter factor between render and guidance resolution.
    pub fn downscale_factor(&self) -> usize {
        self.render_resolution / self.guidance_resolution
    }
}
