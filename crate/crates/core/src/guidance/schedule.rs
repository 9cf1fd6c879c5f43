//! Diffusion noise schedule and timestep sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scaled-linear variance schedule: `β` is linear in `√β` between the two
/// endpoints, and `ᾱ_k = ∏_{j ≤ k} (1 − β_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub num_train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    alphas_cumprod: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::scaled_linear(1000, 0.000_85, 0.012).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    pub fn scaled_linear(num_train_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if num_train_steps < 2 {
            return Err(Error::invalid("schedule needs at least two steps"));
        }
        if !(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let (s0, s1) = (beta_start.sqrt(), beta_end.sqrt());
        let last = (num_train_steps - 1) as f64;
        let mut acc = 1.0;
        let alphas_cumprod = (0..num_train_steps)
            .map(|k| {
                let b = s0 + (s1 - s0) * k as f64 / last;
                acc *= 1.0 - b * b;
                acc
            })
            .collect();
        Ok(Self { num_train_steps, beta_start, beta_end, alphas_cumprod })
    }

    pub fn alphas_cumprod(&self) -> &[f64] {
        &self.alphas_cumprod
    }

    /// Discrete step for a timestep fraction: `round(t · N)`, clamped.
    pub fn step_of(&self, t: f64) -> usize {
        let k = (t * self.num_train_steps as f64).round();
        (k.max(0.0) as usize).min(self.num_train_steps - 1)
    }

    pub fn alpha_bar(&self, t: f64) -> f64 {
        self.alphas_cumprod[self.step_of(t)]
    }
}

/// Weighting `w(t)` applied to the score-distillation residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    OneMinusAlphaBar,
    Unit,
}

impl Weighting {
    pub fn weight(self, alpha_bar: f64) -> f64 {
        match self {
            Weighting::OneMinusAlphaBar => 1.0 - alpha_bar,
            Weighting::Unit => 1.0,
        }
    }
}

/// Two-phase uniform timestep range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimestepSchedule {
    pub early: [f64; 2],
    pub late: [f64; 2],
    /// First iteration drawing from `late`.
    pub switch_iteration: usize,
}

impl Default for TimestepSchedule {
    fn default() -> Self {
        Self { early: [0.02, 0.98], late: [0.02, 0.55], switch_iteration: 500 }
    }
}

impl TimestepSchedule {
    pub fn validate(&self) -> Result<()> {
        for r in [self.early, self.late] {
            if !(0.0 < r[0] && r[0] < r[1] && r[1] < 1.0) {
                return Err(Error::Config(format!("timestep range {r:?} must satisfy 0 < lo < hi < 1")));
            }
        }
        Ok(())
    }

    pub fn range(&self, iteration: usize) -> [f64; 2] {
        if iteration < self.switch_iteration {
            self.early
        } else {
            self.late
        }
    }

    pub fn sample(&self, iteration: usize, rng: &mut impl Rng) -> f64 {
        let [lo, hi] = self.range(iteration);
        rng.random_range(lo..=hi)
    }
}
