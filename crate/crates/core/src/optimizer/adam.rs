//! Per-group Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::config::{AdamConfig, LearningRates};
use crate::raster::CloudGradients;
use crate::types::GaussianCloud;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Position,
    Color,
    Opacity,
    Scaling,
    Rotation,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] =
        [ParamGroup::Position, ParamGroup::Color, ParamGroup::Opacity, ParamGroup::Scaling, ParamGroup::Rotation];

    pub fn learning_rate(self, lr: &LearningRates) -> f64 {
        match self {
            ParamGroup::Position => lr.position,
            ParamGroup::Color => lr.color,
            ParamGroup::Opacity => lr.opacity,
            ParamGroup::Scaling => lr.scaling,
            ParamGroup::Rotation => lr.rotation,
        }
    }

    pub fn params(self, cloud: &mut GaussianCloud) -> &mut [f32] {
        match self {
            ParamGroup::Position => cloud.positions.as_flattened_mut(),
            ParamGroup::Color => cloud.colors_dc.as_flattened_mut(),
            ParamGroup::Opacity => &mut cloud.opacities_raw,
            ParamGroup::Scaling => cloud.scales_raw.as_flattened_mut(),
            ParamGroup::Rotation => cloud.rotations.as_flattened_mut(),
        }
    }

    pub fn grads(self, grads: &CloudGradients) -> &[f64] {
        match self {
            ParamGroup::Position => grads.positions.as_flattened(),
            ParamGroup::Color => grads.colors_dc.as_flattened(),
            ParamGroup::Opacity => &grads.opacities_raw,
            ParamGroup::Scaling => grads.scales_raw.as_flattened(),
            ParamGroup::Rotation => grads.rotations.as_flattened(),
        }
    }
}

/// Moment estimates of one parameter group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupState {
    pub group: ParamGroup,
    /// Updates applied so far; drives bias correction.
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub groups: Vec<GroupState>,
}

impl Adam {
    pub fn new(cloud: &GaussianCloud) -> Self {
        let mut scratch = cloud.clone();
        let groups = ParamGroup::ALL
            .iter()
            .map(|g| {
                let n = g.params(&mut scratch).len();
                GroupState { group: *g, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
            })
            .collect();
        Self { groups }
    }

    pub fn matches(&self, cloud: &GaussianCloud) -> bool {
        let mut scratch = cloud.clone();
        self.groups.len() == ParamGroup::ALL.len()
            && self.groups.iter().zip(ParamGroup::ALL).all(|(s, g)| {
                let n = g.params(&mut scratch).len();
                s.group == g && s.m.len() == n && s.v.len() == n
            })
    }

    /// Applies one update per group. Groups with a non-finite gradient are
    /// left untouched; their count is returned.
    pub fn step(&mut self, cloud: &mut GaussianCloud, grads: &CloudGradients, lr: &LearningRates, cfg: &AdamConfig) -> usize {
        let mut skipped = 0;
        for state in &mut self.groups {
            let g = state.group.grads(grads);
            if g.iter().any(|v| !v.is_finite()) {
                skipped += 1;
                continue;
            }
            state.step += 1;
            let rate = state.group.learning_rate(lr);
            let bc1 = 1.0 - cfg.beta1.powf(state.step as f64);
            let bc2 = 1.0 - cfg.beta2.powf(state.step as f64);
            let params = state.group.params(cloud);
            for (((p, g), m), v) in params.iter_mut().zip(g).zip(&mut state.m).zip(&mut state.v) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let update = rate * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
                *p = (f64::from(*p) - update) as f32;
            }
        }
        skipped
    }
}
