use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splatforge::guidance::{PriorBranch, ReturnMode};
use splatforge::init::GrowConfig;
use splatforge::optimizer::TrainConfig;

use crate::fail::Failure;

/// Where the coarse 3D prior comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    /// A mesh (`.obj`, `.ply`) or point cloud (`.ply`) on disk.
    File(PathBuf),
    /// The prior endpoint of the guidance service.
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub source: Option<PriorSource>,
    pub branch: PriorBranch,
    pub ground: bool,
    /// Ground points per square scene unit.
    pub ground_density: f64,
    /// Ground margin around the cloud footprint, in scene units.
    pub ground_margin: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            source: None,
            branch: PriorBranch::TextTo3d,
            ground: false,
            ground_density: 20_000.0,
            ground_margin: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceKind {
    /// Pulls renders towards target renders of a reference cloud.
    Mock,
    #[default]
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub kind: GuidanceKind,
    pub url: Option<String>,
    pub mode: ReturnMode,
    pub attempts: u32,
    pub mock_strength: f64,
    /// Splat PLY whose renders the mock pulls towards. Defaults to the
    /// initial cloud.
    pub mock_target: Option<PathBuf>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            kind: GuidanceKind::Remote,
            url: None,
            mode: ReturnMode::default(),
            attempts: 3,
            mock_strength: 1.0,
            mock_target: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub prompt: String,
    /// Simplified prompt sent to the motion prior, e.g. "Someone kicks with
    /// the left leg". Falls back to `prompt`.
    pub motion_prompt: Option<String>,
    pub prior: PriorConfig,
    pub grow: GrowConfig,
    pub train: TrainConfig,
    pub guidance: GuidanceConfig,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prompt: String::new(),
            motion_prompt: None,
            prior: PriorConfig::default(),
            grow: GrowConfig::default(),
            train: TrainConfig::default(),
            guidance: GuidanceConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("reading config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("config {}: {e}", path.display())))
    }

    /// The prompt the motion prior sees.
    pub fn prior_prompt(&self) -> &str {
        match self.prior.branch {
            PriorBranch::TextToMotion => self.motion_prompt.as_deref().unwrap_or(&self.prompt),
            PriorBranch::TextTo3d => &self.prompt,
        }
    }
}
