//! Text-to-3D Gaussian splat generation.
//!
//! The pipeline seeds a Gaussian cloud from a coarse 3D-prior point cloud
//! ([`init`]), renders it with a differentiable splatting rasterizer
//! ([`raster`]), and refines it with score-distillation gradients from a
//! 2D noise predictor ([`guidance`], [`optimizer`]).

pub mod camera;
pub mod error;
pub mod guidance;
pub mod init;
pub mod io;
pub mod math;
pub mod optimizer;
pub mod raster;
pub mod types;

pub use camera::Camera;
pub use error::{Error, Result};
pub use types::{Aabb, ColoredPointCloud, GaussianCloud, TriangleMesh};
