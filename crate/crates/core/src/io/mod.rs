//! File formats: PLY (point clouds, meshes, splats) and OBJ meshes.

pub mod obj;
pub mod ply;

use std::fs;
use std::io::BufWriter;
use std::path::Path;

pub use obj::parse_obj;
pub use ply::{parse_ply, write_mesh, write_point_cloud, write_splat, PlyData, PlyFormat};

use crate::error::Result;
use crate::types::{ColoredPointCloud, GaussianCloud, TriangleMesh};

fn is_obj(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj"))
}

/// Reads a mesh from `.obj` or `.ply`.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    if is_obj(path) {
        parse_obj(&fs::read_to_string(path)?)
    } else {
        parse_ply(&fs::read(path)?)?.mesh()
    }
}

pub fn read_point_cloud(path: &Path) -> Result<ColoredPointCloud> {
    parse_ply(&fs::read(path)?)?.point_cloud()
}

pub fn read_splat(path: &Path) -> Result<GaussianCloud> {
    parse_ply(&fs::read(path)?)?.gaussian_cloud()
}

pub fn save_splat(path: &Path, cloud: &GaussianCloud) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_splat(&mut w, cloud)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

pub fn save_point_cloud(path: &Path, pc: &ColoredPointCloud, format: PlyFormat) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_point_cloud(&mut w, pc, format)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}
