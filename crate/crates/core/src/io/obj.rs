//! Wavefront OBJ mesh reader (`v` and `f` records only).

use crate::error::{Error, Result};
use crate::types::TriangleMesh;

/// Parses `v x y z [r g b]` and `f i j k ...` records. Polygons are
/// fan-triangulated; negative indices count back from the latest vertex.
/// Vertex colors are kept only when every vertex carries them.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += line.len() as u64;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut words = line.split_whitespace();
        match words.next() {
            Some("v") => {
                let vals = words
                    .map(|w| w.parse::<f32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::parse(line_offset, format!("bad vertex '{line}': {e}")))?;
                match vals.len() {
                    3 | 4 => vertices.push([vals[0], vals[1], vals[2]]),
                    6 | 7 => {
                        vertices.push([vals[0], vals[1], vals[2]]);
                        colors.push([vals[3], vals[4], vals[5]]);
                    }
                    n => return Err(Error::parse(line_offset, format!("vertex with {n} values"))),
                }
            }
            Some("f") => {
                let n = vertices.len() as i64;
                let idx = words
                    .map(|w| {
                        let first = w.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|_| Error::parse(line_offset, format!("bad face index '{w}'")))?;
                        let resolved = if i < 0 { n + i } else { i - 1 };
                        if resolved < 0 || resolved >= n {
                            return Err(Error::parse(line_offset, format!("face index {i} out of range")));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<Vec<u32>>>()?;
                if idx.len() < 3 {
                    return Err(Error::parse(line_offset, "face with fewer than 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let vertex_colors = (!colors.is_empty() && colors.len() == vertices.len()).then_some(colors);
    TriangleMesh::new(vertices, vertex_colors, faces)
}
