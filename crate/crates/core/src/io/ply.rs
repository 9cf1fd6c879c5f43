//! PLY reading and writing for point clouds, meshes and 3D-GS splat files.
//!
//! The reader handles `ascii` and `binary_little_endian` bodies with any
//! scalar property types. Vertex properties are kept per column as `f64`,
//! which represents every PLY scalar type exactly.

use std::io::Write;

use crate::error::{Error, Result};
use crate::types::{ColoredPointCloud, GaussianCloud, TriangleMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Self::F32 | Self::F64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyDef {
    pub name: String,
    pub kind: PropertyKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementDef {
    pub name: String,
    pub count: usize,
    pub properties: Vec<PropertyDef>,
}

/// Values of one element: scalar columns and list columns, by property.
#[derive(Clone, Debug, Default)]
pub struct ElementData {
    pub scalars: Vec<(String, ScalarType, Vec<f64>)>,
    pub lists: Vec<(String, Vec<Vec<f64>>)>,
}

impl ElementData {
    pub fn column(&self, name: &str) -> Option<(&ScalarType, &[f64])> {
        self.scalars
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, t, v)| (t, v.as_slice()))
    }

    pub fn list(&self, name: &str) -> Option<&[Vec<f64>]> {
        self.lists.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

#[derive(Clone, Debug)]
pub struct PlyData {
    pub format: PlyFormat,
    pub elements: Vec<(ElementDef, ElementData)>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<(usize, &'a str)> {
        let start = self.pos;
        let rest = &self.bytes[start..];
        let end = rest
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| Error::parse(start as u64, "unexpected end of header"))?;
        self.pos = start + end + 1;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::parse(start as u64, "header is not valid UTF-8"))?;
        Ok((start, line.trim_end_matches('\r')))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.pos as u64, "unexpected end of binary body"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

fn parse_header(cur: &mut Cursor<'_>) -> Result<(PlyFormat, Vec<ElementDef>)> {
    let (off, magic) = cur.line()?;
    if magic != "ply" {
        return Err(Error::parse(off as u64, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<ElementDef> = Vec::new();
    loop {
        let (off, line) = cur.line()?;
        let mut words = line.split_whitespace();
        let err = |m: &str| Error::parse(off as u64, format!("{m}: '{line}'"));
        match words.next() {
            Some("format") => {
                format = Some(match words.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    _ => return Err(err("unsupported format")),
                });
            }
            Some("element") => {
                let name = words.next().ok_or_else(|| err("element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err("element count"))?;
                elements.push(ElementDef { name: name.to_string(), count, properties: Vec::new() });
            }
            Some("property") => {
                let element = elements.last_mut().ok_or_else(|| err("property before element"))?;
                let t = words.next().ok_or_else(|| err("property type"))?;
                let kind = if t == "list" {
                    let count = words.next().and_then(ScalarType::parse).ok_or_else(|| err("list count type"))?;
                    let item = words.next().and_then(ScalarType::parse).ok_or_else(|| err("list item type"))?;
                    PropertyKind::List { count, item }
                } else {
                    PropertyKind::Scalar(ScalarType::parse(t).ok_or_else(|| err("unknown scalar type"))?)
                };
                let name = words.next().ok_or_else(|| err("property name"))?;
                element.properties.push(PropertyDef { name: name.to_string(), kind });
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("end_header") => break,
            Some(_) => return Err(err("unknown header line")),
        }
    }
    let format = format.ok_or_else(|| Error::parse(0, "header has no format line"))?;
    Ok((format, elements))
}

/// Parses a complete PLY file.
pub fn parse_ply(bytes: &[u8]) -> Result<PlyData> {
    let mut cur = Cursor { bytes, pos: 0 };
    let (format, defs) = parse_header(&mut cur)?;
    let mut elements = Vec::with_capacity(defs.len());
    let mut tokens = match format {
        PlyFormat::Ascii => Some(AsciiTokens { bytes, pos: cur.pos }),
        PlyFormat::BinaryLittleEndian => None,
    };
    for def in defs {
        let mut data = ElementData::default();
        for p in &def.properties {
            match p.kind {
                PropertyKind::Scalar(t) => data.scalars.push((p.name.clone(), t, Vec::with_capacity(def.count.min(bytes.len())))),
                PropertyKind::List { .. } => data.lists.push((p.name.clone(), Vec::with_capacity(def.count.min(bytes.len())))),
            }
        }
        for _ in 0..def.count {
            let (mut si, mut li) = (0, 0);
            for p in &def.properties {
                match (&p.kind, tokens.as_mut()) {
                    (PropertyKind::Scalar(t), None) => {
                        let v = t.decode_le(cur.take(t.size())?);
                        data.scalars[si].2.push(v);
                        si += 1;
                    }
                    (PropertyKind::Scalar(t), Some(tok)) => {
                        let v = tok.next_value(*t)?;
                        data.scalars[si].2.push(v);
                        si += 1;
                    }
                    (PropertyKind::List { count, item }, None) => {
                        let off = cur.pos;
                        let n = count.decode_le(cur.take(count.size())?);
                        let n = list_len(n, off)?;
                        let raw = cur.take(n * item.size())?;
                        let items = raw.chunks_exact(item.size()).map(|c| item.decode_le(c)).collect();
                        data.lists[li].1.push(items);
                        li += 1;
                    }
                    (PropertyKind::List { count, item }, Some(tok)) => {
                        let off = tok.pos;
                        let n = list_len(tok.next_value(*count)?, off)?;
                        let items = (0..n).map(|_| tok.next_value(*item)).collect::<Result<Vec<_>>>()?;
                        data.lists[li].1.push(items);
                        li += 1;
                    }
                }
            }
        }
        elements.push((def, data));
    }
    Ok(PlyData { format, elements })
}

fn list_len(n: f64, offset: usize) -> Result<usize> {
    if n < 0.0 || n.fract() != 0.0 {
        return Err(Error::parse(offset as u64, format!("invalid list length {n}")));
    }
    Ok(n as usize)
}

struct AsciiTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl AsciiTokens<'_> {
    fn next_value(&mut self, t: ScalarType) -> Result<f64> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start as u64, "unexpected end of ascii body"));
        }
        let word = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start as u64, "invalid UTF-8 in ascii body"))?;
        let bad = || Error::parse(start as u64, format!("invalid {t:?} value '{word}'"));
        // Parse float32 properties at single precision so ascii round-trips match binary.
        match t {
            ScalarType::F32 => word.parse::<f32>().map(f64::from).map_err(|_| bad()),
            ScalarType::F64 => word.parse::<f64>().map_err(|_| bad()),
            _ => word.parse::<i64>().map(|v| v as f64).map_err(|_| bad()),
        }
    }
}

impl PlyData {
    pub fn element(&self, name: &str) -> Option<&ElementData> {
        self.elements.iter().find(|(d, _)| d.name == name).map(|(_, e)| e)
    }

    fn vertices(&self) -> Result<&ElementData> {
        self.element("vertex").ok_or(Error::MissingAttribute("vertex element"))
    }

    fn positions(&self) -> Result<Vec<[f32; 3]>> {
        let v = self.vertices()?;
        let cols = ["x", "y", "z"].map(|n| v.column(n).map(|(_, c)| c));
        let [Some(x), Some(y), Some(z)] = cols else {
            return Err(Error::MissingAttribute("vertex x/y/z"));
        };
        Ok((0..x.len()).map(|i| [x[i] as f32, y[i] as f32, z[i] as f32]).collect())
    }

    /// Vertex colors scaled to `[0, 1]`, if present.
    fn colors(&self) -> Result<Option<Vec<[f32; 3]>>> {
        let v = self.vertices()?;
        let cols = ["red", "green", "blue"].map(|n| v.column(n));
        let [Some(r), Some(g), Some(b)] = cols else {
            return Ok(None);
        };
        let scale = |t: &ScalarType| -> f64 {
            match t {
                ScalarType::U8 => 255.0,
                ScalarType::U16 => 65535.0,
                t if t.is_float() => 1.0,
                _ => 255.0,
            }
        };
        let (sr, sg, sb) = (scale(r.0), scale(g.0), scale(b.0));
        Ok(Some(
            (0..r.1.len())
                .map(|i| [(r.1[i] / sr) as f32, (g.1[i] / sg) as f32, (b.1[i] / sb) as f32])
                .collect(),
        ))
    }

    pub fn point_cloud(&self) -> Result<ColoredPointCloud> {
        let positions = self.positions()?;
        let colors = self.colors()?.ok_or(Error::MissingAttribute("vertex red/green/blue"))?;
        ColoredPointCloud::new(positions, colors)
    }

    /// Vertex positions and colors (if any), ignoring faces.
    pub fn points_maybe_colored(&self) -> Result<(Vec<[f32; 3]>, Option<Vec<[f32; 3]>>)> {
        Ok((self.positions()?, self.colors()?))
    }

    pub fn mesh(&self) -> Result<TriangleMesh> {
        let vertices = self.positions()?;
        let vertex_colors = self.colors()?;
        let mut faces = Vec::new();
        if let Some(f) = self.element("face") {
            let lists = f
                .list("vertex_indices")
                .or_else(|| f.list("vertex_index"))
                .ok_or(Error::MissingAttribute("face vertex_indices"))?;
            for poly in lists {
                for k in 1..poly.len().saturating_sub(1) {
                    faces.push([poly[0] as u32, poly[k] as u32, poly[k + 1] as u32]);
                }
            }
        }
        TriangleMesh::new(vertices, vertex_colors, faces)
    }

    pub fn gaussian_cloud(&self) -> Result<GaussianCloud> {
        let v = self.vertices()?;
        let col = |name: &'static str| -> Result<&[f64]> {
            v.column(name).map(|(_, c)| c).ok_or(Error::MissingAttribute(name))
        };
        let positions = self.positions()?;
        let n = positions.len();
        let dc = [col("f_dc_0")?, col("f_dc_1")?, col("f_dc_2")?];
        let opacity = col("opacity")?;
        let scale = [col("scale_0")?, col("scale_1")?, col("scale_2")?];
        let rot = [col("rot_0")?, col("rot_1")?, col("rot_2")?, col("rot_3")?];
        let cloud = GaussianCloud {
            positions,
            colors_dc: (0..n).map(|i| dc.map(|c| c[i] as f32)).collect(),
            opacities_raw: opacity.iter().map(|o| *o as f32).collect(),
            scales_raw: (0..n).map(|i| scale.map(|c| c[i] as f32)).collect(),
            rotations: (0..n).map(|i| rot.map(|c| c[i] as f32)).collect(),
        };
        cloud.validate()?;
        Ok(cloud)
    }
}

fn write_header(
    w: &mut impl Write,
    format: PlyFormat,
    vertex_count: usize,
    vertex_props: &[(&str, &str)],
    face_count: Option<usize>,
) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    match format {
        PlyFormat::Ascii => writeln!(w, "format ascii 1.0")?,
        PlyFormat::BinaryLittleEndian => writeln!(w, "format binary_little_endian 1.0")?,
    }
    writeln!(w, "element vertex {vertex_count}")?;
    for (ty, name) in vertex_props {
        writeln!(w, "property {ty} {name}")?;
    }
    if let Some(n) = face_count {
        writeln!(w, "element face {n}")?;
        writeln!(w, "property list uchar int vertex_indices")?;
    }
    writeln!(w, "end_header")
}

const XYZ_RGB: [(&str, &str); 6] = [
    ("float", "x"),
    ("float", "y"),
    ("float", "z"),
    ("float", "red"),
    ("float", "green"),
    ("float", "blue"),
];

fn write_f32s(w: &mut impl Write, format: PlyFormat, values: &[f32]) -> std::io::Result<()> {
    match format {
        PlyFormat::BinaryLittleEndian => {
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
            Ok(())
        }
        PlyFormat::Ascii => {
            let words: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", words.join(" "))
        }
    }
}

/// Writes positions and float RGB colors.
pub fn write_point_cloud(w: &mut impl Write, pc: &ColoredPointCloud, format: PlyFormat) -> Result<()> {
    write_header(w, format, pc.len(), &XYZ_RGB, None)?;
    for (p, c) in pc.positions.iter().zip(&pc.colors) {
        write_f32s(w, format, &[p[0], p[1], p[2], c[0], c[1], c[2]])?;
    }
    Ok(())
}

pub fn write_mesh(w: &mut impl Write, mesh: &TriangleMesh, format: PlyFormat) -> Result<()> {
    let props: &[(&str, &str)] = if mesh.vertex_colors.is_some() { &XYZ_RGB } else { &XYZ_RGB[..3] };
    write_header(w, format, mesh.vertices.len(), props, Some(mesh.faces.len()))?;
    for (i, p) in mesh.vertices.iter().enumerate() {
        match &mesh.vertex_colors {
            Some(c) => write_f32s(w, format, &[p[0], p[1], p[2], c[i][0], c[i][1], c[i][2]])?,
            None => write_f32s(w, format, p)?,
        }
    }
    for f in &mesh.faces {
        match format {
            PlyFormat::BinaryLittleEndian => {
                w.write_all(&[3u8])?;
                for i in f {
                    w.write_all(&(*i as i32).to_le_bytes())?;
                }
            }
            PlyFormat::Ascii => writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?,
        }
    }
    Ok(())
}

/// Splat property layout read by common 3D-GS viewers.
pub const SPLAT_PROPERTIES: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0",
    "rot_1", "rot_2", "rot_3",
];

/// Writes a binary little-endian 3D-GS splat file. Opacity and scales are
/// stored pre-activation.
pub fn write_splat(w: &mut impl Write, cloud: &GaussianCloud) -> Result<()> {
    cloud.validate()?;
    let props: Vec<(&str, &str)> = SPLAT_PROPERTIES.iter().map(|n| ("float", *n)).collect();
    write_header(w, PlyFormat::BinaryLittleEndian, cloud.len(), &props, None)?;
    let mut buf = Vec::with_capacity(cloud.len() * SPLAT_PROPERTIES.len() * 4);
    for i in 0..cloud.len() {
        let p = cloud.positions[i];
        let c = cloud.colors_dc[i];
        let s = cloud.scales_raw[i];
        let q = cloud.rotations[i];
        for v in [p[0], p[1], p[2], c[0], c[1], c[2], cloud.opacities_raw[i], s[0], s[1], s[2], q[0], q[1], q[2], q[3]] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn splat_to_bytes(cloud: &GaussianCloud) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_splat(&mut out, cloud)?;
    Ok(out)
}
