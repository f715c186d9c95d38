//! PLY point clouds: ASCII and binary (either byte order) in, ASCII or
//! binary little-endian out.
//!
//! Recognized vertex properties are `x y z`, `nx ny nz`, `curvature` and
//! `red green blue`. Integer colors are mapped to `[0, 1]` by their type's
//! maximum, float colors are taken as they are. Other properties are read
//! and kept by name. A `face` element with a `vertex_indices` list is read
//! as polygons and fan-triangulated.

use std::io::Write as _;
use std::path::Path;

use pointvote_core::{PointCloud, Vec3};

use crate::error::{read_file, write_file, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    /// Largest value of an integer type, the full-intensity color.
    fn color_max(self) -> Option<f64> {
        match self {
            Scalar::U8 => Some(255.0),
            Scalar::U16 => Some(65535.0),
            Scalar::I8 => Some(127.0),
            Scalar::I16 => Some(32767.0),
            Scalar::I32 => Some(i32::MAX as f64),
            Scalar::U32 => Some(u32::MAX as f64),
            Scalar::F32 | Scalar::F64 => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    Binary { little: bool },
}

/// Contents of a PLY file.
#[derive(Debug, Clone, Default)]
pub struct PlyData {
    pub cloud: PointCloud,
    /// Vertex properties other than the recognized ones, by name.
    pub extra: Vec<(String, Vec<f64>)>,
    /// Triangles from the `face` element, if any.
    pub faces: Vec<[usize; 3]>,
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let bytes = read_file(path)?;
    parse_ply(&bytes).map_err(|m| Error::format(path, m))
}

/// Reads a PLY file's vertices as a cloud.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    Ok(read_ply(path)?.cloud)
}

fn parse_header(bytes: &[u8]) -> std::result::Result<(Format, Vec<Element>, usize), String> {
    let mut elements: Vec<Element> = Vec::new();
    let mut format = None;
    let mut pos = 0;
    let mut first = true;
    loop {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or("header is not terminated by end_header")?;
        let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| "header is not text")?.trim_end_matches('\r');
        pos += end + 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        if first {
            if words != ["ply"] {
                return Err("missing 'ply' magic".into());
            }
            first = false;
            continue;
        }
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", kind, _version] => {
                format = Some(match *kind {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::Binary { little: true },
                    "binary_big_endian" => Format::Binary { little: false },
                    other => return Err(format!("unknown format '{other}'")),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| format!("bad element count '{count}'"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let count = Scalar::parse(count).ok_or_else(|| format!("unknown type '{count}'"))?;
                let item = Scalar::parse(item).ok_or_else(|| format!("unknown type '{item}'"))?;
                let element = elements.last_mut().ok_or("property before any element")?;
                element.properties.push(Property::List { name: name.to_string(), count, item });
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| format!("unknown type '{ty}'"))?;
                let element = elements.last_mut().ok_or("property before any element")?;
                element.properties.push(Property::Scalar { name: name.to_string(), ty });
            }
            _ => return Err(format!("unrecognized header line '{line}'")),
        }
    }
    Ok((format.ok_or("missing format line")?, elements, pos))
}

/// Sequential reader over the body, in either encoding.
struct Body<'a> {
    bytes: &'a [u8],
    pos: usize,
    format: Format,
}

impl Body<'_> {
    fn next_token(&mut self) -> std::result::Result<&str, String> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err("unexpected end of data".into());
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| "non-text data in ASCII body".into())
    }

    fn scalar(&mut self, ty: Scalar) -> std::result::Result<f64, String> {
        let little = match self.format {
            Format::Ascii => {
                let t = self.next_token()?;
                return t.parse::<f64>().map_err(|_| format!("bad number '{t}'"));
            }
            Format::Binary { little } => little,
        };
        let n = ty.size();
        let raw = self.bytes.get(self.pos..self.pos + n).ok_or("unexpected end of data")?;
        self.pos += n;
        let mut buf = [0u8; 8];
        buf[..n].copy_from_slice(raw);
        if !little {
            buf[..n].reverse();
        }
        Ok(match ty {
            Scalar::I8 => buf[0] as i8 as f64,
            Scalar::U8 => buf[0] as f64,
            Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(buf),
        })
    }
}

fn parse_ply(bytes: &[u8]) -> std::result::Result<PlyData, String> {
    let (format, elements, start) = parse_header(bytes)?;
    let mut body = Body { bytes, pos: start, format };
    let mut columns: Vec<(String, Scalar, Vec<f64>)> = Vec::new();
    let mut faces = Vec::new();
    let mut have_vertices = false;
    for element in &elements {
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        if is_vertex {
            have_vertices = true;
            columns = element
                .properties
                .iter()
                .filter_map(|p| match p {
                    Property::Scalar { name, ty } => Some((name.clone(), *ty, Vec::with_capacity(element.count))),
                    Property::List { .. } => None,
                })
                .collect();
        }
        for _ in 0..element.count {
            let mut column = 0;
            for p in &element.properties {
                match p {
                    Property::Scalar { ty, .. } => {
                        let v = body.scalar(*ty)?;
                        if is_vertex {
                            columns[column].2.push(v);
                            column += 1;
                        }
                    }
                    Property::List { name, count, item } => {
                        let n = body.scalar(*count)?;
                        if !(n >= 0.0) {
                            return Err("negative list length".into());
                        }
                        let items: Vec<f64> = (0..n as usize).map(|_| body.scalar(*item)).collect::<std::result::Result<_, _>>()?;
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            for k in 1..items.len().saturating_sub(1) {
                                faces.push([items[0] as usize, items[k] as usize, items[k + 1] as usize]);
                            }
                        }
                    }
                }
            }
        }
    }
    if !have_vertices {
        return Err("no vertex element".into());
    }
    let vertex_count = columns.first().map_or(0, |c| c.2.len());
    if faces.iter().flatten().any(|&i| i >= vertex_count) {
        return Err("face refers to a missing vertex".into());
    }
    let take = |columns: &mut Vec<(String, Scalar, Vec<f64>)>, name: &str| {
        columns.iter().position(|c| c.0 == name).map(|i| columns.remove(i))
    };
    let triple = |columns: &mut Vec<(String, Scalar, Vec<f64>)>, names: [&str; 3]| {
        let found: Vec<_> = names.iter().filter_map(|n| take(columns, n)).collect();
        match found.len() {
            0 => Ok(None),
            3 => Ok(Some((found[0].1, found[0].2.iter().zip(&found[1].2).zip(&found[2].2).map(|((&x, &y), &z)| Vec3::new(x, y, z)).collect::<Vec<_>>()))),
            _ => Err(format!("incomplete property group {names:?}")),
        }
    };
    let (_, positions) = triple(&mut columns, ["x", "y", "z"])?.ok_or("vertices lack x, y, z")?;
    let normals = triple(&mut columns, ["nx", "ny", "nz"])?.map(|(_, n)| {
        n.into_iter().map(|v| if v.norm() > 0.0 { v.normalize() } else { v }).collect::<Vec<_>>()
    });
    let curvatures = take(&mut columns, "curvature").map(|c| c.2);
    let colors = triple(&mut columns, ["red", "green", "blue"])?.map(|(ty, c)| {
        let scale = ty.color_max().map_or(1.0, |m| 1.0 / m);
        c.into_iter().map(|v| (v * scale).map(|x| x.clamp(0.0, 1.0))).collect::<Vec<_>>()
    });
    let (normals, curvatures) = match (normals, curvatures) {
        (Some(n), Some(c)) => (Some(n), Some(c)),
        (Some(n), None) => (Some(n), None),
        (None, Some(c)) => {
            columns.push(("curvature".into(), Scalar::F64, c));
            (None, None)
        }
        (None, None) => (None, None),
    };
    let cloud = PointCloud::from_columns(positions, normals, curvatures, colors).map_err(|e| e.to_string())?;
    let extra = columns.into_iter().map(|(name, _, values)| (name, values)).collect();
    Ok(PlyData { cloud, extra, faces })
}

/// Writes `cloud` with its channels plus `extra` per-vertex scalars (each
/// the length of the cloud). Geometry is written as `double`, colors as
/// `uchar`.
pub fn write_ply(path: &Path, cloud: &PointCloud, extra: &[(&str, &[f64])], encoding: Encoding) -> Result<()> {
    let bytes = encode_ply(cloud, extra, encoding).map_err(|m| Error::format(path, m))?;
    write_file(path, &bytes)
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_ply(path, cloud, &[], Encoding::BinaryLittleEndian)
}

pub fn encode_ply(cloud: &PointCloud, extra: &[(&str, &[f64])], encoding: Encoding) -> std::result::Result<Vec<u8>, String> {
    let n = cloud.len();
    if let Some((name, _)) = extra.iter().find(|(_, v)| v.len() != n) {
        return Err(format!("extra property '{name}' has the wrong length"));
    }
    let mut out = Vec::new();
    let format = match encoding {
        Encoding::Ascii => "ascii",
        Encoding::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!("ply\nformat {format} 1.0\nelement vertex {n}\n");
    header += "property double x\nproperty double y\nproperty double z\n";
    if cloud.normals().is_some() {
        header += "property double nx\nproperty double ny\nproperty double nz\n";
    }
    if cloud.curvatures().is_some() {
        header += "property double curvature\n";
    }
    if cloud.colors().is_some() {
        header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    for (name, _) in extra {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(format!("invalid property name '{name}'"));
        }
        header += &format!("property double {name}\n");
    }
    header += "end_header\n";
    out.extend_from_slice(header.as_bytes());

    let to_u8 = |c: f64| (c.clamp(0.0, 1.0) * 255.0).round() as u8;
    for i in 0..n {
        let mut reals: Vec<f64> = Vec::with_capacity(12);
        reals.extend(cloud.positions()[i].iter());
        if let Some(nr) = cloud.normals() {
            reals.extend(nr[i].iter());
        }
        if let Some(c) = cloud.curvatures() {
            reals.push(c[i]);
        }
        let color = cloud.colors().map(|c| [to_u8(c[i].x), to_u8(c[i].y), to_u8(c[i].z)]);
        let extras = extra.iter().map(|(_, v)| v[i]);
        match encoding {
            Encoding::Ascii => {
                let mut fields: Vec<String> = reals.iter().map(|v| format!("{v:?}")).collect();
                if let Some(c) = color {
                    fields.extend(c.iter().map(|b| b.to_string()));
                }
                fields.extend(extras.map(|v| format!("{v:?}")));
                writeln!(out, "{}", fields.join(" ")).expect("writing to a Vec");
            }
            Encoding::BinaryLittleEndian => {
                for v in reals {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(c) = color {
                    out.extend_from_slice(&c);
                }
                for v in extras {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}
