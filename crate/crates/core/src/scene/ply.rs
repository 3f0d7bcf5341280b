//! PLY reader/writer for `x y z` (float or double) plus `red green blue`
//! (uchar) vertex properties, ASCII or binary little-endian.
//!
//! Positions are written as doubles so a save/load round trip is bit-exact;
//! colors are quantized to 8 bits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::PointCloud;
use crate::geom::Vec3;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ScalarType {
    F32,
    F64,
    U8,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        match name {
            "float" | "float32" => Some(ScalarType::F32),
            "double" | "float64" => Some(ScalarType::F64),
            "uchar" | "uint8" => Some(ScalarType::U8),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            ScalarType::F32 => 4,
            ScalarType::F64 => 8,
            ScalarType::U8 => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Field {
    X,
    Y,
    Z,
    Red,
    Green,
    Blue,
}

impl Field {
    fn parse(name: &str) -> Option<Self> {
        match name {
            "x" => Some(Field::X),
            "y" => Some(Field::Y),
            "z" => Some(Field::Z),
            "red" => Some(Field::Red),
            "green" => Some(Field::Green),
            "blue" => Some(Field::Blue),
            _ => None,
        }
    }

    fn is_color(self) -> bool {
        matches!(self, Field::Red | Field::Green | Field::Blue)
    }
}

struct Header {
    format: PlyFormat,
    vertex_count: usize,
    properties: Vec<(Field, ScalarType)>,
    /// Byte length of the header including the `end_header` line.
    len: usize,
}

fn err(offset: usize, message: impl Into<String>) -> Error {
    Error::Ply {
        offset,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let next_line = |offset: &mut usize| -> Result<(usize, String)> {
        let start = *offset;
        let rest = &bytes[start..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| err(start, "unterminated header"))?;
        *offset = start + end + 1;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| err(start, "header is not UTF-8"))?;
        Ok((start, line.trim_end_matches('\r').trim().to_string()))
    };

    let (_, magic) = next_line(&mut offset).map_err(|_| err(0, "missing ply magic"))?;
    if magic != "ply" {
        return Err(err(0, format!("expected magic \"ply\", found {magic:?}")));
    }
    let mut format = None;
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut properties: Vec<(Field, ScalarType)> = Vec::new();
    loop {
        let (at, line) = next_line(&mut offset)?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                format = Some(match (tok.next(), tok.next()) {
                    (Some("ascii"), Some("1.0")) => PlyFormat::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => PlyFormat::BinaryLittleEndian,
                    (f, v) => return Err(err(at, format!("unsupported format {f:?} {v:?}"))),
                });
            }
            Some("element") => {
                let name = tok.next().ok_or_else(|| err(at, "element without name"))?;
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err(at, "element without a valid count"))?;
                match name {
                    "vertex" if vertex_count.is_none() => {
                        vertex_count = Some(count);
                        in_vertex = true;
                    }
                    _ if count == 0 => in_vertex = false,
                    _ => return Err(err(at, format!("unsupported element {name:?}"))),
                }
            }
            Some("property") => {
                let ty = tok.next().ok_or_else(|| err(at, "property without type"))?;
                if !in_vertex {
                    continue;
                }
                if ty == "list" {
                    return Err(err(at, "list properties are not supported"));
                }
                let ty = ScalarType::parse(ty).ok_or_else(|| err(at, format!("unsupported property type {ty:?}")))?;
                let name = tok.next().ok_or_else(|| err(at, "property without name"))?;
                let field = Field::parse(name).ok_or_else(|| err(at, format!("unsupported property {name:?}")))?;
                let ok = if field.is_color() {
                    ty == ScalarType::U8
                } else {
                    ty != ScalarType::U8
                };
                if !ok {
                    return Err(err(at, format!("unsupported type for property {name:?}")));
                }
                if properties.iter().any(|(f, _)| *f == field) {
                    return Err(err(at, format!("duplicate property {name:?}")));
                }
                properties.push((field, ty));
            }
            Some("end_header") => break,
            Some(other) => return Err(err(at, format!("unexpected header keyword {other:?}"))),
        }
    }
    let format = format.ok_or_else(|| err(offset, "missing format line"))?;
    let vertex_count = vertex_count.ok_or_else(|| err(offset, "missing vertex element"))?;
    for f in [Field::X, Field::Y, Field::Z, Field::Red, Field::Green, Field::Blue] {
        if !properties.iter().any(|(g, _)| *g == f) {
            return Err(err(offset, format!("missing vertex property {f:?}")));
        }
    }
    Ok(Header {
        format,
        vertex_count,
        properties,
        len: offset,
    })
}

fn assign(field: Field, value: f64, pos: &mut [f64; 3], color: &mut [f64; 3]) {
    match field {
        Field::X => pos[0] = value,
        Field::Y => pos[1] = value,
        Field::Z => pos[2] = value,
        Field::Red => color[0] = value / 255.0,
        Field::Green => color[1] = value / 255.0,
        Field::Blue => color[2] = value / 255.0,
    }
}

/// Parses a complete PLY file held in memory.
pub fn read_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let mut cloud = PointCloud {
        positions: Vec::with_capacity(header.vertex_count),
        colors: Vec::with_capacity(header.vertex_count),
    };
    match header.format {
        PlyFormat::BinaryLittleEndian => {
            let stride: usize = header.properties.iter().map(|(_, t)| t.size()).sum();
            let body = &bytes[header.len..];
            for v in 0..header.vertex_count {
                let start = v * stride;
                if body.len() < start + stride {
                    return Err(err(header.len + start, format!("truncated payload in vertex {v}")));
                }
                let mut at = start;
                let (mut pos, mut color) = ([0.0; 3], [0.0; 3]);
                for &(field, ty) in &header.properties {
                    let raw = &body[at..at + ty.size()];
                    let value = match ty {
                        ScalarType::F32 => f32::from_le_bytes(raw.try_into().unwrap()) as f64,
                        ScalarType::F64 => f64::from_le_bytes(raw.try_into().unwrap()),
                        ScalarType::U8 => raw[0] as f64,
                    };
                    assign(field, value, &mut pos, &mut color);
                    at += ty.size();
                }
                cloud.push(Vec3::from(pos), color);
            }
        }
        PlyFormat::Ascii => {
            let mut offset = header.len;
            let text = &bytes[header.len..];
            let mut lines = text.split(|&b| b == b'\n');
            for v in 0..header.vertex_count {
                let line = loop {
                    let Some(line) = lines.next() else {
                        return Err(err(offset, format!("truncated payload in vertex {v}")));
                    };
                    let at = offset;
                    offset += line.len() + 1;
                    let s = std::str::from_utf8(line).map_err(|_| err(at, "vertex line is not UTF-8"))?;
                    if !s.trim().is_empty() {
                        break (at, s.trim().to_string());
                    }
                };
                let (at, line) = line;
                let values: Vec<&str> = line.split_whitespace().collect();
                if values.len() != header.properties.len() {
                    return Err(err(
                        at,
                        format!("vertex {v}: expected {} values, found {}", header.properties.len(), values.len()),
                    ));
                }
                let (mut pos, mut color) = ([0.0; 3], [0.0; 3]);
                for (&(field, ty), tok) in header.properties.iter().zip(values) {
                    let value = if ty == ScalarType::U8 {
                        tok.parse::<u8>().map(f64::from).ok()
                    } else {
                        tok.parse::<f64>().ok()
                    }
                    .ok_or_else(|| err(at, format!("vertex {v}: bad value {tok:?}")))?;
                    assign(field, value, &mut pos, &mut color);
                }
                cloud.push(Vec3::from(pos), color);
            }
        }
    }
    if let Some(index) = cloud.positions.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinitePoint { index });
    }
    Ok(cloud)
}

fn quantize(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_ply<W: Write>(cloud: &PointCloud, format: PlyFormat, mut w: W) -> std::io::Result<()> {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        w,
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )?;
    for (p, c) in cloud.positions.iter().zip(&cloud.colors) {
        match format {
            PlyFormat::Ascii => {
                // `{:?}` prints the shortest representation that parses back to the same f64.
                writeln!(w, "{:?} {:?} {:?} {} {} {}", p.x, p.y, p.z, quantize(c[0]), quantize(c[1]), quantize(c[2]))?;
            }
            PlyFormat::BinaryLittleEndian => {
                for v in [p.x, p.y, p.z] {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.write_all(&[quantize(c[0]), quantize(c[1]), quantize(c[2])])?;
            }
        }
    }
    w.flush()
}

pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_ply(cloud, format, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    read_ply(&bytes)
}
