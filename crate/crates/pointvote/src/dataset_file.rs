//! `PVN1` dataset files.
//!
//! Little-endian throughout. Header: magic `PVN1`, `K` (u32), channel
//! layout (u8, bit 0 = color), balanced flag (u8), seed (u64), points per
//! example (u32), model diameter (f64), record count (u64). Each record is
//! its byte length (u32) followed by the class byte, the scene id (u32), the
//! sphere center (f64 × 3) and then, per point, position (f32 × 3), normal
//! (f32 × 3), curvature (f32), color (f32 × 3, only with the color bit) and
//! segmentation label (u16).

use std::path::Path;

use pointvote_core::dataset::{ExampleMeta, LabeledExample};

use crate::error::{read_file, write_file, Error, Result};

const MAGIC: &[u8; 4] = b"PVN1";
const HEADER_LEN: usize = 4 + 4 + 1 + 1 + 8 + 4 + 8 + 8;
const RECORD_PREFIX: usize = 1 + 4 + 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub keypoints: u32,
    pub color: bool,
    pub balanced: bool,
    pub seed: u64,
    pub points_per_example: u32,
    /// Diameter of the model the labels refer to (mm).
    pub diameter_mm: f64,
}

impl DatasetHeader {
    fn point_size(&self) -> usize {
        4 * 7 + if self.color { 12 } else { 0 } + 2
    }

    fn record_len(&self) -> usize {
        RECORD_PREFIX + self.points_per_example as usize * self.point_size()
    }
}

pub fn encode_dataset(header: &DatasetHeader, examples: &[LabeledExample]) -> std::result::Result<Vec<u8>, String> {
    let n = header.points_per_example as usize;
    let mut out = Vec::with_capacity(HEADER_LEN + examples.len() * (4 + header.record_len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&header.keypoints.to_le_bytes());
    out.push(header.color as u8);
    out.push(header.balanced as u8);
    out.extend_from_slice(&header.seed.to_le_bytes());
    out.extend_from_slice(&header.points_per_example.to_le_bytes());
    out.extend_from_slice(&header.diameter_mm.to_le_bytes());
    out.extend_from_slice(&(examples.len() as u64).to_le_bytes());
    let put3 = |out: &mut Vec<u8>, v: &[f32; 3]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    for (r, e) in examples.iter().enumerate() {
        let consistent = e.len() == n
            && e.normals.len() == n
            && e.curvatures.len() == n
            && e.seg_labels.len() == n
            && e.colors.as_ref().map_or(!header.color, |c| header.color && c.len() == n);
        if !consistent {
            return Err(format!("example {r} does not match the header layout"));
        }
        if e.seg_labels.iter().any(|&l| l as u32 > header.keypoints) {
            return Err(format!("example {r} has a label above K"));
        }
        out.extend_from_slice(&(header.record_len() as u32).to_le_bytes());
        out.push(e.class_label);
        out.extend_from_slice(&e.meta.scene_id.to_le_bytes());
        e.meta.anchor.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        for i in 0..n {
            put3(&mut out, &e.positions[i]);
            put3(&mut out, &e.normals[i]);
            out.extend_from_slice(&e.curvatures[i].to_le_bytes());
            if let Some(c) = &e.colors {
                put3(&mut out, &c[i]);
            }
            out.extend_from_slice(&e.seg_labels[i].to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or("truncated file")?;
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn f32x3(&mut self) -> std::result::Result<[f32; 3], String> {
        Ok([f32::from_le_bytes(self.array()?), f32::from_le_bytes(self.array()?), f32::from_le_bytes(self.array()?)])
    }
}

pub fn decode_dataset(bytes: &[u8]) -> std::result::Result<(DatasetHeader, Vec<LabeledExample>), String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err("not a PVN1 dataset".into());
    }
    let keypoints = u32::from_le_bytes(c.array()?);
    let layout = c.array::<1>()?[0];
    if layout > 1 {
        return Err(format!("unknown channel layout {layout}"));
    }
    let balanced = c.array::<1>()?[0] != 0;
    let seed = u64::from_le_bytes(c.array()?);
    let points_per_example = u32::from_le_bytes(c.array()?);
    let diameter_mm = f64::from_le_bytes(c.array()?);
    let count = u64::from_le_bytes(c.array()?);
    let header = DatasetHeader { keypoints, color: layout == 1, balanced, seed, points_per_example, diameter_mm };
    let n = points_per_example as usize;
    let mut examples = Vec::with_capacity((count as usize).min(bytes.len() / header.record_len().max(1)));
    for r in 0..count {
        let len = u32::from_le_bytes(c.array()?) as usize;
        if len != header.record_len() {
            return Err(format!("record {r} has length {len}, expected {}", header.record_len()));
        }
        let class_label = c.array::<1>()?[0];
        if class_label > 1 {
            return Err(format!("record {r} has class {class_label}"));
        }
        let scene_id = u32::from_le_bytes(c.array()?);
        let anchor = [f64::from_le_bytes(c.array()?), f64::from_le_bytes(c.array()?), f64::from_le_bytes(c.array()?)];
        let mut e = LabeledExample {
            positions: Vec::with_capacity(n),
            normals: Vec::with_capacity(n),
            curvatures: Vec::with_capacity(n),
            colors: header.color.then(|| Vec::with_capacity(n)),
            seg_labels: Vec::with_capacity(n),
            class_label,
            meta: ExampleMeta { scene_id, anchor },
        };
        for _ in 0..n {
            e.positions.push(c.f32x3()?);
            e.normals.push(c.f32x3()?);
            e.curvatures.push(f32::from_le_bytes(c.array()?));
            if let Some(colors) = &mut e.colors {
                colors.push(c.f32x3()?);
            }
            let label = u16::from_le_bytes(c.array()?);
            if label as u32 > keypoints {
                return Err(format!("record {r} has label {label} above K = {keypoints}"));
            }
            e.seg_labels.push(label);
        }
        examples.push(e);
    }
    if c.pos != bytes.len() {
        return Err("trailing bytes after the last record".into());
    }
    Ok((header, examples))
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, examples: &[LabeledExample]) -> Result<()> {
    let bytes = encode_dataset(header, examples).map_err(|m| Error::format(path, m))?;
    write_file(path, &bytes)
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<LabeledExample>)> {
    let bytes = read_file(path)?;
    decode_dataset(&bytes).map_err(|m| Error::format(path, m))
}
