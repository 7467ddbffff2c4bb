//! ASCF feature files: 256-d encoder outputs with soft labels.
//!
//! Layout (little-endian): `"ASCF"`, `u16` version, `u32` record count,
//! `u32` label width `C`, then per record a `u32`-prefixed UTF-8 segment id,
//! `u32` patch index, `u8` source, `u8` device flag with an optional
//! `u32`-prefixed device id, 256 `f32` values and `C` `f32` label weights.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use multispec_core::encoder::FeatureSource;
use multispec_core::FEATURE_DIM;

use crate::codec::{read_f32s, read_header, read_str, write_f32s, write_header, write_str};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ASCF";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub segment_id: String,
    pub patch_index: u32,
    pub source: FeatureSource,
    pub values: Vec<f32>,
    pub label: Vec<f32>,
    pub device_id: Option<String>,
}

pub fn save_features(path: impl AsRef<Path>, records: &[FeatureRecord], classes: usize) -> Result<()> {
    let path = path.as_ref();
    for r in records {
        if r.values.len() != FEATURE_DIM || r.label.len() != classes {
            return Err(Error::format(
                path,
                format!(
                    "record {}#{}: expected {FEATURE_DIM} values and {classes} label weights, got {} and {}",
                    r.segment_id,
                    r.patch_index,
                    r.values.len(),
                    r.label.len()
                ),
            ));
        }
    }
    let io = Error::io(path);
    let mut w = BufWriter::new(File::create(path).map_err(Error::io(path))?);
    write_records(&mut w, records, classes).and_then(|_| w.flush()).map_err(io)
}

fn write_records<W: Write>(w: &mut W, records: &[FeatureRecord], classes: usize) -> std::io::Result<()> {
    write_header(w, MAGIC, VERSION)?;
    w.write_u32::<LE>(records.len() as u32)?;
    w.write_u32::<LE>(classes as u32)?;
    for r in records {
        write_str(w, &r.segment_id)?;
        w.write_u32::<LE>(r.patch_index)?;
        w.write_u8(r.source.index() as u8)?;
        match &r.device_id {
            Some(d) => {
                w.write_u8(1)?;
                write_str(w, d)?;
            }
            None => w.write_u8(0)?,
        }
        write_f32s(w, &r.values)?;
        write_f32s(w, &r.label)?;
    }
    Ok(())
}

/// Records and the label width.
pub fn load_features(path: impl AsRef<Path>) -> Result<(Vec<FeatureRecord>, usize)> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(Error::io(path))?);
    read_header(&mut r, MAGIC, VERSION).map_err(|m| Error::format(path, m))?;
    read_records(&mut r).map_err(|e| Error::format(path, e))
}

fn read_records<R: Read>(r: &mut R) -> std::result::Result<(Vec<FeatureRecord>, usize), String> {
    let s = |e: std::io::Error| e.to_string();
    let n = r.read_u32::<LE>().map_err(s)? as usize;
    let classes = r.read_u32::<LE>().map_err(s)? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let segment_id = read_str(r).map_err(s)?;
        let patch_index = r.read_u32::<LE>().map_err(s)?;
        let src = r.read_u8().map_err(s)? as usize;
        let source = *FeatureSource::ALL.get(src).ok_or_else(|| format!("record {i}: bad source {src}"))?;
        let device_id = match r.read_u8().map_err(s)? {
            0 => None,
            1 => Some(read_str(r).map_err(s)?),
            f => return Err(format!("record {i}: bad device flag {f}")),
        };
        out.push(FeatureRecord {
            segment_id,
            patch_index,
            source,
            values: read_f32s(r, FEATURE_DIM).map_err(s)?,
            label: read_f32s(r, classes).map_err(s)?,
            device_id,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(s)? != 0 {
        return Err("trailing bytes after the last record".into());
    }
    Ok((out, classes))
}
