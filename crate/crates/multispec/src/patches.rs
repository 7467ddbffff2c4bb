//! ASCP patch files: aligned log-Mel/gammatone/CQT patch triples together
//! with the front-end settings that produced them.
//!
//! Layout (little-endian): `"ASCP"`, `u16` version, `u32` sample rate,
//! `f64` window ms, `f64` hop ms, `f64` log floor, `u8` normalization flag,
//! three `(f32 mean, f32 std)` pairs, `u32` triple count, then per triple a
//! `u32`-prefixed segment id, `u32` patch index, `i32` class (-1 if
//! unlabelled), `u8` device flag with optional `u32`-prefixed device id and
//! `3 * 128 * 128` `f32` values in log-Mel, gammatone, CQT order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use multispec_core::dsp::{PatchKey, SpectrogramConfig, ZScore};
use multispec_core::encoder::AlignedPatches;
use multispec_core::PATCH_SIZE;

use crate::codec::{read_f32s, read_header, read_str, write_f32s, write_header, write_str};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ASCP";
pub const VERSION: u16 = 1;
const PATCH_LEN: usize = PATCH_SIZE * PATCH_SIZE;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchFile {
    pub spectrogram: SpectrogramConfig,
    pub sample_rate: u32,
    /// Statistics already applied to the stored values.
    pub normalizers: Option<[ZScore; 3]>,
    pub data: AlignedPatches,
}

pub fn save_patches(path: impl AsRef<Path>, file: &PatchFile) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(Error::io(path))?);
    write_file(&mut w, file).and_then(|_| w.flush()).map_err(Error::io(path))
}

fn write_file<W: Write>(w: &mut W, f: &PatchFile) -> std::io::Result<()> {
    write_header(w, MAGIC, VERSION)?;
    w.write_u32::<LE>(f.sample_rate)?;
    w.write_f64::<LE>(f.spectrogram.window_ms)?;
    w.write_f64::<LE>(f.spectrogram.hop_ms)?;
    w.write_f64::<LE>(f.spectrogram.log_floor)?;
    w.write_u8(f.normalizers.is_some() as u8)?;
    let z = f.normalizers.unwrap_or([ZScore { mean: 0.0, std: 1.0 }; 3]);
    for s in z {
        w.write_f32::<LE>(s.mean)?;
        w.write_f32::<LE>(s.std)?;
    }
    let d = &f.data;
    w.write_u32::<LE>(d.len() as u32)?;
    for i in 0..d.len() {
        write_str(w, &d.keys[i].segment_id)?;
        w.write_u32::<LE>(d.keys[i].index as u32)?;
        w.write_i32::<LE>(d.labels[i].map_or(-1, |c| c as i32))?;
        match &d.devices[i] {
            Some(dev) => {
                w.write_u8(1)?;
                write_str(w, dev)?;
            }
            None => w.write_u8(0)?,
        }
        for k in 0..3 {
            write_f32s(w, &d.patches[k][i])?;
        }
    }
    Ok(())
}

pub fn load_patches(path: impl AsRef<Path>) -> Result<PatchFile> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(Error::io(path))?);
    read_header(&mut r, MAGIC, VERSION).map_err(|m| Error::format(path, m))?;
    read_file(&mut r).map_err(|e| Error::format(path, e))
}

fn read_file<R: Read>(r: &mut R) -> std::result::Result<PatchFile, String> {
    let s = |e: std::io::Error| e.to_string();
    let sample_rate = r.read_u32::<LE>().map_err(s)?;
    let spectrogram = SpectrogramConfig {
        window_ms: r.read_f64::<LE>().map_err(s)?,
        hop_ms: r.read_f64::<LE>().map_err(s)?,
        log_floor: r.read_f64::<LE>().map_err(s)?,
        ..SpectrogramConfig::default()
    };
    let normalize = r.read_u8().map_err(s)? != 0;
    let mut z = [ZScore { mean: 0.0, std: 1.0 }; 3];
    for zk in &mut z {
        zk.mean = r.read_f32::<LE>().map_err(s)?;
        zk.std = r.read_f32::<LE>().map_err(s)?;
    }
    let spectrogram = SpectrogramConfig { normalize, ..spectrogram };
    let n = r.read_u32::<LE>().map_err(s)? as usize;
    let mut data = AlignedPatches::default();
    for i in 0..n {
        let segment_id = read_str(r).map_err(s)?;
        let index = r.read_u32::<LE>().map_err(s)? as usize;
        let label = r.read_i32::<LE>().map_err(s)?;
        let device = match r.read_u8().map_err(s)? {
            0 => None,
            1 => Some(read_str(r).map_err(s)?),
            f => return Err(format!("triple {i}: bad device flag {f}")),
        };
        data.keys.push(PatchKey { segment_id, index });
        data.labels.push((label >= 0).then_some(label as usize));
        data.devices.push(device);
        for k in 0..3 {
            data.patches[k].push(read_f32s(r, PATCH_LEN).map_err(s)?);
        }
    }
    Ok(PatchFile {
        spectrogram,
        sample_rate,
        normalizers: normalize.then_some(z),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut data = AlignedPatches::default();
        for i in 0..3 {
            data.keys.push(PatchKey {
                segment_id: format!("s{i}"),
                index: i,
            });
            data.labels.push((i != 1).then_some(i));
            data.devices.push((i == 2).then(|| "C".into()));
            for k in 0..3 {
                data.patches[k].push((0..PATCH_LEN).map(|v| (v * (k + 1) + i) as f32 * 1e-3).collect());
            }
        }
        let file = PatchFile {
            spectrogram: SpectrogramConfig {
                normalize: true,
                ..SpectrogramConfig::default()
            },
            sample_rate: 16_000,
            normalizers: Some([ZScore { mean: -3.0, std: 2.0 }; 3]),
            data,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.ascp");
        save_patches(&p, &file).unwrap();
        assert_eq!(load_patches(&p).unwrap(), file);
        std::fs::write(&p, b"ASCF\x01\x00").unwrap();
        assert!(load_patches(&p).is_err());
    }
}
