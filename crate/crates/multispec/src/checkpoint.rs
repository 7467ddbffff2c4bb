//! ASCK checkpoint files: a model's architecture line, its named tensors,
//! the configuration that produced it and any deviation flags.
//!
//! Layout (little-endian): `"ASCK"`, `u16` version, then `u32`-prefixed
//! strings for kind, descriptor and config snapshot, a `u32` count of flag
//! strings, a `u32` count of `(key, value)` string pairs, and a `u32` count of
//! tensors. Each tensor is a name, a `u8` dtype (0 = f32, 1 = u32), a `u32`
//! rank, `u32` dims and the raw elements.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use multispec_core::decoders::DecoderModel;
use multispec_core::dsp::{SpectrogramConfig, ZScore};
use multispec_core::encoder::{EncoderConfig, EncoderModel, FeatureSource};
use multispec_core::nn::{NamedTensor, StateDict, TensorData};

use crate::codec::{read_f32s, read_header, read_str, read_u32s, write_f32s, write_header, write_str, write_u32s};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ASCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub kind: String,
    pub descriptor: String,
    pub config: String,
    pub flags: Vec<String>,
    pub meta: BTreeMap<String, String>,
    pub state: StateDict,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(Error::io(path))?);
        self.write(&mut w).and_then(|_| w.flush()).map_err(Error::io(path))
    }

    fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_header(w, MAGIC, VERSION)?;
        write_str(w, &self.kind)?;
        write_str(w, &self.descriptor)?;
        write_str(w, &self.config)?;
        w.write_u32::<LE>(self.flags.len() as u32)?;
        for f in &self.flags {
            write_str(w, f)?;
        }
        w.write_u32::<LE>(self.meta.len() as u32)?;
        for (k, v) in &self.meta {
            write_str(w, k)?;
            write_str(w, v)?;
        }
        w.write_u32::<LE>(self.state.len() as u32)?;
        for t in self.state.iter() {
            write_str(w, &t.name)?;
            w.write_u8(match t.data {
                TensorData::F32(_) => 0,
                TensorData::U32(_) => 1,
            })?;
            w.write_u32::<LE>(t.shape.len() as u32)?;
            for &d in &t.shape {
                w.write_u32::<LE>(d as u32)?;
            }
            match &t.data {
                TensorData::F32(v) => write_f32s(w, v)?,
                TensorData::U32(v) => write_u32s(w, v)?,
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path).map_err(Error::io(path))?);
        read_header(&mut r, MAGIC, VERSION).map_err(|m| Error::format(path, m))?;
        Self::read(&mut r).map_err(|m| Error::format(path, m))
    }

    fn read<R: Read>(r: &mut R) -> std::result::Result<Self, String> {
        let s = |e: std::io::Error| e.to_string();
        let kind = read_str(r).map_err(s)?;
        let descriptor = read_str(r).map_err(s)?;
        let config = read_str(r).map_err(s)?;
        let n_flags = r.read_u32::<LE>().map_err(s)?;
        let flags = (0..n_flags).map(|_| read_str(r)).collect::<std::io::Result<_>>().map_err(s)?;
        let n_meta = r.read_u32::<LE>().map_err(s)?;
        let mut meta = BTreeMap::new();
        for _ in 0..n_meta {
            let k = read_str(r).map_err(s)?;
            meta.insert(k, read_str(r).map_err(s)?);
        }
        let n = r.read_u32::<LE>().map_err(s)?;
        let mut state = StateDict::new();
        for _ in 0..n {
            let name = read_str(r).map_err(s)?;
            let dtype = r.read_u8().map_err(s)?;
            let rank = r.read_u32::<LE>().map_err(s)? as usize;
            let shape: Vec<usize> = read_u32s(r, rank).map_err(s)?.into_iter().map(|d| d as usize).collect();
            let len: usize = shape.iter().product();
            let data = match dtype {
                0 => TensorData::F32(read_f32s(r, len).map_err(s)?),
                1 => TensorData::U32(read_u32s(r, len).map_err(s)?),
                d => return Err(format!("tensor {name}: unknown dtype {d}")),
            };
            state.push(NamedTensor { name, shape, data }).map_err(|e| e.to_string())?;
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(s)? != 0 {
            return Err("trailing bytes after the last tensor".into());
        }
        Ok(Self {
            kind,
            descriptor,
            config,
            flags,
            meta,
            state,
        })
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Config(format!("expected a {kind} checkpoint, found '{}'", self.kind)));
        }
        Ok(())
    }

    fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("{} checkpoint lacks '{key}'", self.kind)))
    }
}

/// Front-end settings an encoder was trained with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontendInfo {
    pub spectrogram: SpectrogramConfig,
    pub sample_rate: u32,
    pub normalizers: Option<[ZScore; 3]>,
}

impl FrontendInfo {
    fn describe(&self) -> String {
        let c = &self.spectrogram;
        format!(
            "sample_rate={} window_ms={} hop_ms={} log_floor={}",
            self.sample_rate, c.window_ms, c.hop_ms, c.log_floor
        )
    }

    fn parse(s: &str) -> Result<(SpectrogramConfig, u32)> {
        let bad = |k: &str| Error::Config(format!("bad front-end field '{k}' in '{s}'"));
        let mut cfg = SpectrogramConfig::default();
        let mut sr = 0;
        for w in s.split_whitespace() {
            let (k, v) = w.split_once('=').ok_or_else(|| bad(w))?;
            match k {
                "sample_rate" => sr = v.parse().map_err(|_| bad(k))?,
                "window_ms" => cfg.window_ms = v.parse().map_err(|_| bad(k))?,
                "hop_ms" => cfg.hop_ms = v.parse().map_err(|_| bad(k))?,
                "log_floor" => cfg.log_floor = v.parse().map_err(|_| bad(k))?,
                _ => return Err(bad(k)),
            }
        }
        Ok((cfg, sr))
    }
}

pub fn encoder_checkpoint(model: &EncoderModel, frontend: &FrontendInfo, config: &str, flags: &[String]) -> Result<Checkpoint> {
    let mut state = model.save_state()?;
    if let Some(z) = &frontend.normalizers {
        state.push_f32("frontend.zscore", &[3, 2], z.iter().flat_map(|z| [z.mean, z.std]).collect())?;
    }
    Ok(Checkpoint {
        kind: "encoder".into(),
        descriptor: model.config().descriptor(),
        config: config.into(),
        flags: flags.to_vec(),
        meta: BTreeMap::from([("frontend".into(), frontend.describe())]),
        state,
    })
}

pub fn restore_encoder(ck: &Checkpoint) -> Result<(EncoderModel, FrontendInfo)> {
    ck.expect_kind("encoder")?;
    let config = EncoderConfig::from_descriptor(&ck.descriptor)?;
    let model = EncoderModel::from_state(config, &ck.state)?;
    let (mut spectrogram, sample_rate) = FrontendInfo::parse(ck.meta("frontend")?)?;
    let normalizers = match ck.state.get("frontend.zscore") {
        Ok(_) => {
            let v = ck.state.f32("frontend.zscore", &[3, 2])?;
            spectrogram.normalize = true;
            Some(std::array::from_fn(|k| ZScore {
                mean: v[2 * k],
                std: v[2 * k + 1],
            }))
        }
        Err(_) => None,
    };
    Ok((
        model,
        FrontendInfo {
            spectrogram,
            sample_rate,
            normalizers,
        },
    ))
}

pub fn decoder_checkpoint(model: &DecoderModel, source: FeatureSource, config: &str, flags: &[String]) -> Result<Checkpoint> {
    Ok(Checkpoint {
        kind: "decoder".into(),
        descriptor: model.descriptor(),
        config: config.into(),
        flags: flags.to_vec(),
        meta: BTreeMap::from([("source".into(), source.name().into())]),
        state: model.save_state()?,
    })
}

pub fn restore_decoder(ck: &Checkpoint) -> Result<(DecoderModel, FeatureSource)> {
    ck.expect_kind("decoder")?;
    let source = FeatureSource::parse(ck.meta("source")?)?;
    Ok((DecoderModel::from_state(&ck.descriptor, &ck.state)?, source))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generic_round_trip() {
        let mut state = StateDict::new();
        state.push_f32("a", &[2, 2], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5]).unwrap();
        state.push_u32("b", &[3], vec![0, u32::MAX, 7]).unwrap();
        let ck = Checkpoint {
            kind: "test".into(),
            descriptor: "d x=1".into(),
            config: "[a]\nk = v\n".into(),
            flags: vec!["flag".into()],
            meta: BTreeMap::from([("m".into(), "v".into())]),
            state,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ck");
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ck);
        let q = dir.path().join("c2.ck");
        back.save(&q).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.push(0);
        std::fs::write(&p, bytes).unwrap();
        assert!(Checkpoint::load(&p).is_err());
    }
}
