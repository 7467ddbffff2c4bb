//! RIFF/WAVE reading (PCM 8/16/24/32-bit, float32) and 16-bit writing.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use multispec_core::dsp::AudioSegment;

use crate::{Error, Result};

/// One channel of a WAV file as floats in `[-1, 1]`. Integer samples of
/// `b` bits are scaled by `2^-(b-1)`. The segment id is the file stem.
pub fn read_audio(path: impl AsRef<Path>, channel: usize) -> Result<AudioSegment> {
    let path = path.as_ref();
    let wav_err = |source: hound::Error| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channel >= channels {
        return Err(Error::format(path, format!("channel {channel} requested, file has {channels}")));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, hound::Error>>()
            .map_err(wav_err)?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<std::result::Result<_, hound::Error>>()
                .map_err(wav_err)?
        }
        (fmt, bits) => {
            return Err(Error::format(path, format!("unsupported sample format {fmt:?} at {bits} bits")));
        }
    };
    let samples: Vec<f32> = interleaved.iter().skip(channel).step_by(channels).copied().collect();
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(AudioSegment::new(samples, spec.sample_rate, id)?)
}

/// Mono 16-bit PCM; samples are clamped to `[-1, 1]` and rounded.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f32], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |source: hound::Error| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_i16(path: &Path, channels: u16, data: &[i16]) {
        let spec = WavSpec {
            channels,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in data {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn sixteen_bit_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_i16(&p, 1, &[16384, -32768, 0]);
        let a = read_audio(&p, 0).unwrap();
        assert_eq!(a.samples(), &[0.5, -1.0, 0.0]);
        assert_eq!(a.source_id, "a");
    }

    #[test]
    fn stereo_channel_selection() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_i16(&p, 2, &[100, 16384, 200, -16384]);
        assert_eq!(read_audio(&p, 1).unwrap().samples(), &[0.5, -0.5]);
        assert!(read_audio(&p, 2).is_err());
    }

    #[test]
    fn float_and_24_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0.25f32).unwrap();
        w.finalize().unwrap();
        assert_eq!(read_audio(&p, 0).unwrap().samples(), &[0.25]);

        let q = dir.path().join("i24.wav");
        let spec = WavSpec {
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
            ..spec
        };
        let mut w = WavWriter::create(&q, spec).unwrap();
        w.write_sample(1i32 << 22).unwrap();
        w.finalize().unwrap();
        assert_eq!(read_audio(&q, 0).unwrap().samples(), &[0.5]);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_i16(&p, 1, &[1; 100]);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..30]).unwrap();
        assert!(read_audio(&p, 0).is_err());
    }

    #[test]
    fn write_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.wav");
        write_wav(&p, &[0.5, -1.0, 0.25, 2.0], 16_000).unwrap();
        let a = read_audio(&p, 0).unwrap();
        assert_eq!(a.samples(), &[0.5, -1.0, 0.25, 32767.0 / 32768.0]);
        assert_eq!(a.sample_rate(), 16_000);
    }
}
