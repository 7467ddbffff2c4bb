use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// One channel of a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    samples: Vec<f32>,
    sample_rate: u32,
    pub source_id: String,
    pub device_id: Option<String>,
    pub label: Option<usize>,
}

impl AudioSegment {
    pub fn new(samples: Vec<f32>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Empty("audio segment has no samples".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
            device_id: None,
            label: None,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_device(mut self, device: impl Into<String>) -> Self {
        self.device_id = Some(device.into());
        self
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// The first `seconds` of the segment, metadata preserved.
    pub fn crop(&self, seconds: f64) -> Result<Self> {
        if !(seconds > 0.0) {
            return Err(Error::Invalid("crop length must be positive".into()));
        }
        let n = crate::math::round64(seconds * self.sample_rate as f64) as usize;
        if n > self.samples.len() {
            return Err(Error::Invalid(alloc::format!(
                "crop of {seconds} s exceeds segment duration {:.3} s",
                self.duration_secs()
            )));
        }
        let mut out = self.clone();
        out.samples.truncate(n.max(1));
        Ok(out)
    }
}
