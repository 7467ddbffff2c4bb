use crate::{Error, Result};

/// Which time-frequency representation to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpectrogramKind {
    LogMel,
    Gamma,
    Cqt,
}

impl SpectrogramKind {
    pub const ALL: [SpectrogramKind; 3] = [Self::LogMel, Self::Gamma, Self::Cqt];

    pub fn name(self) -> &'static str {
        match self {
            Self::LogMel => "logmel",
            Self::Gamma => "gamma",
            Self::Cqt => "cqt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logmel" | "log-mel" | "mel" | "lm" => Some(Self::LogMel),
            "gamma" | "gammatone" | "ga" => Some(Self::Gamma),
            "cqt" | "cq" => Some(Self::Cqt),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::LogMel => 0,
            Self::Gamma => 1,
            Self::Cqt => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrogramConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_filters: usize,
    pub kind: SpectrogramKind,
    /// Added before the logarithm so silence maps to `ln(log_floor)`.
    pub log_floor: f64,
    /// Apply a fitted [`ZScore`](super::ZScore) after extraction.
    pub normalize: bool,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            window_ms: 43.0,
            hop_ms: 6.0,
            n_filters: 128,
            kind: SpectrogramKind::LogMel,
            log_floor: 1e-10,
            normalize: false,
        }
    }
}

impl SpectrogramConfig {
    pub fn with_kind(mut self, kind: SpectrogramKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hop_ms > 0.0) || !(self.window_ms >= self.hop_ms) {
            return Err(Error::Config("require window_ms >= hop_ms > 0".into()));
        }
        if self.n_filters != crate::PATCH_SIZE {
            return Err(Error::Config(alloc::format!(
                "n_filters must be {} for patch compatibility, got {}",
                crate::PATCH_SIZE,
                self.n_filters
            )));
        }
        if !(self.log_floor > 0.0) || !self.log_floor.is_finite() {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        Ok(())
    }

    /// Analysis window length in samples.
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (crate::math::round64(self.window_ms * sample_rate as f64 / 1000.0) as usize).max(1)
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (crate::math::round64(self.hop_ms * sample_rate as f64 / 1000.0) as usize).max(1)
    }

    /// `1 + floor((len - N) / hop)`, or `None` when shorter than one window.
    pub fn frame_count(&self, len: usize, sample_rate: u32) -> Option<usize> {
        let n = self.frame_len(sample_rate);
        if len < n {
            None
        } else {
            Some(1 + (len - n) / self.hop_len(sample_rate))
        }
    }
}
