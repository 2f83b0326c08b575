//! Selection of the fixed-length analysis window from a full song.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio_io::{rms, AudioBuffer};
use crate::{Error, Result};

/// Default excerpt length in seconds.
pub const DEFAULT_DURATION_S: f64 = 10.0;

/// Where in the song the excerpt is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExcerptStrategy {
    Beginning,
    End,
    Middle,
    MaxRms,
}

impl ExcerptStrategy {
    pub const ALL: [ExcerptStrategy; 4] = [Self::Beginning, Self::End, Self::Middle, Self::MaxRms];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Beginning => "beginning",
            Self::End => "end",
            Self::Middle => "middle",
            Self::MaxRms => "max-rms",
        }
    }
}

impl fmt::Display for ExcerptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExcerptStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown excerpt strategy `{s}`")))
    }
}

/// A fixed-length window cut from a song, before any gain is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Excerpt {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub start_sample: usize,
    pub strategy: ExcerptStrategy,
    /// RMS of `samples` (padding included) before normalization.
    pub pre_norm_rms: f64,
    /// Set when the song was shorter than the excerpt and got zero-padded.
    pub padded: bool,
}

/// Length in samples of the 50 ms RMS analysis frame, rounded down to even.
pub fn rms_frame_len(sample_rate: u32) -> usize {
    ((sample_rate as f64 * 0.05) as usize) & !1
}

/// Number of samples covered by `duration_s` at `sample_rate`.
pub fn excerpt_len(duration_s: f64, sample_rate: u32) -> usize {
    (duration_s * sample_rate as f64).round() as usize
}

/// Center sample of the frame with maximal RMS. Ties go to the earliest frame.
pub fn max_rms_center(samples: &[f64], frame_len: usize, hop: usize) -> Result<usize> {
    if frame_len == 0 || hop == 0 {
        return Err(Error::InvalidArgument(
            "frame length and hop must be positive".into(),
        ));
    }
    if samples.len() < frame_len {
        return Err(Error::InputShorterThanFrame {
            len: samples.len(),
            frame_len,
        });
    }
    let n_frames = (samples.len() - frame_len) / hop + 1;
    // Comparing sums of squares ranks frames exactly like their RMS.
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..n_frames {
        let start = i * hop;
        let energy: f64 = samples[start..start + frame_len]
            .iter()
            .map(|s| s * s)
            .sum();
        if energy > best.1 {
            best = (i, energy);
        }
    }
    Ok(best.0 * hop + frame_len / 2)
}

/// Cuts a `duration_s` window from `buf` according to `strategy`.
///
/// Songs shorter than the window start at 0 and are right-padded with zeros.
pub fn select_excerpt(
    buf: &AudioBuffer,
    strategy: ExcerptStrategy,
    duration_s: f64,
) -> Result<Excerpt> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "duration_s",
            value: duration_s,
        });
    }
    if buf.is_empty() {
        return Err(Error::EmptyInput);
    }
    let len = buf.len();
    let want = excerpt_len(duration_s, buf.sample_rate());
    if want == 0 {
        return Err(Error::InvalidArgument(
            "excerpt shorter than one sample".into(),
        ));
    }

    if len <= want {
        let mut samples = buf.samples().to_vec();
        samples.resize(want, 0.0);
        let pre_norm_rms = rms(&samples)?;
        return Ok(Excerpt {
            samples,
            sample_rate: buf.sample_rate(),
            start_sample: 0,
            strategy,
            pre_norm_rms,
            padded: len < want,
        });
    }

    let last_start = len - want;
    let start_sample = match strategy {
        ExcerptStrategy::Beginning => 0,
        ExcerptStrategy::End => last_start,
        ExcerptStrategy::Middle => last_start / 2,
        ExcerptStrategy::MaxRms => {
            let frame_len = rms_frame_len(buf.sample_rate()).clamp(2, len);
            let center = max_rms_center(buf.samples(), frame_len, frame_len / 2)?;
            center.saturating_sub(want / 2).min(last_start)
        }
    };
    let samples = buf.samples()[start_sample..start_sample + want].to_vec();
    let pre_norm_rms = rms(&samples)?;
    Ok(Excerpt {
        samples,
        sample_rate: buf.sample_rate(),
        start_sample,
        strategy,
        pre_norm_rms,
        padded: false,
    })
}
