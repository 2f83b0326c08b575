//! WAV decoding, mono mixdown, resampling and RMS normalization.
//!
//! Only RIFF/WAVE files holding 16-bit integer PCM with one or two channels
//! are accepted. Samples are scaled by 1/32768 into [-1, 1].

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Sample rate every feature is computed at.
pub const CANONICAL_SAMPLE_RATE: u32 = 22050;

/// Buffers whose RMS falls below this are treated as silence.
pub const SILENCE_EPSILON: f64 = 1e-6;

/// Default RMS level excerpts are normalized to (about -20 dBFS).
pub const DEFAULT_TARGET_RMS: f64 = 0.1;

const PCM_SCALE: f64 = 32768.0;
const FORMAT_PCM: u16 = 1;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Mono PCM samples at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument(
                "sample rate must be positive".into(),
            ));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
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

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads and decodes a WAV file from disk.
pub fn decode_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav_bytes(&bytes)
}

struct FmtChunk {
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::NotWav(format!(
            "fmt chunk too short ({} bytes)",
            body.len()
        )));
    }
    let mut format = read_u16(body, 0);
    if format == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID,
        // whose first two bytes carry the real format tag.
        if body.len() < 26 {
            return Err(Error::NotWav(
                "truncated WAVE_FORMAT_EXTENSIBLE header".into(),
            ));
        }
        format = read_u16(body, 24);
    }
    if format != FORMAT_PCM {
        return Err(Error::UnsupportedEncoding(format!(
            "format tag {format} is not integer PCM"
        )));
    }
    let channels = read_u16(body, 2);
    let sample_rate = read_u32(body, 4);
    let bits_per_sample = read_u16(body, 14);
    if bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding(format!(
            "{bits_per_sample}-bit samples"
        )));
    }
    if channels != 1 && channels != 2 {
        return Err(Error::UnsupportedEncoding(format!("{channels} channels")));
    }
    if sample_rate == 0 {
        return Err(Error::NotWav("sample rate of 0 Hz".into()));
    }
    Ok(FmtChunk {
        channels,
        sample_rate,
        bits_per_sample,
    })
}

/// Decodes an in-memory WAV file. Stereo is averaged to mono per frame.
pub fn decode_wav_bytes(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::NotWav("missing RIFF/WAVE magic".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<FmtChunk> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                let end = body_start.saturating_add(size).min(bytes.len());
                fmt = Some(parse_fmt(&bytes[body_start..end])?);
            }
            b"data" => {
                let fmt = fmt.ok_or_else(|| Error::NotWav("data chunk before fmt chunk".into()))?;
                let found = bytes.len() - body_start;
                if size > found {
                    return Err(Error::TruncatedData {
                        declared: size,
                        found,
                    });
                }
                return Ok(pcm16_to_mono(&bytes[body_start..body_start + size], &fmt));
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    if fmt.is_none() {
        Err(Error::NotWav("no fmt chunk".into()))
    } else {
        Err(Error::NotWav("no data chunk".into()))
    }
}

fn pcm16_to_mono(data: &[u8], fmt: &FmtChunk) -> AudioBuffer {
    debug_assert_eq!(fmt.bits_per_sample, 16);
    let channels = fmt.channels as usize;
    let frame_bytes = 2 * channels;
    let samples = data
        .chunks_exact(frame_bytes)
        .map(|frame| {
            let sum: f64 = frame
                .chunks_exact(2)
                .map(|s| i16::from_le_bytes([s[0], s[1]]) as f64 / PCM_SCALE)
                .sum();
            sum / channels as f64
        })
        .collect();
    AudioBuffer {
        samples,
        sample_rate: fmt.sample_rate,
    }
}

/// Quantizes a sample in [-1, 1] to 16-bit PCM, clamping out-of-range input.
pub fn quantize_pcm16(x: f64) -> i16 {
    (x * PCM_SCALE)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Encodes a buffer as a mono 16-bit PCM WAV file.
pub fn encode_wav(buf: &AudioBuffer) -> Vec<u8> {
    let data_len = buf.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &buf.samples {
        out.extend_from_slice(&quantize_pcm16(s).to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(buf)).map_err(|e| Error::io(path, e))
}

const RESAMPLER_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.6;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Downsamples with a Kaiser-windowed sinc low-pass (64 taps, beta 8.6)
/// whose cutoff sits at the target Nyquist frequency.
///
/// The rate ratio is reduced to `up/down` and one filter is precomputed per
/// fractional phase. Each phase is normalized to unit DC gain; input outside
/// the buffer is treated as zero.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument(
            "target rate must be positive".into(),
        ));
    }
    let source_rate = buf.sample_rate;
    if source_rate < target_rate {
        return Err(Error::UpsampleRequested {
            source_rate,
            target_rate,
        });
    }
    if source_rate == target_rate {
        return Ok(buf.clone());
    }

    let g = gcd(source_rate as u64, target_rate as u64);
    let step = source_rate as u64 / g; // input samples advanced per `phases` outputs
    let phases = target_rate as u64 / g;
    let cutoff = target_rate as f64 / source_rate as f64;
    let half = (RESAMPLER_TAPS / 2) as i64;
    let i0_beta = bessel_i0(KAISER_BETA);

    // filters[p][t] weights input sample floor(pos) - half + 1 + t, where
    // pos = m * step / phases and p = (m * step) mod phases.
    let filters: Vec<Vec<f64>> = (0..phases)
        .map(|p| {
            let frac = p as f64 / phases as f64;
            let mut taps: Vec<f64> = (0..RESAMPLER_TAPS as i64)
                .map(|t| {
                    let d = (t - half + 1) as f64 - frac;
                    let u = d / half as f64;
                    let window = if u.abs() >= 1.0 {
                        0.0
                    } else {
                        bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / i0_beta
                    };
                    cutoff * sinc(cutoff * d) * window
                })
                .collect();
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|w| *w /= sum);
            taps
        })
        .collect();

    let n_in = buf.samples.len();
    let n_out = ((n_in as f64) * target_rate as f64 / source_rate as f64).round() as usize;
    let x = &buf.samples;
    let samples = (0..n_out as u64)
        .map(|m| {
            let num = m * step;
            let base = (num / phases) as i64;
            let taps = &filters[(num % phases) as usize];
            let first = base - half + 1;
            taps.iter()
                .enumerate()
                .filter_map(|(t, w)| {
                    let idx = first + t as i64;
                    (idx >= 0 && (idx as usize) < n_in).then(|| w * x[idx as usize])
                })
                .sum()
        })
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: target_rate,
    })
}

/// Root mean square of a non-empty sequence.
pub fn rms(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum_sq: f64 = samples.iter().map(|s| s * s).sum();
    Ok((sum_sq / samples.len() as f64).sqrt())
}

/// Scales `buf` to `target_rms`, returning the scaled buffer and the RMS it
/// had before scaling.
pub fn normalize_rms(buf: &AudioBuffer, target_rms: f64) -> Result<(AudioBuffer, f64)> {
    let (samples, original) = normalize_samples(&buf.samples, target_rms)?;
    Ok((
        AudioBuffer {
            samples,
            sample_rate: buf.sample_rate,
        },
        original,
    ))
}

pub(crate) fn normalize_samples(samples: &[f64], target_rms: f64) -> Result<(Vec<f64>, f64)> {
    if !(target_rms > 0.0 && target_rms.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "target_rms",
            value: target_rms,
        });
    }
    let original = rms(samples)?;
    if original < SILENCE_EPSILON {
        return Err(Error::SilentInput(original));
    }
    let gain = target_rms / original;
    Ok((samples.iter().map(|s| s * gain).collect(), original))
}
