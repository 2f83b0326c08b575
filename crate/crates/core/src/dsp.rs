//! Framing, magnitude spectra, mel filterbank and DCT.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Overlapping frames cut from a signal, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    data: Vec<f64>,
    frame_len: usize,
    hop: usize,
    n_frames: usize,
}

impl FrameSequence {
    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn len(&self) -> usize {
        self.n_frames
    }

    pub fn is_empty(&self) -> bool {
        self.n_frames == 0
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.frame_len..(i + 1) * self.frame_len]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.frame_len)
    }
}

/// Number of full frames of `frame_len` at stride `hop` in `n_samples`.
pub fn frame_count(n_samples: usize, frame_len: usize, hop: usize) -> usize {
    if n_samples < frame_len {
        0
    } else {
        (n_samples - frame_len) / hop + 1
    }
}

/// Splits `samples` into frames; the trailing partial frame is dropped.
pub fn frame_signal(samples: &[f64], frame_len: usize, hop: usize) -> Result<FrameSequence> {
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
    let n_frames = frame_count(samples.len(), frame_len, hop);
    let mut data = Vec::with_capacity(n_frames * frame_len);
    for i in 0..n_frames {
        data.extend_from_slice(&samples[i * hop..i * hop + frame_len]);
    }
    Ok(FrameSequence {
        data,
        frame_len,
        hop,
        n_frames,
    })
}

/// Symmetric Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Magnitude spectrogram. Row `t` holds the bins of frame `t`; column `j`
/// is absolute bin `first_bin + j`, centered at `(first_bin + j) * bin_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    magnitudes: Vec<f64>,
    n_frames: usize,
    n_bins: usize,
    first_bin: usize,
    bin_hz: f64,
    sample_rate: u32,
}

impl Spectrogram {
    /// Builds a spectrogram from row-major magnitudes.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        first_bin: usize,
        bin_hz: f64,
        sample_rate: u32,
    ) -> Result<Self> {
        let n_frames = rows.len();
        let n_bins = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_bins) {
            return Err(Error::DimensionMismatch {
                expected: n_bins,
                got: bad.len(),
            });
        }
        if rows.iter().flatten().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidArgument(
                "magnitudes must be non-negative".into(),
            ));
        }
        Ok(Self {
            magnitudes: rows.into_iter().flatten().collect(),
            n_frames,
            n_bins,
            first_bin,
            bin_hz,
            sample_rate,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn first_bin(&self) -> usize {
        self.first_bin
    }

    pub fn bin_hz(&self) -> f64 {
        self.bin_hz
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn bin_center_hz(&self, column: usize) -> f64 {
        (self.first_bin + column) as f64 * self.bin_hz
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.magnitudes[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.magnitudes
            .chunks_exact(self.n_bins.max(1))
            .take(self.n_frames)
    }

    pub fn values(&self) -> &[f64] {
        &self.magnitudes
    }
}

/// Windowed magnitude spectra with a reusable FFT plan.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    fft_size: usize,
}

impl SpectrumAnalyzer {
    pub fn new(frame_len: usize, fft_size: usize) -> Result<Self> {
        if frame_len == 0 || !fft_size.is_power_of_two() || fft_size < frame_len {
            return Err(Error::BadFftSize {
                fft_size,
                frame_len,
            });
        }
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Ok(Self {
            fft,
            window: hann_window(frame_len),
            fft_size,
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn frame_len(&self) -> usize {
        self.window.len()
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// |DFT| of the Hann-windowed, zero-padded frame, bins 0..=fft_size/2.
    pub fn magnitudes(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.window.len() {
            return Err(Error::DimensionMismatch {
                expected: self.window.len(),
                got: frame.len(),
            });
        }
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(x * w, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.fft_size)
            .collect();
        self.fft.process(&mut buf);
        Ok(buf[..self.n_bins()].iter().map(|c| c.norm()).collect())
    }

    pub fn spectrogram(&self, frames: &FrameSequence, sample_rate: u32) -> Result<Spectrogram> {
        let rows = frames
            .iter()
            .map(|f| self.magnitudes(f))
            .collect::<Result<Vec<_>>>()?;
        let n_bins = self.n_bins();
        Ok(Spectrogram {
            magnitudes: rows.into_iter().flatten().collect(),
            n_frames: frames.len(),
            n_bins,
            first_bin: 0,
            bin_hz: sample_rate as f64 / self.fft_size as f64,
            sample_rate,
        })
    }
}

/// One-shot magnitude spectrum of a single frame; see [`SpectrumAnalyzer`].
pub fn magnitude_spectrum(frame: &[f64], fft_size: usize) -> Result<Vec<f64>> {
    SpectrumAnalyzer::new(frame.len(), fft_size)?.magnitudes(frame)
}

/// Keeps the columns whose bin center lies in `[f_lo, f_hi)`.
pub fn band_slice(spec: &Spectrogram, f_lo: f64, f_hi: f64) -> Result<Spectrogram> {
    let nyquist = spec.sample_rate as f64 / 2.0;
    if !(0.0 <= f_lo && f_lo < f_hi && f_hi <= nyquist) {
        return Err(Error::InvalidArgument(format!(
            "band [{f_lo}, {f_hi}) must satisfy 0 <= lo < hi <= {nyquist}"
        )));
    }
    let cols: Vec<usize> = (0..spec.n_bins)
        .filter(|&j| {
            let f = spec.bin_center_hz(j);
            f >= f_lo && f < f_hi
        })
        .collect();
    let (Some(&lo), Some(&hi)) = (cols.first(), cols.last()) else {
        return Err(Error::EmptyBand { f_lo, f_hi });
    };
    let n_bins = hi - lo + 1;
    let mut magnitudes = Vec::with_capacity(spec.n_frames * n_bins);
    for row in spec.frames() {
        magnitudes.extend_from_slice(&row[lo..=hi]);
    }
    Ok(Spectrogram {
        magnitudes,
        n_frames: spec.n_frames,
        n_bins,
        first_bin: spec.first_bin + lo,
        bin_hz: spec.bin_hz,
        sample_rate: spec.sample_rate,
    })
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale, applied to bins
/// `0..=fft_size/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    n_filters: usize,
    n_bins: usize,
    /// `n_filters + 2` band edges in Hz; filter `m` rises over
    /// `[edges[m], edges[m+1]]` and falls over `[edges[m+1], edges[m+2]]`.
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.edges_hz[1..self.edges_hz.len() - 1]
    }

    pub fn edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }

    /// Filter outputs `sum_k w[m][k] * energies[k]`.
    pub fn apply(&self, energies: &[f64]) -> Result<Vec<f64>> {
        if energies.len() != self.n_bins {
            return Err(Error::DimensionMismatch {
                expected: self.n_bins,
                got: energies.len(),
            });
        }
        Ok((0..self.n_filters)
            .map(|m| self.row(m).iter().zip(energies).map(|(w, e)| w * e).sum())
            .collect())
    }
}

pub fn mel_filterbank(
    n_filters: usize,
    fft_size: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank> {
    if n_filters == 0 || fft_size < 2 {
        return Err(Error::InvalidArgument(
            "need at least one filter and two FFT points".into(),
        ));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(Error::InvalidArgument(format!(
            "mel range [{f_min}, {f_max}] must satisfy 0 <= min < max <= {nyquist}"
        )));
    }
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let n_bins = fft_size / 2 + 1;
    let (mel_lo, mel_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let step = (mel_hi - mel_lo) / (n_filters + 1) as f64;
    let edges_hz: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_lo + step * i as f64))
        .collect();

    for i in 1..edges_hz.len() {
        if (edges_hz[i - 1] / bin_hz).round() == (edges_hz[i] / bin_hz).round() {
            return Err(Error::DegenerateFilter(i.saturating_sub(2), i - 1));
        }
    }

    let mut weights = vec![0.0; n_filters * n_bins];
    for m in 0..n_filters {
        let (lo, mid, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            weights[m * n_bins + k] = w;
        }
    }
    Ok(MelFilterbank {
        weights,
        n_filters,
        n_bins,
        edges_hz,
    })
}

/// Precomputed orthonormal DCT-II basis keeping the first `n_out` coefficients.
#[derive(Debug, Clone)]
pub struct Dct {
    basis: Vec<f64>,
    n_in: usize,
    n_out: usize,
}

impl Dct {
    pub fn new(n_in: usize, n_out: usize) -> Result<Self> {
        if n_in == 0 || n_out > n_in {
            return Err(Error::InvalidArgument(format!(
                "DCT needs 0 < n_out <= n_in, got n_out {n_out} for n_in {n_in}"
            )));
        }
        let n = n_in as f64;
        let basis = (0..n_out)
            .flat_map(|k| {
                let scale = if k == 0 {
                    (1.0 / n).sqrt()
                } else {
                    (2.0 / n).sqrt()
                };
                (0..n_in)
                    .map(move |i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
            })
            .collect();
        Ok(Self { basis, n_in, n_out })
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_in {
            return Err(Error::DimensionMismatch {
                expected: self.n_in,
                got: v.len(),
            });
        }
        Ok(self
            .basis
            .chunks_exact(self.n_in)
            .map(|row| row.iter().zip(v).map(|(b, x)| b * x).sum())
            .collect())
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }
}

/// Orthonormal DCT-II of `v`, first `n_out` coefficients.
pub fn dct_ii(v: &[f64], n_out: usize) -> Result<Vec<f64>> {
    Dct::new(v.len(), n_out)?.apply(v)
}
