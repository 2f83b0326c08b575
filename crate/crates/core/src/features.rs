//! The 32-dimensional song descriptor.
//!
//! Layout, frozen across versions:
//!
//! | index    | content                                          |
//! |----------|--------------------------------------------------|
//! | 0        | RMS of the excerpt before normalization          |
//! | 1..=9    | rhythmic descriptor of the 20-100 Hz band        |
//! | 10..=18  | rhythmic descriptor of the 8000-11025 Hz band    |
//! | 19..=31  | mean MFCCs 1..=13 over all frames                |
//!
//! Every component except 0 is computed on the RMS-normalized excerpt, so a
//! gain applied to the input only changes component 0.

use std::ops::Index;

use crate::audio_io::{normalize_samples, DEFAULT_TARGET_RMS};
use crate::dsp::{
    band_slice, frame_signal, mel_filterbank, Dct, MelFilterbank, Spectrogram, SpectrumAnalyzer,
};
use crate::excerpt::Excerpt;
use crate::{Error, Result};

pub const FEATURE_DIM: usize = 32;
pub const RHYTHM_DIM: usize = 9;
pub const N_MFCC: usize = 13;

/// Per-frame mean magnitude over the bins of a band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEnvelope {
    pub values: Vec<f64>,
    pub frame_hop_s: f64,
}

pub fn band_envelope(spec: &Spectrogram, frame_hop_s: f64) -> BandEnvelope {
    let n = spec.n_bins().max(1) as f64;
    let values = spec
        .frames()
        .map(|row| row.iter().sum::<f64>() / n)
        .collect();
    BandEnvelope {
        values,
        frame_hop_s,
    }
}

fn max_min(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &v| {
            (hi.max(v), lo.min(v))
        })
}

/// Strict interior local maxima whose height is at least 0.15 of the
/// envelope maximum, in ascending order.
pub fn detect_peaks(env: &BandEnvelope) -> Vec<usize> {
    let s = &env.values;
    if s.len() < 3 {
        return Vec::new();
    }
    let (maxamp, _) = max_min(s);
    let floor = 0.15 * maxamp;
    (1..s.len() - 1)
        .filter(|&t| s[t - 1] < s[t] && s[t] > s[t + 1] && s[t] >= floor)
        .collect()
}

/// Extrema, threshold counts and peak-spacing statistics of one band.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RhythmicDescriptor {
    pub maxamp: f64,
    pub minamp: f64,
    /// Frames whose envelope exceeds 0.8 * maxamp.
    pub count_80: usize,
    /// Frames whose envelope exceeds 0.15 * maxamp.
    pub count_15: usize,
    /// Band spectrogram entries above maxamp.
    pub count_max: usize,
    /// Band spectrogram entries below minamp.
    pub count_min: usize,
    /// Peak spacing statistics, in frames.
    pub mean_peak_dist: f64,
    pub std_peak_dist: f64,
    pub max_peak_dist: f64,
}

impl RhythmicDescriptor {
    pub fn to_array(&self) -> [f64; RHYTHM_DIM] {
        [
            self.maxamp,
            self.minamp,
            self.count_80 as f64,
            self.count_15 as f64,
            self.count_max as f64,
            self.count_min as f64,
            self.mean_peak_dist,
            self.std_peak_dist,
            self.max_peak_dist,
        ]
    }
}

/// Summarizes a band. `band` must be the spectrogram `env` was computed from.
pub fn rhythmic_descriptor(band: &Spectrogram, env: &BandEnvelope) -> RhythmicDescriptor {
    let s = &env.values;
    if s.is_empty() {
        return RhythmicDescriptor::default();
    }
    let (maxamp, minamp) = max_min(s);
    let count_above = |thr: f64| s.iter().filter(|&&v| v > thr).count();

    let peaks = detect_peaks(env);
    let dists: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let (mean_peak_dist, std_peak_dist, max_peak_dist) = if dists.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let n = dists.len() as f64;
        let mean = dists.iter().sum::<f64>() / n;
        let var = dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt(), max_min(&dists).0)
    };

    RhythmicDescriptor {
        maxamp,
        minamp,
        count_80: count_above(0.8 * maxamp),
        count_15: count_above(0.15 * maxamp),
        count_max: band.values().iter().filter(|&&v| v > maxamp).count(),
        count_min: band.values().iter().filter(|&&v| v < minamp).count(),
        mean_peak_dist,
        std_peak_dist,
        max_peak_dist,
    }
}

/// Mean over frames of MFCCs `1..=n_coeffs` (c0 dropped).
///
/// Per frame: squared magnitudes through the filterbank, natural log with a
/// floor, orthonormal DCT-II.
pub fn mean_mfcc(
    spec: &Spectrogram,
    filterbank: &MelFilterbank,
    n_coeffs: usize,
    log_floor: f64,
) -> Result<Vec<f64>> {
    let dct = Dct::new(filterbank.n_filters(), n_coeffs + 1)?;
    mean_mfcc_with(spec, filterbank, &dct, log_floor)
}

fn mean_mfcc_with(
    spec: &Spectrogram,
    filterbank: &MelFilterbank,
    dct: &Dct,
    log_floor: f64,
) -> Result<Vec<f64>> {
    if spec.first_bin() != 0 || spec.n_bins() != filterbank.n_bins() {
        return Err(Error::DimensionMismatch {
            expected: filterbank.n_bins(),
            got: spec.n_bins(),
        });
    }
    if spec.n_frames() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut sums = vec![0.0; dct.n_out() - 1];
    let mut energies = vec![0.0; spec.n_bins()];
    for row in spec.frames() {
        energies.iter_mut().zip(row).for_each(|(e, m)| *e = m * m);
        let log_mel: Vec<f64> = filterbank
            .apply(&energies)?
            .into_iter()
            .map(|e| e.max(log_floor).ln())
            .collect();
        let cep = dct.apply(&log_mel)?;
        sums.iter_mut().zip(&cep[1..]).for_each(|(s, c)| *s += c);
    }
    let n = spec.n_frames() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// The 32-dimensional song descriptor; see the module docs for the layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector([f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn new(values: [f64; FEATURE_DIM]) -> Result<Self> {
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; FEATURE_DIM] = values.try_into().map_err(|_| Error::DimensionMismatch {
            expected: FEATURE_DIM,
            got: values.len(),
        })?;
        Self::new(arr)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn values(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }

    pub fn pre_norm_rms(&self) -> f64 {
        self.0[0]
    }

    pub fn low_band(&self) -> &[f64] {
        &self.0[1..10]
    }

    pub fn high_band(&self) -> &[f64] {
        &self.0[10..19]
    }

    pub fn mfcc(&self) -> &[f64] {
        &self.0[19..32]
    }

    /// Column names used in the feature cache header.
    pub fn column_names() -> Vec<String> {
        (0..FEATURE_DIM).map(|i| format!("f{i}")).collect()
    }
}

impl Index<usize> for FeatureVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Analysis settings. Defaults reproduce the reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub n_mel_filters: usize,
    pub n_mfcc: usize,
    pub low_band_hz: (f64, f64),
    pub high_band_hz: (f64, f64),
    pub target_rms: f64,
    pub log_floor: f64,
    pub sample_rate: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame_len: 1102,
            hop: 551,
            fft_size: 2048,
            n_mel_filters: 40,
            n_mfcc: N_MFCC,
            low_band_hz: (20.0, 100.0),
            high_band_hz: (8000.0, 11025.0),
            target_rms: DEFAULT_TARGET_RMS,
            log_floor: 1e-10,
            sample_rate: crate::CANONICAL_SAMPLE_RATE,
        }
    }
}

/// Reusable extractor holding the FFT plan, filterbank and DCT basis.
#[derive(Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    analyzer: SpectrumAnalyzer,
    filterbank: MelFilterbank,
    dct: Dct,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        if config.n_mfcc != N_MFCC {
            return Err(Error::InvalidArgument(format!(
                "feature layout fixes {N_MFCC} MFCCs, got {}",
                config.n_mfcc
            )));
        }
        let analyzer = SpectrumAnalyzer::new(config.frame_len, config.fft_size)?;
        let filterbank = mel_filterbank(
            config.n_mel_filters,
            config.fft_size,
            config.sample_rate,
            0.0,
            config.sample_rate as f64 / 2.0,
        )?;
        let dct = Dct::new(config.n_mel_filters, config.n_mfcc + 1)?;
        Ok(Self {
            config,
            analyzer,
            filterbank,
            dct,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Full-band magnitude spectrogram of `samples` (no normalization).
    pub fn spectrogram(&self, samples: &[f64]) -> Result<Spectrogram> {
        let frames = frame_signal(samples, self.config.frame_len, self.config.hop)?;
        self.analyzer.spectrogram(&frames, self.config.sample_rate)
    }

    fn hop_s(&self) -> f64 {
        self.config.hop as f64 / self.config.sample_rate as f64
    }

    /// Rhythmic descriptor of `spec` restricted to `[lo, hi)` Hz.
    pub fn band_descriptor(
        &self,
        spec: &Spectrogram,
        (lo, hi): (f64, f64),
    ) -> Result<RhythmicDescriptor> {
        let band = band_slice(spec, lo, hi)?;
        let env = band_envelope(&band, self.hop_s());
        Ok(rhythmic_descriptor(&band, &env))
    }

    pub fn extract(&self, excerpt: &Excerpt) -> Result<FeatureVector> {
        if excerpt.sample_rate != self.config.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "excerpt at {} Hz, extractor expects {} Hz",
                excerpt.sample_rate, self.config.sample_rate
            )));
        }
        let (normalized, _) = normalize_samples(&excerpt.samples, self.config.target_rms)?;
        let spec = self.spectrogram(&normalized)?;
        let low = self.band_descriptor(&spec, self.config.low_band_hz)?;
        let high = self.band_descriptor(&spec, self.config.high_band_hz)?;
        let mfcc = mean_mfcc_with(&spec, &self.filterbank, &self.dct, self.config.log_floor)?;

        let mut values = [0.0; FEATURE_DIM];
        values[0] = excerpt.pre_norm_rms;
        values[1..10].copy_from_slice(&low.to_array());
        values[10..19].copy_from_slice(&high.to_array());
        values[19..32].copy_from_slice(&mfcc);
        FeatureVector::new(values)
    }
}

/// Extracts features with the default configuration.
pub fn extract_feature_vector(excerpt: &Excerpt) -> Result<FeatureVector> {
    FeatureExtractor::new(FeatureConfig::default())?.extract(excerpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excerpt::ExcerptStrategy;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const SR: u32 = 22050;

    fn env(values: Vec<f64>) -> BandEnvelope {
        BandEnvelope {
            values,
            frame_hop_s: 551.0 / 22050.0,
        }
    }

    fn spec_from(rows: Vec<Vec<f64>>) -> Spectrogram {
        Spectrogram::from_rows(rows, 0, SR as f64 / 2048.0, SR).unwrap()
    }

    fn excerpt(samples: Vec<f64>) -> Excerpt {
        let pre_norm_rms = crate::audio_io::rms(&samples).unwrap();
        Excerpt {
            samples,
            sample_rate: SR,
            start_sample: 0,
            strategy: ExcerptStrategy::Beginning,
            pre_norm_rms,
            padded: false,
        }
    }

    #[test]
    fn envelope_examples() {
        let single = spec_from(vec![vec![0.5], vec![2.0], vec![0.0]]);
        assert_eq!(band_envelope(&single, 0.025).values, vec![0.5, 2.0, 0.0]);
        let zeros = spec_from(vec![vec![0.0; 4]; 5]);
        assert!(band_envelope(&zeros, 0.025)
            .values
            .iter()
            .all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..7).map(|_| rng.gen_range(0.0..3.0)).collect())
            .collect();
        let got = band_envelope(&spec_from(rows.clone()), 0.025).values;
        for (g, row) in got.iter().zip(&rows) {
            let mut acc = 0.0;
            for v in row {
                acc += v;
            }
            assert_eq!(*g, acc / 7.0);
        }
    }

    #[test]
    fn peak_examples() {
        assert!(detect_peaks(&env((0..50).map(|i| i as f64).collect())).is_empty());
        assert_eq!(
            detect_peaks(&env(vec![0.0, 1.0, 0.0, 1.0, 0.0])),
            vec![1, 3]
        );
        // peaks below 0.15 * max are ignored
        assert_eq!(detect_peaks(&env(vec![0.0, 1.0, 0.0, 0.1, 0.0])), vec![1]);
        // plateaus are not strict maxima
        assert!(detect_peaks(&env(vec![0.0, 1.0, 1.0, 0.0])).is_empty());
    }

    fn impulse_train(n: usize, period: usize, phase: usize) -> Vec<f64> {
        (0..n)
            .map(|t| {
                if t >= phase && (t - phase).is_multiple_of(period) {
                    1.0
                } else {
                    0.01
                }
            })
            .collect()
    }

    #[test]
    fn impulse_train_peak_spacing() {
        let s = impulse_train(399, 20, 5);
        let peaks = detect_peaks(&env(s.clone()));
        assert_eq!(peaks, (5..399).step_by(20).collect::<Vec<_>>());
        let band = spec_from(s.iter().map(|&v| vec![v]).collect());
        let d = rhythmic_descriptor(&band, &env(s));
        assert_eq!(
            (d.mean_peak_dist, d.std_peak_dist, d.max_peak_dist),
            (20.0, 0.0, 20.0)
        );
    }

    #[test]
    fn constant_and_zero_bands() {
        let c = 0.5;
        let band = spec_from(vec![vec![c; 6]; 50]);
        let d = rhythmic_descriptor(&band, &band_envelope(&band, 0.025));
        assert_eq!((d.maxamp, d.minamp), (c, c));
        assert_eq!(
            (d.count_80, d.count_15, d.count_max, d.count_min),
            (50, 50, 0, 0)
        );
        assert_eq!(
            (d.mean_peak_dist, d.std_peak_dist, d.max_peak_dist),
            (0.0, 0.0, 0.0)
        );

        let zero = spec_from(vec![vec![0.0; 6]; 50]);
        let d = rhythmic_descriptor(&zero, &band_envelope(&zero, 0.025));
        assert_eq!(d.to_array(), [0.0; 9]);
    }

    #[test]
    fn count_max_uses_matrix_entries() {
        // envelope = [1, 2]; entry 3.0 exceeds maxamp 2, entry 0.5 is below minamp 1
        let band = spec_from(vec![vec![0.5, 1.5], vec![1.0, 3.0]]);
        let d = rhythmic_descriptor(&band, &band_envelope(&band, 0.025));
        assert_eq!((d.maxamp, d.minamp), (2.0, 1.0));
        assert_eq!((d.count_max, d.count_min), (1, 1));
    }

    #[test]
    fn mfcc_of_silence_is_zero() {
        let fb = mel_filterbank(40, 2048, SR, 0.0, 11025.0).unwrap();
        let spec = spec_from(vec![vec![0.0; 1025]; 10]);
        let m = mean_mfcc(&spec, &fb, 13, 1e-10).unwrap();
        assert_eq!(m.len(), 13);
        assert!(m.iter().all(|v| v.abs() < 1e-12), "{m:?}");
    }

    #[test]
    fn mfcc_mean_of_identical_frames() {
        let fb = mel_filterbank(40, 2048, SR, 0.0, 11025.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let row: Vec<f64> = (0..1025).map(|_| rng.gen_range(0.0..2.0)).collect();
        let one = mean_mfcc(&spec_from(vec![row.clone()]), &fb, 13, 1e-10).unwrap();
        let two = mean_mfcc(&spec_from(vec![row.clone(), row]), &fb, 13, 1e-10).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn feature_vector_shape_and_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..220500).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let fv = extract_feature_vector(&excerpt(x)).unwrap();
        assert_eq!(fv.as_slice().len(), FEATURE_DIM);
        assert!(fv.as_slice().iter().all(|v| v.is_finite()));
        // 399 frames; counts bounded by the frame count
        for band in [fv.low_band(), fv.high_band()] {
            assert!(band[1] <= band[0]);
            assert!(band[2] <= band[3] && band[3] <= 399.0);
        }
        assert_eq!(FeatureVector::column_names()[31], "f31");
    }

    #[test]
    fn low_frequency_sine_leaves_high_band_empty() {
        let x: Vec<f64> = (0..220500)
            .map(|n| 0.5 * (2.0 * PI * 50.0 * n as f64 / SR as f64).sin())
            .collect();
        let fv = extract_feature_vector(&excerpt(x)).unwrap();
        let low_max = fv[1];
        assert!(low_max > 0.0);
        assert!(
            fv[10] < 1e-6 * low_max,
            "high maxamp {} vs low {}",
            fv[10],
            low_max
        );
        assert!(fv[11] < 1e-6 * low_max);
    }

    #[test]
    fn silent_excerpt_rejected() {
        let err = extract_feature_vector(&excerpt(vec![0.0; 220500])).unwrap_err();
        assert!(matches!(err, Error::SilentInput(_)));
    }

    #[test]
    fn gain_only_moves_component_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x: Vec<f64> = (0..220500)
            .map(|n| {
                0.3 * (2.0 * PI * 220.0 * n as f64 / SR as f64).sin() + rng.gen_range(-0.05..0.05)
            })
            .collect();
        let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
        let a = fx.extract(&excerpt(x.clone())).unwrap();
        let b = fx
            .extract(&excerpt(x.iter().map(|v| 2.0 * v).collect()))
            .unwrap();
        assert_eq!(b[0], 2.0 * a[0]);
        for i in 1..FEATURE_DIM {
            assert!(
                (a[i] - b[i]).abs() <= 1e-9 * a[i].abs().max(1.0),
                "component {i}"
            );
        }
    }

    proptest! {
        #[test]
        fn descriptor_invariants(values in prop::collection::vec(0.0f64..10.0, 1..200)) {
            let band = spec_from(values.iter().map(|&v| vec![v]).collect());
            let e = env(values.clone());
            let d = rhythmic_descriptor(&band, &e);
            prop_assert!(d.minamp <= d.maxamp);
            prop_assert!(d.count_80 <= d.count_15);
            prop_assert!(d.count_15 <= values.len());

            let mut rev = values.clone();
            rev.reverse();
            let rband = spec_from(rev.iter().map(|&v| vec![v]).collect());
            let r = rhythmic_descriptor(&rband, &env(rev));
            prop_assert_eq!((d.maxamp, d.minamp, d.count_80, d.count_15), (r.maxamp, r.minamp, r.count_80, r.count_15));
            prop_assert!((d.mean_peak_dist - r.mean_peak_dist).abs() < 1e-9);
            prop_assert!((d.std_peak_dist - r.std_peak_dist).abs() < 1e-9);
            prop_assert_eq!(d.max_peak_dist, r.max_peak_dist);
        }
    }
}
