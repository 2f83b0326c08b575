//! Seeded synthetic corpus standing in for a real two-class song collection.
//!
//! The `fado` recipe is a gliding voice-like harmonic stack (fundamentals
//! 200-800 Hz) over plucked-string bursts whose upper partials sit between
//! 8.2 and 10.8 kHz; nothing is placed below 100 Hz. The `other` recipe is a
//! 40-90 Hz bass line that re-attacks on every beat like a kick drum, over
//! sustained mid-range chords.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use fadogate_core::audio_io::write_wav;
use fadogate_core::{AudioBuffer, Label};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::manifest::write_manifest;

pub const DEFAULT_CLIP_S: f64 = 12.0;
const PEAK: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_per_class: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate: u32,
}

impl SynthSpec {
    pub fn new(n_per_class: usize, seed: u64) -> Self {
        Self {
            n_per_class,
            seed,
            duration_s: DEFAULT_CLIP_S,
            sample_rate: fadogate_core::CANONICAL_SAMPLE_RATE,
        }
    }
}

/// Independent stream per clip so clips can be rendered in any order.
pub fn clip_rng(seed: u64, label: Label, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class = if label == Label::Fado { 0 } else { 1u64 << 40 };
    rng.set_stream(class + index as u64);
    rng
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Raised-cosine attack of `attack` seconds followed by exponential decay.
fn pluck_env(dt: f64, attack: f64, tau: f64) -> f64 {
    if dt < 0.0 {
        0.0
    } else if dt < attack {
        0.5 - 0.5 * (PI * dt / attack).cos()
    } else {
        (-(dt - attack) / tau).exp()
    }
}

struct Pluck {
    start: f64,
    partials: Vec<(f64, f64, f64)>, // (freq, amp, phase)
    tau: f64,
}

pub fn render_fado(rng: &mut ChaCha8Rng, duration_s: f64, sr: u32) -> Vec<f64> {
    let n = (duration_s * sr as f64).round() as usize;
    let dt = 1.0 / sr as f64;
    let nyq = sr as f64 / 2.0;

    // Voice: a melody of held notes with smoothed glides and vibrato.
    let mut notes = Vec::new();
    let mut t = 0.0;
    while t < duration_s {
        notes.push((t, log_uniform(rng, 200.0, 800.0)));
        t += rng.gen_range(0.4..1.2);
    }
    let vib_rate = rng.gen_range(4.5..6.5);
    let vib_depth = rng.gen_range(0.005..0.015);
    let swell_rate = rng.gen_range(0.08..0.3);
    let swell_phase = rng.gen_range(0.0..2.0 * PI);
    let n_harm = 8;
    // weak fundamental, strongest energy in the 2nd-4th harmonics
    let harm_amp: Vec<f64> = (1..=n_harm)
        .map(|k| rng.gen_range(0.6..1.0) / (k as f64 - 2.5).abs().max(1.0))
        .collect();
    let harm_amp: Vec<f64> = harm_amp
        .iter()
        .enumerate()
        .map(|(k, a)| if k == 0 { 0.3 * a } else { *a })
        .collect();

    // Guitar: plucks at irregular short intervals.
    let mut plucks = Vec::new();
    let mut t = rng.gen_range(0.0..0.2);
    while t < duration_s {
        let f0 = log_uniform(rng, 300.0, 1200.0);
        let mut partials: Vec<(f64, f64, f64)> = (1..=3)
            .map(|k| (f0 * k as f64, 0.3 / k as f64, rng.gen_range(0.0..2.0 * PI)))
            .collect();
        for _ in 0..rng.gen_range(10..16) {
            partials.push((
                rng.gen_range(8200.0..10800.0),
                rng.gen_range(0.2..0.5),
                rng.gen_range(0.0..2.0 * PI),
            ));
        }
        plucks.push(Pluck {
            start: t,
            partials,
            tau: rng.gen_range(0.06..0.18),
        });
        t += rng.gen_range(0.12..0.35);
    }

    let mut out = vec![0.0; n];
    let mut f_smooth = notes[0].1;
    let mut phase = 0.0;
    let glide = 1.0 - (-dt / 0.03).exp();
    let mut note = 0;
    for (i, y) in out.iter_mut().enumerate() {
        let t = i as f64 * dt;
        while note + 1 < notes.len() && notes[note + 1].0 <= t {
            note += 1;
        }
        f_smooth += glide * (notes[note].1 - f_smooth);
        let f = f_smooth * (1.0 + vib_depth * (2.0 * PI * vib_rate * t).sin());
        phase = (phase + 2.0 * PI * f * dt) % (2.0 * PI * 64.0);
        // sin((k+1)x) = 2 cos(x) sin(kx) - sin((k-1)x)
        let (s1, c1) = phase.sin_cos();
        let (mut prev, mut cur) = (0.0, s1);
        let mut v = 0.0;
        for (k, a) in harm_amp.iter().enumerate() {
            if f * (k + 1) as f64 >= 7000.0 {
                break;
            }
            v += a * cur;
            (prev, cur) = (cur, 2.0 * c1 * cur - prev);
        }
        let swell = 0.65 + 0.35 * (2.0 * PI * swell_rate * t + swell_phase).sin();
        *y = 0.5 * swell * v;
    }

    for p in &plucks {
        let first = (p.start * sr as f64).ceil() as usize;
        let last = (((p.start + 8.0 * p.tau) * sr as f64) as usize).min(n);
        if first >= last {
            continue;
        }
        let t0 = first as f64 * dt - p.start;
        // A sharp attack smears energy a few hundred Hz around each
        // partial, so only the high partials get one.
        let sharp: Vec<f64> = (first..last)
            .map(|i| pluck_env(t0 + (i - first) as f64 * dt, 0.003, p.tau))
            .collect();
        let soft: Vec<f64> = (first..last)
            .map(|i| pluck_env(t0 + (i - first) as f64 * dt, 0.03, p.tau))
            .collect();
        for &(f, a, ph) in p.partials.iter().filter(|(f, _, _)| *f < nyq) {
            let env = if f > 4000.0 { &sharp } else { &soft };
            // rotating phasor instead of a sin() per sample
            let (sw, cw) = (2.0 * PI * f * dt).sin_cos();
            let (mut sv, mut cv) = (2.0 * PI * f * t0 + ph).sin_cos();
            for (y, e) in out[first..last].iter_mut().zip(env) {
                *y += e * a * sv;
                (sv, cv) = (sv * cw + cv * sw, cv * cw - sv * sw);
            }
        }
    }
    out
}

/// Beat period in seconds and the rendered clip.
pub fn render_other(rng: &mut ChaCha8Rng, duration_s: f64, sr: u32) -> (f64, Vec<f64>) {
    let n = (duration_s * sr as f64).round() as usize;
    let dt = 1.0 / sr as f64;
    let bpm = rng.gen_range(100.0..140.0);
    let beat = 60.0 / bpm;
    let n_beats = (duration_s / beat).ceil() as usize + 1;

    // Bass pitch changes only on beat boundaries, every 1, 2 or 4 beats.
    let mut bass = Vec::with_capacity(n_beats);
    while bass.len() < n_beats {
        let f = rng.gen_range(40.0..90.0);
        let hold = [1, 2, 4][rng.gen_range(0..3)];
        bass.extend(std::iter::repeat_n(f, hold));
    }
    let kick_tau = rng.gen_range(0.06..0.11);
    let floor = rng.gen_range(0.03..0.08);

    let bar = 4.0 * beat;
    let n_bars = (duration_s / bar).ceil() as usize + 1;
    let chords: Vec<Vec<(f64, f64)>> = (0..n_bars)
        .map(|_| {
            let root = log_uniform(rng, 250.0, 500.0);
            [1.0, 1.26, 1.5]
                .iter()
                .map(|r| (root * r, rng.gen_range(0.0..2.0 * PI)))
                .collect()
        })
        .collect();
    let chord_level = rng.gen_range(0.05..0.12);

    let mut out = vec![0.0; n];
    let mut phase = 0.0;
    for (i, y) in out.iter_mut().enumerate() {
        let t = i as f64 * dt;
        let b = (t / beat) as usize;
        let since = t - b as f64 * beat;
        phase = (phase + 2.0 * PI * bass[b] * dt) % (2.0 * PI);
        let amp = floor + (1.0 - floor) * pluck_env(since, 0.005, kick_tau);
        let c = &chords[(t / bar) as usize];
        let chord: f64 = c.iter().map(|(f, ph)| (2.0 * PI * f * t + ph).sin()).sum();
        *y = amp * phase.sin() + chord_level * chord;
    }
    (beat, out)
}

fn scale_to_peak(mut x: Vec<f64>) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    x
}

pub fn render_clip(spec: &SynthSpec, label: Label, index: usize) -> Vec<f64> {
    let mut rng = clip_rng(spec.seed, label, index);
    let x = match label {
        Label::Fado => render_fado(&mut rng, spec.duration_s, spec.sample_rate),
        Label::Other => render_other(&mut rng, spec.duration_s, spec.sample_rate).1,
    };
    scale_to_peak(x)
}

/// Writes `fado_NNN.wav` / `other_NNN.wav` and `manifest.csv` into
/// `out_dir`, returning the manifest path.
pub fn generate_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<PathBuf> {
    ensure!(spec.n_per_class >= 1, "need at least one clip per class");
    ensure!(spec.duration_s > 0.0, "clip duration must be positive");
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let jobs: Vec<(Label, usize)> = [Label::Fado, Label::Other]
        .into_iter()
        .flat_map(|l| (0..spec.n_per_class).map(move |i| (l, i)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(label, i)| {
            let name = format!("{}_{i:03}.wav", label.as_token());
            let buf = AudioBuffer::new(render_clip(spec, label, i), spec.sample_rate)?;
            write_wav(out_dir.join(&name), &buf)?;
            Ok((name, label))
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = out_dir.join("manifest.csv");
    write_manifest(&manifest, &rows)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fadogate_core::dsp::band_slice;
    use fadogate_core::features::{band_envelope, detect_peaks, FeatureConfig};
    use fadogate_core::FeatureExtractor;

    fn band_max(fx: &FeatureExtractor, x: &[f64], band: (f64, f64)) -> f64 {
        let spec = fx.spectrogram(x).unwrap();
        fx.band_descriptor(&spec, band).unwrap().maxamp
    }

    #[test]
    fn fado_clips_are_high_heavy() {
        let cfg = FeatureConfig::default();
        let fx = FeatureExtractor::new(cfg.clone()).unwrap();
        for i in 0..20 {
            let x = render_clip(&SynthSpec::new(20, 7), Label::Fado, i);
            let low = band_max(&fx, &x, cfg.low_band_hz);
            let high = band_max(&fx, &x, cfg.high_band_hz);
            assert!(low < 0.05 * high, "clip {i}: low {low} high {high}");
        }
    }

    #[test]
    fn other_clips_peak_on_the_beat() {
        let cfg = FeatureConfig::default();
        let fx = FeatureExtractor::new(cfg.clone()).unwrap();
        let hop_s = cfg.hop as f64 / cfg.sample_rate as f64;
        for i in 0..5 {
            let mut rng = clip_rng(7, Label::Other, i);
            let (beat, x) = render_other(&mut rng, DEFAULT_CLIP_S, cfg.sample_rate);
            let spec = fx.spectrogram(&x).unwrap();
            let band = band_slice(&spec, cfg.low_band_hz.0, cfg.low_band_hz.1).unwrap();
            let peaks = detect_peaks(&band_envelope(&band, hop_s));
            let gaps: Vec<f64> = peaks
                .windows(2)
                .map(|w| (w[1] - w[0]) as f64 * hop_s)
                .collect();
            assert!(gaps.len() >= 10);
            for g in &gaps {
                assert!(
                    (g - beat).abs() <= hop_s,
                    "clip {i}: gap {g} vs beat {beat}"
                );
            }
        }
    }

    #[test]
    fn clips_are_deterministic_and_distinct() {
        let spec = SynthSpec {
            duration_s: 2.0,
            ..SynthSpec::new(2, 3)
        };
        assert_eq!(
            render_clip(&spec, Label::Fado, 1),
            render_clip(&spec, Label::Fado, 1)
        );
        assert_ne!(
            render_clip(&spec, Label::Fado, 0),
            render_clip(&spec, Label::Fado, 1)
        );
        assert_ne!(
            render_clip(&spec, Label::Other, 0),
            render_clip(
                &SynthSpec {
                    seed: 4,
                    ..spec.clone()
                },
                Label::Other,
                0
            )
        );
        let peak = render_clip(&spec, Label::Other, 0)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - PEAK).abs() < 1e-12);
    }
}
