use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fadogate_core::dsp::SpectrumAnalyzer;
use fadogate_core::excerpt::select_excerpt;
use fadogate_core::features::FeatureConfig;
use fadogate_core::svm::train_smo;
use fadogate_core::{
    AudioBuffer, ExcerptStrategy, FeatureExtractor, SvmParams, CANONICAL_SAMPLE_RATE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
}

fn spectrum(c: &mut Criterion) {
    let analyzer = SpectrumAnalyzer::new(1102, 2048).unwrap();
    let frame = noise(1102, 1);
    c.bench_function("magnitude_spectrum_2048", |b| {
        b.iter(|| analyzer.magnitudes(&frame).unwrap())
    });
}

fn features(c: &mut Criterion) {
    let song = AudioBuffer::new(
        noise(30 * CANONICAL_SAMPLE_RATE as usize, 2),
        CANONICAL_SAMPLE_RATE,
    )
    .unwrap();
    let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    c.bench_function("max_rms_excerpt_30s", |b| {
        b.iter(|| select_excerpt(&song, ExcerptStrategy::MaxRms, 10.0).unwrap())
    });
    let ex = select_excerpt(&song, ExcerptStrategy::MaxRms, 10.0).unwrap();
    c.bench_function("extract_features_10s", |b| {
        b.iter(|| fx.extract(&ex).unwrap())
    });
}

fn smo(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 300;
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| if x[0] + 0.3 * x[1] > 0.0 { 1.0 } else { -1.0 })
        .collect();
    let params = SvmParams::new(8.0, 0.05);
    c.bench_function("smo_300x32", |b| {
        b.iter_batched(
            || (),
            |_| train_smo(&xs, &ys, &params).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, spectrum, features, smo);
criterion_main!(benches);
