use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sleepnet_bench::{epoch_batch, trial_history};
use sleepnet_core::hpo::{suggest, SearchSpace, TpeConfig};
use sleepnet_core::preprocess::{detect_qrs, Sos};
use sleepnet_core::synthetic::{synthetic_ecg, EcgSpec};
use sleepnet_core::{ConvNet, Mode, ModelConfig, EPOCH_SAMPLES};

fn network(c: &mut Criterion) {
    let mut group = c.benchmark_group("network");
    group.sample_size(10);
    for (blocks, filters) in [(2, 8), (4, 16)] {
        let cfg = ModelConfig::new(blocks, 7, filters, 1e-3);
        let net = ConvNet::<f32>::new(&cfg, 0, 5, EPOCH_SAMPLES).unwrap();
        let batch = epoch_batch(16);
        let labels: Vec<usize> = (0..16).map(|i| i % 5).collect();
        let id = format!("{blocks}x{filters}");
        group.bench_with_input(BenchmarkId::new("infer", &id), &batch, |b, x| b.iter(|| net.infer(x).unwrap()));
        group.bench_with_input(BenchmarkId::new("forward", &id), &batch, |b, x| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            b.iter(|| net.forward(x, Mode::Train, &mut rng).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("loss_and_gradients", &id), &batch, |b, x| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            b.iter(|| net.loss_and_gradients(x, &labels, &[1.0; 5], &mut rng).unwrap())
        });
    }
    group.finish();
}

fn signal(c: &mut Criterion) {
    let rate = 125.0;
    let (ecg, _) = synthetic_ecg(&EcgSpec::default(), rate, 600.0, 1);
    let hp = Sos::butterworth_highpass(15.0, 4, rate);
    c.bench_function("filtfilt_highpass_10min", |b| b.iter(|| hp.filtfilt(&ecg)));
    c.bench_function("detect_qrs_10min", |b| b.iter(|| detect_qrs(&ecg, rate)));
}

fn search(c: &mut Criterion) {
    let space = SearchSpace::default();
    let tpe = TpeConfig::default();
    for n in [20, 50] {
        let history = trial_history(n, &space);
        c.bench_function(&format!("tpe_suggest_{n}_trials"), |b| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            b.iter(|| suggest(&history, &space, &tpe, &mut rng))
        });
    }
}

criterion_group!(benches, network, signal, search);
criterion_main!(benches);
