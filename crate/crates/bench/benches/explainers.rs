use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pointgame_core::explain::{GradOutput, GradVariant, LimsseVariant, PerturbMode, Reduction};
use pointgame_core::models::forward;
use pointgame_core::{
    explain, Arch, Method, MethodOptions, ModelConfig, NetworkParams, SeededRng, TokenSequence,
};

const VOCAB: usize = 500;
const DOC_LEN: usize = 40;

fn setup(arch: Arch) -> (NetworkParams, TokenSequence) {
    let mut cfg = ModelConfig::new(arch, VOCAB, 2);
    cfg.embed_dim = 32;
    cfg.hidden_dim = 32;
    let mut rng = SeededRng::new(7);
    let params = NetworkParams::init(&cfg, &mut rng).unwrap();
    let ids = (0..DOC_LEN).map(|_| rng.index(VOCAB)).collect();
    (params, TokenSequence::new(ids))
}

const ARCHS: [Arch; 5] = [Arch::Gru, Arch::QGru, Arch::Lstm, Arch::QLstm, Arch::Cnn];

fn bench_forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    for arch in ARCHS {
        let (params, x) = setup(arch);
        group.bench_function(BenchmarkId::from_parameter(arch), |b| {
            b.iter(|| forward(&params, &x).unwrap())
        });
    }
    group.finish();
}

fn bench_methods(c: &mut Criterion) {
    let options = MethodOptions {
        limsse_samples: 300,
        ..MethodOptions::default()
    };
    let methods = [
        Method::Gradient(GradVariant::Simple, GradOutput::Score, Reduction::Dot),
        Method::Gradient(GradVariant::Integrated, GradOutput::Score, Reduction::Dot),
        Method::Lrp,
        Method::DeepLift,
        Method::Perturb(PerturbMode::Omit, 3),
        Method::Limsse(LimsseVariant::MagnitudeScore),
    ];
    for arch in [Arch::Lstm, Arch::Cnn] {
        let (params, x) = setup(arch);
        let mut group = c.benchmark_group(format!("explain/{arch}"));
        group.sample_size(20);
        for m in &methods {
            group.bench_function(m.to_string(), |b| {
                b.iter(|| explain(&params, &x, 0, m, &options).unwrap())
            });
        }
        group.finish();
    }
}

criterion_group!(benches, bench_forward, bench_methods);
criterion_main!(benches);
