use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rehab_core::acquisition::{train_q_network, AgentConfig};
use rehab_core::corpus::Corpus;
use rehab_core::kinematics::extract;
use rehab_core::numerics::{Head, MlpParams, MlpSpec};
use rehab_core::prediction::{compact_mlp_grid, loso, Algorithm, Standardizer};
use rehab_core::synthdata::{generate_dataset, GeneratorConfig};
use rehab_core::{Component, Exercise, QualityThreshold};

fn small_corpus() -> Corpus {
    let config = GeneratorConfig {
        healthy_subjects: 3,
        stroke_subjects: 4,
        ..GeneratorConfig::default()
    };
    let dataset = generate_dataset(&config).expect("generate");
    Corpus::from_sessions(&dataset.sessions).expect("segment")
}

fn features(c: &mut Criterion) {
    let corpus = small_corpus();
    let clip = corpus.clips[0].clone();
    let mut group = c.benchmark_group("extract");
    for component in Component::ALL {
        group.bench_function(component.as_str(), |b| {
            b.iter(|| extract(black_box(&clip), component).expect("extract"))
        });
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let spec = MlpSpec::new(60, &[64, 64], 61, Head::Identity, 0);
    let params = MlpParams::init(&spec).expect("init");
    let input = vec![0.1; 60];
    c.bench_function("q_network_forward", |b| {
        b.iter(|| params.forward(black_box(&input)).expect("forward"))
    });
}

fn classifier_loso(c: &mut Criterion) {
    let corpus = small_corpus();
    let dataset = corpus
        .dataset(Exercise::E1, Component::Rom, QualityThreshold::FullScore)
        .expect("dataset");
    let grid = compact_mlp_grid();
    let mut group = c.benchmark_group("loso");
    group.sample_size(10);
    group.bench_function("mlp_e1_rom", |b| {
        b.iter(|| loso(black_box(&dataset), Algorithm::Mlp, &grid[..1]).expect("loso"))
    });
    group.finish();
}

fn agent_episodes(c: &mut Criterion) {
    let corpus = small_corpus();
    let dataset = corpus
        .dataset(Exercise::E1, Component::Compensation, QualityThreshold::FullScore)
        .expect("dataset");
    let x = Standardizer::fit(&dataset)
        .and_then(|s| s.transform(&dataset))
        .expect("standardize")
        .matrix();
    let labels = dataset.labels();
    let config = AgentConfig {
        episodes: 50,
        warmup: 64,
        ..AgentConfig::default()
    };
    let mut group = c.benchmark_group("agent");
    group.sample_size(10);
    group.bench_function("50_episodes", |b| {
        b.iter(|| train_q_network(x.view(), &labels, black_box(&config)).expect("train"))
    });
    group.finish();
}

criterion_group!(benches, features, forward, classifier_loso, agent_episodes);
criterion_main!(benches);
