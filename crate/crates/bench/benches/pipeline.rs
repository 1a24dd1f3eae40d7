use criterion::{black_box, criterion_group, criterion_main, Criterion};
use toao_core::extraction::{default_growth_radius, flood_fill, GrowthParams};
use toao_core::synth::{generate_field, SceneSpec};
use toao_core::{extract, ExtractionConfig};

fn pipeline(c: &mut Criterion) {
    let spec = SceneSpec::flower_adversarial();
    let scene = generate_field(&spec).unwrap();
    let field = &scene.field;
    let vocab = spec.vocabulary(0, 2).unwrap();
    let object = vocab.require("a bouquet of sunflowers").unwrap();
    let part = vocab.require("stem").unwrap();
    let cfg = ExtractionConfig::default();

    c.bench_function("knn_16_all_points", |b| {
        b.iter(|| (0..field.len()).map(|i| field.knn(field.position(i), 16).len()).sum::<usize>())
    });

    let result = extract(field, object, part, &cfg).unwrap();
    let params = GrowthParams { theta_dino: cfg.theta_dino, radius: default_growth_radius(field) };
    let all: Vec<usize> = (0..field.len()).collect();
    c.bench_function("flood_fill", |b| {
        b.iter(|| flood_fill(field, black_box(&result.flood_seeds), params, &all).unwrap())
    });

    c.bench_function("extract_two_stage", |b| b.iter(|| extract(field, black_box(object), part, &cfg).unwrap()));
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
