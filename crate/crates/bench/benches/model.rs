use criterion::{criterion_group, criterion_main, Criterion};
use trafficnet::model::ModelType;
use trafficnet::train::sample_gradients;
use trafficnet_bench::{mid_config, model, tiny_training};

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward_128x112");
    g.sample_size(10);
    for t in ModelType::ALL {
        let f = model(&mid_config(t));
        g.bench_function(format!("type{t}"), |b| {
            b.iter(|| {
                f.unet
                    .graph
                    .infer(&f.params, &[(f.unet.input, &f.input)], f.unet.output)
                    .unwrap()
            })
        });
    }
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("tiny_train_step");
    for t in ModelType::ALL {
        let (unet, pairs) = tiny_training(t, 1);
        let params = trafficnet::autodiff::ParamStore::init(&unet.graph, 0);
        g.bench_function(format!("type{t}"), |b| {
            b.iter(|| sample_gradients(&unet, &params, &pairs[0]).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, forward, train_step);
criterion_main!(benches);
