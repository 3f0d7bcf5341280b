use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use p2px_core::render::{compute_weights, render_feature};
use p2px_core::tensor::{RaySegments, Tape, Tensor};

fn render(c: &mut Criterion) {
    let rays = p2px_bench::random_rays(1024, 32, 1);
    let channels = 16;
    let features = vec![0.5; 32 * channels];
    c.bench_function("weights_and_features_1024x32", |b| {
        b.iter(|| {
            rays.iter()
                .map(|(s, d)| {
                    let w = compute_weights(s, d).unwrap();
                    render_feature(&w.weights, &features, channels)[0]
                })
                .sum::<f64>()
        })
    });

    let mut offsets = vec![0];
    let mut deltas = Vec::new();
    let mut sigma = Vec::new();
    for (s, d) in &rays {
        sigma.extend_from_slice(s);
        deltas.extend_from_slice(d);
        offsets.push(sigma.len());
    }
    let segs = Arc::new(RaySegments { offsets, deltas });
    let n = sigma.len();
    let sigma = Tensor::new(vec![n], sigma);
    let feat = Tensor::full(&[n, channels], 0.5);
    c.bench_function("tape_composite_forward_backward_1024x32", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let s = tape.leaf(sigma.clone());
            let f = tape.leaf(feat.clone());
            let out = tape.composite(s, f, segs.clone());
            let loss = tape.sum(out);
            let grads = tape.backward(loss).unwrap();
            grads.get(s).map(|g| g[0])
        })
    });
}

criterion_group!(benches, render);
criterion_main!(benches);
