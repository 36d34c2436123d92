use std::sync::Arc;

use afb_bench::cloud;
use afb_core::diff::{uniform, Matrix, Mode, Tape};
use afb_core::models::{build_model, prepare_topology, ModelConfig, ModelKind};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const NODES: usize = 1600;

fn passes(c: &mut Criterion) {
    let pts = cloud(NODES, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut x = uniform(&mut rng, NODES, 4, 1.0);
    for (i, p) in pts.iter().enumerate() {
        x.row_mut(i)[..2].copy_from_slice(p);
    }
    let target = Arc::new(Matrix::zeros(NODES, 4));
    let weights = Arc::new(vec![1.0 / NODES as f64; NODES]);
    let mut g = c.benchmark_group("model_1600_nodes");
    g.sample_size(20);
    for kind in ModelKind::ALL {
        let mut cfg = ModelConfig::new(kind);
        // Same mean degree as radius 0.1 on a dense airfoil mesh.
        cfg.radius = 0.08;
        let model = build_model(&cfg, 0).unwrap();
        let topo = prepare_topology(&cfg, &pts, 64, 0).unwrap();
        g.bench_function(format!("{kind}/forward_eval"), |b| {
            b.iter(|| {
                let mut t = Tape::new();
                model.forward(&mut t, &x, &topo, Mode::Eval).unwrap()
            })
        });
        g.bench_function(format!("{kind}/forward_backward"), |b| {
            b.iter(|| {
                let mut t = Tape::new();
                let y = model.forward(&mut t, &x, &topo, Mode::Train).unwrap();
                let l = t.weighted_sq_err(y, &target, &weights).unwrap();
                t.backward(l).params(&model.store)
            })
        });
    }
    g.finish();
}

criterion_group!(benches, passes);
criterion_main!(benches);
