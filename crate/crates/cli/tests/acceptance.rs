//! End-to-end acceptance criteria. Runs as a plain binary (no libtest
//! harness) so every criterion prints its own PASS/FAIL line; exits non-zero
//! if any criterion fails.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use afb_core::diff::{
    edge_kernel_conv, finite_diff_check, mlp_apply, pool_mean, sage_layer, uniform, unpool_nearest,
    Activation, FdOptions, FdReport, MlpParams, Mode, ParamStore, Probe, SageParams, ScaleTopology,
    Tape, Topology, Var,
};
use afb_core::graph::{brute_force_neighbors, build_radius_graph, pooling_hierarchy};
use afb_core::mesh::{MeshSample, PhysicsConfig};
use afb_core::models::{
    build_model, check_model_gradients, small_cloud_config, ModelConfig, ModelKind,
};
use afb_core::physics::{divergence, drag_lift, wall_shear_stress, FlowField};
use afb_core::pipeline::{compute_loss, constant_mean_loss, evaluate_model, train, TrainConfig};
use afb_core::preprocess::{
    denormalize_targets, fit_norm_stats, normalize_inputs, normalize_targets, reynolds_number,
    NORM_EPS,
};
use afb_core::synthetic::{gen_corpus, generate, CaseKind, CaseSpec, CorpusSpec, Layout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn within(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn radius_graph_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = String::new();
    for set in 0..20 {
        let n = r.gen_range(1..=2000);
        let radius = r.gen_range(0.01..0.15);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)])
            .collect();
        let g = build_radius_graph(&pts, radius, n, set).map_err(|e| e.to_string())?;
        let got: BTreeSet<_> = g.edges.iter().copied().collect();
        let want: BTreeSet<_> = brute_force_neighbors(&pts, radius).into_iter().collect();
        if got != want || got.len() != g.edges.len() {
            worst = format!(
                "set {set} (n = {n}): {} edges vs {} brute force",
                got.len(),
                want.len()
            );
            break;
        }
    }
    let t = start.elapsed().as_secs_f64();
    within(
        worst.is_empty() && t < 30.0,
        format!("20 sets equal brute force in {t:.2} s {worst}"),
    )
}

fn normalization_fidelity() -> Outcome {
    let corpus = gen_corpus(&CorpusSpec::new(CaseKind::CylinderPotential, 50, 7))
        .map_err(|e| e.to_string())?;
    let stats = fit_norm_stats(&corpus).map_err(|e| e.to_string())?;
    // Columns: 4 inputs, 4 targets (volume branch, every node), wall nu_t (surface branch).
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 9];
    let mut roundtrip: f64 = 0.0;
    for s in &corpus {
        for i in 0..s.n_nodes() {
            let x = normalize_inputs(s.input_features(i), &stats);
            let y = normalize_targets(s.targets[i], false, &stats);
            for k in 0..4 {
                cols[k].push(x[k]);
                cols[4 + k].push(y[k]);
            }
            if s.surface_mask[i] {
                cols[8].push(normalize_targets(s.targets[i], true, &stats)[3]);
            }
            for surf in [false, true] {
                let back = denormalize_targets(
                    normalize_targets(s.targets[i], surf, &stats),
                    surf,
                    &stats,
                );
                for k in 0..4 {
                    roundtrip = roundtrip.max((back[k] - s.targets[i][k]).abs());
                }
            }
        }
    }
    let sigmas: Vec<f64> = stats
        .sigma_in
        .iter()
        .chain(&stats.sigma_out)
        .copied()
        .chain([stats.sigma_nut_surf])
        .collect();
    let (mut max_mean, mut max_std_dev): (f64, f64) = (0.0, 0.0);
    for (c, sigma) in cols.iter().zip(&sigmas) {
        let n = c.len() as f64;
        let mean = c.iter().sum::<f64>() / n;
        let std = (c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        max_mean = max_mean.max(mean.abs());
        max_std_dev = max_std_dev.max((std - sigma / (sigma + NORM_EPS)).abs());
    }
    within(
        max_mean < 1e-9 && max_std_dev < 1e-9 && roundtrip < 1e-10,
        format!("max |mean| {max_mean:.1e}, max std deviation {max_std_dev:.1e}, round trip {roundtrip:.1e}"),
    )
}

fn points(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)])
        .collect()
}

/// Gradient check of `sum W .* build(store)` for a fixed random `W`.
fn layer_check<F>(store: &ParamStore, build: F) -> afb_core::Result<FdReport>
where
    F: Fn(&mut Tape, &ParamStore) -> afb_core::Result<Var>,
{
    let shape = {
        let mut t = Tape::new();
        let out = build(&mut t, store)?;
        t.value(out).shape()
    };
    let w = Arc::new(uniform(&mut rng(99), shape.0, shape.1, 1.0));
    finite_diff_check(
        store,
        |s, need| {
            let mut t = Tape::new();
            let out = build(&mut t, s)?;
            let loss = t.weighted_sum(out, &w)?;
            Ok(Probe {
                loss: t.value(loss).data[0],
                grads: need.then(|| t.backward(loss).params(s)),
                signature: t.relu_signature(),
            })
        },
        &FdOptions::default(),
    )
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let err = |e: afb_core::Error| e.to_string();
    let pts = points(40, 3);
    let graph = build_radius_graph(&pts, 0.3, 64, 0).map_err(err)?;
    let topo = Topology::new(&graph);
    let mut r = rng(5);
    let x8 = uniform(&mut r, 40, 8, 1.0);
    let mut results: Vec<(String, FdReport)> = Vec::new();

    let mut store = ParamStore::new();
    let mlp = MlpParams::new(
        &mut store,
        &mut r,
        "mlp",
        &[8, 16, 16, 4],
        Activation::Relu,
        true,
    )
    .map_err(err)?;
    let report = layer_check(&store, |t, s| {
        let x = t.input(x8.clone());
        mlp_apply(t, s, &mlp, x, Mode::Train)
    })
    .map_err(err)?;
    results.push(("mlp_apply".into(), report));

    let mut store = ParamStore::new();
    let sage = SageParams::new(&mut store, &mut r, "sage", 8, 6);
    let report = layer_check(&store, |t, s| {
        let x = t.input(x8.clone());
        sage_layer(t, s, &sage, x, &topo)
    })
    .map_err(err)?;
    results.push(("sage_layer".into(), report));

    let mut store = ParamStore::new();
    let kernel = MlpParams::new(
        &mut store,
        &mut r,
        "k",
        &[8, 64, 64, 64, 64],
        Activation::Relu,
        false,
    )
    .map_err(err)?;
    let h0 = store.add("h", uniform(&mut r, 40, 8, 1.0), true);
    let attrs = uniform(&mut r, topo.n_edges(), 8, 1.0);
    let report = layer_check(&store, |t, s| {
        let h = t.param(s, h0);
        let e = t.input(attrs.clone());
        edge_kernel_conv(t, s, h, &topo, e, &kernel, Mode::Train)
    })
    .map_err(err)?;
    results.push(("edge_kernel_conv".into(), report));

    let hierarchy = pooling_hierarchy(&pts, &[0.5], &[0.3, 0.6], &[64, 64], 1).map_err(err)?;
    let scales = ScaleTopology::new(&hierarchy);
    let mut store = ParamStore::new();
    let h0 = store.add("h", uniform(&mut r, 40, 5, 1.0), true);
    let report = layer_check(&store, |t, s| {
        let h = t.param(s, h0);
        let coarse = pool_mean(t, h, &scales, 0)?;
        let sq = t.relu(coarse);
        unpool_nearest(t, sq, &scales, 0)
    })
    .map_err(err)?;
    results.push(("pool/unpool".into(), report));

    let opts = FdOptions {
        max_entries_per_param: Some(12),
        ..FdOptions::default()
    };
    for kind in ModelKind::ALL {
        let cfg = small_cloud_config(&ModelConfig::new(kind));
        results.push((
            kind.name().into(),
            check_model_gradients(&cfg, 40, 1, &opts).map_err(err)?,
        ));
    }
    let t = start.elapsed().as_secs_f64();
    let worst = results
        .iter()
        .max_by(|a, b| a.1.max_rel_err.total_cmp(&b.1.max_rel_err))
        .expect("non-empty");
    let all_checked = results.iter().all(|(_, r)| r.checked > 0);
    let summary: Vec<String> = results
        .iter()
        .map(|(n, r)| format!("{n} {:.1e}", r.max_rel_err))
        .collect();
    within(
        all_checked && worst.1.max_rel_err < 1e-4 && t < 300.0,
        format!("{} in {t:.1} s", summary.join(", ")),
    )
}

fn stress_oracles() -> Outcome {
    let start = Instant::now();
    let err = |e: afb_core::Error| e.to_string();
    let physics = PhysicsConfig::default();
    // (a) Couette: affine velocity, exact P1 gradients.
    let (u, h) = (3.0, 0.7);
    let couette = generate(&CaseSpec::couette(u, h)).map_err(err)?;
    let tau =
        wall_shear_stress(&couette, &FlowField::from_sample(&couette), &physics).map_err(err)?;
    let want = physics.nu * u / h;
    let couette_err = tau
        .iter()
        .map(|t| (t[0] - want).abs().max(t[1].abs()))
        .fold(0.0, f64::max);
    // (b) d'Alembert.
    let (u, a) = (1.0, 0.5);
    let mut spec = CaseSpec::cylinder(u, 0.0, a);
    spec.surface_segments = 256;
    spec.volume_nodes = 256 * 21;
    let cyl = generate(&spec).map_err(err)?;
    let f = drag_lift(&cyl, &FlowField::from_sample(&cyl), &physics).map_err(err)?;
    let scale = 0.5 * u * u * 2.0 * a;
    let dalembert = f.drag.abs().max(f.lift.abs()) / scale;
    // (c) Kutta-Joukowski.
    let mut spec = CaseSpec::cylinder(1.0, 2.0 * PI, a);
    spec.surface_segments = 256;
    spec.volume_nodes = 256 * 21;
    let cyl = generate(&spec).map_err(err)?;
    let f = drag_lift(&cyl, &FlowField::from_sample(&cyl), &physics).map_err(err)?;
    let kj = (f.lift - 2.0 * PI).abs() / (2.0 * PI);
    let t = start.elapsed().as_secs_f64();
    within(
        couette_err < 1e-12 && dalembert <= 0.02 && kj <= 0.01 && t < 60.0,
        format!(
            "Couette |tau - nu U/h| {couette_err:.1e}; Gamma = 0: max(|D|,|L|) = {:.2e} of 1/2 U^2 2a; \
             Gamma = 2 pi: L = {:.6} ({:.3}% off) in {t:.1} s",
            dalembert,
            f.lift,
            100.0 * kj
        ),
    )
}

fn divergence_order() -> Outcome {
    let mut errs = Vec::new();
    for m in [64usize, 128, 256] {
        let mut spec = CaseSpec::cylinder(1.0, 0.0, 0.5);
        spec.surface_segments = m;
        spec.volume_nodes = m * (m as f64 * 8f64.ln() / (2.0 * PI)).round() as usize;
        spec.layout = Layout::Structured;
        let s = generate(&spec).map_err(|e| e.to_string())?;
        let div = divergence(&s, &FlowField::from_sample(&s)).map_err(|e| e.to_string())?;
        errs.push(div.iter().fold(0.0f64, |a, d| a.max(d.abs())));
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    within(
        orders.iter().all(|&p| p >= 0.9),
        format!(
            "max |div U| = {:.3e}, {:.3e}, {:.3e} at m = 64/128/256; orders {:.2}, {:.2}",
            errs[0], errs[1], errs[2], orders[0], orders[1]
        ),
    )
}

fn loss_contract() -> Outcome {
    let mut r = rng(17);
    let n = 500;
    let row = |r: &mut ChaCha8Rng| -> [f64; 4] { std::array::from_fn(|_| r.gen_range(-3.0..3.0)) };
    let pred: Vec<[f64; 4]> = (0..n).map(|_| row(&mut r)).collect();
    let target: Vec<[f64; 4]> = (0..n).map(|_| row(&mut r)).collect();
    let mask: Vec<bool> = (0..n).map(|_| r.gen_bool(0.1)).collect();
    let mut exact = true;
    for lambda in [0.0, 1.0, 10.0] {
        let l = compute_loss(&pred, &target, &mask, lambda).map_err(|e| e.to_string())?;
        exact &= l.total == l.volume + lambda * l.surface;
    }
    let mut perturbed = pred.clone();
    for (p, &m) in perturbed.iter_mut().zip(&mask) {
        if m {
            *p = row(&mut r);
        }
    }
    let a = compute_loss(&pred, &target, &mask, 0.0).map_err(|e| e.to_string())?;
    let b = compute_loss(&perturbed, &target, &mask, 0.0).map_err(|e| e.to_string())?;
    within(
        exact && a.total == b.total,
        format!(
            "decomposition exact for lambda in {{0, 1, 10}}; lambda = 0 invariant: {}",
            a.total == b.total
        ),
    )
}

fn desk_scale_learning() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        let corpus = gen_corpus(&CorpusSpec::new(CaseKind::CylinderPotential, 25, seed))
            .map_err(|e| e.to_string())?;
        let (train_set, test_set): (&[MeshSample], &[MeshSample]) = corpus.split_at(20);
        let stats = fit_norm_stats(train_set).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            epochs: 200,
            samples_per_batch: 4,
            seed,
            ..TrainConfig::default()
        };
        let out = train(
            train_set,
            &stats,
            &ModelConfig::new(ModelKind::Graphsage),
            &cfg,
        )
        .map_err(|e| e.to_string())?;
        let m = evaluate_model(
            &out.model,
            test_set,
            &stats,
            &cfg,
            &PhysicsConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let base = constant_mean_loss(test_set, &stats).map_err(|e| e.to_string())?;
        let ratio = m.loss_volume / base.volume;
        ok &= ratio <= 0.5;
        lines.push(format!(
            "seed {seed}: {:.3} / {:.3} = {ratio:.2}",
            m.loss_volume, base.volume
        ));
    }
    let t = start.elapsed().as_secs_f64();
    within(
        ok && t < 900.0,
        format!("test L_V / baseline: {} in {t:.0} s", lines.join("; ")),
    )
}

fn parameter_counts() -> Outcome {
    let count = |k| build_model(&ModelConfig::new(k), 0).map(|m| m.param_count());
    let sage = count(ModelKind::Graphsage).map_err(|e| e.to_string())?;
    let gno = count(ModelKind::Gno).map_err(|e| e.to_string())?;
    let rs = (sage as f64 - 29140.0).abs() / 29140.0;
    let rg = (gno as f64 - 23260.0).abs() / 23260.0;
    within(
        rs < 0.05 && rg < 0.05,
        format!(
            "graphsage {sage} ({:.2}%), gno {gno} ({:.2}%)",
            100.0 * rs,
            100.0 * rg
        ),
    )
}

fn protocol_constants() -> Outcome {
    let train = afb_cli::parse([
        "afb",
        "train",
        "--train-dir",
        "d",
        "--stats",
        "s",
        "--out",
        "o",
    ])
    .map_err(|e| e.to_string())?;
    let t = afb_cli::resolved_config(&train);
    let eval = afb_cli::parse([
        "afb",
        "eval",
        "--test-dir",
        "d",
        "--ckpt",
        "c",
        "--stats",
        "s",
    ])
    .map_err(|e| e.to_string())?;
    let e = afb_cli::resolved_config(&eval);
    let checks = [
        t["train"]["radius"] == 0.1,
        t["train"]["train_max_neighbors"] == 64,
        t["train"]["eval_max_neighbors"] == 512,
        e["eval"]["eval_max_neighbors"] == 512,
        t["train"]["subsample"] == 1600,
        t["train"]["max_lr"] == 3e-3,
        t["train"]["lambda_surface"] == 1.0,
        e["physics"]["nu"] == 1e-5,
        reynolds_number(10.0, 1.0, 1e-5).ok() == Some(1e6),
        reynolds_number(50.0, 1.0, 1e-5).ok() == Some(5e6),
    ];
    within(
        checks.iter().all(|&c| c),
        format!(
            "{}/{} constants resolved as expected",
            checks.iter().filter(|&&c| c).count(),
            checks.len()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let run = |args: &[&str]| afb_cli::run(std::iter::once("afb").chain(args.iter().copied()));
    let gen = |out: &str, seed: &str| {
        run(&[
            "gen-synthetic",
            "--case",
            "cylinder_potential",
            "--n-samples",
            "4",
            "--out-dir",
            out,
            "--seed",
            seed,
            "--surface-segments",
            "32",
            "--volume-nodes",
            "320",
        ])
    };
    let mut codes = vec![gen(&d("train"), "0"), gen(&d("test"), "1")];
    codes.push(run(&[
        "fit-stats",
        "--train-dir",
        &d("train"),
        "--out",
        &d("stats.json"),
    ]));
    for tag in ["a", "b"] {
        codes.push(run(&[
            "train",
            "--deterministic",
            "--train-dir",
            &d("train"),
            "--stats",
            &d("stats.json"),
            "--model",
            "gno",
            "--epochs",
            "4",
            "--seed",
            "3",
            "--out",
            &d(&format!("{tag}.ckpt")),
        ]));
        codes.push(run(&[
            "eval",
            "--deterministic",
            "--test-dir",
            &d("test"),
            "--stats",
            &d("stats.json"),
            "--ckpt",
            &d(&format!("{tag}.ckpt")),
            "--report",
            &d(&format!("{tag}.csv")),
        ]));
    }
    if codes.iter().any(|&c| c != 0) {
        return Err(format!("exit codes {codes:?}"));
    }
    let same = |x: &str, y: &str| {
        std::fs::read(d(x))
            .ok()
            .zip(std::fs::read(d(y)).ok())
            .is_some_and(|(p, q)| p == q)
    };
    let pairs = [
        ("a.ckpt", "b.ckpt"),
        ("a.ckpt.history.jsonl", "b.ckpt.history.jsonl"),
        ("a.csv", "b.csv"),
        ("a.json", "b.json"),
        ("a.samples.csv", "b.samples.csv"),
    ];
    let equal = pairs.iter().filter(|(x, y)| same(x, y)).count();
    within(
        equal == pairs.len(),
        format!("{equal}/{} artifact pairs bitwise identical", pairs.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("radius-graph oracle equivalence", radius_graph_oracle),
        ("normalization fidelity", normalization_fidelity),
        ("gradient suite", gradient_suite),
        ("stress-force oracles", stress_oracles),
        ("divergence diagnostic", divergence_order),
        ("loss contract", loss_contract),
        ("desk-scale learning", desk_scale_learning),
        ("parameter-count anchors", parameter_counts),
        ("protocol constants", protocol_constants),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let (status, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {status} {name}: {detail}", k + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
