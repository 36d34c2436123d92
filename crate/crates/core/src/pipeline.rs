//! Training, evaluation and score reports.
//!
//! The loss is `L = L_V + lambda * L_S`: the mean over volume (resp. surface)
//! nodes of the squared 4-channel error, in normalized units. Per-sample
//! losses are averaged; samples are never pooled node-wise.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::{
    adam_step, apply_bn_updates, AdamConfig, Matrix, Mode, OneCycle, OptimState, ScaleTopology,
    Tape,
};
use crate::error::{Error, Result};
use crate::graph::{derive_seed, subsample};
use crate::mesh::{list_samples, read_sample, MeshSample, PhysicsConfig};
use crate::models::{build_model, model_graph, Model, ModelConfig};
use crate::physics::{drag_lift, FlowField, SurfaceForces};
use crate::preprocess::{
    denormalize_targets, normalize_inputs, normalize_targets, reynolds_number, NormStats,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Graphs per optimizer step.
    pub samples_per_batch: usize,
    /// Nodes drawn per sample and epoch (all nodes if the mesh is smaller).
    pub subsample: usize,
    /// Radius of the finest graph, for training and evaluation.
    pub radius: f64,
    pub train_max_neighbors: usize,
    pub eval_max_neighbors: usize,
    pub max_lr: f64,
    pub lambda_surface: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            samples_per_batch: 1,
            subsample: 1600,
            radius: 0.1,
            train_max_neighbors: 64,
            eval_max_neighbors: 512,
            max_lr: 3e-3,
            lambda_surface: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("samples_per_batch", self.samples_per_batch),
            ("subsample", self.subsample),
            ("train_max_neighbors", self.train_max_neighbors),
            ("eval_max_neighbors", self.eval_max_neighbors),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!(
                "radius must be > 0, got {}",
                self.radius
            )));
        }
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(Error::Config(format!(
                "max_lr must be > 0, got {}",
                self.max_lr
            )));
        }
        if !(self.lambda_surface >= 0.0 && self.lambda_surface.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda_surface
            )));
        }
        Ok(())
    }

    /// `model` with its finest graph radius replaced by ours.
    pub fn apply_radius(&self, model: &ModelConfig) -> ModelConfig {
        let mut m = model.clone();
        m.radius = self.radius;
        for r in [&mut m.unet_radii, &mut m.mgno_radii] {
            if let Some(r0) = r.first_mut() {
                *r0 = self.radius;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    pub total: f64,
    pub volume: f64,
    pub surface: f64,
}

/// `(L, L_V, L_S)`; `L_S = 0` when no surface node is present.
pub fn compute_loss(
    pred: &[[f64; 4]],
    target: &[[f64; 4]],
    surface_mask: &[bool],
    lambda: f64,
) -> Result<Loss> {
    if pred.len() != target.len() || pred.len() != surface_mask.len() {
        return Err(Error::Shape(format!(
            "{} predictions, {} targets, {} mask entries",
            pred.len(),
            target.len(),
            surface_mask.len()
        )));
    }
    let (mut sv, mut nv, mut ss, mut ns) = (0.0, 0usize, 0.0, 0usize);
    for ((p, t), &s) in pred.iter().zip(target).zip(surface_mask) {
        let e: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        if s {
            ss += e;
            ns += 1;
        } else {
            sv += e;
            nv += 1;
        }
    }
    if nv == 0 {
        return Err(Error::Shape("loss needs at least one volume node".into()));
    }
    let volume = sv / nv as f64;
    let surface = if ns == 0 { 0.0 } else { ss / ns as f64 };
    Ok(Loss {
        total: volume + lambda * surface,
        volume,
        surface,
    })
}

/// Per-node weights turning `sum_i w_i |e_i|^2` into `L_V + lambda * L_S`.
fn loss_weights(mask: &[bool], lambda: f64, scale: f64) -> Vec<f64> {
    let ns = mask.iter().filter(|&&m| m).count();
    let nv = mask.len() - ns;
    mask.iter()
        .map(|&s| {
            if s {
                scale * lambda / ns as f64
            } else {
                scale / nv as f64
            }
        })
        .collect()
}

/// Normalized inputs and targets of `nodes` of a sample.
pub struct Prepared {
    pub points: Vec<[f64; 2]>,
    pub x: Matrix,
    pub y: Vec<[f64; 4]>,
    pub mask: Vec<bool>,
}

pub fn prepare(sample: &MeshSample, nodes: &[usize], stats: &NormStats) -> Prepared {
    let mut x = Matrix::zeros(nodes.len(), 4);
    for (r, &i) in nodes.iter().enumerate() {
        x.row_mut(r)
            .copy_from_slice(&normalize_inputs(sample.input_features(i), stats));
    }
    Prepared {
        points: nodes.iter().map(|&i| sample.node_pos[i]).collect(),
        x,
        y: nodes
            .iter()
            .map(|&i| normalize_targets(sample.targets[i], sample.surface_mask[i], stats))
            .collect(),
        mask: nodes.iter().map(|&i| sample.surface_mask[i]).collect(),
    }
}

fn rows(m: &Matrix) -> Vec<[f64; 4]> {
    (0..m.rows)
        .map(|r| m.row(r).try_into().expect("4 columns"))
        .collect()
}

fn to_matrix(v: &[[f64; 4]]) -> Matrix {
    Matrix::from_rows(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub loss_volume: f64,
    pub loss_surface: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub train_time_s: f64,
}

/// One optimizer step's disjoint union of subsampled graphs; samples are
/// shifted apart along x so no edge crosses between them.
struct Batch {
    x: Matrix,
    y: Arc<Matrix>,
    weights: Arc<Vec<f64>>,
    topo: ScaleTopology,
    parts: Vec<(usize, usize)>,
    masks: Vec<bool>,
}

fn make_batch(
    samples: &[&MeshSample],
    stats: &NormStats,
    model: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<Batch> {
    let reach = model
        .ladder()
        .1
        .iter()
        .copied()
        .fold(train.radius, f64::max);
    let mut points = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut weights = Vec::new();
    let mut masks = Vec::new();
    let mut parts = Vec::new();
    let mut offset = 0.0;
    let b = samples.len() as f64;
    for (k, s) in samples.iter().enumerate() {
        let n = train.subsample.min(s.n_nodes());
        let nodes = subsample(s, n, derive_seed(seed, k as u64))?;
        let p = prepare(s, &nodes, stats);
        if p.mask.iter().all(|&m| m) {
            return Err(Error::Validation(
                "subsample contains no volume node".into(),
            ));
        }
        let (lo, hi) = p
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
                (lo.min(q[0]), hi.max(q[0]))
            });
        let shift = offset - lo;
        points.extend(p.points.iter().map(|q| [q[0] + shift, q[1]]));
        offset += hi - lo + 2.0 * reach + 1.0;
        parts.push((x.len(), p.y.len()));
        x.extend((0..p.x.rows).map(|r| -> [f64; 4] { p.x.row(r).try_into().expect("4 columns") }));
        weights.extend(loss_weights(&p.mask, train.lambda_surface, 1.0 / b));
        y.extend(p.y);
        masks.extend(p.mask);
    }
    let hierarchy = model_graph(
        model,
        &points,
        train.train_max_neighbors,
        derive_seed(seed, u64::MAX),
    )?;
    Ok(Batch {
        x: to_matrix(&x),
        y: Arc::new(to_matrix(&y)),
        weights: Arc::new(weights),
        topo: ScaleTopology::new(&hierarchy),
        parts,
        masks,
    })
}

/// Adam at the one-cycle learning rate, one fresh subsample and graph per
/// sample and epoch. Samples are visited in a seeded order per epoch.
pub fn train(
    dataset: &[MeshSample],
    stats: &NormStats,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_from(
        build_model(&config.apply_radius(model_config), config.seed)?,
        dataset,
        stats,
        config,
    )
}

/// [`train`] starting from existing parameters.
pub fn train_from(
    mut model: Model,
    dataset: &[MeshSample],
    stats: &NormStats,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Validation("empty training set".into()));
    }
    let start = Instant::now();
    let mcfg = config.apply_radius(&model.config);
    let steps_per_epoch = dataset.len().div_ceil(config.samples_per_batch);
    let total = config.epochs * steps_per_epoch;
    let schedule = OneCycle::default();
    let mut optim = OptimState::new(&model.store, AdamConfig::default());
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step = 0;
    for epoch in 0..config.epochs {
        let epoch_seed = derive_seed(config.seed, epoch as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let mut sums = [0.0; 3];
        let mut lr = 0.0;
        for (b, chunk) in order.chunks(config.samples_per_batch).enumerate() {
            let members: Vec<&MeshSample> = chunk.iter().map(|&i| &dataset[i]).collect();
            let batch = make_batch(
                &members,
                stats,
                &mcfg,
                config,
                derive_seed(epoch_seed, b as u64),
            )?;
            let mut tape = Tape::new();
            let pred = model.forward(&mut tape, &batch.x, &batch.topo, Mode::Train)?;
            let loss = tape.weighted_sq_err(pred, &batch.y, &batch.weights)?;
            let predicted = rows(tape.value(pred));
            let target = rows(&batch.y);
            for &(at, n) in &batch.parts {
                let l = compute_loss(
                    &predicted[at..at + n],
                    &target[at..at + n],
                    &batch.masks[at..at + n],
                    config.lambda_surface,
                )?;
                if !l.total.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        loss: l.total,
                    });
                }
                sums[0] += l.total;
                sums[1] += l.volume;
                sums[2] += l.surface;
            }
            let grads = tape.backward(loss).params(&model.store);
            if grads
                .0
                .iter()
                .any(|g| g.data.iter().any(|v| !v.is_finite()))
            {
                return Err(Error::Divergence {
                    epoch,
                    loss: tape.value(loss).data[0],
                });
            }
            lr = schedule.lr(step, total, config.max_lr)?;
            adam_step(&mut model.store, &grads, &mut optim, lr)?;
            apply_bn_updates(&mut model.store, tape.bn_updates());
            step += 1;
        }
        let n = dataset.len() as f64;
        history.push(EpochRecord {
            epoch,
            loss: sums[0] / n,
            loss_volume: sums[1] / n,
            loss_surface: sums[2] / n,
            lr,
        });
    }
    Ok(TrainOutcome {
        model,
        history,
        train_time_s: start.elapsed().as_secs_f64(),
    })
}

pub fn write_history(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for r in history {
        serde_json::to_writer(&mut w, r).expect("record serializes");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Predicted fields of a full mesh, in normalized and physical units.
pub struct Prediction {
    pub normalized: Vec<[f64; 4]>,
    pub physical: FlowField,
    pub inference_s: f64,
}

/// Full-mesh inference with eval-mode batch norm. Never modifies `model`.
pub fn predict(
    model: &Model,
    sample: &MeshSample,
    stats: &NormStats,
    config: &TrainConfig,
) -> Result<Prediction> {
    let start = Instant::now();
    let nodes: Vec<usize> = (0..sample.n_nodes()).collect();
    let p = prepare(sample, &nodes, stats);
    let mcfg = config.apply_radius(&model.config);
    let hierarchy = model_graph(&mcfg, &p.points, config.eval_max_neighbors, config.seed)?;
    let topo = ScaleTopology::new(&hierarchy);
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &p.x, &topo, Mode::Eval)?;
    let normalized = rows(tape.value(out));
    let physical = FlowField::new(
        normalized
            .iter()
            .zip(&sample.surface_mask)
            .map(|(&v, &s)| denormalize_targets(v, s, stats))
            .collect(),
    );
    Ok(Prediction {
        normalized,
        physical,
        inference_s: start.elapsed().as_secs_f64(),
    })
}

/// Per-sample integrated forces, prediction versus truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcePair {
    pub tau_pred: [f64; 2],
    pub tau_true: [f64; 2],
    pub wp_pred: [f64; 2],
    pub wp_true: [f64; 2],
    /// `[drag, lift]`.
    pub force_pred: [f64; 2],
    pub force_true: [f64; 2],
}

impl ForcePair {
    fn new(pred: &SurfaceForces, truth: &SurfaceForces) -> Self {
        Self {
            tau_pred: pred.integral_tau,
            tau_true: truth.integral_tau,
            wp_pred: pred.integral_wp,
            wp_true: truth.integral_wp,
            force_pred: [pred.drag, pred.lift],
            force_true: [truth.drag, truth.lift],
        }
    }
}

pub fn force_pair(
    sample: &MeshSample,
    pred: &FlowField,
    truth: &FlowField,
    physics: &PhysicsConfig,
) -> Result<ForcePair> {
    Ok(ForcePair::new(
        &drag_lift(sample, pred, physics)?,
        &drag_lift(sample, truth, physics)?,
    ))
}

/// Mean squared error over samples of `(∮τ_x, ∮τ_y, ∮P_x, ∮P_y)`.
pub fn force_mse(pairs: &[ForcePair]) -> [f64; 4] {
    if pairs.is_empty() {
        return [0.0; 4];
    }
    let mut s = [0.0; 4];
    for p in pairs {
        let d = [
            p.tau_pred[0] - p.tau_true[0],
            p.tau_pred[1] - p.tau_true[1],
            p.wp_pred[0] - p.wp_true[0],
            p.wp_pred[1] - p.wp_true[1],
        ];
        for k in 0..4 {
            s[k] += d[k] * d[k];
        }
    }
    s.map(|v| v / pairs.len() as f64)
}

pub fn integral_force_errors(
    samples: &[MeshSample],
    pred: &[FlowField],
    truth: &[FlowField],
    physics: &PhysicsConfig,
) -> Result<[f64; 4]> {
    if samples.len() != pred.len() || samples.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} samples, {} predictions, {} truths",
            samples.len(),
            pred.len(),
            truth.len()
        )));
    }
    let pairs = samples
        .iter()
        .zip(pred)
        .zip(truth)
        .map(|((s, p), t)| force_pair(s, p, t, physics))
        .collect::<Result<Vec<_>>>()?;
    Ok(force_mse(&pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub index: usize,
    pub inlet_speed: f64,
    pub angle_of_attack: f64,
    pub reynolds: f64,
    pub loss_volume: f64,
    pub loss_surface: f64,
    pub forces: ForcePair,
    pub inference_s: f64,
}

/// One trained model on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub loss_volume: f64,
    pub loss_surface: f64,
    /// `(∮τ_x, ∮τ_y, ∮P_x, ∮P_y)` mean squared errors, physical units.
    pub force_mse: [f64; 4],
    pub params: usize,
    pub train_time_s: Option<f64>,
    pub inference_time_s: Option<f64>,
    pub samples: Vec<SampleScore>,
}

/// Samples are scored in parallel and reduced in index order.
pub fn evaluate_model(
    model: &Model,
    test: &[MeshSample],
    stats: &NormStats,
    config: &TrainConfig,
    physics: &PhysicsConfig,
) -> Result<RunMetrics> {
    if test.is_empty() {
        return Err(Error::Validation("empty test set".into()));
    }
    let samples = test
        .par_iter()
        .enumerate()
        .map(|(index, s)| {
            let p = predict(model, s, stats, config)?;
            let target: Vec<[f64; 4]> = s
                .targets
                .iter()
                .zip(&s.surface_mask)
                .map(|(&t, &m)| normalize_targets(t, m, stats))
                .collect();
            let l = compute_loss(&p.normalized, &target, &s.surface_mask, 1.0)?;
            Ok(SampleScore {
                index,
                inlet_speed: s.inlet_speed,
                angle_of_attack: s.angle_of_attack,
                reynolds: reynolds_number(s.inlet_speed, physics.char_length, physics.nu)?,
                loss_volume: l.volume,
                loss_surface: l.surface,
                forces: force_pair(s, &p.physical, &FlowField::from_sample(s), physics)?,
                inference_s: p.inference_s,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(metrics_from(samples, model.param_count()))
}

fn metrics_from(samples: Vec<SampleScore>, params: usize) -> RunMetrics {
    let n = samples.len() as f64;
    let pairs: Vec<ForcePair> = samples.iter().map(|s| s.forces).collect();
    RunMetrics {
        loss_volume: samples.iter().map(|s| s.loss_volume).sum::<f64>() / n,
        loss_surface: samples.iter().map(|s| s.loss_surface).sum::<f64>() / n,
        force_mse: force_mse(&pairs),
        params,
        train_time_s: None,
        inference_time_s: Some(samples.iter().map(|s| s.inference_s).sum::<f64>() / n),
        samples,
    }
}

/// Loss of predicting the training mean everywhere (zero in normalized units).
pub fn constant_mean_loss(samples: &[MeshSample], stats: &NormStats) -> Result<Loss> {
    if samples.is_empty() {
        return Err(Error::Validation("empty sample set".into()));
    }
    let mut acc = [0.0; 3];
    for s in samples {
        let target: Vec<[f64; 4]> = s
            .targets
            .iter()
            .zip(&s.surface_mask)
            .map(|(&t, &m)| normalize_targets(t, m, stats))
            .collect();
        let l = compute_loss(&vec![[0.0; 4]; s.n_nodes()], &target, &s.surface_mask, 1.0)?;
        acc[0] += l.total;
        acc[1] += l.volume;
        acc[2] += l.surface;
    }
    let n = samples.len() as f64;
    Ok(Loss {
        total: acc[0] / n,
        volume: acc[1] / n,
        surface: acc[2] / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation (`n - 1`); zero for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

/// A row of the score table: one model, repeated trainings aggregated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub model: String,
    pub runs: usize,
    pub params: usize,
    pub loss_volume: MeanStd,
    pub loss_surface: MeanStd,
    pub wss_x: MeanStd,
    pub wss_y: MeanStd,
    pub wp_x: MeanStd,
    pub wp_y: MeanStd,
    pub train_time_s: Option<MeanStd>,
    pub inference_time_s: Option<MeanStd>,
}

pub const REPORT_HEADER: &str = "model,runs,params,\
loss_volume_mean,loss_volume_std,loss_surface_mean,loss_surface_std,\
wss_x_mean,wss_x_std,wss_y_mean,wss_y_std,wp_x_mean,wp_x_std,wp_y_mean,wp_y_std,\
train_time_s_mean,train_time_s_std,inference_time_s_mean,inference_time_s_std";

pub const SAMPLE_ERRORS_HEADER: &str = "model,run,sample,inlet_speed,angle_of_attack,reynolds,\
loss_volume,loss_surface,drag_true,drag_pred,drag_rel_err,lift_true,lift_pred,lift_rel_err";

impl ScoreReport {
    pub fn aggregate(model: &str, runs: &[RunMetrics]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Validation(format!("no runs for {model}")));
        }
        let col =
            |f: &dyn Fn(&RunMetrics) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        let opt = |f: &dyn Fn(&RunMetrics) -> Option<f64>| {
            runs.iter()
                .map(f)
                .collect::<Option<Vec<_>>>()
                .map(|v| MeanStd::of(&v))
        };
        Ok(Self {
            model: model.to_string(),
            runs: runs.len(),
            params: runs[0].params,
            loss_volume: col(&|r| r.loss_volume),
            loss_surface: col(&|r| r.loss_surface),
            wss_x: col(&|r| r.force_mse[0]),
            wss_y: col(&|r| r.force_mse[1]),
            wp_x: col(&|r| r.force_mse[2]),
            wp_y: col(&|r| r.force_mse[3]),
            train_time_s: opt(&|r| r.train_time_s),
            inference_time_s: opt(&|r| r.inference_time_s),
        })
    }

    pub fn csv_row(&self) -> String {
        let ms = |m: &MeanStd| format!("{:e},{:e}", m.mean, m.std);
        let om = |m: &Option<MeanStd>| m.as_ref().map_or_else(|| ",".to_string(), ms);
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.runs,
            self.params,
            ms(&self.loss_volume),
            ms(&self.loss_surface),
            ms(&self.wss_x),
            ms(&self.wss_y),
            ms(&self.wp_x),
            ms(&self.wp_y),
            om(&self.train_time_s),
            om(&self.inference_time_s),
        )
    }
}

/// `path` gets the CSV table, `path.json` the same rows at full precision.
pub fn write_report(rows: &[ScoreReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut csv = String::from(REPORT_HEADER);
    csv.push('\n');
    for r in rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    std::fs::write(path, csv).map_err(|e| Error::io(path, e))?;
    let json_path = json_sibling(path);
    let json = serde_json::to_string_pretty(rows).expect("rows serialize");
    std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))
}

pub fn json_sibling(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<Vec<ScoreReport>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn rel_err(pred: f64, truth: f64) -> f64 {
    (pred - truth).abs() / truth.abs().max(f64::MIN_POSITIVE)
}

/// Per-sample drag and lift relative errors, one line per (model, run, sample).
pub fn write_sample_errors(
    runs: &[(String, usize, &RunMetrics)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(SAMPLE_ERRORS_HEADER);
    out.push('\n');
    for (model, run, m) in runs {
        for s in &m.samples {
            let f = &s.forces;
            out.push_str(&format!(
                "{model},{run},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                s.index,
                s.inlet_speed,
                s.angle_of_attack,
                s.reynolds,
                s.loss_volume,
                s.loss_surface,
                f.force_true[0],
                f.force_pred[0],
                rel_err(f.force_pred[0], f.force_true[0]),
                f.force_true[1],
                f.force_pred[1],
                rel_err(f.force_pred[1], f.force_true[1]),
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Every `.afm` sample of `dir`, in file-name order.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<MeshSample>> {
    let dir = dir.as_ref();
    let files = list_samples(dir)?;
    if files.is_empty() {
        return Err(Error::Validation(format!(
            "no samples in {}",
            dir.display()
        )));
    }
    files.par_iter().map(read_sample).collect()
}
