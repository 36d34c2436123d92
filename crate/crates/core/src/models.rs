//! Encoder -> trunk -> decoder surrogates: GraphSAGE, Graph-Unet, GNO and MGNO.
//!
//! All kinds share a `4-64-64-8` encoder and an `8-64-64-4` decoder (ReLU,
//! no batch norm). Trunks:
//!
//! * `graphsage`: four SAGE layers `8-64-64-64-8`, each followed by batch norm and ReLU.
//! * `graph_unet`: SAGE layers on five scales, `8-8-16-32-64-128` down and
//!   `192-96-48-24 -> 64-32-16-8` up with concatenated skips; random
//!   downsampling (row selection) and nearest-parent upsampling.
//! * `gno`: `T` kernel convolutions `h + mean_j K(e_ij) h_j`, each followed by
//!   batch norm; `K` is an `8-64-64-64-64` MLP reshaped to `8 x 8`.
//! * `mgno`: the same recurrence with a three-scale U-shaped block using five
//!   kernels, mean pooling and nearest upsampling.
//!
//! Edge attributes are `(dx, dy, du_x, du_y, dp, sdf_i, sdf_j, inlet)` with
//! differences taken source minus destination; velocity and pressure come
//! from decoding the current hidden state.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{
    batch_norm, edge_kernel_conv, finite_diff_check, load_params, mlp_apply, pool_mean, sage_layer,
    save_params, select_retained, uniform, unpool_nearest, Activation, BatchNormParams, FdOptions,
    FdReport, Matrix, MlpParams, Mode, ParamStore, Probe, SageParams, ScaleTopology, Tape, Var,
};
use crate::error::{Error, Result};
use crate::graph::{pooling_hierarchy, ScaleHierarchy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Graphsage,
    GraphUnet,
    Gno,
    Mgno,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [Self::Graphsage, Self::GraphUnet, Self::Gno, Self::Mgno];

    pub fn name(self) -> &'static str {
        match self {
            Self::Graphsage => "graphsage",
            Self::GraphUnet => "graph_unet",
            Self::Gno => "gno",
            Self::Mgno => "mgno",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
    /// GraphSAGE channel ladder.
    pub sage_channels: Vec<usize>,
    /// Graph-Unet output channels per scale on the way down.
    pub unet_channels: Vec<usize>,
    pub unet_ratios: Vec<f64>,
    pub unet_radii: Vec<f64>,
    /// Kernel MLP of gno / mgno.
    pub kernel: Vec<usize>,
    /// Recurrent iterations `T` of gno / mgno.
    pub iterations: usize,
    pub mgno_ratios: Vec<f64>,
    pub mgno_radii: Vec<f64>,
    /// Radius of the single-scale graph (graphsage, gno).
    pub radius: f64,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            encoder: vec![4, 64, 64, 8],
            decoder: vec![8, 64, 64, 4],
            sage_channels: vec![8, 64, 64, 64, 8],
            unet_channels: vec![8, 16, 32, 64, 128],
            unet_ratios: vec![0.75, 0.75, 2.0 / 3.0, 2.0 / 3.0],
            unet_radii: vec![0.1, 0.2, 0.5, 1.0, 10.0],
            kernel: vec![8, 64, 64, 64, 64],
            iterations: 3,
            mgno_ratios: vec![0.75, 2.0 / 3.0],
            mgno_radii: vec![0.1, 0.2, 0.5],
            radius: 0.1,
        }
    }

    /// Trunk width shared by encoder output and decoder input.
    pub fn width(&self) -> usize {
        self.encoder.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let w = self.width();
        if self.encoder.first() != Some(&4) || self.decoder.last() != Some(&4) {
            return bad("encoder must take 4 inputs and decoder emit 4 outputs".into());
        }
        if w == 0 || self.decoder.first() != Some(&w) {
            return bad(format!(
                "encoder output {w} must equal decoder input {:?}",
                self.decoder.first()
            ));
        }
        match self.kind {
            ModelKind::Graphsage => {
                if self.sage_channels.first() != Some(&w) || self.sage_channels.last() != Some(&w) {
                    return bad(format!(
                        "sage channels {:?} must start and end at {w}",
                        self.sage_channels
                    ));
                }
            }
            ModelKind::GraphUnet => {
                if self.unet_channels.first() != Some(&w) {
                    return bad(format!(
                        "unet channels {:?} must start at {w}",
                        self.unet_channels
                    ));
                }
                if self.unet_radii.len() != self.unet_channels.len()
                    || self.unet_ratios.len() + 1 != self.unet_radii.len()
                {
                    return bad(
                        "unet needs one radius per scale and one ratio between scales".into(),
                    );
                }
            }
            ModelKind::Gno | ModelKind::Mgno => {
                if self.kernel.first() != Some(&8) || self.kernel.last() != Some(&(w * w)) {
                    return bad(format!(
                        "kernel {:?} must map the 8 edge attributes to {w}x{w} values",
                        self.kernel
                    ));
                }
                if self.iterations == 0 {
                    return bad("iterations must be >= 1".into());
                }
                if self.kind == ModelKind::Mgno
                    && (self.mgno_radii.len() != 3 || self.mgno_ratios.len() != 2)
                {
                    return bad("mgno uses exactly 3 scales".into());
                }
            }
        }
        Ok(())
    }

    /// Ratios and radii of the graph ladder this model reads.
    pub fn ladder(&self) -> (Vec<f64>, Vec<f64>) {
        match self.kind {
            ModelKind::Graphsage | ModelKind::Gno => (vec![], vec![self.radius]),
            ModelKind::GraphUnet => (self.unet_ratios.clone(), self.unet_radii.clone()),
            ModelKind::Mgno => (self.mgno_ratios.clone(), self.mgno_radii.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SageBlock {
    sage: SageParams,
    bn: BatchNormParams,
}

impl SageBlock {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, i: usize, o: usize) -> Self {
        Self {
            sage: SageParams::new(store, rng, name, i, o),
            bn: BatchNormParams::new(store, &format!("{name}.bn"), o),
        }
    }

    fn apply(
        &self,
        t: &mut Tape,
        s: &ParamStore,
        h: Var,
        topo: &ScaleTopology,
        level: usize,
        mode: Mode,
    ) -> Result<Var> {
        let h = sage_layer(t, s, &self.sage, h, &topo.graphs[level])?;
        let h = batch_norm(t, s, &self.bn, h, mode)?;
        Ok(t.relu(h))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Trunk {
    Sage(Vec<SageBlock>),
    Unet {
        down: Vec<SageBlock>,
        up: Vec<SageBlock>,
    },
    Gno {
        kernel: MlpParams,
        norms: Vec<BatchNormParams>,
    },
    Mgno {
        kernels: Vec<MlpParams>,
        norms: Vec<BatchNormParams>,
    },
}

/// Parameters plus the structure needed to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    encoder: MlpParams,
    decoder: MlpParams,
    trunk: Trunk,
}

/// Deterministic initialization from `seed`.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let encoder = MlpParams::new(
        &mut store,
        &mut rng,
        "encoder",
        &config.encoder,
        Activation::Relu,
        false,
    )?;
    let w = config.width();
    let kernel = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str| {
        MlpParams::new(store, rng, name, &config.kernel, Activation::Relu, false)
    };
    let norms = |store: &mut ParamStore| {
        (0..config.iterations)
            .map(|t| BatchNormParams::new(store, &format!("trunk.bn{t}"), w))
            .collect()
    };
    let trunk = match config.kind {
        ModelKind::Graphsage => Trunk::Sage(
            config
                .sage_channels
                .windows(2)
                .enumerate()
                .map(|(l, d)| {
                    SageBlock::new(&mut store, &mut rng, &format!("sage.{l}"), d[0], d[1])
                })
                .collect(),
        ),
        ModelKind::GraphUnet => {
            let ch = &config.unet_channels;
            let mut down = Vec::with_capacity(ch.len());
            let mut prev = w;
            for (k, &c) in ch.iter().enumerate() {
                down.push(SageBlock::new(
                    &mut store,
                    &mut rng,
                    &format!("unet.down{k}"),
                    prev,
                    c,
                ));
                prev = c;
            }
            let mut up = Vec::with_capacity(ch.len() - 1);
            for k in (0..ch.len() - 1).rev() {
                up.push(SageBlock::new(
                    &mut store,
                    &mut rng,
                    &format!("unet.up{k}"),
                    prev + ch[k],
                    ch[k],
                ));
                prev = ch[k];
            }
            if prev != w {
                return Err(Error::Config(format!(
                    "unet ends at width {prev}, decoder expects {w}"
                )));
            }
            Trunk::Unet { down, up }
        }
        ModelKind::Gno => Trunk::Gno {
            kernel: kernel(&mut store, &mut rng, "gno.kernel")?,
            norms: norms(&mut store),
        },
        ModelKind::Mgno => {
            let names = ["down0", "down1", "bottom2", "up1", "up0"];
            let kernels = names
                .iter()
                .map(|n| kernel(&mut store, &mut rng, &format!("mgno.kernel.{n}")))
                .collect::<Result<_>>()?;
            Trunk::Mgno {
                kernels,
                norms: norms(&mut store),
            }
        }
    };
    let decoder = MlpParams::new(
        &mut store,
        &mut rng,
        "decoder",
        &config.decoder,
        Activation::Relu,
        false,
    )?;
    Ok(Model {
        config: config.clone(),
        store,
        encoder,
        decoder,
        trunk,
    })
}

/// Trainable scalars, batch-norm scale and shift included, running statistics excluded.
pub fn param_count(model: &Model) -> usize {
    model.store.trainable_scalars()
}

/// The graph ladder `model` expects over `points`.
pub fn model_graph(
    config: &ModelConfig,
    points: &[[f64; 2]],
    max_neighbors: usize,
    seed: u64,
) -> Result<ScaleHierarchy> {
    let (ratios, radii) = config.ladder();
    pooling_hierarchy(
        points,
        &ratios,
        &radii,
        &vec![max_neighbors; radii.len()],
        seed,
    )
}

/// Static part of the edge attributes on one scale: `(dx, dy, sdf_i, sdf_j, inlet)`.
fn static_edge_attrs(x: &Matrix, topo: &ScaleTopology, level: usize) -> Matrix {
    let g = &topo.graphs[level];
    let nodes = &topo.nodes[level];
    let mut m = Matrix::zeros(g.n_edges(), 5);
    for e in 0..g.n_edges() {
        let (j, i) = (nodes[g.src[e]], nodes[g.dst[e]]);
        let (xj, xi) = (x.row(j), x.row(i));
        m.row_mut(e)
            .copy_from_slice(&[xj[0] - xi[0], xj[1] - xi[1], xi[3], xj[3], xi[2]]);
    }
    m
}

struct EdgeContext {
    /// Per scale: static attributes (on the tape), gather indices for the scale's nodes.
    statics: Vec<Var>,
}

impl EdgeContext {
    fn new(t: &mut Tape, x: &Matrix, topo: &ScaleTopology) -> Self {
        Self {
            statics: (0..topo.n_scales())
                .map(|l| t.input(static_edge_attrs(x, topo, l)))
                .collect(),
        }
    }

    /// Edge attributes on `level` given decoded fields `y` over level-0 nodes.
    fn attrs(&self, t: &mut Tape, y: Var, topo: &ScaleTopology, level: usize) -> Result<Var> {
        let g = &topo.graphs[level];
        let fields = t.select_cols(y, 0, 3)?;
        let fields = if level == 0 {
            fields
        } else {
            t.gather_rows(fields, &topo.nodes[level])?
        };
        let src = t.gather_rows(fields, &g.src)?;
        let dst = t.gather_rows(fields, &g.dst)?;
        let dy = t.sub(src, dst)?;
        let st = self.statics[level];
        let pos = t.select_cols(st, 0, 2)?;
        let rest = t.select_cols(st, 2, 3)?;
        t.concat_cols(&[pos, dy, rest])
    }
}

impl Model {
    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    /// Predictions (N x 4, normalized units) for normalized inputs `x` (N x 4).
    pub fn forward(
        &self,
        t: &mut Tape,
        x: &Matrix,
        topo: &ScaleTopology,
        mode: Mode,
    ) -> Result<Var> {
        let want = self.config.ladder().1.len();
        if topo.n_scales() != want {
            return Err(Error::Shape(format!(
                "{} expects {want} graph scales, got {}",
                self.config.kind,
                topo.n_scales()
            )));
        }
        if x.rows != topo.size(0) || x.cols != 4 {
            return Err(Error::Shape(format!(
                "inputs {:?} for a graph of {} nodes",
                x.shape(),
                topo.size(0)
            )));
        }
        let s = &self.store;
        let xv = t.input(x.clone());
        let mut h = mlp_apply(t, s, &self.encoder, xv, mode)?;
        match &self.trunk {
            Trunk::Sage(blocks) => {
                for b in blocks {
                    h = b.apply(t, s, h, topo, 0, mode)?;
                }
            }
            Trunk::Unet { down, up } => {
                let mut skips = Vec::with_capacity(down.len());
                for (k, b) in down.iter().enumerate() {
                    if k > 0 {
                        h = select_retained(t, h, topo, k - 1)?;
                    }
                    h = b.apply(t, s, h, topo, k, mode)?;
                    skips.push(h);
                }
                for (b, k) in up.iter().zip((0..down.len() - 1).rev()) {
                    let coarse = unpool_nearest(t, h, topo, k)?;
                    let cat = t.concat_cols(&[coarse, skips[k]])?;
                    h = b.apply(t, s, cat, topo, k, mode)?;
                }
            }
            Trunk::Gno { kernel, norms } => {
                let ctx = EdgeContext::new(t, x, topo);
                for bn in norms {
                    let y = mlp_apply(t, s, &self.decoder, h, mode)?;
                    let e = ctx.attrs(t, y, topo, 0)?;
                    h = edge_kernel_conv(t, s, h, &topo.graphs[0], e, kernel, mode)?;
                    h = batch_norm(t, s, bn, h, mode)?;
                }
            }
            Trunk::Mgno { kernels, norms } => {
                let ctx = EdgeContext::new(t, x, topo);
                for bn in norms {
                    let y = mlp_apply(t, s, &self.decoder, h, mode)?;
                    let e: Vec<Var> = (0..3)
                        .map(|l| ctx.attrs(t, y, topo, l))
                        .collect::<Result<_>>()?;
                    let conv = |t: &mut Tape, h: Var, l: usize, k: usize| {
                        edge_kernel_conv(t, s, h, &topo.graphs[l], e[l], &kernels[k], mode)
                    };
                    let a0 = conv(t, h, 0, 0)?;
                    let b1 = pool_mean(t, a0, topo, 0)?;
                    let a1 = conv(t, b1, 1, 1)?;
                    let b2 = pool_mean(t, a1, topo, 1)?;
                    let a2 = conv(t, b2, 2, 2)?;
                    let u1 = unpool_nearest(t, a2, topo, 1)?;
                    let m1 = t.add(a1, u1)?;
                    let c1 = conv(t, m1, 1, 3)?;
                    let u0 = unpool_nearest(t, c1, topo, 0)?;
                    let m0 = t.add(a0, u0)?;
                    let c0 = conv(t, m0, 0, 4)?;
                    h = batch_norm(t, s, bn, c0, mode)?;
                }
            }
        }
        mlp_apply(t, s, &self.decoder, h, mode)
    }

    /// Checkpoint with the model config as metadata.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::to_string(&self.config).expect("config serializes");
        save_params(&self.store, &meta, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (store, meta) = load_params(path)?;
        let config: ModelConfig = serde_json::from_str(&meta)
            .map_err(|e| Error::Format(format!("checkpoint model config: {e}")))?;
        let mut model = build_model(&config, 0)?;
        model.store.load_from(&store)?;
        Ok(model)
    }
}

/// Free-function form of [`Model::forward`].
pub fn model_forward(
    model: &Model,
    x: &Matrix,
    topo: &ScaleTopology,
    mode: Mode,
    tape: &mut Tape,
) -> Result<Var> {
    model.forward(tape, x, topo, mode)
}

/// Convenience: tape-ready graphs for `points`.
pub fn prepare_topology(
    config: &ModelConfig,
    points: &[[f64; 2]],
    max_neighbors: usize,
    seed: u64,
) -> Result<Arc<ScaleTopology>> {
    Ok(Arc::new(ScaleTopology::new(&model_graph(
        config,
        points,
        max_neighbors,
        seed,
    )?)))
}

/// `config` with radii wide enough to connect every scale of a unit-square
/// cloud of a few dozen points.
pub fn small_cloud_config(config: &ModelConfig) -> ModelConfig {
    let mut c = config.clone();
    c.radius = 0.35;
    c.unet_radii = vec![0.35, 0.5, 0.7, 1.0, 10.0];
    c.mgno_radii = vec![0.35, 0.6, 10.0];
    c
}

/// Finite-difference check of a freshly initialized model, in training mode,
/// on `n_nodes` random points with random inputs and a random linear loss.
pub fn check_model_gradients(
    config: &ModelConfig,
    n_nodes: usize,
    seed: u64,
    opts: &FdOptions,
) -> Result<FdReport> {
    use rand::Rng;
    let model = build_model(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let points: Vec<[f64; 2]> = (0..n_nodes)
        .map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
        .collect();
    let mut x = Matrix::zeros(n_nodes, 4);
    for (i, p) in points.iter().enumerate() {
        x.row_mut(i).copy_from_slice(&[
            p[0],
            p[1],
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]);
    }
    let w = Arc::new(uniform(&mut rng, n_nodes, 4, 1.0));
    let topo = prepare_topology(config, &points, 64, seed)?;
    let mut probe = model.clone();
    finite_diff_check(
        &model.store,
        |s, need| {
            probe.store.clone_from(s);
            let mut t = Tape::new();
            let y = probe.forward(&mut t, &x, &topo, Mode::Train)?;
            let loss = t.weighted_sum(y, &w)?;
            Ok(Probe {
                loss: t.value(loss).data[0],
                grads: need.then(|| t.backward(loss).params(s)),
                signature: t.relu_signature(),
            })
        },
        opts,
    )
}
