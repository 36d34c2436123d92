use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::uniform;
use super::tape::{BnStats, BnUpdate, Tape, Topology, Var};
use super::{Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::graph::{RadiusGraph, ScaleHierarchy};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running buffers are updated afterwards.
    Train,
    /// Running statistics; a fixed affine map.
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    /// `in x out` weight and `1 x out` bias, uniform in `±sqrt(1 / in)`.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Self {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        Self {
            w: store.add(
                format!("{name}.w"),
                uniform(rng, fan_in, fan_out, bound),
                true,
            ),
            b: store.add(format!("{name}.b"), uniform(rng, 1, fan_out, bound), true),
        }
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let (w, b) = (tape.param(store, self.w), tape.param(store, self.b));
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormParams {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Matrix::filled(1, width, 1.0), true),
            beta: store.add(format!("{name}.beta"), Matrix::zeros(1, width), true),
            running_mean: store.add(
                format!("{name}.running_mean"),
                Matrix::zeros(1, width),
                false,
            ),
            running_var: store.add(
                format!("{name}.running_var"),
                Matrix::filled(1, width, 1.0),
                false,
            ),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }
}

/// Per-feature batch norm over the node dimension.
pub fn batch_norm(
    tape: &mut Tape,
    store: &ParamStore,
    bn: &BatchNormParams,
    x: Var,
    mode: Mode,
) -> Result<Var> {
    let (g, b) = (tape.param(store, bn.gamma), tape.param(store, bn.beta));
    match mode {
        Mode::Train => {
            let n = tape.value(x).rows;
            let (out, stats) = tape.batch_norm(x, g, b, BnStats::Batch, bn.eps)?;
            let (mean, var) = stats.expect("batch statistics");
            let unbias = if n > 1 {
                n as f64 / (n - 1) as f64
            } else {
                1.0
            };
            tape.record_bn_update(BnUpdate {
                running_mean: bn.running_mean,
                running_var: bn.running_var,
                momentum: bn.momentum,
                mean,
                var: var.iter().map(|v| v * unbias).collect(),
            });
            Ok(out)
        }
        Mode::Eval => {
            let stats = BnStats::Fixed {
                mean: &store.get(bn.running_mean).data,
                var: &store.get(bn.running_var).data,
            };
            Ok(tape.batch_norm(x, g, b, stats, bn.eps)?.0)
        }
    }
}

/// Folds the batch statistics of a training pass into the running buffers.
pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate]) {
    for u in updates {
        for (id, batch) in [(u.running_mean, &u.mean), (u.running_var, &u.var)] {
            for (r, b) in store.get_mut(id).data.iter_mut().zip(batch) {
                *r = (1.0 - u.momentum) * *r + u.momentum * b;
            }
        }
    }
}

/// Fully connected stack; hidden layers are affine -> (batch norm) -> activation,
/// the last layer is affine only.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub dims: Vec<usize>,
    pub layers: Vec<Linear>,
    pub norms: Vec<Option<BatchNormParams>>,
    pub activation: Activation,
}

impl MlpParams {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        dims: &[usize],
        activation: Activation,
        hidden_batch_norm: bool,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("{name}: bad MLP dims {dims:?}")));
        }
        let n = dims.len() - 1;
        let mut layers = Vec::with_capacity(n);
        let mut norms = Vec::with_capacity(n);
        for l in 0..n {
            layers.push(Linear::new(
                store,
                rng,
                &format!("{name}.{l}"),
                dims[l],
                dims[l + 1],
            ));
            norms.push(
                (hidden_batch_norm && l + 1 < n)
                    .then(|| BatchNormParams::new(store, &format!("{name}.{l}.bn"), dims[l + 1])),
            );
        }
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            norms,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }
}

pub fn mlp_apply(
    tape: &mut Tape,
    store: &ParamStore,
    mlp: &MlpParams,
    x: Var,
    mode: Mode,
) -> Result<Var> {
    let w = tape.value(x).cols;
    if w != mlp.in_dim() {
        return Err(Error::Shape(format!(
            "MLP expects width {}, got {w}",
            mlp.in_dim()
        )));
    }
    let mut h = x;
    let last = mlp.layers.len() - 1;
    for (l, (lin, bn)) in mlp.layers.iter().zip(&mlp.norms).enumerate() {
        h = lin.apply(tape, store, h)?;
        if l == last {
            break;
        }
        if let Some(bn) = bn {
            h = batch_norm(tape, store, bn, h, mode)?;
        }
        if mlp.activation == Activation::Relu {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

pub fn mean_aggregate(tape: &mut Tape, h: Var, topo: &Arc<Topology>) -> Result<Var> {
    tape.mean_aggregate(h, topo)
}

/// `W_self h_i + W_neigh mean_j h_j + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SageParams {
    pub w_self: ParamId,
    pub w_neigh: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl SageParams {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let bound = (1.0 / in_dim.max(1) as f64).sqrt();
        Self {
            w_self: store.add(
                format!("{name}.w_self"),
                uniform(rng, in_dim, out_dim, bound),
                true,
            ),
            w_neigh: store.add(
                format!("{name}.w_neigh"),
                uniform(rng, in_dim, out_dim, bound),
                true,
            ),
            b: store.add(format!("{name}.b"), uniform(rng, 1, out_dim, bound), true),
            in_dim,
            out_dim,
        }
    }
}

pub fn sage_layer(
    tape: &mut Tape,
    store: &ParamStore,
    p: &SageParams,
    h: Var,
    topo: &Arc<Topology>,
) -> Result<Var> {
    let w = tape.value(h).cols;
    if w != p.in_dim {
        return Err(Error::Shape(format!(
            "sage layer expects width {}, got {w}",
            p.in_dim
        )));
    }
    let agg = tape.mean_aggregate(h, topo)?;
    let (ws, wn, b) = (
        tape.param(store, p.w_self),
        tape.param(store, p.w_neigh),
        tape.param(store, p.b),
    );
    let a = tape.matmul(h, ws)?;
    let c = tape.matmul(agg, wn)?;
    let s = tape.add(a, c)?;
    tape.add_row(s, b)
}

/// `h_i + mean_{j -> i} K(e_ij) h_j` with `K` the kernel MLP output reshaped
/// to a `d x d` matrix per edge.
pub fn edge_kernel_conv(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    topo: &Arc<Topology>,
    edge_attrs: Var,
    kernel: &MlpParams,
    mode: Mode,
) -> Result<Var> {
    let d = tape.value(h).cols;
    if kernel.out_dim() != d * d {
        return Err(Error::Shape(format!(
            "kernel emits {} values, need {d}x{d}",
            kernel.out_dim()
        )));
    }
    let ea = tape.value(edge_attrs);
    if ea.rows != topo.n_edges() {
        return Err(Error::Shape(format!(
            "{} edge attribute rows for {} edges",
            ea.rows,
            topo.n_edges()
        )));
    }
    let k = mlp_apply(tape, store, kernel, edge_attrs, mode)?;
    let agg = tape.edge_matvec(k, h, topo)?;
    tape.add(h, agg)
}

/// Tape-ready view of a [`ScaleHierarchy`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleTopology {
    pub graphs: Vec<Arc<Topology>>,
    /// Level-0 node indices of every scale.
    pub nodes: Vec<Arc<Vec<usize>>>,
    /// Per scale but the last: next-scale position of each node's nearest retained node.
    pub parent: Vec<Arc<Vec<usize>>>,
    /// Per scale but the last: positions of the nodes kept at the next scale.
    pub retained: Vec<Arc<Vec<usize>>>,
}

impl ScaleTopology {
    pub fn new(h: &ScaleHierarchy) -> Self {
        let last = h.n_scales() - 1;
        Self {
            graphs: h.scales.iter().map(|s| Topology::new(&s.graph)).collect(),
            nodes: h.scales.iter().map(|s| Arc::new(s.nodes.clone())).collect(),
            parent: h.scales[..last]
                .iter()
                .map(|s| Arc::new(s.parent.clone()))
                .collect(),
            retained: h.scales[..last]
                .iter()
                .map(|s| Arc::new(s.retained.clone()))
                .collect(),
        }
    }

    pub fn single(graph: &RadiusGraph) -> Self {
        Self {
            graphs: vec![Topology::new(graph)],
            nodes: vec![Arc::new((0..graph.n_nodes()).collect())],
            parent: Vec::new(),
            retained: Vec::new(),
        }
    }

    pub fn n_scales(&self) -> usize {
        self.graphs.len()
    }

    pub fn size(&self, level: usize) -> usize {
        self.graphs[level].n_nodes
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level + 1 >= self.n_scales() {
            return Err(Error::Shape(format!(
                "no scale below level {level} ({} scales)",
                self.n_scales()
            )));
        }
        Ok(())
    }
}

/// Coarse node `p` of scale `level + 1` takes the mean of its children.
pub fn pool_mean(tape: &mut Tape, h: Var, topo: &ScaleTopology, level: usize) -> Result<Var> {
    topo.check_level(level)?;
    tape.scatter_mean(h, &topo.parent[level], topo.size(level + 1))
}

/// Fine node `i` of scale `level` copies its parent in scale `level + 1`.
pub fn unpool_nearest(
    tape: &mut Tape,
    h_coarse: Var,
    topo: &ScaleTopology,
    level: usize,
) -> Result<Var> {
    topo.check_level(level)?;
    let rows = tape.value(h_coarse).rows;
    if rows != topo.size(level + 1) {
        return Err(Error::Shape(format!(
            "{rows} coarse rows, scale {} has {}",
            level + 1,
            topo.size(level + 1)
        )));
    }
    tape.gather_rows(h_coarse, &topo.parent[level])
}

/// Random downsampling: keep the rows of the retained nodes.
pub fn select_retained(tape: &mut Tape, h: Var, topo: &ScaleTopology, level: usize) -> Result<Var> {
    topo.check_level(level)?;
    tape.gather_rows(h, &topo.retained[level])
}
