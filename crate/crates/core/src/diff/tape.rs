use std::sync::Arc;

use super::{gemm, Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::graph::{Adjacency, RadiusGraph};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Edge structure shared by the message-passing primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub n_nodes: usize,
    pub src: Arc<Vec<usize>>,
    pub dst: Arc<Vec<usize>>,
    pub adj: Adjacency,
    /// `1 / in_degree`, 0 for isolated nodes.
    pub inv_deg: Vec<f64>,
}

impl Topology {
    pub fn new(graph: &RadiusGraph) -> Arc<Self> {
        let adj = graph.adjacency();
        let inv_deg = (0..graph.n_nodes())
            .map(|i| match adj.in_degree(i) {
                0 => 0.0,
                d => 1.0 / d as f64,
            })
            .collect();
        Arc::new(Self {
            n_nodes: graph.n_nodes(),
            src: Arc::new(graph.src()),
            dst: Arc::new(graph.dst()),
            adj,
            inv_deg,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }
}

/// Batch statistics observed by a training-mode batch norm, to be folded into
/// the running buffers after the step.
#[derive(Debug, Clone, PartialEq)]
pub struct BnUpdate {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub mean: Vec<f64>,
    /// Unbiased batch variance.
    pub var: Vec<f64>,
}

/// How a batch norm normalizes.
pub enum BnStats<'a> {
    /// Statistics of the current rows.
    Batch,
    /// Fixed running statistics.
    Fixed { mean: &'a [f64], var: &'a [f64] },
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
        batch: bool,
    },
    MeanAgg(Var, Arc<Topology>),
    EdgeMatVec {
        k: Var,
        h: Var,
        topo: Arc<Topology>,
    },
    Gather(Var, Arc<Vec<usize>>),
    ScatterMean {
        a: Var,
        idx: Arc<Vec<usize>>,
        inv_count: Vec<f64>,
    },
    Concat(Vec<Var>),
    SelectCols(Var, usize),
    WeightedSqErr {
        pred: Var,
        target: Arc<Matrix>,
        w: Arc<Vec<f64>>,
    },
    WeightedSum(Var, Arc<Matrix>),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Records primitive operations for one forward pass and replays them in
/// reverse for exact gradients.
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    param_of: Vec<Option<ParamId>>,
    relu_signature: u64,
    bn_updates: Vec<BnUpdate>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err<T>(what: &str, detail: String) -> Result<T> {
    Err(Error::Shape(format!("{what}: {detail}")))
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            param_vars: Vec::new(),
            param_of: Vec::new(),
            relu_signature: 0xcbf2_9ce4_8422_2325,
            bn_updates: Vec::new(),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.param_of.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    /// Leaf bound to a stored parameter; repeated calls share one leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_vars.len() <= id.0 {
            self.param_vars.resize(id.0 + 1, None);
        }
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf);
        self.param_of[v.0] = Some(id);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Hash of every ReLU input sign seen so far. Two passes with equal
    /// signatures took the same linear branch everywhere.
    pub fn relu_signature(&self) -> u64 {
        self.relu_signature
    }

    pub fn bn_updates(&self) -> &[BnUpdate] {
        &self.bn_updates
    }

    pub(crate) fn record_bn_update(&mut self, u: BnUpdate) {
        self.bn_updates.push(u);
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a + 1 b` with `b` a single row broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(b));
        if r.rows != 1 || r.cols != x.cols {
            return shape_err("add_row", format!("{:?} + row {:?}", x.shape(), r.shape()));
        }
        let mut out = x.clone();
        for i in 0..out.rows {
            for (o, b) in out.row_mut(i).iter_mut().zip(&r.data) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return shape_err("add", format!("{:?} + {:?}", x.shape(), y.shape()));
        }
        let mut out = x.clone();
        out.add_assign(y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return shape_err("sub", format!("{:?} - {:?}", x.shape(), y.shape()));
        }
        let mut out = x.clone();
        for (o, v) in out.data.iter_mut().zip(&y.data) {
            *o -= v;
        }
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| s * x);
        self.push(out, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut sig = self.relu_signature;
        for &v in &x.data {
            sig ^= (v > 0.0) as u64 + 1;
            sig = sig.wrapping_mul(0x0100_0000_01b3);
        }
        let out = x.map(|v| if v > 0.0 { v } else { 0.0 });
        self.relu_signature = sig;
        self.push(out, Op::Relu(a))
    }

    /// Per-column normalization over rows followed by `gamma * xhat + beta`.
    /// Returns the batch mean and population variance when `stats` is `Batch`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: BnStats<'_>,
        eps: f64,
    ) -> Result<(Var, Option<(Vec<f64>, Vec<f64>)>)> {
        let xv = self.value(x);
        let (n, c) = xv.shape();
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            if self.value(p).shape() != (1, c) {
                return shape_err(
                    "batch_norm",
                    format!("{name} is {:?}, expected (1, {c})", self.value(p).shape()),
                );
            }
        }
        let (mean, var, batch) = match stats {
            BnStats::Batch => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                if n > 0 {
                    for i in 0..n {
                        for (m, v) in mean.iter_mut().zip(xv.row(i)) {
                            *m += v;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= n as f64);
                    for i in 0..n {
                        for ((s, v), m) in var.iter_mut().zip(xv.row(i)).zip(&mean) {
                            *s += (v - m) * (v - m);
                        }
                    }
                    var.iter_mut().for_each(|s| *s /= n as f64);
                }
                (mean, var, true)
            }
            BnStats::Fixed { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return shape_err("batch_norm", format!("running stats for {c} channels"));
                }
                (mean.to_vec(), var.to_vec(), false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = xv.clone();
        for i in 0..n {
            for (k, v) in xhat.row_mut(i).iter_mut().enumerate() {
                *v = (*v - mean[k]) * inv_std[k];
            }
        }
        let (g, b) = (&self.value(gamma).data, &self.value(beta).data);
        let mut out = xhat.clone();
        for i in 0..n {
            for (k, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = g[k] * *v + b[k];
            }
        }
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch,
            },
        );
        Ok((v, batch.then_some((mean, var))))
    }

    /// `out_i = mean_{j -> i} h_j`; zero for nodes without in-edges.
    pub fn mean_aggregate(&mut self, h: Var, topo: &Arc<Topology>) -> Result<Var> {
        let hv = self.value(h);
        if hv.rows != topo.n_nodes {
            return shape_err(
                "mean_aggregate",
                format!("{} feature rows for {} graph nodes", hv.rows, topo.n_nodes),
            );
        }
        let mut out = Matrix::zeros(hv.rows, hv.cols);
        for (&s, &d) in topo.src.iter().zip(topo.dst.iter()) {
            let w = topo.inv_deg[d];
            let (src, dst) = (hv.row(s), out.row_mut(d));
            for (o, v) in dst.iter_mut().zip(src) {
                *o += w * v;
            }
        }
        Ok(self.push(out, Op::MeanAgg(h, topo.clone())))
    }

    /// `out_i = mean_{e = (j -> i)} K_e h_j`, where row `e` of `k` holds the
    /// `d x d` matrix `K_e` row-major and `d` is the width of `h`.
    pub fn edge_matvec(&mut self, k: Var, h: Var, topo: &Arc<Topology>) -> Result<Var> {
        let (kv, hv) = (self.value(k), self.value(h));
        let d = hv.cols;
        if hv.rows != topo.n_nodes {
            return shape_err(
                "edge_matvec",
                format!("{} feature rows for {} graph nodes", hv.rows, topo.n_nodes),
            );
        }
        if kv.rows != topo.n_edges() || kv.cols != d * d {
            return shape_err(
                "edge_matvec",
                format!(
                    "kernel output {:?}, expected ({}, {})",
                    kv.shape(),
                    topo.n_edges(),
                    d * d
                ),
            );
        }
        let mut out = Matrix::zeros(hv.rows, d);
        for e in 0..topo.n_edges() {
            let (s, t) = (topo.src[e], topo.dst[e]);
            let w = topo.inv_deg[t];
            let ke = kv.row(e);
            let hs = hv.row(s);
            let o = out.row_mut(t);
            for r in 0..d {
                let row = &ke[r * d..(r + 1) * d];
                o[r] += w * row.iter().zip(hs).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Ok(self.push(
            out,
            Op::EdgeMatVec {
                k,
                h,
                topo: topo.clone(),
            },
        ))
    }

    /// `out_r = a_{idx[r]}`.
    pub fn gather_rows(&mut self, a: Var, idx: &Arc<Vec<usize>>) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.rows) {
            return shape_err("gather_rows", format!("row {bad} of {}", av.rows));
        }
        let mut out = Matrix::zeros(idx.len(), av.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(av.row(i));
        }
        Ok(self.push(out, Op::Gather(a, idx.clone())))
    }

    /// `out_t = mean { a_r : idx[r] = t }` for `t < n_out`; empty groups give 0.
    pub fn scatter_mean(&mut self, a: Var, idx: &Arc<Vec<usize>>, n_out: usize) -> Result<Var> {
        let av = self.value(a);
        if idx.len() != av.rows {
            return shape_err(
                "scatter_mean",
                format!("{} targets for {} rows", idx.len(), av.rows),
            );
        }
        if let Some(&bad) = idx.iter().find(|&&t| t >= n_out) {
            return shape_err("scatter_mean", format!("target {bad} of {n_out}"));
        }
        let mut count = vec![0usize; n_out];
        for &t in idx.iter() {
            count[t] += 1;
        }
        let inv_count: Vec<f64> = count
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
            .collect();
        let mut out = Matrix::zeros(n_out, av.cols);
        for (r, &t) in idx.iter().enumerate() {
            let w = inv_count[t];
            for (o, v) in out.row_mut(t).iter_mut().zip(av.row(r)) {
                *o += w * v;
            }
        }
        Ok(self.push(
            out,
            Op::ScatterMean {
                a,
                idx: idx.clone(),
                inv_count,
            },
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows;
        if let Some(p) = parts.iter().find(|&&p| self.value(p).rows != rows) {
            return shape_err(
                "concat_cols",
                format!("{} rows next to {rows}", self.value(*p).rows),
            );
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.data[r * cols + off..r * cols + off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    pub fn select_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.cols {
            return shape_err(
                "select_cols",
                format!("{start}..{} of {}", start + len, av.cols),
            );
        }
        let mut out = Matrix::zeros(av.rows, len);
        for r in 0..av.rows {
            out.row_mut(r)
                .copy_from_slice(&av.row(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SelectCols(a, start)))
    }

    /// `sum_i w_i |pred_i - target_i|^2` as a 1x1 value.
    pub fn weighted_sq_err(
        &mut self,
        pred: Var,
        target: &Arc<Matrix>,
        w: &Arc<Vec<f64>>,
    ) -> Result<Var> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() || w.len() != pv.rows {
            return shape_err(
                "weighted_sq_err",
                format!(
                    "pred {:?}, target {:?}, {} weights",
                    pv.shape(),
                    target.shape(),
                    w.len()
                ),
            );
        }
        let mut s = 0.0;
        for i in 0..pv.rows {
            let row: f64 = pv
                .row(i)
                .iter()
                .zip(target.row(i))
                .map(|(p, t)| (p - t) * (p - t))
                .sum();
            s += w[i] * row;
        }
        Ok(self.push(
            Matrix::scalar(s),
            Op::WeightedSqErr {
                pred,
                target: target.clone(),
                w: w.clone(),
            },
        ))
    }

    /// `sum w .* a` as a 1x1 value.
    pub fn weighted_sum(&mut self, a: Var, w: &Arc<Matrix>) -> Result<Var> {
        let av = self.value(a);
        if av.shape() != w.shape() {
            return shape_err(
                "weighted_sum",
                format!("{:?} vs {:?}", av.shape(), w.shape()),
            );
        }
        let s = av.data.iter().zip(&w.data).map(|(a, b)| a * b).sum();
        Ok(self.push(Matrix::scalar(s), Op::WeightedSum(a, w.clone())))
    }

    /// Reverse pass from a 1x1 output with upstream gradient 1.
    pub fn backward(&self, out: Var) -> Gradients {
        let shape = self.value(out).shape();
        self.backward_with(out, Matrix::filled(shape.0, shape.1, 1.0))
    }

    pub fn backward_with(&self, out: Var, upstream: Matrix) -> Gradients {
        assert_eq!(upstream.shape(), self.value(out).shape(), "upstream shape");
        let mut grads: Vec<Option<Matrix>> = vec![None; out.0 + 1];
        grads[out.0] = Some(upstream);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Gradients {
            grads,
            param_of: self.param_of.clone(),
        }
    }

    fn backprop_node(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let mut da = Matrix::zeros(av.rows, av.cols);
                gemm(g, false, bv, true, &mut da, 0.0);
                accumulate(grads, a, da);
                let mut db = Matrix::zeros(bv.rows, bv.cols);
                gemm(av, true, g, false, &mut db, 0.0);
                accumulate(grads, b, db);
            }
            &Op::AddRow(a, b) => {
                let mut db = Matrix::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (d, v) in db.data.iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                accumulate(grads, a, g.clone());
                accumulate(grads, b, db);
            }
            &Op::Add(a, b) => {
                accumulate(grads, a, g.clone());
                accumulate(grads, b, g.clone());
            }
            &Op::Sub(a, b) => {
                accumulate(grads, a, g.clone());
                accumulate(grads, b, g.map(|x| -x));
            }
            &Op::Scale(a, s) => accumulate(grads, a, g.map(|x| s * x)),
            &Op::Relu(a) => {
                let mut d = g.clone();
                for (dv, &x) in d.data.iter_mut().zip(&val(a).data) {
                    if x <= 0.0 {
                        *dv = 0.0;
                    }
                }
                accumulate(grads, a, d);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch,
            } => {
                let (n, c) = g.shape();
                let gam = &val(*gamma).data;
                let mut dgamma = Matrix::zeros(1, c);
                let mut dbeta = Matrix::zeros(1, c);
                for r in 0..n {
                    for k in 0..c {
                        dbeta.data[k] += g.get(r, k);
                        dgamma.data[k] += g.get(r, k) * xhat.get(r, k);
                    }
                }
                let mut dx = Matrix::zeros(n, c);
                if *batch {
                    // dx = inv / n * (n dxhat - sum dxhat - xhat sum(dxhat xhat))
                    let nf = n as f64;
                    for k in 0..c {
                        let (s1, s2) = (gam[k] * dbeta.data[k], gam[k] * dgamma.data[k]);
                        for r in 0..n {
                            let dxh = g.get(r, k) * gam[k];
                            dx.set(
                                r,
                                k,
                                inv_std[k] / nf * (nf * dxh - s1 - xhat.get(r, k) * s2),
                            );
                        }
                    }
                } else {
                    for r in 0..n {
                        for k in 0..c {
                            dx.set(r, k, g.get(r, k) * gam[k] * inv_std[k]);
                        }
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, dgamma);
                accumulate(grads, *beta, dbeta);
            }
            Op::MeanAgg(h, topo) => {
                let mut dh = Matrix::zeros(g.rows, g.cols);
                for (&s, &d) in topo.src.iter().zip(topo.dst.iter()) {
                    let w = topo.inv_deg[d];
                    for (o, v) in dh.row_mut(s).iter_mut().zip(g.row(d)) {
                        *o += w * v;
                    }
                }
                accumulate(grads, *h, dh);
            }
            Op::EdgeMatVec { k, h, topo } => {
                let (kv, hv) = (val(*k), val(*h));
                let dim = hv.cols;
                let mut dk = Matrix::zeros(kv.rows, kv.cols);
                let mut dh = Matrix::zeros(hv.rows, hv.cols);
                for e in 0..topo.n_edges() {
                    let (s, t) = (topo.src[e], topo.dst[e]);
                    let w = topo.inv_deg[t];
                    let gt = g.row(t);
                    let hs = hv.row(s);
                    let ke = kv.row(e);
                    let dke = dk.row_mut(e);
                    for r in 0..dim {
                        let gr = w * gt[r];
                        for c in 0..dim {
                            dke[r * dim + c] = gr * hs[c];
                        }
                    }
                    let dhs = dh.row_mut(s);
                    for r in 0..dim {
                        let gr = w * gt[r];
                        for c in 0..dim {
                            dhs[c] += ke[r * dim + c] * gr;
                        }
                    }
                }
                accumulate(grads, *k, dk);
                accumulate(grads, *h, dh);
            }
            Op::Gather(a, idx) => {
                let av = val(*a);
                let mut da = Matrix::zeros(av.rows, av.cols);
                for (r, &src) in idx.iter().enumerate() {
                    for (o, v) in da.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::ScatterMean { a, idx, inv_count } => {
                let av = val(*a);
                let mut da = Matrix::zeros(av.rows, av.cols);
                for (r, &t) in idx.iter().enumerate() {
                    let w = inv_count[t];
                    for (o, v) in da.row_mut(r).iter_mut().zip(g.row(t)) {
                        *o = w * v;
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = val(p).cols;
                    let mut dp = Matrix::zeros(g.rows, w);
                    for r in 0..g.rows {
                        dp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                    }
                    accumulate(grads, p, dp);
                    off += w;
                }
            }
            &Op::SelectCols(a, start) => {
                let av = val(a);
                let mut da = Matrix::zeros(av.rows, av.cols);
                for r in 0..g.rows {
                    da.row_mut(r)[start..start + g.cols].copy_from_slice(g.row(r));
                }
                accumulate(grads, a, da);
            }
            Op::WeightedSqErr { pred, target, w } => {
                let pv = val(*pred);
                let up = g.data[0];
                let mut dp = Matrix::zeros(pv.rows, pv.cols);
                for r in 0..pv.rows {
                    let f = 2.0 * w[r] * up;
                    for ((d, p), t) in dp.row_mut(r).iter_mut().zip(pv.row(r)).zip(target.row(r)) {
                        *d = f * (p - t);
                    }
                }
                accumulate(grads, *pred, dp);
            }
            Op::WeightedSum(a, w) => {
                let up = g.data[0];
                accumulate(grads, *a, w.map(|x| up * x));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

/// Result of a reverse pass.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    param_of: Vec<Option<ParamId>>,
}

impl Gradients {
    /// Gradient with respect to a recorded value (`None` if it does not
    /// influence the output).
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Per-parameter gradients indexed like the store; unused parameters get zeros.
    pub fn params(&self, store: &ParamStore) -> ParamGrads {
        let mut out: Vec<Matrix> = store
            .entries()
            .iter()
            .map(|e| Matrix::zeros(e.value.rows, e.value.cols))
            .collect();
        for (node, pid) in self.param_of.iter().enumerate() {
            if let (Some(pid), Some(g)) = (pid, self.grads.get(node).and_then(Option::as_ref)) {
                out[pid.0].add_assign(g);
            }
        }
        ParamGrads(out)
    }
}

/// Gradients aligned with the arrays of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads(pub Vec<Matrix>);

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.0[id.0]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, g| m.max(g.max_abs()))
    }
}
