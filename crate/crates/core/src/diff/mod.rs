//! A small reverse-mode engine over dense matrices: just the primitives the
//! graph models need, plus Adam, the one-cycle schedule, finite-difference
//! verification and parameter checkpoints.

mod checkpoint;
mod gradcheck;
mod layers;
mod matrix;
mod optim;
mod params;
mod tape;

pub use checkpoint::{
    decode_params, encode_params, load_params, save_params, MAGIC as CHECKPOINT_MAGIC,
};
pub use gradcheck::{finite_diff_check, FdOptions, FdReport, Probe};
pub use layers::{
    apply_bn_updates, batch_norm, edge_kernel_conv, mean_aggregate, mlp_apply, pool_mean,
    sage_layer, select_retained, unpool_nearest, Activation, BatchNormParams, Linear, MlpParams,
    Mode, SageParams, ScaleTopology, BN_EPS, BN_MOMENTUM,
};
pub(crate) use matrix::gemm;
pub use matrix::Matrix;
pub use optim::{adam_step, one_cycle_lr, AdamConfig, OneCycle, OptimState};
pub use params::{uniform, ParamEntry, ParamId, ParamStore};
pub use tape::{BnStats, BnUpdate, Gradients, ParamGrads, Tape, Topology, Var};
