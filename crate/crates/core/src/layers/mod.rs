//! Layer kernels. Each op has a slice-level forward/backward pair used by
//! the autodiff graph, plus an eager `Tensor` entry point.

mod conv;
mod dense;
pub(crate) mod gemm;
mod geometry;
mod pool;
mod upsample;

pub use conv::{
    conv2d, conv2d_backward, conv2d_forward, conv_pool2, deconv2, deconv2_backward, deconv2_forward, ConvSpec,
    DeconvSpec,
};
pub use dense::{
    dense_block, relu, relu_backward, relu_forward, DenseBlockParams, DenseBlockSpec, DEFAULT_DENSE_LAYERS,
    DEFAULT_GROWTH,
};
pub use geometry::{ceil_div, ConvGeometry};
pub use pool::{
    avg_pool2, filter3_geometry, max_filter3, max_pool2, pool2_geometry, pool_backward, pool_forward, PoolKind,
};
pub use upsample::{upsample_backward, upsample_forward, upsample_linear};
