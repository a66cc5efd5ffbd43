//! Per-layer gradient check fixtures: each layer op wired into a tiny graph
//! on random inputs no larger than 7×7×4, scored with an MSE loss.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{compare, GradCheckOptions, GradCheckReport};
use super::graph::{GraphBuilder, NodeId};
use super::params::{Init, ParamStore};
use crate::error::{Error, Result};
use crate::layers::{ConvSpec, DenseBlockSpec, PoolKind};
use crate::tensor::{Shape, Tensor};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerOp {
    Conv2d,
    ConvPool2,
    AvgPool2,
    MaxPool2,
    MaxFilter3,
    Deconv2,
    UpsampleLinear,
    DenseBlock,
    Relu,
    Mse,
}

impl LayerOp {
    pub const ALL: [LayerOp; 10] = [
        LayerOp::Conv2d,
        LayerOp::ConvPool2,
        LayerOp::AvgPool2,
        LayerOp::MaxPool2,
        LayerOp::MaxFilter3,
        LayerOp::Deconv2,
        LayerOp::UpsampleLinear,
        LayerOp::DenseBlock,
        LayerOp::Relu,
        LayerOp::Mse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerOp::Conv2d => "conv2d",
            LayerOp::ConvPool2 => "conv_pool2",
            LayerOp::AvgPool2 => "avg_pool2",
            LayerOp::MaxPool2 => "max_pool2",
            LayerOp::MaxFilter3 => "max_filter3",
            LayerOp::Deconv2 => "deconv2",
            LayerOp::UpsampleLinear => "upsample_linear",
            LayerOp::DenseBlock => "dense_block",
            LayerOp::Relu => "relu",
            LayerOp::Mse => "mse",
        }
    }
}

impl fmt::Display for LayerOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::Layer(format!("unknown layer op `{s}`")))
    }
}

/// Deliberate corruption of an analytic gradient, for negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales every convolution weight gradient by 1.5.
    ConvBackward,
}

fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize], away_from_zero: bool) -> Tensor {
    let shape = Shape::new(dims.to_vec()).expect("fixture shape");
    let data: Vec<f64> = (0..shape.numel())
        .map(|_| {
            if away_from_zero {
                let m: f64 = rng.random_range(0.1..1.0);
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("fixture data")
}

/// Runs the central-difference check for one layer op.
pub fn check_layer(op: LayerOp, seed: u64, fault: Option<Fault>) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (op as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut b = GraphBuilder::new();
    let src =
        |b: &mut GraphBuilder, dims: [usize; 3]| b.param_node("x", Shape::new(dims.to_vec()).unwrap(), Init::Zeros);

    let out: NodeId = match op {
        LayerOp::Conv2d => {
            let x = src(&mut b, [7, 6, 4])?;
            b.conv(x, ConvSpec::new(4, 3, 3, 1), false, "conv")?
        }
        LayerOp::ConvPool2 => {
            let x = src(&mut b, [7, 7, 3])?;
            b.conv(x, ConvSpec::new(3, 4, 3, 2), true, "conv")?
        }
        LayerOp::AvgPool2 => {
            let x = src(&mut b, [7, 5, 3])?;
            b.pool2(x, PoolKind::Avg)?
        }
        LayerOp::MaxPool2 => {
            let x = src(&mut b, [7, 7, 4])?;
            b.pool2(x, PoolKind::Max)?
        }
        LayerOp::MaxFilter3 => {
            let x = src(&mut b, [5, 6, 2])?;
            b.max_filter3(x)?
        }
        LayerOp::Deconv2 => {
            let x = src(&mut b, [4, 3, 4])?;
            b.deconv(x, 3, (7, 6), true, "deconv")?
        }
        LayerOp::UpsampleLinear => {
            let x = src(&mut b, [3, 4, 2])?;
            b.upsample(x, (7, 7))?
        }
        LayerOp::DenseBlock => {
            let x = src(&mut b, [5, 5, 3])?;
            b.dense_block(x, &DenseBlockSpec::new(3, 2, 3, 4), None, "dense")?
        }
        LayerOp::Relu => {
            let x = src(&mut b, [5, 5, 3])?;
            b.relu(x)?
        }
        LayerOp::Mse => src(&mut b, [5, 5, 3])?,
    };
    let target = b.input(b.shape(out).clone());
    let loss = b.mse(out, target)?;
    let graph = b.finish();

    let mut params = ParamStore::<f64>::zeros(&graph);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let dims = params.shape(id).dims().to_vec();
        let t = random_tensor(&mut rng, &dims, op == LayerOp::Relu);
        params.get_mut(id).copy_from_slice(t.as_slice::<f64>().unwrap());
    }
    let target_t = random_tensor(&mut rng, graph.node(target).shape.dims(), false);
    let inputs = [(target, &target_t)];

    let acts = graph.forward(&params, &inputs)?;
    let mut grads = graph.backward(&params, &acts, loss)?;
    if fault == Some(Fault::ConvBackward) {
        for id in params.ids() {
            if params.name(id).ends_with(".weight") {
                grads.get_mut(id).iter_mut().for_each(|g| *g *= 1.5);
            }
        }
    }
    let opts = GradCheckOptions {
        eps: GRADCHECK_EPS,
        max_per_param: None,
        seed,
    };
    compare(&graph, &params, &inputs, loss, &grads, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes() {
        for op in LayerOp::ALL {
            let r = check_layer(op, 7, None).unwrap();
            assert!(r.checked > 0);
            assert!(r.max_rel_error < GRADCHECK_TOLERANCE, "{op}: {r:?}");
        }
    }

    #[test]
    fn corrupted_conv_backward_is_caught() {
        let r = check_layer(LayerOp::Conv2d, 7, Some(Fault::ConvBackward)).unwrap();
        assert!(r.max_rel_error > GRADCHECK_TOLERANCE);
    }

    #[test]
    fn op_names_roundtrip() {
        for op in LayerOp::ALL {
            assert_eq!(op.name().parse::<LayerOp>().unwrap(), op);
        }
        assert!("conv3d".parse::<LayerOp>().is_err());
    }
}
