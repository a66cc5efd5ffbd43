//! Densely connected convolution block: layer `i` sees the block input
//! concatenated with every earlier layer's output, and a 1×1 transition conv
//! maps the full concatenation to the block's output width.

use super::conv::{conv2d_forward, ConvSpec};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_DENSE_LAYERS: usize = 4;
pub const DEFAULT_GROWTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseBlockSpec {
    pub in_channels: usize,
    pub num_layers: usize,
    pub growth: usize,
    pub out_channels: usize,
    /// Channels appended to the concatenation just before the transition
    /// conv by a parallel branch (0 for a plain block).
    pub side_channels: usize,
    pub relu_transition: bool,
}

impl DenseBlockSpec {
    pub fn new(in_channels: usize, num_layers: usize, growth: usize, out_channels: usize) -> Self {
        DenseBlockSpec {
            in_channels,
            num_layers,
            growth,
            out_channels,
            side_channels: 0,
            relu_transition: true,
        }
    }

    /// Input width of internal layer `i`.
    pub fn layer_in(&self, i: usize) -> usize {
        self.in_channels + i * self.growth
    }

    pub fn layer_spec(&self, i: usize) -> ConvSpec {
        ConvSpec::new(self.layer_in(i), self.growth, 3, 1)
    }

    pub fn transition_spec(&self) -> ConvSpec {
        ConvSpec::new(
            self.layer_in(self.num_layers) + self.side_channels,
            self.out_channels,
            1,
            1,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Layer("dense block channel counts must be positive".into()));
        }
        if self.num_layers > 0 && self.growth == 0 {
            return Err(Error::Layer("dense block growth must be positive".into()));
        }
        Ok(())
    }
}

/// Weights for a plain dense block: one `(weight, bias)` pair per internal
/// layer followed by the transition pair.
#[derive(Debug, Clone)]
pub struct DenseBlockParams {
    pub layers: Vec<(Tensor, Tensor)>,
    pub transition: (Tensor, Tensor),
}

pub fn relu_forward<T: Real>(x: &[T], y: &mut [T]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o = if v > T::zero() { v } else { T::zero() };
    }
}

/// `dx += dy` where `x > 0`.
pub fn relu_backward<T: Real>(x: &[T], dy: &[T], dx: &mut [T]) {
    for ((d, &g), &v) in dx.iter_mut().zip(dy).zip(x) {
        if v > T::zero() {
            *d += g;
        }
    }
}

pub fn relu<T: Real>(x: &Tensor) -> Result<Tensor> {
    let src = x.typed::<T>("relu")?;
    let mut y = vec![T::zero(); src.len()];
    relu_forward(src, &mut y);
    Tensor::from_vec(x.shape().clone(), y)
}

fn concat_into<T: Copy>(a: &[T], ca: usize, b: &[T], cb: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    for (pa, pb) in a.chunks_exact(ca).zip(b.chunks_exact(cb)) {
        out.extend_from_slice(pa);
        out.extend_from_slice(pb);
    }
    out
}

fn expect_dims(t: &Tensor, want: &[usize]) -> Result<()> {
    if t.dims() != want {
        return Err(Error::ShapeMismatch {
            op: "dense_block params",
            left: t.dims().to_vec(),
            right: want.to_vec(),
        });
    }
    Ok(())
}

/// Eager forward pass of a plain dense block (no side branch).
pub fn dense_block<T: Real>(x: &Tensor, spec: &DenseBlockSpec, params: &DenseBlockParams) -> Result<Tensor> {
    spec.validate()?;
    if spec.side_channels != 0 {
        return Err(Error::Layer("eager dense_block does not take a side branch".into()));
    }
    let (h, w, c) = x
        .shape()
        .as_hwc()
        .ok_or_else(|| Error::Layer(format!("dense_block expects [H, W, C], got {:?}", x.dims())))?;
    if c != spec.in_channels {
        return Err(Error::Layer(format!(
            "dense_block: input has {c} channels, spec expects {}",
            spec.in_channels
        )));
    }
    if params.layers.len() != spec.num_layers {
        return Err(Error::Layer(format!(
            "dense_block: {} layer params for {} layers",
            params.layers.len(),
            spec.num_layers
        )));
    }

    let mut features = x.typed::<T>("dense_block")?.to_vec();
    let mut width = c;
    for (i, (wt, b)) in params.layers.iter().enumerate() {
        let ls = spec.layer_spec(i);
        expect_dims(wt, &ls.weight_dims())?;
        expect_dims(b, &[ls.out_channels])?;
        let g = ls.geometry(h, w);
        let mut y = vec![T::zero(); h * w * spec.growth];
        conv2d_forward(
            &features,
            width,
            &g,
            wt.typed("dense_block")?,
            b.typed("dense_block")?,
            spec.growth,
            true,
            &mut y,
        );
        features = concat_into(&features, width, &y, spec.growth);
        width += spec.growth;
    }

    let ts = spec.transition_spec();
    let (wt, b) = &params.transition;
    expect_dims(wt, &ts.weight_dims())?;
    expect_dims(b, &[ts.out_channels])?;
    let mut out = vec![T::zero(); h * w * spec.out_channels];
    conv2d_forward(
        &features,
        width,
        &ts.geometry(h, w),
        wt.typed("dense_block")?,
        b.typed("dense_block")?,
        spec.out_channels,
        spec.relu_transition,
        &mut out,
    );
    Tensor::from_vec(Shape::hwc(h, w, spec.out_channels)?, out)
}
