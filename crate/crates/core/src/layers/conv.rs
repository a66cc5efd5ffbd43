//! Convolution, strided "convolution pooling" and stride-2 transposed
//! convolution, all lowered to im2col + GEMM over channels-last buffers.
//!
//! Convolution weights are laid out `(kh, kw, cin, cout)`, which is exactly
//! the `[patch, cout]` matrix the GEMM wants. Transposed convolution weights
//! are `(cin, kh, kw, cout)` so that they form the `[cin, patch]` matrix.

use rayon::prelude::*;

use super::gemm::{gemm, Mat};
use super::geometry::{ceil_div, col2im_add, im2col, ConvGeometry};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Layer("channel counts must be positive".into()));
        }
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::Layer(format!("stride {} not in {{1, 2}}", self.stride)));
        }
        let (kh, kw) = self.kernel;
        if kh == 0 || kw == 0 {
            return Err(Error::Layer("kernel extents must be positive".into()));
        }
        if self.stride == 1 && (kh % 2 == 0 || kw % 2 == 0) {
            return Err(Error::Layer(format!(
                "stride-1 SAME convolution needs odd kernel extents, got {kh}x{kw}"
            )));
        }
        Ok(())
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.kernel.0, self.kernel.1, self.in_channels, self.out_channels]
    }

    pub fn geometry(&self, h: usize, w: usize) -> ConvGeometry {
        ConvGeometry::same_ceil(h, w, self.kernel.0, self.kernel.1, self.stride)
    }

    pub fn fan_in(&self) -> usize {
        self.kernel.0 * self.kernel.1 * self.in_channels
    }
}

/// Transposed convolution, stride 2, producing an explicit target extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeconvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
}

impl DeconvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        DeconvSpec {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
        }
    }

    pub const STRIDE: usize = 2;

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.in_channels, self.kernel.0, self.kernel.1, self.out_channels]
    }

    /// Geometry of the forward convolution this op is the adjoint of, i.e.
    /// a stride-2 conv from the target extent down to the input extent.
    pub fn geometry(&self, in_h: usize, in_w: usize, target: (usize, usize)) -> Result<ConvGeometry> {
        let (th, tw) = target;
        if th == 0 || tw == 0 || ceil_div(th, Self::STRIDE) != in_h || ceil_div(tw, Self::STRIDE) != in_w {
            return Err(Error::Layer(format!(
                "deconv target {th}x{tw} incompatible with input {in_h}x{in_w}: need ceil(target/2) == input"
            )));
        }
        Ok(ConvGeometry::same_ceil(
            th,
            tw,
            self.kernel.0,
            self.kernel.1,
            Self::STRIDE,
        ))
    }

    /// Effective fan-in: each output pixel receives about `kh*kw/4` taps.
    pub fn fan_in(&self) -> usize {
        (self.in_channels * self.kernel.0 * self.kernel.1 / (Self::STRIDE * Self::STRIDE)).max(1)
    }
}

fn add_bias_relu<T: Real>(y: &mut [T], bias: &[T], relu: bool) {
    for px in y.chunks_exact_mut(bias.len()) {
        for (v, &b) in px.iter_mut().zip(bias) {
            *v += b;
            if relu && *v < T::zero() {
                *v = T::zero();
            }
        }
    }
}

fn accumulate_bias_grad<T: Real>(dy: &[T], db: &mut [T]) {
    for px in dy.chunks_exact(db.len()) {
        for (d, &g) in db.iter_mut().zip(px) {
            *d += g;
        }
    }
}

/// `y = act(conv(x, w) + b)`; `x` is `[in_h, in_w, cin]`, `y` is
/// `[out_h, out_w, cout]`. Output row bands are computed in parallel; band
/// boundaries do not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward<T: Real>(
    x: &[T],
    cin: usize,
    g: &ConvGeometry,
    w: &[T],
    b: &[T],
    cout: usize,
    relu: bool,
    y: &mut [T],
) {
    let patch = g.taps() * cin;
    let band = g.band_rows(patch);
    let row_out = g.out_w * cout;
    y.par_chunks_mut(band * row_out).enumerate().for_each(|(bi, yb)| {
        let r0 = bi * band;
        let rows = r0..r0 + yb.len() / row_out;
        let npx = rows.len() * g.out_w;
        if g.is_pointwise() {
            let xb = &x[r0 * g.in_w * cin..(r0 * g.in_w * cin) + npx * cin];
            gemm(npx, cin, cout, Mat::n(xb), Mat::n(w), yb, false);
        } else {
            let mut cols = vec![T::zero(); npx * patch];
            im2col(x, cin, g, rows, &mut cols);
            gemm(npx, patch, cout, Mat::n(&cols[..]), Mat::n(w), yb, false);
        }
        add_bias_relu(yb, b, relu);
    });
}

/// Accumulates `dw`, `db` and optionally `dx` given the output adjoint `dy`
/// (already masked by the activation derivative).
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Real>(
    x: &[T],
    cin: usize,
    g: &ConvGeometry,
    w: &[T],
    cout: usize,
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    accumulate_bias_grad(dy, db);
    let patch = g.taps() * cin;
    let mut cols = Vec::new();
    for rows in g.bands(patch) {
        let npx = rows.len() * g.out_w;
        let dyb = &dy[rows.start * g.out_w * cout..rows.end * g.out_w * cout];
        if g.is_pointwise() {
            let xr = rows.start * g.in_w * cin..rows.end * g.in_w * cin;
            gemm(cin, npx, cout, Mat::t(&x[xr.clone()]), Mat::n(dyb), dw, true);
            if let Some(dx) = dx.as_deref_mut() {
                gemm(npx, cout, cin, Mat::n(dyb), Mat::t(w), &mut dx[xr], true);
            }
        } else {
            cols.resize(npx * patch, T::zero());
            im2col(x, cin, g, rows.clone(), &mut cols);
            gemm(patch, npx, cout, Mat::t(&cols[..]), Mat::n(dyb), dw, true);
            if let Some(dx) = dx.as_deref_mut() {
                gemm(npx, cout, patch, Mat::n(dyb), Mat::t(w), &mut cols, false);
                col2im_add(&cols, cin, g, rows, dx);
            }
        }
    }
}

/// Transposed convolution. `g` is the geometry from
/// [`DeconvSpec::geometry`]: its `out_*` extents are this op's input and its
/// `in_*` extents are this op's output.
#[allow(clippy::too_many_arguments)]
pub fn deconv2_forward<T: Real>(
    x: &[T],
    cin: usize,
    g: &ConvGeometry,
    w: &[T],
    b: &[T],
    cout: usize,
    relu: bool,
    y: &mut [T],
) {
    let patch = g.taps() * cout;
    y.fill(T::zero());
    let mut cols = Vec::new();
    for rows in g.bands(patch) {
        let npx = rows.len() * g.out_w;
        cols.resize(npx * patch, T::zero());
        let xb = &x[rows.start * g.out_w * cin..rows.end * g.out_w * cin];
        gemm(npx, cin, patch, Mat::n(xb), Mat::n(w), &mut cols, false);
        col2im_add(&cols, cout, g, rows, y);
    }
    add_bias_relu(y, b, relu);
}

#[allow(clippy::too_many_arguments)]
pub fn deconv2_backward<T: Real>(
    x: &[T],
    cin: usize,
    g: &ConvGeometry,
    w: &[T],
    cout: usize,
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    accumulate_bias_grad(dy, db);
    let patch = g.taps() * cout;
    let mut cols = Vec::new();
    for rows in g.bands(patch) {
        let npx = rows.len() * g.out_w;
        cols.resize(npx * patch, T::zero());
        im2col(dy, cout, g, rows.clone(), &mut cols);
        let xr = rows.start * g.out_w * cin..rows.end * g.out_w * cin;
        gemm(cin, npx, patch, Mat::t(&x[xr.clone()]), Mat::n(&cols[..]), dw, true);
        if let Some(dx) = dx.as_deref_mut() {
            gemm(npx, patch, cin, Mat::n(&cols[..]), Mat::t(w), &mut dx[xr], true);
        }
    }
}

fn check_param(t: &Tensor, want: &[usize], what: &'static str) -> Result<()> {
    if t.dims() != want {
        return Err(Error::ShapeMismatch {
            op: what,
            left: t.dims().to_vec(),
            right: want.to_vec(),
        });
    }
    Ok(())
}

fn spatial(x: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    x.shape()
        .as_hwc()
        .ok_or_else(|| Error::Layer(format!("{op} expects an [H, W, C] tensor, got {:?}", x.dims())))
}

/// Cross-correlation with SAME-ceil zero padding on an `[H, W, Cin]` tensor.
pub fn conv2d<T: Real>(x: &Tensor, spec: &ConvSpec, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    spec.validate()?;
    let (h, w, c) = spatial(x, "conv2d")?;
    if c != spec.in_channels {
        return Err(Error::Layer(format!(
            "conv2d: input has {c} channels, spec expects {}",
            spec.in_channels
        )));
    }
    check_param(weights, &spec.weight_dims(), "conv2d weights")?;
    check_param(bias, &[spec.out_channels], "conv2d bias")?;
    let g = spec.geometry(h, w);
    let mut y = vec![T::zero(); g.out_h * g.out_w * spec.out_channels];
    conv2d_forward(
        x.typed::<T>("conv2d")?,
        c,
        &g,
        weights.typed::<T>("conv2d")?,
        bias.typed::<T>("conv2d")?,
        spec.out_channels,
        false,
        &mut y,
    );
    Tensor::from_vec(Shape::hwc(g.out_h, g.out_w, spec.out_channels)?, y)
}

/// Stride-2 convolution used as a learned downsampler.
pub fn conv_pool2<T: Real>(x: &Tensor, spec: &ConvSpec, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if spec.stride != 2 {
        return Err(Error::Layer(format!("conv_pool2 needs stride 2, got {}", spec.stride)));
    }
    conv2d::<T>(x, spec, weights, bias)
}

/// Stride-2 transposed convolution onto an explicit `(H, W)` target.
pub fn deconv2<T: Real>(
    x: &Tensor,
    spec: &DeconvSpec,
    target: (usize, usize),
    weights: &Tensor,
    bias: &Tensor,
) -> Result<Tensor> {
    let (h, w, c) = spatial(x, "deconv2")?;
    if c != spec.in_channels {
        return Err(Error::Layer(format!(
            "deconv2: input has {c} channels, spec expects {}",
            spec.in_channels
        )));
    }
    check_param(weights, &spec.weight_dims(), "deconv2 weights")?;
    check_param(bias, &[spec.out_channels], "deconv2 bias")?;
    let g = spec.geometry(h, w, target)?;
    let mut y = vec![T::zero(); target.0 * target.1 * spec.out_channels];
    deconv2_forward(
        x.typed::<T>("deconv2")?,
        c,
        &g,
        weights.typed::<T>("deconv2")?,
        bias.typed::<T>("deconv2")?,
        spec.out_channels,
        false,
        &mut y,
    );
    Tensor::from_vec(Shape::hwc(target.0, target.1, spec.out_channels)?, y)
}
