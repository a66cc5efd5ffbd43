//! Ceil-mode pooling. Boundary windows only see in-bounds elements, so the
//! average divides by the number of real pixels in the window.

use super::geometry::ConvGeometry;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Avg,
    Max,
}

/// 2×2 window, stride 2.
pub fn pool2_geometry(h: usize, w: usize) -> ConvGeometry {
    ConvGeometry::same_ceil(h, w, 2, 2, 2)
}

/// 3×3 window, stride 1 (the parallel max-filter branch).
pub fn filter3_geometry(h: usize, w: usize) -> ConvGeometry {
    ConvGeometry::same_ceil(h, w, 3, 3, 1)
}

fn window(g: &ConvGeometry, oh: usize, ow: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let r0 = (oh * g.stride).saturating_sub(g.pad_top);
    let r1 = (oh * g.stride + g.kh).saturating_sub(g.pad_top).min(g.in_h);
    let c0 = (ow * g.stride).saturating_sub(g.pad_left);
    let c1 = (ow * g.stride + g.kw).saturating_sub(g.pad_left).min(g.in_w);
    (r0..r1, c0..c1)
}

pub fn pool_forward<T: Real>(kind: PoolKind, x: &[T], c: usize, g: &ConvGeometry, y: &mut [T]) {
    for oh in 0..g.out_h {
        for ow in 0..g.out_w {
            let (rows, cols) = window(g, oh, ow);
            let out = &mut y[(oh * g.out_w + ow) * c..(oh * g.out_w + ow + 1) * c];
            match kind {
                PoolKind::Avg => {
                    out.fill(T::zero());
                    for r in rows.clone() {
                        for cc in cols.clone() {
                            let src = &x[(r * g.in_w + cc) * c..(r * g.in_w + cc + 1) * c];
                            for (o, &v) in out.iter_mut().zip(src) {
                                *o += v;
                            }
                        }
                    }
                    let inv = T::one() / T::from_f64((rows.len() * cols.len()) as f64);
                    out.iter_mut().for_each(|o| *o *= inv);
                }
                PoolKind::Max => {
                    out.fill(T::neg_infinity());
                    for r in rows.clone() {
                        for cc in cols.clone() {
                            let src = &x[(r * g.in_w + cc) * c..(r * g.in_w + cc + 1) * c];
                            for (o, &v) in out.iter_mut().zip(src) {
                                if v > *o {
                                    *o = v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates the input adjoint. Max routes each output's gradient to the
/// first maximal element in row-major window order.
pub fn pool_backward<T: Real>(kind: PoolKind, x: &[T], c: usize, g: &ConvGeometry, dy: &[T], dx: &mut [T]) {
    for oh in 0..g.out_h {
        for ow in 0..g.out_w {
            let (rows, cols) = window(g, oh, ow);
            let o = (oh * g.out_w + ow) * c;
            match kind {
                PoolKind::Avg => {
                    let inv = T::one() / T::from_f64((rows.len() * cols.len()) as f64);
                    for r in rows.clone() {
                        for cc in cols.clone() {
                            let i = (r * g.in_w + cc) * c;
                            for ch in 0..c {
                                dx[i + ch] += dy[o + ch] * inv;
                            }
                        }
                    }
                }
                PoolKind::Max => {
                    for ch in 0..c {
                        let mut best = T::neg_infinity();
                        let mut arg = 0;
                        for r in rows.clone() {
                            for cc in cols.clone() {
                                let i = (r * g.in_w + cc) * c + ch;
                                if x[i] > best {
                                    best = x[i];
                                    arg = i;
                                }
                            }
                        }
                        dx[arg] += dy[o + ch];
                    }
                }
            }
        }
    }
}

fn apply<T: Real>(kind: PoolKind, x: &Tensor, geometry: fn(usize, usize) -> ConvGeometry) -> Result<Tensor> {
    let (h, w, c) = x
        .shape()
        .as_hwc()
        .ok_or_else(|| Error::Layer(format!("pooling expects [H, W, C], got {:?}", x.dims())))?;
    let g = geometry(h, w);
    let mut y = vec![T::zero(); g.out_h * g.out_w * c];
    pool_forward(kind, x.typed::<T>("pool")?, c, &g, &mut y);
    Tensor::from_vec(Shape::hwc(g.out_h, g.out_w, c)?, y)
}

pub fn avg_pool2<T: Real>(x: &Tensor) -> Result<Tensor> {
    apply::<T>(PoolKind::Avg, x, pool2_geometry)
}

pub fn max_pool2<T: Real>(x: &Tensor) -> Result<Tensor> {
    apply::<T>(PoolKind::Max, x, pool2_geometry)
}

pub fn max_filter3<T: Real>(x: &Tensor) -> Result<Tensor> {
    apply::<T>(PoolKind::Max, x, filter3_geometry)
}
