//! Sliding-window geometry shared by convolution, transposed convolution and
//! pooling.
//!
//! Every windowed op uses "SAME-ceil" padding: output extent is
//! `ceil(input / stride)` and the total padding is split with the odd row or
//! column going to the bottom/right edge.

use std::ops::Range;

use crate::scalar::Real;

/// Target size in elements of one im2col band.
const BAND_ELEMS: usize = 1 << 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

pub fn ceil_div(x: usize, d: usize) -> usize {
    x.div_ceil(d)
}

impl ConvGeometry {
    pub fn same_ceil(in_h: usize, in_w: usize, kh: usize, kw: usize, stride: usize) -> Self {
        let out_h = ceil_div(in_h, stride);
        let out_w = ceil_div(in_w, stride);
        let pad_h = ((out_h - 1) * stride + kh).saturating_sub(in_h);
        let pad_w = ((out_w - 1) * stride + kw).saturating_sub(in_w);
        ConvGeometry {
            in_h,
            in_w,
            out_h,
            out_w,
            kh,
            kw,
            stride,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
        }
    }

    pub fn taps(&self) -> usize {
        self.kh * self.kw
    }

    /// 1×1, stride 1, no padding: im2col is the identity.
    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1
    }

    /// Input row hit by output row `o` and kernel row `k`, if in bounds.
    #[inline]
    pub fn in_row(&self, o: usize, k: usize) -> Option<usize> {
        (o * self.stride + k)
            .checked_sub(self.pad_top)
            .filter(|&r| r < self.in_h)
    }

    #[inline]
    pub fn in_col(&self, o: usize, k: usize) -> Option<usize> {
        (o * self.stride + k)
            .checked_sub(self.pad_left)
            .filter(|&c| c < self.in_w)
    }

    /// Output rows per im2col band for a given patch length. Depends only on
    /// the geometry, never on the thread count.
    pub fn band_rows(&self, patch_len: usize) -> usize {
        (BAND_ELEMS / (self.out_w * patch_len).max(1)).clamp(1, self.out_h)
    }

    pub fn bands(&self, patch_len: usize) -> impl Iterator<Item = Range<usize>> {
        let step = self.band_rows(patch_len);
        let out_h = self.out_h;
        (0..out_h).step_by(step).map(move |r0| r0..(r0 + step).min(out_h))
    }
}

/// Gathers input patches for output rows `rows` into `cols`, one row of
/// `kh * kw * channels` values per output pixel (tap-major, channel-minor).
pub(crate) fn im2col<T: Real>(x: &[T], channels: usize, g: &ConvGeometry, rows: Range<usize>, cols: &mut [T]) {
    let patch = g.taps() * channels;
    let mut off = 0;
    for oh in rows {
        for ow in 0..g.out_w {
            let dst = &mut cols[off..off + patch];
            off += patch;
            for ki in 0..g.kh {
                let row_dst = &mut dst[ki * g.kw * channels..(ki + 1) * g.kw * channels];
                let Some(ih) = g.in_row(oh, ki) else {
                    row_dst.fill(T::zero());
                    continue;
                };
                for kj in 0..g.kw {
                    let tap = &mut row_dst[kj * channels..(kj + 1) * channels];
                    match g.in_col(ow, kj) {
                        Some(iw) => {
                            let src = (ih * g.in_w + iw) * channels;
                            tap.copy_from_slice(&x[src..src + channels]);
                        }
                        None => tap.fill(T::zero()),
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch rows back onto the input grid.
pub(crate) fn col2im_add<T: Real>(cols: &[T], channels: usize, g: &ConvGeometry, rows: Range<usize>, x: &mut [T]) {
    let patch = g.taps() * channels;
    let mut off = 0;
    for oh in rows {
        for ow in 0..g.out_w {
            let src = &cols[off..off + patch];
            off += patch;
            for ki in 0..g.kh {
                let Some(ih) = g.in_row(oh, ki) else { continue };
                for kj in 0..g.kw {
                    let Some(iw) = g.in_col(ow, kj) else { continue };
                    let dst = (ih * g.in_w + iw) * channels;
                    let tap = &src[(ki * g.kw + kj) * channels..(ki * g.kw + kj + 1) * channels];
                    for (d, &s) in x[dst..dst + channels].iter_mut().zip(tap) {
                        *d += s;
                    }
                }
            }
        }
    }
}
