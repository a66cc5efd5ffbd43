//! Bilinear upsampling with half-pixel centers (`align_corners = false`):
//! output pixel `i` samples source coordinate `(i + 0.5) * in / out - 0.5`,
//! clamped to the valid range.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy)]
struct Tap<T> {
    lo: usize,
    hi: usize,
    frac: T,
}

fn axis_taps<T: Real>(src: usize, dst: usize) -> Vec<Tap<T>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            let frac = if hi == lo { 0.0 } else { pos - lo as f64 };
            Tap {
                lo,
                hi,
                frac: T::from_f64(frac),
            }
        })
        .collect()
}

/// `x` is `[h, w, c]`, `y` is `[th, tw, c]`.
pub fn upsample_forward<T: Real>(x: &[T], (h, w, c): (usize, usize, usize), (th, tw): (usize, usize), y: &mut [T]) {
    let rows = axis_taps::<T>(h, th);
    let cols = axis_taps::<T>(w, tw);
    for (i, ry) in rows.iter().enumerate() {
        for (j, cx) in cols.iter().enumerate() {
            let p00 = (ry.lo * w + cx.lo) * c;
            let p01 = (ry.lo * w + cx.hi) * c;
            let p10 = (ry.hi * w + cx.lo) * c;
            let p11 = (ry.hi * w + cx.hi) * c;
            let out = &mut y[(i * tw + j) * c..(i * tw + j + 1) * c];
            for (ch, o) in out.iter_mut().enumerate() {
                // lerp form keeps constant inputs exactly constant
                let top = x[p00 + ch] + cx.frac * (x[p01 + ch] - x[p00 + ch]);
                let bot = x[p10 + ch] + cx.frac * (x[p11 + ch] - x[p10 + ch]);
                *o = top + ry.frac * (bot - top);
            }
        }
    }
}

pub fn upsample_backward<T: Real>((h, w, c): (usize, usize, usize), (th, tw): (usize, usize), dy: &[T], dx: &mut [T]) {
    let rows = axis_taps::<T>(h, th);
    let cols = axis_taps::<T>(w, tw);
    let one = T::one();
    for (i, ry) in rows.iter().enumerate() {
        for (j, cx) in cols.iter().enumerate() {
            let weights = [
                ((ry.lo * w + cx.lo) * c, (one - ry.frac) * (one - cx.frac)),
                ((ry.lo * w + cx.hi) * c, (one - ry.frac) * cx.frac),
                ((ry.hi * w + cx.lo) * c, ry.frac * (one - cx.frac)),
                ((ry.hi * w + cx.hi) * c, ry.frac * cx.frac),
            ];
            let g = &dy[(i * tw + j) * c..(i * tw + j + 1) * c];
            for (base, wt) in weights {
                for (ch, &gv) in g.iter().enumerate() {
                    dx[base + ch] += gv * wt;
                }
            }
        }
    }
}

pub fn upsample_linear<T: Real>(x: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    let (h, w, c) = x
        .shape()
        .as_hwc()
        .ok_or_else(|| Error::Layer(format!("upsample expects [H, W, C], got {:?}", x.dims())))?;
    if target.0 < h || target.1 < w {
        return Err(Error::Layer(format!(
            "upsample target {}x{} is smaller than input {h}x{w}",
            target.0, target.1
        )));
    }
    let mut y = vec![T::zero(); target.0 * target.1 * c];
    upsample_forward(x.typed::<T>("upsample_linear")?, (h, w, c), target, &mut y);
    Tensor::from_vec(Shape::hwc(target.0, target.1, c)?, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DType;

    #[test]
    fn half_pixel_samples() {
        let x = Tensor::from_vec(Shape::hwc(1, 2, 1).unwrap(), vec![0.0f64, 1.0]).unwrap();
        let y = upsample_linear::<f64>(&x, (1, 4)).unwrap();
        assert_eq!(y.as_slice::<f64>().unwrap(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn constants_stay_constant() {
        let x = Tensor::full(Shape::hwc(4, 4, 3).unwrap(), DType::F32, 3.0).unwrap();
        for target in [(8, 7), (4, 4), (9, 13), (495, 436)] {
            let y = upsample_linear::<f32>(&x, target).unwrap();
            assert_eq!(y.dims(), &[target.0, target.1, 3]);
            assert!(y.as_slice::<f32>().unwrap().iter().all(|&v| v == 3.0));
        }
    }

    #[test]
    fn shrinking_is_rejected() {
        let x = Tensor::zeros(Shape::hwc(4, 4, 1).unwrap(), DType::F32);
        assert!(upsample_linear::<f32>(&x, (3, 8)).is_err());
    }

    #[test]
    fn backward_is_adjoint() {
        let (h, w, c, th, tw) = (3, 4, 2, 7, 8);
        let x: Vec<f64> = (0..h * w * c).map(|i| (i as f64 * 0.77).sin()).collect();
        let g: Vec<f64> = (0..th * tw * c).map(|i| (i as f64 * 0.31).cos()).collect();
        let mut y = vec![0.0; g.len()];
        upsample_forward(&x, (h, w, c), (th, tw), &mut y);
        let mut dx = vec![0.0; x.len()];
        upsample_backward((h, w, c), (th, tw), &g, &mut dx);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = dx.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
