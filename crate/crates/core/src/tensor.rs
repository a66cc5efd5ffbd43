//! Dense row-major tensors.
//!
//! The last axis is the fastest-varying one, so an `[H, W, C]` tensor stores
//! the channels of each pixel contiguously and element `(i, j, c)` lives at
//! flat offset `(i * W + j) * C + c`. There is no broadcasting except against
//! scalars.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{Element, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    U8,
    F32,
    F64,
}

impl DType {
    pub fn size_in_bytes(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn is_float(self) -> bool {
        !matches!(self, DType::U8)
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidShape(dims));
        }
        if dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(Error::InvalidShape(dims));
        }
        Ok(Shape(dims))
    }

    /// `[h, w, c]`, the layout of every spatial activation.
    pub fn hwc(h: usize, w: usize, c: usize) -> Result<Self> {
        Shape::new(vec![h, w, c])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Splits a rank-3 shape into `(h, w, c)`.
    pub fn as_hwc(&self) -> Option<(usize, usize, usize)> {
        match self.0.as_slice() {
            &[h, w, c] => Some((h, w, c)),
            _ => None,
        }
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::U8(_) => DType::U8,
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: TensorData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EwOp {
    Add,
    Sub,
    Mul,
}

impl Tensor {
    /// A tensor of `shape` with every element equal to `fill`.
    pub fn full(shape: Shape, dtype: DType, fill: f64) -> Result<Self> {
        let n = shape.numel();
        let data = match dtype {
            DType::U8 => {
                if !(0.0..=255.0).contains(&fill) || fill.fract() != 0.0 {
                    return Err(Error::FillOutOfRange(fill));
                }
                TensorData::U8(vec![fill as u8; n])
            }
            DType::F32 => TensorData::F32(vec![fill as f32; n]),
            DType::F64 => TensorData::F64(vec![fill; n]),
        };
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape, dtype: DType) -> Self {
        Tensor::full(shape, dtype, 0.0).expect("zero is representable in every dtype")
    }

    pub fn from_vec<T: Element>(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::CountMismatch {
                from: vec![data.len()],
                from_count: data.len(),
                to: shape.dims().to_vec(),
                to_count: shape.numel(),
            });
        }
        Ok(Tensor {
            shape,
            data: T::wrap(data),
        })
    }

    pub fn from_data(shape: Shape, data: TensorData) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::CountMismatch {
                from: vec![data.len()],
                from_count: data.len(),
                to: shape.dims().to_vec(),
                to_count: shape.numel(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn numel(&self) -> usize {
        self.shape.numel()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    /// Borrow the buffer as `&[T]`; `None` if the dtype differs.
    pub fn as_slice<T: Element>(&self) -> Option<&[T]> {
        T::view(&self.data)
    }

    pub fn as_mut_slice<T: Element>(&mut self) -> Option<&mut [T]> {
        T::view_mut(&mut self.data)
    }

    /// Typed borrow that reports a dtype error instead of `None`.
    pub fn typed<T: Element>(&self, op: &'static str) -> Result<&[T]> {
        self.as_slice::<T>().ok_or(Error::DTypeMismatch {
            op,
            left: self.dtype(),
            right: T::DTYPE,
        })
    }

    /// Copy out as floats of type `T`, converting from any dtype.
    pub fn to_real_vec<T: Real>(&self) -> Vec<T> {
        match &self.data {
            TensorData::U8(v) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
            TensorData::F32(v) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| T::from_f64(x)).collect(),
        }
    }

    /// Same data, new shape metadata. No element moves.
    pub fn reshape(&self, new_shape: Shape) -> Result<Tensor> {
        self.clone().into_reshaped(new_shape)
    }

    pub fn into_reshaped(self, new_shape: Shape) -> Result<Tensor> {
        if new_shape.numel() != self.numel() {
            return Err(Error::CountMismatch {
                from: self.dims().to_vec(),
                from_count: self.numel(),
                to: new_shape.dims().to_vec(),
                to_count: new_shape.numel(),
            });
        }
        Ok(Tensor {
            shape: new_shape,
            data: self.data,
        })
    }

    /// Concatenate along the last axis; all leading extents must agree.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (ad, bd) = (a.dims(), b.dims());
        if ad.len() != bd.len() || ad[..ad.len() - 1] != bd[..bd.len() - 1] {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                left: ad.to_vec(),
                right: bd.to_vec(),
            });
        }
        if a.dtype() != b.dtype() {
            return Err(Error::DTypeMismatch {
                op: "concat_channels",
                left: a.dtype(),
                right: b.dtype(),
            });
        }
        let ca = *ad.last().unwrap();
        let cb = *bd.last().unwrap();
        let mut dims = ad.to_vec();
        *dims.last_mut().unwrap() = ca + cb;
        let shape = Shape::new(dims)?;
        let data = match (&a.data, &b.data) {
            (TensorData::U8(x), TensorData::U8(y)) => TensorData::U8(interleave(x, ca, y, cb)),
            (TensorData::F32(x), TensorData::F32(y)) => TensorData::F32(interleave(x, ca, y, cb)),
            (TensorData::F64(x), TensorData::F64(y)) => TensorData::F64(interleave(x, ca, y, cb)),
            _ => unreachable!("dtypes checked above"),
        };
        Ok(Tensor { shape, data })
    }

    /// Elementwise tensor-tensor arithmetic on float tensors of equal shape.
    pub fn ew(&self, op: EwOp, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "ew",
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        }
        let data = match (&self.data, &other.data) {
            (TensorData::F32(x), TensorData::F32(y)) => TensorData::F32(zip_op(x, y, op)),
            (TensorData::F64(x), TensorData::F64(y)) => TensorData::F64(zip_op(x, y, op)),
            (TensorData::U8(_), _) | (_, TensorData::U8(_)) => {
                return Err(Error::UnsupportedDType {
                    op: "ew",
                    dtype: DType::U8,
                })
            }
            _ => {
                return Err(Error::DTypeMismatch {
                    op: "ew",
                    left: self.dtype(),
                    right: other.dtype(),
                })
            }
        };
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.ew(EwOp::Add, other)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.ew(EwOp::Sub, other)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.ew(EwOp::Mul, other)
    }

    /// Elementwise tensor-scalar arithmetic (`scale` is `Mul` by a scalar).
    pub fn ew_scalar(&self, op: EwOp, s: f64) -> Result<Tensor> {
        let data = match &self.data {
            TensorData::F32(x) => {
                let s = s as f32;
                TensorData::F32(x.iter().map(|&v| apply(op, v, s)).collect())
            }
            TensorData::F64(x) => TensorData::F64(x.iter().map(|&v| apply(op, v, s)).collect()),
            TensorData::U8(_) => {
                return Err(Error::UnsupportedDType {
                    op: "ew",
                    dtype: DType::U8,
                })
            }
        };
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Result<Tensor> {
        self.ew_scalar(EwOp::Mul, s)
    }

    /// Casts float data to `dtype` (u8 targets are not supported; see
    /// `data::quantize_output` for that).
    pub fn cast(&self, dtype: DType) -> Result<Tensor> {
        let data = match dtype {
            DType::F32 => TensorData::F32(self.to_real_vec()),
            DType::F64 => TensorData::F64(self.to_real_vec()),
            DType::U8 => {
                if self.dtype() == DType::U8 {
                    self.data.clone()
                } else {
                    return Err(Error::UnsupportedDType {
                        op: "cast",
                        dtype: self.dtype(),
                    });
                }
            }
        };
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }
}

fn interleave<T: Copy>(a: &[T], ca: usize, b: &[T], cb: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    for (pa, pb) in a.chunks_exact(ca).zip(b.chunks_exact(cb)) {
        out.extend_from_slice(pa);
        out.extend_from_slice(pb);
    }
    out
}

fn apply<T: num_traits::Float>(op: EwOp, x: T, y: T) -> T {
    match op {
        EwOp::Add => x + y,
        EwOp::Sub => x - y,
        EwOp::Mul => x * y,
    }
}

fn zip_op<T: num_traits::Float>(a: &[T], b: &[T], op: EwOp) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| apply(op, x, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: &[usize]) -> Shape {
        Shape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn full_zero_and_singleton() {
        let z = Tensor::full(shape(&[2, 2]), DType::F32, 0.0).unwrap();
        assert_eq!(z.as_slice::<f32>().unwrap(), &[0.0; 4]);
        let s = Tensor::full(shape(&[1]), DType::F32, 7.5).unwrap();
        assert_eq!(s.as_slice::<f32>().unwrap(), &[7.5]);
    }

    #[test]
    fn full_input_sized_buffer() {
        let t = Tensor::full(shape(&[495, 436, 115]), DType::F32, 0.0).unwrap();
        assert_eq!(t.numel(), 495 * 436 * 115);
        assert_eq!(t.dtype(), DType::F32);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(Shape::new(vec![]).is_err());
        assert!(Shape::new(vec![3, 0]).is_err());
        assert!(Shape::new(vec![usize::MAX, 2]).is_err());
    }

    #[test]
    fn u8_fill_must_be_representable() {
        assert!(Tensor::full(shape(&[2]), DType::U8, 256.0).is_err());
        assert!(Tensor::full(shape(&[2]), DType::U8, 1.5).is_err());
        assert!(Tensor::full(shape(&[2]), DType::U8, 255.0).is_ok());
    }

    #[test]
    fn reshape_is_row_major_relabel() {
        let t = Tensor::from_vec(shape(&[4]), vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let r = t.reshape(shape(&[2, 2])).unwrap();
        assert_eq!(r.dims(), &[2, 2]);
        assert_eq!(r.as_slice::<f32>().unwrap(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(Tensor::zeros(shape(&[2, 3]), DType::F32).reshape(shape(&[7])).is_err());
    }

    #[test]
    fn reshape_output_sized_relabel_keeps_flat_order() {
        let t = Tensor::zeros(shape(&[495, 436, 48]), DType::U8);
        let r = t.reshape(shape(&[6, 495, 436, 8])).unwrap();
        assert_eq!(r.dims(), &[6, 495, 436, 8]);
    }

    #[test]
    fn concat_channels_per_pixel() {
        let a = Tensor::full(shape(&[2, 2, 1]), DType::F32, 1.0).unwrap();
        let b = Tensor::full(shape(&[2, 2, 1]), DType::F32, 2.0).unwrap();
        let c = Tensor::concat_channels(&a, &b).unwrap();
        assert_eq!(c.dims(), &[2, 2, 2]);
        assert_eq!(c.as_slice::<f32>().unwrap(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let bad = Tensor::full(shape(&[3, 2, 1]), DType::F32, 2.0).unwrap();
        assert!(Tensor::concat_channels(&a, &bad).is_err());
        let other = Tensor::zeros(shape(&[2, 2, 1]), DType::F64);
        assert!(Tensor::concat_channels(&a, &other).is_err());
    }

    #[test]
    fn concat_input_channels() {
        let d = Tensor::zeros(shape(&[495, 436, 108]), DType::U8);
        let s = Tensor::zeros(shape(&[495, 436, 7]), DType::U8);
        assert_eq!(Tensor::concat_channels(&d, &s).unwrap().dims(), &[495, 436, 115]);
    }

    #[test]
    fn elementwise_ops() {
        let a = Tensor::from_vec(shape(&[2]), vec![1.0f32, 2.0]).unwrap();
        let b = Tensor::from_vec(shape(&[2]), vec![3.0f32, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().as_slice::<f32>().unwrap(), &[4.0, 6.0]);
        assert_eq!(b.sub(&a).unwrap().as_slice::<f32>().unwrap(), &[2.0, 2.0]);
        assert_eq!(a.mul(&b).unwrap().as_slice::<f32>().unwrap(), &[3.0, 8.0]);
        let c = Tensor::from_vec(shape(&[2]), vec![2.0f32, 4.0]).unwrap();
        assert_eq!(c.scale(0.5).unwrap().as_slice::<f32>().unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn elementwise_rejects_u8_and_mismatch() {
        let u = Tensor::zeros(shape(&[2]), DType::U8);
        assert!(matches!(u.mul(&u), Err(Error::UnsupportedDType { .. })));
        assert!(u.scale(2.0).is_err());
        let a = Tensor::zeros(shape(&[2]), DType::F32);
        let b = Tensor::zeros(shape(&[3]), DType::F32);
        assert!(matches!(a.add(&b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn row_major_offsets_by_enumeration() {
        let (h, w, c) = (3, 4, 5);
        let data: Vec<f64> = (0..h * w * c).map(|x| x as f64).collect();
        let t = Tensor::from_vec(shape(&[h, w, c]), data).unwrap();
        let flat = t.as_slice::<f64>().unwrap();
        let mut expected = 0.0;
        for i in 0..h {
            for j in 0..w {
                for k in 0..c {
                    assert_eq!(flat[(i * w + j) * c + k], expected);
                    expected += 1.0;
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dims() -> impl Strategy<Value = Vec<usize>> {
            proptest::collection::vec(1usize..5, 1..4)
        }

        proptest! {
            #[test]
            fn reshape_roundtrip(d in dims()) {
                let s = Shape::new(d.clone()).unwrap();
                let n = s.numel();
                let t = Tensor::from_vec(s.clone(), (0..n).map(|x| x as f32).collect()).unwrap();
                let flat = t.reshape(Shape::new(vec![n]).unwrap()).unwrap();
                let back = flat.reshape(s).unwrap();
                prop_assert_eq!(back, t);
            }

            #[test]
            fn concat_prefix_is_left_operand(h in 1usize..4, w in 1usize..4, ca in 1usize..4, cb in 1usize..4) {
                let a = Tensor::from_vec(Shape::hwc(h, w, ca).unwrap(),
                    (0..h * w * ca).map(|x| x as f32).collect()).unwrap();
                let b = Tensor::full(Shape::hwc(h, w, cb).unwrap(), DType::F32, -1.0).unwrap();
                let c = Tensor::concat_channels(&a, &b).unwrap();
                let cs = c.as_slice::<f32>().unwrap();
                let as_ = a.as_slice::<f32>().unwrap();
                for p in 0..h * w {
                    prop_assert_eq!(&cs[p * (ca + cb)..p * (ca + cb) + ca], &as_[p * ca..(p + 1) * ca]);
                }
            }

            #[test]
            fn adding_zero_is_identity(d in dims(), seed in 0u64..1000) {
                let s = Shape::new(d).unwrap();
                let n = s.numel();
                let a = Tensor::from_vec(s.clone(),
                    (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 7.0).collect()).unwrap();
                let z = Tensor::full(s, DType::F64, 0.0).unwrap();
                prop_assert_eq!(a.add(&z).unwrap(), a);
            }
        }
    }
}
