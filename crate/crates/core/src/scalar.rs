//! Element types that can live in a [`Tensor`](crate::Tensor), and the
//! floating-point subset the numeric kernels are generic over.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use crate::tensor::{DType, TensorData};

pub trait Element: Copy + Send + Sync + Debug + PartialEq + 'static {
    const DTYPE: DType;

    fn wrap(data: Vec<Self>) -> TensorData;
    fn view(data: &TensorData) -> Option<&[Self]>;
    fn view_mut(data: &mut TensorData) -> Option<&mut [Self]>;
}

impl Element for u8 {
    const DTYPE: DType = DType::U8;

    fn wrap(data: Vec<Self>) -> TensorData {
        TensorData::U8(data)
    }
    fn view(data: &TensorData) -> Option<&[Self]> {
        match data {
            TensorData::U8(v) => Some(v),
            _ => None,
        }
    }
    fn view_mut(data: &mut TensorData) -> Option<&mut [Self]> {
        match data {
            TensorData::U8(v) => Some(v),
            _ => None,
        }
    }
}

/// Floating-point element used by layers, autodiff and training.
///
/// Training runs in `f32`; gradient checking runs the same code in `f64`.
pub trait Real: Element + num_traits::Float + Default + Sum + AddAssign + SubAssign + MulAssign {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = alpha * a·b + beta * c` over strided row/column views.
    ///
    /// # Safety
    /// Strides and extents must describe in-bounds views of the given slices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;

    fn wrap(data: Vec<Self>) -> TensorData {
        TensorData::F32(data)
    }
    fn view(data: &TensorData) -> Option<&[Self]> {
        match data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }
    fn view_mut(data: &mut TensorData) -> Option<&mut [Self]> {
        match data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::F64;

    fn wrap(data: Vec<Self>) -> TensorData {
        TensorData::F64(data)
    }
    fn view(data: &TensorData) -> Option<&[Self]> {
        match data {
            TensorData::F64(v) => Some(v),
            _ => None,
        }
    }
    fn view_mut(data: &mut TensorData) -> Option<&mut [Self]> {
        match data {
            TensorData::F64(v) => Some(v),
            _ => None,
        }
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}
