use crate::error::{Error, Result};
use crate::model::{INPUT_FEATURES, INPUT_FRAMES, OUTPUT_FEATURES, OUTPUT_FRAMES, STATIC_FEATURES};
use crate::tensor::{DType, Shape, Tensor, TensorData};

fn expect_u8(t: &Tensor, what: &'static str) -> Result<()> {
    if t.dtype() != DType::U8 {
        return Err(Error::UnsupportedDType {
            op: what,
            dtype: t.dtype(),
        });
    }
    Ok(())
}

fn expect_dims(t: &Tensor, what: &'static str, ok: bool, want: Vec<usize>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            op: what,
            left: t.dims().to_vec(),
            right: want,
        })
    }
}

/// Twelve five-minute bins of `{volume, speed} × {NE, NW, SE, SW}` plus an
/// incident level: `(12, H, W, 9)` u8.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicFrame(Tensor);

/// Time-invariant region features: `(H, W, 7)` u8.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticMap(Tensor);

/// Six future bins (+5, +10, +15, +30, +45, +60 min) of
/// `{volume, speed} × 4 headings`: `(6, H, W, 8)` u8.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFrame(Tensor);

impl DynamicFrame {
    pub fn new(t: Tensor) -> Result<Self> {
        expect_u8(&t, "dynamic frame")?;
        let d = t.dims();
        let ok = d.len() == 4 && d[0] == INPUT_FRAMES && d[3] == INPUT_FEATURES;
        expect_dims(&t, "dynamic frame", ok, vec![INPUT_FRAMES, 0, 0, INPUT_FEATURES])?;
        Ok(DynamicFrame(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.0.dims()[1], self.0.dims()[2])
    }
}

impl StaticMap {
    pub fn new(t: Tensor) -> Result<Self> {
        expect_u8(&t, "static map")?;
        let d = t.dims();
        let ok = d.len() == 3 && d[2] == STATIC_FEATURES;
        expect_dims(&t, "static map", ok, vec![0, 0, STATIC_FEATURES])?;
        Ok(StaticMap(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.0.dims()[0], self.0.dims()[1])
    }
}

impl TargetFrame {
    pub fn new(t: Tensor) -> Result<Self> {
        expect_u8(&t, "target frame")?;
        let d = t.dims();
        let ok = d.len() == 4 && d[0] == OUTPUT_FRAMES && d[3] == OUTPUT_FEATURES;
        expect_dims(&t, "target frame", ok, vec![OUTPUT_FRAMES, 0, 0, OUTPUT_FEATURES])?;
        Ok(TargetFrame(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.0.dims()[1], self.0.dims()[2])
    }

    /// `(6, H, W, 8)` f32 on the [0, 1] scale.
    pub fn normalized(&self) -> Tensor {
        scale_u8(&self.0)
    }

    /// `(H, W, 48)` f32 on the [0, 1] scale, the layout the network predicts.
    pub fn flattened(&self) -> Tensor {
        scale_u8(&fold_time(&self.0).expect("validated rank"))
    }
}

fn scale_u8(t: &Tensor) -> Tensor {
    let v: Vec<f32> = t
        .as_slice::<u8>()
        .expect("u8")
        .iter()
        .map(|&b| b as f32 / 255.0)
        .collect();
    Tensor::from_vec(t.shape().clone(), v).expect("same shape")
}

fn fold<T: Copy>(src: &[T], t: usize, hw: usize, f: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for p in 0..hw {
        for ti in 0..t {
            let base = (ti * hw + p) * f;
            out.extend_from_slice(&src[base..base + f]);
        }
    }
    out
}

fn unfold<T: Copy + Default>(src: &[T], t: usize, hw: usize, f: usize) -> Vec<T> {
    let mut out = vec![T::default(); src.len()];
    for p in 0..hw {
        for ti in 0..t {
            let s = (p * t + ti) * f;
            let d = (ti * hw + p) * f;
            out[d..d + f].copy_from_slice(&src[s..s + f]);
        }
    }
    out
}

/// `(T, H, W, F)` → `(H, W, T·F)` with channel `t·F + f`.
pub fn fold_time(x: &Tensor) -> Result<Tensor> {
    let d = x.dims();
    if d.len() != 4 {
        return Err(Error::ShapeMismatch {
            op: "fold_time",
            left: d.to_vec(),
            right: vec![0, 0, 0, 0],
        });
    }
    let (t, h, w, f) = (d[0], d[1], d[2], d[3]);
    let data = match x.data() {
        TensorData::U8(v) => TensorData::U8(fold(v, t, h * w, f)),
        TensorData::F32(v) => TensorData::F32(fold(v, t, h * w, f)),
        TensorData::F64(v) => TensorData::F64(fold(v, t, h * w, f)),
    };
    Tensor::from_data(Shape::hwc(h, w, t * f)?, data)
}

/// Inverse of [`fold_time`]: `(H, W, T·F)` → `(T, H, W, F)`.
pub fn unfold_time(x: &Tensor, frames: usize) -> Result<Tensor> {
    let (h, w, c) = x.shape().as_hwc().ok_or_else(|| Error::ShapeMismatch {
        op: "unfold_time",
        left: x.dims().to_vec(),
        right: vec![0, 0, 0],
    })?;
    if frames == 0 || c % frames != 0 {
        return Err(Error::ShapeMismatch {
            op: "unfold_time",
            left: x.dims().to_vec(),
            right: vec![h, w, frames],
        });
    }
    let f = c / frames;
    let data = match x.data() {
        TensorData::U8(v) => TensorData::U8(unfold(v, frames, h * w, f)),
        TensorData::F32(v) => TensorData::F32(unfold(v, frames, h * w, f)),
        TensorData::F64(v) => TensorData::F64(unfold(v, frames, h * w, f)),
    };
    Tensor::from_data(Shape::new(vec![frames, h, w, f])?, data)
}

/// `(12, H, W, 9)` u8 → `(H, W, 108)` f32 in [0, 1], channel `t·9 + f`.
pub fn flatten_dynamic(d: &DynamicFrame) -> Result<Tensor> {
    Ok(scale_u8(&fold_time(d.tensor())?))
}

/// Inverse of [`flatten_dynamic`], rescaling by 255 and rounding.
pub fn unflatten_dynamic(x: &Tensor) -> Result<DynamicFrame> {
    if x.shape().as_hwc().map(|s| s.2) != Some(INPUT_FRAMES * INPUT_FEATURES) {
        return Err(Error::ShapeMismatch {
            op: "unflatten_dynamic",
            left: x.dims().to_vec(),
            right: vec![0, 0, INPUT_FRAMES * INPUT_FEATURES],
        });
    }
    DynamicFrame::new(unfold_time(&quantize_output(x)?, INPUT_FRAMES)?)
}

pub fn input_channels(use_static: bool) -> usize {
    INPUT_FRAMES * INPUT_FEATURES + if use_static { STATIC_FEATURES } else { 0 }
}

/// Whether a model with `channels` input channels consumes the static map.
pub fn uses_static(channels: usize) -> Result<bool> {
    match channels {
        c if c == input_channels(true) => Ok(true),
        c if c == input_channels(false) => Ok(false),
        c => Err(Error::Config(format!(
            "input channel count {c} is neither {} nor {}",
            input_channels(true),
            input_channels(false)
        ))),
    }
}

/// Network input: flattened dynamic channels, then the static channels when
/// `use_static`.
pub fn assemble_input(d: &DynamicFrame, s: &StaticMap, use_static: bool) -> Result<Tensor> {
    let dynamic = flatten_dynamic(d)?;
    if !use_static {
        return Ok(dynamic);
    }
    if d.spatial() != s.spatial() {
        let (a, b) = (d.spatial(), s.spatial());
        return Err(Error::ShapeMismatch {
            op: "assemble_input",
            left: vec![a.0, a.1],
            right: vec![b.0, b.1],
        });
    }
    Tensor::concat_channels(&dynamic, &scale_u8(s.tensor()))
}

/// `(H, W, 48)` → `(6, H, W, 8)` with `out(t, i, j, f) = raw(i, j, t·8 + f)`.
pub fn reshape_output(raw: &Tensor) -> Result<Tensor> {
    let c = raw.shape().as_hwc().map(|s| s.2);
    if c != Some(OUTPUT_FRAMES * OUTPUT_FEATURES) {
        return Err(Error::ShapeMismatch {
            op: "reshape_output",
            left: raw.dims().to_vec(),
            right: vec![0, 0, OUTPUT_FRAMES * OUTPUT_FEATURES],
        });
    }
    unfold_time(raw, OUTPUT_FRAMES)
}

/// `clamp(x·255, 0, 255)` rounded half away from zero.
pub fn quantize_value(x: f64) -> u8 {
    if x.is_nan() {
        return 0;
    }
    (x * 255.0).clamp(0.0, 255.0).round() as u8
}

pub fn quantize_output(pred: &Tensor) -> Result<Tensor> {
    let v: Vec<u8> = match pred.data() {
        TensorData::F32(v) => v.iter().map(|&x| quantize_value(x as f64)).collect(),
        TensorData::F64(v) => v.iter().map(|&x| quantize_value(x)).collect(),
        TensorData::U8(_) => {
            return Err(Error::UnsupportedDType {
                op: "quantize_output",
                dtype: DType::U8,
            })
        }
    };
    Tensor::from_vec(pred.shape().clone(), v)
}
