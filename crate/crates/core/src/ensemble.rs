//! Elementwise mean/median ensembling and MSE scoring.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::autodiff::ParamStore;
use crate::data::{assemble_input, reshape_output, uses_static, DynamicFrame, StaticMap, TargetFrame};
use crate::error::{Error, Result};
use crate::model::{build_model, ModelType, UNet, OUTPUT_FEATURES, OUTPUT_FRAMES};
use crate::tensor::{Tensor, TensorData};
use crate::train::Checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CombineMethod {
    Mean,
    Median,
}

impl fmt::Display for CombineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CombineMethod::Mean => "mean",
            CombineMethod::Median => "median",
        })
    }
}

impl FromStr for CombineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(CombineMethod::Mean),
            "median" => Ok(CombineMethod::Median),
            _ => Err(Error::Ensemble(format!("unknown combine method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PredictionSource {
    pub label: String,
    pub model_type: Option<ModelType>,
    pub step: Option<u64>,
}

impl PredictionSource {
    pub fn labelled(label: impl Into<String>) -> Self {
        PredictionSource {
            label: label.into(),
            ..Default::default()
        }
    }
}

/// `k >= 1` f32 predictions of one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    preds: Vec<Tensor>,
    sources: Vec<PredictionSource>,
}

impl PredictionSet {
    pub fn new(preds: Vec<Tensor>, sources: Vec<PredictionSource>) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::Ensemble("a prediction set needs at least one prediction".into()));
        }
        if sources.len() != preds.len() {
            return Err(Error::Ensemble(format!(
                "{} predictions but {} source labels",
                preds.len(),
                sources.len()
            )));
        }
        for p in &preds {
            p.typed::<f32>("prediction set")?;
            if p.dims() != preds[0].dims() {
                return Err(Error::ShapeMismatch {
                    op: "prediction set",
                    left: preds[0].dims().to_vec(),
                    right: p.dims().to_vec(),
                });
            }
        }
        Ok(PredictionSet { preds, sources })
    }

    /// Labels each prediction by its position.
    pub fn unlabelled(preds: Vec<Tensor>) -> Result<Self> {
        let sources = (0..preds.len())
            .map(|i| PredictionSource::labelled(format!("model{i}")))
            .collect();
        PredictionSet::new(preds, sources)
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    pub fn predictions(&self) -> &[Tensor] {
        &self.preds
    }

    pub fn sources(&self) -> &[PredictionSource] {
        &self.sources
    }
}

fn median_of(values: &mut [f32]) -> f32 {
    values.sort_unstable_by(f32::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        ((values[k / 2 - 1] as f64 + values[k / 2] as f64) / 2.0) as f32
    }
}

/// Elementwise combination; even-k medians take the midpoint of the two
/// central values.
pub fn combine(ps: &PredictionSet, method: CombineMethod) -> Tensor {
    let slices: Vec<&[f32]> = ps
        .preds
        .iter()
        .map(|p| p.as_slice::<f32>().expect("validated"))
        .collect();
    let n = slices[0].len();
    let k = slices.len();
    let out: Vec<f32> = match method {
        // summed in sorted order so the result ignores prediction order
        CombineMethod::Mean => (0..n)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(k),
                |buf: &mut Vec<f32>, i| {
                    buf.clear();
                    buf.extend(slices.iter().map(|s| s[i]));
                    buf.sort_unstable_by(f32::total_cmp);
                    (buf.iter().map(|&v| v as f64).sum::<f64>() / k as f64) as f32
                },
            )
            .collect(),
        CombineMethod::Median => (0..n)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(k),
                |buf, i| {
                    buf.clear();
                    buf.extend(slices.iter().map(|s| s[i]));
                    median_of(buf)
                },
            )
            .collect(),
    };
    Tensor::from_vec(ps.preds[0].shape().clone(), out).expect("same shape")
}

/// Sum of squared differences in f64, and the element count.
pub fn squared_error(pred: &Tensor, truth: &Tensor) -> Result<(f64, usize)> {
    if pred.dims() != truth.dims() {
        return Err(Error::ShapeMismatch {
            op: "evaluate",
            left: pred.dims().to_vec(),
            right: truth.dims().to_vec(),
        });
    }
    fn sum<A: Copy + Into<f64>, B: Copy + Into<f64>>(a: &[A], b: &[B]) -> f64 {
        a.iter().zip(b).map(|(&x, &y)| (x.into() - y.into()).powi(2)).sum()
    }
    let s = match (pred.data(), truth.data()) {
        (TensorData::F32(a), TensorData::F32(b)) => sum(a, b),
        (TensorData::F32(a), TensorData::F64(b)) => sum(a, b),
        (TensorData::F64(a), TensorData::F32(b)) => sum(a, b),
        (TensorData::F64(a), TensorData::F64(b)) => sum(a, b),
        _ => {
            let dtype = if pred.dtype().is_float() {
                truth.dtype()
            } else {
                pred.dtype()
            };
            return Err(Error::UnsupportedDType { op: "evaluate", dtype });
        }
    };
    Ok((s, pred.numel()))
}

/// Mean squared error accumulated in f64.
pub fn evaluate(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    let (s, n) = squared_error(pred, truth)?;
    Ok(s / n as f64)
}

/// Scientific notation with eight significant digits, e.g. `1.1628615e-3`.
pub fn format_score(score: f64) -> String {
    format!("{score:.7e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub rows: Vec<(String, f64)>,
    pub merged: f64,
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, s) in &self.rows {
            writeln!(f, "{label}\t{}", format_score(*s))?;
        }
        writeln!(f, "MERGED\t{}", format_score(self.merged))
    }
}

/// A checkpoint bound to its graph, ready for inference.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub source: PredictionSource,
    pub unet: UNet,
    pub params: ParamStore<f32>,
    pub use_static: bool,
}

impl EnsembleModel {
    pub fn from_checkpoint(label: impl Into<String>, ckpt: &Checkpoint) -> Result<Self> {
        let unet = build_model(&ckpt.config)?;
        if ckpt.config.out_channels != OUTPUT_FRAMES * OUTPUT_FEATURES {
            return Err(Error::Ensemble(format!(
                "checkpoint predicts {} channels, expected {}",
                ckpt.config.out_channels,
                OUTPUT_FRAMES * OUTPUT_FEATURES
            )));
        }
        Ok(EnsembleModel {
            source: PredictionSource {
                label: label.into(),
                model_type: Some(ckpt.config.model_type),
                step: Some(ckpt.step),
            },
            params: ckpt.param_store(&unet.graph)?,
            use_static: uses_static(ckpt.config.input_shape.2)?,
            unet,
        })
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.unet.config.input_shape.0, self.unet.config.input_shape.1)
    }

    /// `(6, H, W, 8)` f32 prediction for one sample.
    pub fn predict(&self, dynamic: &DynamicFrame, static_map: &StaticMap) -> Result<Tensor> {
        if dynamic.spatial() != self.spatial() {
            let (a, b) = (dynamic.spatial(), self.spatial());
            return Err(Error::ShapeMismatch {
                op: "predict",
                left: vec![a.0, a.1],
                right: vec![b.0, b.1],
            });
        }
        let x = assemble_input(dynamic, static_map, self.use_static)?;
        let raw = self
            .unet
            .graph
            .infer(&self.params, &[(self.unet.input, &x)], self.unet.output)?;
        reshape_output(&raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    /// Combined `(6, H, W, 8)` prediction per sample.
    pub merged: Vec<Tensor>,
    /// Present when ground truth is supplied.
    pub report: Option<ScoreReport>,
}

/// Runs every model on every input frame, combines per frame and, when
/// `truth` is given, scores each model and the combination.
pub fn ensemble_run(
    models: &[EnsembleModel],
    static_map: &StaticMap,
    inputs: &[DynamicFrame],
    truth: Option<&[TargetFrame]>,
    method: CombineMethod,
) -> Result<EnsembleOutput> {
    let first = models
        .first()
        .ok_or_else(|| Error::Ensemble("no checkpoints supplied".into()))?;
    for m in models {
        if m.spatial() != first.spatial() {
            return Err(Error::Ensemble(format!(
                "checkpoint `{}` expects {:?} frames but `{}` expects {:?}",
                m.source.label,
                m.spatial(),
                first.source.label,
                first.spatial()
            )));
        }
    }
    if static_map.spatial() != first.spatial() {
        return Err(Error::Ensemble(format!(
            "data frames are {:?} but the checkpoints expect {:?}",
            static_map.spatial(),
            first.spatial()
        )));
    }
    if let Some(t) = truth {
        if t.len() != inputs.len() {
            return Err(Error::Ensemble(format!(
                "{} input frames but {} ground-truth frames",
                inputs.len(),
                t.len()
            )));
        }
    }

    let mut per_model = vec![0.0f64; models.len()];
    let mut merged_sse = 0.0f64;
    let mut count = 0usize;
    let mut merged = Vec::with_capacity(inputs.len());
    for (i, dynamic) in inputs.iter().enumerate() {
        let preds = models
            .par_iter()
            .map(|m| m.predict(dynamic, static_map))
            .collect::<Result<Vec<_>>>()?;
        let set = PredictionSet::new(preds, models.iter().map(|m| m.source.clone()).collect())?;
        let combined = combine(&set, method);
        if let Some(t) = truth {
            let truth = t[i].normalized();
            for (acc, p) in per_model.iter_mut().zip(set.predictions()) {
                *acc += squared_error(p, &truth)?.0;
            }
            let (s, n) = squared_error(&combined, &truth)?;
            merged_sse += s;
            count += n;
        }
        merged.push(combined);
    }
    let report = (truth.is_some() && count > 0).then(|| ScoreReport {
        rows: models
            .iter()
            .zip(&per_model)
            .map(|(m, &s)| (m.source.label.clone(), s / count as f64))
            .collect(),
        merged: merged_sse / count as f64,
    });
    Ok(EnsembleOutput { merged, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use proptest::prelude::*;

    fn vec1(v: &[f32]) -> Tensor {
        Tensor::from_vec(Shape::new(vec![v.len()]).unwrap(), v.to_vec()).unwrap()
    }

    fn set(vals: &[&[f32]]) -> PredictionSet {
        PredictionSet::unlabelled(vals.iter().map(|v| vec1(v)).collect()).unwrap()
    }

    #[test]
    fn hand_cases() {
        let s = set(&[&[1.0], &[2.0], &[9.0]]);
        assert_eq!(combine(&s, CombineMethod::Median).as_slice::<f32>().unwrap(), &[2.0]);
        assert_eq!(combine(&s, CombineMethod::Mean).as_slice::<f32>().unwrap(), &[4.0]);
        let s = set(&[&[1.0], &[3.0]]);
        assert_eq!(combine(&s, CombineMethod::Median).as_slice::<f32>().unwrap(), &[2.0]);
    }

    #[test]
    fn single_prediction_is_identity() {
        let s = set(&[&[0.1, 0.7, 1.0 / 3.0]]);
        for m in [CombineMethod::Mean, CombineMethod::Median] {
            assert_eq!(combine(&s, m), s.predictions()[0]);
        }
    }

    #[test]
    fn invalid_sets() {
        assert!(PredictionSet::unlabelled(vec![]).is_err());
        assert!(PredictionSet::unlabelled(vec![vec1(&[1.0]), vec1(&[1.0, 2.0])]).is_err());
        let f64t = Tensor::from_vec(Shape::new(vec![1]).unwrap(), vec![1.0f64]).unwrap();
        assert!(PredictionSet::unlabelled(vec![f64t]).is_err());
        assert!(PredictionSet::new(vec![vec1(&[1.0])], vec![]).is_err());
    }

    #[test]
    fn evaluate_cases() {
        let truth = vec1(&[0.25; 6]);
        assert_eq!(evaluate(&truth, &truth).unwrap(), 0.0);
        let shifted = vec1(&[0.25 + 0.034; 6]);
        let s = evaluate(&shifted, &truth).unwrap();
        assert!((s - 0.034f64.powi(2)).abs() < 1e-8, "{s}");
        assert_eq!(evaluate(&vec1(&[0.0; 4]), &vec1(&[1.0; 4])).unwrap(), 1.0);
        assert!(evaluate(&vec1(&[0.0; 4]), &vec1(&[1.0; 3])).is_err());
    }

    #[test]
    fn score_format() {
        assert_eq!(format_score(1.1628615e-3), "1.1628615e-3");
        assert_eq!(format_score(0.0), "0.0000000e0");
        assert_eq!(format_score(1.0), "1.0000000e0");
        let r = ScoreReport {
            rows: vec![("a".into(), 1e-3), ("b".into(), 2.5e-4)],
            merged: 5e-4,
        };
        assert_eq!(
            r.to_string(),
            "a\t1.0000000e-3\nb\t2.5000000e-4\nMERGED\t5.0000000e-4\n"
        );
    }

    #[test]
    fn method_names() {
        assert_eq!("mean".parse::<CombineMethod>().unwrap(), CombineMethod::Mean);
        assert_eq!("median".parse::<CombineMethod>().unwrap(), CombineMethod::Median);
        assert!("mode".parse::<CombineMethod>().is_err());
    }

    fn random_set() -> impl Strategy<Value = (Vec<f32>, Vec<Vec<f32>>)> {
        (1usize..6, 1usize..40).prop_flat_map(|(k, n)| {
            (
                prop::collection::vec(0.0f32..1.0, n),
                prop::collection::vec(prop::collection::vec(-0.5f32..1.5, n), k),
            )
        })
    }

    proptest! {
        #[test]
        fn mean_obeys_jensen((truth, preds) in random_set()) {
            let t = vec1(&truth);
            let s = PredictionSet::unlabelled(preds.iter().map(|p| vec1(p)).collect()).unwrap();
            let merged = evaluate(&combine(&s, CombineMethod::Mean), &t).unwrap();
            let avg = preds.iter().map(|p| evaluate(&vec1(p), &t).unwrap()).sum::<f64>() / preds.len() as f64;
            prop_assert!(merged <= avg + 1e-12 * avg.max(1e-300) + 1e-12);
        }

        #[test]
        fn median_is_contained((_t, preds) in random_set()) {
            let s = PredictionSet::unlabelled(preds.iter().map(|p| vec1(p)).collect()).unwrap();
            let m = combine(&s, CombineMethod::Median);
            for (i, &v) in m.as_slice::<f32>().unwrap().iter().enumerate() {
                let lo = preds.iter().map(|p| p[i]).fold(f32::INFINITY, f32::min);
                let hi = preds.iter().map(|p| p[i]).fold(f32::NEG_INFINITY, f32::max);
                prop_assert!(lo <= v && v <= hi);
            }
        }

        #[test]
        fn permutation_invariant((_t, preds) in random_set(), rot in 0usize..5) {
            let mut shuffled = preds.clone();
            let len = shuffled.len();
            shuffled.rotate_left(rot % len);
            shuffled.reverse();
            for m in [CombineMethod::Mean, CombineMethod::Median] {
                let a = combine(&PredictionSet::unlabelled(preds.iter().map(|p| vec1(p)).collect()).unwrap(), m);
                let b = combine(&PredictionSet::unlabelled(shuffled.iter().map(|p| vec1(p)).collect()).unwrap(), m);
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn identical_inputs_are_fixed_points(v in prop::collection::vec(-2.0f32..2.0, 1..30), k in 1usize..7) {
            let s = PredictionSet::unlabelled(vec![vec1(&v); k]).unwrap();
            for m in [CombineMethod::Mean, CombineMethod::Median] {
                let c = combine(&s, m);
                prop_assert_eq!(c.as_slice::<f32>().unwrap(), &v[..]);
            }
        }
    }
}
