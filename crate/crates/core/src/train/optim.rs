use crate::autodiff::{Gradients, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Tensor, TensorData};

/// Mean over all elements of `(pred - target)²`, accumulated in f64.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f32> {
    if pred.dims() != target.dims() {
        return Err(Error::ShapeMismatch {
            op: "mse",
            left: pred.dims().to_vec(),
            right: target.dims().to_vec(),
        });
    }
    fn sum_sq<A: Real, B: Real>(a: &[A], b: &[B]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (Real::to_f64(*x) - Real::to_f64(*y)).powi(2))
            .sum()
    }
    let total = match (pred.data(), target.data()) {
        (TensorData::F32(a), TensorData::F32(b)) => sum_sq(a, b),
        (TensorData::F64(a), TensorData::F64(b)) => sum_sq(a, b),
        (TensorData::F32(a), TensorData::F64(b)) => sum_sq(a, b),
        (TensorData::F64(a), TensorData::F32(b)) => sum_sq(a, b),
        _ => {
            let dtype = if pred.dtype().is_float() {
                target.dtype()
            } else {
                pred.dtype()
            };
            return Err(Error::UnsupportedDType { op: "mse", dtype });
        }
    };
    Ok((total / pred.numel() as f64) as f32)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>, lr: f64) -> Self {
        let zeros: Vec<Vec<T>> = params.values().iter().map(|v| vec![T::zero(); v.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok =
            self.lr > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "adam hyperparameters out of range: lr={} beta1={} beta2={} eps={}",
                self.lr, self.beta1, self.beta2, self.eps
            )))
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Real>(params: &mut ParamStore<T>, grads: &Gradients<T>, state: &mut AdamState<T>) {
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let values = params.values_mut();
    for (slot, p) in values.iter_mut().enumerate() {
        let g = &grads.values()[slot];
        let (m, v) = (&mut state.m[slot], &mut state.v[slot]);
        for i in 0..p.len() {
            let gi = g[i].to_f64();
            let mi = b1 * m[i].to_f64() + (1.0 - b1) * gi;
            let vi = b2 * v[i].to_f64() + (1.0 - b2) * gi * gi;
            m[i] = T::from_f64(mi);
            v[i] = T::from_f64(vi);
            let step = state.lr * (mi / c1) / ((vi / c2).sqrt() + state.eps);
            p[i] = T::from_f64(p[i].to_f64() - step);
        }
    }
}

/// Lowers the learning rate when the best loss stops improving.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    /// Improvement must beat `best · (1 - rel_threshold)`.
    pub rel_threshold: f64,
    pub lr: f64,
    best: f64,
    bad: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, patience: usize, factor: f64, min_lr: f64, rel_threshold: f64) -> Result<Self> {
        if patience == 0 || !(factor > 0.0 && factor < 1.0) || min_lr < 0.0 || lr <= 0.0 {
            return Err(Error::Config(format!(
                "plateau schedule needs patience >= 1, 0 < factor < 1, lr > 0 (got {patience}, {factor}, {lr})"
            )));
        }
        Ok(PlateauScheduler {
            patience,
            factor,
            min_lr,
            rel_threshold,
            lr,
            best: f64::INFINITY,
            bad: 0,
        })
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Feeds one evaluation and returns the learning rate to use next.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best * (1.0 - self.rel_threshold) || self.best.is_infinite() {
            self.best = loss;
            self.bad = 0;
        } else {
            self.bad += 1;
            if self.bad >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.bad = 0;
            }
        }
        self.lr
    }
}

/// Replays `history` through a fresh scheduler.
pub fn plateau_lr(history: &[f64], sched: &PlateauScheduler) -> f64 {
    let mut s = PlateauScheduler {
        best: f64::INFINITY,
        bad: 0,
        ..sched.clone()
    };
    history.iter().fold(s.lr, |_, &l| s.observe(l))
}
