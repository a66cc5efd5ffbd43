use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, LOSS_TAIL};
use super::optim::{adam_step, AdamState, PlateauScheduler};
use crate::autodiff::{Gradients, ParamStore};
use crate::data::TrainingPair;
use crate::error::{Error, Result};
use crate::model::UNet;

pub const DEFAULT_LR: f64 = 3e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Evaluations without improvement before the learning rate drops.
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    pub rel_threshold: f64,
    pub max_steps: u64,
    /// Steps between evaluations; each evaluation also emits a checkpoint.
    pub eval_interval: u64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: DEFAULT_LR,
            patience: 4,
            factor: 0.5,
            min_lr: 1e-6,
            rel_threshold: 1e-3,
            max_steps: 2000,
            eval_interval: 500,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_interval == 0 || self.batch_size == 0 {
            return Err(Error::Config("eval_interval and batch_size must be positive".into()));
        }
        if self.min_lr > self.lr {
            return Err(Error::Config(format!("min_lr {} exceeds lr {}", self.min_lr, self.lr)));
        }
        PlateauScheduler::new(self.lr, self.patience, self.factor, self.min_lr, self.rel_threshold).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    /// Batch loss before the update.
    pub loss: f64,
    /// Learning rate applied at this step.
    pub lr: f64,
}

#[derive(Debug)]
pub enum TrainEvent {
    Step(StepRecord),
    Checkpoint(Checkpoint),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamStore<f32>,
    pub history: Vec<StepRecord>,
    pub lr: f64,
}

fn check_pairs(unet: &UNet, data: &[TrainingPair]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let want_in = unet.graph.node(unet.input).shape.dims();
    let want_out = unet.graph.node(unet.target).shape.dims();
    for p in data {
        if p.input.dims() != want_in || p.target.dims() != want_out {
            return Err(Error::ShapeMismatch {
                op: "training pair",
                left: [p.input.dims(), p.target.dims()].concat(),
                right: [want_in, want_out].concat(),
            });
        }
    }
    Ok(())
}

/// Loss and gradient of one sample.
pub fn sample_gradients(unet: &UNet, params: &ParamStore<f32>, pair: &TrainingPair) -> Result<(f64, Gradients<f32>)> {
    let acts = unet
        .graph
        .forward(params, &[(unet.input, &pair.input), (unet.target, &pair.target)])?;
    let loss = acts.scalar(unet.loss).expect("scalar loss") as f64;
    let grads = unet.graph.backward(params, &acts, unet.loss)?;
    Ok((loss, grads))
}

/// Mean loss of `params` over `data`.
pub fn evaluate_loss(unet: &UNet, params: &ParamStore<f32>, data: &[TrainingPair]) -> Result<f64> {
    check_pairs(unet, data)?;
    let mut total = 0.0;
    for p in data {
        let acts = unet.graph.forward_to(
            params,
            &[(unet.input, &p.input), (unet.target, &p.target)],
            &[unet.loss],
        )?;
        total += acts.scalar(unet.loss).expect("scalar loss") as f64;
    }
    Ok(total / data.len() as f64)
}

/// Adam with a plateau schedule over shuffled mini-batches. Deterministic for
/// a given seed. `init` overrides the seeded initialization.
pub fn train(
    unet: &UNet,
    data: &[TrainingPair],
    cfg: &TrainConfig,
    init: Option<ParamStore<f32>>,
    mut sink: impl FnMut(TrainEvent) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_pairs(unet, data)?;
    let mut params = match init {
        Some(p) => p,
        None => ParamStore::init(&unet.graph, cfg.seed),
    };
    let mut adam = AdamState::new(&params, cfg.lr);
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.patience, cfg.factor, cfg.min_lr, cfg.rel_threshold)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED));
    let mut order: Vec<usize> = Vec::new();
    let mut history: Vec<StepRecord> = Vec::with_capacity(cfg.max_steps as usize);
    let batch = cfg.batch_size.min(data.len());

    let snapshot = |params: &ParamStore<f32>, step: u64, lr: f64, history: &[StepRecord]| {
        let tail: Vec<f64> = history[history.len().saturating_sub(LOSS_TAIL)..]
            .iter()
            .map(|r| r.loss)
            .collect();
        Checkpoint::from_params(&unet.config, step, lr, &tail, params)
    };

    for step in 1..=cfg.max_steps {
        let mut grads = Gradients::zeros_like(&params);
        let mut loss = 0.0;
        for _ in 0..batch {
            if order.is_empty() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
                order.reverse();
            }
            let idx = order.pop().expect("refilled");
            let (l, g) = sample_gradients(unet, &params, &data[idx])?;
            loss += l;
            grads.accumulate(&g);
        }
        loss /= batch as f64;
        grads.scale(1.0 / batch as f32);
        if !loss.is_finite() {
            return Err(Error::Graph(format!("loss became non-finite at step {step}")));
        }

        let rec = StepRecord {
            step,
            loss,
            lr: adam.lr,
        };
        adam_step(&mut params, &grads, &mut adam);
        history.push(rec);
        sink(TrainEvent::Step(rec))?;

        if step % cfg.eval_interval == 0 {
            let window = &history[history.len() - cfg.eval_interval as usize..];
            let mean = window.iter().map(|r| r.loss).sum::<f64>() / window.len() as f64;
            adam.lr = sched.observe(mean);
            sink(TrainEvent::Checkpoint(snapshot(&params, step, adam.lr, &history)))?;
        }
    }
    if !cfg.max_steps.is_multiple_of(cfg.eval_interval) || cfg.max_steps == 0 {
        sink(TrainEvent::Checkpoint(snapshot(
            &params,
            cfg.max_steps,
            adam.lr,
            &history,
        )))?;
    }
    Ok(TrainOutcome {
        params,
        history,
        lr: adam.lr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use crate::model::{build_model, ModelConfig, ModelType};
    use crate::tensor::{DType, Shape, Tensor};

    fn tiny(t: ModelType) -> (UNet, Vec<TrainingPair>) {
        let ds = synth_dataset(2, 2, 9, 8).unwrap();
        let unet = build_model(&ModelConfig::tiny(t, (9, 8, 115))).unwrap();
        (unet, ds.training_pairs(true).unwrap())
    }

    fn run(unet: &UNet, data: &[TrainingPair], cfg: &TrainConfig) -> (TrainOutcome, Vec<Checkpoint>) {
        let mut cks = Vec::new();
        let out = train(unet, data, cfg, None, |e| {
            if let TrainEvent::Checkpoint(c) = e {
                cks.push(c);
            }
            Ok(())
        })
        .unwrap();
        (out, cks)
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let (unet, data) = tiny(ModelType::DenseAvgPool);
        let cfg = TrainConfig {
            max_steps: 0,
            seed: 5,
            ..TrainConfig::default()
        };
        let (out, cks) = run(&unet, &data, &cfg);
        let init = ParamStore::<f32>::init(&unet.graph, 5);
        assert_eq!(out.params, init);
        assert_eq!(cks.len(), 1);
        assert_eq!(cks[0].step, 0);
        assert_eq!(cks[0].param_store(&unet.graph).unwrap(), init);
    }

    #[test]
    fn checkpoint_cadence() {
        let (unet, data) = tiny(ModelType::DenseAvgPool);
        let cfg = TrainConfig {
            max_steps: 7,
            eval_interval: 3,
            ..TrainConfig::default()
        };
        let (out, cks) = run(&unet, &data, &cfg);
        assert_eq!(cks.iter().map(|c| c.step).collect::<Vec<_>>(), vec![3, 6, 7]);
        assert_eq!(out.history.len(), 7);
        assert_eq!(cks[2].loss_tail.len(), 7);
        assert_eq!(cks[2].param_store(&unet.graph).unwrap(), out.params);
    }

    #[test]
    fn deterministic_across_runs() {
        for t in ModelType::ALL {
            let (unet, data) = tiny(t);
            let cfg = TrainConfig {
                max_steps: 4,
                batch_size: 2,
                eval_interval: 2,
                ..TrainConfig::default()
            };
            let (a, _) = run(&unet, &data, &cfg);
            let (b, _) = run(&unet, &data, &cfg);
            assert_eq!(a.params, b.params);
            assert_eq!(a.history, b.history);
        }
    }

    #[test]
    fn all_zero_parameters_give_mean_square_target() {
        let (unet, data) = tiny(ModelType::ParallelMaxConvPool);
        let zeros = ParamStore::<f32>::zeros(&unet.graph);
        let loss = evaluate_loss(&unet, &zeros, &data[..1]).unwrap();
        let t = data[0].target.as_slice::<f32>().unwrap();
        let want = t.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / t.len() as f64;
        assert!((loss - want).abs() < 1e-7 * want.max(1e-12), "{loss} vs {want}");
    }

    #[test]
    fn loss_decreases_on_tiny_set() {
        let (unet, data) = tiny(ModelType::DenseAvgPool);
        let cfg = TrainConfig {
            max_steps: 60,
            batch_size: 2,
            eval_interval: 20,
            lr: 1e-3,
            ..TrainConfig::default()
        };
        let (out, _) = run(&unet, &data, &cfg);
        let first = out.history[0].loss;
        let last = evaluate_loss(&unet, &out.params, &data).unwrap();
        assert!(last < first * 0.5, "{first} -> {last}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let (unet, data) = tiny(ModelType::DenseAvgPool);
        assert!(train(&unet, &[], &TrainConfig::default(), None, |_| Ok(())).is_err());
        let bad = TrainingPair {
            input: Tensor::zeros(Shape::hwc(9, 8, 108).unwrap(), DType::F32),
            target: data[0].target.clone(),
        };
        assert!(train(&unet, &[bad], &TrainConfig::default(), None, |_| Ok(())).is_err());
        let cfg = TrainConfig {
            eval_interval: 0,
            ..TrainConfig::default()
        };
        assert!(train(&unet, &data, &cfg, None, |_| Ok(())).is_err());
    }

    #[test]
    fn sink_errors_abort() {
        let (unet, data) = tiny(ModelType::DenseAvgPool);
        let cfg = TrainConfig {
            max_steps: 3,
            eval_interval: 1,
            ..TrainConfig::default()
        };
        let r = train(&unet, &data, &cfg, None, |e| match e {
            TrainEvent::Checkpoint(_) => Err(Error::Io(std::io::Error::other("disk full"))),
            _ => Ok(()),
        });
        assert!(matches!(r, Err(Error::Io(_))));
    }
}
