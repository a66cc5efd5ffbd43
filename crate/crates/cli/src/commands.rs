use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use trafficnet::autodiff::suite::{check_layer, Fault, LayerOp, GRADCHECK_TOLERANCE};
use trafficnet::data::{
    indexed_files, input_channels, quantize_output, read_inputs, read_targets, synth_dataset, write_tensor, Dataset,
    TARGET_SUFFIX,
};
use trafficnet::ensemble::{ensemble_run, format_score, squared_error, EnsembleModel};
use trafficnet::model::ModelType;
use trafficnet::train::{load_checkpoint, save_checkpoint, train as run_training, TrainEvent};
use trafficnet::{build_model, DType, Tensor};

use crate::config::{self, RunConfig};
use crate::{EnsembleArgs, EvaluateArgs, FaultArg, GradcheckArgs, PredictArgs, SynthArgs, TrainArgs};

pub const LOSS_LOG: &str = "loss.tsv";
pub const REPORT_FILE: &str = "report.tsv";
pub const PRED_SUFFIX: &str = "_pred.t4ct";
pub const PRED_U8_SUFFIX: &str = "_pred_u8.t4ct";

pub fn checkpoint_name(step: u64) -> String {
    format!("checkpoint_{step:06}.t4ck")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn synth(a: SynthArgs) -> Result<bool> {
    let ds = synth_dataset(a.seed, a.n, a.height, a.width)?;
    create_dir(&a.out_dir)?;
    ds.write(&a.out_dir, &a.split)
        .with_context(|| format!("writing dataset to {}", a.out_dir.display()))?;
    println!(
        "wrote {} samples of {}x{} to {}",
        a.n,
        a.height,
        a.width,
        a.out_dir.display()
    );
    Ok(true)
}

/// Defaults, then the preset, then the config file, then flags.
fn resolve_config(a: &TrainArgs) -> Result<RunConfig> {
    let entries = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            config::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => Vec::new(),
    };
    let mut cfg = RunConfig::default();
    if let Some(preset) = a.preset.or(config::preset(&entries)?) {
        cfg.model = preset.model(cfg.model.model_type);
    }
    config::apply(&entries, &mut cfg).with_context(|| {
        a.config
            .as_ref()
            .map_or_else(String::new, |p| format!("in {}", p.display()))
    })?;
    if let Some(t) = a.model_type {
        cfg.model.model_type = ModelType::try_from(t)?;
    }
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
    }
    if a.no_static {
        cfg.use_static = false;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(n) = a.max_steps {
        cfg.train.max_steps = n;
    }
    if let Some(n) = a.batch_size {
        cfg.train.batch_size = n;
    }
    if let Some(n) = a.eval_interval {
        cfg.train.eval_interval = n;
    }
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> Result<bool> {
    let mut cfg = resolve_config(&a)?;
    let ds = Dataset::read(&a.data_dir, &a.split)
        .with_context(|| format!("reading {} split from {}", a.split, a.data_dir.display()))?;
    let (h, w) = ds.spatial();
    cfg.model.input_shape = (h, w, input_channels(cfg.use_static));
    cfg.model.validate()?;
    cfg.train.validate()?;
    let unet = build_model(&cfg.model)?;
    let pairs = ds.training_pairs(cfg.use_static)?;

    create_dir(&a.out_dir)?;
    let mut log = String::from("step\tloss\tlr\n");
    let mut last = None;
    run_training(&unet, &pairs, &cfg.train, None, |ev| {
        match ev {
            TrainEvent::Step(r) => {
                writeln!(log, "{}\t{:e}\t{:e}", r.step, r.loss, r.lr).expect("string write");
                last = Some(r);
            }
            TrainEvent::Checkpoint(c) => {
                let path = a.out_dir.join(checkpoint_name(c.step));
                save_checkpoint(&c, &path)?;
                eprintln!("saved {}", path.display());
            }
        }
        Ok(())
    })?;
    fs::write(a.out_dir.join(LOSS_LOG), log)?;
    if let Some(r) = last {
        println!("step {}\tloss {:e}\tlr {:e}", r.step, r.loss, r.lr);
    }
    Ok(true)
}

fn write_predictions(dir: &Path, preds: &[Tensor]) -> Result<()> {
    create_dir(dir)?;
    for (i, p) in preds.iter().enumerate() {
        write_tensor(p, dir.join(format!("{i}{PRED_SUFFIX}")))?;
        write_tensor(&quantize_output(p)?, dir.join(format!("{i}{PRED_U8_SUFFIX}")))?;
    }
    Ok(())
}

fn label(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn predict(a: PredictArgs) -> Result<bool> {
    let ckpt = load_checkpoint(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let model = EnsembleModel::from_checkpoint(label(&a.checkpoint), &ckpt)?;
    let (static_map, inputs) = read_inputs(&a.data_dir, &a.split)
        .with_context(|| format!("reading {} split from {}", a.split, a.data_dir.display()))?;
    if static_map.spatial() != model.spatial() {
        bail!(
            "checkpoint expects {:?} frames but the data is {:?}",
            model.spatial(),
            static_map.spatial()
        );
    }
    let preds = inputs
        .iter()
        .map(|d| model.predict(d, &static_map))
        .collect::<trafficnet::Result<Vec<_>>>()?;
    write_predictions(&a.out_dir, &preds)?;
    println!("wrote {} predictions to {}", preds.len(), a.out_dir.display());
    Ok(true)
}

pub fn ensemble(a: EnsembleArgs) -> Result<bool> {
    let models = a
        .checkpoints
        .iter()
        .map(|p| {
            let ckpt = load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?;
            Ok(EnsembleModel::from_checkpoint(label(p), &ckpt)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let (static_map, inputs) = read_inputs(&a.data_dir, &a.split)
        .with_context(|| format!("reading {} split from {}", a.split, a.data_dir.display()))?;
    let truth = a
        .truth_dir
        .as_ref()
        .map(|d| read_targets(d).with_context(|| format!("reading ground truth from {}", d.display())))
        .transpose()?;
    let out = ensemble_run(&models, &static_map, &inputs, truth.as_deref(), a.method.into())?;
    write_predictions(&a.out_dir, &out.merged)?;
    if let Some(report) = out.report {
        let text = report.to_string();
        fs::write(a.out_dir.join(REPORT_FILE), &text)?;
        print!("{text}");
    } else {
        println!(
            "wrote {} merged predictions to {}",
            out.merged.len(),
            a.out_dir.display()
        );
    }
    Ok(true)
}

fn missing(have: &[usize], other: &[usize]) -> Vec<usize> {
    other.iter().filter(|i| !have.contains(i)).copied().collect()
}

/// f32 on the [0, 1] scale; u8 files are divided by 255.
fn prediction_values(path: &PathBuf) -> Result<Tensor> {
    let t = trafficnet::data::read_tensor(path)?;
    Ok(match t.dtype() {
        DType::U8 => t.cast(DType::F32)?.scale(1.0 / 255.0)?,
        _ => t.cast(DType::F32)?,
    })
}

pub fn evaluate(a: EvaluateArgs) -> Result<bool> {
    let preds = indexed_files(&a.pred_dir, PRED_SUFFIX).with_context(|| format!("listing {}", a.pred_dir.display()))?;
    let truths =
        indexed_files(&a.truth_dir, TARGET_SUFFIX).with_context(|| format!("listing {}", a.truth_dir.display()))?;
    let pi: Vec<usize> = preds.keys().copied().collect();
    let ti: Vec<usize> = truths.keys().copied().collect();
    if pi != ti {
        bail!(
            "prediction and truth indices differ: no prediction for {:?}, no truth for {:?}",
            missing(&pi, &ti),
            missing(&ti, &pi)
        );
    }
    if pi.is_empty() {
        bail!("no `*{PRED_SUFFIX}` files in {}", a.pred_dir.display());
    }
    let targets = read_targets(&a.truth_dir)?;
    let (mut sse, mut n) = (0.0, 0usize);
    for (path, truth) in preds.values().zip(&targets) {
        let p = prediction_values(path)?;
        let (s, c) = squared_error(&p, &truth.normalized()).with_context(|| format!("scoring {}", path.display()))?;
        sse += s;
        n += c;
    }
    println!("{}", format_score(sse / n as f64));
    Ok(true)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<bool> {
    let ops: Vec<LayerOp> = if a.op == "all" {
        LayerOp::ALL.to_vec()
    } else {
        vec![a.op.parse()?]
    };
    let fault = a.inject_fault.map(|f| match f {
        FaultArg::ConvBackward => Fault::ConvBackward,
    });
    let mut ok = true;
    println!("op\tmax_rel_error\tstatus");
    for op in ops {
        let r = check_layer(op, a.seed, fault)?;
        let pass = r.checked > 0 && r.max_rel_error < GRADCHECK_TOLERANCE;
        ok &= pass;
        println!("{op}\t{:.3e}\t{}", r.max_rel_error, if pass { "PASS" } else { "FAIL" });
    }
    Ok(ok)
}
