//! Acceptance suite. Prints one `PASS` or `FAIL` line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;
use trafficnet::autodiff::suite::{check_layer, LayerOp, GRADCHECK_TOLERANCE};
use trafficnet::autodiff::ParamStore;
use trafficnet::data::{decode_tensor, encode_tensor, synth_dataset};
use trafficnet::ensemble::{combine, evaluate, format_score, CombineMethod, PredictionSet};
use trafficnet::layers::{avg_pool2, conv_pool2, max_pool2, ConvSpec};
use trafficnet::model::{build_model, shape_schedule, ModelConfig, ModelType};
use trafficnet::train::{evaluate_loss, load_checkpoint, save_checkpoint, train, Checkpoint, TrainConfig};
use trafficnet::{DType, Shape, Tensor, TensorData};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn shape_trace() -> Outcome {
    let t0 = Instant::now();
    let unet = build_model(&ModelConfig::default()).expect("default model");
    let elapsed = t0.elapsed();
    let rows: [(&str, (usize, usize, usize)); 24] = [
        ("DenseBlock-1", (495, 436, 64)),
        ("AveragePooling", (248, 218, 64)),
        ("DenseBlock-2", (248, 218, 96)),
        ("AveragePooling", (124, 109, 96)),
        ("DenseBlock-3", (124, 109, 128)),
        ("AveragePooling", (62, 55, 128)),
        ("DenseBlock-4", (62, 55, 128)),
        ("AveragePooling", (31, 28, 128)),
        ("DenseBlock-5", (31, 28, 128)),
        ("AveragePooling", (16, 14, 128)),
        ("DenseBlock-6", (16, 14, 128)),
        ("AveragePooling", (8, 7, 128)),
        ("DenseBlock-7", (8, 7, 128)),
        ("AveragePooling", (4, 4, 128)),
        ("DenseBlock-8", (4, 4, 128)),
        ("Convolution Layer", (4, 4, 128)),
        ("DeconvolutionBlock-1", (8, 7, 128)),
        ("DeconvolutionBlock-2", (16, 14, 128)),
        ("DeconvolutionBlock-3", (31, 28, 128)),
        ("DeconvolutionBlock-4", (62, 55, 128)),
        ("DeconvolutionBlock-5", (124, 109, 128)),
        ("DeconvolutionBlock-6", (248, 218, 128)),
        ("DeconvolutionBlock-7", (495, 436, 128)),
        ("Convolution Layer", (495, 436, 48)),
    ];
    let got = unet.shape_trace();
    let want: Vec<(String, (usize, usize, usize))> = rows.iter().map(|(l, s)| (l.to_string(), *s)).collect();
    let first_bad = got.iter().zip(&want).position(|(a, b)| a != b);
    let ok = got == want && elapsed < Duration::from_secs(1);
    let detail = match first_bad {
        Some(i) => format!("row {} is {:?}, want {:?}", i + 1, got[i], want[i]),
        None => format!(
            "{} rows match, built in {:.0} ms",
            got.len(),
            elapsed.as_secs_f64() * 1e3
        ),
    };
    (ok, detail)
}

fn gradient_suite() -> Outcome {
    let t0 = Instant::now();
    let mut worst = (0.0f64, LayerOp::Conv2d);
    let mut checked = 0;
    for seed in 0..3 {
        for op in LayerOp::ALL {
            let r = check_layer(op, seed, None).expect("gradcheck");
            checked += r.checked;
            if r.checked == 0 {
                return (false, format!("{op} checked nothing"));
            }
            if r.max_rel_error > worst.0 {
                worst = (r.max_rel_error, op);
            }
        }
    }
    let elapsed = t0.elapsed();
    let ok = worst.0 < GRADCHECK_TOLERANCE && elapsed < Duration::from_secs(120);
    (
        ok,
        format!(
            "{} ops x 3 seeds, {checked} partials, worst {:.3e} ({}), {:.1} s",
            LayerOp::ALL.len(),
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn ceil_sweep() -> Outcome {
    let spec = ConvSpec::new(1, 1, 3, 2);
    let w = Tensor::zeros(Shape::new(spec.weight_dims().to_vec()).unwrap(), DType::F64);
    let b = Tensor::zeros(Shape::new(vec![1]).unwrap(), DType::F64);
    // Number of stride-2 window origins inside the extent.
    let oracle = |n: usize| (0..n).step_by(2).count();
    let mut cases = 0;
    for h in 1..=64 {
        for wd in 1..=64 {
            let x = Tensor::zeros(Shape::hwc(h, wd, 1).unwrap(), DType::F64);
            let want = [oracle(h), oracle(wd), 1];
            let got = [
                avg_pool2::<f64>(&x).unwrap().dims().to_vec(),
                max_pool2::<f64>(&x).unwrap().dims().to_vec(),
                conv_pool2::<f64>(&x, &spec, &w, &b).unwrap().dims().to_vec(),
            ];
            for g in &got {
                if g[..] != want {
                    return (false, format!("{h}x{wd} pooled to {g:?}, want {want:?}"));
                }
            }
            if shape_schedule(h, wd, 2).unwrap().sizes[1] != (want[0], want[1]) {
                return (false, format!("schedule disagrees at {h}x{wd}"));
            }
            cases += 1;
        }
    }
    (true, format!("{cases} extents x 3 pooling ops plus schedule"))
}

fn overfit() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let ds = synth_dataset(1, 4, 31, 28).unwrap();
    let data = ds.training_pairs(true).unwrap();
    let cfg = TrainConfig {
        lr: 3e-4,
        max_steps: 2000,
        batch_size: 4,
        eval_interval: 100,
        patience: 3,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (t, threshold) in [
        (ModelType::DenseAvgPool, 1e-5),
        (ModelType::ParallelMaxConvPool, 1e-4),
        (ModelType::MaxPoolFirst, 1e-4),
    ] {
        let unet = build_model(&ModelConfig::tiny(t, (31, 28, 115))).unwrap();
        let t0 = Instant::now();
        let (loss, elapsed) = pool.install(|| {
            let out = train(&unet, &data, &cfg, None, |_| Ok(())).expect("training");
            (evaluate_loss(&unet, &out.params, &data).unwrap(), t0.elapsed())
        });
        let pass = loss < threshold && elapsed < Duration::from_secs(300);
        ok &= pass;
        parts.push(format!(
            "type {t}: {loss:.3e} (< {threshold:.0e}) in {:.0} s",
            elapsed.as_secs_f64()
        ));
    }
    (ok, parts.join("; "))
}

fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
    let n: usize = dims.iter().product();
    Tensor::from_vec(
        Shape::new(dims.to_vec()).unwrap(),
        (0..n).map(|_| rng.random_range(0.0f32..1.0)).collect::<Vec<f32>>(),
    )
    .unwrap()
}

fn jensen_and_median() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_gap = f64::NEG_INFINITY;
    for set in 0..100 {
        let dims = [6, rng.random_range(1..6), rng.random_range(1..6), 8];
        let truth = random_tensor(&mut rng, &dims);
        let preds: Vec<Tensor> = (0..5).map(|_| random_tensor(&mut rng, &dims)).collect();
        let ps = PredictionSet::unlabelled(preds.clone()).unwrap();
        let mean_of_scores = preds.iter().map(|p| evaluate(p, &truth).unwrap()).sum::<f64>() / 5.0;
        let merged = evaluate(&combine(&ps, CombineMethod::Mean), &truth).unwrap();
        let gap = (merged - mean_of_scores) / mean_of_scores;
        worst_gap = worst_gap.max(gap);
        if gap > 1e-12 {
            return (false, format!("set {set}: merged {merged:e} > mean {mean_of_scores:e}"));
        }
        let median = combine(&ps, CombineMethod::Median);
        let m = median.as_slice::<f32>().unwrap();
        for (i, &v) in m.iter().enumerate() {
            let column = preds.iter().map(|p| p.as_slice::<f32>().unwrap()[i]);
            let (lo, hi) = column.fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            if !(lo <= v && v <= hi) {
                return (false, format!("set {set}: median {v} outside [{lo}, {hi}]"));
            }
        }
    }
    (true, format!("100 sets of 5; worst relative gap {worst_gap:.3e}"))
}

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..200 {
        let rank = rng.random_range(1..=4);
        let dims: Vec<usize> = (0..rank).map(|_| rng.random_range(1..=6)).collect();
        let n: usize = dims.iter().product();
        let data = match i % 3 {
            0 => TensorData::U8((0..n).map(|_| rng.random()).collect()),
            1 => TensorData::F32((0..n).map(|_| f32::from_bits(rng.random())).collect()),
            _ => TensorData::F64((0..n).map(|_| f64::from_bits(rng.random())).collect()),
        };
        let t = Tensor::from_data(Shape::new(dims).unwrap(), data).unwrap();
        let bytes = encode_tensor(&t).unwrap();
        let back = decode_tensor(&bytes).unwrap();
        let same_bits = match (t.data(), back.data()) {
            (TensorData::U8(a), TensorData::U8(b)) => a == b,
            (TensorData::F32(a), TensorData::F32(b)) => a.iter().map(|x| x.to_bits()).eq(b.iter().map(|x| x.to_bits())),
            (TensorData::F64(a), TensorData::F64(b)) => a.iter().map(|x| x.to_bits()).eq(b.iter().map(|x| x.to_bits())),
            _ => false,
        };
        if !same_bits || back.dims() != t.dims() || encode_tensor(&back).unwrap() != bytes {
            return (false, format!("tensor {i} ({:?}, {:?}) changed", t.dtype(), t.dims()));
        }
    }

    let dir = TempDir::new().unwrap();
    let shapes = [(9, 8, 115), (9, 8, 108), (12, 7, 115), (7, 7, 108), (16, 13, 115)];
    for (i, shape) in shapes.into_iter().enumerate() {
        let cfg = ModelConfig::tiny(ModelType::ALL[i % 3], shape);
        let unet = build_model(&cfg).unwrap();
        let params = ParamStore::<f32>::init(&unet.graph, i as u64);
        let tail: Vec<f64> = (0..i + 1).map(|k| 1.0 / (k as f64 + 3.0)).collect();
        let mut ckpt = Checkpoint::from_params(&cfg, 100 * i as u64, 3e-4 / (i + 1) as f64, &tail, &params);
        ckpt.extra.insert("note".into(), format!("fixture {i}"));
        let path = dir.path().join(format!("{i}.t4ck"));
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        if back != ckpt || back.encode().unwrap() != fs::read(&path).unwrap() {
            return (false, format!("checkpoint {i} changed"));
        }
        if back.param_store(&unet.graph).unwrap().values() != params.values() {
            return (false, format!("checkpoint {i} parameters changed"));
        }
    }
    (
        true,
        "200 tensors (u8/f32/f64, ranks 1-4) and 5 checkpoints bit-exact".into(),
    )
}

fn cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_trafficnet"))
        .args(["--threads", "1"])
        .args(args)
        .output()
        .expect("spawn trafficnet");
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn pipeline(root: &Path) {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let data = s(&root.join("data"));
    for (split, seed, n) in [("train", "1", "3"), ("test", "2", "2")] {
        cli(&[
            "synth",
            "--seed",
            seed,
            "--n",
            n,
            "--height",
            "13",
            "--width",
            "11",
            "--out-dir",
            &data,
            "--split",
            split,
        ]);
    }
    let mut ckpts = Vec::new();
    for t in ["1", "3"] {
        let out = s(&root.join(format!("model{t}")));
        cli(&[
            "train",
            "--data-dir",
            &data,
            "--out-dir",
            &out,
            "--preset",
            "tiny",
            "--model-type",
            t,
            "--seed",
            "4",
            "--max-steps",
            "12",
            "--eval-interval",
            "6",
            "--batch-size",
            "2",
        ]);
        ckpts.push(format!("{out}/checkpoint_000012.t4ck"));
    }
    cli(&[
        "predict",
        "--checkpoint",
        &ckpts[0],
        "--data-dir",
        &data,
        "--out-dir",
        &s(&root.join("pred")),
    ]);
    cli(&[
        "ensemble",
        "--checkpoints",
        &ckpts.join(","),
        "--method",
        "mean",
        "--data-dir",
        &data,
        "--out-dir",
        &s(&root.join("ens")),
        "--truth-dir",
        &format!("{data}/test"),
    ]);
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let names = |t: &[(PathBuf, Vec<u8>)]| t.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>();
    if names(&ta) != names(&tb) {
        return (false, "runs produced different file sets".into());
    }
    if let Some((p, _)) = ta.iter().zip(&tb).find(|(x, y)| x.1 != y.1).map(|(x, _)| x) {
        return (false, format!("{} differs between runs", p.display()));
    }
    let bytes: usize = ta.iter().map(|(_, d)| d.len()).sum();
    (
        true,
        format!("{} files, {bytes} bytes identical across two runs", ta.len()),
    )
}

fn peak_rss_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn full_size_forward() -> Outcome {
    let cfg = ModelConfig::default();
    let unet = build_model(&cfg).unwrap();
    let params = ParamStore::<f32>::init(&unet.graph, 0);
    let (h, w, c) = cfg.input_shape;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_tensor(&mut rng, &[h, w, c]);
    let t0 = Instant::now();
    let y = unet.graph.infer(&params, &[(unet.input, &x)], unet.output);
    let elapsed = t0.elapsed();
    let y = match y {
        Ok(y) => y,
        Err(e) => return (false, format!("forward failed: {e}")),
    };
    let finite = y.as_slice::<f32>().unwrap().iter().all(|v| v.is_finite());
    let rss_gib = peak_rss_kib().map_or(f64::NAN, |k| k as f64 / (1024.0 * 1024.0));
    let ok =
        y.dims() == [h, w, 48] && finite && elapsed < Duration::from_secs(900) && (rss_gib.is_nan() || rss_gib < 16.0);
    (
        ok,
        format!(
            "output {:?} in {:.1} s on {} threads, peak RSS {rss_gib:.2} GiB",
            y.dims(),
            elapsed.as_secs_f64(),
            rayon::current_num_threads()
        ),
    )
}

fn score_format() -> Outcome {
    let fixed = [
        (1.1628615e-3, "1.1628615e-3"),
        (1.169e-3, "1.1690000e-3"),
        (1.181e-3, "1.1810000e-3"),
        (0.0, "0.0000000e0"),
    ];
    for (v, want) in fixed {
        if format_score(v) != want {
            return (false, format!("{v} formatted as {}, want {want}", format_score(v)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let v: f64 = rng.random_range(1e-9..1.0);
        let s = format_score(v);
        let (mantissa, exp) = s.split_once('e').unwrap();
        let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
        if digits.len() != 8 || mantissa.as_bytes()[1] != b'.' || exp.parse::<i32>().is_err() {
            return (false, format!("{v} formatted as {s}"));
        }
        if ((s.parse::<f64>().unwrap() - v) / v).abs() > 5e-8 {
            return (false, format!("{s} does not round to {v}"));
        }
    }
    (true, "8 significant digits, e.g. 1.1628615e-3".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("full-frame shape trace", shape_trace),
        ("gradient suite", gradient_suite),
        ("ceil-schedule sweep", ceil_sweep),
        ("overfit", overfit),
        ("Jensen property and median containment", jensen_and_median),
        ("T4CT/T4CK round trips", round_trips),
        ("CLI determinism", determinism),
        ("full-size smoke", full_size_forward),
        ("score format", score_format),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        failed += usize::from(!ok);
        println!("{} [{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
