//! UNet graph construction for the three encoder/decoder variants.
//!
//! | type | encoder block                                              | decoder block                                      |
//! |------|------------------------------------------------------------|----------------------------------------------------|
//! | 1    | dense block → 2×2 average pool                             | deconv → concat skip → 3×3 conv                    |
//! | 2    | dense layers ∥ 3×3 max filter → last conv → stride-2 conv  | deconv → concat skip → 3×3 conv                    |
//! | 3    | 2×2 max pool → dense block                                 | (deconv ∥ bilinear upsample) → concat skip → dense |
//!
//! All variants share the ceil-halving spatial schedule, so every skip
//! connection joins tensors of identical spatial extent.

use std::collections::BTreeMap;
use std::fmt;

use crate::autodiff::{Graph, GraphBuilder, Init, NodeId};
use crate::error::{Error, Result};
use crate::layers::{ceil_div, ConvSpec, DenseBlockSpec, PoolKind, DEFAULT_DENSE_LAYERS, DEFAULT_GROWTH};
use crate::tensor::Shape;

pub const INPUT_FRAMES: usize = 12;
pub const INPUT_FEATURES: usize = 9;
pub const STATIC_FEATURES: usize = 7;
pub const OUTPUT_FRAMES: usize = 6;
pub const OUTPUT_FEATURES: usize = 8;
pub const FRAME_HEIGHT: usize = 495;
pub const FRAME_WIDTH: usize = 436;

pub const DEFAULT_LEVELS: usize = 8;
pub const DEFAULT_CHANNELS: [usize; DEFAULT_LEVELS] = [64, 96, 128, 128, 128, 128, 128, 128];
pub const DEFAULT_DECODER_CHANNELS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelType {
    /// Dense blocks with average pooling.
    DenseAvgPool = 1,
    /// Dense layers with a parallel max filter, convolutional pooling.
    ParallelMaxConvPool = 2,
    /// Max pooling ahead of each dense block; decoder adds bilinear upsampling.
    MaxPoolFirst = 3,
}

impl ModelType {
    pub const ALL: [ModelType; 3] = [
        ModelType::DenseAvgPool,
        ModelType::ParallelMaxConvPool,
        ModelType::MaxPoolFirst,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for ModelType {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(ModelType::DenseAvgPool),
            2 => Ok(ModelType::ParallelMaxConvPool),
            3 => Ok(ModelType::MaxPoolFirst),
            _ => Err(Error::Config(format!("model type {v} is not one of 1, 2, 3"))),
        }
    }
}

impl fmt::Display for ModelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub model_type: ModelType,
    /// `(H, W, C)` of the assembled input tensor.
    pub input_shape: (usize, usize, usize),
    /// Number of dense blocks on the encoder path (poolings = levels - 1).
    pub levels: usize,
    pub channel_schedule: Vec<usize>,
    pub dense_layers: usize,
    pub growth: usize,
    pub decoder_channels: usize,
    pub out_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            model_type: ModelType::DenseAvgPool,
            input_shape: (
                FRAME_HEIGHT,
                FRAME_WIDTH,
                INPUT_FRAMES * INPUT_FEATURES + STATIC_FEATURES,
            ),
            levels: DEFAULT_LEVELS,
            channel_schedule: DEFAULT_CHANNELS.to_vec(),
            dense_layers: DEFAULT_DENSE_LAYERS,
            growth: DEFAULT_GROWTH,
            decoder_channels: DEFAULT_DECODER_CHANNELS,
            out_channels: OUTPUT_FRAMES * OUTPUT_FEATURES,
        }
    }
}

impl ModelConfig {
    /// Three-level desk-scale model used for overfitting and determinism
    /// checks.
    pub fn tiny(model_type: ModelType, input_shape: (usize, usize, usize)) -> Self {
        ModelConfig {
            model_type,
            input_shape,
            levels: 3,
            channel_schedule: vec![8, 12, 16],
            dense_layers: 2,
            growth: 4,
            decoder_channels: OUTPUT_FRAMES * OUTPUT_FEATURES,
            out_channels: OUTPUT_FRAMES * OUTPUT_FEATURES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Config(format!(
                "input shape {:?} has a zero extent",
                self.input_shape
            )));
        }
        if self.levels < 2 {
            return Err(Error::Config(format!("levels must be >= 2, got {}", self.levels)));
        }
        if self.channel_schedule.len() != self.levels {
            return Err(Error::Config(format!(
                "channel schedule has {} entries for {} levels",
                self.channel_schedule.len(),
                self.levels
            )));
        }
        if self.channel_schedule.contains(&0) || self.decoder_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.dense_layers > 0 && self.growth == 0 {
            return Err(Error::Config("growth must be positive when dense_layers > 0".into()));
        }
        Ok(())
    }

    /// Flat `key = value` form, shared by config files and checkpoints.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("model_type".into(), self.model_type.to_string());
        m.insert("input_height".into(), self.input_shape.0.to_string());
        m.insert("input_width".into(), self.input_shape.1.to_string());
        m.insert("input_channels".into(), self.input_shape.2.to_string());
        m.insert("levels".into(), self.levels.to_string());
        m.insert("channels".into(), join(&self.channel_schedule));
        m.insert("dense_layers".into(), self.dense_layers.to_string());
        m.insert("growth".into(), self.growth.to_string());
        m.insert("decoder_channels".into(), self.decoder_channels.to_string());
        m.insert("out_channels".into(), self.out_channels.to_string());
        m
    }

    /// Overrides fields from `key = value` pairs; unrecognised keys are left
    /// for the caller. Returns the keys that were consumed.
    pub fn apply_kv<'a>(&mut self, kv: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Vec<&'a str>> {
        let mut used = Vec::new();
        for (k, v) in kv {
            let hit = match k {
                "model_type" => {
                    self.model_type = ModelType::try_from(parse::<u8>(k, v)?)?;
                    true
                }
                "input_height" => {
                    self.input_shape.0 = parse(k, v)?;
                    true
                }
                "input_width" => {
                    self.input_shape.1 = parse(k, v)?;
                    true
                }
                "input_channels" => {
                    self.input_shape.2 = parse(k, v)?;
                    true
                }
                "levels" => {
                    self.levels = parse(k, v)?;
                    true
                }
                "channels" => {
                    self.channel_schedule = v
                        .split(',')
                        .map(|s| parse::<usize>(k, s.trim()))
                        .collect::<Result<_>>()?;
                    true
                }
                "dense_layers" => {
                    self.dense_layers = parse(k, v)?;
                    true
                }
                "growth" => {
                    self.growth = parse(k, v)?;
                    true
                }
                "decoder_channels" => {
                    self.decoder_channels = parse(k, v)?;
                    true
                }
                "out_channels" => {
                    self.out_channels = parse(k, v)?;
                    true
                }
                _ => false,
            };
            if hit {
                used.push(k);
            }
        }
        Ok(used)
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        cfg.apply_kv(kv.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub(crate) fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}

/// Per-level spatial extents of the encoder; the decoder walks it backwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeSchedule {
    pub sizes: Vec<(usize, usize)>,
}

impl ShapeSchedule {
    pub fn heights(&self) -> Vec<usize> {
        self.sizes.iter().map(|s| s.0).collect()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.sizes.iter().map(|s| s.1).collect()
    }

    /// Decoder targets, top of the UNet first.
    pub fn decoder_targets(&self) -> Vec<(usize, usize)> {
        self.sizes[..self.sizes.len() - 1].iter().rev().copied().collect()
    }
}

/// Level 0 is `(h, w)`; each further level halves with ceiling. Extents
/// saturate at 1.
pub fn shape_schedule(h: usize, w: usize, levels: usize) -> Result<ShapeSchedule> {
    if h == 0 || w == 0 {
        return Err(Error::Config(format!("input extent {h}x{w} has a zero side")));
    }
    if levels < 1 {
        return Err(Error::Config("shape schedule needs at least one level".into()));
    }
    let mut sizes = vec![(h, w)];
    for _ in 1..levels {
        let (ph, pw) = *sizes.last().unwrap();
        sizes.push((ceil_div(ph, 2), ceil_div(pw, 2)));
    }
    Ok(ShapeSchedule { sizes })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub label: String,
    pub node: NodeId,
    pub shape: Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkipConnection {
    pub level: usize,
    /// Encoder node exported across the UNet.
    pub source: NodeId,
    /// Decoder node consuming it.
    pub sink: NodeId,
}

/// Output of one encoder block: the tensor exported as a skip connection
/// (if any) and the tensor handed to the next level.
#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput {
    pub skip: Option<NodeId>,
    pub next: NodeId,
}

#[derive(Debug, Clone)]
pub struct UNet {
    pub config: ModelConfig,
    pub graph: Graph,
    pub input: NodeId,
    pub output: NodeId,
    pub target: NodeId,
    pub loss: NodeId,
    pub schedule: ShapeSchedule,
    pub trace: Vec<TraceEntry>,
    pub skips: Vec<SkipConnection>,
}

impl UNet {
    /// `(label, (h, w, c))` per traced block, in build order.
    pub fn shape_trace(&self) -> Vec<(String, (usize, usize, usize))> {
        self.trace
            .iter()
            .map(|t| (t.label.clone(), t.shape.as_hwc().expect("spatial")))
            .collect()
    }
}

struct Tracer<'a> {
    b: &'a mut GraphBuilder,
    trace: Vec<TraceEntry>,
}

impl Tracer<'_> {
    fn mark(&mut self, label: impl Into<String>, node: NodeId) -> NodeId {
        self.trace.push(TraceEntry {
            label: label.into(),
            node,
            shape: self.b.shape(node).clone(),
        });
        node
    }
}

fn channels(b: &GraphBuilder, x: NodeId) -> usize {
    b.shape(x).as_hwc().expect("spatial").2
}

fn dense_spec(cfg: &ModelConfig, in_channels: usize, out_channels: usize) -> DenseBlockSpec {
    DenseBlockSpec::new(in_channels, cfg.dense_layers, cfg.growth, out_channels)
}

/// Encoder block at `level`. The top level (`level == levels - 1`) returns
/// its features as `next` without pooling and without a skip, except for
/// type 3, whose blocks always pool first.
pub fn build_encoder_block(b: &mut GraphBuilder, cfg: &ModelConfig, level: usize, x: NodeId) -> Result<EncoderOutput> {
    let out = *cfg
        .channel_schedule
        .get(level)
        .ok_or_else(|| Error::Config(format!("no channel entry for level {level}")))?;
    let top = level + 1 == cfg.levels;
    let name = format!("enc{level}");
    let cin = channels(b, x);
    match cfg.model_type {
        ModelType::DenseAvgPool => {
            let features = b.dense_block(x, &dense_spec(cfg, cin, out), None, &format!("{name}.dense"))?;
            if top {
                return Ok(EncoderOutput {
                    skip: None,
                    next: features,
                });
            }
            let pooled = b.pool2(features, PoolKind::Avg)?;
            Ok(EncoderOutput {
                skip: Some(features),
                next: pooled,
            })
        }
        ModelType::ParallelMaxConvPool => {
            let side = b.max_filter3(x)?;
            let mut spec = dense_spec(cfg, cin, out);
            spec.side_channels = cin;
            let features = b.dense_block(x, &spec, Some(side), &format!("{name}.dense"))?;
            if top {
                return Ok(EncoderOutput {
                    skip: None,
                    next: features,
                });
            }
            let pooled = b.conv(features, ConvSpec::new(out, out, 3, 2), true, &format!("{name}.pool"))?;
            Ok(EncoderOutput {
                skip: Some(features),
                next: pooled,
            })
        }
        ModelType::MaxPoolFirst => {
            if top {
                return Err(Error::Config(format!(
                    "level {level} has no coarser level to pool into"
                )));
            }
            let (_, features) = max_first_block(b, cfg, level, x)?;
            Ok(EncoderOutput {
                skip: Some(x),
                next: features,
            })
        }
    }
}

/// Type 3 block at `level`: max pool into `level + 1`, then a dense block at
/// that resolution. Returns `(pooled, features)`.
fn max_first_block(b: &mut GraphBuilder, cfg: &ModelConfig, level: usize, x: NodeId) -> Result<(NodeId, NodeId)> {
    let pooled = b.pool2(x, PoolKind::Max)?;
    let spec = dense_spec(cfg, channels(b, pooled), cfg.channel_schedule[level + 1]);
    let features = b.dense_block(pooled, &spec, None, &format!("enc{level}.dense"))?;
    Ok((pooled, features))
}

/// Full-resolution dense block feeding the first type 3 pooling.
fn max_first_stem(b: &mut GraphBuilder, cfg: &ModelConfig, x: NodeId) -> Result<NodeId> {
    let spec = dense_spec(cfg, channels(b, x), cfg.channel_schedule[0]);
    b.dense_block(x, &spec, None, "stem.dense")
}

/// Decoder block upsampling `x` to `target` and merging `skip`.
pub fn build_decoder_block(
    b: &mut GraphBuilder,
    cfg: &ModelConfig,
    index: usize,
    x: NodeId,
    target: (usize, usize),
    skip: NodeId,
) -> Result<NodeId> {
    let name = format!("dec{index}");
    let (sh, sw, skip_c) = b.shape(skip).as_hwc().expect("spatial");
    if (sh, sw) != target {
        return Err(Error::ShapeMismatch {
            op: "decoder skip",
            left: vec![sh, sw],
            right: vec![target.0, target.1],
        });
    }
    let dc = cfg.decoder_channels;
    let up = b.deconv(x, dc, target, true, &format!("{name}.deconv"))?;
    match cfg.model_type {
        ModelType::DenseAvgPool | ModelType::ParallelMaxConvPool => {
            let merged = b.concat(&[up, skip])?;
            b.conv(
                merged,
                ConvSpec::new(dc + skip_c, dc, 3, 1),
                true,
                &format!("{name}.conv"),
            )
        }
        ModelType::MaxPoolFirst => {
            let interp = b.upsample(x, target)?;
            let merged = b.concat(&[up, interp, skip])?;
            let mut spec = dense_spec(cfg, channels(b, merged), dc);
            spec.relu_transition = false;
            b.dense_block(merged, &spec, None, &format!("{name}.dense"))
        }
    }
}

pub fn build_model(cfg: &ModelConfig) -> Result<UNet> {
    cfg.validate()?;
    let (h, w, c) = cfg.input_shape;
    let schedule = shape_schedule(h, w, cfg.levels)?;
    let mut b = GraphBuilder::new();
    let input = b.input(Shape::hwc(h, w, c)?);
    let mut t = Tracer {
        b: &mut b,
        trace: Vec::new(),
    };
    let mut skips: Vec<NodeId> = Vec::new();

    let pool_label = match cfg.model_type {
        ModelType::DenseAvgPool => "AveragePooling",
        ModelType::ParallelMaxConvPool => "ConvolutionPooling",
        ModelType::MaxPoolFirst => "MaxPooling",
    };

    let mut cur = input;
    match cfg.model_type {
        ModelType::DenseAvgPool | ModelType::ParallelMaxConvPool => {
            for level in 0..cfg.levels {
                let out = build_encoder_block(t.b, cfg, level, cur)?;
                match out.skip {
                    Some(skip) => {
                        t.mark(format!("DenseBlock-{}", level + 1), skip);
                        skips.push(skip);
                        cur = t.mark(pool_label, out.next);
                    }
                    None => cur = t.mark(format!("DenseBlock-{}", level + 1), out.next),
                }
            }
        }
        ModelType::MaxPoolFirst => {
            cur = max_first_stem(t.b, cfg, input)?;
            t.mark("DenseBlock-1", cur);
            for level in 0..cfg.levels - 1 {
                skips.push(cur);
                let (pooled, features) = max_first_block(t.b, cfg, level, cur)?;
                t.mark(pool_label, pooled);
                cur = t.mark(format!("DenseBlock-{}", level + 2), features);
            }
        }
    }

    let top_c = cfg.channel_schedule[cfg.levels - 1];
    cur = t.b.conv(cur, ConvSpec::new(top_c, top_c, 3, 1), true, "top.conv")?;
    t.mark("Convolution Layer", cur);

    let mut links = Vec::new();
    for (i, target) in schedule.decoder_targets().into_iter().enumerate() {
        let level = cfg.levels - 2 - i;
        let skip = skips[level];
        cur = build_decoder_block(t.b, cfg, i, cur, target, skip)?;
        t.mark(format!("DeconvolutionBlock-{}", i + 1), cur);
        links.push(SkipConnection {
            level,
            source: skip,
            sink: cur,
        });
    }

    // zero-initialized regression head: the untrained model predicts zeros
    let output = t.b.conv_with_init(
        cur,
        ConvSpec::new(cfg.decoder_channels, cfg.out_channels, 1, 1),
        false,
        "head",
        Init::Zeros,
    )?;
    t.mark("Convolution Layer", output);
    let trace = t.trace;

    let target = b.input(Shape::hwc(h, w, cfg.out_channels)?);
    let loss = b.mse(output, target)?;
    Ok(UNet {
        config: cfg.clone(),
        graph: b.finish(),
        input,
        output,
        target,
        loss,
        schedule,
        trace,
        skips: links,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_matches_full_frame() {
        let s = shape_schedule(495, 436, 8).unwrap();
        assert_eq!(s.heights(), vec![495, 248, 124, 62, 31, 16, 8, 4]);
        assert_eq!(s.widths(), vec![436, 218, 109, 55, 28, 14, 7, 4]);
        assert_eq!(shape_schedule(1, 1, 3).unwrap().sizes, vec![(1, 1); 3]);
        assert!(shape_schedule(4, 4, 0).is_err());
    }

    #[test]
    fn model_type_numbers() {
        for t in ModelType::ALL {
            assert_eq!(ModelType::try_from(t.number()).unwrap(), t);
        }
        assert!(ModelType::try_from(4).is_err());
        assert!(ModelType::try_from(0).is_err());
    }

    #[test]
    fn full_frame_trace_type1() {
        let unet = build_model(&ModelConfig::default()).unwrap();
        let hs = [495, 248, 124, 62, 31, 16, 8, 4];
        let ws = [436, 218, 109, 55, 28, 14, 7, 4];
        let cs = DEFAULT_CHANNELS;
        let mut want = Vec::new();
        for k in 0..8 {
            want.push((format!("DenseBlock-{}", k + 1), (hs[k], ws[k], cs[k])));
            if k < 7 {
                want.push(("AveragePooling".to_string(), (hs[k + 1], ws[k + 1], cs[k])));
            }
        }
        want.push(("Convolution Layer".into(), (4, 4, 128)));
        for i in 0..7 {
            want.push((format!("DeconvolutionBlock-{}", i + 1), (hs[6 - i], ws[6 - i], 128)));
        }
        want.push(("Convolution Layer".into(), (495, 436, 48)));
        assert_eq!(unet.shape_trace(), want);
        assert_eq!(unet.skips.len(), 7);
    }

    #[test]
    fn full_frame_types_2_and_3_build() {
        for t in [ModelType::ParallelMaxConvPool, ModelType::MaxPoolFirst] {
            let cfg = ModelConfig {
                model_type: t,
                ..ModelConfig::default()
            };
            let unet = build_model(&cfg).unwrap();
            assert_eq!(unet.graph.node(unet.output).shape.dims(), &[495, 436, 48]);
            assert_eq!(unet.skips.len(), 7);
        }
    }

    #[test]
    fn skips_join_equal_extents() {
        for t in ModelType::ALL {
            for (h, w) in [(7, 7), (8, 9), (13, 31), (64, 63), (33, 7)] {
                let cfg = ModelConfig::tiny(t, (h, w, 5));
                let unet = build_model(&cfg).unwrap();
                assert_eq!(unet.graph.node(unet.output).shape.dims(), &[h, w, 48]);
                assert_eq!(unet.skips.len(), cfg.levels - 1);
                for s in &unet.skips {
                    let a = unet.graph.node(s.source).shape.dims();
                    let b = unet.graph.node(s.sink).shape.dims();
                    assert_eq!(a[..2], b[..2], "type {t} {h}x{w} level {}", s.level);
                }
            }
        }
    }

    #[test]
    fn type3_trace_labels() {
        let unet = build_model(&ModelConfig::tiny(ModelType::MaxPoolFirst, (9, 9, 3))).unwrap();
        let labels: Vec<_> = unet.trace.iter().map(|t| t.label.as_str()).collect();
        assert_eq!(
            labels,
            [
                "DenseBlock-1",
                "MaxPooling",
                "DenseBlock-2",
                "MaxPooling",
                "DenseBlock-3",
                "Convolution Layer",
                "DeconvolutionBlock-1",
                "DeconvolutionBlock-2",
                "Convolution Layer"
            ]
        );
        assert_eq!(unet.trace[4].shape.dims(), &[3, 3, 16]);
    }

    #[test]
    fn encoder_block_examples() {
        let cfg = ModelConfig::default();
        let mut b = GraphBuilder::new();
        let x = b.input(Shape::hwc(495, 436, 115).unwrap());
        let out = build_encoder_block(&mut b, &cfg, 0, x).unwrap();
        assert_eq!(b.shape(out.skip.unwrap()).dims(), &[495, 436, 64]);
        assert_eq!(b.shape(out.next).dims(), &[248, 218, 64]);

        let cfg2 = ModelConfig {
            model_type: ModelType::ParallelMaxConvPool,
            ..ModelConfig::tiny(ModelType::ParallelMaxConvPool, (31, 28, 6))
        };
        let mut b = GraphBuilder::new();
        let x = b.input(Shape::hwc(31, 28, 6).unwrap());
        let out = build_encoder_block(&mut b, &cfg2, 0, x).unwrap();
        assert_eq!(b.shape(out.next).dims(), &[16, 14, 8]);

        let cfg3 = ModelConfig::tiny(ModelType::MaxPoolFirst, (31, 28, 6));
        let mut b = GraphBuilder::new();
        let x = b.input(Shape::hwc(31, 28, 6).unwrap());
        let out = build_encoder_block(&mut b, &cfg3, 0, x).unwrap();
        assert_eq!(out.skip, Some(x));
        assert_eq!(b.shape(out.next).dims(), &[16, 14, 12]);
        assert!(build_encoder_block(&mut b, &cfg3, 2, out.next).is_err());
    }

    #[test]
    fn decoder_rejects_mismatched_skip() {
        let cfg = ModelConfig::tiny(ModelType::DenseAvgPool, (8, 8, 3));
        let mut b = GraphBuilder::new();
        let x = b.input(Shape::hwc(4, 4, 16).unwrap());
        let skip = b.input(Shape::hwc(7, 8, 12).unwrap());
        assert!(build_decoder_block(&mut b, &cfg, 0, x, (8, 8), skip).is_err());
    }

    #[test]
    fn type3_decoder_concat_width() {
        let cfg = ModelConfig::tiny(ModelType::MaxPoolFirst, (8, 8, 3));
        let mut b = GraphBuilder::new();
        let x = b.input(Shape::hwc(4, 4, 16).unwrap());
        let skip = b.input(Shape::hwc(8, 8, 12).unwrap());
        build_decoder_block(&mut b, &cfg, 0, x, (8, 8), skip).unwrap();
        let g = b.finish();
        let t = g
            .param_specs()
            .iter()
            .find(|p| p.name == "dec0.dense.layer0.weight")
            .unwrap();
        assert_eq!(t.shape.dims(), &[3, 3, cfg.decoder_channels + 16 + 12, 4]);
    }

    #[test]
    fn parameter_layout_is_stable() {
        for t in ModelType::ALL {
            let cfg = ModelConfig::tiny(t, (12, 10, 5));
            let a = build_model(&cfg).unwrap();
            let b = build_model(&cfg).unwrap();
            let la: Vec<_> = a
                .graph
                .param_specs()
                .iter()
                .map(|p| (p.name.clone(), p.shape.clone()))
                .collect();
            let lb: Vec<_> = b
                .graph
                .param_specs()
                .iter()
                .map(|p| (p.name.clone(), p.shape.clone()))
                .collect();
            assert_eq!(la, lb);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::default();
        c.channel_schedule.pop();
        assert!(build_model(&c).is_err());
        let c = ModelConfig {
            levels: 1,
            channel_schedule: vec![8],
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.input_shape.0 = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_kv_roundtrip() {
        let mut c = ModelConfig::tiny(ModelType::ParallelMaxConvPool, (20, 17, 115));
        c.growth = 7;
        let back = ModelConfig::from_kv(&c.to_kv()).unwrap();
        assert_eq!(back, c);
        let mut bad = c.to_kv();
        bad.insert("model_type".into(), "4".into());
        assert!(ModelConfig::from_kv(&bad).is_err());
    }

    #[test]
    fn tiny_forward_is_finite() {
        use crate::autodiff::ParamStore;
        use crate::tensor::Tensor;
        let unet = build_model(&ModelConfig::tiny(ModelType::MaxPoolFirst, (11, 10, 4))).unwrap();
        let p = ParamStore::<f32>::init(&unet.graph, 1);
        let x = Tensor::full(Shape::hwc(11, 10, 4).unwrap(), crate::DType::F32, 0.5).unwrap();
        let y = unet.graph.infer(&p, &[(unet.input, &x)], unet.output).unwrap();
        assert_eq!(y.dims(), &[11, 10, 48]);
        assert!(y.as_slice::<f32>().unwrap().iter().all(|v| v.is_finite()));
    }
}
