//! Moving-blob traffic movies for desk-scale experiments.
//!
//! Each sample renders a 24-bin movie of Gaussian blobs drifting along one
//! of the four diagonal headings. Bins 0..12 form the input and bins 12, 13,
//! 14, 17, 20, 23 the target, so targets continue the motion visible in the
//! input. Blobs leave the frame at its edges and nothing enters from outside,
//! which keeps every target determined by the input movie.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::frames::{quantize_value, DynamicFrame, StaticMap, TargetFrame};
use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::model::{INPUT_FEATURES, INPUT_FRAMES, OUTPUT_FEATURES, STATIC_FEATURES};
use crate::tensor::{Shape, Tensor};

pub const MIN_EXTENT: usize = 7;
/// Movie bins sampled for the target: +5, +10, +15, +30, +45, +60 minutes
/// after the last input bin.
pub const TARGET_BINS: [usize; 6] = [12, 13, 14, 17, 20, 23];

/// Heading unit steps `(dy, dx)` in NE, NW, SE, SW order.
const HEADINGS: [(f64, f64); 4] = [(-1.0, 1.0), (-1.0, -1.0), (1.0, 1.0), (1.0, -1.0)];
const MAX_SPEED: f64 = 0.8;

#[derive(Debug, Clone)]
struct Blob {
    y: f64,
    x: f64,
    heading: usize,
    speed: f64,
    sigma: f64,
    amp: f64,
}

impl Blob {
    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Self {
        Blob {
            y: rng.random_range(0.0..h as f64),
            x: rng.random_range(0.0..w as f64),
            heading: rng.random_range(0..4),
            speed: rng.random_range(0.25..MAX_SPEED),
            sigma: rng.random_range(0.8..1.5),
            amp: rng.random_range(0.5..1.0),
        }
    }

    fn centre(&self, bin: usize) -> (f64, f64) {
        let (dy, dx) = HEADINGS[self.heading];
        let step = self.speed * bin as f64 / std::f64::consts::SQRT_2;
        (self.y + dy * step, self.x + dx * step)
    }
}

/// Renders one bin as `H·W·9` features on the [0, 1] scale.
fn render(blobs: &[Blob], bin: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w * INPUT_FEATURES];
    for b in blobs {
        let (cy, cx) = b.centre(bin);
        let r = (3.0 * b.sigma).ceil() as i64;
        let (iy, ix) = (cy.floor() as i64, cx.floor() as i64);
        let speed = b.speed / MAX_SPEED;
        for oy in -r..=r + 1 {
            let py = iy + oy;
            if py < 0 || py >= h as i64 {
                continue;
            }
            let dy = py as f64 - cy;
            let py = py as usize;
            for ox in -r..=r + 1 {
                let px = ix + ox;
                if px < 0 || px >= w as i64 {
                    continue;
                }
                let dx = px as f64 - cx;
                let px = px as usize;
                let g = (-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma)).exp();
                if g < 1e-3 {
                    continue;
                }
                let cell = &mut out[(py * w + px) * INPUT_FEATURES..][..INPUT_FEATURES];
                cell[2 * b.heading] += b.amp * g;
                cell[2 * b.heading + 1] = cell[2 * b.heading + 1].max(speed * g);
            }
        }
    }
    for cell in out.chunks_exact_mut(INPUT_FEATURES) {
        let volume: f64 = (0..4).map(|k| cell[2 * k]).sum::<f64>().min(1.0);
        let speed = (0..4).map(|k| cell[2 * k + 1]).fold(0.0, f64::max);
        cell[8] = volume * (1.0 - speed);
    }
    out
}

fn static_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<StaticMap> {
    let waves: Vec<[f64; 4]> = (0..STATIC_FEATURES)
        .map(|_| {
            [
                rng.random_range(0.05..0.6),
                rng.random_range(0.05..0.6),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::TAU),
            ]
        })
        .collect();
    let mut v = Vec::with_capacity(h * w * STATIC_FEATURES);
    for i in 0..h {
        for j in 0..w {
            for [a, b, p, q] in &waves {
                let s = 0.5 + 0.25 * ((a * i as f64 + p).sin() + (b * j as f64 + q).sin());
                v.push(quantize_value(s));
            }
        }
    }
    StaticMap::new(Tensor::from_vec(Shape::hwc(h, w, STATIC_FEATURES)?, v)?)
}

fn sample(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<Sample> {
    let n_blobs = (h * w / 120).max(2);
    let blobs: Vec<Blob> = (0..n_blobs).map(|_| Blob::random(rng, h, w)).collect();

    let mut dynamic = Vec::with_capacity(INPUT_FRAMES * h * w * INPUT_FEATURES);
    for bin in 0..INPUT_FRAMES {
        dynamic.extend(render(&blobs, bin, h, w).into_iter().map(quantize_value));
    }
    let mut target = Vec::with_capacity(TARGET_BINS.len() * h * w * OUTPUT_FEATURES);
    for &bin in &TARGET_BINS {
        let frame = render(&blobs, bin, h, w);
        for cell in frame.chunks_exact(INPUT_FEATURES) {
            target.extend(cell[..OUTPUT_FEATURES].iter().map(|&x| quantize_value(x)));
        }
    }
    Ok(Sample {
        dynamic: DynamicFrame::new(Tensor::from_vec(
            Shape::new(vec![INPUT_FRAMES, h, w, INPUT_FEATURES])?,
            dynamic,
        )?)?,
        target: TargetFrame::new(Tensor::from_vec(
            Shape::new(vec![TARGET_BINS.len(), h, w, OUTPUT_FEATURES])?,
            target,
        )?)?,
    })
}

/// Deterministic synthetic dataset sharing one static map.
pub fn synth_dataset(seed: u64, n_samples: usize, h: usize, w: usize) -> Result<Dataset> {
    if h < MIN_EXTENT || w < MIN_EXTENT {
        return Err(Error::Config(format!(
            "synthetic frames need H, W >= {MIN_EXTENT}, got {h}x{w}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let static_map = static_map(&mut rng, h, w)?;
    let samples = (0..n_samples).map(|_| sample(&mut rng, h, w)).collect::<Result<_>>()?;
    Ok(Dataset { static_map, samples })
}
