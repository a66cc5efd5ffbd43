//! Frame containers, the `T4CT` file format, input assembly and synthetic
//! data.

mod bytes;
mod frames;
mod synth;
mod t4ct;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub(crate) use bytes::{encode_dims, encode_payload, Cursor};
pub use frames::{
    assemble_input, flatten_dynamic, fold_time, input_channels, quantize_output, quantize_value, reshape_output,
    unflatten_dynamic, unfold_time, uses_static, DynamicFrame, StaticMap, TargetFrame,
};
pub use synth::{synth_dataset, MIN_EXTENT, TARGET_BINS};
pub use t4ct::{decode_tensor, dtype_code, dtype_from_code, encode_tensor, read_tensor, write_tensor};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const STATIC_FILE: &str = "static.t4ct";

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub dynamic: DynamicFrame,
    pub target: TargetFrame,
}

/// Samples of one city, sharing its static map.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub static_map: StaticMap,
    pub samples: Vec<Sample>,
}

/// Network-ready `(input, target)` pair: `(H, W, 115|108)` and `(H, W, 48)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub input: Tensor,
    pub target: Tensor,
}

pub const DYNAMIC_SUFFIX: &str = "_dynamic.t4ct";
pub const TARGET_SUFFIX: &str = "_target.t4ct";

fn dynamic_path(dir: &Path, split: &str, i: usize) -> PathBuf {
    dir.join(split).join(format!("{i}{DYNAMIC_SUFFIX}"))
}

fn target_path(dir: &Path, split: &str, i: usize) -> PathBuf {
    dir.join(split).join(format!("{i}{TARGET_SUFFIX}"))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn spatial(&self) -> (usize, usize) {
        self.static_map.spatial()
    }

    pub fn triples(&self) -> impl Iterator<Item = (&DynamicFrame, &StaticMap, &TargetFrame)> {
        self.samples.iter().map(|s| (&s.dynamic, &self.static_map, &s.target))
    }

    pub fn training_pairs(&self, use_static: bool) -> Result<Vec<TrainingPair>> {
        self.samples
            .iter()
            .map(|s| {
                Ok(TrainingPair {
                    input: assemble_input(&s.dynamic, &self.static_map, use_static)?,
                    target: s.target.flattened(),
                })
            })
            .collect()
    }

    /// Writes `static.t4ct` and `<split>/<i>_{dynamic,target}.t4ct`.
    pub fn write(&self, dir: impl AsRef<Path>, split: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join(split))?;
        write_tensor(self.static_map.tensor(), dir.join(STATIC_FILE))?;
        for (i, s) in self.samples.iter().enumerate() {
            write_tensor(s.dynamic.tensor(), dynamic_path(dir, split, i))?;
            write_tensor(s.target.tensor(), target_path(dir, split, i))?;
        }
        Ok(())
    }

    /// Reads `static.t4ct` and the `split` samples, which must have both
    /// dynamic and target files for indices `0..n`.
    pub fn read(dir: impl AsRef<Path>, split: &str) -> Result<Dataset> {
        let dir = dir.as_ref();
        let (static_map, dynamics) = read_inputs(dir, split)?;
        let targets = read_targets(dir.join(split))?;
        if targets.len() != dynamics.len() {
            return Err(Error::format(
                "dataset",
                format!("{} dynamic frames but {} targets", dynamics.len(), targets.len()),
            ));
        }
        for (i, t) in targets.iter().enumerate() {
            if t.spatial() != static_map.spatial() {
                return Err(Error::format(
                    "dataset",
                    format!("target {i} does not match the static map extent"),
                ));
            }
        }
        let samples = dynamics
            .into_iter()
            .zip(targets)
            .map(|(dynamic, target)| Sample { dynamic, target })
            .collect();
        Ok(Dataset { static_map, samples })
    }
}

/// Files named `<index><suffix>` directly inside `dir`, keyed by index.
pub fn indexed_files(dir: impl AsRef<Path>, suffix: &str) -> Result<BTreeMap<usize, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir.as_ref())? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(idx) = name.strip_suffix(suffix).and_then(|s| s.parse::<usize>().ok()) {
            out.insert(idx, path);
        }
    }
    Ok(out)
}

fn contiguous(files: BTreeMap<usize, PathBuf>, what: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    let missing: Vec<usize> = (0..files.keys().next_back().map_or(0, |&k| k + 1))
        .filter(|i| !files.contains_key(i))
        .collect();
    if !missing.is_empty() {
        return Err(Error::format(
            "dataset",
            format!("{} lacks {what} files for indices {missing:?}", dir.display()),
        ));
    }
    Ok(files.into_values().collect())
}

/// Static map plus the `<split>/<i>_dynamic.t4ct` frames, in index order.
pub fn read_inputs(dir: impl AsRef<Path>, split: &str) -> Result<(StaticMap, Vec<DynamicFrame>)> {
    let dir = dir.as_ref();
    let static_map = StaticMap::new(read_tensor(dir.join(STATIC_FILE))?)?;
    let split_dir = dir.join(split);
    let paths = contiguous(indexed_files(&split_dir, DYNAMIC_SUFFIX)?, "dynamic", &split_dir)?;
    let mut frames = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let d = DynamicFrame::new(read_tensor(p)?)?;
        if d.spatial() != static_map.spatial() {
            return Err(Error::format(
                "dataset",
                format!(
                    "dynamic frame {i} is {:?} but the static map is {:?}",
                    d.spatial(),
                    static_map.spatial()
                ),
            ));
        }
        frames.push(d);
    }
    Ok((static_map, frames))
}

/// `<i>_target.t4ct` frames directly inside `dir`, in index order.
pub fn read_targets(dir: impl AsRef<Path>) -> Result<Vec<TargetFrame>> {
    let dir = dir.as_ref();
    contiguous(indexed_files(dir, TARGET_SUFFIX)?, "target", dir)?
        .iter()
        .map(|p| TargetFrame::new(read_tensor(p)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(5, 3, 9, 8).unwrap();
        ds.write(dir.path(), "train").unwrap();
        assert!(dir.path().join("train/2_target.t4ct").exists());
        assert_eq!(Dataset::read(dir.path(), "train").unwrap(), ds);
        assert!(Dataset::read(dir.path(), "test").is_err());
    }

    #[test]
    fn missing_target_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        synth_dataset(5, 2, 9, 8).unwrap().write(dir.path(), "train").unwrap();
        fs::remove_file(dir.path().join("train/1_target.t4ct")).unwrap();
        assert!(Dataset::read(dir.path(), "train").is_err());
    }

    #[test]
    fn inputs_without_targets() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(5, 2, 9, 8).unwrap();
        ds.write(dir.path(), "test").unwrap();
        for i in 0..2 {
            fs::remove_file(dir.path().join(format!("test/{i}_target.t4ct"))).unwrap();
        }
        let (s, d) = read_inputs(dir.path(), "test").unwrap();
        assert_eq!(s, ds.static_map);
        assert_eq!(d.len(), 2);
        assert!(read_targets(dir.path().join("test")).unwrap().is_empty());
    }

    #[test]
    fn gaps_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        synth_dataset(5, 3, 9, 8).unwrap().write(dir.path(), "train").unwrap();
        fs::remove_file(dir.path().join("train/1_dynamic.t4ct")).unwrap();
        let err = read_inputs(dir.path(), "train").unwrap_err().to_string();
        assert!(err.contains("[1]"), "{err}");
    }

    #[test]
    fn pairs_have_network_shapes() {
        let ds = synth_dataset(5, 2, 9, 8).unwrap();
        let p = ds.training_pairs(true).unwrap();
        assert_eq!(p[0].input.dims(), &[9, 8, 115]);
        assert_eq!(p[0].target.dims(), &[9, 8, 48]);
        assert_eq!(ds.training_pairs(false).unwrap()[1].input.dims(), &[9, 8, 108]);
    }
}
