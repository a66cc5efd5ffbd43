//! `T4CK` v1 checkpoint container.
//!
//! ```text
//! "T4CK" | u8 version=1 | u32 metadata length | metadata (UTF-8 key=value lines)
//! u32 tensor count | per tensor: u16 name length, name, u8 dtype (1=f32), u8 ndim,
//! ndim × u32 dims, row-major payload
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use crate::autodiff::{Graph, ParamStore};
use crate::data::{dtype_code, dtype_from_code, encode_dims, encode_payload, Cursor};
use crate::error::{Error, Result};
use crate::model::{parse, ModelConfig};
use crate::tensor::{DType, Tensor};

pub const MAGIC: &[u8; 4] = b"T4CK";
pub const VERSION: u8 = 1;
const FORMAT: &str = "T4CK";
/// Number of recent losses kept in checkpoint metadata.
pub const LOSS_TAIL: usize = 16;

const RESERVED_KEYS: [&str; 3] = ["step", "lr", "loss_tail"];

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: u64,
    pub lr: f64,
    pub loss_tail: Vec<f64>,
    /// Free-form metadata beyond the model config and training state.
    pub extra: BTreeMap<String, String>,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_params(config: &ModelConfig, step: u64, lr: f64, loss_tail: &[f64], params: &ParamStore<f32>) -> Self {
        Checkpoint {
            config: config.clone(),
            step,
            lr,
            loss_tail: loss_tail.to_vec(),
            extra: BTreeMap::new(),
            params: params.to_named(),
        }
    }

    /// Binds the stored tensors onto `graph`'s parameter layout.
    pub fn param_store(&self, graph: &Graph) -> Result<ParamStore<f32>> {
        ParamStore::from_named(graph, &self.params)
    }

    fn metadata(&self) -> Result<String> {
        let mut kv = self.config.to_kv();
        for (k, v) in &self.extra {
            if kv.contains_key(k) || RESERVED_KEYS.contains(&k.as_str()) {
                return Err(Error::format(FORMAT, format!("extra key `{k}` shadows a reserved key")));
            }
            if k.contains(['=', '\n']) || v.contains('\n') || k.trim() != k || k.is_empty() {
                return Err(Error::format(
                    FORMAT,
                    format!("metadata entry `{k}` is not representable"),
                ));
            }
            kv.insert(k.clone(), v.clone());
        }
        kv.insert("step".into(), self.step.to_string());
        kv.insert("lr".into(), self.lr.to_string());
        kv.insert(
            "loss_tail".into(),
            self.loss_tail.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        );
        Ok(kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let meta = self.metadata()?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let meta_len = u32::try_from(meta.len()).map_err(|_| Error::format(FORMAT, "metadata too long"))?;
        out.extend_from_slice(&meta_len.to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        let count = u32::try_from(self.params.len()).map_err(|_| Error::format(FORMAT, "too many tensors"))?;
        out.extend_from_slice(&count.to_le_bytes());
        let mut seen = HashSet::new();
        for (name, t) in &self.params {
            if !seen.insert(name.as_str()) {
                return Err(Error::format(FORMAT, format!("duplicate tensor name `{name}`")));
            }
            if t.dtype() != DType::F32 {
                return Err(Error::UnsupportedDType {
                    op: "checkpoint tensor",
                    dtype: t.dtype(),
                });
            }
            let len = u16::try_from(name.len()).map_err(|_| Error::format(FORMAT, "tensor name too long"))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(dtype_code(t.dtype()));
            out.push(u8::try_from(t.shape().rank()).map_err(|_| Error::format(FORMAT, "rank exceeds 255"))?);
            encode_dims(t.shape(), FORMAT, &mut out)?;
            encode_payload(t.data(), &mut out);
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Checkpoint> {
        let mut c = Cursor::new(buf, FORMAT);
        if c.take(4, "magic")? != MAGIC {
            return Err(Error::format(FORMAT, "bad magic"));
        }
        let version = c.u8("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                format: FORMAT,
                version,
            });
        }
        let meta_len = c.u32("metadata length")? as usize;
        let meta = std::str::from_utf8(c.take(meta_len, "metadata")?)
            .map_err(|_| Error::format(FORMAT, "metadata is not UTF-8"))?;
        let mut kv = BTreeMap::new();
        for line in meta.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(FORMAT, format!("metadata line `{line}` has no `=`")))?;
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::format(FORMAT, format!("duplicate metadata key `{k}`")));
            }
        }
        let mut config = ModelConfig::default();
        let used: HashSet<String> = config
            .apply_kv(kv.iter().map(|(k, v)| (k.as_str(), v.as_str())))?
            .into_iter()
            .map(str::to_string)
            .collect();
        config.validate()?;
        let field = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::format(FORMAT, format!("metadata lacks `{k}`")))
        };
        let step = parse("step", field("step")?)?;
        let lr = parse("lr", field("lr")?)?;
        let tail = field("loss_tail")?;
        let loss_tail = if tail.is_empty() {
            Vec::new()
        } else {
            tail.split(',')
                .map(|s| parse::<f64>("loss_tail", s))
                .collect::<Result<_>>()?
        };
        let extra = kv
            .iter()
            .filter(|(k, _)| !used.contains(*k) && !RESERVED_KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();

        let count = c.u32("tensor count")? as usize;
        let mut params = Vec::with_capacity(count.min(4096));
        let mut seen = HashSet::new();
        for _ in 0..count {
            let len = c.u16("name length")? as usize;
            let name = std::str::from_utf8(c.take(len, "name")?)
                .map_err(|_| Error::format(FORMAT, "tensor name is not UTF-8"))?
                .to_string();
            if !seen.insert(name.clone()) {
                return Err(Error::format(FORMAT, format!("duplicate tensor name `{name}`")));
            }
            let code = c.u8("dtype")?;
            if dtype_from_code(code) != Some(DType::F32) {
                return Err(Error::format(
                    FORMAT,
                    format!("tensor `{name}` has unsupported dtype code {code}"),
                ));
            }
            let ndim = c.u8("ndim")? as usize;
            if ndim == 0 {
                return Err(Error::format(FORMAT, format!("tensor `{name}` has ndim 0")));
            }
            let shape = c.dims(ndim)?;
            let data = c.payload(DType::F32, &shape)?;
            params.push((name, Tensor::from_data(shape, data)?));
        }
        if c.remaining() != 0 {
            return Err(Error::format(FORMAT, format!("{} trailing bytes", c.remaining())));
        }
        Ok(Checkpoint {
            config,
            step,
            lr,
            loss_tail,
            extra,
            params,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ckpt.encode()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelType};

    fn sample() -> Checkpoint {
        let cfg = ModelConfig::tiny(ModelType::ParallelMaxConvPool, (9, 8, 108));
        let unet = build_model(&cfg).unwrap();
        let p = ParamStore::<f32>::init(&unet.graph, 3);
        let mut c = Checkpoint::from_params(&cfg, 1500, 3e-4 * 0.5, &[0.1, 1.0 / 3.0, 7e-6], &p);
        c.extra.insert("label".into(), "run a".into());
        c
    }

    #[test]
    fn roundtrip_is_exact() {
        let c = sample();
        let bytes = c.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.encode().unwrap(), bytes);
        let unet = build_model(&c.config).unwrap();
        back.param_store(&unet.graph).unwrap();
    }

    #[test]
    fn file_roundtrip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.t4ck");
        let c = sample();
        save_checkpoint(&c, &p).unwrap();
        let raw = fs::read(&p).unwrap();
        assert_eq!(&raw[..5], b"T4CK\x01");
        assert_eq!(load_checkpoint(&p).unwrap(), c);
    }

    #[test]
    fn truncation_is_an_error() {
        let bytes = sample().encode().unwrap();
        for cut in [0, 3, 5, 9, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::decode(&bytes[..cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn version_and_magic() {
        let mut bytes = sample().encode().unwrap();
        bytes[4] = 2;
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(Error::UnsupportedVersion { version: 2, .. })
        ));
        bytes[4] = 1;
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut c = sample();
        let first = c.params[0].clone();
        c.params.push(first.clone());
        assert!(c.encode().is_err());

        // hand-craft a duplicate on the wire
        c.params.pop();
        let good = c.encode().unwrap();
        let meta_len = u32::from_le_bytes(good[5..9].try_into().unwrap()) as usize;
        let body = 9 + meta_len;
        let mut one = Checkpoint {
            params: vec![first.clone()],
            ..c.clone()
        }
        .encode()
        .unwrap();
        let entry = one[body + 4..].to_vec();
        one[body..body + 4].copy_from_slice(&2u32.to_le_bytes());
        one.extend_from_slice(&entry);
        assert!(matches!(Checkpoint::decode(&one), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_parameter_detected_on_bind() {
        let mut c = sample();
        c.params.pop();
        let unet = build_model(&c.config).unwrap();
        assert!(c.param_store(&unet.graph).is_err());
    }
}
