//! Single-file checkpoints.
//!
//! ```text
//! "ABVCKPT1" | u64 LE header length | JSON header | array bytes…
//! ```
//!
//! The header lists every array with name, dtype, shape and byte range
//! into the payload. Values are little-endian, row-major.

use std::fs;
use std::path::Path;

use aerialbev_core::{Dvdet, ModelConfig, Parameterized, Real};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::optim::Adam;
use crate::{HarnessError, Result};

const MAGIC: &[u8; 8] = b"ABVCKPT1";
const PARAM_PREFIX: &str = "param/";
const ADAM_M_PREFIX: &str = "adam.m/";
const ADAM_V_PREFIX: &str = "adam.v/";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub bytes: Vec<u8>,
}

impl NamedArray {
    fn from_values<T: Real>(name: String, shape: Vec<usize>, values: &[T]) -> Self {
        let mut bytes = Vec::with_capacity(std::mem::size_of_val(values));
        for &v in values {
            v.write_le(&mut bytes);
        }
        Self {
            name,
            dtype: T::DTYPE.to_owned(),
            shape,
            bytes,
        }
    }

    /// Values converted to `T`; `f32` arrays widen exactly into `f64`.
    pub fn values<T: Real>(&self) -> std::result::Result<Vec<T>, String> {
        let n: usize = self.shape.iter().product();
        match self.dtype.as_str() {
            "f32" => decode::<f32>(&self.bytes, n).map(|v| v.into_iter().map(|x| T::of(x as f64)).collect()),
            "f64" => decode::<f64>(&self.bytes, n).map(|v| v.into_iter().map(T::of).collect()),
            d => Err(format!("array {}: unknown dtype {d}", self.name)),
        }
    }
}

fn decode<U: Real>(bytes: &[u8], n: usize) -> std::result::Result<Vec<U>, String> {
    let sz = std::mem::size_of::<U>();
    if bytes.len() != n * sz {
        return Err(format!("expected {} bytes, found {}", n * sz, bytes.len()));
    }
    Ok(bytes.chunks_exact(sz).map(U::read_le).collect())
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    run_config: RunConfig,
    model_config: ModelConfig,
    step: u64,
    epoch: usize,
    rng: Option<ChaCha8Rng>,
    arrays: Vec<ArrayEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub run_config: RunConfig,
    pub model_config: ModelConfig,
    pub step: u64,
    pub epoch: usize,
    /// Training stream state at save time.
    pub rng: Option<ChaCha8Rng>,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn capture<T: Real>(
        model: &Dvdet<T>,
        run_config: &RunConfig,
        optimizer: Option<&Adam>,
        epoch: usize,
        rng: Option<&ChaCha8Rng>,
    ) -> Self {
        let params = model.named_params();
        let mut arrays: Vec<NamedArray> = params
            .iter()
            .map(|p| NamedArray::from_values(format!("{PARAM_PREFIX}{}", p.name), p.shape.clone(), &p.value))
            .collect();
        if let Some(opt) = optimizer {
            for (prefix, moments) in [(ADAM_M_PREFIX, &opt.m), (ADAM_V_PREFIX, &opt.v)] {
                for (p, m) in params.iter().zip(moments) {
                    arrays.push(NamedArray::from_values(format!("{prefix}{}", p.name), p.shape.clone(), m));
                }
            }
        }
        Self {
            run_config: run_config.clone(),
            model_config: model.config.clone(),
            step: optimizer.map_or(0, |o| o.step),
            epoch,
            rng: rng.cloned(),
            arrays,
        }
    }

    fn array(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    /// Rebuilds the model from the config snapshot and copies every
    /// parameter by name.
    pub fn restore_model<T: Real>(&self, path: &Path) -> Result<Dvdet<T>> {
        let mut model = Dvdet::new(self.model_config.clone(), self.run_config.seed)?;
        self.load_params_into(&mut model, path, false)?;
        Ok(model)
    }

    /// Copies parameters into `model`. With `partial`, parameters the
    /// checkpoint lacks keep their values (fine-tuning across variants);
    /// shape mismatches are always errors.
    pub fn load_params_into<T: Real>(&self, model: &mut Dvdet<T>, path: &Path, partial: bool) -> Result<usize> {
        let err = |reason: String| HarnessError::Checkpoint {
            path: path.to_owned(),
            reason,
        };
        let mut loaded = 0;
        for p in model.params_mut() {
            let Some(a) = self.array(&format!("{PARAM_PREFIX}{}", p.name)) else {
                if partial {
                    continue;
                }
                return Err(err(format!("missing parameter {}", p.name)));
            };
            if a.shape != p.shape {
                return Err(err(format!("parameter {}: shape {:?} != {:?}", p.name, a.shape, p.shape)));
            }
            p.value = a.values().map_err(err)?;
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn restore_optimizer<T: Real>(&self, model: &Dvdet<T>, path: &Path) -> Result<Option<Adam>> {
        let params = model.named_params();
        let r = &self.run_config;
        let mut opt = Adam::new(&params, r.beta1, r.beta2, r.adam_eps, r.grad_clip);
        for (i, p) in params.iter().enumerate() {
            let (Some(m), Some(v)) = (
                self.array(&format!("{ADAM_M_PREFIX}{}", p.name)),
                self.array(&format!("{ADAM_V_PREFIX}{}", p.name)),
            ) else {
                return Ok(None);
            };
            let conv = |a: &NamedArray| {
                a.values::<f64>().map_err(|reason| HarnessError::Checkpoint {
                    path: path.to_owned(),
                    reason,
                })
            };
            opt.m[i] = conv(m)?;
            opt.v[i] = conv(v)?;
        }
        opt.step = self.step;
        Ok(Some(opt))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let entries: Vec<ArrayEntry> = self
            .arrays
            .iter()
            .map(|a| {
                let e = ArrayEntry {
                    name: a.name.clone(),
                    dtype: a.dtype.clone(),
                    shape: a.shape.clone(),
                    offset,
                    len: a.bytes.len(),
                };
                offset += a.bytes.len();
                e
            })
            .collect();
        let header = Header {
            run_config: self.run_config.clone(),
            model_config: self.model_config.clone(),
            step: self.step,
            epoch: self.epoch,
            rng: self.rng.clone(),
            arrays: entries,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for a in &self.arrays {
            out.extend_from_slice(&a.bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |reason: &str| HarnessError::Checkpoint {
            path: path.to_owned(),
            reason: reason.to_owned(),
        };
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(err("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| err("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..body])?;
        let payload = &bytes[body..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for e in header.arrays {
            let end = e.offset.checked_add(e.len).filter(|&x| x <= payload.len()).ok_or_else(|| err("truncated payload"))?;
            arrays.push(NamedArray {
                name: e.name,
                dtype: e.dtype,
                shape: e.shape,
                bytes: payload[e.offset..end].to_vec(),
            });
        }
        Ok(Self {
            run_config: header.run_config,
            model_config: header.model_config,
            step: header.step,
            epoch: header.epoch,
            rng: header.rng,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| HarnessError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aerialbev_core::Variant;
    use rand::SeedableRng;

    fn tiny(variant: Variant) -> RunConfig {
        RunConfig {
            variant,
            channels: 4,
            stem_channels: 4,
            extra_blocks: 0,
            head_trunk: 1,
            grid_x_cells: 8,
            grid_y_cells: 6,
            ..RunConfig::default()
        }
    }

    #[test]
    fn bytes_roundtrip_with_optimizer_state() {
        let rc = tiny(Variant::Dvdet);
        let model: Dvdet<f32> = Dvdet::new(rc.model_config().unwrap(), 5).unwrap();
        let mut opt = Adam::new(&model.named_params(), rc.beta1, rc.beta2, rc.adam_eps, rc.grad_clip);
        opt.step = 17;
        opt.m[0][0] = 0.125;
        let rng = ChaCha8Rng::seed_from_u64(9);
        let ck = Checkpoint::capture(&model, &rc, Some(&opt), 3, Some(&rng));
        let p = Path::new("mem");
        let back = Checkpoint::from_bytes(&ck.to_bytes(), p).unwrap();
        assert_eq!(back, ck);
        let m2: Dvdet<f32> = back.restore_model(p).unwrap();
        assert_eq!(m2, model);
        assert_eq!(back.restore_optimizer(&m2, p).unwrap().unwrap(), opt);
    }

    #[test]
    fn rejects_garbage_and_shape_mismatch() {
        assert!(Checkpoint::from_bytes(b"hello world, this is not it", Path::new("x")).is_err());
        let rc = tiny(Variant::InterGeot);
        let model: Dvdet<f64> = Dvdet::new(rc.model_config().unwrap(), 1).unwrap();
        let mut ck = Checkpoint::capture(&model, &rc, None, 0, None);
        ck.arrays[0].shape.push(2);
        let mut m = model.clone();
        assert!(ck.load_params_into(&mut m, Path::new("x"), false).is_err());
    }
}
