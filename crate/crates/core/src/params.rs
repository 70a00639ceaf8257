//! Named, seeded parameter storage and checkpoint files.
//!
//! Every network in the crate owns one [`ParamStore`]. Parameters are created
//! through a [`ParamBuilder`] that draws initial values from a caller-supplied
//! ChaCha RNG, so a (config, seed) pair always yields the same weights. When a
//! store was loaded from disk, the builder hands back the stored tensors
//! instead and never touches the RNG.
//!
//! Checkpoints are safetensors files: an 8-byte little-endian header length,
//! a JSON header describing every tensor's shape, dtype and byte range, and
//! one flat little-endian blob. The header's `__metadata__` carries a single
//! `header` entry holding a JSON document (model config, seed, ...).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

const METADATA_KEY: &str = "header";

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
    /// Normal with the given standard deviation.
    Normal(f64),
}

#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            device: Device::Cpu,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn builder<'a>(&'a mut self, rng: &'a mut ChaCha8Rng) -> ParamBuilder<'a> {
        ParamBuilder {
            store: self,
            rng,
            prefix: String::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    /// All variables in name order.
    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn num_params(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Serialized checkpoint bytes; two stores with equal contents and
    /// metadata produce identical bytes.
    pub fn to_bytes(&self, metadata: &serde_json::Value) -> Result<Vec<u8>> {
        let mut raw: Vec<(String, safetensors::Dtype, Vec<usize>, Vec<u8>)> = Vec::new();
        for (name, var) in &self.vars {
            let flat = var.as_tensor().flatten_all()?;
            let (dtype, bytes) = match self.dtype {
                DType::F64 => (
                    safetensors::Dtype::F64,
                    flat.to_vec1::<f64>()?
                        .iter()
                        .flat_map(|x| x.to_le_bytes())
                        .collect(),
                ),
                _ => (
                    safetensors::Dtype::F32,
                    flat.to_dtype(DType::F32)?
                        .to_vec1::<f32>()?
                        .iter()
                        .flat_map(|x| x.to_le_bytes())
                        .collect(),
                ),
            };
            raw.push((name.clone(), dtype, var.dims().to_vec(), bytes));
        }
        let views = raw
            .iter()
            .map(|(name, dtype, shape, bytes)| {
                Ok((
                    name.clone(),
                    safetensors::tensor::TensorView::new(*dtype, shape.clone(), bytes)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut info = HashMap::new();
        info.insert(METADATA_KEY.to_string(), serde_json::to_string(metadata)?);
        Ok(safetensors::serialize(views, Some(info))?)
    }

    pub fn save(&self, path: impl AsRef<Path>, metadata: &serde_json::Value) -> Result<()> {
        let bytes = self.to_bytes(metadata)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    /// Loads a checkpoint, converting tensors to `dtype`. Returns the store and
    /// the JSON metadata document.
    pub fn load(path: impl AsRef<Path>, dtype: DType) -> Result<(Self, serde_json::Value)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, dtype).map_err(|e| match e {
            Error::Checkpoint { reason, .. } => Error::Checkpoint {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn from_bytes(bytes: &[u8], dtype: DType) -> Result<(Self, serde_json::Value)> {
        let bad = |reason: String| Error::Checkpoint {
            path: Default::default(),
            reason,
        };
        let (_, header) = safetensors::SafeTensors::read_metadata(bytes)?;
        let metadata = match header.metadata().as_ref().and_then(|m| m.get(METADATA_KEY)) {
            Some(s) => serde_json::from_str(s)?,
            None => serde_json::Value::Null,
        };
        let tensors = safetensors::SafeTensors::deserialize(bytes)?;
        let mut store = Self::new(dtype);
        for (name, view) in tensors.tensors() {
            let shape = view.shape().to_vec();
            let data = view.data();
            let t = match view.dtype() {
                safetensors::Dtype::F32 => {
                    let v: Vec<f32> = data
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    Tensor::from_vec(v, shape, &store.device)?
                }
                safetensors::Dtype::F64 => {
                    let v: Vec<f64> = data
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    Tensor::from_vec(v, shape, &store.device)?
                }
                other => return Err(bad(format!("unsupported dtype {other:?} for {name}"))),
            };
            store
                .vars
                .insert(name, Var::from_tensor(&t.to_dtype(dtype)?)?);
        }
        Ok((store, metadata))
    }

    /// A store with the same values in fresh variables. Cloning a
    /// [`ParamStore`] shares the variables; this does not.
    pub fn deep_clone(&self) -> Result<Self> {
        let mut vars = BTreeMap::new();
        for (name, var) in &self.vars {
            vars.insert(name.clone(), Var::from_tensor(&var.as_tensor().copy()?)?);
        }
        Ok(Self {
            vars,
            dtype: self.dtype,
            device: self.device.clone(),
        })
    }

    /// Copies all values from `other` into the matching variables of `self`.
    pub fn copy_from(&self, other: &ParamStore) -> Result<()> {
        for (name, var) in &self.vars {
            let src = other
                .get(name)
                .ok_or_else(|| Error::Config(format!("parameter {name} missing from source")))?;
            var.set(&src.as_tensor().to_dtype(self.dtype)?)?;
        }
        Ok(())
    }
}

/// Hands out parameters under a dotted name prefix.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl ParamBuilder<'_> {
    pub fn sub(&mut self, name: &str) -> ParamBuilder<'_> {
        ParamBuilder {
            prefix: self.path(name),
            store: &mut *self.store,
            rng: &mut *self.rng,
        }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype
    }

    pub fn device(&self) -> Device {
        self.store.device.clone()
    }

    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let path = self.path(name);
        if let Some(var) = self.store.vars.get(&path) {
            if var.dims() != shape {
                return Err(Error::Shape(format!(
                    "parameter {path}: stored {:?}, requested {shape:?}",
                    var.dims()
                )));
            }
            return Ok(var.as_tensor().clone());
        }
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Uniform(bound) => (0..n)
                .map(|_| self.rng.random_range(-bound..=bound))
                .collect(),
            Init::Normal(std) => (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut *self.rng);
                    z * std
                })
                .collect(),
        };
        let t = Tensor::from_vec(values, shape, &self.store.device)?.to_dtype(self.store.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.store.vars.insert(path, var);
        Ok(out)
    }
}
