//! Parameter sources for the pretrained encoders.
//!
//! A [`ParamBackend`] plugs into candle's `VarBuilder`. It resolves names against a safetensors
//! archive (tolerating the `bert.` prefix and `gamma`/`beta` LayerNorm names of older BERT
//! exports) or against the procedural generator, applies checkpoint overrides, and, for
//! trainable encoders, promotes every learnable tensor to a [`Var`] that is recorded for the
//! optimizer. Batch-norm running statistics always stay frozen.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use candle_core::safetensors::MmapedSafetensors;
use candle_core::{DType, Device, Shape, Tensor, Var};
use candle_nn::var_builder::SimpleBackend;
use candle_nn::VarBuilder;

use crate::error::{Error, Result};

fn fnv1a64(name: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` values uniform on `[0, 1)` with 24-bit resolution, keyed by `name`.
pub fn unit_uniform(name: &str, n: usize) -> Vec<f64> {
    let seed = fnv1a64(name);
    (0..n as u64)
        .map(|i| (splitmix64(seed.wrapping_add(i)) >> 40) as f64 / (1u64 << 24) as f64)
        .collect()
}

/// Deterministic stand-in weights derived from the parameter name and shape.
///
/// Matrices and kernels are uniform with variance `2 / fan_in`; vectors named `weight` sit
/// around 1, other vectors around 0; batch-norm variances lie in `[1, 1.5)`. The same scheme
/// is reproducible outside Rust, which lets reference implementations be compared
/// value-for-value without shipping weight files.
pub fn procedural_values(name: &str, dims: &[usize]) -> Vec<f32> {
    let n: usize = dims.iter().product();
    let u = unit_uniform(name, n);
    if name.ends_with("running_var") {
        u.iter().map(|&u| (1.0 + 0.5 * u) as f32).collect()
    } else if name.ends_with("running_mean") {
        u.iter().map(|&u| (0.1 * (2.0 * u - 1.0)) as f32).collect()
    } else if dims.len() == 1 && name.ends_with("weight") {
        u.iter().map(|&u| (1.0 + 0.1 * (2.0 * u - 1.0)) as f32).collect()
    } else if dims.len() <= 1 {
        u.iter().map(|&u| (0.1 * (2.0 * u - 1.0)) as f32).collect()
    } else {
        let fan_in = n / dims[0];
        let scale = (6.0 / fan_in as f64).sqrt();
        u.iter().map(|&u| ((2.0 * u - 1.0) * scale) as f32).collect()
    }
}

/// Where encoder weights come from.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum WeightSource {
    /// A safetensors file, or a directory holding `model.safetensors` (and `vocab.txt` for text).
    Path(PathBuf),
    /// A named entry resolved under the weight cache directory.
    Registry(String),
    /// Deterministic generated weights; no files needed.
    Procedural,
}

/// Environment variable naming the weight cache directory used for registry entries.
pub const WEIGHTS_DIR_ENV: &str = "MEMOTION_WEIGHTS_DIR";

impl From<WeightSource> for String {
    fn from(w: WeightSource) -> String {
        match w {
            WeightSource::Path(p) => p.display().to_string(),
            WeightSource::Registry(name) => format!("registry:{name}"),
            WeightSource::Procedural => "procedural".into(),
        }
    }
}

impl TryFrom<String> for WeightSource {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        Ok(WeightSource::parse(&s))
    }
}

impl WeightSource {
    pub fn parse(s: &str) -> Self {
        if s == "procedural" {
            WeightSource::Procedural
        } else if let Some(name) = s.strip_prefix("registry:") {
            WeightSource::Registry(name.to_string())
        } else {
            WeightSource::Path(PathBuf::from(s))
        }
    }

    /// Local directory or file for this source; `None` for procedural weights.
    pub fn resolve(&self) -> Result<Option<PathBuf>> {
        match self {
            WeightSource::Procedural => Ok(None),
            WeightSource::Path(p) => Ok(Some(p.clone())),
            WeightSource::Registry(name) => {
                let dir = std::env::var_os(WEIGHTS_DIR_ENV).ok_or_else(|| {
                    Error::Config(format!(
                        "weight archive {name:?} requested but {WEIGHTS_DIR_ENV} is not set"
                    ))
                })?;
                Ok(Some(PathBuf::from(dir).join(name)))
            }
        }
    }

    /// Path of the safetensors file for this source.
    pub fn safetensors_file(&self) -> Result<Option<PathBuf>> {
        Ok(self.resolve()?.map(|p| {
            if p.is_dir() {
                p.join("model.safetensors")
            } else {
                p
            }
        }))
    }
}

enum Source {
    Safetensors(MmapedSafetensors),
    Procedural,
}

/// Trainable parameters promoted while building an encoder, with their archive names.
#[derive(Clone, Default)]
pub struct VarRegistry(Arc<Mutex<Vec<(String, Var)>>>);

impl VarRegistry {
    pub fn vars(&self) -> Vec<(String, Var)> {
        self.0.lock().expect("registry lock").clone()
    }

    fn push(&self, name: &str, var: Var) {
        self.0.lock().expect("registry lock").push((name.to_string(), var));
    }
}

pub struct ParamBackend {
    source: Source,
    overrides: HashMap<String, Tensor>,
    trainable: Option<VarRegistry>,
}

fn is_frozen_stat(name: &str) -> bool {
    name.ends_with("running_mean") || name.ends_with("running_var")
}

impl ParamBackend {
    pub fn procedural() -> Self {
        ParamBackend {
            source: Source::Procedural,
            overrides: HashMap::new(),
            trainable: None,
        }
    }

    pub fn safetensors(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "weight archive not found"),
            ));
        }
        // SAFETY: the archive is treated as read-only for the lifetime of the mapping.
        let st = unsafe { MmapedSafetensors::new(path) }?;
        Ok(ParamBackend {
            source: Source::Safetensors(st),
            overrides: HashMap::new(),
            trainable: None,
        })
    }

    pub fn from_source(source: &WeightSource) -> Result<Self> {
        match source.safetensors_file()? {
            None => Ok(Self::procedural()),
            Some(path) => Self::safetensors(&path),
        }
    }

    /// Tensors that take precedence over the archive (e.g. fine-tuned weights from a checkpoint).
    pub fn with_overrides(mut self, overrides: HashMap<String, Tensor>) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn trainable(mut self, registry: VarRegistry) -> Self {
        self.trainable = Some(registry);
        self
    }

    pub fn into_var_builder(self, dtype: DType, device: &Device) -> VarBuilder<'static> {
        VarBuilder::from_backend(Box::new(self), dtype, device.clone())
    }

    fn candidates(name: &str) -> Vec<String> {
        let mut out = vec![name.to_string()];
        let legacy = name
            .strip_suffix("LayerNorm.weight")
            .map(|p| format!("{p}LayerNorm.gamma"))
            .or_else(|| name.strip_suffix("LayerNorm.bias").map(|p| format!("{p}LayerNorm.beta")));
        if let Some(l) = &legacy {
            out.push(l.clone());
        }
        let prefixed: Vec<String> = out.iter().map(|n| format!("bert.{n}")).collect();
        out.extend(prefixed);
        out
    }

    fn raw(&self, name: &str, shape: &Shape, dev: &Device) -> candle_core::Result<Tensor> {
        if let Some(t) = self.overrides.get(name) {
            return t.to_device(dev);
        }
        match &self.source {
            Source::Procedural => {
                Tensor::from_vec(procedural_values(name, shape.dims()), shape.clone(), dev)
            }
            Source::Safetensors(st) => {
                for candidate in Self::candidates(name) {
                    if let Ok(t) = st.load(&candidate, dev) {
                        return Ok(t);
                    }
                }
                Err(candle_core::Error::CannotFindTensor {
                    path: name.to_string(),
                }
                .bt())
            }
        }
    }
}

impl SimpleBackend for ParamBackend {
    fn get(
        &self,
        s: Shape,
        name: &str,
        _h: candle_nn::Init,
        dtype: DType,
        dev: &Device,
    ) -> candle_core::Result<Tensor> {
        let t = self.raw(name, &s, dev)?;
        if t.shape() != &s {
            return Err(candle_core::Error::UnexpectedShape {
                msg: format!("shape mismatch for {name}"),
                expected: s,
                got: t.shape().clone(),
            }
            .bt());
        }
        let t = t.to_dtype(dtype)?;
        match &self.trainable {
            Some(registry) if !is_frozen_stat(name) => {
                let var = Var::from_tensor(&t)?;
                registry.push(name, var.clone());
                Ok(var.as_tensor().clone())
            }
            _ => Ok(t),
        }
    }

    fn get_unchecked(&self, name: &str, dtype: DType, dev: &Device) -> candle_core::Result<Tensor> {
        match (&self.source, self.overrides.get(name)) {
            (_, Some(t)) => t.to_device(dev)?.to_dtype(dtype),
            (Source::Safetensors(st), None) => st.load(name, dev)?.to_dtype(dtype),
            (Source::Procedural, None) => Err(candle_core::Error::Msg(format!(
                "procedural weights need a shape for {name}"
            ))),
        }
    }

    fn contains_tensor(&self, name: &str) -> bool {
        match &self.source {
            Source::Procedural => true,
            Source::Safetensors(st) => {
                self.overrides.contains_key(name)
                    || Self::candidates(name).iter().any(|c| st.get(c).is_ok())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procedural_values_are_stable_and_shaped() {
        let a = procedural_values("layer.weight", &[4, 3]);
        assert_eq!(a, procedural_values("layer.weight", &[4, 3]));
        assert_ne!(a, procedural_values("layer2.weight", &[4, 3]));
        let bound = (6.0f32 / 3.0).sqrt();
        assert!(a.iter().all(|v| v.abs() <= bound));
        assert!(procedural_values("bn.running_var", &[16]).iter().all(|&v| (1.0..1.5).contains(&v)));
        assert!(procedural_values("ln.weight", &[16]).iter().all(|&v| (0.9..1.1).contains(&v)));
    }

    #[test]
    fn splitmix_reference_value() {
        // first output of splitmix64 seeded at 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn weight_source_string_forms() {
        assert_eq!(WeightSource::parse("procedural"), WeightSource::Procedural);
        assert_eq!(
            WeightSource::parse("registry:densenet121"),
            WeightSource::Registry("densenet121".into())
        );
        assert_eq!(String::from(WeightSource::Path("/w/a.safetensors".into())), "/w/a.safetensors");
    }

    #[test]
    fn trainable_backend_records_vars_but_not_running_stats() {
        let registry = VarRegistry::default();
        let vb = ParamBackend::procedural()
            .trainable(registry.clone())
            .into_var_builder(DType::F32, &Device::Cpu);
        vb.get((2, 2), "lin.weight").unwrap();
        vb.get(2, "bn.running_mean").unwrap();
        let names: Vec<_> = registry.vars().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["lin.weight"]);
    }
}
