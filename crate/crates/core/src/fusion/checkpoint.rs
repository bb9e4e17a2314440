//! Checkpoints are safetensors files. A single metadata entry holds the format tag, version and
//! the JSON model spec; tensors are the head layers plus any fine-tuned encoder weights.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{Tensor, Var};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use super::{BuildOptions, FusionNetwork, ModelSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "memotion-fusion";
pub const CHECKPOINT_VERSION: u32 = 1;
const METADATA_KEY: &str = "memotion";
const TEXT_PREFIX: &str = "text_encoder.";
const IMAGE_PREFIX: &str = "image_encoder.";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    model_spec: ModelSpec,
}

impl FusionNetwork {
    fn named_tensors(&self) -> BTreeMap<String, Tensor> {
        let h = &self.head;
        let mut out = BTreeMap::from([
            ("head.dense.weight".to_string(), h.dense_weight.as_tensor().clone()),
            ("head.dense.bias".to_string(), h.dense_bias.as_tensor().clone()),
            ("head.output.weight".to_string(), h.output_weight.as_tensor().clone()),
            ("head.output.bias".to_string(), h.output_bias.as_tensor().clone()),
        ]);
        for (prefix, vars) in [(TEXT_PREFIX, &self.text_vars), (IMAGE_PREFIX, &self.image_vars)] {
            for (name, var) in vars {
                out.insert(format!("{prefix}{name}"), var.as_tensor().clone());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model_spec: self.spec.clone(),
        };
        let metadata = HashMap::from([(METADATA_KEY.to_string(), serde_json::to_string(&header)?)]);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tensors = self.named_tensors();
        safetensors::serialize_to_file(tensors.iter(), Some(metadata), path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    /// Reads only the model spec stored in a checkpoint.
    pub fn read_spec(path: &Path) -> Result<ModelSpec> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(parse_header(&bytes, path)?.model_spec)
    }

    pub fn load(path: &Path, opts: &BuildOptions) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let header = parse_header(&bytes, path)?;
        let tensors = candle_core::safetensors::load_buffer(&bytes, &opts.device)?;
        let mut text = HashMap::new();
        let mut image = HashMap::new();
        for (name, t) in &tensors {
            if let Some(n) = name.strip_prefix(TEXT_PREFIX) {
                text.insert(n.to_string(), t.clone());
            } else if let Some(n) = name.strip_prefix(IMAGE_PREFIX) {
                image.insert(n.to_string(), t.clone());
            }
        }
        let net = FusionNetwork::assemble(&header.model_spec, opts, text, image)?;
        let h = &net.head;
        for (name, var) in [
            ("head.dense.weight", &h.dense_weight),
            ("head.dense.bias", &h.dense_bias),
            ("head.output.weight", &h.output_weight),
            ("head.output.bias", &h.output_bias),
        ] {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("{}: missing tensor {name}", path.display())))?;
            set_var(var, t, name)?;
        }
        Ok(net)
    }
}

fn set_var(var: &Var, t: &Tensor, name: &str) -> Result<()> {
    if var.dims() != t.dims() {
        return Err(Error::Checkpoint(format!(
            "{name}: stored shape {:?}, model expects {:?}",
            t.dims(),
            var.dims()
        )));
    }
    var.set(&t.to_dtype(var.dtype())?)?;
    Ok(())
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let fail = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let (_, meta) = SafeTensors::read_metadata(bytes).map_err(|e| fail(e.to_string()))?;
    let raw = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get(METADATA_KEY))
        .ok_or_else(|| fail("not a fusion checkpoint (no header)".into()))?;
    let header: Header = serde_json::from_str(raw)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(fail(format!("unknown format {:?}", header.format)));
    }
    if header.version > CHECKPOINT_VERSION {
        return Err(fail(format!(
            "version {} is newer than supported {CHECKPOINT_VERSION}",
            header.version
        )));
    }
    Ok(header)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Subtask;
    use crate::encoders::EncoderSpec;
    use crate::fusion::build_model;
    use candle_core::{DType, Device};

    #[test]
    fn round_trip_preserves_spec_and_predictions() {
        let mut spec = ModelSpec::new(Some(EncoderSpec::toy_text(10)), Some(EncoderSpec::toy_image(4)), Subtask::A);
        spec.hidden_dim = 6;
        let net = build_model(&spec, &BuildOptions { seed: 3, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.safetensors");
        net.save(&path).unwrap();
        assert_eq!(FusionNetwork::read_spec(&path).unwrap(), spec);

        // a different seed would give different head weights unless they are restored
        let loaded = FusionNetwork::load(&path, &BuildOptions { seed: 99, ..Default::default() }).unwrap();
        let x = Tensor::ones((2, 14), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(net.predict_fused(&x, 0.5).unwrap(), loaded.predict_fused(&x, 0.5).unwrap());
    }

    #[test]
    fn foreign_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.safetensors");
        let t = Tensor::zeros(3, DType::F32, &Device::Cpu).unwrap();
        candle_core::safetensors::save(&HashMap::from([("x".to_string(), t)]), &path).unwrap();
        assert!(matches!(FusionNetwork::load(&path, &BuildOptions::default()), Err(Error::Checkpoint(_))));
    }
}
