//! `.jexm` checkpoints plus a JSON sidecar holding the vocabulary, answer
//! dictionary and training configuration.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use jex_owsplit::AnswerDictionary;
use jex_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::binio::{put_len, put_u32, read_file, write_file, Reader};
use crate::error::{CoreError, Result};
use crate::model::{ModelParams, Variant};
use crate::training::TrainConfig;
use crate::vocab::Vocabulary;

const MAGIC: &[u8; 4] = b"JEXM";
const VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ModelParams) -> Result<Vec<u8>> {
    let variant = Tensor::scalar(params.variant.code());
    let glimpses = Tensor::scalar(params.glimpses() as f64);
    let mut records: Vec<(&str, &Tensor)> = vec![("variant", &variant), ("glimpses", &glimpses)];
    records.extend(params.named());

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_len(&mut out, records.len())?;
    for (name, t) in records {
        put_len(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_len(&mut out, t.rank())?;
        for &d in t.shape() {
            put_len(&mut out, d)?;
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let count = r.u32()? as usize;
    let mut tensors = HashMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CoreError::Corrupted("tensor name is not UTF-8".into()))?
            .to_owned();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| CoreError::Corrupted(format!("tensor {name:?} is too large")))?;
        let data = r.f64s(n)?;
        let t = Tensor::new(shape, data)?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(CoreError::Corrupted(format!("duplicate tensor {name:?}")));
        }
    }
    r.finish()?;
    let mut scalar = |name: &str| -> Result<f64> {
        let t = tensors
            .remove(name)
            .ok_or_else(|| CoreError::Corrupted(format!("missing {name:?}")))?;
        if !t.is_scalar() {
            return Err(CoreError::Corrupted(format!("{name:?} is not a scalar")));
        }
        Ok(t.data()[0])
    };
    let code = scalar("variant")?;
    let variant = Variant::from_code(code)
        .ok_or_else(|| CoreError::Corrupted(format!("unknown variant code {code}")))?;
    let glimpses = scalar("glimpses")?;
    if !(glimpses >= 1.0 && glimpses.fract() == 0.0) {
        return Err(CoreError::Corrupted(format!(
            "invalid glimpse count {glimpses}"
        )));
    }
    ModelParams::from_named(variant, glimpses as usize, tensors)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    write_file(path, &encode_checkpoint(params)?)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    decode_checkpoint(&read_file(path)?)
}

/// Everything besides the weights needed to run a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub variant: Variant,
    pub vocabulary: Vocabulary,
    pub answers: AnswerDictionary,
    pub config: TrainConfig,
}

/// `<checkpoint>.meta.json`
pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn save_meta(checkpoint: &Path, meta: &ModelMeta) -> Result<()> {
    let mut json = serde_json::to_string_pretty(meta).expect("meta serializes");
    json.push('\n');
    write_file(&meta_path(checkpoint), json.as_bytes())
}

pub fn load_meta(checkpoint: &Path) -> Result<ModelMeta> {
    let path = meta_path(checkpoint);
    let text = fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| CoreError::Json { path, source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> ModelDims {
        ModelDims {
            vocab: 6,
            embed: 3,
            n_q: 4,
            n_v: 5,
            cells: 3,
            t_q: 2,
            t_v: 2,
            t_e: 4,
            glimpses: 2,
            answers: 5,
        }
    }

    #[test]
    fn roundtrip_every_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for v in Variant::ALL {
            let p = ModelParams::random(v, &dims(), &mut rng).unwrap();
            let back = decode_checkpoint(&encode_checkpoint(&p).unwrap()).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn rejects_damage() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ModelParams::random(Variant::Grid, &dims(), &mut rng).unwrap();
        let bytes = encode_checkpoint(&p).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"JEXS");
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(CoreError::BadMagic { .. })
        ));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }

    #[test]
    fn meta_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("model.jexm");
        let meta = ModelMeta {
            variant: Variant::Jex,
            vocabulary: Vocabulary::from_tokens(["a"]),
            answers: AnswerDictionary::new(["yes".to_owned()]),
            config: TrainConfig::toy(),
        };
        save_meta(&ckpt, &meta).unwrap();
        assert!(dir.path().join("model.jexm.meta.json").is_file());
        assert_eq!(load_meta(&ckpt).unwrap(), meta);
    }
}
