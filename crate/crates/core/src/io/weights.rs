//! Model weights file: magic `STDK1`, a length-prefixed JSON header echoing
//! the configuration, then named tensors in sorted-name order, each as
//! (name length, name, rank, extents, little-endian f32 data).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{ModelConfig, Normalization, PitchSource};
use crate::dsp::DspConfig;
use crate::error::{Error, Result};
use crate::nn::{LossConfig, Tensor};

const MAGIC: &[u8; 5] = b"STDK1";

/// Everything needed to rebuild and run the detector, minus the tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsHeader {
    pub model: ModelConfig,
    pub dsp: DspConfig,
    pub pitch_source: PitchSource,
    pub loss: LossConfig,
    pub seed: u64,
}

/// A loaded weights file.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub header: WeightsHeader,
    pub tensors: BTreeMap<String, Tensor<f32>>,
}

impl SavedModel {
    /// The feature normalization stored alongside the weights.
    pub fn normalization(&self) -> Result<Normalization> {
        let mean = self
            .tensors
            .get("norm.mean")
            .ok_or_else(|| Error::Config("weights file missing 'norm.mean'".into()))?;
        let std = self
            .tensors
            .get("norm.std")
            .ok_or_else(|| Error::Config("weights file missing 'norm.std'".into()))?;
        Ok(Normalization {
            mean: mean.data().to_vec(),
            std: std.data().to_vec(),
        })
    }
}

/// Write a weights file. Tensors are sorted by name regardless of the
/// order they are passed in.
pub fn save_model(
    path: &Path,
    header: &WeightsHeader,
    tensors: &[(String, &Tensor<f32>)],
) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    let mut sorted: Vec<&(String, &Tensor<f32>)> = tensors.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (name, tensor) in sorted {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &e in tensor.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Invalid(format!("{}: {}", path.display(), msg));
    if bytes.len() < 9 || &bytes[..5] != MAGIC {
        return Err(bad("not a weights file (bad magic)".into()));
    }
    struct Cursor<'a> {
        bytes: &'a [u8],
        pos: usize,
        path: &'a Path,
    }
    impl<'a> Cursor<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8]> {
            if self.pos + n > self.bytes.len() {
                return Err(Error::Invalid(format!(
                    "{}: truncated at byte {}",
                    self.path.display(),
                    self.pos
                )));
            }
            let s = &self.bytes[self.pos..self.pos + n];
            self.pos += n;
            Ok(s)
        }
        fn u32(&mut self) -> Result<usize> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
        }
    }
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 5,
        path,
    };
    let json_len = cur.u32()?;
    let header: WeightsHeader = serde_json::from_slice(cur.take(json_len)?)?;
    let mut tensors = BTreeMap::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u32()?;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|e| bad(format!("tensor name not UTF-8: {e}")))?;
        let rank = cur.u32()?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()?);
        }
        let len: usize = shape.iter().product();
        let data: Vec<f32> = cur
            .take(len * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.insert(name, Tensor::from_vec(shape, data));
    }
    Ok(SavedModel { header, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::build_model;

    #[test]
    fn round_trip_preserves_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.stdk");
        let config = ModelConfig::default();
        let params = build_model(&config, 11).unwrap();
        let norm = Normalization::identity(64);
        let header = WeightsHeader {
            model: config.clone(),
            dsp: DspConfig::default(),
            pitch_source: PitchSource::None,
            loss: LossConfig::default(),
            seed: 11,
        };
        let mean = Tensor::from_vec(vec![64], norm.mean.clone());
        let std = Tensor::from_vec(vec![64], norm.std.clone());
        let mut named: Vec<(String, &Tensor<f32>)> = params
            .named_tensors()
            .into_iter()
            .collect();
        named.push(("norm.mean".into(), &mean));
        named.push(("norm.std".into(), &std));
        save_model(&path, &header, &named).unwrap();

        let saved = load_model(&path).unwrap();
        assert_eq!(saved.header.seed, 11);
        let rebuilt = crate::detector::CrnnParams::from_tensor_map(&saved.header.model, |n| {
            saved.tensors.get(n).cloned()
        })
        .unwrap();
        assert_eq!(rebuilt, params);
        assert_eq!(saved.normalization().unwrap(), norm);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.stdk");
        std::fs::write(&path, b"garbage").unwrap();
        assert!(load_model(&path).is_err());
    }
}
