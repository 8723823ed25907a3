//! Binary feature cache: magic `STFE1`, a length-prefixed JSON header
//! echoing the DSP config and tensor shape, then the row-major
//! little-endian f32 tensor.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{DspConfig, FeatureTensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"STFE1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureCacheHeader {
    pub config: DspConfig,
    pub channels: usize,
    pub n_mels: usize,
    pub frames: usize,
}

pub fn write_features(path: &Path, config: &DspConfig, tensor: &FeatureTensor) -> Result<()> {
    let header = FeatureCacheHeader {
        config: config.clone(),
        channels: tensor.channels,
        n_mels: tensor.n_mels,
        frames: tensor.frames,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(5 + 4 + json.len() + tensor.values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in &tensor.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<(FeatureCacheHeader, FeatureTensor)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Invalid(format!("{}: {}", path.display(), msg));
    if bytes.len() < 9 || &bytes[..5] != MAGIC {
        return Err(bad("not a feature cache (bad magic)"));
    }
    let json_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    if bytes.len() < 9 + json_len {
        return Err(bad("truncated header"));
    }
    let header: FeatureCacheHeader = serde_json::from_slice(&bytes[9..9 + json_len])?;
    let expected = header.channels * header.n_mels * header.frames;
    let data = &bytes[9 + json_len..];
    if data.len() != expected * 4 {
        return Err(bad(&format!(
            "tensor payload is {} bytes, expected {}",
            data.len(),
            expected * 4
        )));
    }
    let values: Vec<f32> = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((
        header.clone(),
        FeatureTensor {
            channels: header.channels,
            n_mels: header.n_mels,
            frames: header.frames,
            values,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.stfe");
        let config = DspConfig::default();
        let tensor = FeatureTensor {
            channels: 2,
            n_mels: 4,
            frames: 3,
            values: (0..24).map(|v| v as f32 * 0.5).collect(),
        };
        write_features(&path, &config, &tensor).unwrap();
        let (header, back) = read_features(&path).unwrap();
        assert_eq!(header.config, config);
        assert_eq!(back, tensor);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.stfe");
        std::fs::write(&path, b"NOPE!").unwrap();
        assert!(read_features(&path).is_err());
    }
}
