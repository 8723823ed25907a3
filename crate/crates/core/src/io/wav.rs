//! Minimal RIFF WAV reader/writer.
//!
//! Reads PCM 16-bit and IEEE float 32-bit files; multichannel audio is
//! averaged down to mono. Writing emits PCM 16-bit mono, which is all the
//! synthetic corpus needs.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Header-level description of a WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub sample_rate: u32,
    pub channels: u16,
    /// Per-channel sample frames in the data chunk.
    pub num_frames: u64,
}

impl WavInfo {
    pub fn duration_s(&self) -> f64 {
        self.num_frames as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleFormat {
    PcmI16,
    IeeeF32,
}

struct Chunks<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Iterator for Chunks<'a> {
    type Item = ([u8; 4], &'a [u8]);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos + 8 > self.data.len() {
            return None;
        }
        let id: [u8; 4] = self.data[self.pos..self.pos + 4].try_into().unwrap();
        let len = u32::from_le_bytes(self.data[self.pos + 4..self.pos + 8].try_into().unwrap())
            as usize;
        let body_start = self.pos + 8;
        let body_end = (body_start + len).min(self.data.len());
        // Chunks are word-aligned.
        self.pos = body_start + len + (len & 1);
        Some((id, &self.data[body_start..body_end]))
    }
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<(WavInfo, SampleFormat, usize, usize)> {
    let bad = |msg: &str| Error::Audio(format!("{}: {}", path.display(), msg));
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<(usize, usize)> = None;
    for (id, body) in (Chunks {
        data: bytes,
        pos: 12,
    }) {
        match &id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                let tag = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes([body[4], body[5], body[6], body[7]]);
                let bits = u16::from_le_bytes([body[14], body[15]]);
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => {
                let start = body.as_ptr() as usize - bytes.as_ptr() as usize;
                data = Some((start, body.len()));
            }
            _ => {}
        }
    }
    let (tag, channels, rate, bits) = fmt.ok_or_else(|| bad("missing fmt chunk"))?;
    let (data_start, data_len) = data.ok_or_else(|| bad("missing data chunk"))?;
    if channels == 0 {
        return Err(bad("zero channels"));
    }
    let format = match (tag, bits) {
        (1, 16) => SampleFormat::PcmI16,
        (3, 32) => SampleFormat::IeeeF32,
        _ => {
            return Err(bad(&format!(
                "unsupported encoding (format tag {tag}, {bits} bits); expected PCM 16-bit or IEEE float 32-bit"
            )))
        }
    };
    let bytes_per_sample = (bits / 8) as usize;
    let frame_bytes = bytes_per_sample * channels as usize;
    let num_frames = (data_len / frame_bytes) as u64;
    Ok((
        WavInfo {
            sample_rate: rate,
            channels,
            num_frames,
        },
        format,
        data_start,
        data_len,
    ))
}

/// Read only the header.
pub fn read_info(path: &Path) -> Result<WavInfo> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_header(&bytes, path).map(|(info, ..)| info)
}

/// Read samples as mono f32 (channels averaged), plus the header info.
pub fn read_mono(path: &Path) -> Result<(Vec<f32>, WavInfo)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (info, format, data_start, data_len) = parse_header(&bytes, path)?;
    let ch = info.channels as usize;
    let data = &bytes[data_start..data_start + data_len];
    let mut out = Vec::with_capacity(info.num_frames as usize);
    match format {
        SampleFormat::PcmI16 => {
            for frame in data.chunks_exact(2 * ch) {
                let mut acc = 0.0f64;
                for s in frame.chunks_exact(2) {
                    acc += i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0;
                }
                out.push((acc / ch as f64) as f32);
            }
        }
        SampleFormat::IeeeF32 => {
            for frame in data.chunks_exact(4 * ch) {
                let mut acc = 0.0f64;
                for s in frame.chunks_exact(4) {
                    acc += f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64;
                }
                out.push((acc / ch as f64) as f32);
            }
        }
    }
    Ok((out, info))
}

/// Write mono samples as PCM 16-bit. Values are clamped to [-1, 1].
pub fn write_mono_i16(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}
