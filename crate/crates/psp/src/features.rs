//! Binary feature files.
//!
//! Layout, little-endian: `b"AVEF"`, version `u16`, then `u32` fields `T`,
//! `N`, `d_v`, `d_a`, `C`; the visual payload (`T*N*d_v` `f32`, ordered
//! segment, cell, channel), the audio payload (`T*d_a` `f32`), the full labels
//! (`T*C` `f32`), and a CRC-32 of the three payloads.

use std::fs;
use std::path::Path;

use psp_core::data::VideoSample;

use crate::error::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"AVEF";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 5 * 4;

/// Serializes a sample. The video id is not stored; it comes from the file
/// name on load.
pub fn encode(sample: &VideoSample) -> Vec<u8> {
    let payload_len = 4 * (sample.visual.len() + sample.audio.len() + sample.labels_full.len());
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [sample.t, sample.n, sample.d_v, sample.d_a, sample.c] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for x in sample.visual.iter().chain(&sample.audio).chain(&sample.labels_full) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn floats(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

/// Parses a feature file image.
pub fn decode(bytes: &[u8], video_id: &str) -> Result<VideoSample, FormatError> {
    let found = bytes.len() as u64;
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(FormatError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(FormatError::Truncated {
            expected: HEADER_LEN as u64,
            found,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let dims: Vec<u64> = (0..5).map(|i| u32_at(bytes, 6 + 4 * i) as u64).collect();
    let names = ["T", "N", "d_v", "d_a", "C"];
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(FormatError::Header(format!("{} is zero", names[i])));
    }
    let (t, n, d_v, d_a, c) = (dims[0], dims[1], dims[2], dims[3], dims[4]);
    let sizes = || -> Option<([u64; 3], u64)> {
        let counts = [t.checked_mul(n)?.checked_mul(d_v)?, t * d_a, t * c];
        let payload = counts[0].checked_add(counts[1] + counts[2])?.checked_mul(4)?;
        Some((counts, payload))
    };
    let Some((counts, payload)) = sizes() else {
        return Err(FormatError::Header("payload size overflows".into()));
    };
    let expected = payload.saturating_add(HEADER_LEN as u64 + 4);
    if found < expected {
        return Err(FormatError::Truncated { expected, found });
    }
    if found > expected {
        return Err(FormatError::Trailing(found - expected));
    }
    let end = HEADER_LEN + payload as usize;
    let stored = u32_at(bytes, end);
    let computed = crc32fast::hash(&bytes[HEADER_LEN..end]);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    let visual_end = HEADER_LEN + 4 * counts[0] as usize;
    let audio_end = visual_end + 4 * counts[1] as usize;
    let dims = [t, n, d_v, d_a, c].map(|d| d as usize);
    VideoSample::new(
        video_id.to_string(),
        dims,
        floats(&bytes[HEADER_LEN..visual_end]),
        floats(&bytes[visual_end..audio_end]),
        floats(&bytes[audio_end..end]),
    )
    .map_err(|e| FormatError::Content(e.to_string()))
}

/// Video id for a feature file: its name without the extension.
pub fn video_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn save_features(sample: &VideoSample, path: &Path) -> Result<()> {
    fs::write(path, encode(sample)).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path) -> Result<VideoSample> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, &video_id_of(path)).map_err(|k| Error::format(path, k))
}
