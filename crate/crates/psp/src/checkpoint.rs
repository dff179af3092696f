//! Binary checkpoints.
//!
//! Layout, little-endian: `b"PSPC"`, version `u16`, precision `u8`, config
//! text length `u32` and UTF-8 bytes, the 32-byte SHA-256 of that text, the
//! parameter count `u32`, then per parameter: name length `u16`, name,
//! `rows` and `cols` as `u32`, and `rows*cols` `f64` values. A CRC-32 of all
//! preceding bytes closes the file.

use std::fs;
use std::path::Path;

use psp_core::config::ModelConfig;
use psp_core::params::ModelParams;
use psp_core::tensor::{Real, Tensor};
use sha2::{Digest, Sha256};

use crate::error::{Error, FormatError, Result};
use crate::runconfig::{model_from_text, Precision};

pub const MAGIC: [u8; 4] = *b"PSPC";
pub const VERSION: u16 = 1;

/// Trained weights together with the model configuration they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub precision: Precision,
    /// Model-shaping `key = value` lines.
    pub config_text: String,
    pub model: ModelConfig,
    /// Weights widened to `f64`; exact for both precisions.
    pub params: ModelParams<Tensor<f64>>,
}

/// SHA-256 of the model configuration text.
pub fn fingerprint(config_text: &str) -> [u8; 32] {
    Sha256::digest(config_text.as_bytes()).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn new<F: Real>(config_text: String, params: &ModelParams<Tensor<F>>) -> Result<Self> {
        let model = model_from_text(&config_text)?;
        params.check_dims(&model.dims)?;
        let precision = if F::BITS == 64 {
            Precision::F64
        } else {
            Precision::F32
        };
        Ok(Self {
            precision,
            config_text,
            model,
            params: params.cast(),
        })
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        fingerprint(&self.config_text)
    }

    /// Weights in the requested numeric mode.
    pub fn params_as<F: Real>(&self) -> ModelParams<Tensor<F>> {
        self.params.cast()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.precision.bits() as u8);
        out.extend_from_slice(&(self.config_text.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_text.as_bytes());
        out.extend_from_slice(&self.fingerprint());
        let named = self.params.named();
        out.extend_from_slice(&(named.len() as u32).to_le_bytes());
        for (name, t) in named {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < 4 {
            return Err(FormatError::Truncated {
                expected: 4,
                found: bytes.len() as u64,
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        if bytes.len() < 8 {
            return Err(FormatError::Truncated {
                expected: 8,
                found: bytes.len() as u64,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        let mut r = Reader { bytes: body, at: 4 };
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(FormatError::Version(version));
        }
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed });
        }
        let precision = match r.take(1)?[0] {
            32 => Precision::F32,
            64 => Precision::F64,
            p => return Err(FormatError::Header(format!("precision {p}"))),
        };
        let text_len = r.u32()? as usize;
        let config_text = String::from_utf8(r.take(text_len)?.to_vec())
            .map_err(|_| FormatError::Header("config text is not UTF-8".into()))?;
        let stored_fp: [u8; 32] = r.take(32)?.try_into().unwrap();
        if stored_fp != fingerprint(&config_text) {
            return Err(FormatError::Content("config fingerprint mismatch".into()));
        }
        let model =
            model_from_text(&config_text).map_err(|e| FormatError::Content(e.to_string()))?;
        let mut params = ModelParams::<Tensor<f64>>::init(&model.dims, 0)
            .map_err(|e| FormatError::Content(e.to_string()))?;
        let count = r.u32()? as usize;
        let mut slots = params.named_mut();
        if count != slots.len() {
            return Err(FormatError::Content(format!(
                "{count} parameters stored, model has {}",
                slots.len()
            )));
        }
        for (want, slot) in slots.iter_mut() {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = r.take(name_len)?;
            if name != want.as_bytes() {
                return Err(FormatError::Content(format!(
                    "expected parameter {want}, found {}",
                    String::from_utf8_lossy(name)
                )));
            }
            let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
            if [rows, cols] != slot.shape() {
                return Err(FormatError::Content(format!(
                    "parameter {want} has shape {rows}x{cols}, expected {:?}",
                    slot.shape()
                )));
            }
            let raw = r.take(8 * rows * cols)?;
            for (x, b) in slot.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
                *x = f64::from_le_bytes(b.try_into().unwrap());
            }
        }
        drop(slots);
        if r.at != body.len() {
            return Err(FormatError::Trailing((body.len() - r.at) as u64));
        }
        Ok(Self {
            precision,
            config_text,
            model,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|k| Error::format(path, k))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        let end = self.at.checked_add(len).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(FormatError::Truncated {
                expected: (self.at as u64).saturating_add(len as u64 + 4),
                found: self.bytes.len() as u64 + 4,
            });
        };
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
