//! Binary checkpoint: trained parameters plus the configuration they belong to.
//!
//! Little-endian layout:
//!
//! ```text
//! "MAPC" | version u32 | sha256(config text) [32] | frames_trained u64
//! | config_len u32 | config utf8
//! | n_params u32 | per param: name_len u32, name utf8, ndim u32, dims u32×ndim, f32 × product(dims)
//! ```

use std::path::Path;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

use super::model::ModelParams;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MAPC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: Config,
    pub frames_trained: u64,
    pub params: ParamStore<f32>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated checkpoint while reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn text(&mut self, what: &str) -> Result<&'a str> {
        let len = self.u32(what)? as usize;
        let offset = self.pos as u64;
        std::str::from_utf8(self.take(len, what)?).map_err(|_| Error::Format {
            offset,
            message: format!("{what} is not valid UTF-8"),
        })
    }
}

impl Checkpoint {
    pub fn new(config: Config, frames_trained: u64, model: &ModelParams<f32>) -> Self {
        Self {
            config,
            frames_trained,
            params: model.store.clone(),
        }
    }

    pub fn model(&self) -> Result<ModelParams<f32>> {
        ModelParams::locate(self.params.clone(), &self.config)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.hash());
        out.extend_from_slice(&self.frames_trained.to_le_bytes());
        let text = self.config.to_text();
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "not a checkpoint (bad magic)".into(),
            });
        }
        let version = c.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let hash: [u8; 32] = c.take(32, "config hash")?.try_into().expect("32 bytes");
        let frames_trained = u64::from_le_bytes(c.take(8, "frame counter")?.try_into().expect("8 bytes"));
        let config_offset = c.pos as u64;
        let config = Config::parse(c.text("config")?)?;
        if config.hash() != hash {
            return Err(Error::Format {
                offset: config_offset,
                message: "config hash does not match the embedded config".into(),
            });
        }
        let n = c.u32("parameter count")?;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name = c.text("parameter name")?.to_string();
            let ndim = c.u32("rank")? as usize;
            let shape = (0..ndim)
                .map(|_| c.u32("dimension").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let offset = c.pos as u64;
            let raw = c.take(len.checked_mul(4).ok_or_else(|| Error::Format {
                offset,
                message: "parameter too large".into(),
            })?, "parameter data")?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format {
                    offset,
                    message: format!("parameter {name} holds non-finite values"),
                });
            }
            params.add(name, Tensor::new(shape, data)?);
        }
        if c.pos != bytes.len() {
            return Err(Error::Format {
                offset: c.pos as u64,
                message: "trailing bytes after the last parameter".into(),
            });
        }
        Ok(Self {
            config,
            frames_trained,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
