//! The `.drfk` checkpoint container.
//!
//! All integers little-endian:
//!
//! ```text
//! "DRFK"  u32 version (=1)
//! u32 config_len, config text (UTF-8 INI, plus a [state] section)
//! u32 entry_count, then per entry:
//!     u16 name_len, name, u8 dtype (1 = f32), u8 ndim, u32 dims[ndim],
//!     u64 offset (from payload start)
//! u64 payload_len, payload (f32 LE, entries back to back in table order)
//! ```
//!
//! Entries are the model parameters in name order, then `adam.m.<name>`
//! and `adam.v.<name>` for every parameter with optimizer moments.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::TrainState;
use crate::error::{Error, Result};
use crate::io::config::RunConfig;
use crate::network::Model;
use crate::optim::{AdamState, Moments};
use crate::params::ParamStore;
use crate::tensor::{Shape, Tensor};

use super::write_atomic;

pub const MAGIC: &[u8; 4] = b"DRFK";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: ParamStore,
    pub adam: AdamState,
    /// Completed training steps.
    pub step: usize,
}

impl Checkpoint {
    pub fn from_state(config: &RunConfig, state: &TrainState) -> Self {
        Checkpoint {
            config: RunConfig {
                network: state.model.config.clone(),
                ..config.clone()
            },
            params: state.model.params.clone(),
            adam: state.adam.clone(),
            step: state.step,
        }
    }

    pub fn from_model(config: &RunConfig, model: &Model) -> Self {
        Checkpoint {
            config: RunConfig {
                network: model.config.clone(),
                ..config.clone()
            },
            params: model.params.clone(),
            adam: AdamState::default(),
            step: 0,
        }
    }

    pub fn model(&self) -> Result<Model> {
        Model::from_params(self.config.network.clone(), self.params.clone())
    }

    pub fn into_state(self) -> Result<TrainState> {
        Ok(TrainState {
            model: Model::from_params(self.config.network, self.params)?,
            adam: self.adam,
            step: self.step,
        })
    }

    fn config_text(&self) -> String {
        let a = &self.adam;
        format!(
            "{}\n[state]\nstep = {}\nadam_t = {}\nadam_beta1 = {}\nadam_beta2 = {}\nadam_eps = {}\n",
            self.config.to_ini(),
            self.step,
            a.t,
            a.beta1,
            a.beta2,
            a.eps
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut entries: Vec<(String, &Tensor)> = self.params.iter().map(|(k, t)| (k.to_string(), t)).collect();
        for (k, m) in &self.adam.moments {
            entries.push((format!("adam.m.{k}"), &m.m));
        }
        for (k, m) in &self.adam.moments {
            entries.push((format!("adam.v.{k}"), &m.v));
        }

        let text = self.config_text();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for (name, t) in &entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            out.push(4);
            for d in t.shape().dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += 4 * t.len() as u64;
        }
        out.extend_from_slice(&offset.to_le_bytes());
        for (_, t) in &entries {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a DRFK checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version} (expected {VERSION})")));
        }
        let n = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(n)?).map_err(|_| Error::Format("config text is not UTF-8".into()))?;
        let (config, extra) = RunConfig::parse_with(text, &["state"])?;
        let state = |key: &str| -> Result<&str> {
            extra
                .iter()
                .find(|(s, k, _)| s == "state" && k == key)
                .map(|(_, _, v)| v.as_str())
                .ok_or_else(|| Error::Format(format!("checkpoint lacks state.{key}")))
        };
        let num = |key: &str| -> Result<f64> {
            state(key)?
                .parse()
                .map_err(|_| Error::Format(format!("bad state.{key}")))
        };
        let step: usize = state("step")?.parse().map_err(|_| Error::Format("bad state.step".into()))?;
        let adam_t: u64 = state("adam_t")?.parse().map_err(|_| Error::Format("bad state.adam_t".into()))?;

        let count = r.u32()? as usize;
        let mut table = Vec::with_capacity(count);
        let mut expect = 0u64;
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?
                .to_string();
            let dtype = r.u8()?;
            if dtype != DTYPE_F32 {
                return Err(Error::Format(format!("`{name}`: unsupported dtype code {dtype}")));
            }
            let ndim = r.u8()? as usize;
            let dims: Vec<usize> = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let shape = Shape::from_dims(&dims).map_err(|e| Error::Format(format!("`{name}`: {e}")))?;
            let offset = r.u64()?;
            if offset != expect {
                return Err(Error::Format(format!("`{name}`: offset {offset}, expected {expect}")));
            }
            expect += 4 * shape.numel() as u64;
            table.push((name, shape, offset));
        }
        let payload_len = r.u64()?;
        if payload_len != expect {
            return Err(Error::Format(format!("payload length {payload_len} does not match the entry table ({expect})")));
        }
        let payload = r.take(payload_len as usize)?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }

        let mut params = ParamStore::new();
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, shape, offset) in table {
            let start = offset as usize;
            let data: Vec<f32> = payload[start..start + 4 * shape.numel()]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::from_vec(shape, data)?;
            let dup = if let Some(k) = name.strip_prefix("adam.m.") {
                m.insert(k.to_string(), t).is_some()
            } else if let Some(k) = name.strip_prefix("adam.v.") {
                v.insert(k.to_string(), t).is_some()
            } else {
                params.insert(name.clone(), t).is_err()
            };
            if dup {
                return Err(Error::Format(format!("duplicate entry `{name}`")));
            }
        }
        if m.len() != v.len() {
            return Err(Error::Format("optimizer moments are incomplete".into()));
        }
        let mut moments = BTreeMap::new();
        for (k, mm) in m {
            let vv = v
                .remove(&k)
                .ok_or_else(|| Error::Format(format!("missing adam.v.{k}")))?;
            if !params.contains(&k) || mm.shape() != vv.shape() || params.get(&k)?.shape() != mm.shape() {
                return Err(Error::Format(format!("moments of `{k}` do not match a parameter")));
            }
            moments.insert(k, Moments { m: mm, v: vv });
        }
        Ok(Checkpoint {
            config,
            params,
            adam: AdamState {
                beta1: num("adam_beta1")?,
                beta2: num("adam_beta2")?,
                eps: num("adam_eps")?,
                t: adam_t,
                moments,
            },
            step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
