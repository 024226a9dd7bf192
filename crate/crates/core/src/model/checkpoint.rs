//! Binary checkpoint container.
//!
//! ```text
//! "PUGC"  u32 version
//! u32 config length, config text (`key = value` lines)
//! u32 tensor count, then per tensor:
//!     u32 name length, name, u32 rank, rank × u64 extents, f64 values
//! u8 optimizer flag; when 1: u64 step, then first and second moments as
//!     tensor records in parameter order
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{init_params, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};
use crate::train::AdamState;

const MAGIC: &[u8; 4] = b"PUGC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub params: ParamStore,
    pub adam: Option<AdamState>,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    cfg: &ModelConfig,
    params: &ParamStore,
    adam: Option<&AdamState>,
) -> Result<()> {
    let mut buf = Vec::with_capacity(params.scalar_count() * 8 * 3 + 1024);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let text = cfg.to_text();
    put_u32(&mut buf, text.len());
    buf.extend_from_slice(text.as_bytes());
    put_u32(&mut buf, params.len());
    for (name, t) in params.iter() {
        put_record(&mut buf, name, t);
    }
    match adam {
        None => buf.push(0),
        Some(state) => {
            buf.push(1);
            buf.extend_from_slice(&state.step.to_le_bytes());
            for (name, t) in params.iter().map(|(n, _)| n).zip(&state.m) {
                put_record(&mut buf, name, t);
            }
            for (name, t) in params.iter().map(|(n, _)| n).zip(&state.v) {
                put_record(&mut buf, name, t);
            }
        }
    }
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads a checkpoint and checks its tensors against the layout of the
/// configuration stored in it.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let raw = read_raw(path.as_ref())?;
    let cfg = raw.config.clone();
    assemble(raw, &cfg)
}

/// Loads a checkpoint for a specific model configuration; any tensor whose
/// name or shape differs from that layout is an error.
pub fn load_checkpoint_as(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<Checkpoint> {
    let raw = read_raw(path.as_ref())?;
    assemble(raw, cfg)
}

struct Raw {
    config: ModelConfig,
    tensors: Vec<(String, Tensor)>,
    adam: Option<(u64, Vec<(String, Tensor)>, Vec<(String, Tensor)>)>,
}

fn assemble(raw: Raw, cfg: &ModelConfig) -> Result<Checkpoint> {
    let (model, mut params) = init_params(cfg, 0)?;
    fill(&mut params, &raw.tensors)?;
    let adam = match raw.adam {
        None => None,
        Some((step, m, v)) => {
            let mut ms = params.clone();
            let mut vs = params.clone();
            fill(&mut ms, &m)?;
            fill(&mut vs, &v)?;
            Some(AdamState {
                step,
                m: ms.iter().map(|(_, t)| t.clone()).collect(),
                v: vs.iter().map(|(_, t)| t.clone()).collect(),
            })
        }
    };
    Ok(Checkpoint { model, params, adam })
}

fn fill(store: &mut ParamStore, tensors: &[(String, Tensor)]) -> Result<()> {
    if tensors.len() != store.len() {
        return Err(Error::ParamShape {
            name: "<tensor count>".into(),
            expected: vec![store.len()],
            found: vec![tensors.len()],
        });
    }
    let ids: Vec<_> = store.ids().collect();
    for (id, (name, t)) in ids.into_iter().zip(tensors) {
        let expected = store.get(id).shape().to_vec();
        if store.name(id) != name || expected != t.shape() {
            return Err(Error::ParamShape {
                name: format!("{} (file has `{name}`)", store.name(id)),
                expected,
                found: t.shape().to_vec(),
            });
        }
        store.set_values(id, t.data())?;
    }
    Ok(())
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_record(buf: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(buf, name.len());
    buf.extend_from_slice(name.as_bytes());
    put_u32(buf, t.rank());
    for &e in t.shape() {
        buf.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, detail: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated reading {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn text(&mut self, what: &str) -> Result<String> {
        let start = self.pos;
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format {
            offset: start as u64,
            detail: format!("{what} is not UTF-8"),
        })
    }

    fn record(&mut self) -> Result<(String, Tensor)> {
        let name = self.text("tensor name")?;
        let rank = self.u32("tensor rank")?;
        if rank > 3 {
            return Err(self.err(format!("tensor `{name}` has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut count: u64 = 1;
        for _ in 0..rank {
            let e = self.u64("tensor extent")?;
            count = count
                .checked_mul(e)
                .ok_or_else(|| self.err(format!("tensor `{name}` extents overflow")))?;
            shape.push(e as usize);
        }
        let left = (self.bytes.len() - self.pos) as u64;
        if count > left / 8 {
            return Err(self.err(format!(
                "truncated tensor `{name}`: {count} values declared, {left} bytes left"
            )));
        }
        let at = self.pos;
        let raw = self.take(count as usize * 8, "tensor values")?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| Error::Format {
            offset: at as u64,
            detail: format!("tensor `{name}`: {e}"),
        })?;
        Ok((name, t))
    }
}

fn read_raw(path: &Path) -> Result<Raw> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: "not a checkpoint (bad magic)".into(),
        });
    }
    let version = r.u32("version")? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 4,
            detail: format!("unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"),
        });
    }
    let cfg_at = r.pos as u64;
    let text = r.text("config")?;
    let config = ModelConfig::from_text(&text).map_err(|e| Error::Format {
        offset: cfg_at,
        detail: format!("config block: {e}"),
    })?;
    let n = r.u32("tensor count")?;
    let mut tensors = Vec::with_capacity(n.min(4096));
    for _ in 0..n {
        tensors.push(r.record()?);
    }
    let adam = match r.u8("optimizer flag")? {
        0 => None,
        1 => {
            let step = r.u64("optimizer step")?;
            let m = (0..n).map(|_| r.record()).collect::<Result<Vec<_>>>()?;
            let v = (0..n).map(|_| r.record()).collect::<Result<Vec<_>>>()?;
            Some((step, m, v))
        }
        f => return Err(r.err(format!("bad optimizer flag {f}"))),
    };
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Raw { config, tensors, adam })
}
