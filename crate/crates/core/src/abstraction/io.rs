//! Binary model files.
//!
//! Layout: magic, `u32` version, `u32` header length, JSON header with the
//! config and its digest, little-endian tables, then the SHA-256 of all
//! preceding bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_grid_sets, AbstractionConfig, Label, SymbolicModel, SymbolicState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SIRSETC\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    digest: String,
    config: AbstractionConfig,
    states: u32,
    pairs: u32,
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of the canonical JSON encoding of a config.
pub fn config_digest(config: &AbstractionConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    let mut h = Sha256::new();
    h.update(MODEL_FORMAT_VERSION.to_le_bytes());
    h.update(&json);
    to_hex(&h.finalize())
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_list(buf: &mut Vec<u8>, list: &[u32]) {
    put_u32(buf, list.len() as u32);
    for &v in list {
        put_u32(buf, v);
    }
}

pub fn save_model(model: &SymbolicModel, path: &Path) -> Result<()> {
    let header = Header {
        digest: config_digest(&model.config),
        config: model.config.clone(),
        states: model.states.len() as u32,
        pairs: model.num_pairs() as u32,
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(1 << 20);
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, MODEL_FORMAT_VERSION);
    put_u32(&mut buf, json.len() as u32);
    buf.extend_from_slice(&json);
    for (idx, x) in model.states.iter().enumerate() {
        buf.extend_from_slice(&x.n.to_le_bytes());
        buf.extend_from_slice(&x.m.to_le_bytes());
        let flags = model.init[idx] as u8 | (model.safe[idx] as u8) << 1 | (model.target[idx] as u8) << 2;
        buf.push(flags);
        for p in 0..model.num_pairs() {
            put_list(&mut buf, &model.trans[idx][p]);
            buf.push(model.label_lf[idx][p] as u8);
        }
        if model.init[idx] {
            for p in 0..model.num_pairs() {
                put_list(&mut buf, &model.trans0[idx][p]);
                buf.push(model.label_l[idx][p].code());
            }
        }
    }
    let sum = Sha256::digest(&buf);
    buf.extend_from_slice(&sum);
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptModel("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn list(&mut self, bound: u32) -> Result<Vec<u32>> {
        let n = self.u32()?;
        if n > bound {
            return Err(Error::CorruptModel("successor list too long".into()));
        }
        (0..n)
            .map(|_| {
                let v = self.u32()?;
                if v >= bound {
                    return Err(Error::CorruptModel(format!("state index {v} out of range")));
                }
                Ok(v)
            })
            .collect()
    }
}

/// Load a model; with `expected` set, reject files built from another config.
pub fn load_model(path: &Path, expected: Option<&AbstractionConfig>) -> Result<SymbolicModel> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() + 8 + 32 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::CorruptModel("missing magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::CorruptModel("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 12 };
    let hlen = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?)
        .map_err(|e| Error::CorruptModel(format!("header: {e}")))?;
    if header.digest != config_digest(&header.config) {
        return Err(Error::CorruptModel("header digest does not match its config".into()));
    }
    if let Some(cfg) = expected {
        let want = config_digest(cfg);
        if want != header.digest {
            return Err(Error::StaleModel(format!(
                "model digest {} does not match configuration digest {want}",
                header.digest
            )));
        }
    }
    let config = header.config;
    let sets = build_grid_sets(&config.bounds, &config.grid)?;
    let n_states = header.states;
    let n_pairs = header.pairs as usize;
    if n_states as usize != sets.states.len() || n_pairs != config.params.u_levels.len() * config.thresholds.len() {
        return Err(Error::CorruptModel("table sizes disagree with the config".into()));
    }
    let mut trans = Vec::with_capacity(sets.states.len());
    let mut trans0 = Vec::with_capacity(sets.states.len());
    let mut label_l = Vec::with_capacity(sets.states.len());
    let mut label_lf = Vec::with_capacity(sets.states.len());
    for &x in &sets.states {
        let stored = SymbolicState::new(r.i32()?, r.i32()?);
        if stored != x {
            return Err(Error::CorruptModel(format!("unexpected state {stored:?}, wanted {x:?}")));
        }
        let flags = r.u8()?;
        let init = flags & 1 != 0;
        if init != sets.init_states.contains(&x)
            || (flags & 2 != 0) != sets.safe_states.contains(&x)
            || (flags & 4 != 0) != sets.target_states.contains(&x)
        {
            return Err(Error::CorruptModel(format!("set flags of {x:?} disagree with the config")));
        }
        let mut t = Vec::with_capacity(n_pairs);
        let mut lf = Vec::with_capacity(n_pairs);
        for _ in 0..n_pairs {
            t.push(r.list(n_states)?);
            lf.push(r.u8()? != 0);
        }
        let mut t0 = Vec::new();
        let mut ll = Vec::new();
        if init {
            for _ in 0..n_pairs {
                t0.push(r.list(n_states)?);
                ll.push(Label::from_code(r.u8()?).ok_or_else(|| Error::CorruptModel("bad label code".into()))?);
            }
        }
        trans.push(t);
        trans0.push(t0);
        label_l.push(ll);
        label_lf.push(lf);
    }
    if r.pos != body.len() {
        return Err(Error::CorruptModel("trailing bytes".into()));
    }
    Ok(SymbolicModel::assemble(config, &sets, trans, trans0, label_l, label_lf))
}
