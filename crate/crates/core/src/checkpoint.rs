//! Binary snapshot format for weights, optimizer state and configuration.
//!
//! Layout, all integers little-endian:
//!   magic "DMN1" | version u32 | config text (u32 length, UTF-8 key=value
//!   lines) | tensor table | optimizer flag u8 | [step u64 | moment table]
//! A tensor table is a u32 entry count followed by, per tensor:
//!   name length u32 | name bytes | dtype u8 (0 = f32) | rank u8 (always 4)
//!   | dims u32 x 4 | raw f32 data.
//! The moment table uses the same layout with names suffixed ".m" / ".v",
//! interleaved per parameter in store order. Round-trips are bit-exact.

use crate::params::ParamStore;
use crate::tensor::{Shape, Tensor};
use crate::training::{AdamState, TrainConfig};
use crate::{Error, Result};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"DMN1";
pub const VERSION: u32 = 1;

/// A fully parsed snapshot.
pub struct Checkpoint {
    pub train: TrainConfig,
    pub store: ParamStore,
    pub optimizer: Option<AdamState>,
}

/// Canonical config text: one key=value per line, keys sorted, trailing
/// newline. Floats print in their shortest round-trip form.
pub fn config_text(cfg: &TrainConfig) -> String {
    let m = &cfg.model;
    format!(
        "augment={}\nbatch={}\nchannels={}\nckpt_every={}\ndynamic={}\nffn_ratio={}\n\
         freq_domain={}\nfreq_loss={}\niters={}\nlambda={}\nlog_every={}\nlr0={}\n\
         n_blocks={}\nn_groups={}\npatch={}\nscale={}\nseed={}\n",
        cfg.augment,
        cfg.batch,
        m.channels,
        cfg.ckpt_every,
        m.dynamic,
        m.ffn_ratio,
        m.freq_domain,
        cfg.freq_loss,
        cfg.iters,
        cfg.lambda,
        cfg.log_every,
        cfg.lr0,
        m.n_blocks,
        m.n_groups,
        cfg.patch,
        m.scale,
        cfg.seed,
    )
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Parse canonical config text back into a TrainConfig. Every key must be
/// present exactly once; unknown keys are rejected.
pub fn parse_config_text(text: &str) -> Result<TrainConfig> {
    use std::collections::BTreeMap;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("config line without '=': '{line}'")))?;
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(bad(format!("duplicate config key '{k}'")));
        }
    }
    fn take<T: std::str::FromStr>(
        map: &mut std::collections::BTreeMap<String, String>,
        key: &str,
    ) -> Result<T> {
        let v = map.remove(key).ok_or_else(|| bad(format!("missing config key '{key}'")))?;
        v.parse().map_err(|_| bad(format!("config key '{key}' has invalid value '{v}'")))
    }
    let cfg = TrainConfig {
        augment: take(&mut map, "augment")?,
        batch: take(&mut map, "batch")?,
        ckpt_every: take(&mut map, "ckpt_every")?,
        freq_loss: take(&mut map, "freq_loss")?,
        iters: take(&mut map, "iters")?,
        lambda: take(&mut map, "lambda")?,
        log_every: take(&mut map, "log_every")?,
        lr0: take(&mut map, "lr0")?,
        patch: take(&mut map, "patch")?,
        seed: take(&mut map, "seed")?,
        model: crate::model::ModelConfig {
            channels: take(&mut map, "channels")?,
            dynamic: take(&mut map, "dynamic")?,
            ffn_ratio: take(&mut map, "ffn_ratio")?,
            freq_domain: take(&mut map, "freq_domain")?,
            n_blocks: take(&mut map, "n_blocks")?,
            n_groups: take(&mut map, "n_groups")?,
            scale: take(&mut map, "scale")?,
        },
    };
    if let Some(key) = map.keys().next() {
        return Err(bad(format!("unknown config key '{key}'")));
    }
    Ok(cfg)
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    push_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    out.push(0); // dtype: f32
    out.push(4); // rank
    let s = t.shape();
    for d in [s.n, s.c, s.h, s.w] {
        push_u32(out, d as u32);
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a snapshot. The store is written in its own order, which for
/// stores built from a model layout is the canonical parameter order.
pub fn to_bytes(cfg: &TrainConfig, store: &ParamStore, opt: Option<&AdamState>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    push_u32(&mut out, VERSION);
    let text = config_text(cfg);
    push_u32(&mut out, text.len() as u32);
    out.extend_from_slice(text.as_bytes());
    push_u32(&mut out, store.len() as u32);
    for (name, t) in store.iter() {
        push_tensor(&mut out, name, t);
    }
    match opt {
        None => out.push(0),
        Some(state) => {
            out.push(1);
            out.extend_from_slice(&state.step_count().to_le_bytes());
            push_u32(&mut out, 2 * store.len() as u32);
            for (i, (name, _)) in store.iter().enumerate() {
                let (m, v) = state.moments(i);
                push_tensor(&mut out, &format!("{name}.m"), m);
                push_tensor(&mut out, &format!("{name}.v"), v);
            }
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(bad(format!(
                "truncated: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("name is not UTF-8"))
    }

    fn tensor(&mut self) -> Result<(String, Tensor)> {
        let name = self.string()?;
        let dtype = self.u8()?;
        if dtype != 0 {
            return Err(bad(format!("tensor '{name}': unsupported dtype tag {dtype}")));
        }
        let rank = self.u8()?;
        if rank != 4 {
            return Err(bad(format!("tensor '{name}': unsupported rank {rank}")));
        }
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            *d = self.u32()? as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let raw = self.take(4 * shape.numel())?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::from_vec(shape, data).map_err(|e| bad(format!("tensor '{name}': {e}")))?;
        Ok((name, t))
    }
}

/// Parse and validate a snapshot. The tensor table must match the layout
/// implied by the embedded config exactly; the first mismatching tensor is
/// named in the error.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(bad("bad magic, not a model snapshot"));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}, expected {VERSION}")));
    }
    let text = cur.string()?;
    let train = parse_config_text(&text)?;
    train.validate().map_err(|e| bad(format!("embedded config is invalid: {e}")))?;
    let layout = train.model.param_layout();
    let count = cur.u32()? as usize;
    if count != layout.len() {
        return Err(bad(format!(
            "config implies {} tensors, file has {count}",
            layout.len()
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for spec in &layout {
        let (name, t) = cur.tensor()?;
        if name != spec.name {
            return Err(bad(format!("expected tensor '{}', found '{name}'", spec.name)));
        }
        if t.shape() != spec.shape {
            return Err(bad(format!(
                "tensor '{name}': expected shape {}, found {}",
                spec.shape,
                t.shape()
            )));
        }
        entries.push((name, t));
    }
    let store = ParamStore::from_entries(entries);
    let optimizer = match cur.u8()? {
        0 => None,
        1 => {
            let step = cur.u64()?;
            let mcount = cur.u32()? as usize;
            if mcount != 2 * layout.len() {
                return Err(bad(format!(
                    "optimizer table should hold {} tensors, file has {mcount}",
                    2 * layout.len()
                )));
            }
            let mut ms = Vec::with_capacity(layout.len());
            let mut vs = Vec::with_capacity(layout.len());
            for spec in &layout {
                for (suffix, dst) in [(".m", &mut ms), (".v", &mut vs)] {
                    let (name, t) = cur.tensor()?;
                    let want = format!("{}{suffix}", spec.name);
                    if name != want {
                        return Err(bad(format!("expected tensor '{want}', found '{name}'")));
                    }
                    if t.shape() != spec.shape {
                        return Err(bad(format!(
                            "tensor '{name}': expected shape {}, found {}",
                            spec.shape,
                            t.shape()
                        )));
                    }
                    dst.push(t);
                }
            }
            Some(AdamState::from_parts(step, ms, vs)?)
        }
        other => return Err(bad(format!("invalid optimizer flag {other}"))),
    };
    if cur.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes after snapshot", bytes.len() - cur.pos)));
    }
    Ok(Checkpoint { train, store, optimizer })
}

pub fn save(path: &Path, cfg: &TrainConfig, store: &ParamStore, opt: Option<&AdamState>) -> Result<()> {
    Ok(std::fs::write(path, to_bytes(cfg, store, opt))?)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_bytes(&std::fs::read(path)?)
}
