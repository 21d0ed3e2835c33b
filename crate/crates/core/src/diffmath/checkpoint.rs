//! Single-file checkpoints.
//!
//! Layout: a UTF-8 manifest terminated by the line `end`, then raw values.
//!
//! ```text
//! polylink-checkpoint 1
//! model main
//! step 812
//! meta hidden_dims 64,32
//! entries 3
//! dec.R 32 32
//! dec.R#m 32 32
//! dec.R#v 32 32
//! end
//! <row-major little-endian f64 values, entry by entry>
//! ```
//!
//! Every parameter is written with its two Adam moments so training can
//! resume exactly. Single-precision stores are widened on write and
//! narrowed on read, which round-trips exactly.

use std::io::Write as _;
use std::path::Path;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &str = "polylink-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: String,
    pub meta: Vec<(String, String)>,
    pub store: ParamStore<T>,
}

impl<T> Checkpoint<T> {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn check_token(s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(Error::Checkpoint(format!("token {s:?} must be non-empty without whitespace")));
    }
    Ok(())
}

pub fn encode<T: Scalar>(model: &str, meta: &[(String, String)], store: &ParamStore<T>) -> Result<Vec<u8>> {
    check_token(model)?;
    let mut head = format!("{MAGIC}\nmodel {model}\nstep {}\n", store.step);
    for (k, v) in meta {
        check_token(k)?;
        check_token(v)?;
        head.push_str(&format!("meta {k} {v}\n"));
    }
    head.push_str(&format!("entries {}\n", 3 * store.len()));
    for e in store.entries() {
        check_token(&e.name)?;
        let (r, c) = e.value.shape();
        for suffix in ["", "#m", "#v"] {
            head.push_str(&format!("{}{suffix} {r} {c}\n", e.name));
        }
    }
    head.push_str("end\n");
    let mut out = head.into_bytes();
    for e in store.entries() {
        for t in [&e.value, &e.m, &e.v] {
            for v in t.data() {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let n = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated manifest"))?;
        pos += n + 1;
        std::str::from_utf8(&rest[..n]).map_err(|_| bad("manifest is not UTF-8"))
    };
    if next_line()? != MAGIC {
        return Err(bad("missing magic line"));
    }
    let model = next_line()?
        .strip_prefix("model ")
        .ok_or_else(|| bad("missing model line"))?
        .to_string();
    let step: u64 = next_line()?
        .strip_prefix("step ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing step line"))?;
    let mut meta = Vec::new();
    let n_entries: usize = loop {
        let line = next_line()?;
        if let Some(kv) = line.strip_prefix("meta ") {
            let (k, v) = kv.split_once(' ').ok_or_else(|| bad("malformed meta line"))?;
            meta.push((k.to_string(), v.to_string()));
        } else if let Some(n) = line.strip_prefix("entries ") {
            break n.parse().map_err(|_| bad("malformed entries line"))?;
        } else {
            return Err(bad("expected meta or entries line"));
        }
    };
    if n_entries % 3 != 0 {
        return Err(bad("entry count is not a multiple of 3"));
    }
    let mut shapes = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        let line = next_line()?;
        let mut it = line.split(' ');
        let (Some(name), Some(r), Some(c), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad("malformed entry line"));
        };
        let r: usize = r.parse().map_err(|_| bad("bad row count"))?;
        let c: usize = c.parse().map_err(|_| bad("bad column count"))?;
        shapes.push((name.to_string(), r, c));
    }
    if next_line()? != "end" {
        return Err(bad("missing end line"));
    }
    let body = &bytes[pos..];
    let total: usize = shapes.iter().map(|(_, r, c)| r * c).sum();
    if body.len() != 8 * total {
        return Err(bad(&format!("expected {} value bytes, found {}", 8 * total, body.len())));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|ch| T::of(f64::from_le_bytes(ch.try_into().expect("8-byte chunk"))));
    let mut take = |r: usize, c: usize| Tensor::from_vec(r, c, values.by_ref().take(r * c).collect());

    let mut store = ParamStore::new();
    for triple in shapes.chunks_exact(3) {
        let (name, r, c) = &triple[0];
        if triple[1].0 != format!("{name}#m") || triple[2].0 != format!("{name}#v") {
            return Err(bad(&format!("moments of {name} missing or out of order")));
        }
        if triple.iter().any(|(_, rr, cc)| (rr, cc) != (r, c)) {
            return Err(bad(&format!("moment shapes of {name} differ")));
        }
        let value = take(*r, *c)?;
        let m = take(*r, *c)?;
        let v = take(*r, *c)?;
        let id = store.insert(name.clone(), value)?;
        let e = &mut store.entries_mut()[id.0];
        e.m = m;
        e.v = v;
    }
    store.step = step;
    Ok(Checkpoint { model, meta, store })
}

pub fn write<T: Scalar>(path: &Path, model: &str, meta: &[(String, String)], store: &ParamStore<T>) -> Result<()> {
    let bytes = encode(model, meta, store)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    if !path.exists() {
        return Err(Error::NoCheckpoint(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
