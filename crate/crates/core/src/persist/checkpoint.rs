//! Single-file model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MSBRIDG1"  u32 version
//! u32 data_dim  u32 time_dim  u32 domain_dim  u32 num_domains
//! u32 n_hidden  u32 width × n_hidden
//! f32 ema_rate
//! (u32 len, utf-8 bytes) × num_domains        domain names
//! u64 n  f32 × n                              parameters
//! u64 n  f32 × n                              EMA parameters
//! u32 crc32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, VectorFieldModel};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MSBRIDG1";
pub const FORMAT_VERSION: u32 = 1;

/// A model together with the names of the domains its labels index.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: VectorFieldModel,
    pub domain_names: Vec<String>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Contract(format!("{v} does not fit a u32 header field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_floats(out: &mut Vec<u8>, tensors: &[Tensor]) {
    let n: usize = tensors.iter().map(Tensor::len).sum();
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_checkpoint(model: &VectorFieldModel, domain_names: &[String]) -> Result<Vec<u8>> {
    let spec = model.spec();
    if domain_names.len() != spec.num_domains {
        return Err(Error::Contract(format!(
            "{} domain names for a model with {} domains",
            domain_names.len(),
            spec.num_domains
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [spec.data_dim, spec.time_dim, spec.domain_dim, spec.num_domains, spec.hidden.len()] {
        put_u32(&mut out, v)?;
    }
    for &w in &spec.hidden {
        put_u32(&mut out, w)?;
    }
    out.extend_from_slice(&model.ema_rate.to_le_bytes());
    for name in domain_names {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
    }
    put_floats(&mut out, model.params());
    put_floats(&mut out, model.ema_params());
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Corrupt(format!(
                "length error: file ends at byte {} while reading {what} at offset {}",
                self.bytes.len(),
                self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        Ok(self.u32(what)? as usize)
    }

    fn floats(&mut self, expected: usize, what: &str) -> Result<Vec<f32>> {
        let at = self.pos;
        let n = u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes"));
        if n != expected as u64 {
            return Err(Error::Schema(format!(
                "{what} at offset {at} declares {n} values, topology needs {expected}"
            )));
        }
        let raw = self.take(4 * expected, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

fn split_tensors(flat: Vec<f32>, layout: &[(String, Vec<usize>)]) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(layout.len());
    let mut off = 0;
    for (_, shape) in layout {
        let n: usize = shape.iter().product();
        out.push(Tensor::new(shape.clone(), flat[off..off + n].to_vec())?);
        off += n;
    }
    Ok(out)
}

fn read_header(r: &mut Reader<'_>) -> Result<(ModelSpec, f32, Vec<String>)> {
    let data_dim = r.usize("data_dim")?;
    let time_dim = r.usize("time_dim")?;
    let domain_dim = r.usize("domain_dim")?;
    let num_domains = r.usize("num_domains")?;
    let n_hidden = r.usize("hidden layer count")?;
    let hidden = (0..n_hidden).map(|_| r.usize("hidden width")).collect::<Result<Vec<_>>>()?;
    let ema_rate = f32::from_le_bytes(r.take(4, "ema_rate")?.try_into().expect("4 bytes"));
    let mut names = Vec::new();
    for _ in 0..num_domains {
        let len = r.usize("domain name length")?;
        let at = r.pos;
        let raw = r.take(len, "domain name")?;
        names.push(
            String::from_utf8(raw.to_vec())
                .map_err(|_| Error::Corrupt(format!("domain name at offset {at} is not UTF-8")))?,
        );
    }
    let spec = ModelSpec {
        data_dim,
        hidden,
        time_dim,
        domain_dim,
        num_domains,
    };
    Ok((spec, ema_rate, names))
}

/// Decodes a checkpoint; with `expected`, the stored topology must match it exactly.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&ModelSpec>) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint format version {version}, this build reads version {FORMAT_VERSION}"
        )));
    }
    let (spec, ema_rate, domain_names) = read_header(&mut r)?;
    let layout = spec.param_layout();
    // saturating so a damaged header cannot overflow before the length check rejects it
    let total = layout
        .iter()
        .map(|(_, s)| s.iter().fold(1usize, |a, &b| a.saturating_mul(b)))
        .fold(0usize, usize::saturating_add);
    let want_len = total.saturating_mul(8).saturating_add(r.pos + 20);
    if bytes.len() != want_len {
        return Err(Error::Corrupt(format!(
            "length error: topology implies {want_len} bytes, file has {}",
            bytes.len()
        )));
    }
    let body = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body..].try_into().expect("4 bytes"));
    let crc = crc32fast::hash(&bytes[..body]);
    if crc != stored {
        return Err(Error::Corrupt(format!(
            "CRC mismatch over bytes 0..{body}: stored {stored:08x} at offset {body}, computed {crc:08x}"
        )));
    }

    spec.validate().map_err(|e| Error::Schema(e.to_string()))?;
    if let Some(want) = expected {
        if *want != spec {
            return Err(Error::Schema(format!("checkpoint topology {spec:?} does not match expected {want:?}")));
        }
    }
    let params = r.floats(total, "parameters")?;
    let ema = r.floats(total, "EMA parameters")?;
    let model = VectorFieldModel::from_parts(
        spec,
        split_tensors(params, &layout)?,
        split_tensors(ema, &layout)?,
        ema_rate,
    )?;
    Ok(Checkpoint { model, domain_names })
}

pub fn save_checkpoint(model: &VectorFieldModel, domain_names: &[String], path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model, domain_names)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected: Option<&ModelSpec>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, expected)
}
