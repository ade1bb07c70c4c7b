//! Binary checkpoints: `"MSEQ"`, a `u32` version, named tensors, then a CRC32 of
//! everything before it. Integers and payloads are little-endian.
//!
//! Each entry is `u32` name length, name bytes, `u8` dtype tag, `u32` rank,
//! `rank × u32` dims and the values in the entry's dtype.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::{Dtype, Real};
use crate::train::{StateEntry, Trainer};

pub const MAGIC: &[u8; 4] = b"MSEQ";
pub const VERSION: u32 = 1;

pub fn encode(entries: &[StateEntry]) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    out.extend(VERSION.to_le_bytes());
    for e in entries {
        let n: usize = e.dims.iter().product();
        if n != e.data.len() {
            return Err(Error::Shape(format!("entry '{}' has dims {:?} but {} values", e.name, e.dims, e.data.len())));
        }
        out.extend((e.name.len() as u32).to_le_bytes());
        out.extend(e.name.as_bytes());
        out.push(e.dtype.tag());
        out.extend((e.dims.len() as u32).to_le_bytes());
        for &d in &e.dims {
            out.extend((d as u32).to_le_bytes());
        }
        match e.dtype {
            Dtype::F32 => e.data.iter().for_each(|&v| (v as f32).write_le(&mut out)),
            Dtype::F64 => e.data.iter().for_each(|&v| v.write_le(&mut out)),
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend(crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint entry runs past the end".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<StateEntry>> {
    if bytes.len() < 12 {
        return Err(Error::Format(format!("checkpoint of {} bytes is too short", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("checkpoint magic is not MSEQ".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("checkpoint version {version}, this build reads {VERSION}")));
    }
    let mut entries = Vec::new();
    while r.pos < body.len() {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
        let tag = r.take(1)?[0];
        let dtype = Dtype::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown dtype tag {tag} for '{name}'")))?;
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::Format(format!("dims of '{name}' overflow")))?;
        let raw = r.take(n.checked_mul(dtype.size()).ok_or_else(|| Error::Format("payload size overflows".into()))?)?;
        let data = match dtype {
            Dtype::F32 => raw.chunks_exact(4).map(|c| f32::read_le(c) as f64).collect(),
            Dtype::F64 => raw.chunks_exact(8).map(f64::read_le).collect(),
        };
        entries.push(StateEntry { name, dtype, dims, data });
    }
    Ok(entries)
}

pub fn save_entries(path: impl AsRef<Path>, entries: &[StateEntry]) -> Result<()> {
    fs::write(path, encode(entries)?)?;
    Ok(())
}

pub fn load_entries(path: impl AsRef<Path>) -> Result<Vec<StateEntry>> {
    decode(&fs::read(path)?)
}

/// Persists parameters, `c`, running statistics, optimizer moments and progress.
pub fn save_checkpoint<T: Real>(path: impl AsRef<Path>, trainer: &Trainer<T>) -> Result<()> {
    save_entries(path, &trainer.state())
}

/// Restores a trainer built from the same configuration.
pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>, trainer: &mut Trainer<T>) -> Result<()> {
    trainer.load_state(&load_entries(path)?)
}
