//! Binary checkpoint container: named parameter records plus optimizer state
//! under a distinct section tag. All scalars are stored as little-endian
//! 8-byte floats regardless of the in-memory scalar type.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RVCK";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const SECTION_PARAMS: u32 = 1;
pub const SECTION_OPTIMIZER: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> Entry<T> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<T>) -> Self {
        Entry { name: name.into(), shape, values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config_hash: u64,
    pub params: Vec<Entry<T>>,
    pub optimizer: Vec<Entry<T>>,
}

fn write_entries<W: Write, T: Scalar>(w: &mut W, tag: u32, entries: &[Entry<T>]) -> Result<()> {
    w.write_all(&tag.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for e in entries {
        let name = e.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(e.shape.len() as u32).to_le_bytes())?;
        for &d in &e.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let expected: usize = e.shape.iter().product();
        if expected != e.values.len() {
            return Err(Error::Validation(format!(
                "entry '{}': shape implies {expected} values, found {}",
                e.name,
                e.values.len()
            )));
        }
        for &v in &e.values {
            w.write_all(&v.to_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_checkpoint<W: Write, T: Scalar>(w: &mut W, ckpt: &Checkpoint<T>) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&ckpt.config_hash.to_le_bytes())?;
    write_entries(w, SECTION_PARAMS, &ckpt.params)?;
    if !ckpt.optimizer.is_empty() {
        write_entries(w, SECTION_OPTIMIZER, &ckpt.optimizer)?;
    }
    Ok(())
}

/// Serialize to bytes; also the input of [`checkpoint_hash`].
pub fn checkpoint_bytes<T: Scalar>(ckpt: &Checkpoint<T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ckpt)?;
    Ok(buf)
}

pub fn checkpoint_hash<T: Scalar>(ckpt: &Checkpoint<T>) -> Result<u64> {
    Ok(crate::hash::fnv1a64(&checkpoint_bytes(ckpt)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_entries<R: Read, T: Scalar>(r: &mut R, count: u32) -> Result<Vec<Entry<T>>> {
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("checkpoint entry name is not UTF-8".into()))?;
        let rank = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        let mut fb = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut fb)?;
            values.push(T::from_f64(f64::from_le_bytes(fb)));
        }
        entries.push(Entry { name, shape, values });
    }
    Ok(entries)
}

pub fn read_checkpoint<R: Read, T: Scalar>(r: &mut R) -> Result<Checkpoint<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut hash_bytes = [0u8; 8];
    r.read_exact(&mut hash_bytes)?;
    let config_hash = u64::from_le_bytes(hash_bytes);

    let mut params = Vec::new();
    let mut optimizer = Vec::new();
    loop {
        let mut tag_bytes = [0u8; 4];
        match r.read_exact(&mut tag_bytes) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let tag = u32::from_le_bytes(tag_bytes);
        let count = read_u32(r)?;
        match tag {
            SECTION_PARAMS => params = read_entries(r, count)?,
            SECTION_OPTIMIZER => optimizer = read_entries(r, count)?,
            other => return Err(Error::Format(format!("unknown checkpoint section tag {other}"))),
        }
    }
    Ok(Checkpoint { config_hash, params, optimizer })
}
