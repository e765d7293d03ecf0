//! Binary parameter checkpoints.
//!
//! Layout (little endian): `b"GFCK"`, `u32` version, then until end of file,
//! per entry: `u32` name length, UTF-8 name, `u32` rank, `rank × u64` dims,
//! `f64` values.

use std::io::{Read, Write};

use super::{ParameterSet, Result, Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, params: &ParameterSet) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParameterSet> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(TensorError::Format("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(TensorError::Format(format!("unsupported version {version}")));
    }
    let mut params = ParameterSet::new();
    while cur.pos < bytes.len() {
        let len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|e| TensorError::Format(format!("parameter name: {e}")))?
            .to_string();
        let rank = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
        }
        let t = Tensor::new(shape, data).map_err(|e| TensorError::Format(e.to_string()))?;
        params
            .insert(name, t)
            .map_err(|e| TensorError::Format(e.to_string()))?;
    }
    Ok(params)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(TensorError::Format("unexpected end of checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
