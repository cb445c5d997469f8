//! Little-endian tensor file format.
//!
//! ```text
//! "TCT1" | rank: u32 | extents: u32 * rank | dtype: u8 | values
//! ```
//!
//! `dtype` 0 stores `f64`, 1 stores `f32` (lossy, opt-in).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TCT1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DType {
    #[default]
    F64,
    F32,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F64 => 0,
            DType::F32 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F64),
            1 => Ok(DType::F32),
            other => Err(Error::Format {
                what: "tensor",
                detail: format!("unknown dtype code {other}"),
            }),
        }
    }
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "tensor",
        detail: detail.into(),
    }
}

pub fn write_tensor_to<W: Write>(w: &mut W, t: &Tensor, dtype: DType) -> Result<()> {
    w.write_all(MAGIC)?;
    let rank = u32::try_from(t.rank()).map_err(|_| bad("rank overflows u32"))?;
    w.write_all(&rank.to_le_bytes())?;
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| bad("extent overflows u32"))?;
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&[dtype.code()])?;
    match dtype {
        DType::F64 => {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        DType::F32 => {
            for &v in t.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tensor_from<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let rank = read_u32(r)? as usize;
    if rank > 16 {
        return Err(bad(format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(r)? as usize);
    }
    let mut code = [0u8; 1];
    r.read_exact(&mut code)?;
    let dtype = DType::from_code(code[0])?;
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    match dtype {
        DType::F64 => {
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
        }
        DType::F32 => {
            let mut b = [0u8; 4];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                data.push(f32::from_le_bytes(b) as f64);
            }
        }
    }
    Tensor::new(&shape, data)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor, dtype: DType) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor_to(&mut w, t, dtype)?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor_from(&mut BufReader::new(File::open(path)?))
}
