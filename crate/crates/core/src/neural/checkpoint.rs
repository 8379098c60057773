//! Named-tensor checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DCPT"  u32 version  u32 count
//! count x { u16 name_len, name bytes, u8 rank, rank x u32 dim, f64 values (row-major) }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{DacatError, Result};
use crate::neural::params::ParamSet;
use crate::neural::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DCPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, params: &ParamSet) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| DacatError::InvalidConfig(format!("tensor name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[t.shape().len() as u8])?;
        for &dim in t.shape() {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => DacatError::Truncated(what.to_string()),
        _ => DacatError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamSet> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "checkpoint header")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(DacatError::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(&mut r, "checkpoint header")?;
    if version != CHECKPOINT_VERSION {
        return Err(DacatError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let count = read_u32(&mut r, "checkpoint header")?;
    let mut set = ParamSet::new();
    for _ in 0..count {
        let mut b2 = [0u8; 2];
        read_exact(&mut r, &mut b2, "tensor name")?;
        let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
        read_exact(&mut r, &mut name, "tensor name")?;
        let name = String::from_utf8(name)
            .map_err(|e| DacatError::InvalidConfig(format!("tensor name is not UTF-8: {e}")))?;
        let mut rank = [0u8; 1];
        read_exact(&mut r, &mut rank, "tensor rank")?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            shape.push(read_u32(&mut r, "tensor shape")? as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        read_exact(&mut r, &mut raw, &format!("values of {name}"))?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        set.insert(name, Tensor::from_vec(&shape, data)?);
    }
    Ok(set)
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ParamSet) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), params)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamSet> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
