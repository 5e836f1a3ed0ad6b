//! Binary parameter checkpoints.
//!
//! Layout: 4-byte magic `IEMC`, one version byte, u32 record count, then per
//! record: u32 name length + UTF-8 name, u8 rank, u64 dims, raw little-endian
//! f64 values. Round-trips are bit-exact.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Parameter;

const MAGIC: &[u8; 4] = b"IEMC";
const VERSION: u8 = 1;

#[derive(Debug)]
pub enum CheckpointError {
    Io(io::Error),
    /// File is not a checkpoint or has an unsupported version.
    Format(String),
    /// Checkpoint disagrees with the model being loaded into.
    Mismatch(String),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io(e) => write!(f, "checkpoint io error: {e}"),
            CheckpointError::Format(m) => write!(f, "bad checkpoint: {m}"),
            CheckpointError::Mismatch(m) => write!(f, "checkpoint mismatch: {m}"),
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<io::Error> for CheckpointError {
    fn from(e: io::Error) -> Self {
        CheckpointError::Io(e)
    }
}

/// Write every parameter (name, shape, raw f64 values) to `path`.
pub fn save_checkpoint(params: &[Parameter], path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        let name = p.name().as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let shape = p.tensor().shape();
        w.write_all(&[shape.len() as u8])?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in p.tensor().values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint into an existing parameter set. Every record must match
/// a parameter by name and shape, and every parameter must be covered.
pub fn load_checkpoint(params: &[Parameter], path: &Path) -> Result<(), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Format(format!(
            "magic {magic:?} != {MAGIC:?}"
        )));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != VERSION {
        return Err(CheckpointError::Format(format!(
            "version {} unsupported",
            version[0]
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut loaded = vec![false; params.len()];
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| CheckpointError::Format("non-UTF-8 parameter name".into()))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            shape.push(read_u64(&mut r)? as usize);
        }
        let len: usize = shape.iter().product::<usize>().max(1);
        let mut values = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        let idx = params
            .iter()
            .position(|p| p.name() == name)
            .ok_or_else(|| CheckpointError::Mismatch(format!("unknown parameter `{name}`")))?;
        if params[idx].tensor().shape() != shape.as_slice() {
            return Err(CheckpointError::Mismatch(format!(
                "`{name}` has shape {:?} in model, {shape:?} in checkpoint",
                params[idx].tensor().shape()
            )));
        }
        params[idx].tensor().set_values(&values);
        loaded[idx] = true;
    }
    if let Some(i) = loaded.iter().position(|&l| !l) {
        return Err(CheckpointError::Mismatch(format!(
            "parameter `{}` missing from checkpoint",
            params[i].name()
        )));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;

    #[test]
    fn round_trip_is_bit_exact() {
        let p1 = Parameter::new("a.w", Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 1.5e-300, 4.0, 5.0]).unwrap());
        let p2 = Parameter::new("a.b", Tensor::vector(vec![f64::MIN_POSITIVE, 2.0]).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(&[p1.clone(), p2.clone()], &path).unwrap();

        let q1 = Parameter::new("a.w", Tensor::zeros(2, 3));
        let q2 = Parameter::new("a.b", Tensor::vector(vec![0.0, 0.0]).unwrap());
        load_checkpoint(&[q1.clone(), q2.clone()], &path).unwrap();
        assert_eq!(
            p1.tensor().values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            q1.tensor().values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(p2.tensor().values(), q2.tensor().values());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = Parameter::new("w", Tensor::zeros(2, 2));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(&[p], &path).unwrap();
        let q = Parameter::new("w", Tensor::zeros(3, 2));
        let err = load_checkpoint(&[q], &path).unwrap_err();
        assert!(matches!(err, CheckpointError::Mismatch(_)));
    }
}
