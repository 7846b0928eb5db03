//! Self-describing binary checkpoint: model spec, all parameter tensors as
//! row-major 64-bit reals, the training seed, and the epoch count.
//! Write followed by read is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Head, ModelSpec, Parameters};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BTRKCKP1";

pub fn save_checkpoint(
    path: &Path,
    spec: &ModelSpec,
    params: &Parameters,
    train_seed: u64,
    epochs: u64,
) -> Result<()> {
    spec.validate()?;
    let flat = params.to_flat();
    if flat.len() != spec.num_params() {
        return Err(Error::Shape(
            "parameters do not match spec when saving checkpoint".into(),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let head_tag: u8 = match spec.head {
        Head::Classification { .. } => 0,
        Head::Regression { .. } => 1,
    };
    w.write_all(&[head_tag])?;
    w.write_all(&(spec.head.num_beams() as u64).to_le_bytes())?;
    w.write_all(&(spec.input_dim as u64).to_le_bytes())?;
    w.write_all(&(spec.hidden_dims.len() as u64).to_le_bytes())?;
    for &h in &spec.hidden_dims {
        w.write_all(&(h as u64).to_le_bytes())?;
    }
    w.write_all(&spec.dropout_rate.to_le_bytes())?;
    w.write_all(&train_seed.to_le_bytes())?;
    w.write_all(&epochs.to_le_bytes())?;
    w.write_all(&(flat.len() as u64).to_le_bytes())?;
    for v in &flat {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelSpec, Parameters, u64, u64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Validation(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let head_tag = read_u8(&mut r)?;
    let num_beams = read_u64(&mut r)? as usize;
    let input_dim = read_u64(&mut r)? as usize;
    let n_layers = read_u64(&mut r)? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(Error::Validation("implausible layer count".into()));
    }
    let mut hidden_dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        hidden_dims.push(read_u64(&mut r)? as usize);
    }
    let dropout_rate = read_f64(&mut r)?;
    let train_seed = read_u64(&mut r)?;
    let epochs = read_u64(&mut r)?;
    let head = match head_tag {
        0 => Head::Classification { num_beams },
        1 => Head::Regression { num_beams },
        t => return Err(Error::Validation(format!("unknown head tag {t}"))),
    };
    let spec = ModelSpec::new(input_dim, hidden_dims, dropout_rate, head)?;
    let n = read_u64(&mut r)? as usize;
    if n != spec.num_params() {
        return Err(Error::Validation(format!(
            "checkpoint holds {n} parameters but spec needs {}",
            spec.num_params()
        )));
    }
    let mut flat = Vec::with_capacity(n);
    for _ in 0..n {
        flat.push(read_f64(&mut r)?);
    }
    let params = Parameters::from_flat(&spec, &flat)?;
    Ok((spec, params, train_seed, epochs))
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
