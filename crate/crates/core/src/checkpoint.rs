//! Binary checkpoint format for flow models.
//!
//! Layout (all integers little-endian `u32`, floats little-endian `f64`):
//!
//! ```text
//! magic "SWNF" | format version | D | n_layers | n_hidden | hidden sizes...
//! then every parameter tensor in declaration order, each as:
//!   rank | dims... | data
//! ```
//!
//! Masks alternate deterministically and the log-scale clamp is the crate
//! default, so structure plus parameters reconstructs the model exactly.
//! Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{init_model, FlowModel};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SWNF";
const VERSION: u32 = 1;

pub fn save(model: &FlowModel, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_u32(&mut w, model.dim() as u32)?;
    write_u32(&mut w, model.num_layers() as u32)?;
    let hidden = model.hidden_sizes();
    write_u32(&mut w, hidden.len() as u32)?;
    for h in &hidden {
        write_u32(&mut w, *h as u32)?;
    }
    for p in model.params() {
        write_u32(&mut w, p.shape().len() as u32)?;
        for d in p.shape() {
            write_u32(&mut w, *d as u32)?;
        }
        for v in p.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<FlowModel> {
    let file = File::open(path)
        .map_err(|e| Error::Checkpoint(format!("cannot open {}: {}", path.display(), e)))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {}", e)))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {:?}, not a flow checkpoint", magic)));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {}", version)));
    }
    let dim = read_u32(&mut r)? as usize;
    let n_layers = read_u32(&mut r)? as usize;
    let n_hidden = read_u32(&mut r)? as usize;
    if n_hidden == 0 || n_hidden > 64 {
        return Err(Error::Checkpoint(format!("implausible hidden layer count {}", n_hidden)));
    }
    let mut hidden = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden.push(read_u32(&mut r)? as usize);
    }

    // Structure determines every tensor shape; the seed is irrelevant because
    // all parameters are overwritten below.
    let mut model = init_model(dim, n_layers, &hidden, 0)
        .map_err(|e| Error::Checkpoint(format!("invalid model structure: {}", e)))?;

    for p in model.params_mut() {
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        if shape != p.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter shape {:?} does not match expected {:?}",
                shape,
                p.shape()
            )));
        }
        let mut data = vec![0.0f64; p.numel()];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|e| Error::Checkpoint(format!("truncated parameter data: {}", e)))?;
            *v = f64::from_le_bytes(buf);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter in checkpoint".into()));
        }
        *p = Tensor::new(shape, data).expect("validated shape");
    }

    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => Ok(model),
        _ => Err(Error::Checkpoint("trailing bytes after parameters".into())),
    }
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {}", e)))?;
    Ok(u32::from_le_bytes(buf))
}
