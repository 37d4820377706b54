//! Model checkpoints: versioned binary file with a JSON config echo and
//! every named parameter array, bit-stable across save/load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{DigError, Result};
use crate::model::config::ModelConfig;
use crate::nn::params::{Init, ParamStore};

const MAGIC: &[u8; 4] = b"DGCK";
const VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, store: &ParamStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_u64(&mut w, store.seed())?;
    let cfg_json = serde_json::to_vec(cfg)?;
    write_u32(&mut w, cfg_json.len() as u32)?;
    w.write_all(&cfg_json)?;
    write_u32(&mut w, store.len() as u32)?;
    for i in 0..store.len() {
        let name = store.name_at(i).as_bytes();
        write_u32(&mut w, name.len() as u32)?;
        w.write_all(name)?;
        write_u32(&mut w, store.is_no_decay(i) as u32)?;
        let arr = store.value_at(i);
        write_u32(&mut w, arr.ndim() as u32)?;
        for &d in arr.shape() {
            write_u32(&mut w, d as u32)?;
        }
        let mut buf = Vec::with_capacity(arr.len() * 8);
        for v in arr.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ParamStore)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DigError::Checkpoint(format!("{}: not a model checkpoint", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(DigError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let seed = read_u64(&mut r)?;
    let cfg_len = read_u32(&mut r)? as usize;
    let mut cfg_buf = vec![0u8; cfg_len];
    r.read_exact(&mut cfg_buf)?;
    let cfg: ModelConfig = serde_json::from_slice(&cfg_buf)?;
    let count = read_u32(&mut r)? as usize;
    let mut store = ParamStore::new(seed);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf)
            .map_err(|e| DigError::Checkpoint(format!("bad parameter name: {e}")))?;
        let no_decay = read_u32(&mut r)? != 0;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf)?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        let arr = ArrayD::from_shape_vec(IxDyn(&shape), data)
            .map_err(|e| DigError::Checkpoint(format!("{name}: {e}")))?;
        store.register(&name, &shape, Init::Zeros);
        store.set(&name, arr);
        if no_decay {
            store.mark_no_decay(&name);
        }
    }
    Ok((cfg, store))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::net::register_params;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig::tiny();
        let mut store = ParamStore::new(42);
        register_params(&mut store, &cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &cfg, &store).unwrap();
        let (cfg2, store2) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(store.len(), store2.len());
        for i in 0..store.len() {
            assert_eq!(store.name_at(i), store2.name_at(i));
            assert_eq!(store.value_at(i), store2.value_at(i), "param {}", store.name_at(i));
            assert_eq!(store.is_no_decay(i), store2.is_no_decay(i));
        }
        assert_eq!(store.seed(), store2.seed());
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(DigError::Checkpoint(_))));
    }
}
