//! On-disk store for processed clips.
//!
//! Single-file binary format, little-endian: magic "DGPS", version, record
//! count, then per record the label, rho, xi, miss flag, tensor shape, the
//! 5-channel frame data, and the depth maps as 32-bit floats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array3, Array4};

use crate::data::types::GestureClass;
use crate::error::{DigError, Result};
use crate::preprocess::pipeline::ProcessedClip;

const MAGIC: &[u8; 4] = b"DGPS";
const VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f32(w: &mut impl Write, v: f32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn write_array(w: &mut impl Write, data: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_array(r: &mut impl Read, len: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; len * 4];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn write_store(path: &Path, clips: &[ProcessedClip]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_u32(&mut w, clips.len() as u32)?;
    for clip in clips {
        write_u32(&mut w, clip.label.index() as u32)?;
        write_f32(&mut w, clip.rho)?;
        write_f32(&mut w, clip.xi)?;
        write_u32(&mut w, clip.detector_miss as u32)?;
        let (r, c, h, wd) = clip.frames.dim();
        for d in [r, c, h, wd] {
            write_u32(&mut w, d as u32)?;
        }
        write_array(&mut w, clip.frames.as_slice().expect("contiguous frames"))?;
        write_array(&mut w, clip.depth.as_slice().expect("contiguous depth"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_store(path: &Path) -> Result<Vec<ProcessedClip>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DigError::Load(format!("{}: not a processed-clip store", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(DigError::Load(format!("unsupported clip store version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut clips = Vec::with_capacity(count);
    for i in 0..count {
        let label_idx = read_u32(&mut r)? as usize;
        let label = GestureClass::from_index(label_idx)
            .map_err(|_| DigError::Load(format!("record {i}: bad label index {label_idx}")))?;
        let rho = read_f32(&mut r)?;
        let xi = read_f32(&mut r)?;
        let miss = read_u32(&mut r)? != 0;
        let dims: Vec<usize> = (0..4).map(|_| read_u32(&mut r).map(|v| v as usize)).collect::<Result<_>>()?;
        let (rr, c, h, w) = (dims[0], dims[1], dims[2], dims[3]);
        let frames = read_array(&mut r, rr * c * h * w)?;
        let depth = read_array(&mut r, rr * h * w)?;
        clips.push(ProcessedClip {
            frames: Array4::from_shape_vec((rr, c, h, w), frames)
                .map_err(|e| DigError::Load(format!("record {i}: {e}")))?,
            depth: Array3::from_shape_vec((rr, h, w), depth)
                .map_err(|e| DigError::Load(format!("record {i}: {e}")))?,
            rho,
            xi,
            label,
            detector_miss: miss,
        });
    }
    Ok(clips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array3, Array4};

    fn dummy_clip(seed: f32) -> ProcessedClip {
        ProcessedClip {
            frames: Array4::from_shape_fn((2, 5, 4, 4), |(a, b, c, d)| {
                seed + (a * 100 + b * 10 + c + d) as f32 * 0.01
            }),
            depth: Array3::from_elem((2, 4, 4), 8.0),
            rho: 8.0,
            xi: 0.5 + seed,
            label: GestureClass::Stop,
            detector_miss: seed > 0.0,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clips.bin");
        let clips = vec![dummy_clip(0.0), dummy_clip(1.0)];
        write_store(&path, &clips).unwrap();
        let back = read_store(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in clips.iter().zip(back.iter()) {
            assert_eq!(a.frames, b.frames);
            assert_eq!(a.depth, b.depth);
            assert_eq!(a.rho, b.rho);
            assert_eq!(a.xi, b.xi);
            assert_eq!(a.label, b.label);
            assert_eq!(a.detector_miss, b.detector_miss);
        }
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.bin");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(matches!(read_store(&path), Err(DigError::Load(_))));
    }
}
