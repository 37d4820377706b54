//! Clip storage: either a directory of numbered PNG frames or a single packed
//! binary clip file (magic `DGCL`).
//!
//! Packed layout, little-endian:
//! `DGCL` | version u32 | frame_count u32 | height u32 | width u32 | fps f32 |
//! frames as raw RGB bytes, row-major, frame after frame.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array3;

use crate::data::types::RawVideo;
use crate::error::{DigError, Result};

const MAGIC: &[u8; 4] = b"DGCL";
const VERSION: u32 = 1;

pub fn write_packed(path: &Path, video: &RawVideo) -> Result<()> {
    let (h, w) = video.dims();
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&(video.frame_count() as u32).to_le_bytes())?;
    f.write_all(&(h as u32).to_le_bytes())?;
    f.write_all(&(w as u32).to_le_bytes())?;
    f.write_all(&video.fps.to_le_bytes())?;
    for frame in &video.frames {
        let contiguous = frame.as_standard_layout();
        f.write_all(contiguous.as_slice().unwrap())?;
    }
    Ok(())
}

pub fn read_packed(path: &Path) -> Result<RawVideo> {
    let mut f = std::io::BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DigError::Load(format!("{}: not a packed clip file", path.display())));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |f: &mut dyn Read| -> Result<u32> {
        f.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut f)?;
    if version != VERSION {
        return Err(DigError::Load(format!("unsupported clip version {version}")));
    }
    let count = read_u32(&mut f)? as usize;
    let h = read_u32(&mut f)? as usize;
    let w = read_u32(&mut f)? as usize;
    let mut fbuf = [0u8; 4];
    f.read_exact(&mut fbuf)?;
    let fps = f32::from_le_bytes(fbuf);
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let mut data = vec![0u8; h * w * 3];
        f.read_exact(&mut data)?;
        frames.push(Array3::from_shape_vec((h, w, 3), data).unwrap());
    }
    RawVideo::new(frames, fps)
}

pub fn write_frame_dir(dir: &Path, video: &RawVideo) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (h, w) = video.dims();
    for (i, frame) in video.frames.iter().enumerate() {
        let contiguous = frame.as_standard_layout();
        let img = image::RgbImage::from_raw(w as u32, h as u32, contiguous.as_slice().unwrap().to_vec())
            .expect("frame buffer size");
        img.save(dir.join(format!("{i:06}.png")))
            .map_err(|e| DigError::Io(std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    }
    fs::write(dir.join("fps.txt"), format!("{}", video.fps))?;
    Ok(())
}

pub fn read_frame_dir(dir: &Path) -> Result<RawVideo> {
    let mut names: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map_or(false, |e| e == "png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(DigError::Load(format!("{}: no PNG frames found", dir.display())));
    }
    let mut frames = Vec::with_capacity(names.len());
    for p in &names {
        let img = image::open(p)
            .map_err(|e| DigError::Load(format!("{}: {e}", p.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        frames.push(Array3::from_shape_vec((h as usize, w as usize, 3), img.into_raw()).unwrap());
    }
    let fps = fs::read_to_string(dir.join("fps.txt"))
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(21.0);
    RawVideo::new(frames, fps)
}

/// Reads a clip from either storage layout.
pub fn read_clip(path: &Path) -> Result<RawVideo> {
    if path.is_dir() {
        read_frame_dir(path)
    } else {
        read_packed(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::Frame;

    fn toy_video() -> RawVideo {
        let frames = (0..3)
            .map(|i| Frame::from_shape_fn((5, 6, 3), |(y, x, c)| (i * 40 + y * 7 + x * 3 + c) as u8))
            .collect();
        RawVideo::new(frames, 21.0).unwrap()
    }

    #[test]
    fn packed_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.dgcl");
        let v = toy_video();
        write_packed(&path, &v).unwrap();
        let back = read_packed(&path).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn frame_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip");
        let v = toy_video();
        write_frame_dir(&path, &v).unwrap();
        let back = read_clip(&path).unwrap();
        assert_eq!(back, v);
    }
}
