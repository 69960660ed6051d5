//! HU voxel volumes in a minimal binary container (`.huv`): magic `HUVL`,
//! `u16` version, three `u32` dimensions, three `f64` spacings in mm, then
//! the `f32` grid slice-major (x fastest).

use crate::FormatError;
use psent_core::eval::HuVolume;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"HUVL";
const VERSION: u16 = 1;

/// Write a volume.
pub fn save_volume(path: &Path, vol: &HuVolume) -> Result<(), FormatError> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| FormatError::io(path, e))?);
    let to_io = |e: std::io::Error| FormatError::io(path, e);
    w.write_all(MAGIC).map_err(to_io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(to_io)?;
    for d in vol.dims() {
        w.write_all(&(d as u32).to_le_bytes()).map_err(to_io)?;
    }
    for s in vol.spacing_mm() {
        w.write_all(&s.to_le_bytes()).map_err(to_io)?;
    }
    for v in vol.values() {
        w.write_all(&v.to_le_bytes()).map_err(to_io)?;
    }
    w.flush().map_err(to_io)
}

/// Read a volume.
pub fn load_volume(path: &Path) -> Result<HuVolume, FormatError> {
    if !path.exists() {
        return Err(FormatError::Missing {
            role: "HU volume",
            path: path.to_path_buf(),
        });
    }
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| FormatError::io(path, e))?;
    let need = 4 + 2 + 12 + 24;
    if buf.len() < need {
        return Err(FormatError::corrupt(path, "truncated header"));
    }
    if &buf[..4] != MAGIC {
        return Err(FormatError::corrupt(path, "bad magic"));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != VERSION {
        return Err(FormatError::corrupt(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let mut at = 6;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = u32::from_le_bytes(buf[at..at + 4].try_into().unwrap()) as usize;
        at += 4;
    }
    let mut spacing = [0.0f64; 3];
    for s in &mut spacing {
        *s = f64::from_le_bytes(buf[at..at + 8].try_into().unwrap());
        at += 8;
    }
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| FormatError::corrupt(path, "dimensions overflow"))?;
    if buf.len() != at + n * 4 {
        return Err(FormatError::corrupt(
            path,
            format!("expected {} grid bytes, found {}", n * 4, buf.len() - at),
        ));
    }
    let values: Vec<f32> = buf[at..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    HuVolume::new(dims, spacing, values).map_err(|e| FormatError::invalid(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use psent_core::rng::SeedRng;

    #[test]
    fn volume_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s1.huv");
        let mut rng = SeedRng::new(5);
        let dims = [8, 6, 4];
        let values: Vec<f32> = (0..8 * 6 * 4)
            .map(|_| 150.0 + 30.0 * rng.normal() as f32)
            .collect();
        let vol = HuVolume::new(dims, [0.5, 0.5, 1.25], values.clone()).unwrap();
        save_volume(&path, &vol).unwrap();
        let back = load_volume(&path).unwrap();
        assert_eq!(back.dims(), dims);
        assert_eq!(back.spacing_mm(), [0.5, 0.5, 1.25]);
        assert_eq!(back.values(), &values[..]);
    }

    #[test]
    fn short_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.huv");
        fs::write(&path, b"HUVL\x01\x00oops").unwrap();
        assert!(load_volume(&path).is_err());
    }
}
