//! Binary containers for fused spectrogram tensors and model checkpoints.
//!
//! Both formats are little-endian with a four-byte magic and a `u16`
//! version so stale files fail loudly instead of decoding as garbage.
//!
//! Spectrogram stack (`.mspc`): magic `MSPC`, version, `u32` channels,
//! `u32` mel bands, `u32` frames, then `channels * n_mels * n_frames`
//! `f32` values in channel-major order.
//!
//! Checkpoint (`.sern`): magic `SERN`, version, `u32`-length JSON
//! architecture header, `u32` tensor count, then per tensor a `u16`-length
//! name, a role byte (0 trainable, 1 buffer), a `u32` rank, the `u32`
//! dimensions, and the `f32` values. Load rebuilds the architecture and
//! requires the file to cover every model tensor with matching shapes.

use crate::FormatError;
use psent_core::dsp::MelSpectrogram;
use psent_core::label::SpectroStack;
use psent_core::nn::{ArchConfig, SEResNet18, TensorRole};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

const MSPC_MAGIC: &[u8; 4] = b"MSPC";
const SERN_MAGIC: &[u8; 4] = b"SERN";
const VERSION: u16 = 1;

struct Reader<'a> {
    path: &'a Path,
    buf: Vec<u8>,
    at: usize,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path, role: &'static str) -> Result<Self, FormatError> {
        if !path.exists() {
            return Err(FormatError::Missing {
                role,
                path: path.to_path_buf(),
            });
        }
        let mut buf = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| FormatError::io(path, e))?;
        Ok(Self { path, buf, at: 0 })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8], FormatError> {
        if self.at + n > self.buf.len() {
            return Err(FormatError::corrupt(
                self.path,
                format!("truncated while reading {what}"),
            ));
        }
        let slice = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u16(&mut self, what: &str) -> Result<u16, FormatError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, FormatError> {
        let b = self.take(n * 4, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn magic(&mut self, expect: &[u8; 4]) -> Result<(), FormatError> {
        let got: [u8; 4] = self.take(4, "magic")?.try_into().expect("length checked");
        if &got != expect {
            return Err(FormatError::corrupt(
                self.path,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&got),
                    String::from_utf8_lossy(expect)
                ),
            ));
        }
        let v = self.u16("version")?;
        if v != VERSION {
            return Err(FormatError::corrupt(
                self.path,
                format!("unsupported version {v}"),
            ));
        }
        Ok(())
    }

    fn finish(self) -> Result<(), FormatError> {
        if self.at != self.buf.len() {
            return Err(FormatError::corrupt(
                self.path,
                format!("{} trailing bytes", self.buf.len() - self.at),
            ));
        }
        Ok(())
    }
}

/// Write a fused spectrogram stack.
pub fn save_stack(path: &Path, stack: &SpectroStack) -> Result<(), FormatError> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| FormatError::io(path, e))?);
    let to_io = |e: std::io::Error| FormatError::io(path, e);
    w.write_all(MSPC_MAGIC).map_err(to_io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(to_io)?;
    w.write_all(&(stack.channels() as u32).to_le_bytes())
        .map_err(to_io)?;
    w.write_all(&(stack.n_mels() as u32).to_le_bytes())
        .map_err(to_io)?;
    w.write_all(&(stack.n_frames() as u32).to_le_bytes())
        .map_err(to_io)?;
    for v in stack.values() {
        w.write_all(&v.to_le_bytes()).map_err(to_io)?;
    }
    w.flush().map_err(to_io)
}

/// Read a fused spectrogram stack.
pub fn load_stack(path: &Path) -> Result<SpectroStack, FormatError> {
    let mut r = Reader::open(path, "spectrogram stack")?;
    r.magic(MSPC_MAGIC)?;
    let channels = r.u32("channel count")? as usize;
    let n_mels = r.u32("mel band count")? as usize;
    let n_frames = r.u32("frame count")? as usize;
    if channels == 0 || n_mels == 0 || n_frames == 0 {
        return Err(FormatError::corrupt(path, "empty tensor dimensions"));
    }
    let plane = n_mels * n_frames;
    let values = r.f32s(channels * plane, "tensor values")?;
    r.finish()?;
    let spectra: Vec<MelSpectrogram> = values
        .chunks_exact(plane)
        .map(|c| MelSpectrogram {
            n_mels,
            n_frames,
            values: c.to_vec(),
        })
        .collect();
    psent_core::label::fuse(&spectra).map_err(|e| FormatError::invalid(path, e.to_string()))
}

/// JSON architecture header inside a checkpoint.
#[derive(Serialize, Deserialize)]
struct ArchHeader {
    in_channels: usize,
    widths: [usize; 4],
    se_ratio: usize,
    classes: usize,
}

/// Write a checkpoint. Takes the model mutably because tensor traversal
/// hands out mutable views; values are not modified.
pub fn save_checkpoint(path: &Path, model: &mut SEResNet18<f32>) -> Result<(), FormatError> {
    let cfg = model.config().clone();
    let header = ArchHeader {
        in_channels: cfg.in_channels,
        widths: cfg.widths,
        se_ratio: cfg.se_ratio,
        classes: cfg.classes,
    };
    let header_json = serde_json::to_vec(&header).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;

    let tensors = model.tensors_mut();
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| FormatError::io(path, e))?);
    let to_io = |e: std::io::Error| FormatError::io(path, e);
    w.write_all(SERN_MAGIC).map_err(to_io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(to_io)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())
        .map_err(to_io)?;
    w.write_all(&header_json).map_err(to_io)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())
        .map_err(to_io)?;
    for t in &tensors {
        let name = t.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes()).map_err(to_io)?;
        w.write_all(name).map_err(to_io)?;
        let role = match t.role {
            TensorRole::Trainable => 0u8,
            TensorRole::Buffer => 1u8,
        };
        w.write_all(&[role]).map_err(to_io)?;
        w.write_all(&(t.param.dims().len() as u32).to_le_bytes())
            .map_err(to_io)?;
        for &d in t.param.dims() {
            w.write_all(&(d as u32).to_le_bytes()).map_err(to_io)?;
        }
        for &v in t.param.values() {
            w.write_all(&v.to_le_bytes()).map_err(to_io)?;
        }
    }
    w.flush().map_err(to_io)
}

struct StoredTensor {
    name: String,
    dims: Vec<usize>,
    values: Vec<f32>,
}

fn read_tensors(path: &Path) -> Result<(ArchConfig, Vec<StoredTensor>), FormatError> {
    let mut r = Reader::open(path, "model checkpoint")?;
    r.magic(SERN_MAGIC)?;
    let header_len = r.u32("architecture header length")? as usize;
    let header: ArchHeader = serde_json::from_slice(r.take(header_len, "architecture header")?)
        .map_err(|e| FormatError::corrupt(path, format!("bad architecture header: {e}")))?;
    let cfg = ArchConfig {
        in_channels: header.in_channels,
        widths: header.widths,
        se_ratio: header.se_ratio,
        classes: header.classes,
    };
    let n_tensors = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = r.u16("tensor name length")? as usize;
        let name = String::from_utf8(r.take(name_len, "tensor name")?.to_vec())
            .map_err(|_| FormatError::corrupt(path, "tensor name is not UTF-8"))?;
        let _role = r.take(1, "tensor role")?[0];
        let rank = r.u32("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("tensor dimension")? as usize);
        }
        let len: usize = dims.iter().product();
        let values = r.f32s(len, &format!("values of {name}"))?;
        tensors.push(StoredTensor { name, dims, values });
    }
    r.finish()?;
    Ok((cfg, tensors))
}

/// Read a checkpoint back into a model. Every model tensor must be present
/// with matching dimensions, and the file must contain nothing else.
pub fn load_checkpoint(path: &Path) -> Result<SEResNet18<f32>, FormatError> {
    let (cfg, stored) = read_tensors(path)?;
    let mut model =
        SEResNet18::<f32>::new(&cfg, 0).map_err(|e| FormatError::invalid(path, e.to_string()))?;
    fill_model(path, &mut model, &stored, false)?;
    Ok(model)
}

/// Build a model with `in_channels` inputs from a checkpoint that may have
/// been trained with a different channel count. All tensors except the stem
/// convolution are copied bitwise; on a channel mismatch the stem is
/// reinitialized from `seed` (the transfer recipe for reusing a trained
/// backbone on a new sensor subset).
pub fn init_from_checkpoint(
    path: &Path,
    in_channels: usize,
    seed: u64,
) -> Result<SEResNet18<f32>, FormatError> {
    let (mut cfg, stored) = read_tensors(path)?;
    let same_stem = cfg.in_channels == in_channels;
    cfg.in_channels = in_channels;
    let mut model =
        SEResNet18::<f32>::new(&cfg, 0).map_err(|e| FormatError::invalid(path, e.to_string()))?;
    fill_model(path, &mut model, &stored, !same_stem)?;
    if !same_stem {
        model.reinit_stem(seed);
    }
    Ok(model)
}

fn fill_model(
    path: &Path,
    model: &mut SEResNet18<f32>,
    stored: &[StoredTensor],
    skip_stem_conv: bool,
) -> Result<(), FormatError> {
    let mut targets = model.tensors_mut();
    if stored.len() != targets.len() {
        return Err(FormatError::invalid(
            path,
            format!(
                "checkpoint has {} tensors, model needs {}",
                stored.len(),
                targets.len()
            ),
        ));
    }
    for t in &mut targets {
        if skip_stem_conv && t.name == "stem.conv.weight" {
            continue;
        }
        let s = stored
            .iter()
            .find(|s| s.name == t.name)
            .ok_or_else(|| FormatError::invalid(path, format!("missing tensor {}", t.name)))?;
        if s.dims != t.param.dims() {
            return Err(FormatError::invalid(
                path,
                format!(
                    "tensor {} has dims {:?}, model needs {:?}",
                    t.name,
                    s.dims,
                    t.param.dims()
                ),
            ));
        }
        t.param.values_mut().copy_from_slice(&s.values);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use psent_core::dsp::{mel_spectrogram, MelParams};
    use psent_core::label::fuse;
    use psent_core::nn::Tensor4;
    use psent_core::rng::SeedRng;

    fn sample_stack() -> SpectroStack {
        let mut rng = SeedRng::new(3);
        let params = MelParams {
            n_mels: 16,
            hop: 256,
            ..MelParams::default()
        };
        let window: Vec<f32> = (0..4000).map(|_| rng.normal() as f32).collect();
        let a = mel_spectrogram(&window, &params).unwrap();
        let b = mel_spectrogram(&window[..].iter().map(|x| x * 0.5).collect::<Vec<_>>(), &params)
            .unwrap();
        fuse(&[a, b]).unwrap()
    }

    #[test]
    fn stack_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.mspc");
        let stack = sample_stack();
        save_stack(&path, &stack).unwrap();
        let back = load_stack(&path).unwrap();
        assert_eq!(back.channels(), stack.channels());
        assert_eq!(back.n_mels(), stack.n_mels());
        assert_eq!(back.n_frames(), stack.n_frames());
        assert_eq!(back.values(), stack.values());
    }

    #[test]
    fn truncated_stack_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.mspc");
        save_stack(&path, &sample_stack()).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_stack(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sern");
        let cfg = ArchConfig {
            in_channels: 2,
            widths: [4, 8, 8, 16],
            se_ratio: 4,
            classes: 2,
        };
        let mut model = SEResNet18::<f32>::new(&cfg, 99).unwrap();
        save_checkpoint(&path, &mut model).unwrap();
        let mut back = load_checkpoint(&path).unwrap();
        assert_eq!(back.config(), model.config());
        let mut a = model.tensors_mut();
        let b = back.tensors_mut();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter_mut().zip(b) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.param.values(), y.param.values());
        }
        let x = Tensor4::<f32>::zeros(1, 2, 32, 30);
        let la = model.forward_eval(&x).unwrap();
        let lb = load_checkpoint(&path).unwrap().forward_eval(&x).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn transfer_reinits_only_the_stem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sern");
        let cfg = ArchConfig {
            in_channels: 1,
            widths: [4, 8, 8, 16],
            se_ratio: 4,
            classes: 2,
        };
        let mut model = SEResNet18::<f32>::new(&cfg, 7).unwrap();
        save_checkpoint(&path, &mut model).unwrap();
        let mut wide = init_from_checkpoint(&path, 3, 55).unwrap();
        assert_eq!(wide.config().in_channels, 3);
        let mut src = model.tensors_mut();
        let dst = wide.tensors_mut();
        for (s, d) in src.iter_mut().zip(dst) {
            assert_eq!(s.name, d.name);
            if s.name == "stem.conv.weight" {
                assert_eq!(d.param.dims()[1], 3);
            } else {
                assert_eq!(s.param.values(), d.param.values());
            }
        }
    }

    #[test]
    fn same_channel_transfer_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sern");
        let cfg = ArchConfig {
            in_channels: 2,
            widths: [4, 8, 8, 16],
            se_ratio: 4,
            classes: 2,
        };
        let mut model = SEResNet18::<f32>::new(&cfg, 7).unwrap();
        save_checkpoint(&path, &mut model).unwrap();
        let mut same = init_from_checkpoint(&path, 2, 999).unwrap();
        let mut src = model.tensors_mut();
        let dst = same.tensors_mut();
        for (s, d) in src.iter_mut().zip(dst) {
            assert_eq!(s.param.values(), d.param.values());
        }
    }

    #[test]
    fn missing_checkpoint_is_reported_by_role() {
        let err = load_checkpoint(Path::new("/nonexistent/m.sern")).unwrap_err();
        assert!(err.to_string().contains("model checkpoint"));
    }
}
