//! Binary model files.
//!
//! ```text
//! "ITNETMDL"  version:u32
//! repeated until EOF:
//!   name_len:u16 name:utf8  dtype:u8 (0 = f32, 1 = f64)  rank:u8  extents:u32×rank
//!   values: little-endian, row-major
//! ```
//!
//! Trainable tensors are followed by batch-norm running statistics stored
//! as `<layer>.running_mean` / `<layer>.running_var`. The architecture goes
//! into a `key=value` sidecar at `<path>.cfg`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ArchConfig, ItNet, ModelError};
use crate::data::Montage;
use crate::fsio::{put_string, write_atomic, Reader};
use crate::kv::KvDoc;
use crate::tensor::{DType, Real, Tensor};

pub const MAGIC: &[u8; 8] = b"ITNETMDL";
pub const VERSION: u32 = 1;

/// Location of the configuration sidecar for a model file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".cfg");
    path.with_file_name(name)
}

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn put_tensor<T: Real>(out: &mut Vec<u8>, name: &str, shape: &[usize], values: &[T]) {
    put_string(out, name);
    out.push(T::DTYPE.tag());
    out.push(shape.len() as u8);
    for &e in shape {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in values {
        v.write_le(out);
    }
}

/// Serialises all tensors of `model`.
pub fn encode<T: Real>(model: &ItNet<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for p in model.params() {
        put_tensor(&mut out, &p.name, p.value.shape(), p.value.data());
    }
    for n in model.norm_states() {
        let c = n.stats.mean.len();
        put_tensor(&mut out, &format!("{}.running_mean", n.name), &[c], &n.stats.mean);
        put_tensor(&mut out, &format!("{}.running_var", n.name), &[c], &n.stats.var);
    }
    out
}

/// Decodes the tensor entries of a model file as `f64` tensors, in file order.
pub fn decode_entries(bytes: &[u8]) -> Result<Vec<(String, Tensor<f64>)>, ModelError> {
    let mut r = Reader::new(bytes);
    if r.bytes(8) != Some(MAGIC.as_slice()) {
        return Err(ModelError::BadMagic);
    }
    let version = r.u32().ok_or(ModelError::Truncated)?;
    if version != VERSION {
        return Err(ModelError::Version(version));
    }
    let mut out = Vec::new();
    while r.remaining() > 0 {
        let name = r.string().ok_or(ModelError::Truncated)?;
        let tag = r.u8().ok_or(ModelError::Truncated)?;
        let dtype = DType::from_tag(tag).ok_or(ModelError::DType(tag))?;
        let rank = r.u8().ok_or(ModelError::Truncated)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32().ok_or(ModelError::Truncated)? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| ModelError::Format(format!("{name}: extents overflow")))?;
        let nbytes = count
            .checked_mul(dtype.size())
            .ok_or_else(|| ModelError::Format(format!("{name}: extents overflow")))?;
        let raw = r.bytes(nbytes).ok_or(ModelError::Truncated)?;
        let values: Vec<f64> = match dtype {
            DType::Real32 => raw.chunks_exact(4).map(|b| f32::read_le(b) as f64).collect(),
            DType::Real64 => raw.chunks_exact(8).map(f64::read_le).collect(),
        };
        out.push((name, Tensor::new(shape, values)?));
    }
    Ok(out)
}

/// Rebuilds a model for `config` from decoded entries. Every tensor must be
/// present exactly once with the expected shape.
pub fn decode<T: Real>(bytes: &[u8], config: ArchConfig) -> Result<ItNet<T>, ModelError> {
    let mut entries: BTreeMap<String, Tensor<f64>> = BTreeMap::new();
    for (name, t) in decode_entries(bytes)? {
        if entries.insert(name.clone(), t).is_some() {
            return Err(ModelError::Format(format!("duplicate tensor {name:?}")));
        }
    }
    let mut model = ItNet::<T>::build(config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut take = |name: &str, shape: &[usize]| -> Result<Tensor<f64>, ModelError> {
        let t = entries
            .remove(name)
            .ok_or_else(|| ModelError::Format(format!("missing tensor {name:?}")))?;
        if t.shape() != shape {
            return Err(ModelError::Format(format!(
                "tensor {name:?} has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        Ok(t)
    };
    for p in model.params_mut() {
        let shape = p.value.shape().to_vec();
        p.value = take(&p.name, &shape)?.cast();
    }
    for n in model.norm_states_mut() {
        let c = n.stats.mean.len();
        let mean = take(&format!("{}.running_mean", n.name), &[c])?;
        let var = take(&format!("{}.running_var", n.name), &[c])?;
        n.stats.mean = mean.data().iter().map(|&v| T::from_real(v)).collect();
        n.stats.var = var.data().iter().map(|&v| T::from_real(v)).collect();
    }
    if let Some(extra) = entries.keys().next() {
        return Err(ModelError::Format(format!("unknown tensor {extra:?}")));
    }
    Ok(model)
}

/// Sidecar text: architecture plus the montage when one is attached.
pub fn config_text<T: Real>(model: &ItNet<T>) -> String {
    let mut doc = KvDoc::new();
    model.config().write_kv(&mut doc);
    if let Some(m) = model.montage() {
        doc.set("montage.channels", m.names.join(","));
        let xs: Vec<String> = m.xy.iter().map(|p| p[0].to_string()).collect();
        let ys: Vec<String> = m.xy.iter().map(|p| p[1].to_string()).collect();
        doc.set("montage.x", xs.join(","));
        doc.set("montage.y", ys.join(","));
    }
    doc.render()
}

/// Parses a sidecar into the architecture and optional montage.
pub fn parse_config_text(text: &str) -> Result<(ArchConfig, Option<Montage>), ModelError> {
    let doc = KvDoc::parse(text)?;
    let mut r = doc.reader();
    let config = ArchConfig::default().read_kv(&mut r)?;
    let names: Option<Vec<String>> = r.list("montage.channels")?;
    let xs: Option<Vec<f32>> = r.list("montage.x")?;
    let ys: Option<Vec<f32>> = r.list("montage.y")?;
    r.finish()?;
    let montage = match (names, xs, ys) {
        (None, None, None) => None,
        (Some(n), Some(x), Some(y)) if n.len() == x.len() && x.len() == y.len() => {
            Some(Montage::new(n, x.into_iter().zip(y).map(|(a, b)| [a, b]).collect()).unwrap())
        }
        _ => return Err(ModelError::Format("montage.channels, montage.x and montage.y must have equal lengths".into())),
    };
    Ok((config, montage))
}

/// Writes the model file and its sidecar.
pub fn save<T: Real>(model: &ItNet<T>, path: &Path) -> Result<(), ModelError> {
    write_atomic(path, &encode(model)).map_err(|e| io_err(path, e))?;
    let side = sidecar_path(path);
    write_atomic(&side, config_text(model).as_bytes()).map_err(|e| io_err(&side, e))
}

pub fn load<T: Real>(path: &Path) -> Result<ItNet<T>, ModelError> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
    let (config, montage) = parse_config_text(&text)?;
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut model = decode(&bytes, config)?;
    model.set_montage(montage);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ItNet<f32> {
        let cfg = ArchConfig::for_data(4, 64, 2);
        let mut m = ItNet::build(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        m.norm_states_mut()[0].stats.mean[0] = 0.125;
        m.set_montage(Some(Montage::for_channels(4)));
        m
    }

    #[test]
    fn file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.itnetmdl");
        let model = small();
        save(&model, &path).unwrap();
        let back: ItNet<f32> = load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(encode(&back), fs::read(&path).unwrap());
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&small());
        assert_eq!(&bytes[..8], b"ITNETMDL");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), VERSION);
        let name_len = u16::from_le_bytes([bytes[12], bytes[13]]) as usize;
        assert_eq!(&bytes[14..14 + name_len], b"inception.0.temporal.weight");
        assert_eq!(bytes[14 + name_len], 0);
        assert_eq!(bytes[15 + name_len], 3);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode(&small());
        let cfg = ArchConfig::for_data(4, 64, 2);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode::<f32>(&bad, cfg.clone()), Err(ModelError::BadMagic)));
        assert!(matches!(decode::<f32>(&bytes[..bytes.len() - 3], cfg.clone()), Err(ModelError::Truncated)));
        let other = ArchConfig::for_data(5, 64, 2);
        assert!(matches!(decode::<f32>(&bytes, other), Err(ModelError::Format(_))));
    }

    #[test]
    fn loads_into_other_precision() {
        let model = small();
        let wide: ItNet<f64> = decode(&encode(&model), model.config().clone()).unwrap();
        assert_eq!(wide.cast::<f32>().params(), model.params());
    }
}
