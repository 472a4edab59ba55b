//! Binary checkpoint format.
//!
//! ```text
//! b"PSEC"  u32 LE version  u32 LE header length  UTF-8 header  f64 LE values
//! ```
//!
//! The header holds `key = value` lines for the model configuration followed
//! by one `tensor <name> <rows> <cols>` line per tensor, in storage order.
//! Values follow in the same order, row-major.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::model::{GruConfig, HeadKind, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PSEC";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let c = params.config();
    let mut header = format!(
        "input_dim = {}\nhidden_dim = {}\nnum_layers = {}\noutput_dim = {}\nhead = {}\nfeature_shift = {:?}\nfeature_scale = {:?}\n",
        c.input_dim,
        c.hidden_dim,
        c.num_layers,
        c.output_dim,
        c.head.name(),
        c.feature_shift,
        c.feature_scale
    );
    for (name, (r, k)) in c.tensor_shapes() {
        header.push_str(&format!("tensor {name} {r} {k}\n"));
    }
    let mut out = Vec::with_capacity(12 + header.len() + params.parameter_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for t in params.tensors() {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn field<T: std::str::FromStr>(fields: &[(String, String)], key: &str) -> Result<T> {
    let raw = fields
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Format(format!("checkpoint header lacks {key}")))?;
    raw.parse()
        .map_err(|_| Error::Format(format!("checkpoint field {key} has bad value {raw:?}")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let header = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| Error::Format("truncated checkpoint header".into()))?;
    let header = std::str::from_utf8(header).map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))?;

    let mut fields = Vec::new();
    let mut declared = Vec::new();
    for line in header.lines() {
        if let Some(rest) = line.strip_prefix("tensor ") {
            let parts: Vec<&str> = rest.split(' ').collect();
            let dims = match parts.as_slice() {
                [name, r, c] => r.parse::<usize>().ok().zip(c.parse::<usize>().ok()).map(|d| (name.to_string(), d)),
                _ => None,
            };
            declared.push(dims.ok_or_else(|| Error::Format(format!("bad tensor line {line:?}")))?);
        } else if let Some((k, v)) = line.split_once(" = ") {
            fields.push((k.to_string(), v.to_string()));
        } else if !line.is_empty() {
            return Err(Error::Format(format!("bad header line {line:?}")));
        }
    }
    let config = GruConfig {
        input_dim: field(&fields, "input_dim")?,
        hidden_dim: field(&fields, "hidden_dim")?,
        num_layers: field(&fields, "num_layers")?,
        output_dim: field(&fields, "output_dim")?,
        head: HeadKind::parse(&field::<String>(&fields, "head")?).map_err(|e| Error::Format(e.to_string()))?,
        feature_shift: field(&fields, "feature_shift")?,
        feature_scale: field(&fields, "feature_scale")?,
    };
    config.validate().map_err(|e| Error::Format(e.to_string()))?;
    let expected = config.tensor_shapes();
    if declared != expected {
        return Err(Error::Format(
            "tensor table does not match the declared architecture".into(),
        ));
    }
    let mut data = &bytes[12 + header_len..];
    let total: usize = expected.iter().map(|(_, (r, c))| r * c).sum();
    if data.len() != total * 8 {
        return Err(Error::Format(format!(
            "checkpoint holds {} value bytes, expected {}",
            data.len(),
            total * 8
        )));
    }
    let mut tensors = Vec::with_capacity(expected.len());
    for (_, dim) in &expected {
        let n = dim.0 * dim.1;
        let values: Vec<f64> = data[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        data = &data[n * 8..];
        tensors.push(Array2::from_shape_vec(*dim, values).expect("length checked"));
    }
    ModelParams::from_tensors(config, tensors)
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut cfg = GruConfig::snr_predictor(5, 2);
        cfg.feature_shift = -1.0 / 3.0;
        let p = ModelParams::init(cfg, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.psec");
        save_checkpoint(&path, &p).unwrap();
        let q = load_checkpoint(&path).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let p = ModelParams::init(GruConfig::snr_predictor(3, 1), 1).unwrap();
        let good = encode_checkpoint(&p);
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(decode_checkpoint(&bad_magic).is_err());
        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(decode_checkpoint(&bad_version).is_err());
        assert!(decode_checkpoint(&good[..good.len() - 8]).is_err());
        let mut wrong_shape = good.clone();
        let pos = wrong_shape.windows(14).position(|w| w == b"hidden_dim = 3").unwrap();
        wrong_shape[pos + 13] = b'4';
        assert!(decode_checkpoint(&wrong_shape).is_err());
    }
}
