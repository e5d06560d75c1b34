//! Embedding checkpoint format: an ASCII magic line, a `key=value` header
//! holding the node count, embedding dimension and the full training
//! config, a blank line, then the layer-0 embeddings as row-major 32-bit
//! little-endian floats.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::config::TrainConfig;
use crate::error::{DgrError, Result};
use crate::linalg::{Mat, Scalar};

pub const CHECKPOINT_MAGIC: &str = "DGRCKPT1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub e0: Mat<f32>,
    pub config: TrainConfig,
}

impl Checkpoint {
    /// Shape check against a target graph/config before reuse.
    pub fn validate_shape(&self, nodes: usize, dim: usize) -> Result<()> {
        if self.e0.rows() != nodes || self.e0.cols() != dim {
            return Err(DgrError::DimensionMismatch(format!(
                "checkpoint holds {}x{} embeddings, expected {nodes}x{dim}",
                self.e0.rows(),
                self.e0.cols()
            )));
        }
        Ok(())
    }
}

/// Write `e0` (downcast to f32) plus the full config.
pub fn checkpoint_save<R: Scalar, P: AsRef<Path>>(
    e0: &Mat<R>,
    config: &TrainConfig,
    path: P,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "n={}", e0.rows())?;
    writeln!(out, "dim={}", e0.cols())?;
    for (k, v) in config.to_kv() {
        writeln!(out, "{k}={v}")?;
    }
    writeln!(out)?;
    for &v in e0.data() {
        out.write_all(&(v.to_f64() as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn checkpoint_load<P: AsRef<Path>>(path: P) -> Result<Checkpoint> {
    let mut reader = BufReader::new(std::fs::File::open(path.as_ref())?);
    let mut magic = String::new();
    reader.read_line(&mut magic)?;
    if magic.trim_end() != CHECKPOINT_MAGIC {
        return Err(DgrError::BadMagic {
            expected: CHECKPOINT_MAGIC.into(),
            found: magic.trim_end().into(),
        });
    }
    let mut n: Option<usize> = None;
    let mut dim: Option<usize> = None;
    let mut config = TrainConfig::default();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(DgrError::Truncated("checkpoint header never ends".into()));
        }
        if line.trim().is_empty() {
            break;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(DgrError::Config(format!(
                "bad checkpoint header line {:?}",
                line.trim_end()
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "n" => {
                n = Some(value.parse().map_err(|_| {
                    DgrError::Config(format!("bad checkpoint node count {value:?}"))
                })?)
            }
            "dim" => {
                dim = Some(value.parse().map_err(|_| {
                    DgrError::Config(format!("bad checkpoint dimension {value:?}"))
                })?)
            }
            _ => {
                if !config.apply_kv(key, value)? {
                    return Err(DgrError::Config(format!(
                        "unknown checkpoint header key {key:?}"
                    )));
                }
            }
        }
    }
    let n = n.ok_or_else(|| DgrError::Truncated("checkpoint header missing n".into()))?;
    let dim = dim.ok_or_else(|| DgrError::Truncated("checkpoint header missing dim".into()))?;

    let mut payload = vec![0u8; n * dim * 4];
    reader.read_exact(&mut payload).map_err(|_| {
        DgrError::Truncated(format!(
            "checkpoint payload shorter than {n}x{dim} f32 values"
        ))
    })?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(DgrError::Config(
            "checkpoint has trailing bytes after the embedding payload".into(),
        ));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(Checkpoint {
        e0: Mat::from_vec(n, dim, data),
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Mat<f32>, TrainConfig) {
        let e0 = Mat::<f32>::from_fn(4, 3, |r, c| (r as f32 - c as f32) * 0.25);
        let config = TrainConfig {
            layers: 2,
            alpha: vec![0.3, 0.1],
            embedding_dim: 3,
            ..TrainConfig::default()
        };
        (e0, config)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (e0, config) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        checkpoint_save(&e0, &config, &path).unwrap();
        let loaded = checkpoint_load(&path).unwrap();
        assert_eq!(loaded.e0, e0);
        assert_eq!(loaded.config, config);
    }

    #[test]
    fn bad_magic_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"WRONG123\nn=1\ndim=1\n\n\x00\x00\x00\x00").unwrap();
        assert!(matches!(
            checkpoint_load(&path),
            Err(DgrError::BadMagic { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_detected() {
        let (e0, config) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        checkpoint_save(&e0, &config, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(checkpoint_load(&cut), Err(DgrError::Truncated(_))));
    }

    #[test]
    fn shape_mismatch_is_a_distinct_error() {
        let (e0, config) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        checkpoint_save(&e0, &config, &path).unwrap();
        let ckpt = checkpoint_load(&path).unwrap();
        assert!(ckpt.validate_shape(4, 3).is_ok());
        assert!(matches!(
            ckpt.validate_shape(5, 3),
            Err(DgrError::DimensionMismatch(_))
        ));
    }
}
