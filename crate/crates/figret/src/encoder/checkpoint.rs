//! Binary model checkpoints.
//!
//! Layout: 8-byte magic `FGRETCK1`, then little-endian header
//! (`feature_dim: u64`, `embed_dim: u64`, `similarity: u8`, `tau: f64`,
//! `version: u64`, `seed: u64`), then the embedding matrix row-major as
//! little-endian f64. Round-trips are bit-exact.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{EncoderConfig, EncoderModel, SimilarityKind};

const MAGIC: &[u8; 8] = b"FGRETCK1";

pub fn save(model: &EncoderModel, path: &Path) -> Result<()> {
    let (config, cols, version, seed) = model.raw_parts();
    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&(config.feature_dim as u64).to_le_bytes())?;
        w.write_all(&(config.embed_dim as u64).to_le_bytes())?;
        w.write_all(&[match config.similarity {
            SimilarityKind::Dot => 0u8,
            SimilarityKind::Cosine => 1u8,
        }])?;
        w.write_all(&config.tau.to_le_bytes())?;
        w.write_all(&version.to_le_bytes())?;
        w.write_all(&seed.to_le_bytes())?;
        let m = config.embed_dim;
        for row in 0..m {
            for col in 0..config.feature_dim {
                w.write_all(&cols[col * m + row].to_le_bytes())?;
            }
        }
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<EncoderModel> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config(format!(
            "{} is not an encoder checkpoint (bad magic)",
            path.display()
        )));
    }
    fn read_u64(r: &mut BufReader<fs::File>) -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    let feature_dim = read_u64(&mut r)? as usize;
    let embed_dim = read_u64(&mut r)? as usize;
    let mut kind_byte = [0u8; 1];
    r.read_exact(&mut kind_byte)?;
    let similarity = match kind_byte[0] {
        0 => SimilarityKind::Dot,
        1 => SimilarityKind::Cosine,
        other => {
            return Err(Error::Config(format!(
                "unknown similarity kind byte {other} in checkpoint"
            )))
        }
    };
    let tau = f64::from_bits(read_u64(&mut r)?);
    let version = read_u64(&mut r)?;
    let seed = read_u64(&mut r)?;

    let config = EncoderConfig {
        feature_dim,
        embed_dim,
        similarity,
        tau,
    };
    config.validate()?;
    let mut cols = vec![0.0f64; feature_dim * embed_dim];
    let mut row_buf = vec![0u8; feature_dim * 8];
    for row in 0..embed_dim {
        r.read_exact(&mut row_buf)?;
        for col in 0..feature_dim {
            let bytes: [u8; 8] = row_buf[col * 8..col * 8 + 8].try_into().unwrap();
            cols[col * embed_dim + row] = f64::from_le_bytes(bytes);
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Config(format!(
            "trailing bytes after matrix in {}",
            path.display()
        )));
    }
    EncoderModel::from_raw_parts(config, cols, version, seed)
}
