//! The PCF1 binary field format, atomic writes and the on-disk layout of
//! noise enhancements and paracontrolled triples.
//!
//! A PCF1 file is the magic `PCF1`, then little-endian `u32` version, `u32 n`,
//! `f64 μ`, `u64` seed, `u8` kind, and `n²` row-major `f64` samples.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anderson::ParacontrolledTriple;
use crate::besov::DyadicPartition;
use crate::error::{PcfError, Result};
use crate::field::{GridSpec, RealField};
use crate::noise::NoiseEnhancement;
use crate::paracalc::LocalizationParams;

pub const MAGIC: &[u8; 4] = b"PCF1";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Generic = 0,
    Xi = 1,
    Theta = 2,
    Wick = 3,
    U = 4,
    USharp = 5,
}

impl FieldKind {
    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => FieldKind::Generic,
            1 => FieldKind::Xi,
            2 => FieldKind::Theta,
            3 => FieldKind::Wick,
            4 => FieldKind::U,
            5 => FieldKind::USharp,
            t => return Err(PcfError::Format(format!("unknown kind tag {t}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldHeader {
    pub n: usize,
    pub mu: f64,
    pub seed: u64,
    pub kind: FieldKind,
}

pub fn encode_field(field: &RealField, seed: u64, kind: FieldKind) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * field.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(field.grid.n as u32).to_le_bytes());
    out.extend_from_slice(&field.grid.mu.to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    out.push(kind as u8);
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<(FieldHeader, RealField)> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(PcfError::Format("missing PCF1 header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(PcfError::Format(format!("unsupported version {version}")));
    }
    let n = u32_at(8) as usize;
    let mu = f64::from_bits(u64_at(12));
    let seed = u64_at(20);
    let kind = FieldKind::from_tag(bytes[28])?;
    let grid = GridSpec::new(n, mu)?;
    let expect = HEADER_LEN + 8 * n * n;
    if bytes.len() != expect {
        return Err(PcfError::Format(format!("expected {expect} bytes for n = {n}, found {}", bytes.len())));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((FieldHeader { n, mu, seed, kind }, RealField { grid, values }))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, creating the directory if needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| PcfError::Format(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn write_field(path: &Path, field: &RealField, seed: u64, kind: FieldKind) -> Result<()> {
    write_atomic(path, &encode_field(field, seed, kind))
}

pub fn read_field(path: &Path) -> Result<(FieldHeader, RealField)> {
    decode_field(&fs::read(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| PcfError::Format(e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| PcfError::Format(format!("{}: {e}", path.display())))
}

/// `PREFIX.suffix`, keeping any dots already in the prefix.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// Sidecar describing a stored enhancement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSidecar {
    pub n: usize,
    pub mu: f64,
    pub seed: u64,
    pub eps: f64,
    pub renorm_const: f64,
}

/// `PREFIX.xi.pcf`, `PREFIX.theta.pcf`, `PREFIX.wick.pcf` and `PREFIX.json`.
pub fn save_enhancement(prefix: &Path, enh: &NoiseEnhancement) -> Result<()> {
    write_field(&with_suffix(prefix, "xi.pcf"), &enh.xi, enh.seed, FieldKind::Xi)?;
    write_field(&with_suffix(prefix, "theta.pcf"), &enh.theta, enh.seed, FieldKind::Theta)?;
    write_field(&with_suffix(prefix, "wick.pcf"), &enh.wick_area, enh.seed, FieldKind::Wick)?;
    write_json(
        &with_suffix(prefix, "json"),
        &NoiseSidecar {
            n: enh.grid.n,
            mu: enh.grid.mu,
            seed: enh.seed,
            eps: enh.eps,
            renorm_const: enh.renorm_const,
        },
    )
}

/// Strips a trailing `.json` or `.xi.pcf` so either file names the prefix.
pub fn noise_prefix(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    for ext in [".json", ".xi.pcf"] {
        if let Some(p) = s.strip_suffix(ext) {
            return PathBuf::from(p);
        }
    }
    path.to_path_buf()
}

/// Rebuilds the enhancement from the stored `ξ` and constant; `ϑ` and the
/// area are recomputed, so the result is bit-identical to the original.
pub fn load_enhancement(prefix: &Path, mu: Option<f64>) -> Result<(NoiseEnhancement, DyadicPartition)> {
    let side: NoiseSidecar = read_json(&with_suffix(prefix, "json"))?;
    let (h, mut xi) = read_field(&with_suffix(prefix, "xi.pcf"))?;
    if h.kind != FieldKind::Xi || h.n != side.n || h.seed != side.seed {
        return Err(PcfError::Format("noise sidecar does not match the stored xi".into()));
    }
    if h.mu.to_bits() != side.mu.to_bits() {
        return Err(PcfError::Format("noise sidecar mu does not match the stored xi".into()));
    }
    if let Some(mu) = mu {
        if mu.to_bits() != side.mu.to_bits() {
            return Err(PcfError::ConfigValue {
                key: "mu".into(),
                msg: format!("noise file was built with mu = {}", side.mu),
            });
        }
    }
    xi.grid = GridSpec::new(side.n, side.mu)?;
    let part = DyadicPartition::new(xi.grid)?;
    let enh = NoiseEnhancement::from_xi(xi, side.seed, side.eps, side.renorm_const, &part)?;
    Ok((enh, part))
}

/// Sidecar of a stored triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleSidecar {
    #[serde(rename = "L")]
    pub l: i32,
    #[serde(rename = "K")]
    pub k: i32,
    pub enhancement_id: u64,
}

/// `PREFIX.u.pcf`, `PREFIX.remainder.pcf` and `PREFIX.sharp.pcf`.
pub fn save_triple(prefix: &Path, t: &ParacontrolledTriple, seed: u64) -> Result<()> {
    write_field(&with_suffix(prefix, "u.pcf"), &t.u, seed, FieldKind::U)?;
    write_field(&with_suffix(prefix, "remainder.pcf"), &t.remainder, seed, FieldKind::Generic)?;
    write_field(&with_suffix(prefix, "sharp.pcf"), &t.sharp, seed, FieldKind::USharp)
}

/// Reads the stored `u` of a triple; the split is recomputed by the caller.
pub fn load_triple_u(prefix: &Path) -> Result<RealField> {
    let (h, u) = read_field(&with_suffix(prefix, "u.pcf"))?;
    if h.kind != FieldKind::U {
        return Err(PcfError::Format("triple prefix does not hold a u field".into()));
    }
    Ok(u)
}

pub fn triple_sidecar(loc: LocalizationParams, enhancement_id: u64) -> TripleSidecar {
    TripleSidecar {
        l: loc.l,
        k: loc.k,
        enhancement_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{band_limited_field, enhance};

    #[test]
    fn field_round_trip_is_bit_exact() {
        let grid = GridSpec::new(16, 0.7).unwrap();
        let mut f = band_limited_field(grid, 3, 0.5);
        f.values[5] = -0.0;
        f.values[6] = f64::MIN_POSITIVE / 4.0;
        let bytes = encode_field(&f, 42, FieldKind::Theta);
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 256);
        let (h, g) = decode_field(&bytes).unwrap();
        assert_eq!(h, FieldHeader { n: 16, mu: 0.7, seed: 42, kind: FieldKind::Theta });
        assert!(f.values.iter().zip(&g.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corrupt_files_rejected() {
        let f = RealField::zeros(GridSpec::new(8, 1.0).unwrap());
        let bytes = encode_field(&f, 0, FieldKind::Generic);
        assert!(decode_field(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_field(b"PCF2").is_err());
        let mut bad = bytes.clone();
        bad[28] = 9;
        assert!(decode_field(&bad).is_err());
        let mut bad = bytes;
        bad[4] = 2;
        assert!(decode_field(&bad).is_err());
    }

    #[test]
    fn enhancement_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::new(32, 1.0).unwrap();
        let part = DyadicPartition::new(grid).unwrap();
        let enh = enhance(grid, 9, 0.05, &part).unwrap();
        let prefix = dir.path().join("sub/noise");
        save_enhancement(&prefix, &enh).unwrap();
        let (back, _) = load_enhancement(&noise_prefix(&with_suffix(&prefix, "json")), None).unwrap();
        assert_eq!(back.fingerprint(), enh.fingerprint());
        assert_eq!(back.wick_area, enh.wick_area);
        assert!(load_enhancement(&prefix, Some(2.0)).is_err());
        let leftovers = fs::read_dir(dir.path().join("sub")).unwrap().count();
        assert_eq!(leftovers, 4);
    }
}
