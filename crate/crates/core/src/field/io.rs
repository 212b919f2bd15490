//! Field files: one JSON manifest line, then a flat little-endian f64 block of
//! `2 * 3 * (2N+1)^3` values, `(re, im)` per component, modes in the same
//! lexicographic order as in memory.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SpectralVectorField;
use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO3};

pub const FORMAT_VERSION: u32 = 1;
pub const LAYOUT: &str = "lex_kx_ky_kz";
pub const SCALAR: &str = "f64le";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldManifest {
    pub format_version: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub reality_flag: bool,
    pub layout: String,
    pub scalar: String,
}

pub fn write_field<W: Write>(mut w: W, field: &SpectralVectorField) -> Result<()> {
    if !field.is_cubic() {
        return Err(Error::InvalidArgument(
            "only cubic truncations can be written".into(),
        ));
    }
    let manifest = FieldManifest {
        format_version: FORMAT_VERSION,
        n: field.order(),
        reality_flag: field.reality_flag(),
        layout: LAYOUT.into(),
        scalar: SCALAR.into(),
    };
    let line = serde_json::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(field.len() * 48);
    for v in field.coeffs() {
        for z in v {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_field<R: Read>(r: R) -> Result<SpectralVectorField> {
    let mut reader = BufReader::new(r);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing manifest line".into()));
    }
    line.pop();
    let manifest: FieldManifest =
        serde_json::from_slice(&line).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    if manifest.layout != LAYOUT || manifest.scalar != SCALAR {
        return Err(Error::Format(format!(
            "unsupported layout {:?} / scalar {:?}",
            manifest.layout, manifest.scalar
        )));
    }
    let n = manifest.n;
    let modes = (2 * n + 1).pow(3);
    let mut bytes = vec![0u8; modes * 48];
    reader
        .read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated data block: {e}")))?;
    let mut extra = [0u8; 1];
    if reader.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after data block".into()));
    }
    let mut coeffs = vec![ZERO3; modes];
    let mut it = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    for v in coeffs.iter_mut() {
        for z in v.iter_mut() {
            let re = it.next().unwrap();
            let im = it.next().unwrap();
            *z = C64::new(re, im);
        }
    }
    SpectralVectorField::from_coeffs([n, n, n], coeffs, manifest.reality_flag)
}

pub fn save_field(path: impl AsRef<Path>, field: &SpectralVectorField) -> Result<()> {
    write_field(BufWriter::new(File::create(path)?), field)
}

pub fn load_field(path: impl AsRef<Path>) -> Result<SpectralVectorField> {
    read_field(File::open(path)?)
}
