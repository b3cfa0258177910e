//! On-disk formats: raw rasters, TOML sidecars, 16-bit PNG previews, JSONL manifests.
//!
//! Raster layout: 16-byte header `b"LDOS"`, `u32` height, `u32` width, `u32` reserved (0), then
//! `height * width` little-endian `f32` values, row-major.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DomainTag, Split};
use crate::error::{CoreError, Result};
use crate::field::{Extent, ScalarField2D};
use crate::scalar::Scalar;

pub const RASTER_MAGIC: &[u8; 4] = b"LDOS";

pub fn write_raster<T: Scalar>(path: &Path, field: &ScalarField2D<T>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(RASTER_MAGIC)?;
    w.write_all(&(field.height() as u32).to_le_bytes())?;
    w.write_all(&(field.width() as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for &v in field.values() {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a raster; the extent is unknown to the format and is supplied by the caller
/// (usually from the sidecar), falling back to one unit per pixel.
pub fn read_raster<T: Scalar>(path: &Path, extent: Option<Extent>) -> Result<ScalarField2D<T>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |m: &str| CoreError::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..4] != RASTER_MAGIC {
        return Err(fail("missing LDOS header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (h, w) = (word(4), word(8));
    if bytes.len() != 16 + 4 * h * w {
        return Err(fail(&format!("{h}x{w} raster needs {} bytes, file has {}", 16 + 4 * h * w, bytes.len())));
    }
    let values = bytes[16..].chunks_exact(4).map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64)).collect();
    ScalarField2D::new(h, w, values, extent.unwrap_or_else(|| Extent::pixels(h, w)))
}

pub fn write_toml<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| CoreError::Format(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_toml<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))
}

/// Grayscale preview: values in [0, 1] (clamped) scaled to the full 16-bit range.
pub fn write_png16<T: Scalar>(path: &Path, field: &ScalarField2D<T>) -> Result<()> {
    let pixels: Vec<u16> = field.values().iter().map(|v| (v.as_f64().clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(field.width() as u32, field.height() as u32, pixels)
        .ok_or_else(|| CoreError::Format("png buffer size mismatch".into()))?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| CoreError::Format(e.to_string()))
}

/// Load any grayscale-convertible image as values in [0, 1].
pub fn read_image<T: Scalar>(path: &Path) -> Result<ScalarField2D<T>> {
    let img = image::open(path).map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?.into_luma16();
    let (w, h) = img.dimensions();
    let values = img.into_raw().into_iter().map(|v| T::lit(v as f64 / 65535.0)).collect();
    ScalarField2D::new(h as usize, w as usize, values, Extent::pixels(h as usize, w as usize))
}

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub domain: DomainTag,
    pub split: Split,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| CoreError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CoreError::Format(format!("{} line {}: {e}", path.display(), n + 1)))?);
    }
    Ok(out)
}

/// Hash of the manifest content, independent of file formatting.
pub fn manifest_hash(records: &[ManifestRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_vec(r).expect("manifest records serialize"));
        h.update(b"\n");
    }
    hex(&h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Hash of every regular file below `dir`, keyed by relative path in sorted order. Files named
/// in `skip` (for example provenance records carrying wall-clock times) are left out.
pub fn hash_tree(dir: &Path, skip: &[&str]) -> Result<String> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        let name = rel.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if skip.contains(&name) {
            continue;
        }
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(dir.join(&rel))?);
    }
    Ok(hex(&h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("walked below root").to_path_buf());
        }
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ldos");
        let f = ScalarField2D::from_fn(3, 5, Extent::new(2.0, 1.0), |y, x| (y * 5 + x) as f64 * 0.125).unwrap();
        write_raster(&p, &f).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"LDOS");
        assert_eq!(bytes.len(), 16 + 60);
        let g: ScalarField2D<f64> = read_raster(&p, Some(f.extent())).unwrap();
        assert_eq!(g, f);
        fs::write(&p, &bytes[..20]).unwrap();
        assert!(matches!(read_raster::<f64>(&p, None), Err(CoreError::Format(_))));
    }

    #[test]
    fn png_preview_round_trips_to_16_bits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let f = ScalarField2D::from_fn(4, 6, Extent::pixels(4, 6), |y, x| (y * 6 + x) as f64 / 23.0).unwrap();
        write_png16(&p, &f).unwrap();
        let g: ScalarField2D<f64> = read_image(&p).unwrap();
        assert_eq!(g.shape(), (4, 6));
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1.0 / 65535.0);
        }
    }

    #[test]
    fn manifest_round_trip_and_stable_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        let recs = vec![
            ManifestRecord { id: "a".into(), path: "a.ldos".into(), domain: DomainTag::SimClear, split: Split::Train },
            ManifestRecord { id: "b".into(), path: "b.ldos".into(), domain: DomainTag::Exp, split: Split::Test },
        ];
        write_manifest(&p, &recs).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(r#"{"id":"a","path":"a.ldos","domain":"SIM_CLEAR","split":"train"}"#));
        let back = read_manifest(&p).unwrap();
        assert_eq!(back, recs);
        assert_eq!(manifest_hash(&back), manifest_hash(&recs));
    }
}
