//! BSQF raster container: a `<name>.json` header next to a `<name>.bin`
//! payload of little-endian float32, band-sequential, row-major per band.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AffineTransform, GridSpec, RasterGrid};
use crate::error::{Error, Result};
use crate::fsio;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsqfHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub transform: AffineTransform,
    pub nodata: Option<f32>,
    pub band_names: Vec<String>,
    /// Free-form provenance (e.g. the checkpoint a class map came from).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// Strips a trailing `.json`, `.bin` or `.bsqf` so any of the three spellings
/// name the same raster.
pub fn base_path(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json" | "bin" | "bsqf") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write(path: &Path, raster: &RasterGrid) -> Result<()> {
    write_with_metadata(path, raster, BTreeMap::new())
}

pub fn write_with_metadata(path: &Path, raster: &RasterGrid, metadata: BTreeMap<String, String>) -> Result<()> {
    let base = base_path(path);
    let header = BsqfHeader {
        width: raster.spec.width,
        height: raster.spec.height,
        bands: raster.bands,
        transform: raster.spec.transform,
        nodata: raster.nodata,
        band_names: raster.band_names.clone(),
        metadata,
    };
    fsio::write_atomic(&with_suffix(&base, ".bin"), &fsio::f32_to_le_bytes(&raster.data))?;
    fsio::write_json(&with_suffix(&base, ".json"), &header)
}

pub fn read(path: &Path) -> Result<RasterGrid> {
    read_with_metadata(path).map(|(r, _)| r)
}

pub fn read_with_metadata(path: &Path) -> Result<(RasterGrid, BTreeMap<String, String>)> {
    let base = base_path(path);
    let header_path = with_suffix(&base, ".json");
    let header: BsqfHeader = fsio::read_json(&header_path)?;
    let bin_path = with_suffix(&base, ".bin");
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let expected = header.width * header.height * header.bands * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: payload is {} bytes, header implies {expected}",
            bin_path.display(),
            bytes.len()
        )));
    }
    let spec = GridSpec::new(header.width, header.height, header.transform)?;
    let raster = RasterGrid::new(spec, header.bands, fsio::f32_from_le_bytes(&bytes))?
        .with_nodata(header.nodata)
        .with_band_names(header.band_names)?;
    Ok((raster, header.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new(3, 2, AffineTransform::from_corner(1.0, 2.0, 0.5)).unwrap();
        let r = RasterGrid::new(spec, 2, (0..12).map(|v| v as f32 * 0.5 - 1.0).collect())
            .unwrap()
            .with_nodata(Some(-1.0))
            .with_band_names(["a", "b"])
            .unwrap();
        write(&dir.path().join("x.bsqf"), &r).unwrap();
        assert!(dir.path().join("x.json").exists());
        let bytes = fs::read(dir.path().join("x.bin")).unwrap();
        assert_eq!(&bytes[4..8], &(-0.5f32).to_le_bytes());
        assert_eq!(read(&dir.path().join("x")).unwrap(), r);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new(2, 2, AffineTransform::identity()).unwrap();
        let r = RasterGrid::filled(spec, 1, 1.0);
        let p = dir.path().join("t");
        write(&p, &r).unwrap();
        fs::write(dir.path().join("t.bin"), [0u8; 8]).unwrap();
        assert!(read(&p).is_err());
    }
}
