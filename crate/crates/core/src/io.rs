//! File formats: JSON documents and the costmap header + little-endian f32 payload pair.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::costmap::{CostMapGrid, GridFrame};
use crate::error::{Error, Result};
use crate::geometry::Pose2;

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// JSON header of a costmap file; the payload lives in `payload`, relative to the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Pose2,
    pub frame: GridFrame,
    pub payload: String,
}

/// Sibling payload path: `foo.json` -> `foo.f32`.
pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("f32")
}

pub fn encode_f32_le(values: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    bytes
}

pub fn decode_f32_le(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::InvalidGrid(format!(
            "payload length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Write a grid as `<path>` (JSON header) plus the sibling `.f32` payload.
pub fn write_grid(path: impl AsRef<Path>, grid: &CostMapGrid) -> Result<()> {
    write_raw_grid(
        path,
        grid.width(),
        grid.height(),
        grid.resolution(),
        grid.origin(),
        grid.frame(),
        grid.values(),
    )
}

pub(crate) fn write_raw_grid(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2,
    frame: GridFrame,
    values: &[f64],
) -> Result<()> {
    let path = path.as_ref();
    let payload = payload_path(path);
    let header = GridHeader {
        width,
        height,
        resolution,
        origin,
        frame,
        payload: payload
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    write_json(path, &header)?;
    fs::write(&payload, encode_f32_le(values)).map_err(|e| Error::io(&payload, e))
}

pub(crate) fn read_raw_grid(path: impl AsRef<Path>) -> Result<(GridHeader, Vec<f64>)> {
    let path = path.as_ref();
    let header: GridHeader = read_json(path)?;
    let payload = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.payload);
    let bytes = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    let values = decode_f32_le(&bytes)?;
    if values.len() != header.width * header.height {
        return Err(Error::InvalidGrid(format!(
            "{}: payload holds {} values, header says {}x{}",
            payload.display(),
            values.len(),
            header.width,
            header.height
        )));
    }
    Ok((header, values))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<CostMapGrid> {
    let (h, values) = read_raw_grid(path)?;
    CostMapGrid::new(h.width, h.height, h.resolution, h.origin, h.frame, values)
}

/// Binary PGM (P5), 8-bit, row 0 written first.
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = CostMapGrid::new(
            3,
            2,
            0.5,
            Pose2::new(1.0, 2.0, 0.25),
            GridFrame::Body,
            vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.125],
        )
        .unwrap();
        let path = dir.path().join("map.json");
        write_grid(&path, &grid).unwrap();
        assert!(dir.path().join("map.f32").exists());
        let bytes = fs::read(dir.path().join("map.f32")).unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[4..8], &0.25f32.to_le_bytes());
        let back = read_grid(&path).unwrap();
        assert_eq!(back, grid);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let grid = CostMapGrid::uniform(4, 4, 1.0, Pose2::default(), GridFrame::World, 0.5).unwrap();
        let path = dir.path().join("m.json");
        write_grid(&path, &grid).unwrap();
        fs::write(dir.path().join("m.f32"), [0u8; 12]).unwrap();
        assert!(read_grid(&path).is_err());
    }
}
