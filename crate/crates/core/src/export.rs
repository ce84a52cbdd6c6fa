//! File formats for maps, slices and overlays.
//!
//! A radio or weight map is stored as a flat little-endian `f32` array with
//! `k` varying fastest, next to a JSON sidecar holding the grid metadata
//! (`map.bin` + `map.json`).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use image::{GrayImage, Luma, Rgb, RgbImage, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::Overlay;
use crate::radiomap::{GridSpec, RadioMap, Slice, WeightMap};
use crate::tracer::AntennaConfig;

pub const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    RadioMap,
    WeightMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub v: u32,
    pub kind: MapKind,
    /// Always `f32le`.
    pub format: String,
    /// Always `k-fastest`.
    pub order: String,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antenna: Option<AntennaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_power_dbm: Option<f64>,
}

impl Sidecar {
    fn new(kind: MapKind, grid: &GridSpec) -> Self {
        Self {
            v: CONTAINER_VERSION,
            kind,
            format: "f32le".into(),
            order: "k-fastest".into(),
            grid: grid.clone(),
            antenna: None,
            min_power_dbm: None,
        }
    }

    pub fn for_radio_map(map: &RadioMap) -> Self {
        Self { antenna: Some(map.antenna.clone()), min_power_dbm: Some(map.min_power_dbm), ..Self::new(MapKind::RadioMap, &map.grid) }
    }

    pub fn for_weight_map(map: &WeightMap) -> Self {
        Self::new(MapKind::WeightMap, &map.grid)
    }
}

pub fn encode_values(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
}

pub fn decode_values(bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != expected * 4 {
        return Err(Error::Format(format!("container holds {} bytes, expected {}", bytes.len(), expected * 4)));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

/// Sidecar path for a container: `map.bin` → `map.json`.
pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes to a temporary file in the same directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let serial = COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = dir.join(format!(".{name}.{}.{serial}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_radio_map(map: &RadioMap, bin: &Path) -> Result<()> {
    let sidecar = serde_json::to_vec_pretty(&Sidecar::for_radio_map(map))?;
    write_atomic(bin, &encode_values(&map.values))?;
    write_atomic(&sidecar_path(bin), &sidecar)
}

pub fn write_weight_map(map: &WeightMap, bin: &Path) -> Result<()> {
    let sidecar = serde_json::to_vec_pretty(&Sidecar::for_weight_map(map))?;
    write_atomic(bin, &encode_values(&map.values))?;
    write_atomic(&sidecar_path(bin), &sidecar)
}

pub fn read_sidecar(bin: &Path) -> Result<Sidecar> {
    let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(sidecar_path(bin))?)?;
    if sidecar.v != CONTAINER_VERSION || sidecar.format != "f32le" || sidecar.order != "k-fastest" {
        return Err(Error::Format("unsupported map container".into()));
    }
    Ok(sidecar)
}

pub fn read_radio_map(bin: &Path) -> Result<RadioMap> {
    let sidecar = read_sidecar(bin)?;
    let (MapKind::RadioMap, Some(antenna), Some(min_power_dbm)) = (&sidecar.kind, sidecar.antenna, sidecar.min_power_dbm) else {
        return Err(Error::Format("container does not hold a radio map".into()));
    };
    let values = decode_values(&std::fs::read(bin)?, sidecar.grid.len())?;
    Ok(RadioMap { grid: sidecar.grid, antenna, min_power_dbm, values })
}

pub fn read_weight_map(bin: &Path) -> Result<WeightMap> {
    let sidecar = read_sidecar(bin)?;
    if sidecar.kind != MapKind::WeightMap {
        return Err(Error::Format("container does not hold a weight map".into()));
    }
    let values = decode_values(&std::fs::read(bin)?, sidecar.grid.len())?;
    WeightMap::new(sidecar.grid, values)
}

/// `i,j,x,y,rsrp_dbm` rows for one slice, cell centers in metres.
pub fn slice_csv(slice: &Slice) -> String {
    let mut out = String::from("i,j,x,y,rsrp_dbm\n");
    for (i, row) in slice.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let x = slice.origin[0] + (i as f64 + 0.5) * slice.resolution_m;
            let y = slice.origin[1] + (j as f64 + 0.5) * slice.resolution_m;
            out.push_str(&format!("{i},{j},{x},{y},{v}\n"));
        }
    }
    out
}

pub fn cdf_csv(cdf: &[(f64, f64)]) -> String {
    let mut out = String::from("rsrp_dbm,fraction\n");
    for (v, f) in cdf {
        out.push_str(&format!("{v},{f}\n"));
    }
    out
}

/// Fixed color scale shared by every PNG export.
pub struct ColorRamp;

impl ColorRamp {
    pub const MIN_DBM: f64 = -120.0;
    pub const MAX_DBM: f64 = -30.0;
    /// Piecewise-linear stops `(dBm, [r, g, b])`; values outside the range
    /// take the end colors.
    pub const STOPS: [(f64, [u8; 3]); 7] = [
        (-120.0, [0, 0, 128]),
        (-100.0, [0, 0, 255]),
        (-85.0, [0, 255, 255]),
        (-70.0, [0, 255, 0]),
        (-55.0, [255, 255, 0]),
        (-40.0, [255, 0, 0]),
        (-30.0, [128, 0, 0]),
    ];

    pub fn gray(dbm: f64) -> u8 {
        let t = ((dbm - Self::MIN_DBM) / (Self::MAX_DBM - Self::MIN_DBM)).clamp(0.0, 1.0);
        (t * 255.0).round() as u8
    }

    pub fn color(dbm: f64) -> [u8; 3] {
        let stops = &Self::STOPS;
        if dbm.is_nan() || dbm <= stops[0].0 {
            return stops[0].1;
        }
        for w in stops.windows(2) {
            let ((v0, c0), (v1, c1)) = (w[0], w[1]);
            if dbm <= v1 {
                let t = (dbm - v0) / (v1 - v0);
                return [0, 1, 2].map(|i| (c0[i] as f64 + t * (c1[i] as f64 - c0[i] as f64)).round() as u8);
            }
        }
        stops[stops.len() - 1].1
    }
}

/// Slice image: one pixel per cell, `x` to the right and `y` up.
pub fn slice_png(slice: &Slice, color: bool) -> Result<Vec<u8>> {
    let [nx, ny] = slice.dims;
    let mut bytes = Vec::new();
    let cursor = std::io::Cursor::new(&mut bytes);
    let row = |j: u32| ny - 1 - j as usize;
    if color {
        let img = RgbImage::from_fn(nx as u32, ny as u32, |x, y| Rgb(ColorRamp::color(slice.values[x as usize][row(y)])));
        img.write_to(&mut { cursor }, image::ImageFormat::Png)
    } else {
        let img = GrayImage::from_fn(nx as u32, ny as u32, |x, y| Luma([ColorRamp::gray(slice.values[x as usize][row(y)])]));
        img.write_to(&mut { cursor }, image::ImageFormat::Png)
    }
    .map_err(|e| Error::Format(e.to_string()))?;
    Ok(bytes)
}

/// Transparent frame-sized heat layer with overlay pixels colored.
pub fn overlay_png(overlay: &Overlay) -> Result<Vec<u8>> {
    let [w, h] = overlay.frame_size;
    let mut img = RgbaImage::new(w, h);
    for p in &overlay.pixels {
        let [r, g, b] = ColorRamp::color(p.rsrp_dbm);
        img.put_pixel(p.u, p.v, Rgba([r, g, b, 255]));
    }
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Vec3};
    use crate::radiomap::horizontal_slice;

    fn small_map() -> RadioMap {
        let grid = GridSpec::new(Aabb::new(Vec3::zeros(), Vec3::new(2.0, 3.0, 1.0)), 1.0).unwrap();
        let values = (0..grid.len()).map(|i| -40.0 - i as f64 * 7.25).collect();
        RadioMap { grid, antenna: AntennaConfig::default(), min_power_dbm: -150.0, values }
    }

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("map.bin");
        let map = small_map();
        write_radio_map(&map, &bin).unwrap();
        assert_eq!(std::fs::read(&bin).unwrap().len(), map.values.len() * 4);
        assert_eq!(read_radio_map(&bin).unwrap(), map);
        assert!(read_weight_map(&bin).is_err());

        let w = WeightMap::uniform(map.grid.clone(), 2.0).unwrap();
        let wbin = dir.path().join("w.bin");
        write_weight_map(&w, &wbin).unwrap();
        assert_eq!(read_weight_map(&wbin).unwrap(), w);
    }

    #[test]
    fn values_are_k_fastest_f32() {
        let bytes = encode_values(&[1.0, -2.5]);
        assert_eq!(bytes, [1f32.to_le_bytes(), (-2.5f32).to_le_bytes()].concat());
        assert!(decode_values(&bytes, 3).is_err());
    }

    #[test]
    fn color_ramp_hits_stops() {
        for (v, c) in ColorRamp::STOPS {
            assert_eq!(ColorRamp::color(v), c);
        }
        assert_eq!(ColorRamp::color(-200.0), [0, 0, 128]);
        assert_eq!(ColorRamp::color(0.0), [128, 0, 0]);
        assert_eq!(ColorRamp::color(-62.5), [128, 255, 0]);
        assert_eq!(ColorRamp::gray(-120.0), 0);
        assert_eq!(ColorRamp::gray(-30.0), 255);
    }

    #[test]
    fn slice_exports() {
        let map = small_map();
        let slice = horizontal_slice(&map, 0.5).unwrap();
        let csv = slice_csv(&slice);
        assert_eq!(csv.lines().count(), 1 + 6);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,0,0.5,0.5,-40"));
        let png = slice_png(&slice, true).unwrap();
        let img = image::load_from_memory(&png).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (2, 3));
        // Bottom-left pixel is cell (0, 0).
        assert_eq!(img.get_pixel(0, 2).0, ColorRamp::color(slice.values[0][0]));
        let gray = image::load_from_memory(&slice_png(&slice, false).unwrap()).unwrap().to_luma8();
        assert_eq!(gray.get_pixel(1, 0).0[0], ColorRamp::gray(slice.values[1][2]));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
