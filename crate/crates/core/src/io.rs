//! Image and array files.
//!
//! * depth: 16-bit grayscale PNG in millimeters, `0` = missing
//! * rgb: 8-bit RGB PNG
//! * instance mask: 8-bit grayscale PNG, `0` = background
//! * normals: raw little-endian `f32` triples with a JSON sidecar; undefined
//!   normals are stored as NaN
//! * intermediate dumps: raw little-endian `f64` with the same kind of
//!   sidecar, exact to the bit

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{depth_is_valid, DepthMap, Grid, NormalMap, RgbImage};
use crate::pose::Vec3;

/// Depth values are stored in whole millimeters.
pub const DEPTH_UNIT: f64 = 1e-3;

/// Rounds depth to the stored millimeter grid; invalid or out-of-range
/// values become `0`.
pub fn depth_to_mm(d: f64) -> u16 {
    if !depth_is_valid(d) {
        return 0;
    }
    let mm = (d / DEPTH_UNIT).round();
    if mm >= 1.0 && mm <= u16::MAX as f64 {
        mm as u16
    } else {
        0
    }
}

pub fn mm_to_depth(mm: u16) -> f64 {
    mm as f64 * DEPTH_UNIT
}

/// The depth map a round trip through [`write_depth_png`] would produce.
pub fn quantize_depth(depth: &DepthMap) -> DepthMap {
    depth.map(|&d| mm_to_depth(depth_to_mm(d)))
}

fn write_png(
    path: &Path,
    width: u32,
    height: u32,
    color: png::ColorType,
    bits: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(color);
    enc.set_depth(bits);
    let mut writer = enc.write_header().map_err(|e| Error::io_other(path, e))?;
    writer.write_image_data(data).map_err(|e| Error::io_other(path, e))?;
    writer.finish().map_err(|e| Error::io_other(path, e))
}

fn read_png(path: &Path, color: png::ColorType, bits: png::BitDepth) -> Result<(u32, u32, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| Error::io_other(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::io_other(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::io_other(path, e))?;
    if info.color_type != color || info.bit_depth != bits {
        return Err(Error::io_other(
            path,
            format!(
                "expected {color:?}/{bits:?}, found {:?}/{:?}",
                info.color_type, info.bit_depth
            ),
        ));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width, info.height, buf))
}

pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let bytes: Vec<u8> = depth
        .data()
        .iter()
        .flat_map(|&d| depth_to_mm(d).to_be_bytes())
        .collect();
    write_png(
        path,
        depth.width(),
        depth.height(),
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &bytes,
    )
}

pub fn read_depth_png(path: &Path) -> Result<DepthMap> {
    let (w, h, buf) = read_png(path, png::ColorType::Grayscale, png::BitDepth::Sixteen)?;
    let data = buf
        .chunks_exact(2)
        .map(|c| mm_to_depth(u16::from_be_bytes([c[0], c[1]])))
        .collect();
    DepthMap::from_vec(w, h, data)
}

pub fn write_rgb_png(path: &Path, rgb: &RgbImage) -> Result<()> {
    let bytes: Vec<u8> = rgb
        .data()
        .iter()
        .flat_map(|px| px.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    write_png(
        path,
        rgb.width(),
        rgb.height(),
        png::ColorType::Rgb,
        png::BitDepth::Eight,
        &bytes,
    )
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    let (w, h, buf) = read_png(path, png::ColorType::Rgb, png::BitDepth::Eight)?;
    let data = buf
        .chunks_exact(3)
        .map(|c| [0, 1, 2].map(|i| c[i] as f64 / 255.0))
        .collect();
    RgbImage::from_vec(w, h, data)
}

pub fn write_mask_png(path: &Path, ids: &Grid<u8>) -> Result<()> {
    write_png(
        path,
        ids.width(),
        ids.height(),
        png::ColorType::Grayscale,
        png::BitDepth::Eight,
        ids.data(),
    )
}

pub fn read_mask_png(path: &Path) -> Result<Grid<u8>> {
    let (w, h, buf) = read_png(path, png::ColorType::Grayscale, png::BitDepth::Eight)?;
    Grid::from_vec(w, h, buf)
}

/// Sidecar describing a raw normal file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalSidecar {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub dtype: String,
    pub byte_order: String,
    pub frame: String,
}

impl NormalSidecar {
    fn new(width: u32, height: u32) -> Self {
        NormalSidecar {
            width,
            height,
            channels: 3,
            dtype: "f32".into(),
            byte_order: "little".into(),
            frame: "camera".into(),
        }
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Writes `path` and `path.json`.
pub fn write_normals(path: &Path, normals: &NormalMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(normals.len() * 12);
    for n in normals.data() {
        let v = n.map_or([f32::NAN; 3], |n| [n.x as f32, n.y as f32, n.z as f32]);
        for c in v {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&NormalSidecar::new(normals.width(), normals.height()))
        .expect("sidecar serializes");
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn read_normals(path: &Path) -> Result<NormalMap> {
    let side = sidecar_path(path);
    let meta: NormalSidecar = read_json(&side)?;
    if meta != NormalSidecar::new(meta.width, meta.height) {
        return Err(Error::SchemaMismatch(format!(
            "unsupported normal sidecar {}",
            side.display()
        )));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != meta.width as usize * meta.height as usize * 12 {
        return Err(Error::io_other(path, "normal file size does not match sidecar"));
    }
    let data = bytes
        .chunks_exact(12)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes([c[i], c[i + 1], c[i + 2], c[i + 3]]) as f64;
            let v = Vec3::new(f(0), f(4), f(8));
            v.iter().all(|x| x.is_finite()).then_some(v)
        })
        .collect();
    NormalMap::from_vec(meta.width, meta.height, data)
}

/// Writes `channels` interleaved `f64` values per pixel to `path` and a
/// sidecar to `path.json`.
pub fn write_raw_f64(path: &Path, width: u32, height: u32, channels: u32, values: &[f64]) -> Result<()> {
    if values.len() != width as usize * height as usize * channels as usize {
        return Err(Error::ShapeMismatch(format!(
            "{} values for a {width}x{height}x{channels} array",
            values.len()
        )));
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = NormalSidecar {
        channels,
        dtype: "f64".into(),
        ..NormalSidecar::new(width, height)
    };
    write_json(&sidecar_path(path), &side)
}

/// Reads a file written by [`write_raw_f64`]: `(width, height, channels,
/// values)`.
pub fn read_raw_f64(path: &Path) -> Result<(u32, u32, u32, Vec<f64>)> {
    let side = sidecar_path(path);
    let meta: NormalSidecar = read_json(&side)?;
    if meta.dtype != "f64" || meta.byte_order != "little" {
        return Err(Error::SchemaMismatch(format!("unsupported sidecar {}", side.display())));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let n = meta.width as usize * meta.height as usize * meta.channels as usize;
    if bytes.len() != n * 8 {
        return Err(Error::io_other(path, "file size does not match sidecar"));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((meta.width, meta.height, meta.channels, values))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_f64_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.f64");
        let v = vec![0.1, -2.5e-300, f64::NAN, 1.0 / 3.0, 7.0, 8.0];
        write_raw_f64(&p, 3, 1, 2, &v).unwrap();
        let (w, h, c, back) = read_raw_f64(&p).unwrap();
        assert_eq!((w, h, c), (3, 1, 2));
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&v));
        assert!(write_raw_f64(&p, 2, 2, 2, &v).is_err());
    }

    #[test]
    fn depth_round_trip_is_exact_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let depth = DepthMap::from_fn(7, 5, |u, v| if u == 3 { 0.0 } else { 0.4 + 0.0137 * (u * v) as f64 });
        write_depth_png(&p, &depth).unwrap();
        let back = read_depth_png(&p).unwrap();
        assert_eq!(back, quantize_depth(&depth));
        write_depth_png(&p, &back).unwrap();
        assert_eq!(read_depth_png(&p).unwrap(), back);
        assert_eq!(*back.get(3, 2), 0.0);
    }

    #[test]
    fn out_of_range_depth_is_missing() {
        assert_eq!(depth_to_mm(70.0), 0);
        assert_eq!(depth_to_mm(f64::NAN), 0);
        assert_eq!(depth_to_mm(0.0004), 0);
        assert_eq!(depth_to_mm(1.0), 1000);
    }

    #[test]
    fn normals_rgb_and_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let n = NormalMap::from_fn(4, 3, |u, v| (u != v).then(|| Vec3::new(0.0, 0.6, -0.8)));
        let p = dir.path().join("n.f32");
        write_normals(&p, &n).unwrap();
        let back = read_normals(&p).unwrap();
        for (a, b) in n.data().iter().zip(back.data()) {
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).norm() < 1e-7),
                (None, None) => {}
                _ => panic!("validity changed"),
            }
        }

        let rgb = RgbImage::from_fn(4, 3, |u, v| [u as f64 / 3.0, v as f64 / 2.0, 0.5]);
        let p = dir.path().join("c.png");
        write_rgb_png(&p, &rgb).unwrap();
        let back = read_rgb_png(&p).unwrap();
        for (a, b) in rgb.data().iter().zip(back.data()) {
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }

        let ids = Grid::from_fn(4, 3, |u, _| u as u8);
        let p = dir.path().join("m.png");
        write_mask_png(&p, &ids).unwrap();
        assert_eq!(read_mask_png(&p).unwrap(), ids);
    }

    #[test]
    fn missing_file_is_io() {
        assert!(read_depth_png(Path::new("/nonexistent/x.png")).unwrap_err().is_io());
    }
}
