//! File formats for disparity maps and colour images.
//!
//! # Flat container
//!
//! A 32-byte little-endian header followed by row-major pixels:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `CKIT` |
//! | 4 | 4 | width (u32) |
//! | 8 | 4 | height (u32) |
//! | 12 | 1 | dtype: 1 = f32 disparity, 2 = u16 disparity in 1/16 px, 3 = rgb8 |
//! | 13 | 3 | reserved, zero |
//! | 16 | 8 | baseline in m (f64), zero for rgb8 |
//! | 24 | 8 | focal length in px (f64), zero for rgb8 |
//!
//! # PNG
//!
//! Disparity is a 16-bit grayscale PNG in 1/16 px units with a sidecar
//! `<name>.json` holding `{"baseline_m": .., "focal_px": ..}`. Colour images
//! are ordinary 8-bit RGB PNGs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stereo::{DisparityMap, RgbImage};

pub const MAGIC: &[u8; 4] = b"CKIT";
pub const HEADER_LEN: usize = 32;
/// Sub-pixel steps per pixel in 16-bit disparity encodings.
pub const DISPARITY_SUBPIXEL: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    DisparityF32 = 1,
    DisparityU16 = 2,
    Rgb8 = 3,
}

impl TryFrom<u8> for Dtype {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Dtype::DisparityF32),
            2 => Ok(Dtype::DisparityU16),
            3 => Ok(Dtype::Rgb8),
            other => Err(Error::Parse(format!("unknown container dtype {other}"))),
        }
    }
}

struct Header {
    width: usize,
    height: usize,
    dtype: Dtype,
    baseline: f64,
    focal_px: f64,
}

fn encode_header(h: &Header) -> Result<Vec<u8>> {
    let dim = |d: usize| u32::try_from(d).map_err(|_| Error::domain("image dimension exceeds u32"));
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&dim(h.width)?.to_le_bytes());
    out.extend_from_slice(&dim(h.height)?.to_le_bytes());
    out.push(h.dtype as u8);
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&h.baseline.to_le_bytes());
    out.extend_from_slice(&h.focal_px.to_le_bytes());
    Ok(out)
}

fn decode_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Parse(format!("container shorter than its {HEADER_LEN}-byte header")));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Parse("bad container magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let h = Header {
        width: u32_at(4),
        height: u32_at(8),
        dtype: Dtype::try_from(bytes[12])?,
        baseline: f64_at(16),
        focal_px: f64_at(24),
    };
    let per_pixel = match h.dtype {
        Dtype::DisparityF32 => 4,
        Dtype::DisparityU16 => 2,
        Dtype::Rgb8 => 3,
    };
    let payload = &bytes[HEADER_LEN..];
    let expected = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(per_pixel))
        .ok_or_else(|| Error::Parse("container dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Parse(format!(
            "container payload is {} bytes, expected {expected} for {}x{}",
            payload.len(),
            h.width,
            h.height
        )));
    }
    Ok((h, payload))
}

fn to_u16_disparity(d: f32) -> Result<u16> {
    let v = (d as f64 * DISPARITY_SUBPIXEL).round();
    if v > u16::MAX as f64 {
        return Err(Error::InvalidDisparity(d as f64));
    }
    Ok(v as u16)
}

pub fn encode_disparity(map: &DisparityMap, dtype: Dtype) -> Result<Vec<u8>> {
    let mut out = encode_header(&Header {
        width: map.width(),
        height: map.height(),
        dtype,
        baseline: map.baseline(),
        focal_px: map.focal_px(),
    })?;
    match dtype {
        Dtype::DisparityF32 => map.data().iter().for_each(|d| out.extend_from_slice(&d.to_le_bytes())),
        Dtype::DisparityU16 => {
            for &d in map.data() {
                out.extend_from_slice(&to_u16_disparity(d)?.to_le_bytes());
            }
        }
        Dtype::Rgb8 => return Err(Error::domain("rgb8 is not a disparity dtype")),
    }
    Ok(out)
}

pub fn decode_disparity(bytes: &[u8]) -> Result<DisparityMap> {
    let (h, payload) = decode_header(bytes)?;
    let data: Vec<f32> = match h.dtype {
        Dtype::DisparityF32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect(),
        Dtype::DisparityU16 => payload
            .chunks_exact(2)
            .map(|c| (u16::from_le_bytes(c.try_into().expect("2 bytes")) as f64 / DISPARITY_SUBPIXEL) as f32)
            .collect(),
        Dtype::Rgb8 => return Err(Error::Parse("container holds rgb8, expected disparity".into())),
    };
    DisparityMap::new(h.width, h.height, data, h.baseline, h.focal_px)
}

fn to_u8(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_rgb(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = encode_header(&Header {
        width: img.width(),
        height: img.height(),
        dtype: Dtype::Rgb8,
        baseline: 0.0,
        focal_px: 0.0,
    })?;
    for px in img.data() {
        out.extend(px.map(to_u8));
    }
    Ok(out)
}

pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage> {
    let (h, payload) = decode_header(bytes)?;
    if h.dtype != Dtype::Rgb8 {
        return Err(Error::Parse("container holds disparity, expected rgb8".into()));
    }
    let data = payload
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]].map(|v| v as f32 / 255.0))
        .collect();
    RgbImage::new(h.width, h.height, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparitySidecar {
    pub baseline_m: f64,
    pub focal_px: f64,
}

pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

pub fn write_disparity_png(map: &DisparityMap, path: &Path) -> Result<()> {
    let data = map.data().iter().map(|&d| to_u16_disparity(d)).collect::<Result<Vec<u16>>>()?;
    let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(map.width() as u32, map.height() as u32, data)
        .ok_or_else(|| Error::domain("disparity buffer size mismatch"))?;
    buf.save(path)?;
    let sidecar = DisparitySidecar {
        baseline_m: map.baseline(),
        focal_px: map.focal_px(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_disparity_png(path: &Path) -> Result<DisparityMap> {
    let img = image::open(path)?.into_luma16();
    let sidecar: DisparitySidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let (w, h) = img.dimensions();
    let data = img
        .into_raw()
        .into_iter()
        .map(|v| (v as f64 / DISPARITY_SUBPIXEL) as f32)
        .collect();
    DisparityMap::new(w as usize, h as usize, data, sidecar.baseline_m, sidecar.focal_px)
}

pub fn write_rgb_png(img: &RgbImage, path: &Path) -> Result<()> {
    let raw: Vec<u8> = img.data().iter().flat_map(|px| px.map(to_u8)).collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .ok_or_else(|| Error::domain("rgb buffer size mismatch"))?;
    buf.save(path)?;
    Ok(())
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| p.0.map(|v| v as f32 / 255.0))
        .collect();
    RgbImage::new(w as usize, h as usize, data)
}

/// Reads a disparity map from a PNG (with sidecar) or a flat container.
pub fn load_disparity(path: &Path) -> Result<DisparityMap> {
    if is_png(path) {
        read_disparity_png(path)
    } else {
        decode_disparity(&std::fs::read(path)?)
    }
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    if is_png(path) {
        read_rgb_png(path)
    } else {
        decode_rgb(&std::fs::read(path)?)
    }
}

pub fn save_disparity(map: &DisparityMap, path: &Path) -> Result<()> {
    if is_png(path) {
        write_disparity_png(map, path)
    } else {
        std::fs::write(path, encode_disparity(map, Dtype::DisparityF32)?)?;
        Ok(())
    }
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    if is_png(path) {
        write_rgb_png(img, path)
    } else {
        std::fs::write(path, encode_rgb(img)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map() -> DisparityMap {
        let data = (0..12).map(|i| i as f32 * 0.0625 * 7.0).collect();
        DisparityMap::new(4, 3, data, 0.1, 1318.7).unwrap()
    }

    fn sample_rgb() -> RgbImage {
        let data = (0..6).map(|i| [i as f32 / 5.0, 1.0 - i as f32 / 5.0, 0.2]).collect();
        RgbImage::new(3, 2, data).unwrap()
    }

    #[test]
    fn container_header_layout() {
        let bytes = encode_disparity(&sample_map(), Dtype::DisparityF32).unwrap();
        assert_eq!(&bytes[..4], b"CKIT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(bytes[12], 1);
        assert_eq!(bytes.len(), HEADER_LEN + 12 * 4);
    }

    #[test]
    fn disparity_round_trips() {
        let m = sample_map();
        for dtype in [Dtype::DisparityF32, Dtype::DisparityU16] {
            assert_eq!(decode_disparity(&encode_disparity(&m, dtype).unwrap()).unwrap(), m);
        }
    }

    #[test]
    fn rgb_round_trip_to_8_bits() {
        let img = sample_rgb();
        let back = decode_rgb(&encode_rgb(&img).unwrap()).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
    }

    #[test]
    fn corrupt_containers_rejected() {
        let mut bytes = encode_disparity(&sample_map(), Dtype::DisparityF32).unwrap();
        assert!(decode_disparity(&bytes[..20]).is_err());
        assert!(decode_disparity(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_rgb(&bytes).is_err());
        bytes[0] = b'X';
        assert!(decode_disparity(&bytes).is_err());
        let mut bad_dtype = encode_rgb(&sample_rgb()).unwrap();
        bad_dtype[12] = 9;
        assert!(decode_rgb(&bad_dtype).is_err());
    }

    #[test]
    fn png_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample_map();
        let p = dir.path().join("disp.png");
        save_disparity(&m, &p).unwrap();
        assert!(sidecar_path(&p).exists());
        assert_eq!(load_disparity(&p).unwrap(), m);

        let img = RgbImage::new(2, 1, vec![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let q = dir.path().join("left.png");
        save_rgb(&img, &q).unwrap();
        assert_eq!(load_rgb(&q).unwrap(), img);

        let r = dir.path().join("left.bin");
        save_rgb(&img, &r).unwrap();
        assert_eq!(load_rgb(&r).unwrap(), img);
    }
}
