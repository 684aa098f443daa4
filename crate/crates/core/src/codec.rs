//! PNG encode/decode for the in-memory image types.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::types::{Gray16Image, GrayImage, RgbImage};

fn encode(img: DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

fn dims(w: usize, h: usize) -> (u32, u32) {
    (w as u32, h as u32)
}

pub fn encode_gray_png(img: &GrayImage) -> Result<Vec<u8>> {
    let (w, h) = dims(img.width(), img.height());
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, img.data().to_vec())
        .expect("buffer sized by construction");
    encode(DynamicImage::ImageLuma8(buf))
}

pub fn encode_rgb_png(img: &RgbImage) -> Result<Vec<u8>> {
    let (w, h) = dims(img.width(), img.height());
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, img.data().to_vec())
        .expect("buffer sized by construction");
    encode(DynamicImage::ImageRgb8(buf))
}

fn decode(bytes: &[u8]) -> Result<DynamicImage> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Png)?)
}

/// Decodes any PNG and converts it to 8-bit luminance.
pub fn decode_gray_png(bytes: &[u8]) -> Result<GrayImage> {
    let img = decode(bytes)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    GrayImage::new(w, h, img.into_raw())
}

/// Decodes any PNG to RGB; gray input is replicated into all channels.
pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbImage> {
    let img = decode(bytes)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    RgbImage::new(w, h, img.into_raw())
}

pub fn write_gray16_png(path: &Path, img: &Gray16Image) -> Result<()> {
    let (w, h) = dims(img.width(), img.height());
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(w, h, img.data().to_vec())
        .expect("buffer sized by construction");
    let bytes = encode(DynamicImage::ImageLuma16(buf))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a 16-bit single channel PNG; any other pixel format is corrupt.
pub fn read_gray16_png(path: &Path) -> Result<Gray16Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |reason: String| Error::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let img = decode(&bytes).map_err(|e| corrupt(e.to_string()))?;
    match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            Gray16Image::new(w, h, buf.into_raw())
        }
        other => Err(corrupt(format!(
            "expected 16-bit gray PNG, found {:?}",
            other.color()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_png_round_trip() {
        let img = GrayImage::from_fn(7, 3, |x, y| (x * 30 + y) as u8);
        let back = decode_gray_png(&encode_gray_png(&img).unwrap()).unwrap();
        assert_eq!(back, img);
        let rgb = decode_rgb_png(&encode_gray_png(&img).unwrap()).unwrap();
        assert_eq!(rgb, RgbImage::from_gray(&img));
    }

    #[test]
    fn gray16_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = Gray16Image::new(5, 2, (0..10).map(|v| v * 6553).collect()).unwrap();
        write_gray16_png(&path, &img).unwrap();
        assert_eq!(read_gray16_png(&path).unwrap(), img);

        std::fs::write(&path, encode_gray_png(&GrayImage::filled(2, 2, 1)).unwrap()).unwrap();
        assert!(matches!(read_gray16_png(&path), Err(Error::Corrupt { .. })));
    }
}
