//! 8-bit RGB rasters and PNG decoding/encoding.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Result, SafeError};

/// Interleaved 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SafeError::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(SafeError::DimensionMismatch {
                expected: width * height * 3,
                got: data.len(),
            });
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn black(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn row_bytes(&self, row: usize) -> &[u8] {
        &self.data[row * self.width * 3..(row + 1) * self.width * 3]
    }

    pub fn row_bytes_mut(&mut self, row: usize) -> &mut [u8] {
        let w = self.width * 3;
        &mut self.data[row * w..(row + 1) * w]
    }
}

/// Reads a PNG as 8-bit RGB. Grayscale is replicated across channels, alpha
/// is dropped, palettes are expanded.
pub fn read_png(path: &Path) -> Result<RgbImage> {
    let file = File::open(path).map_err(|e| SafeError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| SafeError::Format(format!("{}: {e}", path.display())))?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| SafeError::Format(format!("{}: image too large", path.display())))?
    ];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| SafeError::Format(format!("{}: {e}", path.display())))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let src = &buf[..info.buffer_size()];
    let data: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => src.to_vec(),
        png::ColorType::Rgba => src.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => src.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => {
            src.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect()
        }
        png::ColorType::Indexed => {
            return Err(SafeError::Format(format!(
                "{}: palette was not expanded",
                path.display()
            )))
        }
    };
    RgbImage::new(w, h, data)
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    encode(path, img.width, img.height, png::ColorType::Rgb, &img.data)
}

/// Writes a single-channel mask (nonzero = set) as an 8-bit grayscale PNG.
pub fn write_mask_png(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    encode(path, width, height, png::ColorType::Grayscale, &bytes)
}

fn encode(path: &Path, width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| SafeError::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let fmt_err = |e: png::EncodingError| SafeError::Format(format!("{}: {e}", path.display()));
    let mut writer = encoder.write_header().map_err(fmt_err)?;
    writer.write_image_data(data).map_err(fmt_err)?;
    writer.finish().map_err(fmt_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let data: Vec<u8> = (0..5 * 7 * 3).map(|i| (i * 37 % 256) as u8).collect();
        let img = RgbImage::new(5, 7, data).unwrap();
        write_png(&path, &img).unwrap();
        assert_eq!(read_png(&path).unwrap(), img);
    }

    #[test]
    fn grayscale_mask_reads_as_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        write_mask_png(&path, 2, 1, &[true, false]).unwrap();
        let img = read_png(&path).unwrap();
        assert_eq!(img.pixel(0, 0), [255, 255, 255]);
        assert_eq!(img.pixel(0, 1), [0, 0, 0]);
    }

    #[test]
    fn rejects_empty_dimensions() {
        assert!(RgbImage::new(0, 3, vec![]).is_err());
        assert!(RgbImage::new(2, 2, vec![0; 11]).is_err());
    }
}
