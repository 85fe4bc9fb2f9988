//! Image data model, band access and ground-sample-distance conversions.
//!
//! Pixels are stored row-major and channel-interleaved. Three and four
//! channel data is always red, green, blue[, alpha].

use std::f64::consts::PI;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

/// Ground sample distance: physical extent of one pixel on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoMeta {
    /// Meters per pixel along x.
    pub gsd_x: f64,
    /// Meters per pixel along y.
    pub gsd_y: f64,
}

impl GeoMeta {
    /// Sub-meter commercial satellite resolution (0.6 m panchromatic-sharpened).
    pub const DEFAULT_GSD_M: f64 = 0.6;

    pub fn new(gsd_x: f64, gsd_y: f64) -> Result<Self> {
        for (axis, v) in [("x", gsd_x), ("y", gsd_y)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGeo(format!(
                    "gsd_{axis} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { gsd_x, gsd_y })
    }

    pub fn square(gsd: f64) -> Result<Self> {
        Self::new(gsd, gsd)
    }

    /// Ground area covered by one pixel in square meters.
    pub fn pixel_area_m2(&self) -> f64 {
        self.gsd_x * self.gsd_y
    }

    /// Parses the contents of a `.gsd` sidecar: one or two whitespace
    /// separated decimal numbers.
    pub fn parse_sidecar(text: &str) -> Result<Self> {
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::InvalidGeo(format!("not a number: {tok:?}")))
            })
            .collect::<Result<_>>()?;
        match values.as_slice() {
            [g] => Self::square(*g),
            [gx, gy] => Self::new(*gx, *gy),
            _ => Err(Error::InvalidGeo(format!(
                "expected one or two numbers, found {}",
                values.len()
            ))),
        }
    }
}

impl Default for GeoMeta {
    fn default() -> Self {
        Self {
            gsd_x: Self::DEFAULT_GSD_M,
            gsd_y: Self::DEFAULT_GSD_M,
        }
    }
}

/// Multi-channel 8-bit image.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
    pub geo: Option<GeoMeta>,
}

impl Raster {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::InvalidRaster(format!(
                "channel count must be 1, 3 or 4, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::InvalidRaster(format!(
                "expected {expected} samples, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
            geo: None,
        })
    }

    /// A raster with every pixel set to `value` (one sample per channel).
    pub fn filled(width: u32, height: u32, value: &[u8]) -> Result<Self> {
        let channels = u8::try_from(value.len())
            .map_err(|_| Error::InvalidRaster("too many channels".into()))?;
        let n = width as usize * height as usize;
        Self::new(width, height, channels, value.repeat(n))
    }

    pub fn with_geo(mut self, geo: Option<GeoMeta>) -> Self {
        self.geo = geo;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// Samples of the pixel at `(x, y)`.
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.pixels[i..i + c]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &mut self.pixels[i..i + c]
    }

    /// Converts to 3-channel RGB. Gray is replicated, alpha is dropped.
    pub fn to_rgb(&self) -> Raster {
        let pixels = match self.channels {
            3 => self.pixels.clone(),
            1 => self.pixels.iter().flat_map(|&v| [v, v, v]).collect(),
            _ => self
                .pixels
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
        };
        Raster {
            width: self.width,
            height: self.height,
            channels: 3,
            pixels,
            geo: self.geo,
        }
    }

    /// Copies the inclusive rectangle `[x0, x1] × [y0, y1]`.
    pub fn crop(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> Raster {
        let x1 = x1.min(self.width - 1);
        let y1 = y1.min(self.height - 1);
        let c = self.channels as usize;
        let mut pixels = Vec::with_capacity((x1 - x0 + 1) as usize * (y1 - y0 + 1) as usize * c);
        for y in y0..=y1 {
            let row = (y as usize * self.width as usize) * c;
            pixels.extend_from_slice(
                &self.pixels[row + x0 as usize * c..row + (x1 as usize + 1) * c],
            );
        }
        Raster {
            width: x1 - x0 + 1,
            height: y1 - y0 + 1,
            channels: self.channels,
            pixels,
            geo: self.geo,
        }
    }

    /// Encodes as an 8-bit PNG.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            _ => image::ExtendedColorType::Rgba8,
        };
        let mut buf = Vec::new();
        image::write_buffer_with_format(
            &mut Cursor::new(&mut buf),
            &self.pixels,
            self.width,
            self.height,
            color,
            ImageFormat::Png,
        )
        .map_err(|e| Error::InvalidRaster(e.to_string()))?;
        Ok(buf)
    }

    /// Writes a PNG atomically (temp file + rename).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        fsutil::write_atomic(path, &bytes)
    }
}

/// Single-channel 8-bit intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayRaster {
    width: u32,
    height: u32,
    values: Vec<u8>,
    pub geo: Option<GeoMeta>,
}

impl GrayRaster {
    pub fn new(width: u32, height: u32, values: Vec<u8>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::InvalidRaster(format!(
                "expected {} values, got {}",
                width as usize * height as usize,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            geo: None,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// 256-bin intensity histogram.
    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.values {
            hist[v as usize] += 1;
        }
        hist
    }
}

/// Reads a PNG or 8-bit TIFF file.
pub fn load_image(path: &Path) -> Result<Raster> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    decode_image(&bytes)
}

/// Decodes an in-memory PNG or TIFF.
pub fn decode_image(bytes: &[u8]) -> Result<Raster> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::CorruptImage(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Tiff) => {}
        Some(other) => {
            return Err(Error::UnsupportedFormat(format!("{other:?}")));
        }
        None => {
            return Err(Error::UnsupportedFormat(
                "unrecognized file signature".into(),
            ))
        }
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::CorruptImage(other.to_string()),
    })?;
    let (width, height) = (decoded.width(), decoded.height());
    let (channels, pixels) = match decoded {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageLumaA8(b) => (1, DynamicImage::ImageLumaA8(b).into_luma8().into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(b) => (4, b.into_raw()),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "only 8-bit samples are accepted, got {:?}",
                other.color()
            )))
        }
    };
    Raster::new(width, height, channels, pixels)
}

/// Projects out the green sample of an RGB(A) image.
pub fn extract_green_band(img: &Raster) -> Result<GrayRaster> {
    if img.channels < 3 {
        return Err(Error::WrongChannelCount {
            expected: "3 or 4",
            actual: img.channels,
        });
    }
    let values = img
        .pixels
        .chunks_exact(img.channels as usize)
        .map(|p| p[1])
        .collect();
    Ok(GrayRaster {
        width: img.width,
        height: img.height,
        values,
        geo: img.geo,
    })
}

/// BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)`. Single-channel input
/// is copied unchanged.
pub fn to_grayscale(img: &Raster) -> GrayRaster {
    let values = if img.channels == 1 {
        img.pixels.clone()
    } else {
        img.pixels
            .chunks_exact(img.channels as usize)
            .map(|p| {
                // integer weights in thousandths; +500 rounds half up
                let y = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500;
                (y / 1000).min(255) as u8
            })
            .collect()
    };
    GrayRaster {
        width: img.width,
        height: img.height,
        values,
        geo: img.geo,
    }
}

pub fn pixels_to_area_m2(n_pixels: u64, geo: &GeoMeta) -> f64 {
    n_pixels as f64 * geo.gsd_x * geo.gsd_y
}

/// Diameter of the disk with the given area.
pub fn equivalent_diameter_m(area_m2: f64) -> f64 {
    2.0 * (area_m2 / PI).sqrt()
}
