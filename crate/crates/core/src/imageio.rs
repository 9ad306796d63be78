//! Image loading, resizing and intensity normalization.
//!
//! Every image is brought onto a square `2^n × 2^n` grid with intensities in
//! `[0, 1]` before it reaches the Radon stage.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageError, ImageReader};
use thiserror::Error;

/// Default side of the normalized raster.
pub const DEFAULT_SIDE: usize = 32;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("invalid side {0}: must be a power of two and at least 2")]
    InvalidSide(usize),
    #[error("empty raster")]
    EmptyRaster,
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error reading manifest: {0}")]
    Io(#[from] io::Error),
    #[error("manifest line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("manifest line {line}: duplicate image id {id:?}")]
    DuplicateId { line: usize, id: String },
}

/// A decoded grayscale raster, row-major.
///
/// `max_value` is 255 for 8-bit sources and 65535 for 16-bit sources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRaster {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub data: Vec<u16>,
}

impl RawRaster {
    pub fn from_u8(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(width * height, data.len(), "raster size mismatch");
        RawRaster {
            width,
            height,
            max_value: 255,
            data: data.into_iter().map(u16::from).collect(),
        }
    }

    pub fn from_u16(width: usize, height: usize, data: Vec<u16>) -> Self {
        assert_eq!(width * height, data.len(), "raster size mismatch");
        RawRaster {
            width,
            height,
            max_value: u16::MAX,
            data,
        }
    }

    #[inline]
    fn get(&self, x: usize, y: usize) -> f64 {
        f64::from(self.data[y * self.width + x])
    }
}

/// Square grayscale image with side `2^n` and intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    side: usize,
    pixels: Vec<f64>,
}

impl NormalizedImage {
    /// Builds an image from row-major pixels, validating every invariant.
    pub fn new(side: usize, pixels: Vec<f64>) -> Result<Self, ImageIoError> {
        check_side(side)?;
        if pixels.len() != side * side {
            return Err(ImageIoError::CorruptImage(format!(
                "expected {} pixels, got {}",
                side * side,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImageIoError::CorruptImage(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(NormalizedImage { side, pixels })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Pixel at column `x`, row `y`.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.side + x]
    }

    pub fn intensity_sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    /// Rotates the image by 90° counter-clockwise.
    pub fn rotate90(&self) -> NormalizedImage {
        let n = self.side;
        let mut out = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                // destination (x, y) takes source (n-1-y, x)
                out[y * n + x] = self.at(n - 1 - y, x);
            }
        }
        NormalizedImage {
            side: n,
            pixels: out,
        }
    }
}

fn check_side(side: usize) -> Result<(), ImageIoError> {
    if side < 2 || !side.is_power_of_two() {
        return Err(ImageIoError::InvalidSide(side));
    }
    Ok(())
}

/// Decodes an image file into a grayscale raster.
///
/// Colour sources are reduced to luminance with the weights
/// 0.299 / 0.587 / 0.114.
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<RawRaster, ImageIoError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(ImageIoError::FileNotFound(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)?.with_guessed_format()?;
    if reader.format().is_none() {
        return Err(ImageIoError::UnsupportedFormat(path.display().to_string()));
    }
    let img = reader.decode().map_err(|e| map_image_error(path, e))?;
    Ok(to_raster(img))
}

fn map_image_error(path: &Path, err: ImageError) -> ImageIoError {
    match err {
        ImageError::Unsupported(e) => {
            ImageIoError::UnsupportedFormat(format!("{}: {e}", path.display()))
        }
        ImageError::IoError(e) if e.kind() == io::ErrorKind::NotFound => {
            ImageIoError::FileNotFound(path.to_path_buf())
        }
        e => ImageIoError::CorruptImage(format!("{}: {e}", path.display())),
    }
}

fn luminance(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn to_raster(img: DynamicImage) -> RawRaster {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => RawRaster::from_u8(w, h, buf.into_raw()),
        DynamicImage::ImageLumaA8(buf) => {
            RawRaster::from_u8(w, h, buf.pixels().map(|p| p.0[0]).collect())
        }
        DynamicImage::ImageLuma16(buf) => RawRaster::from_u16(w, h, buf.into_raw()),
        DynamicImage::ImageLumaA16(buf) => {
            RawRaster::from_u16(w, h, buf.pixels().map(|p| p.0[0]).collect())
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            let rgb = img.to_rgb16();
            let data = rgb
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0.map(f64::from);
                    luminance(r, g, b).round().clamp(0.0, 65535.0) as u16
                })
                .collect();
            RawRaster::from_u16(w, h, data)
        }
        other => {
            let rgb = other.to_rgb8();
            let data = rgb
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0.map(f64::from);
                    luminance(r, g, b).round().clamp(0.0, 255.0) as u8
                })
                .collect();
            RawRaster::from_u8(w, h, data)
        }
    }
}

/// Resizes `raster` to `target_side × target_side` with bilinear
/// interpolation (pixel-center aligned) and scales intensities into `[0, 1]`.
///
/// Non-square sources are stretched anisotropically; nothing is padded.
pub fn normalize_image(
    raster: &RawRaster,
    target_side: usize,
) -> Result<NormalizedImage, ImageIoError> {
    check_side(target_side)?;
    if raster.width == 0 || raster.height == 0 || raster.data.is_empty() {
        return Err(ImageIoError::EmptyRaster);
    }
    let scale = f64::from(raster.max_value);
    let sx = raster.width as f64 / target_side as f64;
    let sy = raster.height as f64 / target_side as f64;

    let mut pixels = Vec::with_capacity(target_side * target_side);
    for ty in 0..target_side {
        let (y0, y1, fy) = sample_coords(ty, sy, raster.height);
        for tx in 0..target_side {
            let (x0, x1, fx) = sample_coords(tx, sx, raster.width);
            let top = raster.get(x0, y0) * (1.0 - fx) + raster.get(x1, y0) * fx;
            let bottom = raster.get(x0, y1) * (1.0 - fx) + raster.get(x1, y1) * fx;
            let v = (top * (1.0 - fy) + bottom * fy) / scale;
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    Ok(NormalizedImage {
        side: target_side,
        pixels,
    })
}

// Maps a destination index onto the two neighbouring source indices and the
// interpolation weight of the second one.
fn sample_coords(dst: usize, scale: f64, src_len: usize) -> (usize, usize, f64) {
    let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

/// Converts a normalized image back to an 8-bit raster (rounding).
pub fn to_raw_u8(image: &NormalizedImage) -> RawRaster {
    let data = image
        .pixels
        .iter()
        .map(|v| (v * 255.0).round() as u8)
        .collect();
    RawRaster::from_u8(image.side, image.side, data)
}

/// Writes an 8-bit raster as a binary (P5) PGM file.
pub fn write_pgm(path: impl AsRef<Path>, raster: &RawRaster) -> Result<(), ImageIoError> {
    let mut out = format!("P5\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    out.extend(raster.data.iter().map(|&v| {
        let v = if raster.max_value == 255 {
            v
        } else {
            ((f64::from(v) / f64::from(raster.max_value)) * 255.0).round() as u16
        };
        v.min(255) as u8
    }));
    fs::write(path, out)?;
    Ok(())
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub image_path: PathBuf,
    pub irma_code: Option<String>,
}

/// Ordered list of images, optionally labelled with IRMA codes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Parses the tab-separated manifest format. Relative image paths are
    /// resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ManifestError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(ManifestError::Malformed {
                    line: lineno,
                    reason: format!("expected 2 or 3 tab-separated fields, got {}", fields.len()),
                });
            }
            let id = fields[0].trim();
            let rel = fields[1].trim();
            if id.is_empty() || rel.is_empty() {
                return Err(ManifestError::Malformed {
                    line: lineno,
                    reason: "empty image id or path".into(),
                });
            }
            if !seen.insert(id.to_string()) {
                return Err(ManifestError::DuplicateId {
                    line: lineno,
                    id: id.to_string(),
                });
            }
            let code = fields
                .get(2)
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            let rel_path = Path::new(rel);
            let image_path = if rel_path.is_absolute() {
                rel_path.to_path_buf()
            } else {
                base_dir.join(rel_path)
            };
            entries.push(ManifestEntry {
                image_id: id.to_string(),
                image_path,
                irma_code: code,
            });
        }
        Ok(DatasetManifest { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Renders the manifest with paths relative to `base_dir` where possible.
    pub fn render(&self, base_dir: &Path) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let p = e.image_path.strip_prefix(base_dir).unwrap_or(&e.image_path);
            out.push_str(&e.image_id);
            out.push('\t');
            out.push_str(&p.display().to_string());
            out.push('\t');
            if let Some(c) = &e.irma_code {
                out.push_str(c);
            }
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
