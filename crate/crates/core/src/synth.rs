//! Synthetic labelled image sets for desk-scale experiments.
//!
//! Eight shape classes (filled rectangles, ellipses and bars) at
//! class-specific positions, orientations and scales. Each image gets random
//! jitter on placement, size, angle and brightness plus Gaussian pixel noise.
//! Classes carry four-axis codes in IRMA syntax whose prefixes group related
//! classes, so that the hierarchical metric has something to weigh.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imageio::{write_pgm, DatasetManifest, ImageIoError, ManifestEntry, RawRaster};

pub const NUM_CLASSES: usize = 8;

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect,
    Ellipse,
    /// Two parallel bars separated by `gap` (fraction of the image).
    Bars {
        gap: f64,
    },
}

#[derive(Debug, Clone, Copy)]
struct ClassSpec {
    shape: Shape,
    centre: (f64, f64),
    half_extent: (f64, f64),
    angle_deg: f64,
}

const CLASSES: [ClassSpec; NUM_CLASSES] = [
    ClassSpec {
        shape: Shape::Rect,
        centre: (0.30, 0.30),
        half_extent: (0.16, 0.10),
        angle_deg: 0.0,
    },
    ClassSpec {
        shape: Shape::Rect,
        centre: (0.65, 0.60),
        half_extent: (0.10, 0.22),
        angle_deg: 30.0,
    },
    ClassSpec {
        shape: Shape::Ellipse,
        centre: (0.50, 0.50),
        half_extent: (0.30, 0.14),
        angle_deg: 0.0,
    },
    ClassSpec {
        shape: Shape::Ellipse,
        centre: (0.35, 0.65),
        half_extent: (0.16, 0.16),
        angle_deg: 0.0,
    },
    ClassSpec {
        shape: Shape::Rect,
        centre: (0.50, 0.50),
        half_extent: (0.40, 0.04),
        angle_deg: 45.0,
    },
    ClassSpec {
        shape: Shape::Rect,
        centre: (0.50, 0.30),
        half_extent: (0.40, 0.04),
        angle_deg: 0.0,
    },
    ClassSpec {
        shape: Shape::Bars { gap: 0.35 },
        centre: (0.50, 0.50),
        half_extent: (0.04, 0.38),
        angle_deg: 0.0,
    },
    ClassSpec {
        shape: Shape::Ellipse,
        centre: (0.60, 0.40),
        half_extent: (0.26, 0.10),
        angle_deg: 120.0,
    },
];

/// Label for class `c`: classes pair up on the D axis and differ on A.
pub fn class_code(class: usize) -> String {
    assert!(class < NUM_CLASSES);
    let group = class / 2;
    let sub = class % 2;
    format!("1121-{}{}0-{}00-700", group + 1, sub, class + 1)
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_images: usize,
    pub num_train: usize,
    /// Side of the rendered rasters (before any normalization).
    pub side: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_images: 400,
            num_train: 300,
            side: 64,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub image_id: String,
    pub class: usize,
    pub code: String,
    pub raster: RawRaster,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub train: Vec<SynthImage>,
    pub test: Vec<SynthImage>,
}

fn inside(shape: Shape, u: f64, v: f64, hx: f64, hy: f64) -> bool {
    match shape {
        Shape::Rect => u.abs() <= hx && v.abs() <= hy,
        Shape::Ellipse => (u / hx).powi(2) + (v / hy).powi(2) <= 1.0,
        Shape::Bars { gap } => {
            let off = gap / 2.0;
            ((u - off).abs() <= hx || (u + off).abs() <= hx) && v.abs() <= hy
        }
    }
}

fn render(spec: &ClassSpec, side: usize, noise_std: f64, rng: &mut ChaCha8Rng) -> RawRaster {
    let cx = spec.centre.0 + rng.random_range(-0.04..0.04);
    let cy = spec.centre.1 + rng.random_range(-0.04..0.04);
    let scale = rng.random_range(0.9..1.1);
    let (hx, hy) = (spec.half_extent.0 * scale, spec.half_extent.1 * scale);
    let angle = (spec.angle_deg + rng.random_range(-5.0..5.0)).to_radians();
    let (sin, cos) = angle.sin_cos();
    let fg = rng.random_range(0.7..0.9);
    let bg = rng.random_range(0.05..0.15);
    let noise = Normal::new(0.0, noise_std).expect("finite std");

    let mut data = Vec::with_capacity(side * side);
    for row in 0..side {
        let y = (row as f64 + 0.5) / side as f64 - cy;
        for col in 0..side {
            let x = (col as f64 + 0.5) / side as f64 - cx;
            // rotate into the shape frame
            let u = x * cos + y * sin;
            let v = -x * sin + y * cos;
            let base = if inside(spec.shape, u, v, hx, hy) {
                fg
            } else {
                bg
            };
            let val = (base + noise.sample(rng)).clamp(0.0, 1.0);
            data.push((val * 255.0).round() as u8);
        }
    }
    RawRaster::from_u8(side, side, data)
}

/// Renders a dataset; image `i` belongs to class `i mod 8`, the first
/// `num_train` images form the training split.
pub fn generate(config: &SynthConfig) -> SynthDataset {
    assert!(config.num_train <= config.num_images);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut train = Vec::with_capacity(config.num_train);
    let mut test = Vec::with_capacity(config.num_images - config.num_train);
    for i in 0..config.num_images {
        let class = i % NUM_CLASSES;
        let img = SynthImage {
            image_id: format!("syn{i:04}"),
            class,
            code: class_code(class),
            raster: render(&CLASSES[class], config.side, config.noise_std, &mut rng),
        };
        if i < config.num_train {
            train.push(img);
        } else {
            test.push(img);
        }
    }
    SynthDataset { train, test }
}

/// Writes PGM files plus `train.tsv` and `test.tsv` manifests into `dir`.
/// Returns the two manifest paths.
pub fn write_dataset(
    dataset: &SynthDataset,
    dir: &Path,
) -> Result<(PathBuf, PathBuf), ImageIoError> {
    let img_dir = dir.join("images");
    fs::create_dir_all(&img_dir)?;
    let mut paths = Vec::new();
    for (name, split) in [("train.tsv", &dataset.train), ("test.tsv", &dataset.test)] {
        let mut manifest = DatasetManifest::default();
        for img in split {
            let path = img_dir.join(format!("{}.pgm", img.image_id));
            write_pgm(&path, &img.raster)?;
            manifest.entries.push(ManifestEntry {
                image_id: img.image_id.clone(),
                image_path: path,
                irma_code: Some(img.code.clone()),
            });
        }
        let mpath = dir.join(name);
        fs::write(&mpath, manifest.render(dir))?;
        paths.push(mpath);
    }
    Ok((paths[0].clone(), paths[1].clone()))
}
