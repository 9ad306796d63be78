//! Discrete Radon projections by nearest-bin pixel binning.
//!
//! Pixel centres sit at half-integer offsets from the image centre (x to the
//! right, y up). For an angle θ every pixel adds its full intensity to the bin
//! nearest to `ρ = x·cosθ + y·sinθ`. Bins have unit spacing and are centred on
//! `ρ = 0`, so each projection sums to the total image intensity.

use crate::imageio::NormalizedImage;
use thiserror::Error;

pub const DEFAULT_NUM_ANGLES: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RadonError {
    #[error("number of projection angles must be at least 1")]
    NoAngles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RadonConfig {
    num_angles: usize,
}

impl Default for RadonConfig {
    fn default() -> Self {
        RadonConfig {
            num_angles: DEFAULT_NUM_ANGLES,
        }
    }
}

impl RadonConfig {
    pub fn new(num_angles: usize) -> Result<Self, RadonError> {
        if num_angles == 0 {
            return Err(RadonError::NoAngles);
        }
        Ok(RadonConfig { num_angles })
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    /// Projection angles in degrees: `k·180/n` for `k = 0..n`.
    pub fn angles_deg(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_angles).map(move |k| k as f64 * 180.0 / self.num_angles as f64)
    }
}

/// Number of bins per projection for a `side × side` image.
pub fn bins_per_angle(side: usize) -> usize {
    2 * half_bins(side) + 1
}

fn half_bins(side: usize) -> usize {
    (side as f64 * std::f64::consts::SQRT_2 / 2.0).ceil() as usize
}

/// Length of the flattened feature vector.
pub fn feature_len(side: usize, num_angles: usize) -> usize {
    num_angles * bins_per_angle(side)
}

// cos/sin for an angle in [0, 180). Angles past 90° are derived from the
// angle 90° below, so the projection at θ+90° is an exact rotation of the one
// at θ.
fn direction(angle_deg: f64) -> (f64, f64) {
    if angle_deg >= 90.0 {
        let (c, s) = base_direction(angle_deg - 90.0);
        (-s, c)
    } else {
        base_direction(angle_deg)
    }
}

fn base_direction(angle_deg: f64) -> (f64, f64) {
    if angle_deg == 0.0 {
        (1.0, 0.0)
    } else {
        let (s, c) = angle_deg.to_radians().sin_cos();
        (c, s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadonFeatures {
    num_angles: usize,
    bins: usize,
    projections: Vec<Vec<f64>>,
    angle_maxima: Vec<f64>,
    normalized: Option<Vec<Vec<f64>>>,
}

impl RadonFeatures {
    /// Wraps externally produced raw projections (all rows equal length,
    /// nonnegative values).
    pub fn from_raw(projections: Vec<Vec<f64>>) -> Self {
        let bins = projections.first().map_or(0, Vec::len);
        assert!(
            projections.iter().all(|p| p.len() == bins),
            "ragged projections"
        );
        assert!(
            projections.iter().flatten().all(|&v| v >= 0.0),
            "negative projection value"
        );
        let angle_maxima = projections
            .iter()
            .map(|p| p.iter().copied().fold(0.0, f64::max))
            .collect();
        RadonFeatures {
            num_angles: projections.len(),
            bins,
            projections,
            angle_maxima,
            normalized: None,
        }
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn bins_per_angle(&self) -> usize {
        self.bins
    }

    pub fn projections(&self) -> &[Vec<f64>] {
        &self.projections
    }

    pub fn angle_maxima(&self) -> &[f64] {
        &self.angle_maxima
    }

    pub fn normalized(&self) -> Option<&[Vec<f64>]> {
        self.normalized.as_deref()
    }
}

/// Raw projections of `image` at every configured angle.
pub fn radon_transform(image: &NormalizedImage, config: &RadonConfig) -> RadonFeatures {
    let side = image.side();
    let half = half_bins(side) as i64;
    let bins = bins_per_angle(side);
    let centre = side as f64 / 2.0;

    let projections = config
        .angles_deg()
        .map(|deg| {
            let (c, s) = direction(deg);
            let mut proj = vec![0.0; bins];
            for row in 0..side {
                let y = centre - (row as f64 + 0.5);
                for col in 0..side {
                    let v = image.at(col, row);
                    if v == 0.0 {
                        continue;
                    }
                    let x = col as f64 + 0.5 - centre;
                    let rho = x * c + y * s;
                    // f64::round is half-away-from-zero, hence odd-symmetric
                    let idx = rho.round() as i64 + half;
                    proj[idx as usize] += v;
                }
            }
            proj
        })
        .collect();
    RadonFeatures::from_raw(projections)
}

/// Divides each projection by its own maximum; all-zero projections stay zero.
pub fn normalize_projections(mut features: RadonFeatures) -> RadonFeatures {
    let normalized = features
        .projections
        .iter()
        .zip(&features.angle_maxima)
        .map(|(p, &max)| {
            if max > 0.0 {
                p.iter().map(|v| v / max).collect()
            } else {
                vec![0.0; p.len()]
            }
        })
        .collect();
    features.normalized = Some(normalized);
    features
}

/// Concatenates the normalized projections in ascending angle order.
///
/// Panics if the features have not been normalized.
pub fn flatten(features: &RadonFeatures) -> Vec<f64> {
    features
        .normalized
        .as_ref()
        .expect("flatten requires normalized projections")
        .iter()
        .flatten()
        .copied()
        .collect()
}

/// Full pipeline from a normalized image to the autoencoder input vector.
pub fn feature_vector(image: &NormalizedImage, config: &RadonConfig) -> Vec<f64> {
    flatten(&normalize_projections(radon_transform(image, config)))
}
