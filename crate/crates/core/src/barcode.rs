//! Binary barcodes: classical Radon barcodes (median thresholding per angle)
//! and autoencoded Radon barcodes (hidden-layer activations cut at 0.5).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::autoencoder::AutoencoderModel;
use crate::radon::RadonFeatures;

/// Activation level at or above which a hidden neuron emits a 1.
pub const ACTIVATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BarcodeError {
    #[error("barcode length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("input dimension {got} does not match model input {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("hidden layer {layer} out of range 1..={hidden}")]
    LayerOutOfRange { layer: usize, hidden: usize },
    #[error("invalid bit character {0:?}")]
    InvalidBit(char),
    #[error("invalid method tag {0:?}")]
    InvalidMethod(String),
}

/// Fixed-length bit vector packed into 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    words: Vec<u64>,
    len: usize,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for b in bits {
            if len % 64 == 0 {
                words.push(0);
            }
            if b {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        BitVec { words, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Popcount of the XOR; lengths must agree.
    pub fn hamming(&self, other: &BitVec) -> Result<u32, BarcodeError> {
        if self.len != other.len {
            return Err(BarcodeError::LengthMismatch(self.len, other.len));
        }
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum())
    }

    /// `0`/`1` characters, position 0 first.
    pub fn to_bitstring(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    pub fn parse_bitstring(s: &str) -> Result<Self, BarcodeError> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(BarcodeError::InvalidBit(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitVec::from_bools)
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({})", self.to_bitstring())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Median-thresholded Radon projections.
    Rbc,
    /// Thresholded activations of the given 1-based hidden layer.
    Arbc(usize),
}

impl Method {
    pub fn layer_index(&self) -> Option<usize> {
        match self {
            Method::Rbc => None,
            Method::Arbc(l) => Some(*l),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Rbc => f.write_str("RBC"),
            Method::Arbc(l) => write!(f, "ARBC:{l}"),
        }
    }
}

impl FromStr for Method {
    type Err = BarcodeError;

    /// Accepts `RBC`, `ARBC:N` (case-insensitive); N ≥ 1.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BarcodeError::InvalidMethod(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        if lower == "rbc" {
            return Ok(Method::Rbc);
        }
        let layer = lower.strip_prefix("arbc:").ok_or_else(bad)?;
        match layer.parse::<usize>() {
            Ok(l) if l >= 1 => Ok(Method::Arbc(l)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Barcode {
    bits: BitVec,
    method: Method,
}

impl Barcode {
    pub fn new(bits: BitVec, method: Method) -> Self {
        Barcode { bits, method }
    }

    pub fn bits(&self) -> &BitVec {
        &self.bits
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn layer_index(&self) -> Option<usize> {
        self.method.layer_index()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Median of the nonzero entries; `None` when every entry is zero.
/// An even count takes the mean of the two middle values.
pub fn nonzero_median(values: &[f64]) -> Option<f64> {
    let mut nz: Vec<f64> = values.iter().copied().filter(|&v| v != 0.0).collect();
    if nz.is_empty() {
        return None;
    }
    nz.sort_by(f64::total_cmp);
    let n = nz.len();
    Some(if n % 2 == 1 {
        nz[n / 2]
    } else {
        (nz[n / 2 - 1] + nz[n / 2]) / 2.0
    })
}

/// Classical Radon barcode from raw projections.
pub fn rbc_encode(features: &RadonFeatures) -> Barcode {
    let bits = features.projections().iter().flat_map(|proj| {
        let threshold = nonzero_median(proj);
        proj.iter().map(move |&v| match threshold {
            Some(t) => v >= t,
            None => false,
        })
    });
    Barcode::new(BitVec::from_bools(bits), Method::Rbc)
}

/// Autoencoded Radon barcode read off hidden layer `layer_index` (1-based).
pub fn arbc_encode(
    model: &AutoencoderModel,
    input: &[f64],
    layer_index: usize,
) -> Result<Barcode, BarcodeError> {
    let hidden = model.num_hidden();
    if layer_index == 0 || layer_index > hidden {
        return Err(BarcodeError::LayerOutOfRange {
            layer: layer_index,
            hidden,
        });
    }
    if input.len() != model.input_dim() {
        return Err(BarcodeError::DimensionMismatch {
            expected: model.input_dim(),
            got: input.len(),
        });
    }
    let activations = model.forward(input).expect("input dimension checked above");
    Ok(binarize_activations(&activations[layer_index], layer_index))
}

/// Thresholds sigmoid outputs at 0.5 (ties map to 1).
pub fn binarize_activations(activations: &[f64], layer_index: usize) -> Barcode {
    Barcode::new(
        BitVec::from_bools(activations.iter().map(|&a| a >= ACTIVATION_THRESHOLD)),
        Method::Arbc(layer_index),
    )
}

pub fn hamming_distance(a: &Barcode, b: &Barcode) -> Result<u32, BarcodeError> {
    a.bits.hamming(&b.bits)
}
