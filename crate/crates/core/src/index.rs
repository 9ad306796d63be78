//! Hamming-space retrieval over a homogeneous barcode collection.
//!
//! `search_exhaustive` is the exact k-NN scan used for evaluation.
//! `LshTables` is a bit-sampling accelerator: every table hashes a barcode by
//! a fixed random subset of its bit positions.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::barcode::{BarcodeError, BitVec, Method};

pub const DEFAULT_LSH_TABLES: usize = 30;
pub const DEFAULT_KEY_FRACTION: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("barcode length mismatch: index holds {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("method mismatch: index holds {expected}, got {got}")]
    MethodMismatch { expected: Method, got: Method },
    #[error("duplicate image id {0:?}")]
    DuplicateId(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid LSH configuration: {0}")]
    InvalidConfig(String),
}

impl From<BarcodeError> for IndexError {
    fn from(e: BarcodeError) -> Self {
        match e {
            BarcodeError::LengthMismatch(expected, got) => {
                IndexError::LengthMismatch { expected, got }
            }
            other => IndexError::InvalidConfig(other.to_string()),
        }
    }
}

/// One search result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hit {
    pub image_id: String,
    pub distance: u32,
}

fn rank_order(a: &Hit, b: &Hit) -> Ordering {
    a.distance
        .cmp(&b.distance)
        .then_with(|| a.image_id.cmp(&b.image_id))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BarcodeIndex {
    method: Method,
    barcode_length: usize,
    ids: Vec<String>,
    codes: Vec<BitVec>,
    seen: HashSet<String>,
}

impl BarcodeIndex {
    pub fn new(method: Method, barcode_length: usize) -> Self {
        BarcodeIndex {
            method,
            barcode_length,
            ids: Vec::new(),
            codes: Vec::new(),
            seen: HashSet::new(),
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn barcode_length(&self) -> usize {
        self.barcode_length
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, image_id: impl Into<String>, code: BitVec) -> Result<(), IndexError> {
        let image_id = image_id.into();
        if code.len() != self.barcode_length {
            return Err(IndexError::LengthMismatch {
                expected: self.barcode_length,
                got: code.len(),
            });
        }
        if !self.seen.insert(image_id.clone()) {
            return Err(IndexError::DuplicateId(image_id));
        }
        self.ids.push(image_id);
        self.codes.push(code);
        Ok(())
    }

    /// Records in insertion order.
    pub fn records(&self) -> impl Iterator<Item = (&str, &BitVec)> {
        self.ids.iter().map(String::as_str).zip(&self.codes)
    }

    pub fn get(&self, i: usize) -> (&str, &BitVec) {
        (&self.ids[i], &self.codes[i])
    }

    fn check_query(&self, query: &BitVec, k: usize) -> Result<(), IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if query.len() != self.barcode_length {
            return Err(IndexError::LengthMismatch {
                expected: self.barcode_length,
                got: query.len(),
            });
        }
        Ok(())
    }

    fn hit(&self, i: usize, query: &BitVec) -> Hit {
        Hit {
            image_id: self.ids[i].clone(),
            distance: self.codes[i]
                .hamming(query)
                .expect("lengths validated on insert and query"),
        }
    }

    /// Exact k nearest neighbours, ascending distance then ascending id.
    pub fn search_exhaustive(&self, query: &BitVec, k: usize) -> Result<Vec<Hit>, IndexError> {
        self.check_query(query, k)?;
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let mut hits: Vec<Hit> = if self.len() >= 4096 {
            (0..self.len())
                .into_par_iter()
                .map(|i| self.hit(i, query))
                .collect()
        } else {
            (0..self.len()).map(|i| self.hit(i, query)).collect()
        };
        hits.sort_unstable_by(rank_order);
        hits.truncate(k);
        Ok(hits)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LshConfig {
    pub num_tables: usize,
    pub key_size: usize,
    pub seed: u64,
}

impl LshConfig {
    /// 30 tables, key of a third of the barcode length.
    pub fn for_length(barcode_length: usize, seed: u64) -> Self {
        LshConfig {
            num_tables: DEFAULT_LSH_TABLES,
            key_size: (barcode_length / DEFAULT_KEY_FRACTION).max(1),
            seed,
        }
    }

    pub fn validate(&self, barcode_length: usize) -> Result<(), IndexError> {
        if self.num_tables == 0 {
            return Err(IndexError::InvalidConfig("num_tables must be ≥ 1".into()));
        }
        if self.key_size == 0 || self.key_size > barcode_length {
            return Err(IndexError::InvalidConfig(format!(
                "key_size {} must lie in 1..={barcode_length}",
                self.key_size
            )));
        }
        Ok(())
    }
}

/// Bucketed bit-sampling hash tables over a `BarcodeIndex`.
#[derive(Debug, Clone)]
pub struct LshTables {
    config: LshConfig,
    barcode_length: usize,
    positions: Vec<Vec<usize>>,
    buckets: Vec<HashMap<BitVec, Vec<usize>>>,
}

/// Draws `num_tables` sets of `key_size` distinct positions from the seed.
pub fn sample_positions(config: &LshConfig, barcode_length: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.num_tables)
        .map(|_| sample(&mut rng, barcode_length, config.key_size).into_vec())
        .collect()
}

fn project(code: &BitVec, positions: &[usize]) -> BitVec {
    BitVec::from_bools(positions.iter().map(|&p| code.get(p)))
}

impl LshTables {
    pub fn build(index: &BarcodeIndex, config: &LshConfig) -> Result<Self, IndexError> {
        config.validate(index.barcode_length())?;
        let positions = sample_positions(config, index.barcode_length());
        Self::with_positions(index, config.clone(), positions)
    }

    /// Rebuilds tables from explicitly given sample positions (e.g. a sidecar).
    pub fn with_positions(
        index: &BarcodeIndex,
        config: LshConfig,
        positions: Vec<Vec<usize>>,
    ) -> Result<Self, IndexError> {
        config.validate(index.barcode_length())?;
        if positions.len() != config.num_tables {
            return Err(IndexError::InvalidConfig(format!(
                "{} position sets for {} tables",
                positions.len(),
                config.num_tables
            )));
        }
        for set in &positions {
            let distinct: BTreeSet<_> = set.iter().collect();
            if set.len() != config.key_size
                || distinct.len() != set.len()
                || set.iter().any(|&p| p >= index.barcode_length())
            {
                return Err(IndexError::InvalidConfig(
                    "sampled positions must be distinct, in range and key_size long".into(),
                ));
            }
        }
        let buckets = positions
            .iter()
            .map(|pos| {
                let mut table: HashMap<BitVec, Vec<usize>> = HashMap::new();
                for (i, (_, code)) in index.records().enumerate() {
                    table.entry(project(code, pos)).or_default().push(i);
                }
                table
            })
            .collect();
        Ok(LshTables {
            config,
            barcode_length: index.barcode_length(),
            positions,
            buckets,
        })
    }

    pub fn config(&self) -> &LshConfig {
        &self.config
    }

    pub fn positions(&self) -> &[Vec<usize>] {
        &self.positions
    }

    /// Record indices sharing a bucket with `code` in table `t`.
    pub fn bucket_of(&self, t: usize, code: &BitVec) -> &[usize] {
        self.buckets[t]
            .get(&project(code, &self.positions[t]))
            .map_or(&[], Vec::as_slice)
    }

    /// Union of the query's buckets, re-ranked by exact Hamming distance.
    /// Returns an empty list when no bucket matches.
    pub fn search(
        &self,
        index: &BarcodeIndex,
        query: &BitVec,
        k: usize,
    ) -> Result<Vec<Hit>, IndexError> {
        index.check_query(query, k)?;
        if index.barcode_length() != self.barcode_length {
            return Err(IndexError::LengthMismatch {
                expected: self.barcode_length,
                got: index.barcode_length(),
            });
        }
        let candidates: BTreeSet<usize> = (0..self.positions.len())
            .flat_map(|t| self.bucket_of(t, query).iter().copied())
            .collect();
        let mut hits: Vec<Hit> = candidates
            .into_iter()
            .map(|i| index.hit(i, query))
            .collect();
        hits.sort_unstable_by(rank_order);
        hits.truncate(k);
        Ok(hits)
    }
}
