//! IRMA codes and the hierarchical retrieval error.
//!
//! A code has four axes (technique, direction, anatomy, biology) of three or
//! four characters from `0-9a-z`. A mismatch at position `h` of an axis marks
//! every later position of that axis wrong too. Position `i` of axis `j`
//! weighs `1 / (b_{j,i} · i)`, where `b` is the branching factor there.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const NUM_AXES: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IrmaError {
    #[error("malformed IRMA code {code:?}: {reason}")]
    MalformedCode { code: String, reason: String },
    #[error("empty code set")]
    EmptyCodeSet,
    #[error("axis length mismatch: {0:?} vs {1:?}")]
    LengthMismatch(String, String),
    #[error("no branching entry for axis {axis}, position {position}")]
    MissingBranchEntry { axis: usize, position: usize },
    #[error("empty pair list")]
    EmptyPairs,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IrmaCode {
    axes: [String; NUM_AXES],
}

impl IrmaCode {
    pub fn axes(&self) -> &[String; NUM_AXES] {
        &self.axes
    }

    pub fn axis(&self, j: usize) -> &str {
        &self.axes[j]
    }
}

impl fmt::Display for IrmaCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.axes.join("-"))
    }
}

impl FromStr for IrmaCode {
    type Err = IrmaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_irma(s)
    }
}

pub fn parse_irma(text: &str) -> Result<IrmaCode, IrmaError> {
    let malformed = |reason: String| IrmaError::MalformedCode {
        code: text.to_string(),
        reason,
    };
    let parts: Vec<&str> = text.trim().split('-').collect();
    if parts.len() != NUM_AXES {
        return Err(malformed(format!("expected 4 axes, found {}", parts.len())));
    }
    for (j, p) in parts.iter().enumerate() {
        if p.is_empty() {
            return Err(malformed(format!("axis {} is empty", j + 1)));
        }
        if !(3..=4).contains(&p.len()) {
            return Err(malformed(format!(
                "axis {} has {} characters, expected 3 or 4",
                j + 1,
                p.len()
            )));
        }
        if let Some(c) = p
            .chars()
            .find(|c| !(c.is_ascii_digit() || c.is_ascii_lowercase()))
        {
            return Err(malformed(format!("invalid character {c:?}")));
        }
    }
    Ok(IrmaCode {
        axes: [0, 1, 2, 3].map(|j| parts[j].to_string()),
    })
}

/// Branch count per (axis, position), both 1-based.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BranchingTable {
    counts: BTreeMap<(usize, usize), u32>,
}

impl BranchingTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets an entry; counts below 1 are floored to 1.
    pub fn set(&mut self, axis: usize, position: usize, count: u32) {
        assert!(
            (1..=NUM_AXES).contains(&axis) && position >= 1,
            "axis and position are 1-based"
        );
        self.counts.insert((axis, position), count.max(1));
    }

    pub fn get(&self, axis: usize, position: usize) -> Option<u32> {
        self.counts.get(&(axis, position)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.counts.iter().map(|(&(a, p), &c)| (a, p, c))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Derives branch counts from observed codes: at each position, the number of
/// distinct characters following any one prefix, maximized over prefixes.
pub fn build_branching<'a, I>(codes: I) -> Result<BranchingTable, IrmaError>
where
    I: IntoIterator<Item = &'a IrmaCode>,
{
    let codes: Vec<&IrmaCode> = codes.into_iter().collect();
    if codes.is_empty() {
        return Err(IrmaError::EmptyCodeSet);
    }
    let mut table = BranchingTable::new();
    for j in 0..NUM_AXES {
        let axes: Vec<&[u8]> = codes.iter().map(|c| c.axes[j].as_bytes()).collect();
        let max_len = axes.iter().map(|a| a.len()).max().unwrap_or(0);
        for i in 0..max_len {
            let mut children: HashMap<&[u8], BTreeSet<u8>> = HashMap::new();
            for a in axes.iter().filter(|a| a.len() > i) {
                children.entry(&a[..i]).or_default().insert(a[i]);
            }
            let b = children.values().map(BTreeSet::len).max().unwrap_or(1);
            table.set(j + 1, i + 1, b as u32);
        }
    }
    Ok(table)
}

/// `δ_i = 1` iff some position `h ≤ i` mismatches.
pub fn delta_vector(truth: &str, retrieved: &str) -> Result<Vec<u8>, IrmaError> {
    if truth.len() != retrieved.len() {
        return Err(IrmaError::LengthMismatch(
            truth.to_string(),
            retrieved.to_string(),
        ));
    }
    let mut wrong = false;
    Ok(truth
        .bytes()
        .zip(retrieved.bytes())
        .map(|(a, b)| {
            wrong |= a != b;
            u8::from(wrong)
        })
        .collect())
}

/// Error between the true code of a query and the code of its first hit.
pub fn image_error(
    truth: &IrmaCode,
    retrieved: &IrmaCode,
    table: &BranchingTable,
) -> Result<f64, IrmaError> {
    let mut total = 0.0;
    for j in 0..NUM_AXES {
        let delta = delta_vector(&truth.axes[j], &retrieved.axes[j])?;
        for (i, &d) in delta.iter().enumerate() {
            let position = i + 1;
            let b = table
                .get(j + 1, position)
                .ok_or(IrmaError::MissingBranchEntry {
                    axis: j + 1,
                    position,
                })?;
            if d == 1 {
                total += 1.0 / (f64::from(b) * position as f64);
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub total_error: f64,
    pub per_image_errors: Vec<(String, f64)>,
}

impl ErrorReport {
    pub fn num_images(&self) -> usize {
        self.per_image_errors.len()
    }
}

/// Sums `image_error` over `(image_id, truth, retrieved)` triples in order.
pub fn total_error<'a, I>(pairs: I, table: &BranchingTable) -> Result<ErrorReport, IrmaError>
where
    I: IntoIterator<Item = (&'a str, &'a IrmaCode, &'a IrmaCode)>,
{
    let mut per_image_errors = Vec::new();
    let mut total_error = 0.0;
    for (id, truth, retrieved) in pairs {
        let e = image_error(truth, retrieved, table)?;
        total_error += e;
        per_image_errors.push((id.to_string(), e));
    }
    if per_image_errors.is_empty() {
        return Err(IrmaError::EmptyPairs);
    }
    Ok(ErrorReport {
        total_error,
        per_image_errors,
    })
}
