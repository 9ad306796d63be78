//! Text persistence for models, barcode indexes, LSH sidecars, branching
//! tables, error reports and loss traces.
//!
//! Every versioned artifact starts with a `MAGIC vN` header line. Files are
//! written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::autoencoder::{AutoencoderModel, Matrix};
use crate::barcode::{BitVec, Method};
use crate::index::{BarcodeIndex, LshConfig};
use crate::irma::{BranchingTable, ErrorReport, NUM_AXES};

pub const MODEL_MAGIC: &str = "ARBC-MODEL";
pub const INDEX_MAGIC: &str = "ARBC-INDEX";
pub const LSH_MAGIC: &str = "LSH";
pub const BRANCH_MAGIC: &str = "ARBC-BRANCH";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("format error at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("{magic} version {found} is not supported (expected v{FORMAT_VERSION})")]
    VersionMismatch { magic: String, found: String },
}

fn format_err(line: usize, reason: impl Into<String>) -> StoreError {
    StoreError::Format {
        line,
        reason: reason.into(),
    }
}

/// Writes `contents` to `path` through a temporary file and an atomic rename.
pub fn write_atomic(path: impl AsRef<Path>, contents: &str) -> Result<(), StoreError> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| StoreError::Io(e.error))?;
    Ok(())
}

/// Line cursor that tracks 1-based line numbers for error messages.
struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next_line(&mut self, what: &str) -> Result<&'a str, StoreError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l.trim_end_matches('\r'))
            }
            None => Err(format_err(
                self.last + 1,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }

    fn err(&self, reason: impl Into<String>) -> StoreError {
        format_err(self.last, reason)
    }

    fn expect_end(&mut self) -> Result<(), StoreError> {
        for (i, l) in self.inner.by_ref() {
            if !l.trim().is_empty() {
                return Err(format_err(i + 1, "trailing content"));
            }
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(lines: &Lines<'_>, s: &str, what: &str) -> Result<T, StoreError> {
    s.trim()
        .parse()
        .map_err(|_| lines.err(format!("invalid {what}: {s:?}")))
}

fn check_header(lines: &mut Lines<'_>, magic: &str) -> Result<(), StoreError> {
    let line = lines.next_line("header")?;
    let mut parts = line.split_whitespace();
    let found_magic = parts.next().unwrap_or("");
    if found_magic != magic {
        return Err(lines.err(format!("expected {magic} header, found {line:?}")));
    }
    let version = parts.next().unwrap_or("");
    if version != format!("v{FORMAT_VERSION}") || parts.next().is_some() {
        return Err(StoreError::VersionMismatch {
            magic: magic.to_string(),
            found: version.to_string(),
        });
    }
    Ok(())
}

fn join_floats(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        // `{}` on f64 is the shortest string that parses back to the same bits
        write!(s, "{v}").expect("writing to a String");
    }
    s
}

fn parse_floats(lines: &Lines<'_>, line: &str, expected: usize) -> Result<Vec<f64>, StoreError> {
    let values = line
        .split_whitespace()
        .map(|t| parse_num::<f64>(lines, t, "float"))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(lines.err(format!(
            "expected {expected} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

// --- models ---------------------------------------------------------------

pub fn model_to_string(model: &AutoencoderModel) -> String {
    let mut out = format!("{MODEL_MAGIC} v{FORMAT_VERSION}\n");
    let dims: Vec<String> = model.layer_dims().iter().map(usize::to_string).collect();
    out.push_str(&dims.join(" "));
    out.push('\n');
    for (w, b) in model.weights().iter().zip(model.biases()) {
        writeln!(out, "W {} {}", w.rows(), w.cols()).unwrap();
        for r in 0..w.rows() {
            out.push_str(&join_floats(w.row(r)));
            out.push('\n');
        }
        writeln!(out, "b {}", b.len()).unwrap();
        out.push_str(&join_floats(b));
        out.push('\n');
    }
    out
}

pub fn model_from_str(text: &str) -> Result<AutoencoderModel, StoreError> {
    let mut lines = Lines::new(text);
    check_header(&mut lines, MODEL_MAGIC)?;
    let dims_line = lines.next_line("layer dimensions")?;
    let dims = dims_line
        .split_whitespace()
        .map(|t| parse_num::<usize>(&lines, t, "layer size"))
        .collect::<Result<Vec<_>, _>>()?;
    if dims.len() < 2 {
        return Err(lines.err("need at least two layer sizes"));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for k in 0..dims.len() - 1 {
        let head = lines.next_line("weight header")?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "W" {
            return Err(lines.err(format!("expected `W rows cols`, found {head:?}")));
        }
        let rows: usize = parse_num(&lines, parts[1], "row count")?;
        let cols: usize = parse_num(&lines, parts[2], "column count")?;
        if (rows, cols) != (dims[k + 1], dims[k]) {
            return Err(lines.err(format!(
                "layer {k} weight shape {rows}x{cols} does not match dims {:?}",
                dims
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = lines.next_line("weight row")?;
            data.extend(parse_floats(&lines, l, cols)?);
        }
        weights.push(Matrix::from_vec(rows, cols, data));

        let head = lines.next_line("bias header")?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 2 || parts[0] != "b" {
            return Err(lines.err(format!("expected `b rows`, found {head:?}")));
        }
        let n: usize = parse_num(&lines, parts[1], "bias length")?;
        if n != rows {
            return Err(lines.err(format!("bias length {n} does not match {rows} rows")));
        }
        let l = lines.next_line("bias values")?;
        biases.push(parse_floats(&lines, l, n)?);
    }
    lines.expect_end()?;
    AutoencoderModel::from_parts(dims, weights, biases).map_err(|e| format_err(2, e.to_string()))
}

pub fn save_model(model: &AutoencoderModel, path: impl AsRef<Path>) -> Result<(), StoreError> {
    write_atomic(path, &model_to_string(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AutoencoderModel, StoreError> {
    model_from_str(&fs::read_to_string(path)?)
}

// --- barcode indexes ------------------------------------------------------

/// Generation parameters stored alongside an index so that queries encoded
/// under a different configuration can be rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexParams {
    pub side: usize,
    pub num_angles: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredIndex {
    pub params: IndexParams,
    pub index: BarcodeIndex,
}

pub fn index_to_string(stored: &StoredIndex) -> String {
    let idx = &stored.index;
    let method = idx.method();
    let mut out = format!("{INDEX_MAGIC} v{FORMAT_VERSION}\n");
    writeln!(out, "side\t{}", stored.params.side).unwrap();
    writeln!(out, "angles\t{}", stored.params.num_angles).unwrap();
    writeln!(out, "method\t{method}").unwrap();
    writeln!(out, "length\t{}", idx.barcode_length()).unwrap();
    writeln!(out, "count\t{}", idx.len()).unwrap();
    for (id, code) in idx.records() {
        writeln!(out, "{id}\t{method}\t{}", code.to_bitstring()).unwrap();
    }
    out
}

fn keyed<'a>(lines: &mut Lines<'a>, key: &str) -> Result<&'a str, StoreError> {
    let l = lines.next_line(key)?;
    match l.split_once('\t') {
        Some((k, v)) if k == key => Ok(v),
        _ => Err(lines.err(format!("expected `{key}<TAB>value`, found {l:?}"))),
    }
}

pub fn index_from_str(text: &str) -> Result<StoredIndex, StoreError> {
    let mut lines = Lines::new(text);
    check_header(&mut lines, INDEX_MAGIC)?;
    let v = keyed(&mut lines, "side")?;
    let side = parse_num(&lines, v, "side")?;
    let v = keyed(&mut lines, "angles")?;
    let num_angles = parse_num(&lines, v, "angle count")?;
    let method_str = keyed(&mut lines, "method")?;
    let method: Method = method_str.parse().map_err(|e| lines.err(format!("{e}")))?;
    let v = keyed(&mut lines, "length")?;
    let length: usize = parse_num(&lines, v, "length")?;
    let v = keyed(&mut lines, "count")?;
    let count: usize = parse_num(&lines, v, "count")?;

    let mut index = BarcodeIndex::new(method, length);
    for _ in 0..count {
        let l = lines.next_line("barcode record")?;
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 3 {
            return Err(lines.err("expected `image_id<TAB>method<TAB>bits`"));
        }
        let rec_method: Method = fields[1].parse().map_err(|e| lines.err(format!("{e}")))?;
        if rec_method != method {
            return Err(lines.err(format!("record method {rec_method} differs from {method}")));
        }
        let bits = BitVec::parse_bitstring(fields[2]).map_err(|e| lines.err(e.to_string()))?;
        if fields[0].is_empty() {
            return Err(lines.err("empty image id"));
        }
        index
            .insert(fields[0], bits)
            .map_err(|e| lines.err(e.to_string()))?;
    }
    lines.expect_end()?;
    Ok(StoredIndex {
        params: IndexParams { side, num_angles },
        index,
    })
}

pub fn save_index(stored: &StoredIndex, path: impl AsRef<Path>) -> Result<(), StoreError> {
    write_atomic(path, &index_to_string(stored))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<StoredIndex, StoreError> {
    index_from_str(&fs::read_to_string(path)?)
}

// --- LSH sidecars ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LshSidecar {
    pub config: LshConfig,
    pub positions: Vec<Vec<usize>>,
}

pub fn lsh_to_string(sidecar: &LshSidecar) -> String {
    let c = &sidecar.config;
    let mut out = format!(
        "{LSH_MAGIC} v{FORMAT_VERSION}\n{}\n{}\n{}\n",
        c.num_tables, c.key_size, c.seed
    );
    for pos in &sidecar.positions {
        let s: Vec<String> = pos.iter().map(usize::to_string).collect();
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    out
}

pub fn lsh_from_str(text: &str) -> Result<LshSidecar, StoreError> {
    let mut lines = Lines::new(text);
    check_header(&mut lines, LSH_MAGIC)?;
    let v = lines.next_line("num_tables")?;
    let num_tables: usize = parse_num(&lines, v, "num_tables")?;
    let v = lines.next_line("key_size")?;
    let key_size: usize = parse_num(&lines, v, "key_size")?;
    let v = lines.next_line("seed")?;
    let seed: u64 = parse_num(&lines, v, "seed")?;
    if num_tables == 0 || key_size == 0 {
        return Err(lines.err("num_tables and key_size must be positive"));
    }
    let mut positions = Vec::with_capacity(num_tables);
    for _ in 0..num_tables {
        let l = lines.next_line("table positions")?;
        let pos = l
            .split_whitespace()
            .map(|t| parse_num::<usize>(&lines, t, "position"))
            .collect::<Result<Vec<_>, _>>()?;
        if pos.len() != key_size {
            return Err(lines.err(format!(
                "expected {key_size} positions, found {}",
                pos.len()
            )));
        }
        positions.push(pos);
    }
    lines.expect_end()?;
    Ok(LshSidecar {
        config: LshConfig {
            num_tables,
            key_size,
            seed,
        },
        positions,
    })
}

pub fn save_lsh(sidecar: &LshSidecar, path: impl AsRef<Path>) -> Result<(), StoreError> {
    write_atomic(path, &lsh_to_string(sidecar))
}

pub fn load_lsh(path: impl AsRef<Path>) -> Result<LshSidecar, StoreError> {
    lsh_from_str(&fs::read_to_string(path)?)
}

// --- branching tables -----------------------------------------------------

pub fn branching_to_string(table: &BranchingTable) -> String {
    let mut out = format!("{BRANCH_MAGIC} v{FORMAT_VERSION}\n");
    for (axis, pos, count) in table.entries() {
        writeln!(out, "{axis}\t{pos}\t{count}").unwrap();
    }
    out
}

/// Parses a branching table. The header line may be omitted so that tables
/// produced elsewhere (bare `axis<TAB>position<TAB>count` lines) load too;
/// `#` comment lines are skipped.
pub fn branching_from_str(text: &str) -> Result<BranchingTable, StoreError> {
    let mut table = BranchingTable::new();
    let mut saw_content = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_content && line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            let mut header = Lines::new(line);
            check_header(&mut header, BRANCH_MAGIC).map_err(|e| match e {
                StoreError::Format { reason, .. } => format_err(lineno, reason),
                other => other,
            })?;
            saw_content = true;
            continue;
        }
        saw_content = true;
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(format_err(lineno, "expected `axis<TAB>position<TAB>count`"));
        }
        let nums = fields
            .iter()
            .map(|f| f.parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| format_err(lineno, format!("non-numeric field in {line:?}")))?;
        let (axis, pos, count) = (nums[0] as usize, nums[1] as usize, nums[2]);
        if !(1..=NUM_AXES).contains(&axis) || pos == 0 {
            return Err(format_err(
                lineno,
                format!("axis {axis} / position {pos} out of range"),
            ));
        }
        if count == 0 {
            return Err(format_err(lineno, "branch count must be at least 1"));
        }
        if table.get(axis, pos).is_some() {
            return Err(format_err(
                lineno,
                format!("duplicate entry for axis {axis}, position {pos}"),
            ));
        }
        table.set(axis, pos, count);
    }
    Ok(table)
}

pub fn save_branching(table: &BranchingTable, path: impl AsRef<Path>) -> Result<(), StoreError> {
    write_atomic(path, &branching_to_string(table))
}

pub fn load_branching(path: impl AsRef<Path>) -> Result<BranchingTable, StoreError> {
    branching_from_str(&fs::read_to_string(path)?)
}

// --- reports and traces ---------------------------------------------------

pub fn report_to_string(report: &ErrorReport) -> String {
    let mut out = format!("TOTAL\t{}\n", report.total_error);
    for (id, e) in &report.per_image_errors {
        writeln!(out, "{id}\t{e}").unwrap();
    }
    out
}

pub fn report_from_str(text: &str) -> Result<ErrorReport, StoreError> {
    let mut lines = Lines::new(text);
    let total = keyed(&mut lines, "TOTAL")?;
    let total_error: f64 = parse_num(&lines, total, "total")?;
    let mut per_image_errors = Vec::new();
    for (i, l) in text.lines().enumerate().skip(1) {
        if l.trim().is_empty() {
            continue;
        }
        let (id, v) = l
            .split_once('\t')
            .ok_or_else(|| format_err(i + 1, "expected `image_id<TAB>value`"))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| format_err(i + 1, format!("invalid value {v:?}")))?;
        per_image_errors.push((id.to_string(), v));
    }
    Ok(ErrorReport {
        total_error,
        per_image_errors,
    })
}

pub fn loss_trace_to_string(trace: &[f64]) -> String {
    let mut out = String::new();
    for (e, l) in trace.iter().enumerate() {
        writeln!(out, "{}\t{l}", e + 1).unwrap();
    }
    out
}
