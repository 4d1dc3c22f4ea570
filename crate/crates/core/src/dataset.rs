//! Level-coded categorical datasets: CSV ingestion, synthetic generators,
//! and response simulation.
//!
//! Levels are stored 0-based as `u16` codes in column-major order, one
//! `Vec<u16>` per covariate, because the selection loop scans one covariate
//! column across all rows at a time. Original category labels are kept
//! index-aligned with the codes so ingested data round-trips exactly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::seed::{self, tag};

/// Per-covariate level counts (the number of distinct categories of each
/// covariate). Construction enforces at least one covariate and at least
/// two levels everywhere; a 1-level covariate carries no information and
/// would make the coded design matrix rank-deficient by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSpec {
    q: Vec<u16>,
}

impl LevelSpec {
    /// Builds a spec from per-covariate level counts.
    pub fn new(q: Vec<u16>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidLevels("need at least one covariate".into()));
        }
        if let Some(j) = q.iter().position(|&qj| qj < 2) {
            return Err(Error::InvalidLevels(format!(
                "covariate {j} has {} level(s); at least 2 required",
                q[j]
            )));
        }
        Ok(Self { q })
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.q.len()
    }

    /// Level counts, one per covariate.
    pub fn q(&self) -> &[u16] {
        &self.q
    }

    /// Sum of level counts over covariates.
    pub fn sum_q(&self) -> u64 {
        self.q.iter().map(|&qj| u64::from(qj)).sum()
    }

    /// Number of linear-model parameters: intercept plus `q_j - 1` dummy
    /// coefficients per covariate.
    pub fn num_params(&self) -> usize {
        1 + self.q.iter().map(|&qj| usize::from(qj) - 1).sum::<usize>()
    }

    /// Number of points in the full level-combination domain, or `None` if
    /// the product overflows `u64`.
    pub fn domain_size(&self) -> Option<u64> {
        self.q
            .iter()
            .try_fold(1u64, |acc, &qj| acc.checked_mul(u64::from(qj)))
    }

    /// Iterates every level combination in odometer order (last covariate
    /// fastest). The caller is responsible for capping enormous domains.
    pub fn domain(&self) -> DomainIter<'_> {
        DomainIter {
            q: &self.q,
            next: Some(vec![0; self.q.len()]),
        }
    }
}

/// Serialized as the bare list of level counts.
impl Serialize for LevelSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.q.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LevelSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let q = Vec::<u16>::deserialize(deserializer)?;
        LevelSpec::new(q).map_err(serde::de::Error::custom)
    }
}

/// Iterator over all level combinations of a [`LevelSpec`].
pub struct DomainIter<'a> {
    q: &'a [u16],
    next: Option<Vec<u16>>,
}

impl Iterator for DomainIter<'_> {
    type Item = Vec<u16>;

    fn next(&mut self) -> Option<Vec<u16>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        // Odometer increment; exhausted when every digit wraps.
        for j in (0..self.q.len()).rev() {
            succ[j] += 1;
            if succ[j] < self.q[j] {
                self.next = Some(succ);
                break;
            }
            succ[j] = 0;
        }
        Some(current)
    }
}

/// Dense row-major matrix of level codes, the row view consumed by the
/// balance criterion and the model-matrix codings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelMatrix {
    p: usize,
    data: Vec<u16>,
}

impl LevelMatrix {
    /// Empty matrix with `p` columns.
    pub fn with_columns(p: usize) -> Self {
        Self { p, data: Vec::new() }
    }

    /// Builds a matrix from explicit rows, which must be nonempty and
    /// rectangular.
    pub fn from_rows(rows: &[Vec<u16>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidDataset("level matrix needs at least one row".into()))?;
        let p = first.len();
        let mut m = Self::with_columns(p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} entries, expected {p}",
                    row.len()
                )));
            }
            m.push_row(row);
        }
        Ok(m)
    }

    /// Appends one row. Panics if the width does not match.
    pub fn push_row(&mut self, row: &[u16]) {
        assert_eq!(row.len(), self.p, "row width mismatch");
        self.data.extend_from_slice(row);
    }

    /// Number of rows.
    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.p).unwrap_or(0)
    }

    /// Number of columns.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Borrowed view of row `i`.
    pub fn row(&self, i: usize) -> &[u16] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    /// Iterates rows in order.
    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.data.chunks_exact(self.p)
    }

    /// Checks every code against `spec`.
    pub fn validate(&self, spec: &LevelSpec) -> Result<()> {
        if self.p != spec.p() {
            return Err(Error::InvalidDataset(format!(
                "matrix has {} columns, spec has {}",
                self.p,
                spec.p()
            )));
        }
        for (i, row) in self.rows().enumerate() {
            for (j, (&code, &qj)) in row.iter().zip(spec.q()).enumerate() {
                if code >= qj {
                    return Err(Error::InvalidDataset(format!(
                        "level code {code} out of range at row {i}, covariate {j} (q={qj})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A full dataset: level-coded covariates in column-major storage, label
/// dictionaries for decoding, and an optional response vector. Immutable
/// after construction apart from attaching a response.
#[derive(Debug, Clone)]
pub struct Dataset {
    spec: LevelSpec,
    /// Covariate column names, for CSV round-tripping.
    names: Vec<String>,
    /// labels[j][code] is the original category string for that code.
    labels: Vec<Vec<String>>,
    /// columns[j][i] is the level code of row i, covariate j.
    columns: Vec<Vec<u16>>,
    response: Option<Vec<f64>>,
    response_name: Option<String>,
    /// Lazily built distinct-pattern index, shared by every selection run
    /// on this dataset. Depends only on `columns`, which never change.
    patterns: OnceLock<Patterns>,
}

impl Dataset {
    /// Builds a dataset from column-major level codes, with default names
    /// (`x1..xp`) and numeric labels (`"1".."q_j"`, matching the 1-based
    /// level convention used in documentation).
    pub fn from_columns(spec: LevelSpec, columns: Vec<Vec<u16>>) -> Result<Self> {
        if columns.len() != spec.p() {
            return Err(Error::InvalidDataset(format!(
                "{} columns given, spec has {}",
                columns.len(),
                spec.p()
            )));
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no rows".into()));
        }
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "column {j} has {} rows, expected {n}",
                    col.len()
                )));
            }
            let qj = spec.q()[j];
            if let Some(i) = col.iter().position(|&code| code >= qj) {
                return Err(Error::InvalidDataset(format!(
                    "level code {} out of range at row {i}, covariate {j} (q={qj})",
                    col[i]
                )));
            }
        }
        let names = (1..=spec.p()).map(|j| format!("x{j}")).collect();
        let labels = spec
            .q()
            .iter()
            .map(|&qj| (1..=qj).map(|u| u.to_string()).collect())
            .collect();
        Ok(Self {
            spec,
            names,
            labels,
            columns,
            response: None,
            response_name: None,
            patterns: OnceLock::new(),
        })
    }

    /// Builds a dataset from explicit rows; convenience for fixtures.
    pub fn from_rows(spec: LevelSpec, rows: &[Vec<u16>]) -> Result<Self> {
        let m = LevelMatrix::from_rows(rows)?;
        if m.p() != spec.p() {
            return Err(Error::InvalidDataset(format!(
                "rows have {} entries, spec has {} covariates",
                m.p(),
                spec.p()
            )));
        }
        let mut columns = vec![Vec::with_capacity(m.n_rows()); spec.p()];
        for row in m.rows() {
            for (j, &code) in row.iter().enumerate() {
                columns[j].push(code);
            }
        }
        Self::from_columns(spec, columns)
    }

    /// Number of rows.
    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.spec.p()
    }

    /// The level specification.
    pub fn spec(&self) -> &LevelSpec {
        &self.spec
    }

    /// Column-major view of covariate `j`.
    pub fn column(&self, j: usize) -> &[u16] {
        &self.columns[j]
    }

    /// Level code at row `i`, covariate `j`.
    pub fn level(&self, i: usize, j: usize) -> u16 {
        self.columns[j][i]
    }

    /// Copies row `i` into `buf` (length `p`).
    pub fn copy_row_into(&self, i: usize, buf: &mut [u16]) {
        for (j, slot) in buf.iter_mut().enumerate() {
            *slot = self.columns[j][i];
        }
    }

    /// Gathers the given rows into a dense row-major matrix, preserving
    /// order. Errors on out-of-range indices.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<LevelMatrix> {
        let n = self.n_rows();
        let mut m = LevelMatrix::with_columns(self.p());
        let mut buf = vec![0u16; self.p()];
        for &i in indices {
            if i >= n {
                return Err(Error::InvalidSubsample(format!(
                    "row index {i} out of range for {n} rows"
                )));
            }
            self.copy_row_into(i, &mut buf);
            m.push_row(&buf);
        }
        Ok(m)
    }

    /// All rows as a dense matrix.
    pub fn all_rows(&self) -> LevelMatrix {
        let mut m = LevelMatrix::with_columns(self.p());
        let mut buf = vec![0u16; self.p()];
        for i in 0..self.n_rows() {
            self.copy_row_into(i, &mut buf);
            m.push_row(&buf);
        }
        m
    }

    /// Covariate column names.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Original category label for a level code.
    pub fn label(&self, j: usize, code: u16) -> &str {
        &self.labels[j][usize::from(code)]
    }

    /// Attached response vector, if any.
    pub fn response(&self) -> Option<&[f64]> {
        self.response.as_deref()
    }

    /// Attaches a response vector; must match the row count.
    pub fn set_response(&mut self, y: Vec<f64>) -> Result<()> {
        if y.len() != self.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} entries, dataset has {} rows",
                y.len(),
                self.n_rows()
            )));
        }
        self.response = Some(y);
        Ok(())
    }

    /// Writes the dataset as CSV with decoded labels, same dialect as
    /// ingestion (header row, comma delimiter). Row order and label text
    /// round-trip exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.write_rows_csv(None, writer)
    }

    /// Writes the given rows, in the given order, as CSV; used to export an
    /// extracted subsample. Errors on out-of-range indices.
    pub fn write_csv_rows<W: Write>(&self, indices: &[usize], writer: W) -> Result<()> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.n_rows()) {
            return Err(Error::InvalidSubsample(format!(
                "row index {i} out of range for {} rows",
                self.n_rows()
            )));
        }
        self.write_rows_csv(Some(indices), writer)
    }

    fn write_rows_csv<W: Write>(&self, indices: Option<&[usize]>, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        if self.response.is_some() {
            header.push(self.response_name.as_deref().unwrap_or("y"));
        }
        w.write_record(&header)?;
        let rows: Box<dyn Iterator<Item = usize>> = match indices {
            Some(indices) => Box::new(indices.iter().copied()),
            None => Box::new(0..self.n_rows()),
        };
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for i in rows {
            record.clear();
            for j in 0..self.p() {
                record.push(self.label(j, self.level(i, j)).to_string());
            }
            if let Some(y) = &self.response {
                let mut cell = String::new();
                // Shortest round-trip float formatting keeps files byte-stable.
                write!(cell, "{}", y[i]).expect("formatting into String cannot fail");
                record.push(cell);
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the dataset as CSV to a file path.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        self.write_csv(BufWriter::new(file))
    }

    /// The distinct-pattern index, built on first use and cached. Repeated
    /// selections on the same dataset share one index.
    pub(crate) fn patterns(&self) -> &Patterns {
        self.patterns.get_or_init(|| Patterns::build(self))
    }
}

/// Distinct covariate patterns of a dataset and the rows carrying each one.
///
/// Candidate scores in greedy selection depend on a row only through its
/// level pattern, so the scan can run over distinct patterns instead of rows.
/// With heavy repetition (domain much smaller than the dataset) that cuts a
/// scan from `N` rows to at most `q_1*...*q_p` patterns; with mostly unique
/// rows it degrades to the plain row scan plus one indexing pass.
#[derive(Debug, Clone)]
pub(crate) struct Patterns {
    /// Pattern levels in column-major storage, first-appearance order;
    /// same shape contract as `Dataset::column`.
    cols: Vec<Vec<u16>>,
    /// Pattern id of each dataset row.
    of_row: Vec<u32>,
    /// Dataset rows grouped by pattern id, ascending within each group.
    row_ids: Vec<u32>,
    /// Group boundaries into `row_ids`: pattern `c` owns
    /// `row_ids[starts[c]..starts[c + 1]]`.
    starts: Vec<usize>,
}

/// Domains at most this large get a dense code-to-id table; larger or
/// unbounded ones fall back to hashing whole rows.
const DENSE_PATTERN_CAP: u64 = 1 << 20;

impl Patterns {
    fn build(data: &Dataset) -> Self {
        let n = data.n_rows();
        let p = data.p();
        assert!(
            u32::try_from(n).is_ok(),
            "pattern index limited to u32 row ids"
        );
        let mut cols: Vec<Vec<u16>> = vec![Vec::new(); p];
        let mut of_row: Vec<u32> = Vec::with_capacity(n);
        let mut buf = vec![0u16; p];

        let dense = data
            .spec()
            .domain_size()
            .filter(|&size| size <= DENSE_PATTERN_CAP);
        if let Some(size) = dense {
            let mut ids = vec![u32::MAX; size as usize];
            for i in 0..n {
                data.copy_row_into(i, &mut buf);
                let mut code = 0usize;
                for (&level, &qj) in buf.iter().zip(data.spec().q()) {
                    code = code * usize::from(qj) + usize::from(level);
                }
                let mut id = ids[code];
                if id == u32::MAX {
                    id = next_pattern_id(&mut cols, &buf);
                    ids[code] = id;
                }
                of_row.push(id);
            }
        } else {
            let mut ids: HashMap<Box<[u16]>, u32> = HashMap::new();
            for i in 0..n {
                data.copy_row_into(i, &mut buf);
                let id = match ids.get(buf.as_slice()) {
                    Some(&id) => id,
                    None => {
                        let id = next_pattern_id(&mut cols, &buf);
                        ids.insert(buf.clone().into_boxed_slice(), id);
                        id
                    }
                };
                of_row.push(id);
            }
        }

        // Counting sort of row ids by pattern keeps each group ascending.
        let cells = cols[0].len();
        let mut starts = vec![0usize; cells + 1];
        for &id in &of_row {
            starts[id as usize + 1] += 1;
        }
        for c in 0..cells {
            starts[c + 1] += starts[c];
        }
        let mut row_ids = vec![0u32; n];
        let mut fill = starts.clone();
        for (i, &id) in of_row.iter().enumerate() {
            row_ids[fill[id as usize]] = i as u32;
            fill[id as usize] += 1;
        }
        Self {
            cols,
            of_row,
            row_ids,
            starts,
        }
    }

    /// Number of distinct patterns.
    pub fn len(&self) -> usize {
        self.starts.len() - 1
    }

    /// Column-major view of pattern levels for covariate `j`.
    pub fn column(&self, j: usize) -> &[u16] {
        &self.cols[j]
    }

    /// Pattern id of dataset row `i`.
    pub fn of_row(&self, i: usize) -> usize {
        self.of_row[i] as usize
    }

    /// Dataset rows carrying pattern `c`, in ascending order.
    pub fn rows_of(&self, c: usize) -> &[u32] {
        &self.row_ids[self.starts[c]..self.starts[c + 1]]
    }
}

fn next_pattern_id(cols: &mut [Vec<u16>], row: &[u16]) -> u32 {
    let id = u32::try_from(cols[0].len()).expect("pattern count bounded by row count");
    for (col, &level) in cols.iter_mut().zip(row) {
        col.push(level);
    }
    id
}

/// Column roles for CSV ingestion: which header names hold categorical
/// covariates (in model order) and which, if any, holds the numeric
/// response.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub categorical: Vec<String>,
    pub response: Option<String>,
}

/// Reads a CSV file into a [`Dataset`].
///
/// Each categorical column's distinct values are coded 0-based in order of
/// first appearance; the original strings are kept as labels. A column with
/// fewer than two distinct values is rejected as a degenerate covariate,
/// and empty categorical cells are rejected rather than imputed.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let file = File::open(path)?;
    ingest_csv_reader(BufReader::new(file), schema)
}

/// [`ingest_csv`] over any reader; used directly by tests.
pub fn ingest_csv_reader<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    if schema.categorical.is_empty() {
        return Err(Error::InvalidDataset(
            "schema names no categorical columns".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidDataset(format!("column {name:?} not found in header")))
    };
    let cat_pos: Vec<usize> = schema
        .categorical
        .iter()
        .map(|name| position(name))
        .collect::<Result<_>>()?;
    let resp_pos = schema.response.as_deref().map(position).transpose()?;

    let p = cat_pos.len();
    let mut columns: Vec<Vec<u16>> = vec![Vec::new(); p];
    let mut labels: Vec<Vec<String>> = vec![Vec::new(); p];
    let mut dicts: Vec<HashMap<String, u16>> = vec![HashMap::new(); p];
    let mut response: Vec<f64> = Vec::new();

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (j, &pos) in cat_pos.iter().enumerate() {
            let cell = record.get(pos).ok_or_else(|| Error::InvalidData {
                column: schema.categorical[j].clone(),
                row,
                message: "missing cell".into(),
            })?;
            if cell.is_empty() {
                return Err(Error::InvalidData {
                    column: schema.categorical[j].clone(),
                    row,
                    message: "empty categorical cell".into(),
                });
            }
            let code = match dicts[j].get(cell) {
                Some(&code) => code,
                None => {
                    let next = labels[j].len();
                    if next > usize::from(u16::MAX) {
                        return Err(Error::InvalidData {
                            column: schema.categorical[j].clone(),
                            row,
                            message: format!("more than {} distinct levels", u16::MAX),
                        });
                    }
                    let code = next as u16;
                    dicts[j].insert(cell.to_string(), code);
                    labels[j].push(cell.to_string());
                    code
                }
            };
            columns[j].push(code);
        }
        if let Some(pos) = resp_pos {
            let name = schema.response.as_deref().unwrap_or_default();
            let cell = record.get(pos).ok_or_else(|| Error::InvalidData {
                column: name.to_string(),
                row,
                message: "missing cell".into(),
            })?;
            let value: f64 = cell.trim().parse().map_err(|_| Error::InvalidData {
                column: name.to_string(),
                row,
                message: format!("non-numeric response {cell:?}"),
            })?;
            response.push(value);
        }
    }

    if columns[0].is_empty() {
        return Err(Error::InvalidDataset("file has no data rows".into()));
    }
    let q: Vec<u16> = labels
        .iter()
        .enumerate()
        .map(|(j, lab)| {
            if lab.len() < 2 {
                Err(Error::InvalidDataset(format!(
                    "degenerate covariate {:?}: {} distinct value(s)",
                    schema.categorical[j],
                    lab.len()
                )))
            } else {
                Ok(lab.len() as u16)
            }
        })
        .collect::<Result<_>>()?;

    let spec = LevelSpec::new(q)?;
    let mut data = Dataset::from_columns(spec, columns)?;
    data.names = schema.categorical.clone();
    data.labels = labels;
    if resp_pos.is_some() {
        data.response_name = schema.response.clone();
        data.set_response(response)?;
    }
    Ok(data)
}

fn check_rows(n_rows: usize) -> Result<()> {
    if n_rows == 0 {
        return Err(Error::InvalidDataset("N must be at least 1".into()));
    }
    Ok(())
}

/// Generates covariates with every column uniform over its levels,
/// independently across entries. Deterministic per seed; each column draws
/// from its own stream, so the output for column `j` does not depend on the
/// other columns' level counts.
pub fn gen_case1(n_rows: usize, spec: &LevelSpec, seed: u64) -> Result<Dataset> {
    check_rows(n_rows)?;
    let columns = spec
        .q()
        .iter()
        .enumerate()
        .map(|(j, &qj)| {
            let mut rng = seed::rng(seed, tag::COVARIATE, j as u64);
            let dist = Uniform::new(0u16, qj);
            (0..n_rows).map(|_| dist.sample(&mut rng)).collect()
        })
        .collect();
    Dataset::from_columns(spec.clone(), columns)
}

/// Generates covariates where column `j` takes level code `u - 1` with
/// probability `u / (q_j (q_j + 1) / 2)` for `u = 1..q_j`: rarest level
/// first, most common last.
pub fn gen_case2(n_rows: usize, spec: &LevelSpec, seed: u64) -> Result<Dataset> {
    check_rows(n_rows)?;
    let columns = spec
        .q()
        .iter()
        .enumerate()
        .map(|(j, &qj)| {
            let mut rng = seed::rng(seed, tag::COVARIATE, j as u64);
            let dist = WeightedIndex::new((1..=u32::from(qj)).collect::<Vec<_>>())
                .expect("weights 1..=q are positive");
            (0..n_rows).map(|_| dist.sample(&mut rng) as u16).collect()
        })
        .collect();
    Dataset::from_columns(spec.clone(), columns)
}

/// Maps a continuous value to a level code by partitioning `[-3, 3]` into
/// `q` equal half-open intervals (the last one closed); values beyond the
/// range clamp to the end levels.
pub(crate) fn case3_code(value: f64, q: u16) -> u16 {
    let idx = ((value + 3.0) * f64::from(q) / 6.0).floor();
    idx.clamp(0.0, f64::from(q - 1)) as u16
}

/// Generates covariates by discretizing equicorrelated standard normals:
/// each row draws a p-variate normal with unit variances and pairwise
/// correlation 0.5 (one shared factor plus independent noise), and each
/// coordinate is coded by [`case3_code`] under its covariate's level count.
pub fn gen_case3(n_rows: usize, spec: &LevelSpec, seed: u64) -> Result<Dataset> {
    check_rows(n_rows)?;
    let p = spec.p();
    // Shared factor stream sits one index past the per-column streams.
    let mut shared_rng = seed::rng(seed, tag::COVARIATE, p as u64);
    let shared: Vec<f64> = (0..n_rows)
        .map(|_| shared_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let weight = 0.5f64.sqrt();
    let columns = spec
        .q()
        .iter()
        .enumerate()
        .map(|(j, &qj)| {
            let mut rng = seed::rng(seed, tag::COVARIATE, j as u64);
            shared
                .iter()
                .map(|&w| {
                    let z: f64 = rng.sample(StandardNormal);
                    case3_code(weight * w + weight * z, qj)
                })
                .collect()
        })
        .collect();
    Dataset::from_columns(spec.clone(), columns)
}

/// Linear-model response specification: coefficients over the dummy coding
/// (intercept first, then per-covariate dummy blocks), noise standard
/// deviation, and the seed for noise draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseModel {
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl ResponseModel {
    /// The default simulation model: every coefficient 1, unit noise.
    pub fn unit(spec: &LevelSpec, seed: u64) -> Self {
        Self {
            beta: vec![1.0; spec.num_params()],
            sigma: 1.0,
            seed,
        }
    }

    /// Checks the coefficient length against a spec and that sigma is a
    /// usable standard deviation.
    pub fn check(&self, spec: &LevelSpec) -> Result<()> {
        if self.beta.len() != spec.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "beta has {} coefficients, model needs {}",
                self.beta.len(),
                spec.num_params()
            )));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sigma must be a nonnegative real, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Draws a response vector for `data` under `model` using the supplied
/// noise stream: `y_i` is the dummy-coded linear predictor of row `i` plus
/// independent normal noise.
pub(crate) fn response_with_rng<R: Rng>(
    data: &Dataset,
    model: &ResponseModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    model.check(data.spec())?;
    let noise = if model.sigma > 0.0 {
        Some(Normal::new(0.0, model.sigma).expect("validated sigma"))
    } else {
        None
    };
    let p = data.p();
    let mut buf = vec![0u16; p];
    let mut y = Vec::with_capacity(data.n_rows());
    for i in 0..data.n_rows() {
        data.copy_row_into(i, &mut buf);
        let mut value = crate::anova::dummy_dot(&buf, data.spec(), &model.beta)?;
        if let Some(noise) = &noise {
            value += noise.sample(rng);
        }
        y.push(value);
    }
    Ok(y)
}

/// Generates a response vector under `model.seed`, attaches it to the
/// dataset, and returns a copy.
pub fn gen_response(data: &mut Dataset, model: &ResponseModel) -> Result<Vec<f64>> {
    let mut rng = seed::rng(model.seed, tag::RESPONSE, 0);
    let y = response_with_rng(data, model, &mut rng)?;
    data.set_response(y.clone())?;
    Ok(y)
}
