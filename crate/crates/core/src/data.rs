//! Loading, encoding and standardizing sample matrices.
//!
//! Binary data is encoded as ±1 and continuous data is standardized per column
//! with the training split's mean and population standard deviation, so the
//! penalty acts on every dimension at the same scale.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Magic bytes of the dense-binary matrix format.
pub const DENSE_BINARY_MAGIC: &[u8; 4] = b"SPRN";
const DENSE_BINARY_HEADER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    /// Whitespace-separated reals, one sample per line.
    DenseText,
    /// 16-byte header (`SPRN`, u32 rows, u32 cols, u32 reserved) followed by
    /// little-endian f64 values in row-major order.
    DenseBinary,
}

impl MatrixFormat {
    /// Picks the format from the file extension (`.bin` is dense-binary).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("sprn") => MatrixFormat::DenseBinary,
            _ => MatrixFormat::DenseText,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Binary,
    Continuous,
}

impl DataKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DataKind::Binary => "binary",
            DataKind::Continuous => "continuous",
        }
    }
}

impl std::str::FromStr for DataKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(DataKind::Binary),
            "continuous" => Ok(DataKind::Continuous),
            other => Err(Error::invalid(format!("unknown data kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Valid,
    Test,
}

/// A raw row-major matrix as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl RawMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows * cols != values.len() {
            return Err(Error::invalid(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected {cols} values, found {}", r.len()),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reorders columns so that output column `j` is input column `order[j]`.
    pub fn permute_columns(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.cols)?;
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.rows {
            let row = self.row(i);
            values.extend(order.iter().map(|&j| row[j]));
        }
        Self::new(self.rows, self.cols, values)
    }
}

pub(crate) fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: order.len(),
        });
    }
    let mut seen = vec![false; n];
    for &j in order {
        if j >= n || seen[j] {
            return Err(Error::invalid("column order is not a permutation"));
        }
        seen[j] = true;
    }
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<RawMatrix> {
    let path = path.as_ref();
    match format {
        MatrixFormat::DenseText => {
            let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
            parse_dense_text(&text)
        }
        MatrixFormat::DenseBinary => {
            let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
            decode_dense_binary(&bytes)
        }
    }
}

pub fn parse_dense_text(text: &str) -> Result<RawMatrix> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("non-numeric token `{tok}`"),
            })?;
            values.push(v);
        }
        let len = values.len() - before;
        match cols {
            None => cols = Some(len),
            Some(c) if c != len => {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("ragged row: expected {c} values, found {len}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    match cols {
        None => Err(Error::Parse {
            line: 1,
            msg: "no rows".into(),
        }),
        Some(c) => RawMatrix::new(rows, c, values),
    }
}

pub fn encode_dense_binary(m: &RawMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(DENSE_BINARY_HEADER + 8 * m.values.len());
    out.extend_from_slice(DENSE_BINARY_MAGIC);
    out.extend_from_slice(&(m.rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in &m.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dense_binary(bytes: &[u8]) -> Result<RawMatrix> {
    let header_err = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    if bytes.len() < DENSE_BINARY_HEADER {
        return Err(header_err("truncated dense-binary header"));
    }
    if &bytes[..4] != DENSE_BINARY_MAGIC {
        return Err(header_err("bad magic, expected SPRN"));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    if rows == 0 || cols == 0 {
        return Err(header_err("no rows"));
    }
    let body = &bytes[DENSE_BINARY_HEADER..];
    if body.len() != rows * cols * 8 {
        return Err(header_err("payload length does not match header"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    RawMatrix::new(rows, cols, values)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &RawMatrix, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        MatrixFormat::DenseBinary => encode_dense_binary(m),
        MatrixFormat::DenseText => format_dense_text(m).into_bytes(),
    };
    let mut f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn format_dense_text(m: &RawMatrix) -> String {
    let mut s = String::new();
    for i in 0..m.rows {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Per-column training statistics of a continuous dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMeta {
    pub mean: Vec<f64>,
    /// Population standard deviation; 0 marks a constant column.
    pub std: Vec<f64>,
}

impl EncodingMeta {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.std[j] == 0.0
    }

    /// Σ log std over non-constant columns. Subtracting it from a
    /// standardized-space log-likelihood gives the raw-space value.
    pub fn log_jacobian(&self) -> f64 {
        self.std.iter().filter(|s| **s > 0.0).map(|s| s.ln()).sum()
    }

    pub fn decode(&self, j: usize, z: f64) -> f64 {
        self.mean[j] + z * self.std[j]
    }
}

/// An encoded sample matrix, stored column-major.
#[derive(Debug, Clone)]
pub struct Dataset {
    n: usize,
    d: usize,
    columns: Vec<f64>,
    kind: DataKind,
    meta: Option<EncodingMeta>,
    role: Role,
}

impl Dataset {
    /// Builds a dataset from already-encoded row-major values without any
    /// transformation. Binary datasets are checked to be ±1.
    pub fn from_encoded(raw: &RawMatrix, kind: DataKind, meta: Option<EncodingMeta>) -> Result<Self> {
        if raw.rows == 0 || raw.cols == 0 {
            return Err(Error::invalid("dataset needs at least one row and column"));
        }
        if kind == DataKind::Binary {
            for i in 0..raw.rows {
                for j in 0..raw.cols {
                    let v = raw.get(i, j);
                    if v != 1.0 && v != -1.0 {
                        return Err(Error::invalid(format!(
                            "binary dataset entry ({i}, {j}) = {v} is not ±1"
                        )));
                    }
                }
            }
        }
        if let Some(m) = &meta {
            if m.dim() != raw.cols {
                return Err(Error::Dimension {
                    expected: raw.cols,
                    got: m.dim(),
                });
            }
        }
        let (n, d) = (raw.rows, raw.cols);
        let mut columns = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                columns[j * n + i] = raw.get(i, j);
            }
        }
        Ok(Self {
            n,
            d,
            columns,
            kind,
            meta,
            role: Role::Train,
        })
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn meta(&self) -> Option<&EncodingMeta> {
        self.meta.as_ref()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j * self.n..(j + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.columns[j * self.n + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.d).map(|j| self.get(i, j)).collect()
    }

    /// The first `p` columns as an N×p predictor matrix.
    pub fn predictors(&self, p: usize) -> ColMatrix<'_> {
        assert!(p <= self.d);
        ColMatrix::new(&self.columns[..p * self.n], self.n, p)
    }

    /// Columns `lo..hi` as an N×(hi−lo) matrix.
    pub fn column_range(&self, lo: usize, hi: usize) -> ColMatrix<'_> {
        assert!(lo <= hi && hi <= self.d);
        ColMatrix::new(&self.columns[lo * self.n..hi * self.n], self.n, hi - lo)
    }

    pub fn to_raw(&self) -> RawMatrix {
        let mut values = Vec::with_capacity(self.n * self.d);
        for i in 0..self.n {
            values.extend((0..self.d).map(|j| self.get(i, j)));
        }
        RawMatrix::new(self.n, self.d, values).expect("shape is consistent")
    }

    /// Keeps the rows listed in `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let n = idx.len();
        let mut columns = Vec::with_capacity(n * self.d);
        for j in 0..self.d {
            let col = self.column(j);
            columns.extend(idx.iter().map(|&i| col[i]));
        }
        Dataset {
            n,
            d: self.d,
            columns,
            kind: self.kind,
            meta: self.meta.clone(),
            role: self.role,
        }
    }
}

/// Borrowed column-major N×P matrix.
#[derive(Debug, Clone, Copy)]
pub struct ColMatrix<'a> {
    data: &'a [f64],
    n: usize,
    p: usize,
}

impl<'a> ColMatrix<'a> {
    pub fn new(data: &'a [f64], n: usize, p: usize) -> Self {
        assert_eq!(data.len(), n * p, "column-major buffer has wrong length");
        Self { data, n, p }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn col(&self, j: usize) -> &'a [f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }
}

/// Maps a {0,1} matrix to ±1.
pub fn encode_binary(raw: &RawMatrix) -> Result<Dataset> {
    let mut values = Vec::with_capacity(raw.values.len());
    for i in 0..raw.rows {
        for j in 0..raw.cols {
            let v = raw.get(i, j);
            values.push(if v == 0.0 {
                -1.0
            } else if v == 1.0 {
                1.0
            } else {
                return Err(Error::Encoding { row: i, col: j, value: v });
            });
        }
    }
    let enc = RawMatrix::new(raw.rows, raw.cols, values)?;
    Dataset::from_encoded(&enc, DataKind::Binary, None)
}

/// Maps ±1 back to {0,1}.
pub fn decode_binary(data: &Dataset) -> RawMatrix {
    let raw = data.to_raw();
    let values = raw.values.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    RawMatrix::new(raw.rows, raw.cols, values).expect("shape is consistent")
}

/// Computes per-column mean and population standard deviation.
pub fn column_stats(raw: &RawMatrix) -> EncodingMeta {
    let n = raw.rows as f64;
    let mut mean = vec![0.0; raw.cols];
    for i in 0..raw.rows {
        for (m, v) in mean.iter_mut().zip(raw.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; raw.cols];
    for i in 0..raw.rows {
        for ((s, v), m) in var.iter_mut().zip(raw.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
    EncodingMeta { mean, std }
}

/// Standardizes columns. Without `meta` the statistics are computed from
/// `raw` itself (training split); otherwise the stored statistics are reused.
/// Constant columns become all zero.
pub fn standardize(raw: &RawMatrix, meta: Option<&EncodingMeta>) -> Result<Dataset> {
    let meta = match meta {
        Some(m) => {
            if m.dim() != raw.cols {
                return Err(Error::Dimension {
                    expected: m.dim(),
                    got: raw.cols,
                });
            }
            m.clone()
        }
        None => column_stats(raw),
    };
    let mut values = Vec::with_capacity(raw.values.len());
    for i in 0..raw.rows {
        for (j, v) in raw.row(i).iter().enumerate() {
            values.push(if meta.std[j] > 0.0 {
                (v - meta.mean[j]) / meta.std[j]
            } else {
                0.0
            });
        }
    }
    let enc = RawMatrix::new(raw.rows, raw.cols, values)?;
    Dataset::from_encoded(&enc, DataKind::Continuous, Some(meta))
}

/// Encodes a raw split according to `kind`, reusing training statistics for
/// continuous data when given.
pub fn encode(raw: &RawMatrix, kind: DataKind, meta: Option<&EncodingMeta>) -> Result<Dataset> {
    match kind {
        DataKind::Binary => encode_binary(raw),
        DataKind::Continuous => standardize(raw, meta),
    }
}
