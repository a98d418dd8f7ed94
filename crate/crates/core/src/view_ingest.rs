//! Dense per-post views: the interchange file format, id alignment,
//! column standardization and a hashed tf-idf content view.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::sentiment_views::IdfTable;

pub const STD_FLOOR: f64 = 1e-8;

/// A named `m x d` feature matrix with one row per post id.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMatrix {
    pub name: String,
    ids: Vec<String>,
    data: DMatrix<f64>,
    weight: f64,
}

impl ViewMatrix {
    pub fn new(name: impl Into<String>, ids: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        let name = name.into();
        if ids.len() != data.nrows() {
            return Err(Error::Shape(format!(
                "view {name:?}: {} ids for {} rows",
                ids.len(),
                data.nrows()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let row = i % data.nrows().max(1);
            return Err(Error::InvalidArgument(format!(
                "view {name:?}: non-finite value in row {:?}",
                ids[row]
            )));
        }
        Ok(ViewMatrix {
            name,
            ids,
            data,
            weight: 1.0,
        })
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "view {:?}: weight must be finite and >= 0, got {weight}",
                self.name
            )));
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row_of(&self, id: &str) -> Option<DVector<f64>> {
        let i = self.ids.iter().position(|x| x == id)?;
        Some(self.data.row(i).transpose())
    }

    /// Rows for `ids`, in that order.
    pub fn select<S: AsRef<str>>(&self, ids: &[S]) -> Result<ViewMatrix> {
        let index: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut rows = Vec::with_capacity(ids.len());
        for id in ids {
            let id = id.as_ref();
            rows.push(*index.get(id).ok_or_else(|| Error::MissingId {
                view: self.name.clone(),
                id: id.to_string(),
            })?);
        }
        let data = self.data.select_rows(rows.iter());
        Ok(ViewMatrix {
            name: self.name.clone(),
            ids: ids.iter().map(|s| s.as_ref().to_string()).collect(),
            data,
            weight: self.weight,
        })
    }

    /// Serializes in the `#view <name> dim=<d>` interchange format.
    pub fn to_view_file(&self) -> String {
        let mut out = format!("#view {} dim={}\n", self.name, self.dim());
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(&csv_field(id));
            for v in self.data.row(i).iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Reads a view file: a `#view <name> dim=<d>` header, then `id,v1,...,vd`
/// rows. The weight defaults to 1.
pub fn load_view_vectors(path: impl AsRef<Path>) -> Result<ViewMatrix> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_view_file(&content, path)
}

pub(crate) fn parse_view_file(content: &str, path: &Path) -> Result<ViewMatrix> {
    let (header, body) = content.split_once('\n').unwrap_or((content, ""));
    let (name, dim) = parse_header(header.trim_end_matches('\r'))
        .ok_or_else(|| Error::parse(path, 1, "expected header `#view <name> dim=<d>`"))?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(body.as_bytes());
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut seen = HashSet::new();
    for result in reader.records() {
        let record = result.map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() + 1);
        let id = record.get(0).unwrap_or_default().to_string();
        if id.is_empty() && record.len() <= 1 {
            continue;
        }
        if record.len() - 1 != dim {
            return Err(Error::DimensionMismatch {
                view: name.clone(),
                id,
                expected: dim,
                found: record.len() - 1,
            });
        }
        for field in record.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|e| {
                Error::parse(path, line, format!("row {id:?}: bad value {field:?}: {e}"))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    line,
                    format!("row {id:?}: non-finite value {field:?}"),
                ));
            }
            values.push(v);
        }
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id {id:?}")));
        }
        ids.push(id);
    }
    let data = DMatrix::from_row_slice(ids.len(), dim, &values);
    ViewMatrix::new(name, ids, data)
}

fn parse_header(line: &str) -> Option<(String, usize)> {
    let rest = line.strip_prefix("#view")?;
    let mut parts = rest.split_whitespace();
    let name = parts.next()?.to_string();
    let dim = parts.next()?.strip_prefix("dim=")?.parse().ok()?;
    if parts.next().is_some() || dim == 0 {
        return None;
    }
    Some((name, dim))
}

/// Reorders every view to `ids`. Rows for ids outside `ids` are dropped and
/// counted in the returned total.
pub fn align_views<S: AsRef<str>>(
    ids: &[S],
    views: &[ViewMatrix],
) -> Result<(Vec<ViewMatrix>, usize)> {
    let mut dropped = 0;
    let mut out = Vec::with_capacity(views.len());
    for view in views {
        let aligned = view.select(ids)?;
        let extra = view.rows() - aligned.rows();
        if extra > 0 {
            log::warn!("view {:?}: dropped {extra} rows not in the corpus", view.name);
        }
        dropped += extra;
        out.push(aligned);
    }
    Ok((out, dropped))
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalingParams {
    pub fn fit(data: &DMatrix<f64>) -> Self {
        let m = data.nrows() as f64;
        let mut mean = Vec::with_capacity(data.ncols());
        let mut std = Vec::with_capacity(data.ncols());
        for col in data.column_iter() {
            let mu = col.sum() / m;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
            mean.push(mu);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        ScalingParams { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(data.ncols(), self.dim());
        DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| {
            (data[(i, j)] - self.mean[j]) / self.std[j]
        })
    }

    pub fn apply_row(&self, row: &DVector<f64>) -> DVector<f64> {
        assert_eq!(row.len(), self.dim());
        DVector::from_fn(row.len(), |j, _| (row[j] - self.mean[j]) / self.std[j])
    }

    pub fn inverse(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(data.ncols(), self.dim());
        DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| {
            data[(i, j)] * self.std[j] + self.mean[j]
        })
    }
}

/// Standardizes every column to mean 0 and unit population variance.
pub fn standardize_view(view: &ViewMatrix) -> Result<(ViewMatrix, ScalingParams)> {
    if view.rows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "view {:?}: standardization needs at least 2 rows",
            view.name
        )));
    }
    let params = ScalingParams::fit(&view.data);
    let scaled = ViewMatrix {
        name: view.name.clone(),
        ids: view.ids.clone(),
        data: params.apply(&view.data),
        weight: view.weight,
    };
    Ok((scaled, params))
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // splitmix64 finalizer
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// One hashed, signed tf-idf row, L2-normalized when nonzero.
pub fn hashed_tfidf_row(tokens: &TokenSequence, idf: &IdfTable, dim: usize, seed: u64) -> DVector<f64> {
    let mut row = DVector::zeros(dim);
    for tok in &tokens.tokens {
        let h = fnv1a(seed, tok.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        row[bucket] += sign * idf.get(tok);
    }
    let norm = row.norm();
    if norm > 0.0 {
        row /= norm;
    }
    row
}

/// Hashed tf-idf content view over `(id, tokens)` pairs.
pub fn hashed_tfidf_view<'a>(
    posts: impl IntoIterator<Item = (&'a str, &'a TokenSequence)>,
    idf: &IdfTable,
    dim: usize,
    seed: u64,
) -> Result<ViewMatrix> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "hashed view dimension must be >= 2, got {dim}"
        )));
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (id, tokens) in posts {
        ids.push(id.to_string());
        values.extend(hashed_tfidf_row(tokens, idf, dim, seed).iter());
    }
    ViewMatrix::new("content_hashed", ids.clone(), DMatrix::from_row_slice(ids.len(), dim, &values))
}
