//! Datasets: file ingestion, standardization, random splits and the
//! correlated-groups synthetic generator.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::{CsrMatrix, Design};
use crate::error::{Error, Result};
use crate::norms::CoefficientVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Regression,
    /// Labels in `{-1, +1}`.
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Design,
    pub y: Vec<f64>,
    pub feature_names: Option<Vec<String>>,
    pub kind: TaskKind,
}

impl Dataset {
    /// Validates shapes, finiteness and binary labels. Zero rows are allowed
    /// (an empty validation or test split), zero columns are not.
    pub fn new(
        x: Design,
        y: Vec<f64>,
        feature_names: Option<Vec<String>>,
        kind: TaskKind,
    ) -> Result<Self> {
        if x.n_cols() == 0 {
            return Err(Error::InvalidParameter("dataset needs at least one feature".into()));
        }
        if y.len() != x.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: x.n_rows(),
                got: y.len(),
            });
        }
        if let Some(names) = &feature_names {
            if names.len() != x.n_cols() {
                return Err(Error::DimensionMismatch {
                    expected: x.n_cols(),
                    got: names.len(),
                });
            }
        }
        if let Some((i, j)) = x.first_non_finite() {
            return Err(Error::InvalidParameter(format!("non-finite feature at row {i}, column {j}")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if kind == TaskKind::Binary {
            if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::InvalidParameter(format!(
                    "binary dataset has label {} at row {i}",
                    y[i]
                )));
            }
        }
        Ok(Dataset {
            x,
            y,
            feature_names,
            kind,
        })
    }

    pub fn dense(x: Array2<f64>, y: Vec<f64>, kind: TaskKind) -> Result<Self> {
        Self::new(Design::Dense(x), y, None, kind)
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.n_cols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            kind: self.kind,
        }
    }
}

/// Which CSV column holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Zero-based column index.
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
    Last,
}

fn parse_err(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        column,
        message: message.into(),
    }
}

/// Read a comma-separated numeric table. Columns other than the label become
/// features. Labels that are all `+-1` make a binary dataset.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool, label: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(File::open(path)?));

    let header: Option<Vec<String>> = if has_header {
        let h = reader
            .headers()
            .map_err(|e| parse_err(path, 1, 0, e.to_string()))?;
        Some(h.iter().map(str::to_owned).collect())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, 0, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(parse_err(
                    path,
                    line,
                    0,
                    format!("ragged row: expected {w} fields, found {}", record.len()),
                ))
            }
            None => width = Some(record.len()),
            _ => {}
        }
        let mut row = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, c + 1, format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, c + 1, format!("missing or non-finite value {cell:?}")));
            }
            row.push(v);
        }
        rows.push(row);
    }

    let width = match (rows.is_empty(), width) {
        (false, Some(w)) => w,
        _ => return Err(parse_err(path, 1, 0, "no data rows")),
    };
    if width < 2 {
        return Err(parse_err(path, 1, 0, "need at least one feature column and a label column"));
    }
    let label_idx = match label {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => {
            return Err(Error::InvalidParameter(format!("label column {i} out of range (width {width})")))
        }
        LabelColumn::Last => width - 1,
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::InvalidParameter(format!("no column named {name:?}")))?,
    };

    let n = rows.len();
    let d = width - 1;
    let mut x = Array2::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        let mut j = 0;
        for (c, &v) in row.iter().enumerate() {
            if c == label_idx {
                y.push(v);
            } else {
                x[[i, j]] = v;
                j += 1;
            }
        }
    }
    let names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(c, _)| *c != label_idx)
            .map(|(_, s)| s)
            .collect()
    });
    let kind = if y.iter().all(|&v| v == 1.0 || v == -1.0) {
        TaskKind::Binary
    } else {
        TaskKind::Regression
    };
    Dataset::new(Design::Dense(x), y, names, kind)
}

/// Write features followed by the label in the last column. Values use 17
/// significant digits so a reload reproduces them exactly.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let d = dataset.n_features();
    let names: Vec<String> = match &dataset.feature_names {
        Some(n) => n.clone(),
        None => (1..=d).map(|j| format!("x{j}")).collect(),
    };
    writeln!(out, "{},y", names.join(","))?;
    let dense = dataset.x.to_dense();
    for (row, y) in dense.rows().into_iter().zip(&dataset.y) {
        let mut line = String::new();
        for v in row {
            line.push_str(&format!("{v:.16e},"));
        }
        line.push_str(&format!("{y:.16e}"));
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Read the sparse `label idx:val idx:val ...` format with 1-based, strictly
/// ascending indices. Text after `#` is ignored. When exactly two distinct
/// labels occur they are mapped to `-1` (smaller) and `+1` (larger).
pub fn load_svmlight(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut labels = Vec::new();
    let mut indptr = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_ascii_whitespace();
        let label_tok = tokens.next().unwrap();
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(path, lineno, 1, format!("bad label {label_tok:?}")))?;
        let mut last = 0usize;
        for (t, tok) in tokens.enumerate() {
            let field = t + 2;
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(path, lineno, field, format!("malformed pair {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(path, lineno, field, format!("bad index in {tok:?}")))?;
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(path, lineno, field, format!("bad value in {tok:?}")))?;
            if idx == 0 {
                return Err(parse_err(path, lineno, field, "indices are 1-based"));
            }
            if idx == last {
                return Err(parse_err(path, lineno, field, format!("duplicate index {idx}")));
            }
            if idx < last {
                return Err(parse_err(path, lineno, field, format!("index {idx} after {last}: not ascending")));
            }
            last = idx;
            max_index = max_index.max(idx);
            indices.push(idx - 1);
            values.push(val);
        }
        labels.push(label);
        indptr.push(values.len());
    }

    if labels.is_empty() {
        return Err(parse_err(path, 1, 0, "no data rows"));
    }
    if max_index == 0 {
        return Err(parse_err(path, 1, 0, "no features present"));
    }
    let distinct: BTreeSet<u64> = labels.iter().map(|v| v.to_bits()).collect();
    let (y, kind) = if distinct.len() == 2 {
        let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
        let y = labels.iter().map(|&v| if v == lo { -1.0 } else { 1.0 }).collect();
        (y, TaskKind::Binary)
    } else {
        (labels, TaskKind::Regression)
    };
    let n = y.len();
    let x = CsrMatrix::new(n, max_index, indptr, indices, values)?;
    Dataset::new(Design::Sparse(x), y, None, kind)
}

/// Output of [`standardize`].
#[derive(Debug, Clone)]
pub struct Standardized {
    pub train: Dataset,
    pub others: Vec<Dataset>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Features with zero training variance; they are set to zero everywhere.
    pub constant_features: Vec<usize>,
}

/// Center and scale every feature with the training mean and (population)
/// standard deviation, applying the same map to `others`. Sparse inputs are
/// densified.
pub fn standardize(train: &Dataset, others: &[Dataset]) -> Result<Standardized> {
    let d = train.n_features();
    if train.n_samples() == 0 {
        return Err(Error::InvalidParameter("cannot standardize an empty training set".into()));
    }
    for o in others {
        if o.n_features() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: o.n_features(),
            });
        }
    }
    let xt = train.x.to_dense();
    let n = xt.nrows() as f64;
    let means: Vec<f64> = xt.columns().into_iter().map(|c| c.sum() / n).collect();
    let sds: Vec<f64> = xt
        .columns()
        .into_iter()
        .zip(&means)
        .map(|(c, &m)| (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt())
        .collect();
    let constant_features: Vec<usize> = (0..d).filter(|&j| sds[j] == 0.0).collect();
    if !constant_features.is_empty() {
        log::warn!("zeroing {} constant feature(s): {:?}", constant_features.len(), constant_features);
    }

    let apply = |ds: &Dataset, mut x: Array2<f64>| -> Dataset {
        for (j, mut col) in x.columns_mut().into_iter().enumerate() {
            if sds[j] == 0.0 {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|v| (v - means[j]) / sds[j]);
            }
        }
        Dataset {
            x: Design::Dense(x),
            y: ds.y.clone(),
            feature_names: ds.feature_names.clone(),
            kind: ds.kind,
        }
    };
    let train_out = apply(train, xt);
    let others_out = others.iter().map(|o| apply(o, o.x.to_dense())).collect();
    Ok(Standardized {
        train: train_out,
        others: others_out,
        means,
        sds,
        constant_features,
    })
}

/// Uniform random partition into train, validation and test parts. Rows not
/// covered by the requested sizes are dropped.
pub fn split(dataset: &Dataset, sizes: (usize, usize, usize), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = sizes;
    let n = dataset.n_samples();
    if a + b + c > n {
        return Err(Error::InvalidParameter(format!(
            "split sizes {a}+{b}+{c} exceed {n} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((
        dataset.select_rows(&order[..a]),
        dataset.select_rows(&order[a..a + b]),
        dataset.select_rows(&order[a + b..a + b + c]),
    ))
}

/// Deterministic 64-bit mix of a master seed and a stream index (SplitMix64
/// finalizer applied twice). Used to give every replication its own seed
/// independent of execution order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(master ^ mix(index))
}

/// Parameters of the correlated-groups regression benchmark.
///
/// Features are laid out as `n_groups` blocks of `group_size` columns sharing
/// a per-example latent factor, followed by independent standard normal
/// columns. The true coefficient vector is `signal` on the first
/// `sparse_support` features and zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub sparse_support: usize,
    pub signal: f64,
    pub group_size: usize,
    pub n_groups: usize,
    pub within_group_noise_sd: f64,
    pub response_noise_sd: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            d: 40,
            sparse_support: 15,
            signal: 3.0,
            group_size: 5,
            n_groups: 3,
            within_group_noise_sd: 0.1,
            response_noise_sd: 1.0,
            n_train: 50,
            n_val: 50,
            n_test: 350,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("synthetic spec: {m}")));
        if self.d == 0 || self.group_size == 0 || self.n_groups == 0 {
            return bad("d, group_size and n_groups must be positive");
        }
        if self.group_size * self.n_groups > self.d || self.sparse_support > self.d {
            return bad("groups and support must fit in d");
        }
        if !(self.within_group_noise_sd >= 0.0 && self.within_group_noise_sd.is_finite()) {
            return bad("within_group_noise_sd must be finite and nonnegative");
        }
        if !(self.response_noise_sd >= 0.0 && self.response_noise_sd.is_finite()) {
            return bad("response_noise_sd must be finite and nonnegative");
        }
        if self.n_train == 0 {
            return bad("n_train must be positive");
        }
        Ok(())
    }

    pub fn w_star(&self) -> CoefficientVector {
        let w = (0..self.d)
            .map(|j| if j < self.sparse_support { self.signal } else { 0.0 })
            .collect();
        CoefficientVector::new(w).expect("finite by construction")
    }

    fn grouped_features(&self) -> usize {
        self.group_size * self.n_groups
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub w_star: CoefficientVector,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn draw_rows(spec: &SyntheticSpec, w_star: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let d = spec.d;
    let grouped = spec.grouped_features();
    let mut x = Array2::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    let mut latent = vec![0.0; spec.n_groups];
    for i in 0..n {
        for z in latent.iter_mut() {
            *z = normal(rng);
        }
        for j in 0..d {
            x[[i, j]] = if j < grouped {
                latent[j / spec.group_size] + spec.within_group_noise_sd * normal(rng)
            } else {
                normal(rng)
            };
        }
        let signal: f64 = x.row(i).iter().zip(w_star).map(|(a, b)| a * b).sum();
        y.push(signal + spec.response_noise_sd * normal(rng));
    }
    Dataset {
        x: Design::Dense(x),
        y,
        feature_names: None,
        kind: TaskKind::Regression,
    }
}

/// Draw train, validation and test sets from one ChaCha8 stream seeded with
/// `spec.seed`. Each example gets fresh latent group factors; normals come
/// from the ziggurat sampler of `rand_distr`.
pub fn synthetic_generate(spec: &SyntheticSpec) -> Result<SyntheticSplits> {
    spec.validate()?;
    let w_star = spec.w_star();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train = draw_rows(spec, &w_star, spec.n_train, &mut rng);
    let val = draw_rows(spec, &w_star, spec.n_val, &mut rng);
    let test = draw_rows(spec, &w_star, spec.n_test, &mut rng);
    Ok(SyntheticSplits {
        train,
        val,
        test,
        w_star,
    })
}

/// Symmetric positive semidefinite `d x d` covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationCovariance(pub Array2<f64>);

impl PopulationCovariance {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn identity(d: usize) -> Self {
        PopulationCovariance(Array2::eye(d))
    }
}

/// Analytic covariance of a synthetic example: within a group `1` off the
/// diagonal and `1 + sigma^2` on it, identity on the independent features.
pub fn population_covariance(spec: &SyntheticSpec) -> Result<PopulationCovariance> {
    spec.validate()?;
    let mut v = Array2::eye(spec.d);
    let s2 = spec.within_group_noise_sd * spec.within_group_noise_sd;
    for g in 0..spec.n_groups {
        let block = g * spec.group_size..(g + 1) * spec.group_size;
        for a in block.clone() {
            for b in block.clone() {
                v[[a, b]] = if a == b { 1.0 + s2 } else { 1.0 };
            }
        }
    }
    Ok(PopulationCovariance(v))
}
