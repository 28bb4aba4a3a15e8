//! Labeled feature datasets: a synthetic Gaussian-cluster generator and a
//! CSV format for external data.
//!
//! CSV layout: a header row `f0,f1,…,f{d-1},label` followed by one row per
//! sample. Features are written with `f32` precision. Labels may be arbitrary
//! integers; they are remapped to `0..C` on load in ascending order.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    classes: Vec<Vec<usize>>,
}

impl LabeledDataset {
    /// Labels must be contiguous `0..C` and every class needs two samples.
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::Dataset("dataset is empty".into()));
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut classes = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            classes[l].push(i);
        }
        for (c, members) in classes.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Dataset(format!(
                    "labels are not contiguous: class {c} is missing"
                )));
            }
            if members.len() < 2 {
                return Err(Error::Dataset(format!("class {c} has a single sample")));
            }
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Row indices of each class.
    pub fn class_index(&self) -> &[Vec<usize>] {
        &self.classes
    }

    /// Rows `indices` of the feature matrix.
    pub fn select(&self, indices: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let feats = self.features.select(ndarray::Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (feats, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub input_dim: usize,
    /// Class centers are uniform in `[-spread, spread]^input_dim`.
    pub center_spread: f64,
    /// Isotropic Gaussian noise around each center.
    pub within_std: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 8,
            per_class: 200,
            input_dim: 20,
            center_spread: 1.0,
            within_std: 1.0,
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<LabeledDataset> {
    if spec.n_classes < 1 || spec.per_class < 2 || spec.input_dim < 1 {
        return Err(Error::Dataset(format!(
            "invalid synthetic counts: {} classes × {} samples, dimension {}",
            spec.n_classes, spec.per_class, spec.input_dim
        )));
    }
    if !(spec.within_std >= 0.0 && spec.center_spread >= 0.0) {
        return Err(Error::Dataset("spread and noise must be non-negative".into()));
    }
    let mut rng = stream(seed, Stream::Data);
    let dim = spec.input_dim;
    let centers: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| {
            (0..dim)
                .map(|_| spec.center_spread * (2.0 * rng.random::<f64>() - 1.0))
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.within_std).map_err(|e| Error::Dataset(e.to_string()))?;
    let n = spec.n_classes * spec.per_class;
    let mut features = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for s in 0..spec.per_class {
            let row = c * spec.per_class + s;
            for d in 0..dim {
                features[[row, d]] = center[d] + noise.sample(&mut rng);
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(features, labels)
}

pub fn save_dataset(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..dataset.input_dim()).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, label) in dataset.features.outer_iter().zip(&dataset.labels) {
        let mut record: Vec<String> = row.iter().map(|&v| (v as f32).to_string()).collect();
        record.push(label.to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let label_col = header
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| parse_err(1, "missing column 'label'".into()))?;
    let mut feature_cols = Vec::new();
    for i in 0.. {
        match header.iter().position(|h| h.trim() == format!("f{i}")) {
            Some(col) => feature_cols.push(col),
            None => break,
        }
    }
    if feature_cols.is_empty() {
        return Err(parse_err(1, "missing feature columns f0..".into()));
    }
    if feature_cols.len() + 1 != header.len() {
        return Err(parse_err(
            1,
            format!("unexpected columns in header {:?}", header.iter().collect::<Vec<_>>()),
        ));
    }

    let dim = feature_cols.len();
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for &col in &feature_cols {
            let v: f64 = record[col]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad value {:?} in column f{}", &record[col], col)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite feature {v}")));
            }
            values.push(v);
        }
        let label: i64 = record[label_col]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad label {:?}", &record[label_col])))?;
        raw_labels.push(label);
    }
    if raw_labels.is_empty() {
        return Err(Error::Dataset(format!("{} has no rows", path.display())));
    }

    let ids: BTreeMap<i64, usize> = {
        let mut uniq: Vec<i64> = raw_labels.clone();
        uniq.sort_unstable();
        uniq.dedup();
        uniq.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    };
    let contiguous = ids.iter().all(|(&raw, &id)| raw == id as i64);
    if !contiguous {
        log::warn!("{}: labels remapped to contiguous ids 0..{}", path.display(), ids.len());
    }
    let labels = raw_labels.iter().map(|l| ids[l]).collect();
    let features = Array2::from_shape_vec((values.len() / dim, dim), values).expect("row-major fill");
    LabeledDataset::new(features, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Hold out a fraction of every class.
    PerClass,
    /// Hold out whole classes.
    ByClass,
}

/// Disjoint, sorted row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

pub fn split_validation(dataset: &LabeledDataset, fraction: f64, mode: SplitMode, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(Error::Dataset(format!(
            "validation fraction must lie in (0, 0.5], got {fraction}"
        )));
    }
    let mut rng = stream(seed, Stream::Split);
    let mut train = Vec::new();
    let mut val = Vec::new();
    match mode {
        SplitMode::PerClass => {
            for (c, members) in dataset.class_index().iter().enumerate() {
                if members.len() < 2 {
                    return Err(Error::Dataset(format!("class {c} has fewer than 2 samples")));
                }
                let mut shuffled = members.clone();
                shuffled.shuffle(&mut rng);
                let n_val = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
                val.extend_from_slice(&shuffled[..n_val]);
                train.extend_from_slice(&shuffled[n_val..]);
            }
        }
        SplitMode::ByClass => {
            let n_classes = dataset.num_classes();
            let held = ((fraction * n_classes as f64).round() as usize).max(1);
            if n_classes < held + 2 {
                return Err(Error::Dataset(format!(
                    "holding out {held} of {n_classes} classes leaves fewer than 2 for training"
                )));
            }
            let mut order: Vec<usize> = (0..n_classes).collect();
            order.shuffle(&mut rng);
            for (pos, &c) in order.iter().enumerate() {
                let target = if pos < held { &mut val } else { &mut train };
                target.extend_from_slice(&dataset.class_index()[c]);
            }
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok(Split { train, val })
}
