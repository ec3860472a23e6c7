//! Labeled datasets: IDX and CSV loaders plus seeded train/test splits.

use std::path::Path;

use nalgebra::DMatrix;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Feature matrix (one sample per row) with class labels in `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<usize>,
    class_count: usize,
    /// Original label value of class `k`, stored at index `k - 1`.
    class_labels: Vec<i64>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        class_count: usize,
        class_labels: Vec<i64>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::invalid("dataset has no samples or no features"));
        }
        if class_labels.len() != class_count {
            return Err(Error::invalid("class label table does not match class count"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > class_count) {
            return Err(Error::invalid(format!(
                "label {bad} outside 1..={class_count}"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(Dataset {
            features,
            labels,
            class_count,
            class_labels,
        })
    }

    /// Builds a dataset whose class `k` has original label `k - 1`.
    pub fn from_zero_based(features: DMatrix<f64>, labels: &[usize], class_count: usize) -> Result<Self> {
        let labels = labels.iter().map(|&l| l + 1).collect();
        let table = (0..class_count as i64).collect();
        Dataset::new(features, labels, class_count, table)
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_labels(&self) -> &[i64] {
        &self.class_labels
    }

    pub fn sample(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }

    /// Same labels and class table, new features (row count must match).
    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Self> {
        Dataset::new(
            features,
            self.labels.clone(),
            self.class_count,
            self.class_labels.clone(),
        )
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = self.features.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset {
            features,
            labels,
            class_count: self.class_count,
            class_labels: self.class_labels.clone(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Parses an IDX image file and its label file (MNIST layout).
///
/// Pixels are scaled to `[0, 1]`; digit labels `0..=9` become classes `1..=10`.
pub fn load_idx(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = read_file(image_path.as_ref())?;
    let labels = read_file(label_path.as_ref())?;
    parse_idx(&images, &labels)
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = be_u32(images, 0, "image file")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!("bad image magic {magic:#010x}")));
    }
    let magic = be_u32(labels, 0, "label file")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Format(format!("bad label magic {magic:#010x}")));
    }
    let count = be_u32(images, 4, "image file")? as usize;
    let rows = be_u32(images, 8, "image file")? as usize;
    let cols = be_u32(images, 12, "image file")? as usize;
    let label_count = be_u32(labels, 4, "label file")? as usize;
    if count != label_count {
        return Err(Error::Format(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let pixels = rows * cols;
    let body = &images[16..];
    if body.len() < count * pixels {
        return Err(Error::Format("image file truncated".into()));
    }
    let label_body = &labels[8..];
    if label_body.len() < count {
        return Err(Error::Format("label file truncated".into()));
    }
    if count == 0 || pixels == 0 {
        return Err(Error::Format("empty IDX file".into()));
    }
    let features = DMatrix::from_fn(count, pixels, |i, j| body[i * pixels + j] as f64 / 255.0);
    let raw: Vec<usize> = label_body[..count].iter().map(|&b| b as usize).collect();
    let k = raw.iter().copied().max().unwrap_or(0) + 1;
    Dataset::from_zero_based(features, &raw, k)
}

/// Reads a headed CSV; `label_column` holds integer labels, every other column is a feature.
///
/// Labels are remapped to `1..=K` in ascending order of their original values.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    parse_csv(&bytes, label_column)
}

pub fn parse_csv(bytes: &[u8], label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("csv header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::Format("csv file is empty".into()));
    }
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::Format(format!("missing label column {label_column:?}")))?;
    let p = headers.len() - 1;
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("csv row {}: {e}", line + 1)))?;
        if record.len() != headers.len() {
            return Err(Error::Format(format!(
                "csv row {} has {} fields, expected {}",
                line + 1,
                record.len(),
                headers.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if j == label_idx {
                raw_labels.push(parse_int_label(cell, line + 1)?);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Format(format!("csv row {}: non-numeric value {cell:?}", line + 1))
                })?;
                values.push(v);
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::Format("csv file has no data rows".into()));
    }
    if p == 0 {
        return Err(Error::Format("csv file has no feature columns".into()));
    }
    let mut table = raw_labels.clone();
    table.sort_unstable();
    table.dedup();
    let labels = raw_labels
        .iter()
        .map(|l| table.binary_search(l).expect("label in table") + 1)
        .collect();
    let features = DMatrix::from_row_slice(raw_labels.len(), p, &values);
    let k = table.len();
    Dataset::new(features, labels, k, table)
        .map_err(|e| Error::Format(e.to_string()))
}

fn parse_int_label(cell: &str, line: usize) -> Result<i64> {
    if let Ok(v) = cell.parse::<i64>() {
        return Ok(v);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9e15 => Ok(v as i64),
        _ => Err(Error::Format(format!(
            "csv row {line}: label {cell:?} is not an integer"
        ))),
    }
}

/// How one repetition's train/test partition is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Absolute training size; overrides `train_fraction` when set.
    pub train_count: Option<usize>,
    pub seed: u64,
    pub repetition_index: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64, repetition_index: u64) -> Self {
        SplitSpec {
            train_fraction,
            train_count: None,
            seed,
            repetition_index,
        }
    }

    pub fn with_train_count(mut self, count: usize) -> Self {
        self.train_count = Some(count);
        self
    }

    /// Seed of this repetition's generator.
    pub fn derived_seed(&self) -> u64 {
        derive_seed(self.seed, self.repetition_index)
    }

    pub fn train_size(&self, n: usize) -> Result<usize> {
        let size = match self.train_count {
            Some(c) => c,
            None => {
                if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
                    return Err(Error::invalid(format!(
                        "train fraction {} outside (0, 1)",
                        self.train_fraction
                    )));
                }
                (self.train_fraction * n as f64).round() as usize
            }
        };
        if size == 0 || size >= n {
            return Err(Error::invalid(format!(
                "training size {size} leaves no train or test samples out of {n}"
            )));
        }
        Ok(size)
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-repetition seed: `splitmix64(master ^ splitmix64(repetition))`.
pub fn derive_seed(master: u64, repetition: u64) -> u64 {
    splitmix64(master ^ splitmix64(repetition))
}

/// ChaCha8 stream seeded through `seed_from_u64`.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unbiased draw from `0..bound` by rejection on 64-bit words.
pub fn uniform_below(rng: &mut impl RngCore, bound: u64) -> u64 {
    assert!(bound > 0);
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % bound;
        }
    }
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = uniform_below(&mut rng, i as u64 + 1) as usize;
        idx.swap(i, j);
    }
    idx
}

/// Index sets of a split: the first `train_size` entries of the seeded permutation
/// go to training. Both sets are returned sorted.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let size = spec.train_size(n)?;
    let perm = permutation(n, spec.derived_seed());
    let mut train = perm[..size].to_vec();
    let mut test = perm[size..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Seeded shuffled split. Fails with [`Error::DegenerateSplit`] if a class gets no
/// training sample.
pub fn split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train_idx, test_idx) = split_indices(d.n_samples(), spec)?;
    if train_idx.len() < d.class_count() {
        return Err(Error::invalid(format!(
            "{} training samples cannot cover {} classes",
            train_idx.len(),
            d.class_count()
        )));
    }
    let train = d.subset(&train_idx);
    if let Some(k) = train.class_counts().iter().position(|&c| c == 0) {
        return Err(Error::DegenerateSplit { class: k + 1 });
    }
    Ok((train, d.subset(&test_idx)))
}
