//! Datasets: COVTYPE and MNIST loaders, synthetic fixtures, stratified
//! train/test splitting, partitioning across honest workers and mini-batch
//! sampling.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normal_vec, Batch, Label, LabelKind, Sample, SampleRef};
use crate::rng::{self, RngStream, SetupPurpose};
use crate::vector::dot;

pub const COVTYPE_FEATURES: usize = 54;
/// Columns 0..10 of COVTYPE are numeric; the rest are one-hot indicators.
pub const COVTYPE_NUMERIC_COLUMNS: usize = 10;
pub const MNIST_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const MNIST_LABEL_MAGIC: u32 = 0x0000_0801;

/// Immutable collection of samples with uniform label kind and feature
/// dimension. Features are stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<Label>,
    feature_dim: usize,
    label_kind: LabelKind,
}

impl Dataset {
    pub fn from_parts(features: Vec<f64>, labels: Vec<Label>, feature_dim: usize) -> Result<Self> {
        let first = labels.first().ok_or(Error::Empty("dataset"))?;
        let label_kind = first.kind();
        if labels.iter().any(|l| l.kind() != label_kind) {
            return Err(Error::LabelMismatch("mixed label kinds in dataset".into()));
        }
        if feature_dim == 0 || features.len() != labels.len() * feature_dim {
            return Err(Error::DimMismatch { expected: labels.len() * feature_dim, got: features.len() });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature {} of sample {}", i % feature_dim, i / feature_dim)));
        }
        Ok(Dataset { features, labels, feature_dim, label_kind })
    }

    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        let dim = samples.first().ok_or(Error::Empty("dataset"))?.features.len();
        let mut features = Vec::with_capacity(samples.len() * dim);
        let mut labels = Vec::with_capacity(samples.len());
        for s in samples {
            if s.features.len() != dim {
                return Err(Error::DimMismatch { expected: dim, got: s.features.len() });
            }
            features.extend_from_slice(&s.features);
            labels.push(s.label);
        }
        Dataset::from_parts(features, labels, dim)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn label_kind(&self) -> LabelKind {
        self.label_kind
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn sample(&self, i: usize) -> SampleRef<'_> {
        SampleRef { features: self.features(i), label: self.labels[i] }
    }

    /// New dataset made of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("index {i} out of range {}", self.len())));
            }
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset::from_parts(features, labels, self.feature_dim)
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Rescales the given columns to [0, 1] using their min and max over
    /// this dataset. Constant columns become 0.
    pub fn minmax_scale_columns(&mut self, columns: std::ops::Range<usize>) {
        let d = self.feature_dim;
        for c in columns.filter(|c| *c < d) {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for row in self.features.chunks_exact(d) {
                lo = lo.min(row[c]);
                hi = hi.max(row[c]);
            }
            let span = hi - lo;
            for row in self.features.chunks_exact_mut(d) {
                row[c] = if span > 0.0 { (row[c] - lo) / span } else { 0.0 };
            }
        }
    }

    /// Fraction of `Binary(+1)` labels; 0 for class-labelled data.
    pub fn positive_fraction(&self) -> f64 {
        let pos = self.labels.iter().filter(|l| **l == Label::Binary(1)).count();
        pos as f64 / self.len().max(1) as f64
    }

    fn class_key(label: Label) -> usize {
        match label {
            Label::Binary(y) => usize::from(y > 0),
            Label::Class(c) => c as usize,
        }
    }
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

fn covtype_label(raw: &str, line: usize) -> Result<Label> {
    let class: i64 = raw
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.fract() == 0.0)
        .map(|v| v as i64)
        .ok_or_else(|| Error::Parse { line, msg: format!("bad class label {raw:?}") })?;
    if !(1..=7).contains(&class) {
        return Err(Error::Parse { line, msg: format!("class {class} outside 1..=7") });
    }
    Ok(Label::positive(class == 2))
}

fn parse_f64(raw: &str, line: usize) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse { line, msg: format!("bad number {raw:?}") })
}

/// Loads COVTYPE as a binary problem: original class 2 becomes +1, every
/// other class -1. Accepts the UCI CSV layout (54 features then the class)
/// or LIBSVM text (`class idx:val ...`, 1-based indices), optionally gzipped.
pub fn load_covtype(path: impl AsRef<Path>) -> Result<Dataset> {
    let reader = BufReader::new(open_maybe_gz(path.as_ref())?);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut row = [0.0f64; COVTYPE_FEATURES];
        if text.contains(',') {
            let fields: Vec<&str> = text.split(',').collect();
            if fields.len() != COVTYPE_FEATURES + 1 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {} columns, found {}", COVTYPE_FEATURES + 1, fields.len()),
                });
            }
            for (slot, raw) in row.iter_mut().zip(&fields[..COVTYPE_FEATURES]) {
                *slot = parse_f64(raw, lineno)?;
            }
            labels.push(covtype_label(fields[COVTYPE_FEATURES], lineno)?);
        } else {
            let mut tokens = text.split_whitespace();
            let label = tokens.next().expect("non-empty line");
            for tok in tokens {
                let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                    line: lineno,
                    msg: format!("expected idx:val, got {tok:?}"),
                })?;
                let idx: usize = idx.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad feature index {idx:?}"),
                })?;
                if idx == 0 || idx > COVTYPE_FEATURES {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("feature index {idx} outside 1..={COVTYPE_FEATURES}"),
                    });
                }
                row[idx - 1] = parse_f64(val, lineno)?;
            }
            labels.push(covtype_label(label, lineno)?);
        }
        features.extend_from_slice(&row);
    }
    Dataset::from_parts(features, labels, COVTYPE_FEATURES)
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    open_maybe_gz(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx("truncated header".into()))
}

/// Parses an IDX image/label pair from memory.
pub fn parse_mnist(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = be_u32(images, 0)?;
    if magic != MNIST_IMAGE_MAGIC {
        return Err(Error::Idx(format!("image magic {magic:#010x}, expected {MNIST_IMAGE_MAGIC:#010x}")));
    }
    let magic = be_u32(labels, 0)?;
    if magic != MNIST_LABEL_MAGIC {
        return Err(Error::Idx(format!("label magic {magic:#010x}, expected {MNIST_LABEL_MAGIC:#010x}")));
    }
    let count = be_u32(images, 4)? as usize;
    let rows = be_u32(images, 8)? as usize;
    let cols = be_u32(images, 12)? as usize;
    let label_count = be_u32(labels, 4)? as usize;
    if count != label_count {
        return Err(Error::Idx(format!("{count} images but {label_count} labels")));
    }
    let pixels = rows * cols;
    let body = images
        .get(16..16 + count * pixels)
        .ok_or_else(|| Error::Idx("image data truncated".into()))?;
    let label_body =
        labels.get(8..8 + count).ok_or_else(|| Error::Idx("label data truncated".into()))?;
    let features = body.iter().map(|&b| b as f64 / 255.0).collect();
    let labels = label_body
        .iter()
        .map(|&l| {
            if l < 10 {
                Ok(Label::Class(l))
            } else {
                Err(Error::Idx(format!("label {l} outside 0..=9")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_parts(features, labels, pixels)
}

/// Loads an MNIST IDX image/label file pair (optionally gzipped), scaling
/// pixels to [0, 1].
pub fn load_mnist(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    parse_mnist(&read_all(images.as_ref())?, &read_all(labels.as_ref())?)
}

/// Serializes a class-labelled dataset back to IDX bytes `(images, labels)`.
pub fn encode_mnist(ds: &Dataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != ds.feature_dim() {
        return Err(Error::DimMismatch { expected: ds.feature_dim(), got: rows * cols });
    }
    let mut images = Vec::with_capacity(16 + ds.len() * rows * cols);
    for v in [MNIST_IMAGE_MAGIC, ds.len() as u32, rows as u32, cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    let mut labels = Vec::with_capacity(8 + ds.len());
    labels.extend_from_slice(&MNIST_LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for i in 0..ds.len() {
        for &v in ds.features(i) {
            images.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
        match ds.labels()[i] {
            Label::Class(c) => labels.push(c),
            Label::Binary(_) => return Err(Error::LabelMismatch("IDX needs class labels".into())),
        }
    }
    Ok((images, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec { train_fraction: 0.8, seed }
    }
}

/// Per-class shuffled split: each class contributes `round(fraction * count)`
/// samples (clamped to leave at least one on each side) to the training set.
/// Both halves keep the parent's index order.
pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!("train_fraction {} not in (0,1)", spec.train_fraction)));
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 10];
    for (i, l) in ds.labels().iter().enumerate() {
        groups[Dataset::class_key(*l)].push(i);
    }
    let mut rng = rng::setup_stream(spec.seed, SetupPurpose::Split);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, group) in groups.iter_mut().enumerate() {
        if group.is_empty() {
            continue;
        }
        if group.len() < 2 {
            return Err(Error::invalid(format!("class {class} has fewer than 2 samples")));
        }
        group.shuffle(&mut rng);
        let n_train = ((spec.train_fraction * group.len() as f64).round() as usize)
            .clamp(1, group.len() - 1);
        train.extend_from_slice(&group[..n_train]);
        test.extend_from_slice(&group[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// The sample indices held by one honest worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerShard {
    /// 1-based
    pub worker_id: usize,
    pub indices: Vec<usize>,
}

/// Random permutation of `0..len` cut into `workers` contiguous chunks whose
/// sizes differ by at most one (the first `len % workers` get the extra).
pub fn partition_uniform(len: usize, workers: usize, seed: u64) -> Result<Vec<WorkerShard>> {
    if workers == 0 {
        return Err(Error::invalid("need at least one worker"));
    }
    if workers > len {
        return Err(Error::invalid(format!("{workers} workers but only {len} samples")));
    }
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut rng::setup_stream(seed, SetupPurpose::Partition));
    let base = len / workers;
    let extra = len % workers;
    let mut shards = Vec::with_capacity(workers);
    let mut start = 0;
    for w in 0..workers {
        let size = base + usize::from(w < extra);
        shards.push(WorkerShard { worker_id: w + 1, indices: perm[start..start + size].to_vec() });
        start += size;
    }
    Ok(shards)
}

/// `batch_size` indices drawn uniformly with replacement from the shard.
pub fn sample_minibatch<'a>(
    ds: &'a Dataset,
    shard: &WorkerShard,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<Batch<'a>> {
    if shard.indices.is_empty() {
        return Err(Error::Empty("worker shard"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let samples = (0..batch_size)
        .map(|_| ds.sample(shard.indices[rng.random_range(0..shard.indices.len())]))
        .collect();
    Batch::new(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Two classes separated by a hyperplane with margin at least 0.5.
    Binary,
    /// Ten Gaussian blobs, classes assigned round-robin.
    Class10,
}

pub fn synth_dataset(kind: SyntheticKind, n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || dim == 0 {
        return Err(Error::invalid("synthetic dataset needs n >= 1 and dim >= 1"));
    }
    let mut rng = rng::from_seed(seed);
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    match kind {
        SyntheticKind::Binary => {
            let mut w = normal_vec(&mut rng, dim, 1.0);
            let wn = dot(&w, &w).sqrt();
            w.iter_mut().for_each(|v| *v /= wn);
            for _ in 0..n {
                let mut x = normal_vec(&mut rng, dim, 1.0);
                let y = if dot(&w, &x) >= 0.0 { 1.0 } else { -1.0 };
                for (xi, wi) in x.iter_mut().zip(&w) {
                    *xi += y * 0.5 * wi;
                }
                features.extend_from_slice(&x);
                labels.push(Label::positive(y > 0.0));
            }
        }
        SyntheticKind::Class10 => {
            let centers: Vec<Vec<f64>> = (0..10).map(|_| normal_vec(&mut rng, dim, 3.0)).collect();
            for i in 0..n {
                let c = i % 10;
                let noise = normal_vec(&mut rng, dim, 1.0);
                features.extend(centers[c].iter().zip(&noise).map(|(m, e)| m + e));
                labels.push(Label::Class(c as u8));
            }
        }
    }
    Dataset::from_parts(features, labels, dim)
}
