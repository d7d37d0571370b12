//! Sparse SVM-light text ingestion, deterministic train/test splitting and
//! with-replacement mini-batch sampling.
//!
//! The accepted grammar is one sample per line:
//!
//! ```text
//! <label> <index>:<value> <index>:<value> ...   # optional comment
//! ```
//!
//! Indices are 1-based and strictly increasing; absent indices read as zero.
//! Labels in `{-1, +1}` are mapped to `{0, 1}`, labels already in `{0, 1}`
//! pass through.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::numerics::RandomStream;
use crate::{Error, Result};

/// Number of features of the phishing dataset.
pub const PHISHING_FEATURES: usize = 68;
/// Number of samples of the phishing dataset.
pub const PHISHING_SAMPLES: usize = 11_055;
/// Training-set size used for the phishing experiments.
pub const PHISHING_TRAIN: usize = 8_400;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Either 0.0 or 1.0.
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    feature_count: usize,
}

impl Dataset {
    /// Builds a dataset, checking that every sample has `feature_count`
    /// features and a binary label.
    pub fn new(samples: Vec<Sample>, feature_count: usize) -> Result<Self> {
        if feature_count == 0 {
            return Err(Error::param("feature count must be positive"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != feature_count {
                return Err(Error::param(format!(
                    "sample {i} has {} features, expected {feature_count}",
                    s.features.len()
                )));
            }
            if s.label != 0.0 && s.label != 1.0 {
                return Err(Error::param(format!("sample {i} has label {}", s.label)));
            }
        }
        Ok(Dataset {
            samples,
            feature_count,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Serializes back to sparse text, writing only non-zero features.
    pub fn to_sparse_text(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            write!(out, "{}", s.label).unwrap();
            for (j, v) in s.features.iter().enumerate() {
                if *v != 0.0 {
                    write!(out, " {}:{}", j + 1, v).unwrap();
                }
            }
            out.push('\n');
        }
        out
    }
}

/// A mini-batch, in draw order.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<'a> {
    pub samples: Vec<&'a Sample>,
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Parses sparse SVM-light text.
///
/// `feature_count` overrides the inferred width (the largest index seen); it
/// must not be smaller than any index present.
pub fn parse_sparse(text: &[u8], feature_count: Option<usize>) -> Result<Dataset> {
    let text = std::str::from_utf8(text).map_err(|e| Error::Parse {
        line: 0,
        message: format!("input is not valid UTF-8: {e}"),
    })?;
    let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let raw_label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("invalid label `{label_tok}`")))?;
        let label = if raw_label == 1.0 {
            1.0
        } else if raw_label == -1.0 || raw_label == 0.0 {
            0.0
        } else {
            return Err(err(format!("label {raw_label} is not one of -1, 0, +1")));
        };

        let mut entries = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected <index>:<value>, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("invalid feature index `{idx}`")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(err(format!(
                    "feature index {idx} does not increase (previous {prev})"
                )));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("invalid feature value `{val}`")))?;
            if !val.is_finite() {
                return Err(err(format!("feature value `{val}` is not finite")));
            }
            prev = idx;
            entries.push((idx, val));
        }
        max_index = max_index.max(prev);
        rows.push((label, entries));
    }

    let width = match feature_count {
        Some(w) if w < max_index => {
            return Err(Error::param(format!(
                "feature count {w} is smaller than the largest index {max_index}"
            )))
        }
        Some(w) => w,
        None => max_index.max(1),
    };

    let samples = rows
        .into_iter()
        .map(|(label, entries)| {
            let mut features = vec![0.0; width];
            for (idx, val) in entries {
                features[idx - 1] = val;
            }
            Sample { features, label }
        })
        .collect();
    Dataset::new(samples, width)
}

/// Reads and parses a sparse file from disk.
pub fn load_sparse(path: &Path, feature_count: Option<usize>) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    parse_sparse(&bytes, feature_count)
}

/// Shuffles `data` with `stream` and cuts it into `(train, test)` with
/// `train_count` samples in the training part.
pub fn split(data: &Dataset, train_count: usize, stream: &mut RandomStream) -> Result<(Dataset, Dataset)> {
    if train_count > data.len() {
        return Err(Error::param(format!(
            "train count {train_count} exceeds dataset size {}",
            data.len()
        )));
    }
    let order = split_permutation(data.len(), stream);
    let pick = |idx: &[usize]| Dataset {
        samples: idx.iter().map(|&i| data.samples[i].clone()).collect(),
        feature_count: data.feature_count,
    };
    Ok((pick(&order[..train_count]), pick(&order[train_count..])))
}

/// The permutation applied by [`split`].
pub fn split_permutation(len: usize, stream: &mut RandomStream) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(stream);
    order
}

/// Draws `b` samples uniformly with replacement.
pub fn sample_batch<'a>(train: &'a Dataset, b: usize, stream: &mut RandomStream) -> Result<Batch<'a>> {
    if b == 0 {
        return Err(Error::param("batch size must be at least 1"));
    }
    if train.is_empty() {
        return Err(Error::State("cannot sample from an empty training set".into()));
    }
    let samples = (0..b)
        .map(|_| &train.samples[stream.gen_range(0..train.len())])
        .collect();
    Ok(Batch { samples })
}

/// Number of categorical attributes behind the surrogate's one-hot features:
/// 22 binary and 8 ternary attributes give 22·2 + 8·3 = 68 columns.
const SURROGATE_BINARY_ATTRS: usize = 22;
const SURROGATE_TERNARY_ATTRS: usize = 8;
/// Share of legitimate (positive) sites in the published phishing data,
/// 6157 of 11 055.
pub const SURROGATE_POSITIVE_RATE: f64 = 6157.0 / 11055.0;

/// A deterministic stand-in for the phishing dataset: 11 055 samples with 68
/// one-hot encoded binary features and labels drawn from a planted logistic
/// model over the underlying categorical attributes.
///
/// The planted model has a few strongly informative attributes and many weak
/// ones, so that logistic regression reaches roughly 92-94% accuracy as on
/// the real data. Its intercept is set so that the expected positive rate is
/// [`SURROGATE_POSITIVE_RATE`].
pub fn phishing_surrogate(seed: u64) -> Dataset {
    let mut rng = RandomStream::new(seed, crate::numerics::streams::SURROGATE);
    let arities: Vec<usize> = std::iter::repeat_n(2, SURROGATE_BINARY_ATTRS)
        .chain(std::iter::repeat_n(3, SURROGATE_TERNARY_ATTRS))
        .collect();
    debug_assert_eq!(arities.iter().sum::<usize>(), PHISHING_FEATURES);

    // Category probabilities and per-category logit contributions.
    let mut probs = Vec::with_capacity(arities.len());
    let mut effects = Vec::with_capacity(arities.len());
    for (a, &k) in arities.iter().enumerate() {
        let raw: Vec<f64> = (0..k).map(|_| 0.2 + rng.next_f64()).collect();
        let total: f64 = raw.iter().sum();
        probs.push(raw.into_iter().map(|p| p / total).collect::<Vec<_>>());
        let scale = if a % 5 == 0 { 2.5 } else { 0.6 };
        effects.push((0..k).map(|_| scale * rng.normal_pair().0).collect::<Vec<_>>());
    }

    let mut rows = Vec::with_capacity(PHISHING_SAMPLES);
    for _ in 0..PHISHING_SAMPLES {
        let mut features = vec![0.0; PHISHING_FEATURES];
        let mut logit = 0.0;
        let mut offset = 0;
        for (a, &k) in arities.iter().enumerate() {
            let u = rng.next_f64();
            let mut acc = 0.0;
            let mut cat = k - 1;
            for (c, p) in probs[a].iter().enumerate() {
                acc += p;
                if u < acc {
                    cat = c;
                    break;
                }
            }
            features[offset + cat] = 1.0;
            logit += effects[a][cat];
            offset += k;
        }
        rows.push((features, logit));
    }

    let positive_rate = |shift: f64| {
        rows.iter().map(|(_, z)| 1.0 / (1.0 + (-(z + shift)).exp())).sum::<f64>() / rows.len() as f64
    };
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if positive_rate(mid) < SURROGATE_POSITIVE_RATE {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let intercept = 0.5 * (lo + hi);

    let samples = rows
        .into_iter()
        .map(|(features, z)| {
            let p = 1.0 / (1.0 + (-(z + intercept)).exp());
            let label = if rng.next_f64() < p { 1.0 } else { 0.0 };
            Sample { features, label }
        })
        .collect();
    Dataset {
        samples,
        feature_count: PHISHING_FEATURES,
    }
}
