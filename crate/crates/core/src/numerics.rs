//! Dense vectors, seedable random streams, Gaussian sampling and running
//! statistics shared by every other module.

use std::ops::Index;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::{Error, Result};

/// A dense, finite, real-valued vector of fixed dimension.
///
/// This is the unit exchanged between workers and the parameter server.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    /// Wraps `values`, rejecting NaN and infinite components.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "component {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(GradientVector(values))
    }

    pub fn zeros(d: usize) -> Self {
        GradientVector(vec![0.0; d])
    }

    /// Wraps `values` without the finiteness check. Callers guarantee the
    /// invariant (results of arithmetic on finite inputs).
    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        GradientVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &GradientVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn distance_sq(&self, other: &GradientVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn add(&self, other: &GradientVector) -> GradientVector {
        debug_assert_eq!(self.len(), other.len());
        GradientVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &GradientVector) -> GradientVector {
        debug_assert_eq!(self.len(), other.len());
        GradientVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, factor: f64) -> GradientVector {
        GradientVector(self.0.iter().map(|a| a * factor).collect())
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, factor: f64, other: &GradientVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }

    /// Coordinate-wise mean of `vectors`. Panics on an empty slice.
    pub fn mean_of<'a, I>(vectors: I) -> GradientVector
    where
        I: IntoIterator<Item = &'a GradientVector>,
    {
        let mut iter = vectors.into_iter();
        let first = iter.next().expect("mean of an empty set");
        let mut acc = first.0.clone();
        let mut count = 1usize;
        for v in iter {
            for (a, b) in acc.iter_mut().zip(&v.0) {
                *a += b;
            }
            count += 1;
        }
        let inv = 1.0 / count as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        GradientVector(acc)
    }
}

impl Index<usize> for GradientVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for GradientVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean norm of a slice.
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A deterministic, counter-based random stream.
///
/// Streams are identified by `(master_seed, stream_id)`. The counter is the
/// position inside the stream; cloning a stream snapshots it and replaying the
/// clone reproduces the same outputs. Distinct stream ids select independent
/// ChaCha20 streams under the same key.
#[derive(Debug, Clone)]
pub struct RandomStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

/// Reserved stream ids for non-worker purposes. Worker `i` uses stream id `i`.
pub mod streams {
    pub const SPLIT: u64 = u64::MAX - 1;
    pub const SURROGATE: u64 = u64::MAX - 2;
    pub const TESTBED: u64 = u64::MAX - 3;
    pub const PROBE: u64 = u64::MAX - 4;
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        RandomStream {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Repositions the stream at `counter` words from its start.
    pub fn seek(&mut self, counter: u128) {
        self.rng.set_word_pos(counter);
    }

    /// Derives a child stream (e.g. one per Monte Carlo trial) whose sequence
    /// depends only on this stream's identity and `child`, not on its position.
    pub fn fork(&self, child: u64) -> RandomStream {
        let id = splitmix64(self.stream_id ^ splitmix64(child.wrapping_add(0x51_7c_c1_b7)));
        RandomStream::new(self.master_seed, id)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// One pair of independent standard normals via Box–Muller.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // 1 - u lies in (0, 1], so the logarithm is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        (radius * angle.cos(), radius * angle.sin())
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `d` i.i.d. draws from N(0, std²) using Box–Muller on `stream`.
///
/// A zero standard deviation yields the zero vector and leaves the stream
/// untouched.
pub fn gaussian_vector(stream: &mut RandomStream, d: usize, std: f64) -> Result<GradientVector> {
    if d == 0 {
        return Err(Error::param("dimension must be at least 1"));
    }
    if !std.is_finite() || std < 0.0 {
        return Err(Error::param(format!(
            "standard deviation must be finite and non-negative, got {std}"
        )));
    }
    if std == 0.0 {
        return Ok(GradientVector::zeros(d));
    }
    let mut out = Vec::with_capacity(d);
    while out.len() < d {
        let (a, b) = stream.normal_pair();
        out.push(a * std);
        if out.len() < d {
            out.push(b * std);
        }
    }
    Ok(GradientVector(out))
}

/// Streaming per-coordinate mean and variance (Welford), mergeable.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(d: usize) -> Self {
        RunningStats {
            count: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, sample: &[f64]) {
        debug_assert_eq!(sample.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(sample) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    /// Combines two accumulators as if all samples had been pushed into one.
    pub fn merge(&mut self, other: &RunningStats) {
        debug_assert_eq!(self.dim(), other.dim());
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let total = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / total;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / total;
        }
        self.count += other.count;
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population variance (divides by the count).
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.dim()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|s| (s / n).max(0.0)).collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance().into_iter().map(f64::sqrt).collect()
    }
}

/// Per-coordinate mean and population standard deviation of `samples`.
pub fn coordinate_stats(samples: &[GradientVector]) -> Result<(GradientVector, GradientVector)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::param("coordinate statistics of an empty sample list"))?;
    let d = first.len();
    let mut stats = RunningStats::new(d);
    for (i, s) in samples.iter().enumerate() {
        if s.len() != d {
            return Err(Error::param(format!(
                "sample {i} has length {} but sample 0 has length {d}",
                s.len()
            )));
        }
        stats.push(s.as_slice());
    }
    Ok((
        GradientVector(stats.mean().to_vec()),
        GradientVector(stats.std()),
    ))
}
