//! Logistic regression scored with the mean-square-error loss.
//!
//! The parameter vector has dimension `d = feature_count + 1`; the bias is
//! its last coordinate, and gradients use the same layout.

use crate::dataset::{Batch, Dataset, Sample};
use crate::numerics::GradientVector;
use crate::{Error, Result};

/// Weights followed by the bias, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    w: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(feature_count: usize) -> Self {
        ModelParams {
            w: vec![0.0; feature_count + 1],
        }
    }

    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let mut w = weights;
        w.push(bias);
        Self::from_vector(w)
    }

    /// Builds parameters from a flat `d`-vector whose last entry is the bias.
    pub fn from_vector(w: Vec<f64>) -> Result<Self> {
        if w.len() < 2 {
            return Err(Error::param("parameter vector needs at least one weight and a bias"));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("parameters must be finite"));
        }
        Ok(ModelParams { w })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn feature_count(&self) -> usize {
        self.w.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.w[..self.w.len() - 1]
    }

    pub fn bias(&self) -> f64 {
        self.w[self.w.len() - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
    }

    /// `w += factor * direction`
    pub fn step(&mut self, factor: f64, direction: &GradientVector) {
        debug_assert_eq!(direction.len(), self.w.len());
        for (w, g) in self.w.iter_mut().zip(direction.as_slice()) {
            *w += factor * g;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipConfig {
    g_max: f64,
}

impl ClipConfig {
    pub fn new(g_max: f64) -> Result<Self> {
        if !(g_max.is_finite() && g_max > 0.0) {
            return Err(Error::param(format!(
                "clipping norm must be positive and finite, got {g_max}"
            )));
        }
        Ok(ClipConfig { g_max })
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(params: &ModelParams, features: &[f64]) -> f64 {
    debug_assert_eq!(features.len(), params.feature_count());
    params
        .weights()
        .iter()
        .zip(features)
        .map(|(w, x)| w * x)
        .sum::<f64>()
        + params.bias()
}

pub fn predict(params: &ModelParams, features: &[f64]) -> f64 {
    sigmoid(logit(params, features))
}

/// Gradient of `(predict(x) - y)²` with respect to `(weights, bias)`.
pub fn per_sample_gradient(params: &ModelParams, sample: &Sample) -> GradientVector {
    let p = predict(params, &sample.features);
    let scale = 2.0 * (p - sample.label) * p * (1.0 - p);
    let mut g = Vec::with_capacity(params.dim());
    g.extend(sample.features.iter().map(|x| scale * x));
    g.push(scale);
    GradientVector::from_vec(g)
}

/// Rescales `g` onto the ball of radius `g_max` when it lies outside.
pub fn clip(g: GradientVector, cfg: &ClipConfig) -> GradientVector {
    let norm = g.l2_norm();
    if norm <= cfg.g_max {
        g
    } else {
        g.scale(cfg.g_max / norm)
    }
}

/// Mean of the per-sample clipped gradients over `batch`.
pub fn batch_gradient(params: &ModelParams, batch: &Batch<'_>, cfg: &ClipConfig) -> Result<GradientVector> {
    clipped_mean(params, batch.samples.iter().copied(), cfg)
}

/// Mean clipped gradient over an arbitrary sample sequence.
///
/// Equivalent to averaging `clip(per_sample_gradient(..))`, without
/// materialising each per-sample vector.
pub fn clipped_mean<'a, I>(params: &ModelParams, samples: I, cfg: &ClipConfig) -> Result<GradientVector>
where
    I: IntoIterator<Item = &'a Sample>,
{
    clipped_mean_with_loss(params, samples, cfg).map(|(g, _)| g)
}

/// [`clipped_mean`] together with [`mse_loss`] over the same samples, in one pass.
pub fn clipped_mean_with_loss<'a, I>(params: &ModelParams, samples: I, cfg: &ClipConfig) -> Result<(GradientVector, f64)>
where
    I: IntoIterator<Item = &'a Sample>,
{
    let fc = params.feature_count();
    let mut acc = vec![0.0; params.dim()];
    let mut loss = 0.0;
    let mut count = 0usize;
    for s in samples {
        let p = predict(params, &s.features);
        let r = p - s.label;
        loss += r * r;
        let scale = 2.0 * r * p * (1.0 - p);
        let sq: f64 = s.features.iter().map(|x| x * x).sum::<f64>() + 1.0;
        let norm = scale.abs() * sq.sqrt();
        let factor = if norm <= cfg.g_max { scale } else { scale * (cfg.g_max / norm) };
        for (a, x) in acc[..fc].iter_mut().zip(&s.features) {
            *a += factor * x;
        }
        acc[fc] += factor;
        count += 1;
    }
    if count == 0 {
        return Err(Error::param("gradient of an empty batch"));
    }
    let inv = 1.0 / count as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok((GradientVector::from_vec(acc), loss * inv))
}

/// Mean of `(predict(x) - y)²`.
pub fn mse_loss<'a, I>(params: &ModelParams, samples: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a Sample>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for s in samples {
        let r = predict(params, &s.features) - s.label;
        total += r * r;
        count += 1;
    }
    if count == 0 {
        return Err(Error::param("loss over an empty sample set"));
    }
    Ok(total / count as f64)
}

/// Fraction of correctly classified samples. A prediction of exactly 0.5
/// counts as the positive class.
pub fn accuracy(params: &ModelParams, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::param("accuracy over an empty test set"));
    }
    let hits = test
        .samples()
        .iter()
        .filter(|s| {
            let positive = predict(params, &s.features) >= 0.5;
            positive == (s.label == 1.0)
        })
        .count();
    Ok(hits as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomStream;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn sample(features: &[f64], label: f64) -> Sample {
        Sample {
            features: features.to_vec(),
            label,
        }
    }

    #[test]
    fn predict_examples() {
        let zero = ModelParams::zeros(3);
        assert_eq!(predict(&zero, &[1.0, -2.0, 7.0]), 0.5);
        let p = ModelParams::new(vec![1.0], 0.0).unwrap();
        assert_eq!(predict(&p, &[0.0]), 0.5);
        let mut last = 0.0;
        for b in [-50.0, -1.0, 0.0, 1.0, 50.0] {
            let q = predict(&ModelParams::new(vec![0.0], b).unwrap(), &[1.0]);
            assert!(q > last);
            last = q;
        }
        assert!(predict(&ModelParams::new(vec![0.0], 800.0).unwrap(), &[1.0]) == 1.0);
        assert!(predict(&ModelParams::new(vec![0.0], -800.0).unwrap(), &[1.0]) >= 0.0);
    }

    #[test]
    fn clipped_mean_matches_naive_composition() {
        let mut rng = RandomStream::new(11, 0);
        for _ in 0..200 {
            let fc = rng.gen_range(1..6);
            let params = ModelParams::new((0..fc).map(|_| rng.gen_range(-3.0..3.0)).collect(), rng.gen_range(-1.0..1.0)).unwrap();
            let samples: Vec<Sample> = (0..rng.gen_range(1..8))
                .map(|_| sample(&(0..fc).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>(), rng.gen_range(0..2) as f64))
                .collect();
            let cfg = ClipConfig::new(rng.gen_range(0.001..1.0)).unwrap();
            let naive = GradientVector::mean_of(
                &samples.iter().map(|s| clip(per_sample_gradient(&params, s), &cfg)).collect::<Vec<_>>(),
            );
            let (fused, loss) = clipped_mean_with_loss(&params, &samples, &cfg).unwrap();
            assert!((loss - mse_loss(&params, &samples).unwrap()).abs() <= 1e-15);
            for (a, b) in naive.as_slice().iter().zip(fused.as_slice()) {
                assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gradient_examples() {
        let zero = ModelParams::zeros(1);
        let g = per_sample_gradient(&zero, &sample(&[1.0], 1.0));
        // 2·(0.5 − 1)·0.5·0.5
        assert_relative_eq!(g[0], -0.25, epsilon = 1e-15);
        assert_relative_eq!(g[1], -0.25, epsilon = 1e-15);

        let g = per_sample_gradient(&ModelParams::zeros(2), &sample(&[3.0, -1.0], 0.5));
        assert_eq!(g, GradientVector::zeros(3));
    }

    fn loss_at(w: &[f64], s: &Sample) -> f64 {
        let p = ModelParams::from_vector(w.to_vec()).unwrap();
        let r = predict(&p, &s.features) - s.label;
        r * r
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = RandomStream::new(77, 0);
        let h = 1e-5;
        for _ in 0..100 {
            let m = rng.gen_range(1..6);
            let w: Vec<f64> = (0..=m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let s = sample(
                &(0..m).map(|_| rng.gen_range(-1.5..1.5)).collect::<Vec<_>>(),
                if rng.gen_bool(0.5) { 1.0 } else { 0.0 },
            );
            let g = per_sample_gradient(&ModelParams::from_vector(w.clone()).unwrap(), &s);
            for k in 0..w.len() {
                let mut up = w.clone();
                let mut down = w.clone();
                up[k] += h;
                down[k] -= h;
                let fd = (loss_at(&up, &s) - loss_at(&down, &s)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6, "component {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn clip_examples() {
        let cfg = ClipConfig::new(1.0).unwrap();
        assert_eq!(clip(GradientVector::zeros(2), &cfg), GradientVector::zeros(2));
        let c = clip(GradientVector::new(vec![3.0, 4.0]).unwrap(), &cfg);
        assert_relative_eq!(c[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(c[1], 0.8, epsilon = 1e-15);
        let inside = GradientVector::new(vec![0.3, 0.4]).unwrap();
        assert_eq!(clip(inside.clone(), &cfg), inside);
        assert!(ClipConfig::new(0.0).is_err());
        assert!(ClipConfig::new(f64::INFINITY).is_err());
    }

    #[test]
    fn batch_gradient_examples() {
        let cfg = ClipConfig::new(0.01).unwrap();
        let params = ModelParams::new(vec![0.3, -0.2], 0.1).unwrap();
        let s = sample(&[1.0, 2.0], 1.0);
        let single = Batch { samples: vec![&s] };
        let expected = clip(per_sample_gradient(&params, &s), &cfg);
        let got = batch_gradient(&params, &single, &cfg).unwrap();
        assert_eq!(got, expected);

        let copies = Batch { samples: vec![&s; 7] };
        let got = batch_gradient(&params, &copies, &cfg).unwrap();
        for j in 0..3 {
            assert_relative_eq!(got[j], expected[j], max_relative = 1e-12);
        }
        assert!(got.l2_norm() <= 0.01 + 1e-12);

        let empty = Batch { samples: vec![] };
        assert!(batch_gradient(&params, &empty, &cfg).is_err());
    }

    #[test]
    fn loss_examples() {
        let zero = ModelParams::zeros(2);
        let ones = vec![sample(&[1.0, 0.0], 1.0), sample(&[0.0, 1.0], 1.0)];
        assert_relative_eq!(mse_loss(&zero, &ones).unwrap(), 0.25);
        let mixed = vec![sample(&[1.0, 0.0], 1.0), sample(&[0.0, 1.0], 0.0)];
        assert_relative_eq!(mse_loss(&zero, &mixed).unwrap(), 0.25);
        let perfect = ModelParams::new(vec![40.0, -40.0], 0.0).unwrap();
        assert!(mse_loss(&perfect, &mixed).unwrap() < 1e-30);
        assert!(mse_loss(&zero, &[]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let ds = Dataset::new(
            vec![
                sample(&[1.0], 1.0),
                sample(&[2.0], 1.0),
                sample(&[-1.0], 0.0),
                sample(&[0.5], 1.0),
            ],
            1,
        )
        .unwrap();
        // Zero parameters predict 0.5 everywhere: ties count as positive.
        assert_eq!(accuracy(&ModelParams::zeros(1), &ds).unwrap(), 0.75);
        let good = ModelParams::new(vec![5.0], 0.0).unwrap();
        assert_eq!(accuracy(&good, &ds).unwrap(), 1.0);

        let flipped = Dataset::new(
            ds.samples()
                .iter()
                .map(|s| sample(&s.features, 1.0 - s.label))
                .collect(),
            1,
        )
        .unwrap();
        let some = ModelParams::new(vec![1.0], -0.7).unwrap();
        let a = accuracy(&some, &ds).unwrap();
        assert_relative_eq!(accuracy(&some, &flipped).unwrap(), 1.0 - a);

        let all_ones = Dataset::new(vec![sample(&[1.0], 1.0); 3], 1).unwrap();
        assert_eq!(accuracy(&ModelParams::new(vec![0.0], 1.0).unwrap(), &all_ones).unwrap(), 1.0);
        assert!(accuracy(&good, &Dataset::new(vec![], 1).unwrap()).is_err());
    }

    #[test]
    fn clipping_bounds_sensitivity() {
        let cfg = ClipConfig::new(0.01).unwrap();
        let mut rng = RandomStream::new(5, 2);
        for _ in 0..200 {
            let params = ModelParams::from_vector((0..4).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
            let b = rng.gen_range(1..20);
            let pool: Vec<Sample> = (0..b + 1)
                .map(|_| sample(&[rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)], if rng.gen_bool(0.5) { 1.0 } else { 0.0 }))
                .collect();
            let a = Batch { samples: pool[..b].iter().collect() };
            let mut other: Vec<&Sample> = pool[..b].iter().collect();
            other[rng.gen_range(0..b)] = &pool[b];
            let c = Batch { samples: other };
            let ga = batch_gradient(&params, &a, &cfg).unwrap();
            let gc = batch_gradient(&params, &c, &cfg).unwrap();
            assert!(ga.l2_norm() <= cfg.g_max() + 1e-12);
            assert!(ga.sub(&gc).l2_norm() <= 2.0 * cfg.g_max() / b as f64 + 1e-12);
        }
    }
}
