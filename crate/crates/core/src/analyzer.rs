//! Executable forms of the privacy/robustness theory: VN-ratio feasibility
//! under Gaussian noise, the per-family necessary conditions, empirical probes
//! of the VN ratio and of the resilience angle, and the convergence-rate
//! bounds for the strongly convex case together with a quadratic testbed for
//! the lower bound.

use rayon::prelude::*;

use crate::attack::{forge, AttackSpec};
use crate::dataset::{sample_batch, Dataset};
use crate::gar::{aggregate, kf, GarKind, GarSpec};
use crate::model::{batch_gradient, ClipConfig, ModelParams};
use crate::numerics::{GradientVector, RandomStream};
use crate::privacy::{sanitize, NoiseCalibration, PrivacyBudget};
use crate::{Error, Result};

/// Default upper limit of the minimum-batch search.
pub const DEFAULT_BATCH_CAP: u64 = 1_000_000;

/// Denominators below this are treated as a vanishing gradient.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// `C = ε / √(ln(1.25/δ))`.
pub fn privacy_constant(budget: &PrivacyBudget) -> f64 {
    budget.epsilon() / (1.25 / budget.delta()).ln().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityQuery {
    pub spec: GarSpec,
    pub batch_size: u64,
    pub dim: u64,
    pub budget: PrivacyBudget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityVerdict {
    pub c_constant: f64,
    /// `b·C/√(8d)`
    pub threshold: f64,
    /// `1/k_F(n, f)`; zero when `k_F` is infinite.
    pub inverse_kf: f64,
    pub vn_can_hold: bool,
    /// Least batch size for which the condition can hold, `None` when it
    /// exceeds the search cap.
    pub min_batch: Option<u64>,
    /// Largest `f/n` over admissible integer `f` for which the condition can
    /// hold at this batch size; `None` when no `f` works.
    pub max_byz_fraction: Option<f64>,
}

fn threshold(c: f64, b: u64, d: u64) -> f64 {
    b as f64 * c / (8.0 * d as f64).sqrt()
}

fn inverse(k: f64) -> f64 {
    if k.is_infinite() {
        0.0
    } else {
        1.0 / k
    }
}

/// Evaluates whether the noisy VN-ratio condition can hold, using the exact
/// `k_F` of the rule.
pub fn vn_feasibility(q: &FeasibilityQuery, batch_cap: u64) -> Result<FeasibilityVerdict> {
    if q.batch_size == 0 || q.dim == 0 {
        return Err(Error::param("batch size and dimension must be positive"));
    }
    let inverse_kf = inverse(kf(&q.spec)?);
    let c = privacy_constant(&q.budget);
    let thr = threshold(c, q.batch_size, q.dim);
    let holds_at = |b: u64| inverse_kf <= threshold(c, b, q.dim);

    let min_batch = {
        let guess = (inverse_kf * (8.0 * q.dim as f64).sqrt() / c).ceil();
        if !guess.is_finite() || guess > batch_cap as f64 + 1.0 {
            None
        } else {
            let mut b = (guess as u64).max(1);
            while b > 1 && holds_at(b - 1) {
                b -= 1;
            }
            while !holds_at(b) {
                b += 1;
            }
            (b <= batch_cap).then_some(b)
        }
    };

    let max_byz_fraction = match q.spec.kind.max_f(q.spec.n) {
        None => None,
        Some(top) => (0..=top).rev().find_map(|f| {
            let spec = GarSpec::new(q.spec.kind, q.spec.n, f);
            let inv = inverse(kf(&spec).ok()?);
            (inv <= thr).then(|| f as f64 / q.spec.n as f64)
        }),
    };

    Ok(FeasibilityVerdict {
        c_constant: c,
        threshold: thr,
        inverse_kf,
        vn_can_hold: inverse_kf <= thr,
        min_batch,
        max_byz_fraction,
    })
}

/// The relaxed, per-family necessary condition for the noisy VN-ratio
/// condition. Returns `true` when the necessary condition is satisfied and
/// `false` when it already rules the VN condition out.
pub fn table1_condition(spec: &GarSpec, b: u64, d: u64, budget: &PrivacyBudget) -> Result<bool> {
    if spec.kind == GarKind::Average {
        return Err(Error::Unsupported("averaging has no VN-ratio condition".into()));
    }
    spec.check()?;
    if b == 0 || d == 0 {
        return Err(Error::param("batch size and dimension must be positive"));
    }
    let c = privacy_constant(budget);
    let cb = c * b as f64;
    let d = d as f64;
    let n = spec.n as f64;
    let f = spec.f as f64;
    let tau = f / n;
    let fails = match spec.kind {
        GarKind::Krum | GarKind::Bulyan => (16.0 * d * (n + f * f)).sqrt() > cb,
        GarKind::Median => (4.0 * d * (n + 1.0)).sqrt() > cb,
        GarKind::Meamed => (40.0 * d * (n + 1.0)).sqrt() > cb,
        GarKind::Mda => tau > cb / (8.0 * d.sqrt() + cb),
        GarKind::TrimmedMean => tau > cb * cb / (16.0 * d + 2.0 * cb * cb),
        GarKind::Phocas => tau > cb * cb / (64.0 * d + 2.0 * cb * cb),
        GarKind::Average => unreachable!(),
    };
    Ok(!fails)
}

/// Monte Carlo estimate of the VN ratio of honest submissions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VnEstimate {
    /// `numerator / norm_of_mean`, or `+∞` when the mean vanishes.
    pub ratio: f64,
    pub numerator: f64,
    pub norm_of_mean: f64,
    pub degenerate: bool,
}

/// VN ratio of a set of reports: `√(mean ‖r − r̄‖²) / ‖r̄‖`.
pub fn vn_ratio_of(reports: &[GradientVector]) -> Result<VnEstimate> {
    if reports.len() < 2 {
        return Err(Error::param("a VN estimate needs at least two reports"));
    }
    let mean = GradientVector::mean_of(reports);
    let spread = reports.iter().map(|r| r.distance_sq(&mean)).sum::<f64>() / reports.len() as f64;
    let numerator = spread.sqrt();
    let norm_of_mean = mean.l2_norm();
    let degenerate = norm_of_mean < DEGENERATE_NORM;
    Ok(VnEstimate {
        ratio: if degenerate { f64::INFINITY } else { numerator / norm_of_mean },
        numerator,
        norm_of_mean,
        degenerate,
    })
}

/// Draws `trials` honest reports (clipped batch gradients, sanitized when
/// `cal` is given) at fixed parameters and estimates their VN ratio.
pub fn empirical_vn_ratio(
    train: &Dataset,
    params: &ModelParams,
    b: usize,
    clip: &ClipConfig,
    cal: Option<&NoiseCalibration>,
    trials: usize,
    stream: &RandomStream,
) -> Result<VnEstimate> {
    if trials < 2 {
        return Err(Error::param("at least two trials are required"));
    }
    let reports = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut s = stream.fork(t as u64);
            let batch = sample_batch(train, b, &mut s)?;
            let g = batch_gradient(params, &batch, clip)?;
            match cal {
                Some(cal) => sanitize(&g, cal, &mut s),
                None => Ok(g),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    vn_ratio_of(&reports)
}

/// Result of a resilience-angle probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleProbe {
    /// Monte Carlo mean of `⟨R, ∇Q⟩`.
    pub inner_product_mean: f64,
    pub std_error: f64,
    pub gradient_norm_sq: f64,
    pub alpha: f64,
    /// `(1 − sin α)‖∇Q‖²`
    pub rhs: f64,
    /// Whether the condition is not rejected: the upper end of the
    /// confidence band reaches `rhs`.
    pub holds: bool,
}

/// Width of the confidence band, in standard errors.
pub const PROBE_Z: f64 = 3.0;

impl AngleProbe {
    pub fn rhs_at(&self, alpha: f64) -> f64 {
        (1.0 - alpha.sin()) * self.gradient_norm_sq
    }

    pub fn lower(&self) -> f64 {
        self.inner_product_mean - PROBE_Z * self.std_error
    }

    pub fn upper(&self) -> f64 {
        self.inner_product_mean + PROBE_Z * self.std_error
    }
}

/// Estimates `⟨E[R], ∇Q⟩` where `R` aggregates `honest` draws plus, under an
/// active attack, `f` forged reports, and tests the angle condition at `alpha`.
pub fn resilience_angle_probe<G>(
    spec: &GarSpec,
    attack: &AttackSpec,
    honest: G,
    true_gradient: &GradientVector,
    alpha: f64,
    trials: usize,
    stream: &RandomStream,
) -> Result<AngleProbe>
where
    G: Fn(&mut RandomStream) -> GradientVector + Sync,
{
    spec.check()?;
    if trials < 100 {
        return Err(Error::param("the angle probe needs at least 100 trials"));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&alpha) {
        return Err(Error::param(format!("alpha must lie in [0, π/2), got {alpha}")));
    }
    let norm_sq = true_gradient.dot(true_gradient);
    if norm_sq.is_nan() || norm_sq <= 0.0 {
        return Err(Error::param("the true gradient must be non-zero"));
    }
    let honest_count = if attack.is_active() { spec.n - spec.f } else { spec.n };
    let products = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut s = stream.fork(t as u64);
            let mut reports: Vec<GradientVector> = (0..honest_count).map(|_| honest(&mut s)).collect();
            if attack.is_active() {
                let byz = forge(attack, &reports)?;
                reports.extend(std::iter::repeat_n(byz, spec.f));
            }
            Ok(aggregate(spec, &reports)?.dot(true_gradient))
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = products.len() as f64;
    let mean = products.iter().sum::<f64>() / m;
    let var = products.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let std_error = (var / m).sqrt();
    let rhs = (1.0 - alpha.sin()) * norm_sq;
    Ok(AngleProbe {
        inner_product_mean: mean,
        std_error,
        gradient_norm_sq: norm_sq,
        alpha,
        rhs,
        holds: mean + PROBE_Z * std_error >= rhs,
    })
}

/// Problem constants for the strongly convex rate bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBoundQuery {
    /// Lipschitz constant of the gradient.
    pub mu: f64,
    /// Strong-convexity constant.
    pub lambda: f64,
    /// Resilience angle, in `[0, π/2)`.
    pub alpha: f64,
    /// Moment constant of the aggregation rule.
    pub c: f64,
    /// Per-sample gradient standard deviation bound.
    pub sigma: f64,
    pub b: u64,
    pub d: u64,
    pub steps: u64,
    pub noise_std: f64,
    pub g_max: f64,
}

impl RateBoundQuery {
    fn validate(&self) -> Result<()> {
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.alpha) {
            return Err(Error::param(format!("alpha must lie in [0, π/2), got {}", self.alpha)));
        }
        for (name, v) in [("mu", self.mu), ("lambda", self.lambda), ("c", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("sigma", self.sigma), ("noise_std", self.noise_std), ("g_max", self.g_max)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(format!("{name} must be non-negative and finite, got {v}")));
            }
        }
        if self.b == 0 || self.d == 0 || self.steps == 0 {
            return Err(Error::param("b, d and T must be positive"));
        }
        Ok(())
    }
}

/// `(1/(T+1)) · μc / (2λ²(1 − sin α)²) · (σ²/b + d s² + G_max²)`.
pub fn theorem_upper_bound(q: &RateBoundQuery) -> Result<f64> {
    q.validate()?;
    let shrink = 1.0 - q.alpha.sin();
    let constant = q.mu * q.c / (2.0 * q.lambda * q.lambda * shrink * shrink);
    let variance = q.sigma * q.sigma / q.b as f64 + q.d as f64 * q.noise_std * q.noise_std + q.g_max * q.g_max;
    Ok(constant * variance / (q.steps as f64 + 1.0))
}

/// `(σ²/b + d s²) / (2T)`.
pub fn theorem_lower_bound(sigma: f64, b: u64, d: u64, steps: u64, noise_std: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma >= 0.0 && noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::param("sigma and noise_std must be non-negative and finite"));
    }
    if b == 0 || d == 0 || steps == 0 {
        return Err(Error::param("b, d and T must be positive"));
    }
    Ok((sigma * sigma / b as f64 + d as f64 * noise_std * noise_std) / (2.0 * steps as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestbedResult {
    /// Monte Carlo mean of `‖x̂ − x̄‖²`.
    pub empirical_error: f64,
    /// `(σ²/b + d s²) / T`
    pub predicted_error: f64,
}

/// Mean estimation from `T` noisy observations `x̄ + z_t`, each coordinate of
/// `z_t` having variance `σ²/(d b) + s²`. The estimator is the sample mean and
/// `x̄ = 0`.
pub fn quadratic_testbed(
    d: usize,
    sigma: f64,
    b: usize,
    steps: usize,
    noise_std: f64,
    trials: usize,
    stream: &RandomStream,
) -> Result<TestbedResult> {
    if d == 0 || b == 0 || steps == 0 || trials == 0 {
        return Err(Error::param("d, b, T and trials must be positive"));
    }
    if !(sigma.is_finite() && sigma >= 0.0 && noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::param("sigma and noise_std must be non-negative and finite"));
    }
    let coord_var = sigma * sigma / (d as f64 * b as f64) + noise_std * noise_std;
    let coord_std = coord_var.sqrt();
    let predicted_error = d as f64 * coord_var / steps as f64;

    let total: f64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut s = stream.fork(t as u64);
            let mut sum = vec![0.0; d];
            if coord_std > 0.0 {
                for _ in 0..steps {
                    let mut j = 0;
                    while j < d {
                        let (a, b) = s.normal_pair();
                        sum[j] += a;
                        if j + 1 < d {
                            sum[j + 1] += b;
                        }
                        j += 2;
                    }
                }
            }
            let scale = coord_std / steps as f64;
            sum.iter().map(|v| (v * scale).powi(2)).sum::<f64>()
        })
        .sum();

    Ok(TestbedResult {
        empirical_error: total / trials as f64,
        predicted_error,
    })
}
