//! Gradient aggregation rules (GARs) and their variance-to-norm constants.
//!
//! Every rule is deterministic. Where a rule makes a selection, ties are
//! broken by a fixed total order:
//!
//! * MDA picks, among minimal-diameter subsets, the one whose mean is
//!   lexicographically smallest, then the smallest index set. Subsets sharing
//!   the bottleneck pair tie exactly, which is common.
//! * Krum (and Bulyan's inner Krum) ranks by score, then by the report
//!   compared lexicographically, then by worker index. Ranking by value first
//!   keeps Bulyan permutation invariant when its last iterations have no
//!   neighbours to score (all scores zero).
//! * "Closest to a pivot" selections (Meamed, Phocas, Bulyan's final step) rank
//!   by distance, then by value, then by worker index.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::numerics::GradientVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GarKind {
    Average,
    Mda,
    Krum,
    Bulyan,
    Median,
    Meamed,
    Phocas,
    TrimmedMean,
}

impl GarKind {
    /// The seven Byzantine-resilient rules, in reporting order.
    pub const RESILIENT: [GarKind; 7] = [
        GarKind::Mda,
        GarKind::Krum,
        GarKind::Bulyan,
        GarKind::Median,
        GarKind::Meamed,
        GarKind::Phocas,
        GarKind::TrimmedMean,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GarKind::Average => "average",
            GarKind::Mda => "mda",
            GarKind::Krum => "krum",
            GarKind::Bulyan => "bulyan",
            GarKind::Median => "median",
            GarKind::Meamed => "meamed",
            GarKind::Phocas => "phocas",
            GarKind::TrimmedMean => "trimmed-mean",
        }
    }

    /// The applicability inequality on `(n, f)`, as text.
    pub fn requirement(&self) -> &'static str {
        match self {
            GarKind::Average => "n >= 1",
            GarKind::Mda => "n >= 2f + 1",
            GarKind::Krum => "n >= 2f + 3",
            GarKind::Bulyan => "n >= 4f + 3",
            GarKind::Median | GarKind::Meamed => "2f <= n - 1",
            GarKind::Phocas | GarKind::TrimmedMean => "n > 2f",
        }
    }

    fn admits(&self, n: usize, f: usize) -> bool {
        match self {
            GarKind::Average => n >= 1,
            GarKind::Mda => n > 2 * f,
            GarKind::Krum => n >= 2 * f + 3,
            GarKind::Bulyan => n >= 4 * f + 3,
            GarKind::Median | GarKind::Meamed => 2 * f < n,
            GarKind::Phocas | GarKind::TrimmedMean => n > 2 * f,
        }
    }

    /// Largest `f` admitted for `n` workers, if any.
    pub fn max_f(&self, n: usize) -> Option<usize> {
        (0..n).rev().find(|&f| self.admits(n, f))
    }
}

impl fmt::Display for GarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GarKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k = match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "average" | "avg" | "mean" => GarKind::Average,
            "mda" => GarKind::Mda,
            "krum" => GarKind::Krum,
            "bulyan" => GarKind::Bulyan,
            "median" => GarKind::Median,
            "meamed" => GarKind::Meamed,
            "phocas" => GarKind::Phocas,
            "trimmed-mean" | "trimmedmean" | "trmean" => GarKind::TrimmedMean,
            other => return Err(Error::param(format!("unknown aggregation rule `{other}`"))),
        };
        Ok(k)
    }
}

/// An aggregation rule instantiated for `n` workers of which at most `f` are
/// Byzantine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GarSpec {
    pub kind: GarKind,
    pub n: usize,
    pub f: usize,
}

impl GarSpec {
    pub fn new(kind: GarKind, n: usize, f: usize) -> Self {
        GarSpec { kind, n, f }
    }

    /// Fails with the violated inequality when the rule does not apply.
    pub fn check(&self) -> Result<()> {
        if self.kind.admits(self.n, self.f) {
            Ok(())
        } else {
            Err(Error::Precondition {
                gar: self.kind.name(),
                inequality: self.kind.requirement(),
                n: self.n,
                f: self.f,
            })
        }
    }

    pub fn is_applicable(&self) -> bool {
        self.kind.admits(self.n, self.f)
    }
}

/// The VN-ratio constant `k_F(n, f)` of a resilient rule.
///
/// MDA with `f = 0` has no finite constant and reports `+∞`.
pub fn kf(spec: &GarSpec) -> Result<f64> {
    if spec.kind == GarKind::Average {
        return Err(Error::Unsupported("averaging has no VN-ratio constant".into()));
    }
    spec.check()?;
    let n = spec.n as f64;
    let f = spec.f as f64;
    let k = match spec.kind {
        GarKind::Mda => {
            if spec.f == 0 {
                f64::INFINITY
            } else {
                (n - f) / (8f64.sqrt() * f)
            }
        }
        GarKind::Krum | GarKind::Bulyan => 1.0 / (2.0 * krum_eta(spec.n, spec.f)).sqrt(),
        GarKind::Median => 1.0 / (n - f).sqrt(),
        GarKind::Meamed => 1.0 / (10.0 * (n - f)).sqrt(),
        GarKind::TrimmedMean => ((n - 2.0 * f).powi(2) / (2.0 * (f + 1.0) * (n - f))).sqrt(),
        GarKind::Phocas => (4.0 + (n - 2.0 * f).powi(2) / (12.0 * (f + 1.0) * (n - f))).sqrt(),
        GarKind::Average => unreachable!(),
    };
    Ok(k)
}

/// `η(n, f) = n − f + (f(n − f − 2) + f²(n − f − 1)) / (n − 2f − 2)`.
pub fn krum_eta(n: usize, f: usize) -> f64 {
    let n = n as f64;
    let f = f as f64;
    n - f + (f * (n - f - 2.0) + f * f * (n - f - 1.0)) / (n - 2.0 * f - 2.0)
}

/// Aggregates one report per worker. Missing submissions should be passed as
/// zero vectors.
pub fn aggregate(spec: &GarSpec, reports: &[GradientVector]) -> Result<GradientVector> {
    spec.check()?;
    if reports.len() != spec.n {
        return Err(Error::param(format!(
            "expected {} reports, got {}",
            spec.n,
            reports.len()
        )));
    }
    let d = reports[0].len();
    if let Some(i) = reports.iter().position(|r| r.len() != d) {
        return Err(Error::param(format!(
            "report {i} has length {}, report 0 has length {d}",
            reports[i].len()
        )));
    }
    let (n, f) = (spec.n, spec.f);
    let out = match spec.kind {
        GarKind::Average => GradientVector::mean_of(reports),
        GarKind::Mda => {
            let subset = mda_select(reports, n - f);
            GradientVector::mean_of(subset.iter().map(|&i| &reports[i]))
        }
        GarKind::Krum => {
            let all: Vec<usize> = (0..n).collect();
            reports[krum_select(reports, &all, f)].clone()
        }
        GarKind::Bulyan => bulyan(reports, f),
        GarKind::Median => coordinatewise(reports, median),
        GarKind::TrimmedMean => coordinatewise(reports, |col| trimmed_mean(col, f)),
        GarKind::Meamed => coordinatewise(reports, |col| {
            let pivot = median(col);
            mean_closest(col, pivot, n - f)
        }),
        GarKind::Phocas => coordinatewise(reports, |col| {
            let pivot = trimmed_mean(col, f);
            mean_closest(col, pivot, n - f)
        }),
    };
    Ok(out)
}

fn pairwise_sq(reports: &[GradientVector]) -> Vec<Vec<f64>> {
    let n = reports.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = reports[i].distance_sq(&reports[j]);
            dist[i][j] = v;
            dist[j][i] = v;
        }
    }
    dist
}

/// Index set of size `m` with minimal diameter. Combinations are visited in
/// lexicographic order; an equal diameter replaces the incumbent only when
/// its mean is lexicographically smaller.
fn mda_select(reports: &[GradientVector], m: usize) -> Vec<usize> {
    let n = reports.len();
    let dist = pairwise_sq(reports);
    let mut current: Vec<usize> = (0..m).collect();
    let mut best = current.clone();
    let mut best_diam = f64::INFINITY;
    let mut best_mean: Option<GradientVector> = None;
    let mean = |s: &[usize]| GradientVector::mean_of(s.iter().map(|&i| &reports[i]));
    loop {
        let mut diam: f64 = 0.0;
        'outer: for (a, &i) in current.iter().enumerate() {
            for &j in &current[a + 1..] {
                diam = diam.max(dist[i][j]);
                if diam > best_diam {
                    break 'outer;
                }
            }
        }
        if diam < best_diam {
            best_diam = diam;
            best.clone_from(&current);
            best_mean = None;
        } else if diam == best_diam {
            let incumbent = best_mean.get_or_insert_with(|| mean(&best));
            let candidate = mean(&current);
            if lex_cmp(&candidate, incumbent) == Ordering::Less {
                best.clone_from(&current);
                *incumbent = candidate;
            }
        }
        if !next_combination(&mut current, n) {
            break;
        }
    }
    best
}

/// Advances `c` to the next `|c|`-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let m = c.len();
    for i in (0..m).rev() {
        if c[i] < n - m + i {
            c[i] += 1;
            for j in i + 1..m {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Krum over the candidates `pool` (worker indices): returns the index whose
/// squared distances to its `|pool| − f − 2` nearest other candidates sum to
/// the least.
fn krum_select(reports: &[GradientVector], pool: &[usize], f: usize) -> usize {
    let neighbours = pool.len().saturating_sub(f + 2);
    let mut best = pool[0];
    let mut best_score = f64::INFINITY;
    let mut buf = Vec::with_capacity(pool.len());
    for &i in pool {
        buf.clear();
        buf.extend(pool.iter().filter(|&&j| j != i).map(|&j| reports[i].distance_sq(&reports[j])));
        buf.sort_unstable_by(f64::total_cmp);
        let score: f64 = buf[..neighbours.min(buf.len())].iter().sum();
        let better = match score.total_cmp(&best_score) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => lex_cmp(&reports[i], &reports[best]).then(i.cmp(&best)) == Ordering::Less,
        };
        if better {
            best_score = score;
            best = i;
        }
    }
    best
}

fn lex_cmp(a: &GradientVector, b: &GradientVector) -> Ordering {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn bulyan(reports: &[GradientVector], f: usize) -> GradientVector {
    let n = reports.len();
    let mut pool: Vec<usize> = (0..n).collect();
    let mut selected = Vec::with_capacity(n - 2 * f);
    for _ in 0..n - 2 * f {
        let pick = krum_select(reports, &pool, f);
        pool.retain(|&i| i != pick);
        selected.push(pick);
    }
    let chosen: Vec<GradientVector> = selected.iter().map(|&i| reports[i].clone()).collect();
    let beta = n - 4 * f;
    coordinatewise(&chosen, |col| {
        let pivot = median(col);
        mean_closest(col, pivot, beta)
    })
}

/// Applies `rule` to each coordinate column. Column entries keep worker order.
fn coordinatewise<F>(reports: &[GradientVector], mut rule: F) -> GradientVector
where
    F: FnMut(&[f64]) -> f64,
{
    let d = reports[0].len();
    let mut col = vec![0.0; reports.len()];
    let out = (0..d)
        .map(|j| {
            for (c, r) in col.iter_mut().zip(reports) {
                *c = r[j];
            }
            rule(&col)
        })
        .collect();
    GradientVector::from_vec(out)
}

fn sorted(col: &[f64]) -> Vec<f64> {
    let mut v = col.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Median; for an even count, the mean of the two middle values.
pub(crate) fn median(col: &[f64]) -> f64 {
    let v = sorted(col);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn trimmed_mean(col: &[f64], f: usize) -> f64 {
    let v = sorted(col);
    let kept = &v[f..v.len() - f];
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Mean of the `m` entries closest to `pivot`.
fn mean_closest(col: &[f64], pivot: f64, m: usize) -> f64 {
    let mut idx: Vec<usize> = (0..col.len()).collect();
    idx.sort_unstable_by(|&a, &b| {
        let da = (col[a] - pivot).abs();
        let db = (col[b] - pivot).abs();
        da.total_cmp(&db)
            .then_with(|| col[a].total_cmp(&col[b]))
            .then_with(|| a.cmp(&b))
    });
    idx[..m].iter().map(|&i| col[i]).sum::<f64>() / m as f64
}
