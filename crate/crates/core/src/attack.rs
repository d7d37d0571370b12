//! Collusion attacks in which every Byzantine worker submits the same vector
//! `ḡ + ν·a`, where `ḡ` is the mean of the honest submissions observed in the
//! current step.

use std::fmt;
use std::str::FromStr;

use crate::numerics::{coordinate_stats, GradientVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    None,
    /// "A little is enough": `a = −σ`, the negated coordinate-wise standard
    /// deviation of the honest submissions.
    Alie,
    /// "Fall of empires": `a = −ḡ`, i.e. the submission is `(1 − ν)·ḡ`.
    Foe,
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Alie => "alie",
            AttackKind::Foe => "foe",
        }
    }

    /// Default attack factor.
    pub fn default_nu(&self) -> f64 {
        match self {
            AttackKind::None => 0.0,
            AttackKind::Alie => 1.5,
            AttackKind::Foe => 1.1,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(AttackKind::None),
            "alie" | "little" | "a-little-is-enough" => Ok(AttackKind::Alie),
            "foe" | "empire" | "fall-of-empires" => Ok(AttackKind::Foe),
            other => Err(Error::param(format!("unknown attack `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub nu: f64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(Error::param(format!("attack factor must be finite and non-negative, got {nu}")));
        }
        Ok(AttackSpec { kind, nu })
    }

    /// The attack with its default factor.
    pub fn with_default(kind: AttackKind) -> Self {
        AttackSpec {
            kind,
            nu: kind.default_nu(),
        }
    }

    pub fn none() -> Self {
        AttackSpec::with_default(AttackKind::None)
    }

    pub fn is_active(&self) -> bool {
        self.kind != AttackKind::None
    }
}

/// Which honest vectors the adversary observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttackView {
    /// The noisy vectors actually sent over the network.
    #[default]
    PostNoise,
    /// The clipped gradients before privacy noise is added.
    PreNoise,
}

impl AttackView {
    pub fn name(&self) -> &'static str {
        match self {
            AttackView::PostNoise => "post-noise",
            AttackView::PreNoise => "pre-noise",
        }
    }
}

impl FromStr for AttackView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "post-noise" | "post" => Ok(AttackView::PostNoise),
            "pre-noise" | "pre" => Ok(AttackView::PreNoise),
            other => Err(Error::param(format!("unknown attack view `{other}`"))),
        }
    }
}

/// The single vector all Byzantine workers submit this step.
pub fn forge(spec: &AttackSpec, honest_reports: &[GradientVector]) -> Result<GradientVector> {
    if honest_reports.is_empty() {
        return Err(Error::param("an attack needs at least one honest report"));
    }
    match spec.kind {
        AttackKind::None => Err(Error::Unsupported("no attack to forge".into())),
        AttackKind::Alie => {
            let (mean, std) = coordinate_stats(honest_reports)?;
            let mut out = mean;
            out.add_scaled(-spec.nu, &std);
            Ok(out)
        }
        AttackKind::Foe => {
            let mean = GradientVector::mean_of(honest_reports);
            Ok(mean.scale(1.0 - spec.nu))
        }
    }
}
