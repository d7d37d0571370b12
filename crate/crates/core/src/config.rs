//! Experiment configuration files.
//!
//! The format is sectioned `key = value` text:
//!
//! ```text
//! # comments start with '#'
//! [privacy]
//! epsilon = inf, 0.5, 0.2, 0.1   # a comma list is a sweep axis
//! delta = 1e-6
//!
//! [training]
//! batch = 10, 25, 50, 100, 250, 500
//! ```
//!
//! Every key accepts a comma list; the expansion is the Cartesian product of
//! all lists, in the order of [`KEYS`] with the last key varying fastest.
//! Values may be wrapped in double quotes. Unknown sections or keys are
//! errors.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `topology.n` | 11 | workers |
//! | `topology.f` | 5 | Byzantine workers |
//! | `schedule.steps` | 1000 | training steps |
//! | `schedule.learning_rate` | 2 | step size |
//! | `schedule.momentum` | 0.99 | momentum factor in `[0, 1)` |
//! | `schedule.momentum_site` | server | `server` or `worker` |
//! | `training.batch` | 50 | per-worker batch size |
//! | `training.eval_every` | 50 | accuracy cadence |
//! | `training.g_max` | 0.01 | clipping radius |
//! | `training.seed` | 1 | master seed |
//! | `training.track_vn` | false | record the per-step VN ratio |
//! | `privacy.epsilon` | inf | per-step ε; `inf` disables noise |
//! | `privacy.delta` | 1e-6 | per-step δ |
//! | `gar.rule` | mda | aggregation rule |
//! | `gar.baseline` | average | rule used when no attack runs; `same` keeps `gar.rule` |
//! | `attack.kind` | none | `none`, `alie` or `foe` |
//! | `attack.nu` | default | attack factor; `default` is 1.5 for ALIE, 1.1 for FoE |
//! | `attack.view` | post-noise | what the adversary observes |
//! | `data.source` | surrogate | `surrogate` or `file` |
//! | `data.path` | | sparse file, for `data.source = file` |
//! | `data.feature_count` | 68 | width of the file's feature space |
//! | `data.train` | 8400 | training samples; the rest is the test set |
//! | `data.split_seed` | 1 | seed of the train/test shuffle |
//! | `data.surrogate_seed` | 1 | seed of the synthetic dataset |

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::attack::{AttackKind, AttackSpec, AttackView};
use crate::dataset::PHISHING_FEATURES;
use crate::gar::GarKind;
use crate::model::ClipConfig;
use crate::privacy::PrivacyBudget;
use crate::simulator::{DataConfig, DataSource, ExperimentConfig};
use crate::{Error, Result};

/// Recognised keys, in expansion order.
pub const KEYS: [&str; 24] = [
    "topology.n",
    "topology.f",
    "schedule.steps",
    "schedule.learning_rate",
    "schedule.momentum",
    "schedule.momentum_site",
    "training.batch",
    "training.eval_every",
    "training.g_max",
    "training.seed",
    "training.track_vn",
    "privacy.epsilon",
    "privacy.delta",
    "gar.rule",
    "gar.baseline",
    "attack.kind",
    "attack.nu",
    "attack.view",
    "data.source",
    "data.path",
    "data.feature_count",
    "data.train",
    "data.split_seed",
    "data.surrogate_seed",
];

fn canonical(key: &str) -> Option<&'static str> {
    KEYS.iter().copied().find(|k| *k == key)
}

/// A parsed, not yet expanded configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigDocument {
    values: BTreeMap<&'static str, Vec<String>>,
}

fn split_list(raw: &str) -> Vec<String> {
    let raw = raw.trim();
    let raw = raw
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .unwrap_or(raw);
    raw.split(',').map(|v| v.trim().to_string()).collect()
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = ConfigDocument::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim().to_ascii_lowercase();
                if !KEYS.iter().any(|k| k.split('.').next() == Some(name.as_str())) {
                    return Err(Error::config(name, format!("unknown section (line {line_no})")));
                }
                section = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let sect = section.as_deref().ok_or_else(|| Error::Parse {
                line: line_no,
                message: "key outside of any section".into(),
            })?;
            let full = format!("{sect}.{}", key.trim().to_ascii_lowercase());
            let key = canonical(&full).ok_or_else(|| Error::config(&full, format!("unknown key (line {line_no})")))?;
            if doc.values.contains_key(key) {
                return Err(Error::config(key, format!("duplicate key (line {line_no})")));
            }
            let list = split_list(value);
            if list.iter().any(|v| v.is_empty()) {
                return Err(Error::config(key, format!("empty value (line {line_no})")));
            }
            doc.values.insert(key, list);
        }
        Ok(doc)
    }

    /// Applies a `section.key=value` override, replacing any value from the file.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::param(format!("override `{assignment}` is not `section.key=value`")))?;
        let full = key.trim().to_ascii_lowercase();
        let key = canonical(&full).ok_or_else(|| Error::config(&full, "unknown key"))?;
        let list = split_list(value);
        if list.iter().any(|v| v.is_empty()) {
            return Err(Error::config(key, "empty value"));
        }
        self.values.insert(key, list);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[String]> {
        self.values.get(key).map(Vec::as_slice)
    }

    /// Expands all sweep axes into validated configurations.
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>> {
        let axes: Vec<(&'static str, &[String])> = KEYS
            .iter()
            .filter_map(|k| self.values.get(k).map(|v| (*k, v.as_slice())))
            .collect();
        let total: usize = axes.iter().map(|(_, v)| v.len()).product();
        let mut out = Vec::with_capacity(total);
        let mut index = vec![0usize; axes.len()];
        for _ in 0..total {
            let mut builder = Builder::default();
            for ((key, values), &i) in axes.iter().zip(&index) {
                builder.apply(key, &values[i])?;
            }
            out.push(builder.finish()?);
            for pos in (0..index.len()).rev() {
                index[pos] += 1;
                if index[pos] < axes[pos].1.len() {
                    break;
                }
                index[pos] = 0;
            }
        }
        Ok(out)
    }
}

/// Parses and expands configuration text.
pub fn parse_config(text: &str) -> Result<Vec<ExperimentConfig>> {
    ConfigDocument::parse(text)?.expand()
}

fn typed<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("expected {what}, got `{value}`")))
}

fn retag(key: &str, e: Error) -> Error {
    match e {
        Error::Parameter(m) | Error::Unsupported(m) => Error::config(key, m),
        other => other,
    }
}

struct Builder {
    cfg: ExperimentConfig,
    epsilon: Option<f64>,
    delta: f64,
    rule: GarKind,
    baseline: Option<GarKind>,
    attack: AttackKind,
    nu: Option<f64>,
    file_source: bool,
    path: Option<PathBuf>,
    feature_count: usize,
    surrogate_seed: u64,
}

impl Default for Builder {
    fn default() -> Self {
        Builder {
            cfg: ExperimentConfig::default(),
            epsilon: None,
            delta: 1e-6,
            rule: GarKind::Mda,
            baseline: Some(GarKind::Average),
            attack: AttackKind::None,
            nu: None,
            file_source: false,
            path: None,
            feature_count: PHISHING_FEATURES,
            surrogate_seed: 1,
        }
    }
}

impl Builder {
    fn apply(&mut self, key: &'static str, v: &str) -> Result<()> {
        let c = &mut self.cfg;
        match key {
            "topology.n" => c.topology.workers = typed(key, v, "a non-negative integer")?,
            "topology.f" => c.topology.byzantine = typed(key, v, "a non-negative integer")?,
            "schedule.steps" => c.schedule.steps = typed(key, v, "a positive integer")?,
            "schedule.learning_rate" => c.schedule.learning_rate = typed(key, v, "a real number")?,
            "schedule.momentum" => c.schedule.momentum = typed(key, v, "a real number")?,
            "schedule.momentum_site" => c.schedule.momentum_site = v.parse().map_err(|e| retag(key, e))?,
            "training.batch" => c.batch_size = typed(key, v, "a positive integer")?,
            "training.eval_every" => c.eval_every = typed(key, v, "a positive integer")?,
            "training.g_max" => {
                let g: f64 = typed(key, v, "a real number")?;
                c.clip = ClipConfig::new(g).map_err(|e| retag(key, e))?;
            }
            "training.seed" => c.master_seed = typed(key, v, "a non-negative integer")?,
            "training.track_vn" => c.track_vn = typed(key, v, "`true` or `false`")?,
            "privacy.epsilon" => {
                self.epsilon = if v.eq_ignore_ascii_case("inf") {
                    None
                } else {
                    Some(typed(key, v, "a real number or `inf`")?)
                }
            }
            "privacy.delta" => self.delta = typed(key, v, "a real number")?,
            "gar.rule" => self.rule = v.parse().map_err(|e| retag(key, e))?,
            "gar.baseline" => {
                self.baseline = if v.eq_ignore_ascii_case("same") {
                    None
                } else {
                    Some(v.parse().map_err(|e| retag(key, e))?)
                }
            }
            "attack.kind" => self.attack = v.parse().map_err(|e| retag(key, e))?,
            "attack.nu" => {
                self.nu = if v.eq_ignore_ascii_case("default") {
                    None
                } else {
                    Some(typed(key, v, "a real number or `default`")?)
                }
            }
            "attack.view" => c.attack_view = v.parse::<AttackView>().map_err(|e| retag(key, e))?,
            "data.source" => {
                self.file_source = match v.to_ascii_lowercase().as_str() {
                    "surrogate" => false,
                    "file" => true,
                    _ => return Err(Error::config(key, format!("expected `surrogate` or `file`, got `{v}`"))),
                }
            }
            "data.path" => self.path = Some(PathBuf::from(v)),
            "data.feature_count" => self.feature_count = typed(key, v, "a positive integer")?,
            "data.train" => c.data.train_count = typed(key, v, "a positive integer")?,
            "data.split_seed" => c.data.split_seed = typed(key, v, "a non-negative integer")?,
            "data.surrogate_seed" => self.surrogate_seed = typed(key, v, "a non-negative integer")?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    fn finish(self) -> Result<ExperimentConfig> {
        let mut cfg = self.cfg;
        let budget = PrivacyBudget::new(self.epsilon.unwrap_or(0.5), self.delta).map_err(|e| {
            let key = if self.epsilon.is_some_and(|e| !(e > 0.0 && e < 1.0)) {
                "privacy.epsilon"
            } else {
                "privacy.delta"
            };
            retag(key, e)
        })?;
        cfg.budget = self.epsilon.map(|_| budget);
        cfg.attack = match self.nu {
            None => AttackSpec::with_default(self.attack),
            Some(nu) => AttackSpec::new(self.attack, nu).map_err(|e| retag("attack.nu", e))?,
        };
        cfg.gar = match (cfg.attack.is_active(), self.baseline) {
            (false, Some(baseline)) => baseline,
            _ => self.rule,
        };
        if self.feature_count == 0 {
            return Err(Error::config("data.feature_count", "must be positive"));
        }
        cfg.data = DataConfig {
            source: if self.file_source {
                DataSource::File {
                    path: self
                        .path
                        .ok_or_else(|| Error::config("data.path", "required when data.source = file"))?,
                    feature_count: Some(self.feature_count),
                }
            } else {
                DataSource::Surrogate {
                    seed: self.surrogate_seed,
                }
            },
            ..cfg.data
        };
        if cfg.data.train_count == 0 {
            return Err(Error::config("data.train", "must be positive"));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
