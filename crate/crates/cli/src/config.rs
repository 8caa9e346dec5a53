//! Experiment configuration (TOML) and its content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sobo::solvers::IfsbaOptions;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repeat: usize,
    /// Output directory, relative to the output root; defaults to `name`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Write measured wall time into traces. Off by default so that reruns
    /// produce byte-identical files.
    #[serde(default)]
    pub record_wall_time: bool,
    pub problem: ProblemSpec,
    #[serde(rename = "solver")]
    pub solvers: Vec<SolverSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quadratic(QuadraticSpec),
    SyntheticMinimax(MinimaxSpec),
    Hypercleaning(HypercleaningSpec),
    ExpRidge(ExpRidgeSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub d_x: usize,
    pub d_y: usize,
    /// Condition number of the lower-level Hessian.
    pub cond: f64,
    pub seed: Option<u64>,
    pub x0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimaxSpec {
    #[serde(default = "default_minimax_eps")]
    pub eps: f64,
    #[serde(rename = "L", default = "default_minimax_l")]
    pub l: f64,
    #[serde(default = "default_minimax_x0")]
    pub x0: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypercleaningSpec {
    /// libsvm file with binary labels; synthetic data when absent.
    pub data: Option<PathBuf>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_features")]
    pub features: usize,
    #[serde(default = "default_val_split")]
    pub val_split: f64,
    /// Fraction of training labels flipped.
    #[serde(default = "default_noise")]
    pub p: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    pub seed: Option<u64>,
    pub x0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpRidgeSpec {
    /// libsvm file; synthetic multinomial data when absent.
    pub data: Option<PathBuf>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_features")]
    pub features: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_val_split")]
    pub val_split: f64,
    pub seed: Option<u64>,
    pub x0: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverName {
    Fsba,
    Ifsba,
    Lfsba,
    Lmcn,
    F2ba,
    Gda,
}

impl SolverName {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverName::Fsba => "fsba",
            SolverName::Ifsba => "ifsba",
            SolverName::Lfsba => "lfsba",
            SolverName::Lmcn => "lmcn",
            SolverName::F2ba => "f2ba",
            SolverName::Gda => "gda",
        }
    }

    pub fn is_minimax(self) -> bool {
        matches!(self, SolverName::Lmcn | SolverName::Gda)
    }
}

/// Solver settings. Unset fields take the theoretical defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub name: SolverName,
    pub eps: f64,
    #[serde(rename = "M", default = "one_f64")]
    pub big_m: f64,
    #[serde(default = "one")]
    pub m: usize,
    pub lambda: Option<f64>,
    pub t_max: Option<usize>,
    /// Estimate of `φ(x₀) − inf φ` used by the theoretical `λ` and `T_max`.
    pub delta_phi: Option<f64>,
    pub delta: Option<f64>,
    pub eps_tilde: Option<f64>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub rho_bar: Option<f64>,
    pub r0: Option<f64>,
    pub cost_budget: Option<f64>,
    /// F²BA step size.
    pub step_size: Option<f64>,
    /// GDA step sizes; default `1/(16(κ+1)²ℓ)` and `1/ℓ`.
    pub eta_x: Option<f64>,
    pub eta_y: Option<f64>,
    #[serde(default = "default_slack")]
    pub sosp_slack: f64,
    /// When false, hitting `T_max` or the cost budget does not fail the run.
    #[serde(default = "yes")]
    pub expect_convergence: bool,
    #[serde(default)]
    pub ifsba: IfsbaOptions,
}

/// Command-line overrides applied to every solver.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub eps: Option<f64>,
    pub big_m: Option<f64>,
    pub m: Option<usize>,
    pub lambda: Option<f64>,
    pub t_max: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        for s in &mut cfg.solvers {
            if let Some(v) = self.eps {
                s.eps = v;
            }
            if let Some(v) = self.big_m {
                s.big_m = v;
            }
            if let Some(v) = self.m {
                s.m = v;
            }
            if let Some(v) = self.lambda {
                s.lambda = Some(v);
            }
            if let Some(v) = self.t_max {
                s.t_max = Some(v);
            }
        }
    }
}

fn one() -> usize {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_slack() -> f64 {
    sobo::solvers::SOSP_SLACK
}
fn default_minimax_eps() -> f64 {
    0.01
}
fn default_minimax_l() -> f64 {
    3.0
}
fn default_minimax_x0() -> Vec<f64> {
    vec![1e-3, 1e-3, 0.1]
}
fn default_n() -> usize {
    700
}
fn default_features() -> usize {
    20
}
fn default_classes() -> usize {
    3
}
fn default_val_split() -> f64 {
    2.0 / 7.0
}
fn default_noise() -> f64 {
    0.25
}
fn default_c() -> f64 {
    1e-3
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Structural checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("name must be a nonempty file-name component, got {:?}", self.name));
        }
        if self.repeat == 0 {
            return bad("repeat must be at least 1".into());
        }
        if self.solvers.is_empty() {
            return bad("no [[solver]] entries".into());
        }
        for (i, s) in self.solvers.iter().enumerate() {
            if !(s.eps > 0.0 && s.big_m > 0.0 && s.sosp_slack > 0.0) {
                return bad(format!("solver {i} ({}): eps, M and sosp_slack must be positive", s.name.as_str()));
            }
            if s.name == SolverName::F2ba && s.step_size.is_none() {
                return bad(format!("solver {i}: f2ba requires step_size"));
            }
        }
        if let Some(dir) = &self.output {
            if dir.is_absolute() || dir.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
                return bad(format!("output must be a relative path below the output root, got {}", dir.display()));
            }
        }
        let split = match &self.problem {
            ProblemSpec::Hypercleaning(h) => Some(h.val_split),
            ProblemSpec::ExpRidge(e) => Some(e.val_split),
            _ => None,
        };
        if let Some(v) = split {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("val_split must lie in (0, 1), got {v}"));
            }
        }
        Ok(())
    }

    /// Configuration as JSON with keys in sorted order.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&sort_keys(value)).expect("value serializes")
    }

    /// SHA-256 of [`canonical_json`](Self::canonical_json), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// `<root>/<output or name>/<first 16 hex digits of the hash>`.
    pub fn output_dir(&self, root: &Path) -> PathBuf {
        let sub = self.output.clone().unwrap_or_else(|| PathBuf::from(&self.name));
        root.join(sub).join(&self.hash()[..16])
    }

    pub fn problem_seed(&self) -> u64 {
        let own = match &self.problem {
            ProblemSpec::Quadratic(q) => q.seed,
            ProblemSpec::Hypercleaning(h) => h.seed,
            ProblemSpec::ExpRidge(e) => e.seed,
            ProblemSpec::SyntheticMinimax(_) => None,
        };
        own.unwrap_or(self.seed)
    }

    /// Seed of solver `index`; repeats share it.
    pub fn solver_seed(&self, index: usize) -> u64 {
        splitmix64(self.seed ^ splitmix64(index as u64 + 1))
    }
}

fn sort_keys(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Named hyperparameter grids for `sweep`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPreset {
    pub lambda: Vec<f64>,
    pub big_m: Vec<f64>,
    /// Only applied to LFSBA solvers.
    pub m: Vec<usize>,
}

impl GridPreset {
    /// `f3`: `λ, M ∈ {1, 10, 10², 10³}`; `f3-lazy` adds `m ∈ {1, 5, 10, 100}`.
    pub fn named(name: &str) -> Result<Self> {
        let decades = vec![1.0, 10.0, 100.0, 1000.0];
        match name {
            "f3" => Ok(Self {
                lambda: decades.clone(),
                big_m: decades,
                m: Vec::new(),
            }),
            "f3-lazy" => Ok(Self {
                lambda: decades.clone(),
                big_m: decades,
                m: vec![1, 5, 10, 100],
            }),
            other => Err(CliError::Config(format!("unknown grid preset {other:?} (known: f3, f3-lazy)"))),
        }
    }

    /// Every grid point applied to `base`.
    pub fn expand(&self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        let ms: Vec<Option<usize>> = if self.m.is_empty() {
            vec![None]
        } else {
            self.m.iter().copied().map(Some).collect()
        };
        let mut out = Vec::new();
        for &lambda in &self.lambda {
            for &big_m in &self.big_m {
                for &m in &ms {
                    let mut cfg = base.clone();
                    for s in &mut cfg.solvers {
                        s.lambda = Some(lambda);
                        s.big_m = big_m;
                        if let (Some(m), SolverName::Lfsba) = (m, s.name) {
                            s.m = m;
                        }
                    }
                    let label = match m {
                        Some(m) => format!("lambda={lambda},M={big_m},m={m}"),
                        None => format!("lambda={lambda},M={big_m}"),
                    };
                    out.push((label, cfg));
                }
            }
        }
        out
    }
}
