use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mra_core::estimators::{EstimatorConfig, MomentChoice};
use mra_core::signal_model::{Model, Signal, TauDistribution, TauSampling, Translation};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Classic,
    Dilation,
    NoisyDilation,
}

impl From<ModelName> for Model {
    fn from(m: ModelName) -> Model {
        match m {
            ModelName::Classic => Model::Classic,
            ModelName::Dilation => Model::Dilation,
            ModelName::NoisyDilation => Model::NoisyDilation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TauName {
    #[default]
    Uniform,
    TruncatedGaussian,
    Zero,
}

impl From<TauName> for TauDistribution {
    fn from(t: TauName) -> Self {
        match t {
            TauName::Uniform => TauDistribution::Uniform,
            TauName::TruncatedGaussian => TauDistribution::TruncatedGaussian,
            TauName::Zero => TauDistribution::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TranslationName {
    Zero,
    #[default]
    SupportSafe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSourceName {
    #[default]
    Empirical,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MomentSourceName {
    #[default]
    Oracle,
    EmpiricalOrder2,
    EmpiricalOrder4,
}

impl From<MomentSourceName> for MomentChoice {
    fn from(m: MomentSourceName) -> Self {
        match m {
            MomentSourceName::Oracle => MomentChoice::Oracle,
            MomentSourceName::EmpiricalOrder2 => MomentChoice::EmpiricalOrder2,
            MomentSourceName::EmpiricalOrder4 => MomentChoice::EmpiricalOrder4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TauSamplingName {
    #[default]
    Independent,
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorId {
    Ps(usize),
    Wsc(usize),
    Em,
}

impl EstimatorId {
    /// Accepts `ps0`, `wsc4`, `em` and the labels `PS k=0`, `WSC k=4`, `EM`.
    pub fn parse(s: &str) -> Result<Self, BenchError> {
        let t: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect();
        let t = t.replace("k=", "");
        let bad = || BenchError::Config(format!("unknown estimator '{s}'"));
        if t == "em" {
            return Ok(EstimatorId::Em);
        }
        let (ctor, rest): (fn(usize) -> EstimatorId, &str) = if let Some(r) = t.strip_prefix("wsc")
        {
            (EstimatorId::Wsc, r)
        } else if let Some(r) = t.strip_prefix("ps") {
            (EstimatorId::Ps, r)
        } else {
            return Err(bad());
        };
        rest.parse().map(ctor).map_err(|_| bad())
    }

    pub fn label(&self) -> String {
        match self {
            EstimatorId::Ps(k) => format!("PS k={k}"),
            EstimatorId::Wsc(k) => format!("WSC k={k}"),
            EstimatorId::Em => "EM".into(),
        }
    }

    pub fn estimator_config(&self, moments: MomentChoice) -> Option<EstimatorConfig> {
        let mut c = match self {
            EstimatorId::Ps(k) => EstimatorConfig::ps(*k),
            EstimatorId::Wsc(k) => EstimatorConfig::wsc(*k),
            EstimatorId::Em => return None,
        };
        c.moment_source = moments;
        Some(c)
    }
}

fn default_replicates() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_box() -> f64 {
    32.0
}
fn default_level() -> u32 {
    5
}
fn default_grad_tol() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    500
}
fn default_true() -> bool {
    true
}
fn default_em_box() -> f64 {
    8.0
}
fn default_em_level() -> u32 {
    4
}
fn default_em_n_tau() -> usize {
    17
}
fn default_em_max_m() -> usize {
    512
}
fn default_em_max_iters() -> usize {
    100
}
fn default_em_tol() -> f64 {
    1e-8
}

/// One sweep over sample sizes and replicates. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub signal: String,
    pub model: ModelName,
    /// Give exactly one of `sigma` and `snr` when the model has noise.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub snr: Option<f64>,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub tau: TauName,
    #[serde(default)]
    pub tau_sampling: TauSamplingName,
    #[serde(default)]
    pub translation: TranslationName,
    pub m: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub estimators: Vec<String>,
    #[serde(default)]
    pub sigma_source: SigmaSourceName,
    #[serde(default)]
    pub moment_source: MomentSourceName,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_box")]
    pub box_size: f64,
    #[serde(default = "default_level")]
    pub level: u32,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Record wall-clock times; off gives byte-identical reruns.
    #[serde(default = "default_true")]
    pub timing: bool,
    #[serde(default = "default_em_box")]
    pub em_box_size: f64,
    #[serde(default = "default_em_level")]
    pub em_level: u32,
    #[serde(default = "default_em_n_tau")]
    pub em_n_tau: usize,
    #[serde(default = "default_em_max_m")]
    pub em_max_m: usize,
    #[serde(default = "default_em_max_iters")]
    pub em_max_iters: usize,
    #[serde(default = "default_em_tol")]
    pub em_tol: f64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let c: ExperimentConfig =
            toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn signal(&self) -> Result<Signal, BenchError> {
        Ok(Signal::from_name(&self.signal)?)
    }

    pub fn model(&self) -> Model {
        self.model.into()
    }

    pub fn estimator_ids(&self) -> Result<Vec<EstimatorId>, BenchError> {
        self.estimators
            .iter()
            .map(|s| EstimatorId::parse(s))
            .collect()
    }

    pub fn translation(&self, box_size: f64) -> Translation {
        match self.translation {
            TranslationName::Zero => Translation::Zero,
            TranslationName::SupportSafe => Translation::Uniform {
                half_width: box_size / 8.0,
            },
        }
    }

    pub fn tau_sampling(&self) -> TauSampling {
        match self.tau_sampling {
            TauSamplingName::Independent => TauSampling::Independent,
            TauSamplingName::Stratified => TauSampling::Stratified,
        }
    }

    /// Every check that can fail before any sampling happens.
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        self.signal()?;
        if self.m.is_empty() || self.m[0] == 0 || self.m.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "m must be positive and increasing, got {:?}",
                self.m
            ));
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        let model = self.model();
        match (model.has_noise(), self.sigma, self.snr) {
            (true, Some(_), Some(_)) => return bad("give sigma or snr, not both".into()),
            (true, None, None) => return bad("a noisy model needs sigma or snr".into()),
            (false, Some(s), _) if s != 0.0 => return bad("the dilation model has no noise".into()),
            (false, _, Some(_)) => return bad("the dilation model has no noise".into()),
            _ => {}
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("sigma {s} must be finite and nonnegative"));
            }
        }
        if let Some(s) = self.snr {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("snr {s} must be positive"));
            }
        }
        if !model.has_dilation() && self.eta != 0.0 {
            return bad("the classic model has eta = 0".into());
        }
        let ids = self.estimator_ids()?;
        if ids.is_empty() {
            return bad("no estimators requested".into());
        }
        for id in &ids {
            if let Some(c) = id.estimator_config(self.moment_source.into()) {
                c.check(model)?;
            }
        }
        let empirical = self.moment_source != MomentSourceName::Oracle;
        let unbiasing = ids
            .iter()
            .any(|id| matches!(id, EstimatorId::Ps(k) | EstimatorId::Wsc(k) if *k > 0));
        if empirical && unbiasing {
            if model.has_noise() && self.translation != TranslationName::Zero {
                return bad("empirical moments under noise need translation = \"zero\"".into());
            }
            let max_k = ids
                .iter()
                .map(|id| match id {
                    EstimatorId::Ps(k) | EstimatorId::Wsc(k) => *k,
                    EstimatorId::Em => 0,
                })
                .max()
                .unwrap_or(0);
            let have = if self.moment_source == MomentSourceName::EmpiricalOrder2 {
                2
            } else {
                4
            };
            if max_k > have {
                return bad(format!(
                    "order {max_k} unbiasing needs moments beyond order {have}"
                ));
            }
        }
        if !(self.grad_tol > 0.0) || self.max_iters == 0 {
            return bad("grad_tol must be positive and max_iters at least 1".into());
        }
        if ids.contains(&EstimatorId::Em) && (self.em_n_tau == 0 || self.em_max_m < 2) {
            return bad("em_n_tau must be ≥ 1 and em_max_m ≥ 2".into());
        }
        Ok(())
    }
}
