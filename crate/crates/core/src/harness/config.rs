//! Versioned JSON experiment configuration. Unknown keys are rejected and
//! validation errors carry the offending field path.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{make_field, VectorField};
use crate::noise::{MarkovChainSpec, NoiseKind, NoiseSpec, WalkDistribution, Xi2Rule};
use crate::rough_step::SumConvention;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub scenario: String,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub field: Option<FieldConfig>,
    #[serde(default)]
    pub partition: Option<PartitionConfig>,
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub outputs: Option<OutputsConfig>,
    /// Iterated-sum ordering: "earlier_later" (default) or "later_earlier".
    #[serde(default)]
    pub convention: Option<String>,
    /// Scenario-specific knobs; each scenario validates its own keys.
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub xi2: Option<Xi2Config>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Xi2Config {
    pub rule: String,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub key: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default)]
    pub report_json: Option<PathBuf>,
    #[serde(default)]
    pub ensemble_csv: Option<PathBuf>,
    #[serde(default)]
    pub curves_csv: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and schema-validates a config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::config(e.path().to_string(), e.inner().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!("expected {CONFIG_VERSION}, got {}", self.version),
            ));
        }
        if self.scenario.is_empty() {
            return Err(Error::config("scenario", "must not be empty"));
        }
        if let Some(mc) = &self.mc {
            if mc.paths == 0 {
                return Err(Error::config("mc.paths", "must be ≥ 1"));
            }
        }
        if let Some(p) = &self.partition {
            if let Some(n) = p.n {
                if n == 0 {
                    return Err(Error::config("partition.n", "must be ≥ 1"));
                }
            }
            if let Some(t) = p.t_end {
                if !(t > 0.0) {
                    return Err(Error::config("partition.t_end", "must be > 0"));
                }
            }
            if let Some(grid) = &p.n_grid {
                if grid.is_empty() {
                    return Err(Error::config("partition.n_grid", "must not be empty"));
                }
                let mut seen = std::collections::BTreeSet::new();
                for n in grid {
                    if !n.is_power_of_two() {
                        return Err(Error::config(
                            "partition.n_grid",
                            format!("{n} is not a power of two"),
                        ));
                    }
                    if !seen.insert(*n) {
                        return Err(Error::config(
                            "partition.n_grid",
                            format!("{n} appears twice"),
                        ));
                    }
                }
            }
        }
        if let Some(c) = &self.convention {
            parse_convention(c)?;
        }
        if let Some(noise) = &self.noise {
            noise.to_spec()?;
        }
        if let Some(field) = &self.field {
            field.to_field()?;
        }
        Ok(())
    }

    pub fn convention(&self) -> SumConvention {
        self.convention
            .as_deref()
            .map(|c| parse_convention(c).expect("validated"))
            .unwrap_or_default()
    }

    pub fn noise_spec(&self) -> Result<Option<NoiseSpec>> {
        self.noise.as_ref().map(|n| n.to_spec()).transpose()
    }

    pub fn field(&self) -> Result<Option<Arc<dyn VectorField>>> {
        self.field.as_ref().map(|f| f.to_field()).transpose()
    }

    pub fn paths_or(&self, default: usize) -> usize {
        self.mc.as_ref().map(|m| m.paths).unwrap_or(default)
    }

    pub fn master_seed_or(&self, default: u64) -> u64 {
        self.mc.as_ref().map(|m| m.master_seed).unwrap_or(default)
    }

    pub fn n_or(&self, default: usize) -> usize {
        self.partition
            .as_ref()
            .and_then(|p| p.n)
            .unwrap_or(default)
    }

    pub fn t_end_or(&self, default: f64) -> f64 {
        self.partition
            .as_ref()
            .and_then(|p| p.t_end)
            .unwrap_or(default)
    }

    pub fn n_grid_or(&self, default: &[usize]) -> Vec<usize> {
        self.partition
            .as_ref()
            .and_then(|p| p.n_grid.clone())
            .unwrap_or_else(|| default.to_vec())
    }

    pub fn outputs(&self) -> OutputsConfig {
        self.outputs.clone().unwrap_or_default()
    }

    /// Scenario parameter lookup with a known-key guard (fail closed).
    pub fn scenario_params(
        &self,
        known: &[&str],
    ) -> Result<&serde_json::Map<String, serde_json::Value>> {
        static EMPTY: std::sync::OnceLock<serde_json::Map<String, serde_json::Value>> =
            std::sync::OnceLock::new();
        let map = match &self.params {
            serde_json::Value::Null => EMPTY.get_or_init(serde_json::Map::new),
            serde_json::Value::Object(map) => map,
            _ => return Err(Error::config("params", "must be an object")),
        };
        for key in map.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::config(
                    format!("params.{key}"),
                    format!("unknown key; this scenario accepts {known:?}"),
                ));
            }
        }
        Ok(map)
    }
}

fn parse_convention(c: &str) -> Result<SumConvention> {
    match c {
        "earlier_later" => Ok(SumConvention::EarlierLater),
        "later_earlier" => Ok(SumConvention::LaterEarlier),
        other => Err(Error::config(
            "convention",
            format!("unknown convention `{other}`"),
        )),
    }
}

pub fn param_f64(
    map: &serde_json::Map<String, serde_json::Value>,
    key: &str,
) -> Result<Option<f64>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::config(format!("params.{key}"), "must be a number")),
    }
}

pub fn param_usize(
    map: &serde_json::Map<String, serde_json::Value>,
    key: &str,
) -> Result<Option<usize>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|u| Some(u as usize))
            .ok_or_else(|| Error::config(format!("params.{key}"), "must be a non-negative integer")),
    }
}

pub fn param_str<'a>(
    map: &'a serde_json::Map<String, serde_json::Value>,
    key: &str,
) -> Result<Option<&'a str>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_str()
            .map(Some)
            .ok_or_else(|| Error::config(format!("params.{key}"), "must be a string")),
    }
}

impl NoiseConfig {
    pub fn to_spec(&self) -> Result<NoiseSpec> {
        let xi2 = match &self.xi2 {
            None => Xi2Rule::Zero,
            Some(x) => match x.rule.as_str() {
                "zero" => Xi2Rule::Zero,
                "theta" => Xi2Rule::Theta(x.theta.ok_or_else(|| {
                    Error::config("noise.xi2.theta", "required for the theta rule")
                })?),
                "refined" => Xi2Rule::Refined(
                    x.m.ok_or_else(|| Error::config("noise.xi2.m", "required for the refined rule"))?,
                ),
                other => {
                    return Err(Error::config(
                        "noise.xi2.rule",
                        format!("unknown rule `{other}`"),
                    ))
                }
            },
        };
        let kind = self.parse_kind()?;
        NoiseSpec::new(kind, xi2)
    }

    fn parse_kind(&self) -> Result<NoiseKind> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct WalkParams {
            #[serde(default = "one")]
            dim: usize,
            dist: String,
            #[serde(default)]
            half_width: Option<f64>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct DimParams {
            #[serde(default = "one")]
            dim: usize,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct FbmParams {
            #[serde(default = "one")]
            dim: usize,
            hurst: f64,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct TwoStateParams {
            stay_prob: f64,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct LazyCycleParams {
            lambda: f64,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct ChainParams {
            transition: Vec<Vec<f64>>,
            stationary: Vec<f64>,
            observable: Vec<Vec<f64>>,
        }
        fn one() -> usize {
            1
        }
        let bad = |e: serde_json::Error| Error::config("noise.params", e.to_string());
        match self.kind.as_str() {
            "iid_walk" => {
                let p: WalkParams = serde_json::from_value(self.params.clone()).map_err(bad)?;
                let dist = match p.dist.as_str() {
                    "rademacher" => WalkDistribution::Rademacher,
                    "normal" => WalkDistribution::StandardNormal,
                    "uniform" => WalkDistribution::UniformCentered {
                        half_width: p.half_width.ok_or_else(|| {
                            Error::config("noise.params.half_width", "required for uniform")
                        })?,
                    },
                    other => {
                        return Err(Error::config(
                            "noise.params.dist",
                            format!("unknown distribution `{other}`"),
                        ))
                    }
                };
                Ok(NoiseKind::IidWalk { dim: p.dim, dist })
            }
            "brownian" => {
                let p: DimParams = serde_json::from_value(self.params.clone()).map_err(bad)?;
                Ok(NoiseKind::Brownian { dim: p.dim })
            }
            "fbm" => {
                let p: FbmParams = serde_json::from_value(self.params.clone()).map_err(bad)?;
                Ok(NoiseKind::Fbm {
                    dim: p.dim,
                    hurst: p.hurst,
                })
            }
            "markov_two_state" => {
                let p: TwoStateParams = serde_json::from_value(self.params.clone()).map_err(bad)?;
                Ok(NoiseKind::MarkovChain(MarkovChainSpec::two_state(
                    p.stay_prob,
                )?))
            }
            "markov_lazy_cycle3" => {
                let p: LazyCycleParams = serde_json::from_value(self.params.clone()).map_err(bad)?;
                Ok(NoiseKind::MarkovChain(MarkovChainSpec::lazy_cycle_three(
                    p.lambda,
                )?))
            }
            "markov_chain" => {
                let p: ChainParams = serde_json::from_value(self.params.clone()).map_err(bad)?;
                let states = p.transition.len();
                let dim = p.observable.first().map(|r| r.len()).unwrap_or(0);
                if p.transition.iter().any(|r| r.len() != states)
                    || p.observable.len() != states
                    || p.observable.iter().any(|r| r.len() != dim)
                {
                    return Err(Error::config("noise.params", "ragged chain arrays"));
                }
                Ok(NoiseKind::MarkovChain(MarkovChainSpec {
                    states,
                    dim,
                    transition: p.transition.into_iter().flatten().collect(),
                    stationary: p.stationary,
                    observable: p.observable.into_iter().flatten().collect(),
                }))
            }
            other => Err(Error::config(
                "noise.kind",
                format!("unknown noise kind `{other}`"),
            )),
        }
    }
}

impl FieldConfig {
    pub fn to_field(&self) -> Result<Arc<dyn VectorField>> {
        make_field(&self.key, &self.params)
    }
}
