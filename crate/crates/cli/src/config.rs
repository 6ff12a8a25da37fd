//! The JSON configuration document and its translation into a problem spec.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use ss_yield_core::diffusion::{DiffusionModel, LeftBehavior, RightBehavior};
use ss_yield_core::presets::{self, ParamBag, PresetId};
use ss_yield_core::problem::{CostModel, ProblemSpec};
use ss_yield_core::simulator::TriggerMode;
use ss_yield_core::yields::YieldFamily;

use crate::error::CliError;
use crate::expr::{eval_constant, Expr};

/// A number given either literally or as a closed expression over the
/// model constants, e.g. `"-inf"` or `"k0 / 4"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Value(f64),
    Expr(String),
}

impl Num {
    fn resolve(&self, key: &str, constants: &BTreeMap<String, f64>) -> Result<f64, CliError> {
        match self {
            Num::Value(v) => Ok(*v),
            Num::Expr(s) => eval_constant(s, constants).map_err(|e| CliError::Config(format!("{key}: {e}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<CostSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yields: Option<YieldFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

/// Either `preset` (+ `params`) or an inline diffusion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: ParamBag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constants: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<String>,
    /// Omitted for a deterministic model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[Num; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<LeftBehavior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<RightBehavior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_log_density: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_density: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    /// `c0` as an expression in `x`.
    pub holding: String,
    /// Declared `c0(a)`, `c0(b)`.
    pub holding_limits: [Num; 2],
    /// `c1` as an expression in `y` and `z`.
    pub ordering: String,
    /// Fixed part `k1` of the ordering cost.
    pub fixed_cost: Num,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f0: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<TriggerMode>,
}

impl CommandOptions {
    /// Fields set in `other` win.
    pub fn merge(&mut self, other: &CommandOptions) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(
            y,
            z,
            resolution,
            f0,
            y_range,
            z_range,
            coarse,
            starts,
            oracle_resolution,
            replications,
            horizon,
            time_step,
            burn_in,
            trigger
        );
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// The model part of a config after `--preset` / `--set` have been applied.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Preset {
        id: PresetId,
        params: ParamBag,
        yields: Option<YieldFamily>,
    },
    Inline {
        model: Box<ModelSection>,
        costs: CostSection,
        yields: YieldFamily,
    },
}

impl ModelSource {
    /// Resolves the single model source from a config and the command line.
    pub fn resolve(doc: &ConfigDoc, preset_flag: Option<&str>, sets: &[(String, f64)]) -> Result<Self, CliError> {
        let section = doc.model.clone().unwrap_or_default();
        let inline = section.drift.is_some();
        let preset_name = match (preset_flag, section.preset.as_deref()) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "model.preset: both --preset and a config preset were given".into(),
                ))
            }
            (Some(_), None) if inline => {
                return Err(CliError::Config(
                    "model.drift: --preset conflicts with an inline model in the config".into(),
                ))
            }
            (p, q) => p.or(q),
        };
        match preset_name {
            Some(name) => {
                if inline {
                    return Err(CliError::Config("model.drift: a preset model cannot also define a drift".into()));
                }
                if doc.costs.is_some() {
                    return Err(CliError::Config("costs: not allowed with a preset model".into()));
                }
                let id: PresetId = name
                    .parse()
                    .map_err(|e: ss_yield_core::Error| CliError::Config(format!("model.preset: {e}")))?;
                let mut overrides = section.params.clone();
                for (k, v) in sets {
                    overrides.insert(k.clone(), *v);
                }
                let params = presets::resolve_params(id, &overrides)
                    .map_err(|e| CliError::Config(format!("model.params: {e}")))?;
                Ok(ModelSource::Preset {
                    id,
                    params,
                    yields: doc.yields.clone(),
                })
            }
            None if inline => {
                let mut model = section;
                for (k, v) in sets {
                    match model.constants.get_mut(k) {
                        Some(slot) => *slot = *v,
                        None => {
                            return Err(CliError::Config(format!(
                                "model.constants.{k}: --set names a constant the model does not define"
                            )))
                        }
                    }
                }
                let costs = doc
                    .costs
                    .clone()
                    .ok_or_else(|| CliError::Config("costs: required for an inline model".into()))?;
                let yields = doc
                    .yields
                    .clone()
                    .ok_or_else(|| CliError::Config("yields: required for an inline model".into()))?;
                Ok(ModelSource::Inline {
                    model: Box::new(model),
                    costs,
                    yields,
                })
            }
            None => Err(CliError::Config(
                "model: no model given; use --preset or a config with a model section".into(),
            )),
        }
    }

    /// The config sections that reproduce this model.
    pub fn to_doc(&self) -> ConfigDoc {
        match self {
            ModelSource::Preset { id, params, yields } => ConfigDoc {
                model: Some(ModelSection {
                    preset: Some(id.name().to_string()),
                    params: params.clone(),
                    ..Default::default()
                }),
                yields: yields.clone(),
                ..Default::default()
            },
            ModelSource::Inline { model, costs, yields } => ConfigDoc {
                model: Some((**model).clone()),
                costs: Some(costs.clone()),
                yields: Some(yields.clone()),
                ..Default::default()
            },
        }
    }

    /// Resolved numeric parameters, for report headers.
    pub fn params(&self) -> ParamBag {
        match self {
            ModelSource::Preset { params, .. } => params.clone(),
            ModelSource::Inline { model, .. } => model.constants.clone(),
        }
    }

    pub fn build(&self) -> Result<ProblemSpec, CliError> {
        match self {
            ModelSource::Preset { id, params, yields } => {
                let spec = presets::build_preset(*id, params).map_err(CliError::from_core)?;
                match yields {
                    Some(y) => spec.with_yields(y.clone()).map_err(|e| CliError::Config(format!("yields: {e}"))),
                    None => Ok(spec),
                }
            }
            ModelSource::Inline { model, costs, yields } => build_inline(model, costs, yields),
        }
    }
}

fn scalar(src: &str, key: &str, var: &str, c: &BTreeMap<String, f64>) -> Result<Arc<dyn Fn(f64) -> f64 + Send + Sync>, CliError> {
    let e = Expr::compile(src, &[var], c).map_err(|e| CliError::Config(format!("{key}: {e}")))?;
    Ok(Arc::new(move |x| e.eval(&[x])))
}

fn config_err(key: &'static str) -> impl Fn(ss_yield_core::Error) -> CliError {
    move |e| CliError::Config(format!("{key}: {e}"))
}

fn build_inline(model: &ModelSection, costs: &CostSection, yields: &YieldFamily) -> Result<ProblemSpec, CliError> {
    let c = &model.constants;
    let drift = scalar(model.drift.as_deref().unwrap_or_default(), "model.drift", "x", c)?;
    let interval = model
        .interval
        .as_ref()
        .ok_or_else(|| CliError::Config("model.interval: required for an inline model".into()))?;
    let a = interval[0].resolve("model.interval[0]", c)?;
    let b = interval[1].resolve("model.interval[1]", c)?;
    let x0 = model
        .x0
        .as_ref()
        .ok_or_else(|| CliError::Config("model.x0: required for an inline model".into()))?
        .resolve("model.x0", c)?;
    let left = model.left.unwrap_or(LeftBehavior::Natural);
    let right = model.right.unwrap_or(RightBehavior::Natural);
    let mut diffusion = match &model.dispersion {
        Some(src) => {
            let sigma = scalar(src, "model.dispersion", "x", c)?;
            DiffusionModel::new(drift, sigma, (a, b), x0, left, right).map_err(CliError::from_core)?
        }
        None => DiffusionModel::deterministic(drift, (a, b), x0, left, right).map_err(config_err("model"))?,
    };
    if let Some(src) = &model.scale_log_density {
        diffusion = diffusion.with_scale_log_density(scalar(src, "model.scale_log_density", "x", c)?);
    }
    if let Some(src) = &model.speed_density {
        diffusion = diffusion.with_speed_density(scalar(src, "model.speed_density", "x", c)?);
    }
    let holding = scalar(&costs.holding, "costs.holding", "x", c)?;
    let limits = (
        costs.holding_limits[0].resolve("costs.holding_limits[0]", c)?,
        costs.holding_limits[1].resolve("costs.holding_limits[1]", c)?,
    );
    let ordering = Expr::compile(&costs.ordering, &["y", "z"], c)
        .map_err(|e| CliError::Config(format!("costs.ordering: {e}")))?;
    let k1 = costs.fixed_cost.resolve("costs.fixed_cost", c)?;
    let cost_model = CostModel::new(holding, limits, Arc::new(move |y, z| ordering.eval(&[y, z])), k1)
        .map_err(config_err("costs"))?;
    let label = model.label.clone().unwrap_or_else(|| "inline".into());
    ProblemSpec::new(diffusion, cost_model, yields.clone(), label).map_err(config_err("yields"))
}
