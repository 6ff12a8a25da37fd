//! Preset problem instances: drifted and reflected Brownian motion, geometric
//! Brownian motion under two cost structures, and the logistic model with
//! z-skewed uniform yields.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionModel, LeftBehavior, RightBehavior};
use crate::error::{Error, Result};
use crate::problem::{CostModel, FunctionalOverrides, ProblemSpec};
use crate::yields::{BaseDistribution, YieldFamily};

pub type ParamBag = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetId {
    DriftedBm,
    DriftedBmReflected,
    GbmPowerCost,
    GbmPiecewiseCost,
    LogisticZskew,
}

impl PresetId {
    pub const ALL: [PresetId; 5] = [
        PresetId::DriftedBm,
        PresetId::DriftedBmReflected,
        PresetId::GbmPowerCost,
        PresetId::GbmPiecewiseCost,
        PresetId::LogisticZskew,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PresetId::DriftedBm => "drifted_bm",
            PresetId::DriftedBmReflected => "drifted_bm_reflected",
            PresetId::GbmPowerCost => "gbm_power_cost",
            PresetId::GbmPiecewiseCost => "gbm_piecewise_cost",
            PresetId::LogisticZskew => "logistic_zskew",
        }
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preset '{s}'")))
    }
}

/// Default parameter bag of a preset.
///
/// `delta` is the guaranteed delivered fraction of the uniform proportional
/// yield used by the Brownian and geometric presets (`delta = 1` gives
/// non-deficient supply). The logistic `model` selects 1 (no noise, exact
/// delivery), 2 (noise, exact delivery) or 3 (noise, z-skewed yields).
pub fn default_params(id: PresetId) -> ParamBag {
    let pairs: &[(&str, f64)] = match id {
        PresetId::DriftedBm => &[
            ("mu", 1.0),
            ("sigma", 1.0),
            ("c_b", 5.0),
            ("c_h", 1.0),
            ("k1", 2.0),
            ("k2", 1.0),
            ("x0", 0.0),
            ("delta", 0.5),
        ],
        PresetId::DriftedBmReflected => &[
            ("mu", 1.0),
            ("sigma", 1.0),
            ("k1", 2.0),
            ("k2", 1.0),
            ("k3", 1.0),
            ("k4", 10.0),
            ("x0", 1.0),
            ("delta", 0.5),
        ],
        PresetId::GbmPowerCost => &[
            ("mu", 0.3),
            ("sigma", 0.5),
            ("k1", 1.0),
            ("k2", 1.0),
            ("k3", 1.0),
            ("k4", 1.0),
            ("beta", -1.0),
            ("x0", 1.0),
            ("delta", 0.5),
        ],
        PresetId::GbmPiecewiseCost => &[
            ("mu", 0.3),
            ("sigma", 0.5),
            ("k1", 1.0),
            ("k3", 10.0),
            ("k4", 1.0),
            ("x0", 1.0),
            ("delta", 0.5),
        ],
        PresetId::LogisticZskew => &[
            ("k", 1.0),
            ("mu", 0.05),
            ("sigma", 0.1),
            ("k0", 100.0),
            ("k1", 9.0),
            ("k2", 4.0),
            ("x0", 0.5),
            ("xbar", 0.5),
            ("j", 10.0),
            ("model", 3.0),
        ],
    };
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

/// Resolves overrides against the defaults, rejecting unknown keys.
pub fn resolve_params(id: PresetId, overrides: &ParamBag) -> Result<ParamBag> {
    let mut bag = default_params(id);
    for (k, v) in overrides {
        match bag.get_mut(k) {
            Some(slot) => *slot = *v,
            None => {
                return Err(Error::InvalidParameter(format!(
                    "preset {id} has no parameter '{k}'"
                )))
            }
        }
    }
    Ok(bag)
}

fn positive(bag: &ParamBag, keys: &[&str]) -> Result<()> {
    for k in keys {
        let v = bag[*k];
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("parameter {k} must be positive, got {v}")));
        }
    }
    Ok(())
}

fn proportional_yields(delta: f64) -> Result<YieldFamily> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("parameter delta must lie in (0, 1], got {delta}")));
    }
    Ok(if delta == 1.0 {
        YieldFamily::Dirac
    } else {
        YieldFamily::BasePushforward {
            delta,
            base: BaseDistribution::Uniform,
        }
    })
}

pub fn build_preset(id: PresetId, overrides: &ParamBag) -> Result<ProblemSpec> {
    let p = resolve_params(id, overrides)?;
    match id {
        PresetId::DriftedBm => {
            positive(&p, &["mu", "sigma", "c_b", "c_h", "k1", "k2"])?;
            let (mu, sigma) = (p["mu"], p["sigma"]);
            let (cb, ch, k1, k2) = (p["c_b"], p["c_h"], p["k1"], p["k2"]);
            let x0 = p["x0"];
            let model = DiffusionModel::new(
                Arc::new(move |_| -mu),
                Arc::new(move |_| sigma),
                (f64::NEG_INFINITY, f64::INFINITY),
                x0,
                LeftBehavior::Natural,
                RightBehavior::Natural,
            )?
            .with_scale_log_density(Arc::new(move |x| 2.0 * mu * (x - x0) / (sigma * sigma)));
            let costs = CostModel::new(
                Arc::new(move |x| if x < 0.0 { -cb * x } else { ch * x }),
                (f64::INFINITY, f64::INFINITY),
                Arc::new(move |y, z| k1 + k2 * (z - y)),
                k1,
            )?;
            ProblemSpec::new(model, costs, proportional_yields(p["delta"])?, id.name())
        }
        PresetId::DriftedBmReflected => {
            positive(&p, &["mu", "sigma", "k1", "k2", "k3", "k4", "x0"])?;
            let (mu, sigma) = (p["mu"], p["sigma"]);
            let (k1, k2, k3, k4) = (p["k1"], p["k2"], p["k3"], p["k4"]);
            let x0 = p["x0"];
            let model = DiffusionModel::new(
                Arc::new(move |_| -mu),
                Arc::new(move |_| sigma),
                (0.0, f64::INFINITY),
                x0,
                LeftBehavior::RegularReflecting,
                RightBehavior::Natural,
            )?
            .with_scale_log_density(Arc::new(move |x| 2.0 * mu * (x - x0) / (sigma * sigma)));
            let costs = CostModel::new(
                Arc::new(move |x| k3 * x + k4 * (-x).exp()),
                (k4, f64::INFINITY),
                Arc::new(move |y, z| k1 + k2 * (z - y).max(0.0).sqrt()),
                k1,
            )?;
            ProblemSpec::new(model, costs, proportional_yields(p["delta"])?, id.name())
        }
        PresetId::GbmPowerCost => {
            positive(&p, &["mu", "sigma", "k1", "k2", "k3", "k4", "x0"])?;
            let beta = p["beta"];
            if !(beta < 0.0) {
                return Err(Error::InvalidParameter(format!("parameter beta must be negative, got {beta}")));
            }
            let (k1, k2, k3, k4) = (p["k1"], p["k2"], p["k3"], p["k4"]);
            let model = gbm(p["mu"], p["sigma"], p["x0"])?;
            let costs = CostModel::new(
                Arc::new(move |x| k3 * x + k4 * x.powf(beta)),
                (f64::INFINITY, f64::INFINITY),
                Arc::new(move |y, z| k1 + k2 * (z - y).max(0.0).sqrt()),
                k1,
            )?;
            ProblemSpec::new(model, costs, proportional_yields(p["delta"])?, id.name())
        }
        PresetId::GbmPiecewiseCost => {
            positive(&p, &["mu", "sigma", "k1", "k3", "k4", "x0"])?;
            let (k1, k3, k4) = (p["k1"], p["k3"], p["k4"]);
            let model = gbm(p["mu"], p["sigma"], p["x0"])?;
            let costs = CostModel::new(
                Arc::new(move |x| if x < 1.0 { k3 * (1.0 - x) } else { k4 * (x - 1.0) }),
                (k3, f64::INFINITY),
                Arc::new(move |y, z| k1 + 0.5 * (y.powf(-0.5) - z.powf(-0.5)) + 0.5 * (z - y)),
                k1,
            )?;
            ProblemSpec::new(model, costs, proportional_yields(p["delta"])?, id.name())
        }
        PresetId::LogisticZskew => logistic(&p),
    }
}

fn gbm(mu: f64, sigma: f64, x0: f64) -> Result<DiffusionModel> {
    let c = 2.0 * mu / (sigma * sigma);
    Ok(DiffusionModel::new(
        Arc::new(move |x| -mu * x),
        Arc::new(move |x| sigma * x),
        (0.0, f64::INFINITY),
        x0,
        LeftBehavior::Natural,
        RightBehavior::Natural,
    )?
    .with_scale_log_density(Arc::new(move |x| c * (x / x0).ln())))
}

/// `beta = -2 mu / (k sigma^2)` of the logistic preset.
pub fn logistic_beta(mu: f64, sigma: f64, k: f64) -> f64 {
    -2.0 * mu / (k * sigma * sigma)
}

fn logistic(p: &ParamBag) -> Result<ProblemSpec> {
    positive(p, &["k", "mu", "sigma", "k0", "k1", "k2", "j"])?;
    let (k, mu, sigma) = (p["k"], p["mu"], p["sigma"]);
    let (k0, k1, k2, x0, xbar) = (p["k0"], p["k1"], p["k2"], p["x0"], p["xbar"]);
    let j = p["j"];
    if j.fract() != 0.0 {
        return Err(Error::InvalidParameter(format!("parameter j must be an integer, got {j}")));
    }
    let model_no = p["model"];
    if ![1.0, 2.0, 3.0].contains(&model_no) {
        return Err(Error::InvalidParameter(format!("parameter model must be 1, 2 or 3, got {model_no}")));
    }
    let beta = logistic_beta(mu, sigma, k);
    if !(beta < -1.0) {
        return Err(Error::InvalidParameter(format!(
            "logistic preset requires beta = -2 mu / (k sigma^2) < -1, got {beta}"
        )));
    }
    if !(0.0 < xbar && xbar < k) {
        return Err(Error::InvalidParameter(format!("parameter xbar must lie in (0, k), got {xbar}")));
    }
    let drift = Arc::new(move |x: f64| -mu * x * (k - x));
    let holding = Arc::new(move |x: f64| k0 * (x - xbar) * (x - xbar));
    let limits = (k0 * xbar * xbar, k0 * (k - xbar) * (k - xbar));
    let costs = CostModel::new(holding, limits, Arc::new(move |y, z| k1 + k2 * (z - y)), k1)?;
    let label = format!("logistic_zskew/model{model_no}");
    if model_no == 1.0 {
        let model = DiffusionModel::deterministic(drift, (0.0, k), x0, LeftBehavior::Natural, RightBehavior::Natural)?;
        return ProblemSpec::new(model, costs, YieldFamily::Dirac, label);
    }
    let model = DiffusionModel::new(
        drift,
        Arc::new(move |x| sigma * x * (k - x)),
        (0.0, k),
        x0,
        LeftBehavior::Natural,
        RightBehavior::Natural,
    )?
    .with_scale_log_density(Arc::new(move |x| beta * (((k - x) / x).ln() - ((k - x0) / x0).ln())))
    .with_speed_density(Arc::new(move |x| {
        let l = beta * (((k - x) / x).ln() - ((k - x0) / x0).ln());
        let s = sigma * x * (k - x);
        (-l).exp() / (s * s)
    }));
    let yields = if model_no == 2.0 {
        YieldFamily::Dirac
    } else {
        YieldFamily::ZSkewedUniform { j: j as u32, k }
    };
    let spec = ProblemSpec::new(model, costs, yields, label)?;
    if k == 1.0 && x0 == 0.5 && xbar == 0.5 {
        Ok(spec.with_functional_overrides(logistic_closed_forms(beta, sigma, k0)))
    } else {
        Ok(spec)
    }
}

/// `zeta`, `g0` and their derivatives for `k = 1`, `x0 = xbar = 1/2`.
pub fn logistic_closed_forms(beta: f64, sigma: f64, k0: f64) -> FunctionalOverrides {
    let d = sigma * sigma * beta * (beta * beta - 1.0);
    let b = beta;
    FunctionalOverrides {
        zeta: Arc::new(move |x| {
            -2.0 * (1.0 - 2.0 * x + 2.0 * b * (2.0 - 2.0 * x).ln() + b * (1.0 + b) * (x / (1.0 - x)).ln()) / d
        }),
        zeta_prime: Arc::new(move |x| {
            -2.0 * (-2.0 - 2.0 * b / (1.0 - x) + b * (1.0 + b) / (x * (1.0 - x))) / d
        }),
        g0: Arc::new(move |x| {
            k0 * ((2.0 * x - 1.0) * (2.0 * b * b - 1.0) - 2.0 * b * (2.0 - 2.0 * x).ln() - b * (1.0 + b) * (x / (1.0 - x)).ln())
                / (2.0 * d)
        }),
        g0_prime: Arc::new(move |x| {
            k0 * (2.0 * (2.0 * b * b - 1.0) + 2.0 * b / (1.0 - x) - b * (1.0 + b) / (x * (1.0 - x))) / (2.0 * d)
        }),
    }
}

/// Logistic preset for one of the three table models with other defaults.
pub fn logistic_model(model_no: u8) -> Result<ProblemSpec> {
    let mut bag = ParamBag::new();
    bag.insert("model".into(), model_no as f64);
    build_preset(PresetId::LogisticZskew, &bag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{compute_g0, compute_zeta, CycleFunctionals};

    #[test]
    fn logistic_defaults() {
        assert!((logistic_beta(0.05, 0.1, 1.0) + 10.0).abs() < 1e-12);
        let spec = build_preset(PresetId::LogisticZskew, &ParamBag::new()).unwrap();
        assert_eq!(spec.costs().holding_limits(), (25.0, 25.0));
        assert_eq!(spec.costs().holding(0.0), 25.0);
        assert_eq!(spec.costs().holding(1.0), 25.0);
        assert!(matches!(spec.yields(), YieldFamily::ZSkewedUniform { j: 10, .. }));
        assert!(spec.overrides().is_some());
    }

    #[test]
    fn drifted_bm_order_cost_on_diagonal_is_k1() {
        let spec = build_preset(PresetId::DriftedBm, &ParamBag::new()).unwrap();
        assert_eq!(spec.costs().ordering(0.3, 0.3), 2.0);
    }

    #[test]
    fn beta_must_be_below_minus_one() {
        let mut bag = ParamBag::new();
        bag.insert("mu".into(), 0.001);
        assert!(matches!(build_preset(PresetId::LogisticZskew, &bag), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn unknown_parameter_is_named() {
        let mut bag = ParamBag::new();
        bag.insert("nope".into(), 1.0);
        let err = build_preset(PresetId::DriftedBm, &bag).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        let spec = logistic_model(3).unwrap();
        let table = CycleFunctionals::new(spec.diffusion(), spec.costs(), None).unwrap();
        for i in 1..=50 {
            let x = i as f64 / 51.0;
            let (zc, gc) = (compute_zeta(&spec, x).unwrap(), compute_g0(&spec, x).unwrap());
            let (zq, gq) = (table.zeta(x).unwrap(), table.g0(x).unwrap());
            assert!((zc - zq).abs() < 1e-6 * (1.0 + zc.abs()), "{x}: {zc} vs {zq}");
            assert!((gc - gq).abs() < 1e-6 * (1.0 + gc.abs()), "{x}: {gc} vs {gq}");
        }
    }

    #[test]
    fn scale_override_matches_quadrature() {
        use crate::diffusion::build_scale_speed;
        let spec = logistic_model(3).unwrap();
        let with = build_scale_speed(spec.diffusion()).unwrap();
        let plain = DiffusionModel::new(
            Arc::new(|x| -0.05 * x * (1.0 - x)),
            Arc::new(|x| 0.1 * x * (1.0 - x)),
            (0.0, 1.0),
            0.5,
            LeftBehavior::Natural,
            RightBehavior::Natural,
        )
        .unwrap();
        let without = build_scale_speed(&plain).unwrap();
        for &x in &[0.05, 0.2, 0.45, 0.6, 0.9] {
            let (a, b) = (with.scale(x).unwrap(), without.scale(x).unwrap());
            assert!(((a - b) / b).abs() < 1e-8, "{x}: {a} vs {b}");
            let (a, b) = (with.speed_density(x).unwrap(), without.speed_density(x).unwrap());
            assert!(((a - b) / b).abs() < 1e-8, "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn every_preset_builds() {
        for id in PresetId::ALL {
            let spec = build_preset(id, &ParamBag::new()).unwrap();
            let x0 = spec.diffusion().anchor();
            assert_eq!(compute_zeta(&spec, x0).unwrap(), 0.0);
            assert_eq!(id.name().parse::<PresetId>().unwrap(), id);
        }
    }
}
