//! Cost model and the assembled problem instance.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::diffusion::{DiffusionModel, ScalarFn};
use crate::error::{Error, Result};
use crate::functionals::CycleFunctionals;
use crate::yields::YieldFamily;

/// Shared two-argument cost function `(y, z) -> c`.
pub type PairFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Holding/back-order cost `c0` and ordering cost `c1`.
#[derive(Clone)]
pub struct CostModel {
    holding: ScalarFn,
    holding_limit_left: f64,
    holding_limit_right: f64,
    ordering: PairFn,
    fixed_cost_k1: f64,
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostModel")
            .field("holding_limit_left", &self.holding_limit_left)
            .field("holding_limit_right", &self.holding_limit_right)
            .field("fixed_cost_k1", &self.fixed_cost_k1)
            .finish()
    }
}

impl CostModel {
    /// `holding_limit_*` are the declared boundary values `c0(a)`, `c0(b)`
    /// (possibly infinite).
    pub fn new(
        holding: ScalarFn,
        (holding_limit_left, holding_limit_right): (f64, f64),
        ordering: PairFn,
        fixed_cost_k1: f64,
    ) -> Result<Self> {
        if !(fixed_cost_k1 > 0.0) || !fixed_cost_k1.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "fixed ordering cost k1 must be positive, got {fixed_cost_k1}"
            )));
        }
        for (side, v) in [("left", holding_limit_left), ("right", holding_limit_right)] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{side} holding limit must be in [0, inf], got {v}"
                )));
            }
        }
        Ok(Self {
            holding,
            holding_limit_left,
            holding_limit_right,
            ordering,
            fixed_cost_k1,
        })
    }

    pub fn holding(&self, x: f64) -> f64 {
        (self.holding)(x)
    }

    pub fn holding_fn(&self) -> &ScalarFn {
        &self.holding
    }

    pub fn ordering(&self, y: f64, z: f64) -> f64 {
        (self.ordering)(y, z)
    }

    pub fn holding_limits(&self) -> (f64, f64) {
        (self.holding_limit_left, self.holding_limit_right)
    }

    pub fn fixed_cost_k1(&self) -> f64 {
        self.fixed_cost_k1
    }
}

/// Closed forms for `zeta`, `g0` and their first derivatives.
#[derive(Clone)]
pub struct FunctionalOverrides {
    pub zeta: ScalarFn,
    pub zeta_prime: ScalarFn,
    pub g0: ScalarFn,
    pub g0_prime: ScalarFn,
}

/// A complete problem instance: dynamics, costs and yield kernel.
#[derive(Clone)]
pub struct ProblemSpec {
    diffusion: DiffusionModel,
    costs: CostModel,
    yields: YieldFamily,
    label: String,
    overrides: Option<FunctionalOverrides>,
    diag_gap: Option<f64>,
    functionals: Arc<OnceLock<Result<CycleFunctionals>>>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("label", &self.label)
            .field("diffusion", &self.diffusion)
            .field("costs", &self.costs)
            .field("yields", &self.yields)
            .field("closed_forms", &self.overrides.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(diffusion: DiffusionModel, costs: CostModel, yields: YieldFamily, label: impl Into<String>) -> Result<Self> {
        yields.validate()?;
        if let Some(k) = yields.capacity() {
            let b = diffusion.interval().1;
            if (k - b).abs() > 1e-12 * b.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "yield capacity {k} must equal the right endpoint {b}"
                )));
            }
        }
        Ok(Self {
            diffusion,
            costs,
            yields,
            label: label.into(),
            overrides: None,
            diag_gap: None,
            functionals: Arc::new(OnceLock::new()),
        })
    }

    pub fn with_functional_overrides(mut self, o: FunctionalOverrides) -> Self {
        self.overrides = Some(o);
        self.functionals = Arc::new(OnceLock::new());
        self
    }

    pub fn with_diag_gap(mut self, gap: f64) -> Self {
        self.diag_gap = Some(gap);
        self
    }

    pub fn with_yields(&self, yields: YieldFamily) -> Result<Self> {
        let mut s = Self::new(self.diffusion.clone(), self.costs.clone(), yields, self.label.clone())?;
        s.overrides = self.overrides.clone();
        s.diag_gap = self.diag_gap;
        // g0 and zeta do not depend on the kernel, so the table is shared
        s.functionals = self.functionals.clone();
        Ok(s)
    }

    pub fn diffusion(&self) -> &DiffusionModel {
        &self.diffusion
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }

    pub fn yields(&self) -> &YieldFamily {
        &self.yields
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn overrides(&self) -> Option<&FunctionalOverrides> {
        self.overrides.as_ref()
    }

    /// Gap below which `z - y` counts as the diagonal.
    pub fn diag_gap(&self) -> f64 {
        if let Some(g) = self.diag_gap {
            return g;
        }
        let (a, b) = self.diffusion.interval();
        if a.is_finite() && b.is_finite() {
            1e-6 * (b - a)
        } else {
            1e-6
        }
    }

    /// The cached `g0` / `zeta` tables, built on first use.
    pub fn functionals(&self) -> Result<&CycleFunctionals> {
        self.functionals
            .get_or_init(|| CycleFunctionals::new(&self.diffusion, &self.costs, self.overrides.clone()))
            .as_ref()
            .map_err(Clone::clone)
    }
}
