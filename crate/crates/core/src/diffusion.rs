//! Uncontrolled one-dimensional diffusions: coefficients, scale and speed,
//! Feller boundary tests and the generator.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, gauss_fixed};

/// Shared scalar coefficient function.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftBehavior {
    Natural,
    Exit,
    RegularReflecting,
    RegularSticky,
}

impl LeftBehavior {
    pub fn is_attainable(self) -> bool {
        !matches!(self, LeftBehavior::Natural)
    }

    pub fn feller_class(self) -> FellerClass {
        match self {
            LeftBehavior::Natural => FellerClass::Natural,
            LeftBehavior::Exit => FellerClass::Exit,
            LeftBehavior::RegularReflecting | LeftBehavior::RegularSticky => FellerClass::Regular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RightBehavior {
    Natural,
    Entrance,
}

impl RightBehavior {
    pub fn feller_class(self) -> FellerClass {
        match self {
            RightBehavior::Natural => FellerClass::Natural,
            RightBehavior::Entrance => FellerClass::Entrance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Left,
    Right,
}

impl Endpoint {
    pub fn name(self) -> &'static str {
        match self {
            Endpoint::Left => "left",
            Endpoint::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FellerClass {
    Regular,
    Exit,
    Entrance,
    Natural,
}

impl fmt::Display for FellerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FellerClass::Regular => "regular",
            FellerClass::Exit => "exit",
            FellerClass::Entrance => "entrance",
            FellerClass::Natural => "natural",
        };
        f.write_str(s)
    }
}

/// Diffusion `dX = mu(X) dt + sigma(X) dW` on an open interval `(a, b)`
/// started at the anchor `x0`. A model without dispersion is deterministic.
#[derive(Clone)]
pub struct DiffusionModel {
    drift: ScalarFn,
    dispersion: Option<ScalarFn>,
    a: f64,
    b: f64,
    x0: f64,
    left: LeftBehavior,
    right: RightBehavior,
    scale_log_density: Option<ScalarFn>,
    speed_density: Option<ScalarFn>,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("interval", &(self.a, self.b))
            .field("anchor", &self.x0)
            .field("left", &self.left)
            .field("right", &self.right)
            .field("deterministic", &self.dispersion.is_none())
            .finish()
    }
}

impl DiffusionModel {
    pub fn new(
        drift: ScalarFn,
        dispersion: ScalarFn,
        interval: (f64, f64),
        x0: f64,
        left: LeftBehavior,
        right: RightBehavior,
    ) -> Result<Self> {
        let model = Self {
            drift,
            dispersion: Some(dispersion),
            a: interval.0,
            b: interval.1,
            x0,
            left,
            right,
            scale_log_density: None,
            speed_density: None,
        };
        model.validate()?;
        let s = model.dispersion(x0);
        if !(s > 0.0) {
            return Err(Error::NondegeneracyViolation { x: x0, value: s });
        }
        Ok(model)
    }

    /// Zero-noise model driven by the drift alone.
    pub fn deterministic(
        drift: ScalarFn,
        interval: (f64, f64),
        x0: f64,
        left: LeftBehavior,
        right: RightBehavior,
    ) -> Result<Self> {
        let model = Self {
            drift,
            dispersion: None,
            a: interval.0,
            b: interval.1,
            x0,
            left,
            right,
            scale_log_density: None,
            speed_density: None,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.a.is_nan() || self.b.is_nan() || !(self.a < self.b) {
            return Err(Error::InvalidParameter(format!(
                "state interval ({}, {}) is empty",
                self.a, self.b
            )));
        }
        if !(self.a < self.x0 && self.x0 < self.b) || !self.x0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "anchor {} must lie strictly inside ({}, {})",
                self.x0, self.a, self.b
            )));
        }
        if self.a.is_infinite() && self.left != LeftBehavior::Natural {
            return Err(Error::InvalidParameter(
                "an infinite left endpoint must be declared natural".into(),
            ));
        }
        if self.b.is_infinite() && self.right != RightBehavior::Natural {
            return Err(Error::InvalidParameter(
                "an infinite right endpoint must be declared natural".into(),
            ));
        }
        Ok(())
    }

    /// Closed-form log scale density; normalized internally so it vanishes at
    /// the anchor.
    pub fn with_scale_log_density(mut self, f: ScalarFn) -> Self {
        self.scale_log_density = Some(f);
        self
    }

    pub fn with_speed_density(mut self, f: ScalarFn) -> Self {
        self.speed_density = Some(f);
        self
    }

    pub fn with_anchor(&self, x0: f64) -> Result<Self> {
        let mut m = self.clone();
        m.x0 = x0;
        m.validate()?;
        Ok(m)
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn dispersion(&self, x: f64) -> f64 {
        self.dispersion.as_ref().map_or(0.0, |s| s(x))
    }

    pub fn is_deterministic(&self) -> bool {
        self.dispersion.is_none()
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn anchor(&self) -> f64 {
        self.x0
    }

    pub fn left_behavior(&self) -> LeftBehavior {
        self.left
    }

    pub fn right_behavior(&self) -> RightBehavior {
        self.right
    }

    pub fn is_interior(&self, x: f64) -> bool {
        self.a < x && x < self.b
    }

    /// `-2 mu / sigma^2`, the derivative of the log scale density. NaN where the
    /// dispersion is not positive.
    pub fn log_scale_slope(&self, x: f64) -> f64 {
        let s = self.dispersion(x);
        if s > 0.0 {
            -2.0 * self.drift(x) / (s * s)
        } else {
            f64::NAN
        }
    }

    #[allow(dead_code)]
    pub(crate) fn scale_log_override(&self) -> Option<&ScalarFn> {
        self.scale_log_density.as_ref()
    }

    pub(crate) fn speed_override(&self) -> Option<&ScalarFn> {
        self.speed_density.as_ref()
    }

    fn nondegenerate_at(&self, x: f64) -> Result<()> {
        let s = self.dispersion(x);
        if s > 0.0 {
            Ok(())
        } else {
            Err(Error::NondegeneracyViolation { x, value: s })
        }
    }

    /// Translates a quadrature failure on a slope integrand into the
    /// corresponding nondegeneracy error when that is the cause.
    fn map_slope_error(&self, e: Error) -> Error {
        match e {
            Error::NonFiniteIntegrand { x } if !(self.dispersion(x) > 0.0) => {
                Error::NondegeneracyViolation { x, value: self.dispersion(x) }
            }
            other => other,
        }
    }

    /// `L(v) - L(u)` where `L` is the log scale density.
    pub fn log_scale_increment(&self, u: f64, v: f64) -> Result<f64> {
        if u == v {
            return Ok(0.0);
        }
        if let Some(f) = &self.scale_log_density {
            return Ok(f(v) - f(u));
        }
        self.nondegenerate_at(u)?;
        self.nondegenerate_at(v)?;
        let g = |x: f64| self.log_scale_slope(x);
        // smooth slopes are resolved by a single high-order panel; fall back to
        // adaptive subdivision when the panel estimate disagrees
        let coarse = gauss_fixed(g, u, v, 16);
        let fine = gauss_fixed(g, u, 0.5 * (u + v), 16) + gauss_fixed(g, 0.5 * (u + v), v, 16);
        if (coarse - fine).abs() <= 1e-12 * (1.0 + fine.abs()) && fine.is_finite() {
            return Ok(fine);
        }
        let tol = numerics::INNER_TOL * (1.0 + fine.abs().min(1e6));
        numerics::integrate(g, u, v, tol)
            .map(|r| r.value)
            .map_err(|e| self.map_slope_error(e))
    }
}

/// Scale function and speed density of a nondegenerate diffusion, anchored so
/// that the scale vanishes at `x0`.
#[derive(Clone, Debug)]
pub struct ScaleSpeed {
    model: DiffusionModel,
}

/// Builds the scale/speed pair. Closed-form overrides are used when the model
/// carries them, otherwise the log scale density is integrated from the slope.
pub fn build_scale_speed(model: &DiffusionModel) -> Result<ScaleSpeed> {
    if model.is_deterministic() {
        return Err(Error::NondegeneracyViolation {
            x: model.anchor(),
            value: 0.0,
        });
    }
    model.nondegenerate_at(model.anchor())?;
    Ok(ScaleSpeed { model: model.clone() })
}

impl ScaleSpeed {
    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    /// `log s'(x)`.
    pub fn scale_log_density(&self, x: f64) -> Result<f64> {
        self.model.log_scale_increment(self.model.anchor(), x)
    }

    pub fn scale_density(&self, x: f64) -> Result<f64> {
        self.scale_log_density(x).map(f64::exp)
    }

    /// `S(x) = int_{x0}^x s'(u) du`.
    pub fn scale(&self, x: f64) -> Result<f64> {
        let x0 = self.model.anchor();
        if x == x0 {
            return Ok(0.0);
        }
        let (lo, hi) = if x < x0 { (x, x0) } else { (x0, x) };
        // accumulate the log density panel by panel so each panel only needs a
        // short slope integral
        let n = 64;
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        let mut l_lo = self.scale_log_density(lo)?;
        for i in 0..n {
            let p = lo + i as f64 * h;
            let q = if i + 1 == n { hi } else { p + h };
            let err = RefCell::new(None);
            let part = numerics::integrate(
                |u| match self.model.log_scale_increment(p, u) {
                    Ok(d) => (l_lo + d).exp(),
                    Err(e) => {
                        err.borrow_mut().get_or_insert(e);
                        0.0
                    }
                },
                p,
                q,
                1e-13 * (1.0 + total),
            );
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
            total += part?.value;
            l_lo += self.model.log_scale_increment(p, q)?;
        }
        Ok(if x < x0 { -total } else { total })
    }

    /// `m(x) = 1 / (sigma(x)^2 s'(x))`.
    pub fn speed_density(&self, x: f64) -> Result<f64> {
        if let Some(m) = self.model.speed_override() {
            return Ok(m(x));
        }
        let s = self.model.dispersion(x);
        if !(s > 0.0) {
            return Err(Error::NondegeneracyViolation { x, value: s });
        }
        Ok((-self.scale_log_density(x)?).exp() / (s * s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryClassification {
    pub endpoint: Endpoint,
    pub feller_class: FellerClass,
    pub attracting: bool,
    /// Whether `M[y, b)` is finite; only meaningful at the right endpoint.
    pub speed_tail_finite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Finite,
    Infinite,
    Undecided,
}

/// Reads a monotone sequence of partial sums taken over panels shrinking
/// geometrically towards an endpoint.
fn convergence_verdict(partials: &[f64]) -> Verdict {
    let n = partials.len();
    let last = partials[n - 1];
    if !last.is_finite() || last.abs() > 1e290 {
        return Verdict::Infinite;
    }
    if n < 6 {
        return Verdict::Undecided;
    }
    let inc: Vec<f64> = partials.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let m = inc.len();
    let c_last = inc[m - 1];
    if c_last == 0.0 || c_last <= 1e-15 * last.abs() {
        return Verdict::Finite;
    }
    let window = 4.min(m - 1);
    let c_prev = inc[m - 1 - window];
    if c_prev == 0.0 {
        return Verdict::Infinite;
    }
    let ratio = (c_last / c_prev).powf(1.0 / window as f64);
    if ratio >= 0.98 {
        return Verdict::Infinite;
    }
    if ratio < 0.95 {
        let tail = c_last * ratio / (1.0 - ratio);
        if tail <= 1e-3 * last.abs() {
            return Verdict::Finite;
        }
    }
    Verdict::Undecided
}

struct EndpointSums {
    scale: Vec<f64>,
    speed: Vec<f64>,
    sigma: Vec<f64>,
    n: Vec<f64>,
}

/// Cumulative scale/speed masses and the two Feller integrals along panels that
/// approach `which` geometrically, starting from the anchor.
fn endpoint_sums(ss: &ScaleSpeed, which: Endpoint) -> Result<EndpointSums> {
    let model = ss.model();
    let x0 = model.anchor();
    let (a, b) = model.interval();
    let end = match which {
        Endpoint::Left => a,
        Endpoint::Right => b,
    };
    let points: Vec<f64> = if end.is_finite() {
        let d = end - x0;
        let mut pts = vec![x0];
        for k in 1..=70 {
            let p = end - d * 0.5f64.powi(k);
            if p == *pts.last().unwrap() || p == end {
                break;
            }
            pts.push(p);
        }
        pts
    } else {
        let sign = end.signum();
        let w = x0.abs().max(1.0);
        let mut pts = vec![x0];
        for k in 0..1000 {
            let p = x0 + sign * w * 2f64.powi(k);
            if !p.is_finite() {
                break;
            }
            pts.push(p);
        }
        pts
    };

    let rule = numerics::gauss_legendre(20);
    let mut l_p = 0.0; // log scale density at the panel start
    let (mut s_cum, mut m_cum, mut sig, mut nn) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut out = EndpointSums {
        scale: vec![0.0],
        speed: vec![0.0],
        sigma: vec![0.0],
        n: vec![0.0],
    };
    let speed_at = |x: f64, l: f64| -> Result<f64> {
        if let Some(m) = model.speed_override() {
            Ok(m(x))
        } else {
            let s = model.dispersion(x);
            if !(s > 0.0) {
                return Err(Error::NondegeneracyViolation { x, value: s });
            }
            Ok((-l).exp() / (s * s))
        }
    };
    for w in points.windows(2) {
        let (p, q) = (w[0], w[1]);
        let (lo, hi) = if p < q { (p, q) } else { (q, p) };
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        // nodes ordered outward from p
        let mut nodes: Vec<(f64, f64)> = rule.iter().map(|&(t, wt)| (c + h * t, wt * h)).collect();
        if p > q {
            nodes.reverse();
        }
        let mut ds = 0.0;
        let mut dm = 0.0;
        let mut dsig = 0.0;
        let mut dn = 0.0;
        // inner cumulative masses from p to each node via a fine sub-rule
        let mut prev = p;
        let mut s_run = 0.0;
        let mut m_run = 0.0;
        let mut l_prev = l_p;
        for &(x, wt) in &nodes {
            let l_x = l_prev + model.log_scale_increment(prev, x)?;
            let (a_lo, a_hi) = if prev < x { (prev, x) } else { (x, prev) };
            let sub_err = RefCell::new(None);
            let sub_s = gauss_fixed(
                |u| match model.log_scale_increment(prev, u) {
                    Ok(d) => (l_prev + d).exp(),
                    Err(e) => {
                        sub_err.borrow_mut().get_or_insert(e);
                        0.0
                    }
                },
                a_lo,
                a_hi,
                12,
            );
            let sub_m = gauss_fixed(
                |u| match model.log_scale_increment(prev, u) {
                    Ok(d) => speed_at(u, l_prev + d).unwrap_or(f64::NAN),
                    Err(e) => {
                        sub_err.borrow_mut().get_or_insert(e);
                        0.0
                    }
                },
                a_lo,
                a_hi,
                12,
            );
            if let Some(e) = sub_err.into_inner() {
                return Err(e);
            }
            s_run += sub_s;
            m_run += sub_m;
            let sx = l_x.exp();
            let mx = speed_at(x, l_x)?;
            ds += wt * sx;
            dm += wt * mx;
            dsig += wt * (m_cum + m_run) * sx;
            dn += wt * (s_cum + s_run) * mx;
            prev = x;
            l_prev = l_x;
        }
        l_p += model.log_scale_increment(p, q)?;
        s_cum += ds;
        m_cum += dm;
        sig += dsig;
        nn += dn;
        out.scale.push(s_cum);
        out.speed.push(m_cum);
        out.sigma.push(sig);
        out.n.push(nn);
        if !s_cum.is_finite() && !m_cum.is_finite() {
            break;
        }
    }
    Ok(out)
}

/// Feller classification of one endpoint from numeric integrability tests,
/// checked against the declared behavior.
pub fn classify_boundary(
    model: &DiffusionModel,
    scale_speed: &ScaleSpeed,
    which: Endpoint,
) -> Result<BoundaryClassification> {
    let sums = endpoint_sums(scale_speed, which)?;
    let (a, b) = model.interval();
    let end = if which == Endpoint::Left { a } else { b };
    let decide = |label: &str, seq: &[f64]| -> Result<bool> {
        match convergence_verdict(seq) {
            Verdict::Finite => Ok(true),
            Verdict::Infinite => Ok(false),
            Verdict::Undecided => Err(Error::InconclusiveIntegral {
                endpoint: which.name(),
                detail: format!(
                    "{label} partial sums {:?} do not settle",
                    &seq[seq.len().saturating_sub(4)..]
                ),
            }),
        }
    };
    let scale_finite = decide("scale", &sums.scale)?;
    let speed_finite = decide("speed", &sums.speed)?;
    let feller_class = if end.is_infinite() {
        FellerClass::Natural
    } else {
        let sigma_finite = decide("sigma", &sums.sigma)?;
        let n_finite = decide("N", &sums.n)?;
        match (sigma_finite, n_finite) {
            (true, true) => FellerClass::Regular,
            (true, false) => FellerClass::Exit,
            (false, true) => FellerClass::Entrance,
            (false, false) => FellerClass::Natural,
        }
    };
    let declared = match which {
        Endpoint::Left => model.left_behavior().feller_class(),
        Endpoint::Right => model.right_behavior().feller_class(),
    };
    if declared != feller_class {
        return Err(Error::ClassificationMismatch {
            endpoint: which.name(),
            declared: declared.to_string(),
            found: feller_class.to_string(),
        });
    }
    Ok(BoundaryClassification {
        endpoint: which,
        feller_class,
        attracting: scale_finite,
        speed_tail_finite: speed_finite,
    })
}

/// A function that may also know its own first derivative.
pub trait SmoothFn {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, _x: f64) -> Option<f64> {
        None
    }
}

impl<F: Fn(f64) -> f64> SmoothFn for F {
    fn value(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Pairs a function with its analytic derivative.
pub struct WithDerivative<F, D>(pub F, pub D);

impl<F: Fn(f64) -> f64, D: Fn(f64) -> f64> SmoothFn for WithDerivative<F, D> {
    fn value(&self, x: f64) -> f64 {
        (self.0)(x)
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        Some((self.1)(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorValue {
    pub value: f64,
    /// Finite-difference half-width actually used.
    pub step: f64,
}

fn default_step(model: &DiffusionModel, x: f64) -> f64 {
    let (a, b) = model.interval();
    let mut len = x.abs().max(1.0);
    if a.is_finite() {
        len = len.min(x - a);
    }
    if b.is_finite() {
        len = len.min(b - x);
    }
    1e-3 * len
}

/// `Af = sigma^2/2 f'' + mu f'` with a step scaled to the local length.
pub fn apply_generator<F: SmoothFn + ?Sized>(f: &F, model: &DiffusionModel, x: f64) -> Result<GeneratorValue> {
    if !model.is_interior(x) {
        return Err(Error::StencilOutOfDomain { x, step: 0.0 });
    }
    apply_generator_with_step(f, model, x, default_step(model, x))
}

/// Generator with an explicit finite-difference half-width.
pub fn apply_generator_with_step<F: SmoothFn + ?Sized>(
    f: &F,
    model: &DiffusionModel,
    x: f64,
    step: f64,
) -> Result<GeneratorValue> {
    let (a, b) = model.interval();
    if !(step > 0.0) || x - step <= a || x + step >= b || x - step == x {
        return Err(Error::StencilOutOfDomain { x, step });
    }
    let h = step;
    let (first, second) = match f.derivative(x) {
        Some(d1) => {
            let diff = |h: f64| {
                let p = f.derivative(x + h).unwrap_or(f64::NAN);
                let m = f.derivative(x - h).unwrap_or(f64::NAN);
                (p - m) / (2.0 * h)
            };
            (d1, (4.0 * diff(0.5 * h) - diff(h)) / 3.0)
        }
        None => {
            let fx = f.value(x);
            let d1 = |h: f64| (f.value(x + h) - f.value(x - h)) / (2.0 * h);
            let d2 = |h: f64| (f.value(x + h) - 2.0 * fx + f.value(x - h)) / (h * h);
            (
                (4.0 * d1(0.5 * h) - d1(h)) / 3.0,
                (4.0 * d2(0.5 * h) - d2(h)) / 3.0,
            )
        }
    };
    let s = model.dispersion(x);
    Ok(GeneratorValue {
        value: 0.5 * s * s * second + model.drift(x) * first,
        step: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drifted_bm(mu: f64, sigma: f64) -> DiffusionModel {
        DiffusionModel::new(
            Arc::new(move |_| -mu),
            Arc::new(move |_| sigma),
            (f64::NEG_INFINITY, f64::INFINITY),
            0.0,
            LeftBehavior::Natural,
            RightBehavior::Natural,
        )
        .unwrap()
    }

    fn logistic(beta_target: f64) -> DiffusionModel {
        // k = 1, sigma = 0.1, mu chosen so beta = -2 mu / sigma^2
        let sigma = 0.1;
        let mu = -beta_target * sigma * sigma / 2.0;
        DiffusionModel::new(
            Arc::new(move |x| -mu * x * (1.0 - x)),
            Arc::new(move |x| sigma * x * (1.0 - x)),
            (0.0, 1.0),
            0.5,
            LeftBehavior::Natural,
            RightBehavior::Natural,
        )
        .unwrap()
    }

    #[test]
    fn drifted_bm_scale_log_density_is_linear() {
        let m = drifted_bm(1.5, 0.7);
        let ss = build_scale_speed(&m).unwrap();
        for &x in &[-2.0, -0.3, 0.0, 0.8, 3.0] {
            let expect = 2.0 * 1.5 * x / (0.7 * 0.7);
            assert!((ss.scale_log_density(x).unwrap() - expect).abs() < 1e-10);
        }
        assert_eq!(ss.scale(0.0).unwrap(), 0.0);
        let mut prev = f64::NEG_INFINITY;
        for i in -10..=10 {
            let s = ss.scale(i as f64 * 0.2).unwrap();
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn logistic_scale_density_at_anchor_is_one() {
        let m = logistic(-10.0);
        let ss = build_scale_speed(&m).unwrap();
        assert!((ss.scale_density(0.5).unwrap() - 1.0).abs() < 1e-15);
        // s'(x) = ((1-x)/x)^beta for x0 = 1/2
        for &x in &[0.1f64, 0.3, 0.7, 0.95] {
            let expect = ((1.0 - x) / x).powf(-10.0);
            let got = ss.scale_density(x).unwrap();
            assert!(((got - expect) / expect).abs() < 1e-10, "{x}: {got} vs {expect}");
        }
    }

    #[test]
    fn logistic_speed_density_matches_closed_form() {
        let m = logistic(-10.0);
        let ss = build_scale_speed(&m).unwrap();
        let c2 = 1.0 / 0.01;
        for &v in &[0.05f64, 0.25, 0.5, 0.8, 0.99] {
            let expect = c2 * (1.0 - v).powf(8.0) * v.powf(-12.0);
            let got = ss.speed_density(v).unwrap();
            assert!(((got - expect) / expect).abs() < 1e-9, "{v}: {got} vs {expect}");
        }
    }

    #[test]
    fn degenerate_dispersion_is_rejected() {
        let m = DiffusionModel::new(
            Arc::new(|_| -1.0),
            Arc::new(|x: f64| x),
            (-1.0, 1.0),
            0.5,
            LeftBehavior::Exit,
            RightBehavior::Natural,
        )
        .unwrap();
        let ss = build_scale_speed(&m).unwrap();
        let err = ss.scale_log_density(-0.5).unwrap_err();
        assert!(matches!(err, Error::NondegeneracyViolation { .. }), "{err:?}");
    }

    #[test]
    fn infinite_endpoints_must_be_natural() {
        let r = DiffusionModel::new(
            Arc::new(|_| -1.0),
            Arc::new(|_| 1.0),
            (f64::NEG_INFINITY, 1.0),
            0.0,
            LeftBehavior::Exit,
            RightBehavior::Natural,
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn logistic_endpoints_are_natural() {
        let m = logistic(-10.0);
        let ss = build_scale_speed(&m).unwrap();
        let left = classify_boundary(&m, &ss, Endpoint::Left).unwrap();
        let right = classify_boundary(&m, &ss, Endpoint::Right).unwrap();
        assert_eq!(left.feller_class, FellerClass::Natural);
        assert_eq!(right.feller_class, FellerClass::Natural);
        assert!(left.attracting);
        assert!(!right.attracting);
        assert!(right.speed_tail_finite);
    }

    #[test]
    fn drifted_bm_endpoints_are_natural() {
        let m = drifted_bm(1.0, 1.0);
        let ss = build_scale_speed(&m).unwrap();
        let left = classify_boundary(&m, &ss, Endpoint::Left).unwrap();
        let right = classify_boundary(&m, &ss, Endpoint::Right).unwrap();
        assert_eq!(left.feller_class, FellerClass::Natural);
        assert_eq!(right.feller_class, FellerClass::Natural);
        assert!(left.attracting);
        assert!(!right.attracting);
        assert!(right.speed_tail_finite);
    }

    #[test]
    fn reflected_bm_left_is_regular() {
        let m = DiffusionModel::new(
            Arc::new(|_| -1.0),
            Arc::new(|_| 1.0),
            (0.0, f64::INFINITY),
            1.0,
            LeftBehavior::RegularReflecting,
            RightBehavior::Natural,
        )
        .unwrap();
        let ss = build_scale_speed(&m).unwrap();
        let left = classify_boundary(&m, &ss, Endpoint::Left).unwrap();
        assert_eq!(left.feller_class, FellerClass::Regular);
        assert!(left.attracting);
    }

    #[test]
    fn declared_behavior_mismatch_is_an_error() {
        let m = DiffusionModel::new(
            Arc::new(|_| -1.0),
            Arc::new(|_| 1.0),
            (0.0, f64::INFINITY),
            1.0,
            LeftBehavior::Natural,
            RightBehavior::Natural,
        )
        .unwrap();
        let ss = build_scale_speed(&m).unwrap();
        let err = classify_boundary(&m, &ss, Endpoint::Left).unwrap_err();
        assert!(matches!(err, Error::ClassificationMismatch { .. }));
    }

    #[test]
    fn generator_of_constant_and_scale_vanish() {
        let m = logistic(-10.0);
        let ss = build_scale_speed(&m).unwrap();
        for i in 1..40 {
            let x = i as f64 / 40.0;
            let c = apply_generator(&|_x: f64| 3.25, &m, x).unwrap();
            assert!(c.value.abs() < 1e-9);
            let s = WithDerivative(|x| ss.scale(x).unwrap(), |x| ss.scale_density(x).unwrap());
            let g = apply_generator(&s, &m, x).unwrap();
            let magnitude = 0.5 * m.dispersion(x).powi(2) * ss.scale_density(x).unwrap() * 10.0;
            assert!(g.value.abs() < 1e-6 * (1.0 + magnitude), "x={x}: {}", g.value);
        }
    }

    #[test]
    fn stencil_outside_domain_is_rejected() {
        let m = logistic(-10.0);
        let err = apply_generator_with_step(&|x: f64| x, &m, 0.001, 0.01).unwrap_err();
        assert!(matches!(err, Error::StencilOutOfDomain { .. }));
        assert!(apply_generator(&|x: f64| x, &m, 1.0).is_err());
    }
}
