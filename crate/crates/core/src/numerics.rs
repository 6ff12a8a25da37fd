//! Quadrature utilities shared by the analytic computations.
//!
//! Finite intervals use adaptive Gauss-Kronrod (21-point) subdivision. Improper
//! integrals towards an endpoint are summed panel by panel over a geometric
//! partition, which keeps partial sums monotone for nonnegative integrands and
//! exposes a divergence guard.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for inner integrals.
pub const INNER_TOL: f64 = 1e-9;
/// Default absolute tolerance for outer (nested) integrals.
pub const OUTER_TOL: f64 = 1e-7;
/// Evaluation budget for a single integral.
pub const EVAL_BUDGET: usize = 1_000_000;

/// Partial sums beyond this magnitude count as divergence.
const OVERFLOW_GUARD: f64 = 1e300;
const MAX_TAIL_PANELS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl QuadratureResult {
    fn zero() -> Self {
        Self {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
            converged: true,
        }
    }
}

// Kronrod 21-point abscissae (non-negative half) and weights; odd indices are
// the embedded 10-point Gauss abscissae.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_208_745_055,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// One Gauss-Kronrod panel: (kronrod value, |kronrod - gauss|).
fn gk21<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteIntegrand { x })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for i in 0..10 {
        let dx = half * XGK[i];
        let pair = eval(center - dx)? + eval(center + dx)?;
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive quadrature of `f` over `[lo, hi]` to absolute tolerance `tol`.
///
/// Returns `converged = false` when the evaluation budget runs out before the
/// error estimate drops below `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<QuadratureResult> {
    integrate_budget(&f, lo, hi, tol, EVAL_BUDGET)
}

pub(crate) fn integrate_budget<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    tol: f64,
    budget: usize,
) -> Result<QuadratureResult> {
    if lo == hi {
        return Ok(QuadratureResult::zero());
    }
    if hi < lo {
        let r = integrate_budget(f, hi, lo, tol, budget)?;
        return Ok(QuadratureResult {
            value: -r.value,
            ..r
        });
    }
    let (value, error) = gk21(f, lo, hi)?;
    let mut evaluations = 21;
    let mut total_err = error;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { lo, hi, value, error });
    while total_err > tol {
        if evaluations + 42 > budget {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // panel cannot be split further in floating point
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk21(f, worst.lo, mid)?;
        let (v2, e2) = gk21(f, mid, worst.hi)?;
        evaluations += 42;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel { lo: worst.lo, hi: mid, value: v1, error: e1 });
        heap.push(Panel { lo: mid, hi: worst.hi, value: v2, error: e2 });
    }
    // re-sum to shed accumulated cancellation from the running updates
    let (value, error_estimate) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Ok(QuadratureResult {
        value,
        error_estimate,
        evaluations,
        converged: error_estimate <= tol,
    })
}

/// Partial sums of an improper integral from `from` towards `endpoint`
/// (possibly infinite) over a geometric panel partition.
#[derive(Debug, Clone)]
pub struct TailSums {
    pub partial_sums: Vec<f64>,
    pub result: QuadratureResult,
}

/// Integrates `f` from `from` to `endpoint`, which may be infinite or a
/// singular finite point. Finite endpoints are approached by halving the
/// remaining distance; infinite ones by doubling panel widths.
pub fn integrate_to_boundary<F: Fn(f64) -> f64>(
    f: F,
    from: f64,
    endpoint: f64,
    tol: f64,
) -> Result<QuadratureResult> {
    tail_sums(&f, from, endpoint, tol).map(|t| t.result)
}

pub fn tail_sums<F: Fn(f64) -> f64>(f: &F, from: f64, endpoint: f64, tol: f64) -> Result<TailSums> {
    if from == endpoint {
        return Ok(TailSums {
            partial_sums: vec![0.0],
            result: QuadratureResult::zero(),
        });
    }
    let sign = if endpoint > from { 1.0 } else { -1.0 };
    let width0 = if endpoint.is_finite() {
        (endpoint - from).abs()
    } else {
        from.abs().max(1.0)
    };
    let panel_bounds = |k: usize| -> (f64, f64) {
        if endpoint.is_finite() {
            let d = endpoint - from;
            let a = endpoint - d * 0.5f64.powi(k as i32);
            let b = endpoint - d * 0.5f64.powi(k as i32 + 1);
            (a, b)
        } else {
            let a = from + sign * width0 * (2f64.powi(k as i32) - 1.0);
            let b = from + sign * width0 * (2f64.powi(k as i32 + 1) - 1.0);
            (a, b)
        }
    };

    let mut sum = 0.0;
    let mut err = 0.0;
    let mut evaluations = 0;
    let mut all_converged = true;
    let mut partial_sums = Vec::new();
    let mut contributions: Vec<f64> = Vec::new();
    let mut small_run = 0;
    let mut stabilized = false;
    for k in 0..MAX_TAIL_PANELS {
        let (a, b) = panel_bounds(k);
        if !a.is_finite() || !b.is_finite() || a == b {
            break;
        }
        // panels narrower than a few ulps can only sample the endpoint itself
        if endpoint.is_finite() && (b - a).abs() <= 8.0 * f64::EPSILON * endpoint.abs().max(1.0) {
            break;
        }
        let panel_tol = tol / (4.0 * ((k + 1) as f64).powi(2));
        let r = match integrate_budget(f, a, b, panel_tol, EVAL_BUDGET / 10) {
            Ok(r) => r,
            Err(Error::NonFiniteIntegrand { x }) if f(x).is_infinite() => {
                return Err(Error::DivergentTail { endpoint, partial: f64::INFINITY });
            }
            Err(e) => return Err(e),
        };
        evaluations += r.evaluations;
        all_converged &= r.converged;
        sum += r.value;
        err += r.error_estimate;
        partial_sums.push(sum);
        contributions.push(r.value);
        if !sum.is_finite() || sum.abs() > OVERFLOW_GUARD {
            return Err(Error::DivergentTail { endpoint, partial: sum });
        }
        let small = r.value.abs() <= 0.05 * tol || r.value.abs() <= 1e-15 * sum.abs();
        small_run = if small { small_run + 1 } else { 0 };
        if small_run >= 3 && k >= 4 {
            stabilized = true;
            break;
        }
    }
    // geometric extrapolation of whatever tail remains beyond the last panel
    let n = contributions.len();
    let mut tail_extra = 0.0;
    if !stabilized && n >= 3 {
        let c1 = contributions[n - 2];
        let c2 = contributions[n - 1];
        if c1 != 0.0 {
            let ratio = c2 / c1;
            if ratio.abs() < 0.9 {
                tail_extra = c2 * ratio / (1.0 - ratio);
                if tail_extra.abs() <= tol {
                    stabilized = true;
                }
            }
        }
        if c2 == 0.0 {
            stabilized = true;
        }
    }
    let value = sum + tail_extra;
    Ok(TailSums {
        partial_sums,
        result: QuadratureResult {
            value,
            error_estimate: err + tail_extra.abs(),
            evaluations,
            converged: stabilized && all_converged,
        },
    })
}

static GL_CACHE: [OnceLock<Vec<(f64, f64)>>; 65] = [const { OnceLock::new() }; 65];

/// Gauss-Legendre nodes and weights on `[-1, 1]` for `n` points (1..=64).
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    assert!((1..=64).contains(&n), "gauss_legendre supports 1..=64 points");
    GL_CACHE[n].get_or_init(|| legendre_rule(n))
}

fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut rule = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule[i] = (-x, w);
        rule[n - 1 - i] = (x, w);
    }
    rule
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Fixed-rule Gauss-Legendre quadrature over `[lo, hi]`.
pub fn gauss_fixed<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    gauss_legendre(n).iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn linear_integrand_is_exact() {
        let r = integrate(|x| x, 0.0, 1.0, 1e-10).unwrap();
        assert_abs_diff_eq!(r.value, 0.5, epsilon = 1e-10);
        assert!(r.converged);
    }

    #[test]
    fn degenerate_interval_is_zero() {
        let r = integrate(|x| x.exp(), 0.3, 0.3, 1e-10).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn speed_density_piece_matches_simpson() {
        let beta = -10.0f64;
        let f = |v: f64| v.powf(beta - 2.0) * (1.0 - v).powf(-beta - 2.0);
        let simpson = |n: usize| {
            let (a, b) = (0.25, 0.5);
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(a + i as f64 * h);
            }
            s * h / 3.0
        };
        // (1-v)^8 v^-12 expands into monomials, giving an exact antiderivative
        let binom = [1.0, 8.0, 28.0, 56.0, 70.0, 56.0, 28.0, 8.0, 1.0];
        let anti = |v: f64| {
            (0..=8)
                .map(|k| {
                    let p = k as i32 - 11;
                    binom[k] * (-1f64).powi(k as i32) * v.powi(p) / p as f64
                })
                .sum::<f64>()
        };
        let exact = anti(0.5) - anti(0.25);
        let r = integrate(f, 0.25, 0.5, 1e-9).unwrap();
        assert!(((r.value - exact) / exact).abs() < 1e-12, "{} vs {}", r.value, exact);
        // 64-subinterval Simpson is itself only good to ~2e-5 relative on this
        // integrand, so the 1e-8 comparison uses a refined Simpson grid
        let s64 = simpson(64);
        assert!(((r.value - s64) / s64).abs() < 1e-4);
        let fine = simpson(64 * 64);
        assert!(((r.value - fine) / fine).abs() < 1e-8, "{} vs {}", r.value, fine);
    }

    #[test]
    fn non_finite_integrand_reports_abscissa() {
        let err = integrate(|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, 1e-8).unwrap_err();
        assert!(matches!(err, Error::NonFiniteIntegrand { x } if x > 0.5));
    }

    #[test]
    fn inverse_square_tail() {
        let r = integrate_to_boundary(|x| x.powi(-2), 1.0, f64::INFINITY, 1e-9).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-8);
        assert!(r.converged);
    }

    #[test]
    fn singular_finite_endpoint() {
        let r = integrate_to_boundary(|x| 1.0 / (1.0 - x).sqrt(), 0.0, 1.0, 1e-9).unwrap();
        assert_abs_diff_eq!(r.value, 2.0, epsilon = 1e-7);
    }

    #[test]
    fn divergent_tail_is_reported() {
        let r = integrate_to_boundary(|x| x.exp(), 0.0, f64::INFINITY, 1e-9);
        assert!(matches!(r, Err(Error::DivergentTail { .. })));
        let slow = integrate_to_boundary(|x| 1.0 / x, 1.0, f64::INFINITY, 1e-9).unwrap();
        assert!(!slow.converged);
    }

    #[test]
    fn logistic_holding_speed_tail_is_finite() {
        // closed-form antiderivative of 100 (v - 1/2)^2 v^-12 (1-v)^8 is a
        // polynomial in w = (1-v)/v: v^-12 (1-v)^8 dv = -w^8 (1+w)^2 dw
        let m = |v: f64| v.powi(-12) * (1.0 - v).powi(8);
        let f = |v: f64| 100.0 * (v - 0.5).powi(2) * m(v);
        // 100 (v-1/2)^2 = 25 (1-w)^2/(1+w)^2 so the integrand in w is
        // 25 w^8 (1-w)^2 dw
        let anti = |w: f64| 25.0 * (w.powi(9) / 9.0 - 2.0 * w.powi(10) / 10.0 + w.powi(11) / 11.0);
        for &y in &[0.2, 0.35, 0.5, 0.7, 0.9] {
            let w = (1.0 - y) / y;
            let exact = anti(w) - anti(0.0);
            let r = integrate_to_boundary(f, y, 1.0, 1e-9).unwrap();
            assert!(r.converged);
            assert!(((r.value - exact) / exact).abs() < 1e-9, "y={y}: {} vs {}", r.value, exact);
        }
    }

    #[test]
    fn drifted_bm_cost_tail_matches_closed_form() {
        // integral of x exp(-2 mu x / s^2) over [y, inf)
        let (mu, s2) = (1.0f64, 1.0f64);
        let c = 2.0 * mu / s2;
        for &y in &[0.0, 0.5, 2.0] {
            let exact = (y / c + 1.0 / (c * c)) * (-c * y).exp();
            let r = integrate_to_boundary(|x: f64| x * (-c * x).exp(), y, f64::INFINITY, 1e-10).unwrap();
            assert!((r.value - exact).abs() < 1e-9, "{} vs {}", r.value, exact);
        }
    }

    #[test]
    fn legendre_rules_integrate_polynomials() {
        for n in [1usize, 5, 10, 16, 33] {
            let rule = gauss_legendre(n);
            let wsum: f64 = rule.iter().map(|p| p.1).sum();
            assert_abs_diff_eq!(wsum, 2.0, epsilon = 1e-13);
            let deg = 2 * n - 1;
            let v: f64 = rule.iter().map(|&(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert_abs_diff_eq!(v, exact, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn additivity(a in -3.0f64..0.0, d1 in 0.01f64..2.0, d2 in 0.01f64..2.0,
                      c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, c3 in -2.0f64..2.0) {
            let f = |x: f64| c0 + c1 * x + c2 * x * x + c3 * x * x * x;
            let b = a + d1;
            let c = b + d2;
            let whole = integrate(f, a, c, 1e-10).unwrap();
            let left = integrate(f, a, b, 1e-10).unwrap();
            let right = integrate(f, b, c, 1e-10).unwrap();
            let slack = whole.error_estimate + left.error_estimate + right.error_estimate + 1e-12 * (1.0 + whole.value.abs());
            prop_assert!((whole.value - left.value - right.value).abs() <= slack);
        }

        #[test]
        fn tail_partial_sums_are_monotone(p in 1.5f64..4.0, from in 0.5f64..3.0) {
            let t = tail_sums(&|x: f64| x.powf(-p), from, f64::INFINITY, 1e-9).unwrap();
            for w in t.partial_sums.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            let exact = from.powf(1.0 - p) / (p - 1.0);
            prop_assert!((t.result.value - exact).abs() < 1e-6 * exact.max(1.0));
        }
    }
}
