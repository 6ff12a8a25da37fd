//! Random-yield transition kernels `Q(.; y, z)`: integration, sampling and the
//! analytic MDG / ASC verdicts.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::diffusion::RightBehavior;
use crate::error::{Error, Result};
use crate::numerics::gauss_legendre;

/// Distribution of the delivered fraction on `[delta, 1]` before it is mapped
/// linearly onto `[y + delta (z - y), z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseDistribution {
    Uniform,
    /// Beta(alpha, beta) rescaled to `[delta, 1]`; both shapes must be >= 1 so
    /// the density stays bounded.
    Beta { alpha: f64, beta: f64 },
    /// Point masses at fractions `u in [delta, 1]`.
    Atoms { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YieldFamily {
    /// Non-deficient supply: the nominal level is delivered exactly.
    Dirac,
    BasePushforward { delta: f64, base: BaseDistribution },
    /// Uniform on `[y + (z/k)^j (z - y), z]`.
    ZSkewedUniform { j: u32, k: f64 },
}

const PANELS: usize = 3;
const PANEL_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdgReport {
    pub pass: bool,
    /// Fraction of the nominal order that is always delivered, when it does not
    /// depend on the order.
    pub guaranteed_fraction: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscReport {
    pub pass: bool,
    /// Infimum over `y in [d1, d2]` of `Q((z_tilde, b); y, z)` per grid level.
    pub infima: Vec<(f64, f64)>,
    pub tail_infimum: f64,
    pub delta: f64,
}

impl YieldFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            YieldFamily::Dirac => Ok(()),
            YieldFamily::BasePushforward { delta, base } => {
                if !(0.0..=1.0).contains(delta) {
                    return Err(Error::InvalidParameter(format!("yield delta {delta} outside [0, 1]")));
                }
                match base {
                    BaseDistribution::Uniform => Ok(()),
                    BaseDistribution::Beta { alpha, beta } => {
                        if *alpha >= 1.0 && *beta >= 1.0 {
                            Ok(())
                        } else {
                            Err(Error::InvalidParameter(format!(
                                "beta base needs shapes >= 1, got ({alpha}, {beta})"
                            )))
                        }
                    }
                    BaseDistribution::Atoms { points } => {
                        let total: f64 = points.iter().map(|p| p.1).sum();
                        if points.is_empty() || (total - 1.0).abs() > 1e-12 {
                            return Err(Error::InvalidParameter("atom weights must sum to 1".into()));
                        }
                        if points.iter().any(|&(u, w)| u < *delta || u > 1.0 || w < 0.0) {
                            return Err(Error::InvalidParameter(format!(
                                "atoms must lie in [{delta}, 1] with nonnegative weights"
                            )));
                        }
                        Ok(())
                    }
                }
            }
            YieldFamily::ZSkewedUniform { j, k } => {
                if *j == 0 || !(*k > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "z-skewed uniform needs j >= 1 and k > 0, got j={j}, k={k}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Capacity parameter tied to the right endpoint, if the kind has one.
    pub fn capacity(&self) -> Option<f64> {
        match self {
            YieldFamily::ZSkewedUniform { k, .. } => Some(*k),
            _ => None,
        }
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self, YieldFamily::Dirac)
    }

    /// Support `[lo, hi]` of `Q(.; y, z)`.
    pub fn support(&self, y: f64, z: f64) -> (f64, f64) {
        if y == z {
            return (y, y);
        }
        match self {
            YieldFamily::Dirac => (z, z),
            YieldFamily::BasePushforward { delta, base } => {
                let map = |u: f64| y + u * (z - y);
                match base {
                    BaseDistribution::Atoms { points } => {
                        let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
                        let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
                        (map(lo), map(hi))
                    }
                    _ => (map(*delta), z),
                }
            }
            YieldFamily::ZSkewedUniform { .. } => (self.skew_left(y, z), z),
        }
    }

    fn skew_left(&self, y: f64, z: f64) -> f64 {
        match self {
            YieldFamily::ZSkewedUniform { j, k } => {
                let w = (z / k).powi(*j as i32);
                (1.0 - w) * y + w * z
            }
            _ => y,
        }
    }

    /// Quadrature nodes `(v, weight)` for `Q(.; y, z)` restricted to `(c, d]`.
    /// Weights sum to the kernel mass of the window.
    pub fn nodes_in(&self, y: f64, z: f64, c: f64, d: f64) -> Result<Vec<(f64, f64)>> {
        if y > z {
            return Err(Error::OutOfRegion { y, z });
        }
        let inside = |v: f64| v > c && v <= d;
        if y == z {
            return Ok(if inside(y) { vec![(y, 1.0)] } else { vec![] });
        }
        match self {
            YieldFamily::Dirac => Ok(if inside(z) { vec![(z, 1.0)] } else { vec![] }),
            YieldFamily::BasePushforward { delta, base } => {
                let span = z - y;
                match base {
                    BaseDistribution::Atoms { points } => Ok(points
                        .iter()
                        .map(|&(u, w)| (y + u * span, w))
                        .filter(|&(v, w)| w > 0.0 && inside(v))
                        .collect()),
                    BaseDistribution::Uniform => {
                        let (lo, hi) = (y + delta * span, z);
                        if hi == lo {
                            return Ok(if inside(z) { vec![(z, 1.0)] } else { vec![] });
                        }
                        Ok(uniform_nodes(lo, hi, c, d))
                    }
                    BaseDistribution::Beta { alpha, beta } => {
                        let dist = Beta::new(*alpha, *beta)
                            .map_err(|e| Error::InvalidParameter(format!("beta base: {e}")))?;
                        let (lo, hi) = (y + delta * span, z);
                        if hi == lo {
                            return Ok(if inside(z) { vec![(z, 1.0)] } else { vec![] });
                        }
                        let (a, b) = (lo.max(c), hi.min(d));
                        if !(a < b) {
                            return Ok(vec![]);
                        }
                        // integrate in the cdf variable so the density never
                        // enters the rule
                        let width = hi - lo;
                        let (ua, ub) = (dist.cdf((a - lo) / width), dist.cdf((b - lo) / width));
                        Ok(graded_nodes(ua, ub)
                            .into_iter()
                            .map(|(u, w)| (lo + width * dist.inverse_cdf(u), w))
                            .collect())
                    }
                }
            }
            YieldFamily::ZSkewedUniform { .. } => {
                let lo = self.skew_left(y, z);
                if lo >= z {
                    return Ok(if inside(z) { vec![(z, 1.0)] } else { vec![] });
                }
                Ok(uniform_nodes(lo, z, c, d))
            }
        }
    }

    /// Quadrature nodes covering the whole kernel.
    pub fn nodes(&self, y: f64, z: f64) -> Result<Vec<(f64, f64)>> {
        self.nodes_in(y, z, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `int g(v) Q(dv; y, z)`.
    pub fn integrate_against_q<G: Fn(f64) -> f64>(&self, g: G, y: f64, z: f64) -> Result<f64> {
        Ok(self.nodes(y, z)?.iter().map(|&(v, w)| w * g(v)).sum())
    }

    /// `int_{(c, d]} g(v) Q(dv; y, z)`.
    pub fn integrate_restricted<G: Fn(f64) -> f64>(&self, g: G, y: f64, z: f64, c: f64, d: f64) -> Result<f64> {
        Ok(self.nodes_in(y, z, c, d)?.iter().map(|&(v, w)| w * g(v)).sum())
    }

    /// `Q((-inf, v]; y, z)`.
    pub fn cdf(&self, v: f64, y: f64, z: f64) -> Result<f64> {
        if y > z {
            return Err(Error::OutOfRegion { y, z });
        }
        let (lo, hi) = self.support(y, z);
        if v < lo {
            return Ok(0.0);
        }
        if v >= hi {
            return Ok(1.0);
        }
        Ok(match self {
            YieldFamily::Dirac => unreachable!("dirac support is a point"),
            YieldFamily::ZSkewedUniform { .. } => (v - lo) / (hi - lo),
            YieldFamily::BasePushforward { delta, base } => {
                let u = (v - y) / (z - y);
                match base {
                    BaseDistribution::Uniform => (u - delta) / (1.0 - delta),
                    BaseDistribution::Beta { alpha, beta } => {
                        let dist = Beta::new(*alpha, *beta)
                            .map_err(|e| Error::InvalidParameter(format!("beta base: {e}")))?;
                        dist.cdf(((u - delta) / (1.0 - delta)).clamp(0.0, 1.0))
                    }
                    BaseDistribution::Atoms { points } => {
                        points.iter().filter(|p| y + p.0 * (z - y) <= v).map(|p| p.1).sum()
                    }
                }
            }
        })
    }

    /// `Q((t, inf); y, z)`.
    pub fn prob_above(&self, t: f64, y: f64, z: f64) -> Result<f64> {
        Ok(1.0 - self.cdf(t, y, z)?)
    }

    /// Mean delivered level.
    pub fn mean(&self, y: f64, z: f64) -> Result<f64> {
        if y > z {
            return Err(Error::OutOfRegion { y, z });
        }
        if y == z {
            return Ok(y);
        }
        match self {
            YieldFamily::Dirac => Ok(z),
            YieldFamily::ZSkewedUniform { .. } => Ok(0.5 * (self.skew_left(y, z) + z)),
            YieldFamily::BasePushforward { delta, base } => {
                let u_mean = match base {
                    BaseDistribution::Uniform => 0.5 * (delta + 1.0),
                    BaseDistribution::Beta { alpha, beta } => delta + (1.0 - delta) * alpha / (alpha + beta),
                    BaseDistribution::Atoms { points } => points.iter().map(|p| p.0 * p.1).sum(),
                };
                Ok(y + u_mean * (z - y))
            }
        }
    }

    /// Draws a delivered level from `Q(.; y, z)` by inverting the cdf.
    pub fn sample_yield<R: Rng + ?Sized>(&self, y: f64, z: f64, rng: &mut R) -> f64 {
        if y >= z {
            return y;
        }
        let u: f64 = rng.random();
        match self {
            YieldFamily::Dirac => z,
            YieldFamily::ZSkewedUniform { .. } => {
                let lo = self.skew_left(y, z);
                // 1 - u lies in (0, 1], keeping draws inside (lo, z]
                z - (1.0 - u) * (z - lo)
            }
            YieldFamily::BasePushforward { delta, base } => {
                let frac = match base {
                    BaseDistribution::Uniform => 1.0 - (1.0 - u) * (1.0 - delta),
                    BaseDistribution::Beta { alpha, beta } => {
                        let dist = Beta::new(*alpha, *beta).expect("validated beta shapes");
                        delta + (1.0 - delta) * dist.inverse_cdf(u)
                    }
                    BaseDistribution::Atoms { points } => {
                        let mut acc = 0.0;
                        let mut pick = points[points.len() - 1].0;
                        for &(p, w) in points {
                            acc += w;
                            if u < acc {
                                pick = p;
                                break;
                            }
                        }
                        pick
                    }
                };
                let v = y + frac * (z - y);
                // a zero fraction would deliver nothing; nudge into (y, z]
                if v <= y {
                    f64::min(z, y + f64::EPSILON * (z - y).max(y.abs()))
                } else {
                    v.min(z)
                }
            }
        }
    }

    /// Minimal delivery guaranty: the kernel support stays strictly above `y`.
    pub fn check_mdg(&self) -> MdgReport {
        match self {
            YieldFamily::Dirac => MdgReport {
                pass: true,
                guaranteed_fraction: Some(1.0),
                detail: "point mass at the nominal level".into(),
            },
            YieldFamily::BasePushforward { delta, base } => {
                let floor = match base {
                    BaseDistribution::Atoms { points } => {
                        points.iter().filter(|p| p.1 > 0.0).map(|p| p.0).fold(f64::INFINITY, f64::min)
                    }
                    _ => *delta,
                };
                MdgReport {
                    pass: floor > 0.0,
                    guaranteed_fraction: Some(floor),
                    detail: if floor > 0.0 {
                        format!("support starts at y + {floor}(z - y)")
                    } else {
                        "support reaches the order-from level y".into()
                    },
                }
            }
            YieldFamily::ZSkewedUniform { j, k } => MdgReport {
                pass: true,
                guaranteed_fraction: None,
                detail: format!("support starts at y + (z/{k})^{j}(z - y) > y for z > 0"),
            },
        }
    }

    /// Assured supply commitment along `z_grid` approaching the right endpoint.
    pub fn check_asc(
        &self,
        d1: f64,
        d2: f64,
        z_tilde: f64,
        z_grid: &[f64],
        right: (f64, RightBehavior),
    ) -> Result<AscReport> {
        let (b, behavior) = right;
        if behavior == RightBehavior::Entrance {
            return Err(Error::NotApplicable("the right endpoint is an entrance boundary".into()));
        }
        if !(d1 < d2 && d2 < z_tilde && z_tilde < b) {
            return Err(Error::InvalidParameter(format!(
                "ASC probe needs d1 < d2 < z_tilde < b, got {d1}, {d2}, {z_tilde}, {b}"
            )));
        }
        if z_grid.is_empty() {
            return Err(Error::InvalidParameter("ASC probe needs a nonempty z grid".into()));
        }
        let ys: Vec<f64> = (0..=20).map(|i| d1 + (d2 - d1) * i as f64 / 20.0).collect();
        let mut infima = Vec::with_capacity(z_grid.len());
        for &z in z_grid {
            let mut inf = f64::INFINITY;
            for &y in &ys {
                let p = if z <= y { 0.0 } else { self.prob_above(z_tilde, y, z)? };
                inf = inf.min(p);
            }
            infima.push((z, inf));
        }
        let n = infima.len();
        let tail = &infima[n.saturating_sub(3)..];
        let tail_infimum = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let last = infima[n - 1].1;
        let settled = tail.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-12 || (w[1].1 - w[0].1).abs() <= 0.05 * last);
        let pass = tail_infimum > 1e-3 && settled;
        Ok(AscReport {
            pass,
            infima,
            tail_infimum,
            delta: if pass { tail_infimum } else { 0.0 },
        })
    }
}

fn panel_nodes(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let rule = gauss_legendre(PANEL_POINTS);
    let h = (b - a) / PANELS as f64;
    (0..PANELS).flat_map(move |p| {
        let lo = a + p as f64 * h;
        let c = lo + 0.5 * h;
        rule.iter().map(move |&(t, w)| (c + 0.5 * h * t, 0.5 * h * w))
    })
}

/// Gauss nodes on `[a, b] within [0, 1]` with panels graded towards 0 and 1,
/// where inverse cdfs of Beta laws have algebraic singularities.
fn graded_nodes(a: f64, b: f64) -> Vec<(f64, f64)> {
    const BREAKS: [f64; 11] = [0.0, 1e-6, 1e-4, 1e-2, 0.1, 0.5, 0.9, 0.99, 1.0 - 1e-4, 1.0 - 1e-6, 1.0];
    let rule = gauss_legendre(PANEL_POINTS);
    let mut out = Vec::new();
    for w in BREAKS.windows(2) {
        let (lo, hi) = (w[0].max(a), w[1].min(b));
        if lo < hi {
            let c = 0.5 * (lo + hi);
            let h = 0.5 * (hi - lo);
            out.extend(rule.iter().map(|&(t, wt)| (c + h * t, h * wt)));
        }
    }
    out
}

/// Nodes of the uniform law on `[lo, hi]` restricted to `(c, d]`.
fn uniform_nodes(lo: f64, hi: f64, c: f64, d: f64) -> Vec<(f64, f64)> {
    let (a, b) = (lo.max(c), hi.min(d));
    if !(a < b) {
        return vec![];
    }
    let dens = 1.0 / (hi - lo);
    panel_nodes(a, b).map(|(v, w)| (v, w * dens)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zskew() -> YieldFamily {
        YieldFamily::ZSkewedUniform { j: 10, k: 1.0 }
    }

    fn uniform(delta: f64) -> YieldFamily {
        YieldFamily::BasePushforward {
            delta,
            base: BaseDistribution::Uniform,
        }
    }

    #[test]
    fn dirac_integrates_to_value_at_z() {
        let f = YieldFamily::Dirac;
        assert_eq!(f.integrate_against_q(|v| v * v, 0.2, 0.7).unwrap(), 0.7 * 0.7);
        assert_eq!(f.integrate_against_q(|v| v * v, 0.3, 0.3).unwrap(), 0.09);
    }

    #[test]
    fn zskew_mean_supply_matches_table() {
        let (y, z) = (0.384973, 0.6575);
        let mean = zskew().integrate_against_q(|v| v, y, z).unwrap();
        assert!((mean - y - 0.138321).abs() < 1e-6, "{}", mean - y);
        assert!((zskew().mean(y, z).unwrap() - mean).abs() < 1e-14);
    }

    #[test]
    fn pushforward_uniform_mean_is_closed_form() {
        let f = uniform(0.3);
        let (y, z) = (-1.0, 2.5);
        let got = f.integrate_against_q(|v| v, y, z).unwrap();
        assert!((got - (y + (z - y) * 1.3 / 2.0)).abs() < 1e-13);
    }

    #[test]
    fn out_of_region_is_rejected() {
        assert!(matches!(
            zskew().integrate_against_q(|v| v, 0.6, 0.5),
            Err(Error::OutOfRegion { .. })
        ));
    }

    #[test]
    fn samples_stay_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = uniform(0.3);
        let (y, z) = (1.0, 2.0);
        let mut min = f64::INFINITY;
        for _ in 0..100_000 {
            let v = f.sample_yield(y, z, &mut rng);
            assert!(v > y && v <= z);
            min = min.min(v);
        }
        assert!(min >= y + 0.3 * (z - y) - 1e-12);
        for _ in 0..1000 {
            assert_eq!(YieldFamily::Dirac.sample_yield(y, z, &mut rng), z);
        }
    }

    #[test]
    fn zskew_samples_match_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = zskew();
        let (y, z) = (0.35, 0.8);
        let mut xs: Vec<f64> = (0..100_000).map(|_| f.sample_yield(y, z, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = f.cdf(v, y, z).unwrap();
                (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn beta_base_has_unit_mass_and_mean() {
        let f = YieldFamily::BasePushforward {
            delta: 0.2,
            base: BaseDistribution::Beta { alpha: 2.0, beta: 3.0 },
        };
        let (y, z) = (0.0, 10.0);
        assert!((f.integrate_against_q(|_| 1.0, y, z).unwrap() - 1.0).abs() < 1e-12);
        let m = f.integrate_against_q(|v| v, y, z).unwrap();
        assert!((m - f.mean(y, z).unwrap()).abs() < 1e-6 * 10.0, "{m}");
    }

    #[test]
    fn mdg_verdicts() {
        let r = uniform(0.3).check_mdg();
        assert!(r.pass);
        assert_eq!(r.guaranteed_fraction, Some(0.3));
        assert!(!uniform(0.0).check_mdg().pass);
        assert!(zskew().check_mdg().pass);
        assert!(YieldFamily::Dirac.check_mdg().pass);
    }

    #[test]
    fn asc_verdicts() {
        let grid = [0.95, 0.99, 0.999];
        let r = zskew().check_asc(0.3, 0.5, 0.9, &grid, (1.0, RightBehavior::Natural)).unwrap();
        assert!(r.pass);
        assert!(r.infima[2].1 > 0.99);

        let f = uniform(0.5);
        let zs: Vec<f64> = (1..=8).map(|k| 10f64.powi(k)).collect();
        let r = f.check_asc(0.0, 1.0, 5.0, &zs, (f64::INFINITY, RightBehavior::Natural)).unwrap();
        assert!(r.pass);
        // Q((zt, inf); y, z) = (z - max(zt, y + delta (z - y))) / ((1 - delta)(z - y))
        let (y, z, zt, d) = (1.0, 1e3, 5.0, 0.5);
        let expect = ((z - f64::max(zt, y + d * (z - y))) / ((1.0 - d) * (z - y))).min(1.0);
        assert!((f.prob_above(zt, y, z).unwrap() - expect).abs() < 1e-12);

        let r = YieldFamily::Dirac.check_asc(0.3, 0.5, 0.9, &grid, (1.0, RightBehavior::Natural)).unwrap();
        assert_eq!(r.delta, 1.0);
        assert!(matches!(
            YieldFamily::Dirac.check_asc(0.3, 0.5, 0.9, &grid, (1.0, RightBehavior::Entrance)),
            Err(Error::NotApplicable(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn families() -> Vec<YieldFamily> {
            vec![
                YieldFamily::Dirac,
                uniform(0.25),
                zskew(),
                YieldFamily::BasePushforward {
                    delta: 0.1,
                    base: BaseDistribution::Beta { alpha: 1.5, beta: 2.0 },
                },
                YieldFamily::BasePushforward {
                    delta: 0.2,
                    base: BaseDistribution::Atoms {
                        points: vec![(0.2, 0.25), (0.6, 0.25), (1.0, 0.5)],
                    },
                },
            ]
        }

        proptest! {
            #[test]
            fn unit_mass_and_support(y in 0.01f64..0.98, frac in 0.0f64..1.0) {
                let z = y + frac * (0.99 - y);
                for f in families() {
                    let total = f.integrate_against_q(|_| 1.0, y, z).unwrap();
                    prop_assert!((total - 1.0).abs() < 1e-10);
                    if z > y {
                        let inside = f.integrate_restricted(|_| 1.0, y, z, y, z).unwrap();
                        prop_assert!((inside - 1.0).abs() < 1e-10);
                    }
                }
            }

            #[test]
            fn weak_continuity(y in 0.05f64..0.5, gap in 0.0f64..0.4) {
                let z = y + gap;
                for f in families() {
                    let g = |v: f64| (3.0 * v).sin();
                    let target = f.integrate_against_q(g, y, z).unwrap();
                    let h = 1e-9;
                    let near = f.integrate_against_q(g, y + h * 0.5, z + h).unwrap();
                    prop_assert!((near - target).abs() < 1e-6);
                }
            }
        }
    }
}
