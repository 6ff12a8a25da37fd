//! Numeric audit of the standing conditions on dynamics, yields and costs,
//! and of the boundary asymptotics that drive existence of an optimizer.

use serde::{Deserialize, Serialize};

use crate::diffusion::{build_scale_speed, classify_boundary, Endpoint, FellerClass, LeftBehavior, RightBehavior};
use crate::error::{Error, Result};
use crate::functionals::frak_p;
use crate::numerics::integrate_to_boundary;
use crate::optimizer::{OptimizationResult, SearchBox};
use crate::problem::ProblemSpec;

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionId {
    C2_1,
    C2_2_MDG,
    C2_2_weak_cont,
    C2_2_ASC,
    C2_3,
    C2_4,
    C5_1,
}

impl ConditionId {
    pub const ALL: [ConditionId; 7] = [
        ConditionId::C2_1,
        ConditionId::C2_2_MDG,
        ConditionId::C2_2_weak_cont,
        ConditionId::C2_2_ASC,
        ConditionId::C2_3,
        ConditionId::C2_4,
        ConditionId::C5_1,
    ];

    pub fn needs_optimum(self) -> bool {
        matches!(self, ConditionId::C2_4 | ConditionId::C5_1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Combination of sub-verdicts: any failure fails, otherwise any doubt
    /// stays inconclusive.
    fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
            _ => Verdict::Pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub probe: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition_id: ConditionId,
    pub verdict: Verdict,
    pub evidence: Vec<Evidence>,
    pub notes: String,
}

struct Builder {
    id: ConditionId,
    verdict: Verdict,
    evidence: Vec<Evidence>,
    notes: Vec<String>,
}

impl Builder {
    fn new(id: ConditionId) -> Self {
        Self {
            id,
            verdict: Verdict::Pass,
            evidence: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn probe(&mut self, probe: impl Into<String>, value: f64) {
        self.evidence.push(Evidence {
            probe: probe.into(),
            value,
        });
    }

    fn judge(&mut self, v: Verdict, note: impl Into<String>) {
        self.verdict = self.verdict.and(v);
        let n = note.into();
        if !n.is_empty() {
            self.notes.push(n);
        }
    }

    fn finish(mut self) -> ConditionReport {
        if self.evidence.is_empty() {
            self.probe("no numeric probe applicable", f64::NAN);
            self.verdict = self.verdict.and(Verdict::Inconclusive);
        }
        ConditionReport {
            condition_id: self.id,
            verdict: self.verdict,
            evidence: self.evidence,
            notes: self.notes.join("; "),
        }
    }
}

/// Runs every condition probe. `C2_4` and `C5_1` need the optimum.
pub fn verify_all(spec: &ProblemSpec, opt: Option<&OptimizationResult>) -> Result<Vec<ConditionReport>> {
    verify(spec, &ConditionId::ALL, opt)
}

pub fn verify(spec: &ProblemSpec, ids: &[ConditionId], opt: Option<&OptimizationResult>) -> Result<Vec<ConditionReport>> {
    if opt.is_none() {
        if let Some(id) = ids.iter().find(|i| i.needs_optimum()) {
            return Err(Error::MissingOptimum(match id {
                ConditionId::C2_4 => "C2_4",
                _ => "C5_1",
            }));
        }
    }
    ids.iter()
        .map(|&id| {
            Ok(match id {
                ConditionId::C2_1 => c2_1(spec),
                ConditionId::C2_2_MDG => c2_2_mdg(spec),
                ConditionId::C2_2_weak_cont => c2_2_weak(spec)?,
                ConditionId::C2_2_ASC => c2_2_asc(spec),
                ConditionId::C2_3 => c2_3(spec),
                ConditionId::C2_4 => c2_4(spec, opt.expect("checked above")),
                ConditionId::C5_1 => c5_1(spec, opt.expect("checked above")),
            })
        })
        .collect()
}

/// Characteristic distances from the anchor to each side.
fn side_lengths(spec: &ProblemSpec) -> (f64, f64) {
    let (a, b) = spec.diffusion().interval();
    let x0 = spec.diffusion().anchor();
    let scale = x0.abs().max(1.0);
    (
        if a.is_finite() { x0 - a } else { scale },
        if b.is_finite() { b - x0 } else { scale },
    )
}

fn c2_1(spec: &ProblemSpec) -> ConditionReport {
    let mut r = Builder::new(ConditionId::C2_1);
    let model = spec.diffusion();
    if model.is_deterministic() {
        r.judge(Verdict::Inconclusive, "zero dispersion: scale and speed are undefined");
        return r.finish();
    }
    let ss = match build_scale_speed(model) {
        Ok(s) => s,
        Err(e) => {
            r.judge(Verdict::Inconclusive, format!("scale/speed construction failed: {e}"));
            return r.finish();
        }
    };
    let (a, b) = model.interval();
    let x0 = model.anchor();
    // (a): densities are finite and positive along an interior grid
    let (l, rlen) = side_lengths(spec);
    let mut min_density = f64::INFINITY;
    for i in 1..40 {
        let t = i as f64 / 40.0;
        let x = (x0 - l * 0.95) + t * (l + rlen) * 0.95;
        let x = x.clamp(if a.is_finite() { a + 1e-9 } else { x }, if b.is_finite() { b - 1e-9 } else { x });
        if let (Ok(s), Ok(m)) = (ss.scale_density(x), ss.speed_density(x)) {
            let v = s.min(m);
            min_density = min_density.min(if v.is_finite() { v } else { -1.0 });
        }
    }
    r.probe("min of scale and speed densities on interior grid", min_density);
    if min_density > 0.0 {
        r.judge(Verdict::Pass, "(a) pass (probe evidence): densities finite and positive on the probe grid");
    } else {
        r.judge(Verdict::Fail, "(a) a density vanished or blew up inside the interval");
    }
    for which in [Endpoint::Left, Endpoint::Right] {
        match classify_boundary(model, &ss, which) {
            Ok(c) => {
                r.probe(format!("{} endpoint attracting (1 = yes)", which.name()), c.attracting as u8 as f64);
                let want_attracting = which == Endpoint::Left;
                if c.attracting != want_attracting {
                    r.judge(
                        Verdict::Fail,
                        format!(
                            "(b) {} endpoint is {}attracting",
                            which.name(),
                            if c.attracting { "" } else { "non-" }
                        ),
                    );
                }
                if which == Endpoint::Right && c.feller_class == FellerClass::Natural {
                    r.probe("right natural: M[x0, b) finite (1 = yes)", c.speed_tail_finite as u8 as f64);
                    if !c.speed_tail_finite {
                        r.judge(Verdict::Fail, "(b) M[y, b) is infinite at the natural right endpoint");
                    }
                }
                r.judge(Verdict::Pass, format!("{} endpoint classified {}", which.name(), c.feller_class));
            }
            Err(e @ Error::ClassificationMismatch { .. }) => r.judge(Verdict::Fail, e.to_string()),
            Err(e) => r.judge(Verdict::Inconclusive, e.to_string()),
        }
    }
    let _ = (a, b);
    r.finish()
}

fn c2_2_mdg(spec: &ProblemSpec) -> ConditionReport {
    let mut r = Builder::new(ConditionId::C2_2_MDG);
    let rep = spec.yields().check_mdg();
    r.probe(
        "guaranteed delivered fraction",
        rep.guaranteed_fraction.unwrap_or(f64::NAN),
    );
    // sampled lower support gap relative to the order size
    let (l, rl) = side_lengths(spec);
    let x0 = spec.diffusion().anchor();
    let mut min_gap = f64::INFINITY;
    for &(fy, fz) in &[(0.5, 0.2), (0.2, 0.5), (0.05, 0.05), (0.8, 0.8)] {
        let (y, z) = (x0 - fy * l, x0 + fz * rl);
        let (lo, _) = spec.yields().support(y, z);
        min_gap = min_gap.min((lo - y) / (z - y));
    }
    r.probe("min relative gap between support and y on probe pairs", min_gap);
    r.judge(if rep.pass && min_gap > 0.0 { Verdict::Pass } else { Verdict::Fail }, rep.detail);
    r.finish()
}

/// Wasserstein-1 distance between two kernels, from their cdfs.
fn w1(spec: &ProblemSpec, p: (f64, f64), q: (f64, f64)) -> Result<f64> {
    let k = spec.yields();
    let (lo1, hi1) = k.support(p.0, p.1);
    let (lo2, hi2) = k.support(q.0, q.1);
    let (lo, hi) = (lo1.min(lo2), hi1.max(hi2));
    if hi <= lo {
        return Ok(0.0);
    }
    let n = 2000;
    let h = (hi - lo) / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let v = lo + (i as f64 + 0.5) * h;
        s += (k.cdf(v, p.0, p.1)? - k.cdf(v, q.0, q.1)?).abs() * h;
    }
    Ok(s)
}

fn c2_2_weak(spec: &ProblemSpec) -> Result<ConditionReport> {
    let mut r = Builder::new(ConditionId::C2_2_weak_cont);
    let (l, rl) = side_lengths(spec);
    let x0 = spec.diffusion().anchor();
    let targets = [(x0 - 0.3 * l, x0 + 0.3 * rl), (x0, x0), (x0 - 0.1 * l, x0 - 0.1 * l)];
    let mut verdict = Verdict::Pass;
    for &(y, z) in &targets {
        let eps0 = 0.05 * l.min(rl);
        let mut dists = Vec::new();
        for n in 0..12 {
            let e = eps0 * 0.5f64.powi(n);
            // approach from inside the closed region, alternating sides in y
            let yn = if n % 2 == 0 { y - e } else { y - 0.5 * e };
            let zn = z + e;
            dists.push(w1(spec, (yn, zn), (y, z))?);
        }
        let last = *dists.last().expect("nonempty");
        r.probe(format!("W1 distance to Q(.; {y:.6}, {z:.6}) at perturbation {:.3e}", eps0 * 0.5f64.powi(11)), last);
        let shrinking = dists.windows(2).all(|w| w[1] <= w[0] * 1.000001 + 1e-15);
        if !(last < 1e-3 * eps0.max(1e-12) * 64.0 && shrinking) {
            verdict = verdict.and(Verdict::Inconclusive);
        }
    }
    r.judge(
        verdict,
        if verdict == Verdict::Pass {
            "pass (probe evidence): W1 distances shrink with the perturbation, including diagonal targets"
        } else {
            "W1 distances did not shrink cleanly"
        },
    );
    Ok(r.finish())
}

fn asc_probe(spec: &ProblemSpec) -> Option<(f64, f64, Vec<f64>, Vec<f64>)> {
    let (_, b) = spec.diffusion().interval();
    let x0 = spec.diffusion().anchor();
    let (l, rl) = side_lengths(spec);
    let (d1, d2) = (x0 - 0.4 * l, x0);
    let tildes = if b.is_finite() {
        vec![x0 + 0.4 * rl, x0 + 0.8 * rl]
    } else {
        vec![x0 + 2.0 * rl, x0 + 10.0 * rl]
    };
    let z_grid: Vec<f64> = (1..=40)
        .map(|k| {
            let zt = tildes[tildes.len() - 1];
            if b.is_finite() {
                b - (b - zt) * 0.5f64.powi(k)
            } else {
                zt + rl * 2f64.powi(k)
            }
        })
        .filter(|&z| z < b)
        .collect();
    Some((d1, d2, tildes, z_grid))
}

fn c2_2_asc(spec: &ProblemSpec) -> ConditionReport {
    let mut r = Builder::new(ConditionId::C2_2_ASC);
    let model = spec.diffusion();
    let (_, b) = model.interval();
    if model.right_behavior() == RightBehavior::Entrance {
        r.probe("right endpoint natural (1 = yes)", 0.0);
        r.judge(Verdict::Pass, "right endpoint is entrance; the commitment is only required at natural ends");
        return r.finish();
    }
    let Some((d1, d2, tildes, z_grid)) = asc_probe(spec) else {
        r.judge(Verdict::Inconclusive, "no probe grid");
        return r.finish();
    };
    for zt in tildes {
        match spec.yields().check_asc(d1, d2, zt, &z_grid, (b, model.right_behavior())) {
            Ok(rep) => {
                r.probe(format!("liminf inf_y Q((z~, b); y, z) for z~ = {zt:.6}"), rep.tail_infimum);
                r.judge(
                    if rep.pass { Verdict::Pass } else { Verdict::Fail },
                    if rep.pass { "" } else { "delivery probability above z~ vanishes as z -> b" },
                );
            }
            Err(e) => r.judge(Verdict::Inconclusive, e.to_string()),
        }
    }
    r.finish()
}

fn c2_3(spec: &ProblemSpec) -> ConditionReport {
    let mut r = Builder::new(ConditionId::C2_3);
    let model = spec.diffusion();
    let costs = spec.costs();
    let (a, b) = model.interval();
    let x0 = model.anchor();
    let (l, rl) = side_lengths(spec);
    // (a) nonnegativity on a grid and infinite limits at infinite ends
    let mut min_c0 = f64::INFINITY;
    for i in 0..=200 {
        let t = i as f64 / 200.0;
        let x = x0 - 0.999 * l + t * 0.999 * (l + rl);
        min_c0 = min_c0.min(costs.holding(x));
    }
    r.probe("min c0 on probe grid", min_c0);
    if !(min_c0 >= 0.0) {
        r.judge(Verdict::Fail, "c0 takes negative values");
    }
    let (ca, cb) = costs.holding_limits();
    r.probe("declared c0(a)", ca);
    r.probe("declared c0(b)", cb);
    if (a.is_infinite() && ca.is_finite()) || (b.is_infinite() && cb.is_finite()) {
        r.judge(Verdict::Fail, "c0 must be infinite at infinite endpoints");
    }
    for (end, declared, name) in [(a, ca, "a"), (b, cb, "b")] {
        let near = if end.is_finite() {
            end + (x0 - end) * 1e-7
        } else {
            x0 + end.signum() * 1e7 * x0.abs().max(1.0)
        };
        let v = costs.holding(near);
        r.probe(format!("c0 near {name}"), v);
        let ok = if declared.is_infinite() {
            v > 1e3 * costs.holding(x0).abs().max(1.0) || (end.is_finite() && v > 1e6)
        } else {
            (v - declared).abs() <= 1e-3 * declared.abs().max(1.0)
        };
        if !ok {
            r.judge(Verdict::Inconclusive, format!("c0 near {name} does not approach the declared limit"));
        }
    }
    // (a) integrability of c0 against the speed measure towards b
    if model.is_deterministic() {
        r.judge(Verdict::Inconclusive, "zero dispersion: speed measure undefined");
    } else {
        match build_scale_speed(model) {
            Ok(ss) => {
                let f = |v: f64| costs.holding(v) * ss.speed_density(v).unwrap_or(f64::NAN);
                match integrate_to_boundary(f, x0, b, 1e-9) {
                    Ok(q) => {
                        r.probe("int_{x0}^b c0 dM", q.value);
                        if !q.value.is_finite() {
                            r.judge(Verdict::Fail, "c0 is not M-integrable towards b");
                        }
                    }
                    Err(e @ (Error::DivergentTail { .. } | Error::NonFiniteIntegrand { .. })) => {
                        r.probe("int_{x0}^b c0 dM", f64::INFINITY);
                        r.judge(Verdict::Fail, format!("c0 is not M-integrable towards b: {e}"));
                    }
                    Err(e) => r.judge(Verdict::Inconclusive, e.to_string()),
                }
            }
            Err(e) => r.judge(Verdict::Inconclusive, e.to_string()),
        }
    }
    // (b) c1 >= k1 on a lattice of the closed region, diagonal included
    let k1 = costs.fixed_cost_k1();
    let mut min_c1 = f64::INFINITY;
    let lo = if a.is_finite() { a + 1e-6 * (x0 - a) } else { x0 - 5.0 * l };
    let hi = if b.is_finite() { b - 1e-6 * (b - x0) } else { x0 + 5.0 * rl };
    let n = 60;
    for i in 0..=n {
        for j in i..=n {
            let y = lo + (hi - lo) * i as f64 / n as f64;
            let z = lo + (hi - lo) * j as f64 / n as f64;
            min_c1 = min_c1.min(costs.ordering(y, z));
        }
    }
    r.probe("k1", k1);
    r.probe("min c1 on closed-region lattice", min_c1);
    if !(min_c1 >= k1 * (1.0 - 1e-12)) {
        r.judge(Verdict::Fail, "c1 dips below k1");
    }
    r.finish()
}

fn c2_4(spec: &ProblemSpec, opt: &OptimizationResult) -> ConditionReport {
    let mut r = Builder::new(ConditionId::C2_4);
    let model = spec.diffusion();
    let (ca, cb) = spec.costs().holding_limits();
    r.probe("H0*", opt.h0_star);
    match model.left_behavior() {
        LeftBehavior::Natural => {
            r.probe("c0(a)", ca);
            r.judge(
                if opt.h0_star < ca { Verdict::Pass } else { Verdict::Fail },
                format!("(a) natural left end: H0* = {} vs c0(a) = {ca}", opt.h0_star),
            );
        }
        other => {
            r.probe("c0(a)", ca);
            r.judge(Verdict::Pass, format!("(a) left end is {}", other.feller_class()));
        }
    }
    match model.right_behavior() {
        RightBehavior::Natural => {
            r.probe("c0(b)", cb);
            r.judge(
                if opt.h0_star < cb { Verdict::Pass } else { Verdict::Fail },
                format!("(b) natural right end: H0* = {} vs c0(b) = {cb}", opt.h0_star),
            );
        }
        RightBehavior::Entrance => {
            r.probe("c0(b)", cb);
            r.judge(Verdict::Pass, "(b) right end is entrance");
        }
    }
    r.finish()
}

/// Distances from an endpoint over twenty-four quarter decades, down to the
/// exclusion margin.
fn boundary_grid(spec: &ProblemSpec, right: bool) -> Vec<f64> {
    let (a, b) = spec.diffusion().interval();
    let x0 = spec.diffusion().anchor();
    let (l, rl) = side_lengths(spec);
    let (end, len) = if right { (b, rl) } else { (a, l) };
    (0..=24)
        .map(|k| {
            if end.is_finite() {
                let d = len * 10f64.powf(-(k as f64) / 4.0);
                if right {
                    end - d
                } else {
                    end + d
                }
            } else {
                let d = len * 10f64.powf(k as f64 / 4.0);
                if right {
                    x0 + d
                } else {
                    x0 - d
                }
            }
        })
        .collect()
}

/// Plateau test over the last three decades (twelve quarter-decade points).
fn plateau(seq: &[f64]) -> Verdict {
    if seq.iter().any(|v| !v.is_finite()) {
        return Verdict::Inconclusive;
    }
    let tail = &seq[seq.len() - 12..];
    let first = tail[..4].iter().cloned().fold(0.0, f64::max);
    let last = tail[8..].iter().cloned().fold(0.0, f64::max);
    if last <= 1.1 * first + 1e-9 {
        Verdict::Pass
    } else if last >= 2.0 * first + 1e-9 {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

fn c5_1(spec: &ProblemSpec, opt: &OptimizationResult) -> ConditionReport {
    let mut r = Builder::new(ConditionId::C5_1);
    let model = spec.diffusion();
    let h = opt.h0_star;
    let Ok(fun) = spec.functionals() else {
        r.judge(Verdict::Inconclusive, "cycle functionals unavailable");
        return r.finish();
    };
    let (ca, cb) = spec.costs().holding_limits();
    let eps = 0.5;
    for right in [false, true] {
        let name = if right { "b" } else { "a" };
        let grid = boundary_grid(spec, right);
        let mut seq = Vec::with_capacity(grid.len());
        for &x in &grid {
            let vals = (|| -> Result<f64> {
                let u = fun.g0(x)? - h * fun.zeta(x)?;
                let (zp, gp) = fun.derivatives(x)?;
                let su = model.dispersion(x) * (gp - h * zp);
                let c0 = spec.costs().holding(x);
                let au = 1.0 + u.abs();
                Ok(match (right, if right { cb } else { ca }.is_infinite()) {
                    (false, true) => c0 / (au * au) + su * su / au.powi(3),
                    (false, false) => su * su / au.powf(2.0 + eps),
                    (true, true) => c0 / (au * au) + su * su / (au * (1.0 + c0)),
                    (true, false) => su * su / au.powf(2.0 + eps) + su * su / (au * (1.0 + c0)),
                })
            })();
            seq.push(vals.unwrap_or(f64::NAN));
        }
        let v = plateau(&seq);
        let finest = *seq.last().expect("nonempty");
        r.probe(format!("bounding quotient at finest point towards {name}"), finest);
        r.probe(
            format!("max bounding quotient over scan towards {name}"),
            seq.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        r.judge(
            v,
            match v {
                Verdict::Pass => format!("({}) quotient plateaus over the last three decades towards {name}", if right { "b" } else { "a" }),
                Verdict::Fail => format!("quotient grows towards {name}"),
                Verdict::Inconclusive => format!("quotient towards {name} neither settles nor clearly grows"),
            },
        );
    }
    // (c) finite limits of sigma U0' at attainable or finite-U0 ends
    if model.left_behavior() == LeftBehavior::RegularReflecting {
        let (a, _) = model.interval();
        let x0 = model.anchor();
        let ds: Vec<f64> = (4..=8).map(|k| a + (x0 - a) * 10f64.powi(-k)).collect();
        let vals: Vec<f64> = ds
            .iter()
            .map(|&x| fun.derivatives(x).map(|(zp, gp)| gp - h * zp).unwrap_or(f64::NAN))
            .collect();
        let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min);
        r.probe("U0' near reflecting a", *vals.last().expect("nonempty"));
        r.judge(
            if spread.is_finite() && spread <= 1e-3 * (1.0 + vals[0].abs()) {
                Verdict::Pass
            } else {
                Verdict::Inconclusive
            },
            "(c)(ii) U0'(a) settles at the reflecting end",
        );
    }
    r.judge(Verdict::Pass, "transversality of the admissible class is assumed, not probed");
    r.finish()
}

/// One ratio sequence towards an endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSequence {
    pub kind: String,
    /// `(distance to the endpoint, ratio)`.
    pub points: Vec<(f64, f64)>,
    pub target: f64,
    pub relative_error_at_finest: f64,
    /// Estimated order `p` in `|ratio - target| ~ d^p` over the finest points.
    pub rate_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailMass {
    pub z: f64,
    /// `inf_y P((z_check, b); y, z)` over the `y` band.
    pub infimum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub left: Vec<RatioSequence>,
    pub right: Vec<RatioSequence>,
    pub tail_band: (f64, f64),
    pub tail_check_level: f64,
    pub tail_masses: Vec<TailMass>,
}

fn rate(points: &[(f64, f64)], target: f64) -> f64 {
    let n = points.len();
    if n < 4 || !target.is_finite() {
        return f64::NAN;
    }
    let (d1, r1) = points[n - 4];
    let (d2, r2) = points[n - 1];
    let (e1, e2) = ((r1 - target).abs(), (r2 - target).abs());
    if e1 == 0.0 || e2 == 0.0 {
        return f64::INFINITY;
    }
    (e2 / e1).ln() / (d2 / d1).ln()
}

fn sequence(kind: &str, target: f64, points: Vec<(f64, f64)>) -> RatioSequence {
    let finest = points.last().map(|p| p.1).unwrap_or(f64::NAN);
    let relative_error_at_finest = if target.is_finite() {
        (finest - target).abs() / target.abs().max(f64::MIN_POSITIVE)
    } else {
        // against an infinite target report the reciprocal growth
        1.0 / finest.abs()
    };
    RatioSequence {
        kind: kind.into(),
        rate_estimate: rate(&points, target),
        points,
        target,
        relative_error_at_finest,
    }
}

/// Depth of the left finite-end grid relative to the anchor distance.
const LEFT_DEPTH: f64 = 1e-30;

/// Ratio sequences `Bg0 / Bzeta` towards each natural endpoint and the tail
/// masses of the cycle-length-weighted kernel towards `b`.
pub fn asymptotics_report(spec: &ProblemSpec) -> Result<AsymptoticsReport> {
    let model = spec.diffusion();
    let fun = spec.functionals()?;
    let (a, b) = model.interval();
    let x0 = model.anchor();
    let (l, rl) = side_lengths(spec);
    let (ca, cb) = spec.costs().holding_limits();
    let ratio = |y: f64, v: f64| -> Option<f64> {
        let r = (fun.g0(v).ok()? - fun.g0(y).ok()?) / (fun.zeta(v).ok()? - fun.zeta(y).ok()?);
        r.is_finite().then_some(r)
    };
    let mut left = Vec::new();
    if model.left_behavior() == LeftBehavior::Natural {
        let ds: Vec<f64> = if a.is_finite() {
            (1..).map(|k| l * 0.5f64.powi(k)).take_while(|&d| d >= l * LEFT_DEPTH).collect()
        } else {
            (1..=40).map(|k| l * 2f64.powi(k)).collect()
        };
        let pos = |d: f64| if a.is_finite() { a + d } else { x0 - d };
        let anchored: Vec<(f64, f64)> = ds.iter().filter_map(|&d| ratio(pos(d), x0).map(|r| (d, r))).collect();
        let fixed_v = x0 - 0.5 * l.min(if a.is_finite() { l } else { 1.0 });
        let fixed: Vec<(f64, f64)> = ds
            .iter()
            .filter(|&&d| pos(d) < fixed_v)
            .filter_map(|&d| ratio(pos(d), fixed_v).map(|r| (d, r)))
            .collect();
        let double: Vec<(f64, f64)> = ds
            .iter()
            .filter_map(|&d| {
                let (y, v) = if a.is_finite() { (a + d, a + 2.0 * d) } else { (x0 - 2.0 * d, x0 - d) };
                ratio(y, v).map(|r| (d, r))
            })
            .collect();
        left.push(sequence("anchored", ca, anchored));
        left.push(sequence("fixed_v", ca, fixed));
        left.push(sequence("double", ca, double));
    }
    let mut right = Vec::new();
    let mut tail_masses = Vec::new();
    let (d1, d2) = (x0 - 0.4 * l, x0);
    let z_check = if b.is_finite() { x0 + 0.8 * rl } else { x0 + 10.0 * rl };
    if model.right_behavior() == RightBehavior::Natural {
        let ds: Vec<f64> = if b.is_finite() {
            (1..).map(|k| rl * 0.5f64.powi(k)).take_while(|&d| b - d < b).collect()
        } else {
            (1..=40).map(|k| rl * 2f64.powi(k)).collect()
        };
        let pos = |d: f64| if b.is_finite() { b - d } else { x0 + d };
        let anchored: Vec<(f64, f64)> = ds.iter().filter_map(|&d| ratio(x0, pos(d)).map(|r| (d, r))).collect();
        let fixed_y = x0 + 0.5 * rl.min(if b.is_finite() { rl } else { 1.0 });
        let fixed: Vec<(f64, f64)> = ds
            .iter()
            .filter(|&&d| pos(d) > fixed_y)
            .filter_map(|&d| ratio(fixed_y, pos(d)).map(|r| (d, r)))
            .collect();
        let double: Vec<(f64, f64)> = ds
            .iter()
            .filter_map(|&d| {
                let (y, v) = if b.is_finite() { (b - 2.0 * d, b - d) } else { (x0 + d, x0 + 2.0 * d) };
                ratio(y, v).map(|r| (d, r))
            })
            .collect();
        right.push(sequence("anchored", cb, anchored));
        right.push(sequence("fixed_y", cb, fixed));
        right.push(sequence("double", cb, double));
        let ys: Vec<f64> = (0..=20).map(|i| d1 + (d2 - d1) * i as f64 / 20.0).collect();
        let zs: Vec<f64> = if b.is_finite() {
            (1..=12).map(|k| b - (b - z_check) * 0.5f64.powi(k)).chain([b - 1e-3 * (b - a.max(0.0).min(b))]).collect()
        } else {
            (1..=12).map(|k| z_check + rl * 2f64.powi(k)).collect()
        };
        for z in zs {
            let mut inf = f64::INFINITY;
            for &y in &ys {
                inf = inf.min(frak_p(spec, y, z, z_check, b)?);
            }
            tail_masses.push(TailMass { z, infimum: inf });
        }
    }
    Ok(AsymptoticsReport {
        left,
        right,
        tail_band: (d1, d2),
        tail_check_level: z_check,
        tail_masses,
    })
}

/// Coarse witness search for `H0 < c0` at natural ends, without an optimum.
pub fn witness_probe(spec: &ProblemSpec, bx: SearchBox) -> Result<f64> {
    let scan = crate::optimizer::grid_scan(spec, 20, bx)?;
    Ok(scan.min_value().unwrap_or(f64::INFINITY))
}
