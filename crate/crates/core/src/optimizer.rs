//! Minimization of `H0` over `{y < z}` and residual checks of the optimality
//! system for `U0 = g0 - H0* zeta`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{apply_generator, WithDerivative};
use crate::error::{Error, Result};
use crate::functionals::{compute_f0, compute_h0, hats, u0, u0_prime};
use crate::problem::ProblemSpec;

/// Rectangle `[y_lo, y_hi] x [z_lo, z_hi]` of candidate policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub y_lo: f64,
    pub y_hi: f64,
    pub z_lo: f64,
    pub z_hi: f64,
}

impl SearchBox {
    pub fn new(y: (f64, f64), z: (f64, f64)) -> Result<Self> {
        let b = Self {
            y_lo: y.0,
            y_hi: y.1,
            z_lo: z.0,
            z_hi: z.1,
        };
        if !(b.y_lo < b.y_hi && b.z_lo < b.z_hi) || [y.0, y.1, z.0, z.1].iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("degenerate search box {b:?}")));
        }
        if b.y_lo >= b.z_hi {
            return Err(Error::InvalidParameter(format!("search box {b:?} misses the region y < z")));
        }
        Ok(b)
    }

    /// Square box `[lo, hi]^2`.
    pub fn square(lo: f64, hi: f64) -> Result<Self> {
        Self::new((lo, hi), (lo, hi))
    }

    fn contains(&self, y: f64, z: f64) -> bool {
        self.y_lo <= y && y <= self.y_hi && self.z_lo <= z && z <= self.z_hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    /// Coarse seeding grid per axis.
    pub coarse: usize,
    /// Maximum number of local refinements.
    pub starts: usize,
    pub coord_tol: f64,
    pub max_iter: usize,
    pub max_expansions: usize,
    pub search_box: Option<SearchBox>,
    /// Resolution of the brute-force oracle scan, if wanted.
    pub oracle_resolution: Option<usize>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            coarse: 40,
            starts: 6,
            coord_tol: 1e-5,
            max_iter: 4000,
            max_expansions: 3,
            search_box: None,
            oracle_resolution: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerWarning {
    BoxAtBoundary { edge: String, y: f64, z: f64 },
    NotConverged { y: f64, z: f64 },
}

/// A local minimum found by one refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Basin {
    pub y: f64,
    pub z: f64,
    #[serde(rename = "H0")]
    pub h0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QviReport {
    /// `max |A U0 + c0 - H0*|` over the interior grid.
    pub interior_residual_max: f64,
    pub interior_window: (f64, f64),
    /// Minimum of `(BU0)^ + c1^` over the policy grid.
    #[serde(rename = "min_hat_BU0_plus_c1")]
    pub min_hat_bu0_plus_c1: f64,
    /// Maximum of `(Bzeta)^` over the same grid.
    #[serde(rename = "max_hat_Bzeta")]
    pub max_hat_bzeta: f64,
    pub value_at_optimum: f64,
    #[serde(rename = "hat_Bzeta_at_optimum")]
    pub hat_bzeta_at_optimum: f64,
    pub u0_anchor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub y_star: f64,
    pub z_star: f64,
    #[serde(rename = "H0_star")]
    pub h0_star: f64,
    pub evaluations: usize,
    pub starts: usize,
    pub converged: bool,
    pub search_box: SearchBox,
    pub basins: Vec<Basin>,
    pub grid_argmin: Option<(f64, f64)>,
    pub qvi: Option<QviReport>,
    pub warnings: Vec<OptimizerWarning>,
}

/// Dense `H0` (or `F0`) lattice over a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScan {
    pub search_box: SearchBox,
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
    /// Row-major in `y`; `None` marks cells outside the region or failed.
    pub values: Vec<Option<f64>>,
    pub argmin: Option<Basin>,
}

impl GridScan {
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.zs.len() + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, Option<f64>)> + '_ {
        self.ys
            .iter()
            .enumerate()
            .flat_map(move |(i, &y)| self.zs.iter().enumerate().map(move |(j, &z)| (y, z, self.value(i, j))))
    }

    /// Largest lattice spacing.
    pub fn cell(&self) -> (f64, f64) {
        let n = self.ys.len().max(2) as f64 - 1.0;
        let m = self.zs.len().max(2) as f64 - 1.0;
        (
            (self.search_box.y_hi - self.search_box.y_lo) / n,
            (self.search_box.z_hi - self.search_box.z_lo) / m,
        )
    }

    pub fn min_value(&self) -> Option<f64> {
        self.argmin.map(|b| b.h0)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Lexicographic preference: smaller value, then smaller z, then smaller y.
fn better(a: &Basin, b: &Basin, tol: f64) -> bool {
    let scale = tol * (1.0 + a.h0.abs().min(b.h0.abs()));
    if (a.h0 - b.h0).abs() > scale {
        return a.h0 < b.h0;
    }
    if a.z != b.z {
        return a.z < b.z;
    }
    a.y < b.y
}

fn pick_best(cands: impl IntoIterator<Item = Basin>, tol: f64) -> Option<Basin> {
    cands.into_iter().fold(None, |best, c| match best {
        Some(b) if !better(&c, &b, tol) => Some(b),
        _ => Some(c),
    })
}

fn scan_with<F>(spec: &ProblemSpec, resolution: usize, bx: SearchBox, f: F) -> Result<GridScan>
where
    F: Fn(&ProblemSpec, f64, f64) -> Result<f64> + Sync,
{
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!("grid resolution must be at least 2, got {resolution}")));
    }
    let ys = linspace(bx.y_lo, bx.y_hi, resolution);
    let zs = linspace(bx.z_lo, bx.z_hi, resolution);
    let values: Vec<Option<f64>> = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| {
            let (y, z) = (ys[k / resolution], zs[k % resolution]);
            f(spec, y, z).ok().filter(|v| !v.is_nan())
        })
        .collect();
    let argmin = pick_best(
        values.iter().enumerate().filter_map(|(k, v)| {
            v.filter(|v| v.is_finite()).map(|h0| Basin {
                y: ys[k / resolution],
                z: zs[k % resolution],
                h0,
            })
        }),
        0.0,
    );
    Ok(GridScan {
        search_box: bx,
        ys,
        zs,
        values,
        argmin,
    })
}

/// Brute-force `H0` lattice; the diagonal band reads `inf`, `y > z` is missing.
pub fn grid_scan(spec: &ProblemSpec, resolution: usize, bx: SearchBox) -> Result<GridScan> {
    scan_with(spec, resolution, bx, compute_h0)
}

/// The same lattice for the non-deficient cost `F0`.
pub fn grid_scan_f0(spec: &ProblemSpec, resolution: usize, bx: SearchBox) -> Result<GridScan> {
    scan_with(spec, resolution, bx, compute_f0)
}

/// Admissible closure of the state interval for policy levels.
fn level_limits(spec: &ProblemSpec) -> (f64, f64) {
    let (a, b) = spec.diffusion().interval();
    let lo = if spec.diffusion().left_behavior().is_attainable() {
        a
    } else {
        f64::NEG_INFINITY
    };
    (lo.max(a), b)
}

fn admissible(spec: &ProblemSpec, y: f64, z: f64) -> bool {
    let (a, b) = spec.diffusion().interval();
    let y_ok = if spec.diffusion().left_behavior().is_attainable() {
        y >= a
    } else {
        y > a
    };
    y_ok && z < b && z - y >= spec.diag_gap()
}

fn h0_or_inf(spec: &ProblemSpec, y: f64, z: f64) -> f64 {
    if !admissible(spec, y, z) {
        return f64::INFINITY;
    }
    match compute_h0(spec, y, z) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

/// Anchored ratio `g0(x) / zeta(x)`: the cost rate of falling between `x`
/// and the anchor.
fn anchored_ratio(spec: &ProblemSpec, x: f64) -> Option<f64> {
    let f = spec.functionals().ok()?;
    let (z, g) = (f.zeta(x).ok()?, f.g0(x).ok()?);
    let r = g / z;
    r.is_finite().then_some(r)
}

/// Search box from boundary asymptotics: each side is pushed toward its
/// endpoint until the anchored cost rate exceeds twice an interior `H0`
/// level.
pub fn auto_box(spec: &ProblemSpec) -> Result<SearchBox> {
    let model = spec.diffusion();
    let (a, b) = model.interval();
    let x0 = model.anchor();
    let reach = |side_len: f64, f: f64| side_len * f;
    let left_len = if a.is_finite() { x0 - a } else { x0.abs().max(1.0) * 4.0 };
    let right_len = if b.is_finite() { b - x0 } else { x0.abs().max(1.0) * 4.0 };
    let fractions = [0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.7, 0.9];
    let mut h_ref = f64::INFINITY;
    for &fy in &fractions {
        for &fz in &fractions {
            let (y, z) = (x0 - reach(left_len, fy), x0 + reach(right_len, fz));
            h_ref = h_ref.min(h0_or_inf(spec, y, z));
        }
    }
    if !h_ref.is_finite() {
        return Err(Error::AllStartsFailed);
    }
    let threshold = 2.0 * h_ref;
    let attainable_left = model.left_behavior().is_attainable();
    let mut lo = x0 - reach(left_len, 0.02);
    for k in 1..=60 {
        let cand = if a.is_finite() {
            a + (x0 - a) * 0.5f64.powi(k)
        } else {
            x0 - left_len * 0.25 * 2f64.powi(k)
        };
        match anchored_ratio(spec, cand) {
            Some(r) => {
                lo = cand;
                if r > threshold {
                    break;
                }
            }
            None => break,
        }
    }
    if attainable_left && anchored_ratio(spec, lo).is_some_and(|r| r <= threshold) {
        lo = a;
    }
    let mut hi = x0 + reach(right_len, 0.02);
    for k in 1..=60 {
        let cand = if b.is_finite() {
            b - (b - x0) * 0.5f64.powi(k)
        } else {
            x0 + right_len * 0.25 * 2f64.powi(k)
        };
        match anchored_ratio(spec, cand) {
            Some(r) => {
                hi = cand;
                if r > threshold {
                    break;
                }
            }
            None => break,
        }
    }
    SearchBox::square(lo, hi)
}

/// Enlarges the box across the edges in `edges`, staying inside the level
/// limits.
fn expand(spec: &ProblemSpec, bx: SearchBox, low: bool, high: bool) -> SearchBox {
    let (lo_lim, b) = level_limits(spec);
    let a = spec.diffusion().interval().0;
    let width = (bx.z_hi - bx.y_lo).max(bx.y_hi - bx.y_lo);
    let mut out = bx;
    if low {
        let target = bx.y_lo - width;
        out.y_lo = if lo_lim.is_finite() {
            target.max(lo_lim)
        } else if a.is_finite() {
            target.max(a + 0.5 * (bx.y_lo - a) * 0.1)
        } else {
            target
        };
        out.z_lo = out.z_lo.min(out.y_lo);
    }
    if high {
        let target = bx.z_hi + width;
        out.z_hi = if b.is_finite() {
            target.min(b - 0.1 * (b - bx.z_hi))
        } else {
            target
        };
        out.y_hi = out.y_hi.max(out.z_hi);
    }
    out
}

struct Counted<'a> {
    spec: &'a ProblemSpec,
    bx: SearchBox,
    evals: std::sync::atomic::AtomicUsize,
}

impl Counted<'_> {
    fn eval(&self, p: [f64; 2]) -> f64 {
        self.evals.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        if !self.bx.contains(p[0], p[1]) {
            return f64::INFINITY;
        }
        h0_or_inf(self.spec, p[0], p[1])
    }
}

/// Nelder-Mead on two coordinates. Returns `(point, value, converged)`.
fn nelder_mead<F: Fn([f64; 2]) -> f64>(f: F, start: [f64; 2], step: [f64; 2], tol: f64, max_iter: usize) -> ([f64; 2], f64, bool) {
    let mut s = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
    let mut v = s.map(&f);
    let diameter = |s: &[[f64; 2]; 3]| {
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((s[i][0] - s[j][0]).abs()).max((s[i][1] - s[j][1]).abs());
            }
        }
        d
    };
    for _ in 0..max_iter {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        s = idx.map(|i| s[i]);
        v = idx.map(|i| v[i]);
        if diameter(&s) < tol {
            return (s[0], v[0], true);
        }
        let c = [0.5 * (s[0][0] + s[1][0]), 0.5 * (s[0][1] + s[1][1])];
        let along = |t: f64| [c[0] + t * (s[2][0] - c[0]), c[1] + t * (s[2][1] - c[1])];
        let r = along(-1.0);
        let fr = f(r);
        if fr < v[0] {
            let e = along(-2.0);
            let fe = f(e);
            if fe < fr {
                (s[2], v[2]) = (e, fe);
            } else {
                (s[2], v[2]) = (r, fr);
            }
        } else if fr < v[1] {
            (s[2], v[2]) = (r, fr);
        } else {
            let (k, fk) = if fr < v[2] {
                let k = along(-0.5);
                (k, f(k))
            } else {
                let k = along(0.5);
                (k, f(k))
            };
            if fk < v[2].min(fr) {
                (s[2], v[2]) = (k, fk);
            } else {
                for i in 1..3 {
                    s[i] = [0.5 * (s[0][0] + s[i][0]), 0.5 * (s[0][1] + s[i][1])];
                    v[i] = f(s[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap_or(0);
    (s[best], v[best], false)
}

/// Interior local minima of a coarse scan, best first.
fn seeds(scan: &GridScan) -> Vec<Basin> {
    let (n, m) = (scan.ys.len(), scan.zs.len());
    let at = |i: usize, j: usize| scan.value(i, j).filter(|v| v.is_finite());
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let Some(v) = at(i, j) else { continue };
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || ii < 0 || jj < 0 || ii >= n as i64 || jj >= m as i64 {
                        continue;
                    }
                    if let Some(w) = at(ii as usize, jj as usize) {
                        if w < v {
                            is_min = false;
                        }
                    }
                }
            }
            if is_min {
                out.push(Basin {
                    y: scan.ys[i],
                    z: scan.zs[j],
                    h0: v,
                });
            }
        }
    }
    out.sort_by(|a, b| a.h0.total_cmp(&b.h0).then(a.z.total_cmp(&b.z)).then(a.y.total_cmp(&b.y)));
    out
}

/// Edges of the box touched by a point, ignoring edges that coincide with
/// the level limits.
fn touched_edges(spec: &ProblemSpec, bx: &SearchBox, y: f64, z: f64, cell: (f64, f64)) -> (bool, bool, Vec<&'static str>) {
    let (lo_lim, _) = level_limits(spec);
    let mut names = Vec::new();
    let low = y - bx.y_lo < 0.5 * cell.0;
    let high = bx.z_hi - z < 0.5 * cell.1;
    if low {
        names.push(if bx.y_lo <= lo_lim { "y_lo (state boundary)" } else { "y_lo" });
    }
    if high {
        names.push("z_hi");
    }
    (low && bx.y_lo > lo_lim, high, names)
}

pub fn minimize_h0(spec: &ProblemSpec, options: &OptimizerOptions) -> Result<OptimizationResult> {
    if options.coarse < 2 || options.starts == 0 {
        return Err(Error::InvalidParameter("optimizer needs coarse >= 2 and starts >= 1".into()));
    }
    let mut bx = match options.search_box {
        Some(b) => b,
        None => auto_box(spec)?,
    };
    let mut evaluations = 0usize;
    let mut warnings = Vec::new();
    let mut expansions = 0;
    loop {
        let coarse = grid_scan(spec, options.coarse, bx)?;
        evaluations += options.coarse * options.coarse;
        let cell = coarse.cell();
        let starts: Vec<Basin> = seeds(&coarse).into_iter().take(options.starts).collect();
        if starts.is_empty() {
            return Err(Error::AllStartsFailed);
        }
        let counted = Counted {
            spec,
            bx,
            evals: 0.into(),
        };
        let refined: Vec<(Basin, bool)> = starts
            .par_iter()
            .map(|s| {
                let step = [0.5 * cell.0, 0.5 * cell.1];
                let (p, v, ok) = nelder_mead(|p| counted.eval(p), [s.y, s.z], step, options.coord_tol, options.max_iter);
                (Basin { y: p[0], z: p[1], h0: v }, ok)
            })
            .filter(|(b, _)| b.h0.is_finite())
            .collect();
        evaluations += counted.evals.into_inner();
        let Some(best) = pick_best(refined.iter().map(|r| r.0), 1e-10) else {
            return Err(Error::AllStartsFailed);
        };
        let converged = refined.iter().any(|(b, ok)| *ok && *b == best);
        let (low, high, edges) = touched_edges(spec, &bx, best.y, best.z, cell);
        if (low || high) && expansions < options.max_expansions {
            bx = expand(spec, bx, low, high);
            expansions += 1;
            continue;
        }
        for e in edges {
            warnings.push(OptimizerWarning::BoxAtBoundary {
                edge: e.to_string(),
                y: best.y,
                z: best.z,
            });
        }
        if !converged {
            warnings.push(OptimizerWarning::NotConverged { y: best.y, z: best.z });
        }
        let mut basins: Vec<Basin> = Vec::new();
        for (b, _) in &refined {
            let dup = basins
                .iter()
                .any(|c| (c.y - b.y).abs() <= 2.0 * cell.0 && (c.z - b.z).abs() <= 2.0 * cell.1);
            if !dup {
                basins.push(*b);
            }
        }
        basins.sort_by(|a, b| a.h0.total_cmp(&b.h0));
        let grid_argmin = match options.oracle_resolution {
            Some(r) => {
                evaluations += r * r;
                grid_scan(spec, r, bx)?.argmin.map(|b| (b.y, b.z))
            }
            None => None,
        };
        let mut result = OptimizationResult {
            y_star: best.y,
            z_star: best.z,
            h0_star: best.h0,
            evaluations,
            starts: starts.len(),
            converged,
            search_box: bx,
            basins,
            grid_argmin,
            qvi: None,
            warnings,
        };
        if converged {
            result.qvi = Some(qvi_residuals(spec, &result)?);
        }
        return Ok(result);
    }
}

/// Grid sizes for the residual checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QviGrids {
    pub interior: usize,
    pub region: usize,
}

impl Default for QviGrids {
    fn default() -> Self {
        Self {
            interior: 200,
            region: 60,
        }
    }
}

pub fn qvi_residuals(spec: &ProblemSpec, result: &OptimizationResult) -> Result<QviReport> {
    qvi_residuals_on(spec, result, QviGrids::default())
}

pub fn qvi_residuals_on(spec: &ProblemSpec, result: &OptimizationResult, grids: QviGrids) -> Result<QviReport> {
    let model = spec.diffusion();
    let (a, b) = model.interval();
    let h = result.h0_star;
    let (ys, zs) = (result.y_star, result.z_star);
    let w = zs - ys;
    let lo = if a.is_finite() { a + 0.02 * (b.min(zs + 2.0 * w) - a) } else { ys - 2.0 * w };
    let hi = if b.is_finite() { b - 0.02 * (b - a.max(ys - 2.0 * w)) } else { zs + 2.0 * w };
    let lo = if a.is_finite() && b.is_finite() { a + 0.02 * (b - a) } else { lo };
    let hi = if a.is_finite() && b.is_finite() { b - 0.02 * (b - a) } else { hi };
    let mut interior_residual_max: f64 = 0.0;
    let u = WithDerivative(
        |x: f64| u0(spec, h, x).unwrap_or(f64::NAN),
        |x: f64| u0_prime(spec, h, x).unwrap_or(f64::NAN),
    );
    for x in linspace(lo, hi, grids.interior) {
        let au = apply_generator(&u, model, x)?.value;
        let r = (au + spec.costs().holding(x) - h).abs();
        interior_residual_max = interior_residual_max.max(if r.is_nan() { f64::INFINITY } else { r });
    }
    let bx = result.search_box;
    let gap = spec.diag_gap();
    let cells: Vec<(f64, f64)> = linspace(bx.y_lo, bx.y_hi, grids.region)
        .into_iter()
        .flat_map(|y| linspace(bx.z_lo, bx.z_hi, grids.region).into_iter().map(move |z| (y, z)))
        .filter(|&(y, z)| z - y >= gap && admissible(spec, y, z))
        .collect();
    let vals: Vec<(f64, f64)> = cells
        .par_iter()
        .filter_map(|&(y, z)| hats(spec, y, z).ok().map(|(c1, bg, bz)| (c1 + bg - h * bz, bz)))
        .collect();
    let min_hat_bu0_plus_c1 = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let max_hat_bzeta = vals.iter().map(|v| v.1).fold(0.0, f64::max);
    let (c1, bg, bz) = hats(spec, ys, zs)?;
    Ok(QviReport {
        interior_residual_max,
        interior_window: (lo, hi),
        min_hat_bu0_plus_c1,
        max_hat_bzeta,
        value_at_optimum: c1 + bg - h * bz,
        hat_bzeta_at_optimum: bz,
        u0_anchor: u0(spec, h, model.anchor())?.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{build_preset, logistic_model, ParamBag, PresetId};

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |p: [f64; 2]| (p[0] - 0.3).powi(2) + 2.0 * (p[1] + 0.1).powi(2);
        let (p, v, ok) = nelder_mead(f, [0.0, 0.0], [0.1, 0.1], 1e-9, 10_000);
        assert!(ok);
        assert!((p[0] - 0.3).abs() < 1e-8 && (p[1] + 0.1).abs() < 1e-8, "{p:?}");
        assert!(v < 1e-15);
    }

    #[test]
    fn ties_prefer_smaller_z_then_y() {
        let a = Basin { y: 0.1, z: 0.5, h0: 1.0 };
        let b = Basin { y: 0.0, z: 0.6, h0: 1.0 };
        let c = Basin { y: 0.0, z: 0.5, h0: 1.0 };
        assert_eq!(pick_best([a, b, c], 1e-12), Some(c));
        assert_eq!(pick_best([b, a], 1e-12), Some(a));
    }

    #[test]
    fn two_by_two_scan_picks_smallest_cell() {
        let spec = logistic_model(3).unwrap();
        let bx = SearchBox::new((0.3, 0.4), (0.6, 0.7)).unwrap();
        let scan = grid_scan(&spec, 2, bx).unwrap();
        let best = scan.rows().filter_map(|(y, z, v)| v.map(|v| (y, z, v))).min_by(|a, b| a.2.total_cmp(&b.2)).unwrap();
        let am = scan.argmin.unwrap();
        assert_eq!((am.y, am.z, am.h0), best);
    }

    #[test]
    fn scan_marks_region_cells() {
        let spec = logistic_model(2).unwrap();
        let bx = SearchBox::square(0.3, 0.7).unwrap();
        let scan = grid_scan(&spec, 5, bx).unwrap();
        assert_eq!(scan.value(4, 0), None);
        assert_eq!(scan.value(2, 2), Some(f64::INFINITY));
        assert!(scan.value(0, 4).unwrap().is_finite());
    }

    #[test]
    fn model3_optimum() {
        let spec = logistic_model(3).unwrap();
        let r = minimize_h0(&spec, &OptimizerOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.y_star - 0.384973).abs() < 2e-3, "{r:?}");
        assert!((r.z_star - 0.6575).abs() < 2e-3, "{r:?}");
        assert!((r.h0_star - 1.33092).abs() < 1e-3, "{r:?}");
        let q = r.qvi.unwrap();
        assert_eq!(q.u0_anchor, 0.0);
        assert!(q.interior_residual_max < 1e-4, "{q:?}");
    }

    #[test]
    fn deterministic_model_optimum() {
        let spec = logistic_model(1).unwrap();
        let r = minimize_h0(&spec, &OptimizerOptions::default()).unwrap();
        assert!((r.y_star - 0.40567).abs() < 2e-3, "{r:?}");
        assert!((r.z_star - 0.59433).abs() < 2e-3, "{r:?}");
        assert!((r.h0_star - 0.938043).abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn restarts_are_deterministic() {
        let spec = build_preset(PresetId::DriftedBm, &ParamBag::new()).unwrap();
        let opts = OptimizerOptions {
            coarse: 20,
            ..Default::default()
        };
        let r1 = minimize_h0(&spec, &opts).unwrap();
        let r2 = minimize_h0(&spec, &opts).unwrap();
        assert_eq!(r1, r2);
    }
}
