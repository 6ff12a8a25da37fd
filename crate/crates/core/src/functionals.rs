//! The cycle functionals `g0` and `zeta`, the jump operator, and the
//! per-policy quantities built from them (`F0`, `H0`, the proportion measure).
//!
//! `g0` and `zeta` are stored in node tables along each side of the anchor.
//! Derivatives at the nodes come from the backward recursion
//! `f'(p) = int_p^q w(v) e^{L(p) - L(v)} dv + e^{L(p) - L(q)} f'(q)`, seeded by
//! an improper tail integral at the outermost right node; values accumulate
//! outward from the anchor with an end-corrected trapezoid rule and are
//! interpolated with quintic Hermite polynomials.

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionModel, LeftBehavior, RightBehavior, ScalarFn};
use crate::error::{Error, Result};
use crate::numerics::{gauss_fixed, gauss_legendre, integrate_to_boundary};
use crate::problem::{CostModel, FunctionalOverrides, ProblemSpec};

const NODE_STEP: f64 = 0.01;
const PANEL_POINTS: usize = 10;
const CHUNK: usize = 100;
/// Initial depth of a geometric left side, as a fraction of its span.
const LEFT_INITIAL_DEPTH: f64 = 1e-12;
/// Deepest reachable fraction of the span on a geometric side.
const MIN_DEPTH: f64 = 1e-100;
/// Deepest fraction of the span resolved towards an attainable endpoint.
const ATTAINABLE_DEPTH: f64 = 1e-15;

#[derive(Debug, Clone, Copy)]
struct Node {
    x: f64,
    /// Log scale density relative to the anchor.
    l: f64,
    zeta: f64,
    zeta_p: f64,
    zeta_pp: f64,
    g0: f64,
    g0_p: f64,
    g0_pp: f64,
}

#[derive(Debug, Clone, Copy)]
enum SideMap {
    /// `x(t) = end + (x0 - end) e^{-t}`, stopping at relative depth `floor`.
    Geometric { x0: f64, end: f64, floor: f64 },
    /// `x(t) = x0 + sign * scale * sinh(t)`.
    Sinh { x0: f64, sign: f64, scale: f64 },
}

impl SideMap {
    fn at(&self, t: f64) -> f64 {
        match *self {
            SideMap::Geometric { x0, end, .. } => end + (x0 - end) * (-t).exp(),
            SideMap::Sinh { x0, sign, scale } => x0 + sign * scale * t.sinh(),
        }
    }

    /// Whether `x` is too close to the end (or too far out) to add another node.
    fn exhausted(&self, x: f64, prev: f64, right: bool) -> bool {
        if x == prev || !x.is_finite() {
            return true;
        }
        match *self {
            SideMap::Geometric { x0, end, floor } => {
                let d = (end - x).abs();
                let ulp_floor = if right { 64.0 } else { 8.0 } * f64::EPSILON * end.abs();
                d <= ulp_floor.max(floor * (x0 - end).abs())
            }
            SideMap::Sinh { x0, scale, .. } => (x - x0).abs() > 1e12 * scale.max(1.0),
        }
    }
}

struct Side {
    map: SideMap,
    nodes: Vec<Node>,
    exhausted: bool,
}

enum Kind {
    Closed(FunctionalOverrides),
    Tables {
        right: RwLock<Side>,
        left: RwLock<Side>,
        deterministic: bool,
    },
}

/// Cached `g0` and `zeta` for one diffusion and holding cost.
pub struct CycleFunctionals {
    model: DiffusionModel,
    holding: ScalarFn,
    kind: Kind,
    tail_error: f64,
}

impl std::fmt::Debug for CycleFunctionals {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CycleFunctionals")
            .field("closed_form", &matches!(self.kind, Kind::Closed(_)))
            .field("tail_error", &self.tail_error)
            .finish()
    }
}

fn side_map(model: &DiffusionModel, right: bool) -> SideMap {
    let (a, b) = model.interval();
    let x0 = model.anchor();
    let end = if right { b } else { a };
    if end.is_finite() {
        // attainable ends are smooth limits; no need to resolve them to 1e-100
        let attainable = !right && model.left_behavior().is_attainable();
        SideMap::Geometric {
            x0,
            end,
            floor: if attainable { ATTAINABLE_DEPTH } else { MIN_DEPTH },
        }
    } else {
        let scale = if model.is_deterministic() {
            1.0
        } else {
            let s = model.dispersion(x0);
            let mu = model.drift(x0).abs();
            if mu > 0.0 {
                (s * s / (2.0 * mu)).clamp(1e-3, 10.0)
            } else {
                1.0
            }
        };
        let scale = scale * x0.abs().clamp(1.0, 10.0);
        SideMap::Sinh {
            x0,
            sign: if right { 1.0 } else { -1.0 },
            scale,
        }
    }
}

/// Local quantities of the backward recursion.
struct Local<'a> {
    model: &'a DiffusionModel,
    holding: &'a ScalarFn,
}

impl Local<'_> {
    fn weights(&self, v: f64) -> Result<(f64, f64)> {
        let s = self.model.dispersion(v);
        if !(s > 0.0) {
            return Err(Error::NondegeneracyViolation { x: v, value: s });
        }
        let w = 2.0 / (s * s);
        Ok((w, w * (self.holding)(v)))
    }

    /// `int_p^q w(v) e^{L(p) - L(v)} dv` for both weights, with `p < q`.
    fn panel(&self, p: f64, q: f64) -> Result<(f64, f64)> {
        let rule = gauss_legendre(PANEL_POINTS);
        let c = 0.5 * (p + q);
        let h = 0.5 * (q - p);
        let (mut dz, mut dg) = (0.0, 0.0);
        for &(t, wt) in rule {
            let v = c + h * t;
            let e = (-self.model.log_scale_increment(p, v)?).exp();
            let (wz, wg) = self.weights(v)?;
            dz += wt * h * wz * e;
            dg += wt * h * wg * e;
        }
        Ok((dz, dg))
    }

    fn second(&self, x: f64, zeta_p: f64, g0_p: f64) -> Result<(f64, f64)> {
        let lam = self.model.log_scale_slope(x);
        let (wz, wg) = self.weights(x)?;
        Ok((lam * zeta_p - wz, lam * g0_p - wg))
    }

    fn deterministic_derivs(&self, x: f64) -> Result<(f64, f64, f64, f64)> {
        let inv = |u: f64| -> f64 { -1.0 / self.model.drift(u) };
        let mu = self.model.drift(x);
        if !(mu < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "deterministic drift must be negative on the interior, got {mu} at x = {x}"
            )));
        }
        let (a, b) = self.model.interval();
        let mut len = x.abs().max(1.0);
        if a.is_finite() {
            len = len.min(x - a);
        }
        if b.is_finite() {
            len = len.min(b - x);
        }
        let h = 1e-3 * len;
        let diff = |f: &dyn Fn(f64) -> f64| {
            let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
            (4.0 * d(0.5 * h) - d(h)) / 3.0
        };
        let d_inv = diff(&inv);
        let dc0 = diff(&|u| (self.holding)(u));
        let c0 = (self.holding)(x);
        let zp = inv(x);
        Ok((zp, c0 * zp, d_inv, dc0 * zp + c0 * d_inv))
    }
}

fn trapezoid(h: f64, fp: f64, fq: f64, dp: f64, dq: f64) -> f64 {
    0.5 * h * (fp + fq) + h * h / 12.0 * (dp - dq)
}

fn hermite(p: &Node, q: &Node, x: f64, zeta: bool) -> f64 {
    let h = q.x - p.x;
    let t = (x - p.x) / h;
    let (f0, d0, s0, f1, d1, s1) = if zeta {
        (p.zeta, p.zeta_p, p.zeta_pp, q.zeta, q.zeta_p, q.zeta_pp)
    } else {
        (p.g0, p.g0_p, p.g0_pp, q.g0, q.g0_p, q.g0_pp)
    };
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h3 = 0.5 * t3 - t4 + 0.5 * t5;
    f0 * h0 + h * d0 * h1 + h * h * s0 * h2 + f1 * h5 + h * d1 * h4 + h * h * s1 * h3
}

impl CycleFunctionals {
    pub fn new(model: &DiffusionModel, costs: &CostModel, overrides: Option<FunctionalOverrides>) -> Result<Self> {
        let holding = costs.holding_fn().clone();
        if let Some(o) = overrides {
            return Ok(Self {
                model: model.clone(),
                holding,
                kind: Kind::Closed(o),
                tail_error: 0.0,
            });
        }
        let deterministic = model.is_deterministic();
        let local = Local { model, holding: &holding };
        let x0 = model.anchor();
        let mut right = Side {
            map: side_map(model, true),
            nodes: Vec::new(),
            exhausted: false,
        };
        let mut left = Side {
            map: side_map(model, false),
            nodes: Vec::new(),
            exhausted: false,
        };
        let right_target = match right.map {
            SideMap::Geometric { .. } => f64::INFINITY,
            SideMap::Sinh { .. } => 64f64.asinh(),
        };
        let tail_error = build_right(&local, &mut right, x0, right_target, deterministic)?;
        let seed = right.nodes[0];
        left.nodes.push(seed);
        let left_target = match left.map {
            SideMap::Geometric { .. } => (1.0 / LEFT_INITIAL_DEPTH).ln(),
            SideMap::Sinh { .. } => 64f64.asinh(),
        };
        extend_left(&local, &mut left, left_target, deterministic)?;
        Ok(Self {
            model: model.clone(),
            holding,
            kind: Kind::Tables {
                right: RwLock::new(right),
                left: RwLock::new(left),
                deterministic,
            },
            tail_error,
        })
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    /// Estimated absolute error of the improper tail that seeds the tables.
    pub fn tail_error(&self) -> f64 {
        self.tail_error
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.kind, Kind::Closed(_))
    }

    pub fn zeta(&self, x: f64) -> Result<f64> {
        self.value(x, true)
    }

    pub fn g0(&self, x: f64) -> Result<f64> {
        self.value(x, false)
    }

    fn boundary_value(&self, x: f64, zeta: bool) -> Option<Result<f64>> {
        let (a, b) = self.model.interval();
        if x <= a {
            return Some(match self.model.left_behavior() {
                LeftBehavior::Natural => Ok(f64::NEG_INFINITY),
                _ => self.deepest(false, zeta),
            });
        }
        if x >= b {
            return Some(match self.model.right_behavior() {
                RightBehavior::Natural => Ok(f64::INFINITY),
                RightBehavior::Entrance => self.deepest(true, zeta),
            });
        }
        None
    }

    fn deepest(&self, right: bool, zeta: bool) -> Result<f64> {
        match &self.kind {
            Kind::Closed(o) => {
                let (a, b) = self.model.interval();
                let x = if right { b } else { a };
                Ok(if zeta { (o.zeta)(x) } else { (o.g0)(x) })
            }
            Kind::Tables { right: r, left: l, deterministic } => {
                let lock = if right { r } else { l };
                {
                    let mut side = lock.write();
                    let local = Local {
                        model: &self.model,
                        holding: &self.holding,
                    };
                    while !side.exhausted {
                        let t = side.nodes.len() as f64 * NODE_STEP + CHUNK as f64 * NODE_STEP;
                        if right {
                            extend_right(&local, &mut side, t, *deterministic)?;
                        } else {
                            extend_left(&local, &mut side, t, *deterministic)?;
                        }
                    }
                }
                let side = lock.read();
                let n = side.nodes.last().expect("tables are never empty");
                Ok(if zeta { n.zeta } else { n.g0 })
            }
        }
    }

    fn value(&self, x: f64, zeta: bool) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::InvalidParameter("NaN state".into()));
        }
        if let Some(v) = self.boundary_value(x, zeta) {
            return v;
        }
        match &self.kind {
            Kind::Closed(o) => Ok(if zeta { (o.zeta)(x) } else { (o.g0)(x) }),
            Kind::Tables { .. } => self.with_bracket(x, |p, q| hermite(p, q, x, zeta)),
        }
    }

    /// Runs `f` on the table nodes bracketing `x`, extending the table first
    /// when needed.
    fn with_bracket<T>(&self, x: f64, f: impl Fn(&Node, &Node) -> T) -> Result<T> {
        let Kind::Tables { right, left, deterministic } = &self.kind else {
            unreachable!("bracket lookup on closed forms");
        };
        let is_right = x >= self.model.anchor();
        let lock = if is_right { right } else { left };
        loop {
            {
                let side = lock.read();
                let last = side.nodes.last().expect("tables are never empty");
                let covered = if is_right { x <= last.x } else { x >= last.x };
                if covered || side.exhausted {
                    let nodes = &side.nodes;
                    if !covered {
                        // beyond the deepest representable node: freeze the value
                        let n = nodes.len();
                        return Ok(f(&nodes[n - 1], &nodes[n - 1]));
                    }
                    let i = if is_right {
                        nodes.partition_point(|n| n.x < x).max(1)
                    } else {
                        nodes.partition_point(|n| n.x > x).max(1)
                    };
                    let (p, q) = if is_right { (&nodes[i - 1], &nodes[i]) } else { (&nodes[i], &nodes[i - 1]) };
                    if p.x == q.x {
                        return Ok(f(p, p));
                    }
                    return Ok(f(p, q));
                }
            }
            let mut side = lock.write();
            let local = Local {
                model: &self.model,
                holding: &self.holding,
            };
            let t = side.nodes.len() as f64 * NODE_STEP + CHUNK as f64 * NODE_STEP;
            if is_right {
                extend_right(&local, &mut side, t, *deterministic)?;
            } else {
                extend_left(&local, &mut side, t, *deterministic)?;
            }
        }
    }

    /// `(zeta'(x), g0'(x))`.
    pub fn derivatives(&self, x: f64) -> Result<(f64, f64)> {
        if !self.model.is_interior(x) {
            return Err(Error::InvalidParameter(format!("derivative requested at non-interior x = {x}")));
        }
        let local = Local {
            model: &self.model,
            holding: &self.holding,
        };
        match &self.kind {
            Kind::Closed(o) => Ok(((o.zeta_prime)(x), (o.g0_prime)(x))),
            Kind::Tables { deterministic: true, .. } => {
                let (zp, gp, _, _) = local.deterministic_derivs(x)?;
                Ok((zp, gp))
            }
            Kind::Tables { .. } => {
                // upper node of the bracket carries the outward information
                let q = self.with_bracket(x, |p, q| if p.x >= q.x { *p } else { *q })?;
                if q.x <= x {
                    return Ok((q.zeta_p, q.g0_p));
                }
                let (dz, dg) = local.panel(x, q.x)?;
                let damp = (-self.model.log_scale_increment(x, q.x)?).exp();
                Ok((dz + damp * q.zeta_p, dg + damp * q.g0_p))
            }
        }
    }

    /// `(zeta''(x), g0''(x))`.
    pub fn second_derivatives(&self, x: f64) -> Result<(f64, f64)> {
        let local = Local {
            model: &self.model,
            holding: &self.holding,
        };
        if self.model.is_deterministic() {
            let (_, _, zpp, gpp) = local.deterministic_derivs(x)?;
            return Ok((zpp, gpp));
        }
        let (zp, gp) = self.derivatives(x)?;
        local.second(x, zp, gp)
    }

    pub fn node_count(&self) -> usize {
        match &self.kind {
            Kind::Closed(_) => 0,
            Kind::Tables { right, left, .. } => right.read().nodes.len() + left.read().nodes.len() - 1,
        }
    }
}

fn node_positions(side: &Side, from: usize, target_t: f64, right: bool) -> (Vec<f64>, bool) {
    let mut xs = Vec::new();
    let mut prev = side.nodes.get(from.wrapping_sub(1)).map_or(f64::NAN, |n| n.x);
    let mut k = from;
    loop {
        let t = k as f64 * NODE_STEP;
        if t > target_t {
            return (xs, false);
        }
        let x = side.map.at(t);
        if k > 0 && side.map.exhausted(x, prev, right) {
            return (xs, true);
        }
        xs.push(x);
        prev = x;
        k += 1;
    }
}

/// Builds or extends the right side up to `target_t`, seeding the derivative
/// recursion with a tail integral at the new outermost node.
fn build_right(local: &Local, side: &mut Side, x0: f64, target_t: f64, deterministic: bool) -> Result<f64> {
    debug_assert!(side.nodes.is_empty());
    let (xs, exhausted) = node_positions(side, 0, target_t, true);
    debug_assert_eq!(xs[0], x0);
    side.exhausted = exhausted;
    append_right(local, side, &xs, deterministic)
}

fn extend_right(local: &Local, side: &mut Side, target_t: f64, deterministic: bool) -> Result<()> {
    if side.exhausted {
        return Ok(());
    }
    let from = side.nodes.len();
    let (xs, exhausted) = node_positions(side, from, target_t, true);
    side.exhausted = exhausted;
    if !xs.is_empty() {
        append_right(local, side, &xs, deterministic)?;
    }
    Ok(())
}

fn append_right(local: &Local, side: &mut Side, xs: &[f64], deterministic: bool) -> Result<f64> {
    let model = local.model;
    let n = xs.len();
    let mut ls = Vec::with_capacity(n);
    let (mut prev_x, mut prev_l) = match side.nodes.last() {
        Some(nd) => (nd.x, nd.l),
        None => (xs[0], 0.0),
    };
    if !deterministic {
        for &x in xs {
            prev_l += model.log_scale_increment(prev_x, x)?;
            prev_x = x;
            ls.push(prev_l);
        }
    } else {
        ls.resize(n, 0.0);
    }
    let mut derivs = vec![(0.0, 0.0, 0.0, 0.0); n];
    let mut tail_err = 0.0;
    if deterministic {
        for (i, &x) in xs.iter().enumerate() {
            derivs[i] = local.deterministic_derivs(x)?;
        }
    } else {
        let top = xs[n - 1];
        let b = model.interval().1;
        let (tz, tg, err) = tail(local, top, b)?;
        tail_err = err;
        let (zpp, gpp) = local.second(top, tz, tg)?;
        derivs[n - 1] = (tz, tg, zpp, gpp);
        for i in (0..n - 1).rev() {
            let (p, q) = (xs[i], xs[i + 1]);
            let (dz, dg) = local.panel(p, q)?;
            let damp = (ls[i] - ls[i + 1]).exp();
            let zp = dz + damp * derivs[i + 1].0;
            let gp = dg + damp * derivs[i + 1].1;
            let (zpp, gpp) = local.second(p, zp, gp)?;
            derivs[i] = (zp, gp, zpp, gpp);
        }
    }
    for i in 0..n {
        let (zp, gp, zpp, gpp) = derivs[i];
        let (zeta, g0) = match side.nodes.last() {
            None => (0.0, 0.0),
            Some(p) => {
                let h = xs[i] - p.x;
                (
                    p.zeta + trapezoid(h, p.zeta_p, zp, p.zeta_pp, zpp),
                    p.g0 + trapezoid(h, p.g0_p, gp, p.g0_pp, gpp),
                )
            }
        };
        let node = Node {
            x: xs[i],
            l: ls[i],
            zeta,
            zeta_p: zp,
            zeta_pp: zpp,
            g0,
            g0_p: gp,
            g0_pp: gpp,
        };
        check_node(&node)?;
        side.nodes.push(node);
    }
    Ok(tail_err)
}

fn check_node(n: &Node) -> Result<()> {
    let vals = [n.zeta, n.zeta_p, n.zeta_pp, n.g0, n.g0_p, n.g0_pp];
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrabilityFailure {
            from: n.x,
            detail: format!("non-finite cycle functional at x = {}", n.x),
        })
    }
}

fn extend_left(local: &Local, side: &mut Side, target_t: f64, deterministic: bool) -> Result<()> {
    if side.exhausted {
        return Ok(());
    }
    let from = side.nodes.len();
    let (xs, exhausted) = node_positions(side, from, target_t, false);
    for x in xs {
        let q = *side.nodes.last().expect("left side starts at the anchor");
        let (zp, gp, zpp, gpp, l) = if deterministic {
            let (zp, gp, zpp, gpp) = local.deterministic_derivs(x)?;
            (zp, gp, zpp, gpp, 0.0)
        } else {
            let l = q.l + local.model.log_scale_increment(q.x, x)?;
            let (dz, dg) = local.panel(x, q.x)?;
            let damp = (l - q.l).exp();
            let zp = dz + damp * q.zeta_p;
            let gp = dg + damp * q.g0_p;
            let (zpp, gpp) = local.second(x, zp, gp)?;
            (zp, gp, zpp, gpp, l)
        };
        let h = q.x - x;
        let node = Node {
            x,
            l,
            zeta: q.zeta - trapezoid(h, zp, q.zeta_p, zpp, q.zeta_pp),
            zeta_p: zp,
            zeta_pp: zpp,
            g0: q.g0 - trapezoid(h, gp, q.g0_p, gpp, q.g0_pp),
            g0_p: gp,
            g0_pp: gpp,
        };
        if check_node(&node).is_err() {
            // stop before values lose representability
            side.exhausted = true;
            return Ok(());
        }
        side.nodes.push(node);
    }
    side.exhausted |= exhausted;
    Ok(())
}

/// `(int_x^b w e^{L(x) - L(v)} dv)` for both weights, plus an error estimate.
fn tail(local: &Local, x: f64, b: f64) -> Result<(f64, f64, f64)> {
    let model = local.model;
    let fail = |e: Error| match e {
        Error::DivergentTail { .. } | Error::NonFiniteIntegrand { .. } => Error::IntegrabilityFailure {
            from: x,
            detail: e.to_string(),
        },
        other => other,
    };
    let integrand = |weight: usize| {
        move |v: f64| -> f64 {
            let e = match model.log_scale_increment(x, v) {
                Ok(d) => (-d).exp(),
                Err(_) => return f64::NAN,
            };
            match local.weights(v) {
                Ok((wz, wg)) => e * if weight == 0 { wz } else { wg },
                Err(_) => f64::NAN,
            }
        }
    };
    let probe_hi = if b.is_finite() { x + 0.5 * (b - x) } else { x + x.abs().max(1.0) };
    let mut out = [0.0; 2];
    let mut err = 0.0;
    for (k, slot) in out.iter_mut().enumerate() {
        let rough = gauss_fixed(integrand(k), x, probe_hi, 20).abs();
        let tol = 1e-11 * rough.max(1e-300);
        let r = integrate_to_boundary(integrand(k), x, b, tol).map_err(fail)?;
        if !r.value.is_finite() {
            return Err(Error::IntegrabilityFailure {
                from: x,
                detail: "tail integral is not finite".into(),
            });
        }
        *slot = r.value;
        err += r.error_estimate;
    }
    Ok((out[0], out[1], err))
}

/// `Bf(y, z) = f(z) - f(y)`.
pub fn jump_b<F: Fn(f64) -> f64>(f: F, y: f64, z: f64) -> f64 {
    if y == z {
        return 0.0;
    }
    f(z) - f(y)
}

pub fn compute_g0(spec: &ProblemSpec, x: f64) -> Result<f64> {
    spec.functionals()?.g0(x)
}

pub fn compute_zeta(spec: &ProblemSpec, x: f64) -> Result<f64> {
    spec.functionals()?.zeta(x)
}

/// `F0 = (c1 + Bg0) / Bzeta`, infinite on the diagonal band.
pub fn compute_f0(spec: &ProblemSpec, y: f64, z: f64) -> Result<f64> {
    if y > z {
        return Err(Error::OutOfRegion { y, z });
    }
    if z - y < spec.diag_gap() {
        return Ok(f64::INFINITY);
    }
    let fun = spec.functionals()?;
    let bz = fun.zeta(z)? - fun.zeta(y)?;
    let bg = fun.g0(z)? - fun.g0(y)?;
    Ok((spec.costs().ordering(y, z) + bg) / bz)
}

/// Hatted pieces of a policy: `(c1 hat, (Bg0) hat, (Bzeta) hat)`.
pub fn hats(spec: &ProblemSpec, y: f64, z: f64) -> Result<(f64, f64, f64)> {
    let fun = spec.functionals()?;
    let nodes = spec.yields().nodes(y, z)?;
    let (zy, gy) = (fun.zeta(y)?, fun.g0(y)?);
    let (mut c1, mut bg, mut bz) = (0.0, 0.0, 0.0);
    for (v, w) in nodes {
        c1 += w * spec.costs().ordering(y, v);
        bg += w * (fun.g0(v)? - gy);
        bz += w * (fun.zeta(v)? - zy);
    }
    Ok((c1, bg, bz))
}

/// `H0 = (c1 hat + (Bg0) hat) / (Bzeta) hat`, infinite on the diagonal band.
pub fn compute_h0(spec: &ProblemSpec, y: f64, z: f64) -> Result<f64> {
    if y > z {
        return Err(Error::OutOfRegion { y, z });
    }
    if z - y < spec.diag_gap() {
        return Ok(f64::INFINITY);
    }
    let (c1, bg, bz) = hats(spec, y, z)?;
    Ok((c1 + bg) / bz)
}

/// `H0` through its mixture representation `int F0(y, v) P(dv; y, z)`.
pub fn compute_h0_via_mixture(spec: &ProblemSpec, y: f64, z: f64) -> Result<f64> {
    if y > z {
        return Err(Error::OutOfRegion { y, z });
    }
    if z - y < spec.diag_gap() {
        return Ok(f64::INFINITY);
    }
    let fun = spec.functionals()?;
    let (zy, gy) = (fun.zeta(y)?, fun.g0(y)?);
    let nodes = spec.yields().nodes(y, z)?;
    let mut weighted = Vec::with_capacity(nodes.len());
    let mut norm = 0.0;
    for (v, w) in nodes {
        let bz = fun.zeta(v)? - zy;
        let f0 = (spec.costs().ordering(y, v) + fun.g0(v)? - gy) / bz;
        weighted.push((f0, w * bz));
        norm += w * bz;
    }
    Ok(weighted.iter().map(|&(f, m)| f * m / norm).sum())
}

/// `P((c, d]; y, z) = int_{(c,d]} Bzeta(y, v) Q(dv) / (Bzeta) hat`.
pub fn frak_p(spec: &ProblemSpec, y: f64, z: f64, c: f64, d: f64) -> Result<f64> {
    if y >= z {
        return Err(Error::OutOfRegion { y, z });
    }
    let fun = spec.functionals()?;
    let zy = fun.zeta(y)?;
    let part: f64 = spec
        .yields()
        .nodes_in(y, z, c, d)?
        .iter()
        .map(|&(v, w)| fun.zeta(v).map(|zv| w * (zv - zy)))
        .sum::<Result<f64>>()?;
    let total: f64 = spec
        .yields()
        .nodes(y, z)?
        .iter()
        .map(|&(v, w)| fun.zeta(v).map(|zv| w * (zv - zy)))
        .sum::<Result<f64>>()?;
    Ok((part / total).clamp(0.0, 1.0))
}

/// Analytic long-run statistics of the nominal `(y, z)` policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub y: f64,
    pub z: f64,
    #[serde(rename = "H0")]
    pub h0: f64,
    #[serde(rename = "F0_at_yz")]
    pub f0_at_yz: f64,
    pub hat_c1: f64,
    #[serde(rename = "hat_Bg0")]
    pub hat_bg0: f64,
    #[serde(rename = "hat_Bzeta")]
    pub hat_bzeta: f64,
    pub kappa_hat: f64,
    pub mean_supply: f64,
}

pub fn evaluate_policy(spec: &ProblemSpec, y: f64, z: f64) -> Result<PolicyEvaluation> {
    if !(y < z) {
        return Err(Error::OutOfRegion { y, z });
    }
    let (a, b) = spec.diffusion().interval();
    if !(y >= a && z < b) || (y == a && spec.diffusion().left_behavior() == LeftBehavior::Natural) {
        return Err(Error::InvalidParameter(format!("policy ({y}, {z}) is outside the state interval")));
    }
    let (hat_c1, hat_bg0, hat_bzeta) = hats(spec, y, z)?;
    let h0 = (hat_c1 + hat_bg0) / hat_bzeta;
    debug_assert!(hat_bzeta > 0.0);
    Ok(PolicyEvaluation {
        y,
        z,
        h0,
        f0_at_yz: compute_f0(spec, y, z)?,
        hat_c1,
        hat_bg0,
        hat_bzeta,
        kappa_hat: 1.0 / hat_bzeta,
        mean_supply: spec.yields().mean(y, z)? - y,
    })
}

/// `U0 = g0 - h * zeta`.
pub fn u0(spec: &ProblemSpec, h: f64, x: f64) -> Result<f64> {
    let fun = spec.functionals()?;
    Ok(fun.g0(x)? - h * fun.zeta(x)?)
}

/// `U0' = g0' - h * zeta'`.
pub fn u0_prime(spec: &ProblemSpec, h: f64, x: f64) -> Result<f64> {
    let (zp, gp) = spec.functionals()?.derivatives(x)?;
    Ok(gp - h * zp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::RightBehavior;
    use crate::yields::YieldFamily;
    use std::sync::Arc;

    fn logistic_quadrature(yields: YieldFamily) -> ProblemSpec {
        let (mu, sigma) = (0.05, 0.1);
        let model = DiffusionModel::new(
            Arc::new(move |x| -mu * x * (1.0 - x)),
            Arc::new(move |x| sigma * x * (1.0 - x)),
            (0.0, 1.0),
            0.5,
            LeftBehavior::Natural,
            RightBehavior::Natural,
        )
        .unwrap();
        let costs = CostModel::new(
            Arc::new(|x| 100.0 * (x - 0.5) * (x - 0.5)),
            (25.0, 25.0),
            Arc::new(|y, z| 9.0 + 4.0 * (z - y)),
            9.0,
        )
        .unwrap();
        ProblemSpec::new(model, costs, yields, "logistic").unwrap()
    }

    fn closed_zeta(x: f64) -> f64 {
        let (b, s2) = (-10.0f64, 0.01);
        let d = s2 * b * (b * b - 1.0);
        -2.0 * (1.0 - 2.0 * x + 2.0 * b * (2.0 - 2.0 * x).ln() + b * (1.0 + b) * (x / (1.0 - x)).ln()) / d
    }

    fn closed_g0(x: f64) -> f64 {
        let (b, s2, k0) = (-10.0f64, 0.01, 100.0);
        let d = s2 * b * (b * b - 1.0);
        k0 * ((2.0 * x - 1.0) * (2.0 * b * b - 1.0) - 2.0 * b * (2.0 - 2.0 * x).ln() - b * (1.0 + b) * (x / (1.0 - x)).ln())
            / (2.0 * d)
    }

    #[test]
    fn anchor_values_vanish() {
        let spec = logistic_quadrature(YieldFamily::Dirac);
        assert_eq!(compute_zeta(&spec, 0.5).unwrap(), 0.0);
        assert_eq!(compute_g0(&spec, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_tables_match_closed_forms() {
        let spec = logistic_quadrature(YieldFamily::Dirac);
        assert!((closed_zeta(0.25) + 21.512).abs() < 1e-3);
        assert!((closed_g0(0.25) + 37.800).abs() < 1e-3);
        for i in 1..50 {
            let x = i as f64 / 50.0;
            let z = compute_zeta(&spec, x).unwrap();
            let g = compute_g0(&spec, x).unwrap();
            assert!((z - closed_zeta(x)).abs() < 1e-6 * (1.0 + z.abs()), "zeta({x}) {z} vs {}", closed_zeta(x));
            assert!((g - closed_g0(x)).abs() < 1e-6 * (1.0 + g.abs()), "g0({x}) {g} vs {}", closed_g0(x));
        }
    }

    #[test]
    fn signs_and_monotonicity() {
        let spec = logistic_quadrature(YieldFamily::Dirac);
        let mut prev = f64::NEG_INFINITY;
        for i in 1..200 {
            let x = i as f64 / 200.0;
            let z = compute_zeta(&spec, x).unwrap();
            let g = compute_g0(&spec, x).unwrap();
            assert!(z > prev);
            prev = z;
            if x < 0.5 {
                assert!(z < 0.0 && g < 0.0);
            } else if x > 0.5 {
                assert!(z > 0.0 && g > 0.0);
            }
        }
    }

    #[test]
    fn dirac_h0_equals_f0() {
        let spec = logistic_quadrature(YieldFamily::Dirac);
        for &(y, z) in &[(0.3, 0.6), (0.381724, 0.56993), (0.1, 0.9)] {
            let h = compute_h0(&spec, y, z).unwrap();
            let f = compute_f0(&spec, y, z).unwrap();
            assert!((h - f).abs() < 1e-12);
        }
        assert_eq!(compute_h0(&spec, 0.4, 0.4).unwrap(), f64::INFINITY);
        assert!(matches!(compute_h0(&spec, 0.5, 0.4), Err(Error::OutOfRegion { .. })));
    }

    #[test]
    fn jump_operator_telescopes() {
        let f = |x: f64| x.sin() * 3.0;
        assert_eq!(jump_b(f, 0.2, 0.2), 0.0);
        let (y, v, z) = (0.1, 0.4, 0.9);
        assert!((jump_b(f, y, v) + jump_b(f, v, z) - jump_b(f, y, z)).abs() < 1e-15);
    }

    #[test]
    fn mixture_representation_agrees() {
        let spec = logistic_quadrature(YieldFamily::ZSkewedUniform { j: 10, k: 1.0 });
        for &(y, z) in &[(0.2, 0.5), (0.384973, 0.6575), (0.05, 0.95)] {
            let a = compute_h0(&spec, y, z).unwrap();
            let b = compute_h0_via_mixture(&spec, y, z).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn derivatives_match_closed_forms() {
        let spec = logistic_quadrature(YieldFamily::Dirac);
        let fun = spec.functionals().unwrap();
        let (b, s2, k0) = (-10.0f64, 0.01, 100.0);
        let d = s2 * b * (b * b - 1.0);
        for &x in &[0.05, 0.3, 0.5, 0.77, 0.97] {
            let (zp, gp) = fun.derivatives(x).unwrap();
            let ezp = -2.0 * (-2.0 - 2.0 * b / (1.0 - x) + b * (1.0 + b) / (x * (1.0 - x))) / d;
            let egp = k0 * (2.0 * (2.0 * b * b - 1.0) + 2.0 * b / (1.0 - x) - b * (1.0 + b) / (x * (1.0 - x))) / (2.0 * d);
            assert!(((zp - ezp) / ezp).abs() < 1e-8, "{x}: {zp} vs {ezp}");
            assert!(((gp - egp) / egp).abs() < 1e-8, "{x}: {gp} vs {egp}");
        }
    }

    #[test]
    fn generator_of_zeta_is_minus_one() {
        use crate::diffusion::{apply_generator, WithDerivative};
        let spec = logistic_quadrature(YieldFamily::Dirac);
        let fun = spec.functionals().unwrap();
        for i in 1..20 {
            let x = i as f64 / 20.0;
            let f = WithDerivative(|u| fun.zeta(u).unwrap(), |u| fun.derivatives(u).unwrap().0);
            let g = apply_generator(&f, spec.diffusion(), x).unwrap();
            assert!((g.value + 1.0).abs() < 1e-6, "{x}: {}", g.value);
            let f = WithDerivative(|u| fun.g0(u).unwrap(), |u| fun.derivatives(u).unwrap().1);
            let g = apply_generator(&f, spec.diffusion(), x).unwrap();
            let c0 = 100.0 * (x - 0.5) * (x - 0.5);
            assert!((g.value + c0).abs() < 1e-5 * (1.0 + c0), "{x}: {} vs {}", g.value, -c0);
        }
    }

    #[test]
    fn frak_p_is_a_probability() {
        let spec = logistic_quadrature(YieldFamily::ZSkewedUniform { j: 10, k: 1.0 });
        let (y, z) = (0.3, 0.7);
        assert!((frak_p(&spec, y, z, y, z).unwrap() - 1.0).abs() < 1e-14);
        let lo = frak_p(&spec, y, z, y, 0.6).unwrap();
        let hi = frak_p(&spec, y, z, 0.6, z).unwrap();
        assert!((lo + hi - 1.0).abs() < 1e-12);
        let dirac = spec.with_yields(YieldFamily::Dirac).unwrap();
        assert_eq!(frak_p(&dirac, y, z, z - 1e-9, z).unwrap(), 1.0);
    }

    #[test]
    fn deterministic_zeta_is_transit_time() {
        let model = DiffusionModel::deterministic(
            Arc::new(|x| -0.05 * x * (1.0 - x)),
            (0.0, 1.0),
            0.5,
            LeftBehavior::Natural,
            RightBehavior::Natural,
        )
        .unwrap();
        let costs = CostModel::new(Arc::new(|x| 100.0 * (x - 0.5) * (x - 0.5)), (25.0, 25.0), Arc::new(|y, z| 9.0 + 4.0 * (z - y)), 9.0).unwrap();
        let spec = ProblemSpec::new(model, costs, YieldFamily::Dirac, "det").unwrap();
        let (y, z) = (0.40567, 0.59433);
        let bz = compute_zeta(&spec, z).unwrap() - compute_zeta(&spec, y).unwrap();
        let exact = 20.0 * (z * (1.0 - y) / (y * (1.0 - z))).ln();
        assert!((bz - exact).abs() < 1e-8, "{bz} vs {exact}");
        assert!((bz - 15.2759).abs() < 1e-3);
    }

    #[test]
    fn drifted_bm_tables_match_closed_forms() {
        // mu = 1, sigma = 1, x0 = 0: zeta(x) = x / mu, g0 for c0 = x^2 is known
        let model = DiffusionModel::new(
            Arc::new(|_| -1.0),
            Arc::new(|_| 1.0),
            (f64::NEG_INFINITY, f64::INFINITY),
            0.0,
            LeftBehavior::Natural,
            RightBehavior::Natural,
        )
        .unwrap();
        let costs = CostModel::new(Arc::new(|x| x * x), (f64::INFINITY, f64::INFINITY), Arc::new(|_, _| 1.0), 1.0).unwrap();
        let spec = ProblemSpec::new(model, costs, YieldFamily::Dirac, "bm").unwrap();
        // g0'(x) = int_x^inf 2 v^2 e^{2(x - v)} dv = x^2 + x + 1/2
        for &x in &[-30.0, -3.0, -0.5, 0.7, 4.0, 40.0] {
            let z = compute_zeta(&spec, x).unwrap();
            assert!((z - x).abs() < 1e-8 * (1.0 + x.abs()), "zeta({x}) = {z}");
            let g = compute_g0(&spec, x).unwrap();
            let e = x * x * x / 3.0 + x * x / 2.0 + x / 2.0;
            assert!((g - e).abs() < 1e-7 * (1.0 + e.abs()), "g0({x}) = {g} vs {e}");
        }
    }
}
