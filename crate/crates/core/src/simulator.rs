//! Monte Carlo simulation of the controlled inventory process under a nominal
//! `(y, z)` policy with random yields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionModel, LeftBehavior};
use crate::error::{Error, Result};
use crate::functionals::evaluate_policy;
use crate::problem::ProblemSpec;

/// How an order is triggered between grid times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    /// Order at the first grid time with `X <= y`, from the overshot level.
    GridLevel,
    /// Also order when a Brownian bridge between grid values would have
    /// touched `y`; the pre-order level is `y` itself.
    ContinuousCrossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub y: f64,
    pub z: f64,
    pub horizon: f64,
    pub time_step: f64,
    pub replications: usize,
    pub seed: u64,
    /// Defaults to five analytic cycle lengths.
    pub burn_in: Option<f64>,
    pub trigger: TriggerMode,
    pub histogram_bins: usize,
    /// Record every n-th step of replication 0.
    pub path_every: Option<usize>,
    pub max_halvings: u32,
}

impl SimulationConfig {
    pub fn new(y: f64, z: f64) -> Self {
        Self {
            y,
            z,
            horizon: 5e4,
            time_step: 1e-3,
            replications: 32,
            seed: 20_240_901,
            burn_in: None,
            trigger: TriggerMode::ContinuousCrossing,
            histogram_bins: 50,
            path_every: None,
            max_halvings: 30,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.y < self.z) {
            return Err(Error::OutOfRegion { y: self.y, z: self.z });
        }
        if !(self.time_step > 0.0 && self.horizon > 0.0 && self.time_step < 1e-2 * self.horizon) {
            return Err(Error::InvalidParameter(format!(
                "time step {} must be positive and much smaller than the horizon {}",
                self.time_step, self.horizon
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("at least one replication is required".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error across replications; `NaN` for a single replication.
    pub se: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, se: f64::NAN };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEvent {
    pub t: f64,
    /// Level the order is placed from.
    pub pre: f64,
    pub delivered: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathEvent {
    Step,
    Order,
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub x: f64,
    pub event: PathEvent,
}

/// Occupation time over bins of `[lo, hi]`, with the outside time kept apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub mass: Vec<f64>,
    pub below: f64,
    pub above: f64,
}

impl Histogram {
    fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            lo,
            hi,
            mass: vec![0.0; bins],
            below: 0.0,
            above: 0.0,
        }
    }

    #[inline]
    fn add(&mut self, x: f64, w: f64) {
        if x < self.lo {
            self.below += w;
        } else if x >= self.hi {
            self.above += w;
        } else {
            let n = self.mass.len();
            let k = ((x - self.lo) / (self.hi - self.lo) * n as f64) as usize;
            self.mass[k.min(n - 1)] += w;
        }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.below + self.above
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            lo: self.lo,
            hi: self.hi,
            mass: self.mass.iter().map(|m| m * s).collect(),
            below: self.below * s,
            above: self.above * s,
        }
    }
}

/// Raw log of one replication over its measurement window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub window: f64,
    pub holding_cost: f64,
    pub ordering_cost: f64,
    pub orders: Vec<OrderEvent>,
    /// Durations of cycles completed inside the window.
    pub cycles: Vec<f64>,
    pub occupation: Histogram,
    pub local_time: f64,
    pub flagged: bool,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasures {
    /// Occupation measure normalized by the window length.
    pub occupation: Histogram,
    /// Mass of the ordering measure: orders per unit time.
    pub ordering_mass: f64,
    /// Mass of the stock-level measure, equal to `ordering_mass`.
    pub stock_level_mass: f64,
    pub local_time_rate: f64,
}

/// Time-averaged empirical measures of one replication over a window `t`.
pub fn empirical_measures(rec: &ReplicationRecord, t: f64) -> EmpiricalMeasures {
    let rate = rec.orders.len() as f64 / t;
    EmpiricalMeasures {
        occupation: rec.occupation.scaled(1.0 / t),
        ordering_mass: rate,
        stock_level_mass: rate,
        local_time_rate: rec.local_time / t,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    #[serde(rename = "J_estimate")]
    pub j_estimate: Estimate,
    pub mean_cycle_length: Estimate,
    pub order_frequency: Estimate,
    pub mean_supply: Estimate,
    pub occupation_histogram: Histogram,
    pub ordering_mass: f64,
    pub stock_level_mass: f64,
    pub local_time_rate: Option<Estimate>,
    pub replications: usize,
    pub flagged_replications: usize,
    pub total_orders: usize,
    pub burn_in: f64,
    pub path: Vec<PathPoint>,
    pub seed: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent noise and event streams for replication `i`.
fn streams(seed: u64, i: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let s = splitmix64(seed ^ splitmix64(i as u64 + 1));
    (
        ChaCha8Rng::seed_from_u64(s),
        ChaCha8Rng::seed_from_u64(splitmix64(s ^ 0x5DEE_CE66_D1CE_4E5B)),
    )
}

struct Replicator<'a> {
    spec: &'a ProblemSpec,
    cfg: &'a SimulationConfig,
    burn_in: f64,
    hist: (f64, f64),
}

struct State {
    x: f64,
    t: f64,
    c_prev: f64,
}

struct Sink {
    rec: ReplicationRecord,
    last_order: Option<f64>,
    path: Option<(usize, Vec<PathPoint>)>,
    step_count: usize,
}

impl Sink {
    fn holding(&mut self, t: f64, x0: f64, x1: f64, dt: f64, c: f64, burn: f64) {
        if t >= burn {
            self.rec.holding_cost += c * dt;
            self.rec.occupation.add(0.5 * (x0 + x1), dt);
        }
    }

    fn point(&mut self, t: f64, x: f64, event: PathEvent) {
        if let Some((every, p)) = &mut self.path {
            if event != PathEvent::Step || self.step_count.is_multiple_of(*every) {
                p.push(PathPoint { t, x, event });
            }
        }
    }
}

impl Replicator<'_> {
    fn order(&self, sink: &mut Sink, t: f64, pre: f64, events: &mut ChaCha8Rng) -> f64 {
        let cfg = self.cfg;
        let v = self.spec.yields().sample_yield(pre, cfg.z, events);
        if t >= self.burn_in {
            sink.rec.ordering_cost += self.spec.costs().ordering(pre, v);
            sink.rec.orders.push(OrderEvent { t, pre, delivered: v });
            if let Some(prev) = sink.last_order {
                sink.rec.cycles.push(t - prev);
            }
            sink.last_order = Some(t);
        }
        sink.point(t, v, PathEvent::Order);
        v
    }

    fn run(&self, i: usize) -> (ReplicationRecord, Vec<PathPoint>) {
        let model = self.spec.diffusion();
        let cfg = self.cfg;
        let (mut noise, mut events) = streams(cfg.seed, i);
        let mut sink = Sink {
            rec: ReplicationRecord {
                window: cfg.horizon - self.burn_in,
                holding_cost: 0.0,
                ordering_cost: 0.0,
                orders: Vec::new(),
                cycles: Vec::new(),
                occupation: Histogram::new(self.hist.0, self.hist.1, cfg.histogram_bins),
                local_time: 0.0,
                flagged: false,
                steps: 0,
            },
            last_order: None,
            path: match (i, cfg.path_every) {
                (0, Some(n)) => Some((n.max(1), Vec::new())),
                _ => None,
            },
            step_count: 0,
        };
        let mut x = model.anchor();
        let mut t = 0.0;
        if x <= cfg.y {
            x = self.order(&mut sink, t, x, &mut events);
        }
        sink.point(t, x, PathEvent::Step);
        if model.is_deterministic() {
            self.run_ode(&mut sink, x, &mut events);
        } else if let Err(flag) = self.run_sde(&mut sink, &mut x, &mut t, &mut noise, &mut events) {
            sink.rec.flagged = flag;
        }
        let path = sink.path.map(|p| p.1).unwrap_or_default();
        (sink.rec, path)
    }

    /// One Euler-Maruyama step from `x` over `dt`, halving on escape.
    fn em_step(&self, model: &DiffusionModel, x: f64, dt: f64, noise: &mut ChaCha8Rng, depth: u32) -> Option<Vec<(f64, f64)>> {
        let (a, b) = model.interval();
        let reflecting = model.left_behavior() == LeftBehavior::RegularReflecting;
        let xi: f64 = noise.sample(StandardNormal);
        let xn = x + model.drift(x) * dt + model.dispersion(x) * dt.sqrt() * xi;
        let escaped = (xn <= a && !reflecting) || xn >= b || !xn.is_finite();
        if !escaped {
            return Some(vec![(xn, dt)]);
        }
        if depth >= self.cfg.max_halvings {
            return None;
        }
        let mut out = self.em_step(model, x, 0.5 * dt, noise, depth + 1)?;
        let mid = out.last().expect("nonempty").0.max(a);
        out.extend(self.em_step(model, mid, 0.5 * dt, noise, depth + 1)?);
        Some(out)
    }

    fn run_sde(
        &self,
        sink: &mut Sink,
        x: &mut f64,
        t: &mut f64,
        noise: &mut ChaCha8Rng,
        events: &mut ChaCha8Rng,
    ) -> std::result::Result<(), bool> {
        let model = self.spec.diffusion();
        let cfg = self.cfg;
        let (a, b) = model.interval();
        let reflecting = model.left_behavior() == LeftBehavior::RegularReflecting;
        let mut st = State {
            x: *x,
            t: *t,
            c_prev: self.spec.costs().holding(*x),
        };
        let sq = cfg.time_step.sqrt();
        while st.t < cfg.horizon {
            let dt = cfg.time_step.min(cfg.horizon - st.t);
            let s = model.dispersion(st.x);
            let xi: f64 = noise.sample(StandardNormal);
            let root = if dt == cfg.time_step { sq } else { dt.sqrt() };
            let xn = st.x + model.drift(st.x) * dt + s * root * xi;
            if !((xn <= a && !reflecting) || xn >= b || !xn.is_finite()) {
                self.advance(sink, &mut st, xn, dt, s, events);
                continue;
            }
            // escape: redo the step as two halves, recursively
            let mut pieces = self.em_step(model, st.x, 0.5 * dt, noise, 1).ok_or(true)?;
            let last = pieces.last().expect("nonempty").0.max(a);
            pieces.extend(self.em_step(model, last, 0.5 * dt, noise, 1).ok_or(true)?);
            for (xn, h) in pieces {
                let s = model.dispersion(st.x);
                if self.advance(sink, &mut st, xn, h, s, events) {
                    break;
                }
            }
        }
        *x = st.x;
        *t = st.t;
        Ok(())
    }

    /// Moves the state to `xn` over `h`, placing an order if the level `y`
    /// was reached. Returns whether an order was placed.
    #[inline]
    fn advance(&self, sink: &mut Sink, st: &mut State, mut xn: f64, h: f64, s_from: f64, events: &mut ChaCha8Rng) -> bool {
        let model = self.spec.diffusion();
        let cfg = self.cfg;
        let costs = self.spec.costs();
        let a = model.interval().0;
        let y = cfg.y;
        let x_from = st.x;
        let mut pre = None;
        if xn <= y {
            pre = Some(match cfg.trigger {
                TriggerMode::GridLevel => xn.max(a),
                TriggerMode::ContinuousCrossing => y,
            });
        } else if cfg.trigger == TriggerMode::ContinuousCrossing {
            let expo = 2.0 * (x_from - y) * (xn - y) / (s_from * s_from * h);
            if expo < 40.0 && events.random::<f64>() < (-expo).exp() {
                pre = Some(y);
            }
        }
        if let Some(p) = pre {
            let c_pre = costs.holding(p);
            sink.holding(st.t, x_from, p, h, 0.5 * (st.c_prev + c_pre), self.burn_in);
            st.t += h;
            sink.rec.steps += 1;
            st.x = self.order(sink, st.t, p, events);
            st.c_prev = costs.holding(st.x);
            return true;
        }
        if xn < a && model.left_behavior() == LeftBehavior::RegularReflecting {
            if st.t >= self.burn_in {
                sink.rec.local_time += a - xn;
            }
            xn = a;
            sink.point(st.t + h, xn, PathEvent::Reflect);
        }
        let c_new = costs.holding(xn);
        sink.holding(st.t, x_from, xn, h, 0.5 * (st.c_prev + c_new), self.burn_in);
        st.c_prev = c_new;
        st.x = xn;
        st.t += h;
        sink.rec.steps += 1;
        sink.step_count += 1;
        sink.point(st.t, xn, PathEvent::Step);
        false
    }

    /// Fixed-step RK4 on the drift; crossings of `y` are located by bisection
    /// on the cubic Hermite interpolant of the step.
    fn run_ode(&self, sink: &mut Sink, mut x: f64, events: &mut ChaCha8Rng) {
        let model = self.spec.diffusion();
        let cfg = self.cfg;
        let costs = self.spec.costs();
        let f = |x: f64| model.drift(x);
        let mut t = 0.0;
        while t < cfg.horizon {
            let h = cfg.time_step.min(cfg.horizon - t);
            let k1 = f(x);
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            let xn = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            sink.rec.steps += 1;
            if xn <= cfg.y {
                let fn_ = f(xn);
                let herm = |s: f64| {
                    let (s2, s3) = (s * s, s * s * s);
                    (2.0 * s3 - 3.0 * s2 + 1.0) * x + (s3 - 2.0 * s2 + s) * h * k1 + (-2.0 * s3 + 3.0 * s2) * xn + (s3 - s2) * h * fn_
                };
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if herm(mid) > cfg.y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let theta = 0.5 * (lo + hi);
                let tau = theta * h;
                // Simpson on the interpolant over the partial step
                let cm = costs.holding(herm(0.5 * theta));
                let c = (costs.holding(x) + 4.0 * cm + costs.holding(cfg.y)) / 6.0;
                sink.holding(t, x, cfg.y, tau, c, self.burn_in);
                t += tau;
                x = self.order(sink, t, cfg.y, events);
                continue;
            }
            let cm = costs.holding(x + 0.5 * h * k2);
            let c = (costs.holding(x) + 4.0 * cm + costs.holding(xn)) / 6.0;
            sink.holding(t, x, xn, h, c, self.burn_in);
            x = xn;
            t += h;
            sink.step_count += 1;
            sink.point(t, x, PathEvent::Step);
        }
    }
}

pub fn simulate(spec: &ProblemSpec, cfg: &SimulationConfig) -> Result<SimulationResult> {
    cfg.validate()?;
    let model = spec.diffusion();
    let (a, b) = model.interval();
    let y_ok = if model.left_behavior().is_attainable() { cfg.y >= a } else { cfg.y > a };
    if !(y_ok && cfg.z < b) {
        return Err(Error::InvalidParameter(format!(
            "policy ({}, {}) is outside the state interval",
            cfg.y, cfg.z
        )));
    }
    if model.left_behavior() == LeftBehavior::RegularSticky {
        return Err(Error::Unsupported("sticky boundaries are not simulated".into()));
    }
    let burn_in = match cfg.burn_in {
        Some(v) => v,
        None => 5.0 * evaluate_policy(spec, cfg.y, cfg.z)?.hat_bzeta,
    };
    if !(burn_in >= 0.0 && burn_in < cfg.horizon) {
        return Err(Error::InvalidParameter(format!(
            "burn-in {burn_in} must lie in [0, horizon = {})",
            cfg.horizon
        )));
    }
    let w = cfg.z - cfg.y;
    let hist = ((cfg.y - w).max(a), (cfg.z + w).min(b));
    let rep = Replicator {
        spec,
        cfg,
        burn_in,
        hist,
    };
    let runs: Vec<(ReplicationRecord, Vec<PathPoint>)> = (0..cfg.replications).into_par_iter().map(|i| rep.run(i)).collect();
    let path = runs.first().map(|r| r.1.clone()).unwrap_or_default();
    let good: Vec<&ReplicationRecord> = runs.iter().map(|r| &r.0).filter(|r| !r.flagged).collect();
    let flagged = runs.len() - good.len();
    if good.is_empty() {
        return Err(Error::StateEscapedDomain {
            t: f64::NAN,
            x: f64::NAN,
        });
    }
    let window = cfg.horizon - burn_in;
    let per = |f: &dyn Fn(&ReplicationRecord) -> f64| Estimate::from_samples(&good.iter().map(|r| f(r)).collect::<Vec<_>>());
    let j_estimate = per(&|r| (r.holding_cost + r.ordering_cost) / window);
    let order_frequency = per(&|r| r.orders.len() as f64 / window);
    let mean_cycle_length = per(&|r| r.cycles.iter().sum::<f64>() / r.cycles.len().max(1) as f64);
    let mean_supply = per(&|r| {
        r.orders.iter().map(|o| o.delivered - o.pre).sum::<f64>() / r.orders.len().max(1) as f64
    });
    let measures: Vec<EmpiricalMeasures> = good.iter().map(|r| empirical_measures(r, window)).collect();
    let n = measures.len() as f64;
    let mut occ = Histogram::new(hist.0, hist.1, cfg.histogram_bins);
    for m in &measures {
        for (acc, v) in occ.mass.iter_mut().zip(&m.occupation.mass) {
            *acc += v / n;
        }
        occ.below += m.occupation.below / n;
        occ.above += m.occupation.above / n;
    }
    let ordering_mass = measures.iter().map(|m| m.ordering_mass).sum::<f64>() / n;
    let local_time_rate = (model.left_behavior() == LeftBehavior::RegularReflecting)
        .then(|| Estimate::from_samples(&measures.iter().map(|m| m.local_time_rate).collect::<Vec<_>>()));
    Ok(SimulationResult {
        j_estimate,
        mean_cycle_length,
        order_frequency,
        mean_supply,
        occupation_histogram: occ,
        ordering_mass,
        stock_level_mass: ordering_mass,
        local_time_rate,
        replications: cfg.replications,
        flagged_replications: flagged,
        total_orders: good.iter().map(|r| r.orders.len()).sum(),
        burn_in,
        path,
        seed: cfg.seed,
    })
}

/// Raw replication logs, for inspection of individual paths.
pub fn simulate_records(spec: &ProblemSpec, cfg: &SimulationConfig) -> Result<Vec<ReplicationRecord>> {
    cfg.validate()?;
    let burn_in = cfg.burn_in.unwrap_or(0.0);
    let (a, b) = spec.diffusion().interval();
    let w = cfg.z - cfg.y;
    let rep = Replicator {
        spec,
        cfg,
        burn_in,
        hist: ((cfg.y - w).max(a), (cfg.z + w).min(b)),
    };
    Ok((0..cfg.replications).into_par_iter().map(|i| rep.run(i).0).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub quantity: String,
    pub analytic: f64,
    pub simulated: f64,
    pub se: f64,
    pub z_score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub y: f64,
    pub z: f64,
    pub rows: Vec<CompareRow>,
    pub any_flagged: bool,
    pub simulation: SimulationResult,
}

/// Threshold on `|z-score|` above which a row is flagged.
pub const Z_FLAG: f64 = 4.0;

fn row(quantity: &str, analytic: f64, est: Estimate) -> CompareRow {
    let diff = est.mean - analytic;
    // a spread below round-off means the estimator is exact per order
    let floor = 1e-12 * (1.0 + analytic.abs());
    let z_score = if est.se > floor {
        diff / est.se
    } else if diff.abs() <= floor {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    };
    CompareRow {
        quantity: quantity.into(),
        analytic,
        simulated: est.mean,
        se: est.se,
        z_score,
        flagged: !(z_score.abs() <= Z_FLAG),
    }
}

/// Renewal identities against Monte Carlo: `J` vs `H0`, cycle length vs
/// `(Bzeta)^`, frequency vs `kappa^`, supply vs `int (v - y) dQ`.
pub fn compare_sim_vs_analytic(spec: &ProblemSpec, cfg: &SimulationConfig) -> Result<CompareReport> {
    let ev = evaluate_policy(spec, cfg.y, cfg.z)?;
    let sim = simulate(spec, cfg)?;
    let rows = vec![
        row("J", ev.h0, sim.j_estimate),
        row("cycle_length", ev.hat_bzeta, sim.mean_cycle_length),
        row("order_frequency", ev.kappa_hat, sim.order_frequency),
        row("mean_supply", ev.mean_supply, sim.mean_supply),
    ];
    let any_flagged = rows.iter().any(|r| r.flagged);
    Ok(CompareReport {
        y: cfg.y,
        z: cfg.z,
        rows,
        any_flagged,
        simulation: sim,
    })
}

/// Transit time of the logistic ODE `x' = -mu x (k - x)` from `z` down to `y`.
pub fn logistic_transit_time(mu: f64, k: f64, y: f64, z: f64) -> f64 {
    (z * (k - y) / (y * (k - z))).ln() / (mu * k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{build_preset, logistic_model, ParamBag, PresetId};

    fn short(y: f64, z: f64) -> SimulationConfig {
        SimulationConfig {
            horizon: 400.0,
            replications: 4,
            burn_in: Some(20.0),
            ..SimulationConfig::new(y, z)
        }
    }

    #[test]
    fn seeds_reproduce_bit_for_bit() {
        let spec = logistic_model(3).unwrap();
        let cfg = short(0.385, 0.6575);
        assert_eq!(simulate(&spec, &cfg).unwrap(), simulate(&spec, &cfg).unwrap());
    }

    #[test]
    fn dirac_orders_land_on_z_and_supply_is_exact() {
        let spec = logistic_model(2).unwrap();
        let cfg = short(0.38, 0.57);
        for rec in simulate_records(&spec, &cfg).unwrap() {
            assert!(!rec.orders.is_empty());
            for o in &rec.orders {
                assert_eq!(o.delivered, 0.57);
                assert_eq!(o.pre, 0.38);
            }
        }
        let r = simulate(&spec, &cfg).unwrap();
        assert!((r.mean_supply.mean - 0.19).abs() < 1e-12);
    }

    #[test]
    fn delivered_levels_stay_between_pre_and_z() {
        let spec = logistic_model(3).unwrap();
        for trigger in [TriggerMode::GridLevel, TriggerMode::ContinuousCrossing] {
            let cfg = SimulationConfig { trigger, ..short(0.385, 0.6575) };
            for rec in simulate_records(&spec, &cfg).unwrap() {
                for o in &rec.orders {
                    assert!(o.pre < o.delivered && o.delivered <= 0.6575, "{o:?}");
                }
            }
        }
    }

    #[test]
    fn occupation_mass_is_one_and_masses_agree() {
        let spec = logistic_model(3).unwrap();
        let cfg = short(0.385, 0.6575);
        let recs = simulate_records(&spec, &cfg).unwrap();
        for rec in &recs {
            let m = empirical_measures(rec, rec.window);
            let steps = rec.steps as f64;
            assert!((m.occupation.total() - 1.0).abs() < 1e-12 * steps, "{}", m.occupation.total());
            assert_eq!(m.ordering_mass, m.stock_level_mass);
        }
        let r = simulate(&spec, &cfg).unwrap();
        assert_eq!(r.ordering_mass, r.stock_level_mass);
        assert!((r.order_frequency.mean - r.ordering_mass).abs() < 1e-12);
        assert!(r.ordering_mass <= r.j_estimate.mean / 9.0);
    }

    #[test]
    fn noise_stream_is_untouched_by_policy() {
        // between orders the path follows the same Euler increments as a
        // free path driven by the same noise stream
        let spec = logistic_model(2).unwrap();
        let model = spec.diffusion();
        let cfg = SimulationConfig {
            path_every: Some(1),
            replications: 1,
            horizon: 30.0,
            burn_in: Some(0.0),
            ..SimulationConfig::new(0.2, 0.57)
        };
        let r = simulate(&spec, &cfg).unwrap();
        let (mut noise, _) = streams(cfg.seed, 0);
        let mut x = model.anchor();
        let mut steps = r.path.iter().filter(|p| p.event == PathEvent::Step).skip(1);
        for _ in 0..1000 {
            let xi: f64 = noise.sample(StandardNormal);
            let s = model.dispersion(x);
            x = x + model.drift(x) * 1e-3 + s * 1e-3f64.sqrt() * xi;
            let p = steps.next().unwrap();
            assert_eq!(p.x, x);
        }
    }

    #[test]
    fn deterministic_cycle_matches_transit_time() {
        let spec = logistic_model(1).unwrap();
        let (y, z) = (0.40567, 0.59433);
        let cfg = SimulationConfig {
            horizon: 2000.0,
            replications: 1,
            ..SimulationConfig::new(y, z)
        };
        let r = simulate(&spec, &cfg).unwrap();
        let exact = logistic_transit_time(0.05, 1.0, y, z);
        assert!((r.mean_cycle_length.mean - exact).abs() < 1e-6, "{} vs {exact}", r.mean_cycle_length.mean);
        assert!((exact - 15.2759).abs() < 1e-2);
        assert!((r.j_estimate.mean - 0.938043).abs() < 2e-3, "{}", r.j_estimate.mean);
    }

    #[test]
    fn reflected_local_time_is_reported() {
        let spec = build_preset(PresetId::DriftedBmReflected, &ParamBag::new()).unwrap();
        let cfg = SimulationConfig {
            horizon: 200.0,
            replications: 2,
            burn_in: Some(10.0),
            ..SimulationConfig::new(0.0, 3.0)
        };
        let r = simulate(&spec, &cfg).unwrap();
        let lt = r.local_time_rate.unwrap();
        assert!(lt.mean >= 0.0);
        let cfg = SimulationConfig {
            horizon: 200.0,
            replications: 2,
            burn_in: Some(10.0),
            ..SimulationConfig::new(0.6, 5.0)
        };
        let far = simulate(&spec, &cfg).unwrap().local_time_rate.unwrap();
        assert!(far.mean < 1e-3, "{far:?}");
    }

    #[test]
    fn step_halving_guard() {
        let spec = logistic_model(3).unwrap();
        let base = SimulationConfig {
            horizon: 3000.0,
            replications: 8,
            burn_in: Some(60.0),
            time_step: 2e-3,
            ..SimulationConfig::new(0.385, 0.6575)
        };
        let a = simulate(&spec, &base).unwrap();
        let b = simulate(&spec, &SimulationConfig { time_step: 1e-3, ..base }).unwrap();
        let se = (a.j_estimate.se.powi(2) + b.j_estimate.se.powi(2)).sqrt();
        assert!((a.j_estimate.mean - b.j_estimate.mean).abs() < 2.0 * se, "{:?} {:?}", a.j_estimate, b.j_estimate);
    }

    #[test]
    fn invalid_policy_is_rejected() {
        let spec = logistic_model(3).unwrap();
        assert!(matches!(simulate(&spec, &short(0.5, 0.5)), Err(Error::OutOfRegion { .. })));
    }
}
