//! Monte Carlo for the reflected surplus under a threshold dividend policy.
//!
//! Paths are Euler–Maruyama with per-step overshoot projection at the barrier
//! and a linearly interpolated ruin time. Under the worst-case kernel the
//! drift is shifted by `σθ*` and each path carries the running tilt
//! `∫θ²/(2R) ds`, so one path contributes
//!
//! ```text
//! ∫ e^{T_s − ρ s} dD_s + e^{T_τ − ρ τ} ξ0,    T_s = ∫_0^s θ²/(2R) du.
//! ```
//!
//! With the zero kernel this is the classical discounted-dividend utility.
//! Every path draws from its own ChaCha8 stream `(seed, path index)`, and the
//! reduction runs in path order, so results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbp::FreeBoundarySolution;
use crate::model::SurplusModel;

/// Nodes in the coefficient table over `[0, b]`.
const TABLE_NODES: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Zero,
    WorstCase,
}

/// How the worst-case measure is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Simulate under the tilted measure by shifting the drift.
    #[default]
    DriftShift,
    /// Simulate under the reference measure and weight by the density.
    LikelihoodRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateMode {
    ClassicalK,
    MaenhoutTilted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub x0: f64,
    pub b: f64,
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub kernel: KernelKind,
    #[serde(default)]
    pub measure: Measure,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_max >= 100.0 * self.dt) {
            return bad(format!("t_max = {} must be at least 100 dt", self.t_max));
        }
        if self.n_paths < 1 {
            return bad("n_paths must be >= 1".into());
        }
        if !(self.x0 >= 0.0 && self.x0.is_finite()) {
            return bad(format!("x0 must be >= 0, got {}", self.x0));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad(format!("b must be > 0, got {}", self.b));
        }
        Ok(())
    }

    pub fn mode(&self) -> EstimateMode {
        match self.kernel {
            KernelKind::Zero => EstimateMode::ClassicalK,
            KernelKind::WorstCase => EstimateMode::MaenhoutTilted,
        }
    }

    fn n_steps(&self) -> u64 {
        (self.t_max / self.dt).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    /// Ruin time, or `t_max` when censored.
    pub ruin_time: f64,
    pub censored: bool,
    /// ∫ e^{−ρs} dD without the tilt.
    pub discounted_dividends: f64,
    pub tilt_integral: f64,
    /// e^{T_τ − ρτ} (or at `t_max` when censored).
    pub terminal_payout_factor: f64,
    /// Contribution of this path to the estimator.
    pub value: f64,
    /// A non-finite state ended the path early.
    pub anomaly: bool,
}

/// Linear-interpolation table of `[μ, σ, θ²/(2R), θ]` over `[0, b]`.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    b: f64,
    inv_dx: f64,
    nodes: Vec<[f64; 4]>,
}

impl CoefficientTable {
    pub fn new(model: &SurplusModel, b: f64, kernel: KernelKind, solution: Option<&FreeBoundarySolution>) -> Result<Self> {
        let n = TABLE_NODES;
        let dx = b / (n - 1) as f64;
        let r = model.r();
        let xi0 = model.xi0();
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let x = if i + 1 == n { b } else { i as f64 * dx };
            let (mu, sigma) = model.eval_mu_sigma(x)?;
            let (theta, tilt) = match kernel {
                KernelKind::Zero => (0.0, 0.0),
                KernelKind::WorstCase => {
                    let sol = solution.ok_or_else(|| {
                        Error::InvalidArgument("worst-case kernel needs a value function".into())
                    })?;
                    let (v, vp) = sol.eval(x)?;
                    // v* is floored at ξ0
                    let ratio = vp / v.max(xi0);
                    (-r * sigma * ratio, 0.5 * r * sigma * sigma * ratio * ratio)
                }
            };
            nodes.push([mu, sigma, tilt, theta]);
        }
        Ok(Self {
            b,
            inv_dx: 1.0 / dx,
            nodes,
        })
    }

    /// `[μ, σ, θ²/(2R), θ]` at `x ∈ [0, b]`.
    #[inline]
    pub fn at(&self, x: f64) -> [f64; 4] {
        let u = (x * self.inv_dx).max(0.0);
        let i = (u as usize).min(self.nodes.len() - 2);
        let w = u - i as f64;
        let (a, c) = (&self.nodes[i], &self.nodes[i + 1]);
        [
            a[0] + w * (c[0] - a[0]),
            a[1] + w * (c[1] - a[1]),
            a[2] + w * (c[2] - a[2]),
            a[3] + w * (c[3] - a[3]),
        ]
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// One path's running state; advanced by caller-supplied Brownian increments.
#[derive(Debug, Clone, Copy)]
struct PathState {
    x: f64,
    t: f64,
    tilt: f64,
    log_lr: f64,
    /// e^{−ρt}
    discount: f64,
    /// e^{T_t + log L_t}
    tilt_weight: f64,
    dividends: f64,
    value: f64,
    done: Option<PathRecord>,
}

struct StepParams {
    b: f64,
    rho: f64,
    xi0: f64,
    lr: bool,
    dt: f64,
    /// e^{−ρ dt}
    step_discount: f64,
}

// e^y, with a short series for the tiny arguments that dominate path steps
#[inline]
fn exp_small(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        1.0 + y * (1.0 + y * (0.5 + y * (1.0 / 6.0 + y * (1.0 / 24.0))))
    } else {
        y.exp()
    }
}

impl PathState {
    fn start(x0: f64, b: f64, xi0: f64) -> Self {
        let mut s = Self {
            x: x0,
            t: 0.0,
            tilt: 0.0,
            log_lr: 0.0,
            discount: 1.0,
            tilt_weight: 1.0,
            dividends: 0.0,
            value: 0.0,
            done: None,
        };
        if x0 <= 0.0 {
            s.done = Some(PathRecord {
                ruin_time: 0.0,
                censored: false,
                discounted_dividends: 0.0,
                tilt_integral: 0.0,
                terminal_payout_factor: 1.0,
                value: xi0,
                anomaly: false,
            });
        } else if x0 > b {
            // lump sum at time 0
            s.dividends = x0 - b;
            s.value = x0 - b;
            s.x = b;
        }
        s
    }

    #[inline]
    fn step<O: FnMut(f64, f64, f64)>(&mut self, table: &CoefficientTable, p: &StepParams, dw: f64, observe: &mut O) {
        let dt = p.dt;
        let [mu, sigma, tilt_rate, theta] = table.at(self.x);
        let drift = if p.lr { mu } else { mu + sigma * theta };
        let x_new = self.x + drift * dt + sigma * dw;
        let dlog = if p.lr { theta * dw - 0.5 * theta * theta * dt } else { 0.0 };
        let t_new = self.t + dt;

        if !x_new.is_finite() {
            self.finish(p, self.t, true, true);
            return;
        }
        if x_new <= 0.0 {
            let frac = self.x / (self.x - x_new);
            let tau = self.t + frac * dt;
            self.tilt += tilt_rate * frac * dt;
            self.log_lr += frac * dlog;
            observe(tau, 0.0, 0.0);
            self.finish(p, tau, false, false);
            return;
        }
        let increment = tilt_rate * dt + dlog;
        if increment != 0.0 {
            self.tilt_weight *= exp_small(increment);
        }
        self.tilt += tilt_rate * dt;
        self.log_lr += dlog;
        self.t = t_new;
        self.discount *= p.step_discount;
        // overshoot projection, written branch-free
        let paid = (x_new - p.b).max(0.0);
        self.dividends += self.discount * paid;
        self.value += self.discount * self.tilt_weight * paid;
        self.x = x_new.min(p.b);
        observe(t_new, self.x, paid);
    }

    fn finish(&mut self, p: &StepParams, t_end: f64, censored: bool, anomaly: bool) {
        let factor = (self.tilt - p.rho * t_end).exp();
        let weight = (self.tilt + self.log_lr - p.rho * t_end).exp();
        self.done = Some(PathRecord {
            ruin_time: t_end,
            censored,
            discounted_dividends: self.dividends,
            tilt_integral: self.tilt,
            terminal_payout_factor: factor,
            value: self.value + weight * p.xi0,
            anomaly,
        });
    }
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn params(model: &SurplusModel, cfg: &SimConfig, dt: f64) -> StepParams {
    StepParams {
        b: cfg.b,
        rho: model.rho(),
        xi0: model.xi0(),
        lr: cfg.measure == Measure::LikelihoodRatio && cfg.kernel == KernelKind::WorstCase,
        dt,
        step_discount: (-model.rho() * dt).exp(),
    }
}

/// Simulate path `index`, reporting `(t, X_t, dD_t)` after every step.
pub fn simulate_path_observed<O: FnMut(f64, f64, f64)>(
    model: &SurplusModel,
    cfg: &SimConfig,
    table: &CoefficientTable,
    index: u64,
    mut observe: O,
) -> PathRecord {
    let p = params(model, cfg, cfg.dt);
    let mut state = PathState::start(cfg.x0, cfg.b, p.xi0);
    if let Some(rec) = state.done {
        return rec;
    }
    if state.dividends > 0.0 {
        observe(0.0, cfg.b, state.dividends);
    }
    let mut rng = path_rng(cfg.seed, index);
    let sqdt = cfg.dt.sqrt();
    for _ in 0..cfg.n_steps() {
        let z: f64 = rng.sample(StandardNormal);
        state.step(table, &p, sqdt * z, &mut observe);
        if let Some(rec) = state.done {
            return rec;
        }
    }
    state.finish(&p, state.t, true, false);
    state.done.expect("finished")
}

pub fn simulate_path(model: &SurplusModel, cfg: &SimConfig, table: &CoefficientTable, index: u64) -> PathRecord {
    simulate_path_observed(model, cfg, table, index, |_, _, _| {})
}

/// The same Brownian path at steps `dt` and `2 dt`.
pub fn simulate_path_coupled(
    model: &SurplusModel,
    cfg: &SimConfig,
    table: &CoefficientTable,
    index: u64,
) -> (PathRecord, PathRecord) {
    let p = params(model, cfg, cfg.dt);
    let pc = params(model, cfg, 2.0 * cfg.dt);
    let mut fine = PathState::start(cfg.x0, cfg.b, p.xi0);
    let mut coarse = fine;
    let mut rng = path_rng(cfg.seed, index);
    let sqdt = cfg.dt.sqrt();
    let pairs = cfg.n_steps() / 2;
    let mut noop = |_: f64, _: f64, _: f64| {};
    for _ in 0..pairs {
        if fine.done.is_some() && coarse.done.is_some() {
            break;
        }
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        if fine.done.is_none() {
            fine.step(table, &p, sqdt * z1, &mut noop);
            if fine.done.is_none() {
                fine.step(table, &p, sqdt * z2, &mut noop);
            }
        }
        if coarse.done.is_none() {
            coarse.step(table, &pc, sqdt * (z1 + z2), &mut noop);
        }
    }
    for (s, q) in [(&mut fine, &p), (&mut coarse, &pc)] {
        if s.done.is_none() {
            let t = s.t;
            s.finish(q, t, true, false);
        }
    }
    (fine.done.unwrap(), coarse.done.unwrap())
}

/// Paths stepped in lockstep per worker so independent paths overlap in the
/// pipeline; every path still consumes only its own stream.
const BATCH: usize = 8;

fn batches(n_paths: usize) -> impl IndexedParallelIterator<Item = std::ops::Range<u64>> {
    let k = BATCH;
    (0..n_paths.div_ceil(k))
        .into_par_iter()
        .map(move |c| (c * k) as u64..((c + 1) * k).min(n_paths) as u64)
}

fn simulate_batch(model: &SurplusModel, cfg: &SimConfig, table: &CoefficientTable, ids: std::ops::Range<u64>) -> Vec<PathRecord> {
    let p = params(model, cfg, cfg.dt);
    let mut states: Vec<PathState> = ids.clone().map(|_| PathState::start(cfg.x0, cfg.b, p.xi0)).collect();
    let mut rngs: Vec<ChaCha8Rng> = ids.map(|i| path_rng(cfg.seed, i)).collect();
    let sqdt = cfg.dt.sqrt();
    let mut noop = |_: f64, _: f64, _: f64| {};
    let mut active = states.iter().filter(|s| s.done.is_none()).count();
    let mut step = 0;
    let n_steps = cfg.n_steps();
    while active > 0 && step < n_steps {
        for (s, rng) in states.iter_mut().zip(rngs.iter_mut()) {
            if s.done.is_none() {
                let z: f64 = rng.sample(StandardNormal);
                s.step(table, &p, sqdt * z, &mut noop);
                if s.done.is_some() {
                    active -= 1;
                }
            }
        }
        step += 1;
    }
    states
        .into_iter()
        .map(|mut s| {
            if s.done.is_none() {
                let t = s.t;
                s.finish(&p, t, true, false);
            }
            s.done.unwrap()
        })
        .collect()
}

fn simulate_batch_coupled(
    model: &SurplusModel,
    cfg: &SimConfig,
    table: &CoefficientTable,
    ids: std::ops::Range<u64>,
) -> Vec<(PathRecord, PathRecord)> {
    let p = params(model, cfg, cfg.dt);
    let pc = params(model, cfg, 2.0 * cfg.dt);
    let start = PathState::start(cfg.x0, cfg.b, p.xi0);
    let mut states: Vec<(PathState, PathState)> = ids.clone().map(|_| (start, start)).collect();
    let mut rngs: Vec<ChaCha8Rng> = ids.map(|i| path_rng(cfg.seed, i)).collect();
    let sqdt = cfg.dt.sqrt();
    let mut noop = |_: f64, _: f64, _: f64| {};
    let alive = |f: &PathState, c: &PathState| f.done.is_none() || c.done.is_none();
    let mut active = states.iter().filter(|(f, c)| alive(f, c)).count();
    let mut pair = 0;
    let pairs = cfg.n_steps() / 2;
    while active > 0 && pair < pairs {
        for ((fine, coarse), rng) in states.iter_mut().zip(rngs.iter_mut()) {
            if !alive(fine, coarse) {
                continue;
            }
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            if fine.done.is_none() {
                fine.step(table, &p, sqdt * z1, &mut noop);
                if fine.done.is_none() {
                    fine.step(table, &p, sqdt * z2, &mut noop);
                }
            }
            if coarse.done.is_none() {
                coarse.step(table, &pc, sqdt * (z1 + z2), &mut noop);
            }
            if !alive(fine, coarse) {
                active -= 1;
            }
        }
        pair += 1;
    }
    states
        .into_iter()
        .map(|(mut fine, mut coarse)| {
            for (s, q) in [(&mut fine, &p), (&mut coarse, &pc)] {
                if s.done.is_none() {
                    let t = s.t;
                    s.finish(q, t, true, false);
                }
            }
            (fine.done.unwrap(), coarse.done.unwrap())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub censored_fraction: f64,
    pub mode: EstimateMode,
    /// Mean of the squared path values (admissibility diagnostic).
    pub second_moment: f64,
    pub mean_discounted_dividends: f64,
    pub mean_ruin_time: f64,
    pub anomalies: usize,
    /// Upper bound on the value missed by censoring, using v ≤ x + ξ0 + μ̄/ρ.
    pub censoring_bound: f64,
}

fn summarize(records: &[PathRecord], mode: EstimateMode, continuation_cap: f64) -> Result<McEstimate> {
    let n = records.len();
    let censored = records.iter().filter(|r| r.censored).count();
    if censored == n {
        return Err(Error::Estimation(format!("all {n} paths were censored")));
    }
    let nf = n as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut div = 0.0;
    let mut ruin = 0.0;
    let mut bound = 0.0;
    for r in records {
        sum += r.value;
        sum_sq += r.value * r.value;
        div += r.discounted_dividends;
        ruin += r.ruin_time;
        if r.censored {
            bound += r.terminal_payout_factor * continuation_cap;
        }
    }
    let mean = sum / nf;
    let var = if n > 1 {
        records.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        stderr: (var / nf).sqrt(),
        n_paths: n,
        censored_fraction: censored as f64 / nf,
        mode,
        second_moment: sum_sq / nf,
        mean_discounted_dividends: div / nf,
        mean_ruin_time: ruin / nf,
        anomalies: records.iter().filter(|r| r.anomaly).count(),
        censoring_bound: bound / nf,
    })
}

fn continuation_cap(model: &SurplusModel, cfg: &SimConfig) -> Result<f64> {
    Ok(cfg.b + model.mu_bar_on(cfg.b, 2001)? / model.rho())
}

fn prepare(model: &SurplusModel, cfg: &SimConfig, solution: Option<&FreeBoundarySolution>) -> Result<CoefficientTable> {
    cfg.validate()?;
    if cfg.n_paths < 100 {
        return Err(Error::InvalidArgument(format!(
            "estimation needs at least 100 paths, got {}",
            cfg.n_paths
        )));
    }
    CoefficientTable::new(model, cfg.b, cfg.kernel, solution)
}

/// All path records in path order.
pub fn simulate_paths(
    model: &SurplusModel,
    cfg: &SimConfig,
    solution: Option<&FreeBoundarySolution>,
) -> Result<Vec<PathRecord>> {
    cfg.validate()?;
    let table = CoefficientTable::new(model, cfg.b, cfg.kernel, solution)?;
    Ok(batches(cfg.n_paths)
        .flat_map_iter(|ids| simulate_batch(model, cfg, &table, ids))
        .collect())
}

pub fn estimate_value(
    model: &SurplusModel,
    cfg: &SimConfig,
    solution: Option<&FreeBoundarySolution>,
) -> Result<McEstimate> {
    let table = prepare(model, cfg, solution)?;
    let records: Vec<PathRecord> = batches(cfg.n_paths)
        .flat_map_iter(|ids| simulate_batch(model, cfg, &table, ids))
        .collect();
    summarize(&records, cfg.mode(), continuation_cap(model, cfg)?)
}

/// Weak order assumed for the time-step bias of killed, reflected Euler.
pub const WEAK_ORDER: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledEstimate {
    pub fine: McEstimate,
    pub coarse: McEstimate,
    /// Mean and standard error of the per-path difference fine − coarse.
    pub difference: f64,
    pub difference_stderr: f64,
    /// |fine − coarse| / (2^p − 1).
    pub bias: f64,
    pub extrapolated: f64,
    pub weak_order: f64,
}

/// Fine (`dt`) and coarse (`2 dt`) estimates on common Brownian paths, with
/// the Richardson estimate of the fine-step bias.
pub fn estimate_coupled(
    model: &SurplusModel,
    cfg: &SimConfig,
    solution: Option<&FreeBoundarySolution>,
) -> Result<CoupledEstimate> {
    let table = prepare(model, cfg, solution)?;
    let pairs: Vec<(PathRecord, PathRecord)> = batches(cfg.n_paths)
        .flat_map_iter(|ids| simulate_batch_coupled(model, cfg, &table, ids))
        .collect();
    let cap = continuation_cap(model, cfg)?;
    let fine: Vec<PathRecord> = pairs.iter().map(|p| p.0).collect();
    let coarse: Vec<PathRecord> = pairs.iter().map(|p| p.1).collect();
    let fine_est = summarize(&fine, cfg.mode(), cap)?;
    let coarse_est = summarize(&coarse, cfg.mode(), cap)?;

    let n = pairs.len() as f64;
    let diffs: Vec<f64> = pairs.iter().map(|(f, c)| f.value - c.value).collect();
    let difference = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - difference).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let denom = 2f64.powf(WEAK_ORDER) - 1.0;
    Ok(CoupledEstimate {
        difference,
        difference_stderr: (var / n).sqrt(),
        bias: difference.abs() / denom,
        extrapolated: fine_est.mean + difference / denom,
        weak_order: WEAK_ORDER,
        fine: fine_est,
        coarse: coarse_est,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub n_paths: usize,
    pub estimate: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Richardson extrapolation from the two smallest steps at the largest
    /// ensemble size; `None` with fewer than two distinct steps.
    pub extrapolated: Option<f64>,
    pub weak_order: f64,
}

/// Estimates over every `(dt, n)` pair.
pub fn convergence_sweep(
    model: &SurplusModel,
    cfg: &SimConfig,
    solution: Option<&FreeBoundarySolution>,
    dt_list: &[f64],
    n_list: &[usize],
) -> Result<ConvergenceTable> {
    if dt_list.is_empty() || n_list.is_empty() {
        return Err(Error::InvalidArgument("dt and n lists must be nonempty".into()));
    }
    let mut rows = Vec::new();
    for &dt in dt_list {
        for &n in n_list {
            let c = SimConfig { dt, n_paths: n, ..*cfg };
            rows.push(ConvergenceRow {
                dt,
                n_paths: n,
                estimate: estimate_value(model, &c, solution)?,
            });
        }
    }
    let n_max = *n_list.iter().max().unwrap();
    let mut at_max: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.n_paths == n_max).collect();
    at_max.sort_by(|a, b| a.dt.total_cmp(&b.dt));
    at_max.dedup_by(|a, b| a.dt == b.dt);
    let extrapolated = match at_max.as_slice() {
        [fine, coarse, ..] => {
            let ratio = coarse.dt / fine.dt;
            let denom = ratio.powf(WEAK_ORDER) - 1.0;
            Some(fine.estimate.mean + (fine.estimate.mean - coarse.estimate.mean) / denom)
        }
        _ => None,
    };
    Ok(ConvergenceTable {
        rows,
        extrapolated,
        weak_order: WEAK_ORDER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline() -> SurplusModel {
        SurplusModel::ornstein_uhlenbeck(0.5, 3.0, 0.5, 0.05, 0.1, 1.5).unwrap()
    }

    fn cfg(x0: f64, kernel: KernelKind) -> SimConfig {
        SimConfig {
            x0,
            b: 0.8,
            dt: 1e-3,
            t_max: 20.0,
            n_paths: 200,
            seed: 7,
            kernel,
            measure: Measure::DriftShift,
        }
    }

    #[test]
    fn zero_start_is_immediate_ruin() {
        let m = baseline();
        let c = cfg(0.0, KernelKind::Zero);
        let est = estimate_value(&m, &c, None).unwrap();
        assert_eq!(est.mean, 1.5);
        assert_eq!(est.stderr, 0.0);
        let table = CoefficientTable::new(&m, c.b, c.kernel, None).unwrap();
        let rec = simulate_path(&m, &c, &table, 3);
        assert_eq!(rec.ruin_time, 0.0);
        assert_eq!(rec.discounted_dividends, 0.0);
    }

    #[test]
    fn start_above_barrier_pays_atom() {
        let m = baseline();
        let c = SimConfig { b: 1.0, ..cfg(3.0, KernelKind::Zero) };
        let table = CoefficientTable::new(&m, c.b, c.kernel, None).unwrap();
        let mut first = None;
        simulate_path_observed(&m, &c, &table, 0, |t, _, d| {
            if first.is_none() {
                first = Some((t, d));
            }
        });
        assert_eq!(first, Some((0.0, 2.0)));
    }

    #[test]
    fn reflected_state_stays_in_band_and_dividends_only_at_barrier() {
        let m = baseline();
        let c = cfg(0.4, KernelKind::Zero);
        let table = CoefficientTable::new(&m, c.b, c.kernel, None).unwrap();
        for i in 0..20 {
            let mut total = 0.0;
            let rec = simulate_path_observed(&m, &c, &table, i, |_, x, d| {
                assert!((0.0..=c.b).contains(&x));
                assert!(d >= 0.0);
                if d > 0.0 {
                    assert_eq!(x, c.b);
                }
                total += d;
            });
            assert!(rec.discounted_dividends >= 0.0);
            assert!(rec.discounted_dividends <= total + 1e-15);
            assert!(rec.ruin_time > 0.0);
            assert_eq!(rec.tilt_integral, 0.0);
        }
    }

    #[test]
    fn nearly_deterministic_drift_matches_closed_form() {
        // σ ≈ 0, μ = 1: the barrier pays at rate μ until t_max
        let x = vec![0.0, 1.0, 2.0];
        let m = SurplusModel::tabulated(x, vec![1.0; 3], vec![1e-9; 3], 0.05, 0.1, 1.5).unwrap();
        let c = SimConfig {
            x0: 1.0,
            b: 1.0,
            dt: 1e-3,
            t_max: 200.0,
            n_paths: 100,
            seed: 1,
            kernel: KernelKind::Zero,
            measure: Measure::DriftShift,
        };
        // every path is censored, which the estimator refuses
        assert!(matches!(estimate_value(&m, &c, None), Err(Error::Estimation(_))));
        let records = simulate_paths(&m, &c, None).unwrap();
        assert!(records.iter().all(|r| r.censored && !r.anomaly));
        let mean = records.iter().map(|r| r.value).sum::<f64>() / records.len() as f64;
        let (rho, t) = (0.05f64, 200.0f64);
        // dividends paid at step ends: μ dt Σ e^{−ρ k dt}
        let k = (t / c.dt) as i32;
        let q = (-rho * c.dt).exp();
        let discrete = c.dt * q * (1.0 - q.powi(k)) / (1.0 - q) + (-rho * t).exp() * 1.5;
        assert!((mean - discrete).abs() < 1e-9, "{mean} vs {discrete}");
        assert!((mean - (1.0 / rho) * (1.0 - (-rho * t).exp()) - (-rho * t).exp() * 1.5).abs() < 1e-3);
    }

    #[test]
    fn same_seed_same_records_any_thread_count() {
        let m = baseline();
        let c = cfg(0.4, KernelKind::Zero);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_paths(&m, &c, None).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert!(a.iter().zip(&b).all(|(x, y)| x.value.to_bits() == y.value.to_bits()));
    }

    #[test]
    fn coupled_fine_matches_plain_run() {
        let m = baseline();
        let c = SimConfig { n_paths: 100, ..cfg(0.4, KernelKind::Zero) };
        let table = CoefficientTable::new(&m, c.b, c.kernel, None).unwrap();
        for i in 0..10 {
            let (fine, _) = simulate_path_coupled(&m, &c, &table, i);
            let plain = simulate_path(&m, &c, &table, i);
            assert_eq!(fine, plain);
        }
    }

    #[test]
    fn batched_paths_match_single_paths() {
        let m = baseline();
        let c = SimConfig { n_paths: 19, ..cfg(0.4, KernelKind::Zero) };
        let table = CoefficientTable::new(&m, c.b, c.kernel, None).unwrap();
        let records = simulate_paths(&m, &c, None).unwrap();
        let coupled = simulate_batch_coupled(&m, &c, &table, 0..19);
        for i in 0..19 {
            assert_eq!(records[i], simulate_path(&m, &c, &table, i as u64));
            assert_eq!(coupled[i], simulate_path_coupled(&m, &c, &table, i as u64));
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let c = cfg(0.4, KernelKind::Zero);
        assert!(SimConfig { dt: 0.0, ..c }.validate().is_err());
        assert!(SimConfig { t_max: 50.0 * c.dt, ..c }.validate().is_err());
        assert!(SimConfig { x0: -1.0, ..c }.validate().is_err());
        assert!(SimConfig { n_paths: 0, ..c }.validate().is_err());
        assert!(estimate_value(&baseline(), &SimConfig { n_paths: 50, ..c }, None).is_err());
        assert!(CoefficientTable::new(&baseline(), 0.8, KernelKind::WorstCase, None).is_err());
    }
}
