//! Trinomial Markov-chain approximation of the reflected surplus on `[0, b]`.
//!
//! Node 0 absorbs (bankruptcy payout), node `N` reflects: an up move from it
//! pays `Δx` as dividend and stays at `N`. All values are in time-0 money, so
//! the payout at node 0 on slice `t` is `ξ0 e^{−ρt}`.
//!
//! One backward sweep produces four valuations side by side:
//!
//! * `K`, the classical expected discounted dividends plus payout;
//! * `V_ez`, the Epstein–Zin utility with aggregator
//!   `g_EZ(t, v) = e^{−ρt}(1−R) v^{−R/(1−R)}` integrated against the dividend
//!   increment, solved node-wise by damped Picard iteration;
//! * `V_low`, the same recursion with the Lipschitz aggregator `g_1`, a lower
//!   bound for `V_ez`;
//! * `V_rob`, the robust value from the discrete Isaacs step
//!   `V = min_θ {E^θ[V'] + θ²/(2R) V dt}`, with `E^θ` realised by tilting the
//!   up/down probabilities so the local mean moves by `σθ dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbp::FreeBoundarySolution;
use crate::model::SurplusModel;

/// `g_EZ(t, v) = e^{−ρt}(1−R) v^{−R/(1−R)}`.
pub fn g_ez(t: f64, v: f64, rho: f64, r: f64) -> f64 {
    (-rho * t).exp() * (1.0 - r) * v.powf(-r / (1.0 - r))
}

/// Lipschitz envelope of `g_EZ` with modulus `nRe^{−ρt}`:
/// `e^{−ρt}(n^R − nRy)` up to the breakpoint `y = n^{−(1−R)}`, `g_EZ` beyond.
pub fn lipschitz_aggregator(n: u32, t: f64, y: f64, rho: f64, r: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidArgument("aggregator index must be >= 1".into()));
    }
    if !(y >= 0.0) {
        return Err(Error::InvalidArgument(format!("aggregator argument must be >= 0, got {y}")));
    }
    let nf = n as f64;
    if y <= nf.powf(-(1.0 - r)) {
        Ok((-rho * t).exp() * (nf.powf(r) - nf * r * y))
    } else {
        Ok(g_ez(t, y, rho, r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub b: f64,
    pub n_space: usize,
    pub dx: f64,
    pub dt: f64,
    pub t_max: f64,
    pub n_steps: usize,
    pub rho: f64,
    pub r: f64,
    pub xi0: f64,
    pub x: Vec<f64>,
    pub sigma: Vec<f64>,
    pub p_up: Vec<f64>,
    pub p_mid: Vec<f64>,
    pub p_down: Vec<f64>,
}

/// Largest `dt` keeping every probability in `[0, 1]` on `n_space` cells.
pub fn cfl_dt(model: &SurplusModel, b: f64, n_space: usize) -> Result<f64> {
    let dx = b / n_space as f64;
    let mut s2_max: f64 = 0.0;
    for i in 1..=n_space {
        let (mu, sigma) = model.eval_mu_sigma(i as f64 * dx)?;
        if mu.abs() * dx > sigma * sigma {
            return Err(Error::Cfl {
                node: i,
                p: 0.5 * (sigma * sigma - mu.abs() * dx) / (sigma * sigma),
                dt_max: 0.0,
            });
        }
        s2_max = s2_max.max(sigma * sigma);
    }
    Ok(dx * dx / s2_max)
}

/// Trinomial lattice on `n_space` cells of `[0, b]`; `dt` defaults to the
/// CFL limit.
pub fn build_lattice(model: &SurplusModel, b: f64, n_space: usize, dt: Option<f64>, t_max: f64) -> Result<LatticeSpec> {
    if n_space < 50 {
        return Err(Error::InvalidArgument(format!("n_space must be >= 50, got {n_space}")));
    }
    build(model, b, n_space, dt, t_max)
}

fn build(model: &SurplusModel, b: f64, n_space: usize, dt: Option<f64>, t_max: f64) -> Result<LatticeSpec> {
    if !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("b must be > 0, got {b}")));
    }
    let dx = b / n_space as f64;
    let dt = match dt {
        Some(dt) => dt,
        None => cfl_dt(model, b, n_space)?,
    };
    if !(dt > 0.0 && t_max >= dt) {
        return Err(Error::InvalidArgument(format!("need 0 < dt <= t_max, got dt = {dt}, t_max = {t_max}")));
    }
    let n_steps = (t_max / dt).round() as usize;
    let mut x = Vec::with_capacity(n_space + 1);
    let mut sigma = Vec::with_capacity(n_space + 1);
    let mut p_up = Vec::with_capacity(n_space + 1);
    let mut p_mid = Vec::with_capacity(n_space + 1);
    let mut p_down = Vec::with_capacity(n_space + 1);
    for i in 0..=n_space {
        let xi = if i == n_space { b } else { i as f64 * dx };
        let (mu, s) = model.eval_mu_sigma(xi)?;
        let diffusion = s * s * dt / (dx * dx);
        let advection = mu * dt / dx;
        let (u, m, d) = (0.5 * (diffusion + advection), 1.0 - diffusion, 0.5 * (diffusion - advection));
        if i > 0 {
            for p in [u, m, d] {
                if !(-1e-15..=1.0 + 1e-15).contains(&p) {
                    let dt_max = (dx * dx / (s * s)).min(if mu != 0.0 { s * s / (mu * mu) } else { f64::INFINITY });
                    return Err(Error::Cfl { node: i, p, dt_max });
                }
            }
        }
        x.push(xi);
        sigma.push(s);
        p_up.push(u.max(0.0));
        p_mid.push(m.max(0.0));
        p_down.push(d.max(0.0));
    }
    Ok(LatticeSpec {
        b,
        n_space,
        dx,
        dt,
        t_max: n_steps as f64 * dt,
        n_steps,
        rho: model.rho(),
        r: model.r(),
        xi0: model.xi0(),
        x,
        sigma,
        p_up,
        p_mid,
        p_down,
    })
}

impl LatticeSpec {
    /// Bound on the Picard contraction modulus at the reflecting node.
    pub fn picard_modulus(&self) -> f64 {
        self.p_up[self.n_space] * self.dx * self.r / self.xi0.powf(1.0 - self.r).max(f64::MIN_POSITIVE).powf(1.0 / (1.0 - self.r))
    }

    /// Dividend increment per node for one step (`Δx` at the reflecting node).
    pub fn dividend_increment(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_space + 1];
        d[self.n_space] = self.dx;
        d
    }

    /// Local mean and variance of one step at node `i`.
    pub fn local_moments(&self, i: usize) -> (f64, f64) {
        let (u, d) = (self.p_up[i], self.p_down[i]);
        let mean = (u - d) * self.dx;
        (mean, (u + d) * self.dx * self.dx - mean * mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Number of stored time slices besides t = 0.
    pub snapshots: usize,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 30,
            snapshots: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PicardStats {
    pub slices: usize,
    pub max_iters: usize,
    pub total_iters: usize,
    pub max_final_residual: f64,
    /// Slices whose residual sequence ever increased.
    pub non_monotone_slices: usize,
    /// Picard iterates that left `[V_low, K^{1−R}]`.
    pub bound_violations: usize,
    /// Slices where damping was switched on.
    pub damped_slices: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub t: f64,
    pub k: Vec<f64>,
    pub v_ez: Vec<f64>,
    pub v_low: Vec<f64>,
    pub v_rob: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeValuation {
    pub x: Vec<f64>,
    pub dx: f64,
    pub dt: f64,
    pub t_max: f64,
    pub r: f64,
    /// Time-0 slice first, then snapshots in increasing time.
    pub slices: Vec<Slice>,
    pub dividend_increment: Vec<f64>,
    /// θ* = −Rℤ/V per node at t = 0.
    pub theta_star: Vec<f64>,
    pub picard: PicardStats,
    /// Robust steps where θ* had to be clamped to keep probabilities valid.
    pub robust_clamps: usize,
    pub equivalence_gap: f64,
}

impl LatticeValuation {
    pub fn at_time_zero(&self) -> &Slice {
        &self.slices[0]
    }

    /// Linear interpolation of a time-0 node vector.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Result<f64> {
        let b = *self.x.last().unwrap();
        if !(0.0..=b).contains(&x) {
            return Err(Error::Domain { x, lo: 0.0, hi: b });
        }
        let u = x / self.dx;
        let i = (u.floor() as usize).min(self.x.len() - 2);
        let w = u - i as f64;
        Ok(values[i] + w * (values[i + 1] - values[i]))
    }
}

// Solves V = e + c·g(V) by Picard iteration, damped once the residual stops
// shrinking. Returns the fixed point, iterations and whether any iterate left
// [lo, hi].
struct Picard {
    iters: usize,
    residual: f64,
    monotone: bool,
    damped: bool,
    out_of_bounds: bool,
}

fn picard<G: Fn(f64) -> f64>(
    e: f64,
    c: f64,
    g: G,
    start: f64,
    bounds: Option<(f64, f64)>,
    tol: f64,
    max_iters: usize,
    t: f64,
) -> Result<(f64, Picard)> {
    let mut v = start;
    let mut damping = 1.0;
    let mut prev_res = f64::INFINITY;
    let mut stats = Picard {
        iters: 0,
        residual: f64::INFINITY,
        monotone: true,
        damped: false,
        out_of_bounds: false,
    };
    let mut history = Vec::new();
    for k in 1..=max_iters {
        let target = e + c * g(v);
        let next = v + damping * (target - v);
        let res = (next - v).abs() / next.abs().max(1.0);
        history.push(res);
        if let Some((lo, hi)) = bounds {
            let slack = 1e-12 * hi.abs().max(1.0);
            if next < lo - slack || next > hi + slack {
                stats.out_of_bounds = true;
            }
        }
        if res > prev_res {
            stats.monotone = false;
            if damping == 1.0 {
                damping = 0.5;
                stats.damped = true;
            }
        }
        prev_res = res;
        v = next;
        stats.iters = k;
        stats.residual = res;
        if res <= tol {
            return Ok((v, stats));
        }
    }
    Err(Error::Picard {
        iters: max_iters,
        t,
        history,
    })
}

/// Backward sweep for all four valuations.
pub fn solve(spec: &LatticeSpec, opts: &LatticeOptions) -> Result<LatticeValuation> {
    let n = spec.n_space;
    let (rho, r, xi0, dt, dx) = (spec.rho, spec.r, spec.xi0, spec.dt, spec.dx);
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("lattice EZ solve needs R in (0, 1), got {r}")));
    }
    let q = 1.0 - r;
    let terminal = xi0 * (-rho * spec.t_max).exp();
    let mut k = vec![terminal; n + 1];
    let mut v_rob = vec![terminal; n + 1];
    let mut v_ez = vec![terminal.powf(q); n + 1];
    let mut v_low = v_ez.clone();
    let (mut k_new, mut rob_new, mut ez_new, mut low_new) = (k.clone(), v_rob.clone(), v_ez.clone(), v_low.clone());
    let a: Vec<f64> = spec.sigma.iter().map(|s| s * dt / (2.0 * dx)).collect();
    let mut theta = vec![0.0; n + 1];

    let snap_steps: Vec<usize> = (1..=opts.snapshots)
        .map(|j| spec.n_steps * j / (opts.snapshots + 1))
        .filter(|&s| s > 0)
        .collect();
    let mut snaps = Vec::new();
    let mut stats = PicardStats::default();
    let mut clamps = 0usize;

    for step in (0..spec.n_steps).rev() {
        let t = step as f64 * dt;
        let disc = (-rho * t).exp();
        let payout = xi0 * disc;
        k_new[0] = payout;
        rob_new[0] = payout;
        ez_new[0] = payout.powf(q);
        low_new[0] = ez_new[0];

        for i in 1..n {
            let (u, m, d) = (spec.p_up[i], spec.p_mid[i], spec.p_down[i]);
            k_new[i] = u * k[i + 1] + m * k[i] + d * k[i - 1];
            ez_new[i] = u * v_ez[i + 1] + m * v_ez[i] + d * v_ez[i - 1];
            low_new[i] = u * v_low[i + 1] + m * v_low[i] + d * v_low[i - 1];
            let (rv, th, clamped) = robust_step(spec, i, v_rob[i + 1], v_rob[i], v_rob[i - 1], a[i]);
            rob_new[i] = rv;
            theta[i] = th;
            clamps += clamped as usize;
        }

        // reflecting node: an up move pays Δx
        let (u, m, d) = (spec.p_up[n], spec.p_mid[n], spec.p_down[n]);
        let div = disc * dx;
        k_new[n] = u * (k[n] + div) + m * k[n] + d * k[n - 1];
        let (rv, th, clamped) = robust_step(spec, n, v_rob[n] + div, v_rob[n], v_rob[n - 1], a[n]);
        rob_new[n] = rv;
        theta[n] = th;
        clamps += clamped as usize;

        let c = u * dx;
        let upper = k_new[n].powf(q);
        let e_low = u * v_low[n] + m * v_low[n] + d * v_low[n - 1];
        let (low, _) = picard(
            e_low,
            c,
            |y| lipschitz_aggregator(1, t, y.max(0.0), rho, r).unwrap_or(f64::NAN),
            v_low[n],
            None,
            opts.tol,
            opts.max_iters,
            t,
        )?;
        low_new[n] = low;
        let e_ez = u * v_ez[n] + m * v_ez[n] + d * v_ez[n - 1];
        let (ez, p) = picard(
            e_ez,
            c,
            |y| g_ez(t, y, rho, r),
            v_ez[n].clamp(low, upper),
            Some((low, upper)),
            opts.tol,
            opts.max_iters,
            t,
        )?;
        ez_new[n] = ez;
        stats.slices += 1;
        stats.max_iters = stats.max_iters.max(p.iters);
        stats.total_iters += p.iters;
        stats.max_final_residual = stats.max_final_residual.max(p.residual);
        stats.non_monotone_slices += (!p.monotone) as usize;
        stats.bound_violations += p.out_of_bounds as usize;
        stats.damped_slices += p.damped as usize;

        std::mem::swap(&mut k, &mut k_new);
        std::mem::swap(&mut v_rob, &mut rob_new);
        std::mem::swap(&mut v_ez, &mut ez_new);
        std::mem::swap(&mut v_low, &mut low_new);

        if snap_steps.contains(&step) {
            snaps.push(Slice {
                t,
                k: k.clone(),
                v_ez: v_ez.clone(),
                v_low: v_low.clone(),
                v_rob: v_rob.clone(),
            });
        }
    }

    let zero = Slice {
        t: 0.0,
        k,
        v_ez,
        v_low,
        v_rob,
    };
    let equivalence_gap = gap(&zero, r);
    snaps.reverse();
    let mut slices = vec![zero];
    slices.extend(snaps);
    Ok(LatticeValuation {
        x: spec.x.clone(),
        dx,
        dt,
        t_max: spec.t_max,
        r,
        slices,
        dividend_increment: spec.dividend_increment(),
        theta_star: theta,
        picard: stats,
        robust_clamps: clamps,
        equivalence_gap,
    })
}

// One node of the discrete Isaacs step. `w_up` already includes any dividend.
#[inline]
fn robust_step(spec: &LatticeSpec, i: usize, w_up: f64, w_mid: f64, w_down: f64, a: f64) -> (f64, f64, bool) {
    let (u, m, d) = (spec.p_up[i], spec.p_mid[i], spec.p_down[i]);
    let r = spec.r;
    let dt = spec.dt;
    let e = u * w_up + m * w_mid + d * w_down;
    let z = spec.sigma[i] * (w_up - w_down) / (2.0 * spec.dx);
    let disc = e * e - 2.0 * r * z * z * dt;
    // feasible tilts keep p_up + aθ and p_down − aθ in [0, 1]
    let lo = (-u / a).max((d - 1.0) / a);
    let hi = ((1.0 - u) / a).min(d / a);
    if disc >= 0.0 {
        let v = 0.5 * (e + disc.sqrt());
        let theta = -r * z / v;
        if theta >= lo && theta <= hi {
            return (v, theta, false);
        }
    }
    // the convex objective in θ is minimised at the nearest feasible tilt
    let mut theta = if z > 0.0 { lo } else { hi };
    let mut v = e;
    for _ in 0..50 {
        v = (e + theta * z * dt) / (1.0 - theta * theta * dt / (2.0 * r));
        let unconstrained = -r * z / v;
        let next = unconstrained.clamp(lo, hi);
        if next == theta {
            break;
        }
        theta = next;
    }
    (v, theta, true)
}

fn gap(slice: &Slice, r: f64) -> f64 {
    slice
        .v_ez
        .iter()
        .zip(&slice.v_rob)
        .map(|(e, v)| (e.powf(1.0 / (1.0 - r)) - v).abs())
        .fold(0.0, f64::max)
}

/// Classical values `K` at t = 0.
pub fn solve_classical(spec: &LatticeSpec) -> Result<Vec<f64>> {
    let n = spec.n_space;
    let mut k = vec![spec.xi0 * (-spec.rho * spec.t_max).exp(); n + 1];
    let mut next = k.clone();
    for step in (0..spec.n_steps).rev() {
        let disc = (-spec.rho * step as f64 * spec.dt).exp();
        next[0] = spec.xi0 * disc;
        for i in 1..n {
            next[i] = spec.p_up[i] * k[i + 1] + spec.p_mid[i] * k[i] + spec.p_down[i] * k[i - 1];
        }
        next[n] = spec.p_up[n] * (k[n] + disc * spec.dx) + spec.p_mid[n] * k[n] + spec.p_down[n] * k[n - 1];
        std::mem::swap(&mut k, &mut next);
    }
    Ok(k)
}

/// Epstein–Zin values at t = 0 with Picard statistics.
pub fn solve_ez(spec: &LatticeSpec, opts: &LatticeOptions) -> Result<(Vec<f64>, PicardStats)> {
    let val = solve(spec, opts)?;
    let picard = val.picard.clone();
    Ok((val.slices.into_iter().next().unwrap().v_ez, picard))
}

/// Robust values and θ* at t = 0.
pub fn solve_robust(spec: &LatticeSpec, opts: &LatticeOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let val = solve(spec, opts)?;
    let theta = val.theta_star.clone();
    Ok((val.slices.into_iter().next().unwrap().v_rob, theta))
}

/// max over t = 0 nodes of |V_ez^{1/(1−R)} − V_rob|.
pub fn check_equivalence(val: &LatticeValuation) -> f64 {
    gap(val.at_time_zero(), val.r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub n_space: usize,
    pub dt: f64,
    pub equivalence_gap: f64,
    /// |V_rob(0, x) − v*(x)| per probe.
    pub probe_errors: Vec<f64>,
    pub picard: PicardStats,
    pub robust_clamps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub probes: Vec<f64>,
    pub levels: Vec<RefinementLevel>,
    /// gap(coarse) / gap(fine) for consecutive levels.
    pub gap_ratios: Vec<f64>,
    /// Full valuation on the coarsest level.
    #[serde(skip)]
    pub base: Option<LatticeValuation>,
}

/// Solve at `n_space, 2 n_space, …` cells with `dt` at the CFL limit (so it
/// drops fourfold per level), comparing against the free-boundary value.
pub fn refinement(
    model: &SurplusModel,
    solution: &FreeBoundarySolution,
    n_space: usize,
    levels: usize,
    t_max: f64,
    probes: &[f64],
    opts: &LatticeOptions,
) -> Result<RefinementReport> {
    let b = solution.b_star;
    if levels == 0 {
        return Err(Error::InvalidArgument("need at least one refinement level".into()));
    }
    let mut out = Vec::new();
    let mut base = None;
    for level in 0..levels {
        let n = n_space << level;
        let spec = build_lattice(model, b, n, None, t_max)?;
        let val = solve(&spec, opts)?;
        let zero = val.at_time_zero();
        let probe_errors = probes
            .iter()
            .map(|&x| Ok((val.interpolate(&zero.v_rob, x)? - solution.eval(x)?.0).abs()))
            .collect::<Result<Vec<_>>>()?;
        out.push(RefinementLevel {
            n_space: n,
            dt: spec.dt,
            equivalence_gap: val.equivalence_gap,
            probe_errors,
            picard: val.picard.clone(),
            robust_clamps: val.robust_clamps,
        });
        if level == 0 {
            base = Some(val);
        }
    }
    let gap_ratios = out.windows(2).map(|w| w[0].equivalence_gap / w[1].equivalence_gap).collect();
    Ok(RefinementReport {
        probes: probes.to_vec(),
        levels: out,
        gap_ratios,
        base,
    })
}

/// Default horizon: long enough that e^{−ρT} times the value scale is
/// negligible.
pub fn default_t_max(model: &SurplusModel) -> f64 {
    15.0 / model.rho()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn baseline() -> SurplusModel {
        SurplusModel::ornstein_uhlenbeck(0.5, 3.0, 0.5, 0.05, 0.1, 1.5).unwrap()
    }

    #[test]
    fn aggregator_breakpoint_and_first_branch() {
        let (rho, r) = (0.05, 0.1);
        for n in [1u32, 2, 7, 50] {
            let y = (n as f64).powf(-(1.0 - r));
            let t: f64 = 3.0;
            let lin = (-rho * t).exp() * ((n as f64).powf(r) - n as f64 * r * y);
            let exact = (-rho * t).exp() * (1.0 - r) * (n as f64).powf(r);
            assert!((lin - exact).abs() <= 1e-12);
            assert!((g_ez(t, y, rho, r) - exact).abs() <= 1e-12);
        }
        let y = 0.4;
        assert_relative_eq!(
            lipschitz_aggregator(1, 2.0, y, rho, r).unwrap(),
            (-rho * 2.0f64).exp() * (1.0 - r * y),
            max_relative = 1e-15
        );
        assert!(lipschitz_aggregator(0, 0.0, 1.0, rho, r).is_err());
        assert!(lipschitz_aggregator(1, 0.0, -1.0, rho, r).is_err());
    }

    #[test]
    fn aggregator_converges_pointwise() {
        let (rho, r) = (0.05, 0.1);
        let y = 0.01;
        let target = g_ez(1.0, y, rho, r);
        let errs: Vec<f64> = [1u32, 10, 100, 1000, 100_000]
            .iter()
            .map(|&n| (target - lipschitz_aggregator(n, 1.0, y, rho, r).unwrap()).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]));
        assert!(*errs.last().unwrap() == 0.0);
    }

    #[test]
    fn probabilities_and_local_moments() {
        let m = baseline();
        let spec = build_lattice(&m, 0.8, 200, None, 1.0).unwrap();
        for i in 1..=spec.n_space {
            let (u, mid, d) = (spec.p_up[i], spec.p_mid[i], spec.p_down[i]);
            assert!([u, mid, d].iter().all(|p| (0.0..=1.0).contains(p)));
            assert!((u + mid + d - 1.0).abs() < 1e-14);
            let (mu, s) = m.eval_mu_sigma(spec.x[i]).unwrap();
            let (mean, var) = spec.local_moments(i);
            assert!((mean - mu * spec.dt).abs() < 1e-15);
            assert!((var - s * s * spec.dt).abs() <= (mu * spec.dt).powi(2) + 1e-18);
        }
    }

    #[test]
    fn zero_drift_is_symmetric() {
        let x = vec![0.0, 1.0, 2.0];
        let m = SurplusModel::tabulated(x, vec![0.0; 3], vec![0.3; 3], 0.05, 0.1, 1.0).unwrap();
        let spec = build_lattice(&m, 1.0, 50, None, 1.0).unwrap();
        for i in 1..=50 {
            assert_eq!(spec.p_up[i], spec.p_down[i]);
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let m = baseline();
        let dt = cfl_dt(&m, 0.8, 100).unwrap();
        assert!(matches!(build_lattice(&m, 0.8, 100, Some(1.5 * dt), 1.0), Err(Error::Cfl { .. })));
        assert!(build_lattice(&m, 0.8, 20, None, 1.0).is_err());
    }

    #[test]
    fn reflecting_two_node_chain_is_geometric() {
        // μΔx = σ² makes p_down = 0 at the top node: the chain never leaves it
        let x = vec![0.0, 1.0, 2.0];
        let m = SurplusModel::tabulated(x, vec![0.25; 3], vec![0.5; 3], 0.05, 0.1, 1.5).unwrap();
        let spec = build(&m, 1.0, 1, Some(1.0), 10.0).unwrap();
        assert_eq!(spec.p_down[1], 0.0);
        let k = solve_classical(&spec).unwrap();
        let q = spec.p_up[1];
        let mut expected = 1.5 * (-0.5f64).exp();
        for step in 0..10 {
            expected += q * (-0.05 * step as f64).exp();
        }
        assert_relative_eq!(k[1], expected, max_relative = 1e-14);
        assert_eq!(k[0], 1.5);
    }

    #[test]
    fn one_step_lattice_matches_hand_algebra() {
        let x = vec![0.0, 1.0, 2.0];
        let m = SurplusModel::tabulated(x, vec![0.1; 3], vec![0.5; 3], 0.05, 0.2, 1.5).unwrap();
        let spec = build(&m, 1.0, 1, Some(1.0), 1.0).unwrap();
        let val = solve(&spec, &LatticeOptions::default()).unwrap();
        let (u, mid, d) = (spec.p_up[1], spec.p_mid[1], spec.p_down[1]);
        let term = 1.5 * (-0.05f64).exp();
        let r = 0.2;
        // the next slice is terminal everywhere, so E = term^{1−R}
        let e = (u + mid + d) * term.powf(1.0 - r);
        let mut v = e;
        for _ in 0..200 {
            v = e + u * (1.0 - r) * v.powf(-r / (1.0 - r));
        }
        assert_relative_eq!(val.at_time_zero().v_ez[1], v, max_relative = 1e-12);
        // robust: larger root of V² − E V + Rℤ²dt/2 = 0
        let (wu, wm, wd) = (term + 1.0, term, term);
        let e = u * wu + mid * wm + d * wd;
        let z = 0.5 * (wu - wd) / 2.0;
        let v = 0.5 * (e + (e * e - 2.0 * r * z * z).sqrt());
        assert_relative_eq!(val.at_time_zero().v_rob[1], v, max_relative = 1e-14);
        assert_relative_eq!(val.theta_star[1], -r * z / v, max_relative = 1e-14);
    }

    #[test]
    fn baseline_lattice_properties() {
        let m = baseline();
        let spec = build_lattice(&m, 0.8191688734, 60, None, 60.0).unwrap();
        let val = solve(&spec, &LatticeOptions::default()).unwrap();
        let z = val.at_time_zero();
        assert_eq!(z.k[0], 1.5);
        assert_eq!(z.v_rob[0], 1.5);
        assert_relative_eq!(z.v_ez[0], 1.5f64.powf(0.9), max_relative = 1e-15);
        assert!(z.v_ez.iter().all(|&v| v > 0.0));
        for slice in &val.slices {
            assert!(slice.k.windows(2).all(|w| w[1] >= w[0]));
            for i in 0..slice.k.len() {
                assert!(slice.v_ez[i] <= slice.k[i].powf(0.9) * (1.0 + 1e-12));
                assert!(slice.v_low[i] <= slice.v_ez[i] * (1.0 + 1e-12));
            }
        }
        assert_eq!(val.picard.bound_violations, 0);
        assert!(val.picard.max_iters <= 30);
        assert_eq!(val.picard.non_monotone_slices, 0);
        assert_eq!(val.robust_clamps, 0);
        assert!(val.theta_star[1..].iter().all(|&t| t <= 0.0));
        assert!(spec.picard_modulus() < 1.0);
    }

    #[test]
    fn higher_payout_raises_ez_value() {
        let lo = baseline();
        let hi = baseline().with_xi0(2.0).unwrap();
        let a = solve(&build_lattice(&lo, 0.8, 50, None, 30.0).unwrap(), &LatticeOptions::default()).unwrap();
        let b = solve(&build_lattice(&hi, 0.8, 50, None, 30.0).unwrap(), &LatticeOptions::default()).unwrap();
        for (x, y) in a.at_time_zero().v_ez.iter().zip(&b.at_time_zero().v_ez) {
            assert!(y > x);
        }
    }

    #[test]
    fn small_aversion_collapses_to_classical() {
        let m = baseline().with_r(1e-4).unwrap();
        let val = solve(&build_lattice(&m, 0.8, 50, None, 30.0).unwrap(), &LatticeOptions::default()).unwrap();
        let z = val.at_time_zero();
        for (k, v) in z.k.iter().zip(&z.v_rob) {
            assert!(v <= k);
            assert!((k - v) / k <= 1e-2);
        }
    }
}
