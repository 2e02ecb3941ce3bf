//! Free-boundary problem for the optimal dividend barrier.
//!
//! For a trial barrier `b` the Riccati equation
//!
//! ```text
//! σ²/2 g' + μ g + (1−R)/2 σ² g² = ρ + γ,    g(b) = 1/ψ⁺(b)
//! ```
//!
//! is integrated backwards to 0 together with the linearised form for
//! `h = v^{1−R}`. The candidate value is `v_b(x) = ψ⁺(b) exp(∫_b^x g)`, and the
//! barrier `b*` solves `v_b(0) = ξ0`. Above `b*` the value is affine with unit
//! slope.
//!
//! Barriers well above `b*` make `g` blow up before reaching 0 (the linear
//! solution `h` crosses zero there, so `v_b` hits 0 on the way down). Such a
//! barrier is treated as having `v_b(0) = 0`, which keeps the shooting
//! function monotone and continuous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::hermite;
use crate::model::{check_assumptions, AssumptionReport, ScanOptions, SurplusModel};
use crate::ode::{integrate, Dopri5Options, StepCounts, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbpOptions {
    pub rtol: f64,
    pub atol: f64,
    /// A run whose `g` exceeds this is reported as diverged.
    pub g_cap: f64,
    pub max_steps: usize,
}

impl Default for FbpOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            g_cap: 1e8,
            max_steps: 200_000,
        }
    }
}

impl FbpOptions {
    fn dopri(&self) -> Dopri5Options {
        Dopri5Options {
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
            ..Dopri5Options::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
}

impl StepStats {
    fn new(counts: StepCounts, min_step: f64) -> Self {
        Self {
            accepted: counts.accepted,
            rejected: counts.rejected,
            min_step,
        }
    }
}

/// One backward integration from a trial barrier `b` down to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeRun {
    pub b: f64,
    pub gamma: f64,
    pub psi_plus_b: f64,
    /// Accepted step points, descending from `b` to 0.
    pub x_grid: Vec<f64>,
    pub g_values: Vec<f64>,
    /// ∫_b^x g.
    pub integral_values: Vec<f64>,
    pub h_values: Vec<f64>,
    pub h_prime_values: Vec<f64>,
    pub step_stats: StepStats,
    /// sup over the step points of |g − h'/((1−R)h)| / |g|.
    pub route_gap: f64,
    #[serde(skip)]
    trajectory: Option<Trajectory<4>>,
}

impl OdeRun {
    /// `[g, ∫_b^x g, h, h']` and their x-derivatives at any `x ∈ [0, b]`.
    pub fn state(&self, x: f64) -> Result<([f64; 4], [f64; 4])> {
        match &self.trajectory {
            Some(t) => t.eval(x),
            None => Err(Error::InvalidArgument("run has no dense output (deserialized)".into())),
        }
    }

    /// Sample `g` and `h` on a caller grid inside `[0, b]`.
    pub fn sample(&self, xs: &[f64]) -> Result<Vec<(f64, f64)>> {
        xs.iter()
            .map(|&x| self.state(x).map(|(s, _)| (s[0], s[2])))
            .collect()
    }
}

fn riccati_rhs(model: &SurplusModel, gamma: f64, x: f64, y: &[f64; 4]) -> Result<[f64; 4]> {
    let (mu, sigma) = model.eval_mu_sigma(x.max(0.0))?;
    let s2 = sigma * sigma;
    let r = model.r();
    let rate = model.rho() + gamma;
    let g = y[0];
    Ok([
        2.0 * (rate - mu * g - 0.5 * (1.0 - r) * s2 * g * g) / s2,
        g,
        y[3],
        2.0 * ((1.0 - r) * rate * y[2] - mu * y[3]) / s2,
    ])
}

fn check_barrier(model: &SurplusModel, b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("barrier must be > 0, got {b}")));
    }
    model.psi_plus_lenient(b)
}

/// Integrate the Riccati and linear equations backwards from `b` to 0.
pub fn integrate_g(model: &SurplusModel, b: f64, gamma: f64, opts: &FbpOptions) -> Result<OdeRun> {
    let psi = check_barrier(model, b)?;
    let r = model.r();
    let y0 = [1.0 / psi, 0.0, psi.powf(1.0 - r), (1.0 - r) * psi.powf(-r)];
    let cap = opts.g_cap;
    let traj = integrate(
        |x, y| riccati_rhs(model, gamma, x, y),
        b,
        y0,
        0.0,
        &opts.dopri(),
        |_, y| (y[0].abs() > cap).then(|| format!("g exceeded the cap {cap:e}")),
    )?;
    if let Some(stop) = &traj.stop {
        return Err(Error::Diverged {
            b,
            x_reached: stop.t(),
            reason: stop.reason(),
        });
    }

    let route_gap = traj
        .y
        .iter()
        .map(|y| {
            let from_h = y[3] / ((1.0 - r) * y[2]);
            (y[0] - from_h).abs() / y[0].abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);

    Ok(OdeRun {
        b,
        gamma,
        psi_plus_b: psi,
        x_grid: traj.t.clone(),
        g_values: traj.y.iter().map(|y| y[0]).collect(),
        integral_values: traj.y.iter().map(|y| y[1]).collect(),
        h_values: traj.y.iter().map(|y| y[2]).collect(),
        h_prime_values: traj.y.iter().map(|y| y[3]).collect(),
        step_stats: StepStats::new(traj.counts, traj.min_step),
        route_gap,
        trajectory: Some(traj),
    })
}

/// Linear route only: `h` on `[0, b]`, returned as the smallest value of `h`
/// seen and `h(0)`. Never diverges.
pub fn integrate_h(model: &SurplusModel, b: f64, gamma: f64, opts: &FbpOptions) -> Result<(f64, f64)> {
    let psi = check_barrier(model, b)?;
    let r = model.r();
    let rate = model.rho() + gamma;
    let traj = integrate(
        |x, y: &[f64; 2]| {
            let (mu, sigma) = model.eval_mu_sigma(x.max(0.0))?;
            Ok([y[1], 2.0 * ((1.0 - r) * rate * y[0] - mu * y[1]) / (sigma * sigma)])
        },
        b,
        [psi.powf(1.0 - r), (1.0 - r) * psi.powf(-r)],
        0.0,
        &opts.dopri(),
        |_, _| None,
    )?;
    if let Some(stop) = &traj.stop {
        return Err(Error::Diverged {
            b,
            x_reached: stop.t(),
            reason: stop.reason(),
        });
    }
    let h_min = traj.y.iter().map(|y| y[0]).fold(f64::INFINITY, f64::min);
    Ok((h_min, traj.y.last().unwrap()[0]))
}

/// `v_b(x) = ψ⁺(b) exp(∫_b^x g)` from the dense output of `run`.
pub fn value_at(run: &OdeRun, x: f64) -> Result<f64> {
    let (s, _) = run.state(x)?;
    Ok(run.psi_plus_b * s[1].exp())
}

pub fn value_at_zero(run: &OdeRun) -> Result<f64> {
    value_at(run, 0.0)
}

/// `h(0)^{1/(1−R)}`, the same quantity through the linear route.
pub fn value_at_zero_linear(run: &OdeRun, r: f64) -> f64 {
    run.h_values.last().copied().unwrap_or(f64::NAN).powf(1.0 / (1.0 - r))
}

/// `v_b(0) − ξ0`. A barrier whose Riccati run diverges counts as `v_b(0) = 0`
/// once the linear route confirms that `h` reaches zero inside `(0, b)`.
pub fn shooting_function(model: &SurplusModel, b: f64, gamma: f64, opts: &FbpOptions) -> Result<f64> {
    match integrate_g(model, b, gamma, opts) {
        Ok(run) => Ok(value_at_zero(&run)? - model.xi0()),
        Err(err @ Error::Diverged { .. }) => {
            let (h_min, _) = integrate_h(model, b, gamma, opts)?;
            if h_min <= 0.0 {
                Ok(-model.xi0())
            } else {
                Err(err)
            }
        }
        Err(err) => Err(err),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootOptions {
    pub tol_b: f64,
    pub tol_value: f64,
    /// Offset of the lower bracket end above `b_lower`.
    pub eps0: f64,
    /// Also solve at γ = −ρ/2, −ρ/4, −ρ/8 and check b*(γ) increases.
    pub continuation: bool,
    pub ode: FbpOptions,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            tol_b: 1e-10,
            tol_value: 1e-9,
            eps0: 1e-8,
            continuation: false,
            ode: FbpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationPoint {
    pub gamma: f64,
    pub b_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootResult {
    pub b_star: f64,
    /// v_{b*}(0) − ξ0.
    pub residual: f64,
    pub bracket: [f64; 2],
    pub iterations: usize,
    pub b_lower: f64,
    pub b_hat: f64,
    pub continuation: Vec<ContinuationPoint>,
    /// b*(−ρ/2) < b*(−ρ/4) < b*(−ρ/8) < b*; `None` without continuation.
    pub continuation_increasing: Option<bool>,
}

fn bisect_barrier(
    model: &SurplusModel,
    gamma: f64,
    lo: f64,
    hi: f64,
    opts: &ShootOptions,
) -> Result<(f64, f64, [f64; 2], usize)> {
    let f = |b: f64| shooting_function(model, b, gamma, &opts.ode);
    let (mut lo, mut hi) = (lo, hi);
    let mut f_lo = f(lo)?;
    let mut f_hi = f(hi)?;
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    let mut iterations = 0;
    loop {
        let width = hi - lo;
        let (best_b, best_f) = if f_lo.abs() <= f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
        if width <= opts.tol_b && best_f.abs() <= opts.tol_value {
            return Ok((best_b, best_f, [lo, hi], iterations));
        }
        // secant candidate once the bracket is tight
        if width <= opts.tol_b {
            let b_sec = lo - f_lo * (hi - lo) / (f_hi - f_lo);
            if b_sec > lo && b_sec < hi {
                let f_sec = f(b_sec)?;
                if f_sec.abs() <= opts.tol_value {
                    return Ok((b_sec, f_sec, [lo, hi], iterations));
                }
            }
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::ShootingTolerance {
                b: best_b,
                residual: best_f,
                tolerance: opts.tol_value,
            });
        }
        let f_mid = f(mid)?;
        iterations += 1;
        if f_mid > 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
}

/// Bisect `v_b(0) = ξ0` on `(b_lower + ε0, b_hat)`.
pub fn shoot(model: &SurplusModel, report: &AssumptionReport, opts: &ShootOptions) -> Result<ShootResult> {
    let (b_lower, b_hat) = report.bracket()?;
    let lo = (b_lower + opts.eps0).max(opts.eps0);
    let (b_star, residual, bracket, iterations) = bisect_barrier(model, 0.0, lo, b_hat, opts)?;

    let mut continuation = Vec::new();
    let mut continuation_increasing = None;
    if opts.continuation {
        for k in [2.0, 4.0, 8.0] {
            let gamma = -model.rho() / k;
            let (b, _, _, _) = bisect_barrier(model, gamma, lo, b_hat, opts)?;
            continuation.push(ContinuationPoint { gamma, b_star: b });
        }
        let chain: Vec<f64> = continuation.iter().map(|c| c.b_star).chain([b_star]).collect();
        continuation_increasing = Some(chain.windows(2).all(|w| w[0] < w[1]));
    }

    Ok(ShootResult {
        b_star,
        residual,
        bracket,
        iterations,
        b_lower,
        b_hat,
        continuation,
        continuation_increasing,
    })
}

/// Default right end of the value-function grid.
pub fn default_x_max(report: &AssumptionReport) -> Result<f64> {
    let (_, b_hat) = report.bracket()?;
    Ok(match report.b_upper {
        None => 3.0 * b_hat,
        Some(bu) => (3.0 * b_hat).min(bu + 2.0 * b_hat),
    })
}

/// The value function on `[0, x_max]` with its derivatives and the residual
/// of the operator `𝓛v = σ²/2 v'' + μ v' − Rσ²(v')²/(2v) − ρ v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundarySolution {
    pub b_star: f64,
    pub psi_plus_b_star: f64,
    pub xi0: f64,
    pub r: f64,
    pub x_grid: Vec<f64>,
    pub v: Vec<f64>,
    pub v_prime: Vec<f64>,
    pub v_double_prime: Vec<f64>,
    /// 𝓛v at grid points `x ≤ b*`.
    pub residual_interior: Vec<f64>,
    /// 𝓛v at grid points `x > b*`.
    pub residual_exterior: Vec<f64>,
    /// |v''(b*)|.
    pub smooth_fit_gap: f64,
    /// |v_{b*}(0) − ξ0|.
    pub shooting_residual: f64,
    pub route_gap: f64,
    /// max |𝓛v| / (sum of the absolute terms) with v'' taken from the slope
    /// of the dense output of g instead of the equation.
    pub dense_residual: f64,
    pub step_stats: StepStats,
    pub ode: FbpOptions,
    #[serde(skip)]
    run: Option<OdeRun>,
}

/// One CSV row of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionRow {
    pub x: f64,
    pub v: f64,
    pub v_prime: f64,
    pub v_double_prime: f64,
    pub residual: f64,
}

/// Scalar summary written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionHeader {
    pub b_star: f64,
    pub psi_plus_b_star: f64,
    pub xi0: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub x_max: f64,
    pub n_grid: usize,
    pub shooting_residual: f64,
    pub smooth_fit_gap: f64,
    pub route_gap: f64,
    pub dense_residual: f64,
    pub rtol: f64,
    pub atol: f64,
    pub step_stats: StepStats,
}

impl FreeBoundarySolution {
    pub fn x_max(&self) -> f64 {
        *self.x_grid.last().unwrap()
    }

    pub fn rows(&self) -> impl Iterator<Item = SolutionRow> + '_ {
        let residuals = self.residual_interior.iter().chain(&self.residual_exterior);
        self.x_grid
            .iter()
            .zip(&self.v)
            .zip(&self.v_prime)
            .zip(&self.v_double_prime)
            .zip(residuals)
            .map(|((((&x, &v), &v_prime), &v_double_prime), &residual)| SolutionRow {
                x,
                v,
                v_prime,
                v_double_prime,
                residual,
            })
    }

    pub fn header(&self) -> SolutionHeader {
        SolutionHeader {
            b_star: self.b_star,
            psi_plus_b_star: self.psi_plus_b_star,
            xi0: self.xi0,
            r: self.r,
            x_max: self.x_max(),
            n_grid: self.x_grid.len(),
            shooting_residual: self.shooting_residual,
            smooth_fit_gap: self.smooth_fit_gap,
            route_gap: self.route_gap,
            dense_residual: self.dense_residual,
            rtol: self.ode.rtol,
            atol: self.ode.atol,
            step_stats: self.step_stats,
        }
    }

    /// `(v, v')` at any `x ≥ 0`: dense ODE output below `b*`, the affine
    /// continuation above. Falls back to Hermite interpolation of the grid for
    /// deserialized solutions.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        if !(x >= 0.0) {
            return Err(Error::Domain { x, lo: 0.0, hi: f64::INFINITY });
        }
        if x > self.b_star {
            return Ok((x - self.b_star + self.psi_plus_b_star, 1.0));
        }
        if let Some(run) = &self.run {
            let (s, _) = run.state(x)?;
            let v = run.psi_plus_b * s[1].exp();
            return Ok((v, s[0] * v));
        }
        let i = self.x_grid.partition_point(|&k| k <= x).clamp(1, self.x_grid.len() - 1) - 1;
        Ok(hermite(
            self.x_grid[i],
            self.x_grid[i + 1],
            self.v[i],
            self.v[i + 1],
            self.v_prime[i],
            self.v_prime[i + 1],
            x,
        ))
    }
}

/// Assemble v* on `[0, x_max]` from the converged run at `b_star`.
pub fn build_value_function(
    model: &SurplusModel,
    b_star: f64,
    x_max: f64,
    n_grid: usize,
    opts: &FbpOptions,
) -> Result<FreeBoundarySolution> {
    if !(x_max > b_star) {
        return Err(Error::InvalidArgument(format!("x_max = {x_max} must exceed b* = {b_star}")));
    }
    if n_grid < 2 {
        return Err(Error::InvalidArgument("value grid needs at least 2 points".into()));
    }
    let run = integrate_g(model, b_star, 0.0, opts)?;
    let psi = run.psi_plus_b;
    let (rho, r) = (model.rho(), model.r());

    let mut x_grid: Vec<f64> = crate::model::linspace(0.0, x_max, n_grid).collect();
    if let Err(pos) = x_grid.binary_search_by(|p| p.total_cmp(&b_star)) {
        x_grid.insert(pos, b_star);
    }

    let n = x_grid.len();
    let mut v = Vec::with_capacity(n);
    let mut v_prime = Vec::with_capacity(n);
    let mut v_double_prime = Vec::with_capacity(n);
    let mut residual_interior = Vec::new();
    let mut residual_exterior = Vec::new();
    let mut smooth_fit_gap = 0.0;
    let mut dense_residual = 0.0;

    for &x in &x_grid {
        let (mu, sigma) = model.eval_mu_sigma(x)?;
        let s2 = sigma * sigma;
        if x <= b_star {
            let (s, ds) = run.state(x)?;
            let g = s[0];
            let vx = psi * s[1].exp();
            let vp = g * vx;
            let vpp = 2.0 * (rho * vx - mu * vp + r * s2 * vp * vp / (2.0 * vx)) / s2;
            let lv = 0.5 * s2 * vpp + mu * vp - r * s2 * vp * vp / (2.0 * vx) - rho * vx;
            // same operator with v'' from the slope of the continuous extension of g
            let vpp_dense = (ds[0] + g * g) * vx;
            let terms = [0.5 * s2 * vpp_dense, mu * vp, r * s2 * vp * vp / (2.0 * vx), rho * vx];
            let lv_dense = terms[0] + terms[1] - terms[2] - terms[3];
            let scale: f64 = terms.iter().map(|t| t.abs()).sum();
            dense_residual = f64::max(dense_residual, lv_dense.abs() / scale);
            if x == b_star {
                smooth_fit_gap = vpp.abs();
            }
            v.push(vx);
            v_prime.push(vp);
            v_double_prime.push(vpp);
            residual_interior.push(lv);
        } else {
            let vx = x - b_star + psi;
            v.push(vx);
            v_prime.push(1.0);
            v_double_prime.push(0.0);
            residual_exterior.push(mu - r * s2 / (2.0 * vx) - rho * vx);
        }
    }

    Ok(FreeBoundarySolution {
        b_star,
        psi_plus_b_star: psi,
        xi0: model.xi0(),
        r,
        shooting_residual: (v[0] - model.xi0()).abs(),
        x_grid,
        v,
        v_prime,
        v_double_prime,
        residual_interior,
        residual_exterior,
        smooth_fit_gap,
        route_gap: run.route_gap,
        dense_residual,
        step_stats: run.step_stats,
        ode: *opts,
        run: Some(run),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViTolerances {
    /// |𝓛v| ≤ pde·ρ·v(x) below b*.
    pub pde: f64,
    /// 𝓛v ≤ sign above b*.
    pub sign: f64,
    /// |v(0) − ξ0| ≤ value.
    pub value: f64,
    /// v' ≥ 1 − gradient below b*.
    pub gradient: f64,
}

impl Default for ViTolerances {
    fn default() -> Self {
        Self {
            pde: 1e-6,
            sign: 1e-8,
            value: 1e-8,
            gradient: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViCheck {
    pub name: String,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub at_x: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViReport {
    pub tolerances: ViTolerances,
    pub checks: Vec<ViCheck>,
    pub passed: bool,
}

impl ViReport {
    pub fn check(&self, name: &str) -> Option<&ViCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&ViCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn worst_by<I>(items: I) -> (f64, f64)
where
    I: Iterator<Item = (f64, f64)>,
{
    items.fold((f64::NEG_INFINITY, f64::NAN), |acc, (x, val)| if val > acc.0 { (val, x) } else { acc })
}

/// Check the variational inequality `max(𝓛v, 1 − v') = 0` on the grid, the
/// boundary value and the a priori bounds `ξ0 + x ≤ v ≤ ξ0 + x + μ̄/ρ`.
pub fn verify_vi(sol: &FreeBoundarySolution, model: &SurplusModel, tol: &ViTolerances) -> Result<ViReport> {
    let rho = model.rho();
    let xi0 = model.xi0();
    let n_in = sol.residual_interior.len();
    let xs_in = &sol.x_grid[..n_in];
    let xs_out = &sol.x_grid[n_in..];
    let mu_bar = model.mu_bar_on(sol.x_max(), 4001)?;

    let mut checks = Vec::new();
    let mut push = |name: &str, (worst, at_x): (f64, f64), tolerance: f64| {
        let passed = worst <= tolerance || (worst == f64::NEG_INFINITY);
        checks.push(ViCheck {
            name: name.to_string(),
            worst: if worst == f64::NEG_INFINITY { 0.0 } else { worst },
            at_x,
            tolerance,
            passed,
        });
    };

    push(
        "interior_equation",
        worst_by(
            xs_in
                .iter()
                .zip(&sol.residual_interior)
                .zip(&sol.v)
                .map(|((&x, &lv), &v)| (x, lv.abs() / (rho * v))),
        ),
        tol.pde,
    );
    push(
        "interior_gradient",
        worst_by(xs_in.iter().zip(&sol.v_prime).map(|(&x, &vp)| (x, 1.0 - vp))),
        tol.gradient,
    );
    push(
        "exterior_sign",
        worst_by(xs_out.iter().zip(&sol.residual_exterior).map(|(&x, &lv)| (x, lv))),
        tol.sign,
    );
    push(
        "exterior_gradient",
        worst_by(xs_out.iter().zip(&sol.v_prime[n_in..]).map(|(&x, &vp)| (x, (vp - 1.0).abs()))),
        0.0,
    );
    push("boundary_value", ((sol.v[0] - xi0).abs(), 0.0), tol.value);
    push(
        "bounds",
        worst_by(sol.x_grid.iter().zip(&sol.v).map(|(&x, &v)| {
            let below = (xi0 + x) - v;
            let above = v - (xi0 + x + mu_bar / rho);
            (x, below.max(above))
        })),
        tol.value,
    );
    push(
        "monotone",
        worst_by(sol.x_grid.windows(2).zip(sol.v.windows(2)).map(|(x, v)| (x[1], v[0] - v[1]))),
        -f64::MIN_POSITIVE,
    );

    let passed = checks.iter().all(|c| c.passed);
    Ok(ViReport {
        tolerances: *tol,
        checks,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub shoot: ShootOptions,
    pub scan: Option<ScanOptions>,
    /// Defaults to [`default_x_max`].
    pub x_max: Option<f64>,
    pub n_grid: usize,
    pub vi: ViTolerances,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            shoot: ShootOptions::default(),
            scan: None,
            x_max: None,
            n_grid: 2001,
            vi: ViTolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solved {
    pub report: AssumptionReport,
    pub shoot: ShootResult,
    pub solution: FreeBoundarySolution,
    pub vi: ViReport,
}

/// Assumption scan, shooting, value function and VI check in one go.
pub fn solve(model: &SurplusModel, opts: &SolveOptions) -> Result<Solved> {
    let scan = opts.scan.unwrap_or_else(|| ScanOptions::for_model(model));
    let report = check_assumptions(model, &scan)?;
    if !report.all_passed() {
        return Err(Error::Assumption(report.failure_summary()));
    }
    let shoot_result = shoot(model, &report, &opts.shoot)?;
    let x_max = match opts.x_max {
        Some(x) => x,
        None => default_x_max(&report)?,
    };
    let solution = build_value_function(model, shoot_result.b_star, x_max, opts.n_grid, &opts.shoot.ode)?;
    let vi = verify_vi(&solution, model, &opts.vi)?;
    Ok(Solved {
        report,
        shoot: shoot_result,
        solution,
        vi,
    })
}

/// The R = 0 pipeline: `v = h` solves the linear equation σ²/2 v'' + μ v' = ρ v.
pub fn classical_solve(model: &SurplusModel, opts: &SolveOptions) -> Result<Solved> {
    if !model.is_classical() {
        return Err(Error::InvalidArgument(format!(
            "classical solve needs R = 0, got {}",
            model.r()
        )));
    }
    solve(model, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn baseline() -> SurplusModel {
        SurplusModel::ornstein_uhlenbeck(0.5, 3.0, 0.5, 0.05, 0.1, 1.5).unwrap()
    }

    fn report(model: &SurplusModel) -> AssumptionReport {
        check_assumptions(model, &ScanOptions::for_model(model)).unwrap()
    }

    #[test]
    fn run_starts_at_inverse_psi() {
        let m = baseline();
        let run = integrate_g(&m, 0.5, 0.0, &FbpOptions::default()).unwrap();
        let psi = m.psi_roots(0.5).unwrap().psi_plus;
        assert_eq!(run.g_values[0], 1.0 / psi);
        assert_eq!(run.x_grid[0], 0.5);
        assert_eq!(*run.x_grid.last().unwrap(), 0.0);
        assert_relative_eq!(value_at(&run, 0.5).unwrap(), psi, max_relative = 1e-15);
        assert!(run.route_gap <= 1e-8);
    }

    #[test]
    fn routes_agree_at_zero() {
        let m = baseline();
        for b in [0.2, 0.6, 0.8] {
            let run = integrate_g(&m, b, 0.0, &FbpOptions::default()).unwrap();
            let v0 = value_at_zero(&run).unwrap();
            assert_relative_eq!(v0, value_at_zero_linear(&run, m.r()), max_relative = 1e-8);
        }
    }

    #[test]
    fn shooting_bracket_signs() {
        let m = baseline();
        let rep = report(&m);
        let (lo, hi) = rep.bracket().unwrap();
        let opts = FbpOptions::default();
        assert!(shooting_function(&m, lo + 1e-6, 0.0, &opts).unwrap() > 0.0);
        assert!(shooting_function(&m, hi - 1e-6, 0.0, &opts).unwrap() < 0.0);
    }

    #[test]
    fn barrier_above_pole_diverges() {
        let m = baseline();
        let err = integrate_g(&m, 1.5, 0.0, &FbpOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
        let (h_min, _) = integrate_h(&m, 1.5, 0.0, &FbpOptions::default()).unwrap();
        assert!(h_min <= 0.0);
        assert_eq!(shooting_function(&m, 1.5, 0.0, &FbpOptions::default()).unwrap(), -1.5);
    }

    #[test]
    fn baseline_shoot_and_vi() {
        let m = baseline();
        let solved = solve(&m, &SolveOptions::default()).unwrap();
        let b = solved.shoot.b_star;
        assert!(solved.report.b_lower < b && b < solved.report.b_hat.unwrap());
        assert!(solved.shoot.residual.abs() <= 1e-8);
        assert!(solved.vi.passed, "{:?}", solved.vi.failures());
        let sol = &solved.solution;
        let k = sol.residual_interior.len() - 1;
        assert_eq!(sol.x_grid[k], b);
        assert_relative_eq!(sol.v[k], sol.psi_plus_b_star, max_relative = 1e-14);
        assert_relative_eq!(sol.v_prime[k], 1.0, max_relative = 1e-13);
        assert!(sol.smooth_fit_gap <= 1e-4 / sol.psi_plus_b_star);
        assert!(sol.dense_residual <= 1e-6, "{}", sol.dense_residual);
        eprintln!("b* = {b:.16}, psi+ = {}, v'(0) = {}", sol.psi_plus_b_star, sol.v_prime[0]);
    }

    #[test]
    fn exterior_strictly_negative_beyond_upper_landmark() {
        let m = baseline();
        let solved = solve(&m, &SolveOptions::default()).unwrap();
        let sol = &solved.solution;
        let b_upper = solved.report.b_upper.unwrap();
        let n_in = sol.residual_interior.len();
        let beyond: Vec<f64> = sol.x_grid[n_in..]
            .iter()
            .zip(&sol.residual_exterior)
            .filter(|(&x, _)| x > b_upper)
            .map(|(_, &l)| l)
            .collect();
        assert!(!beyond.is_empty());
        assert!(beyond.iter().all(|&l| l < 0.0));
    }

    #[test]
    fn eval_matches_grid() {
        let m = baseline();
        let sol = solve(&m, &SolveOptions::default()).unwrap().solution;
        for (i, &x) in sol.x_grid.iter().enumerate().step_by(97) {
            let (v, vp) = sol.eval(x).unwrap();
            assert_relative_eq!(v, sol.v[i], max_relative = 1e-13);
            assert_relative_eq!(vp, sol.v_prime[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn downward_perturbation_fails_boundary_value() {
        let m = baseline();
        let solved = solve(&m, &SolveOptions::default()).unwrap();
        let b = solved.shoot.b_star;
        let b_low = b - 0.05 * (b - solved.report.b_lower);
        let sol = build_value_function(&m, b_low, solved.solution.x_max(), 2001, &FbpOptions::default()).unwrap();
        let vi = verify_vi(&sol, &m, &ViTolerances::default()).unwrap();
        assert!(!vi.check("boundary_value").unwrap().passed);
        assert!(!vi.passed);
    }

    #[test]
    fn deserialized_solution_interpolates() {
        let m = baseline();
        let sol = solve(&m, &SolveOptions::default()).unwrap().solution;
        let back: FreeBoundarySolution = serde_json::from_str(&serde_json::to_string(&sol).unwrap()).unwrap();
        let x = 0.5 * (sol.b_star + 0.0) + 1e-3;
        let (v_dense, _) = sol.eval(x).unwrap();
        let (v_interp, _) = back.eval(x).unwrap();
        assert_relative_eq!(v_dense, v_interp, max_relative = 1e-5);
    }
}
