//! Dependence of the optimal barrier and value on the aversion parameter `R`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbp::{solve, SolveOptions};
use crate::model::{check_assumptions, ScanOptions, SurplusModel};

/// One column of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub r: f64,
    pub assumption_valid: bool,
    pub b_star: Option<f64>,
    pub b_lower: Option<f64>,
    pub b_hat: Option<f64>,
    /// Value at each probe, in probe order.
    pub v: Vec<Option<f64>>,
    pub vi_passed: Option<bool>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub r_grid: Vec<f64>,
    pub x_probes: Vec<f64>,
    pub points: Vec<SweepPoint>,
    pub classical_b: f64,
    pub classical_v: Vec<f64>,
    pub diagnostics: SweepDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDiagnostics {
    /// Every probe column nonincreasing over consecutive solved R.
    pub monotone: bool,
    /// Smallest decrease between consecutive solved R over all probes.
    pub min_decrease: Option<f64>,
    /// Every solved value at or below the classical value.
    pub below_classical: bool,
    pub max_b_jump: Option<f64>,
    /// Index `k` of the pair `(r_k, r_{k+1})` with the largest b* jump.
    pub max_b_jump_at: Option<usize>,
    pub max_value_jump: Option<f64>,
    pub max_grid_spacing: Option<f64>,
    /// b* inside `(b_lower, b_hat)` for every solved R.
    pub b_star_bracketed: bool,
}

impl SweepResult {
    /// `v[probe][R]` matrix, `None` where R was not solved.
    pub fn v_at(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.x_probes.len())
            .map(|p| self.points.iter().map(|pt| pt.v[p]).collect())
            .collect()
    }

    pub fn b_star(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.b_star).collect()
    }

    pub fn assumption_valid(&self) -> Vec<bool> {
        self.points.iter().map(|p| p.assumption_valid).collect()
    }

    fn solved(&self) -> Vec<&SweepPoint> {
        self.points.iter().filter(|p| p.b_star.is_some()).collect()
    }
}

fn solve_point(template: &SurplusModel, r: f64, probes: &[f64], opts: &SolveOptions) -> SweepPoint {
    let mut point = SweepPoint {
        r,
        assumption_valid: false,
        b_star: None,
        b_lower: None,
        b_hat: None,
        v: vec![None; probes.len()],
        vi_passed: None,
        failure: None,
    };
    let model = match template.with_r(r) {
        Ok(m) => m,
        Err(e) => {
            point.failure = Some(e.to_string());
            return point;
        }
    };
    let scan = opts.scan.unwrap_or_else(|| ScanOptions::for_model(&model));
    match check_assumptions(&model, &scan) {
        Ok(rep) => {
            point.assumption_valid = rep.all_passed();
            point.b_lower = Some(rep.b_lower);
            point.b_hat = rep.b_hat;
            if !rep.all_passed() {
                point.failure = Some(rep.failure_summary());
                return point;
            }
        }
        Err(e) => {
            point.failure = Some(e.to_string());
            return point;
        }
    }
    let solved = match solve(&model, opts) {
        Ok(s) => s,
        Err(e) => {
            point.failure = Some(e.to_string());
            return point;
        }
    };
    point.b_star = Some(solved.solution.b_star);
    point.vi_passed = Some(solved.vi.passed);
    for (slot, &x) in point.v.iter_mut().zip(probes) {
        match solved.solution.eval(x) {
            Ok((v, _)) => *slot = Some(v),
            Err(e) => {
                point.failure = Some(e.to_string());
            }
        }
    }
    point
}

/// Re-solves the free-boundary problem at every `R` in `r_grid` (in
/// parallel) and evaluates the value at each probe. Per-R failures are
/// recorded, not raised.
pub fn sweep(template: &SurplusModel, r_grid: &[f64], x_probes: &[f64], opts: &SolveOptions) -> Result<SweepResult> {
    if r_grid.is_empty() {
        return Err(Error::InvalidArgument("empty R grid".into()));
    }
    if r_grid.iter().any(|r| !(0.0..1.0).contains(r)) || r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("R grid must be strictly increasing inside [0, 1)".into()));
    }
    let classical_model = template.with_r(0.0)?;
    let classical = solve(&classical_model, opts)?;
    let classical_v = x_probes
        .iter()
        .map(|&x| classical.solution.eval(x).map(|(v, _)| v))
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<SweepPoint> = r_grid
        .par_iter()
        .map(|&r| solve_point(template, r, x_probes, opts))
        .collect();
    let mut result = SweepResult {
        r_grid: r_grid.to_vec(),
        x_probes: x_probes.to_vec(),
        points,
        classical_b: classical.solution.b_star,
        classical_v,
        diagnostics: SweepDiagnostics {
            monotone: true,
            min_decrease: None,
            below_classical: true,
            max_b_jump: None,
            max_b_jump_at: None,
            max_value_jump: None,
            max_grid_spacing: None,
            b_star_bracketed: true,
        },
    };
    result.diagnostics = diagnose(&result);
    Ok(result)
}

fn diagnose(res: &SweepResult) -> SweepDiagnostics {
    let solved = res.solved();
    let mut d = SweepDiagnostics {
        monotone: true,
        min_decrease: None,
        below_classical: true,
        max_b_jump: None,
        max_b_jump_at: None,
        max_value_jump: None,
        max_grid_spacing: None,
        b_star_bracketed: true,
    };
    for p in &solved {
        let b = p.b_star.unwrap();
        if !(p.b_lower.is_some_and(|lo| lo < b) && p.b_hat.is_some_and(|hi| b < hi)) {
            d.b_star_bracketed = false;
        }
        for (v, k) in p.v.iter().zip(&res.classical_v) {
            if let Some(v) = v {
                if *v > *k + 1e-9 * k.abs().max(1.0) {
                    d.below_classical = false;
                }
            }
        }
    }
    for (k, w) in solved.windows(2).enumerate() {
        let jump = (w[1].b_star.unwrap() - w[0].b_star.unwrap()).abs();
        if d.max_b_jump.is_none_or(|m| jump > m) {
            d.max_b_jump = Some(jump);
            d.max_b_jump_at = Some(k);
        }
        let h = w[1].r - w[0].r;
        d.max_grid_spacing = Some(d.max_grid_spacing.map_or(h, |m: f64| m.max(h)));
        for (a, b) in w[0].v.iter().zip(&w[1].v) {
            if let (Some(a), Some(b)) = (a, b) {
                let dec = a - b;
                if dec < 0.0 {
                    d.monotone = false;
                }
                d.min_decrease = Some(d.min_decrease.map_or(dec, |m: f64| m.min(dec)));
                d.max_value_jump = Some(d.max_value_jump.map_or(dec.abs(), |m: f64| m.max(dec.abs())));
            }
        }
    }
    d
}

/// Largest `[0, r_end)` on which every condition holds, scanning `[0, r_max]`
/// with `n` points and refining the end by bisection.
pub fn valid_r_interval(template: &SurplusModel, r_max: f64, n: usize) -> Result<(f64, f64)> {
    let valid = |r: f64| -> bool {
        template
            .with_r(r)
            .and_then(|m| check_assumptions(&m, &ScanOptions::for_model(&m)))
            .is_ok_and(|rep| rep.all_passed())
    };
    if !valid(0.0) {
        return Err(Error::Assumption("conditions fail already at R = 0".into()));
    }
    let grid: Vec<f64> = (0..n).map(|i| r_max * i as f64 / (n - 1) as f64).collect();
    let flags: Vec<bool> = grid.par_iter().map(|&r| valid(r)).collect();
    let Some(first_bad) = flags.iter().position(|ok| !ok) else {
        return Ok((0.0, r_max));
    };
    let (mut lo, mut hi) = (grid[first_bad - 1], grid[first_bad]);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if valid(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.0, lo))
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn r_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub refine: usize,
    pub coarse_max_jump: f64,
    pub fine_max_jump: f64,
    /// coarse / fine; close to `refine` for a continuous, smooth b*(R).
    pub jump_ratio: f64,
    pub refined_monotone: bool,
    /// R values excluded because the conditions fail there.
    pub excluded: Vec<f64>,
    pub refined: SweepResult,
}

/// Re-runs the sweep on the valid part of `result`'s grid with `refine`
/// times the density and compares the largest b* jumps.
pub fn continuity_report(
    template: &SurplusModel,
    result: &SweepResult,
    refine: usize,
    opts: &SolveOptions,
) -> Result<ContinuityReport> {
    if refine < 2 {
        return Err(Error::InvalidArgument("refinement factor must be >= 2".into()));
    }
    let solved = result.solved();
    if solved.len() < 2 {
        return Err(Error::Estimation("continuity needs at least two solved R values".into()));
    }
    let excluded = result
        .points
        .iter()
        .filter(|p| !p.assumption_valid)
        .map(|p| p.r)
        .collect();
    let mut grid = Vec::new();
    for w in solved.windows(2) {
        for j in 0..refine {
            grid.push(w[0].r + (w[1].r - w[0].r) * j as f64 / refine as f64);
        }
    }
    grid.push(solved.last().unwrap().r);
    let refined = sweep(template, &grid, &result.x_probes, opts)?;
    let coarse = result.diagnostics.max_b_jump.unwrap();
    let fine = refined
        .diagnostics
        .max_b_jump
        .ok_or_else(|| Error::Estimation("refined sweep solved fewer than two points".into()))?;
    Ok(ContinuityReport {
        refine,
        coarse_max_jump: coarse,
        fine_max_jump: fine,
        jump_ratio: coarse / fine,
        refined_monotone: refined.diagnostics.monotone,
        excluded,
        refined,
    })
}
