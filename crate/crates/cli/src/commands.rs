use std::fs;
use std::path::{Path, PathBuf};

use robdiv::fbp::{self, FreeBoundarySolution, Solved};
use robdiv::lattice::{self, LatticeOptions};
use robdiv::sensitivity::{self, ContinuityReport, SweepResult};
use robdiv::sim::{self, KernelKind, McEstimate, SimConfig};
use robdiv::{check_assumptions, AssumptionReport, ScanOptions, SurplusModel};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};
use crate::output::{num, opt_num, Meta, Writer};
use crate::{CliError, Exit};

/// What a run produced. `exit` may be nonzero even though reports were
/// written (for example a failed assumption check).
#[derive(Debug)]
pub struct Outcome {
    pub exit: Exit,
    pub message: Option<String>,
    pub files: Vec<PathBuf>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    model: SurplusModel,
    out: Writer,
}

pub fn load_model(path: &Path) -> Result<SurplusModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new(Exit::Config, format!("cannot read model {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::new(Exit::Config, format!("invalid model file {}: {e}", path.display())))
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = load_model(cfg.model_path()?)?;
    let meta = Meta::new(command, cfg, &model);
    let out = Writer::new(cfg.out_dir(), cfg.format, meta)?;
    let mut ctx = Ctx { cfg, model, out };
    let result = match command {
        Command::Check => check(&mut ctx).map(|_| ()),
        Command::Solve => solve(&mut ctx).map(|_| ()),
        Command::Simulate => simulate(&mut ctx, None).map(|_| ()),
        Command::Lattice => lattice_stage(&mut ctx, None).map(|_| ()),
        Command::Sweep => sweep(&mut ctx, None).map(|_| ()),
        Command::Full => full(&mut ctx),
    };
    let files = std::mem::take(&mut ctx.out.written);
    match result {
        Ok(()) => Ok(Outcome {
            exit: Exit::Ok,
            message: None,
            files,
        }),
        Err(e) if !files.is_empty() => Ok(Outcome {
            exit: e.exit,
            message: Some(e.message),
            files,
        }),
        Err(e) => Err(e),
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serializes")
}

fn check(ctx: &mut Ctx) -> Result<AssumptionReport, CliError> {
    let report = check_assumptions(&ctx.model, &ScanOptions::for_model(&ctx.model))?;
    ctx.out.json(
        "assumptions.json",
        json!({
            "model": ctx.model,
            "all_passed": report.all_passed(),
            "report": report,
        }),
    )?;
    if !report.all_passed() {
        return Err(CliError::new(Exit::Assumption, report.failure_summary()));
    }
    Ok(report)
}

fn solve(ctx: &mut Ctx) -> Result<Solved, CliError> {
    let solved = fbp::solve(&ctx.model, &ctx.cfg.solve_options())?;
    write_solution(ctx, &solved)?;
    if !solved.vi.passed {
        let names: Vec<String> = solved
            .vi
            .failures()
            .iter()
            .map(|c| format!("{} (worst {:e} at x = {}, tolerance {:e})", c.name, c.worst, c.at_x, c.tolerance))
            .collect();
        return Err(CliError::new(Exit::Solver, format!("verification failed: {}", names.join("; "))));
    }
    Ok(solved)
}

fn write_solution(ctx: &mut Ctx, solved: &Solved) -> Result<(), CliError> {
    let sol = &solved.solution;
    ctx.out.json(
        "solution.json",
        json!({
            "model": ctx.model,
            "header": sol.header(),
            "shoot": solved.shoot,
            "verification": solved.vi,
            "report": solved.report,
            "solution": sol,
        }),
    )?;
    let rows = sol
        .rows()
        .map(|r| vec![num(r.x), num(r.v), num(r.v_prime), num(r.v_double_prime), num(r.residual)]);
    ctx.out.csv("solution.csv", &["x", "v", "v_prime", "v_double_prime", "residual"], rows)
}

/// Reads the solution saved by `solve`, refusing one computed for another
/// model.
pub fn load_solution(path: &Path, model: &SurplusModel) -> Result<FreeBoundarySolution, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new(Exit::Config, format!("cannot read solution {}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::new(Exit::Config, format!("invalid solution file {}: {e}", path.display())))?;
    if doc.get("model") != Some(&to_value(model)) {
        return Err(CliError::new(
            Exit::Config,
            format!("solution {} was computed for a different model", path.display()),
        ));
    }
    serde_json::from_value(doc["solution"].take())
        .map_err(|e| CliError::new(Exit::Config, format!("invalid solution in {}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize)]
struct SimRow {
    x0: f64,
    estimate: McEstimate,
    coupled: Option<sim::CoupledEstimate>,
    /// Zero-kernel estimate on the same seed.
    classical: Option<McEstimate>,
    v_star: Option<f64>,
    abs_error: Option<f64>,
    /// 3·stderr + 5·bias.
    tolerance: Option<f64>,
    within_tolerance: Option<bool>,
    /// mean_K ≥ mean − 3(stderr_K + stderr).
    ordering_holds: Option<bool>,
}

fn simulate(ctx: &mut Ctx, inline: Option<&Solved>) -> Result<Vec<SimRow>, CliError> {
    let cfg: &RunConfig = ctx.cfg;
    let s = &cfg.simulate;
    let loaded;
    let solution: Option<&FreeBoundarySolution> = match (inline, &s.solution) {
        (Some(solved), _) => Some(&solved.solution),
        (None, Some(path)) => {
            loaded = load_solution(path, &ctx.model)?;
            Some(&loaded)
        }
        (None, None) if s.inline_solve => {
            let solved = solve(ctx)?;
            loaded = solved.solution;
            Some(&loaded)
        }
        (None, None) => None,
    };
    if s.kernel == KernelKind::WorstCase && solution.is_none() {
        return Err(CliError::new(
            Exit::Config,
            "worst-case simulation needs a solved value function: pass --solution or --inline-solve",
        ));
    }
    let b = match (s.b, solution) {
        (Some(b), _) => b,
        (None, Some(sol)) => sol.b_star,
        (None, None) => return Err(CliError::new(Exit::Config, "no barrier: set simulate.b or give a solution")),
    };
    let x0s: Vec<f64> = if s.x0.is_empty() {
        s.x0_multiples.iter().map(|m| m * b).collect()
    } else {
        s.x0.clone()
    };
    let t_max = s.t_max.unwrap_or(50.0 / ctx.model.rho());
    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    for &x0 in &x0s {
        let cfg = SimConfig {
            x0,
            b,
            dt: s.dt,
            t_max,
            n_paths: s.n_paths,
            seed: s.seed,
            kernel: s.kernel,
            measure: s.measure,
        };
        let (estimate, coupled) = if s.coupled {
            let c = sim::estimate_coupled(&ctx.model, &cfg, solution)?;
            (c.fine.clone(), Some(c))
        } else {
            (sim::estimate_value(&ctx.model, &cfg, solution)?, None)
        };
        let classical = if s.compare_classical && s.kernel == KernelKind::WorstCase {
            let k = SimConfig {
                kernel: KernelKind::Zero,
                ..cfg
            };
            Some(sim::estimate_value(&ctx.model, &k, None)?)
        } else {
            None
        };
        // the tilted estimate targets v* only with the worst-case kernel at b*
        let v_star = match solution {
            Some(sol) if s.kernel == KernelKind::WorstCase && b == sol.b_star => Some(sol.eval(x0)?.0),
            _ => None,
        };
        let bias = coupled.as_ref().map_or(0.0, |c| c.bias);
        let tolerance = v_star.map(|_| 3.0 * estimate.stderr + 5.0 * bias);
        let abs_error = v_star.map(|v| (estimate.mean - v).abs());
        rows.push(SimRow {
            x0,
            within_tolerance: abs_error.zip(tolerance).map(|(e, t)| e <= t),
            ordering_holds: classical
                .as_ref()
                .map(|k| k.mean >= estimate.mean - 3.0 * (k.stderr + estimate.stderr)),
            estimate,
            coupled,
            classical,
            v_star,
            abs_error,
            tolerance,
        });
        if s.dump_paths {
            dumps.push((x0, sim::simulate_paths(&ctx.model, &cfg, solution)?));
        }
    }
    ctx.out.json(
        "mc_estimate.json",
        json!({
            "model": ctx.model,
            "simulate": {
                "x0": x0s,
                "b": b,
                "dt": s.dt,
                "t_max": t_max,
                "n_paths": s.n_paths,
                "seed": s.seed,
                "kernel": s.kernel,
                "measure": s.measure,
                "coupled": s.coupled,
            },
            "estimates": rows,
        }),
    )?;
    let csv_rows = rows.iter().map(|r| {
        vec![
            num(r.x0),
            num(r.estimate.mean),
            num(r.estimate.stderr),
            num(r.estimate.censored_fraction),
            opt_num(r.coupled.as_ref().map(|c| c.bias)),
            opt_num(r.v_star),
        ]
    });
    ctx.out.csv(
        "mc_estimate.csv",
        &["x0", "mean", "stderr", "censored_fraction", "bias", "v_star"],
        csv_rows.collect::<Vec<_>>(),
    )?;
    for (k, (x0, records)) in dumps.iter().enumerate() {
        let rows = records.iter().enumerate().map(|(i, r)| {
            vec![
                i.to_string(),
                num(*x0),
                num(r.ruin_time),
                r.censored.to_string(),
                num(r.discounted_dividends),
                num(r.tilt_integral),
                num(r.terminal_payout_factor),
                num(r.value),
            ]
        });
        ctx.out.csv(
            &format!("paths_{k}.csv"),
            &[
                "path",
                "x0",
                "ruin_time",
                "censored",
                "discounted_dividends",
                "tilt_integral",
                "terminal_payout_factor",
                "value",
            ],
            rows.collect::<Vec<_>>(),
        )?;
    }
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r.within_tolerance == Some(false) || r.ordering_holds == Some(false))
        .map(|r| format!("x0 = {}", r.x0))
        .collect();
    if !bad.is_empty() {
        return Err(CliError::new(
            Exit::Estimation,
            format!("Monte Carlo disagrees with the solved value at {}", bad.join(", ")),
        ));
    }
    Ok(rows)
}

fn solved_or_solve(ctx: &mut Ctx, inline: Option<&Solved>) -> Result<Solved, CliError> {
    match inline {
        Some(s) => Ok(s.clone()),
        None => solve(ctx),
    }
}

fn lattice_stage(ctx: &mut Ctx, inline: Option<&Solved>) -> Result<lattice::RefinementReport, CliError> {
    let solved = solved_or_solve(ctx, inline)?;
    let sol = &solved.solution;
    let cfg: &RunConfig = ctx.cfg;
    let l = &cfg.lattice;
    let t_max = l.t_max.unwrap_or_else(|| lattice::default_t_max(&ctx.model));
    let opts = LatticeOptions {
        tol: l.tol,
        max_iters: l.max_iters,
        ..LatticeOptions::default()
    };
    let probes: Vec<f64> = l.probe_multiples.iter().map(|m| m * sol.b_star).collect();
    let report = match l.dt {
        // a fixed dt only makes sense on one level
        Some(dt) => {
            let spec = lattice::build_lattice(&ctx.model, sol.b_star, l.n_space, Some(dt), t_max)?;
            let val = lattice::solve(&spec, &opts)?;
            let z = val.at_time_zero();
            let probe_errors = probes
                .iter()
                .map(|&x| Ok((val.interpolate(&z.v_rob, x)? - sol.eval(x)?.0).abs()))
                .collect::<robdiv::Result<Vec<_>>>()?;
            lattice::RefinementReport {
                probes: probes.clone(),
                levels: vec![lattice::RefinementLevel {
                    n_space: l.n_space,
                    dt,
                    equivalence_gap: val.equivalence_gap,
                    probe_errors,
                    picard: val.picard.clone(),
                    robust_clamps: val.robust_clamps,
                }],
                gap_ratios: Vec::new(),
                base: Some(val),
            }
        }
        None => lattice::refinement(&ctx.model, sol, l.n_space, l.levels, t_max, &probes, &opts)?,
    };
    let base = report.base.as_ref().expect("base level is kept");
    ctx.out.json(
        "lattice.json",
        json!({
            "model": ctx.model,
            "b_star": sol.b_star,
            "t_max": base.t_max,
            "equivalence_gap": base.equivalence_gap,
            "refinement": report,
            "picard": base.picard,
            "robust_clamps": base.robust_clamps,
        }),
    )?;
    let z = base.at_time_zero();
    let rows = (0..base.x.len()).map(|i| {
        vec![
            num(base.x[i]),
            num(z.k[i]),
            num(z.v_ez[i]),
            num(z.v_low[i]),
            num(z.v_rob[i]),
            num(base.theta_star[i]),
            opt_num(sol.eval(base.x[i]).ok().map(|v| v.0)),
        ]
    });
    ctx.out.csv(
        "lattice_t0.csv",
        &["x", "k", "v_ez", "v_low", "v_rob", "theta_star", "v_star"],
        rows.collect::<Vec<_>>(),
    )?;
    if base.picard.bound_violations > 0 {
        return Err(CliError::new(
            Exit::Solver,
            format!("{} Picard iterates left the bound sandwich", base.picard.bound_violations),
        ));
    }
    Ok(report)
}

fn sweep(ctx: &mut Ctx, inline: Option<&Solved>) -> Result<(SweepResult, ContinuityReport), CliError> {
    let cfg: &RunConfig = ctx.cfg;
    let s = &cfg.sweep;
    let opts = cfg.solve_options();
    let (valid_lo, valid_hi) = sensitivity::valid_r_interval(&ctx.model, s.scan_r_max, s.scan_points)?;
    let r_max = s.r_max.unwrap_or(s.valid_fraction * valid_hi);
    if !(r_max > s.r_min) || s.n_r < 2 {
        return Err(CliError::new(Exit::Config, format!("empty R grid [{}, {r_max}] with {} points", s.r_min, s.n_r)));
    }
    let probes = if s.probes.is_empty() {
        let b = match inline {
            Some(solved) => solved.solution.b_star,
            None => fbp::solve(&ctx.model, &opts)?.solution.b_star,
        };
        s.probe_multiples.iter().map(|m| m * b).collect()
    } else {
        s.probes.clone()
    };
    let grid = sensitivity::r_grid(s.r_min, r_max, s.n_r);
    let result = sensitivity::sweep(&ctx.model, &grid, &probes, &opts)?;
    let continuity = sensitivity::continuity_report(&ctx.model, &result, s.refine, &opts)?;
    let ratio_ok = (continuity.jump_ratio - s.refine as f64).abs() <= 0.2 * s.refine as f64;
    ctx.out.json(
        "sweep.json",
        json!({
            "model": ctx.model,
            "valid_interval": [valid_lo, valid_hi],
            "result": result,
            "continuity": {
                "refine": continuity.refine,
                "coarse_max_jump": continuity.coarse_max_jump,
                "fine_max_jump": continuity.fine_max_jump,
                "jump_ratio": continuity.jump_ratio,
                "refined_monotone": continuity.refined_monotone,
                "excluded": continuity.excluded,
                "refined_diagnostics": continuity.refined.diagnostics,
            },
            "verdicts": {
                "monotone": result.diagnostics.monotone,
                "below_classical": result.diagnostics.below_classical,
                "b_star_bracketed": result.diagnostics.b_star_bracketed,
                "continuity": ratio_ok,
            },
        }),
    )?;
    let mut header: Vec<String> = vec!["x".into()];
    header.extend(result.r_grid.iter().map(|r| format!("R={r}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let v_at = result.v_at();
    let rows = result.x_probes.iter().zip(&v_at).map(|(x, row)| {
        let mut out = vec![num(*x)];
        out.extend(row.iter().map(|v| opt_num(*v)));
        out
    });
    ctx.out.csv("sweep_values.csv", &header_refs, rows.collect::<Vec<_>>())?;
    let rows = result.points.iter().map(|p| {
        vec![
            num(p.r),
            opt_num(p.b_star),
            p.assumption_valid.to_string(),
            opt_num(p.b_lower),
            opt_num(p.b_hat),
        ]
    });
    ctx.out.csv(
        "sweep_bstar.csv",
        &["R", "b_star", "assumption_valid", "b_lower", "b_hat"],
        rows.collect::<Vec<_>>(),
    )?;
    Ok((result, continuity))
}

fn full(ctx: &mut Ctx) -> Result<(), CliError> {
    ctx.out.set_command(Command::Check);
    check(ctx)?;
    ctx.out.set_command(Command::Solve);
    let solved = solve(ctx)?;
    ctx.out.set_command(Command::Simulate);
    let sim_rows = simulate(ctx, Some(&solved));
    ctx.out.set_command(Command::Lattice);
    let lat = lattice_stage(ctx, Some(&solved))?;
    ctx.out.set_command(Command::Sweep);
    let (sweep_result, continuity) = sweep(ctx, Some(&solved))?;
    ctx.out.set_command(Command::Full);
    let (sim_ok, sim_value) = match &sim_rows {
        Ok(rows) => (true, to_value(rows)),
        Err(e) => (false, Value::String(e.message.clone())),
    };
    ctx.out.json(
        "full.json",
        json!({
            "model": ctx.model,
            "b_star": solved.solution.b_star,
            "verification_passed": solved.vi.passed,
            "monte_carlo": sim_value,
            "monte_carlo_consistent": sim_ok,
            "equivalence_gap": lat.levels[0].equivalence_gap,
            "equivalence_gap_ratios": lat.gap_ratios,
            "sweep_monotone": sweep_result.diagnostics.monotone,
            "continuity_jump_ratio": continuity.jump_ratio,
        }),
    )?;
    sim_rows.map(|_| ())
}
