use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robdiv::sim::{KernelKind, Measure};
use robdiv_cli::{run, Command, Exit, Format, RunConfig};

/// Optimal dividend barrier under drift ambiguity: assumption check,
/// free-boundary solve, Monte Carlo and lattice verification, R sweep.
///
/// Exit codes: 0 ok, 2 config error, 3 assumption failure, 4 solver
/// failure, 5 estimation failure. Output goes to --out-dir, else
/// $ROBDIV_OUT_DIR, else ./robdiv-out.
#[derive(Parser)]
#[command(name = "robdiv", version)]
struct Cli {
    /// JSON run config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON model file.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the solvability conditions and report the landmarks.
    Check,
    /// Solve for the optimal barrier and value function.
    Solve(SolveArgs),
    /// Estimate the value by simulation.
    Simulate {
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Lattice valuation and the EZ/robust equivalence check.
    Lattice {
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        lattice: LatticeArgs,
    },
    /// Re-solve over a grid of R.
    Sweep {
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// check, solve, simulate, lattice and sweep in sequence.
    Full {
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        lattice: LatticeArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    n_grid: Option<usize>,
    #[arg(long)]
    x_max: Option<f64>,
    /// Also run the γ ↑ 0 continuation diagnostic.
    #[arg(long)]
    continuation: bool,
}

#[derive(Args)]
struct SimArgs {
    /// Starting surplus (repeatable).
    #[arg(long = "x0")]
    x0: Vec<f64>,
    #[arg(long)]
    barrier: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["worst-case", "zero"])]
    kernel: Option<String>,
    #[arg(long, value_parser = ["drift-shift", "likelihood-ratio"])]
    measure: Option<String>,
    /// Skip the 2·dt companion run used for the step-bias estimate.
    #[arg(long)]
    no_coupled: bool,
    #[arg(long)]
    compare_classical: bool,
    /// solution.json written by `solve`.
    #[arg(long)]
    solution: Option<PathBuf>,
    #[arg(long)]
    inline_solve: bool,
    #[arg(long)]
    dump_paths: bool,
}

#[derive(Args)]
struct LatticeArgs {
    #[arg(long)]
    n_space: Option<usize>,
    #[arg(long)]
    lattice_dt: Option<f64>,
    #[arg(long)]
    lattice_t_max: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    n_r: Option<usize>,
    /// Probe surplus levels (repeatable).
    #[arg(long = "probe")]
    probes: Vec<f64>,
    #[arg(long)]
    refine: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl SolveArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.solve.n_grid, self.n_grid);
        if self.x_max.is_some() {
            cfg.solve.x_max = self.x_max;
        }
        cfg.solve.continuation |= self.continuation;
    }
}

impl SimArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let s = &mut cfg.simulate;
        if !self.x0.is_empty() {
            s.x0 = self.x0;
        }
        if self.barrier.is_some() {
            s.b = self.barrier;
        }
        set(&mut s.dt, self.dt);
        if self.t_max.is_some() {
            s.t_max = self.t_max;
        }
        set(&mut s.n_paths, self.paths);
        set(&mut s.seed, self.seed);
        match self.kernel.as_deref() {
            Some("zero") => s.kernel = KernelKind::Zero,
            Some(_) => s.kernel = KernelKind::WorstCase,
            None => {}
        }
        match self.measure.as_deref() {
            Some("likelihood-ratio") => s.measure = Measure::LikelihoodRatio,
            Some(_) => s.measure = Measure::DriftShift,
            None => {}
        }
        s.coupled &= !self.no_coupled;
        s.compare_classical |= self.compare_classical;
        if self.solution.is_some() {
            s.solution = self.solution;
        }
        s.inline_solve |= self.inline_solve;
        s.dump_paths |= self.dump_paths;
    }
}

impl LatticeArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let l = &mut cfg.lattice;
        set(&mut l.n_space, self.n_space);
        if self.lattice_dt.is_some() {
            l.dt = self.lattice_dt;
        }
        if self.lattice_t_max.is_some() {
            l.t_max = self.lattice_t_max;
        }
        set(&mut l.levels, self.levels);
    }
}

impl SweepArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let s = &mut cfg.sweep;
        set(&mut s.r_min, self.r_min);
        if self.r_max.is_some() {
            s.r_max = self.r_max;
        }
        set(&mut s.n_r, self.n_r);
        if !self.probes.is_empty() {
            s.probes = self.probes;
        }
        set(&mut s.refine, self.refine);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("robdiv: {e}");
                return ExitCode::from(e.exit.code() as u8);
            }
        },
        None => RunConfig::default(),
    };
    if cli.model.is_some() {
        cfg.model = cli.model;
    }
    if cli.out_dir.is_some() {
        cfg.out_dir = cli.out_dir;
    }
    set(&mut cfg.format, cli.format);
    let command = match cli.command {
        Cmd::Check => Command::Check,
        Cmd::Solve(a) => {
            a.apply(&mut cfg);
            Command::Solve
        }
        Cmd::Simulate { solve: a, sim: s } => {
            a.apply(&mut cfg);
            s.apply(&mut cfg);
            Command::Simulate
        }
        Cmd::Lattice { solve: a, lattice: l } => {
            a.apply(&mut cfg);
            l.apply(&mut cfg);
            Command::Lattice
        }
        Cmd::Sweep { solve: a, sweep: s } => {
            a.apply(&mut cfg);
            s.apply(&mut cfg);
            Command::Sweep
        }
        Cmd::Full {
            solve: a,
            sim: s,
            lattice: l,
            sweep: w,
        } => {
            a.apply(&mut cfg);
            s.apply(&mut cfg);
            l.apply(&mut cfg);
            w.apply(&mut cfg);
            Command::Full
        }
    };
    match run(command, &cfg) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if let Some(msg) = outcome.message {
                eprintln!("robdiv: {msg}");
            }
            ExitCode::from(outcome.exit.code() as u8)
        }
        Err(e) => {
            eprintln!("robdiv: {e}");
            ExitCode::from(if e.exit == Exit::Ok { 1 } else { e.exit.code() as u8 })
        }
    }
}
