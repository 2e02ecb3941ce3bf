use std::path::{Path, PathBuf};

use robdiv::sim::{KernelKind, Measure};
use serde::{Deserialize, Serialize};

use crate::{CliError, Exit};

pub const OUT_DIR_ENV: &str = "ROBDIV_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "robdiv-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    #[default]
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        self != Format::Csv
    }

    pub fn csv(self) -> bool {
        self != Format::Json
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Check,
    Solve,
    Simulate,
    Lattice,
    Sweep,
    Full,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Lattice => "lattice",
            Command::Sweep => "sweep",
            Command::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub tol_b: f64,
    pub tol_value: f64,
    pub rtol: f64,
    pub atol: f64,
    pub n_grid: usize,
    pub x_max: Option<f64>,
    pub continuation: bool,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            tol_b: 1e-10,
            tol_value: 1e-9,
            rtol: 1e-10,
            atol: 1e-12,
            n_grid: 2001,
            x_max: None,
            continuation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Starting points; empty means `x0_multiples` of b*.
    pub x0: Vec<f64>,
    pub x0_multiples: Vec<f64>,
    /// Barrier; defaults to b* of the solution.
    pub b: Option<f64>,
    pub dt: f64,
    /// Defaults to 50/ρ.
    pub t_max: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub kernel: KernelKind,
    pub measure: Measure,
    /// Also estimate on a 2·dt grid with common noise to size the step bias.
    pub coupled: bool,
    /// Also run the zero kernel on the same seed for the K ≥ value ordering.
    pub compare_classical: bool,
    /// `solution.json` from a previous `solve`.
    pub solution: Option<PathBuf>,
    pub inline_solve: bool,
    pub dump_paths: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            x0: Vec::new(),
            x0_multiples: vec![0.5, 1.0, 1.5],
            b: None,
            dt: 1e-3,
            t_max: None,
            n_paths: 2000,
            seed: 20_240_611,
            kernel: KernelKind::WorstCase,
            measure: Measure::DriftShift,
            coupled: true,
            compare_classical: false,
            solution: None,
            inline_solve: false,
            dump_paths: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub n_space: usize,
    /// Defaults to the CFL limit.
    pub dt: Option<f64>,
    /// Defaults to 15/ρ.
    pub t_max: Option<f64>,
    pub levels: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub probe_multiples: Vec<f64>,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            n_space: 200,
            dt: None,
            t_max: None,
            levels: 2,
            tol: 1e-12,
            max_iters: 30,
            probe_multiples: vec![0.25, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub r_min: f64,
    /// Defaults to `valid_fraction` of the end of the valid interval.
    pub r_max: Option<f64>,
    pub valid_fraction: f64,
    pub n_r: usize,
    /// Probes; empty means `probe_multiples` of b*.
    pub probes: Vec<f64>,
    pub probe_multiples: Vec<f64>,
    pub refine: usize,
    pub scan_r_max: f64,
    pub scan_points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            r_min: 0.0,
            r_max: None,
            valid_fraction: 0.95,
            n_r: 11,
            probes: Vec::new(),
            probe_multiples: vec![0.5, 1.0, 1.5],
            refine: 2,
            scan_r_max: 0.5,
            scan_points: 51,
        }
    }
}

/// Run configuration. Every field has a default; a JSON file may set any
/// subset and command-line flags override the file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub format: Format,
    pub solve: SolveSection,
    pub simulate: SimulateSection,
    pub lattice: LatticeSection,
    pub sweep: SweepSection,
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(Exit::Config, format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::new(Exit::Config, format!("cannot parse config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        rebase(&mut cfg.model);
        rebase(&mut cfg.out_dir);
        rebase(&mut cfg.simulate.solution);
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn model_path(&self) -> Result<&Path, CliError> {
        self.model
            .as_deref()
            .ok_or_else(|| CliError::new(Exit::Config, "no model file given (use --model or the config's \"model\")"))
    }

    pub fn solve_options(&self) -> robdiv::fbp::SolveOptions {
        let s = &self.solve;
        let mut opts = robdiv::fbp::SolveOptions::default();
        opts.shoot.tol_b = s.tol_b;
        opts.shoot.tol_value = s.tol_value;
        opts.shoot.continuation = s.continuation;
        opts.shoot.ode.rtol = s.rtol;
        opts.shoot.ode.atol = s.atol;
        opts.n_grid = s.n_grid;
        opts.x_max = s.x_max;
        opts
    }
}
