//! Dividend policy under ambiguity with recursive (Epstein–Zin type) utility.
//!
//! The crate solves the free-boundary problem for the optimal barrier `b*`,
//! cross-checks it by Monte Carlo and a trinomial BSDE lattice, and sweeps the
//! aversion parameter.

pub mod error;
pub mod fbp;
pub mod interp;
pub mod lattice;
pub mod model;
pub mod ode;
pub mod sensitivity;
pub mod sim;

pub use error::{Error, Result};
pub use model::{check_assumptions, AssumptionReport, Family, PsiRoots, ScanOptions, SurplusModel};
