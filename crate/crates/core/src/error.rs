use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("x = {x} lies outside the tabulated range [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    /// The quadratic Q(ψ; x) has no real root: x is beyond the upper landmark.
    #[error("no real psi roots at x = {x}: discriminant {discriminant} < 0 (beyond upper landmark)")]
    BeyondUpperLandmark { x: f64, discriminant: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("assumption check failed: {0}")]
    Assumption(String),

    /// Backward integration blew up (step-size underflow or the cap on g was crossed).
    #[error("integration from b = {b} diverged at x = {x_reached}: {reason}")]
    Diverged {
        b: f64,
        x_reached: f64,
        reason: String,
    },

    #[error("shooting bracket failure: f({lo}) = {f_lo}, f({hi}) = {f_hi} have the same sign")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("shooting stalled at b = {b} with residual {residual} (tolerance {tolerance})")]
    ShootingTolerance {
        b: f64,
        residual: f64,
        tolerance: f64,
    },

    #[error("lattice transition probability {p} out of [0, 1] at node {node}; reduce dt (dt <= {dt_max:e})")]
    Cfl { node: usize, p: f64, dt_max: f64 },

    #[error("Picard iteration did not converge after {iters} iterations at t = {t}; residuals {history:?}")]
    Picard {
        iters: usize,
        t: f64,
        history: Vec<f64>,
    },

    #[error("estimation failed: {0}")]
    Estimation(String),
}
