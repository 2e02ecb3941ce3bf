//! Surplus model, the ψ± root structure and the solvability scan.
//!
//! The uncontrolled surplus follows `dX = μ(X) dt + σ(X) dW`. Two coefficient
//! families are supported: Ornstein–Uhlenbeck and a tabulated C¹ family
//! interpolated with monotone cubics.
//!
//! For a model with discount rate ρ and aversion R, the quadratic
//!
//! ```text
//! Q(ψ; x) = ρψ² − μ(x)ψ + (R/2)σ²(x)
//! ```
//!
//! has roots ψ±(x) as long as μ² ≥ 2Rρσ². The landmarks produced by
//! [`check_assumptions`] (lower turning point, upper landmark where the roots
//! merge, and the shooting cap b̂ with ψ⁺(b̂) − b̂ = ξ0) bracket the free
//! boundary searched by [`crate::fbp`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;

/// Drift/volatility family. Serialized as `{"family": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Family {
    /// μ(x) = κ(m − x), σ(x) = σ̄.
    OrnsteinUhlenbeck { kappa: f64, m: f64, sigma_bar: f64 },
    /// Tabulated μ and σ on a grid, monotone-cubic interpolated.
    #[serde(rename = "tabulated_c1")]
    TabulatedC1 {
        x: Vec<f64>,
        mu: Vec<f64>,
        sigma: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    #[serde(flatten)]
    family: Family,
    rho: f64,
    #[serde(rename = "R")]
    r: f64,
    xi0: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Coefficients {
    Ou { kappa: f64, m: f64, sigma_bar: f64 },
    Tabulated { mu: MonotoneCubic, sigma: MonotoneCubic },
}

/// A validated surplus model. Immutable once built; use the `with_*`
/// constructors to derive variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct SurplusModel {
    family: Family,
    coefficients: Coefficients,
    rho: f64,
    r: f64,
    xi0: f64,
}

impl TryFrom<ModelFile> for SurplusModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        SurplusModel::new(file.family, file.rho, file.r, file.xi0)
    }
}

impl From<SurplusModel> for ModelFile {
    fn from(model: SurplusModel) -> Self {
        ModelFile {
            family: model.family,
            rho: model.rho,
            r: model.r,
            xi0: model.xi0,
        }
    }
}

impl SurplusModel {
    pub fn new(family: Family, rho: f64, r: f64, xi0: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidModel(format!("rho must be > 0, got {rho}")));
        }
        if !(xi0.is_finite() && xi0 > 0.0) {
            return Err(Error::InvalidModel(format!("xi0 must be > 0, got {xi0}")));
        }
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidModel(format!("R must lie in [0, 1), got {r}")));
        }

        let coefficients = match &family {
            &Family::OrnsteinUhlenbeck { kappa, m, sigma_bar } => {
                if !(kappa.is_finite() && kappa > 0.0) {
                    return Err(Error::InvalidModel(format!("kappa must be > 0, got {kappa}")));
                }
                if !(m.is_finite() && m > 0.0) {
                    return Err(Error::InvalidModel(format!("m must be > 0, got {m}")));
                }
                if !(sigma_bar.is_finite() && sigma_bar > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "sigma_bar must be > 0, got {sigma_bar}"
                    )));
                }
                Coefficients::Ou { kappa, m, sigma_bar }
            }
            Family::TabulatedC1 { x, mu, sigma } => {
                if x.first().is_some_and(|&x0| x0 > 0.0) {
                    return Err(Error::InvalidModel(
                        "tabulated grid must start at or below x = 0".into(),
                    ));
                }
                if sigma.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::InvalidModel("tabulated sigma must be > 0".into()));
                }
                if sigma.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::InvalidModel("tabulated sigma must be nondecreasing".into()));
                }
                Coefficients::Tabulated {
                    mu: MonotoneCubic::new(x, mu)?,
                    sigma: MonotoneCubic::new(x, sigma)?,
                }
            }
        };

        Ok(Self {
            family,
            coefficients,
            rho,
            r,
            xi0,
        })
    }

    pub fn ornstein_uhlenbeck(kappa: f64, m: f64, sigma_bar: f64, rho: f64, r: f64, xi0: f64) -> Result<Self> {
        Self::new(Family::OrnsteinUhlenbeck { kappa, m, sigma_bar }, rho, r, xi0)
    }

    pub fn tabulated(x: Vec<f64>, mu: Vec<f64>, sigma: Vec<f64>, rho: f64, r: f64, xi0: f64) -> Result<Self> {
        Self::new(Family::TabulatedC1 { x, mu, sigma }, rho, r, xi0)
    }

    /// Same coefficients and payout, different aversion parameter.
    pub fn with_r(&self, r: f64) -> Result<Self> {
        Self::new(self.family.clone(), self.rho, r, self.xi0)
    }

    pub fn with_xi0(&self, xi0: f64) -> Result<Self> {
        Self::new(self.family.clone(), self.rho, self.r, xi0)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn xi0(&self) -> f64 {
        self.xi0
    }

    pub fn is_classical(&self) -> bool {
        self.r == 0.0
    }

    /// Right end of the evaluation range (infinite for the OU family).
    pub fn x_limit(&self) -> f64 {
        match &self.coefficients {
            Coefficients::Ou { .. } => f64::INFINITY,
            Coefficients::Tabulated { mu, .. } => mu.hi(),
        }
    }

    /// (μ(x), σ(x)).
    #[inline]
    pub fn eval_mu_sigma(&self, x: f64) -> Result<(f64, f64)> {
        match &self.coefficients {
            &Coefficients::Ou { kappa, m, sigma_bar } => {
                if !(x >= 0.0) {
                    return Err(Error::Domain { x, lo: 0.0, hi: f64::INFINITY });
                }
                Ok((kappa * (m - x), sigma_bar))
            }
            Coefficients::Tabulated { mu, sigma } => {
                if !(x >= 0.0) {
                    return Err(Error::Domain { x, lo: 0.0, hi: mu.hi() });
                }
                Ok((mu.eval(x)?.0, sigma.eval(x)?.0))
            }
        }
    }

    /// Q(ψ; x) = ρψ² − μ(x)ψ + (R/2)σ²(x).
    pub fn q(&self, psi: f64, x: f64) -> Result<f64> {
        let (mu, sigma) = self.eval_mu_sigma(x)?;
        Ok(self.rho * psi * psi - mu * psi + 0.5 * self.r * sigma * sigma)
    }

    /// Roots ψ± of Q(·; x); errors beyond the upper landmark.
    pub fn psi_roots(&self, x: f64) -> Result<PsiRoots> {
        let (mu, sigma) = self.eval_mu_sigma(x)?;
        let discriminant = mu * mu - 2.0 * self.r * self.rho * sigma * sigma;
        if discriminant < 0.0 {
            return Err(Error::BeyondUpperLandmark { x, discriminant });
        }
        let (psi_minus, psi_plus) = quadratic_roots(self.rho, mu, self.r, sigma, discriminant);
        Ok(PsiRoots {
            psi_minus,
            psi_plus,
            discriminant,
            at_x: x,
        })
    }

    /// ψ⁺(x), tolerating a round-off negative discriminant (relative 1e−9)
    /// right at the upper landmark.
    pub(crate) fn psi_plus_lenient(&self, x: f64) -> Result<f64> {
        self.psi_pair_lenient(x).map(|(_, p)| p)
    }

    pub(crate) fn psi_pair_lenient(&self, x: f64) -> Result<(f64, f64)> {
        let (mu, sigma) = self.eval_mu_sigma(x)?;
        let scale = mu * mu + 2.0 * self.r * self.rho * sigma * sigma;
        let mut discriminant = mu * mu - 2.0 * self.r * self.rho * sigma * sigma;
        if discriminant < 0.0 {
            if discriminant >= -1e-9 * scale {
                discriminant = 0.0;
            } else {
                return Err(Error::BeyondUpperLandmark { x, discriminant });
            }
        }
        Ok(quadratic_roots(self.rho, mu, self.r, sigma, discriminant))
    }

    /// sup of μ(x) − ρx over `[0, x_max]`, sampled on `n` points.
    pub fn mu_bar_on(&self, x_max: f64, n: usize) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for x in linspace(0.0, x_max, n.max(2)) {
            let (mu, _) = self.eval_mu_sigma(x)?;
            best = best.max(mu - self.rho * x);
        }
        Ok(best)
    }
}

// Cancellation-free roots of ρψ² − μψ + (R/2)σ² given the discriminant.
fn quadratic_roots(rho: f64, mu: f64, r: f64, sigma: f64, discriminant: f64) -> (f64, f64) {
    if r == 0.0 {
        let root = mu / rho;
        return (root.min(0.0), root.max(0.0));
    }
    let c = 0.5 * r * sigma * sigma;
    let s = mu + mu.signum() * discriminant.sqrt();
    if s == 0.0 {
        return (0.0, 0.0);
    }
    let a = s / (2.0 * rho);
    let b = 2.0 * c / s;
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiRoots {
    pub psi_minus: f64,
    pub psi_plus: f64,
    pub discriminant: f64,
    pub at_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub x_max: f64,
    pub n_points: usize,
    /// Replaces the computed lower landmark when set.
    #[serde(default)]
    pub b_lower_override: Option<f64>,
}

impl ScanOptions {
    pub const ROOT_TOL: f64 = 1e-12;
    pub const MONOTONE_SLACK: f64 = 1e-9;

    /// Scan range that covers the upper landmark of the given model.
    pub fn for_model(model: &SurplusModel) -> Self {
        let x_max = match model.family() {
            Family::OrnsteinUhlenbeck { m, .. } => 2.0 * m + 1.0,
            Family::TabulatedC1 { x, .. } => *x.last().unwrap_or(&1.0),
        };
        Self {
            x_max,
            n_points: 4001,
            b_lower_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub passed: bool,
    pub message: String,
}

impl Condition {
    fn new(passed: bool, message: impl Into<String>) -> Self {
        Self {
            passed,
            message: message.into(),
        }
    }
}

/// Landmarks and per-condition verdicts of the solvability scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub b_lower: f64,
    /// How `b_lower` was obtained: `"turning_point"` or `"override"`.
    pub b_lower_source: String,
    /// Supremum of the initial interval where μ² ≥ 3Rρσ² (`None` = whole scan).
    pub cond_i_interval_end: Option<f64>,
    /// Upper landmark; `None` means infinity on the scan range.
    pub b_upper: Option<f64>,
    pub b_hat: Option<f64>,
    pub mu_bar: f64,
    pub cond_i: Condition,
    pub cond_ii: Condition,
    pub cond_iii: Condition,
    pub cond_iv: Condition,
    /// Bankruptcy payout is ξ0·e^{−ρτ}; always true here.
    pub exponential_payout: bool,
    pub grid_used: Vec<f64>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.cond_i.passed && self.cond_ii.passed && self.cond_iii.passed && self.cond_iv.passed
    }

    pub fn b_upper_or_inf(&self) -> f64 {
        self.b_upper.unwrap_or(f64::INFINITY)
    }

    /// Landmarks `(b_lower, b_hat)` when every condition passes.
    pub fn bracket(&self) -> Result<(f64, f64)> {
        match (self.all_passed(), self.b_hat) {
            (true, Some(b_hat)) => Ok((self.b_lower, b_hat)),
            _ => Err(Error::Assumption(self.failure_summary())),
        }
    }

    pub fn failure_summary(&self) -> String {
        [
            ("i", &self.cond_i),
            ("ii", &self.cond_ii),
            ("iii", &self.cond_iii),
            ("iv", &self.cond_iv),
        ]
        .iter()
        .filter(|(_, c)| !c.passed)
        .map(|(name, c)| format!("cond_{name}: {}", c.message))
        .collect::<Vec<_>>()
        .join("; ")
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    let step = (b - a) / (n - 1) as f64;
    (0..n).map(move |i| if i + 1 == n { b } else { a + step * i as f64 })
}

/// Bisection for a sign change of `f` on `[lo, hi]`, stopping at width `xtol`.
pub(crate) fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// First sign change of `values` from positive to nonpositive, refined by
/// bisection of `f`. `None` if `values` never drops to zero.
fn first_descending_root<F>(grid: &[f64], values: &[f64], f: F) -> Result<Option<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let Some(i) = values.windows(2).position(|w| w[0] > 0.0 && w[1] <= 0.0) else {
        return Ok(None);
    };
    bisect(f, grid[i], grid[i + 1], ScanOptions::ROOT_TOL).map(Some)
}

/// Scan the model for the landmarks and verify the four solvability conditions.
pub fn check_assumptions(model: &SurplusModel, scan: &ScanOptions) -> Result<AssumptionReport> {
    if scan.n_points < 100 {
        return Err(Error::InvalidArgument(format!(
            "scan needs at least 100 points, got {}",
            scan.n_points
        )));
    }
    if !(scan.x_max > 0.0 && scan.x_max <= model.x_limit()) {
        return Err(Error::InvalidArgument(format!(
            "scan range {} must be positive and within the model range {}",
            scan.x_max,
            model.x_limit()
        )));
    }

    let rho = model.rho();
    let r = model.r();
    let xi0 = model.xi0();
    let grid: Vec<f64> = linspace(0.0, scan.x_max, scan.n_points).collect();
    let coeffs = grid
        .iter()
        .map(|&x| model.eval_mu_sigma(x))
        .collect::<Result<Vec<_>>>()?;

    let mu_bar = grid
        .iter()
        .zip(&coeffs)
        .map(|(&x, &(mu, _))| mu - rho * x)
        .fold(f64::NEG_INFINITY, f64::max);

    // μ > |σ|√(cRρ) is the sign-changing form of μ² > cRρσ² on the μ > 0 side.
    let margin = |c: f64| {
        let k = (c * r * rho).sqrt();
        move |x: f64| model.eval_mu_sigma(x).map(|(mu, s)| mu - s.abs() * k)
    };
    let margin2: Vec<f64> = coeffs.iter().map(|&(mu, s)| mu - s.abs() * (2.0 * r * rho).sqrt()).collect();
    let margin3: Vec<f64> = coeffs.iter().map(|&(mu, s)| mu - s.abs() * (3.0 * r * rho).sqrt()).collect();

    let (mu0, sigma0) = coeffs[0];
    let b_upper = if margin2[0] <= 0.0 {
        Some(0.0)
    } else {
        first_descending_root(&grid, &margin2, margin(2.0))?
    };
    let b_upper_inf = b_upper.unwrap_or(f64::INFINITY);
    let cond_i_interval_end = if margin3[0] < 0.0 {
        Some(0.0)
    } else {
        first_descending_root(&grid, &margin3, margin(3.0))?
    };

    // ψ⁺(x) − x on the part of the grid where the roots exist.
    let below: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|&x| x < b_upper_inf)
        .chain(b_upper)
        .collect();
    let excess = |x: f64| model.psi_plus_lenient(x).map(|p| p - x);
    let f_plus = below.iter().map(|&x| excess(x)).collect::<Result<Vec<_>>>()?;

    let (b_lower, b_lower_source) = match scan.b_lower_override {
        Some(b) => (b, "override"),
        None => (turning_point(&below, &f_plus, excess)?, "turning_point"),
    };

    // cond i
    let mut problems = Vec::new();
    if !(mu0 > 0.0) {
        problems.push(format!("mu(0) = {mu0} must be > 0"));
    }
    if sigma0 == 0.0 {
        problems.push("sigma(0) = 0".to_string());
    }
    if coeffs.windows(2).any(|w| w[1].1.abs() < w[0].1.abs() - ScanOptions::MONOTONE_SLACK) {
        problems.push("sigma is not nondecreasing on the scan".to_string());
    }
    let inequality_holds = grid
        .iter()
        .zip(&margin3)
        .filter(|(&x, _)| x <= b_lower)
        .all(|(_, &m)| m >= -ScanOptions::MONOTONE_SLACK)
        && margin(3.0)(b_lower.max(0.0))? >= -ScanOptions::MONOTONE_SLACK;
    if !inequality_holds {
        problems.push(format!(
            "mu^2 >= 3 R rho sigma^2 fails on [0, {b_lower}] (holds up to {})",
            cond_i_interval_end.map_or("end of scan".to_string(), |v| format!("{v}"))
        ));
    }
    if !(b_lower < b_upper_inf) {
        problems.push(format!("b_lower = {b_lower} is not below b_upper = {b_upper_inf}"));
    }
    if let Some(bu) = b_upper {
        let reentry = grid
            .iter()
            .zip(&margin2)
            .find(|(&x, &m)| x > bu + 1e-9 && m >= 0.0);
        if let Some((&x, _)) = reentry {
            problems.push(format!(
                "mu <= sigma sqrt(2 R rho) must hold beyond b_upper = {bu}, fails at x = {x}"
            ));
        }
    }
    if let Family::OrnsteinUhlenbeck { kappa, m, sigma_bar } = *model.family() {
        if !((kappa * m).powi(2) > 3.0 * r * rho * sigma_bar * sigma_bar) {
            problems.push("OU window (kappa m)^2 > 3 R rho sigma_bar^2 fails".to_string());
        }
    }
    let cond_i = if problems.is_empty() {
        Condition::new(
            true,
            format!(
                "mu^2 >= 3 R rho sigma^2 on [0, {b_lower}]; b_upper = {}",
                b_upper.map_or("inf".to_string(), |v| format!("{v}"))
            ),
        )
    } else {
        Condition::new(false, problems.join("; "))
    };

    // cond ii
    let slack = ScanOptions::MONOTONE_SLACK;
    let mut rising_violation = None;
    let mut falling_violation = None;
    for (w, f) in below.windows(2).zip(f_plus.windows(2)) {
        let diff = f[1] - f[0];
        if w[1] <= b_lower {
            if diff < -slack && rising_violation.is_none() {
                rising_violation = Some(w[0]);
            }
        } else if w[0] >= b_lower && diff > slack && falling_violation.is_none() {
            falling_violation = Some(w[0]);
        }
    }
    let cond_ii = match (rising_violation, falling_violation) {
        (None, None) => Condition::new(
            true,
            format!("psi+(x) - x rises on [0, {b_lower}] and falls on ({b_lower}, b_upper)"),
        ),
        (a, b) => Condition::new(
            false,
            format!(
                "psi+(x) - x monotonicity fails{}{}",
                a.map_or(String::new(), |x| format!("; decreases near x = {x} inside [0, b_lower]")),
                b.map_or(String::new(), |x| format!("; increases near x = {x} beyond b_lower")),
            ),
        ),
    };

    // cond iii
    let sup_minus = below
        .iter()
        .map(|&x| model.psi_pair_lenient(x).map(|(m, _)| m - x))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let upper_xi = if b_lower < b_upper_inf {
        excess(b_lower)?
    } else {
        f64::NEG_INFINITY
    };
    let mut problems = Vec::new();
    if !(sup_minus < xi0 && xi0 < upper_xi) {
        problems.push(format!(
            "need sup(psi- - x) = {sup_minus} < xi0 = {xi0} < psi+(b_lower) - b_lower = {upper_xi}"
        ));
    }
    if let Family::OrnsteinUhlenbeck { kappa, m, sigma_bar } = *model.family() {
        let lo = (r / (2.0 * rho)).sqrt();
        let km = kappa * m;
        let hi = (km + (km * km - 2.0 * r * rho * sigma_bar * sigma_bar).max(0.0).sqrt()) / (2.0 * rho);
        if !(lo < xi0 && xi0 < hi) {
            problems.push(format!("OU window needs sqrt(R / 2 rho) = {lo} < xi0 = {xi0} < {hi}"));
        }
    }
    let cond_iii = if problems.is_empty() {
        Condition::new(
            true,
            format!("{sup_minus} < xi0 = {xi0} < {upper_xi}"),
        )
    } else {
        Condition::new(false, problems.join("; "))
    };

    // cond iv
    let (b_hat, cond_iv) = {
        let pts: Vec<(f64, f64)> = below
            .iter()
            .zip(&f_plus)
            .filter(|(&x, _)| x > b_lower)
            .map(|(&x, &f)| (x, f - xi0))
            .collect();
        let mut prev = if b_lower < b_upper_inf {
            Some((b_lower, upper_xi - xi0))
        } else {
            None
        };
        let mut found = None;
        for &(x, f) in &pts {
            if let Some((xp, fp)) = prev {
                if fp > 0.0 && f <= 0.0 {
                    found = Some((xp, x));
                    break;
                }
            }
            prev = Some((x, f));
        }
        match found {
            Some((lo, hi)) => {
                let root = bisect(|b| excess(b).map(|e| e - xi0), lo, hi, ScanOptions::ROOT_TOL)?;
                let residual = excess(root)? - xi0;
                (
                    Some(root),
                    Condition::new(true, format!("b_hat = {root}, residual {residual:e}")),
                )
            }
            None => {
                let last = pts.last().copied();
                (
                    None,
                    Condition::new(
                        false,
                        format!(
                            "no root of psi+(b) - b = xi0 on ({b_lower}, {b_upper_inf}); bracket values: at b_lower {:e}, at end {:?}",
                            upper_xi - xi0,
                            last
                        ),
                    ),
                )
            }
        }
    };

    Ok(AssumptionReport {
        b_lower,
        b_lower_source: b_lower_source.to_string(),
        cond_i_interval_end,
        b_upper,
        b_hat,
        mu_bar,
        cond_i,
        cond_ii,
        cond_iii,
        cond_iv,
        exponential_payout: true,
        grid_used: grid,
    })
}

// Maximizer of ψ⁺(x) − x where it switches from rising to falling.
fn turning_point<F>(grid: &[f64], values: &[f64], mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let slack = ScanOptions::MONOTONE_SLACK;
    let Some(i) = values.windows(2).position(|w| w[1] - w[0] < -slack) else {
        return Ok(*grid.last().unwrap_or(&0.0));
    };
    if i == 0 {
        return Ok(grid[0]);
    }
    // golden-section on the bracketing cells
    let (mut a, mut b) = (grid[i - 1], grid[i + 1]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > ScanOptions::ROOT_TOL {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}
