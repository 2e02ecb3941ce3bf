//! Dormand–Prince 5(4) with step-size control and the 5th-order continuous
//! extension of Hairer, Nørsett and Wanner (their `contd5`).
//!
//! Integration may run forwards or backwards; the sign of `t_end − t0` picks
//! the direction. Every accepted step keeps its interpolation coefficients so
//! the solution can be evaluated (with derivative) anywhere on the range.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude; chosen automatically when `None`.
    pub h_init: Option<f64>,
    /// Smallest step magnitude before giving up.
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: None,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StepCounts {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Segment<const N: usize> {
    t0: f64,
    h: f64,
    rcont: [[f64; N]; 5],
}

impl<const N: usize> Segment<N> {
    fn eval(&self, t: f64) -> ([f64; N], [f64; N]) {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let mut y = [0.0; N];
        let mut dy = [0.0; N];
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for i in 0..N {
            // y = r1 + s(r2 + s1(r3 + s(r4 + s1 r5)))
            let inner = r4[i] + s1 * r5[i];
            let mid = r3[i] + s * inner;
            let outer = r2[i] + s1 * mid;
            y[i] = r1[i] + s * outer;
            let d_inner = -r5[i];
            let d_mid = inner + s * d_inner;
            let d_outer = -mid + s1 * d_mid;
            dy[i] = (outer + s * d_outer) / self.h;
        }
        (y, dy)
    }
}

/// Why an integration ended before reaching `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub enum Stop {
    /// The caller's check rejected an accepted state.
    Rejected { t: f64, reason: String },
    StepUnderflow { t: f64, h: f64 },
    MaxSteps { t: f64 },
    NonFinite { t: f64 },
}

impl Stop {
    pub fn t(&self) -> f64 {
        match *self {
            Stop::Rejected { t, .. } | Stop::StepUnderflow { t, .. } | Stop::MaxSteps { t } | Stop::NonFinite { t } => t,
        }
    }

    pub fn reason(&self) -> String {
        match self {
            Stop::Rejected { reason, .. } => reason.clone(),
            Stop::StepUnderflow { h, .. } => format!("step size underflow (|h| = {h:e})"),
            Stop::MaxSteps { .. } => "step limit reached".to_string(),
            Stop::NonFinite { .. } => "non-finite state".to_string(),
        }
    }
}

/// Accepted steps and their continuous extension.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub counts: StepCounts,
    pub min_step: f64,
    /// `None` when `t_end` was reached.
    pub stop: Option<Stop>,
    segments: Vec<Segment<N>>,
}

impl<const N: usize> Trajectory<N> {
    pub fn completed(&self) -> bool {
        self.stop.is_none()
    }

    pub fn t_first(&self) -> f64 {
        self.t[0]
    }

    pub fn t_last(&self) -> f64 {
        *self.t.last().expect("trajectory has its initial point")
    }

    /// State and time derivative at `t` within the integrated range.
    pub fn eval(&self, t: f64) -> Result<([f64; N], [f64; N])> {
        let (a, b) = (self.t_first(), self.t_last());
        let (lo, hi) = (a.min(b), a.max(b));
        if !(t >= lo && t <= hi) {
            return Err(Error::Domain { x: t, lo, hi });
        }
        if self.segments.is_empty() {
            return Ok((self.y[0], [0.0; N]));
        }
        let forward = b >= a;
        // segments are ordered along the direction of integration
        let k = self.segments.partition_point(|s| {
            let end = s.t0 + s.h;
            if forward {
                end < t
            } else {
                end > t
            }
        });
        let k = k.min(self.segments.len() - 1);
        Ok(self.segments[k].eval(t))
    }
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end`. `check` sees every accepted
/// state and may stop the run by returning a reason.
pub fn integrate<const N: usize, F, C>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &Dopri5Options,
    mut check: C,
) -> Result<Trajectory<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    C: FnMut(f64, &[f64; N]) -> Option<String>,
{
    if !(opts.rtol > 0.0 && opts.atol >= 0.0) {
        return Err(Error::InvalidArgument("ODE tolerances must be positive".into()));
    }
    let mut traj = Trajectory {
        t: vec![t0],
        y: vec![y0],
        counts: StepCounts::default(),
        min_step: f64::INFINITY,
        stop: None,
        segments: Vec::new(),
    };
    let span = t_end - t0;
    if span == 0.0 {
        return Ok(traj);
    }
    let dir = span.signum();

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    let mut h = match opts.h_init {
        Some(h) => h.abs(),
        None => initial_step(&mut f, t, &y, &k1, dir, opts)?,
    }
    .min(span.abs())
    .min(opts.h_max)
    * dir;
    let mut last_rejected = false;
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            traj.stop = Some(Stop::MaxSteps { t });
            return Ok(traj);
        }
        steps += 1;
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        if h.abs() < opts.h_min {
            traj.stop = Some(Stop::StepUnderflow { t, h: h.abs() });
            return Ok(traj);
        }

        let stage = |base: &[f64; N], terms: &[(f64, &[f64; N])]| {
            let mut out = *base;
            for i in 0..N {
                let mut acc = 0.0;
                for &(c, k) in terms {
                    acc += c * k[i];
                }
                out[i] += h * acc;
            }
            out
        };
        let k2 = f(t + C2 * h, &stage(&y, &[(A21, &k1)]))?;
        let k3 = f(t + C3 * h, &stage(&y, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = f(t + C4 * h, &stage(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(t + C5 * h, &stage(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = f(
            t + h,
            &stage(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let y_new = stage(&y, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y_new)?;

        let mut err = 0.0;
        let mut finite = true;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sk).powi(2);
            finite &= y_new[i].is_finite();
        }
        let err = (err / N as f64).sqrt();

        if !finite || !err.is_finite() {
            // shrink hard and retry; a genuine singularity ends in underflow
            traj.counts.rejected += 1;
            h *= 0.1;
            last_rejected = true;
            if h.abs() < opts.h_min {
                traj.stop = Some(Stop::NonFinite { t });
                return Ok(traj);
            }
            continue;
        }

        if err <= 1.0 {
            let mut ydiff = [0.0; N];
            let mut bspl = [0.0; N];
            let mut r4 = [0.0; N];
            let mut r5 = [0.0; N];
            for i in 0..N {
                ydiff[i] = y_new[i] - y[i];
                bspl[i] = h * k1[i] - ydiff[i];
                r4[i] = ydiff[i] - h * k7[i] - bspl[i];
                r5[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            traj.segments.push(Segment {
                t0: t,
                h,
                rcont: [y, ydiff, bspl, r4, r5],
            });
            traj.counts.accepted += 1;
            traj.min_step = traj.min_step.min(h.abs());
            t = if (t + h - t_end) * dir >= 0.0 { t_end } else { t + h };
            y = y_new;
            k1 = k7;
            traj.t.push(t);
            traj.y.push(y);

            if let Some(reason) = check(t, &y) {
                traj.stop = Some(Stop::Rejected { t, reason });
                return Ok(traj);
            }
            if t == t_end {
                return Ok(traj);
            }
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).abs().min(opts.h_max) * dir;
            last_rejected = false;
        } else {
            traj.counts.rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            last_rejected = true;
        }
    }
}

// Starting step heuristic (Hairer, Nørsett, Wanner, II.4).
fn initial_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    dir: f64,
    opts: &Dopri5Options,
) -> Result<f64>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let scale = |i: usize| opts.atol + opts.rtol * y[i].abs();
    let norm = |v: &[f64; N]| {
        ((0..N).map(|i| (v[i] / scale(i)).powi(2)).sum::<f64>() / N as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let mut y1 = *y;
    for i in 0..N {
        y1[i] += dir * h0 * f0[i];
    }
    let f1 = f(t + dir * h0, &y1)?;
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}
