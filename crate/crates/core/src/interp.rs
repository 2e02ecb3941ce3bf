//! Piecewise cubic Hermite interpolation.
//!
//! [`MonotoneCubic`] is the Fritsch–Carlson (PCHIP) construction: C¹, and it
//! preserves monotonicity of the data on every interval. [`hermite`] is the
//! plain two-point cubic Hermite basis used when nodal derivatives are known.

use crate::error::{Error, Result};

/// Evaluate the cubic Hermite interpolant on `[x0, x1]` and its derivative.
#[inline]
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
    let dh00 = (6.0 * t2 - 6.0 * t) / h;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = (-6.0 * t2 + 6.0 * t) / h;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let slope = dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1;
    (value, slope)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidModel(format!(
                "grid has {} points but values have {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::InvalidModel("tabulated grid needs at least 2 points".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidModel("tabulated grid must be strictly increasing".into()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("tabulated data must be finite".into()));
        }

        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];

        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] <= 0.0 {
                    d[i] = 0.0;
                } else {
                    // weighted harmonic mean (Fritsch–Butland)
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }

        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    pub fn lo(&self) -> f64 {
        self.x[0]
    }

    pub fn hi(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// Value and first derivative at `x`, which must lie in the knot hull.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        let (lo, hi) = (self.lo(), self.hi());
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain { x, lo, hi });
        }
        let i = match self.x.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= self.x.len() => self.x.len() - 2,
            p => p - 1,
        };
        Ok(hermite(
            self.x[i],
            self.x[i + 1],
            self.y[i],
            self.y[i + 1],
            self.d[i],
            self.d[i + 1],
            x,
        ))
    }
}

// Three-point one-sided end slope with the PCHIP shape-preserving clamps.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 <= 0.0 && d.abs() > (3.0 * del0).abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reproduces_linear_data_exactly() {
        let x = [0.0, 0.5, 1.5, 2.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let p = MonotoneCubic::new(&x, &y).unwrap();
        for &t in &[0.0, 0.3, 1.0, 1.7, 3.9, 4.0] {
            let (v, dv) = p.eval(t).unwrap();
            assert_relative_eq!(v, 3.0 - 2.0 * t, epsilon = 1e-12);
            assert_relative_eq!(dv, -2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn preserves_monotonicity_on_steps() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.0, 1.0, 1.0, 1.0];
        let p = MonotoneCubic::new(&x, &y).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=400 {
            let (v, _) = p.eval(k as f64 * 0.01).unwrap();
            assert!(v >= prev - 1e-15);
            assert!((-1e-15..=1.0 + 1e-15).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn is_c1_at_knots() {
        let x: Vec<f64> = (0..12).map(|i| 0.3 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.7).sin() + 0.1 * v).collect();
        let p = MonotoneCubic::new(&x, &y).unwrap();
        for &k in &x[1..x.len() - 1] {
            let (_, left) = p.eval(k - 1e-9).unwrap();
            let (_, right) = p.eval(k + 1e-9).unwrap();
            assert!((left - right).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_points_outside_hull() {
        let p = MonotoneCubic::new(&[0.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!(matches!(p.eval(1.5), Err(Error::Domain { .. })));
        assert!(matches!(p.eval(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn hermite_matches_cubic() {
        // f(x) = x^3 - x on [1, 2]
        let f = |x: f64| x * x * x - x;
        let df = |x: f64| 3.0 * x * x - 1.0;
        let (v, d) = hermite(1.0, 2.0, f(1.0), f(2.0), df(1.0), df(2.0), 1.37);
        assert_relative_eq!(v, f(1.37), epsilon = 1e-12);
        assert_relative_eq!(d, df(1.37), epsilon = 1e-12);
    }
}
