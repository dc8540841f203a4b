//! Interpolation of sampled coefficient signals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationOrder {
    Linear,
    #[default]
    Cubic,
}

/// Multi-channel interpolant over a common knot vector.
///
/// The cubic variant is a clamped spline: end slopes come from second-order
/// one-sided differences. Outside the knot range the value is held at the
/// nearest endpoint.
#[derive(Debug, Clone)]
pub struct Interpolant {
    knots: Vec<f64>,
    /// `values[i]` holds every channel at knot `i`.
    values: Vec<Vec<f64>>,
    /// Second derivatives per knot and channel (cubic only).
    curvature: Option<Vec<Vec<f64>>>,
}

impl Interpolant {
    pub fn new(knots: Vec<f64>, values: Vec<Vec<f64>>, order: InterpolationOrder) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidArgument(
                "sampled signal needs at least two knots".into(),
            ));
        }
        if knots.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} knots but {} samples",
                knots.len(),
                values.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "sample times must be strictly increasing".into(),
            ));
        }
        let channels = values[0].len();
        if values.iter().any(|v| v.len() != channels) {
            return Err(Error::InvalidArgument("ragged sample data".into()));
        }
        if values.iter().flatten().chain(&knots).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample data".into()));
        }
        let curvature = match order {
            InterpolationOrder::Linear => None,
            InterpolationOrder::Cubic => Some(clamped_curvature(&knots, &values)),
        };
        Ok(Interpolant {
            knots,
            values,
            curvature,
        })
    }

    pub fn channels(&self) -> usize {
        self.values[0].len()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.knots.len();
        let t = t.clamp(self.knots[0], self.knots[n - 1]);
        // index of the interval [k_i, k_{i+1}] containing t
        let i = match self.knots.partition_point(|&k| k <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        let h = b - a;
        let (ya, yb) = (&self.values[i], &self.values[i + 1]);
        match &self.curvature {
            None => {
                let w = (t - a) / h;
                for (c, o) in out.iter_mut().enumerate() {
                    *o = (1.0 - w) * ya[c] + w * yb[c];
                }
            }
            Some(curv) => {
                let (ma, mb) = (&curv[i], &curv[i + 1]);
                let (l, r) = (b - t, t - a);
                for (c, o) in out.iter_mut().enumerate() {
                    *o = ma[c] * l * l * l / (6.0 * h)
                        + mb[c] * r * r * r / (6.0 * h)
                        + (ya[c] / h - ma[c] * h / 6.0) * l
                        + (yb[c] / h - mb[c] * h / 6.0) * r;
                }
            }
        }
    }
}

fn end_slopes(knots: &[f64], values: &[Vec<f64>], c: usize) -> (f64, f64) {
    let n = knots.len();
    if n == 2 {
        let s = (values[1][c] - values[0][c]) / (knots[1] - knots[0]);
        return (s, s);
    }
    let one_sided = |y0: f64, y1: f64, y2: f64, h0: f64, h1: f64| {
        -(2.0 * h0 + h1) / (h0 * (h0 + h1)) * y0 + (h0 + h1) / (h0 * h1) * y1
            - h0 / (h1 * (h0 + h1)) * y2
    };
    let left = one_sided(
        values[0][c],
        values[1][c],
        values[2][c],
        knots[1] - knots[0],
        knots[2] - knots[1],
    );
    // mirror the right end onto a forward stencil
    let right = -one_sided(
        values[n - 1][c],
        values[n - 2][c],
        values[n - 3][c],
        knots[n - 1] - knots[n - 2],
        knots[n - 2] - knots[n - 3],
    );
    (left, right)
}

/// Second derivatives of the clamped cubic spline, one tridiagonal solve per channel.
fn clamped_curvature(knots: &[f64], values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = knots.len();
    let channels = values[0].len();
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let mut out = vec![vec![0.0; channels]; n];
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for c in 0..channels {
        let (d0, dn) = end_slopes(knots, values, c);
        let slope = |i: usize| (values[i + 1][c] - values[i][c]) / h[i];
        diag[0] = 2.0 * h[0];
        sup[0] = h[0];
        rhs[0] = 6.0 * (slope(0) - d0);
        for i in 1..n - 1 {
            sub[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            sup[i] = h[i];
            rhs[i] = 6.0 * (slope(i) - slope(i - 1));
        }
        sub[n - 1] = h[n - 2];
        diag[n - 1] = 2.0 * h[n - 2];
        rhs[n - 1] = 6.0 * (dn - slope(n - 2));
        // Thomas algorithm; the system is strictly diagonally dominant.
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        cp[0] = sup[0] / diag[0];
        dp[0] = rhs[0] / diag[0];
        for i in 1..n {
            let den = diag[i] - sub[i] * cp[i - 1];
            cp[i] = if i < n - 1 { sup[i] / den } else { 0.0 };
            dp[i] = (rhs[i] - sub[i] * dp[i - 1]) / den;
        }
        out[n - 1][c] = dp[n - 1];
        for i in (0..n - 1).rev() {
            out[i][c] = dp[i] - cp[i] * out[i + 1][c];
        }
    }
    out
}
