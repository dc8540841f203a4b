//! The matrix-valued Gaussian kernel
//!
//! ```text
//! k(t,s,x) = (4π)^{-d/2} (det Q_{t,s})^{-1/2} exp(-<Q_{t,s}^{-1} x, x> / 4) U(t,s)
//! ```
//!
//! and its Fourier multiplier `U(t,s) exp(-<Q_{t,s} ξ, ξ>)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix_flow::{self, GramMatrix, MatrixSignal, VectorSignal};

/// Everything the representation formula needs for one pair `s < t`.
#[derive(Debug, Clone, Serialize)]
pub struct KernelParams {
    /// `U(t,s)`
    pub forward: DMatrix<f64>,
    /// `U(s,t)`
    pub backward: DMatrix<f64>,
    pub gram: GramMatrix,
    /// `g(t,s)`
    pub offset: DVector<f64>,
    pub s: f64,
    pub t: f64,
}

/// Build `(U(t,s), U(s,t), Q_{t,s}, g(t,s))`.
///
/// `U(s,t)`, `Q` and `g` come from one sweep of the backward trajectory;
/// `U(t,s)` is integrated forward separately so neither is an inverse of the other.
pub fn make_params(m: &MatrixSignal, f: &VectorSignal, s: f64, t: f64, tol: f64) -> Result<KernelParams> {
    if !(t > s) {
        return Err(Error::InvalidArgument(format!("kernel needs t > s, got s={s}, t={t}")));
    }
    let sweep = matrix_flow::flow_quadrature(m, Some(f), s, t, tol)?;
    let forward = matrix_flow::propagate(m, s, t, tol)?.matrix;
    let gram = GramMatrix::from_matrix(sweep.gram, s, t)?;
    Ok(KernelParams {
        forward,
        backward: sweep.backward,
        gram,
        offset: sweep.offset,
        s,
        t,
    })
}

impl KernelParams {
    pub fn dim(&self) -> usize {
        self.forward.nrows()
    }

    pub fn tau(&self) -> f64 {
        self.t - self.s
    }

    /// `‖U(t,s) U(s,t) - Id‖_F`
    pub fn consistency_defect(&self) -> f64 {
        let d = self.dim();
        (&self.forward * &self.backward - DMatrix::identity(d, d)).norm()
    }

    /// Scalar Gaussian factor of the kernel at `x`.
    pub fn density(&self, x: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        let log = -0.5 * d * (4.0 * PI).ln() - 0.5 * self.gram.log_det - 0.25 * self.gram.inv_quad_form(x);
        log.exp()
    }

    /// Peak value `(4π)^{-d/2} (det Q)^{-1/2}` of the scalar factor.
    pub fn peak(&self) -> f64 {
        let d = self.dim() as f64;
        (-0.5 * d * (4.0 * PI).ln() - 0.5 * self.gram.log_det).exp()
    }

    /// `k(t,s,x)`
    pub fn kernel_eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        &self.forward * self.density(x)
    }

    /// `exp(-<Q ξ, ξ>)`, the Fourier transform of the scalar factor.
    pub fn multiplier(&self, xi: &[f64]) -> f64 {
        (-self.gram.quad_form(xi)).exp()
    }

    /// `U(t,s) exp(-<Q ξ, ξ>)`.
    ///
    /// The kernel is even in `x`, so its transform is real.
    pub fn fourier_symbol(&self, xi: &[f64]) -> DMatrix<f64> {
        &self.forward * self.multiplier(xi)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GramScalingRow {
    pub tau: f64,
    /// `‖Q^{-1/2}‖ τ^{1/2}`
    pub inv_sqrt_scaled: f64,
    /// `(det Q)^{1/2} τ^{-d/2}`
    pub sqrt_det_scaled: f64,
}

/// Scale-normalized Gram quantities over a list of gaps `τ = t - s`.
pub fn gram_scaling_report(m: &MatrixSignal, s: f64, taus: &[f64], tol: f64) -> Result<Vec<GramScalingRow>> {
    let d = m.dim() as f64;
    taus.iter()
        .map(|&tau| {
            if !(tau > 0.0) {
                return Err(Error::InvalidArgument(format!("gap must be positive, got {tau}")));
            }
            let q = matrix_flow::gram(m, s, s + tau, tol)?;
            Ok(GramScalingRow {
                tau,
                inv_sqrt_scaled: q.inv_sqrt_norm() * tau.sqrt(),
                sqrt_det_scaled: (0.5 * q.log_det - 0.5 * d * tau.ln()).exp(),
            })
        })
        .collect()
}
