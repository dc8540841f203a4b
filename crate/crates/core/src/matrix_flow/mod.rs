//! The matrix evolution system `U(t,s)` generated by `-M(t)`, together with
//! the Gram matrix `Q_{t,s}` and the drift offset `g(t,s)`.
//!
//! `U(t,s)` solves `d/dt U(t,s) = -M(t) U(t,s)`, `U(s,s) = Id`, and as a
//! function of its second argument `d/ds U(t,s) = U(t,s) M(s)`. The latter
//! form is what the quadratures use: with `s` fixed, `V(r) = U(s,r)` solves
//! `V' = V M(r)`, so a single forward sweep over `[s, t]` yields the
//! integrands of
//!
//! ```text
//! Q_{t,s} = ∫_s^t U(s,r) U(s,r)^T dr,     g(t,s) = ∫_s^t U(s,r) f(r) dr
//! ```
//!
//! and the backward propagator `U(s,t) = V(t)` without inverting anything.

mod signal;
mod spline;

pub use signal::{
    AxisFn, MatrixSignal, MatrixSignalSpec, ScalarFn, VectorSignal, VectorSignalSpec, SKEW_EPS,
};
pub use spline::{Interpolant, InterpolationOrder};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Upper bound on RK4 steps (or quadrature panels) before giving up.
pub const DEFAULT_MAX_STEPS: usize = 1 << 22;

/// Gaps below `COINCIDENT_REL * max(1, |s|, |t|)` use leading-order values.
pub const COINCIDENT_REL: f64 = 1e-8;

// 4-point Gauss–Legendre rule on [-1, 1], nodes ascending.
const GL_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_8,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_8,
];

pub(crate) fn coincident(s: f64, t: f64) -> bool {
    (t - s).abs() < COINCIDENT_REL * s.abs().max(t.abs()).max(1.0)
}

/// `U(t,s)` for one pair of times.
#[derive(Debug, Clone, Serialize)]
pub struct Propagator {
    pub source: f64,
    pub target: f64,
    pub matrix: DMatrix<f64>,
    pub tol: f64,
}

impl Propagator {
    pub fn det(&self) -> f64 {
        self.matrix.determinant()
    }
}

#[derive(Clone, Copy)]
enum Side {
    /// `X' = -M X`
    Left,
    /// `X' = X M`
    Right,
}

fn rhs(m: &MatrixSignal, side: Side, tau: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mt = m.try_eval(tau)?;
    Ok(match side {
        Side::Left => -(mt * x),
        Side::Right => x * mt,
    })
}

fn rk4_step(m: &MatrixSignal, side: Side, tau: f64, h: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k1 = rhs(m, side, tau, x)?;
    let k2 = rhs(m, side, tau + 0.5 * h, &(x + &k1 * (0.5 * h)))?;
    let k3 = rhs(m, side, tau + 0.5 * h, &(x + &k2 * (0.5 * h)))?;
    let k4 = rhs(m, side, tau + h, &(x + &k3 * h))?;
    Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
}

fn rk4_fixed(m: &MatrixSignal, s: f64, t: f64, n: usize) -> Result<DMatrix<f64>> {
    let h = (t - s) / n as f64;
    let mut u = DMatrix::identity(m.dim(), m.dim());
    for k in 0..n {
        u = rk4_step(m, Side::Left, s + k as f64 * h, h, &u)?;
    }
    Ok(u)
}

fn initial_steps(span: f64) -> usize {
    ((span.abs() / 0.1).ceil() as usize).max(2)
}

/// Evaluate `U(t,s)` with classical RK4 and step doubling.
///
/// Either order of `s` and `t` is accepted; for `t < s` the ODE is integrated
/// backwards in time, which gives `U(s,t)^{-1}` without forming an inverse.
/// The returned matrix is the finer of the last two integrations, whose
/// relative distance is at most `tol`.
pub fn propagate(m: &MatrixSignal, s: f64, t: f64, tol: f64) -> Result<Propagator> {
    propagate_with(m, s, t, tol, DEFAULT_MAX_STEPS)
}

pub fn propagate_with(m: &MatrixSignal, s: f64, t: f64, tol: f64, max_steps: usize) -> Result<Propagator> {
    validate_tol(tol)?;
    let d = m.dim();
    let matrix = if s == t {
        DMatrix::identity(d, d)
    } else if coincident(s, t) {
        DMatrix::identity(d, d) - m.try_eval(s)? * (t - s)
    } else {
        let mut n = initial_steps(t - s);
        let mut coarse = rk4_fixed(m, s, t, n)?;
        loop {
            if 2 * n > max_steps {
                return Err(Error::Convergence {
                    what: "propagator",
                    tol,
                    steps: max_steps,
                });
            }
            let fine = rk4_fixed(m, s, t, 2 * n)?;
            let err = (&fine - &coarse).norm() / fine.norm().max(f64::MIN_POSITIVE);
            if err <= tol {
                break fine;
            }
            coarse = fine;
            n *= 2;
        }
    };
    Ok(Propagator {
        source: s,
        target: t,
        matrix,
        tol,
    })
}

fn validate_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")))
    }
}

/// `Q_{t,s}` with its Cholesky factor.
#[derive(Debug, Clone, Serialize)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
    /// Lower-triangular `L` with `L L^T = Q`.
    pub cholesky: DMatrix<f64>,
    pub log_det: f64,
    pub interval: (f64, f64),
}

impl GramMatrix {
    pub fn from_matrix(q: DMatrix<f64>, s: f64, t: f64) -> Result<Self> {
        let sym = (&q + q.transpose()) * 0.5;
        match sym.clone().cholesky() {
            Some(ch) => {
                let l = ch.l();
                let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                if !log_det.is_finite() {
                    return Err(near_singular(s, t, q.nrows()));
                }
                Ok(GramMatrix {
                    matrix: sym,
                    cholesky: l,
                    log_det,
                    interval: (s, t),
                })
            }
            None => Err(near_singular(s, t, q.nrows())),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `x^T Q^{-1} x`, via one triangular solve.
    pub fn inv_quad_form(&self, x: &DVector<f64>) -> f64 {
        let y = self
            .cholesky
            .solve_lower_triangular(x)
            .expect("Cholesky factor has positive diagonal");
        y.norm_squared()
    }

    /// `xi^T Q xi`
    pub fn quad_form(&self, xi: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += xi[i] * self.matrix[(i, j)] * xi[j];
            }
        }
        acc
    }

    pub fn det(&self) -> f64 {
        self.log_det.exp()
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.matrix.clone()).eigenvalues
    }

    /// `‖Q^{-1/2}‖` in the spectral norm, i.e. `λ_min^{-1/2}`.
    pub fn inv_sqrt_norm(&self) -> f64 {
        let lmin = self.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        1.0 / lmin.sqrt()
    }

    /// Symmetric square root `Q^{1/2}`.
    pub fn sqrt(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
    }
}

fn near_singular(s: f64, t: f64, d: usize) -> Error {
    Error::NearSingularGram {
        tau: t - s,
        fallback: DMatrix::identity(d, d) * (t - s),
    }
}

/// Results of one sweep of `V(r) = U(s,r)` over `[s, t]`.
#[derive(Debug, Clone)]
pub(crate) struct FlowQuadrature {
    pub gram: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// `U(s,t)`
    pub backward: DMatrix<f64>,
    pub trace_integral: f64,
}

fn sweep(m: &MatrixSignal, f: Option<&VectorSignal>, s: f64, t: f64, panels: usize) -> Result<(FlowQuadrature, f64)> {
    let d = m.dim();
    let mut v = DMatrix::<f64>::identity(d, d);
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut offset = DVector::<f64>::zeros(d);
    let mut offset_scale = 0.0;
    let mut trace_integral = 0.0;
    let width = (t - s) / panels as f64;
    for p in 0..panels {
        let a = s + p as f64 * width;
        let mut r = a;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let node = a + 0.5 * width * (1.0 + x);
            v = rk4_step(m, Side::Right, r, node - r, &v)?;
            r = node;
            let w = 0.5 * width * w;
            gram += (&v * v.transpose()) * w;
            trace_integral += w * m.try_eval(node)?.trace();
            if let Some(f) = f {
                let term = &v * f.try_eval(node)?;
                offset_scale += w * term.norm();
                offset += term * w;
            }
        }
        let b = a + width;
        v = rk4_step(m, Side::Right, r, b - r, &v)?;
    }
    Ok((
        FlowQuadrature {
            gram,
            offset,
            backward: v,
            trace_integral,
        },
        offset_scale,
    ))
}

/// Composite 4-point Gauss–Legendre with panel doubling; the propagator
/// trajectory is advanced by one RK4 step between consecutive nodes.
pub(crate) fn flow_quadrature(
    m: &MatrixSignal,
    f: Option<&VectorSignal>,
    s: f64,
    t: f64,
    tol: f64,
) -> Result<FlowQuadrature> {
    validate_tol(tol)?;
    if let Some(f) = f {
        if f.dim() != m.dim() {
            return Err(Error::InvalidArgument(format!(
                "M is {0}x{0} but f has {1} components",
                m.dim(),
                f.dim()
            )));
        }
    }
    let d = m.dim();
    if !(t >= s) {
        return Err(Error::InvalidArgument(format!("need t >= s, got s={s}, t={t}")));
    }
    if s == t {
        return Ok(FlowQuadrature {
            gram: DMatrix::zeros(d, d),
            offset: DVector::zeros(d),
            backward: DMatrix::identity(d, d),
            trace_integral: 0.0,
        });
    }
    if coincident(s, t) {
        let tau = t - s;
        let ms = m.try_eval(s)?;
        return Ok(FlowQuadrature {
            gram: DMatrix::identity(d, d) * tau,
            offset: match f {
                Some(f) => f.try_eval(s)? * tau,
                None => DVector::zeros(d),
            },
            backward: DMatrix::identity(d, d) + &ms * tau,
            trace_integral: ms.trace() * tau,
        });
    }
    let mut panels = ((t - s) / 0.25).ceil().max(1.0) as usize;
    let (mut coarse, _) = sweep(m, f, s, t, panels)?;
    loop {
        if 2 * panels * 5 > DEFAULT_MAX_STEPS {
            return Err(Error::Convergence {
                what: "Gram/offset quadrature",
                tol,
                steps: DEFAULT_MAX_STEPS,
            });
        }
        let (fine, scale) = sweep(m, f, s, t, 2 * panels)?;
        let eq = (&fine.gram - &coarse.gram).norm() / fine.gram.norm();
        let ev = (&fine.backward - &coarse.backward).norm() / fine.backward.norm();
        let eg = (&fine.offset - &coarse.offset).norm() / scale.max(f64::MIN_POSITIVE);
        let et = (fine.trace_integral - coarse.trace_integral).abs() / (t - s);
        if eq.max(ev).max(eg).max(et) <= tol {
            return Ok(fine);
        }
        coarse = fine;
        panels *= 2;
    }
}

/// `Q_{t,s} = ∫_s^t U(s,r) U(s,r)^T dr` for `t > s`.
pub fn gram(m: &MatrixSignal, s: f64, t: f64, tol: f64) -> Result<GramMatrix> {
    if !(t > s) {
        return Err(Error::InvalidArgument(format!("Gram matrix needs t > s, got s={s}, t={t}")));
    }
    let fq = flow_quadrature(m, None, s, t, tol)?;
    GramMatrix::from_matrix(fq.gram, s, t)
}

/// `g(t,s) = ∫_s^t U(s,r) f(r) dr` for `t >= s`.
pub fn drift_offset(m: &MatrixSignal, f: &VectorSignal, s: f64, t: f64, tol: f64) -> Result<DVector<f64>> {
    Ok(flow_quadrature(m, Some(f), s, t, tol)?.offset)
}

/// `∫_s^t tr M(r) dr` by the same quadrature; `det U(t,s)` is its negative exponential.
pub fn trace_integral(m: &MatrixSignal, s: f64, t: f64, tol: f64) -> Result<f64> {
    if t >= s {
        Ok(flow_quadrature(m, None, s, t, tol)?.trace_integral)
    } else {
        Ok(-flow_quadrature(m, None, t, s, tol)?.trace_integral)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundConstants {
    /// Largest sampled `‖U(t,s)‖` (spectral norm); a lower bound on the supremum.
    pub sup_norm: f64,
    pub horizon: f64,
}

/// `M_{T0}` sampled on an `n x n` grid of `[0, T0]^2`.
pub fn bound_constant(m: &MatrixSignal, horizon: f64, n_samples: usize, tol: f64) -> Result<BoundConstants> {
    if !(horizon > 0.0) || n_samples < 2 {
        return Err(Error::InvalidArgument(
            "bound constant needs T0 > 0 and at least two samples".into(),
        ));
    }
    let times: Vec<f64> = (0..n_samples)
        .map(|i| horizon * i as f64 / (n_samples - 1) as f64)
        .collect();
    let mut sup: f64 = 1.0;
    for &t in &times {
        for &s in &times {
            if s == t {
                continue;
            }
            let u = propagate(m, s, t, tol)?;
            sup = sup.max(spectral_norm(&u.matrix));
        }
    }
    Ok(BoundConstants {
        sup_norm: sup,
        horizon,
    })
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}
