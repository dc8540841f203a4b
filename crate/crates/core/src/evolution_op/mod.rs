//! The evolution system `T(t,s)` acting on sampled vector fields:
//!
//! ```text
//! T(t,s)φ(x) = U(t,s) (G_Q * φ)(U(s,t)x + g(t,s))
//! ```
//!
//! where `G_Q` is the Gaussian with Fourier transform `exp(-<Qξ, ξ>)`. The
//! smoothed field is band limited, so it is evaluated off the grid either by
//! direct trigonometric summation (the reference path) or by interpolation on
//! an oversampled grid (the fast path).

mod band;
mod fast;
mod planewave;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_grid::{self, TensorField, VectorField, TRUNCATION_THRESHOLD};
use crate::gaussian_kernel::{make_params, KernelParams};
use crate::matrix_flow::{MatrixSignal, VectorSignal};
use band::{BandLimited, Tables};

pub use fast::FastImage;
pub use planewave::{PlaneWave, PlaneWaveImage, Trig};

/// How the box relates to the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Data decay inside the box, which stands in for `R^d`. Truncation
    /// adequacy and the reach of the affine pullback are checked.
    #[default]
    Decaying,
    /// Data are genuinely periodic (trigonometric polynomials on the box
    /// lattice). No checks.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApplyOptions {
    /// Tolerance for the propagator and quadrature.
    pub tol: f64,
    pub domain: Domain,
    pub truncation_threshold: f64,
}

impl Default for ApplyOptions {
    fn default() -> Self {
        ApplyOptions {
            tol: 1e-10,
            domain: Domain::Decaying,
            truncation_threshold: TRUNCATION_THRESHOLD,
        }
    }
}

impl ApplyOptions {
    pub fn periodic() -> Self {
        ApplyOptions {
            domain: Domain::Periodic,
            ..Default::default()
        }
    }
}

fn check_dims(m: &MatrixSignal, f: &VectorSignal, phi: &VectorField) -> Result<()> {
    if m.dim() != phi.dim() || f.dim() != phi.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: M is {}, f is {}, field is {}",
            m.dim(),
            f.dim(),
            phi.dim()
        )));
    }
    if !phi.is_finite() {
        return Err(Error::InvalidArgument("field has non-finite entries".into()));
    }
    Ok(())
}

/// Largest `|z|_∞` over the pullback `z = U(s,t)x + g` of the inner half box.
pub fn pullback_reach(params: &KernelParams, half_width: f64) -> f64 {
    let d = params.dim();
    let mut reach: f64 = 0.0;
    for corner in 0..(1usize << d) {
        let x = DVector::from_fn(d, |a, _| if corner >> a & 1 == 1 { 0.5 } else { -0.5 } * half_width);
        let z = &params.backward * x + &params.offset;
        reach = reach.max(z.amax());
    }
    reach
}

fn precheck(params: &KernelParams, phi: &VectorField, opts: &ApplyOptions) -> Result<()> {
    if params.dim() != phi.dim() {
        return Err(Error::InvalidArgument("kernel and field dimensions differ".into()));
    }
    if opts.domain == Domain::Decaying {
        phi.check_truncation(opts.truncation_threshold)?;
        let reach = pullback_reach(params, phi.grid.half_width());
        if reach > phi.grid.half_width() {
            return Err(Error::OutOfBox {
                reach,
                half_width: phi.grid.half_width(),
            });
        }
    }
    Ok(())
}

fn smoothed(params: &KernelParams, phi: &VectorField) -> BandLimited {
    BandLimited::new(phi, |xi| params.multiplier(xi))
}

fn pullback(params: &KernelParams, x: &[f64], d: usize) -> [f64; 3] {
    let mut z = [0.0; 3];
    for i in 0..d {
        z[i] = params.offset[i] + (0..d).map(|j| params.backward[(i, j)] * x[j]).sum::<f64>();
    }
    z
}

/// For decaying data the whole-space value beyond the box is negligible,
/// whereas the periodic interpolant would return a shifted copy of the data.
fn outside(z: &[f64], half_width: f64, opts: &ApplyOptions) -> bool {
    opts.domain == Domain::Decaying && z.iter().any(|v| v.abs() > half_width)
}

/// `T(t,s)φ` for precomputed kernel parameters, by direct summation.
pub fn apply_with_params(params: &KernelParams, phi: &VectorField, opts: &ApplyOptions) -> Result<VectorField> {
    precheck(params, phi, opts)?;
    let grid = &phi.grid;
    let d = grid.dim();
    let band = smoothed(params, phi);
    let values: Vec<[f64; 3]> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || Tables::for_band(&band),
            |tab, k| {
                let x = grid.node(k);
                let z = pullback(params, &x, d);
                if outside(&z[..d], grid.half_width(), opts) {
                    return [0.0; 3];
                }
                let w = band.eval(&z[..d], tab, None);
                let mut out = [0.0; 3];
                for i in 0..d {
                    out[i] = (0..d).map(|a| params.forward[(i, a)] * w[a]).sum();
                }
                out
            },
        )
        .collect();
    let components = (0..d).map(|c| values.iter().map(|v| v[c]).collect()).collect();
    Ok(VectorField {
        grid: grid.clone(),
        components,
        solenoidal: phi.solenoidal,
        time: Some(params.t),
    })
}

/// `T(t,s)φ` by the reference path. Returns `φ` itself when `t = s`.
pub fn apply_t(
    m: &MatrixSignal,
    f: &VectorSignal,
    s: f64,
    t: f64,
    phi: &VectorField,
    opts: &ApplyOptions,
) -> Result<VectorField> {
    check_dims(m, f, phi)?;
    if t < s {
        return Err(Error::InvalidArgument(format!("evolution needs t >= s, got s={s}, t={t}")));
    }
    if t == s {
        return Ok(phi.clone().with_time(t));
    }
    let params = make_params(m, f, s, t, opts.tol)?;
    apply_with_params(&params, phi, opts)
}

/// `T(t,s)φ` on an oversampled grid with local polynomial interpolation.
pub fn apply_t_fast(
    m: &MatrixSignal,
    f: &VectorSignal,
    s: f64,
    t: f64,
    phi: &VectorField,
    opts: &ApplyOptions,
) -> Result<FastImage> {
    check_dims(m, f, phi)?;
    if t < s {
        return Err(Error::InvalidArgument(format!("evolution needs t >= s, got s={s}, t={t}")));
    }
    if t == s {
        return Ok(FastImage {
            field: phi.clone().with_time(t),
            error_estimate: 0.0,
        });
    }
    let params = make_params(m, f, s, t, opts.tol)?;
    precheck(&params, phi, opts)?;
    Ok(fast::apply(&params, phi, opts))
}

/// `∂_j (T(t,s)φ)_i`, from the chain rule `U(t,s) ∇w(z) U(s,t)` on the
/// smoothed band-limited field.
pub fn grad_with_params(params: &KernelParams, phi: &VectorField, opts: &ApplyOptions) -> Result<TensorField> {
    precheck(params, phi, opts)?;
    let grid = &phi.grid;
    let d = grid.dim();
    let band = smoothed(params, phi);
    let fw = &params.forward;
    let bw = &params.backward;
    let values: Vec<[f64; 9]> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || Tables::for_band(&band),
            |tab, k| {
                let x = grid.node(k);
                let z = pullback(params, &x, d);
                if outside(&z[..d], grid.half_width(), opts) {
                    return [0.0; 9];
                }
                let mut jw = [[0.0; 3]; 3];
                band.eval(&z[..d], tab, Some(&mut jw));
                let mut out = [0.0; 9];
                for i in 0..d {
                    for j in 0..d {
                        let mut acc = 0.0;
                        for a in 0..d {
                            for b in 0..d {
                                acc += fw[(i, a)] * jw[a][b] * bw[(b, j)];
                            }
                        }
                        out[i * d + j] = acc;
                    }
                }
                out
            },
        )
        .collect();
    let components = (0..d * d).map(|c| values.iter().map(|v| v[c]).collect()).collect();
    Ok(TensorField {
        grid: grid.clone(),
        components,
    })
}

pub fn apply_grad_t(
    m: &MatrixSignal,
    f: &VectorSignal,
    s: f64,
    t: f64,
    phi: &VectorField,
    opts: &ApplyOptions,
) -> Result<TensorField> {
    check_dims(m, f, phi)?;
    if !(t > s) {
        return Err(Error::InvalidArgument(format!("gradient needs t > s, got s={s}, t={t}")));
    }
    let params = make_params(m, f, s, t, opts.tol)?;
    grad_with_params(&params, phi, opts)
}

/// Closed-form image of a plane wave.
pub fn apply_t_planewave(
    m: &MatrixSignal,
    f: &VectorSignal,
    s: f64,
    t: f64,
    w: &PlaneWave,
    tol: f64,
) -> Result<PlaneWaveImage> {
    if m.dim() != w.dim() || f.dim() != w.dim() {
        return Err(Error::InvalidArgument("plane wave dimension mismatch".into()));
    }
    if t < s {
        return Err(Error::InvalidArgument(format!("evolution needs t >= s, got s={s}, t={t}")));
    }
    let d = w.dim();
    if t == s {
        let id = DMatrix::identity(d, d);
        return Ok(PlaneWaveImage::build(w, &id, &id, &DVector::zeros(d), 1.0));
    }
    let params = make_params(m, f, s, t, tol)?;
    let decay = params.multiplier(&w.wavevector);
    Ok(PlaneWaveImage::build(
        w,
        &params.forward,
        &params.backward,
        &params.offset,
        decay,
    ))
}

/// `‖T(t,s)φ - T(t,r)T(r,s)φ‖_2 / ‖φ‖_2`.
#[allow(clippy::too_many_arguments)]
pub fn evolution_law_check(
    m: &MatrixSignal,
    f: &VectorSignal,
    s: f64,
    r: f64,
    t: f64,
    phi: &VectorField,
    opts: &ApplyOptions,
) -> Result<f64> {
    if !(s <= r && r <= t) {
        return Err(Error::InvalidArgument(format!("need s <= r <= t, got {s}, {r}, {t}")));
    }
    let direct = apply_t(m, f, s, t, phi, opts)?;
    let mid = apply_t(m, f, s, r, phi, opts)?;
    let composed = apply_t(m, f, r, t, &mid, opts)?;
    let scale = phi.lp_norm(2.0)?;
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(direct.sub(&composed).lp_norm(2.0)? / scale)
}

/// `𝒜(t)u = Δu + <M(t)x + f(t), ∇>u - M(t)u` with spectral derivatives.
pub fn generator(m: &MatrixSignal, f: &VectorSignal, t: f64, u: &VectorField) -> Result<VectorField> {
    let grid = &u.grid;
    let d = grid.dim();
    let mt = m.try_eval(t)?;
    let ft = f.try_eval(t)?;
    let lap = field_grid::laplacian(u);
    let grad = field_grid::gradient(u);
    let mut out = lap;
    for k in 0..grid.len() {
        let x = grid.node(k);
        let mut drift = [0.0; 3];
        for j in 0..d {
            drift[j] = ft[j] + (0..d).map(|b| mt[(j, b)] * x[b]).sum::<f64>();
        }
        for i in 0..d {
            let adv: f64 = (0..d).map(|j| drift[j] * grad.entry(i, j)[k]).sum();
            let zero: f64 = (0..d).map(|b| mt[(i, b)] * u.components[b][k]).sum();
            out.components[i][k] += adv - zero;
        }
    }
    out.solenoidal = false;
    out.time = Some(t);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdeResidual {
    /// Max of `|∂_t u - 𝒜(t)u|` over the inner half box.
    pub residual: f64,
    /// Max of `|∂_t u|` over the same nodes.
    pub scale: f64,
}

/// Residual of `∂_t u = 𝒜(t)u` for `u(t) = T(t,s)φ`, with a central
/// difference in time.
#[allow(clippy::too_many_arguments)]
pub fn pde_residual(
    m: &MatrixSignal,
    f: &VectorSignal,
    s: f64,
    t: f64,
    phi: &VectorField,
    dt: f64,
    opts: &ApplyOptions,
) -> Result<PdeResidual> {
    if !(dt > 0.0 && t - s > dt) {
        return Err(Error::InvalidArgument(format!("need t - s > dt > 0, got t-s={}, dt={dt}", t - s)));
    }
    let plus = apply_t(m, f, s, t + dt, phi, opts)?;
    let minus = apply_t(m, f, s, t - dt, phi, opts)?;
    let u = apply_t(m, f, s, t, phi, opts)?;
    let au = generator(m, f, t, &u)?;
    let grid = &phi.grid;
    let d = grid.dim();
    let half = 0.5 * grid.half_width();
    let mut residual: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..grid.len() {
        let x = grid.node(k);
        if x[..d].iter().any(|v| v.abs() > half) {
            continue;
        }
        let mut r2 = 0.0;
        let mut s2 = 0.0;
        for i in 0..d {
            let dudt = (plus.components[i][k] - minus.components[i][k]) / (2.0 * dt);
            r2 += (dudt - au.components[i][k]).powi(2);
            s2 += dudt * dudt;
        }
        residual = residual.max(r2.sqrt());
        scale = scale.max(s2.sqrt());
    }
    Ok(PdeResidual { residual, scale })
}
