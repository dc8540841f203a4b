//! Decay-exponent studies, vanishing limits and the estimate suite.
//!
//! Fitted slopes of `log ‖T(t,s)φ‖_q` against `log(t - s)` are compared with
//! the smoothing exponent `-d/2 (1/p - 1/q)` (and `-1/2` more for gradients).
//! The estimates are upper bounds; a fitted slope equals the exponent only for
//! data shaped like the heat kernel at the scale of the gap. The scale-matched
//! family (variance proportional to `t - s`) has that property exactly, so it
//! is the default for exponent studies.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{gaussian_vortex, DataConfig, RunConfig};
use crate::error::{Error, Result};
use crate::evolution_op::{self, ApplyOptions};
use crate::field_grid::{Grid, VectorField};
use crate::gaussian_kernel::{gram_scaling_report, make_params};
use crate::matrix_flow::{self, MatrixSignal, VectorSignal};

/// Compensated values inside a fit window differ by at most this factor minus one.
pub const FLATNESS: f64 = 0.02;
pub const MIN_R_SQUARED: f64 = 0.99;
pub const MIN_WINDOW: usize = 3;

/// Data for a decay study.
#[derive(Debug, Clone)]
pub enum DataFamily {
    Fixed(VectorField),
    /// Gaussian vortex with variance `ratio · (t - s)` at each gap.
    ScaleMatched { grid: Grid, ratio: f64 },
}

impl DataFamily {
    fn at(&self, tau: f64) -> VectorField {
        match self {
            DataFamily::Fixed(u) => u.clone(),
            DataFamily::ScaleMatched { grid, ratio } => gaussian_vortex(grid, ratio * tau, 1.0),
        }
    }

    fn dim(&self) -> usize {
        match self {
            DataFamily::Fixed(u) => u.dim(),
            DataFamily::ScaleMatched { grid, .. } => grid.dim(),
        }
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        match cfg.data {
            DataConfig::ScaleMatched { ratio } => Ok(DataFamily::ScaleMatched {
                grid: cfg.grid()?,
                ratio,
            }),
            _ => Ok(DataFamily::Fixed(cfg.initial_field()?)),
        }
    }
}

/// `d/2 (1/p - 1/q)`
pub fn smoothing_exponent(d: usize, p: f64, q: f64) -> f64 {
    0.5 * d as f64 * (1.0 / p - 1.0 / q)
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Value,
    Gradient,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct StudyRow {
    pub tau: f64,
    /// `‖T(t,s)φ‖_q / ‖φ‖_p` (or the gradient in the numerator).
    pub norm: f64,
    /// `norm · τ^{-target}`
    pub compensated: f64,
    pub in_window: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayStudy {
    pub kind: StudyKind,
    pub dimension: usize,
    pub p: f64,
    pub q: f64,
    /// Predicted slope.
    pub target: f64,
    pub slope: f64,
    pub r_squared: f64,
    /// First and last gap of the fit window.
    pub window: (f64, f64),
    pub relative_error: f64,
    pub rows: Vec<StudyRow>,
    pub note: &'static str,
}

const NOTE: &str = "the estimate is an upper bound; equality of the fitted slope reflects heat-kernel-shaped data at the scale of the gap";

impl DecayStudy {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "tau,norm,compensated,slope_window_flag")?;
        for r in &self.rows {
            writeln!(w, "{:e},{:e},{:e},{}", r.tau, r.norm, r.compensated, u8::from(r.in_window))?;
        }
        Ok(())
    }

    /// gnuplot script plotting the CSV written next to it.
    pub fn plot_script(&self, csv_name: &str) -> String {
        format!(
            "set datafile separator ','\n\
             set logscale xy\n\
             set key autotitle columnhead\n\
             set xlabel 't - s'\n\
             set title 'fitted slope {:.4} (target {:.4})'\n\
             plot '{csv_name}' using 1:2 with linespoints title 'norm', \\\n     \
             '{csv_name}' using 1:3 with lines title 'compensated'\n",
            self.slope, self.target
        )
    }
}

fn q_norm(u: &VectorField, q: f64) -> Result<f64> {
    u.lp_norm(q)
}

/// Longest contiguous run whose values stay within `FLATNESS` of each other.
fn flat_window(values: &[f64]) -> (usize, usize) {
    let mut best = (0, 0);
    for start in 0..values.len() {
        let (mut lo, mut hi) = (values[start], values[start]);
        let mut end = start;
        while end + 1 < values.len() {
            let v = values[end + 1];
            let (nlo, nhi) = (lo.min(v), hi.max(v));
            if nhi > nlo * (1.0 + FLATNESS) {
                break;
            }
            lo = nlo;
            hi = nhi;
            end += 1;
        }
        if end - start > best.1 - best.0 {
            best = (start, end);
        }
    }
    best
}

/// Least-squares slope and `R²` of `y` against `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    // a flat series (log spread below 1e-6) fits any horizontal line exactly
    let r2 = if ss_tot <= 1e-12 * n {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    (slope, r2)
}

fn check_study_args(p: f64, q: f64, taus: &[f64]) -> Result<()> {
    if !(p > 1.0 && q >= p) {
        return Err(Error::InvalidArgument(format!("need 1 < p <= q <= ∞, got p={p}, q={q}")));
    }
    if taus.len() < MIN_WINDOW || taus.iter().any(|&t| !(t > 0.0)) || taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_WINDOW} increasing positive gaps"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn study(
    kind: StudyKind,
    m: &MatrixSignal,
    f: &VectorSignal,
    p: f64,
    q: f64,
    data: &DataFamily,
    s: f64,
    taus: &[f64],
    opts: &ApplyOptions,
) -> Result<DecayStudy> {
    check_study_args(p, q, taus)?;
    let d = data.dim();
    let alpha = smoothing_exponent(d, p, q);
    let target = match kind {
        StudyKind::Value => -alpha,
        StudyKind::Gradient => -alpha - 0.5,
    };
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let phi = data.at(tau);
        let base = phi.lp_norm(p)?;
        if base == 0.0 {
            return Err(Error::InvalidArgument("study data vanish".into()));
        }
        let params = make_params(m, f, s, s + tau, opts.tol)?;
        let numerator = match kind {
            StudyKind::Value => q_norm(&evolution_op::apply_with_params(&params, &phi, opts)?, q)?,
            StudyKind::Gradient => evolution_op::grad_with_params(&params, &phi, opts)?.lp_norm(q)?,
        };
        let norm = numerator / base;
        rows.push(StudyRow {
            tau,
            norm,
            compensated: norm * tau.powf(-target),
            in_window: false,
        });
    }
    if rows.iter().all(|r| r.norm == 0.0) {
        return Err(Error::FitQuality {
            reason: "norm vanishes identically".into(),
        });
    }
    let comp: Vec<f64> = rows.iter().map(|r| r.compensated).collect();
    let (lo, hi) = flat_window(&comp);
    if hi - lo + 1 < MIN_WINDOW {
        return Err(Error::FitQuality {
            reason: format!(
                "no {MIN_WINDOW} consecutive gaps with compensated values flat within {}%",
                FLATNESS * 100.0
            ),
        });
    }
    for r in &mut rows[lo..=hi] {
        r.in_window = true;
    }
    let x: Vec<f64> = rows[lo..=hi].iter().map(|r| r.tau.ln()).collect();
    let y: Vec<f64> = rows[lo..=hi].iter().map(|r| r.norm.ln()).collect();
    let (slope, r_squared) = fit_line(&x, &y);
    if r_squared < MIN_R_SQUARED {
        return Err(Error::FitQuality {
            reason: format!("R² = {r_squared:.4} below {MIN_R_SQUARED}"),
        });
    }
    let relative_error = if target == 0.0 {
        slope.abs()
    } else {
        ((slope - target) / target).abs()
    };
    Ok(DecayStudy {
        kind,
        dimension: d,
        p,
        q,
        target,
        slope,
        r_squared,
        window: (rows[lo].tau, rows[hi].tau),
        relative_error,
        rows,
        note: NOTE,
    })
}

/// Slope of `‖T(s+τ,s)φ‖_q / ‖φ‖_p` in `τ`.
#[allow(clippy::too_many_arguments)]
pub fn decay_study(
    m: &MatrixSignal,
    f: &VectorSignal,
    p: f64,
    q: f64,
    data: &DataFamily,
    s: f64,
    taus: &[f64],
    opts: &ApplyOptions,
) -> Result<DecayStudy> {
    study(StudyKind::Value, m, f, p, q, data, s, taus, opts)
}

/// Slope of `‖∇T(s+τ,s)φ‖_q / ‖φ‖_p` in `τ`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_decay_study(
    m: &MatrixSignal,
    f: &VectorSignal,
    p: f64,
    q: f64,
    data: &DataFamily,
    s: f64,
    taus: &[f64],
    opts: &ApplyOptions,
) -> Result<DecayStudy> {
    study(StudyKind::Gradient, m, f, p, q, data, s, taus, opts)
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct VanishingRow {
    pub tau: f64,
    /// `τ^α ‖T φ‖_q / ‖φ‖_p`
    pub value: f64,
    /// `τ^{1/2} ‖∇T φ‖_p / ‖φ‖_p`
    pub gradient: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VanishingStudy {
    pub p: f64,
    pub q: f64,
    pub rows: Vec<VanishingRow>,
    pub value_monotone: bool,
    pub gradient_monotone: bool,
    /// Last row over first row.
    pub value_ratio: f64,
    pub gradient_ratio: f64,
}

impl VanishingStudy {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "tau,value,gradient")?;
        for r in &self.rows {
            writeln!(w, "{:e},{:e},{:e}", r.tau, r.value, r.gradient)?;
        }
        Ok(())
    }
}

/// Compensated norms as `t ↓ s`; gaps are taken in the order given.
pub fn vanishing_limit_study(
    m: &MatrixSignal,
    f: &VectorSignal,
    p: f64,
    q: f64,
    data: &VectorField,
    s: f64,
    taus: &[f64],
    opts: &ApplyOptions,
) -> Result<VanishingStudy> {
    if !(p > 1.0 && q > p) {
        return Err(Error::InvalidArgument(format!("vanishing limits need 1 < p < q, got p={p}, q={q}")));
    }
    if taus.is_empty() || taus.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("gaps must be positive".into()));
    }
    let alpha = smoothing_exponent(data.dim(), p, q);
    let base = data.lp_norm(p)?;
    if base == 0.0 {
        return Err(Error::InvalidArgument("study data vanish".into()));
    }
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let params = make_params(m, f, s, s + tau, opts.tol)?;
        let value = q_norm(&evolution_op::apply_with_params(&params, data, opts)?, q)?;
        let grad = evolution_op::grad_with_params(&params, data, opts)?.lp_norm(p)?;
        rows.push(VanishingRow {
            tau,
            value: tau.powf(alpha) * value / base,
            gradient: tau.sqrt() * grad / base,
        });
    }
    let decreasing = |v: &dyn Fn(&VanishingRow) -> f64| rows.windows(2).all(|w| v(&w[1]) < v(&w[0]));
    let value_monotone = decreasing(&|r| r.value);
    let gradient_monotone = decreasing(&|r| r.gradient);
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    Ok(VanishingStudy {
        p,
        q,
        value_monotone,
        gradient_monotone,
        value_ratio: last.value / first.value,
        gradient_ratio: last.gradient / first.gradient,
        rows,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SuiteSummary {
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

/// Gaps for the strong-continuity check.
pub const CONTINUITY_GAPS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// Identity, scaling and evolution checks for one configuration.
pub fn estimate_suite(cfg: &RunConfig) -> Result<SuiteSummary> {
    let m = &cfg.signal_m;
    let f = cfg.drift();
    let tols = &cfg.tolerances;
    let opts = cfg.apply_options();
    let s = cfg.times.s;
    let t = cfg
        .times
        .t
        .ok_or_else(|| Error::Config("times.t: required by verify".into()))?;
    if !(t > s) {
        return Err(Error::Config("times.t: verify needs t > s".into()));
    }
    let r = 0.5 * (s + t);
    let d = cfg.dimension;
    let id = DMatrix::<f64>::identity(d, d);
    let mut checks = Vec::new();

    let fwd = matrix_flow::propagate(m, s, t, tols.propagator)?.matrix;
    let bwd = matrix_flow::propagate(m, t, s, tols.propagator)?.matrix;
    let first = matrix_flow::propagate(m, s, r, tols.propagator)?.matrix;
    let second = matrix_flow::propagate(m, r, t, tols.propagator)?.matrix;
    checks.push(Check::below("cocycle", (&second * &first - &fwd).norm(), tols.identities));
    checks.push(Check::below("inverse_consistency", (&fwd * &bwd - &id).norm(), tols.identities));
    let trace = matrix_flow::trace_integral(m, s, t, tols.propagator)?;
    let abel = (-trace).exp();
    checks.push(Check::below("abel_identity", (fwd.determinant() - abel).abs() / abel, tols.identities));
    if m.is_skew() {
        checks.push(Check::below("orthogonality", (fwd.transpose() * &fwd - &id).norm(), tols.identities));
    }

    let taus: Vec<f64> = (0..=10).map(|k| 1e-4 * 10f64.powf(0.5 * k as f64)).collect();
    let rows = gram_scaling_report(m, s, &taus, tols.propagator)?;
    let band = tols.gram_band;
    let worst = rows
        .iter()
        .flat_map(|r| [r.inv_sqrt_scaled, r.sqrt_det_scaled])
        .map(|v| v.max(1.0 / v))
        .fold(1.0, f64::max);
    checks.push(Check::below("gram_scaling", worst, band));

    let phi = cfg.initial_field()?;
    let law = evolution_op::evolution_law_check(m, &f, s, r, t, &phi, &opts)?;
    checks.push(Check::below("evolution_law", law, tols.evolution_law));

    if phi.solenoidal {
        let grad = evolution_op::apply_grad_t(m, &f, s, t, &phi, &opts)?;
        let div = grad.trace().max_abs() / phi.max_norm();
        checks.push(Check::below("divergence_preservation", div, tols.divergence));
    }

    let mut distances = Vec::new();
    for tau in CONTINUITY_GAPS {
        let params = make_params(m, &f, s, s + tau, tols.propagator)?;
        let out = evolution_op::apply_with_params(&params, &phi, &opts)?;
        distances.push(out.sub(&phi).lp_norm(2.0)?);
    }
    let monotone = distances.windows(2).all(|w| w[1] < w[0]);
    checks.push(Check {
        name: "strong_continuity".into(),
        value: distances[distances.len() - 1] / phi.lp_norm(2.0)?,
        threshold: f64::NAN,
        pass: monotone,
    });

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(SuiteSummary { checks, all_pass })
}
