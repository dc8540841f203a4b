//! Mild solutions of
//!
//! ```text
//! u(t) = T(t,0)u0 - ∫_0^t T(t,s) P((u(s)·∇)u(s)) ds
//! ```
//!
//! by Picard iteration in the time-weighted norm
//! `sup_t ‖u(t)‖_p + t^α ‖u(t)‖_q + t^{1/2} ‖∇u(t)‖_p`, `α = d/2 (1/p - 1/q)`.
//!
//! The Duhamel integral is accumulated step by step on the mesh with the
//! evolution law: with `I_k = ∫_0^{t_k} T(t_k,s)N(s) ds` and trapezoid weights
//! on each mesh interval,
//! `I_k = T(t_k,t_{k-1}) [I_{k-1} + h_k/2 N_{k-1}] + h_k/2 N_k`,
//! so each iterate costs one application of `T` per mesh step.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution_op::{apply_with_params, ApplyOptions};
use crate::field_grid::{self, VectorField};
use crate::gaussian_kernel::{make_params, KernelParams};
use crate::matrix_flow::{MatrixSignal, VectorSignal};

/// Any `‖u(t_k)‖_q` above this multiple of `‖u0‖_q` aborts the iteration.
pub const BLOW_UP_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KatoOptions {
    pub p: f64,
    pub q: f64,
    pub horizon: f64,
    /// Stopping threshold on the relative weighted distance of successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Points in the graded head on `[0, T0/8]`.
    pub head_points: usize,
    /// Uniform steps on `[T0/8, T0]`.
    pub tail_steps: usize,
    /// Mesh doublings allowed while the solution still moves by more than `refine_tol`.
    pub max_refinements: usize,
    pub refine_tol: f64,
    /// Truncation threshold for the iterates. Looser than the one for linear
    /// data because the pressure gives solutions algebraic tails.
    pub iterate_truncation: f64,
    /// Switch off the nonlinear term (linear evolution only).
    pub nonlinear: bool,
    pub apply: ApplyOptions,
}

impl Default for KatoOptions {
    fn default() -> Self {
        KatoOptions {
            p: 2.0,
            q: 4.0,
            horizon: 0.5,
            tol: 1e-6,
            max_iter: 40,
            head_points: 16,
            tail_steps: 56,
            max_refinements: 0,
            refine_tol: 1e-4,
            iterate_truncation: 1e-2,
            nonlinear: true,
            apply: ApplyOptions::default(),
        }
    }
}

impl KatoOptions {
    fn validate(&self, d: usize) -> Result<()> {
        let d = d as f64;
        if !(self.p >= d && self.q >= self.p && self.q.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need d <= p <= q < ∞, got d={d}, p={}, q={}",
                self.p, self.q
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.head_points < 2 || self.tail_steps < 1 || self.max_iter < 1 {
            return Err(Error::InvalidArgument("mesh and iteration counts must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn alpha(&self, d: usize) -> f64 {
        0.5 * d as f64 * (1.0 / self.p - 1.0 / self.q)
    }
}

/// `t_j = (T0/8)(j/n)^2` for `j ≤ n`, then a uniform tail to `T0`.
pub fn graded_mesh(horizon: f64, head_points: usize, tail_steps: usize) -> Vec<f64> {
    let head = horizon / 8.0;
    let mut times: Vec<f64> = (0..=head_points)
        .map(|j| head * (j as f64 / head_points as f64).powi(2))
        .collect();
    let h = (horizon - head) / tail_steps as f64;
    times.extend((1..=tail_steps).map(|j| if j == tail_steps { horizon } else { head + j as f64 * h }));
    times
}

#[derive(Debug, Clone)]
pub struct MildSolution {
    pub mesh: Vec<f64>,
    pub fields: Vec<VectorField>,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileRow {
    pub t: f64,
    /// `t^α ‖u(t)‖_q`
    pub k_q: f64,
    /// `t^{1/2} ‖∇u(t)‖_p`
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Weighted distance to the previous iterate, relative to the new iterate.
    pub distance: f64,
    /// Ratio of successive distances.
    pub contraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub iterations: Vec<IterationRecord>,
    pub contraction_factor: Option<f64>,
    /// Relative weighted defect of the converged solution in the Duhamel equation.
    pub fixed_point_defect: f64,
    /// Relative change between successive mesh doublings.
    pub refinement_changes: Vec<f64>,
    pub mesh_size: usize,
    /// Largest truncation defect along the final trajectory.
    pub truncation_defect: f64,
    pub profile: Vec<ProfileRow>,
}

/// Terms of the weighted norm at one mesh time.
fn weighted_terms(u: &VectorField, t: f64, p: f64, q: f64, alpha: f64) -> Result<(f64, f64, f64)> {
    let lp = u.lp_norm(p)?;
    let lq = u.lp_norm(q)?;
    let grad = field_grid::gradient(u).lp_norm(p)?;
    Ok((lp, t.powf(alpha) * lq, t.sqrt() * grad))
}

fn weighted_norm(fields: &[VectorField], mesh: &[f64], p: f64, q: f64, alpha: f64) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for (u, &t) in fields.iter().zip(mesh) {
        let (a, b, c) = weighted_terms(u, t, p, q, alpha)?;
        sup = sup.max(a + b + c);
    }
    Ok(sup)
}

fn weighted_distance(a: &[VectorField], b: &[VectorField], mesh: &[f64], p: f64, q: f64, alpha: f64) -> Result<f64> {
    let diffs: Vec<VectorField> = a.iter().zip(b).map(|(x, y)| x.sub(y)).collect();
    weighted_norm(&diffs, mesh, p, q, alpha)
}

/// `P((u·∇)u)`
pub fn nonlinear_term(u: &VectorField) -> VectorField {
    field_grid::helmholtz_project(&field_grid::convective(u))
}

/// Kernel data and linear part on a fixed mesh.
struct Setup {
    mesh: Vec<f64>,
    steps: Vec<KernelParams>,
    linear: Vec<VectorField>,
}

impl Setup {
    fn new(m: &MatrixSignal, f: &VectorSignal, u0: &VectorField, mesh: Vec<f64>, opts: &KatoOptions) -> Result<Self> {
        let mut steps = Vec::with_capacity(mesh.len() - 1);
        let mut linear = vec![u0.clone().with_time(0.0)];
        for k in 1..mesh.len() {
            steps.push(make_params(m, f, mesh[k - 1], mesh[k], opts.apply.tol)?);
            let params = make_params(m, f, mesh[0], mesh[k], opts.apply.tol)?;
            linear.push(apply_with_params(&params, u0, &opts.apply)?.with_solenoidal(true));
        }
        Ok(Setup { mesh, steps, linear })
    }

    /// One Picard update of the whole trajectory.
    fn step(&self, prev: &[VectorField], opts: &KatoOptions) -> Result<Vec<VectorField>> {
        if !opts.nonlinear {
            return Ok(self.linear.clone());
        }
        let nonlinear: Vec<VectorField> = prev.iter().map(nonlinear_term).collect();
        // the projected nonlinear term has algebraic pressure tails, so only the
        // iterates themselves are checked, against the looser threshold
        let inner = ApplyOptions {
            truncation_threshold: f64::INFINITY,
            ..opts.apply
        };
        let mut out = Vec::with_capacity(self.mesh.len());
        out.push(self.linear[0].clone());
        let mut integral = VectorField::zeros(&prev[0].grid);
        for k in 1..self.mesh.len() {
            let h = self.mesh[k] - self.mesh[k - 1];
            let carried = integral.axpy(0.5 * h, &nonlinear[k - 1]).with_solenoidal(true);
            let advanced = apply_with_params(&self.steps[k - 1], &carried, &inner)?.axpy(0.5 * h, &nonlinear[k]);
            // the exact integral is solenoidal; projecting removes the divergence
            // the box seam introduces where the tails are cut
            integral = field_grid::helmholtz_project(&advanced);
            let mut u = self.linear[k].sub(&integral);
            u.check_truncation(opts.iterate_truncation)?;
            u.solenoidal = true;
            u.time = Some(self.mesh[k]);
            out.push(u);
        }
        Ok(out)
    }
}

fn guard(fields: &[VectorField], mesh: &[f64], q: f64, base: f64) -> Result<()> {
    for (u, &t) in fields.iter().zip(mesh) {
        if !u.is_finite() {
            return Err(Error::Divergence {
                time: t,
                ratio: f64::INFINITY,
            });
        }
        let ratio = u.lp_norm(q)? / base;
        if base > 0.0 && ratio > BLOW_UP_FACTOR {
            return Err(Error::Divergence { time: t, ratio });
        }
    }
    Ok(())
}

fn iterate(setup: &Setup, u0: &VectorField, opts: &KatoOptions) -> Result<(Vec<VectorField>, IterationReport)> {
    let d = u0.dim();
    let alpha = opts.alpha(d);
    let base = u0.lp_norm(opts.q)?;
    let mut current = setup.linear.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut rising = 0;
    for iteration in 1..=opts.max_iter {
        let next = setup.step(&current, opts)?;
        guard(&next, &setup.mesh, opts.q, base)?;
        let scale = weighted_norm(&next, &setup.mesh, opts.p, opts.q, alpha)?;
        let raw = weighted_distance(&next, &current, &setup.mesh, opts.p, opts.q, alpha)?;
        let distance = if scale > 0.0 { raw / scale } else { 0.0 };
        let contraction = records
            .last()
            .filter(|r| r.distance > 0.0)
            .map(|r| distance / r.distance);
        records.push(IterationRecord {
            iteration,
            distance,
            contraction,
        });
        current = next;
        if distance < opts.tol {
            let defect = {
                let again = setup.step(&current, opts)?;
                let raw = weighted_distance(&again, &current, &setup.mesh, opts.p, opts.q, alpha)?;
                if scale > 0.0 {
                    raw / scale
                } else {
                    0.0
                }
            };
            let contraction_factor = records.iter().rev().find_map(|r| r.contraction);
            let report = IterationReport {
                iterations: records,
                contraction_factor,
                fixed_point_defect: defect,
                refinement_changes: Vec::new(),
                mesh_size: setup.mesh.len(),
                truncation_defect: current.iter().map(|u| u.truncation_defect()).fold(0.0, f64::max),
                profile: Vec::new(),
            };
            return Ok((current, report));
        }
        rising = match contraction {
            Some(c) if c >= 1.0 => rising + 1,
            _ => 0,
        };
        if rising >= 3 {
            return Err(Error::NonContraction {
                iterations: iteration,
                factor: contraction.unwrap_or(f64::NAN),
            });
        }
    }
    Err(Error::NonContraction {
        iterations: opts.max_iter,
        factor: records.last().and_then(|r| r.contraction).unwrap_or(f64::NAN),
    })
}

/// Picard iteration to a fixed point on a graded mesh, with optional mesh
/// doubling until the solution settles.
pub fn solve_mild(
    m: &MatrixSignal,
    f: &VectorSignal,
    u0: &VectorField,
    opts: &KatoOptions,
) -> Result<(MildSolution, IterationReport)> {
    let d = u0.dim();
    opts.validate(d)?;
    if m.dim() != d || f.dim() != d {
        return Err(Error::InvalidArgument("signal and field dimensions differ".into()));
    }
    let div = field_grid::divergence(u0).max_abs();
    if div > 1e-8 * u0.max_norm().max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidArgument(format!("initial field is not divergence free (|div| = {div:e})")));
    }
    let mut head = opts.head_points;
    let mut tail = opts.tail_steps;
    let setup = Setup::new(m, f, u0, graded_mesh(opts.horizon, head, tail), opts)?;
    let (mut fields, mut report) = iterate(&setup, u0, opts)?;
    let mut mesh = setup.mesh;
    let mut changes = Vec::new();
    for _ in 0..opts.max_refinements {
        head *= 2;
        tail *= 2;
        let fine = Setup::new(m, f, u0, graded_mesh(opts.horizon, head, tail), opts)?;
        let (fine_fields, fine_report) = iterate(&fine, u0, opts)?;
        // coarse node k is fine node 2k in both the head and the tail
        let mut change: f64 = 0.0;
        for (k, u) in fields.iter().enumerate() {
            let fine_k = 2 * k;
            let scale = fine_fields[fine_k].lp_norm(opts.p)?;
            if scale > 0.0 {
                change = change.max(u.sub(&fine_fields[fine_k]).lp_norm(opts.p)? / scale);
            }
        }
        changes.push(change);
        fields = fine_fields;
        report = fine_report;
        mesh = fine.mesh;
        if change < opts.refine_tol {
            break;
        }
    }
    report.refinement_changes = changes;
    let solution = MildSolution {
        mesh,
        fields,
        p: opts.p,
        q: opts.q,
    };
    report.profile = weighted_norm_profile(&solution)?;
    Ok((solution, report))
}

/// `(t, t^α ‖u(t)‖_q, t^{1/2} ‖∇u(t)‖_p)` on the mesh.
pub fn weighted_norm_profile(sol: &MildSolution) -> Result<Vec<ProfileRow>> {
    let d = sol.fields.first().map(|u| u.dim()).unwrap_or(2);
    let alpha = 0.5 * d as f64 * (1.0 / sol.p - 1.0 / sol.q);
    sol.mesh
        .iter()
        .zip(&sol.fields)
        .map(|(&t, u)| {
            let (_, k_q, g) = weighted_terms(u, t, sol.p, sol.q, alpha)?;
            Ok(ProfileRow { t, k_q, g })
        })
        .collect()
}

impl MildSolution {
    /// Field at mesh time `t`, if `t` is a mesh node.
    pub fn at(&self, t: f64) -> Option<&VectorField> {
        self.mesh
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .map(|k| &self.fields[k])
    }

    pub fn write_profile_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,k_q,g")?;
        for row in weighted_norm_profile(self)? {
            writeln!(w, "{:e},{:e},{:e}", row.t, row.k_q, row.g)?;
        }
        Ok(())
    }

    /// One binary field file per mesh node, `u_0000.bin`, `u_0001.bin`, ...
    pub fn export_fields(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (k, u) in self.fields.iter().enumerate() {
            let file = std::fs::File::create(dir.join(format!("u_{k:04}.bin")))?;
            u.write_binary(std::io::BufWriter::new(file))?;
        }
        Ok(())
    }
}
