//! Oversampled-grid evaluation with tensor Lagrange interpolation.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use super::{outside, pullback, ApplyOptions};
use crate::field_grid::{Grid, VectorField};
use crate::gaussian_kernel::KernelParams;

const OVERSAMPLE: usize = 2;

#[derive(Debug, Clone, Serialize)]
pub struct FastImage {
    #[serde(skip)]
    pub field: VectorField,
    /// Max pointwise difference between 6- and 4-point interpolation.
    pub error_estimate: f64,
}

fn lagrange_weights(mu: f64, points: usize, out: &mut [f64]) {
    let lo = -(points as i64 / 2 - 1);
    for (i, w) in out.iter_mut().enumerate().take(points) {
        let oi = (lo + i as i64) as f64;
        let mut acc = 1.0;
        for j in 0..points {
            if j != i {
                let oj = (lo + j as i64) as f64;
                acc *= (mu - oj) / (oi - oj);
            }
        }
        *w = acc;
    }
}

fn interpolate(fine: &Grid, values: &[Vec<f64>], z: &[f64], points: usize) -> [f64; 3] {
    let d = fine.dim();
    let n = fine.points_per_axis() as i64;
    let h = fine.spacing();
    let lo = -(points as i64 / 2 - 1);
    let mut base = [0i64; 3];
    let mut weights = [[0.0; 6]; 3];
    for a in 0..d {
        let zeta = (z[a] + fine.half_width()) / h;
        let i0 = zeta.floor();
        base[a] = i0 as i64;
        lagrange_weights(zeta - i0, points, &mut weights[a]);
    }
    let mut out = [0.0; 3];
    let combos = points.pow(d as u32);
    for c in 0..combos {
        let mut rem = c;
        let mut flat = 0usize;
        let mut w = 1.0;
        for a in 0..d {
            let o = rem % points;
            rem /= points;
            let idx = (base[a] + lo + o as i64).rem_euclid(n) as usize;
            flat = flat * n as usize + idx;
            w *= weights[a][o];
        }
        for (comp, v) in values.iter().enumerate() {
            out[comp] += w * v[flat];
        }
    }
    out
}

pub(crate) fn apply(params: &KernelParams, phi: &VectorField, opts: &ApplyOptions) -> FastImage {
    let grid = &phi.grid;
    let d = grid.dim();
    let n = grid.points_per_axis();
    let fine = Grid::new(d, grid.half_width(), OVERSAMPLE * n).expect("coarse grid was valid");
    let fine_n = fine.points_per_axis() as i64;
    let gain = (OVERSAMPLE as f64).powi(d as i32);
    let values: Vec<Vec<f64>> = phi
        .spectra()
        .into_iter()
        .map(|spec| {
            let mut padded = vec![Complex64::default(); fine.len()];
            for (k, c) in spec.iter().enumerate() {
                let idx = grid.indices(k);
                if (0..d).any(|a| grid.is_nyquist(idx[a])) {
                    continue;
                }
                let mut flat = 0usize;
                for a in 0..d {
                    flat = flat * fine_n as usize + grid.mode(idx[a]).rem_euclid(fine_n) as usize;
                }
                padded[flat] = c * params.multiplier(&grid.wavevector(k)[..d]) * gain;
            }
            fine.inverse(padded)
        })
        .collect();

    let results: Vec<([f64; 3], f64)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.node(k);
            let z = pullback(params, &x, d);
            if outside(&z[..d], grid.half_width(), opts) {
                return ([0.0; 3], 0.0);
            }
            let hi = interpolate(&fine, &values, &z[..d], 6);
            let lo = interpolate(&fine, &values, &z[..d], 4);
            let mut out = [0.0; 3];
            let mut diff2 = 0.0;
            for i in 0..d {
                out[i] = (0..d).map(|a| params.forward[(i, a)] * hi[a]).sum();
                let delta: f64 = (0..d).map(|a| params.forward[(i, a)] * (hi[a] - lo[a])).sum();
                diff2 += delta * delta;
            }
            (out, diff2.sqrt())
        })
        .collect();
    let error_estimate = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let components = (0..d).map(|c| results.iter().map(|r| r.0[c]).collect()).collect();
    FastImage {
        field: VectorField {
            grid: grid.clone(),
            components,
            solenoidal: phi.solenoidal,
            time: Some(params.t),
        },
        error_estimate,
    }
}
