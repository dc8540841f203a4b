//! Direct trigonometric summation of a smoothed band-limited field at
//! arbitrary points.

use std::collections::BTreeMap;

use rustfft::num_complex::Complex64;

use crate::field_grid::{Grid, VectorField};

/// Modes whose cumulative coefficient mass stays below this fraction of the
/// total are dropped.
const PRUNE_REL: f64 = 1e-15;

struct Row {
    prefix: [i64; 2],
    last: Vec<i64>,
    coefs: Vec<[Complex64; 3]>,
}

/// `w(z) = Re Σ_m c_m exp(iπ m·(z + L)/L)` over a Hermitian half of the modes.
pub(crate) struct BandLimited {
    dim: usize,
    kappa: f64,
    half_width: f64,
    max_mode: [usize; 3],
    rows: Vec<Row>,
}

/// Per-point phase tables, reused across points.
pub(crate) struct Tables {
    axes: [Vec<Complex64>; 3],
}

impl Tables {
    pub fn for_band(band: &BandLimited) -> Self {
        Tables {
            axes: [0, 1, 2].map(|a| vec![Complex64::default(); 2 * band.max_mode[a] + 1]),
        }
    }
}

impl BandLimited {
    /// Coefficients of `field` with every mode scaled by `weight(ξ)`.
    /// Nyquist modes are dropped.
    pub fn new(field: &VectorField, weight: impl Fn(&[f64]) -> f64) -> Self {
        let grid: &Grid = &field.grid;
        let d = grid.dim();
        let spectra = field.spectra();
        let norm = 1.0 / grid.len() as f64;
        let mut modes: Vec<([i64; 3], [Complex64; 3], f64)> = Vec::new();
        for k in 0..grid.len() {
            let idx = grid.indices(k);
            if (0..d).any(|a| grid.is_nyquist(idx[a])) {
                continue;
            }
            let m_last = grid.mode(idx[d - 1]);
            if m_last < 0 {
                continue;
            }
            let xi = grid.wavevector(k);
            let scale = weight(&xi[..d]) * norm * if m_last > 0 { 2.0 } else { 1.0 };
            let mut coef = [Complex64::default(); 3];
            for (c, s) in coef.iter_mut().zip(&spectra) {
                *c = s[k] * scale;
            }
            let mass: f64 = coef.iter().map(|c| c.norm()).sum();
            if mass == 0.0 {
                continue;
            }
            let mut m = [0i64; 3];
            for a in 0..d {
                m[a] = grid.mode(idx[a]);
            }
            modes.push((m, coef, mass));
        }

        let total: f64 = modes.iter().map(|x| x.2).sum();
        let mut order: Vec<usize> = (0..modes.len()).collect();
        order.sort_by(|&i, &j| modes[i].2.total_cmp(&modes[j].2).then(i.cmp(&j)));
        let mut keep = vec![true; modes.len()];
        let mut dropped = 0.0;
        for &i in &order {
            dropped += modes[i].2;
            if dropped > PRUNE_REL * total {
                break;
            }
            keep[i] = false;
        }

        let mut max_mode = [0usize; 3];
        let mut grouped: BTreeMap<[i64; 2], Row> = BTreeMap::new();
        for (i, (m, coef, _)) in modes.into_iter().enumerate() {
            if !keep[i] {
                continue;
            }
            for a in 0..d {
                max_mode[a] = max_mode[a].max(m[a].unsigned_abs() as usize);
            }
            let mut prefix = [0i64; 2];
            prefix[..d - 1].copy_from_slice(&m[..d - 1]);
            let row = grouped.entry(prefix).or_insert_with(|| Row {
                prefix,
                last: Vec::new(),
                coefs: Vec::new(),
            });
            row.last.push(m[d - 1]);
            row.coefs.push(coef);
        }
        BandLimited {
            dim: d,
            kappa: std::f64::consts::PI / grid.half_width(),
            half_width: grid.half_width(),
            max_mode,
            rows: grouped.into_values().collect(),
        }
    }

    #[cfg(test)]
    pub fn mode_count(&self) -> usize {
        self.rows.iter().map(|r| r.last.len()).sum()
    }

    fn fill_tables(&self, z: &[f64], tables: &mut Tables) {
        for a in 0..self.dim {
            let mm = self.max_mode[a];
            let base = Complex64::from_polar(1.0, self.kappa * (z[a] + self.half_width));
            let tab = &mut tables.axes[a];
            tab[mm] = Complex64::new(1.0, 0.0);
            let mut p = Complex64::new(1.0, 0.0);
            for m in 1..=mm {
                // exact angle every 16 steps keeps the recurrence drift negligible
                p = if m % 16 == 0 {
                    Complex64::from_polar(1.0, m as f64 * self.kappa * (z[a] + self.half_width))
                } else {
                    p * base
                };
                tab[mm + m] = p;
                tab[mm - m] = p.conj();
            }
        }
    }

    /// Values `w_c(z)` and, if requested, `∂_b w_c(z)` stored at `grad[c][b]`.
    pub fn eval(&self, z: &[f64], tables: &mut Tables, grad: Option<&mut [[f64; 3]; 3]>) -> [f64; 3] {
        let d = self.dim;
        self.fill_tables(z, tables);
        let last_axis = d - 1;
        let ml = self.max_mode[last_axis] as i64;
        let mut val = [0.0; 3];
        let mut g = [[0.0; 3]; 3];
        let want_grad = grad.is_some();
        for row in &self.rows {
            let mut p = Complex64::new(1.0, 0.0);
            for a in 0..last_axis {
                p *= tables.axes[a][(row.prefix[a] + self.max_mode[a] as i64) as usize];
            }
            let tab = &tables.axes[last_axis];
            let mut s = [Complex64::default(); 3];
            let mut dl = [Complex64::default(); 3];
            for (m, coef) in row.last.iter().zip(&row.coefs) {
                let e = tab[(m + ml) as usize];
                for c in 0..d {
                    let term = coef[c] * e;
                    s[c] += term;
                    if want_grad {
                        dl[c] += term * (*m as f64);
                    }
                }
            }
            for c in 0..d {
                let ps = p * s[c];
                val[c] += ps.re;
                if want_grad {
                    for a in 0..last_axis {
                        g[c][a] -= self.kappa * row.prefix[a] as f64 * ps.im;
                    }
                    g[c][last_axis] -= self.kappa * (p * dl[c]).im;
                }
            }
        }
        if let Some(out) = grad {
            *out = g;
        }
        val
    }
}
