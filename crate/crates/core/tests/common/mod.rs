//! Oracles shared by the integration tests. Nothing here calls the
//! library's spectral operators or evolution code.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Pass/fail line for the acceptance log.
pub fn report(id: &str, what: &str, pass: bool, detail: String) -> bool {
    println!("{} {id} {what}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

/// Periodic 2D pseudo-spectral toolkit on `[-L, L)^2`, row-major with the
/// second axis fastest (the layout of `VectorField`).
pub struct Spectral2 {
    pub n: usize,
    pub half_width: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral2 {
    pub fn new(n: usize, half_width: f64) -> Self {
        let mut planner = FftPlanner::new();
        Spectral2 {
            n,
            half_width,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + 2.0 * self.half_width * i as f64 / self.n as f64
    }

    fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Wavenumber, zero at Nyquist.
    pub fn k(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            PI * self.mode(i) as f64 / self.half_width
        }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        for row in data.chunks_mut(n) {
            plan.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    }

    pub fn forward(&self, a: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut c, &self.fwd);
        c
    }

    pub fn inverse(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut c, &self.inv);
        let scale = 1.0 / (self.n * self.n) as f64;
        c.iter().map(|v| v.re * scale).collect()
    }

    /// `∂_axis a`
    pub fn derivative(&self, a: &[f64], axis: usize) -> Vec<f64> {
        let n = self.n;
        let mut c = self.forward(a);
        for i in 0..n {
            for j in 0..n {
                let k = if axis == 0 { self.k(i) } else { self.k(j) };
                c[i * n + j] *= Complex64::new(0.0, k);
            }
        }
        self.inverse(c)
    }

    /// Leray projection of a two-component field.
    pub fn project(&self, u: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
        let n = self.n;
        let mut a = self.forward(&u[0]);
        let mut b = self.forward(&u[1]);
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let (k0, k1) = (self.k(i), self.k(j));
                let k2 = k0 * k0 + k1 * k1;
                if i == n / 2 || j == n / 2 {
                    a[idx] = Complex64::new(0.0, 0.0);
                    b[idx] = Complex64::new(0.0, 0.0);
                    continue;
                }
                if k2 == 0.0 {
                    continue;
                }
                let dot = (a[idx] * k0 + b[idx] * k1) / k2;
                a[idx] -= dot * k0;
                b[idx] -= dot * k1;
            }
        }
        [self.inverse(a), self.inverse(b)]
    }

    /// Drop modes above two thirds of the band.
    pub fn dealias(&self, a: &[f64]) -> Vec<f64> {
        let n = self.n;
        let cut = (n / 3) as i64;
        let mut c = self.forward(a);
        for i in 0..n {
            for j in 0..n {
                if self.mode(i).abs() > cut || self.mode(j).abs() > cut {
                    c[i * n + j] = Complex64::new(0.0, 0.0);
                }
            }
        }
        self.inverse(c)
    }

    /// Exact heat flow `exp(τΔ)`.
    pub fn heat(&self, a: &[f64], tau: f64) -> Vec<f64> {
        let n = self.n;
        let mut c = self.forward(a);
        for i in 0..n {
            for j in 0..n {
                let (k0, k1) = (self.k(i), self.k(j));
                c[i * n + j] *= (-(k0 * k0 + k1 * k1) * tau).exp();
            }
        }
        self.inverse(c)
    }
}

/// Strang splitting for
/// `u_t = Δu + (M(t)x + f(t))·∇u - M(t)u - P((u·∇)u)`:
/// exact heat half steps around an RK4 step of the rest.
pub struct SplittingStepper<'a> {
    pub sp: Spectral2,
    pub m: &'a dyn Fn(f64) -> [[f64; 2]; 2],
    pub f: &'a dyn Fn(f64) -> [f64; 2],
    pub nonlinear: bool,
}

impl SplittingStepper<'_> {
    fn rhs(&self, t: f64, u: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
        let sp = &self.sp;
        let n = sp.n;
        let m = (self.m)(t);
        let f = (self.f)(t);
        let grad: Vec<[Vec<f64>; 2]> = (0..2)
            .map(|i| [sp.derivative(&u[i], 0), sp.derivative(&u[i], 1)])
            .collect();
        let (ud, gd) = if self.nonlinear {
            let ud = [sp.dealias(&u[0]), sp.dealias(&u[1])];
            let gd: Vec<[Vec<f64>; 2]> = (0..2)
                .map(|i| [sp.derivative(&ud[i], 0), sp.derivative(&ud[i], 1)])
                .collect();
            (Some(ud), Some(gd))
        } else {
            (None, None)
        };
        let mut out = [vec![0.0; n * n], vec![0.0; n * n]];
        for a in 0..n {
            for b in 0..n {
                let k = a * n + b;
                let x = [sp.x(a), sp.x(b)];
                let drift = [
                    f[0] + m[0][0] * x[0] + m[0][1] * x[1],
                    f[1] + m[1][0] * x[0] + m[1][1] * x[1],
                ];
                for i in 0..2 {
                    let mut v = drift[0] * grad[i][0][k] + drift[1] * grad[i][1][k];
                    v -= m[i][0] * u[0][k] + m[i][1] * u[1][k];
                    if let (Some(ud), Some(gd)) = (&ud, &gd) {
                        v -= ud[0][k] * gd[i][0][k] + ud[1][k] * gd[i][1][k];
                    }
                    out[i][k] = v;
                }
            }
        }
        if self.nonlinear {
            out = [sp.dealias(&out[0]), sp.dealias(&out[1])];
        }
        sp.project(&out)
    }

    fn axpy(u: &[Vec<f64>; 2], h: f64, k: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
        let f = |i: usize| u[i].iter().zip(&k[i]).map(|(a, b)| a + h * b).collect();
        [f(0), f(1)]
    }

    pub fn step(&self, t: f64, dt: f64, u: [Vec<f64>; 2]) -> [Vec<f64>; 2] {
        let sp = &self.sp;
        let half = |u: &[Vec<f64>; 2]| [sp.heat(&u[0], 0.5 * dt), sp.heat(&u[1], 0.5 * dt)];
        let u = half(&u);
        let k1 = self.rhs(t, &u);
        let k2 = self.rhs(t + 0.5 * dt, &Self::axpy(&u, 0.5 * dt, &k1));
        let k3 = self.rhs(t + 0.5 * dt, &Self::axpy(&u, 0.5 * dt, &k2));
        let k4 = self.rhs(t + dt, &Self::axpy(&u, dt, &k3));
        let mut next = u;
        for i in 0..2 {
            for j in 0..next[i].len() {
                next[i][j] += dt / 6.0 * (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]);
            }
        }
        half(&next)
    }

    /// States at each requested time, stepping with `dt` from 0.
    pub fn run(&self, u0: [Vec<f64>; 2], dt: f64, stops: &[f64]) -> Vec<[Vec<f64>; 2]> {
        let mut u = u0;
        let mut t = 0.0;
        let mut out = Vec::new();
        for &stop in stops {
            let steps = ((stop - t) / dt).round() as usize;
            let h = (stop - t) / steps as f64;
            for _ in 0..steps {
                u = self.step(t, h, u);
                t += h;
            }
            t = stop;
            out.push(u.clone());
        }
        out
    }
}

/// `max |a - b| / max |b|` over two-component fields.
pub fn rel_sup(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for k in 0..a[0].len() {
        let d2: f64 = (0..a.len()).map(|i| (a[i][k] - b[i][k]).powi(2)).sum();
        let b2: f64 = (0..a.len()).map(|i| b[i][k].powi(2)).sum();
        num = num.max(d2.sqrt());
        den = den.max(b2.sqrt());
    }
    num / den
}

/// Composite Simpson rule.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}
