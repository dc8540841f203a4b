use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_grid::{Grid, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Sin,
    Cos,
}

impl Trig {
    fn eval(self, theta: f64) -> f64 {
        match self {
            Trig::Sin => theta.sin(),
            Trig::Cos => theta.cos(),
        }
    }

    fn derivative(self, theta: f64) -> f64 {
        match self {
            Trig::Sin => theta.cos(),
            Trig::Cos => -theta.sin(),
        }
    }
}

/// `x ↦ a trig(<ξ, x>)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneWave {
    pub amplitude: Vec<f64>,
    pub wavevector: Vec<f64>,
    pub trig: Trig,
}

impl PlaneWave {
    pub fn new(amplitude: Vec<f64>, wavevector: Vec<f64>, trig: Trig) -> Result<Self> {
        if amplitude.len() != wavevector.len() || !(2..=3).contains(&amplitude.len()) {
            return Err(Error::InvalidArgument("plane wave needs matching 2- or 3-vectors".into()));
        }
        if amplitude.iter().chain(&wavevector).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("plane wave has non-finite entries".into()));
        }
        Ok(PlaneWave {
            amplitude,
            wavevector,
            trig,
        })
    }

    /// Wavevector `π m / L` on the lattice of `grid`.
    pub fn on_lattice(grid: &Grid, amplitude: Vec<f64>, modes: &[i64], trig: Trig) -> Result<Self> {
        let k = std::f64::consts::PI / grid.half_width();
        Self::new(amplitude, modes.iter().map(|&m| k * m as f64).collect(), trig)
    }

    pub fn dim(&self) -> usize {
        self.amplitude.len()
    }

    /// `|<a, ξ>|`, zero for divergence-free waves.
    pub fn divergence_defect(&self) -> f64 {
        self.amplitude.iter().zip(&self.wavevector).map(|(a, x)| a * x).sum::<f64>().abs()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let theta: f64 = self.wavevector.iter().zip(x).map(|(k, x)| k * x).sum();
        let v = self.trig.eval(theta);
        self.amplitude.iter().map(|a| a * v).collect()
    }

    pub fn sample(&self, grid: &Grid) -> VectorField {
        VectorField::from_fn(grid, |x, o| o.copy_from_slice(&self.eval(x)))
            .with_solenoidal(self.divergence_defect() == 0.0)
    }
}

/// Exact image `x ↦ b trig(<η, x> + θ0)` of a plane wave, with
/// `b = e^{-<Qξ,ξ>} U(t,s) a`, `η = U(s,t)^T ξ`, `θ0 = <ξ, g>`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneWaveImage {
    pub amplitude: DVector<f64>,
    pub wavevector: DVector<f64>,
    pub phase: f64,
    pub trig: Trig,
}

impl PlaneWaveImage {
    pub(crate) fn build(
        w: &PlaneWave,
        forward: &DMatrix<f64>,
        backward: &DMatrix<f64>,
        offset: &DVector<f64>,
        decay: f64,
    ) -> Self {
        let a = DVector::from_column_slice(&w.amplitude);
        let xi = DVector::from_column_slice(&w.wavevector);
        PlaneWaveImage {
            amplitude: forward * a * decay,
            wavevector: backward.transpose() * &xi,
            phase: xi.dot(offset),
            trig: w.trig,
        }
    }

    fn angle(&self, x: &[f64]) -> f64 {
        self.phase + self.wavevector.iter().zip(x).map(|(k, x)| k * x).sum::<f64>()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let v = self.trig.eval(self.angle(x));
        self.amplitude.iter().map(|b| b * v).collect()
    }

    /// `∂_j u_i` at `x`.
    pub fn gradient(&self, x: &[f64]) -> DMatrix<f64> {
        &self.amplitude * self.wavevector.transpose() * self.trig.derivative(self.angle(x))
    }

    pub fn sample(&self, grid: &Grid) -> VectorField {
        VectorField::from_fn(grid, |x, o| o.copy_from_slice(&self.eval(x)))
    }
}
