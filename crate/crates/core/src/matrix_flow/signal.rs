//! Time-dependent coefficients: the rotation generator `M(t)` and the outflow `f(t)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spline::{Interpolant, InterpolationOrder};
use crate::error::{Error, Result};

/// Threshold for the skew-symmetry predicate `|M + M^T|_inf < SKEW_EPS`.
pub const SKEW_EPS: f64 = 1e-12;

/// Scalar function of time used for angular speeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScalarFn {
    Constant {
        value: f64,
    },
    /// `mean + amplitude * sin(frequency * t + phase)`
    Sinusoid {
        mean: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `sum_k coeffs[k] * t^k`
    Polynomial {
        coeffs: Vec<f64>,
    },
}

impl ScalarFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ScalarFn::Constant { value } => *value,
            ScalarFn::Sinusoid {
                mean,
                amplitude,
                frequency,
                phase,
            } => mean + amplitude * (frequency * t + phase).sin(),
            ScalarFn::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
        }
    }
}

/// Rotation axis in three dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AxisFn {
    Fixed { axis: [f64; 3] },
    /// Axis tilted by `tilt` from `e3`, precessing about `e3` at angular rate `rate`.
    Precessing { tilt: f64, rate: f64 },
}

impl AxisFn {
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let a = match self {
            AxisFn::Fixed { axis } => *axis,
            AxisFn::Precessing { tilt, rate } => [
                tilt.sin() * (rate * t).cos(),
                tilt.sin() * (rate * t).sin(),
                tilt.cos(),
            ],
        };
        let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        [a[0] / n, a[1] / n, a[2] / n]
    }
}

/// Serialized form of [`MatrixSignal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MatrixSignalSpec {
    Zero {
        dimension: usize,
    },
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    /// `speed(t) * [[0, -1], [1, 0]]`
    Rotation2d {
        speed: ScalarFn,
    },
    /// `speed(t) * [axis(t)]_x`, i.e. `M(t) x = speed(t) axis(t) × x`.
    Rotation3d {
        axis: AxisFn,
        speed: ScalarFn,
    },
    Sampled {
        times: Vec<f64>,
        matrices: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        order: InterpolationOrder,
    },
}

#[derive(Debug, Clone)]
enum MatrixKind {
    Constant(DMatrix<f64>),
    Rotation2d(ScalarFn),
    Rotation3d { axis: AxisFn, speed: ScalarFn },
    Sampled(Interpolant),
}

/// The generator `M(t)` of the matrix evolution system.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MatrixSignalSpec", into = "MatrixSignalSpec")]
pub struct MatrixSignal {
    dim: usize,
    kind: MatrixKind,
    skew: bool,
    spec: MatrixSignalSpec,
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if !(2..=3).contains(&d) || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument(format!(
            "expected a square 2x2 or 3x3 matrix, got {} rows",
            d
        )));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn is_skew(m: &DMatrix<f64>) -> bool {
    let s = m + m.transpose();
    s.iter().all(|v| v.abs() < SKEW_EPS)
}

impl TryFrom<MatrixSignalSpec> for MatrixSignal {
    type Error = Error;

    fn try_from(spec: MatrixSignalSpec) -> Result<Self> {
        let (dim, kind, skew) = match &spec {
            MatrixSignalSpec::Zero { dimension } => {
                if !(2..=3).contains(dimension) {
                    return Err(Error::InvalidArgument(format!(
                        "dimension must be 2 or 3, got {dimension}"
                    )));
                }
                let d = *dimension;
                (d, MatrixKind::Constant(DMatrix::zeros(d, d)), true)
            }
            MatrixSignalSpec::Constant { matrix } => {
                let m = rows_to_matrix(matrix)?;
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite matrix entry".into()));
                }
                let skew = is_skew(&m);
                (m.nrows(), MatrixKind::Constant(m), skew)
            }
            MatrixSignalSpec::Rotation2d { speed } => (2, MatrixKind::Rotation2d(speed.clone()), true),
            MatrixSignalSpec::Rotation3d { axis, speed } => (
                3,
                MatrixKind::Rotation3d {
                    axis: axis.clone(),
                    speed: speed.clone(),
                },
                true,
            ),
            MatrixSignalSpec::Sampled {
                times,
                matrices,
                order,
            } => {
                let mats = matrices
                    .iter()
                    .map(|m| rows_to_matrix(m))
                    .collect::<Result<Vec<_>>>()?;
                let d = mats.first().map(|m| m.nrows()).unwrap_or(0);
                if mats.iter().any(|m| m.nrows() != d) {
                    return Err(Error::InvalidArgument("sampled matrices differ in size".into()));
                }
                // interpolation is linear in the samples, so skew samples give a skew signal
                let skew = mats.iter().all(is_skew);
                let values = mats
                    .iter()
                    .map(|m| m.iter().copied().collect::<Vec<_>>())
                    .collect();
                let interp = Interpolant::new(times.clone(), values, *order)?;
                (d, MatrixKind::Sampled(interp), skew)
            }
        };
        Ok(MatrixSignal {
            dim,
            kind,
            skew,
            spec,
        })
    }
}

impl From<MatrixSignal> for MatrixSignalSpec {
    fn from(m: MatrixSignal) -> Self {
        m.spec
    }
}

impl MatrixSignal {
    pub fn zero(dim: usize) -> Self {
        MatrixSignalSpec::Zero { dimension: dim }
            .try_into()
            .expect("dimension 2 or 3")
    }

    pub fn constant(m: DMatrix<f64>) -> Result<Self> {
        let rows = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        MatrixSignalSpec::Constant { matrix: rows }.try_into()
    }

    pub fn rotation2d(speed: ScalarFn) -> Self {
        MatrixSignalSpec::Rotation2d { speed }.try_into().unwrap()
    }

    pub fn rotation3d(axis: AxisFn, speed: ScalarFn) -> Self {
        MatrixSignalSpec::Rotation3d { axis, speed }.try_into().unwrap()
    }

    pub fn sampled(times: Vec<f64>, matrices: &[DMatrix<f64>], order: InterpolationOrder) -> Result<Self> {
        let matrices = matrices
            .iter()
            .map(|m| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
            .collect();
        MatrixSignalSpec::Sampled {
            times,
            matrices,
            order,
        }
        .try_into()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether `M(t)` is skew-symmetric for every `t`; then `U(t,s)` is orthogonal.
    pub fn is_skew(&self) -> bool {
        self.skew
    }

    pub fn spec(&self) -> &MatrixSignalSpec {
        &self.spec
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        match &self.kind {
            MatrixKind::Constant(m) => m.clone(),
            MatrixKind::Rotation2d(speed) => {
                let w = speed.eval(t);
                DMatrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0])
            }
            MatrixKind::Rotation3d { axis, speed } => {
                let w = speed.eval(t);
                let [a1, a2, a3] = axis.eval(t);
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[
                        0.0,
                        -w * a3,
                        w * a2,
                        w * a3,
                        0.0,
                        -w * a1,
                        -w * a2,
                        w * a1,
                        0.0,
                    ],
                )
            }
            MatrixKind::Sampled(interp) => {
                let mut buf = vec![0.0; self.dim * self.dim];
                interp.eval_into(t, &mut buf);
                DMatrix::from_column_slice(self.dim, self.dim, &buf)
            }
        }
    }

    pub fn try_eval(&self, t: f64) -> Result<DMatrix<f64>> {
        let m = self.eval(t);
        if m.iter().all(|v| v.is_finite()) {
            Ok(m)
        } else {
            Err(Error::CoefficientEvaluation { time: t })
        }
    }

    pub fn trace(&self, t: f64) -> f64 {
        self.eval(t).trace()
    }
}

/// Serialized form of [`VectorSignal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VectorSignalSpec {
    Zero {
        dimension: usize,
    },
    Constant {
        value: Vec<f64>,
    },
    /// `amplitude * sin(frequency * t + phase)`
    Sinusoidal {
        amplitude: Vec<f64>,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Sampled {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        #[serde(default)]
        order: InterpolationOrder,
    },
}

#[derive(Debug, Clone)]
enum VectorKind {
    Constant(Vec<f64>),
    Sinusoidal {
        amplitude: Vec<f64>,
        frequency: f64,
        phase: f64,
    },
    Sampled(Interpolant),
}

/// The outflow drift `f(t)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "VectorSignalSpec", into = "VectorSignalSpec")]
pub struct VectorSignal {
    dim: usize,
    kind: VectorKind,
    spec: VectorSignalSpec,
}

fn check_dim(d: usize) -> Result<usize> {
    if (2..=3).contains(&d) {
        Ok(d)
    } else {
        Err(Error::InvalidArgument(format!(
            "vector signals must have 2 or 3 components, got {d}"
        )))
    }
}

impl TryFrom<VectorSignalSpec> for VectorSignal {
    type Error = Error;

    fn try_from(spec: VectorSignalSpec) -> Result<Self> {
        let (dim, kind) = match &spec {
            VectorSignalSpec::Zero { dimension } => {
                (check_dim(*dimension)?, VectorKind::Constant(vec![0.0; *dimension]))
            }
            VectorSignalSpec::Constant { value } => {
                (check_dim(value.len())?, VectorKind::Constant(value.clone()))
            }
            VectorSignalSpec::Sinusoidal {
                amplitude,
                frequency,
                phase,
            } => (
                check_dim(amplitude.len())?,
                VectorKind::Sinusoidal {
                    amplitude: amplitude.clone(),
                    frequency: *frequency,
                    phase: *phase,
                },
            ),
            VectorSignalSpec::Sampled {
                times,
                values,
                order,
            } => {
                let interp = Interpolant::new(times.clone(), values.clone(), *order)?;
                (check_dim(interp.channels())?, VectorKind::Sampled(interp))
            }
        };
        Ok(VectorSignal { dim, kind, spec })
    }
}

impl From<VectorSignal> for VectorSignalSpec {
    fn from(v: VectorSignal) -> Self {
        v.spec
    }
}

impl VectorSignal {
    pub fn zero(dim: usize) -> Self {
        VectorSignalSpec::Zero { dimension: dim }
            .try_into()
            .expect("dimension 2 or 3")
    }

    pub fn constant(value: Vec<f64>) -> Result<Self> {
        VectorSignalSpec::Constant { value }.try_into()
    }

    pub fn sinusoidal(amplitude: Vec<f64>, frequency: f64) -> Result<Self> {
        VectorSignalSpec::Sinusoidal {
            amplitude,
            frequency,
            phase: 0.0,
        }
        .try_into()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &VectorSignalSpec {
        &self.spec
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            VectorKind::Constant(v) => v.iter().all(|x| *x == 0.0),
            VectorKind::Sinusoidal { amplitude, .. } => amplitude.iter().all(|x| *x == 0.0),
            VectorKind::Sampled(interp) => interp.samples().iter().flatten().all(|x| *x == 0.0),
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match &self.kind {
            VectorKind::Constant(v) => DVector::from_column_slice(v),
            VectorKind::Sinusoidal {
                amplitude,
                frequency,
                phase,
            } => {
                let s = (frequency * t + phase).sin();
                DVector::from_iterator(self.dim, amplitude.iter().map(|a| a * s))
            }
            VectorKind::Sampled(interp) => {
                let mut out = DVector::zeros(self.dim);
                interp.eval_into(t, out.as_mut_slice());
                out
            }
        }
    }

    pub fn try_eval(&self, t: f64) -> Result<DVector<f64>> {
        let v = self.eval(t);
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(Error::CoefficientEvaluation { time: t })
        }
    }
}
