//! JSON run configuration shared by the experiments and the command line.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::evolution_op::{ApplyOptions, Domain};
use crate::field_grid::{Grid, VectorField, TRUNCATION_THRESHOLD};
use crate::kato_solver::KatoOptions;
use crate::matrix_flow::{MatrixSignal, VectorSignal};

/// An `L^p` exponent; `"inf"` in JSON stands for `∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Exponent;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number > 1 or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Exponent, E> {
                Ok(Exponent(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Exponent, E> {
                Ok(Exponent(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Exponent, E> {
                Ok(Exponent(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Exponent, E> {
                match v {
                    "inf" | "infinity" | "∞" => Ok(Exponent(f64::INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "N")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TimesConfig {
    #[serde(default)]
    pub s: f64,
    pub t: Option<f64>,
    pub t_list: Option<Vec<f64>>,
    #[serde(rename = "T0")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub p: Exponent,
    pub q: Exponent,
}

impl Default for Exponents {
    fn default() -> Self {
        Exponents {
            p: Exponent(2.0),
            q: Exponent(4.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Propagator and quadrature accuracy.
    pub propagator: f64,
    pub truncation: f64,
    /// Identity checks on `U` (cocycle, inverse, Abel, orthogonality).
    pub identities: f64,
    pub evolution_law: f64,
    /// Relative bound on `max |div T φ|`.
    pub divergence: f64,
    pub kato: f64,
    /// Band `[1/r, r]` for the scaled Gram quantities.
    pub gram_band: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            propagator: 1e-10,
            truncation: TRUNCATION_THRESHOLD,
            identities: 1e-8,
            evolution_law: 1e-6,
            divergence: 1e-6,
            kato: 1e-6,
            gram_band: 10.0,
        }
    }
}

/// Initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// `amplitude · ∇^⊥ exp(-|x|^2 / (2 variance))` (third component zero in 3D).
    Vortex {
        variance: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `amplitude · ∇^⊥ (x_1 exp(-|x|^2 / (2 variance)))`.
    Dipole {
        variance: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// A vortex whose variance is `ratio · (t - s)` for each gap of a decay study.
    ScaleMatched {
        #[serde(default = "one")]
        ratio: f64,
    },
    /// Binary field file.
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Vortex {
            variance: 1.0,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dimension: usize,
    #[serde(rename = "box")]
    pub grid: BoxConfig,
    #[serde(rename = "signal_M")]
    pub signal_m: MatrixSignal,
    pub signal_f: Option<VectorSignal>,
    #[serde(default)]
    pub times: TimesConfig,
    #[serde(default)]
    pub exponents: Exponents,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Mild-solution solver settings; exponents, horizon and tolerance come
/// from the main sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub head_points: usize,
    pub tail_steps: usize,
    pub max_refinements: usize,
    pub refine_tol: f64,
    pub iterate_truncation: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let k = KatoOptions::default();
        SolverConfig {
            max_iter: k.max_iter,
            head_points: k.head_points,
            tail_steps: k.tail_steps,
            max_refinements: 1,
            refine_tol: k.refine_tol,
            iterate_truncation: k.iterate_truncation,
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// `∇^⊥ ψ` with `ψ = amp · exp(-|x|^2/(2v))`, written as `(-∂_2 ψ, ∂_1 ψ[, 0])`.
pub fn gaussian_vortex(grid: &Grid, variance: f64, amplitude: f64) -> VectorField {
    VectorField::from_fn(grid, |x, o| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let psi = amplitude * (-r2 / (2.0 * variance)).exp();
        o[0] = x[1] / variance * psi;
        o[1] = -x[0] / variance * psi;
        if o.len() == 3 {
            o[2] = 0.0;
        }
    })
    .with_solenoidal(true)
}

/// `∇^⊥ ψ` with `ψ = amp · x_1 exp(-|x|^2/(2v))`.
pub fn gaussian_dipole(grid: &Grid, variance: f64, amplitude: f64) -> VectorField {
    VectorField::from_fn(grid, |x, o| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let e = amplitude * (-r2 / (2.0 * variance)).exp();
        o[0] = x[0] * x[1] / variance * e;
        o[1] = (1.0 - x[0] * x[0] / variance) * e;
        if o.len() == 3 {
            o[2] = 0.0;
        }
    })
    .with_solenoidal(true)
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if !(2..=3).contains(&self.dimension) {
            return bad("dimension", format!("must be 2 or 3, got {}", self.dimension));
        }
        if self.signal_m.dim() != self.dimension {
            return bad("signal_M", format!("is {}-dimensional", self.signal_m.dim()));
        }
        if let Some(f) = &self.signal_f {
            if f.dim() != self.dimension {
                return bad("signal_f", format!("is {}-dimensional", f.dim()));
            }
        }
        if let Err(e) = Grid::new(self.dimension, self.grid.half_width, self.grid.points) {
            return bad("box", e.to_string());
        }
        if !self.times.s.is_finite() {
            return bad("times.s", "must be finite".into());
        }
        if let Some(t) = self.times.t {
            if !(t >= self.times.s) {
                return bad("times.t", format!("must be >= s = {}", self.times.s));
            }
        }
        if let Some(list) = &self.times.t_list {
            if list.is_empty() || list.iter().any(|&t| !(t > self.times.s && t.is_finite())) {
                return bad("times.t_list", "entries must be finite and > s".into());
            }
        }
        if let Some(t0) = self.times.horizon {
            if !(t0 > 0.0 && t0.is_finite()) {
                return bad("times.T0", "must be positive".into());
            }
        }
        for (name, e) in [("exponents.p", self.exponents.p), ("exponents.q", self.exponents.q)] {
            if !(e.0 > 1.0) {
                return bad(name, format!("must lie in (1, ∞], got {}", e.0));
            }
        }
        if self.exponents.q.0 < self.exponents.p.0 {
            return bad("exponents", "need p <= q".into());
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.propagator", t.propagator),
            ("tolerances.truncation", t.truncation),
            ("tolerances.identities", t.identities),
            ("tolerances.evolution_law", t.evolution_law),
            ("tolerances.divergence", t.divergence),
            ("tolerances.kato", t.kato),
        ] {
            if !(v > 0.0) {
                return bad(name, format!("must be positive, got {v}"));
            }
        }
        if !(t.gram_band > 1.0) {
            return bad("tolerances.gram_band", "must exceed 1".into());
        }
        match &self.data {
            DataConfig::Vortex { variance, amplitude } | DataConfig::Dipole { variance, amplitude } => {
                if !(*variance > 0.0 && amplitude.is_finite()) {
                    return bad("data", "variance must be positive and amplitude finite".into());
                }
            }
            DataConfig::ScaleMatched { ratio } => {
                if !(*ratio > 0.0) {
                    return bad("data.ratio", "must be positive".into());
                }
            }
            DataConfig::File { .. } => {}
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dimension, self.grid.half_width, self.grid.points)
    }

    pub fn drift(&self) -> VectorSignal {
        self.signal_f.clone().unwrap_or_else(|| VectorSignal::zero(self.dimension))
    }

    pub fn apply_options(&self) -> ApplyOptions {
        ApplyOptions {
            tol: self.tolerances.propagator,
            domain: self.domain,
            truncation_threshold: self.tolerances.truncation,
        }
    }

    pub fn kato_options(&self) -> Result<KatoOptions> {
        let horizon = self
            .times
            .horizon
            .ok_or_else(|| Error::Config("times.T0: required by the solver".into()))?;
        let s = &self.solver;
        Ok(KatoOptions {
            p: self.exponents.p.0,
            q: self.exponents.q.0,
            horizon,
            tol: self.tolerances.kato,
            max_iter: s.max_iter,
            head_points: s.head_points,
            tail_steps: s.tail_steps,
            max_refinements: s.max_refinements,
            refine_tol: s.refine_tol,
            iterate_truncation: s.iterate_truncation,
            nonlinear: true,
            apply: self.apply_options(),
        })
    }

    /// Initial field; scale-matched data use variance `ratio` (unit gap).
    pub fn initial_field(&self) -> Result<VectorField> {
        let grid = self.grid()?;
        match &self.data {
            DataConfig::Vortex { variance, amplitude } => Ok(gaussian_vortex(&grid, *variance, *amplitude)),
            DataConfig::Dipole { variance, amplitude } => Ok(gaussian_dipole(&grid, *variance, *amplitude)),
            DataConfig::ScaleMatched { ratio } => Ok(gaussian_vortex(&grid, *ratio, 1.0)),
            DataConfig::File { path } => {
                let file = std::fs::File::open(path)?;
                let field = VectorField::read_binary(std::io::BufReader::new(file))?;
                if field.grid != grid {
                    return Err(Error::Config("data file grid does not match box".into()));
                }
                Ok(field)
            }
        }
    }
}
