use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that can be integrated: `dx/dt = f(x)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], dx: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Lorenz63,
    Rossler,
    Lorenz96,
    ForcedFhn,
    HindmarshRose,
}

impl SystemKind {
    pub const ALL: [SystemKind; 5] = [
        SystemKind::Lorenz63,
        SystemKind::Rossler,
        SystemKind::Lorenz96,
        SystemKind::ForcedFhn,
        SystemKind::HindmarshRose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Lorenz63 => "lorenz63",
            SystemKind::Rossler => "rossler",
            SystemKind::Lorenz96 => "lorenz96",
            SystemKind::ForcedFhn => "forced_fhn",
            SystemKind::HindmarshRose => "hindmarsh_rose",
        }
    }

    fn param_names(self) -> &'static [&'static str] {
        match self {
            SystemKind::Lorenz63 => &["beta", "rho", "sigma"],
            SystemKind::Rossler => &["alpha", "beta", "gamma"],
            SystemKind::Lorenz96 => &["F"],
            SystemKind::ForcedFhn => &["a", "b", "f", "omega"],
            SystemKind::HindmarshRose => &["a", "b", "c", "d", "s", "tau_x", "tau_z"],
        }
    }

    fn default_params(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            SystemKind::Lorenz63 => &[("sigma", 10.0), ("rho", 28.0), ("beta", 8.0 / 3.0)],
            SystemKind::Rossler => &[("alpha", 0.2), ("beta", 0.2), ("gamma", 5.7)],
            SystemKind::Lorenz96 => &[("F", 20.0)],
            SystemKind::ForcedFhn => &[("a", 0.7), ("b", 0.8), ("f", 0.40), ("omega", 0.044)],
            SystemKind::HindmarshRose => &[
                ("a", 0.49),
                ("b", 1.0),
                ("c", 0.0322),
                ("d", 1.0),
                ("s", 1.0),
                ("tau_x", 0.03),
                ("tau_z", 0.8),
            ],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown system {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Field {
    Lorenz63 { sigma: f64, rho: f64, beta: f64 },
    Rossler { alpha: f64, beta: f64, gamma: f64 },
    Lorenz96 { forcing: f64 },
    ForcedFhn { a: f64, b: f64, f: f64, omega: f64 },
    HindmarshRose { a: f64, b: f64, c: f64, d: f64, s: f64, tau_x: f64, tau_z: f64 },
}

/// A named chaotic ODE with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OdeSystemSpec", into = "OdeSystemSpec")]
pub struct OdeSystem {
    kind: SystemKind,
    dim: usize,
    params: BTreeMap<String, f64>,
    field: Field,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OdeSystemSpec {
    name: SystemKind,
    dim: usize,
    params: BTreeMap<String, f64>,
}

impl TryFrom<OdeSystemSpec> for OdeSystem {
    type Error = Error;
    fn try_from(s: OdeSystemSpec) -> Result<Self> {
        OdeSystem::with_params(s.name, s.dim, s.params)
    }
}

impl From<OdeSystem> for OdeSystemSpec {
    fn from(s: OdeSystem) -> Self {
        OdeSystemSpec {
            name: s.kind,
            dim: s.dim,
            params: s.params,
        }
    }
}

impl OdeSystem {
    /// The system with its standard chaotic parameters.
    pub fn standard(kind: SystemKind) -> Self {
        let dim = if kind == SystemKind::Lorenz96 { 5 } else { 3 };
        Self::with_params(kind, dim, kind.default_params()).expect("default parameters are valid")
    }

    pub fn lorenz63() -> Self {
        Self::standard(SystemKind::Lorenz63)
    }

    pub fn rossler() -> Self {
        Self::standard(SystemKind::Rossler)
    }

    /// Lorenz96 on `n ≥ 4` sites with forcing `forcing`.
    pub fn lorenz96(n: usize, forcing: f64) -> Result<Self> {
        Self::with_params(
            SystemKind::Lorenz96,
            n,
            BTreeMap::from([("F".to_string(), forcing)]),
        )
    }

    /// Validates that `params` holds exactly the constants the vector field needs.
    pub fn with_params(kind: SystemKind, dim: usize, params: BTreeMap<String, f64>) -> Result<Self> {
        let expected = kind.param_names();
        let got: Vec<&str> = params.keys().map(String::as_str).collect();
        if got != expected {
            return Err(Error::Config(format!(
                "{kind} needs parameters {expected:?}, got {got:?}"
            )));
        }
        if let Some((k, v)) = params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("{kind} parameter {k} is not finite ({v})")));
        }
        match kind {
            SystemKind::Lorenz96 if dim < 4 => {
                return Err(Error::Config(format!("lorenz96 needs dim ≥ 4, got {dim}")));
            }
            SystemKind::Lorenz96 => {}
            _ if dim != 3 => {
                return Err(Error::Config(format!("{kind} is 3-dimensional, got dim {dim}")));
            }
            _ => {}
        }
        let p = |k: &str| params[k];
        let field = match kind {
            SystemKind::Lorenz63 => Field::Lorenz63 {
                sigma: p("sigma"),
                rho: p("rho"),
                beta: p("beta"),
            },
            SystemKind::Rossler => Field::Rossler {
                alpha: p("alpha"),
                beta: p("beta"),
                gamma: p("gamma"),
            },
            SystemKind::Lorenz96 => Field::Lorenz96 { forcing: p("F") },
            SystemKind::ForcedFhn => Field::ForcedFhn {
                a: p("a"),
                b: p("b"),
                f: p("f"),
                omega: p("omega"),
            },
            SystemKind::HindmarshRose => Field::HindmarshRose {
                a: p("a"),
                b: p("b"),
                c: p("c"),
                d: p("d"),
                s: p("s"),
                tau_x: p("tau_x"),
                tau_z: p("tau_z"),
            },
        };
        Ok(Self {
            kind,
            dim,
            params,
            field,
        })
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Integration step used for data generation.
    pub fn default_dt(&self) -> f64 {
        0.001
    }

    /// A starting point in the basin of the attractor.
    pub fn default_initial_state(&self) -> Vec<f64> {
        match self.kind {
            SystemKind::Lorenz63 => vec![1.0, 1.0, 1.0],
            SystemKind::Rossler => vec![1.0, 1.0, 0.0],
            SystemKind::Lorenz96 => {
                let f = self.params["F"];
                let mut x = vec![f; self.dim];
                x[0] += 0.01;
                x
            }
            SystemKind::ForcedFhn => vec![1.0, 1.0, 0.0],
            SystemKind::HindmarshRose => vec![-1.0, 0.0, 0.0],
        }
    }

    /// Box `(centre, half_width)` from which random initial conditions are drawn.
    pub fn initial_condition_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self.kind {
            SystemKind::Lorenz63 => (vec![0.0, 0.0, 25.0], vec![15.0, 20.0, 15.0]),
            SystemKind::Rossler => (vec![0.0, 0.0, 0.5], vec![6.0, 6.0, 0.5]),
            SystemKind::Lorenz96 => {
                let f = self.params["F"];
                (vec![f / 4.0; self.dim], vec![f / 2.0; self.dim])
            }
            SystemKind::ForcedFhn => (vec![1.0, 1.0, 0.0], vec![0.5, 0.5, 3.0]),
            SystemKind::HindmarshRose => (vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 0.1]),
        }
    }
}

impl VectorField for OdeSystem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) {
        match self.field {
            Field::Lorenz63 { sigma, rho, beta } => {
                dx[0] = sigma * (x[1] - x[0]);
                dx[1] = x[0] * (rho - x[2]) - x[1];
                dx[2] = x[0] * x[1] - beta * x[2];
            }
            Field::Rossler { alpha, beta, gamma } => {
                dx[0] = -(x[1] + x[2]);
                dx[1] = x[0] + alpha * x[1];
                dx[2] = beta + x[2] * (x[0] - gamma);
            }
            Field::Lorenz96 { forcing } => {
                let n = self.dim;
                for k in 0..n {
                    let next = x[(k + 1) % n];
                    let prev = x[(k + n - 1) % n];
                    let prev2 = x[(k + n - 2) % n];
                    dx[k] = (next - prev2) * prev - x[k] + forcing;
                }
            }
            Field::ForcedFhn { a, b, f, omega } => {
                let (u, v, phase) = (x[0], x[1], x[2]);
                dx[0] = a + u * u * v - (b + 1.0) * u + f * phase.cos();
                dx[1] = b * u - u * u * v;
                dx[2] = omega;
            }
            Field::HindmarshRose {
                a,
                b,
                c,
                d,
                s,
                tau_x,
                tau_z,
            } => {
                let (u, v, w) = (x[0], x[1], x[2]);
                let cubic = a * u * u * u;
                dx[0] = (v - cubic + b * u * u + w) / tau_x - u;
                dx[1] = w - cubic - (d - b) * u * u;
                dx[2] = (c - s * u - w) / tau_z;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_dims_and_params() {
        for kind in SystemKind::ALL {
            let s = OdeSystem::standard(kind);
            let expected = if kind == SystemKind::Lorenz96 { 5 } else { 3 };
            assert_eq!(s.dim(), expected);
            assert_eq!(s.kind().name().parse::<SystemKind>().unwrap(), kind);
        }
        assert_eq!(OdeSystem::lorenz63().params()["rho"], 28.0);
    }

    #[test]
    fn rejects_wrong_parameter_sets() {
        let mut p = SystemKind::Lorenz63.default_params();
        p.insert("extra".into(), 1.0);
        assert!(OdeSystem::with_params(SystemKind::Lorenz63, 3, p).is_err());
        let mut p = SystemKind::Rossler.default_params();
        p.remove("gamma");
        assert!(OdeSystem::with_params(SystemKind::Rossler, 3, p).is_err());
        assert!(OdeSystem::lorenz96(3, 8.0).is_err());
        assert!(OdeSystem::with_params(SystemKind::Lorenz63, 4, SystemKind::Lorenz63.default_params()).is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let s = OdeSystem::lorenz96(6, 8.0).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: OdeSystem = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"name":"lorenz63","dim":3,"params":{"sigma":10.0}}"#;
        assert!(serde_json::from_str::<OdeSystem>(bad).is_err());
    }

    #[test]
    fn lorenz96_homogeneous_equilibrium() {
        let s = OdeSystem::lorenz96(5, 20.0).unwrap();
        let mut dx = vec![1.0; 5];
        s.eval(&[20.0; 5], &mut dx);
        assert!(dx.iter().all(|&v| v == 0.0));
    }
}
