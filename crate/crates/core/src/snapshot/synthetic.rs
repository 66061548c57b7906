//! Seeded synthetic snapshot generator.
//!
//! Each field is `phi(pi) = sum_j c_j(pi) * mode_j`, with orthonormal
//! spatial modes drawn from a seeded generator and smooth coefficient
//! functions `c_j`. The noiseless map is returned alongside the set and
//! serves as the exact reference when validating a trained model.
//!
//! Random numbers come from xorshift64* (Vigna, 2016):
//!
//! ```text
//! x ^= x >> 12; x ^= x << 25; x ^= x >> 27;
//! out = x * 0x2545F4914F6CDD1D   (wrapping)
//! ```
//!
//! The state for field `i` (0-based) is
//! `seed ^ (0x9E3779B97F4A7C15 * (i + 1))` (wrapping), replaced by
//! `0x9E3779B97F4A7C15` if that is zero. A draw in `[-1, 1)` is
//! `(out >> 11) * 2^-53 * 2 - 1`. Modes consume `n_dof * r` draws in
//! column order and are orthonormalized by two passes of modified
//! Gram-Schmidt; noise draws continue from the same stream, column by
//! column.

use super::{SnapshotError, SnapshotSet};
use crate::pod::SnapshotMatrix;
use crate::rbf::ParameterPoint;
use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// The xorshift64* generator.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        Self {
            state: if seed == 0 { GOLDEN } else { seed },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[-1, 1)`.
    pub fn next_symmetric(&mut self) -> f64 {
        let unit = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        2.0 * unit - 1.0
    }
}

/// A smooth scalar function of one parameter coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientFn {
    /// `sum_k coefficients[k] * x^k`
    Polynomial {
        #[serde(default)]
        coordinate: usize,
        coefficients: Vec<f64>,
    },
    /// `offset + amplitude * sin(frequency * x + phase)`
    Sinusoid {
        #[serde(default)]
        coordinate: usize,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl CoefficientFn {
    pub fn linear(intercept: f64, slope: f64) -> Self {
        CoefficientFn::Polynomial {
            coordinate: 0,
            coefficients: vec![intercept, slope],
        }
    }

    fn coordinate(&self) -> usize {
        match self {
            CoefficientFn::Polynomial { coordinate, .. } | CoefficientFn::Sinusoid { coordinate, .. } => *coordinate,
        }
    }

    pub fn eval(&self, pi: &[f64]) -> f64 {
        let x = pi[self.coordinate()];
        match self {
            CoefficientFn::Polynomial { coefficients, .. } => coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c),
            CoefficientFn::Sinusoid {
                amplitude,
                frequency,
                phase,
                offset,
                ..
            } => offset + amplitude * (frequency * x + phase).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFieldSpec {
    pub label: String,
    pub n_dof: usize,
    /// One coefficient function per generating mode.
    pub coefficients: Vec<CoefficientFn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifoldSpec {
    pub seed: u64,
    pub parameter_samples: Vec<Vec<f64>>,
    #[serde(default)]
    pub noise_amplitude: f64,
    pub fields: Vec<SyntheticFieldSpec>,
}

/// Training parameters spaced 0.2 apart over `[3, 3.8]` and `[4.2, 5]`.
pub fn lvad_training_flows() -> Vec<f64> {
    (15..=19).chain(21..=25).map(|i| i as f64 / 5.0).collect()
}

impl SyntheticManifoldSpec {
    /// A five-field set (`p`, `wss`, `ux`, `uy`, `uz`) sampled at the LVAD
    /// pump-flow design, with coefficients linear in the flow rate. The
    /// leading mode dominates `p` and `wss`; the velocity components carry
    /// two significant modes.
    pub fn lvad_like(n_dof: usize, seed: u64) -> Self {
        let lin = CoefficientFn::linear;
        let field = |label: &str, coefficients: Vec<CoefficientFn>| SyntheticFieldSpec {
            label: label.to_string(),
            n_dof,
            coefficients,
        };
        Self {
            seed,
            parameter_samples: lvad_training_flows().into_iter().map(|x| vec![x]).collect(),
            noise_amplitude: 0.0,
            fields: vec![
                field("p", vec![lin(100.0, 8.0), lin(0.05, 0.01)]),
                field("wss", vec![lin(20.0, 3.0), lin(0.1, -0.02)]),
                field("ux", vec![lin(1.0, 0.3), lin(-2.4, 0.6), lin(0.002, 0.001)]),
                field("uy", vec![lin(0.4, 0.1), lin(1.0, -0.25), lin(-0.001, 0.0005)]),
                field("uz", vec![lin(-0.8, 0.5), lin(-1.2, 0.3), lin(0.001, 0.002)]),
            ],
        }
    }

    fn validate(&self) -> Result<usize, SnapshotError> {
        let invalid = |m: String| Err(SnapshotError::InvalidSpec(m));
        let Some(first) = self.parameter_samples.first() else {
            return invalid("no parameter samples".into());
        };
        let dim = first.len();
        if dim == 0 {
            return invalid("parameter dimension is zero".into());
        }
        if self.parameter_samples.iter().any(|p| p.len() != dim) {
            return invalid("parameter samples have differing dimensions".into());
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return invalid(format!("noise amplitude {}", self.noise_amplitude));
        }
        for f in &self.fields {
            if f.coefficients.is_empty() {
                return invalid(format!("field {:?} has no generating modes", f.label));
            }
            if f.coefficients.len() > f.n_dof {
                return invalid(format!(
                    "field {:?}: {} modes exceed {} degrees of freedom",
                    f.label,
                    f.coefficients.len(),
                    f.n_dof
                ));
            }
            if let Some(c) = f.coefficients.iter().find(|c| c.coordinate() >= dim) {
                return invalid(format!(
                    "field {:?}: coefficient uses coordinate {} of a {dim}-dimensional parameter",
                    f.label,
                    c.coordinate()
                ));
            }
        }
        Ok(dim)
    }
}

/// Exact noiseless fields of a generated set at arbitrary parameters.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    dim: usize,
    fields: IndexMap<String, (DMatrix<f64>, Vec<CoefficientFn>)>,
}

impl SyntheticOracle {
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.fields.keys().map(String::as_str)
    }

    /// Orthonormal generating modes of a field, `N x r`.
    pub fn modes(&self, label: &str) -> Option<&DMatrix<f64>> {
        self.fields.get(label).map(|(m, _)| m)
    }

    pub fn coefficients(&self, label: &str, pi: &[f64]) -> Option<Vec<f64>> {
        if pi.len() != self.dim {
            return None;
        }
        let (_, funcs) = self.fields.get(label)?;
        Some(funcs.iter().map(|f| f.eval(pi)).collect())
    }

    pub fn field(&self, label: &str, pi: &[f64]) -> Option<Vec<f64>> {
        let coeffs = self.coefficients(label, pi)?;
        let (modes, _) = self.fields.get(label)?;
        let n = modes.nrows();
        let mut out = vec![0.0; n];
        for (j, c) in coeffs.iter().enumerate() {
            for (o, m) in out.iter_mut().zip(&modes.as_slice()[j * n..(j + 1) * n]) {
                *o += c * m;
            }
        }
        Some(out)
    }
}

fn orthonormal_modes(rng: &mut XorShift64Star, n: usize, r: usize) -> Result<DMatrix<f64>, SnapshotError> {
    let mut m = DMatrix::from_fn(n, r, |_, _| 0.0);
    for v in m.as_mut_slice() {
        *v = rng.next_symmetric();
    }
    for _pass in 0..2 {
        for j in 0..r {
            for i in 0..j {
                let proj = m.column(i).dot(&m.column(j));
                let prev = m.column(i).clone_owned();
                m.column_mut(j).axpy(-proj, &prev, 1.0);
            }
            let norm = m.column(j).norm();
            if !(norm > 1e-10) {
                return Err(SnapshotError::InvalidSpec(
                    "generated modes are linearly dependent".into(),
                ));
            }
            m.column_mut(j).scale_mut(1.0 / norm);
        }
    }
    Ok(m)
}

pub fn generate_synthetic_set(spec: &SyntheticManifoldSpec) -> Result<(SnapshotSet, SyntheticOracle), SnapshotError> {
    let dim = spec.validate()?;
    let parameters: Vec<ParameterPoint> = spec.parameter_samples.iter().cloned().map(ParameterPoint).collect();
    let provenance = format!(
        "synthetic manifold: seed {}, noise amplitude {}, xorshift64* modes",
        spec.seed, spec.noise_amplitude
    );
    let mut set = SnapshotSet::new(parameters, provenance)?;
    let mut oracle = SyntheticOracle {
        dim,
        fields: IndexMap::new(),
    };

    for (index, field) in spec.fields.iter().enumerate() {
        let seed = spec.seed ^ GOLDEN.wrapping_mul(index as u64 + 1);
        let mut rng = XorShift64Star::new(seed);
        let modes = orthonormal_modes(&mut rng, field.n_dof, field.coefficients.len())?;
        if oracle.fields.contains_key(&field.label) {
            return Err(SnapshotError::DuplicateField(field.label.clone()));
        }
        oracle
            .fields
            .insert(field.label.clone(), (modes, field.coefficients.clone()));

        let ns = spec.parameter_samples.len();
        let mut data = DMatrix::zeros(field.n_dof, ns);
        for (i, pi) in spec.parameter_samples.iter().enumerate() {
            let exact = oracle.field(&field.label, pi).expect("label just inserted");
            for (row, v) in exact.into_iter().enumerate() {
                let noise = if spec.noise_amplitude > 0.0 {
                    spec.noise_amplitude * rng.next_symmetric()
                } else {
                    0.0
                };
                data[(row, i)] = v + noise;
            }
        }
        set.add_field(SnapshotMatrix::from_matrix(field.label.clone(), data)?)?;
    }
    Ok((set, oracle))
}
