//! Gaussian radial basis function interpolation over the parameter space.
//!
//! Centers are mapped affinely onto `[0, 1]` per coordinate before any
//! kernel evaluation, so the shape parameter is independent of parameter
//! units. The kernel is `exp(-(shape * r)^2)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::ops::Deref;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RbfError {
    #[error("at least two distinct centers are required, got {0}")]
    InsufficientCenters(usize),
    #[error("no centers given")]
    NoCenters,
    #[error("centers {first} and {second} coincide")]
    DuplicateCenters { first: usize, second: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("kernel matrix is numerically singular (condition estimate {condition_estimate:e})")]
    SingularSystem { condition_estimate: f64 },
    #[error("shape parameter must be positive and finite, got {0}")]
    InvalidShape(f64),
    #[error("ridge must be nonnegative and finite, got {0}")]
    InvalidRidge(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// A point `pi` in the parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterPoint(pub Vec<f64>);

impl ParameterPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl Deref for ParameterPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<f64> for ParameterPoint {
    fn from(x: f64) -> Self {
        Self(vec![x])
    }
}

impl From<Vec<f64>> for ParameterPoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub fn gaussian_kernel(r: f64, shape: f64) -> f64 {
    let x = shape * r;
    (-x * x).exp()
}

/// `1 / mean pairwise distance` of the given centers.
pub fn default_shape_parameter<P: Deref<Target = [f64]>>(centers: &[P]) -> Result<f64, RbfError> {
    if centers.len() < 2 {
        return Err(RbfError::InsufficientCenters(centers.len()));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            sum += distance(&centers[i], &centers[j]);
            pairs += 1;
        }
    }
    let mean = sum / pairs as f64;
    if !(mean > 0.0) {
        return Err(RbfError::InsufficientCenters(1));
    }
    Ok(1.0 / mean)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-coordinate affine map `x -> (x - offset) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Maps the bounding box of `points` onto the unit cube. Coordinates
    /// with a single distinct value keep the identity map.
    pub fn unit_box(points: &[ParameterPoint]) -> Self {
        let dim = points.first().map_or(0, |p| p.dim());
        let mut offset = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        for d in 0..dim {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[d]), hi.max(p[d]))
            });
            if hi > lo {
                offset[d] = lo;
                scale[d] = hi - lo;
            }
        }
        Self { offset, scale }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| (v - o) / s)
            .collect()
    }
}

/// Shape and regularization options for a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfConfig {
    /// Gaussian shape in normalized coordinates; `None` picks
    /// [`default_shape_parameter`] of the normalized centers.
    pub shape: Option<f64>,
    pub ridge: f64,
    pub normalize: bool,
}

impl Default for RbfConfig {
    fn default() -> Self {
        Self {
            shape: None,
            ridge: 0.0,
            normalize: true,
        }
    }
}

/// Fitted interpolator for one scalar response (one POD mode).
#[derive(Debug, Clone, PartialEq)]
pub struct RbfInterpolator {
    centers: Vec<ParameterPoint>,
    normalization: Normalization,
    scaled_centers: Vec<Vec<f64>>,
    shape: f64,
    ridge: f64,
    weights: Vec<f64>,
}

impl RbfInterpolator {
    /// Reassembles a stored interpolator.
    pub fn from_parts(
        centers: Vec<ParameterPoint>,
        normalization: Normalization,
        shape: f64,
        ridge: f64,
        weights: Vec<f64>,
    ) -> Result<Self, RbfError> {
        let dim = check_centers(&centers)?;
        if normalization.dim() != dim {
            return Err(RbfError::DimensionMismatch {
                expected: dim,
                found: normalization.dim(),
            });
        }
        if weights.len() != centers.len() {
            return Err(RbfError::DimensionMismatch {
                expected: centers.len(),
                found: weights.len(),
            });
        }
        check_shape(shape)?;
        let scaled_centers = centers.iter().map(|c| normalization.apply(c)).collect();
        Ok(Self {
            centers,
            normalization,
            scaled_centers,
            shape,
            ridge,
            weights,
        })
    }

    pub fn centers(&self) -> &[ParameterPoint] {
        &self.centers
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Ridge actually added to the kernel diagonal.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.normalization.dim()
    }

    pub fn evaluate(&self, target: &[f64]) -> Result<f64, RbfError> {
        if target.len() != self.dim() {
            return Err(RbfError::DimensionMismatch {
                expected: self.dim(),
                found: target.len(),
            });
        }
        let x = self.normalization.apply(target);
        Ok(dot2(
            self.scaled_centers
                .iter()
                .zip(&self.weights)
                .map(|(c, &w)| (w, gaussian_kernel(distance(&x, c), self.shape))),
        ))
    }
}

fn check_shape(shape: f64) -> Result<(), RbfError> {
    if shape > 0.0 && shape.is_finite() {
        Ok(())
    } else {
        Err(RbfError::InvalidShape(shape))
    }
}

fn check_centers(centers: &[ParameterPoint]) -> Result<usize, RbfError> {
    let dim = centers.first().ok_or(RbfError::NoCenters)?.dim();
    if dim == 0 {
        return Err(RbfError::DimensionMismatch { expected: 1, found: 0 });
    }
    for c in centers {
        if c.dim() != dim {
            return Err(RbfError::DimensionMismatch {
                expected: dim,
                found: c.dim(),
            });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(RbfError::NonFinite("centers"));
        }
    }
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            if centers[i] == centers[j] {
                return Err(RbfError::DuplicateCenters { first: i, second: j });
            }
        }
    }
    Ok(dim)
}

/// Factored kernel matrix for a fixed set of centers, reusable across
/// every response sharing those centers.
#[derive(Debug, Clone)]
pub struct KernelSystem {
    centers: Vec<ParameterPoint>,
    normalization: Normalization,
    scaled_centers: Vec<Vec<f64>>,
    shape: f64,
    ridge: f64,
    matrix: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
}

impl KernelSystem {
    pub fn new(centers: &[ParameterPoint], config: &RbfConfig) -> Result<Self, RbfError> {
        let dim = check_centers(centers)?;
        if !(config.ridge >= 0.0 && config.ridge.is_finite()) {
            return Err(RbfError::InvalidRidge(config.ridge));
        }
        let normalization = if config.normalize {
            Normalization::unit_box(centers)
        } else {
            Normalization::identity(dim)
        };
        let scaled_centers: Vec<Vec<f64>> = centers.iter().map(|c| normalization.apply(c)).collect();
        let shape = match config.shape {
            Some(s) => s,
            None => default_shape_parameter(&scaled_centers.iter().map(Vec::as_slice).collect::<Vec<_>>())?,
        };
        check_shape(shape)?;

        let n = centers.len();
        let mut kernel = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = gaussian_kernel(distance(&scaled_centers[i], &scaled_centers[j]), shape);
                kernel[(i, j)] = v;
                kernel[(j, i)] = v;
            }
        }

        let (ridge, matrix, factor) = match factor_with_ridge(&kernel, config.ridge) {
            Some((m, f)) => (config.ridge, m, f),
            None => {
                let fallback = config.ridge + 1e-12 * kernel.trace() / n as f64;
                match factor_with_ridge(&kernel, fallback) {
                    Some((m, f)) => (fallback, m, f),
                    None => {
                        return Err(RbfError::SingularSystem {
                            condition_estimate: condition_estimate(&kernel),
                        })
                    }
                }
            }
        };

        Ok(Self {
            centers: centers.to_vec(),
            normalization,
            scaled_centers,
            shape,
            ridge,
            matrix,
            factor,
        })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// The (ridge-augmented) kernel matrix. Symmetric by construction.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn condition_estimate(&self) -> f64 {
        condition_estimate(&self.matrix)
    }

    /// Solves `(K + ridge I) w = values`, refining with residuals accumulated
    /// in compensated arithmetic.
    pub fn fit(&self, values: &[f64]) -> Result<RbfInterpolator, RbfError> {
        let n = self.centers.len();
        if values.len() != n {
            return Err(RbfError::DimensionMismatch {
                expected: n,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RbfError::NonFinite("values"));
        }
        let rhs = DVector::from_column_slice(values);
        let mut w = self.factor.solve(&rhs);
        for _ in 0..REFINEMENT_STEPS {
            let residual = DVector::from_fn(n, |i, _| {
                let row = self.matrix.row(i);
                dot2(std::iter::once((values[i], -1.0)).chain(row.iter().copied().zip(w.iter().copied())))
            });
            w -= self.factor.solve(&residual);
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(RbfError::SingularSystem {
                condition_estimate: self.condition_estimate(),
            });
        }
        Ok(RbfInterpolator {
            centers: self.centers.clone(),
            normalization: self.normalization.clone(),
            scaled_centers: self.scaled_centers.clone(),
            shape: self.shape,
            ridge: self.ridge,
            weights: w.as_slice().to_vec(),
        })
    }
}

/// Refinement sweeps after the initial Cholesky solve.
const REFINEMENT_STEPS: usize = 2;

/// Dot product with error-free transformations, as accurate as if computed
/// in twice the working precision.
fn dot2(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut sum, mut err) = (0.0_f64, 0.0_f64);
    for (a, b) in pairs {
        let p = a * b;
        let p_err = a.mul_add(b, -p);
        let t = sum + p;
        let z = t - sum;
        err += p_err + ((sum - (t - z)) + (p - z));
        sum = t;
    }
    sum + err
}

fn factor_with_ridge(kernel: &DMatrix<f64>, ridge: f64) -> Option<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    let mut m = kernel.clone();
    if ridge > 0.0 {
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
    }
    let factor = Cholesky::new(m.clone())?;
    let diag_ok = (0..m.nrows()).all(|i| {
        let d = factor.l_dirty()[(i, i)];
        d.is_finite() && d > 0.0
    });
    diag_ok.then_some((m, factor))
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// One-shot fit with per-coordinate normalization of the centers.
pub fn fit(
    centers: &[ParameterPoint],
    values: &[f64],
    shape: Option<f64>,
    ridge: f64,
) -> Result<RbfInterpolator, RbfError> {
    let config = RbfConfig {
        shape,
        ridge,
        normalize: true,
    };
    KernelSystem::new(centers, &config)?.fit(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pts(xs: &[f64]) -> Vec<ParameterPoint> {
        xs.iter().map(|&x| ParameterPoint::from(x)).collect()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_kernel(0.0, 3.7), 1.0);
        assert_relative_eq!(gaussian_kernel(1.0, 1.0), 0.367879441171442, epsilon = 1e-15);
        assert!(gaussian_kernel(0.6, 1.0) < gaussian_kernel(0.5, 1.0));
    }

    #[test]
    fn default_shape_examples() {
        assert_eq!(default_shape_parameter(&pts(&[0.0, 1.0])).unwrap(), 1.0);
        assert_relative_eq!(
            default_shape_parameter(&pts(&[0.0, 1.0, 2.0])).unwrap(),
            0.75,
            epsilon = 1e-15
        );
        assert_eq!(
            default_shape_parameter(&pts(&[0.0])).unwrap_err(),
            RbfError::InsufficientCenters(1)
        );
    }

    #[test]
    fn single_center_weight_equals_value() {
        let interp = fit(&pts(&[2.0]), &[7.0], Some(1.0), 0.0).unwrap();
        assert_relative_eq!(interp.weights()[0], 7.0, epsilon = 1e-15);
        // one-term sum: w * exp(-(eps d)^2), identity normalization for a single point
        assert_relative_eq!(
            interp.evaluate(&[2.5]).unwrap(),
            7.0 * (-0.25f64).exp(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn two_center_closed_form() {
        let (a, b, d, eps) = (1.3, -0.4, 0.7, 1.2);
        let config = RbfConfig {
            shape: Some(eps),
            ridge: 0.0,
            normalize: false,
        };
        let interp = KernelSystem::new(&pts(&[0.0, d]), &config)
            .unwrap()
            .fit(&[a, b])
            .unwrap();
        let q = (-(eps * d) * (eps * d)).exp();
        let w0 = (a - q * b) / (1.0 - q * q);
        let w1 = (b - q * a) / (1.0 - q * q);
        assert_relative_eq!(interp.weights()[0], w0, epsilon = 1e-12);
        assert_relative_eq!(interp.weights()[1], w1, epsilon = 1e-12);
        assert_relative_eq!(interp.evaluate(&[0.0]).unwrap(), a, epsilon = 1e-12);
        assert_relative_eq!(interp.evaluate(&[d]).unwrap(), b, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_centers_rejected() {
        let err = fit(&pts(&[1.0, 2.0, 1.0]), &[0.0, 1.0, 2.0], None, 0.0).unwrap_err();
        assert_eq!(err, RbfError::DuplicateCenters { first: 0, second: 2 });
    }

    #[test]
    fn dimension_checks() {
        let interp = fit(&pts(&[0.0, 1.0]), &[1.0, 2.0], None, 0.0).unwrap();
        assert_eq!(
            interp.evaluate(&[0.0, 1.0]).unwrap_err(),
            RbfError::DimensionMismatch { expected: 1, found: 2 }
        );
        assert!(matches!(
            fit(&pts(&[0.0, 1.0]), &[1.0], None, 0.0),
            Err(RbfError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            fit(&pts(&[0.0, 1.0]), &[1.0, 2.0], Some(-1.0), 0.0),
            Err(RbfError::InvalidShape(_))
        ));
    }

    #[test]
    fn flat_kernel_falls_back_to_ridge_or_reports_singularity() {
        // Nearly coincident centers at a tiny shape: numerically rank one.
        let centers = pts(&[0.0, 1e-9, 2e-9, 3e-9]);
        let config = RbfConfig {
            shape: Some(1e-3),
            ridge: 0.0,
            normalize: false,
        };
        match KernelSystem::new(&centers, &config) {
            Ok(sys) => assert!(sys.ridge() > 0.0),
            Err(RbfError::SingularSystem { condition_estimate }) => assert!(condition_estimate > 1e12),
            Err(other) => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kernel_matrix_is_symmetric() {
        let sys = KernelSystem::new(&pts(&[0.0, 0.3, 0.5, 1.1]), &RbfConfig::default()).unwrap();
        let m = sys.matrix();
        assert_eq!(m, &m.transpose());
    }
}
