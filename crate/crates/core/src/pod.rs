//! Proper orthogonal decomposition of snapshot matrices.
//!
//! Snapshots are stacked as columns of `S` (no mean subtraction) and the
//! left-singular vectors of `S` form the POD modes. The modes are stored
//! with a fixed sign convention: the entry of largest magnitude in every
//! mode is positive, which makes trained models reproducible.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Reconstruction tolerance (relative Frobenius) used to self-check every SVD.
pub const SVD_SELF_CHECK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PodError {
    #[error("snapshot list is empty")]
    Empty,
    #[error("snapshot {column} has length {found}, expected {expected}")]
    LengthMismatch {
        column: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { column: usize, row: usize },
    #[error("singular value decomposition failed: {0}")]
    NumericalFailure(String),
    #[error("all singular values are zero; energy is undefined")]
    DegenerateSpectrum,
    #[error("rank {requested} is outside 1..={available}")]
    RankOutOfRange { requested: usize, available: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("reference field has zero norm")]
    ZeroReference,
    #[error("energy threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),
}

/// Dense `N x N_s` snapshot matrix for a single field; column `i` is snapshot `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    field_name: String,
    data: DMatrix<f64>,
}

impl SnapshotMatrix {
    /// Wraps an existing matrix after checking that it is non-empty and finite.
    pub fn from_matrix(field_name: impl Into<String>, data: DMatrix<f64>) -> Result<Self, PodError> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(PodError::Empty);
        }
        check_finite(&data)?;
        Ok(Self {
            field_name: field_name.into(),
            data,
        })
    }

    pub fn field_name(&self) -> &str {
        &self.field_name
    }

    pub fn n_dof(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn snapshot(&self, i: usize) -> Vec<f64> {
        self.data.column(i).iter().copied().collect()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }
}

fn check_finite(data: &DMatrix<f64>) -> Result<(), PodError> {
    let rows = data.nrows();
    match data.as_slice().iter().position(|v| !v.is_finite()) {
        Some(idx) => Err(PodError::NonFinite {
            column: idx / rows,
            row: idx % rows,
        }),
        None => Ok(()),
    }
}

/// Stacks equally long snapshots as the columns of a new matrix, preserving order.
pub fn assemble_snapshot_matrix<V: AsRef<[f64]>>(
    snapshots: &[V],
    field_name: &str,
) -> Result<SnapshotMatrix, PodError> {
    let first = snapshots.first().ok_or(PodError::Empty)?.as_ref();
    let n_dof = first.len();
    if n_dof == 0 {
        return Err(PodError::Empty);
    }
    let mut flat = Vec::with_capacity(n_dof * snapshots.len());
    for (column, snap) in snapshots.iter().enumerate() {
        let snap = snap.as_ref();
        if snap.len() != n_dof {
            return Err(PodError::LengthMismatch {
                column,
                expected: n_dof,
                found: snap.len(),
            });
        }
        if let Some(row) = snap.iter().position(|v| !v.is_finite()) {
            return Err(PodError::NonFinite { column, row });
        }
        flat.extend_from_slice(snap);
    }
    Ok(SnapshotMatrix {
        field_name: field_name.to_string(),
        data: DMatrix::from_vec(n_dof, snapshots.len(), flat),
    })
}

/// Orthonormal POD modes with their singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    modes: DMatrix<f64>,
    singular_values: Vec<f64>,
    truncation_rank: usize,
}

impl PodBasis {
    /// Builds a basis from stored parts. Used by deserialization; the caller
    /// is responsible for orthonormality of `modes`.
    pub fn from_parts(
        modes: DMatrix<f64>,
        singular_values: Vec<f64>,
        truncation_rank: usize,
    ) -> Result<Self, PodError> {
        if modes.ncols() != singular_values.len() {
            return Err(PodError::DimensionMismatch {
                expected: modes.ncols(),
                found: singular_values.len(),
            });
        }
        if truncation_rank == 0 || truncation_rank > modes.ncols() {
            return Err(PodError::RankOutOfRange {
                requested: truncation_rank,
                available: modes.ncols(),
            });
        }
        Ok(Self {
            modes,
            singular_values,
            truncation_rank,
        })
    }

    pub fn n_dof(&self) -> usize {
        self.modes.nrows()
    }

    /// Number of stored modes.
    pub fn stored_rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn truncation_rank(&self) -> usize {
        self.truncation_rank
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// Mode `j` as a contiguous slice of length `N`.
    pub fn mode(&self, j: usize) -> &[f64] {
        let n = self.n_dof();
        &self.modes.as_slice()[j * n..(j + 1) * n]
    }
}

/// Full thin SVD of `S`; every left-singular vector is kept and the
/// truncation rank starts at `min(N, N_s)`.
pub fn compute_pod_basis(snapshots: &SnapshotMatrix) -> Result<PodBasis, PodError> {
    let s = snapshots.data();
    let (u, sigma, v) = thin_svd(s)?;
    let rank = sigma.len();

    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));

    let n = s.nrows();
    let mut modes = DMatrix::<f64>::zeros(n, rank);
    let mut right = DMatrix::<f64>::zeros(s.ncols(), rank);
    let mut values = Vec::with_capacity(rank);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = u.column(src).clone_owned();
        let mut vcol = v.column(src).clone_owned();
        if dominant_entry_is_negative(col.as_slice()) {
            col.neg_mut();
            vcol.neg_mut();
        }
        modes.set_column(dst, &col);
        right.set_column(dst, &vcol);
        values.push(sigma[src].max(0.0));
    }

    let norm = s.norm();
    if norm > 0.0 {
        let diag = DMatrix::from_diagonal(&DVector::from_column_slice(&values));
        let residual = (&modes * diag * right.transpose() - s).norm() / norm;
        if !(residual <= SVD_SELF_CHECK_TOL) {
            return Err(PodError::NumericalFailure(format!(
                "reconstruction residual {residual:e} exceeds {SVD_SELF_CHECK_TOL:e}"
            )));
        }
    }

    Ok(PodBasis {
        modes,
        singular_values: values,
        truncation_rank: rank,
    })
}

type Svd = (DMatrix<f64>, Vec<f64>, DMatrix<f64>);

/// Thin SVD `S = U diag(sigma) V^T` through faer, whose bidiagonal solver
/// stays accurate on rank-deficient input.
fn thin_svd(s: &DMatrix<f64>) -> Result<Svd, PodError> {
    let m = faer::Mat::<f64>::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)]);
    let svd = m
        .thin_svd()
        .map_err(|e| PodError::NumericalFailure(format!("SVD did not converge: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let sigma = svd.S().column_vector();
    let k = sigma.nrows();
    Ok((
        DMatrix::from_fn(s.nrows(), k, |i, j| u[(i, j)]),
        (0..k).map(|j| sigma[j]).collect(),
        DMatrix::from_fn(s.ncols(), k, |i, j| v[(i, j)]),
    ))
}

fn dominant_entry_is_negative(col: &[f64]) -> bool {
    let mut best = 0.0_f64;
    let mut negative = false;
    for &x in col {
        if x.abs() > best {
            best = x.abs();
            negative = x < 0.0;
        }
    }
    negative
}

/// Cumulative energy `sum_{i<=m} s_i^2 / sum_i s_i^2` of a singular value sequence.
pub fn cumulative_energy_of(singular_values: &[f64]) -> Result<Vec<f64>, PodError> {
    if singular_values.is_empty() {
        return Err(PodError::DegenerateSpectrum);
    }
    let mut partial = Vec::with_capacity(singular_values.len());
    let mut acc = 0.0;
    for s in singular_values {
        acc += s * s;
        partial.push(acc);
    }
    // The last partial sum is the total, so the final entry is exactly 1.
    let total = acc;
    if !(total > 0.0) {
        return Err(PodError::DegenerateSpectrum);
    }
    Ok(partial.into_iter().map(|p| p / total).collect())
}

pub fn cumulative_energy(basis: &PodBasis) -> Result<Vec<f64>, PodError> {
    cumulative_energy_of(&basis.singular_values)
}

/// Smallest `k` whose cumulative energy reaches `threshold`.
pub fn rank_from_energies(energies: &[f64], threshold: f64) -> Result<usize, PodError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PodError::InvalidThreshold(threshold));
    }
    if energies.is_empty() {
        return Err(PodError::DegenerateSpectrum);
    }
    let k = energies
        .iter()
        .position(|&e| e >= threshold)
        .map(|i| i + 1)
        .unwrap_or(energies.len());
    Ok(k)
}

pub fn rank_for_energy(basis: &PodBasis, threshold: f64) -> Result<usize, PodError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PodError::InvalidThreshold(threshold));
    }
    rank_from_energies(&cumulative_energy(basis)?, threshold)
}

/// Keeps the first `k` modes and singular values.
pub fn truncate(basis: &PodBasis, k: usize) -> Result<PodBasis, PodError> {
    let available = basis.stored_rank();
    if k == 0 || k > available {
        return Err(PodError::RankOutOfRange {
            requested: k,
            available,
        });
    }
    Ok(PodBasis {
        modes: basis.modes.columns(0, k).into_owned(),
        singular_values: basis.singular_values[..k].to_vec(),
        truncation_rank: k,
    })
}

/// `C = U_k^T S`, one column of modal coefficients per snapshot.
pub fn project_coefficients(basis: &PodBasis, snapshots: &SnapshotMatrix) -> Result<DMatrix<f64>, PodError> {
    if basis.n_dof() != snapshots.n_dof() {
        return Err(PodError::DimensionMismatch {
            expected: basis.n_dof(),
            found: snapshots.n_dof(),
        });
    }
    let k = basis.truncation_rank;
    Ok(basis.modes.columns(0, k).tr_mul(snapshots.data()))
}

/// Projects a single field vector onto the first `k` modes.
pub fn project_vector(basis: &PodBasis, field: &[f64]) -> Result<Vec<f64>, PodError> {
    if basis.n_dof() != field.len() {
        return Err(PodError::DimensionMismatch {
            expected: basis.n_dof(),
            found: field.len(),
        });
    }
    Ok((0..basis.truncation_rank).map(|j| dot(basis.mode(j), field)).collect())
}

/// `sum_j coeffs[j] * mode_j`.
pub fn reconstruct(basis: &PodBasis, coeffs: &[f64]) -> Result<Vec<f64>, PodError> {
    let mut out = vec![0.0; basis.n_dof()];
    reconstruct_into(basis, coeffs, &mut out)?;
    Ok(out)
}

/// Like [`reconstruct`], writing into a caller-provided buffer of length `N`.
pub fn reconstruct_into(basis: &PodBasis, coeffs: &[f64], out: &mut [f64]) -> Result<(), PodError> {
    if coeffs.len() != basis.truncation_rank {
        return Err(PodError::DimensionMismatch {
            expected: basis.truncation_rank,
            found: coeffs.len(),
        });
    }
    if out.len() != basis.n_dof() {
        return Err(PodError::DimensionMismatch {
            expected: basis.n_dof(),
            found: out.len(),
        });
    }
    out.iter_mut().for_each(|x| *x = 0.0);
    for (j, &c) in coeffs.iter().enumerate() {
        for (o, m) in out.iter_mut().zip(basis.mode(j)) {
            *o += c * m;
        }
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Percent relative error `100 * ||fom - rom|| / ||fom||` in the Euclidean norm.
pub fn relative_error_l2(fom: &[f64], rom: &[f64]) -> Result<f64, PodError> {
    relative_error_impl(fom, rom, None)
}

/// Weighted variant, `||x||^2 = sum_i w_i x_i^2`, for cell-volume weighted norms.
pub fn relative_error_l2_weighted(fom: &[f64], rom: &[f64], weights: &[f64]) -> Result<f64, PodError> {
    if weights.len() != fom.len() {
        return Err(PodError::DimensionMismatch {
            expected: fom.len(),
            found: weights.len(),
        });
    }
    relative_error_impl(fom, rom, Some(weights))
}

fn relative_error_impl(fom: &[f64], rom: &[f64], weights: Option<&[f64]>) -> Result<f64, PodError> {
    if fom.len() != rom.len() {
        return Err(PodError::DimensionMismatch {
            expected: fom.len(),
            found: rom.len(),
        });
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    // Scale by the largest reference entry to avoid overflow and underflow.
    let scale = fom.iter().chain(rom).fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Err(PodError::ZeroReference);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..fom.len() {
        let a = fom[i] / scale;
        let d = a - rom[i] / scale;
        num += w(i) * d * d;
        den += w(i) * a * a;
    }
    if !(den > 0.0) {
        return Err(PodError::ZeroReference);
    }
    Ok(100.0 * (num / den).sqrt())
}
