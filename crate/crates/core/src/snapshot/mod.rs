//! Snapshot sets: a shared parameter table plus one snapshot matrix per field.

mod io;
mod synthetic;

pub use io::{
    import_csv_set, read_csv_matrix, read_csv_parameters, read_snapshot_set, write_snapshot_set,
    SNAPSHOT_FORMAT_VERSION,
};
pub use synthetic::{
    generate_synthetic_set, lvad_training_flows, CoefficientFn, SyntheticFieldSpec, SyntheticManifoldSpec,
    SyntheticOracle, XorShift64Star,
};

use crate::pod::{PodError, SnapshotMatrix};
use crate::rbf::ParameterPoint;
use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Pod(#[from] PodError),
    #[error("invalid snapshot set: {0}")]
    Invalid(String),
    #[error("parameter rows {first} and {second} are identical")]
    DuplicateParameters { first: usize, second: usize },
    #[error("field {label:?} has {found} snapshots, parameter table has {expected}")]
    SnapshotCount {
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("field {0:?} already present")]
    DuplicateField(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt snapshot data: {0}")]
    CorruptData(String),
    #[error("unsupported snapshot format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("invalid synthetic manifold spec: {0}")]
    InvalidSpec(String),
    #[error("CSV error: {0}")]
    Csv(String),
}

/// The offline database: `N_s` parameter points and, per field, the
/// `N x N_s` matrix of snapshots computed at those points.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    parameters: Vec<ParameterPoint>,
    fields: IndexMap<String, SnapshotMatrix>,
    provenance: String,
}

impl SnapshotSet {
    pub fn new(parameters: Vec<ParameterPoint>, provenance: impl Into<String>) -> Result<Self, SnapshotError> {
        let dim = parameters
            .first()
            .ok_or_else(|| SnapshotError::Invalid("parameter table is empty".into()))?
            .dim();
        if dim == 0 {
            return Err(SnapshotError::Invalid("parameter dimension is zero".into()));
        }
        for (i, p) in parameters.iter().enumerate() {
            if p.dim() != dim {
                return Err(SnapshotError::Invalid(format!(
                    "parameter row {i} has {} coordinates, expected {dim}",
                    p.dim()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(SnapshotError::Invalid(format!("parameter row {i} is not finite")));
            }
        }
        for i in 0..parameters.len() {
            for j in i + 1..parameters.len() {
                if parameters[i] == parameters[j] {
                    return Err(SnapshotError::DuplicateParameters { first: i, second: j });
                }
            }
        }
        Ok(Self {
            parameters,
            fields: IndexMap::new(),
            provenance: provenance.into(),
        })
    }

    pub fn add_field(&mut self, matrix: SnapshotMatrix) -> Result<(), SnapshotError> {
        if matrix.n_snapshots() != self.n_snapshots() {
            return Err(SnapshotError::SnapshotCount {
                label: matrix.field_name().to_string(),
                expected: self.n_snapshots(),
                found: matrix.n_snapshots(),
            });
        }
        let label = matrix.field_name().to_string();
        if self.fields.contains_key(&label) {
            return Err(SnapshotError::DuplicateField(label));
        }
        self.fields.insert(label, matrix);
        Ok(())
    }

    pub fn with_field(mut self, matrix: SnapshotMatrix) -> Result<Self, SnapshotError> {
        self.add_field(matrix)?;
        Ok(self)
    }

    pub fn parameters(&self) -> &[ParameterPoint] {
        &self.parameters
    }

    pub fn n_snapshots(&self) -> usize {
        self.parameters.len()
    }

    pub fn n_params(&self) -> usize {
        self.parameters[0].dim()
    }

    pub fn fields(&self) -> &IndexMap<String, SnapshotMatrix> {
        &self.fields
    }

    pub fn field(&self, label: &str) -> Option<&SnapshotMatrix> {
        self.fields.get(label)
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }
}
