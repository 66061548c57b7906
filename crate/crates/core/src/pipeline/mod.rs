//! Offline training and online evaluation of POD-with-interpolation models.
//!
//! Offline, for every field: SVD of the snapshot matrix, truncation by
//! energy (or an explicit rank), projection `C = U_k^T S`, and one Gaussian
//! RBF interpolator per row of `C`. Online, the interpolators give the
//! modal coefficients at a new parameter and the field is rebuilt as
//! `sum_j alpha_j(pi) phi_j`.

mod format;

pub use format::{decode_model, encode_model, load_model, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};

use crate::pod::{self, PodBasis, PodError};
use crate::rbf::{KernelSystem, ParameterPoint, RbfConfig, RbfError, RbfInterpolator};
use crate::snapshot::SnapshotSet;
use indexmap::IndexMap;
use serde::Serialize;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Repetitions whose median is reported as the online evaluation time.
pub const TIMING_REPETITIONS: usize = 5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Pod(#[from] PodError),
    #[error(transparent)]
    Rbf(#[from] RbfError),
    #[error("at least two snapshots are needed to interpolate, got {0}")]
    InsufficientSnapshots(usize),
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("held-out field {0:?} is not part of the model")]
    FieldMismatch(String),
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("parameter coordinate {coordinate} = {value} is outside the admissible range [{min}, {max}]")]
    ParameterOutOfRange {
        coordinate: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported model format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub energy_threshold: f64,
    /// Fixed ranks for selected fields, overriding the energy criterion.
    pub rank_override: IndexMap<String, usize>,
    pub rbf: RbfConfig,
    /// Admissible parameter box declared for the model, checked by callers
    /// that want to refuse evaluation outside it.
    pub parameter_range: Option<Vec<(f64, f64)>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            energy_threshold: 0.99,
            rank_override: IndexMap::new(),
            rbf: RbfConfig::default(),
            parameter_range: None,
        }
    }
}

/// Reduced model of one field: truncated basis plus one interpolator per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    basis: PodBasis,
    spectrum: Vec<f64>,
    interpolators: Vec<RbfInterpolator>,
}

impl FieldModel {
    pub(crate) fn from_parts(
        basis: PodBasis,
        spectrum: Vec<f64>,
        interpolators: Vec<RbfInterpolator>,
    ) -> Result<Self, PipelineError> {
        if interpolators.len() != basis.truncation_rank() {
            return Err(PipelineError::DimensionMismatch {
                what: "interpolator count",
                expected: basis.truncation_rank(),
                found: interpolators.len(),
            });
        }
        Ok(Self {
            basis,
            spectrum,
            interpolators,
        })
    }

    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }

    /// Every singular value of the training snapshot matrix.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn interpolators(&self) -> &[RbfInterpolator] {
        &self.interpolators
    }

    pub fn rank(&self) -> usize {
        self.basis.truncation_rank()
    }

    pub fn n_dof(&self) -> usize {
        self.basis.n_dof()
    }

    /// Fraction of snapshot energy captured by the retained modes.
    pub fn captured_energy(&self) -> f64 {
        pod::cumulative_energy_of(&self.spectrum)
            .map(|e| e[self.rank() - 1])
            .unwrap_or(f64::NAN)
    }
}

/// A trained, immutable reduced-order model.
#[derive(Debug, Clone, PartialEq)]
pub struct RomModel {
    format_version: u32,
    parameters: Vec<ParameterPoint>,
    energy_threshold: f64,
    parameter_range: Option<Vec<(f64, f64)>>,
    fields: IndexMap<String, FieldModel>,
}

/// Reconstructed field plus the online by-products.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEvaluation {
    pub values: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSummary {
    pub label: String,
    pub n_dof: usize,
    pub rank: usize,
    pub captured_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelMetadata {
    pub format_version: u32,
    pub n_snapshots: usize,
    pub n_params: usize,
    pub energy_threshold: f64,
    pub training_bounds: Vec<(f64, f64)>,
    pub parameter_range: Option<Vec<(f64, f64)>>,
    pub fields: Vec<FieldSummary>,
}

impl RomModel {
    pub(crate) fn from_parts(
        format_version: u32,
        parameters: Vec<ParameterPoint>,
        energy_threshold: f64,
        parameter_range: Option<Vec<(f64, f64)>>,
        fields: IndexMap<String, FieldModel>,
    ) -> Self {
        Self {
            format_version,
            parameters,
            energy_threshold,
            parameter_range,
            fields,
        }
    }

    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    /// Training parameters, one row per snapshot.
    pub fn parameters(&self) -> &[ParameterPoint] {
        &self.parameters
    }

    pub fn n_params(&self) -> usize {
        self.parameters[0].dim()
    }

    pub fn energy_threshold(&self) -> f64 {
        self.energy_threshold
    }

    pub fn parameter_range(&self) -> Option<&[(f64, f64)]> {
        self.parameter_range.as_deref()
    }

    pub fn fields(&self) -> &IndexMap<String, FieldModel> {
        &self.fields
    }

    pub fn field(&self, label: &str) -> Result<&FieldModel, PipelineError> {
        self.fields
            .get(label)
            .ok_or_else(|| PipelineError::UnknownField(label.to_string()))
    }

    /// Per-coordinate `(min, max)` of the training parameters.
    pub fn training_bounds(&self) -> Vec<(f64, f64)> {
        (0..self.n_params())
            .map(|d| {
                self.parameters
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                        (lo.min(p[d]), hi.max(p[d]))
                    })
            })
            .collect()
    }

    /// True when `target` lies outside the bounding box of the training
    /// parameters (the segment between the extreme samples when `P = 1`).
    pub fn is_extrapolation(&self, target: &[f64]) -> bool {
        self.training_bounds()
            .iter()
            .zip(target)
            .any(|(&(lo, hi), &x)| x < lo || x > hi)
    }

    /// Checks `target` against the declared admissible range, if any.
    pub fn check_parameter_range(&self, target: &[f64]) -> Result<(), PipelineError> {
        self.check_dim(target)?;
        if let Some(range) = &self.parameter_range {
            for (coordinate, (&(min, max), &value)) in range.iter().zip(target).enumerate() {
                if !(value >= min && value <= max) {
                    return Err(PipelineError::ParameterOutOfRange {
                        coordinate,
                        value,
                        min,
                        max,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_dim(&self, target: &[f64]) -> Result<(), PipelineError> {
        if target.len() != self.n_params() {
            return Err(PipelineError::DimensionMismatch {
                what: "parameter",
                expected: self.n_params(),
                found: target.len(),
            });
        }
        Ok(())
    }

    /// Interpolated modal coefficients `alpha_j(pi)` of one field.
    pub fn modal_coefficients(&self, label: &str, target: &[f64]) -> Result<Vec<f64>, PipelineError> {
        let field = self.field(label)?;
        self.check_dim(target)?;
        field
            .interpolators
            .iter()
            .map(|interp| interp.evaluate(target).map_err(PipelineError::from))
            .collect()
    }

    pub fn evaluate_field(&self, label: &str, target: &[f64]) -> Result<Vec<f64>, PipelineError> {
        Ok(self.evaluate_field_detailed(label, target)?.values)
    }

    pub fn evaluate_field_detailed(&self, label: &str, target: &[f64]) -> Result<FieldEvaluation, PipelineError> {
        let coefficients = self.modal_coefficients(label, target)?;
        let values = pod::reconstruct(self.field(label)?.basis(), &coefficients)?;
        Ok(FieldEvaluation {
            values,
            coefficients,
            extrapolated: self.is_extrapolation(target),
        })
    }

    pub fn metadata(&self) -> ModelMetadata {
        ModelMetadata {
            format_version: self.format_version,
            n_snapshots: self.parameters.len(),
            n_params: self.n_params(),
            energy_threshold: self.energy_threshold,
            training_bounds: self.training_bounds(),
            parameter_range: self.parameter_range.clone(),
            fields: self
                .fields
                .iter()
                .map(|(label, f)| FieldSummary {
                    label: label.clone(),
                    n_dof: f.n_dof(),
                    rank: f.rank(),
                    captured_energy: f.captured_energy(),
                })
                .collect(),
        }
    }
}

fn check_config(config: &TrainConfig, set: &SnapshotSet) -> Result<(), PipelineError> {
    let t = config.energy_threshold;
    if !(t > 0.0 && t <= 1.0) {
        return Err(PipelineError::InvalidConfig(format!(
            "energy threshold {t} outside (0, 1]"
        )));
    }
    if let Some(label) = config.rank_override.keys().find(|l| set.field(l).is_none()) {
        return Err(PipelineError::UnknownField(label.clone()));
    }
    if let Some(range) = &config.parameter_range {
        if range.len() != set.n_params() {
            return Err(PipelineError::DimensionMismatch {
                what: "parameter range",
                expected: set.n_params(),
                found: range.len(),
            });
        }
        if range
            .iter()
            .any(|&(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(PipelineError::InvalidConfig(
                "parameter range bounds must be finite with min <= max".into(),
            ));
        }
    }
    Ok(())
}

/// Offline stage: builds a model from a snapshot set.
pub fn train(set: &SnapshotSet, config: &TrainConfig) -> Result<RomModel, PipelineError> {
    if set.n_snapshots() < 2 {
        return Err(PipelineError::InsufficientSnapshots(set.n_snapshots()));
    }
    if set.fields().is_empty() {
        return Err(PipelineError::InvalidConfig("snapshot set has no fields".into()));
    }
    check_config(config, set)?;

    // All fields share the training design, so one factorization serves every mode.
    let system = KernelSystem::new(set.parameters(), &config.rbf)?;

    let mut fields = IndexMap::with_capacity(set.fields().len());
    for (label, snapshots) in set.fields() {
        let full = pod::compute_pod_basis(snapshots)?;
        let k = match config.rank_override.get(label) {
            Some(&k) => k,
            None => pod::rank_for_energy(&full, config.energy_threshold)?,
        };
        let basis = pod::truncate(&full, k)?;
        let coefficients = pod::project_coefficients(&basis, snapshots)?;
        let interpolators = (0..k)
            .map(|j| {
                let row: Vec<f64> = coefficients.row(j).iter().copied().collect();
                system.fit(&row)
            })
            .collect::<Result<Vec<_>, _>>()?;
        fields.insert(
            label.clone(),
            FieldModel {
                basis,
                spectrum: full.singular_values().to_vec(),
                interpolators,
            },
        );
    }

    Ok(RomModel {
        format_version: MODEL_FORMAT_VERSION,
        parameters: set.parameters().to_vec(),
        energy_threshold: config.energy_threshold,
        parameter_range: config.parameter_range.clone(),
        fields,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationEntry {
    pub field: String,
    pub parameter: Vec<f64>,
    /// Percent relative Euclidean error.
    pub error_percent: f64,
    /// Median wall-clock time of `evaluate_field`, seconds.
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
    pub ranks: IndexMap<String, usize>,
}

impl ValidationReport {
    pub fn max_error(&self, field: &str) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| e.field == field)
            .map(|e| e.error_percent)
            .reduce(f64::max)
    }
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

/// Compares model output with held-out snapshots at their parameters.
pub fn validate(model: &RomModel, heldout: &SnapshotSet) -> Result<ValidationReport, PipelineError> {
    if heldout.n_params() != model.n_params() {
        return Err(PipelineError::DimensionMismatch {
            what: "parameter",
            expected: model.n_params(),
            found: heldout.n_params(),
        });
    }
    let mut entries = Vec::new();
    let mut ranks = IndexMap::new();
    for (label, snapshots) in heldout.fields() {
        let field = model
            .fields
            .get(label)
            .ok_or_else(|| PipelineError::FieldMismatch(label.clone()))?;
        if snapshots.n_dof() != field.n_dof() {
            return Err(PipelineError::DimensionMismatch {
                what: "field length",
                expected: field.n_dof(),
                found: snapshots.n_dof(),
            });
        }
        ranks.insert(label.clone(), field.rank());
        for (i, pi) in heldout.parameters().iter().enumerate() {
            let mut times = Vec::with_capacity(TIMING_REPETITIONS);
            let mut rom = Vec::new();
            for _ in 0..TIMING_REPETITIONS {
                let start = Instant::now();
                rom = model.evaluate_field(label, pi)?;
                times.push(start.elapsed());
            }
            let error_percent = pod::relative_error_l2(&snapshots.snapshot(i), &rom)?;
            entries.push(ValidationEntry {
                field: label.clone(),
                parameter: pi.to_vec(),
                error_percent,
                eval_seconds: median(times).as_secs_f64(),
            });
        }
    }
    Ok(ValidationReport { entries, ranks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pod::SnapshotMatrix;
    use crate::snapshot::{generate_synthetic_set, SyntheticManifoldSpec};
    use nalgebra::DMatrix;

    fn lvad_set() -> (SnapshotSet, crate::snapshot::SyntheticOracle) {
        generate_synthetic_set(&SyntheticManifoldSpec::lvad_like(60, 11)).unwrap()
    }

    #[test]
    fn interpolator_count_matches_rank() {
        let (set, _) = lvad_set();
        let model = train(&set, &TrainConfig::default()).unwrap();
        for (label, field) in model.fields() {
            assert_eq!(field.interpolators().len(), field.rank(), "{label}");
            for interp in field.interpolators() {
                assert_eq!(interp.centers(), set.parameters());
            }
        }
    }

    #[test]
    fn lvad_fixture_ranks_at_99_percent() {
        let (set, _) = lvad_set();
        let model = train(&set, &TrainConfig::default()).unwrap();
        let ranks: Vec<usize> = model.fields().values().map(FieldModel::rank).collect();
        assert_eq!(ranks, vec![1, 1, 2, 2, 2]);
    }

    #[test]
    fn single_snapshot_is_rejected() {
        let set = SnapshotSet::new(vec![ParameterPoint::from(4.0)], "")
            .unwrap()
            .with_field(SnapshotMatrix::from_matrix("p", DMatrix::from_element(3, 1, 1.0)).unwrap())
            .unwrap();
        assert!(matches!(
            train(&set, &TrainConfig::default()),
            Err(PipelineError::InsufficientSnapshots(1))
        ));
    }

    #[test]
    fn unknown_field_and_dimension_errors() {
        let (set, _) = lvad_set();
        let model = train(&set, &TrainConfig::default()).unwrap();
        assert!(matches!(
            model.evaluate_field("T", &[4.0]),
            Err(PipelineError::UnknownField(_))
        ));
        assert!(matches!(
            model.evaluate_field("p", &[4.0, 1.0]),
            Err(PipelineError::DimensionMismatch { .. })
        ));
        let mut config = TrainConfig::default();
        config.rank_override.insert("nope".into(), 1);
        assert!(matches!(train(&set, &config), Err(PipelineError::UnknownField(_))));
    }

    #[test]
    fn self_validation_at_full_rank() {
        let (set, _) = lvad_set();
        let config = TrainConfig {
            energy_threshold: 1.0,
            ..TrainConfig::default()
        };
        let model = train(&set, &config).unwrap();
        let report = validate(&model, &set).unwrap();
        assert_eq!(report.entries.len(), 5 * 10);
        assert!(report.entries.iter().all(|e| e.error_percent < 1e-4), "{report:?}");
    }

    #[test]
    fn validation_shape_errors() {
        let (set, _) = lvad_set();
        let model = train(&set, &TrainConfig::default()).unwrap();
        let wrong = SnapshotSet::new(set.parameters().to_vec(), "")
            .unwrap()
            .with_field(SnapshotMatrix::from_matrix("p", DMatrix::from_element(7, 10, 1.0)).unwrap())
            .unwrap();
        assert!(matches!(
            validate(&model, &wrong),
            Err(PipelineError::DimensionMismatch { .. })
        ));
        let extra = SnapshotSet::new(set.parameters().to_vec(), "")
            .unwrap()
            .with_field(SnapshotMatrix::from_matrix("T", DMatrix::from_element(60, 10, 1.0)).unwrap())
            .unwrap();
        assert!(matches!(validate(&model, &extra), Err(PipelineError::FieldMismatch(_))));
    }

    #[test]
    fn extrapolation_and_declared_range() {
        let (set, _) = lvad_set();
        let config = TrainConfig {
            parameter_range: Some(vec![(3.0, 5.0)]),
            ..TrainConfig::default()
        };
        let model = train(&set, &config).unwrap();
        assert!(!model.evaluate_field_detailed("p", &[4.0]).unwrap().extrapolated);
        assert!(model.evaluate_field_detailed("p", &[5.5]).unwrap().extrapolated);
        assert!(model.check_parameter_range(&[4.0]).is_ok());
        assert!(matches!(
            model.check_parameter_range(&[5.5]),
            Err(PipelineError::ParameterOutOfRange { coordinate: 0, .. })
        ));
    }
}
