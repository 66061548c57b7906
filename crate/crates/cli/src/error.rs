use podi_core::pipeline::PipelineError;
use podi_core::pod::PodError;
use podi_core::pump::PumpError;
use podi_core::rbf::RbfError;
use podi_core::snapshot::SnapshotError;
use podi_core::windkessel::WindkesselError;
use std::fmt;

/// Failure reported to the user as `error[code]: message` with exit status 1.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("invalid_argument", message)
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::new("io_failure", format!("I/O failure on {}: {source}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

fn pod_code(e: &PodError) -> &'static str {
    match e {
        PodError::DegenerateSpectrum => "degenerate_spectrum",
        PodError::NumericalFailure(_) => "numerical_failure",
        PodError::RankOutOfRange { .. } => "rank_out_of_range",
        PodError::InvalidThreshold(_) => "invalid_threshold",
        _ => "invalid_snapshots",
    }
}

fn rbf_code(e: &RbfError) -> &'static str {
    match e {
        RbfError::SingularSystem { .. } => "singular_system",
        RbfError::DuplicateCenters { .. } => "duplicate_centers",
        RbfError::DimensionMismatch { .. } => "dimension_mismatch",
        RbfError::NonFinite(_) => "non_finite",
        _ => "invalid_interpolation",
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Pod(p) => pod_code(p),
            PipelineError::Rbf(r) => rbf_code(r),
            PipelineError::InsufficientSnapshots(_) => "insufficient_snapshots",
            PipelineError::UnknownField(_) => "unknown_field",
            PipelineError::FieldMismatch(_) => "field_mismatch",
            PipelineError::DimensionMismatch { .. } => "dimension_mismatch",
            PipelineError::ParameterOutOfRange { .. } => "parameter_out_of_range",
            PipelineError::InvalidConfig(_) => "invalid_config",
            PipelineError::Io { .. } => "io_failure",
            PipelineError::VersionMismatch { .. } => "version_mismatch",
            PipelineError::CorruptModel(_) => "corrupt_model",
        };
        Self::new(code, e.to_string())
    }
}

impl From<SnapshotError> for CliError {
    fn from(e: SnapshotError) -> Self {
        let code = match &e {
            SnapshotError::Pod(p) => pod_code(p),
            SnapshotError::Invalid(_) => "invalid_snapshot_set",
            SnapshotError::DuplicateParameters { .. } => "duplicate_parameters",
            SnapshotError::SnapshotCount { .. } => "snapshot_count",
            SnapshotError::DuplicateField(_) => "duplicate_field",
            SnapshotError::Io { .. } => "io_failure",
            SnapshotError::CorruptData(_) => "corrupt_snapshot_data",
            SnapshotError::VersionMismatch { .. } => "version_mismatch",
            SnapshotError::InvalidSpec(_) => "invalid_spec",
            SnapshotError::Csv(_) => "csv_error",
        };
        Self::new(code, e.to_string())
    }
}

impl From<PumpError> for CliError {
    fn from(e: PumpError) -> Self {
        let code = match &e {
            PumpError::InvalidSpeed(_) => "invalid_speed",
            PumpError::NonFinite(_) => "non_finite",
            PumpError::NoRealRoot { .. } => "no_real_root",
            PumpError::FlowOutOfRange { .. } => "flow_out_of_range",
            PumpError::AmbiguousRoot(..) => "ambiguous_root",
            PumpError::InvalidCurve(_) => "invalid_curve",
            PumpError::TooFewSamples(_) => "too_few_samples",
        };
        Self::new(code, e.to_string())
    }
}

impl From<WindkesselError> for CliError {
    fn from(e: WindkesselError) -> Self {
        let code = match &e {
            WindkesselError::InvalidParams { .. } => "invalid_params",
            WindkesselError::InvalidStep(_) => "invalid_step",
            WindkesselError::InvalidHorizon { .. } => "invalid_horizon",
            WindkesselError::NonFiniteSignal { .. } => "non_finite",
            WindkesselError::InvalidSamples => "invalid_samples",
        };
        Self::new(code, e.to_string())
    }
}
