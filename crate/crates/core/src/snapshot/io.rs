//! On-disk layout of a snapshot set.
//!
//! A set is a directory holding `manifest.toml` plus raw binary payloads:
//!
//! * `parameters.bin`: the `N_s x P` parameter table, row-major;
//! * `field_NNN.bin`: one per field, the `N x N_s` snapshot matrix,
//!   column-major.
//!
//! All floats are IEEE-754 binary64, little-endian. The manifest records
//! the CRC-32 (IEEE) of every binary file.

use super::{SnapshotError, SnapshotSet};
use crate::pod::SnapshotMatrix;
use crate::rbf::ParameterPoint;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Read;
use std::path::Path;

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "podi-snapshot-set";
const MANIFEST: &str = "manifest.toml";
const PARAMETERS: &str = "parameters.bin";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    n_params: usize,
    n_snapshots: usize,
    provenance: String,
    parameters: BinaryEntry,
    #[serde(default)]
    fields: Vec<FieldEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BinaryEntry {
    file: String,
    crc32: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldEntry {
    label: String,
    n_dof: usize,
    file: String,
    crc32: u32,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn encode(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(f64::to_le_bytes).collect()
}

fn decode(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub fn write_snapshot_set(set: &SnapshotSet, dir: impl AsRef<Path>) -> Result<(), SnapshotError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let param_bytes = encode(set.parameters().iter().flat_map(|p| p.iter().copied()));
    let param_path = dir.join(PARAMETERS);
    fs::write(&param_path, &param_bytes).map_err(io_err(&param_path))?;

    let mut fields = Vec::with_capacity(set.fields().len());
    for (i, (label, matrix)) in set.fields().iter().enumerate() {
        let file = format!("field_{i:03}.bin");
        let bytes = encode(matrix.data().as_slice().iter().copied());
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        fields.push(FieldEntry {
            label: label.clone(),
            n_dof: matrix.n_dof(),
            file,
            crc32: crc32fast::hash(&bytes),
        });
    }

    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        version: SNAPSHOT_FORMAT_VERSION,
        n_params: set.n_params(),
        n_snapshots: set.n_snapshots(),
        provenance: set.provenance().to_string(),
        parameters: BinaryEntry {
            file: PARAMETERS.into(),
            crc32: crc32fast::hash(&param_bytes),
        },
        fields,
    };
    let text = toml::to_string(&manifest).map_err(|e| SnapshotError::Invalid(e.to_string()))?;
    let manifest_path = dir.join(MANIFEST);
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))
}

fn read_checked(dir: &Path, file: &str, crc32: u32, expected_values: usize) -> Result<Vec<f64>, SnapshotError> {
    if file.contains(['/', '\\']) || file == ".." {
        return Err(SnapshotError::CorruptData(format!("illegal file name {file:?}")));
    }
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if bytes.len() != expected_values * 8 {
        return Err(SnapshotError::CorruptData(format!(
            "{file}: {} bytes, expected {}",
            bytes.len(),
            expected_values * 8
        )));
    }
    let actual = crc32fast::hash(&bytes);
    if actual != crc32 {
        return Err(SnapshotError::CorruptData(format!(
            "{file}: checksum {actual:08x} does not match manifest {crc32:08x}"
        )));
    }
    Ok(decode(&bytes))
}

pub fn read_snapshot_set(dir: impl AsRef<Path>) -> Result<SnapshotSet, SnapshotError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| SnapshotError::CorruptData(format!("manifest: {e}")))?;
    if manifest.format != FORMAT_TAG {
        return Err(SnapshotError::CorruptData(format!(
            "unknown format {:?}",
            manifest.format
        )));
    }
    if manifest.version != SNAPSHOT_FORMAT_VERSION {
        return Err(SnapshotError::VersionMismatch {
            found: manifest.version,
            supported: SNAPSHOT_FORMAT_VERSION,
        });
    }
    let (p, ns) = (manifest.n_params, manifest.n_snapshots);
    if p == 0 || ns == 0 {
        return Err(SnapshotError::CorruptData("empty parameter table".into()));
    }
    let table = read_checked(dir, &manifest.parameters.file, manifest.parameters.crc32, ns * p)?;
    let parameters = table.chunks_exact(p).map(|row| ParameterPoint(row.to_vec())).collect();
    let mut set = SnapshotSet::new(parameters, manifest.provenance)?;
    for entry in manifest.fields {
        let values = read_checked(dir, &entry.file, entry.crc32, entry.n_dof * ns)?;
        let matrix = SnapshotMatrix::from_matrix(entry.label, DMatrix::from_vec(entry.n_dof, ns, values))?;
        set.add_field(matrix)?;
    }
    Ok(set)
}

fn csv_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>, SnapshotError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(b',')
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| SnapshotError::Csv(e.to_string()))?;
        let row = record
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| SnapshotError::Csv(format!("line {}: {v:?}: {e}", line + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a matrix with one snapshot per column (one degree of freedom per row).
pub fn read_csv_matrix<R: Read>(reader: R, label: &str) -> Result<SnapshotMatrix, SnapshotError> {
    let rows = csv_rows(reader)?;
    let n_dof = rows.len();
    let ns = rows.first().map_or(0, Vec::len);
    if n_dof == 0 || ns == 0 {
        return Err(SnapshotError::Csv("empty matrix".into()));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ns) {
        return Err(SnapshotError::Csv(format!(
            "row {} has {} columns, expected {ns}",
            i + 1,
            rows[i].len()
        )));
    }
    let data = DMatrix::from_fn(n_dof, ns, |i, j| rows[i][j]);
    Ok(SnapshotMatrix::from_matrix(label, data)?)
}

/// Reads one parameter point per CSV row.
pub fn read_csv_parameters<R: Read>(reader: R) -> Result<Vec<ParameterPoint>, SnapshotError> {
    Ok(csv_rows(reader)?.into_iter().map(ParameterPoint).collect())
}

/// Builds a set from a parameter CSV and one CSV per field.
pub fn import_csv_set(
    parameters: impl AsRef<Path>,
    fields: &[(String, std::path::PathBuf)],
) -> Result<SnapshotSet, SnapshotError> {
    let parameters = parameters.as_ref();
    let file = fs::File::open(parameters).map_err(io_err(parameters))?;
    let mut set = SnapshotSet::new(read_csv_parameters(file)?, "imported from CSV (decimal text, lossy)")?;
    for (label, path) in fields {
        let file = fs::File::open(path).map_err(io_err(path))?;
        set.add_field(read_csv_matrix(file, label)?)?;
    }
    Ok(set)
}
