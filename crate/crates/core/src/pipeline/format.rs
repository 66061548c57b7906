//! Binary model container.
//!
//! All integers and floats are little-endian; `u64` counts.
//!
//! ```text
//! "PODI" | version u32 | n_fields u64
//! P u64 | N_s u64 | parameter table (N_s x P, row-major) | energy threshold f64
//! has_range u8 | [P x (min f64, max f64)]
//! per field:
//!   label (len u64 + UTF-8) | N u64 | k u64 | N_s u64
//!   U_k (N x k, column-major) | r u64 | r singular values
//!   per mode: P u64 | centers (N_s x P) | offset (P) | scale (P) | shape | ridge | weights (N_s)
//! CRC-32 (IEEE) u32 of every preceding byte
//! ```

use super::{FieldModel, PipelineError, RomModel};
use crate::pod::PodBasis;
use crate::rbf::{Normalization, ParameterPoint, RbfInterpolator};
use indexmap::IndexMap;
use nalgebra::DMatrix;
use std::path::Path;

pub const MODEL_MAGIC: &[u8; 4] = b"PODI";
pub const MODEL_FORMAT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
}

pub fn encode_model(model: &RomModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_FORMAT_VERSION);
    w.u64(model.fields.len());

    let p = model.n_params();
    w.u64(p);
    w.u64(model.parameters.len());
    for pi in &model.parameters {
        w.f64s(pi);
    }
    w.f64(model.energy_threshold);
    match &model.parameter_range {
        Some(range) => {
            w.u8(1);
            for &(lo, hi) in range {
                w.f64(lo);
                w.f64(hi);
            }
        }
        None => w.u8(0),
    }

    for (label, field) in &model.fields {
        w.u64(label.len());
        w.0.extend_from_slice(label.as_bytes());
        let basis = field.basis();
        w.u64(basis.n_dof());
        w.u64(basis.truncation_rank());
        w.u64(model.parameters.len());
        w.f64s(basis.modes().as_slice());
        w.u64(field.spectrum().len());
        w.f64s(field.spectrum());
        for interp in field.interpolators() {
            w.u64(interp.dim());
            for c in interp.centers() {
                w.f64s(c);
            }
            w.f64s(&interp.normalization().offset);
            w.f64s(&interp.normalization().scale);
            w.f64(interp.shape());
            w.f64(interp.ridge());
            w.f64s(interp.weights());
        }
    }

    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

fn corrupt(msg: impl Into<String>) -> PipelineError {
    PipelineError::CorruptModel(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PipelineError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of data"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, PipelineError> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<usize, PipelineError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| corrupt("count overflows usize"))
    }
    fn f64(&mut self) -> Result<f64, PipelineError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    /// Reads `n` floats, refusing counts larger than the remaining data
    /// before allocating.
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, PipelineError> {
        let bytes = n.checked_mul(8).ok_or_else(|| corrupt("count overflows usize"))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn points(&mut self, n: usize, p: usize) -> Result<Vec<ParameterPoint>, PipelineError> {
        let flat = self.f64s(n.checked_mul(p).ok_or_else(|| corrupt("count overflows usize"))?)?;
        Ok(flat.chunks_exact(p).map(|c| ParameterPoint(c.to_vec())).collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<RomModel, PipelineError> {
    if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
        return Err(corrupt("missing PODI header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(PipelineError::VersionMismatch {
            found: version,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    if bytes.len() < 12 {
        return Err(corrupt("truncated model"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }

    let mut r = Reader { buf: body, pos: 8 };
    let n_fields = r.u64()?;
    let p = r.u64()?;
    let n_s = r.u64()?;
    if p == 0 || n_s < 2 {
        return Err(corrupt(format!("invalid parameter table shape {n_s} x {p}")));
    }
    let parameters = r.points(n_s, p)?;
    let energy_threshold = r.f64()?;
    let parameter_range = match r.u8()? {
        0 => None,
        1 => Some(
            (0..p)
                .map(|_| Ok((r.f64()?, r.f64()?)))
                .collect::<Result<Vec<_>, PipelineError>>()?,
        ),
        flag => return Err(corrupt(format!("invalid range flag {flag}"))),
    };

    let mut fields = IndexMap::new();
    for _ in 0..n_fields {
        let len = r.u64()?;
        let label = std::str::from_utf8(r.take(len)?)
            .map_err(|_| corrupt("field label is not UTF-8"))?
            .to_string();
        let n = r.u64()?;
        let k = r.u64()?;
        if r.u64()? != n_s {
            return Err(corrupt(format!(
                "field {label:?} snapshot count disagrees with parameter table"
            )));
        }
        let modes = r.f64s(n.checked_mul(k).ok_or_else(|| corrupt("count overflows usize"))?)?;
        let n_sv = r.u64()?;
        let spectrum = r.f64s(n_sv)?;
        if k == 0 || k > n_sv {
            return Err(corrupt(format!("field {label:?} rank {k} exceeds stored spectrum")));
        }
        let basis = PodBasis::from_parts(DMatrix::from_vec(n, k, modes), spectrum[..k].to_vec(), k)
            .map_err(|e| corrupt(e.to_string()))?;

        let mut interpolators = Vec::with_capacity(k);
        for _ in 0..k {
            if r.u64()? != p {
                return Err(corrupt("interpolator dimension disagrees with parameter table"));
            }
            let centers = r.points(n_s, p)?;
            let offset = r.f64s(p)?;
            let scale = r.f64s(p)?;
            let shape = r.f64()?;
            let ridge = r.f64()?;
            let weights = r.f64s(n_s)?;
            let interp = RbfInterpolator::from_parts(centers, Normalization { offset, scale }, shape, ridge, weights)
                .map_err(|e| corrupt(e.to_string()))?;
            interpolators.push(interp);
        }
        let field = FieldModel::from_parts(basis, spectrum, interpolators)?;
        if fields.insert(label.clone(), field).is_some() {
            return Err(corrupt(format!("duplicate field {label:?}")));
        }
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after last field"));
    }
    Ok(RomModel::from_parts(
        version,
        parameters,
        energy_threshold,
        parameter_range,
        fields,
    ))
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_model(model: &RomModel, path: impl AsRef<Path>) -> Result<(), PipelineError> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)).map_err(|e| io_err(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RomModel, PipelineError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    decode_model(&bytes)
}
