//! ODTR: a self-describing little-endian array container.
//!
//! ```text
//! "ODTR" | version u32 | dtype u32 | ndim u32 | dims u64 * ndim
//!        | meta_len u64 | meta JSON (UTF-8) | payload (row-major)
//! ```
//!
//! dtype 0 is `f32`, dtype 1 is interleaved complex64.

use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex32;
use serde_json::Value;

use super::{read_file, write_atomic, Reader};
use crate::error::{Error, Result};
use crate::signal::{FlowMap, RawBScan, ScanMeta};

pub const MAGIC: &[u8; 4] = b"ODTR";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum OdtrData {
    F32(ArrayD<f32>),
    Complex64(ArrayD<Complex32>),
}

impl OdtrData {
    pub fn shape(&self) -> &[usize] {
        match self {
            OdtrData::F32(a) => a.shape(),
            OdtrData::Complex64(a) => a.shape(),
        }
    }

    fn dtype(&self) -> u32 {
        match self {
            OdtrData::F32(_) => 0,
            OdtrData::Complex64(_) => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdtrFile {
    pub data: OdtrData,
    pub meta: Value,
}

pub fn encode(file: &OdtrFile) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&file.meta)?;
    let shape = file.data.shape();
    let mut out = Vec::with_capacity(32 + meta.len() + 8 * shape.iter().product::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&file.data.dtype().to_le_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    match &file.data {
        OdtrData::F32(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        OdtrData::Complex64(a) => a.iter().for_each(|z| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }),
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<OdtrFile> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "not an ODTR file (bad magic)"));
    }
    let at = r.offset();
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(at, format!("unsupported ODTR version {version}")));
    }
    let at = r.offset();
    let dtype = r.u32("dtype")?;
    let elem = match dtype {
        0 => 4,
        1 => 8,
        t => return Err(Error::format(at, format!("unknown dtype tag {t}"))),
    };
    let ndim = r.u32("ndim")? as usize;
    let mut dims = Vec::with_capacity(ndim.min(16));
    let mut count: u64 = 1;
    for _ in 0..ndim {
        let at = r.offset();
        let d = r.u64("dims")?;
        count = count
            .checked_mul(d)
            .ok_or_else(|| Error::format(at, "dimension product overflows"))?;
        dims.push(d as usize);
    }
    let meta_len = r.len("meta")?;
    let at = r.offset();
    let meta: Value = serde_json::from_slice(r.take(meta_len, "meta")?)
        .map_err(|e| Error::format(at, format!("bad meta JSON: {e}")))?;
    let at = r.offset();
    let expected = count
        .checked_mul(elem)
        .ok_or_else(|| Error::format(at, "payload size overflows"))?;
    if r.remaining() as u64 != expected {
        return Err(Error::format(
            at,
            format!(
                "payload is {} bytes, dims {dims:?} need {expected}",
                r.remaining()
            ),
        ));
    }
    let payload = r.take(expected as usize, "payload")?;
    let data = match dtype {
        0 => OdtrData::F32(
            ArrayD::from_shape_vec(
                IxDyn(&dims),
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
            .map_err(|e| Error::format(at, e.to_string()))?,
        ),
        _ => OdtrData::Complex64(
            ArrayD::from_shape_vec(
                IxDyn(&dims),
                payload
                    .chunks_exact(8)
                    .map(|c| {
                        Complex32::new(
                            f32::from_le_bytes(c[..4].try_into().unwrap()),
                            f32::from_le_bytes(c[4..].try_into().unwrap()),
                        )
                    })
                    .collect(),
            )
            .map_err(|e| Error::format(at, e.to_string()))?,
        ),
    };
    Ok(OdtrFile { data, meta })
}

pub fn odtr_write(path: &Path, file: &OdtrFile) -> Result<()> {
    write_atomic(path, &encode(file)?)
}

pub fn odtr_read(path: &Path) -> Result<OdtrFile> {
    decode(&read_file(path)?)
}

pub fn write_raw_bscan(path: &Path, raw: &RawBScan) -> Result<()> {
    let file = OdtrFile {
        data: OdtrData::Complex64(raw.spectra().clone().into_dyn()),
        meta: serde_json::to_value(&raw.meta)?,
    };
    odtr_write(path, &file)
}

pub fn read_raw_bscan(path: &Path) -> Result<RawBScan> {
    let file = odtr_read(path)?;
    let OdtrData::Complex64(a) = file.data else {
        return Err(Error::format(8, "raw B-scan must be complex64"));
    };
    let spectra = a
        .into_dimensionality()
        .map_err(|_| Error::format(12, "raw B-scan must be two-dimensional"))?;
    let meta: ScanMeta = serde_json::from_value(file.meta)
        .map_err(|e| Error::format(0, format!("raw B-scan meta: {e}")))?;
    RawBScan::new(spectra, meta)
}

pub fn write_f32_2d(path: &Path, values: &Array2<f32>, meta: Value) -> Result<()> {
    odtr_write(
        path,
        &OdtrFile {
            data: OdtrData::F32(values.clone().into_dyn()),
            meta,
        },
    )
}

/// Reads a real `f32` array and squeezes leading unit axes down to 2-D, so
/// `[1, D, W]` network outputs load as `(D, W)` maps.
pub fn read_f32_2d(path: &Path) -> Result<(Array2<f32>, Value)> {
    let file = odtr_read(path)?;
    let OdtrData::F32(mut a) = file.data else {
        return Err(Error::format(8, "expected an f32 array"));
    };
    while a.ndim() > 2 && a.shape()[0] == 1 {
        a = a.index_axis_move(ndarray::Axis(0), 0);
    }
    let a = a
        .into_dimensionality()
        .map_err(|_| Error::format(12, "expected a two-dimensional array"))?;
    Ok((a, file.meta))
}

pub fn write_flow(path: &Path, flow: &FlowMap, meta: Value) -> Result<()> {
    write_f32_2d(path, flow.values(), meta)
}

pub fn read_flow(path: &Path) -> Result<FlowMap> {
    Ok(FlowMap(read_f32_2d(path)?.0))
}
