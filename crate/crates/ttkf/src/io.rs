//! File formats: the tensor-train container used to persist identified
//! models, and the input/output record CSV.
//!
//! Container layout: 4 magic bytes `TTC1`, a little-endian `u64` header
//! length, a JSON header `{version, l, n_list, ranks}`, then the core
//! payloads in order as little-endian `f64` in first-index-fastest order.
//! The core shapes are implied by `(l, n_list, ranks)`.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::DenseTensor;
use crate::error::{Error, Result};
use crate::tt::TensorTrain;
use crate::volterra::IoRecord;

const TT_MAGIC: &[u8; 4] = b"TTC1";
const TT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TtHeader {
    version: u32,
    l: usize,
    n_list: Vec<usize>,
    ranks: Vec<usize>,
}

pub fn tensor_train_to_bytes(tt: &TensorTrain) -> Result<Vec<u8>> {
    let header = TtHeader {
        version: TT_VERSION,
        l: tt.batch_size(),
        n_list: tt.mode_dims(),
        ranks: tt.ranks(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Format { what: "tt header", detail: e.to_string() })?;
    let payload_len: usize = tt.cores().map(|c| c.len()).sum();
    let mut out = Vec::with_capacity(4 + 8 + header_json.len() + 8 * payload_len);
    out.extend_from_slice(TT_MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for core in tt.cores() {
        for &x in core.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn tensor_train_from_bytes(bytes: &[u8]) -> Result<TensorTrain> {
    let bad = |detail: String| Error::Format { what: "tt container", detail };
    if bytes.len() < 12 || &bytes[..4] != TT_MAGIC {
        return Err(bad("missing TTC1 magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let header_end = 12 + header_len;
    if bytes.len() < header_end {
        return Err(bad("truncated header".into()));
    }
    let header: TtHeader = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| bad(format!("invalid header JSON: {e}")))?;
    if header.version != TT_VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    let d = header.n_list.len();
    if d == 0 || header.ranks.len() != d - 1 {
        return Err(bad(format!(
            "inconsistent dims: {} modes, {} ranks",
            d,
            header.ranks.len()
        )));
    }
    let mut cores = Vec::with_capacity(d);
    let mut offset = header_end;
    for k in 0..d {
        let rl = if k == 0 { header.l } else { header.ranks[k - 1] };
        let rr = if k == d - 1 { 1 } else { header.ranks[k] };
        let n = header.n_list[k];
        let len = rl * n * rr;
        let end = offset + 8 * len;
        if bytes.len() < end {
            return Err(bad(format!("truncated payload at core {k}")));
        }
        let data: Vec<f64> = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cores.push(DenseTensor::new(vec![rl, n, rr], data)?);
        offset = end;
    }
    if offset != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - offset)));
    }
    TensorTrain::from_cores(cores)
}

pub fn save_tensor_train(path: impl AsRef<Path>, tt: &TensorTrain) -> Result<()> {
    let bytes = tensor_train_to_bytes(tt)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn load_tensor_train(path: impl AsRef<Path>) -> Result<TensorTrain> {
    let bytes = fs::read(path)?;
    tensor_train_from_bytes(&bytes)
}

/// Write an [`IoRecord`] as `t,u1..up,y1..yl` with full-precision floats.
pub fn write_io_csv(path: impl AsRef<Path>, record: &IoRecord) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=record.num_inputs()).map(|i| format!("u{i}")));
    header.extend((1..=record.num_outputs()).map(|i| format!("y{i}")));
    wtr.write_record(&header).map_err(csv_err)?;
    for t in 0..record.num_samples() {
        let mut row = vec![t.to_string()];
        for ch in record.inputs() {
            row.push(format_float(ch[t]));
        }
        for ch in record.outputs() {
            row.push(format_float(ch[t]));
        }
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_io_csv(path: impl AsRef<Path>) -> Result<IoRecord> {
    let mut rdr = csv::Reader::from_path(path.as_ref()).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let mut p = 0usize;
    let mut l = 0usize;
    for (i, name) in headers.iter().enumerate() {
        match (i, name) {
            (0, "t") => {}
            (0, other) => {
                return Err(Error::Format {
                    what: "io csv",
                    detail: format!("first column must be `t`, got `{other}`"),
                })
            }
            _ if name == format!("u{}", p + 1) && l == 0 => p += 1,
            _ if name == format!("y{}", l + 1) => l += 1,
            _ => {
                return Err(Error::Format {
                    what: "io csv",
                    detail: format!("unexpected column `{name}`"),
                })
            }
        }
    }
    if p == 0 || l == 0 {
        return Err(Error::Format {
            what: "io csv",
            detail: format!("need at least one input and one output column, got p={p} l={l}"),
        });
    }
    let mut inputs = vec![Vec::new(); p];
    let mut outputs = vec![Vec::new(); l];
    for (row_idx, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        if row.len() != 1 + p + l {
            return Err(Error::Format {
                what: "io csv",
                detail: format!("row {row_idx} has {} fields, expected {}", row.len(), 1 + p + l),
            });
        }
        for (k, field) in row.iter().skip(1).enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::Format {
                what: "io csv",
                detail: format!("row {row_idx}: cannot parse `{field}` as a float"),
            })?;
            if k < p {
                inputs[k].push(value);
            } else {
                outputs[k - p].push(value);
            }
        }
    }
    IoRecord::new(inputs, outputs, None)
}

fn format_float(x: f64) -> String {
    // shortest representation that round-trips
    format!("{x}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format { what: "csv", detail: e.to_string() }
}
