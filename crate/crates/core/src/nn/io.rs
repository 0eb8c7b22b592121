//! Model files.
//!
//! ```text
//! "ARUN" | u16 version | u8 variant | u8 qp_tag | u16 layer count
//! layer count x (u8 kind | u8 kh | u8 kw | u16 in_ch | u16 out_ch)
//! parameters as f32, weights then bias for every layer in table order
//! ```
//! All integers are little-endian.

use super::net::{Architecture, LayerKind, LayerSpec, UpsamplerNet, Variant};
use super::Tensor;
use crate::error::{Error, Result};
use std::path::Path;

pub const MODEL_MAGIC: &[u8; 4] = b"ARUN";
pub const MODEL_VERSION: u16 = 1;

const HEADER_LEN: usize = 10;
const LAYER_LEN: usize = 7;

pub fn write_model(net: &UpsamplerNet<f32>) -> Vec<u8> {
    let table = net.layer_table();
    let mut out = Vec::with_capacity(HEADER_LEN + table.len() * LAYER_LEN + 4 * net.param_count());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(net.variant.code());
    out.push(net.qp_tag);
    out.extend_from_slice(&(table.len() as u16).to_le_bytes());
    for l in &table {
        out.extend_from_slice(&[l.kind as u8, l.kh, l.kw]);
        out.extend_from_slice(&l.in_ch.to_le_bytes());
        out.extend_from_slice(&l.out_ch.to_le_bytes());
    }
    for p in net.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn short(expected: usize, actual: usize) -> Error {
    Error::Format(format!("truncated model file: expected {expected} bytes, found {actual}"))
}

pub fn read_model(bytes: &[u8]) -> Result<UpsamplerNet<f32>> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::Format("bad magic, not a model file".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(short(HEADER_LEN, bytes.len()));
    }
    let version = u16_at(bytes, 4);
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let variant = Variant::from_code(bytes[6])
        .ok_or_else(|| Error::Format(format!("unknown variant code {}", bytes[6])))?;
    let qp_tag = bytes[7];
    let count = u16_at(bytes, 8) as usize;
    let table_end = HEADER_LEN + count * LAYER_LEN;
    if bytes.len() < table_end {
        return Err(short(table_end, bytes.len()));
    }
    let mut table = Vec::with_capacity(count);
    for i in 0..count {
        let at = HEADER_LEN + i * LAYER_LEN;
        let kind = LayerKind::from_code(bytes[at])
            .ok_or_else(|| Error::Format(format!("unknown layer kind {} in entry {i}", bytes[at])))?;
        table.push(LayerSpec {
            kind,
            kh: bytes[at + 1],
            kw: bytes[at + 2],
            in_ch: u16_at(bytes, at + 3),
            out_ch: u16_at(bytes, at + 5),
        });
    }
    let arch = Architecture::from_layer_table(&table, variant)?;
    let shapes = arch.param_shapes(variant);
    let n_params: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    let expected = table_end + 4 * n_params;
    if bytes.len() < expected {
        return Err(short(expected, bytes.len()));
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "model file has {} trailing bytes after {expected}",
            bytes.len() - expected
        )));
    }
    let mut vals = bytes[table_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut params = Vec::with_capacity(shapes.len());
    for s in &shapes {
        let n = s.iter().product();
        params.push(Tensor::from_vec(s, vals.by_ref().take(n).collect())?);
    }
    let mut net = UpsamplerNet::zeros(variant, arch, qp_tag)?;
    net.set_params(params)?;
    Ok(net)
}

pub fn save_model(path: &Path, net: &UpsamplerNet<f32>) -> Result<()> {
    std::fs::write(path, write_model(net)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<UpsamplerNet<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
