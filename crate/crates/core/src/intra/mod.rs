//! Block-based intra coder used at both resolutions.
//!
//! A plane is coded as a raster of 8x8 blocks. Each block is predicted from
//! its reconstructed top row and left column (DC, horizontal, vertical or
//! planar), the residual is transformed and quantised, and the levels are
//! written as zig-zag (run, level) pairs with exp-Golomb codes. The mode is
//! picked per block by minimising `SSD + lambda * bits`.

pub mod bits;
pub mod transform;

use crate::error::{Error, Result};
use crate::frame::Plane;
use bits::{ue_len, BitReader, BitWriter};
use transform::{Block, ZIGZAG};

/// Lagrangian constant `c` in `lambda = c * 2^((qp - 12) / 3)`.
pub const LAMBDA_CONSTANT: f64 = 0.57;

const B: usize = transform::N;

/// Quantisation parameter. Low-resolution coding runs six below the frame QP,
/// so the accepted range extends past the usual 51.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Qp(u8);

impl Qp {
    pub const MAX: u8 = 57;

    pub fn new(v: i32) -> Result<Qp> {
        if !(0..=Self::MAX as i32).contains(&v) {
            return Err(Error::arg(format!("QP {v} outside 0..={}", Self::MAX)));
        }
        Ok(Qp(v as u8))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Quantiser step size, `2^((qp - 4) / 6)`.
    pub fn step(self) -> f64 {
        2f64.powf((self.0 as f64 - 4.0) / 6.0)
    }
}

impl std::fmt::Display for Qp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

pub fn lambda_from_qp(qp: Qp) -> f64 {
    lambda_with_constant(qp, LAMBDA_CONSTANT)
}

pub fn lambda_with_constant(qp: Qp, c: f64) -> f64 {
    c * 2f64.powf((qp.value() as f64 - 12.0) / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredMode {
    Dc = 0,
    Horizontal = 1,
    Vertical = 2,
    Planar = 3,
}

impl PredMode {
    pub const ALL: [PredMode; 4] = [
        PredMode::Dc,
        PredMode::Horizontal,
        PredMode::Vertical,
        PredMode::Planar,
    ];

    fn from_bits(v: u64) -> PredMode {
        Self::ALL[v as usize & 3]
    }
}

/// Reconstructed samples bordering a plane from outside: the row above it and
/// the column to its left.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Neighbors {
    pub top: Option<Vec<u8>>,
    pub left: Option<Vec<u8>>,
}

impl Neighbors {
    pub fn none() -> Self {
        Self::default()
    }

    fn validate(&self, w: usize, h: usize) -> Result<()> {
        if self.top.as_ref().is_some_and(|t| t.len() != w) {
            return Err(Error::arg(format!("top neighbours must hold {w} samples")));
        }
        if self.left.as_ref().is_some_and(|l| l.len() != h) {
            return Err(Error::arg(format!("left neighbours must hold {h} samples")));
        }
        Ok(())
    }
}

/// Result of coding one plane.
#[derive(Debug, Clone)]
pub struct CodedBlock {
    pub payload: BitWriter,
    pub bits: u64,
    pub recon: Plane,
    pub distortion_ssd: u64,
    pub modes: Vec<PredMode>,
}

fn check_dims(w: usize, h: usize) -> Result<()> {
    if w == 0 || h == 0 || w % B != 0 || h % B != 0 {
        return Err(Error::arg(format!(
            "intra coding needs dimensions that are nonzero multiples of {B}, got {w}x{h}"
        )));
    }
    Ok(())
}

/// Top and left reference samples for block `(by, bx)`; a missing side copies
/// the nearest sample of the other, and with neither the mid-grey 128 is used.
fn references(recon: &Plane, nbr: &Neighbors, by: usize, bx: usize) -> ([i32; B], [i32; B]) {
    let (y0, x0) = (by * B, bx * B);
    let top: Option<[i32; B]> = if by > 0 {
        Some(std::array::from_fn(|i| recon.get(y0 - 1, x0 + i) as i32))
    } else {
        nbr.top.as_ref().map(|t| std::array::from_fn(|i| t[x0 + i] as i32))
    };
    let left: Option<[i32; B]> = if bx > 0 {
        Some(std::array::from_fn(|i| recon.get(y0 + i, x0 - 1) as i32))
    } else {
        nbr.left.as_ref().map(|l| std::array::from_fn(|i| l[y0 + i] as i32))
    };
    match (top, left) {
        (Some(t), Some(l)) => (t, l),
        (Some(t), None) => (t, [t[0]; B]),
        (None, Some(l)) => ([l[0]; B], l),
        (None, None) => ([128; B], [128; B]),
    }
}

fn predict(mode: PredMode, top: &[i32; B], left: &[i32; B]) -> Block {
    let mut p = [0i32; 64];
    match mode {
        PredMode::Dc => {
            let dc = (top.iter().sum::<i32>() + left.iter().sum::<i32>() + B as i32) >> 4;
            p.fill(dc);
        }
        PredMode::Horizontal => {
            for y in 0..B {
                p[y * B..(y + 1) * B].fill(left[y]);
            }
        }
        PredMode::Vertical => {
            for y in 0..B {
                p[y * B..(y + 1) * B].copy_from_slice(top);
            }
        }
        PredMode::Planar => {
            let (tr, bl) = (top[B - 1], left[B - 1]);
            for y in 0..B {
                for x in 0..B {
                    let h = (B - 1 - x) as i32 * left[y] + (x + 1) as i32 * tr;
                    let v = (B - 1 - y) as i32 * top[x] + (y + 1) as i32 * bl;
                    p[y * B + x] = (h + v + B as i32) >> 4;
                }
            }
        }
    }
    p
}

fn coeff_bits(levels: &Block) -> u64 {
    let mut bits = 0;
    let mut run = 0u32;
    for &i in &ZIGZAG {
        let l = levels[i];
        if l == 0 {
            run += 1;
        } else {
            bits += ue_len(run + 1) + ue_len(l.unsigned_abs() - 1) + 1;
            run = 0;
        }
    }
    bits + 1 // end of block
}

fn write_coeffs(w: &mut BitWriter, levels: &Block) {
    let mut run = 0u32;
    for &i in &ZIGZAG {
        let l = levels[i];
        if l == 0 {
            run += 1;
        } else {
            w.put_ue(run + 1);
            w.put_ue(l.unsigned_abs() - 1);
            w.put_bit(l < 0);
            run = 0;
        }
    }
    w.put_ue(0);
}

fn read_coeffs(r: &mut BitReader) -> Result<Block> {
    let mut levels = [0i32; 64];
    let mut pos = 0usize;
    loop {
        let at = r.position();
        let sym = r.ue()?;
        if sym == 0 {
            return Ok(levels);
        }
        pos += (sym - 1) as usize;
        if pos >= 64 {
            return Err(Error::bits(at, "coefficient run past end of block"));
        }
        let mag = r.ue()? as i64 + 1;
        if mag > i32::MAX as i64 {
            return Err(Error::bits(at, "coefficient level out of range"));
        }
        let neg = r.bit()?;
        levels[ZIGZAG[pos]] = if neg { -(mag as i32) } else { mag as i32 };
        pos += 1;
    }
}

fn reconstruct(pred: &Block, levels: &Block, qp: u8) -> [u8; 64] {
    let res = transform::inverse(&transform::dequantize(levels, qp));
    std::array::from_fn(|i| (pred[i] + res[i]).clamp(0, 255) as u8)
}

fn store(recon: &mut Plane, by: usize, bx: usize, block: &[u8; 64]) {
    for y in 0..B {
        recon.row_mut(by * B + y)[bx * B..(bx + 1) * B].copy_from_slice(&block[y * B..(y + 1) * B]);
    }
}

/// Codes a plane, choosing each block's prediction mode by `D + lam * R`.
pub fn encode_plane_intra(p: &Plane, qp: Qp, lam: f64, nbr: &Neighbors) -> Result<CodedBlock> {
    let (w, h) = (p.width(), p.height());
    check_dims(w, h)?;
    nbr.validate(w, h)?;
    let q = qp.value();
    let mut recon = Plane::new(w, h, 0);
    let mut payload = BitWriter::new();
    let mut modes = Vec::with_capacity((w / B) * (h / B));
    let mut distortion = 0u64;

    for by in 0..h / B {
        for bx in 0..w / B {
            let orig: [i32; 64] =
                std::array::from_fn(|i| p.get(by * B + i / B, bx * B + i % B) as i32);
            let (top, left) = references(&recon, nbr, by, bx);

            let mut best: Option<(f64, PredMode, Block, [u8; 64], u64)> = None;
            for mode in PredMode::ALL {
                let pred = predict(mode, &top, &left);
                let residual: Block = std::array::from_fn(|i| orig[i] - pred[i]);
                let levels = transform::quantize(&transform::forward(&residual), q);
                let rec = reconstruct(&pred, &levels, q);
                let d: u64 = orig
                    .iter()
                    .zip(&rec)
                    .map(|(&o, &r)| ((o - r as i32) * (o - r as i32)) as u64)
                    .sum();
                let bits = 2 + coeff_bits(&levels);
                let j = d as f64 + lam * bits as f64;
                if best.as_ref().map_or(true, |b| j < b.0) {
                    best = Some((j, mode, levels, rec, d));
                }
            }
            let (_, mode, levels, rec, d) = best.expect("four candidate modes");
            payload.put_bits(mode as u64, 2);
            write_coeffs(&mut payload, &levels);
            store(&mut recon, by, bx, &rec);
            distortion += d;
            modes.push(mode);
        }
    }
    Ok(CodedBlock {
        bits: payload.len(),
        payload,
        recon,
        distortion_ssd: distortion,
        modes,
    })
}

/// Decodes one plane from the reader's current position.
pub fn decode_plane_intra(
    r: &mut BitReader,
    w: usize,
    h: usize,
    qp: Qp,
    nbr: &Neighbors,
) -> Result<Plane> {
    check_dims(w, h)?;
    nbr.validate(w, h)?;
    let q = qp.value();
    let mut recon = Plane::new(w, h, 0);
    for by in 0..h / B {
        for bx in 0..w / B {
            let mode = PredMode::from_bits(r.bits(2)?);
            let levels = read_coeffs(r)?;
            let (top, left) = references(&recon, nbr, by, bx);
            let rec = reconstruct(&predict(mode, &top, &left), &levels, q);
            store(&mut recon, by, bx, &rec);
        }
    }
    Ok(recon)
}

/// Decodes a standalone payload, requiring that it is consumed exactly.
pub fn decode_payload(
    payload: &[u8],
    bits: u64,
    w: usize,
    h: usize,
    qp: Qp,
    nbr: &Neighbors,
) -> Result<Plane> {
    let mut r = BitReader::new(payload, bits);
    let plane = decode_plane_intra(&mut r, w, h, qp, nbr)?;
    if r.remaining() != 0 {
        return Err(Error::bits(r.position(), "trailing bits after plane"));
    }
    Ok(plane)
}
