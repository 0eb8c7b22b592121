//! The adaptive-resolution frame coder.
//!
//! Each CTU is coded twice: at full resolution, and down-sampled by two at
//! `QP - 6` with `lambda / 4`, then up-sampled back with DCTIF or the network
//! (chosen per channel by distortion). The cheaper of the two by
//! `D + lambda * R` is kept, where `D` is the full-resolution Y+Cb+Cr SSD and
//! `R` includes one mode bit, plus three up-sampler flags for low-resolution
//! CTUs. Once the whole frame is coded, low-resolution CTUs are up-sampled
//! again with context on all four sides.
//!
//! Bitstream: a 13-byte header
//!
//! ```text
//! "ARIC" | u16 version | u16 width | u16 height | u8 qp | u8 model_qp_tag | u8 flags
//! ```
//!
//! (little-endian; flags bit 0 = second stage on, bit 1 = some CTU uses the
//! network) followed by bit-packed CTU records in raster order:
//! `mode` (1 = low), three up-sampler flags if low (1 = network, Y/Cb/Cr),
//! then the Y, Cb and Cr intra payloads. The records are padded with zero
//! bits to a whole byte at the end.

pub mod models;
pub mod upsample;

pub use models::{ModelPair, ModelSet};
pub use upsample::Availability;

use crate::error::{Error, Result};
use crate::frame::{Channel, CtuGrid, Frame, Plane, Yuv, CTU_SIZE};
use crate::intra::bits::{BitReader, BitWriter};
use crate::intra::{decode_plane_intra, encode_plane_intra, lambda_with_constant, Neighbors, Qp, LAMBDA_CONSTANT};
use crate::resample::{downsample_2x, downsample_frame};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"ARIC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 13;

/// Low-resolution CTUs are coded this many QP steps finer.
pub const LOW_QP_OFFSET: i32 = 6;
/// Low-resolution CTUs use `lambda / LOW_LAMBDA_DIVISOR`.
pub const LOW_LAMBDA_DIVISOR: f64 = 4.0;
/// Signalling bits of a full-resolution CTU (the mode bit).
pub const FULL_OVERHEAD_BITS: u64 = 1;
/// Signalling bits of a low-resolution CTU (mode bit and three flags).
pub const LOW_OVERHEAD_BITS: u64 = 4;

pub const MIN_FRAME_QP: i32 = LOW_QP_OFFSET;
pub const MAX_FRAME_QP: i32 = 51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Full,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpMethod {
    Cnn,
    Dctif,
}

impl UpMethod {
    pub fn name(self) -> &'static str {
        match self {
            UpMethod::Cnn => "cnn",
            UpMethod::Dctif => "dctif",
        }
    }
}

impl std::str::FromStr for UpMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(UpMethod::Cnn),
            "dctif" => Ok(UpMethod::Dctif),
            _ => Err(Error::arg(format!("unknown up-sampler {s:?} (cnn|dctif)"))),
        }
    }
}

/// Rate and distortion of one coding trial of a CTU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    /// Payload plus signalling bits.
    pub bits: u64,
    /// Y+Cb+Cr SSD at full resolution.
    pub ssd: u64,
    /// Y+Cb+Cr SSD at low resolution (low trial only).
    pub ssd_low: Option<u64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtuDecision {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub mode: Mode,
    /// Per-channel up-sampler (Y, Cb, Cr); only for low-resolution CTUs.
    pub up: Option<[UpMethod; 3]>,
    /// Bits spent on this CTU, signalling included.
    pub bits: u64,
    /// Full-resolution SSD of the chosen reconstruction (before the second stage).
    pub d_full: u64,
    /// Low-resolution SSD, for low-resolution CTUs.
    pub d_low: Option<u64>,
    pub full_trial: Option<Trial>,
    pub low_trial: Option<Trial>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForceMode {
    Full,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodeOptions {
    pub force_mode: Option<ForceMode>,
    pub force_up: Option<UpMethod>,
    pub stage2: bool,
    pub lambda_constant: f64,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            force_mode: None,
            force_up: None,
            stage2: true,
            lambda_constant: LAMBDA_CONSTANT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncodeOutput {
    pub bitstream: Vec<u8>,
    /// Final reconstruction, as the decoder produces it.
    pub recon: Frame,
    /// Reconstruction before the second up-sampling stage.
    pub stage1_recon: Frame,
    pub decisions: Vec<CtuDecision>,
    /// Final low-resolution reference planes.
    pub lr_ref: Yuv,
    pub model_tag: Option<u8>,
}

impl EncodeOutput {
    /// Header plus record bits, in bits, before the final byte padding.
    pub fn record_bits(&self) -> u64 {
        self.decisions.iter().map(|d| d.bits).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub width: u16,
    pub height: u16,
    pub qp: u8,
    pub model_qp_tag: u8,
    pub stage2: bool,
    pub cnn: bool,
}

impl Header {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(MAGIC);
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        b[6..8].copy_from_slice(&self.width.to_le_bytes());
        b[8..10].copy_from_slice(&self.height.to_le_bytes());
        b[10] = self.qp;
        b[11] = self.model_qp_tag;
        b[12] = self.stage2 as u8 | (self.cnn as u8) << 1;
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<Header> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::bits(bytes.len() as u64 * 8, "bitstream shorter than its header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::bits(0, "bad magic, not an ARIC bitstream"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::bits(32, format!("unsupported bitstream version {version}")));
        }
        let flags = bytes[12];
        if flags & !3 != 0 {
            return Err(Error::bits(96, format!("unknown header flags {flags:#04x}")));
        }
        let h = Header {
            width: u16::from_le_bytes([bytes[6], bytes[7]]),
            height: u16::from_le_bytes([bytes[8], bytes[9]]),
            qp: bytes[10],
            model_qp_tag: bytes[11],
            stage2: flags & 1 != 0,
            cnn: flags & 2 != 0,
        };
        if h.width == 0 || h.height == 0 {
            return Err(Error::bits(48, "zero frame dimension"));
        }
        if !(MIN_FRAME_QP..=MAX_FRAME_QP).contains(&(h.qp as i32)) {
            return Err(Error::bits(80, format!("QP {} out of range", h.qp)));
        }
        Ok(h)
    }
}

/// Frame QP with its derived low-resolution parameters.
#[derive(Debug, Clone, Copy)]
pub struct RdParams {
    pub qp: Qp,
    pub qp_low: Qp,
    pub lambda: f64,
    pub lambda_low: f64,
}

impl RdParams {
    pub fn new(qp: Qp, lambda_constant: f64) -> Result<Self> {
        let q = qp.value() as i32;
        if !(MIN_FRAME_QP..=MAX_FRAME_QP).contains(&q) {
            return Err(Error::arg(format!(
                "frame QP {q} outside {MIN_FRAME_QP}..={MAX_FRAME_QP}"
            )));
        }
        let lambda = lambda_with_constant(qp, lambda_constant);
        Ok(RdParams {
            qp,
            qp_low: Qp::new(q - LOW_QP_OFFSET)?,
            lambda,
            lambda_low: lambda / LOW_LAMBDA_DIVISOR,
        })
    }
}

/// Samples bordering a `w`x`h` region of `p` at `(y0, x0)` from above and the left.
pub fn region_neighbors(p: &Plane, y0: usize, x0: usize, w: usize, h: usize) -> Neighbors {
    Neighbors {
        top: (y0 > 0).then(|| p.row(y0 - 1)[x0..x0 + w].to_vec()),
        left: (x0 > 0).then(|| (y0..y0 + h).map(|r| p.get(r, x0 - 1)).collect()),
    }
}

/// Side length of a CTU's block of channel `ch`, at full (`low = false`) or
/// low resolution.
pub fn ctu_side(ch: Channel, low: bool) -> usize {
    let s = if ch.is_luma() { CTU_SIZE } else { CTU_SIZE / 2 };
    if low {
        s / 2
    } else {
        s
    }
}

fn blank_lr(f: &Frame) -> Yuv {
    Yuv {
        y: Plane::new(f.width() / 2, f.height() / 2, 0),
        cb: Plane::new(f.width() / 4, f.height() / 4, 0),
        cr: Plane::new(f.width() / 4, f.height() / 4, 0),
    }
}

fn blank_frame(w: usize, h: usize, ow: usize, oh: usize) -> Result<Frame> {
    Frame::from_padded(
        Plane::new(w, h, 0),
        Plane::new(w / 2, h / 2, 0),
        Plane::new(w / 2, h / 2, 0),
        ow,
        oh,
    )
}

/// Writes a full-resolution CTU into the HR recon and its down-sampled
/// version into the LR reference.
fn store_full(recon: &mut Frame, lr: &mut Yuv, row: usize, col: usize, blocks: &Yuv) -> Result<()> {
    recon.write_ctu(row, col, blocks)?;
    for ch in Channel::ALL {
        let s = ctu_side(ch, true);
        lr.plane_mut(ch).paste(row * s, col * s, &downsample_2x(blocks.plane(ch))?)?;
    }
    Ok(())
}

fn store_low_ref(lr: &mut Yuv, row: usize, col: usize, blocks: &[Plane; 3]) -> Result<()> {
    for (ch, b) in Channel::ALL.into_iter().zip(blocks) {
        let s = ctu_side(ch, true);
        lr.plane_mut(ch).paste(row * s, col * s, b)?;
    }
    Ok(())
}

fn yuv(planes: [Plane; 3]) -> Yuv {
    let [y, cb, cr] = planes;
    Yuv { y, cb, cr }
}

struct Coded {
    payloads: Vec<BitWriter>,
    recon: [Plane; 3],
    bits: u64,
    ssd: u64,
}

fn code_ctu_planes(src: [&Plane; 3], refs: &[Plane; 3], row: usize, col: usize, low: bool, qp: Qp, lam: f64) -> Result<Coded> {
    let mut payloads = Vec::with_capacity(3);
    let mut recon = Vec::with_capacity(3);
    let (mut bits, mut ssd) = (0, 0);
    for (ch, s) in Channel::ALL.into_iter().zip(src) {
        let n = ctu_side(ch, low);
        let nbr = region_neighbors(&refs[ch.index()], row * n, col * n, n, n);
        let cb = encode_plane_intra(s, qp, lam, &nbr)?;
        bits += cb.bits;
        ssd += cb.distortion_ssd;
        payloads.push(cb.payload);
        recon.push(cb.recon);
    }
    Ok(Coded {
        payloads,
        recon: recon.try_into().expect("three planes"),
        bits,
        ssd,
    })
}

fn ssd3(a: &[Plane; 3], b: &Yuv) -> Result<u64> {
    Ok(a[0].ssd(&b.y)? + a[1].ssd(&b.cb)? + a[2].ssd(&b.cr)?)
}

/// Encodes one frame.
pub fn encode_frame(f: &Frame, qp: Qp, models: &ModelSet, opts: &EncodeOptions) -> Result<EncodeOutput> {
    let rd = RdParams::new(qp, opts.lambda_constant)?;
    if f.orig_width() > u16::MAX as usize || f.orig_height() > u16::MAX as usize {
        return Err(Error::arg("frame too large for the bitstream header"));
    }
    let needs_cnn = opts.force_mode != Some(ForceMode::Full) && opts.force_up != Some(UpMethod::Dctif);
    let pair = if needs_cnn {
        Some(models.nearest(qp.value()).ok_or_else(|| {
            Error::Config("no luma/chroma model pair available; use --force-up dctif or supply models".into())
        })?)
    } else {
        None
    };

    let grid = f.grid();
    let lr_orig = downsample_frame(f)?;
    let mut recon = blank_frame(f.width(), f.height(), f.orig_width(), f.orig_height())?;
    let mut lr = blank_lr(f);
    let mut w = BitWriter::new();
    let mut decisions = Vec::with_capacity(grid.len());

    for idx in 0..grid.len() {
        let (row, col) = grid.position(idx);
        let orig = f.extract_ctu(row, col)?;
        let start = w.len();

        let full = if opts.force_mode != Some(ForceMode::Low) {
            let refs = [recon.y.clone(), recon.cb.clone(), recon.cr.clone()];
            let c = code_ctu_planes([&orig.y, &orig.cb, &orig.cr], &refs, row, col, false, rd.qp, rd.lambda)?;
            let bits = c.bits + FULL_OVERHEAD_BITS;
            let t = Trial {
                bits,
                ssd: c.ssd,
                ssd_low: None,
                cost: c.ssd as f64 + rd.lambda * bits as f64,
            };
            Some((c, t))
        } else {
            None
        };

        let low = if opts.force_mode != Some(ForceMode::Full) {
            let src: Vec<Plane> = Channel::ALL
                .iter()
                .map(|&ch| {
                    let n = ctu_side(ch, true);
                    lr_orig.plane(ch).crop(row * n, col * n, n, n)
                })
                .collect::<Result<_>>()?;
            let refs = [lr.y.clone(), lr.cb.clone(), lr.cr.clone()];
            let c = code_ctu_planes([&src[0], &src[1], &src[2]], &refs, row, col, true, rd.qp_low, rd.lambda_low)?;
            store_low_ref(&mut lr, row, col, &c.recon)?;
            let avail = Availability::Causal(idx);
            let dctif = upsample::dctif_ctu(&lr, &grid, row, col, avail)?;
            let want = [opts.force_up != Some(UpMethod::Dctif); 3];
            let cnn = match pair {
                Some(p) if want[0] => upsample::cnn_ctu(&lr, &grid, row, col, avail, p, &dctif, want)?,
                _ => [None, None, None],
            };
            let mut up = [UpMethod::Dctif; 3];
            let mut planes = dctif.clone();
            for ch in Channel::ALL {
                let k = ch.index();
                if let Some(cp) = &cnn[k] {
                    let o = orig.plane(ch);
                    if opts.force_up == Some(UpMethod::Cnn) || cp.ssd(o)? < dctif[k].ssd(o)? {
                        up[k] = UpMethod::Cnn;
                        planes[k] = cp.clone();
                    }
                }
            }
            let ssd = ssd3(&planes, &orig)?;
            let ssd_low = c.ssd;
            let bits = c.bits + LOW_OVERHEAD_BITS;
            let t = Trial {
                bits,
                ssd,
                ssd_low: Some(ssd_low),
                cost: ssd as f64 + rd.lambda * bits as f64,
            };
            Some((c, t, up, planes))
        } else {
            None
        };

        let choose_low = match (&full, &low) {
            (Some((_, tf)), Some((_, tl, _, _))) => tl.cost < tf.cost,
            (None, Some(_)) => true,
            _ => false,
        };

        let full_trial = full.as_ref().map(|x| x.1);
        let low_trial = low.as_ref().map(|x| x.1);
        let decision = if choose_low {
            let (c, t, up, planes) = low.expect("low trial ran");
            w.put_bit(true);
            for m in up {
                w.put_bit(m == UpMethod::Cnn);
            }
            for p in &c.payloads {
                w.append(p);
            }
            // the LR reference already holds this CTU's low-resolution recon
            recon.write_ctu(row, col, &yuv(planes))?;
            CtuDecision {
                index: idx,
                row,
                col,
                mode: Mode::Low,
                up: Some(up),
                bits: t.bits,
                d_full: t.ssd,
                d_low: t.ssd_low,
                full_trial,
                low_trial,
            }
        } else {
            let (c, t) = full.expect("full trial ran");
            w.put_bit(false);
            for p in &c.payloads {
                w.append(p);
            }
            store_full(&mut recon, &mut lr, row, col, &yuv(c.recon))?;
            CtuDecision {
                index: idx,
                row,
                col,
                mode: Mode::Full,
                up: None,
                bits: t.bits,
                d_full: t.ssd,
                d_low: None,
                full_trial,
                low_trial,
            }
        };
        debug_assert_eq!(w.len() - start, decision.bits);
        decisions.push(decision);
    }

    let stage1_recon = recon.clone();
    if opts.stage2 {
        stage2_refine(&mut recon, &decisions, &lr, pair)?;
    }
    let uses_cnn = decisions
        .iter()
        .any(|d| d.up.is_some_and(|u| u.contains(&UpMethod::Cnn)));
    let header = Header {
        width: f.orig_width() as u16,
        height: f.orig_height() as u16,
        qp: qp.value(),
        model_qp_tag: if uses_cnn { pair.map_or(0, |p| p.tag) } else { 0 },
        stage2: opts.stage2,
        cnn: uses_cnn,
    };
    let mut bitstream = header.to_bytes().to_vec();
    bitstream.extend_from_slice(&w.into_bytes());
    Ok(EncodeOutput {
        bitstream,
        recon,
        stage1_recon,
        decisions,
        lr_ref: lr,
        model_tag: uses_cnn.then(|| pair.map(|p| p.tag)).flatten(),
    })
}

/// Second stage: re-up-samples every low-resolution CTU with context on all
/// sides, keeping each channel's method, and replaces the first-stage result.
pub fn stage2_refine(recon: &mut Frame, decisions: &[CtuDecision], lr: &Yuv, models: Option<ModelPair<'_>>) -> Result<()> {
    let grid = recon.grid();
    let refined: Vec<(usize, usize, [Plane; 3])> = decisions
        .par_iter()
        .filter_map(|d| d.up.map(|up| (d, up)))
        .map(|(d, up)| {
            upsample::upsample_ctu(lr, &grid, d.row, d.col, Availability::All, up, models)
                .map(|p| (d.row, d.col, p))
        })
        .collect::<Result<_>>()?;
    for (row, col, planes) in refined {
        recon.write_ctu(row, col, &yuv(planes))?;
    }
    Ok(())
}

fn decode_ctu(
    r: &mut BitReader,
    grid: &CtuGrid,
    idx: usize,
    rd: &RdParams,
    recon: &mut Frame,
    lr: &mut Yuv,
    pair: Option<ModelPair<'_>>,
) -> Result<Option<[UpMethod; 3]>> {
    let (row, col) = grid.position(idx);
    let low = r.bit()?;
    let up = if low {
        let mut up = [UpMethod::Dctif; 3];
        for m in &mut up {
            if r.bit()? {
                *m = UpMethod::Cnn;
            }
        }
        Some(up)
    } else {
        None
    };
    let (qp, refs) = if low {
        (rd.qp_low, [&lr.y, &lr.cb, &lr.cr])
    } else {
        (rd.qp, [&recon.y, &recon.cb, &recon.cr])
    };
    let mut blocks = Vec::with_capacity(3);
    for ch in Channel::ALL {
        let n = ctu_side(ch, low);
        let nbr = region_neighbors(refs[ch.index()], row * n, col * n, n, n);
        blocks.push(decode_plane_intra(r, n, n, qp, &nbr)?);
    }
    let blocks: [Plane; 3] = blocks.try_into().expect("three planes");
    match up {
        Some(methods) => {
            if methods.contains(&UpMethod::Cnn) && pair.is_none() {
                return Err(Error::bits(r.position(), "network flag set but the header declares no network"));
            }
            store_low_ref(lr, row, col, &blocks)?;
            let planes = upsample::upsample_ctu(lr, grid, row, col, Availability::Causal(idx), methods, pair)?;
            recon.write_ctu(row, col, &yuv(planes))?;
        }
        None => store_full(recon, lr, row, col, &yuv(blocks))?,
    }
    Ok(up)
}

/// Decodes a bitstream produced by [`encode_frame`].
pub fn decode_frame(bs: &[u8], models: &ModelSet) -> Result<Frame> {
    let h = Header::parse(bs)?;
    let rd = RdParams::new(Qp::new(h.qp as i32)?, LAMBDA_CONSTANT)?;
    let pair = if h.cnn {
        Some(models.exact(h.model_qp_tag).ok_or_else(|| {
            Error::Config(format!(
                "bitstream needs luma and chroma models with qp_tag {}, none loaded",
                h.model_qp_tag
            ))
        })?)
    } else {
        None
    };
    let (ow, oh) = (h.width as usize, h.height as usize);
    let grid = CtuGrid::for_size(ow, oh);
    let (pw, ph) = (grid.cols * CTU_SIZE, grid.rows * CTU_SIZE);
    let mut recon = blank_frame(pw, ph, ow, oh)?;
    let mut lr = blank_lr(&recon);
    let body = &bs[HEADER_LEN..];
    let mut r = BitReader::whole(body);
    let mut decisions = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let up = decode_ctu(&mut r, &grid, idx, &rd, &mut recon, &mut lr, pair).map_err(|e| Error::Ctu {
            ctu: idx,
            source: Box::new(e),
        })?;
        let (row, col) = grid.position(idx);
        decisions.push(CtuDecision {
            index: idx,
            row,
            col,
            mode: if up.is_some() { Mode::Low } else { Mode::Full },
            up,
            bits: 0,
            d_full: 0,
            d_low: None,
            full_trial: None,
            low_trial: None,
        });
    }
    let rest = r.remaining();
    if rest >= 8 || r.bits(rest as u32)? != 0 {
        return Err(Error::bits(r.position(), format!("{rest} bits of trailing data after the last CTU")));
    }
    if h.stage2 {
        stage2_refine(&mut recon, &decisions, &lr, pair)?;
    }
    Ok(recon)
}
