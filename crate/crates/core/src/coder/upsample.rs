//! Up-sampling of one low-resolution CTU from the LR reference planes.
//!
//! Context around the CTU is read from the reference with the frame edge
//! handled by replication; a sample whose source CTU has not been
//! reconstructed yet reads as zero. In the first (in-loop) stage only the
//! current CTU and those before it in raster order are reconstructed; in the
//! second stage every CTU is.

use super::models::ModelPair;
use super::UpMethod;
use crate::error::{Error, Result};
use crate::frame::{Channel, CtuGrid, Plane, Yuv, CTU_SIZE};
use crate::nn::Tensor;
use crate::resample::{downsample_2x, upsample_dctif_tile, FilterKind, CONTEXT};

/// LR luma samples per CTU side.
pub const LR_LUMA: usize = CTU_SIZE / 2;
/// LR chroma samples per CTU side.
pub const LR_CHROMA: usize = CTU_SIZE / 4;
/// Side of the luma network input tile.
pub const LUMA_TILE: usize = LR_LUMA + 2 * CONTEXT;
/// Side of each chroma network input tile (after luma down-sampling).
pub const CHROMA_TILE: usize = LR_CHROMA + 2 * CONTEXT;
/// Offset of the CTU inside the network output, in output samples.
pub const OUTPUT_CROP: usize = 2 * CONTEXT;

/// Which CTUs count as reconstructed when gathering context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Availability {
    /// In-loop: CTUs with raster index up to and including this one.
    Causal(usize),
    /// After the whole frame is coded.
    All,
}

impl Availability {
    fn has(self, idx: usize) -> bool {
        match self {
            Availability::Causal(cur) => idx <= cur,
            Availability::All => true,
        }
    }
}

/// `w`x`h` window of an LR reference plane whose CTUs are `ctu` samples wide.
#[allow(clippy::too_many_arguments)]
pub fn reference_tile(
    plane: &Plane,
    ctu: usize,
    grid: &CtuGrid,
    avail: Availability,
    top: isize,
    left: isize,
    w: usize,
    h: usize,
) -> Plane {
    let (pw, ph) = (plane.width() as isize, plane.height() as isize);
    Plane::from_fn(w, h, |i, j| {
        let r = (top + i as isize).clamp(0, ph - 1) as usize;
        let c = (left + j as isize).clamp(0, pw - 1) as usize;
        if avail.has(grid.index(r / ctu, c / ctu)) {
            plane.get(r, c)
        } else {
            0
        }
    })
}

fn check_pos(grid: &CtuGrid, row: usize, col: usize) -> Result<()> {
    if !grid.contains(row, col) {
        return Err(Error::arg(format!(
            "CTU ({row}, {col}) outside {}x{} grid",
            grid.rows, grid.cols
        )));
    }
    Ok(())
}

/// Context tile of one channel: the CTU core plus `CONTEXT` samples per side.
pub fn channel_tile(lr: &Yuv, grid: &CtuGrid, row: usize, col: usize, ch: Channel, avail: Availability) -> Result<Plane> {
    check_pos(grid, row, col)?;
    let n = if ch.is_luma() { LR_LUMA } else { LR_CHROMA };
    let c = CONTEXT as isize;
    Ok(reference_tile(
        lr.plane(ch),
        n,
        grid,
        avail,
        (row * n) as isize - c,
        (col * n) as isize - c,
        n + 2 * CONTEXT,
        n + 2 * CONTEXT,
    ))
}

/// Luma conditioning plane for the chroma network: an LR luma window with
/// twice the context, down-sampled to chroma size.
pub fn luma_for_chroma_tile(lr: &Yuv, grid: &CtuGrid, row: usize, col: usize, avail: Availability) -> Result<Plane> {
    check_pos(grid, row, col)?;
    let c = 2 * CONTEXT as isize;
    let t = reference_tile(
        &lr.y,
        LR_LUMA,
        grid,
        avail,
        (row * LR_LUMA) as isize - c,
        (col * LR_LUMA) as isize - c,
        LR_LUMA + 4 * CONTEXT,
        LR_LUMA + 4 * CONTEXT,
    );
    downsample_2x(&t)
}

/// Network input tensor scaled to `[0, 1]`.
pub fn to_input(planes: &[&Plane]) -> Result<Tensor<f32>> {
    let (w, h) = (planes[0].width(), planes[0].height());
    let mut data = Vec::with_capacity(planes.len() * w * h);
    for p in planes {
        if (p.width(), p.height()) != (w, h) {
            return Err(Error::arg("input planes differ in size"));
        }
        data.extend(p.data().iter().map(|&v| v as f32 / 255.0));
    }
    Tensor::from_vec(&[planes.len(), h, w], data)
}

/// Adds channel `ch` of a network residual (cropped at [`OUTPUT_CROP`]) to a
/// DCTIF up-sample, in 8-bit sample units.
pub fn apply_residual(dctif: &Plane, residual: &Tensor<f32>, ch: usize) -> Result<Plane> {
    let (c, h, w) = residual.chw()?;
    let (bw, bh) = (dctif.width(), dctif.height());
    if ch >= c || OUTPUT_CROP + bh > h || OUTPUT_CROP + bw > w {
        return Err(Error::arg(format!(
            "residual {:?} cannot cover a {bw}x{bh} block",
            residual.shape()
        )));
    }
    let data = residual.data();
    Ok(Plane::from_fn(bw, bh, |r, q| {
        let v = data[(ch * h + OUTPUT_CROP + r) * w + OUTPUT_CROP + q] * 255.0;
        let d = if v.is_finite() { v.round() as i32 } else { 0 };
        (dctif.get(r, q) as i32 + d).clamp(0, 255) as u8
    }))
}

/// DCTIF up-sampling of all three channels.
pub fn dctif_ctu(lr: &Yuv, grid: &CtuGrid, row: usize, col: usize, avail: Availability) -> Result<[Plane; 3]> {
    let up = |ch: Channel, kind| upsample_dctif_tile(&channel_tile(lr, grid, row, col, ch, avail)?, kind);
    Ok([
        up(Channel::Y, FilterKind::Luma)?,
        up(Channel::Cb, FilterKind::Chroma)?,
        up(Channel::Cr, FilterKind::Chroma)?,
    ])
}

/// Network up-sampling of the requested channels, given their DCTIF results.
#[allow(clippy::too_many_arguments)]
pub fn cnn_ctu(
    lr: &Yuv,
    grid: &CtuGrid,
    row: usize,
    col: usize,
    avail: Availability,
    models: ModelPair<'_>,
    dctif: &[Plane; 3],
    want: [bool; 3],
) -> Result<[Option<Plane>; 3]> {
    let mut out = [None, None, None];
    if want[0] {
        let tile = channel_tile(lr, grid, row, col, Channel::Y, avail)?;
        let res = models.luma.residual(&to_input(&[&tile])?)?;
        out[0] = Some(apply_residual(&dctif[0], &res, 0)?);
    }
    if want[1] || want[2] {
        let y = luma_for_chroma_tile(lr, grid, row, col, avail)?;
        let cb = channel_tile(lr, grid, row, col, Channel::Cb, avail)?;
        let cr = channel_tile(lr, grid, row, col, Channel::Cr, avail)?;
        let res = models.chroma.residual(&to_input(&[&y, &cb, &cr])?)?;
        for k in 1..3 {
            if want[k] {
                out[k] = Some(apply_residual(&dctif[k], &res, k - 1)?);
            }
        }
    }
    Ok(out)
}

/// Up-samples a CTU with a fixed method per channel.
pub fn upsample_ctu(
    lr: &Yuv,
    grid: &CtuGrid,
    row: usize,
    col: usize,
    avail: Availability,
    methods: [UpMethod; 3],
    models: Option<ModelPair<'_>>,
) -> Result<[Plane; 3]> {
    let mut planes = dctif_ctu(lr, grid, row, col, avail)?;
    let want = methods.map(|m| m == UpMethod::Cnn);
    if want.iter().any(|&w| w) {
        let models = models.ok_or_else(|| Error::Config("CNN up-sampling requested without models".into()))?;
        let cnn = cnn_ctu(lr, grid, row, col, avail, models, &planes, want)?;
        for (p, c) in planes.iter_mut().zip(cnn) {
            if let Some(c) = c {
                *p = c;
            }
        }
    }
    Ok(planes)
}
