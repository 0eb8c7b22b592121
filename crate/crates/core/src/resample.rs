//! Fixed 2:1 down-sampling and DCT-based half-pel (DCTIF) 2x up-sampling.
//!
//! All filtering is done in 32-bit integers with a single rounding per
//! output sample, so results are bit-exact on every platform.

use crate::error::{Error, Result};
use crate::frame::{Frame, Plane, Yuv};

/// Anti-alias low-pass applied separably before 2:1 decimation, normalised by 64.
pub const DOWN_FILTER: [i32; 13] = [2, 0, -4, -3, 5, 19, 26, 19, 5, -3, -4, 0, 2];

/// 8-tap luma half-pel interpolation filter, normalised by 64.
pub const LUMA_HALF_PEL: [i32; 8] = [-1, 4, -11, 40, 40, -11, 4, -1];

/// 4-tap chroma half-pel interpolation filter, normalised by 64.
pub const CHROMA_HALF_PEL: [i32; 4] = [-4, 36, 36, -4];

/// Width, in low-resolution samples, of the context strip on each side of a block.
pub const CONTEXT: usize = 8;

/// Which half-pel filter a plane uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Luma,
    Chroma,
}

impl FilterKind {
    pub fn taps(self) -> &'static [i32] {
        match self {
            FilterKind::Luma => &LUMA_HALF_PEL,
            FilterKind::Chroma => &CHROMA_HALF_PEL,
        }
    }

    /// Number of low-resolution samples the filter reaches past a block edge.
    pub fn reach(self) -> usize {
        self.taps().len() / 2
    }
}

#[inline]
fn clip8(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

/// Low-pass filters and decimates by two in both directions.
///
/// Output sample `(i, j)` is centred on input `(2i, 2j)`; taps outside the
/// plane replicate the border.
pub fn downsample_2x(p: &Plane) -> Result<Plane> {
    let (w, h) = (p.width(), p.height());
    if w % 2 != 0 || h % 2 != 0 || w == 0 || h == 0 {
        return Err(Error::arg(format!(
            "down-sampling needs even nonzero dimensions, got {w}x{h}"
        )));
    }
    let (ow, oh) = (w / 2, h / 2);
    let half = (DOWN_FILTER.len() / 2) as isize;

    // horizontal pass, scaled by 64
    let mut tmp = vec![0i32; ow * h];
    for r in 0..h {
        let row = p.row(r);
        for j in 0..ow {
            let centre = 2 * j as isize;
            let mut s = 0i32;
            for (k, &f) in DOWN_FILTER.iter().enumerate() {
                let c = (centre + k as isize - half).clamp(0, w as isize - 1) as usize;
                s += f * row[c] as i32;
            }
            tmp[r * ow + j] = s;
        }
    }

    let mut out = Plane::new(ow, oh, 0);
    for i in 0..oh {
        let centre = 2 * i as isize;
        for j in 0..ow {
            let mut s = 0i32;
            for (k, &f) in DOWN_FILTER.iter().enumerate() {
                let r = (centre + k as isize - half).clamp(0, h as isize - 1) as usize;
                s += f * tmp[r * ow + j];
            }
            out.set(i, j, clip8((s + 2048) >> 12));
        }
    }
    Ok(out)
}

/// Down-samples all three planes of a frame.
pub fn downsample_frame(f: &Frame) -> Result<Yuv> {
    Ok(Yuv {
        y: downsample_2x(&f.y)?,
        cb: downsample_2x(&f.cb)?,
        cr: downsample_2x(&f.cr)?,
    })
}

/// Low-resolution samples surrounding a block, one optional strip per side.
///
/// The top and bottom strips are `CONTEXT` rows tall and span the block plus
/// both corners (`w + 2*CONTEXT` wide); left and right strips are `CONTEXT`
/// columns wide and exactly the block height. A missing strip reads as zeros.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BoundaryContext {
    pub top: Option<Plane>,
    pub bottom: Option<Plane>,
    pub left: Option<Plane>,
    pub right: Option<Plane>,
}

/// Availability of the four sides of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Sides {
    pub top: bool,
    pub bottom: bool,
    pub left: bool,
    pub right: bool,
}

impl Sides {
    pub const ALL: Sides = Sides {
        top: true,
        bottom: true,
        left: true,
        right: true,
    };
    pub const NONE: Sides = Sides {
        top: false,
        bottom: false,
        left: false,
        right: false,
    };
}

impl BoundaryContext {
    /// No context at all: every sample outside the block reads as zero.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn available(&self) -> Sides {
        Sides {
            top: self.top.is_some(),
            bottom: self.bottom.is_some(),
            left: self.left.is_some(),
            right: self.right.is_some(),
        }
    }

    /// Checks strip extents against a `w`x`h` block.
    pub fn validate(&self, w: usize, h: usize) -> Result<()> {
        let horiz = (w + 2 * CONTEXT, CONTEXT);
        let vert = (CONTEXT, h);
        for (name, strip, dims) in [
            ("top", &self.top, horiz),
            ("bottom", &self.bottom, horiz),
            ("left", &self.left, vert),
            ("right", &self.right, vert),
        ] {
            if let Some(p) = strip {
                if (p.width(), p.height()) != dims {
                    return Err(Error::arg(format!(
                        "{name} context is {}x{}, expected {}x{} for a {w}x{h} block",
                        p.width(),
                        p.height(),
                        dims.0,
                        dims.1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Cuts the strips for `sides` out of a `(w + 2*CONTEXT) x (h + 2*CONTEXT)` tile.
    pub fn from_tile(tile: &Plane, sides: Sides) -> Result<Self> {
        let (tw, th) = (tile.width(), tile.height());
        if tw <= 2 * CONTEXT || th <= 2 * CONTEXT {
            return Err(Error::arg(format!("tile {tw}x{th} too small for context")));
        }
        let (w, h) = (tw - 2 * CONTEXT, th - 2 * CONTEXT);
        Ok(BoundaryContext {
            top: sides.top.then(|| tile.crop(0, 0, tw, CONTEXT)).transpose()?,
            bottom: sides
                .bottom
                .then(|| tile.crop(CONTEXT + h, 0, tw, CONTEXT))
                .transpose()?,
            left: sides.left.then(|| tile.crop(CONTEXT, 0, CONTEXT, h)).transpose()?,
            right: sides
                .right
                .then(|| tile.crop(CONTEXT, CONTEXT + w, CONTEXT, h))
                .transpose()?,
        })
    }

    /// Block surrounded by its context, zeros where a side is missing.
    pub fn assemble(&self, block: &Plane) -> Result<Plane> {
        let (w, h) = (block.width(), block.height());
        self.validate(w, h)?;
        let mut tile = Plane::new(w + 2 * CONTEXT, h + 2 * CONTEXT, 0);
        tile.paste(CONTEXT, CONTEXT, block)?;
        if let Some(p) = &self.top {
            tile.paste(0, 0, p)?;
        }
        if let Some(p) = &self.bottom {
            tile.paste(CONTEXT + h, 0, p)?;
        }
        if let Some(p) = &self.left {
            tile.paste(CONTEXT, 0, p)?;
        }
        if let Some(p) = &self.right {
            tile.paste(CONTEXT, CONTEXT + w, p)?;
        }
        Ok(tile)
    }
}

/// Half-pel interpolation of the `w`x`h` region starting at `(off, off)` of
/// an extended sample buffer. Even output positions copy the input.
fn interp_2x(ext: &[i32], stride: usize, off: usize, w: usize, h: usize, kind: FilterKind) -> Plane {
    let taps = kind.taps();
    let lead = taps.len() / 2 - 1;
    let at = |r: usize, c: usize| ext[r * stride + c];
    // horizontal half-pel values (scaled by 64) for every row the vertical pass touches
    let rows_lo = off - lead;
    let rows_hi = off + h + taps.len() - lead - 1;
    let mut half_h = vec![0i32; (rows_hi - rows_lo) * w];
    for r in rows_lo..rows_hi {
        for c in 0..w {
            let base = off + c - lead;
            let mut s = 0;
            for (k, &f) in taps.iter().enumerate() {
                s += f * at(r, base + k);
            }
            half_h[(r - rows_lo) * w + c] = s;
        }
    }

    let mut out = Plane::new(2 * w, 2 * h, 0);
    for r in 0..h {
        let er = off + r;
        for c in 0..w {
            let ec = off + c;
            out.set(2 * r, 2 * c, clip8(at(er, ec)));
            out.set(2 * r, 2 * c + 1, clip8((half_h[(er - rows_lo) * w + c] + 32) >> 6));
            let mut v = 0;
            let mut d = 0;
            for (k, &f) in taps.iter().enumerate() {
                let rr = er + k - lead;
                v += f * at(rr, ec);
                d += f * half_h[(rr - rows_lo) * w + c];
            }
            out.set(2 * r + 1, 2 * c, clip8((v + 32) >> 6));
            out.set(2 * r + 1, 2 * c + 1, clip8((d + 2048) >> 12));
        }
    }
    out
}

/// DCTIF 2x up-sampling of a block; taps outside it read the context, or zero
/// where a side is not supplied.
pub fn upsample_dctif(p: &Plane, ctx: &BoundaryContext, kind: FilterKind) -> Result<Plane> {
    upsample_dctif_tile(&ctx.assemble(p)?, kind)
}

/// DCTIF 2x up-sampling of the core of a tile that carries `CONTEXT`
/// samples of context on every side.
pub fn upsample_dctif_tile(tile: &Plane, kind: FilterKind) -> Result<Plane> {
    let (tw, th) = (tile.width(), tile.height());
    if tw <= 2 * CONTEXT || th <= 2 * CONTEXT {
        return Err(Error::arg(format!("tile {tw}x{th} too small for context")));
    }
    let ext: Vec<i32> = tile.data().iter().map(|&v| v as i32).collect();
    Ok(interp_2x(&ext, tw, CONTEXT, tw - 2 * CONTEXT, th - 2 * CONTEXT, kind))
}

/// DCTIF 2x up-sampling of a whole plane with border replication past its edges.
pub fn upsample_dctif_replicate(p: &Plane, kind: FilterKind) -> Plane {
    let m = kind.reach();
    let ext_plane = p.pad_replicate(m, m, m, m);
    let ext: Vec<i32> = ext_plane.data().iter().map(|&v| v as i32).collect();
    interp_2x(&ext, ext_plane.width(), m, p.width(), p.height(), kind)
}

/// Nearest-neighbour 2x duplication, the crudest up-sampler.
pub fn upsample_nearest(p: &Plane) -> Plane {
    Plane::from_fn(p.width() * 2, p.height() * 2, |r, c| p.get(r / 2, c / 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn textured(w: usize, h: usize, seed: u32) -> Plane {
        Plane::from_fn(w, h, |r, c| {
            let x = (r as u32).wrapping_mul(2654435761) ^ (c as u32).wrapping_mul(40503) ^ seed;
            (x.wrapping_mul(2246822519) >> 24) as u8
        })
    }

    fn smooth(w: usize, h: usize) -> Plane {
        Plane::from_fn(w, h, |r, c| {
            let x = c as f64 / w as f64;
            let y = r as f64 / h as f64;
            (128.0 + 60.0 * (6.0 * x).sin() * (4.0 * y).cos() + 40.0 * (x * 17.0 + y * 5.0).sin()) as u8
        })
    }

    #[test]
    fn filters_have_unit_dc_gain() {
        assert_eq!(DOWN_FILTER.iter().sum::<i32>(), 64);
        assert_eq!(LUMA_HALF_PEL.iter().sum::<i32>(), 64);
        assert_eq!(CHROMA_HALF_PEL.iter().sum::<i32>(), 64);
        assert_eq!(FilterKind::Luma.reach(), 4);
        assert_eq!(FilterKind::Chroma.reach(), 2);
    }

    #[test]
    fn downsample_constant_and_dims() {
        let p = Plane::new(64, 64, 200);
        let d = downsample_2x(&p).unwrap();
        assert_eq!((d.width(), d.height()), (32, 32));
        assert!(d.data().iter().all(|&v| v == 200));
        assert!(downsample_2x(&Plane::new(63, 64, 0)).is_err());
    }

    #[test]
    fn downsample_impulse_response_matches_coefficients() {
        // A vertical line of +64 over a 128 pedestal: the vertical pass is
        // flat, so each output column reads 128 + one filter coefficient.
        let mut seen = [false; 13];
        for phase in 0..2 {
            let c0 = 32 + phase;
            let p = Plane::from_fn(64, 16, |_, c| if c == c0 { 192 } else { 128 });
            let d = downsample_2x(&p).unwrap();
            for j in 0..32 {
                let k = 2 * j as isize - c0 as isize + 6;
                let expect = if (0..13).contains(&k) {
                    seen[k as usize] = true;
                    128 + DOWN_FILTER[k as usize]
                } else {
                    128
                };
                for r in 0..8 {
                    assert_eq!(d.get(r, j) as i32, expect, "phase {phase} col {j}");
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn dctif_constant_with_full_context() {
        let block = Plane::new(32, 32, 100);
        let tile = Plane::new(48, 48, 100);
        let ctx = BoundaryContext::from_tile(&tile, Sides::ALL).unwrap();
        let up = upsample_dctif(&block, &ctx, FilterKind::Luma).unwrap();
        assert_eq!((up.width(), up.height()), (64, 64));
        assert!(up.data().iter().all(|&v| v == 100));
    }

    #[test]
    fn dctif_even_positions_copy_input() {
        let block = textured(16, 16, 3);
        let up = upsample_dctif(&block, &BoundaryContext::none(), FilterKind::Chroma).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                assert_eq!(up.get(2 * r, 2 * c), block.get(r, c));
            }
        }
    }

    #[test]
    fn malformed_context_rejected() {
        let block = Plane::new(32, 32, 1);
        let ctx = BoundaryContext {
            top: Some(Plane::new(32, 8, 0)),
            ..Default::default()
        };
        assert!(upsample_dctif(&block, &ctx, FilterKind::Luma).is_err());
    }

    #[test]
    fn bottom_right_context_changes_only_nearby_outputs() {
        for kind in [FilterKind::Luma, FilterKind::Chroma] {
            let tile = textured(48, 48, 11);
            let block = tile.crop(CONTEXT, CONTEXT, 32, 32).unwrap();
            let partial = Sides {
                top: true,
                left: true,
                bottom: false,
                right: false,
            };
            let a = upsample_dctif(&block, &BoundaryContext::from_tile(&tile, partial).unwrap(), kind).unwrap();
            let b = upsample_dctif(&block, &BoundaryContext::from_tile(&tile, Sides::ALL).unwrap(), kind).unwrap();
            let reach_hr = 2 * kind.reach();
            let mut any = false;
            for r in 0..64 {
                for c in 0..64 {
                    if a.get(r, c) != b.get(r, c) {
                        any = true;
                        assert!(r >= 64 - reach_hr || c >= 64 - reach_hr, "{kind:?} ({r},{c})");
                    }
                }
            }
            assert!(any);
        }
    }

    #[test]
    fn dctif_beats_nearest_on_smooth_content() {
        let p = smooth(128, 128);
        let lr = downsample_2x(&p).unwrap();
        let dct = upsample_dctif_replicate(&lr, FilterKind::Luma);
        let nn = upsample_nearest(&lr);
        assert!(p.ssd(&dct).unwrap() < p.ssd(&nn).unwrap());
    }

    #[test]
    fn replicate_variant_matches_context_variant() {
        let p = textured(16, 16, 5);
        let tile = p.pad_replicate(CONTEXT, CONTEXT, CONTEXT, CONTEXT);
        let ctx = BoundaryContext::from_tile(&tile, Sides::ALL).unwrap();
        for kind in [FilterKind::Luma, FilterKind::Chroma] {
            assert_eq!(
                upsample_dctif(&p, &ctx, kind).unwrap(),
                upsample_dctif_replicate(&p, kind)
            );
        }
    }

    proptest! {
        #[test]
        fn dc_preserved(v: u8, wb in 1usize..5, hb in 1usize..5) {
            let p = Plane::new(wb * 8, hb * 8, v);
            prop_assert!(downsample_2x(&p).unwrap().data().iter().all(|&x| x == v));
            for kind in [FilterKind::Luma, FilterKind::Chroma] {
                prop_assert!(upsample_dctif_replicate(&p, kind).data().iter().all(|&x| x == v));
            }
        }

        #[test]
        fn single_sample_change_is_local(seed: u32, r0 in 0usize..32, c0 in 0usize..32, delta in 1u8..60) {
            let p = textured(32, 32, seed);
            let mut q = p.clone();
            q.set(r0, c0, p.get(r0, c0).wrapping_add(delta));
            // down-sampling: output (i, j) sees inputs within 6 of (2i, 2j)
            let (a, b) = (downsample_2x(&p).unwrap(), downsample_2x(&q).unwrap());
            for i in 0..16 {
                for j in 0..16 {
                    if a.get(i, j) != b.get(i, j) {
                        prop_assert!((2 * i as isize - r0 as isize).abs() <= 6);
                        prop_assert!((2 * j as isize - c0 as isize).abs() <= 6);
                    }
                }
            }
            // up-sampling: output (r, c) sees inputs within the filter reach of (r/2, c/2)
            for kind in [FilterKind::Luma, FilterKind::Chroma] {
                let (a, b) = (upsample_dctif_replicate(&p, kind), upsample_dctif_replicate(&q, kind));
                let reach = kind.reach() as isize;
                for r in 0..64 {
                    for c in 0..64 {
                        if a.get(r, c) != b.get(r, c) {
                            prop_assert!((r as isize / 2 - r0 as isize).abs() <= reach);
                            prop_assert!((c as isize / 2 - c0 as isize).abs() <= reach);
                        }
                    }
                }
            }
        }
    }
}
