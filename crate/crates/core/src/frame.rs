//! Planar 8-bit YUV 4:2:0 frames, CTU tiling and raw I420 file I/O.
//!
//! Samples are stored row-major and addressed as `(row, col)` everywhere.
//! Frames whose dimensions are not CTU multiples are extended by border
//! replication at load time; the original size is kept so metrics and
//! output files cover only the real picture area.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Luma CTU size in samples.
pub const CTU_SIZE: usize = 64;

/// A single image channel.
#[derive(Clone, PartialEq, Eq)]
pub struct Plane {
    w: usize,
    h: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for Plane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Plane({}x{})", self.w, self.h)
    }
}

impl Plane {
    pub fn new(w: usize, h: usize, fill: u8) -> Self {
        Plane {
            w,
            h,
            data: vec![fill; w * h],
        }
    }

    pub fn from_vec(w: usize, h: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != w * h {
            return Err(Error::arg(format!(
                "plane {w}x{h} needs {} samples, got {}",
                w * h,
                data.len()
            )));
        }
        Ok(Plane { w, h, data })
    }

    pub fn from_fn(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                data.push(f(r, c));
            }
        }
        Plane { w, h, data }
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.w + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.data[row * self.w + col] = v;
    }

    /// Sample at a signed position, clamped into the plane (border replication).
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> u8 {
        let r = row.clamp(0, self.h as isize - 1) as usize;
        let c = col.clamp(0, self.w as isize - 1) as usize;
        self.get(r, c)
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.data[row * self.w..(row + 1) * self.w]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [u8] {
        &mut self.data[row * self.w..(row + 1) * self.w]
    }

    /// Copy of the `w`x`h` region whose top-left sample is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, w: usize, h: usize) -> Result<Plane> {
        if row + h > self.h || col + w > self.w {
            return Err(Error::arg(format!(
                "region {w}x{h} at ({row},{col}) exceeds plane {}x{}",
                self.w, self.h
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for r in row..row + h {
            data.extend_from_slice(&self.row(r)[col..col + w]);
        }
        Ok(Plane { w, h, data })
    }

    /// Writes `src` with its top-left sample at `(row, col)`.
    pub fn paste(&mut self, row: usize, col: usize, src: &Plane) -> Result<()> {
        if row + src.h > self.h || col + src.w > self.w {
            return Err(Error::arg(format!(
                "{:?} at ({row},{col}) exceeds plane {}x{}",
                src, self.w, self.h
            )));
        }
        for r in 0..src.h {
            self.row_mut(row + r)[col..col + src.w].copy_from_slice(src.row(r));
        }
        Ok(())
    }

    /// Extends the plane outwards, each margin sample copying the nearest edge sample.
    pub fn pad_replicate(&self, left: usize, right: usize, top: usize, bottom: usize) -> Plane {
        let w = self.w + left + right;
        let h = self.h + top + bottom;
        Plane::from_fn(w, h, |r, c| {
            self.get_clamped(r as isize - top as isize, c as isize - left as isize)
        })
    }

    /// Sum of squared differences.
    pub fn ssd(&self, other: &Plane) -> Result<u64> {
        self.check_same_dims(other)?;
        Ok(ssd_u8(&self.data, &other.data))
    }

    pub fn check_same_dims(&self, other: &Plane) -> Result<()> {
        if self.w != other.w || self.h != other.h {
            return Err(Error::arg(format!(
                "plane dimensions differ: {}x{} vs {}x{}",
                self.w, self.h, other.w, other.h
            )));
        }
        Ok(())
    }
}

pub(crate) fn ssd_u8(a: &[u8], b: &[u8]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum()
}

/// CTU tiling of a padded frame, in raster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CtuGrid {
    pub ctu_size: usize,
    pub cols: usize,
    pub rows: usize,
}

impl CtuGrid {
    pub fn for_size(width: usize, height: usize) -> Self {
        CtuGrid {
            ctu_size: CTU_SIZE,
            cols: width.div_ceil(CTU_SIZE),
            rows: height.div_ceil(CTU_SIZE),
        }
    }

    /// Total CTU count of the frame.
    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn position(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols
    }
}

/// A YUV 4:2:0 frame padded to whole CTUs.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
    orig_width: usize,
    orig_height: usize,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Frame({}x{}, original {}x{})",
            self.width(),
            self.height(),
            self.orig_width,
            self.orig_height
        )
    }
}

/// Three channels of a 4:2:0 picture region (a CTU, or a whole down-sampled frame).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Yuv {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

impl Yuv {
    pub fn plane(&self, ch: Channel) -> &Plane {
        match ch {
            Channel::Y => &self.y,
            Channel::Cb => &self.cb,
            Channel::Cr => &self.cr,
        }
    }

    pub fn plane_mut(&mut self, ch: Channel) -> &mut Plane {
        match ch {
            Channel::Y => &mut self.y,
            Channel::Cb => &mut self.cb,
            Channel::Cr => &mut self.cr,
        }
    }
}

/// Colour channel, in canonical Y, Cb, Cr order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Y,
    Cb,
    Cr,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Y, Channel::Cb, Channel::Cr];

    pub fn is_luma(self) -> bool {
        self == Channel::Y
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Chroma dimensions for a 4:2:0 picture of the given luma size.
pub fn chroma_dims(width: usize, height: usize) -> (usize, usize) {
    (width.div_ceil(2), height.div_ceil(2))
}

impl Frame {
    /// Builds a frame from unpadded planes, padding by border replication to whole CTUs.
    pub fn from_planes(y: Plane, cb: Plane, cr: Plane) -> Result<Frame> {
        let (ow, oh) = (y.width(), y.height());
        if ow == 0 || oh == 0 {
            return Err(Error::arg("frame dimensions must be nonzero"));
        }
        let (cw, ch) = chroma_dims(ow, oh);
        for (name, p) in [("cb", &cb), ("cr", &cr)] {
            if p.width() != cw || p.height() != ch {
                return Err(Error::arg(format!(
                    "{name} plane is {}x{}, expected {cw}x{ch} for {ow}x{oh} luma",
                    p.width(),
                    p.height()
                )));
            }
        }
        let pw = ow.div_ceil(CTU_SIZE) * CTU_SIZE;
        let ph = oh.div_ceil(CTU_SIZE) * CTU_SIZE;
        let y = y.pad_replicate(0, pw - ow, 0, ph - oh);
        let cb = cb.pad_replicate(0, pw / 2 - cw, 0, ph / 2 - ch);
        let cr = cr.pad_replicate(0, pw / 2 - cw, 0, ph / 2 - ch);
        Ok(Frame {
            y,
            cb,
            cr,
            orig_width: ow,
            orig_height: oh,
        })
    }

    /// Builds a frame from already padded planes.
    pub fn from_padded(
        y: Plane,
        cb: Plane,
        cr: Plane,
        orig_width: usize,
        orig_height: usize,
    ) -> Result<Frame> {
        let (w, h) = (y.width(), y.height());
        if w == 0 || h == 0 || w % CTU_SIZE != 0 || h % CTU_SIZE != 0 {
            return Err(Error::arg(format!(
                "padded frame {w}x{h} is not a whole number of CTUs"
            )));
        }
        if cb.width() != w / 2 || cb.height() != h / 2 || cr.width() != w / 2 || cr.height() != h / 2 {
            return Err(Error::arg("chroma planes must be half the luma size"));
        }
        if orig_width == 0 || orig_height == 0 || orig_width > w || orig_height > h {
            return Err(Error::arg(format!(
                "original size {orig_width}x{orig_height} does not fit padded {w}x{h}"
            )));
        }
        Ok(Frame {
            y,
            cb,
            cr,
            orig_width,
            orig_height,
        })
    }

    /// A frame with every sample of every plane set to `value`.
    pub fn constant(width: usize, height: usize, value: u8) -> Result<Frame> {
        let (cw, ch) = chroma_dims(width, height);
        Frame::from_planes(
            Plane::new(width, height, value),
            Plane::new(cw, ch, value),
            Plane::new(cw, ch, value),
        )
    }

    /// Padded luma width.
    pub fn width(&self) -> usize {
        self.y.width()
    }

    /// Padded luma height.
    pub fn height(&self) -> usize {
        self.y.height()
    }

    pub fn orig_width(&self) -> usize {
        self.orig_width
    }

    pub fn orig_height(&self) -> usize {
        self.orig_height
    }

    pub fn grid(&self) -> CtuGrid {
        CtuGrid::for_size(self.width(), self.height())
    }

    pub fn planes(&self) -> [&Plane; 3] {
        [&self.y, &self.cb, &self.cr]
    }

    pub fn planes_mut(&mut self) -> [&mut Plane; 3] {
        [&mut self.y, &mut self.cb, &mut self.cr]
    }

    pub fn plane(&self, ch: Channel) -> &Plane {
        match ch {
            Channel::Y => &self.y,
            Channel::Cb => &self.cb,
            Channel::Cr => &self.cr,
        }
    }

    pub fn plane_mut(&mut self, ch: Channel) -> &mut Plane {
        match ch {
            Channel::Y => &mut self.y,
            Channel::Cb => &mut self.cb,
            Channel::Cr => &mut self.cr,
        }
    }

    /// Planes cut back to the original picture area.
    pub fn cropped_planes(&self) -> [Plane; 3] {
        let (cw, ch) = chroma_dims(self.orig_width, self.orig_height);
        [
            self.y.crop(0, 0, self.orig_width, self.orig_height).expect("fits"),
            self.cb.crop(0, 0, cw, ch).expect("fits"),
            self.cr.crop(0, 0, cw, ch).expect("fits"),
        ]
    }

    pub fn extract_ctu(&self, row: usize, col: usize) -> Result<Yuv> {
        let grid = self.grid();
        if !grid.contains(row, col) {
            return Err(Error::arg(format!(
                "CTU ({row},{col}) outside {}x{} grid",
                grid.rows, grid.cols
            )));
        }
        let (ly, lx) = (row * CTU_SIZE, col * CTU_SIZE);
        let c = CTU_SIZE / 2;
        Ok(Yuv {
            y: self.y.crop(ly, lx, CTU_SIZE, CTU_SIZE)?,
            cb: self.cb.crop(ly / 2, lx / 2, c, c)?,
            cr: self.cr.crop(ly / 2, lx / 2, c, c)?,
        })
    }

    pub fn write_ctu(&mut self, row: usize, col: usize, blocks: &Yuv) -> Result<()> {
        let grid = self.grid();
        if !grid.contains(row, col) {
            return Err(Error::arg(format!(
                "CTU ({row},{col}) outside {}x{} grid",
                grid.rows, grid.cols
            )));
        }
        let (ly, lx) = (row * CTU_SIZE, col * CTU_SIZE);
        self.y.paste(ly, lx, &blocks.y)?;
        self.cb.paste(ly / 2, lx / 2, &blocks.cb)?;
        self.cr.paste(ly / 2, lx / 2, &blocks.cr)?;
        Ok(())
    }

    /// I420 bytes of the original picture area.
    pub fn to_i420(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(i420_len(self.orig_width, self.orig_height));
        for p in self.cropped_planes() {
            out.extend_from_slice(p.data());
        }
        out
    }

    pub fn from_i420(bytes: &[u8], width: usize, height: usize) -> Result<Frame> {
        if width == 0 || height == 0 {
            return Err(Error::arg(format!("zero frame dimension {width}x{height}")));
        }
        let need = i420_len(width, height);
        if bytes.len() < need {
            return Err(Error::arg(format!(
                "I420 {width}x{height} needs {need} bytes, got {}",
                bytes.len()
            )));
        }
        let (cw, ch) = chroma_dims(width, height);
        let ylen = width * height;
        let clen = cw * ch;
        let y = Plane::from_vec(width, height, bytes[..ylen].to_vec())?;
        let cb = Plane::from_vec(cw, ch, bytes[ylen..ylen + clen].to_vec())?;
        let cr = Plane::from_vec(cw, ch, bytes[ylen + clen..ylen + 2 * clen].to_vec())?;
        Frame::from_planes(y, cb, cr)
    }
}

/// Byte length of one I420 picture.
pub fn i420_len(width: usize, height: usize) -> usize {
    let (cw, ch) = chroma_dims(width, height);
    width * height + 2 * cw * ch
}

/// Reads one raw I420 picture (Y, then Cb, then Cr, row-major, 8-bit).
pub fn load_frame(path: &Path, width: usize, height: usize) -> Result<Frame> {
    if width == 0 || height == 0 {
        return Err(Error::arg(format!("zero frame dimension {width}x{height}")));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let need = i420_len(width, height);
    if bytes.len() < need {
        return Err(Error::ShortFile {
            path: path.to_path_buf(),
            expected: need as u64,
            actual: bytes.len() as u64,
        });
    }
    Frame::from_i420(&bytes, width, height)
}

/// Writes the original picture area as raw I420.
pub fn save_frame(path: &Path, frame: &Frame) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&frame.to_i420()).map_err(|e| Error::io(path, e))
}
