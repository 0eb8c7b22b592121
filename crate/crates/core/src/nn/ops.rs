//! Layer primitives on `(c, h, w)` tensors and their gradients.
//!
//! Convolution weights are laid out `(out, in, kh, kw)`. Transposed
//! convolution weights are laid out `(in, out, kh, kw)`, i.e. the layout of the
//! convolution they are the adjoint of.

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Stride of every transposed convolution.
pub const DECONV_STRIDE: usize = 2;

fn kernel4(w: &Tensor<impl Real>) -> Result<(usize, usize, usize, usize)> {
    match w.shape()[..] {
        [a, b, kh, kw] => Ok((a, b, kh, kw)),
        _ => Err(Error::arg(format!("expected a rank-4 kernel, got {:?}", w.shape()))),
    }
}

fn check_bias<T: Real>(b: &Tensor<T>, n: usize) -> Result<()> {
    if b.shape() != [n] {
        return Err(Error::arg(format!("bias shape {:?}, expected [{n}]", b.shape())));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let mut col = vec![T::zero(); c * kh * kw * oh * ow];
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let dst = &mut col[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..][..w];
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    // ox range with 0 <= ox + kx - pad < w
                    let lo = pad.saturating_sub(kx);
                    let hi = (w + pad).saturating_sub(kx).min(ow);
                    for ox in lo..hi {
                        line[ox] = src[ox + kx - pad];
                    }
                }
            }
        }
    }
    col
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(
    col: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let mut x = vec![T::zero(); c * h * w];
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let src = &col[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut x[(ci * h + iy as usize) * w..][..w];
                    let lo = pad.saturating_sub(kx);
                    let hi = (w + pad).saturating_sub(kx).min(ow);
                    for ox in lo..hi {
                        dst[ox + kx - pad] = dst[ox + kx - pad] + src[oy * ow + ox];
                    }
                }
            }
        }
    }
    x
}

fn conv_dims(h: usize, w: usize, kh: usize, kw: usize, pad: usize) -> Result<(usize, usize)> {
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    if ph < kh || pw < kw {
        return Err(Error::arg(format!(
            "{kh}x{kw} kernel does not fit a {h}x{w} input with padding {pad}"
        )));
    }
    Ok((ph - kh + 1, pw - kw + 1))
}

/// Stride-1 cross-correlation with `pad` zeros on every side.
pub fn conv_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, pad: usize) -> Result<Tensor<T>> {
    let (c, h, wd) = x.chw()?;
    let (o, ci, kh, kw) = kernel4(w)?;
    if ci != c {
        return Err(Error::arg(format!(
            "conv kernel {:?} does not match input {:?}",
            w.shape(),
            x.shape()
        )));
    }
    check_bias(b, o)?;
    let (oh, ow) = conv_dims(h, wd, kh, kw, pad)?;
    let n = oh * ow;
    let k = c * kh * kw;
    let col = im2col(x.data(), c, h, wd, kh, kw, pad, oh, ow);
    let mut out = vec![T::zero(); o * n];
    for (oc, chunk) in out.chunks_mut(n).enumerate() {
        chunk.fill(b.data()[oc]);
    }
    T::gemm(o, k, n, w.data(), k, 1, &col, n, 1, T::one(), &mut out, n, 1);
    Tensor::from_vec(&[o, oh, ow], out)
}

/// Gradients of [`conv_forward`]: `(dx, dw, db)`. `dx` is skipped when not needed.
pub fn conv_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    pad: usize,
    dy: &Tensor<T>,
    need_dx: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Tensor<T>)> {
    let (c, h, wd) = x.chw()?;
    let (o, _, kh, kw) = kernel4(w)?;
    let (oh, ow) = conv_dims(h, wd, kh, kw, pad)?;
    if dy.shape() != [o, oh, ow] {
        return Err(Error::arg(format!(
            "conv output gradient {:?}, expected {:?}",
            dy.shape(),
            [o, oh, ow]
        )));
    }
    let n = oh * ow;
    let k = c * kh * kw;
    let col = im2col(x.data(), c, h, wd, kh, kw, pad, oh, ow);

    let mut dw = vec![T::zero(); o * k];
    // dw = dy (o x n) * col^T (n x k)
    T::gemm(o, n, k, dy.data(), n, 1, &col, 1, n, T::zero(), &mut dw, k, 1);
    let db: Vec<T> = dy.data().chunks(n).map(|ch| ch.iter().copied().sum()).collect();

    let dx = if need_dx {
        let mut dcol = vec![T::zero(); k * n];
        // dcol = w^T (k x o) * dy (o x n)
        T::gemm(k, o, n, w.data(), 1, k, dy.data(), n, 1, T::zero(), &mut dcol, n, 1);
        Some(Tensor::from_vec(&[c, h, wd], col2im(&dcol, c, h, wd, kh, kw, pad, oh, ow))?)
    } else {
        None
    };
    Ok((dx, Tensor::from_vec(w.shape(), dw)?, Tensor::from_vec(&[o], db)?))
}

/// Offset removed from each side of the full transposed-convolution output so
/// that exactly `2h x 2w` samples remain: input sample `i` feeds outputs
/// `2i + k - crop` for kernel taps `k`.
pub fn deconv_crop(k: usize) -> usize {
    (k - 1) / 2
}

fn deconv_gather_index(i: usize, k: usize, crop: usize, n: usize) -> Option<usize> {
    let y = (DECONV_STRIDE * i + k) as isize - crop as isize;
    (y >= 0 && (y as usize) < n).then_some(y as usize)
}

/// Stride-2 transposed convolution producing exactly `(out, 2h, 2w)`.
pub fn deconv_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, wd) = x.chw()?;
    let (ci, o, kh, kw) = kernel4(w)?;
    if ci != c {
        return Err(Error::arg(format!(
            "deconv kernel {:?} does not match input {:?}",
            w.shape(),
            x.shape()
        )));
    }
    check_bias(b, o)?;
    let (oh, ow) = (DECONV_STRIDE * h, DECONV_STRIDE * wd);
    let (cy, cx) = (deconv_crop(kh), deconv_crop(kw));
    let n = h * wd;
    let m = o * kh * kw;
    let mut cols = vec![T::zero(); m * n];
    // cols = w^T (m x c) * x (c x n)
    T::gemm(m, c, n, w.data(), 1, m, x.data(), n, 1, T::zero(), &mut cols, n, 1);

    let mut out = vec![T::zero(); o * oh * ow];
    for oc in 0..o {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.fill(b.data()[oc]);
        for ky in 0..kh {
            for kx in 0..kw {
                let src = &cols[((oc * kh + ky) * kw + kx) * n..][..n];
                for i in 0..h {
                    let Some(y) = deconv_gather_index(i, ky, cy, oh) else { continue };
                    for j in 0..wd {
                        if let Some(xx) = deconv_gather_index(j, kx, cx, ow) {
                            plane[y * ow + xx] = plane[y * ow + xx] + src[i * wd + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[o, oh, ow], out)
}

/// Gradients of [`deconv_forward`]: `(dx, dw, db)`.
pub fn deconv_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (c, h, wd) = x.chw()?;
    let (_, o, kh, kw) = kernel4(w)?;
    let (oh, ow) = (DECONV_STRIDE * h, DECONV_STRIDE * wd);
    if dy.shape() != [o, oh, ow] {
        return Err(Error::arg(format!(
            "deconv output gradient {:?}, expected {:?}",
            dy.shape(),
            [o, oh, ow]
        )));
    }
    let (cy, cx) = (deconv_crop(kh), deconv_crop(kw));
    let n = h * wd;
    let m = o * kh * kw;
    let mut dcols = vec![T::zero(); m * n];
    for oc in 0..o {
        let plane = &dy.data()[oc * oh * ow..(oc + 1) * oh * ow];
        for ky in 0..kh {
            for kx in 0..kw {
                let dst = &mut dcols[((oc * kh + ky) * kw + kx) * n..][..n];
                for i in 0..h {
                    let Some(y) = deconv_gather_index(i, ky, cy, oh) else { continue };
                    for j in 0..wd {
                        if let Some(xx) = deconv_gather_index(j, kx, cx, ow) {
                            dst[i * wd + j] = plane[y * ow + xx];
                        }
                    }
                }
            }
        }
    }
    let mut dx = vec![T::zero(); c * n];
    // dx = w (c x m) * dcols (m x n)
    T::gemm(c, m, n, w.data(), m, 1, &dcols, n, 1, T::zero(), &mut dx, n, 1);
    let mut dw = vec![T::zero(); c * m];
    // dw = x (c x n) * dcols^T (n x m)
    T::gemm(c, n, m, x.data(), n, 1, &dcols, 1, n, T::zero(), &mut dw, m, 1);
    let db: Vec<T> = dy
        .data()
        .chunks(oh * ow)
        .map(|ch| ch.iter().copied().sum())
        .collect();
    Ok((
        Tensor::from_vec(&[c, h, wd], dx)?,
        Tensor::from_vec(w.shape(), dw)?,
        Tensor::from_vec(&[o], db)?,
    ))
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`] given its output.
pub fn relu_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&a, &g)| if a > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

/// Channel concatenation, `a` first.
pub fn concat<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ca, ha, wa) = a.chw()?;
    let (cb, hb, wb) = b.chw()?;
    if (ha, wa) != (hb, wb) {
        return Err(Error::arg(format!(
            "cannot concatenate {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[ca + cb, ha, wa], data)
}

/// Splits a concatenation gradient back into its two parts.
pub fn concat_backward<T: Real>(dy: &Tensor<T>, ca: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (c, _, _) = dy.chw()?;
    Ok((dy.channels(0, ca)?, dy.channels(ca, c)?))
}

/// Element-wise sum used for the residual skip connection.
pub fn add_skip<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mut out = a.clone();
    out.add_assign(b)?;
    Ok(out)
}
