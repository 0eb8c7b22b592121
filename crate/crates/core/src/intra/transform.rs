//! 8x8 integer DCT and scalar quantisation.
//!
//! The basis is the usual 8-point integer approximation (rows of norm about
//! 64*sqrt(8)), so `T * R * T^T / 2^15` is close to an orthonormal DCT.
//! The quantiser step is `2^((qp - 4) / 6)`, realised with the standard
//! six-entry scale tables so that no floating point is involved.

pub const N: usize = 8;

pub const DCT8: [[i64; N]; N] = [
    [64, 64, 64, 64, 64, 64, 64, 64],
    [89, 75, 50, 18, -18, -50, -75, -89],
    [83, 36, -36, -83, -83, -36, 36, 83],
    [75, -18, -89, -50, 50, 89, 18, -75],
    [64, -64, -64, 64, 64, -64, -64, 64],
    [50, -89, 18, 75, -75, -18, 89, -50],
    [36, -83, 83, -36, -36, 83, -83, 36],
    [18, -50, 75, -89, 89, -75, 50, -18],
];

/// Zig-zag scan order (index into a row-major 8x8 block).
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20,
    13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59,
    52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

const QUANT_SCALE: [i64; 6] = [26214, 23302, 20560, 18396, 16384, 14564];
const DEQUANT_SCALE: [i64; 6] = [40, 45, 51, 57, 64, 72];

pub type Block = [i32; 64];

#[inline]
fn round_shift(v: i64, shift: u32) -> i64 {
    let half = 1i64 << (shift - 1);
    if v >= 0 {
        (v + half) >> shift
    } else {
        -((-v + half) >> shift)
    }
}

/// Forward transform of a residual block.
pub fn forward(residual: &Block) -> Block {
    let mut tmp = [0i64; 64];
    // tmp = T * R
    for u in 0..N {
        for x in 0..N {
            let mut s = 0;
            for y in 0..N {
                s += DCT8[u][y] * residual[y * N + x] as i64;
            }
            tmp[u * N + x] = s;
        }
    }
    let mut out = [0i32; 64];
    for u in 0..N {
        for v in 0..N {
            let mut s = 0;
            for x in 0..N {
                s += tmp[u * N + x] * DCT8[v][x];
            }
            out[u * N + v] = round_shift(s, 15) as i32;
        }
    }
    out
}

/// Inverse transform back to a residual block.
pub fn inverse(coeffs: &Block) -> Block {
    let mut tmp = [0i64; 64];
    // tmp = T^T * C
    for y in 0..N {
        for v in 0..N {
            let mut s = 0;
            for u in 0..N {
                s += DCT8[u][y] * coeffs[u * N + v] as i64;
            }
            tmp[y * N + v] = s;
        }
    }
    let mut out = [0i32; 64];
    for y in 0..N {
        for x in 0..N {
            let mut s = 0;
            for v in 0..N {
                s += tmp[y * N + v] * DCT8[v][x];
            }
            out[y * N + x] = round_shift(s, 15) as i32;
        }
    }
    out
}

/// Dead-zone quantisation with a rounding offset of about one third of a step.
pub fn quantize(coeffs: &Block, qp: u8) -> Block {
    let qbits = 14 + (qp / 6) as u32;
    let scale = QUANT_SCALE[(qp % 6) as usize];
    let offset = (171i64 << qbits) >> 9;
    let mut out = [0i32; 64];
    for (o, &c) in out.iter_mut().zip(coeffs) {
        let mag = ((c.unsigned_abs() as i64) * scale + offset) >> qbits;
        *o = if c < 0 { -(mag as i32) } else { mag as i32 };
    }
    out
}

pub fn dequantize(levels: &Block, qp: u8) -> Block {
    let scale = DEQUANT_SCALE[(qp % 6) as usize] << (qp / 6);
    let mut out = [0i32; 64];
    for (o, &l) in out.iter_mut().zip(levels) {
        *o = round_shift(l as i64 * scale, 6) as i32;
    }
    out
}
