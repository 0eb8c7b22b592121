//! Quality metrics, Bjøntegaard delta rate, distortion-ratio fitting and
//! mode statistics.

pub mod report;

use crate::coder::{CtuDecision, Mode, UpMethod};
use crate::error::{Error, Result};
use crate::frame::{Channel, Plane};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// PSNR for a mean squared error of 8-bit samples; zero error gives `+inf`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

pub fn psnr(a: &Plane, b: &Plane) -> Result<f64> {
    let ssd = a.ssd(b)?;
    Ok(psnr_from_mse(ssd as f64 / (a.width() * a.height()) as f64))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut g = [0.0; SSIM_WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Separable Gaussian filter over every window that fits entirely inside.
fn filter_valid(x: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut tmp = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..SSIM_WINDOW).map(|k| g[k] * x[r * w + c + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..SSIM_WINDOW).map(|k| g[k] * tmp[(r + k) * ow + c]).sum();
        }
    }
    out
}

/// Mean structural similarity over all 11x11 Gaussian windows (sigma 1.5).
pub fn ssim(a: &Plane, b: &Plane) -> Result<f64> {
    a.check_same_dims(b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::arg(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} samples, got {w}x{h}")));
    }
    let g = gaussian_window();
    let fa: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let fb: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let mu_a = filter_valid(&fa, w, h, &g);
    let mu_b = filter_valid(&fb, w, h, &g);
    let e_aa = filter_valid(&prod(&fa, &fa), w, h, &g);
    let e_bb = filter_valid(&prod(&fb, &fb), w, h, &g);
    let e_ab = filter_valid(&prod(&fa, &fb), w, h, &g);
    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    Ok(sum / mu_a.len() as f64)
}

/// One operating point of a codec configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub bits: f64,
    pub psnr_y: f64,
    pub psnr_cb: f64,
    pub psnr_cr: f64,
    pub ssim_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    PsnrY,
    PsnrCb,
    PsnrCr,
    SsimY,
}

impl Quality {
    pub const ALL: [Quality; 4] = [Quality::PsnrY, Quality::PsnrCb, Quality::PsnrCr, Quality::SsimY];

    pub fn of(self, p: &RdPoint) -> f64 {
        match self {
            Quality::PsnrY => p.psnr_y,
            Quality::PsnrCb => p.psnr_cb,
            Quality::PsnrCr => p.psnr_cr,
            Quality::SsimY => p.ssim_y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quality::PsnrY => "psnr_y",
            Quality::PsnrCb => "psnr_cb",
            Quality::PsnrCr => "psnr_cr",
            Quality::SsimY => "ssim_y",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    pub label: String,
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(label: impl Into<String>, mut points: Vec<RdPoint>) -> Self {
        points.sort_by(|a, b| a.bits.total_cmp(&b.bits));
        RdCurve {
            label: label.into(),
            points,
        }
    }
}

/// Least-squares cubic `ln(rate) = p(t)` with `t = (q - centre) / scale`.
struct LogRateFit {
    coef: [f64; 4],
    centre: f64,
    scale: f64,
}

impl LogRateFit {
    fn fit(c: &RdCurve, q: Quality) -> Result<Self> {
        if c.points.len() < 4 {
            return Err(Error::Evaluation(format!(
                "curve {:?} has {} points, BD-rate needs at least 4",
                c.label,
                c.points.len()
            )));
        }
        let qs: Vec<f64> = c.points.iter().map(|p| q.of(p)).collect();
        if qs.iter().chain(c.points.iter().map(|p| &p.bits)).any(|v| !v.is_finite())
            || c.points.iter().any(|p| p.bits <= 0.0)
        {
            return Err(Error::Evaluation(format!(
                "curve {:?} has non-finite quality or non-positive rate",
                c.label
            )));
        }
        let centre = qs.iter().sum::<f64>() / qs.len() as f64;
        let scale = qs.iter().map(|v| (v - centre).abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::Evaluation(format!("curve {:?} has constant quality", c.label)));
        }
        let n = qs.len();
        let a = DMatrix::from_fn(n, 4, |i, j| ((qs[i] - centre) / scale).powi(j as i32));
        let y = DVector::from_iterator(n, c.points.iter().map(|p| p.bits.ln()));
        let coef = a
            .svd(true, true)
            .solve(&y, 1e-12)
            .map_err(|e| Error::Evaluation(format!("cubic fit failed: {e}")))?;
        Ok(LogRateFit {
            coef: [coef[0], coef[1], coef[2], coef[3]],
            centre,
            scale,
        })
    }

    /// Integral of `ln(rate)` over quality from `lo` to `hi`.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let prim = |q: f64| {
            let t = (q - self.centre) / self.scale;
            self.scale * self.coef.iter().enumerate().map(|(k, c)| c * t.powi(k as i32 + 1) / (k + 1) as f64).sum::<f64>()
        };
        prim(hi) - prim(lo)
    }
}

/// Average rate difference of `test` against `anchor` at equal quality, in
/// percent (negative means `test` needs fewer bits).
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve, q: Quality) -> Result<f64> {
    let fa = LogRateFit::fit(anchor, q)?;
    let ft = LogRateFit::fit(test, q)?;
    let range = |c: &RdCurve| {
        let v: Vec<f64> = c.points.iter().map(|p| q.of(p)).collect();
        (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    };
    let (la, ha) = range(anchor);
    let (lt, ht) = range(test);
    let (lo, hi) = (la.max(lt), ha.min(ht));
    if hi <= lo {
        return Err(Error::Evaluation(format!(
            "quality ranges of {:?} and {:?} do not overlap",
            anchor.label, test.label
        )));
    }
    let avg = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((avg.exp() - 1.0) * 100.0)
}

/// Least-squares line `d_full = alpha * d_low + beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha: f64,
    pub beta: f64,
    pub r2: f64,
    pub samples: usize,
}

pub fn fit_alpha(samples: &[(f64, f64)]) -> Result<AlphaFit> {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return Err(Error::Evaluation("alpha fit needs at least two samples".into()));
    }
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    if sxx == 0.0 || !sxx.is_finite() {
        return Err(Error::Evaluation("alpha fit needs two distinct low-resolution distortions".into()));
    }
    let alpha = sxy / sxx;
    let beta = my - alpha * mx;
    let ss_res: f64 = samples.iter().map(|s| (s.1 - alpha * s.0 - beta).powi(2)).sum();
    let ss_tot: f64 = samples.iter().map(|s| (s.1 - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(AlphaFit {
        alpha,
        beta,
        r2,
        samples: samples.len(),
    })
}

/// Histogram bin `[lo, hi)` of alpha values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram over `[lo, hi)`; values outside are clamped into the end bins.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<HistBin> {
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistBin> = (0..bins)
        .map(|i| HistBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values.iter().filter(|v| v.is_finite()) {
        let i = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

/// Centre of the fullest bin (the first one on ties).
pub fn histogram_peak(h: &[HistBin]) -> Option<f64> {
    let best = h.iter().fold(None::<&HistBin>, |acc, b| match acc {
        Some(a) if a.count >= b.count => Some(a),
        _ => Some(b),
    })?;
    (best.count > 0).then(|| (best.lo + best.hi) / 2.0)
}

/// Share of CTUs coded at low resolution, and among those the share using
/// the network per channel (NaN when no CTU is low).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingStats {
    pub total: usize,
    pub hitting: usize,
    pub p_hitting: f64,
    pub p_luma: f64,
    pub p_cb: f64,
    pub p_cr: f64,
}

pub fn hitting_stats(decisions: &[CtuDecision]) -> Result<HittingStats> {
    if decisions.is_empty() {
        return Err(Error::arg("hitting statistics of an empty decision list"));
    }
    let low: Vec<[UpMethod; 3]> = decisions.iter().filter_map(|d| d.up).collect();
    let hitting = low.len();
    let share = |k: usize| {
        if hitting == 0 {
            f64::NAN
        } else {
            low.iter().filter(|u| u[k] == UpMethod::Cnn).count() as f64 / hitting as f64
        }
    };
    Ok(HittingStats {
        total: decisions.len(),
        hitting,
        p_hitting: hitting as f64 / decisions.len() as f64,
        p_luma: share(0),
        p_cb: share(1),
        p_cr: share(2),
    })
}

/// Per-CTU mode grid of one channel: `F` full resolution, `C` network, `D` DCTIF.
pub fn mode_map(decisions: &[CtuDecision], rows: usize, cols: usize, ch: Channel) -> Result<Vec<Vec<char>>> {
    let mut grid = vec![vec!['?'; cols]; rows];
    for d in decisions {
        if d.row >= rows || d.col >= cols {
            return Err(Error::arg(format!("decision for CTU ({}, {}) outside {rows}x{cols}", d.row, d.col)));
        }
        grid[d.row][d.col] = match (d.mode, d.up) {
            (Mode::Low, Some(u)) if u[ch.index()] == UpMethod::Cnn => 'C',
            (Mode::Low, _) => 'D',
            (Mode::Full, _) => 'F',
        };
    }
    Ok(grid)
}

/// CSV rendering with the `inf` / `nan` sentinels.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}
