//! CSV files written by the encoder and the evaluation tools.

use super::{fmt_f64, AlphaFit, HistBin, HittingStats};
use crate::coder::{CtuDecision, Mode};
use crate::error::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};
use std::path::Path;

fn sentinel<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&fmt_f64(*v))
}

fn sentinel_opt<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_str(&fmt_f64(*v)),
        None => s.serialize_none(),
    }
}

/// One line of `<stem>.rd.csv` / `rd_points.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdRecord {
    pub sequence: String,
    pub qp: u8,
    pub bits: u64,
    #[serde(serialize_with = "sentinel")]
    pub psnr_y: f64,
    #[serde(serialize_with = "sentinel")]
    pub psnr_cb: f64,
    #[serde(serialize_with = "sentinel")]
    pub psnr_cr: f64,
    #[serde(serialize_with = "sentinel")]
    pub ssim_y: f64,
}

impl RdRecord {
    pub fn point(&self) -> super::RdPoint {
        super::RdPoint {
            bits: self.bits as f64,
            psnr_y: self.psnr_y,
            psnr_cb: self.psnr_cb,
            psnr_cr: self.psnr_cr,
            ssim_y: self.ssim_y,
        }
    }
}

/// One line of `<stem>.decisions.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub source: String,
    pub qp: u8,
    pub ctu_index: usize,
    pub row: usize,
    pub col: usize,
    pub mode: Mode,
    pub up_y: Option<String>,
    pub up_cb: Option<String>,
    pub up_cr: Option<String>,
    pub bits: u64,
    pub d_full: u64,
    pub d_low: Option<u64>,
    pub full_bits: Option<u64>,
    pub full_ssd: Option<u64>,
    #[serde(serialize_with = "sentinel_opt")]
    pub full_cost: Option<f64>,
    pub low_bits: Option<u64>,
    pub low_ssd: Option<u64>,
    pub low_ssd_low: Option<u64>,
    #[serde(serialize_with = "sentinel_opt")]
    pub low_cost: Option<f64>,
}

impl DecisionRecord {
    pub fn new(source: &str, qp: u8, d: &CtuDecision) -> Self {
        let up = |k: usize| d.up.map(|u| u[k].name().to_string());
        DecisionRecord {
            source: source.into(),
            qp,
            ctu_index: d.index,
            row: d.row,
            col: d.col,
            mode: d.mode,
            up_y: up(0),
            up_cb: up(1),
            up_cr: up(2),
            bits: d.bits,
            d_full: d.d_full,
            d_low: d.d_low,
            full_bits: d.full_trial.map(|t| t.bits),
            full_ssd: d.full_trial.map(|t| t.ssd),
            full_cost: d.full_trial.map(|t| t.cost),
            low_bits: d.low_trial.map(|t| t.bits),
            low_ssd: d.low_trial.map(|t| t.ssd),
            low_ssd_low: d.low_trial.and_then(|t| t.ssd_low),
            low_cost: d.low_trial.map(|t| t.cost),
        }
    }

    /// The mode and up-sampler part of the record, enough for the statistics
    /// of [`super::hitting_stats`] and [`super::mode_map`].
    pub fn to_decision(&self) -> Result<CtuDecision> {
        let up = match (&self.up_y, &self.up_cb, &self.up_cr) {
            (Some(y), Some(cb), Some(cr)) => Some([y.parse()?, cb.parse()?, cr.parse()?]),
            (None, None, None) => None,
            _ => return Err(Error::Format(format!("CTU {}: partial up-sampler columns", self.ctu_index))),
        };
        if up.is_some() != (self.mode == Mode::Low) {
            return Err(Error::Format(format!("CTU {}: up-sampler columns disagree with mode", self.ctu_index)));
        }
        Ok(CtuDecision {
            index: self.ctu_index,
            row: self.row,
            col: self.col,
            mode: self.mode,
            up,
            bits: self.bits,
            d_full: self.d_full,
            d_low: self.d_low,
            full_trial: None,
            low_trial: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdRecord {
    pub sequence: String,
    pub metric: String,
    #[serde(serialize_with = "sentinel")]
    pub bd_rate_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingRecord {
    pub sequence: String,
    pub qp: u8,
    pub total: usize,
    pub hitting: usize,
    #[serde(serialize_with = "sentinel")]
    pub p_hitting: f64,
    #[serde(serialize_with = "sentinel")]
    pub p_luma: f64,
    #[serde(serialize_with = "sentinel")]
    pub p_cb: f64,
    #[serde(serialize_with = "sentinel")]
    pub p_cr: f64,
}

impl HittingRecord {
    pub fn new(sequence: &str, qp: u8, s: &HittingStats) -> Self {
        HittingRecord {
            sequence: sequence.into(),
            qp,
            total: s.total,
            hitting: s.hitting,
            p_hitting: s.p_hitting,
            p_luma: s.p_luma,
            p_cb: s.p_cb,
            p_cr: s.p_cr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Writes a grid of single-character cells, one CSV row per CTU row.
pub fn write_grid(path: &Path, grid: &[Vec<char>]) -> Result<()> {
    let mut s = String::new();
    for row in grid {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_alpha_hist(path: &Path, bins: &[HistBin]) -> Result<()> {
    let rows: Vec<AlphaRecord> = bins
        .iter()
        .map(|b| AlphaRecord {
            bin_lo: b.lo,
            bin_hi: b.hi,
            count: b.count,
        })
        .collect();
    write_csv(path, &rows)
}

/// Summary of an alpha fitting run as JSON-friendly data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub global: Option<AlphaFit>,
    pub per_ctu_fits: usize,
    pub histogram_peak: Option<f64>,
}
