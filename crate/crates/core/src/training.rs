//! Training data generation and per-QP model training.
//!
//! Every corpus picture is coded with all CTUs forced to low resolution and
//! DCTIF up-sampling; each CTU then yields one luma and one chroma pair of
//! (reconstructed LR context tile, original HR block). Which context
//! convention a pair sees (in-loop, with missing bottom/right neighbours, or
//! complete) is drawn per CTU from a seeded generator, so the network learns
//! both.

use crate::coder::upsample::{self, Availability, OUTPUT_CROP};
use crate::coder::{encode_frame, EncodeOptions, ForceMode, ModelSet, UpMethod};
use crate::error::{Error, Result};
use crate::eval::{fmt_f64, psnr_from_mse};
use crate::frame::{chroma_dims, Channel, Frame, Plane};
use crate::intra::Qp;
use crate::nn::{save_model, Architecture, Sample, Tensor, TrainConfig, Trainer, UpsamplerNet, Variant};
use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

const IMAGE_EXTS: [&str; 8] = ["png", "jpg", "jpeg", "bmp", "ppm", "pgm", "tif", "tiff"];

/// BT.601 full-range RGB to YCbCr in 8-bit fixed point, chroma averaged over
/// 2x2 blocks.
pub fn frame_from_rgb(img: &RgbImage) -> Result<Frame> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::arg("empty image"));
    }
    let mut y = Plane::new(w, h, 0);
    let mut cb_full = vec![0i32; w * h];
    let mut cr_full = vec![0i32; w * h];
    for (x, yy, p) in img.enumerate_pixels() {
        let [r, g, b] = p.0.map(|v| v as i32);
        let (x, yy) = (x as usize, yy as usize);
        y.set(yy, x, ((77 * r + 150 * g + 29 * b + 128) >> 8).clamp(0, 255) as u8);
        cb_full[yy * w + x] = (((-43 * r - 85 * g + 128 * b + 128) >> 8) + 128).clamp(0, 255);
        cr_full[yy * w + x] = (((128 * r - 107 * g - 21 * b + 128) >> 8) + 128).clamp(0, 255);
    }
    let (cw, ch) = chroma_dims(w, h);
    let avg = |src: &[i32]| {
        Plane::from_fn(cw, ch, |r, c| {
            let (mut s, mut n) = (0, 0);
            for dy in 0..2 {
                for dx in 0..2 {
                    let (yy, xx) = (2 * r + dy, 2 * c + dx);
                    if yy < h && xx < w {
                        s += src[yy * w + xx];
                        n += 1;
                    }
                }
            }
            ((s + n / 2) / n) as u8
        })
    };
    Frame::from_planes(y, avg(&cb_full), avg(&cr_full))
}

pub fn load_image(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })?;
    frame_from_rgb(&img.to_rgb8())
}

/// Image files of a directory, sorted by path.
pub fn list_corpus(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if p.is_file() && ext.is_some_and(|e| IMAGE_EXTS.contains(&e.as_str())) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Training and validation files: the last tenth of the sorted list validates.
pub fn split_corpus(files: &[PathBuf]) -> (Vec<PathBuf>, Vec<PathBuf>) {
    let n = files.len();
    let n_val = if n < 2 { 0 } else { ((n as f64 * 0.1).round() as usize).max(1) };
    (files[..n - n_val].to_vec(), files[n - n_val..].to_vec())
}

/// One training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    pub variant: Variant,
    pub qp: u8,
    /// Network input tiles with context: `[Y]`, or `[Y down-sampled, Cb, Cr]`.
    pub x: Vec<Plane>,
    /// DCTIF up-sample of each output channel's CTU core.
    pub dctif_up: Vec<Plane>,
    /// Original HR blocks, one per output channel.
    pub y: Vec<Plane>,
    pub source: usize,
    pub ctu: usize,
    pub complete_context: bool,
}

impl TrainingPair {
    pub fn to_sample(&self) -> Result<Sample<f32>> {
        let x = upsample::to_input(&self.x.iter().collect::<Vec<_>>())?;
        let (w, h) = (self.y[0].width(), self.y[0].height());
        let mut t = Vec::with_capacity(self.y.len() * w * h);
        for (o, d) in self.y.iter().zip(&self.dctif_up) {
            t.extend(o.data().iter().zip(d.data()).map(|(&a, &b)| (a as f32 - b as f32) / 255.0));
        }
        Ok(Sample {
            x,
            target: Tensor::from_vec(&[self.y.len(), h, w], t)?,
            crop: (OUTPUT_CROP, OUTPUT_CROP),
        })
    }

    /// SSD of the DCTIF up-sample and, with a network, of its output.
    pub fn ssd(&self, net: Option<&UpsamplerNet<f32>>) -> Result<u64> {
        let planes = match net {
            None => self.dctif_up.clone(),
            Some(n) => {
                let res = n.residual(&self.to_sample()?.x)?;
                self.dctif_up
                    .iter()
                    .enumerate()
                    .map(|(k, d)| upsample::apply_residual(d, &res, k))
                    .collect::<Result<_>>()?
            }
        };
        let mut s = 0;
        for (p, o) in planes.iter().zip(&self.y) {
            s += p.ssd(o)?;
        }
        Ok(s)
    }

    pub fn sample_count(&self) -> usize {
        self.y.iter().map(|p| p.width() * p.height()).sum()
    }
}

/// Pairs from a single frame, in CTU raster order.
pub fn pairs_for_frame(f: &Frame, qp: Qp, source: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<TrainingPair>, Vec<TrainingPair>)> {
    let opts = EncodeOptions {
        force_mode: Some(ForceMode::Low),
        force_up: Some(UpMethod::Dctif),
        stage2: false,
        ..Default::default()
    };
    let out = encode_frame(f, qp, &ModelSet::empty(), &opts)?;
    let grid = f.grid();
    let lr = &out.lr_ref;
    let (mut luma, mut chroma) = (Vec::new(), Vec::new());
    for idx in 0..grid.len() {
        let (row, col) = grid.position(idx);
        let complete = rng.gen_bool(0.5);
        let avail = if complete { Availability::All } else { Availability::Causal(idx) };
        let orig = f.extract_ctu(row, col)?;
        let dctif = upsample::dctif_ctu(lr, &grid, row, col, avail)?;
        let [dy, dcb, dcr] = dctif;
        luma.push(TrainingPair {
            variant: Variant::Luma,
            qp: qp.value(),
            x: vec![upsample::channel_tile(lr, &grid, row, col, Channel::Y, avail)?],
            dctif_up: vec![dy],
            y: vec![orig.y],
            source,
            ctu: idx,
            complete_context: complete,
        });
        chroma.push(TrainingPair {
            variant: Variant::Chroma,
            qp: qp.value(),
            x: vec![
                upsample::luma_for_chroma_tile(lr, &grid, row, col, avail)?,
                upsample::channel_tile(lr, &grid, row, col, Channel::Cb, avail)?,
                upsample::channel_tile(lr, &grid, row, col, Channel::Cr, avail)?,
            ],
            dctif_up: vec![dcb, dcr],
            y: vec![orig.cb, orig.cr],
            source,
            ctu: idx,
            complete_context: complete,
        });
    }
    Ok((luma, chroma))
}

#[derive(Debug, Clone, Default)]
pub struct PairSet {
    pub luma: Vec<TrainingPair>,
    pub chroma: Vec<TrainingPair>,
    /// Files that could not be read, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

impl PairSet {
    pub fn of(&self, v: Variant) -> &[TrainingPair] {
        match v {
            Variant::Luma => &self.luma,
            Variant::Chroma => &self.chroma,
        }
    }
}

/// Pairs for a list of image files. Images are processed in parallel, each
/// with its own random stream, and collected in file order.
pub fn generate_pairs(files: &[PathBuf], qp: Qp, seed: u64) -> Result<PairSet> {
    let per_file: Vec<Result<(Vec<TrainingPair>, Vec<TrainingPair>), (PathBuf, String)>> = files
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let f = load_image(p).map_err(|e| (p.clone(), e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            pairs_for_frame(&f, qp, i, &mut rng).map_err(|e| (p.clone(), e.to_string()))
        })
        .collect();
    let mut set = PairSet::default();
    for r in per_file {
        match r {
            Ok((l, c)) => {
                set.luma.extend(l);
                set.chroma.extend(c);
            }
            Err((p, msg)) => {
                log::warn!("skipping {}: {msg}", p.display());
                set.skipped.push((p, msg));
            }
        }
    }
    Ok(set)
}

/// Mean MSE of the network (no update) over a sample set.
pub fn mean_loss(net: &UpsamplerNet<f32>, samples: &[Sample<f32>]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let (c, th, tw) = s.target.chw()?;
            let out = net.residual(&s.x)?.crop(s.crop.0, s.crop.1, th, tw)?;
            let mut e = 0.0;
            for (a, b) in out.data().iter().zip(s.target.data()) {
                let d = (*a - *b) as f64;
                e += d * d;
            }
            Ok(e / (c * th * tw) as f64)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub cfg: TrainConfig,
    pub arch: Architecture,
    pub variant: Variant,
    pub qp: u8,
    /// Best model so far is written here after every epoch.
    pub checkpoint: Option<PathBuf>,
    /// Per-epoch CSV log (epoch, train_mse, val_mse).
    pub log_csv: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub net: UpsamplerNet<f32>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Loss of the untrained (DCTIF-equivalent) model on the validation set.
    pub initial_val_mse: f64,
}

fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut s = String::from("epoch,train_mse,val_mse\n");
    for e in log {
        s.push_str(&format!("{},{},{}\n", e.epoch, fmt_f64(e.train_mse), fmt_f64(e.val_mse)));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Trains one model. Validation loss selects the returned model and drives
/// early stopping; without validation pairs the training loss is used.
pub fn train_model(train: &[TrainingPair], val: &[TrainingPair], opts: &TrainOptions) -> Result<TrainReport> {
    opts.cfg.validate()?;
    if train.is_empty() {
        return Err(Error::arg("no training pairs"));
    }
    if let Some(p) = train.iter().chain(val).find(|p| p.variant != opts.variant) {
        return Err(Error::arg(format!(
            "{} pair given to a {} model",
            p.variant.name(),
            opts.variant.name()
        )));
    }
    let samples: Vec<Sample<f32>> = train.iter().map(TrainingPair::to_sample).collect::<Result<_>>()?;
    let val_samples: Vec<Sample<f32>> = val.iter().map(TrainingPair::to_sample).collect::<Result<_>>()?;
    let mut net = UpsamplerNet::init(opts.variant, opts.arch, opts.qp, opts.cfg.seed)?;
    let mut trainer = Trainer::new(&net, opts.cfg.clone())?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(opts.cfg.seed ^ 0x5eed_0f0d_e5);
    let selection = |n: &UpsamplerNet<f32>, train_mse: f64| -> Result<f64> {
        if val_samples.is_empty() {
            Ok(train_mse)
        } else {
            mean_loss(n, &val_samples)
        }
    };
    let initial_val_mse = if val_samples.is_empty() { mean_loss(&net, &samples)? } else { mean_loss(&net, &val_samples)? };
    let mut best = (initial_val_mse, 0usize, net.clone());
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if let Some(p) = &opts.checkpoint {
        save_model(p, &net)?;
    }

    for epoch in 1..=opts.cfg.epochs {
        trainer.epoch = epoch;
        order.shuffle(&mut order_rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(opts.cfg.batch) {
            let batch: Vec<Sample<f32>> = chunk.iter().map(|&i| samples[i].clone()).collect();
            match trainer.backward_and_step(&mut net, &batch) {
                Ok(l) => {
                    sum += l;
                    batches += 1;
                }
                Err(e @ Error::Diverged { .. }) => {
                    if let Some(p) = &opts.checkpoint {
                        save_model(p, &best.2)?;
                    }
                    if let Some(p) = &opts.log_csv {
                        write_log(p, &log)?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
        }
        let train_mse = sum / batches as f64;
        let val_mse = selection(&net, train_mse)?;
        log.push(EpochLog { epoch, train_mse, val_mse });
        log::info!("epoch {epoch}: train {train_mse:.6e} val {val_mse:.6e}");
        if val_mse < best.0 {
            best = (val_mse, epoch, net.clone());
        }
        if let Some(p) = &opts.checkpoint {
            save_model(p, &best.2)?;
        }
        if let Some(p) = &opts.log_csv {
            write_log(p, &log)?;
        }
        if opts.cfg.patience > 0 && epoch - best.1 >= opts.cfg.patience {
            break;
        }
    }
    if let Some(p) = &opts.log_csv {
        write_log(p, &log)?;
    }
    Ok(TrainReport {
        net: best.2,
        log,
        best_epoch: best.1,
        initial_val_mse,
    })
}

/// Mean PSNR over source pictures of an up-sampler on a pair set, aggregating
/// the squared error of each picture's CTUs. `None` evaluates DCTIF.
pub fn mean_psnr(pairs: &[TrainingPair], net: Option<&UpsamplerNet<f32>>) -> Result<f64> {
    let ssd: Vec<(usize, u64, usize)> = pairs
        .par_iter()
        .map(|p| Ok((p.source, p.ssd(net)?, p.sample_count())))
        .collect::<Result<_>>()?;
    let mut per_source: std::collections::BTreeMap<usize, (u64, usize)> = Default::default();
    for (s, e, n) in ssd {
        let acc = per_source.entry(s).or_default();
        acc.0 += e;
        acc.1 += n;
    }
    if per_source.is_empty() {
        return Err(Error::Evaluation("no pairs to evaluate".into()));
    }
    let total: f64 = per_source
        .values()
        .map(|&(e, n)| psnr_from_mse(e as f64 / n as f64))
        .sum();
    Ok(total / per_source.len() as f64)
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub split: String,
}

/// Manifest path written beside a model file.
pub fn manifest_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".manifest.jsonl");
    PathBuf::from(s)
}

pub fn write_manifest(path: &Path, train: &[PathBuf], val: &[PathBuf]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for (files, split) in [(train, "train"), (val, "val")] {
        for p in files {
            let abs = std::fs::canonicalize(p).unwrap_or_else(|_| p.clone());
            let entry = ManifestEntry {
                path: abs.to_string_lossy().into_owned(),
                split: split.into(),
            };
            let line = serde_json::to_string(&entry).expect("plain struct");
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Whether `file` is listed in any `*.manifest.jsonl` of `dir`.
pub fn listed_in_manifests(dir: &Path, file: &Path) -> Result<bool> {
    let target = std::fs::canonicalize(file).unwrap_or_else(|_| file.to_path_buf());
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if !p.to_string_lossy().ends_with(".manifest.jsonl") {
            continue;
        }
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let e: ManifestEntry = serde_json::from_str(line)
                .map_err(|err| Error::Format(format!("{}: {err}", p.display())))?;
            if Path::new(&e.path) == target {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resample::downsample_frame;

    #[test]
    fn rgb_conversion_constants() {
        let mut img = RgbImage::new(2, 2);
        for p in img.pixels_mut() {
            *p = image::Rgb([255, 255, 255]);
        }
        let f = frame_from_rgb(&img).unwrap();
        assert_eq!(f.y.get(0, 0), 255);
        assert_eq!(f.cb.get(0, 0), 128);
        assert_eq!(f.cr.get(0, 0), 128);
        img.put_pixel(0, 0, image::Rgb([255, 0, 0]));
        let f = frame_from_rgb(&img).unwrap();
        assert_eq!(f.y.get(0, 0), 77);
        assert!(f.cr.get(0, 0) > 128);
    }

    #[test]
    fn four_pairs_per_128_square() {
        let f = crate::synth::frame(128, 128, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (l, c) = pairs_for_frame(&f, Qp::new(37).unwrap(), 0, &mut rng).unwrap();
        assert_eq!((l.len(), c.len()), (4, 4));
        assert_eq!(l[0].x[0].width(), 48);
        assert_eq!(c[0].x.len(), 3);
        assert_eq!(c[0].x[0].width(), 32);
        assert_eq!(c[0].y[0].width(), 32);
    }

    #[test]
    fn pair_core_is_coded_downsample() {
        // Recompose: down-sample the original, code it at QP-6 on its own and
        // compare with the core of the pair's input tile.
        let f = crate::synth::frame(128, 64, 8);
        let qp = Qp::new(37).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (l, _) = pairs_for_frame(&f, qp, 0, &mut rng).unwrap();
        let lr = downsample_frame(&f).unwrap();
        let rd = crate::coder::RdParams::new(qp, crate::intra::LAMBDA_CONSTANT).unwrap();
        // first CTU: no neighbours
        let src = lr.y.crop(0, 0, 32, 32).unwrap();
        let cb = crate::intra::encode_plane_intra(&src, rd.qp_low, rd.lambda_low, &Default::default()).unwrap();
        let core = l[0].x[0].crop(8, 8, 32, 32).unwrap();
        assert_eq!(core, cb.recon);
        // the HR target is the original block
        assert_eq!(l[1].y[0], f.y.crop(0, 64, 64, 64).unwrap());
    }

    #[test]
    fn split_last_tenth() {
        let files: Vec<PathBuf> = (0..20).map(|i| PathBuf::from(format!("{i:02}.png"))).collect();
        let (t, v) = split_corpus(&files);
        assert_eq!((t.len(), v.len()), (18, 2));
        assert_eq!(v[0], PathBuf::from("18.png"));
        assert_eq!(split_corpus(&files[..1]).1.len(), 0);
    }

    #[test]
    fn zero_epochs_is_dctif() {
        let f = crate::synth::frame(64, 64, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (l, _) = pairs_for_frame(&f, Qp::new(37).unwrap(), 0, &mut rng).unwrap();
        let opts = TrainOptions {
            cfg: TrainConfig { epochs: 0, ..Default::default() },
            arch: Architecture::compact(),
            variant: Variant::Luma,
            qp: 37,
            checkpoint: None,
            log_csv: None,
        };
        let r = train_model(&l, &[], &opts).unwrap();
        assert_eq!(r.net.params()[12].sum_sq(), 0.0);
        assert_eq!(l[0].ssd(Some(&r.net)).unwrap(), l[0].ssd(None).unwrap());
        // the initial loss is the mean squared DCTIF residual
        let s = l[0].to_sample().unwrap();
        let expected = s.target.sum_sq() / s.target.len() as f64;
        assert!((r.initial_val_mse - expected).abs() < 1e-9);
    }
}
