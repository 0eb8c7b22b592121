use crate::{ArchChoice, DecodeArgs, EncodeArgs, EvalArgs, FitAlphaArgs, InfoArgs, TrainArgs, Up, VariantArg};
use aric_core::coder::{self, EncodeOptions, ForceMode, ModelSet, UpMethod};
use aric_core::eval::report::{
    self, AlphaSummary, BdRecord, DecisionRecord, HittingRecord, RdRecord,
};
use aric_core::eval::{self, fmt_f64, Quality, RdCurve};
use aric_core::frame::{load_frame, save_frame, Channel, Frame};
use aric_core::intra::Qp;
use aric_core::nn::{read_model, Architecture, LayerKind, TrainConfig, Variant};
use aric_core::resample::{CHROMA_HALF_PEL, CONTEXT, DOWN_FILTER, LUMA_HALF_PEL};
use aric_core::training::{self, TrainOptions};
use aric_core::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// `dir/stem.suffix` for a file written beside `path`.
fn beside(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or(path.as_os_str()).to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).expect("plain data");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct ConfigEcho<'a, T> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    args: &'a T,
}

fn echo<T: Serialize>(path: &Path, command: &'static str, args: &T) -> Result<()> {
    write_json(
        path,
        &ConfigEcho {
            tool: "aric",
            version: env!("CARGO_PKG_VERSION"),
            command,
            args,
        },
    )
}

fn load_models(dir: Option<&Path>) -> Result<ModelSet> {
    match dir {
        Some(d) => ModelSet::load_dir(d),
        None => Ok(ModelSet::empty()),
    }
}

fn load_input(a: &EncodeArgs) -> Result<Frame> {
    match a.size {
        Some((w, h)) => load_frame(&a.input, w, h),
        None => {
            let ext = a.input.extension().map(|e| e.to_string_lossy().to_lowercase());
            if matches!(ext.as_deref(), Some("yuv") | Some("raw") | Some("i420")) {
                return Err(Error::arg("raw input needs --size WIDTHxHEIGHT"));
            }
            training::load_image(&a.input)
        }
    }
}

pub fn encode(a: &EncodeArgs) -> Result<()> {
    let qp = Qp::new(a.qp)?;
    if let Some(dir) = &a.models {
        if training::listed_in_manifests(dir, &a.input)? {
            return Err(Error::Config(format!(
                "{} is listed in a training manifest in {}; refusing to evaluate on training data",
                a.input.display(),
                dir.display()
            )));
        }
    }
    let frame = load_input(a)?;
    let models = load_models(a.models.as_deref())?;
    let opts = EncodeOptions {
        force_mode: if a.force_low {
            Some(ForceMode::Low)
        } else if a.force_full {
            Some(ForceMode::Full)
        } else {
            None
        },
        force_up: a.force_up.map(|u| match u {
            Up::Cnn => UpMethod::Cnn,
            Up::Dctif => UpMethod::Dctif,
        }),
        stage2: !a.no_stage2,
        lambda_constant: a.lambda_constant,
    };
    let out = coder::encode_frame(&frame, qp, &models, &opts)?;
    std::fs::write(&a.out, &out.bitstream).map_err(|e| Error::io(&a.out, e))?;
    save_frame(&beside(&a.out, "recon.yuv"), &out.recon)?;

    let sequence = a
        .sequence
        .clone()
        .unwrap_or_else(|| a.input.file_stem().unwrap_or_default().to_string_lossy().into_owned());
    let decisions: Vec<DecisionRecord> = out
        .decisions
        .iter()
        .map(|d| DecisionRecord::new(&sequence, qp.value(), d))
        .collect();
    report::write_csv(&beside(&a.out, "decisions.csv"), &decisions)?;

    let [ry, rcb, rcr] = out.recon.cropped_planes();
    let [oy, ocb, ocr] = frame.cropped_planes();
    let rd = RdRecord {
        sequence,
        qp: qp.value(),
        bits: out.bitstream.len() as u64 * 8,
        psnr_y: eval::psnr(&ry, &oy)?,
        psnr_cb: eval::psnr(&rcb, &ocb)?,
        psnr_cr: eval::psnr(&rcr, &ocr)?,
        ssim_y: eval::ssim(&ry, &oy)?,
    };
    report::write_csv(&beside(&a.out, "rd.csv"), std::slice::from_ref(&rd))?;
    let grid = frame.grid();
    for (ch, name) in [(Channel::Y, "y"), (Channel::Cb, "cb"), (Channel::Cr, "cr")] {
        let map = eval::mode_map(&out.decisions, grid.rows, grid.cols, ch)?;
        report::write_grid(&beside(&a.out, &format!("mode_map_{name}.csv")), &map)?;
    }
    echo(&beside(&a.out, "config.json"), "encode", a)?;

    let hit = eval::hitting_stats(&out.decisions)?;
    println!("bits {}", rd.bits);
    println!("psnr_y {}", fmt_f64(rd.psnr_y));
    println!("psnr_cb {}", fmt_f64(rd.psnr_cb));
    println!("psnr_cr {}", fmt_f64(rd.psnr_cr));
    println!("ssim_y {}", fmt_f64(rd.ssim_y));
    println!("p_hitting {}", fmt_f64(hit.p_hitting));
    println!("p_cnn y/cb/cr {} {} {}", fmt_f64(hit.p_luma), fmt_f64(hit.p_cb), fmt_f64(hit.p_cr));
    if let Some(tag) = out.model_tag {
        println!("model_qp_tag {tag}");
    }
    Ok(())
}

pub fn decode(a: &DecodeArgs) -> Result<()> {
    let bs = std::fs::read(&a.bitstream).map_err(|e| Error::io(&a.bitstream, e))?;
    let models = load_models(a.models.as_deref())?;
    let f = coder::decode_frame(&bs, &models)?;
    save_frame(&a.out, &f)?;
    println!("decoded {}x{}", f.orig_width(), f.orig_height());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let qp = Qp::new(a.qp)?;
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.batch {
        cfg.batch = v;
    }
    if let Some(v) = a.momentum {
        cfg.momentum = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    cfg.validate()?;
    let variant = match a.variant {
        VariantArg::Luma => Variant::Luma,
        VariantArg::Chroma => Variant::Chroma,
    };
    let arch = match a.arch {
        ArchChoice::Default => Architecture::default(),
        ArchChoice::Compact => Architecture::compact(),
    };

    let files = training::list_corpus(&a.corpus)?;
    if files.is_empty() {
        return Err(Error::arg(format!("no images in {}", a.corpus.display())));
    }
    let (train_files, val_files) = training::split_corpus(&files);
    training::write_manifest(&training::manifest_path(&a.out), &train_files, &val_files)?;
    let train_pairs = training::generate_pairs(&train_files, qp, cfg.seed)?;
    let val_pairs = training::generate_pairs(&val_files, qp, cfg.seed.wrapping_add(1))?;
    let skipped = train_pairs.skipped.len() + val_pairs.skipped.len();
    log::info!(
        "{} training and {} validation pairs, {skipped} files skipped",
        train_pairs.of(variant).len(),
        val_pairs.of(variant).len()
    );

    #[derive(Serialize)]
    struct Echo<'a> {
        #[serde(flatten)]
        args: &'a TrainArgs,
        effective: &'a TrainConfig,
    }
    echo(&beside(&a.out, "config.json"), "train", &Echo { args: a, effective: &cfg })?;

    let opts = TrainOptions {
        cfg,
        arch,
        variant,
        qp: qp.value(),
        checkpoint: Some(a.out.clone()),
        log_csv: Some(beside(&a.out, "log.csv")),
    };
    let rep = training::train_model(train_pairs.of(variant), val_pairs.of(variant), &opts)?;
    let best = rep.log.iter().find(|l| l.epoch == rep.best_epoch).map_or(rep.initial_val_mse, |l| l.val_mse);
    println!("pairs {} train, {} val, {skipped} files skipped", train_pairs.of(variant).len(), val_pairs.of(variant).len());
    println!("dctif_val_mse {}", fmt_f64(rep.initial_val_mse));
    println!("best_val_mse {} (epoch {})", fmt_f64(best), rep.best_epoch);
    println!("model {}", a.out.display());
    Ok(())
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut v = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.to_string_lossy().ends_with(suffix) {
            v.push(p);
        }
    }
    v.sort();
    Ok(v)
}

fn rd_records(dir: &Path) -> Result<BTreeMap<String, Vec<RdRecord>>> {
    let mut by_seq: BTreeMap<String, Vec<RdRecord>> = BTreeMap::new();
    for p in files_with_suffix(dir, ".rd.csv")? {
        for r in report::read_csv::<RdRecord>(&p)? {
            by_seq.entry(r.sequence.clone()).or_default().push(r);
        }
    }
    Ok(by_seq)
}

#[derive(Serialize)]
struct LabeledRd {
    label: String,
    sequence: String,
    qp: u8,
    bits: u64,
    psnr_y: String,
    psnr_cb: String,
    psnr_cr: String,
    ssim_y: String,
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let anchor = rd_records(&a.anchor_dir)?;
    let test = rd_records(&a.test_dir)?;

    let mut points = Vec::new();
    for (label, set) in [("anchor", &anchor), ("test", &test)] {
        for recs in set.values() {
            for r in recs {
                points.push(LabeledRd {
                    label: label.into(),
                    sequence: r.sequence.clone(),
                    qp: r.qp,
                    bits: r.bits,
                    psnr_y: fmt_f64(r.psnr_y),
                    psnr_cb: fmt_f64(r.psnr_cb),
                    psnr_cr: fmt_f64(r.psnr_cr),
                    ssim_y: fmt_f64(r.ssim_y),
                });
            }
        }
    }
    report::write_csv(&a.out.join("rd_points.csv"), &points)?;

    let mut bd = Vec::new();
    for (seq, recs) in &test {
        let Some(anchor_recs) = anchor.get(seq) else {
            log::warn!("sequence {seq} has no anchor runs");
            continue;
        };
        let curve = |label: &str, r: &[RdRecord]| RdCurve::new(label, r.iter().map(RdRecord::point).collect());
        let (ca, ct) = (curve("anchor", anchor_recs), curve("test", recs));
        for q in Quality::ALL {
            let v = eval::bd_rate(&ca, &ct, q)?;
            println!("{seq} {} {}%", q.name(), fmt_f64(v));
            bd.push(BdRecord {
                sequence: seq.clone(),
                metric: q.name().into(),
                bd_rate_percent: v,
            });
        }
    }
    if bd.is_empty() {
        return Err(Error::Evaluation("no sequence present in both directories".into()));
    }
    report::write_csv(&a.out.join("bd_rate.csv"), &bd)?;

    let mut groups: BTreeMap<(String, u8), Vec<coder::CtuDecision>> = BTreeMap::new();
    for p in files_with_suffix(&a.test_dir, ".decisions.csv")? {
        for r in report::read_csv::<DecisionRecord>(&p)? {
            groups.entry((r.source.clone(), r.qp)).or_default().push(r.to_decision()?);
        }
    }
    let mut hits = Vec::new();
    for ((seq, qp), d) in &groups {
        hits.push(HittingRecord::new(seq, *qp, &eval::hitting_stats(d)?));
    }
    report::write_csv(&a.out.join("hitting.csv"), &hits)?;
    Ok(())
}

pub fn fit_alpha(a: &FitAlphaArgs) -> Result<()> {
    if a.bins == 0 || !(a.max_alpha > 0.0) {
        return Err(Error::arg("--bins and --max-alpha must be positive"));
    }
    let out = a.out.clone().unwrap_or_else(|| a.runs.clone());
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut samples = Vec::new();
    let mut per_ctu: BTreeMap<(String, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for p in files_with_suffix(&a.runs, ".decisions.csv")? {
        for r in report::read_csv::<DecisionRecord>(&p)? {
            if let (Some(low), Some(full)) = (r.low_ssd_low, r.low_ssd) {
                let s = (low as f64, full as f64);
                samples.push(s);
                per_ctu.entry((r.source.clone(), r.ctu_index)).or_default().push(s);
            }
        }
    }
    let global = eval::fit_alpha(&samples)?;
    // one alpha per CTU, fitted over its runs at different QPs
    let alphas: Vec<f64> = per_ctu.values().filter_map(|s| eval::fit_alpha(s).ok()).map(|f| f.alpha).collect();
    let hist = eval::histogram(&alphas, 0.0, a.max_alpha, a.bins);
    let peak = eval::histogram_peak(&hist);
    report::write_alpha_hist(&out.join("alpha_hist.csv"), &hist)?;
    write_json(
        &out.join("alpha_fit.json"),
        &AlphaSummary {
            global: Some(global),
            per_ctu_fits: alphas.len(),
            histogram_peak: peak,
        },
    )?;
    println!(
        "alpha {} beta {} r2 {} over {} samples",
        fmt_f64(global.alpha),
        fmt_f64(global.beta),
        fmt_f64(global.r2),
        global.samples
    );
    println!(
        "per-CTU fits {}, histogram peak {}",
        alphas.len(),
        peak.map_or("none".into(), fmt_f64)
    );
    Ok(())
}

fn print_table(arch: &Architecture, v: Variant) {
    println!("  {} ({} in, {} out)", v.name(), v.in_channels(), v.out_channels());
    let mut params = 0;
    for l in arch.layer_table(v) {
        match l.kind {
            LayerKind::Conv | LayerKind::Deconv => {
                params += l.kh as usize * l.kw as usize * l.in_ch as usize * l.out_ch as usize + l.out_ch as usize;
                println!(
                    "    {:<7} {}x{} {:>3} -> {:<3} stride {} pad {}",
                    format!("{:?}", l.kind),
                    l.kh,
                    l.kw,
                    l.in_ch,
                    l.out_ch,
                    l.stride(),
                    l.pad()
                );
            }
            _ => println!("    {:<7} {:>7} -> {}", format!("{:?}", l.kind), l.in_ch, l.out_ch),
        }
    }
    println!("    {params} parameters, receptive radius {}", arch.receptive_radius());
}

pub fn info(a: &InfoArgs) -> Result<()> {
    if a.filters {
        let fmt = |t: &[i32]| t.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ");
        println!("down-sampling   {{{}}} / 64", fmt(&DOWN_FILTER));
        println!("luma half-pel   {{{}}} / 64", fmt(&LUMA_HALF_PEL));
        println!("chroma half-pel {{{}}} / 64", fmt(&CHROMA_HALF_PEL));
        println!("context         {CONTEXT} low-resolution samples per side");
    }
    if a.arch {
        for (name, arch) in [("default", Architecture::default()), ("compact", Architecture::compact())] {
            println!("{name}:");
            for v in [Variant::Luma, Variant::Chroma] {
                print_table(&arch, v);
            }
        }
    }
    if let Some(p) = &a.model {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let net = read_model(&bytes)?;
        println!("{}: {} model, qp_tag {}, {} parameters", p.display(), net.variant.name(), net.qp_tag, net.param_count());
        print_table(&net.arch, net.variant);
    }
    Ok(())
}
