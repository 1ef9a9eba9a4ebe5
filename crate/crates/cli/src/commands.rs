//! Subcommand implementations: gen, train, synth, eval, ablate.

use std::fs;
use std::path::Path;

use msgldm_core::data::{
    dataset_manifest, dice, generate_phantom, load_bundle, psnr, save_bundle, save_tensor,
    DatasetManifest, ModalityBundle, Split, MODALITY_NAMES, NUM_MODALITIES,
};
use msgldm_core::diffusion::{make_schedule, DiffusionSchedule, SamplerConfig};
use msgldm_core::frequency::{ssim, SsimParams};
use msgldm_core::networks::{load_checkpoint, save_checkpoint, Model};
use msgldm_core::train::{
    autoencoder_psnr, pretrain_autoencoder, synthesize_modality, train_main, EpochLog,
};
use msgldm_core::{Error, Result, Tensor};

use crate::config::RunConfig;
use crate::svg;

pub fn schedule_from(cfg: &RunConfig) -> Result<DiffusionSchedule> {
    make_schedule(
        cfg.diffusion.timesteps,
        cfg.diffusion.beta_start,
        cfg.diffusion.beta_end,
    )
}

/// Parses a Fig.-4-style 4-bit availability code ordered T1,T2,T1CE,FLAIR.
pub fn parse_availability_code(code: &str) -> Result<[bool; NUM_MODALITIES]> {
    let chars: Vec<char> = code.chars().collect();
    if chars.len() != NUM_MODALITIES || chars.iter().any(|c| *c != '0' && *c != '1') {
        return Err(Error::invalid(
            "availability_code",
            format!("expected {} binary digits, got {code:?}", NUM_MODALITIES),
        ));
    }
    let mut avail = [false; NUM_MODALITIES];
    for (j, c) in chars.iter().enumerate() {
        avail[j] = *c == '1';
    }
    Ok(avail)
}

pub fn availability_code(avail: &[bool]) -> String {
    avail.iter().map(|&a| if a { '1' } else { '0' }).collect()
}

/// Modality index from a name (t1/t2/t1ce/flair) or numeric index.
pub fn parse_modality(s: &str) -> Result<usize> {
    let lower = s.to_ascii_lowercase();
    if let Some(j) = MODALITY_NAMES.iter().position(|n| *n == lower) {
        return Ok(j);
    }
    lower
        .parse::<usize>()
        .ok()
        .filter(|j| *j < NUM_MODALITIES)
        .ok_or_else(|| {
            Error::invalid(
                "modality",
                format!("unknown modality {s:?}; expected one of {MODALITY_NAMES:?} or 0..{NUM_MODALITIES}"),
            )
        })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn load_split_bundles(dir: &Path, split: Split) -> Result<Vec<ModalityBundle>> {
    let manifest = dataset_manifest(dir)?;
    manifest
        .split(split)
        .map(|entry| load_bundle(dir, entry))
        .collect()
}

// ---------------------------------------------------------------- gen

pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dir = cfg.data_dir(out);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for i in 0..cfg.data.n_samples {
        let bundle = generate_phantom(&cfg.data, i)?;
        save_bundle(&bundle, &dir)?;
    }
    let manifest = if cfg.data.n_samples > 0 {
        dataset_manifest(&dir)?
    } else {
        DatasetManifest { samples: Vec::new() }
    };
    write_file(&dir.join("manifest.json"), &manifest.to_json()?)?;
    println!(
        "gen: wrote {} samples ({}x{}) to {}",
        cfg.data.n_samples,
        cfg.data.image_size,
        cfg.data.image_size,
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- train

fn loss_log_header() -> String {
    "epoch,train_total,train_seg,train_sc,train_sa,train_ldm,val_total,val_seg,val_sc,val_sa,val_ldm\n"
        .to_string()
}

fn loss_log_row(log: &EpochLog) -> String {
    format!(
        "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
        log.epoch,
        log.train.total,
        log.train.seg,
        log.train.sc,
        log.train.sa,
        log.train.ldm,
        log.val.total,
        log.val.seg,
        log.val.sc,
        log.val.sa,
        log.val.ldm
    )
}

pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub ae_psnr: f64,
    pub best_epoch: Option<usize>,
}

/// Shared by `train` and `ablate`: pretrain the autoencoder, freeze it, run
/// the main phase. Checkpointing is optional (ablate skips it).
pub fn run_training(
    cfg: &RunConfig,
    model: &Model,
    train: &[ModalityBundle],
    val: &[ModalityBundle],
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome> {
    let sched = schedule_from(cfg)?;
    pretrain_autoencoder(model, train, &cfg.optim)?;
    let ae_psnr = autoencoder_psnr(model, val)?;

    let mut best = f64::INFINITY;
    let mut best_epoch = None;
    if let Some(path) = checkpoint {
        // epochs=0 still leaves a valid checkpoint of the initial weights
        save_checkpoint(&model.params(), path)?;
    }
    let logs = train_main(model, train, val, &sched, &cfg.loss, &cfg.optim, |log, m| {
        if log.val.total < best {
            best = log.val.total;
            best_epoch = Some(log.epoch);
            if let Some(path) = checkpoint {
                save_checkpoint(&m.params(), path)?;
            }
        }
        Ok(())
    })?;
    Ok(TrainOutcome { logs, ae_psnr, best_epoch })
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dir = cfg.data_dir(out);
    let train = load_split_bundles(&dir, Split::Train)?;
    let val = load_split_bundles(&dir, Split::Val)?;
    let model = Model::new(&cfg.model, cfg.optim.seed)?;

    let ckpt = out.join("model.ckpt");
    let outcome = run_training(cfg, &model, &train, &val, Some(&ckpt))?;

    let mut csv = loss_log_header();
    for log in &outcome.logs {
        csv.push_str(&loss_log_row(log));
    }
    write_file(&out.join("loss_log.csv"), &csv)?;

    let train_curve: Vec<f64> = outcome.logs.iter().map(|l| l.train.total).collect();
    let val_curve: Vec<f64> = outcome.logs.iter().map(|l| l.val.total).collect();
    write_file(
        &out.join("loss_curve.svg"),
        &svg::line_chart(
            "training loss",
            "epoch",
            "L_total",
            &[("train", &train_curve), ("val", &val_curve)],
        ),
    )?;
    let summary = serde_json::json!({
        "autoencoder_psnr_db": outcome.ae_psnr,
        "epochs": outcome.logs.len(),
        "best_epoch": outcome.best_epoch,
        "best_val_total": outcome.logs.iter().map(|l| l.val.total).fold(f64::INFINITY, f64::min),
        "checkpoint": ckpt.display().to_string(),
    });
    write_file(&out.join("train_summary.json"), &format!("{summary:#}\n"))?;
    println!(
        "train: {} epochs, AE PSNR {:.2} dB, best epoch {:?}, checkpoint {}",
        outcome.logs.len(),
        outcome.ae_psnr,
        outcome.best_epoch,
        ckpt.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- synth

pub struct SynthArgs {
    pub code: String,
    pub target: String,
    pub sample_id: Option<String>,
    pub steps: Option<usize>,
    pub snapshots: Vec<usize>,
}

pub fn load_model(cfg: &RunConfig, out: &Path) -> Result<Model> {
    let model = Model::new(&cfg.model, cfg.optim.seed)?;
    let ckpt = out.join("model.ckpt");
    load_checkpoint(&model.params(), &ckpt)?;
    Ok(model)
}

fn find_bundle(dir: &Path, split: Split, sample_id: Option<&str>) -> Result<ModalityBundle> {
    let manifest = dataset_manifest(dir)?;
    let entry = match sample_id {
        Some(id) => manifest
            .samples
            .iter()
            .find(|e| e.sample_id == id)
            .ok_or_else(|| Error::invalid("synth", format!("unknown sample id {id}")))?,
        None => manifest
            .split(split)
            .next()
            .ok_or_else(|| Error::invalid("synth", "empty split"))?,
    };
    load_bundle(dir, entry)
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path, args: &SynthArgs) -> Result<()> {
    let avail = parse_availability_code(&args.code)?;
    let target = parse_modality(&args.target)?;
    if avail[target] {
        return Err(Error::invalid(
            "synth",
            format!(
                "code {} marks target {} as available; the target must be missing",
                args.code, MODALITY_NAMES[target]
            ),
        ));
    }
    if !avail.iter().any(|&a| a) {
        return Err(Error::invalid("synth", "availability code must keep at least one modality"));
    }
    let model = load_model(cfg, out)?;
    let sched = schedule_from(cfg)?;
    let scfg = SamplerConfig {
        kind: cfg.diffusion.sampler_kind,
        steps: args.steps.unwrap_or(cfg.diffusion.sampler_steps),
        seed: cfg.optim.seed,
        snapshot_timesteps: args.snapshots.clone(),
        clip_x0: Some(3.0),
    };
    let dir = cfg.data_dir(out);
    let bundle = find_bundle(&dir, Split::Test, args.sample_id.as_deref())?;
    let (image, traj) = synthesize_modality(&model, &bundle, &avail, target, &sched, &scfg)?;

    let synth_dir = out.join("synth");
    fs::create_dir_all(&synth_dir).map_err(|e| Error::io(&synth_dir, e))?;
    let stem = format!("{}_{}_{}", bundle.sample_id, MODALITY_NAMES[target], args.code);
    save_tensor(&image, &synth_dir.join(format!("{stem}.tnsr")))?;
    traj.save(&synth_dir)?;

    let s = bundle.image_size;
    let gt = bundle.images[target].reshape(&[1, 1, s, s])?;
    let p = psnr(&image, &gt, 1.0)?;
    let sm = ssim(&image, &gt, &SsimParams::default())?.item();
    println!(
        "synth: {} target={} code={} psnr={:.2} ssim={:.4} snapshots={}",
        bundle.sample_id,
        MODALITY_NAMES[target],
        args.code,
        p,
        sm,
        traj.snapshots.len()
    );
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub target: usize,
    pub code: String,
    pub available: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub dice_mean: f64,
}

pub fn predicted_seg(model: &Model, bundle: &ModalityBundle, avail: &[bool]) -> Result<Vec<u8>> {
    let s = bundle.image_size;
    let images: Vec<Tensor> = bundle
        .images
        .iter()
        .map(|img| img.reshape(&[1, 1, s, s]))
        .collect::<Result<_>>()?;
    let (fused, _) = model.structure_pathway(&images, avail)?;
    let scores = model.seg_decoder.forward(&fused)?;
    let k = model.cfg.seg_classes;
    let d = scores.data();
    let mut pred = vec![0u8; s * s];
    for px in 0..s * s {
        let mut best = 0usize;
        for c in 1..k {
            if d[c * s * s + px] > d[best * s * s + px] {
                best = c;
            }
        }
        pred[px] = best as u8;
    }
    Ok(pred)
}

/// Synthesizes one (sample, target, code) cell and scores it.
pub fn eval_cell(
    model: &Model,
    bundle: &ModalityBundle,
    avail: &[bool; NUM_MODALITIES],
    target: usize,
    sched: &DiffusionSchedule,
    scfg: &SamplerConfig,
) -> Result<SampleMetrics> {
    let (image, _) = synthesize_modality(model, bundle, avail, target, sched, scfg)?;
    let s = bundle.image_size;
    let gt = bundle.images[target].reshape(&[1, 1, s, s])?;
    let p = psnr(&image, &gt, 1.0)?;
    let sm = ssim(&image, &gt, &SsimParams::default())?.item();
    let pred = predicted_seg(model, bundle, avail)?;
    let d = dice(&pred, &bundle.seg_mask, &[1, 2])?;
    Ok(SampleMetrics {
        sample_id: bundle.sample_id.clone(),
        target,
        code: availability_code(avail),
        available: avail.iter().filter(|&&a| a).count(),
        psnr: p,
        ssim: sm,
        dice_mean: d.mean,
    })
}

/// All availability codes with the target missing and ≥ 1 modality present.
pub fn codes_for_target(target: usize) -> Vec<[bool; NUM_MODALITIES]> {
    let mut out = Vec::new();
    for code in 1..(1usize << NUM_MODALITIES) {
        let avail: [bool; NUM_MODALITIES] = std::array::from_fn(|j| code & (1 << j) != 0);
        if !avail[target] {
            out.push(avail);
        }
    }
    out
}

pub struct GroupStats {
    pub available: usize,
    pub n: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

pub fn group_by_available(rows: &[SampleMetrics]) -> Vec<GroupStats> {
    (1..NUM_MODALITIES)
        .map(|g| {
            let vals: Vec<&SampleMetrics> = rows.iter().filter(|r| r.available == g).collect();
            let n = vals.len();
            let mean = |f: &dyn Fn(&SampleMetrics) -> f64| {
                vals.iter().map(|r| f(r)).sum::<f64>() / n.max(1) as f64
            };
            let std = |f: &dyn Fn(&SampleMetrics) -> f64, mu: f64| {
                (vals.iter().map(|r| (f(r) - mu).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt()
            };
            let pm = mean(&|r| r.psnr);
            let sm = mean(&|r| r.ssim);
            GroupStats {
                available: g,
                n,
                psnr_mean: pm,
                psnr_std: std(&|r| r.psnr, pm),
                ssim_mean: sm,
                ssim_std: std(&|r| r.ssim, sm),
            }
        })
        .collect()
}

pub fn cmd_eval(cfg: &RunConfig, out: &Path, split: Split) -> Result<()> {
    let dir = cfg.data_dir(out);
    let bundles = load_split_bundles(&dir, split)?;
    if bundles.is_empty() {
        return Err(Error::invalid("eval", "split is empty"));
    }
    let model = load_model(cfg, out)?;
    let sched = schedule_from(cfg)?;
    let scfg = SamplerConfig {
        kind: cfg.diffusion.sampler_kind,
        steps: cfg.diffusion.sampler_steps,
        seed: cfg.optim.seed,
        snapshot_timesteps: vec![],
        clip_x0: Some(3.0),
    };

    let mut rows = Vec::new();
    for bundle in &bundles {
        for target in 0..NUM_MODALITIES {
            for avail in codes_for_target(target) {
                rows.push(eval_cell(&model, bundle, &avail, target, &sched, &scfg)?);
            }
        }
    }

    let mut csv = String::from("sample_id,target_modality,availability_code,psnr,ssim,dice_mean\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{:.4},{:.6},{:.6}\n",
            r.sample_id, MODALITY_NAMES[r.target], r.code, r.psnr, r.ssim, r.dice_mean
        ));
    }
    write_file(&out.join("eval_metrics.csv"), &csv)?;

    let groups = group_by_available(&rows);
    let monotone = groups.windows(2).all(|w| w[1].psnr_mean >= w[0].psnr_mean);
    let summary = serde_json::json!({
        "rows": rows.len(),
        "groups": groups.iter().map(|g| serde_json::json!({
            "available": g.available,
            "n": g.n,
            "psnr_mean": g.psnr_mean,
            "psnr_std": g.psnr_std,
            "ssim_mean": g.ssim_mean,
            "ssim_std": g.ssim_std,
        })).collect::<Vec<_>>(),
        "psnr_monotone_in_available": monotone,
    });
    write_file(&out.join("eval_summary.json"), &format!("{summary:#}\n"))?;
    let bars: Vec<(String, f64)> = groups
        .iter()
        .map(|g| (g.available.to_string(), g.psnr_mean))
        .collect();
    write_file(
        &out.join("psnr_by_available.svg"),
        &svg::bar_chart("PSNR vs available modalities", "available", "dB", &bars),
    )?;
    for g in &groups {
        println!(
            "eval: {} available → PSNR {:.2}±{:.2} dB, SSIM {:.4}±{:.4} (n={})",
            g.available, g.psnr_mean, g.psnr_std, g.ssim_mean, g.ssim_std, g.n
        );
    }
    println!("eval: psnr monotone in availability: {monotone}");
    Ok(())
}

// ---------------------------------------------------------------- ablate

pub const ABLATION_VARIANTS: [&str; 6] = [
    "full",
    "wo_decoupling_mmsf",
    "wo_hfib",
    "wo_msse",
    "wo_loss_sa",
    "wo_loss_sc",
];

/// Maps a Table-3 variant name onto config switches.
pub fn apply_variant(cfg: &RunConfig, variant: &str) -> Result<RunConfig> {
    let mut v = cfg.clone();
    match variant {
        "full" => {}
        "wo_decoupling_mmsf" => v.model.decoupled = false,
        "wo_hfib" => v.model.use_hfib = false,
        "wo_msse" => v.model.use_msse = false,
        "wo_loss_sa" => v.loss.lambda2 = 0.0,
        "wo_loss_sc" => v.loss.lambda1 = 0.0,
        other => {
            return Err(Error::invalid(
                "ablate",
                format!("unknown variant {other:?}; expected one of {ABLATION_VARIANTS:?}"),
            ))
        }
    }
    Ok(v)
}

pub struct VariantResult {
    pub variant: String,
    pub seed: u64,
    pub psnr: f64,
    pub ssim: f64,
    pub dice: f64,
}

/// Trains one variant at one seed and evaluates it on FLAIR synthesis from
/// code 1110 over the test split.
pub fn run_variant(
    base: &RunConfig,
    variant: &str,
    seed: u64,
    train: &[ModalityBundle],
    val: &[ModalityBundle],
    test: &[ModalityBundle],
) -> Result<VariantResult> {
    let mut cfg = apply_variant(base, variant)?;
    cfg.optim.seed = seed;
    cfg.resolve()?;
    let model = Model::new(&cfg.model, seed)?;
    run_training(&cfg, &model, train, val, None)?;

    let sched = schedule_from(&cfg)?;
    let scfg = SamplerConfig {
        kind: cfg.diffusion.sampler_kind,
        steps: cfg.diffusion.sampler_steps,
        seed,
        snapshot_timesteps: vec![],
        clip_x0: Some(3.0),
    };
    let target = NUM_MODALITIES - 1; // flair
    let avail = [true, true, true, false];
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    let mut dice_sum = 0.0;
    for bundle in test {
        let m = eval_cell(&model, bundle, &avail, target, &sched, &scfg)?;
        psnr_sum += m.psnr;
        ssim_sum += m.ssim;
        dice_sum += m.dice_mean;
    }
    let n = test.len().max(1) as f64;
    Ok(VariantResult {
        variant: variant.to_string(),
        seed,
        psnr: psnr_sum / n,
        ssim: ssim_sum / n,
        dice: dice_sum / n,
    })
}

pub fn cmd_ablate(cfg: &RunConfig, out: &Path, variants: &[String], seeds: &[u64]) -> Result<()> {
    for v in variants {
        apply_variant(cfg, v)?; // validate names before spending compute
    }
    let dir = cfg.data_dir(out);
    let train = load_split_bundles(&dir, Split::Train)?;
    let val = load_split_bundles(&dir, Split::Val)?;
    let test = load_split_bundles(&dir, Split::Test)?;

    let mut csv = String::from("variant,seed,psnr,ssim,dice_mean\n");
    let mut results: Vec<VariantResult> = Vec::new();
    for variant in variants {
        for &seed in seeds {
            let r = run_variant(cfg, variant, seed, &train, &val, &test)?;
            println!(
                "ablate: {} seed={} psnr={:.2} ssim={:.4} dice={:.4}",
                r.variant, r.seed, r.psnr, r.ssim, r.dice
            );
            csv.push_str(&format!(
                "{},{},{:.4},{:.6},{:.6}\n",
                r.variant, r.seed, r.psnr, r.ssim, r.dice
            ));
            results.push(r);
        }
    }
    write_file(&out.join("ablation.csv"), &csv)?;

    let summary: Vec<_> = variants
        .iter()
        .map(|v| {
            let rs: Vec<&VariantResult> = results.iter().filter(|r| &r.variant == v).collect();
            let n = rs.len().max(1) as f64;
            serde_json::json!({
                "variant": v,
                "psnr_mean": rs.iter().map(|r| r.psnr).sum::<f64>() / n,
                "ssim_mean": rs.iter().map(|r| r.ssim).sum::<f64>() / n,
                "dice_mean": rs.iter().map(|r| r.dice).sum::<f64>() / n,
            })
        })
        .collect();
    write_file(
        &out.join("ablation_summary.json"),
        &format!("{:#}\n", serde_json::Value::Array(summary)),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn availability_code_round_trip() {
        let a = parse_availability_code("1010").unwrap();
        assert_eq!(a, [true, false, true, false]);
        assert_eq!(availability_code(&a), "1010");
        assert!(parse_availability_code("121").is_err());
        assert!(parse_availability_code("11100").is_err());
    }

    #[test]
    fn modality_parsing() {
        assert_eq!(parse_modality("flair").unwrap(), 3);
        assert_eq!(parse_modality("T1").unwrap(), 0);
        assert_eq!(parse_modality("2").unwrap(), 2);
        assert!(parse_modality("dwi").is_err());
    }

    #[test]
    fn codes_for_target_counts() {
        for t in 0..NUM_MODALITIES {
            let codes = codes_for_target(t);
            assert_eq!(codes.len(), 7);
            assert!(codes.iter().all(|c| !c[t] && c.iter().any(|&a| a)));
        }
    }

    #[test]
    fn variant_mapping() {
        let cfg = RunConfig::default();
        assert!(apply_variant(&cfg, "nonsense").is_err());
        assert!(!apply_variant(&cfg, "wo_hfib").unwrap().model.use_hfib);
        assert!(!apply_variant(&cfg, "wo_msse").unwrap().model.use_msse);
        assert!(!apply_variant(&cfg, "wo_decoupling_mmsf").unwrap().model.decoupled);
        assert_eq!(apply_variant(&cfg, "wo_loss_sc").unwrap().loss.lambda1, 0.0);
        assert_eq!(apply_variant(&cfg, "wo_loss_sa").unwrap().loss.lambda2, 0.0);
        let full = apply_variant(&cfg, "full").unwrap();
        assert!(full.model.use_hfib && full.model.use_msse && full.model.decoupled);
    }

    #[test]
    fn gen_is_idempotent() {
        let tmp = std::env::temp_dir().join("msgldm_gen_test");
        let _ = fs::remove_dir_all(&tmp);
        let mut cfg = RunConfig::default();
        cfg.data.n_samples = 2;
        cfg.data.image_size = 32;
        cfg.resolve().unwrap();
        cmd_gen(&cfg, &tmp).unwrap();
        let read_all = |dir: &Path| -> Vec<(String, Vec<u8>)> {
            let mut files: Vec<_> = fs::read_dir(dir.join("data"))
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            files.sort();
            files
                .into_iter()
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
                .collect()
        };
        let first = read_all(&tmp);
        cmd_gen(&cfg, &tmp).unwrap();
        let second = read_all(&tmp);
        assert_eq!(first, second, "regeneration must be byte-identical");
        assert!(first.iter().any(|(n, _)| n == "manifest.json"));
        fs::remove_dir_all(&tmp).unwrap();
    }

    #[test]
    fn gen_empty_dataset() {
        let tmp = std::env::temp_dir().join("msgldm_gen_empty");
        let _ = fs::remove_dir_all(&tmp);
        let mut cfg = RunConfig::default();
        cfg.data.n_samples = 0;
        cfg.resolve().unwrap();
        cmd_gen(&cfg, &tmp).unwrap();
        let manifest = fs::read_to_string(tmp.join("data/manifest.json")).unwrap();
        assert!(manifest.contains("\"samples\""));
        fs::remove_dir_all(&tmp).unwrap();
    }
}
