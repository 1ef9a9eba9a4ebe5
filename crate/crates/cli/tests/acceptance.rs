//! End-to-end acceptance suite. Each criterion prints exactly one
//! `pass`/`FAIL` line; the test fails if any criterion fails.
//!
//! The heavyweight criteria (smoke training, ablation ordering, guidance
//! ordering, monotonicity) share one trained model and one phantom dataset.

use std::time::Instant;

use msgldm_cli::commands::{self, eval_cell, group_by_available};
use msgldm_cli::config::RunConfig;
use msgldm_cli::verify;

use msgldm_core::data::{dice, generate_phantom, psnr, ModalityBundle, PhantomConfig, Split};
use msgldm_core::diffusion::{make_schedule, q_sample, SamplerConfig, SamplerKind};
use msgldm_core::frequency::{ssim, SsimParams};
use msgldm_core::losses::{
    ldm_loss, segmentation_loss, structure_aware_loss, style_consistency_loss, total_loss,
    LossWeights, StyleBatch,
};
use msgldm_core::networks::Model;
use msgldm_core::rng::Rng;
use msgldm_core::tensor::gradcheck_params;
use msgldm_core::train::{synthesize_modality, synthesize_with_guidance, EpochLog};
use msgldm_core::{Result, Tensor};

struct Criterion {
    name: &'static str,
    pass: bool,
}

fn report(results: &mut Vec<Criterion>, name: &'static str, out: Result<(bool, String)>) {
    let (pass, detail) = match out {
        Ok((p, d)) => (p, d),
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{}  {name}: {detail}", if pass { "pass" } else { "FAIL" });
    results.push(Criterion { name, pass });
}

// ------------------------------------------------------------ criterion 1

fn gradient_fidelity() -> Result<(bool, String)> {
    let start = Instant::now();
    let mut rng = Rng::seed_from(101);
    let mut worst: f64 = 0.0;

    // elementary differentiable operations, composed
    let x = Tensor::param(&[1, 2, 6, 6], rng.normal_vec(72))?;
    let w = Tensor::param(&[3, 2, 3, 3], rng.normal_vec(54))?;
    let (xc, wc) = (x.clone(), w.clone());
    let r = gradcheck_params(
        move || {
            xc.conv2d(&wc, 1, 1)?
                .relu()?
                .resize_bilinear(9, 9)?
                .global_avg_pool()?
                .square()?
                .sum_all()
        },
        &[x, w],
        1e-4,
        1e-4,
    )?;
    worst = worst.max(r.max_rel_error);

    let a = Tensor::param(&[4, 5], rng.normal_vec(20))?;
    let b = Tensor::param(&[5, 3], rng.normal_vec(15))?;
    let (ac, bc) = (a.clone(), b.clone());
    let r = gradcheck_params(
        move || {
            let y = ac.matmul(&bc)?.sigmoid()?;
            y.softmax(1)?.mul(&y)?.sum_all()
        },
        &[a, b],
        1e-4,
        1e-4,
    )?;
    worst = worst.max(r.max_rel_error);

    // every loss: L_sc, L_sa, L_seg, L_ldm, L_total
    let feats = Tensor::param(&[4, 6], rng.normal_vec(24))?;
    let tau = Tensor::param(&[1], vec![4.0])?;
    let xhat = Tensor::param(&[1, 1, 8, 8], rng.uniform_vec(64, 0.05, 0.95))?;
    let gt = Tensor::from_vec(&[1, 1, 8, 8], rng.uniform_vec(64, 0.05, 0.95))?;
    let scores = Tensor::param(&[1, 3, 4, 4], rng.normal_vec(48))?;
    let seg_target: Vec<u8> = (0..16).map(|i| (i % 3) as u8).collect();
    let eps = Tensor::from_vec(&[1, 2, 4, 4], rng.normal_vec(32))?;
    let eps_hat = Tensor::param(&[1, 2, 4, 4], rng.normal_vec(32))?;
    let weights = LossWeights::default();
    let inputs = [feats.clone(), tau.clone(), xhat.clone(), scores.clone(), eps_hat.clone()];
    let r = gradcheck_params(
        move || {
            let sc = style_consistency_loss(
                &StyleBatch::new(feats.clone(), vec![0, 1, 0, 2])?,
                &tau,
            )?;
            let sa = structure_aware_loss(&xhat, &gt, &SsimParams::default())?;
            let seg = segmentation_loss(&scores, &seg_target, 3)?;
            let ldm = ldm_loss(&eps, &eps_hat)?;
            total_loss(&seg, &sc, &sa, &ldm, &weights)
        },
        &inputs,
        1e-5,
        1e-4,
    )?;
    worst = worst.max(r.max_rel_error);

    // full denoiser slice at the relaxed tolerance
    let mcfg = msgldm_core::networks::ModelConfig {
        image_size: 16,
        base_channels: 4,
        d_style: 8,
        num_scales: 2,
        latent_channels: 2,
        timesteps: 10,
        ..Default::default()
    };
    let model = Model::new(&mcfg, 7)?;
    let sched = make_schedule(10, 1e-4, 0.02)?;
    let pcfg = PhantomConfig { image_size: 16, n_samples: 1, ..Default::default() };
    let bundle = generate_phantom(&pcfg, 0)?;
    let images: Vec<Tensor> = bundle
        .images
        .iter()
        .map(|im| im.reshape(&[1, 1, 16, 16]))
        .collect::<Result<_>>()?;
    let (_, f_s) = model.structure_pathway(&images, &[true; 4])?;
    let f_s = f_s.detach();
    let z0 = model.autoencoder.encode(&images[3])?.detach();
    let noise = Tensor::from_vec(z0.shape(), rng.normal_vec(z0.len()))?;
    let z_t = q_sample(&z0, 5, &noise, &sched)?.detach();
    let reg = model.params();
    let slice = reg
        .iter()
        .find(|(name, _)| name.ends_with("denoiser.head.bias"))
        .map(|(_, t)| t.clone())
        .expect("denoiser head bias registered");
    let r = gradcheck_params(
        move || {
            let eps_hat = model.denoiser.forward(&z_t, 5, &f_s, 3)?;
            ldm_loss(&noise, &eps_hat)
        },
        std::slice::from_ref(&slice),
        1e-4,
        1e-3,
    )?;
    let denoiser_err = r.max_rel_error;

    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-4 && denoiser_err <= 1e-3 && secs < 120.0;
    Ok((pass, format!(
        "op/loss rel err {worst:.2e} (tol 1e-4), denoiser slice {denoiser_err:.2e} (tol 1e-3), {secs:.1}s"
    )))
}

// ------------------------------------------------------- criteria 2 and 3

fn spectral_oracle() -> Result<(bool, String)> {
    let checks = verify::run_all()?;
    let pick = |name: &str| {
        checks
            .iter()
            .find(|c| c.name == name)
            .map(|c| (c.pass(), c.observed))
            .unwrap_or((false, f64::NAN))
    };
    let (a, ea) = pick("dct2_matches_naive_oracle");
    let (b, eb) = pick("dct2_inverse_round_trip");
    let (c, ec) = pick("dct2_parseval_energy");
    Ok((a && b && c, format!(
        "naive-oracle {ea:.2e}, round-trip {eb:.2e}, Parseval {ec:.2e} (tol 1e-10)"
    )))
}

fn hfib_algebra() -> Result<(bool, String)> {
    let checks = verify::run_all()?;
    let pick = |name: &str| {
        checks
            .iter()
            .find(|c| c.name == name)
            .map(|c| (c.pass(), c.observed))
            .unwrap_or((false, f64::NAN))
    };
    let (a, ea) = pick("hfib_identity_and_fixed_point");
    let (b, eb) = pick("gaussian_kernel_sums_to_one");
    Ok((a && b, format!(
        "2c−low_pass identity {ea:.2e}, kernel normalization {eb:.2e} (tol 1e-12)"
    )))
}

// ------------------------------------------------------------ criterion 4

fn diffusion_moments() -> Result<(bool, String)> {
    let start = Instant::now();
    let t_total = 200usize;
    let sched = make_schedule(t_total, 1e-4, 0.02)?;
    let z0_val = 0.8f64;
    let z0 = Tensor::from_vec(&[1], vec![z0_val])?;
    let draws = 100_000usize;
    let mut rng = Rng::seed_from(404);
    let mut worst = 0.0f64;

    // closed-form marginal vs q_sample draws
    for &t in &[0usize, t_total / 2, t_total - 1] {
        let ab = sched.alpha_bar[t];
        let (mean, var) = (ab.sqrt() * z0_val, 1.0 - ab);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..draws {
            let eps = Tensor::from_vec(&[1], vec![rng.normal()])?;
            let v = q_sample(&z0, t, &eps, &sched)?.item();
            sum += v;
            sumsq += v * v;
        }
        let em = sum / draws as f64;
        let ev = sumsq / draws as f64 - em * em;
        worst = worst
            .max((em - mean).abs() / (var / draws as f64).sqrt())
            .max((ev - var).abs() / (var * (2.0 / draws as f64).sqrt()));
    }

    // iterated single-step kernel z_t = √(1−β_t)·z_{t−1} + √β_t·ξ
    let t_iter = 40usize;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..draws {
        let mut z = z0_val;
        for t in 0..t_iter {
            z = (1.0 - sched.beta[t]).sqrt() * z + sched.beta[t].sqrt() * rng.normal();
        }
        sum += z;
        sumsq += z * z;
    }
    let ab = sched.alpha_bar[t_iter - 1];
    let (mean, var) = (ab.sqrt() * z0_val, 1.0 - ab);
    let em = sum / draws as f64;
    let ev = sumsq / draws as f64 - em * em;
    worst = worst
        .max((em - mean).abs() / (var / draws as f64).sqrt())
        .max((ev - var).abs() / (var * (2.0 / draws as f64).sqrt()));

    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 3.0 && secs < 60.0;
    Ok((pass, format!(
        "worst deviation {worst:.2} standard errors (gate 3), 10^5 draws, {secs:.1}s"
    )))
}

// ------------------------------------------------------------ criterion 5

fn sc_closed_forms() -> Result<(bool, String)> {
    let tau_val = 10.0f64;
    let tau = Tensor::from_vec(&[1], vec![tau_val])?;
    // single row: −log σ(τ)
    let single = StyleBatch::new(Tensor::from_vec(&[1, 4], vec![0.3, -0.2, 0.5, 0.1])?, vec![0])?;
    let got1 = style_consistency_loss(&single, &tau)?.item();
    let want1 = (1.0 + (-tau_val).exp()).ln();
    let e1 = (got1 - want1).abs();

    // orthogonal rows, distinct modalities: (2·(−log σ(τ)) + 2·log 2)/4
    let pair = StyleBatch::new(
        Tensor::from_vec(&[2, 4], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])?,
        vec![0, 1],
    )?;
    let got2 = style_consistency_loss(&pair, &tau)?.item();
    let want2 = (2.0 * (1.0 + (-tau_val).exp()).ln() + 2.0 * 2f64.ln()) / 4.0;
    let e2 = (got2 - want2).abs();

    Ok((e1 <= 1e-12 && e2 <= 1e-12, format!(
        "single-row err {e1:.2e}, orthogonal-pair err {e2:.2e} (tol 1e-12)"
    )))
}

// -------------------------------------------- shared smoke-training fixture

struct SmokeRun {
    cfg: RunConfig,
    model: Model,
    test: Vec<ModalityBundle>,
    logs: Vec<EpochLog>,
    train_secs: f64,
}

fn smoke_fixture() -> Result<SmokeRun> {
    let mut cfg = RunConfig::default();
    cfg.optim.seed = 42;
    // calibrated smoke-scale recipe (the criterion pins data/T/epochs/seed;
    // batch size, learning rate and pretraining length are free knobs)
    cfg.optim.batch_size = 1;
    cfg.optim.learning_rate = 5e-4;
    cfg.optim.pretrain_epochs = 30;
    cfg.resolve()?;
    let bundles: Vec<ModalityBundle> = (0..cfg.data.n_samples)
        .map(|i| generate_phantom(&cfg.data, i))
        .collect::<Result<_>>()?;
    let by = |split: Split| -> Vec<ModalityBundle> {
        bundles
            .iter()
            .filter(|b| msgldm_core::data::split_for_id(&b.sample_id) == split)
            .cloned()
            .collect()
    };
    let train = by(Split::Train);
    let val = by(Split::Val);
    let test = by(Split::Test);
    let model = Model::new(&cfg.model, cfg.optim.seed)?;
    let start = Instant::now();
    let outcome = commands::run_training(&cfg, &model, &train, &val, None)?;
    Ok(SmokeRun {
        cfg,
        model,
        test,
        logs: outcome.logs,
        train_secs: start.elapsed().as_secs_f64(),
    })
}

fn synth_metrics(
    run: &SmokeRun,
    bundle: &ModalityBundle,
    avail: &[bool; 4],
    target: usize,
    steps: usize,
) -> Result<(f64, f64)> {
    let sched = make_schedule(
        run.cfg.diffusion.timesteps,
        run.cfg.diffusion.beta_start,
        run.cfg.diffusion.beta_end,
    )?;
    let scfg = SamplerConfig {
        kind: SamplerKind::Deterministic,
        steps,
        seed: 42,
        snapshot_timesteps: vec![],
        clip_x0: Some(3.0),
    };
    let (img, _) = synthesize_modality(&run.model, bundle, avail, target, &sched, &scfg)?;
    let s = bundle.image_size;
    let gt = bundle.images[target].reshape(&[1, 1, s, s])?;
    Ok((psnr(&img, &gt, 1.0)?, ssim(&img, &gt, &SsimParams::default())?.item()))
}

// ------------------------------------------------------------ criterion 6

fn smoke_training(run: &SmokeRun) -> Result<(bool, String)> {
    let first = run.logs.first().map(|l| l.val.total).unwrap_or(f64::NAN);
    let best = run
        .logs
        .iter()
        .map(|l| l.val.total)
        .fold(f64::INFINITY, f64::min);
    let drop_ok = best <= 0.5 * first;

    let avail = [true, true, true, false];
    let n = run.test.len().min(20);
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    let mut dice_sum = 0.0;
    for bundle in &run.test[..n] {
        let (p, s) = synth_metrics(run, bundle, &avail, 3, run.cfg.diffusion.sampler_steps)?;
        psnr_sum += p;
        ssim_sum += s;
        let pred = commands::predicted_seg(&run.model, bundle, &[true; 4])?;
        let d = dice(&pred, &bundle.seg_mask, &[2])?;
        dice_sum += d.mean;
    }
    let (pm, sm, dm) = (psnr_sum / n as f64, ssim_sum / n as f64, dice_sum / n as f64);
    let pass = drop_ok && pm >= 20.0 && sm >= 0.70 && dm >= 0.80 && run.train_secs <= 7200.0;
    Ok((pass, format!(
        "val L_total {first:.3}→{best:.3} ({}), FLAIR-from-1110 PSNR {pm:.2} dB (≥20), SSIM {sm:.3} (≥0.70), lesion Dice {dm:.3} (≥0.80), train {:.0}s (≤7200)",
        if drop_ok { "≥50% drop" } else { "<50% drop" },
        run.train_secs
    )))
}

// ------------------------------------------------------------ criterion 7

fn table3_ordering() -> Result<(bool, String)> {
    let mut base = RunConfig::default();
    base.data.image_size = 32;
    base.data.n_samples = 120;
    base.optim.epochs = 8;
    base.optim.batch_size = 1;
    base.optim.learning_rate = 5e-4;
    base.optim.pretrain_epochs = 10;
    base.diffusion.sampler_steps = 15;
    base.resolve()?;
    let bundles: Vec<ModalityBundle> = (0..base.data.n_samples)
        .map(|i| generate_phantom(&base.data, i))
        .collect::<Result<_>>()?;
    let by = |split: Split| -> Vec<ModalityBundle> {
        bundles
            .iter()
            .filter(|b| msgldm_core::data::split_for_id(&b.sample_id) == split)
            .cloned()
            .collect()
    };
    let train = by(Split::Train);
    let val = by(Split::Val);
    let test = by(Split::Test);

    let seeds = [42u64, 43, 44];
    let mut means: Vec<(String, f64)> = Vec::new();
    for variant in commands::ABLATION_VARIANTS {
        let mut acc = 0.0;
        for &seed in &seeds {
            let r = commands::run_variant(&base, variant, seed, &train, &val, &test)?;
            acc += r.ssim;
        }
        means.push((variant.to_string(), acc / seeds.len() as f64));
    }
    let get = |name: &str| means.iter().find(|(v, _)| v == name).map(|(_, s)| *s).unwrap();
    let full = get("full");
    let full_best = means.iter().all(|(v, s)| v == "full" || full >= *s);
    let losses_below_msse =
        get("wo_loss_sc") < get("wo_msse") && get("wo_loss_sa") < get("wo_msse");
    let detail = means
        .iter()
        .map(|(v, s)| format!("{v} {s:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((full_best && losses_below_msse, format!(
        "mean SSIM over 3 seeds: {detail}; full best: {full_best}, loss ablations below wo_msse: {losses_below_msse}"
    )))
}

// ------------------------------------------------------------ criterion 8

fn fig1_ordering(run: &SmokeRun) -> Result<(bool, String)> {
    let sched = make_schedule(
        run.cfg.diffusion.timesteps,
        run.cfg.diffusion.beta_start,
        run.cfg.diffusion.beta_end,
    )?;
    let avail = [true, true, true, false];
    let target = 3usize;
    let n = run.test.len().min(20);
    let step_grid = [1usize, 2, 4, 8, 16, 25, 50, 100, 200];
    let s = run.cfg.data.image_size;

    let guidance = |bundle: &ModalityBundle| -> Result<Tensor> {
        let images: Vec<Tensor> = bundle
            .images
            .iter()
            .map(|im| im.reshape(&[1, 1, s, s]))
            .collect::<Result<_>>()?;
        let (_, f_s) = run.model.structure_pathway(&images, &avail)?;
        Ok(f_s.detach())
    };

    let steps_to_reach = |f_s: &Tensor, gt: &Tensor| -> Result<usize> {
        for &steps in &step_grid {
            let scfg = SamplerConfig {
                kind: SamplerKind::Deterministic,
                steps,
                seed: 42,
                snapshot_timesteps: vec![],
                clip_x0: Some(3.0),
            };
            let (img, _) = synthesize_with_guidance(&run.model, f_s, target, &sched, &scfg)?;
            if ssim(&img, gt, &SsimParams::default())?.item() >= 0.6 {
                return Ok(steps);
            }
        }
        Ok(run.cfg.diffusion.timesteps + 1) // never reached
    };

    let mut true_sum = 0.0;
    let mut shuf_sum = 0.0;
    for i in 0..n {
        let bundle = &run.test[i];
        let other = &run.test[(i + 1) % n]; // shuffled: guidance from another sample
        let gt = bundle.images[target].reshape(&[1, 1, s, s])?;
        true_sum += steps_to_reach(&guidance(bundle)?, &gt)? as f64;
        shuf_sum += steps_to_reach(&guidance(other)?, &gt)? as f64;
    }
    let (tm, sm) = (true_sum / n as f64, shuf_sum / n as f64);
    Ok((tm < sm, format!(
        "mean steps to SSIM 0.6 over {n} samples: true guidance {tm:.1}, shuffled {sm:.1}"
    )))
}

// ------------------------------------------------------------ criterion 9

fn psnr_monotonicity(run: &SmokeRun) -> Result<(bool, String)> {
    let sched = make_schedule(
        run.cfg.diffusion.timesteps,
        run.cfg.diffusion.beta_start,
        run.cfg.diffusion.beta_end,
    )?;
    let scfg = SamplerConfig {
        kind: SamplerKind::Deterministic,
        steps: run.cfg.diffusion.sampler_steps,
        seed: 42,
        snapshot_timesteps: vec![],
        clip_x0: Some(3.0),
    };
    let n = run.test.len().min(10);
    let mut rows = Vec::new();
    for bundle in &run.test[..n] {
        for target in 0..4 {
            for avail in commands::codes_for_target(target) {
                rows.push(eval_cell(&run.model, bundle, &avail, target, &sched, &scfg)?);
            }
        }
    }
    let groups = group_by_available(&rows);
    let monotone = groups.windows(2).all(|w| w[1].psnr_mean >= w[0].psnr_mean);
    let detail = groups
        .iter()
        .map(|g| format!("{} avail: {:.2} dB", g.available, g.psnr_mean))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((monotone, format!("mean PSNR non-decreasing in availability: {detail}")))
}

// ------------------------------------------------------------------ driver

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();

    report(&mut results, "gradient_fidelity", gradient_fidelity());
    report(&mut results, "spectral_oracle", spectral_oracle());
    report(&mut results, "hfib_algebra", hfib_algebra());
    report(&mut results, "diffusion_moments", diffusion_moments());
    report(&mut results, "sc_closed_forms", sc_closed_forms());

    match smoke_fixture() {
        Ok(run) => {
            report(&mut results, "smoke_training", smoke_training(&run));
            report(&mut results, "fig1_ordering", fig1_ordering(&run));
            report(&mut results, "psnr_monotonicity", psnr_monotonicity(&run));
        }
        Err(e) => {
            let msg = format!("fixture failed: {e}");
            for name in ["smoke_training", "fig1_ordering", "psnr_monotonicity"] {
                report(&mut results, name, Ok((false, msg.clone())));
            }
        }
    }

    report(&mut results, "table3_ordering", table3_ordering());

    let failed: Vec<&str> = results.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
