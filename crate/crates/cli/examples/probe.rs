use msgldm_cli::config::RunConfig;
use msgldm_cli::commands;
use msgldm_core::data::{dataset_manifest, load_bundle, psnr, Split};
use msgldm_core::diffusion::{make_schedule, q_sample};
use msgldm_core::rng::Rng;
use msgldm_core::Tensor;
use std::path::Path;

fn corr(a: &Tensor, b: &Tensor) -> f64 {
    let (x, y) = (a.data(), b.data());
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let mut sxy = 0.0; let mut sxx = 0.0; let mut syy = 0.0;
    for i in 0..x.len() {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy; sxx += dx * dx; syy += dy * dy;
    }
    sxy / (sxx.sqrt() * syy.sqrt() + 1e-12)
}

fn main() -> msgldm_core::Result<()> {
    let out = Path::new("/tmp/smoke7");
    let mut cfg = RunConfig::default();
    cfg.resolve()?;
    let model = commands::load_model(&cfg, out)?;
    let dir = out.join("data");
    let manifest = dataset_manifest(&dir)?;
    let entry = manifest.split(Split::Test).next().unwrap();
    let bundle = load_bundle(&dir, entry)?;
    let s = bundle.image_size;
    let gt = bundle.images[3].reshape(&[1, 1, s, s])?;
    let images: Vec<Tensor> = bundle.images.iter().map(|im| im.reshape(&[1,1,s,s])).collect::<msgldm_core::Result<_>>()?;
    let (_, f_s) = model.structure_pathway(&images, &[true, true, true, false])?;
    let f_s = f_s.detach();

    let sched = make_schedule(200, 2e-4, 0.04)?;
    let z0 = model.encode_latent(&gt)?;
    println!("latent_scale={:.4} z0 std={:.4}", model.latent_scale.item(), { let v=z0.to_vec(); let m=v.iter().sum::<f64>()/v.len() as f64; (v.iter().map(|x|(x-m).powi(2)).sum::<f64>()/v.len() as f64).sqrt() });
    let mut rng = Rng::seed_from(7);

    for &t in &[199usize, 150, 100, 50, 10] {
        let eps = Tensor::from_vec(z0.shape(), rng.normal_vec(z0.len()))?;
        let z_t = q_sample(&z0, t, &eps, &sched)?;
        let eps_hat = model.denoiser.forward(&z_t, t, &f_s, 3)?;
        let ab = sched.alpha_bar[t];
        // implied x0
        let x0_hat = z_t.sub(&eps_hat.scale((1.0 - ab).sqrt())?)?.scale(1.0 / ab.sqrt())?;
        let mse = {
            let d = eps_hat.sub(&eps)?;
            let v: Vec<f64> = d.to_vec();
            v.iter().map(|v| v * v).sum::<f64>() / v.len() as f64
        };
        let dec = model.decode_latent(&x0_hat.detach())?.detach();
        println!(
            "t={t:3} eps_mse={mse:.3} corr(eps_hat,eps)={:.3} corr(x0_hat,z0)={:.3} decode_psnr={:.2}",
            corr(&eps_hat, &eps), corr(&x0_hat, &z0), psnr(&dec, &gt, 1.0)?
        );
    }

    // does conditioning matter? zero f_s
    let zero_fs = Tensor::zeros(f_s.shape());
    let t = 150usize;
    let eps = Tensor::from_vec(z0.shape(), rng.normal_vec(z0.len()))?;
    let z_t = q_sample(&z0, t, &eps, &sched)?;
    let e1 = model.denoiser.forward(&z_t, t, &f_s, 3)?;
    let e2 = model.denoiser.forward(&z_t, t, &zero_fs, 3)?;
    let d = e1.sub(&e2)?;
    println!("cond effect rms at t=150: {:.4}", (d.data().iter().map(|v| v*v).sum::<f64>() / d.len() as f64).sqrt());

    // target embedding effect
    let e3 = model.denoiser.forward(&z_t, t, &f_s, 0)?;
    let d2 = e1.sub(&e3)?;
    println!("target-emb effect rms: {:.4}", (d2.data().iter().map(|v| v*v).sum::<f64>() / d2.len() as f64).sqrt());

    // info content of F_s: reconstruct target modality via rec decoder
    let style = model.style_encoders[3].forward(&images[3])?;
    let xr = model.rec_decoders[3].forward(&f_s, &style)?.detach();
    println!("rec-decoder recon from F_s: psnr {:.2}", psnr(&xr, &gt, 1.0)?);

    // DDIM starting from a true forward sample of GT z0 at t=199
    use msgldm_core::diffusion::{ddim_sample, ancestral_sample};
    let eps = Tensor::from_vec(z0.shape(), rng.normal_vec(z0.len()))?;
    let z_t = q_sample(&z0, 199, &eps, &sched)?.detach();
    let eps_model = |z: &Tensor, t: usize| model.denoiser.forward(z, t, &f_s, 3);
    for steps in [25usize, 200] {
        let (zhat, _) = ddim_sample(&eps_model, &z_t, &sched, steps, &[])?;
        let dec = model.decode_latent(&zhat)?.detach();
        println!("ddim from true z_199, steps={steps}: psnr {:.2}", psnr(&dec, &gt, 1.0)?);
    }
    // pure-noise init, ancestral
    let mut arng = Rng::seed_from(99);
    let z_init = Tensor::from_vec(z0.shape(), arng.normal_vec(z0.len()))?;
    let (zhat, _) = ancestral_sample(&eps_model, &z_init, &sched, Some(&mut arng), &[])?;
    let dec = model.decode_latent(&zhat)?.detach();
    println!("ancestral from noise: psnr {:.2}", psnr(&dec, &gt, 1.0)?);
    let (zhat, _) = ddim_sample(&eps_model, &z_init, &sched, 25, &[])?;
    let dec = model.decode_latent(&zhat)?.detach();
    let zv: Vec<f64> = zhat.to_vec();
    let zm = zv.iter().sum::<f64>()/zv.len() as f64;
    let zs = (zv.iter().map(|v| (v-zm).powi(2)).sum::<f64>()/zv.len() as f64).sqrt();
    println!("ddim from noise: psnr {:.2}; zhat mean {:.3} std {:.3}; z0 mean {:.3}", psnr(&dec, &gt, 1.0)?, zm, zs, (z0.to_vec().iter().sum::<f64>()/z0.len() as f64));
    // Fig-1 style: steps to reach SSIM 0.6 with true vs shuffled F_s
    use msgldm_core::train::synthesize_with_guidance;
    use msgldm_core::diffusion::{SamplerConfig, SamplerKind};
    use msgldm_core::frequency::{ssim, SsimParams};
    let entries: Vec<_> = manifest.split(Split::Test).collect();
    let n = entries.len().min(6);
    for which in ["true", "shuffled"] {
        let mut steps_needed = Vec::new();
        for i in 0..n {
            let b = load_bundle(&dir, entries[i])?;
            let g = if which == "true" { load_bundle(&dir, entries[i])? } else { load_bundle(&dir, entries[(i+1)%n])? };
            let s_px = b.image_size;
            let gt_i = b.images[3].reshape(&[1,1,s_px,s_px])?;
            let imgs: Vec<Tensor> = g.images.iter().map(|im| im.reshape(&[1,1,s_px,s_px])).collect::<msgldm_core::Result<_>>()?;
            let (_, fs_i) = model.structure_pathway(&imgs, &[true,true,true,false])?;
            let fs_i = fs_i.detach();
            let mut reached = None;
            for &st in &[1usize,2,4,8,16,25,50] {
                let scfg = SamplerConfig { kind: SamplerKind::Deterministic, steps: st, seed: 42, snapshot_timesteps: vec![], clip_x0: Some(3.0) };
                let (img, _) = synthesize_with_guidance(&model, &fs_i, 3, &sched, &scfg)?;
                let sv = ssim(&img, &gt_i, &SsimParams::default())?.item();
                if sv >= 0.6 { reached = Some(st); break; }
            }
            steps_needed.push(reached);
        }
        println!("{which}: steps to ssim0.6 = {steps_needed:?}");
    }
    // cross-sample GT similarity
    for i in 0..3usize {
        let a = load_bundle(&dir, entries[i])?;
        let b2 = load_bundle(&dir, entries[(i+1)%n])?;
        let sz = a.image_size;
        let x = a.images[3].reshape(&[1,1,sz,sz])?;
        let y = b2.images[3].reshape(&[1,1,sz,sz])?;
        println!("cross-GT ssim {}: {:.3}", i, ssim(&x, &y, &SsimParams::default())?.item());
    }
    Ok(())
}
