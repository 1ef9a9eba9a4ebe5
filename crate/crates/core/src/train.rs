//! Training: Adam, availability-mask sampling, the combined training step
//! over all four objectives, autoencoder pretraining, the main loop, and
//! conditional synthesis of a missing modality.

use serde::{Deserialize, Serialize};

use crate::data::{psnr, ModalityBundle};
use crate::diffusion::{
    ancestral_sample_clipped, ddim_sample_clipped, q_sample, DiffusionSchedule, SamplerConfig,
    SamplerKind,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::losses::{
    ldm_loss, segmentation_loss, structure_aware_loss,
    style_consistency_loss, total_loss, LossWeights, StyleBatch,
};
use crate::frequency::SsimParams;
use crate::networks::{Model, ParamRegistry};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub pretrain_learning_rate: f64,
    /// Independent (t, ε, target) draws averaged in the diffusion loss each
    /// step — a variance-reduced estimator of the same objective. The heavy
    /// structure pathway is shared across draws, so extra draws are cheap.
    pub ldm_draws: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 1e-4,
            batch_size: 8,
            epochs: 30,
            pretrain_epochs: 10,
            pretrain_learning_rate: 1e-3,
            ldm_draws: 4,
            seed: 42,
        }
    }
}

/// Adam over a fixed parameter registry. Parameters with no gradient this
/// step are treated as having zero gradient.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step_count: u64,
}

impl Adam {
    pub fn new(reg: &ParamRegistry, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: reg.tensors().map(|t| vec![0.0; t.len()]).collect(),
            v: reg.tensors().map(|t| vec![0.0; t.len()]).collect(),
            step_count: 0,
        }
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, reg: &ParamRegistry) {
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for (i, t) in reg.tensors().enumerate() {
            let Some(grad) = t.grad() else { continue };
            let mut data = t.to_vec();
            for (j, g) in grad.iter().enumerate() {
                let m = &mut self.m[i][j];
                let v = &mut self.v[i][j];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                data[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            t.set_data(&data);
        }
        reg.zero_grads();
    }
}

/// Availability mask: the full set with probability 1/2, otherwise uniform
/// over the 2^M − 2 proper nonempty subsets.
pub fn sample_mask(rng: &mut Rng, num_modalities: usize) -> Vec<bool> {
    let m = num_modalities;
    if m == 1 || rng.uniform() < 0.5 {
        return vec![true; m];
    }
    let n_subsets = (1usize << m) - 2; // excludes empty and full
    let code = 1 + rng.uniform_usize(n_subsets); // 1 ..= 2^m − 2
    (0..m).map(|j| code & (1 << j) != 0).collect()
}

/// Target modality: uniform over the missing modalities when some are
/// masked, uniform over all modalities when everything is available.
pub fn sample_target(rng: &mut Rng, mask: &[bool]) -> usize {
    let missing: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter(|(_, &a)| !a)
        .map(|(j, _)| j)
        .collect();
    if missing.is_empty() {
        rng.uniform_usize(mask.len())
    } else {
        missing[rng.uniform_usize(missing.len())]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub seg: f64,
    pub sc: f64,
    pub sa: f64,
    pub ldm: f64,
    pub timestep: usize,
    pub mask: Vec<bool>,
    pub target: usize,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        self.first_nonfinite().is_none()
    }

    /// Name of the first non-finite component, for NaN-abort diagnostics.
    pub fn first_nonfinite(&self) -> Option<&'static str> {
        for (name, v) in [
            ("seg", self.seg),
            ("sc", self.sc),
            ("sa", self.sa),
            ("ldm", self.ldm),
            ("total", self.total),
        ] {
            if !v.is_finite() {
                return Some(name);
            }
        }
        None
    }
}

fn image_batch(bundle: &ModalityBundle, j: usize) -> Result<Tensor> {
    let s = bundle.image_size;
    bundle.images[j].reshape(&[1, 1, s, s])
}

/// One combined forward/backward pass on a single sample (Eq. 3).
/// Populates gradients; the caller owns the optimizer step.
pub fn train_step(
    model: &Model,
    bundle: &ModalityBundle,
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    ldm_draws: usize,
    rng: &mut Rng,
) -> Result<LossReport> {
    let m = model.cfg.num_modalities;
    let mask = sample_mask(rng, m);
    let target = sample_target(rng, &mask);
    let t = rng.uniform_usize(sched.timesteps);
    train_step_inner(model, bundle, sched, weights, mask, target, t, ldm_draws, rng)
}

#[allow(clippy::too_many_arguments)]
fn train_step_inner(
    model: &Model,
    bundle: &ModalityBundle,
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    mask: Vec<bool>,
    target: usize,
    t: usize,
    ldm_draws: usize,
    rng: &mut Rng,
) -> Result<LossReport> {
    if mask.iter().all(|a| !a) {
        return Err(Error::invalid("train_step", "empty availability mask"));
    }
    let m = model.cfg.num_modalities;
    let images: Vec<Tensor> = (0..m)
        .map(|j| image_batch(bundle, j))
        .collect::<Result<_>>()?;

    // structure pathway over the available modalities
    let (fused, f_s) = model.structure_pathway(&images, &mask)?;

    // segmentation
    let scores = model.seg_decoder.forward(&fused)?;
    let seg = segmentation_loss(&scores, &bundle.seg_mask, model.cfg.seg_classes)?;

    // style consistency + structure-aware reconstruction over available modalities
    let mut style_rows = Vec::new();
    let mut labels = Vec::new();
    let mut sa_terms: Option<Tensor> = None;
    let mut n_rec = 0usize;
    let ssim_params = SsimParams::default();
    for j in 0..m {
        if !mask[j] {
            continue;
        }
        let style = model.style_encoders[j].forward(&images[j])?; // [1, d]
        style_rows.push(style.clone());
        labels.push(j);
        let xhat = model.rec_decoders[j].forward(&f_s, &style)?;
        let term = structure_aware_loss(&xhat, &images[j], &ssim_params)?;
        sa_terms = Some(match sa_terms {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
        n_rec += 1;
    }
    let sa = sa_terms
        .expect("at least one available modality")
        .scale(1.0 / n_rec as f64)?;
    let style_batch = StyleBatch::new(Tensor::concat(&style_rows, 0)?, labels)?;
    let sc = style_consistency_loss(&style_batch, &model.tau()?)?;

    // diffusion loss on the target modality in the frozen latent space,
    // averaged over `ldm_draws` independent (t, ε, target) draws (the first
    // uses the caller-supplied target and t); latents are cached per target
    let draws = ldm_draws.max(1);
    let mut latents: Vec<Option<Tensor>> = vec![None; m];
    let mut ldm_acc: Option<Tensor> = None;
    for k in 0..draws {
        let (tgt, tk) = if k == 0 {
            (target, t)
        } else {
            (sample_target(rng, &mask), rng.uniform_usize(sched.timesteps))
        };
        if latents[tgt].is_none() {
            latents[tgt] = Some(model.encode_latent(&images[tgt])?);
        }
        let z0 = latents[tgt].as_ref().expect("cached latent");
        let eps = Tensor::from_vec(z0.shape(), rng.normal_vec(z0.len()))?;
        let z_t = q_sample(z0, tk, &eps, sched)?;
        let eps_hat = model.denoiser.forward(&z_t, tk, &f_s, tgt)?;
        let term = ldm_loss(&eps, &eps_hat)?;
        ldm_acc = Some(match ldm_acc {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    let ldm = ldm_acc.expect("at least one draw").scale(1.0 / draws as f64)?;

    let total = total_loss(&seg, &sc, &sa, &ldm, weights)?;
    let report = LossReport {
        total: total.item(),
        seg: seg.item(),
        sc: sc.item(),
        sa: sa.item(),
        ldm: ldm.item(),
        timestep: t,
        mask,
        target,
    };
    if let Some(name) = report.first_nonfinite() {
        return Err(Error::invalid("train_step", format!("non-finite loss component {name}")));
    }
    total.backward();
    Ok(report)
}

/// Evaluation-mode loss (no backward) with a deterministic mask/t draw.
pub fn eval_step(
    model: &Model,
    bundle: &ModalityBundle,
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    ldm_draws: usize,
    rng: &mut Rng,
) -> Result<LossReport> {
    let m = model.cfg.num_modalities;
    let mask = sample_mask(rng, m);
    let target = sample_target(rng, &mask);
    let t = rng.uniform_usize(sched.timesteps);
    // forward only: run the same computation but drop gradients afterwards
    let report =
        train_step_inner(model, bundle, sched, weights, mask, target, t, ldm_draws, rng)?;
    model.params().zero_grads();
    Ok(report)
}

/// Mean autoencoder reconstruction PSNR over every modality of the bundles.
pub fn autoencoder_psnr(model: &Model, bundles: &[ModalityBundle]) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for bundle in bundles {
        for j in 0..model.cfg.num_modalities {
            let x = image_batch(bundle, j)?;
            let (_, rec) = model.autoencoder.forward(&x)?;
            acc += psnr(&rec, &x, 1.0)?;
            n += 1;
        }
    }
    Ok(acc / n as f64)
}

/// Reconstruction-MSE pretraining of the latent autoencoder.
pub fn pretrain_autoencoder(
    model: &Model,
    train: &[ModalityBundle],
    cfg: &OptimConfig,
) -> Result<Vec<f64>> {
    let reg = model.autoencoder_params();
    let mut opt = Adam::new(&reg, cfg.pretrain_learning_rate);
    let mut rng = Rng::seed_from(cfg.seed ^ 0xae);
    let mut epoch_losses = Vec::with_capacity(cfg.pretrain_epochs);
    for _ in 0..cfg.pretrain_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        shuffle(&mut order, &mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut batch_loss = 0.0;
            for &i in chunk {
                let j = rng.uniform_usize(model.cfg.num_modalities);
                let x = image_batch(&train[i], j)?;
                let (_, rec) = model.autoencoder.forward(&x)?;
                let loss = rec.sub(&x)?.square()?.mean_all()?.scale(1.0 / chunk.len() as f64)?;
                batch_loss += loss.item() * chunk.len() as f64;
                loss.backward();
            }
            opt.step(&reg);
            epoch_loss += batch_loss / chunk.len() as f64;
            steps += 1;
        }
        epoch_losses.push(epoch_loss / steps.max(1) as f64);
    }

    // Calibrate the latent normalization factor so that the diffusion phase
    // operates on roughly unit-variance latents.
    let (mut sum, mut sumsq, mut n) = (0.0f64, 0.0f64, 0usize);
    for bundle in train {
        for j in 0..model.cfg.num_modalities {
            let x = image_batch(bundle, j)?;
            let z = model.autoencoder.encode(&x)?.detach();
            for v in z.to_vec() {
                sum += v;
                sumsq += v * v;
            }
            n += z.len();
        }
    }
    if n > 0 {
        let mean = sum / n as f64;
        let std = (sumsq / n as f64 - mean * mean).max(1e-12).sqrt();
        model.latent_shift.set_data(&[mean]);
        model.latent_scale.set_data(&[1.0 / std]);
    }
    Ok(epoch_losses)
}

pub fn shuffle(order: &mut [usize], rng: &mut Rng) {
    for i in (1..order.len()).rev() {
        order.swap(i, rng.uniform_usize(i + 1));
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train: LossMeans,
    pub val: LossMeans,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LossMeans {
    pub total: f64,
    pub seg: f64,
    pub sc: f64,
    pub sa: f64,
    pub ldm: f64,
}

impl LossMeans {
    fn accumulate(&mut self, r: &LossReport) {
        self.total += r.total;
        self.seg += r.seg;
        self.sc += r.sc;
        self.sa += r.sa;
        self.ldm += r.ldm;
    }

    fn finish(&mut self, n: usize) {
        let d = n.max(1) as f64;
        self.total /= d;
        self.seg /= d;
        self.sc /= d;
        self.sa /= d;
        self.ldm /= d;
    }
}

/// Main training phase over the frozen-autoencoder model. Returns per-epoch
/// logs; the epoch with the lowest validation total is flagged by the caller
/// via the log. Gradients accumulate across `batch_size` samples per step.
pub fn train_main(
    model: &Model,
    train: &[ModalityBundle],
    val: &[ModalityBundle],
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    cfg: &OptimConfig,
    mut on_epoch: impl FnMut(&EpochLog, &Model) -> Result<()>,
) -> Result<Vec<EpochLog>> {
    if train.is_empty() {
        return Err(Error::invalid("train_main", "empty training set"));
    }
    let reg = model.main_params();
    let mut opt = Adam::new(&reg, cfg.learning_rate);
    let mut rng = Rng::seed_from(cfg.seed);
    let mut logs: Vec<EpochLog> = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        shuffle(&mut order, &mut rng);
        let mut train_means = LossMeans::default();
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            for &i in chunk {
                let report =
                    train_step(model, &train[i], sched, weights, cfg.ldm_draws, &mut rng)?;
                train_means.accumulate(&report);
            }
            if chunk.len() > 1 {
                scale_grads(&reg, 1.0 / chunk.len() as f64);
            }
            opt.step(&reg);
        }
        train_means.finish(train.len());
        if let Some(name) = reg.any_nonfinite() {
            return Err(Error::invalid(
                "train_main",
                format!("non-finite parameter {name} after epoch {epoch}"),
            ));
        }

        // deterministic validation pass
        let mut val_rng = Rng::seed_from(cfg.seed ^ 0x5a5a).fork(epoch as u64);
        let mut val_means = LossMeans::default();
        for bundle in val {
            let report = eval_step(model, bundle, sched, weights, cfg.ldm_draws, &mut val_rng)?;
            val_means.accumulate(&report);
        }
        val_means.finish(val.len());

        let log = EpochLog { epoch, train: train_means, val: val_means };
        on_epoch(&log, model)?;
        logs.push(log);
    }
    Ok(logs)
}

fn scale_grads(reg: &ParamRegistry, factor: f64) {
    for t in reg.tensors() {
        t.scale_grad(factor);
    }
}

/// Synthesizes the masked target modality from the available ones:
/// structure pathway → conditional sampling in latent space → decoder.
pub fn synthesize_modality(
    model: &Model,
    bundle: &ModalityBundle,
    availability: &[bool],
    target: usize,
    sched: &DiffusionSchedule,
    cfg: &SamplerConfig,
) -> Result<(Tensor, Trajectory)> {
    if availability.len() != model.cfg.num_modalities {
        return Err(Error::invalid("synthesize_modality", "bad availability length"));
    }
    if availability[target] {
        return Err(Error::invalid(
            "synthesize_modality",
            "target modality present in conditioning",
        ));
    }
    let m = model.cfg.num_modalities;
    let images: Vec<Tensor> = (0..m)
        .map(|j| image_batch(bundle, j))
        .collect::<Result<_>>()?;
    let (_, f_s) = model.structure_pathway(&images, availability)?;
    synthesize_with_guidance(model, &f_s.detach(), target, sched, cfg)
}

/// Sampling half of [`synthesize_modality`], with the structure guidance
/// supplied directly; lets callers probe mismatched or perturbed conditioning.
pub fn synthesize_with_guidance(
    model: &Model,
    f_s: &Tensor,
    target: usize,
    sched: &DiffusionSchedule,
    cfg: &SamplerConfig,
) -> Result<(Tensor, Trajectory)> {
    cfg.validate(sched)?;
    let eps_model = |z: &Tensor, t: usize| model.denoiser.forward(z, t, f_s, target);
    let s = model.cfg.image_size / 4;
    let latent_shape = [1, model.cfg.latent_channels, s, s];
    let mut rng = Rng::seed_from(cfg.seed);
    let n = latent_shape.iter().product();
    let z_init = Tensor::from_vec(&latent_shape, rng.normal_vec(n))?;
    let (z0_hat, traj) = match cfg.kind {
        SamplerKind::Ancestral => ancestral_sample_clipped(
            &eps_model,
            &z_init,
            sched,
            Some(&mut rng),
            &cfg.snapshot_timesteps,
            cfg.clip_x0,
        )?,
        SamplerKind::Deterministic => ddim_sample_clipped(
            &eps_model,
            &z_init,
            sched,
            cfg.steps,
            &cfg.snapshot_timesteps,
            cfg.clip_x0,
        )?,
    };
    let image = model.decode_latent(&z0_hat)?.detach();
    Ok((image, traj))
}
