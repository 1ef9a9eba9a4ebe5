//! DDPM noise schedule, forward corruption, and reverse samplers
//! (ancestral and deterministic DDIM with η = 0).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct DiffusionSchedule {
    pub timesteps: usize,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

/// Linearly spaced β with derived α and cumulative ᾱ.
pub fn make_schedule(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<DiffusionSchedule> {
    if timesteps < 1 {
        return Err(Error::invalid("make_schedule", "need at least one timestep"));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::invalid(
            "make_schedule",
            format!("invalid beta range [{beta_start}, {beta_end}]"),
        ));
    }
    let beta: Vec<f64> = if timesteps == 1 {
        vec![beta_start]
    } else {
        (0..timesteps)
            .map(|t| beta_start + (beta_end - beta_start) * t as f64 / (timesteps - 1) as f64)
            .collect()
    };
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(timesteps);
    let mut prod = 1.0;
    for &a in &alpha {
        prod *= a;
        alpha_bar.push(prod);
    }
    Ok(DiffusionSchedule { timesteps, beta, alpha, alpha_bar })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Ancestral,
    Deterministic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub steps: usize,
    pub seed: u64,
    /// Timesteps at which to record the partially denoised latent.
    #[serde(default)]
    pub snapshot_timesteps: Vec<usize>,
    /// Clamp the implied x₀ to `[-b, b]` at every reverse step ("clip
    /// denoised"). Stabilizes sampling at near-zero terminal SNR, where the
    /// x₀ amplification factor 1/√ᾱ_T is large. `None` disables clamping.
    #[serde(default = "default_clip_x0")]
    pub clip_x0: Option<f64>,
}

fn default_clip_x0() -> Option<f64> {
    Some(3.0)
}

impl SamplerConfig {
    pub fn validate(&self, sched: &DiffusionSchedule) -> Result<()> {
        if self.steps < 1 || self.steps > sched.timesteps {
            return Err(Error::invalid(
                "sampler_config",
                format!("steps must lie in [1, {}]", sched.timesteps),
            ));
        }
        if self.kind == SamplerKind::Ancestral && self.steps != sched.timesteps {
            return Err(Error::invalid(
                "sampler_config",
                "ancestral sampling runs the full schedule; set steps = T",
            ));
        }
        Ok(())
    }
}

/// Noise predictor ε̂(z_t, t). Conditioning is captured by the implementor.
pub trait EpsModel {
    fn predict(&self, z_t: &Tensor, t: usize) -> Result<Tensor>;
}

impl<F: Fn(&Tensor, usize) -> Result<Tensor>> EpsModel for F {
    fn predict(&self, z_t: &Tensor, t: usize) -> Result<Tensor> {
        self(z_t, t)
    }
}

/// Closed-form forward corruption z_t = √ᾱ_t·z₀ + √(1−ᾱ_t)·ε.
/// Differentiable in both z₀ and ε.
pub fn q_sample(z0: &Tensor, t: usize, eps: &Tensor, sched: &DiffusionSchedule) -> Result<Tensor> {
    if t >= sched.timesteps {
        return Err(Error::invalid(
            "q_sample",
            format!("t={t} out of range for T={}", sched.timesteps),
        ));
    }
    if z0.shape() != eps.shape() {
        return Err(Error::ShapeMismatch {
            op: "q_sample",
            lhs: z0.shape().to_vec(),
            rhs: eps.shape().to_vec(),
        });
    }
    let ab = sched.alpha_bar[t];
    z0.scale(ab.sqrt())?.add(&eps.scale((1.0 - ab).sqrt())?)
}

/// Partially denoised latents captured during sampling, most-noisy first.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub snapshots: Vec<(usize, Tensor)>,
}

impl Trajectory {
    /// Writes each snapshot as `step_<t>.tnsr` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for (t, z) in &self.snapshots {
            crate::data::save_tensor(z, &dir.join(format!("step_{t}.tnsr")))?;
        }
        Ok(())
    }
}

fn check_finite(z: &Tensor, what: &'static str) -> Result<()> {
    if z.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: what });
    }
    Ok(())
}

/// Clamps every element to `[-bound, bound]` (data-level; no gradient).
fn clamp_data(x: &Tensor, bound: f64) -> Result<Tensor> {
    Tensor::from_vec(
        x.shape(),
        x.to_vec().into_iter().map(|v| v.clamp(-bound, bound)).collect(),
    )
}

/// Full-schedule DDPM ancestral sampling from `z_init` (taken as z_T).
/// `noise: None` forces ξ = 0 at every step.
pub fn ancestral_sample(
    model: &impl EpsModel,
    z_init: &Tensor,
    sched: &DiffusionSchedule,
    noise: Option<&mut Rng>,
    snapshot_timesteps: &[usize],
) -> Result<(Tensor, Trajectory)> {
    ancestral_sample_clipped(model, z_init, sched, noise, snapshot_timesteps, None)
}

/// [`ancestral_sample`] with an optional "clip denoised" bound: the posterior
/// mean is rewritten in terms of the implied x₀, which is clamped before the
/// step. With `clip_x0 = None` the classical ε̂-form update is used verbatim.
pub fn ancestral_sample_clipped(
    model: &impl EpsModel,
    z_init: &Tensor,
    sched: &DiffusionSchedule,
    mut noise: Option<&mut Rng>,
    snapshot_timesteps: &[usize],
    clip_x0: Option<f64>,
) -> Result<(Tensor, Trajectory)> {
    let mut z = z_init.detach();
    let mut traj = Trajectory::default();
    if snapshot_timesteps.contains(&sched.timesteps) {
        traj.snapshots.push((sched.timesteps, z.clone()));
    }
    for t in (0..sched.timesteps).rev() {
        let eps_hat = model.predict(&z, t)?;
        check_finite(&eps_hat, "ancestral_sample")?;
        let (a, b, ab) = (sched.alpha[t], sched.beta[t], sched.alpha_bar[t]);
        let mean = match clip_x0 {
            None => z
                .sub(&eps_hat.scale(b / (1.0 - ab).sqrt())?)?
                .scale(1.0 / a.sqrt())?,
            Some(bound) => {
                // q(z_{t−1} | z_t, x0) mean with x0 clamped; algebraically
                // identical to the ε̂ form when the clamp is inactive.
                let ab_prev = if t > 0 { sched.alpha_bar[t - 1] } else { 1.0 };
                let x0 = z
                    .sub(&eps_hat.scale((1.0 - ab).sqrt())?)?
                    .scale(1.0 / ab.sqrt())?;
                let x0 = clamp_data(&x0, bound)?;
                x0.scale(ab_prev.sqrt() * b / (1.0 - ab))?
                    .add(&z.scale(a.sqrt() * (1.0 - ab_prev) / (1.0 - ab))?)?
            }
        };
        z = if t > 0 {
            match noise.as_deref_mut() {
                Some(rng) => {
                    let xi = Tensor::from_vec(z.shape(), rng.normal_vec(z.len()))?;
                    mean.add(&xi.scale(b.sqrt())?)?
                }
                None => mean,
            }
        } else {
            mean
        };
        z = z.detach();
        if snapshot_timesteps.contains(&t) {
            traj.snapshots.push((t, z.clone()));
        }
    }
    Ok((z, traj))
}

/// Evenly strided DDIM timesteps ending at T−1; `steps = T` yields 0..T−1.
fn ddim_timesteps(timesteps: usize, steps: usize) -> Vec<usize> {
    (0..steps).map(|i| (i + 1) * timesteps / steps - 1).collect()
}

/// Deterministic DDIM sampling (η = 0) over a strided timestep subsequence.
pub fn ddim_sample(
    model: &impl EpsModel,
    z_init: &Tensor,
    sched: &DiffusionSchedule,
    steps: usize,
    snapshot_timesteps: &[usize],
) -> Result<(Tensor, Trajectory)> {
    ddim_sample_clipped(model, z_init, sched, steps, snapshot_timesteps, None)
}

/// [`ddim_sample`] with an optional "clip denoised" bound on the implied x₀.
pub fn ddim_sample_clipped(
    model: &impl EpsModel,
    z_init: &Tensor,
    sched: &DiffusionSchedule,
    steps: usize,
    snapshot_timesteps: &[usize],
    clip_x0: Option<f64>,
) -> Result<(Tensor, Trajectory)> {
    if steps < 1 || steps > sched.timesteps {
        return Err(Error::invalid(
            "ddim_sample",
            format!("steps must lie in [1, {}]", sched.timesteps),
        ));
    }
    let ts = ddim_timesteps(sched.timesteps, steps);
    let mut z = z_init.detach();
    let mut traj = Trajectory::default();
    if snapshot_timesteps.contains(&sched.timesteps) {
        traj.snapshots.push((sched.timesteps, z.clone()));
    }
    for k in (0..ts.len()).rev() {
        let t = ts[k];
        let eps_hat = model.predict(&z, t)?;
        check_finite(&eps_hat, "ddim_sample")?;
        let ab = sched.alpha_bar[t];
        let ab_prev = if k > 0 { sched.alpha_bar[ts[k - 1]] } else { 1.0 };
        let mut x0 = z
            .sub(&eps_hat.scale((1.0 - ab).sqrt())?)?
            .scale(1.0 / ab.sqrt())?;
        let mut eps_dir = eps_hat;
        if let Some(bound) = clip_x0 {
            // re-derive the direction noise from the clamped x₀ so the
            // update stays consistent with z_t
            x0 = clamp_data(&x0, bound)?;
            eps_dir = z
                .sub(&x0.scale(ab.sqrt())?)?
                .scale(1.0 / (1.0 - ab).sqrt())?;
        }
        z = x0
            .scale(ab_prev.sqrt())?
            .add(&eps_dir.scale((1.0 - ab_prev).sqrt())?)?
            .detach();
        let reached = if k > 0 { ts[k - 1] } else { 0 };
        if snapshot_timesteps.contains(&reached) {
            traj.snapshots.push((reached, z.clone()));
        }
    }
    Ok((z, traj))
}

/// Draws z_T from the configured seed and runs the configured sampler.
pub fn sample(
    model: &impl EpsModel,
    latent_shape: &[usize],
    sched: &DiffusionSchedule,
    cfg: &SamplerConfig,
) -> Result<(Tensor, Trajectory)> {
    cfg.validate(sched)?;
    let mut rng = Rng::seed_from(cfg.seed);
    let n = latent_shape.iter().product();
    let z_init = Tensor::from_vec(latent_shape, rng.normal_vec(n))?;
    match cfg.kind {
        SamplerKind::Ancestral => ancestral_sample_clipped(
            model,
            &z_init,
            sched,
            Some(&mut rng),
            &cfg.snapshot_timesteps,
            cfg.clip_x0,
        ),
        SamplerKind::Deterministic => {
            ddim_sample_clipped(model, &z_init, sched, cfg.steps, &cfg.snapshot_timesteps, cfg.clip_x0)
        }
    }
}
