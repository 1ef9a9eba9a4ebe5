//! The full model: every learned component plus configuration and the
//! ablation switches, with a single deterministic parameter registry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::autoencoder::Autoencoder;
use super::decoders::{RecDecoder, SegDecoder};
use super::denoiser::Denoiser;
use super::params::ParamRegistry;
use super::structure::{scale_channels, Mmsf, Msse, StructureEncoder};
use super::style::StyleEncoder;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub image_size: usize,
    pub num_modalities: usize,
    pub base_channels: usize,
    pub num_scales: usize,
    pub d_style: usize,
    pub latent_channels: usize,
    pub seg_classes: usize,
    pub alpha_init: f64,
    pub tau_init: f64,
    pub timesteps: usize,
    /// Per-modality structure encoders + gated MMSF fusion; when false a
    /// single shared encoder feeds plain averaging.
    pub decoupled: bool,
    /// High-frequency information boosting inside the structure encoders.
    pub use_hfib: bool,
    /// Multi-scale enhancement of F_L; when false F_s = F_L.
    pub use_msse: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 64,
            num_modalities: 4,
            base_channels: 16,
            num_scales: 4,
            d_style: 64,
            latent_channels: 4,
            seg_classes: 3,
            alpha_init: 0.1,
            tau_init: 10.0,
            timesteps: 200,
            decoupled: true,
            use_hfib: true,
            use_msse: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_scales < 2 {
            return Err(Error::Config("num_scales must be at least 2".into()));
        }
        if self.image_size % (1 << self.num_scales) != 0 {
            return Err(Error::Config(format!(
                "image_size {} not divisible by 2^{}",
                self.image_size, self.num_scales
            )));
        }
        if self.num_modalities == 0 || self.seg_classes < 2 {
            return Err(Error::Config("need modalities and ≥ 2 classes".into()));
        }
        if self.tau_init <= 0.0 || self.timesteps == 0 {
            return Err(Error::Config("tau_init and timesteps must be positive".into()));
        }
        Ok(())
    }

    pub fn deep_channels(&self) -> usize {
        scale_channels(self.base_channels, self.num_scales)
    }
}

#[derive(Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    /// One per modality when decoupled, otherwise a single shared encoder.
    pub structure_encoders: Vec<StructureEncoder>,
    pub style_encoders: Vec<StyleEncoder>,
    pub rec_decoders: Vec<RecDecoder>,
    pub seg_decoder: SegDecoder,
    pub mmsf: Mmsf,
    pub msse: Msse,
    pub autoencoder: Autoencoder,
    pub denoiser: Denoiser,
    /// τ = exp(log_tau): learnable contrastive temperature.
    pub log_tau: Tensor,
    /// Fixed latent normalization factor (set after autoencoder pretraining
    /// so that scaled latents have roughly unit variance); checkpointed but
    /// never updated by the optimizer.
    pub latent_scale: Tensor,
    /// Fixed latent mean, subtracted before scaling so that normalized
    /// latents are zero-mean; checkpointed alongside `latent_scale`.
    pub latent_shift: Tensor,
}

impl Model {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Model> {
        cfg.validate()?;
        let mut rng = Rng::seed_from(seed);
        let m = cfg.num_modalities;
        let n_struct = if cfg.decoupled { m } else { 1 };
        let mut structure_encoders = Vec::with_capacity(n_struct);
        for _ in 0..n_struct {
            let mut enc = StructureEncoder::new(&mut rng, cfg.base_channels, cfg.num_scales)?;
            enc.use_hfib = cfg.use_hfib;
            structure_encoders.push(enc);
        }
        let mut style_encoders = Vec::with_capacity(m);
        let mut rec_decoders = Vec::with_capacity(m);
        for _ in 0..m {
            style_encoders.push(StyleEncoder::new(&mut rng, cfg.base_channels, cfg.d_style)?);
            rec_decoders.push(RecDecoder::new(
                &mut rng,
                cfg.base_channels,
                cfg.num_scales,
                cfg.d_style,
            )?);
        }
        Ok(Model {
            structure_encoders,
            style_encoders,
            rec_decoders,
            seg_decoder: SegDecoder::new(&mut rng, cfg.base_channels, cfg.num_scales, cfg.seg_classes)?,
            mmsf: Mmsf::new(&mut rng, m, cfg.base_channels, cfg.num_scales)?,
            msse: Msse::new(&mut rng, cfg.base_channels, cfg.num_scales, cfg.alpha_init)?,
            autoencoder: Autoencoder::new(&mut rng, cfg.base_channels, cfg.latent_channels)?,
            denoiser: Denoiser::new(
                &mut rng,
                cfg.latent_channels,
                cfg.deep_channels(),
                m,
                cfg.timesteps,
            )?,
            log_tau: Tensor::param(&[], vec![cfg.tau_init.ln()])?,
            latent_scale: Tensor::param(&[], vec![1.0])?,
            latent_shift: Tensor::param(&[], vec![0.0])?,
            cfg: cfg.clone(),
        })
    }

    fn structure_encoder(&self, j: usize) -> &StructureEncoder {
        if self.cfg.decoupled {
            &self.structure_encoders[j]
        } else {
            &self.structure_encoders[0]
        }
    }

    /// Encodes available modalities only. images[j]: [B,1,H,W].
    pub fn encode_structures(
        &self,
        images: &[Tensor],
        availability: &[bool],
    ) -> Result<Vec<Option<Vec<Tensor>>>> {
        if images.len() != self.cfg.num_modalities || availability.len() != images.len() {
            return Err(Error::invalid(
                "encode_structures",
                "images/availability must cover every modality",
            ));
        }
        let mut out = Vec::with_capacity(images.len());
        for (j, (x, &avail)) in images.iter().zip(availability).enumerate() {
            out.push(if avail {
                Some(self.structure_encoder(j).forward(x)?)
            } else {
                None
            });
        }
        Ok(out)
    }

    /// Gated fusion when decoupled, plain averaging otherwise.
    pub fn fuse(&self, features: &[Option<Vec<Tensor>>]) -> Result<Vec<Tensor>> {
        if self.cfg.decoupled {
            return self.mmsf.fuse(features);
        }
        let available: Vec<&Vec<Tensor>> = features.iter().flatten().collect();
        if available.is_empty() {
            return Err(Error::invalid("fuse", "all modalities masked"));
        }
        let mut fused = Vec::with_capacity(self.cfg.num_scales);
        for l in 0..self.cfg.num_scales {
            let mut acc = available[0][l].clone();
            for f in &available[1..] {
                acc = acc.add(&f[l])?;
            }
            let mean = acc.scale(1.0 / available.len() as f64)?;
            fused.push(self.mmsf.fusions[l].forward(&mean)?);
        }
        Ok(fused)
    }

    /// F_s: MSSE-enhanced deepest scale, or F_L when MSSE is ablated.
    pub fn structure_feature(&self, fused: &[Tensor]) -> Result<Tensor> {
        if self.cfg.use_msse {
            self.msse.enhance(fused)
        } else {
            Ok(fused[fused.len() - 1].clone())
        }
    }

    /// Full structure pathway: images + mask → (fused pyramid, F_s).
    pub fn structure_pathway(
        &self,
        images: &[Tensor],
        availability: &[bool],
    ) -> Result<(Vec<Tensor>, Tensor)> {
        let feats = self.encode_structures(images, availability)?;
        let fused = self.fuse(&feats)?;
        let f_s = self.structure_feature(&fused)?;
        Ok((fused, f_s))
    }

    pub fn tau(&self) -> Result<Tensor> {
        self.log_tau.exp()
    }

    /// Every trainable tensor exactly once, in deterministic order.
    pub fn params(&self) -> ParamRegistry {
        let mut reg = ParamRegistry::new();
        for (j, enc) in self.structure_encoders.iter().enumerate() {
            enc.register(&mut reg, &format!("structure.m{j}"));
        }
        for (j, enc) in self.style_encoders.iter().enumerate() {
            enc.register(&mut reg, &format!("style.m{j}"));
        }
        for (j, dec) in self.rec_decoders.iter().enumerate() {
            dec.register(&mut reg, &format!("rec.m{j}"));
        }
        self.seg_decoder.register(&mut reg, "seg");
        self.mmsf.register(&mut reg, "mmsf");
        self.msse.register(&mut reg, "msse");
        self.autoencoder.register(&mut reg, "ae");
        self.denoiser.register(&mut reg, "denoiser");
        reg.register("loss.log_tau", &self.log_tau);
        reg.register("latent.scale", &self.latent_scale);
        reg.register("latent.shift", &self.latent_shift);
        reg
    }

    /// Frozen-autoencoder latent of `x`, multiplied by the latent
    /// normalization factor: the space the diffusion process operates in.
    pub fn encode_latent(&self, x: &Tensor) -> Result<Tensor> {
        self.autoencoder
            .encode(x)?
            .detach()
            .add_scalar(-self.latent_shift.item())?
            .scale(self.latent_scale.item())
    }

    /// Inverse of [`Model::encode_latent`]: unscale and decode to image space.
    pub fn decode_latent(&self, z: &Tensor) -> Result<Tensor> {
        let raw = z
            .scale(1.0 / self.latent_scale.item())?
            .add_scalar(self.latent_shift.item())?;
        self.autoencoder.decode(&raw)
    }

    /// Autoencoder parameters only (pretraining phase).
    pub fn autoencoder_params(&self) -> ParamRegistry {
        let mut reg = ParamRegistry::new();
        self.autoencoder.register(&mut reg, "ae");
        reg
    }

    /// Everything except the (frozen) autoencoder: main training phase.
    pub fn main_params(&self) -> ParamRegistry {
        let mut reg = ParamRegistry::new();
        for (j, enc) in self.structure_encoders.iter().enumerate() {
            enc.register(&mut reg, &format!("structure.m{j}"));
        }
        for (j, enc) in self.style_encoders.iter().enumerate() {
            enc.register(&mut reg, &format!("style.m{j}"));
        }
        for (j, dec) in self.rec_decoders.iter().enumerate() {
            dec.register(&mut reg, &format!("rec.m{j}"));
        }
        self.seg_decoder.register(&mut reg, "seg");
        self.mmsf.register(&mut reg, "mmsf");
        self.msse.register(&mut reg, "msse");
        self.denoiser.register(&mut reg, "denoiser");
        reg.register("loss.log_tau", &self.log_tau);
        reg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            image_size: 32,
            base_channels: 4,
            d_style: 8,
            num_scales: 3,
            timesteps: 20,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn registry_unique_and_complete() {
        let model = Model::new(&small_cfg(), 1).unwrap();
        let reg = model.params();
        let names: HashSet<&str> = reg.names().collect();
        assert_eq!(names.len(), reg.len());
        let ids: HashSet<u64> = reg.tensors().map(|t| t.id()).collect();
        assert_eq!(ids.len(), reg.len());
        // main + autoencoder + the fixed latent scale/shift partition the registry
        let split = model.main_params().len() + model.autoencoder_params().len();
        assert_eq!(split + 2, reg.len());
        assert!(reg.any_nonfinite().is_none());
    }

    #[test]
    fn construction_is_deterministic() {
        let a = Model::new(&small_cfg(), 7).unwrap();
        let b = Model::new(&small_cfg(), 7).unwrap();
        for ((_, x), (_, y)) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(x.to_vec(), y.to_vec());
        }
    }

    #[test]
    fn structure_pathway_shapes() {
        let cfg = small_cfg();
        let model = Model::new(&cfg, 3).unwrap();
        let mut rng = Rng::seed_from(4);
        let images: Vec<Tensor> = (0..4)
            .map(|_| Tensor::from_vec(&[1, 1, 32, 32], rng.uniform_vec(1024, 0.0, 1.0)).unwrap())
            .collect();
        let (fused, f_s) = model
            .structure_pathway(&images, &[true, true, false, true])
            .unwrap();
        assert_eq!(fused.len(), 3);
        assert_eq!(f_s.shape(), &[1, 16, 4, 4]);
        assert_eq!(fused[2].shape(), f_s.shape());
    }

    #[test]
    fn msse_ablation_returns_deep_scale() {
        let cfg = ModelConfig { use_msse: false, ..small_cfg() };
        let model = Model::new(&cfg, 3).unwrap();
        let mut rng = Rng::seed_from(5);
        let images: Vec<Tensor> = (0..4)
            .map(|_| Tensor::from_vec(&[1, 1, 32, 32], rng.uniform_vec(1024, 0.0, 1.0)).unwrap())
            .collect();
        let (fused, f_s) = model.structure_pathway(&images, &[true; 4]).unwrap();
        assert_eq!(f_s.to_vec(), fused[2].to_vec());
    }

    #[test]
    fn coupled_variant_shares_encoder() {
        let cfg = ModelConfig { decoupled: false, ..small_cfg() };
        let model = Model::new(&cfg, 3).unwrap();
        assert_eq!(model.structure_encoders.len(), 1);
        let mut rng = Rng::seed_from(6);
        let x = Tensor::from_vec(&[1, 1, 32, 32], rng.uniform_vec(1024, 0.0, 1.0)).unwrap();
        let images = vec![x.clone(), x.clone(), x.clone(), x];
        // identical inputs through a shared encoder: plain averaging is a no-op
        let (fused_all, _) = model.structure_pathway(&images, &[true; 4]).unwrap();
        let (fused_one, _) = model
            .structure_pathway(&images, &[true, false, false, false])
            .unwrap();
        for (a, b) in fused_all.iter().zip(&fused_one) {
            for (x, y) in a.to_vec().iter().zip(b.to_vec()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seg_loss_has_no_style_gradient() {
        // the segmentation path never touches the style encoders
        let cfg = small_cfg();
        let model = Model::new(&cfg, 9).unwrap();
        let mut rng = Rng::seed_from(10);
        let images: Vec<Tensor> = (0..4)
            .map(|_| Tensor::from_vec(&[1, 1, 32, 32], rng.uniform_vec(1024, 0.0, 1.0)).unwrap())
            .collect();
        let (fused, _) = model.structure_pathway(&images, &[true; 4]).unwrap();
        let scores = model.seg_decoder.forward(&fused).unwrap();
        let target: Vec<u8> = (0..1024).map(|i| (i % 3) as u8).collect();
        let loss = crate::losses::segmentation_loss(&scores, &target, 3).unwrap();
        loss.backward();
        for enc in &model.style_encoders {
            let mut reg = ParamRegistry::new();
            enc.register(&mut reg, "s");
            for t in reg.tensors() {
                assert!(t.grad().is_none(), "style parameters must not receive L_seg gradient");
            }
        }
        // while structure-encoder parameters do
        let mut reg = ParamRegistry::new();
        model.structure_encoders[0].register(&mut reg, "s");
        assert!(reg.tensors().any(|t| t.grad().is_some()));
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig { image_size: 50, ..ModelConfig::default() }.validate().is_err());
        assert!(ModelConfig { tau_init: 0.0, ..ModelConfig::default() }.validate().is_err());
        assert!(ModelConfig { num_scales: 1, ..ModelConfig::default() }.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }
}
