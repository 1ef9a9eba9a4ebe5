//! Structure-conditioned denoiser ε_θ(z_t, t | F_s): a small U-shaped
//! network over the latent, conditioned by channel-concatenating a projected
//! and resized F_s, with sinusoidal timestep features plus a learned
//! target-modality embedding injected per block.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::blocks::{Conv2dLayer, LinearLayer};
use super::params::ParamRegistry;

const SIN_DIM: usize = 32;
const TEMB_DIM: usize = 64;
const COND_CHANNELS: usize = 48;

/// Standard sinusoidal features of an integer timestep (non-learnable).
fn sinusoidal_embedding(t: usize) -> Tensor {
    let half = SIN_DIM / 2;
    let mut v = Vec::with_capacity(SIN_DIM);
    for i in 0..half {
        let freq = (10_000f64).powf(-(i as f64) / (half as f64 - 1.0));
        v.push((t as f64 * freq).sin());
    }
    for i in 0..half {
        let freq = (10_000f64).powf(-(i as f64) / (half as f64 - 1.0));
        v.push((t as f64 * freq).cos());
    }
    Tensor::from_vec(&[1, SIN_DIM], v).expect("finite sinusoid")
}

#[derive(Debug)]
pub struct Denoiser {
    pub cond_proj: Conv2dLayer,
    pub temb_in: LinearLayer,
    /// [num_modalities, TEMB_DIM] learned target identity embedding.
    pub target_emb: Tensor,
    temb_e1: LinearLayer,
    temb_e2: LinearLayer,
    temb_d1: LinearLayer,
    e1: Conv2dLayer,
    e2: Conv2dLayer,
    mid: Conv2dLayer,
    d1: Conv2dLayer,
    head: Conv2dLayer,
    pub max_timesteps: usize,
    pub num_modalities: usize,
}

impl Denoiser {
    pub fn new(
        rng: &mut Rng,
        latent_channels: usize,
        cond_in_channels: usize,
        num_modalities: usize,
        max_timesteps: usize,
    ) -> Result<Denoiser> {
        let w1 = 64;
        let w2 = 128;
        Ok(Denoiser {
            cond_proj: Conv2dLayer::new(rng, cond_in_channels, COND_CHANNELS, 1, 1, 0)?,
            temb_in: LinearLayer::new(rng, SIN_DIM, TEMB_DIM)?,
            target_emb: Tensor::param(
                &[num_modalities, TEMB_DIM],
                rng.normal_vec(num_modalities * TEMB_DIM)
                    .into_iter()
                    .map(|v| 0.1 * v)
                    .collect(),
            )?,
            temb_e1: LinearLayer::new(rng, TEMB_DIM, w1)?,
            temb_e2: LinearLayer::new(rng, TEMB_DIM, w2)?,
            temb_d1: LinearLayer::new(rng, TEMB_DIM, w1)?,
            e1: Conv2dLayer::new(rng, latent_channels + COND_CHANNELS, w1, 3, 1, 1)?,
            e2: Conv2dLayer::new(rng, w1, w2, 4, 2, 1)?,
            mid: Conv2dLayer::new(rng, w2, w2, 3, 1, 1)?,
            d1: Conv2dLayer::new(rng, w2 + w1, w1, 3, 1, 1)?,
            head: Conv2dLayer::new(rng, w1, latent_channels, 3, 1, 1)?,
            max_timesteps,
            num_modalities,
        })
    }

    fn add_temb(x: &Tensor, proj: &LinearLayer, temb: &Tensor) -> Result<Tensor> {
        let c = x.shape()[1];
        x.add(&proj.forward(temb)?.reshape(&[1, c, 1, 1])?)
    }

    /// z_t: [B,c_z,h,w]; f_s: [B,C_f,h_f,w_f]; one shared t and target per call.
    pub fn forward(&self, z_t: &Tensor, t: usize, f_s: &Tensor, target: usize) -> Result<Tensor> {
        if t >= self.max_timesteps {
            return Err(Error::invalid(
                "denoiser_forward",
                format!("t={t} out of range for T={}", self.max_timesteps),
            ));
        }
        if target >= self.num_modalities {
            return Err(Error::invalid(
                "denoiser_forward",
                format!("target modality {target} out of range"),
            ));
        }
        let (h, w) = (z_t.shape()[2], z_t.shape()[3]);
        let cond = self.cond_proj.forward(f_s)?.resize_bilinear(h, w)?;
        let x = Tensor::concat(&[z_t.clone(), cond], 1)?;
        let temb = self
            .temb_in
            .forward(&sinusoidal_embedding(t))?
            .relu()?
            .add(&self.target_emb.select_row(target)?)?;
        let e1 = Self::add_temb(&self.e1.forward(&x)?, &self.temb_e1, &temb)?.relu()?;
        let e2 = Self::add_temb(&self.e2.forward(&e1)?, &self.temb_e2, &temb)?.relu()?;
        let m = self.mid.forward(&e2)?.relu()?;
        let up = Tensor::concat(&[m.upsample_nearest_2x()?, e1], 1)?;
        let d1 = Self::add_temb(&self.d1.forward(&up)?, &self.temb_d1, &temb)?.relu()?;
        self.head.forward(&d1)
    }

    pub fn register(&self, reg: &mut ParamRegistry, prefix: &str) {
        self.cond_proj.register(reg, &format!("{prefix}.cond_proj"));
        self.temb_in.register(reg, &format!("{prefix}.temb_in"));
        reg.register(&format!("{prefix}.target_emb"), &self.target_emb);
        self.temb_e1.register(reg, &format!("{prefix}.temb_e1"));
        self.temb_e2.register(reg, &format!("{prefix}.temb_e2"));
        self.temb_d1.register(reg, &format!("{prefix}.temb_d1"));
        self.e1.register(reg, &format!("{prefix}.e1"));
        self.e2.register(reg, &format!("{prefix}.e2"));
        self.mid.register(reg, &format!("{prefix}.mid"));
        self.d1.register(reg, &format!("{prefix}.d1"));
        self.head.register(reg, &format!("{prefix}.head"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Denoiser, Tensor, Tensor) {
        let mut rng = Rng::seed_from(67);
        let den = Denoiser::new(&mut rng, 4, 128, 4, 200).unwrap();
        let z = Tensor::from_vec(&[1, 4, 16, 16], rng.normal_vec(1024)).unwrap();
        let f_s = Tensor::from_vec(&[1, 128, 4, 4], rng.normal_vec(2048)).unwrap();
        (den, z, f_s)
    }

    #[test]
    fn output_shape_matches_latent() {
        let (den, z, f_s) = setup();
        let out = den.forward(&z, 100, &f_s, 2).unwrap();
        assert_eq!(out.shape(), z.shape());
        assert!(out.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_out_of_range_inputs() {
        let (den, z, f_s) = setup();
        assert!(den.forward(&z, 200, &f_s, 0).is_err());
        assert!(den.forward(&z, 0, &f_s, 4).is_err());
    }

    #[test]
    fn conditioning_is_informative() {
        let (den, z, f_s) = setup();
        let mut rng = Rng::seed_from(68);
        let f_s2 = Tensor::from_vec(&[1, 128, 4, 4], rng.normal_vec(2048)).unwrap();
        let a = den.forward(&z, 50, &f_s, 1).unwrap();
        let b = den.forward(&z, 50, &f_s2, 1).unwrap();
        let mad: f64 = a
            .to_vec()
            .iter()
            .zip(b.to_vec())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / a.len() as f64;
        assert!(mad > 0.0, "changing F_s must change the prediction");
    }

    #[test]
    fn timestep_and_target_sensitivity() {
        let (den, z, f_s) = setup();
        let a = den.forward(&z, 10, &f_s, 1).unwrap();
        let b = den.forward(&z, 150, &f_s, 1).unwrap();
        let c = den.forward(&z, 10, &f_s, 3).unwrap();
        assert!(a.to_vec() != b.to_vec(), "timestep must matter");
        assert!(a.to_vec() != c.to_vec(), "target embedding must matter");
    }

    #[test]
    fn ldm_gradcheck_on_weight_slice() {
        // finite-difference check of ‖ε − ε̂‖² w.r.t. a small weight slice
        let mut rng = Rng::seed_from(69);
        let den = Denoiser::new(&mut rng, 2, 8, 2, 10).unwrap();
        let z = Tensor::from_vec(&[1, 2, 4, 4], rng.normal_vec(32)).unwrap();
        let f_s = Tensor::from_vec(&[1, 8, 2, 2], rng.normal_vec(32)).unwrap();
        let eps = Tensor::from_vec(&[1, 2, 4, 4], rng.normal_vec(32)).unwrap();
        let slice = den.head.bias.clone();
        let r = crate::tensor::gradcheck_params(
            move || {
                let pred = den.forward(&z, 3, &f_s, 1)?;
                crate::losses::ldm_loss(&eps, &pred)
            },
            &[slice],
            1e-4,
            1e-3,
        )
        .unwrap();
        assert!(r.pass(), "max rel error {}", r.max_rel_error);
    }

    #[test]
    fn sinusoid_bounded_and_distinct() {
        let a = sinusoidal_embedding(0);
        let b = sinusoidal_embedding(123);
        assert!(a.to_vec().iter().all(|v| v.abs() <= 1.0));
        assert!(a.to_vec() != b.to_vec());
    }
}
