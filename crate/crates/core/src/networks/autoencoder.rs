//! Deterministic latent autoencoder: ×4 spatial compression defining the
//! space the diffusion model operates in. Pretrained on reconstruction,
//! then frozen.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::blocks::Conv2dLayer;
use super::params::ParamRegistry;

#[derive(Debug)]
pub struct Autoencoder {
    pub enc1: Conv2dLayer,
    pub enc2: Conv2dLayer,
    pub enc_head: Conv2dLayer,
    pub dec1: Conv2dLayer,
    pub dec2: Conv2dLayer,
    pub dec3: Conv2dLayer,
    pub dec_head: Conv2dLayer,
    pub latent_channels: usize,
}

impl Autoencoder {
    pub fn new(rng: &mut Rng, base_channels: usize, latent_channels: usize) -> Result<Autoencoder> {
        let c1 = base_channels;
        let c2 = 2 * base_channels;
        Ok(Autoencoder {
            enc1: Conv2dLayer::new(rng, 1, c1, 4, 2, 1)?,
            enc2: Conv2dLayer::new(rng, c1, c2, 4, 2, 1)?,
            enc_head: Conv2dLayer::new(rng, c2, latent_channels, 1, 1, 0)?,
            dec1: Conv2dLayer::new(rng, latent_channels, c2, 3, 1, 1)?,
            dec2: Conv2dLayer::new(rng, c2, c1, 3, 1, 1)?,
            dec3: Conv2dLayer::new(rng, c1, c1, 3, 1, 1)?,
            dec_head: Conv2dLayer::new(rng, c1, 1, 1, 1, 0)?,
            latent_channels,
        })
    }

    /// x: [B,1,H,W], H and W divisible by 4 → z: [B,c_z,H/4,W/4]
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 4 || x.shape()[2] % 4 != 0 || x.shape()[3] % 4 != 0 {
            return Err(Error::invalid(
                "autoencode",
                format!("expected B×C×H×W with H,W divisible by 4, got {:?}", x.shape()),
            ));
        }
        let h = self.enc1.forward(x)?.relu()?;
        let h = self.enc2.forward(&h)?.relu()?;
        self.enc_head.forward(&h)
    }

    /// z: [B,c_z,h,w] → x̂: [B,1,4h,4w] in [0,1]
    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let h = self.dec1.forward(z)?.relu()?;
        let h = self.dec2.forward(&h.upsample_nearest_2x()?)?.relu()?;
        let h = self.dec3.forward(&h.upsample_nearest_2x()?)?.relu()?;
        self.dec_head.forward(&h)?.sigmoid()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let z = self.encode(x)?;
        let rec = self.decode(&z)?;
        Ok((z, rec))
    }

    pub fn register(&self, reg: &mut ParamRegistry, prefix: &str) {
        self.enc1.register(reg, &format!("{prefix}.enc1"));
        self.enc2.register(reg, &format!("{prefix}.enc2"));
        self.enc_head.register(reg, &format!("{prefix}.enc_head"));
        self.dec1.register(reg, &format!("{prefix}.dec1"));
        self.dec2.register(reg, &format!("{prefix}.dec2"));
        self.dec3.register(reg, &format!("{prefix}.dec3"));
        self.dec_head.register(reg, &format!("{prefix}.dec_head"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_shape_64() {
        let mut rng = Rng::seed_from(61);
        let ae = Autoencoder::new(&mut rng, 16, 4).unwrap();
        let x = Tensor::from_vec(&[2, 1, 64, 64], rng.uniform_vec(2 * 4096, 0.0, 1.0)).unwrap();
        let (z, rec) = ae.forward(&x).unwrap();
        assert_eq!(z.shape(), &[2, 4, 16, 16]);
        assert_eq!(rec.shape(), x.shape());
        assert!(rec.to_vec().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn deterministic_round_trip() {
        let mut rng = Rng::seed_from(63);
        let ae = Autoencoder::new(&mut rng, 8, 4).unwrap();
        let x = Tensor::from_vec(&[1, 1, 16, 16], rng.uniform_vec(256, 0.0, 1.0)).unwrap();
        let (z1, r1) = ae.forward(&x).unwrap();
        let (z2, r2) = ae.forward(&x).unwrap();
        assert_eq!(z1.to_vec(), z2.to_vec());
        assert_eq!(r1.to_vec(), r2.to_vec());
    }

    #[test]
    fn rejects_indivisible_extent() {
        let mut rng = Rng::seed_from(65);
        let ae = Autoencoder::new(&mut rng, 8, 4).unwrap();
        assert!(ae.encode(&Tensor::zeros(&[1, 1, 18, 18])).is_err());
    }
}
