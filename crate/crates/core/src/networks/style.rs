//! Per-modality style encoder: small conv stack, global average pooling,
//! and a linear head producing a fixed-width style vector.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::blocks::{Conv2dLayer, LinearLayer};
use super::params::ParamRegistry;

#[derive(Debug)]
pub struct StyleEncoder {
    pub convs: Vec<Conv2dLayer>,
    pub head: LinearLayer,
}

impl StyleEncoder {
    pub fn new(rng: &mut Rng, base_channels: usize, d_style: usize) -> Result<StyleEncoder> {
        let c1 = base_channels;
        let c2 = 2 * base_channels;
        Ok(StyleEncoder {
            convs: vec![
                Conv2dLayer::new(rng, 1, c1, 4, 2, 1)?,
                Conv2dLayer::new(rng, c1, c2, 4, 2, 1)?,
                Conv2dLayer::new(rng, c2, c2, 4, 2, 1)?,
            ],
            head: LinearLayer::new(rng, c2, d_style)?,
        })
    }

    /// x: [B,1,H,W] → [B, d_style]
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 4 || x.shape()[1] != 1 {
            return Err(Error::invalid(
                "style_encode",
                format!("expected B×1×H×W input, got {:?}", x.shape()),
            ));
        }
        let mut h = x.clone();
        for conv in &self.convs {
            h = conv.forward(&h)?.relu()?;
        }
        self.head.forward(&h.global_avg_pool()?)
    }

    pub fn register(&self, reg: &mut ParamRegistry, prefix: &str) {
        for (i, conv) in self.convs.iter().enumerate() {
            conv.register(reg, &format!("{prefix}.conv{}", i + 1));
        }
        self.head.register(reg, &format!("{prefix}.head"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn style_encoder_shape_and_determinism() {
        let mut rng = Rng::seed_from(41);
        let enc = StyleEncoder::new(&mut rng, 16, 64).unwrap();
        let x = Tensor::from_vec(&[2, 1, 64, 64], rng.uniform_vec(2 * 4096, 0.0, 1.0)).unwrap();
        let a = enc.forward(&x).unwrap();
        assert_eq!(a.shape(), &[2, 64]);
        let b = enc.forward(&x).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn style_encoder_zero_input_finite() {
        let mut rng = Rng::seed_from(43);
        let enc = StyleEncoder::new(&mut rng, 8, 16).unwrap();
        let v = enc.forward(&Tensor::zeros(&[1, 1, 32, 32])).unwrap();
        assert!(v.data().iter().all(|x| x.is_finite()));
    }
}
