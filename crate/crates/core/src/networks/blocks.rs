//! Basic learnable layers: convolution and affine, with He initialization.

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::params::ParamRegistry;

/// He-normal weights: std = sqrt(2 / fan_in).
fn he_init(rng: &mut Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    rng.normal_vec(n).into_iter().map(|v| v * std).collect()
}

#[derive(Debug, Clone)]
pub struct Conv2dLayer {
    /// [C_out, C_in, k, k]
    pub weight: Tensor,
    /// [C_out, 1, 1], broadcast over batch and space.
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2dLayer {
    pub fn new(
        rng: &mut Rng,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Conv2dLayer> {
        let fan_in = c_in * k * k;
        Ok(Conv2dLayer {
            weight: Tensor::param(&[c_out, c_in, k, k], he_init(rng, c_out * fan_in, fan_in))?,
            bias: Tensor::param(&[c_out, 1, 1], vec![0.0; c_out])?,
            stride,
            pad,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.conv2d(&self.weight, self.stride, self.pad)?.add(&self.bias)
    }

    pub fn register(&self, reg: &mut ParamRegistry, prefix: &str) {
        reg.register(&format!("{prefix}.weight"), &self.weight);
        reg.register(&format!("{prefix}.bias"), &self.bias);
    }
}

#[derive(Debug, Clone)]
pub struct LinearLayer {
    /// [in, out]
    pub weight: Tensor,
    /// [out]
    pub bias: Tensor,
}

impl LinearLayer {
    pub fn new(rng: &mut Rng, d_in: usize, d_out: usize) -> Result<LinearLayer> {
        Ok(LinearLayer {
            weight: Tensor::param(&[d_in, d_out], he_init(rng, d_in * d_out, d_in))?,
            bias: Tensor::param(&[d_out], vec![0.0; d_out])?,
        })
    }

    /// x: [B, in] → [B, out]
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add(&self.bias)
    }

    pub fn register(&self, reg: &mut ParamRegistry, prefix: &str) {
        reg.register(&format!("{prefix}.weight"), &self.weight);
        reg.register(&format!("{prefix}.bias"), &self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_layer_shapes_and_bias() {
        let mut rng = Rng::seed_from(5);
        let layer = Conv2dLayer::new(&mut rng, 3, 8, 4, 2, 1).unwrap();
        let x = Tensor::zeros(&[2, 3, 16, 16]);
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 8, 8, 8]);
        // zero input → output equals broadcast bias (zero here)
        assert!(y.to_vec().iter().all(|v| *v == 0.0));
        layer.bias.set_data(&(0..8).map(|i| i as f64).collect::<Vec<_>>());
        let y = layer.forward(&x).unwrap();
        let d = y.data();
        for c in 0..8 {
            for px in 0..64 {
                assert_eq!(d[c * 64 + px], c as f64);
            }
        }
    }

    #[test]
    fn linear_layer_forward() {
        let mut rng = Rng::seed_from(6);
        let layer = LinearLayer::new(&mut rng, 4, 2) .unwrap();
        layer.weight.set_data(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        layer.bias.set_data(&[0.5, -0.5]);
        let x = Tensor::from_vec(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.to_vec(), vec![1.0 + 3.0 + 0.5, 2.0 + 4.0 - 0.5]);
    }

    #[test]
    fn he_init_scale() {
        let mut rng = Rng::seed_from(7);
        let w = he_init(&mut rng, 10_000, 50);
        let var: f64 = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 2.0 / 50.0).abs() < 0.005);
    }
}
