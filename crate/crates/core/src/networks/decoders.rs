//! Decoders: the shared U-shaped segmentation head over the fused pyramid
//! and the per-modality style-modulated reconstruction decoder.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::blocks::{Conv2dLayer, LinearLayer};
use super::params::ParamRegistry;
use super::structure::scale_channels;

/// Shared segmentation decoder: consumes every fused scale as a skip input
/// and emits per-pixel class scores at full resolution.
#[derive(Debug)]
pub struct SegDecoder {
    pub up_convs: Vec<Conv2dLayer>,
    pub full_conv: Conv2dLayer,
    pub head: Conv2dLayer,
    pub num_scales: usize,
}

impl SegDecoder {
    pub fn new(
        rng: &mut Rng,
        base_channels: usize,
        num_scales: usize,
        num_classes: usize,
    ) -> Result<SegDecoder> {
        let deep = scale_channels(base_channels, num_scales);
        let mut up_convs = Vec::with_capacity(num_scales - 1);
        let mut c_in = deep;
        // ascend from scale L to scale 1, concatenating the skip at each stop
        for l in (1..num_scales).rev() {
            let skip = scale_channels(base_channels, l);
            let c_out = (deep >> (num_scales - l)).max(base_channels);
            up_convs.push(Conv2dLayer::new(rng, c_in + skip, c_out, 3, 1, 1)?);
            c_in = c_out;
        }
        Ok(SegDecoder {
            up_convs,
            full_conv: Conv2dLayer::new(rng, c_in, base_channels, 3, 1, 1)?,
            head: Conv2dLayer::new(rng, base_channels, num_classes, 1, 1, 0)?,
            num_scales,
        })
    }

    /// fused: F_1..F_L → [B,K,H,W] class scores.
    pub fn forward(&self, fused: &[Tensor]) -> Result<Tensor> {
        if fused.len() != self.num_scales {
            return Err(Error::invalid(
                "segment_decode",
                format!("expected {} fused scales, got {}", self.num_scales, fused.len()),
            ));
        }
        let mut x = fused[self.num_scales - 1].clone();
        for (conv, skip) in self.up_convs.iter().zip(fused.iter().rev().skip(1)) {
            let up = x.upsample_nearest_2x()?;
            x = conv.forward(&Tensor::concat(&[up, skip.clone()], 1)?)?.relu()?;
        }
        let full = self.full_conv.forward(&x.upsample_nearest_2x()?)?.relu()?;
        self.head.forward(&full)
    }

    pub fn register(&self, reg: &mut ParamRegistry, prefix: &str) {
        for (i, conv) in self.up_convs.iter().enumerate() {
            conv.register(reg, &format!("{prefix}.up{}", i + 1));
        }
        self.full_conv.register(reg, &format!("{prefix}.full"));
        self.head.register(reg, &format!("{prefix}.head"));
    }
}

/// One upsampling stage of the reconstruction decoder with per-channel
/// scale-and-shift style modulation.
#[derive(Debug)]
struct RecStage {
    conv: Conv2dLayer,
    style_scale: LinearLayer,
    style_shift: LinearLayer,
}

impl RecStage {
    fn new(rng: &mut Rng, c_in: usize, c_out: usize, d_style: usize) -> Result<RecStage> {
        Ok(RecStage {
            conv: Conv2dLayer::new(rng, c_in, c_out, 3, 1, 1)?,
            style_scale: LinearLayer::new(rng, d_style, c_out)?,
            style_shift: LinearLayer::new(rng, d_style, c_out)?,
        })
    }

    fn forward(&self, x: &Tensor, style: &Tensor) -> Result<Tensor> {
        let y = self.conv.forward(&x.upsample_nearest_2x()?)?;
        let b = style.shape()[0];
        let c = y.shape()[1];
        let scale = self
            .style_scale
            .forward(style)?
            .add_scalar(1.0)?
            .reshape(&[b, c, 1, 1])?;
        let shift = self.style_shift.forward(style)?.reshape(&[b, c, 1, 1])?;
        y.mul(&scale)?.add(&shift)?.relu()
    }

    fn register(&self, reg: &mut ParamRegistry, prefix: &str) {
        self.conv.register(reg, &format!("{prefix}.conv"));
        self.style_scale.register(reg, &format!("{prefix}.style_scale"));
        self.style_shift.register(reg, &format!("{prefix}.style_shift"));
    }
}

/// Per-modality reconstruction decoder: X̂ = D^rec(F_s, S), sigmoid output.
#[derive(Debug)]
pub struct RecDecoder {
    stages: Vec<RecStage>,
    head: Conv2dLayer,
}

impl RecDecoder {
    pub fn new(
        rng: &mut Rng,
        base_channels: usize,
        num_scales: usize,
        d_style: usize,
    ) -> Result<RecDecoder> {
        let deep = scale_channels(base_channels, num_scales);
        let mut stages = Vec::with_capacity(num_scales);
        let mut c_in = deep;
        for i in 0..num_scales {
            let c_out = (deep >> (i + 1)).max(base_channels);
            stages.push(RecStage::new(rng, c_in, c_out, d_style)?);
            c_in = c_out;
        }
        Ok(RecDecoder {
            stages,
            head: Conv2dLayer::new(rng, c_in, 1, 3, 1, 1)?,
        })
    }

    /// f_s: [B,deep,H/2^L,W/2^L], style: [B,d_style] → [B,1,H,W] in [0,1].
    pub fn forward(&self, f_s: &Tensor, style: &Tensor) -> Result<Tensor> {
        let mut x = f_s.clone();
        for stage in &self.stages {
            x = stage.forward(&x, style)?;
        }
        self.head.forward(&x)?.sigmoid()
    }

    pub fn register(&self, reg: &mut ParamRegistry, prefix: &str) {
        for (i, stage) in self.stages.iter().enumerate() {
            stage.register(reg, &format!("{prefix}.stage{}", i + 1));
        }
        self.head.register(reg, &format!("{prefix}.head"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fused_pyramid(rng: &mut Rng, b: usize, base: usize, scales: usize, size: usize) -> Vec<Tensor> {
        (1..=scales)
            .map(|l| {
                let c = scale_channels(base, l);
                let e = size >> l;
                Tensor::from_vec(&[b, c, e, e], rng.normal_vec(b * c * e * e)).unwrap()
            })
            .collect()
    }

    #[test]
    fn seg_decoder_shapes_and_softmax() {
        let mut rng = Rng::seed_from(51);
        let dec = SegDecoder::new(&mut rng, 16, 4, 3).unwrap();
        let fused = fused_pyramid(&mut rng, 2, 16, 4, 64);
        let scores = dec.forward(&fused).unwrap();
        assert_eq!(scores.shape(), &[2, 3, 64, 64]);
        let probs = scores.softmax(1).unwrap();
        let d = probs.data();
        for px in 0..64 * 64 {
            let s: f64 = (0..3).map(|c| d[c * 64 * 64 + px]).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn seg_decoder_scale_count_check() {
        let mut rng = Rng::seed_from(53);
        let dec = SegDecoder::new(&mut rng, 8, 3, 3).unwrap();
        let fused = fused_pyramid(&mut rng, 1, 8, 2, 32);
        assert!(dec.forward(&fused).is_err());
    }

    #[test]
    fn rec_decoder_range_and_shape() {
        let mut rng = Rng::seed_from(55);
        let dec = RecDecoder::new(&mut rng, 16, 4, 32).unwrap();
        let f_s = Tensor::from_vec(&[2, 128, 4, 4], rng.normal_vec(2 * 128 * 16)).unwrap();
        let style = Tensor::from_vec(&[2, 32], rng.normal_vec(64)).unwrap();
        let out = dec.forward(&f_s, &style).unwrap();
        assert_eq!(out.shape(), &[2, 1, 64, 64]);
        assert!(out.to_vec().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rec_decoder_style_sensitivity() {
        let mut rng = Rng::seed_from(57);
        let dec = RecDecoder::new(&mut rng, 8, 3, 16).unwrap();
        let f_s = Tensor::from_vec(&[1, 32, 4, 4], rng.normal_vec(512)).unwrap();
        let s1 = Tensor::from_vec(&[1, 16], rng.normal_vec(16)).unwrap();
        let s2 = Tensor::from_vec(&[1, 16], rng.normal_vec(16)).unwrap();
        let a = dec.forward(&f_s, &s1).unwrap();
        let b = dec.forward(&f_s, &s2).unwrap();
        let mad: f64 = a
            .to_vec()
            .iter()
            .zip(b.to_vec())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / a.len() as f64;
        assert!(mad > 0.0, "distinct styles must change the reconstruction");
    }
}
