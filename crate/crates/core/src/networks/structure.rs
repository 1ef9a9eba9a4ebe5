//! Multi-scale structure pathway: per-modality encoders with
//! high-frequency information boosting (HFIB), gated multi-modal fusion
//! (MMSF), and multi-scale enhancement of the deepest scale (MSSE).

use crate::error::{Error, Result};
use crate::frequency::{low_pass, GaussianFilterParams};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::blocks::{Conv2dLayer, LinearLayer};
use super::params::ParamRegistry;

/// Channel width at scale l (1-based): base·2^(l−1).
pub fn scale_channels(base: usize, l: usize) -> usize {
    base << (l - 1)
}

/// S = C + (C − low_pass(C)) = 2C − low_pass(C).
pub fn hfib_forward(c: &Tensor, params: &GaussianFilterParams) -> Result<Tensor> {
    c.scale(2.0)?.sub(&low_pass(c, params)?)
}

/// One modality's multi-scale feature extractor: per scale a stride-2
/// convolution, ReLU, then HFIB with a learnable Gaussian bandwidth.
#[derive(Debug)]
pub struct StructureEncoder {
    pub convs: Vec<Conv2dLayer>,
    pub filters: Vec<GaussianFilterParams>,
    pub num_scales: usize,
    /// Ablation switch: when false the HFIB step is the identity.
    pub use_hfib: bool,
}

impl StructureEncoder {
    pub fn new(rng: &mut Rng, base_channels: usize, num_scales: usize) -> Result<StructureEncoder> {
        let mut convs = Vec::with_capacity(num_scales);
        let mut filters = Vec::with_capacity(num_scales);
        let mut c_in = 1;
        for l in 1..=num_scales {
            let c_out = scale_channels(base_channels, l);
            convs.push(Conv2dLayer::new(rng, c_in, c_out, 4, 2, 1)?);
            filters.push(GaussianFilterParams::new(1.0, 1)?);
            c_in = c_out;
        }
        Ok(StructureEncoder { convs, filters, num_scales, use_hfib: true })
    }

    /// x: [B,1,H,W] with H, W divisible by 2^L → features at scales 1..L.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        if x.rank() != 4 || x.shape()[1] != 1 {
            return Err(Error::invalid(
                "structure_encode",
                format!("expected B×1×H×W input, got {:?}", x.shape()),
            ));
        }
        let div = 1 << self.num_scales;
        if x.shape()[2] % div != 0 || x.shape()[3] % div != 0 {
            return Err(Error::invalid(
                "structure_encode",
                format!("spatial extent {:?} not divisible by {div}", &x.shape()[2..]),
            ));
        }
        let mut scales = Vec::with_capacity(self.num_scales);
        let mut h = x.clone();
        for (conv, filter) in self.convs.iter().zip(&self.filters) {
            let c = conv.forward(&h)?.relu()?;
            let s = if self.use_hfib { hfib_forward(&c, filter)? } else { c };
            h = s.clone();
            scales.push(s);
        }
        Ok(scales)
    }

    pub fn register(&self, reg: &mut ParamRegistry, prefix: &str) {
        for (l, (conv, filter)) in self.convs.iter().zip(&self.filters).enumerate() {
            conv.register(reg, &format!("{prefix}.scale{}.conv", l + 1));
            reg.register(&format!("{prefix}.scale{}.hfib.log_sigma", l + 1), &filter.log_sigma);
        }
    }
}

/// Gated fusion of per-modality features at every scale.
#[derive(Debug)]
pub struct Mmsf {
    /// gates[j][l]: scalar sigmoid gate for modality j at scale l.
    pub gates: Vec<Vec<LinearLayer>>,
    /// 1×1 fusion convolution per scale.
    pub fusions: Vec<Conv2dLayer>,
}

impl Mmsf {
    pub fn new(
        rng: &mut Rng,
        num_modalities: usize,
        base_channels: usize,
        num_scales: usize,
    ) -> Result<Mmsf> {
        let mut gates = Vec::with_capacity(num_modalities);
        for _ in 0..num_modalities {
            let mut per_scale = Vec::with_capacity(num_scales);
            for l in 1..=num_scales {
                per_scale.push(LinearLayer::new(rng, scale_channels(base_channels, l), 1)?);
            }
            gates.push(per_scale);
        }
        let mut fusions = Vec::with_capacity(num_scales);
        for l in 1..=num_scales {
            let c = scale_channels(base_channels, l);
            fusions.push(Conv2dLayer::new(rng, c, c, 1, 1, 0)?);
        }
        Ok(Mmsf { gates, fusions })
    }

    /// features[j] = Some(per-scale features) for available modality j.
    /// Returns the fused pyramid F_1..F_L.
    pub fn fuse(&self, features: &[Option<Vec<Tensor>>]) -> Result<Vec<Tensor>> {
        if features.iter().all(|f| f.is_none()) {
            return Err(Error::invalid("mmsf_fuse", "all modalities masked"));
        }
        let num_scales = self.fusions.len();
        let mut fused = Vec::with_capacity(num_scales);
        for l in 0..num_scales {
            // sigmoid gate per available modality, renormalized so the
            // weights sum to 1 over whatever is available
            let mut weights = Vec::new();
            let mut maps = Vec::new();
            for (j, feat) in features.iter().enumerate() {
                let Some(scales) = feat else { continue };
                let s = &scales[l];
                let pooled = s.global_avg_pool()?; // [B,C]
                let w = self.gates[j][l].forward(&pooled)?.sigmoid()?; // [B,1]
                weights.push(w);
                maps.push(s);
            }
            let total = {
                let mut acc = weights[0].clone();
                for w in &weights[1..] {
                    acc = acc.add(w)?;
                }
                acc
            };
            let mut sum: Option<Tensor> = None;
            for (w, s) in weights.iter().zip(&maps) {
                let wn = w.div(&total)?; // renormalized, [B,1]
                let b = wn.shape()[0];
                let wn = wn.reshape(&[b, 1, 1, 1])?;
                let term = s.mul(&wn)?;
                sum = Some(match sum {
                    Some(acc) => acc.add(&term)?,
                    None => term,
                });
            }
            fused.push(self.fusions[l].forward(&sum.expect("at least one modality"))?);
        }
        Ok(fused)
    }

    pub fn register(&self, reg: &mut ParamRegistry, prefix: &str) {
        for (j, per_scale) in self.gates.iter().enumerate() {
            for (l, gate) in per_scale.iter().enumerate() {
                gate.register(reg, &format!("{prefix}.gate.m{j}.scale{}", l + 1));
            }
        }
        for (l, fusion) in self.fusions.iter().enumerate() {
            fusion.register(reg, &format!("{prefix}.fusion.scale{}", l + 1));
        }
    }
}

/// Cross-attention enhancement of the deepest fused scale by the shallower
/// ones: F_s = F_L + α·Attn(F_L, Σ Up(Proj(F_l))).
#[derive(Debug)]
pub struct Msse {
    pub projs: Vec<Conv2dLayer>,
    pub wq: LinearLayer,
    pub wk: LinearLayer,
    pub wv: LinearLayer,
    pub alpha: Tensor,
    pub deep_channels: usize,
}

impl Msse {
    pub fn new(
        rng: &mut Rng,
        base_channels: usize,
        num_scales: usize,
        alpha_init: f64,
    ) -> Result<Msse> {
        let deep = scale_channels(base_channels, num_scales);
        let mut projs = Vec::with_capacity(num_scales - 1);
        for l in 1..num_scales {
            projs.push(Conv2dLayer::new(rng, scale_channels(base_channels, l), deep, 1, 1, 0)?);
        }
        Ok(Msse {
            projs,
            wq: LinearLayer::new(rng, deep, deep)?,
            wk: LinearLayer::new(rng, deep, deep)?,
            wv: LinearLayer::new(rng, deep, deep)?,
            alpha: Tensor::param(&[], vec![alpha_init])?,
            deep_channels: deep,
        })
    }

    /// [B,C,H,W] → [B, H·W, C] token matrix.
    fn tokens(x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        x.reshape(&[b, c, h * w])?.transpose()
    }

    /// fused: F_1..F_L → F_s shaped like F_L.
    pub fn enhance(&self, fused: &[Tensor]) -> Result<Tensor> {
        let f_deep = fused.last().ok_or_else(|| Error::invalid("msse_enhance", "empty pyramid"))?;
        let (b, c, h, w) = (
            f_deep.shape()[0],
            f_deep.shape()[1],
            f_deep.shape()[2],
            f_deep.shape()[3],
        );
        // guidance = Σ_{l<L} Up(Proj(F_l)) at the deep spatial extent
        let mut guidance: Option<Tensor> = None;
        for (proj, f_l) in self.projs.iter().zip(&fused[..fused.len() - 1]) {
            let g = proj.forward(f_l)?.resize_bilinear(h, w)?;
            guidance = Some(match guidance {
                Some(acc) => acc.add(&g)?,
                None => g,
            });
        }
        let guidance = guidance.ok_or_else(|| Error::invalid("msse_enhance", "need ≥ 2 scales"))?;

        let n = h * w;
        let q = self.linear_tokens(&self.wq, &Self::tokens(f_deep)?, b, n)?;
        let k = self.linear_tokens(&self.wk, &Self::tokens(&guidance)?, b, n)?;
        let v = self.linear_tokens(&self.wv, &Self::tokens(&guidance)?, b, n)?;
        let scores = q.bmm(&k.transpose()?)?.scale(1.0 / (c as f64).sqrt())?;
        let attn = scores.softmax(2)?; // rows over key positions sum to 1
        let out = attn.bmm(&v)?; // [B,N,C]
        let out = out.transpose()?.reshape(&[b, c, h, w])?;
        f_deep.add(&out.mul(&self.alpha)?)
    }

    /// Applies a shared linear layer to [B,N,C] tokens.
    fn linear_tokens(&self, layer: &LinearLayer, t: &Tensor, b: usize, n: usize) -> Result<Tensor> {
        let c = t.shape()[2];
        layer
            .forward(&t.reshape(&[b * n, c])?)?
            .reshape(&[b, n, self.deep_channels])
    }

    pub fn register(&self, reg: &mut ParamRegistry, prefix: &str) {
        for (l, proj) in self.projs.iter().enumerate() {
            proj.register(reg, &format!("{prefix}.proj.scale{}", l + 1));
        }
        self.wq.register(reg, &format!("{prefix}.wq"));
        self.wk.register(reg, &format!("{prefix}.wk"));
        self.wv.register(reg, &format!("{prefix}.wv"));
        reg.register(&format!("{prefix}.alpha"), &self.alpha);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frequency::high_freq_residual;

    #[test]
    fn hfib_constant_unchanged() {
        let p = GaussianFilterParams::new(1.0, 1).unwrap();
        let c = Tensor::full(&[1, 2, 8, 8], 0.7);
        let s = hfib_forward(&c, &p).unwrap();
        for v in s.to_vec() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn hfib_identity_matches_residual() {
        let p = GaussianFilterParams::new(1.3, 2).unwrap();
        let mut rng = Rng::seed_from(21);
        let c = Tensor::from_vec(&[1, 1, 6, 6], rng.uniform_vec(36, 0.0, 1.0)).unwrap();
        let s = hfib_forward(&c, &p).unwrap();
        let lhs = s.sub(&c).unwrap().to_vec();
        let rhs = high_freq_residual(&c, &p).unwrap().to_vec();
        for (a, b) in lhs.iter().zip(rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hfib_impulse_center_value() {
        // σ=1, radius=1 kernel center weight ≈ 0.2042 → impulse center → 2 − 0.2042
        let p = GaussianFilterParams::new(1.0, 1).unwrap();
        let mut img = vec![0.0; 49];
        img[24] = 1.0;
        let c = Tensor::from_vec(&[1, 1, 7, 7], img).unwrap();
        let s = hfib_forward(&c, &p).unwrap();
        let center = s.data()[24];
        assert!((center - 1.7958).abs() < 1e-3, "center {center}");
    }

    #[test]
    fn structure_encoder_shapes_64() {
        let mut rng = Rng::seed_from(23);
        let enc = StructureEncoder::new(&mut rng, 16, 4).unwrap();
        let x = Tensor::from_vec(&[2, 1, 64, 64], rng.uniform_vec(2 * 64 * 64, 0.0, 1.0)).unwrap();
        let scales = enc.forward(&x).unwrap();
        assert_eq!(scales.len(), 4);
        let expect = [(16, 32), (32, 16), (64, 8), (128, 4)];
        for (s, (c, e)) in scales.iter().zip(expect) {
            assert_eq!(s.shape(), &[2, c, e, e]);
            assert!(s.data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn structure_encoder_deterministic_and_zero_safe() {
        let mut rng = Rng::seed_from(25);
        let enc = StructureEncoder::new(&mut rng, 8, 3).unwrap();
        let zero = Tensor::zeros(&[1, 1, 16, 16]);
        let a = enc.forward(&zero).unwrap();
        let b = enc.forward(&zero).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_vec(), y.to_vec());
            assert!(x.data().iter().all(|v| v.is_finite()));
        }
        // indivisible extent rejected
        assert!(enc.forward(&Tensor::zeros(&[1, 1, 20, 20])).is_err());
    }

    #[test]
    fn mmsf_single_modality_is_fusion_of_it() {
        let mut rng = Rng::seed_from(27);
        let enc = StructureEncoder::new(&mut rng, 8, 2).unwrap();
        let mmsf = Mmsf::new(&mut rng, 3, 8, 2).unwrap();
        let x = Tensor::from_vec(&[1, 1, 8, 8], rng.uniform_vec(64, 0.0, 1.0)).unwrap();
        let scales = enc.forward(&x).unwrap();
        let fused = mmsf
            .fuse(&[None, Some(scales.clone()), None])
            .unwrap();
        // renormalized single-source weight is exactly 1 → F_l = Fusion(S_j)
        for (l, f) in fused.iter().enumerate() {
            let direct = mmsf.fusions[l].forward(&scales[l]).unwrap();
            for (a, b) in f.to_vec().iter().zip(direct.to_vec()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mmsf_masking_equals_zero_supplied_omission() {
        // masking modality j yields identical F_l to physically omitting it
        let mut rng = Rng::seed_from(29);
        let enc = StructureEncoder::new(&mut rng, 8, 2).unwrap();
        let mmsf = Mmsf::new(&mut rng, 3, 8, 2).unwrap();
        let xs: Vec<Tensor> = (0..3)
            .map(|_| Tensor::from_vec(&[1, 1, 8, 8], rng.uniform_vec(64, 0.0, 1.0)).unwrap())
            .collect();
        let feats: Vec<Option<Vec<Tensor>>> =
            xs.iter().map(|x| Some(enc.forward(x).unwrap())).collect();
        let mut masked = feats.clone();
        masked[1] = None;
        let omitted = vec![feats[0].clone(), None, feats[2].clone()];
        let a = mmsf.fuse(&masked).unwrap();
        let b = mmsf.fuse(&omitted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_vec(), y.to_vec());
        }
        // and masking a nonzero modality changes the fused output
        let full = mmsf.fuse(&feats).unwrap();
        let diff: f64 = full[0]
            .to_vec()
            .iter()
            .zip(a[0].to_vec())
            .map(|(p, q)| (p - q).abs())
            .sum();
        assert!(diff > 1e-9, "masking a nonzero modality must change F_l");
        assert!(mmsf.fuse(&[None, None, None]).is_err());
    }

    #[test]
    fn mmsf_identical_inputs_permutation_invariant() {
        let mut rng = Rng::seed_from(31);
        let enc = StructureEncoder::new(&mut rng, 8, 2).unwrap();
        let mmsf = Mmsf::new(&mut rng, 2, 8, 2).unwrap();
        let x = Tensor::from_vec(&[1, 1, 8, 8], rng.uniform_vec(64, 0.0, 1.0)).unwrap();
        let s = enc.forward(&x).unwrap();
        // identical features for every modality: renormalized weighted sum is
        // the common feature map regardless of gate values
        let fused = mmsf.fuse(&[Some(s.clone()), Some(s.clone())]).unwrap();
        let single = mmsf.fuse(&[Some(s.clone()), None]).unwrap();
        for (a, b) in fused.iter().zip(&single) {
            for (x, y) in a.to_vec().iter().zip(b.to_vec()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn msse_alpha_zero_is_identity() {
        let mut rng = Rng::seed_from(33);
        let msse = Msse::new(&mut rng, 8, 3, 0.0).unwrap();
        let fused = vec![
            Tensor::from_vec(&[1, 8, 8, 8], rng.normal_vec(512)).unwrap(),
            Tensor::from_vec(&[1, 16, 4, 4], rng.normal_vec(256)).unwrap(),
            Tensor::from_vec(&[1, 32, 2, 2], rng.normal_vec(128)).unwrap(),
        ];
        let f_s = msse.enhance(&fused).unwrap();
        assert_eq!(f_s.shape(), fused[2].shape());
        assert_eq!(f_s.to_vec(), fused[2].to_vec());
    }

    #[test]
    fn msse_output_shape_and_attention_rows() {
        let mut rng = Rng::seed_from(35);
        let msse = Msse::new(&mut rng, 8, 3, 0.1).unwrap();
        let fused = vec![
            Tensor::from_vec(&[2, 8, 8, 8], rng.normal_vec(1024)).unwrap(),
            Tensor::from_vec(&[2, 16, 4, 4], rng.normal_vec(512)).unwrap(),
            Tensor::from_vec(&[2, 32, 2, 2], rng.normal_vec(256)).unwrap(),
        ];
        let f_s = msse.enhance(&fused).unwrap();
        assert_eq!(f_s.shape(), &[2, 32, 2, 2]);
        assert!(f_s.data().iter().all(|v| v.is_finite()));
        // attention row-stochasticity via the softmax primitive it uses
        let logits = Tensor::from_vec(&[1, 4, 4], rng.normal_vec(16)).unwrap();
        let a = logits.softmax(2).unwrap();
        for row in 0..4 {
            let s: f64 = a.data()[row * 4..(row + 1) * 4].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn registry_counts() {
        let mut rng = Rng::seed_from(37);
        let enc = StructureEncoder::new(&mut rng, 16, 4).unwrap();
        let mut reg = ParamRegistry::new();
        enc.register(&mut reg, "str.m0");
        // 4 scales × (conv weight + conv bias + log_sigma)
        assert_eq!(reg.len(), 12);
    }
}
