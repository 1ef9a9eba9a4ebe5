//! Training objectives: contrastive style consistency, structure-aware
//! reconstruction, hybrid segmentation, denoising MSE, and their weighted
//! combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequency::{freq_ssim_loss, SsimParams};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 0.1,
            lambda2: 1.0,
            lambda3: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda3 < 0.0 {
            return Err(Error::invalid("loss_weights", "weights must be non-negative"));
        }
        Ok(())
    }
}

/// Style features of a mini-batch, one row per (sample, modality) pair.
#[derive(Debug, Clone)]
pub struct StyleBatch {
    /// P×d feature matrix (raw, not yet normalized).
    pub features: Tensor,
    /// Modality label per row.
    pub modality_labels: Vec<usize>,
}

impl StyleBatch {
    pub fn new(features: Tensor, modality_labels: Vec<usize>) -> Result<StyleBatch> {
        if features.rank() != 2 || features.shape()[0] != modality_labels.len() {
            return Err(Error::invalid(
                "style_batch",
                format!(
                    "features {:?} incompatible with {} labels",
                    features.shape(),
                    modality_labels.len()
                ),
            ));
        }
        Ok(StyleBatch { features, modality_labels })
    }
}

/// Numerically stable −log σ(x) = softplus(−x), built from primitives using
/// the detached-max shift: softplus(x) = max(x,0) + ln(1 + e^{−|x|}).
fn softplus(x: &Tensor) -> Result<Tensor> {
    let pos = x.relu()?;
    let negabs = x.abs()?.neg()?;
    let log1p = negabs.exp()?.add_scalar(1.0)?.ln()?;
    pos.add(&log1p)
}

/// Binary cross-entropy over all pairwise temperature-scaled style
/// similarities: same-modality pairs are pulled together, cross-modality
/// pairs pushed apart. The p=q diagonal is included in the double sum.
pub fn style_consistency_loss(batch: &StyleBatch, tau: &Tensor) -> Result<Tensor> {
    let p = batch.features.shape()[0];
    if p < 1 {
        return Err(Error::invalid("style_consistency_loss", "empty batch"));
    }
    if tau.item() <= 0.0 {
        return Err(Error::invalid("style_consistency_loss", "temperature must be positive"));
    }
    // L2-normalize rows
    let sq_norm = batch.features.square()?.sum_axis(1, true)?;
    let norm = sq_norm.add_scalar(1e-12)?.sqrt()?;
    let normed = batch.features.div(&norm)?;
    // z_pq = τ · S̃_p·S̃_q
    let sims = normed.matmul(&normed.transpose()?)?;
    let z = sims.mul(tau)?;
    // targets: same modality label (diagonal included)
    let mut t = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            if batch.modality_labels[i] == batch.modality_labels[j] {
                t[i * p + j] = 1.0;
            }
        }
    }
    let t = Tensor::from_vec(&[p, p], t)?;
    // −[T logσ(z) + (1−T) logσ(−z)] = T·softplus(−z) + (1−T)·softplus(z)
    let pos_term = t.mul(&softplus(&z.neg()?)?)?;
    let neg_mask = t.neg()?.add_scalar(1.0)?;
    let neg_term = neg_mask.mul(&softplus(&z)?)?;
    pos_term.add(&neg_term)?.mean_all()
}

/// Mean absolute error.
pub fn reconstruction_loss(xhat: &Tensor, x: &Tensor) -> Result<Tensor> {
    if xhat.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            op: "reconstruction_loss",
            lhs: xhat.shape().to_vec(),
            rhs: x.shape().to_vec(),
        });
    }
    xhat.sub(x)?.abs()?.mean_all()
}

/// L_rec + L_freq over identically averaged batches.
pub fn structure_aware_loss(xhat: &Tensor, x: &Tensor, ssim_params: &SsimParams) -> Result<Tensor> {
    let rec = reconstruction_loss(xhat, x)?;
    let freq = freq_ssim_loss(xhat, x, ssim_params)?;
    rec.add(&freq)
}

/// Mean of soft-Dice loss (foreground classes) and per-pixel cross-entropy.
pub fn segmentation_loss(scores: &Tensor, target: &[u8], num_classes: usize) -> Result<Tensor> {
    if scores.rank() != 4 || scores.shape()[1] != num_classes {
        return Err(Error::invalid(
            "segmentation_loss",
            format!("expected B×{num_classes}×H×W scores, got {:?}", scores.shape()),
        ));
    }
    let (b, k, h, w) = (
        scores.shape()[0],
        scores.shape()[1],
        scores.shape()[2],
        scores.shape()[3],
    );
    if target.len() != b * h * w {
        return Err(Error::ShapeMismatch {
            op: "segmentation_loss",
            lhs: scores.shape().to_vec(),
            rhs: vec![target.len()],
        });
    }
    if let Some(&bad) = target.iter().find(|&&c| c as usize >= k) {
        return Err(Error::invalid(
            "segmentation_loss",
            format!("class index {bad} out of range for {k} classes"),
        ));
    }
    // one-hot target [B,K,H,W]
    let mut onehot = vec![0.0; b * k * h * w];
    for bi in 0..b {
        for px in 0..h * w {
            let c = target[bi * h * w + px] as usize;
            onehot[(bi * k + c) * h * w + px] = 1.0;
        }
    }
    let onehot = Tensor::from_vec(&[b, k, h, w], onehot)?;

    // cross-entropy via log-softmax with a detached per-pixel max shift
    let max_shift = {
        let d = scores.data();
        let mut m = vec![f64::NEG_INFINITY; b * h * w];
        for bi in 0..b {
            for c in 0..k {
                for px in 0..h * w {
                    let v = d[(bi * k + c) * h * w + px];
                    let slot = &mut m[bi * h * w + px];
                    if v > *slot {
                        *slot = v;
                    }
                }
            }
        }
        Tensor::from_vec(&[b, 1, h, w], m)?
    };
    let shifted = scores.sub(&max_shift)?;
    let lse = shifted.exp()?.sum_axis(1, true)?.ln()?;
    let log_probs = shifted.sub(&lse)?;
    let ce = onehot
        .mul(&log_probs)?
        .sum_axis(1, false)?
        .mean_all()?
        .neg()?;

    // global soft-Dice over foreground classes
    let probs = scores.softmax(1)?;
    let mut dice_terms: Option<Tensor> = None;
    let eps = 1e-7;
    for c in 1..k {
        // slice class c via a constant mask
        let mut sel = vec![0.0; k];
        sel[c] = 1.0;
        let sel = Tensor::from_vec(&[k, 1, 1], sel)?;
        let pc = probs.mul(&sel)?.sum_axis(1, false)?;
        let tc = onehot.mul(&sel)?.sum_axis(1, false)?;
        let inter = pc.mul(&tc)?.sum_all()?;
        let denom = pc.sum_all()?.add(&tc.sum_all()?)?.add_scalar(eps)?;
        let d = inter.scale(2.0)?.div(&denom)?;
        dice_terms = Some(match dice_terms {
            Some(acc) => acc.add(&d)?,
            None => d,
        });
    }
    let fg = (k - 1).max(1) as f64;
    let dice_loss = dice_terms
        .expect("at least one foreground class")
        .scale(1.0 / fg)?
        .neg()?
        .add_scalar(1.0)?;
    dice_loss.add(&ce)?.scale(0.5)
}

/// ‖ε − ε̂‖² averaged over every element.
pub fn ldm_loss(eps: &Tensor, eps_hat: &Tensor) -> Result<Tensor> {
    if eps.shape() != eps_hat.shape() {
        return Err(Error::ShapeMismatch {
            op: "ldm_loss",
            lhs: eps.shape().to_vec(),
            rhs: eps_hat.shape().to_vec(),
        });
    }
    eps.sub(eps_hat)?.square()?.mean_all()
}

/// L_total = L_seg + λ₁·L_sc + λ₂·L_sa + λ₃·L_ldm
pub fn total_loss(
    seg: &Tensor,
    sc: &Tensor,
    sa: &Tensor,
    ldm: &Tensor,
    weights: &LossWeights,
) -> Result<Tensor> {
    weights.validate()?;
    seg.add(&sc.scale(weights.lambda1)?)?
        .add(&sa.scale(weights.lambda2)?)?
        .add(&ldm.scale(weights.lambda3)?)
}
