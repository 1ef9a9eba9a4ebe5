//! PSNR and Dice evaluation metrics.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reported when MSE is exactly zero.
pub const PSNR_CAP_DB: f64 = 99.0;

/// 10·log10(peak²/MSE), capped at [`PSNR_CAP_DB`] for identical inputs.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "psnr",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    if peak <= 0.0 {
        return Err(Error::invalid("psnr", "peak must be positive"));
    }
    let ad = a.data();
    let bd = b.data();
    let mse: f64 = ad
        .iter()
        .zip(bd.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / ad.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

#[derive(Debug, Clone)]
pub struct DiceScores {
    pub per_class: Vec<(u8, f64)>,
    pub mean: f64,
}

/// Per-class Dice 2|P∩T|/(|P|+|T|) with the empty-empty convention of 1.0,
/// plus the mean over the requested classes.
pub fn dice(pred: &[u8], target: &[u8], classes: &[u8]) -> Result<DiceScores> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch {
            op: "dice",
            lhs: vec![pred.len()],
            rhs: vec![target.len()],
        });
    }
    let mut per_class = Vec::with_capacity(classes.len());
    for &c in classes {
        let mut inter = 0usize;
        let mut p_count = 0usize;
        let mut t_count = 0usize;
        for (&p, &t) in pred.iter().zip(target) {
            let pi = p == c;
            let ti = t == c;
            inter += (pi && ti) as usize;
            p_count += pi as usize;
            t_count += ti as usize;
        }
        let score = if p_count + t_count == 0 {
            1.0
        } else {
            2.0 * inter as f64 / (p_count + t_count) as f64
        };
        per_class.push((c, score));
    }
    let mean = per_class.iter().map(|(_, s)| s).sum::<f64>() / per_class.len().max(1) as f64;
    Ok(DiceScores { per_class, mean })
}
