//! Matrix products. One cache-friendly f64 kernel backs matmul, batched
//! matmul, and the convolution lowering in `conv.rs`.

use super::Tensor;
use crate::error::{Error, Result};

/// C[m×n] += A[m×k] · B[k×n]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// C[m×k] += A[m×n] · B[k×n]ᵀ  (row-by-row dot products)
pub(crate) fn gemm_nt(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let crow = &mut c[i * k..(i + 1) * k];
        for (p, cv) in crow.iter_mut().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *cv += acc;
        }
    }
}

/// C[k×n] += A[m×k]ᵀ · B[m×n]
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

impl Tensor {
    /// Rank-2 matrix product with gradients ∂L/∂a = G·bᵀ and ∂L/∂b = aᵀ·G.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || rhs.rank() != 2 || self.shape()[1] != rhs.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: rhs.shape().to_vec(),
            });
        }
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let n = rhs.shape()[1];
        let mut data = vec![0.0; m * n];
        gemm(m, k, n, &self.data(), &rhs.data(), &mut data);
        let (pa, pb) = (self.clone(), rhs.clone());
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            if pa.requires_grad() {
                let mut ga = vec![0.0; m * k];
                gemm_nt(m, n, k, g, &pb.data(), &mut ga);
                pa.accumulate_grad(&ga);
            }
            if pb.requires_grad() {
                let mut gb = vec![0.0; k * n];
                gemm_tn(m, k, n, &pa.data(), g, &mut gb);
                pb.accumulate_grad(&gb);
            }
        });
        Tensor::from_op(
            "matmul",
            vec![m, n],
            data,
            vec![self.clone(), rhs.clone()],
            Some(back),
        )
    }

    /// Batched matrix product over matching leading batch dimension.
    pub fn bmm(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.rank() != 3
            || rhs.rank() != 3
            || self.shape()[0] != rhs.shape()[0]
            || self.shape()[2] != rhs.shape()[1]
        {
            return Err(Error::ShapeMismatch {
                op: "bmm",
                lhs: self.shape().to_vec(),
                rhs: rhs.shape().to_vec(),
            });
        }
        let (bsz, m, k) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let n = rhs.shape()[2];
        let mut data = vec![0.0; bsz * m * n];
        {
            let ad = self.data();
            let bd = rhs.data();
            for b in 0..bsz {
                gemm(
                    m,
                    k,
                    n,
                    &ad[b * m * k..(b + 1) * m * k],
                    &bd[b * k * n..(b + 1) * k * n],
                    &mut data[b * m * n..(b + 1) * m * n],
                );
            }
        }
        let (pa, pb) = (self.clone(), rhs.clone());
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            if pa.requires_grad() {
                let mut ga = vec![0.0; bsz * m * k];
                let bd = pb.data();
                for b in 0..bsz {
                    gemm_nt(
                        m,
                        n,
                        k,
                        &g[b * m * n..(b + 1) * m * n],
                        &bd[b * k * n..(b + 1) * k * n],
                        &mut ga[b * m * k..(b + 1) * m * k],
                    );
                }
                drop(bd);
                pa.accumulate_grad(&ga);
            }
            if pb.requires_grad() {
                let mut gb = vec![0.0; bsz * k * n];
                let ad = pa.data();
                for b in 0..bsz {
                    gemm_tn(
                        m,
                        k,
                        n,
                        &ad[b * m * k..(b + 1) * m * k],
                        &g[b * m * n..(b + 1) * m * n],
                        &mut gb[b * k * n..(b + 1) * k * n],
                    );
                }
                drop(ad);
                pb.accumulate_grad(&gb);
            }
        });
        Tensor::from_op(
            "bmm",
            vec![bsz, m, n],
            data,
            vec![self.clone(), rhs.clone()],
            Some(back),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let eye = Tensor::from_vec(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let x = Tensor::from_vec(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let y = eye.matmul(&x).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn hand_product() {
        let a = Tensor::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![1., 1.]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.to_vec(), vec![3.0, 7.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn bmm_matches_per_batch_matmul() {
        let a = Tensor::from_vec(&[2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        let b = Tensor::from_vec(&[2, 3, 2], (0..12).map(|v| (v as f64) * 0.5).collect()).unwrap();
        let c = a.bmm(&b).unwrap();
        for batch in 0..2 {
            let am = Tensor::from_vec(&[2, 3], a.to_vec()[batch * 6..(batch + 1) * 6].to_vec())
                .unwrap();
            let bm = Tensor::from_vec(&[3, 2], b.to_vec()[batch * 6..(batch + 1) * 6].to_vec())
                .unwrap();
            let cm = am.matmul(&bm).unwrap();
            assert_eq!(&c.to_vec()[batch * 4..(batch + 1) * 4], cm.to_vec().as_slice());
        }
    }
}
