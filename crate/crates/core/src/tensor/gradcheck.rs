//! Central finite-difference verification of reverse-mode gradients.

use super::Tensor;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over all checked elements of |analytic − numeric| / max(1, |analytic|, |numeric|)
    pub max_rel_error: f64,
    pub checked: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.max_rel_error <= self.tol
    }
}

/// Check the reverse-mode gradient of scalar-valued `f` with respect to every
/// tensor in `inputs`. `f` is re-evaluated under elementwise perturbations, so
/// it must read the inputs' current data on each call.
pub fn gradcheck_params(
    f: impl Fn() -> Result<Tensor>,
    inputs: &[Tensor],
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    for t in inputs {
        t.zero_grad();
    }
    let out = f()?;
    assert_eq!(out.len(), 1, "gradcheck requires a scalar-valued function");
    out.backward();
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for (t, grads) in inputs.iter().zip(&analytic) {
        let base = t.to_vec();
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += eps;
            t.set_data(&plus);
            let fp = f()?.item();
            let mut minus = base.clone();
            minus[i] -= eps;
            t.set_data(&minus);
            let fm = f()?.item();
            t.set_data(&base);
            let numeric = (fp - fm) / (2.0 * eps);
            let g = grads[i];
            let denom = 1.0f64.max(g.abs()).max(numeric.abs());
            max_rel = max_rel.max((g - numeric).abs() / denom);
            checked += 1;
        }
    }
    for t in inputs {
        t.zero_grad();
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        checked,
        tol,
    })
}

/// Single-input convenience form.
pub fn gradcheck(
    f: impl Fn(&Tensor) -> Result<Tensor>,
    x: &Tensor,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let xp = x.clone();
    gradcheck_params(move || f(&xp), std::slice::from_ref(x), eps, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_has_exact_gradient() {
        let x = Tensor::param(&[5], vec![0.1, -0.2, 0.3, 0.4, -0.5]).unwrap();
        let r = gradcheck(|x| x.sum_all(), &x, 1e-4, 1e-10).unwrap();
        assert!(r.pass(), "max rel error {}", r.max_rel_error);
    }

    #[test]
    fn square_gradient_at_three() {
        // d/dx x·x at 3 is 6
        let x = Tensor::param(&[1], vec![3.0]).unwrap();
        let y = x.mul(&x).unwrap().sum_all().unwrap();
        y.backward();
        assert!((x.grad().unwrap()[0] - 6.0).abs() < 1e-12);
        x.zero_grad();
        let r = gradcheck(|x| x.mul(x)?.sum_all(), &x, 1e-4, 1e-6).unwrap();
        assert!(r.pass());
    }

    #[test]
    fn matmul_gradient_matches_fd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = Tensor::param(&[5, 4], (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let b = Tensor::param(&[4, 3], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let (ac, bc) = (a.clone(), b.clone());
        let r = gradcheck_params(
            move || ac.matmul(&bc)?.square()?.sum_all(),
            &[a, b],
            1e-4,
            1e-5,
        )
        .unwrap();
        assert!(r.pass(), "max rel error {}", r.max_rel_error);
    }

    #[test]
    fn conv2d_gradient_matches_fd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let x = Tensor::param(
            &[1, 2, 6, 6],
            (0..72).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let w = Tensor::param(
            &[3, 2, 3, 3],
            (0..54).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (xc, wc) = (x.clone(), w.clone());
        let r = gradcheck_params(
            move || xc.conv2d(&wc, 1, 1)?.square()?.sum_all(),
            &[x, w],
            1e-4,
            1e-4,
        )
        .unwrap();
        assert!(r.pass(), "max rel error {}", r.max_rel_error);
    }

    #[test]
    fn softmax_gradient_matches_fd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let x = Tensor::param(&[8], (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        // weighted sum keeps the objective sensitive to every coordinate
        let wts = Tensor::from_vec(&[8], (1..=8).map(|v| v as f64 / 8.0).collect()).unwrap();
        let r = gradcheck(
            move |x| x.softmax(0)?.mul(&wts)?.sum_all(),
            &x,
            1e-4,
            1e-5,
        )
        .unwrap();
        assert!(r.pass(), "max rel error {}", r.max_rel_error);
    }

    #[test]
    fn depthwise_reflect_gradient_matches_fd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let x = Tensor::param(
            &[1, 1, 6, 6],
            (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let k = Tensor::param(&[3, 3], (0..9).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .unwrap();
        let (xc, kc) = (x.clone(), k.clone());
        let r = gradcheck_params(
            move || xc.depthwise_conv2d_reflect(&kc)?.square()?.sum_all(),
            &[x, k],
            1e-4,
            1e-4,
        )
        .unwrap();
        assert!(r.pass(), "max rel error {}", r.max_rel_error);
    }

    #[test]
    fn bilinear_and_pool_gradients_match_fd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let x = Tensor::param(
            &[1, 2, 4, 4],
            (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let r = gradcheck(
            |x| {
                x.resize_bilinear(7, 7)?
                    .square()?
                    .sum_all()?
                    .add(&x.global_avg_pool()?.square()?.sum_all()?)
            },
            &x,
            1e-4,
            1e-5,
        )
        .unwrap();
        assert!(r.pass(), "max rel error {}", r.max_rel_error);
    }
}
