//! Frequency-domain primitives: the learnable Gaussian low-pass filter and
//! its high-frequency residual, orthonormal 2-D DCT, and SSIM in image and
//! spectral domains.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameters of one learnable Gaussian filter. σ = exp(log_sigma) stays
/// positive by construction.
#[derive(Debug, Clone)]
pub struct GaussianFilterParams {
    pub log_sigma: Tensor,
    pub kernel_radius: usize,
}

impl GaussianFilterParams {
    /// Trainable filter initialized at the given σ.
    pub fn new(sigma_init: f64, kernel_radius: usize) -> Result<GaussianFilterParams> {
        if sigma_init <= 0.0 {
            return Err(Error::invalid("gaussian_filter", "sigma_init must be positive"));
        }
        if kernel_radius == 0 {
            return Err(Error::invalid("gaussian_filter", "kernel_radius must be >= 1"));
        }
        Ok(GaussianFilterParams {
            log_sigma: Tensor::param(&[], vec![sigma_init.ln()])?,
            kernel_radius,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.item().exp()
    }
}

/// (2r+1)² kernel ∝ exp(−(i²+j²)/(2σ²)), normalized to sum 1. Differentiable
/// with respect to log_sigma.
pub fn gaussian_kernel(params: &GaussianFilterParams) -> Result<Tensor> {
    let r = params.kernel_radius as isize;
    let k = (2 * params.kernel_radius + 1) as usize;
    let mut grid = Vec::with_capacity(k * k);
    for i in -r..=r {
        for j in -r..=r {
            grid.push(-((i * i + j * j) as f64) / 2.0);
        }
    }
    let grid = Tensor::from_vec(&[k, k], grid)?;
    // exp(grid / σ²) = exp(grid · e^{−2·log_sigma})
    let inv_var = params.log_sigma.scale(-2.0)?.exp()?;
    let weights = grid.mul(&inv_var)?.exp()?;
    let total = weights.sum_all()?;
    weights.div(&total)
}

/// Depthwise Gaussian smoothing with symmetric-reflect boundaries.
pub fn low_pass(x: &Tensor, params: &GaussianFilterParams) -> Result<Tensor> {
    let kernel = gaussian_kernel(params)?;
    x.depthwise_conv2d_reflect(&kernel)
}

/// x − low_pass(x): edges and fine texture.
pub fn high_freq_residual(x: &Tensor, params: &GaussianFilterParams) -> Result<Tensor> {
    let low = low_pass(x, params)?;
    x.sub(&low)
}

/// Orthonormal DCT-II basis: row k is c_k·cos(π(2n+1)k/(2N)).
fn dct_basis(n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    let norm0 = (1.0 / n as f64).sqrt();
    let norm = (2.0 / n as f64).sqrt();
    for k in 0..n {
        let c = if k == 0 { norm0 } else { norm };
        for x in 0..n {
            d[k * n + x] =
                c * (std::f64::consts::PI * (2.0 * x as f64 + 1.0) * k as f64 / (2.0 * n as f64))
                    .cos();
        }
    }
    d
}

fn dct2_apply(x: &Tensor, op: &'static str, inverse: bool) -> Result<Tensor> {
    let shape = x.shape().to_vec();
    let (planes, h, w) = match shape.len() {
        2 => (1, shape[0], shape[1]),
        4 => (shape[0] * shape[1], shape[2], shape[3]),
        _ => return Err(Error::invalid(op, format!("rank {} unsupported", shape.len()))),
    };
    let dh = dct_basis(h);
    let dw = dct_basis(w);
    use crate::tensor::linalg::{gemm, gemm_nt, gemm_tn};
    // forward: Y = Dh · X · Dwᵀ ; inverse: Y = Dhᵀ · X · Dw
    let apply = move |src: &[f64], dst: &mut [f64], inv: bool, dh: &[f64], dw: &[f64],
                      planes: usize, h: usize, w: usize| {
        let mut tmp = vec![0.0; h * w];
        for p in 0..planes {
            let xs = &src[p * h * w..(p + 1) * h * w];
            let ys = &mut dst[p * h * w..(p + 1) * h * w];
            tmp.fill(0.0);
            if !inv {
                gemm(h, h, w, dh, xs, &mut tmp); // Dh·X
                gemm_nt(h, w, w, &tmp, dw, ys); // ·Dwᵀ
            } else {
                gemm_tn(h, h, w, dh, xs, &mut tmp); // Dhᵀ·X
                gemm(h, w, w, &tmp, dw, ys); // ·Dw
            }
        }
    };
    let mut data = vec![0.0; x.len()];
    apply(&x.data(), &mut data, inverse, &dh, &dw, planes, h, w);
    let p = x.clone();
    let back: Box<dyn Fn(&[f64])> = Box::new(move |g: &[f64]| {
        // adjoint of an orthonormal transform is its inverse
        let mut ga = vec![0.0; g.len()];
        apply(g, &mut ga, !inverse, &dh, &dw, planes, h, w);
        p.accumulate_grad(&ga);
    });
    Tensor::from_op(op, shape, data, vec![x.clone()], Some(back))
}

/// Orthonormal type-II 2-D DCT along the last two axes (rank 2 or 4).
pub fn dct2(x: &Tensor) -> Result<Tensor> {
    dct2_apply(x, "dct2", false)
}

/// Inverse of [`dct2`].
pub fn idct2(x: &Tensor) -> Result<Tensor> {
    dct2_apply(x, "idct2", true)
}

#[derive(Debug, Clone)]
pub struct SsimParams {
    pub window_radius: usize,
    pub window_sigma: f64,
    pub c1: f64,
    pub c2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    /// Standard constants for images normalized to [0,1].
    fn default() -> Self {
        let r = 1.0;
        SsimParams {
            window_radius: 3,
            window_sigma: 1.5,
            c1: (0.01 * r) * (0.01 * r),
            c2: (0.03 * r) * (0.03 * r),
            dynamic_range: r,
        }
    }
}

impl SsimParams {
    fn window(&self) -> Result<Tensor> {
        let r = self.window_radius as isize;
        let k = 2 * self.window_radius + 1;
        let s2 = 2.0 * self.window_sigma * self.window_sigma;
        let mut w = Vec::with_capacity(k * k);
        for i in -r..=r {
            for j in -r..=r {
                w.push((-((i * i + j * j) as f64) / s2).exp());
            }
        }
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        Tensor::from_vec(&[k, k], w)
    }
}

fn as_4d(t: &Tensor, op: &'static str) -> Result<Tensor> {
    match t.rank() {
        2 => t.reshape(&[1, 1, t.shape()[0], t.shape()[1]]),
        4 => t.reshape(t.shape().to_vec().as_slice()),
        _ => Err(Error::invalid(op, format!("rank {} unsupported", t.rank()))),
    }
}

/// Mean Gaussian-windowed SSIM between same-shaped images; differentiable.
pub fn ssim(a: &Tensor, b: &Tensor, params: &SsimParams) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "ssim",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let a4 = as_4d(a, "ssim")?;
    let b4 = as_4d(b, "ssim")?;
    let w = params.window()?;
    let mu_a = a4.depthwise_conv2d_reflect(&w)?;
    let mu_b = b4.depthwise_conv2d_reflect(&w)?;
    let var_a = a4.square()?.depthwise_conv2d_reflect(&w)?.sub(&mu_a.square()?)?;
    let var_b = b4.square()?.depthwise_conv2d_reflect(&w)?.sub(&mu_b.square()?)?;
    let cov = a4.mul(&b4)?.depthwise_conv2d_reflect(&w)?.sub(&mu_a.mul(&mu_b)?)?;
    let c1 = params.c1;
    let c2 = params.c2;
    let num = mu_a
        .mul(&mu_b)?
        .scale(2.0)?
        .add_scalar(c1)?
        .mul(&cov.scale(2.0)?.add_scalar(c2)?)?;
    let den = mu_a
        .square()?
        .add(&mu_b.square()?)?
        .add_scalar(c1)?
        .mul(&var_a.add(&var_b)?.add_scalar(c2)?)?;
    num.div(&den)?.mean_all()
}

/// 1 − SSIM of absolute DCT coefficient maps; 0 iff spectra match.
pub fn freq_ssim_loss(xhat: &Tensor, x: &Tensor, params: &SsimParams) -> Result<Tensor> {
    if xhat.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            op: "freq_ssim_loss",
            lhs: xhat.shape().to_vec(),
            rhs: x.shape().to_vec(),
        });
    }
    let spec_hat = dct2(xhat)?.abs()?;
    let spec = dct2(x)?.abs()?;
    let s = ssim(&spec_hat, &spec, params)?;
    s.neg()?.add_scalar(1.0)
}
