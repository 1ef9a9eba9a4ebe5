//! Spatial ops over B×C×H×W tensors: strided convolution (im2col + GEMM),
//! depthwise filtering with symmetric-reflect padding, resampling, pooling.

use super::linalg::{gemm, gemm_nt, gemm_tn};
use super::Tensor;
use crate::error::{Error, Result};

fn shape4(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let s = t.shape();
    if s.len() != 4 {
        return Err(Error::invalid(op, format!("expected rank-4 tensor, got {s:?}")));
    }
    Ok((s[0], s[1], s[2], s[3]))
}

fn conv_out_extent(op: &'static str, extent: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = extent + 2 * pad;
    if k > padded || (padded - k) % stride != 0 {
        return Err(Error::invalid(
            op,
            format!("non-integral output extent: input {extent}, kernel {k}, stride {stride}, pad {pad}"),
        ));
    }
    Ok((padded - k) / stride + 1)
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    cols: &mut [f64],
) {
    debug_assert_eq!(cols.len(), c * kh * kw * oh * ow);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for u in 0..kh {
            for v in 0..kw {
                let row = ((ch * kh + u) * kw + v) * oh * ow;
                for oi in 0..oh {
                    let ii = (oi * stride + u) as isize - pad as isize;
                    let dst = &mut cols[row + oi * ow..row + (oi + 1) * ow];
                    if ii < 0 || ii >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let srow = &plane[ii as usize * w..(ii as usize + 1) * w];
                    for (oj, d) in dst.iter_mut().enumerate() {
                        let jj = (oj * stride + v) as isize - pad as isize;
                        *d = if jj < 0 || jj >= w as isize { 0.0 } else { srow[jj as usize] };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im_add(
    cols: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    x: &mut [f64],
) {
    for ch in 0..c {
        let plane = &mut x[ch * h * w..(ch + 1) * h * w];
        for u in 0..kh {
            for v in 0..kw {
                let row = ((ch * kh + u) * kw + v) * oh * ow;
                for oi in 0..oh {
                    let ii = (oi * stride + u) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let src = &cols[row + oi * ow..row + (oi + 1) * ow];
                    let drow = &mut plane[ii as usize * w..(ii as usize + 1) * w];
                    for (oj, s) in src.iter().enumerate() {
                        let jj = (oj * stride + v) as isize - pad as isize;
                        if jj >= 0 && (jj as usize) < w {
                            drow[jj as usize] += s;
                        }
                    }
                }
            }
        }
    }
}

/// Symmetric (edge-inclusive) reflection of index `i` into [0, n).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

impl Tensor {
    /// Cross-correlation of x[B×C×H×W] with w[O×C×kh×kw], zero padding.
    pub fn conv2d(&self, weight: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        let (b, c, h, w) = shape4("conv2d", self)?;
        let (o, wc, kh, kw) = shape4("conv2d", weight)?;
        if wc != c {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        let oh = conv_out_extent("conv2d", h, kh, stride, pad)?;
        let ow = conv_out_extent("conv2d", w, kw, stride, pad)?;
        let ckk = c * kh * kw;
        let spatial = oh * ow;
        let mut data = vec![0.0; b * o * spatial];
        let mut cols = vec![0.0; ckk * spatial];
        {
            let xd = self.data();
            let wd = weight.data();
            for bi in 0..b {
                im2col(
                    &xd[bi * c * h * w..(bi + 1) * c * h * w],
                    c, h, w, kh, kw, stride, pad, oh, ow, &mut cols,
                );
                gemm(
                    o, ckk, spatial,
                    &wd, &cols,
                    &mut data[bi * o * spatial..(bi + 1) * o * spatial],
                );
            }
        }
        let (px, pw) = (self.clone(), weight.clone());
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            let mut cols = vec![0.0; ckk * spatial];
            let mut gw = if pw.requires_grad() { vec![0.0; o * ckk] } else { Vec::new() };
            let mut gx = if px.requires_grad() { vec![0.0; b * c * h * w] } else { Vec::new() };
            let xd = px.data();
            let wd = pw.data();
            let mut gcols = vec![0.0; ckk * spatial];
            for bi in 0..b {
                let gb = &g[bi * o * spatial..(bi + 1) * o * spatial];
                if pw.requires_grad() {
                    im2col(
                        &xd[bi * c * h * w..(bi + 1) * c * h * w],
                        c, h, w, kh, kw, stride, pad, oh, ow, &mut cols,
                    );
                    gemm_nt(o, spatial, ckk, gb, &cols, &mut gw);
                }
                if px.requires_grad() {
                    gcols.fill(0.0);
                    gemm_tn(o, ckk, spatial, &wd, gb, &mut gcols);
                    col2im_add(
                        &gcols,
                        c, h, w, kh, kw, stride, pad, oh, ow,
                        &mut gx[bi * c * h * w..(bi + 1) * c * h * w],
                    );
                }
            }
            drop(xd);
            drop(wd);
            if pw.requires_grad() {
                pw.accumulate_grad(&gw);
            }
            if px.requires_grad() {
                px.accumulate_grad(&gx);
            }
        });
        Tensor::from_op(
            "conv2d",
            vec![b, o, oh, ow],
            data,
            vec![self.clone(), weight.clone()],
            Some(back),
        )
    }

    /// Per-channel correlation with a single 2-D kernel under symmetric
    /// reflective padding; output shape equals input shape. Differentiable in
    /// both the image and the kernel.
    pub fn depthwise_conv2d_reflect(&self, kernel: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = shape4("depthwise_conv2d_reflect", self)?;
        if kernel.rank() != 2 {
            return Err(Error::invalid("depthwise_conv2d_reflect", "kernel must be rank 2"));
        }
        let (kh, kw) = (kernel.shape()[0], kernel.shape()[1]);
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid("depthwise_conv2d_reflect", "kernel extents must be odd"));
        }
        let (rh, rw) = (kh / 2, kw / 2);
        if rh >= h || rw >= w {
            return Err(Error::invalid(
                "depthwise_conv2d_reflect",
                format!("image {h}x{w} smaller than kernel radius ({rh},{rw})"),
            ));
        }
        // Precomputed reflection maps for padded coordinates.
        let rmap: Vec<usize> = (-(rh as isize)..(h + rh) as isize).map(|i| reflect(i, h)).collect();
        let cmap: Vec<usize> = (-(rw as isize)..(w + rw) as isize).map(|j| reflect(j, w)).collect();
        let mut data = vec![0.0; b * c * h * w];
        {
            let xd = self.data();
            let kd = kernel.data();
            for plane in 0..b * c {
                let src = &xd[plane * h * w..(plane + 1) * h * w];
                let dst = &mut data[plane * h * w..(plane + 1) * h * w];
                for i in 0..h {
                    for u in 0..kh {
                        let si = rmap[i + u] * w;
                        let krow = &kd[u * kw..(u + 1) * kw];
                        let drow = &mut dst[i * w..(i + 1) * w];
                        for (v, &kv) in krow.iter().enumerate() {
                            if kv == 0.0 {
                                continue;
                            }
                            for j in 0..w {
                                drow[j] += kv * src[si + cmap[j + v]];
                            }
                        }
                    }
                }
            }
        }
        let (px, pk) = (self.clone(), kernel.clone());
        let (rmap2, cmap2) = (rmap, cmap);
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            let xd = px.data();
            let kd = pk.data();
            let mut gx = if px.requires_grad() { vec![0.0; b * c * h * w] } else { Vec::new() };
            let mut gk = if pk.requires_grad() { vec![0.0; kh * kw] } else { Vec::new() };
            for plane in 0..b * c {
                let gsl = &g[plane * h * w..(plane + 1) * h * w];
                let src = &xd[plane * h * w..(plane + 1) * h * w];
                for i in 0..h {
                    let grow = &gsl[i * w..(i + 1) * w];
                    for u in 0..kh {
                        let si = rmap2[i + u] * w;
                        for v in 0..kw {
                            let kv = kd[u * kw + v];
                            if pk.requires_grad() {
                                let mut acc = 0.0;
                                for j in 0..w {
                                    acc += grow[j] * src[si + cmap2[j + v]];
                                }
                                gk[u * kw + v] += acc;
                            }
                            if px.requires_grad() && kv != 0.0 {
                                let gxp = &mut gx[plane * h * w..(plane + 1) * h * w];
                                for j in 0..w {
                                    gxp[si + cmap2[j + v]] += kv * grow[j];
                                }
                            }
                        }
                    }
                }
            }
            drop(xd);
            drop(kd);
            if px.requires_grad() {
                px.accumulate_grad(&gx);
            }
            if pk.requires_grad() {
                pk.accumulate_grad(&gk);
            }
        });
        Tensor::from_op(
            "depthwise_conv2d_reflect",
            vec![b, c, h, w],
            data,
            vec![self.clone(), kernel.clone()],
            Some(back),
        )
    }

    /// Nearest-neighbor ×2 upsampling.
    pub fn upsample_nearest_2x(&self) -> Result<Tensor> {
        let (b, c, h, w) = shape4("upsample_nearest_2x", self)?;
        let (oh, ow) = (2 * h, 2 * w);
        let mut data = vec![0.0; b * c * oh * ow];
        {
            let xd = self.data();
            for plane in 0..b * c {
                let src = &xd[plane * h * w..(plane + 1) * h * w];
                let dst = &mut data[plane * oh * ow..(plane + 1) * oh * ow];
                for i in 0..oh {
                    let srow = &src[(i / 2) * w..(i / 2 + 1) * w];
                    let drow = &mut dst[i * ow..(i + 1) * ow];
                    for j in 0..ow {
                        drow[j] = srow[j / 2];
                    }
                }
            }
        }
        let p = self.clone();
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; b * c * h * w];
            for plane in 0..b * c {
                let gsl = &g[plane * oh * ow..(plane + 1) * oh * ow];
                let dst = &mut ga[plane * h * w..(plane + 1) * h * w];
                for i in 0..oh {
                    let grow = &gsl[i * ow..(i + 1) * ow];
                    let drow = &mut dst[(i / 2) * w..(i / 2 + 1) * w];
                    for j in 0..ow {
                        drow[j / 2] += grow[j];
                    }
                }
            }
            p.accumulate_grad(&ga);
        });
        Tensor::from_op(
            "upsample_nearest_2x",
            vec![b, c, oh, ow],
            data,
            vec![self.clone()],
            Some(back),
        )
    }

    /// Bilinear resampling to (out_h, out_w), half-pixel centers, edges clamped.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<Tensor> {
        let (b, c, h, w) = shape4("resize_bilinear", self)?;
        if out_h == 0 || out_w == 0 {
            return Err(Error::invalid("resize_bilinear", "zero output extent"));
        }
        // (source index pair, lerp weight) per output coordinate
        let axis_map = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
            (0..n_out)
                .map(|i| {
                    let src = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5)
                        .clamp(0.0, (n_in - 1) as f64);
                    let i0 = src.floor() as usize;
                    let i1 = (i0 + 1).min(n_in - 1);
                    (i0, i1, src - i0 as f64)
                })
                .collect()
        };
        let rows = axis_map(h, out_h);
        let cols = axis_map(w, out_w);
        let mut data = vec![0.0; b * c * out_h * out_w];
        {
            let xd = self.data();
            for plane in 0..b * c {
                let src = &xd[plane * h * w..(plane + 1) * h * w];
                let dst = &mut data[plane * out_h * out_w..(plane + 1) * out_h * out_w];
                for (i, &(r0, r1, fr)) in rows.iter().enumerate() {
                    for (j, &(c0, c1, fc)) in cols.iter().enumerate() {
                        let v00 = src[r0 * w + c0];
                        let v01 = src[r0 * w + c1];
                        let v10 = src[r1 * w + c0];
                        let v11 = src[r1 * w + c1];
                        dst[i * out_w + j] = v00 * (1.0 - fr) * (1.0 - fc)
                            + v01 * (1.0 - fr) * fc
                            + v10 * fr * (1.0 - fc)
                            + v11 * fr * fc;
                    }
                }
            }
        }
        let p = self.clone();
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; b * c * h * w];
            for plane in 0..b * c {
                let gsl = &g[plane * out_h * out_w..(plane + 1) * out_h * out_w];
                let dst = &mut ga[plane * h * w..(plane + 1) * h * w];
                for (i, &(r0, r1, fr)) in rows.iter().enumerate() {
                    for (j, &(c0, c1, fc)) in cols.iter().enumerate() {
                        let gv = gsl[i * out_w + j];
                        dst[r0 * w + c0] += gv * (1.0 - fr) * (1.0 - fc);
                        dst[r0 * w + c1] += gv * (1.0 - fr) * fc;
                        dst[r1 * w + c0] += gv * fr * (1.0 - fc);
                        dst[r1 * w + c1] += gv * fr * fc;
                    }
                }
            }
            p.accumulate_grad(&ga);
        });
        Tensor::from_op(
            "resize_bilinear",
            vec![b, c, out_h, out_w],
            data,
            vec![self.clone()],
            Some(back),
        )
    }

    /// Mean over the spatial extent: [B,C,H,W] → [B,C].
    pub fn global_avg_pool(&self) -> Result<Tensor> {
        let (b, c, h, w) = shape4("global_avg_pool", self)?;
        let hw = (h * w) as f64;
        let mut data = vec![0.0; b * c];
        {
            let xd = self.data();
            for (plane, d) in data.iter_mut().enumerate() {
                *d = xd[plane * h * w..(plane + 1) * h * w].iter().sum::<f64>() / hw;
            }
        }
        let p = self.clone();
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; b * c * h * w];
            for (plane, &gv) in g.iter().enumerate() {
                ga[plane * h * w..(plane + 1) * h * w].fill(gv / hw);
            }
            p.accumulate_grad(&ga);
        });
        Tensor::from_op("global_avg_pool", vec![b, c], data, vec![self.clone()], Some(back))
    }
}
