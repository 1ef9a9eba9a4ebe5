//! Elementwise primitives, reductions, shape ops, and softmax.

use super::{numel, reduce_grad_to_shape, Tensor};
use crate::error::{Error, Result};

/// Trailing-dimension broadcast: dims are right-aligned, each pair must match
/// or one side must be 1. Missing leading dims count as 1.
pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da != db && da != 1 && db != 1 {
            return Err(Error::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
        out[i] = da.max(db);
    }
    Ok(out)
}

/// Materialize `src` (shape `from`) broadcast up to shape `to`.
pub(crate) fn expand_to(src: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    if from == to {
        return src.to_vec();
    }
    let rank = to.len();
    // Source strides in the target coordinate system, 0 on broadcast dims.
    let mut strides = vec![0usize; rank];
    let offset = rank - from.len();
    let mut acc = 1usize;
    for i in (0..from.len()).rev() {
        strides[offset + i] = if from[i] == 1 { 0 } else { acc };
        acc *= from[i];
    }
    let total = numel(to);
    let mut out = Vec::with_capacity(total);
    let inner = *to.last().unwrap_or(&1);
    let inner_stride = *strides.last().unwrap_or(&0);
    let outer_dims = rank.saturating_sub(1);
    let mut idx = vec![0usize; outer_dims];
    loop {
        let mut base = 0usize;
        for (i, s) in idx.iter().zip(&strides[..outer_dims]) {
            base += i * s;
        }
        if inner_stride == 0 {
            let v = src[base];
            out.extend(std::iter::repeat(v).take(inner));
        } else {
            out.extend_from_slice(&src[base..base + inner]);
        }
        // odometer increment over the outer dims
        let mut d = outer_dims;
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < to[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

fn binary(op: &'static str, kind: BinKind, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let out_shape = broadcast_shape(op, a.shape(), b.shape())?;
    let (av, bv);
    let (ad, bd) = if a.shape() == b.shape() {
        (a.data(), b.data())
    } else {
        av = Tensor::from_vec(&out_shape, expand_to(&a.data(), a.shape(), &out_shape))?;
        bv = Tensor::from_vec(&out_shape, expand_to(&b.data(), b.shape(), &out_shape))?;
        (av.data(), bv.data())
    };
    let data: Vec<f64> = match kind {
        BinKind::Add => ad.iter().zip(bd.iter()).map(|(x, y)| x + y).collect(),
        BinKind::Sub => ad.iter().zip(bd.iter()).map(|(x, y)| x - y).collect(),
        BinKind::Mul => ad.iter().zip(bd.iter()).map(|(x, y)| x * y).collect(),
        BinKind::Div => ad.iter().zip(bd.iter()).map(|(x, y)| x / y).collect(),
    };
    drop(ad);
    drop(bd);
    let (pa, pb) = (a.clone(), b.clone());
    let (qa, qb) = (a.clone(), b.clone());
    let out = out_shape.clone();
    let back: super::BackwardFn = match kind {
        BinKind::Add => Box::new(move |g: &[f64]| {
            pa.accumulate_grad(&reduce_grad_to_shape(g, &out, pa.shape()));
            pb.accumulate_grad(&reduce_grad_to_shape(g, &out, pb.shape()));
        }),
        BinKind::Sub => Box::new(move |g: &[f64]| {
            pa.accumulate_grad(&reduce_grad_to_shape(g, &out, pa.shape()));
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            pb.accumulate_grad(&reduce_grad_to_shape(&neg, &out, pb.shape()));
        }),
        BinKind::Mul => Box::new(move |g: &[f64]| {
            if pa.requires_grad() {
                let bx = expand_to(&pb.data(), pb.shape(), &out);
                let ga: Vec<f64> = g.iter().zip(&bx).map(|(gi, bi)| gi * bi).collect();
                pa.accumulate_grad(&reduce_grad_to_shape(&ga, &out, pa.shape()));
            }
            if pb.requires_grad() {
                let ax = expand_to(&pa.data(), pa.shape(), &out);
                let gb: Vec<f64> = g.iter().zip(&ax).map(|(gi, ai)| gi * ai).collect();
                pb.accumulate_grad(&reduce_grad_to_shape(&gb, &out, pb.shape()));
            }
        }),
        BinKind::Div => Box::new(move |g: &[f64]| {
            let bx = expand_to(&pb.data(), pb.shape(), &out);
            if pa.requires_grad() {
                let ga: Vec<f64> = g.iter().zip(&bx).map(|(gi, bi)| gi / bi).collect();
                pa.accumulate_grad(&reduce_grad_to_shape(&ga, &out, pa.shape()));
            }
            if pb.requires_grad() {
                let ax = expand_to(&pa.data(), pa.shape(), &out);
                let gb: Vec<f64> = g
                    .iter()
                    .zip(&ax)
                    .zip(&bx)
                    .map(|((gi, ai), bi)| -gi * ai / (bi * bi))
                    .collect();
                pb.accumulate_grad(&reduce_grad_to_shape(&gb, &out, pb.shape()));
            }
        }),
    };
    Tensor::from_op(op, out_shape, data, vec![qa, qb], Some(back))
}

fn unary(
    op: &'static str,
    a: &Tensor,
    f: impl Fn(f64) -> f64,
    // local derivative as a function of (input, output)
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Result<Tensor> {
    let data: Vec<f64> = a.data().iter().map(|&x| f(x)).collect();
    let p = a.clone();
    let saved = data.clone();
    let back: super::BackwardFn = Box::new(move |g: &[f64]| {
        let xd = p.data();
        let ga: Vec<f64> = g
            .iter()
            .zip(xd.iter())
            .zip(&saved)
            .map(|((gi, &xi), &yi)| gi * df(xi, yi))
            .collect();
        drop(xd);
        p.accumulate_grad(&ga);
    });
    Tensor::from_op(op, a.shape().to_vec(), data, vec![a.clone()], Some(back))
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        binary("add", BinKind::Add, self, rhs)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        binary("sub", BinKind::Sub, self, rhs)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        binary("mul", BinKind::Mul, self, rhs)
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor> {
        binary("div", BinKind::Div, self, rhs)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        unary("scale", self, |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        unary("add_scalar", self, |x| x + c, |_, _| 1.0)
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.scale(-1.0)
    }

    pub fn exp(&self) -> Result<Tensor> {
        unary("exp", self, |x| x.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Result<Tensor> {
        if self.data().iter().any(|&x| x <= 0.0) {
            return Err(Error::invalid("ln", "log of non-positive input"));
        }
        unary("ln", self, |x| x.ln(), |x, _| 1.0 / x)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        if self.data().iter().any(|&x| x < 0.0) {
            return Err(Error::invalid("sqrt", "sqrt of negative input"));
        }
        unary("sqrt", self, |x| x.sqrt(), |_, y| 0.5 / y.max(1e-300))
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        unary("sigmoid", self, sigmoid_scalar, |_, y| y * (1.0 - y))
    }

    /// |x|; subgradient at 0 taken as 0.
    pub fn abs(&self) -> Result<Tensor> {
        unary("abs", self, |x| x.abs(), |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn relu(&self) -> Result<Tensor> {
        unary("relu", self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn square(&self) -> Result<Tensor> {
        unary("square", self, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sum_all(&self) -> Result<Tensor> {
        let s: f64 = self.data().iter().sum();
        let p = self.clone();
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            p.accumulate_grad(&vec![g[0]; p.len()]);
        });
        Tensor::from_op("sum_all", vec![], vec![s], vec![self.clone()], Some(back))
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        let n = self.len() as f64;
        self.sum_all()?.scale(1.0 / n)
    }

    /// Sum along one axis, keeping it as extent 1 when `keepdim`.
    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::invalid("sum_axis", format!("axis {axis} out of range")));
        }
        let shape = self.shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = vec![0.0; outer * inner];
        {
            let src = self.data();
            for o in 0..outer {
                for m in 0..mid {
                    let base = (o * mid + m) * inner;
                    let dst = &mut data[o * inner..(o + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(&src[base..base + inner]) {
                        *d += s;
                    }
                }
            }
        }
        let mut out_shape = shape.clone();
        if keepdim {
            out_shape[axis] = 1;
        } else {
            out_shape.remove(axis);
        }
        let p = self.clone();
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; outer * mid * inner];
            for o in 0..outer {
                for m in 0..mid {
                    let base = (o * mid + m) * inner;
                    let gs = &g[o * inner..(o + 1) * inner];
                    for (d, s) in ga[base..base + inner].iter_mut().zip(gs) {
                        *d = *s;
                    }
                }
            }
            p.accumulate_grad(&ga);
        });
        Tensor::from_op("sum_axis", out_shape, data, vec![self.clone()], Some(back))
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        let n = self.shape()[axis] as f64;
        self.sum_axis(axis, keepdim)?.scale(1.0 / n)
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::invalid("softmax", format!("axis {axis} out of range")));
        }
        let shape = self.shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = vec![0.0; self.len()];
        {
            let src = self.data();
            for o in 0..outer {
                for i in 0..inner {
                    let at = |m: usize| (o * mid + m) * inner + i;
                    let mut mx = f64::NEG_INFINITY;
                    for m in 0..mid {
                        mx = mx.max(src[at(m)]);
                    }
                    let mut z = 0.0;
                    for m in 0..mid {
                        let e = (src[at(m)] - mx).exp();
                        data[at(m)] = e;
                        z += e;
                    }
                    for m in 0..mid {
                        data[at(m)] /= z;
                    }
                }
            }
        }
        let y = data.clone();
        let p = self.clone();
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            // dx = y ⊙ (g − <g, y>_axis)
            let mut ga = vec![0.0; g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |m: usize| (o * mid + m) * inner + i;
                    let mut dot = 0.0;
                    for m in 0..mid {
                        dot += g[at(m)] * y[at(m)];
                    }
                    for m in 0..mid {
                        ga[at(m)] = y[at(m)] * (g[at(m)] - dot);
                    }
                }
            }
            p.accumulate_grad(&ga);
        });
        Tensor::from_op("softmax", shape, data, vec![self.clone()], Some(back))
    }

    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor> {
        if numel(new_shape) != self.len() {
            return Err(Error::invalid(
                "reshape",
                format!("cannot reshape {:?} to {:?}", self.shape(), new_shape),
            ));
        }
        let p = self.clone();
        let back: super::BackwardFn = Box::new(move |g: &[f64]| p.accumulate_grad(g));
        Tensor::from_op(
            "reshape",
            new_shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Some(back),
        )
    }

    /// Transpose the last two axes of a rank-2 or rank-3 tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        let (batch, r, c) = match shape.len() {
            2 => (1, shape[0], shape[1]),
            3 => (shape[0], shape[1], shape[2]),
            _ => {
                return Err(Error::invalid(
                    "transpose",
                    format!("rank {} unsupported", shape.len()),
                ))
            }
        };
        let transpose_data = move |src: &[f64]| {
            let mut out = vec![0.0; src.len()];
            for b in 0..batch {
                let base = b * r * c;
                for i in 0..r {
                    for j in 0..c {
                        out[base + j * r + i] = src[base + i * c + j];
                    }
                }
            }
            out
        };
        let data = transpose_data(&self.data());
        let mut out_shape = shape.clone();
        let n = out_shape.len();
        out_shape.swap(n - 2, n - 1);
        let p = self.clone();
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            // transposing back swaps r and c
            let mut ga = vec![0.0; g.len()];
            for b in 0..batch {
                let base = b * r * c;
                for i in 0..c {
                    for j in 0..r {
                        ga[base + j * c + i] = g[base + i * r + j];
                    }
                }
            }
            p.accumulate_grad(&ga);
        });
        Tensor::from_op("transpose", out_shape, data, vec![self.clone()], Some(back))
    }

    /// Concatenate along `axis`. All other extents must agree.
    pub fn concat(tensors: &[Tensor], axis: usize) -> Result<Tensor> {
        if tensors.is_empty() {
            return Err(Error::invalid("concat", "empty input list"));
        }
        let rank = tensors[0].rank();
        if axis >= rank {
            return Err(Error::invalid("concat", format!("axis {axis} out of range")));
        }
        let mut out_shape = tensors[0].shape().to_vec();
        out_shape[axis] = 0;
        for t in tensors {
            if t.rank() != rank {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: tensors[0].shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            for (d, (&a, &b)) in out_shape.iter().zip(t.shape()).enumerate() {
                if d != axis && a != b {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        lhs: tensors[0].shape().to_vec(),
                        rhs: t.shape().to_vec(),
                    });
                }
            }
            out_shape[axis] += t.shape()[axis];
        }
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let extents: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        let total_mid: usize = extents.iter().sum();
        let mut data = vec![0.0; outer * total_mid * inner];
        for o in 0..outer {
            let mut off = 0usize;
            for (t, &ext) in tensors.iter().zip(&extents) {
                let src = t.data();
                let chunk = ext * inner;
                let s = &src[o * chunk..(o + 1) * chunk];
                data[(o * total_mid + off) * inner..(o * total_mid + off) * inner + chunk]
                    .copy_from_slice(s);
                off += ext;
            }
        }
        let parents: Vec<Tensor> = tensors.to_vec();
        let bp = parents.clone();
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            for o in 0..outer {
                let mut off = 0usize;
                for (t, &ext) in bp.iter().zip(&extents) {
                    let chunk = ext * inner;
                    if t.requires_grad() {
                        let gs = &g[(o * total_mid + off) * inner
                            ..(o * total_mid + off) * inner + chunk];
                        // accumulate this outer slab into the parent
                        let mut ga = vec![0.0; t.len()];
                        ga[o * chunk..(o + 1) * chunk].copy_from_slice(gs);
                        t.accumulate_grad(&ga);
                    }
                    off += ext;
                }
            }
        });
        Tensor::from_op("concat", out_shape, data, parents, Some(back))
    }

    /// Select row `i` of a rank-2 tensor, yielding a rank-1 tensor.
    pub fn select_row(&self, i: usize) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::invalid("select_row", "rank-2 tensor required"));
        }
        let (rows, cols) = (self.shape()[0], self.shape()[1]);
        if i >= rows {
            return Err(Error::invalid("select_row", format!("row {i} out of range")));
        }
        let data = self.data()[i * cols..(i + 1) * cols].to_vec();
        let p = self.clone();
        let back: super::BackwardFn = Box::new(move |g: &[f64]| {
            let mut ga = vec![0.0; rows * cols];
            ga[i * cols..(i + 1) * cols].copy_from_slice(g);
            p.accumulate_grad(&ga);
        });
        Tensor::from_op("select_row", vec![cols], data, vec![self.clone()], Some(back))
    }
}
