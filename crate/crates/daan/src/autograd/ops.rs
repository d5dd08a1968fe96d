//! Forward operations and their backward rules.

use ndarray::{Array1, Array2, Array4, ArrayD, Axis, IxDyn};

use super::conv;
use super::{accumulate, LossValue, Tape, Var};
use crate::nn::ParamId;

/// Probabilities are kept this far inside (0,1) before any `log`.
pub const SCORE_EPS: f32 = 1e-7;

/// One recorded operation. Saved fields are whatever backward needs beyond
/// the node values themselves.
pub enum Op {
    Leaf { param: Option<ParamId> },
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    Scale(Var, f32),
    /// `x [B,C] * w^T` for `w [K,C]`, plus bias `b [K]` broadcast per row.
    Affine { x: Var, w: Var, b: Var },
    Conv2d { x: Var, w: Var, b: Var, pad: usize },
    AvgPool2 { x: Var },
    GlobalAvgPool { x: Var },
    Relu { x: Var },
    LeakyRelu { x: Var, slope: f32 },
    Sigmoid { x: Var },
    Concat { xs: Vec<Var>, axis: usize },
    /// CAM stack: `y[b,a,h,w] = sum_j w[a,j] * x[b,j,h,w]`.
    CamStack { spatial: Var, w: Var },
    /// Per-(sample, channel) min-max normalization over the spatial extent.
    MinMaxNorm { x: Var },
    SoftmaxRows { x: Var },
    CrossEntropyRows { logits: Var, targets: Vec<usize> },
    /// `-mean(log s)` — the "fool the discriminator" half of a GAN pair.
    BceTowardOne { s: Var },
    /// `-0.5 * (mean log r + mean log(1 - f))` — the discriminator half.
    BceRealFake { real: Var, fake: Var },
    /// Elementwise binary cross-entropy of scores against fixed 0/1 targets.
    BceBinary { s: Var, targets: Vec<u8> },
    /// Mean over rows of the Euclidean norm of `a - b`.
    RowNormDiffMean { a: Var, b: Var },
    L1Mean { a: Var, b: Var },
    MeanAll { x: Var },
}

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MulElem(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f32) -> Var {
        let v = self.value(a).mapv(|x| x * factor);
        self.push(v, Op::Scale(a, factor))
    }

    /// Fully-connected head: rows of `x` are samples, rows of `w` are output
    /// classes. Accumulates in f64 so logits agree with any reordered sum to
    /// well below 1e-5.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xv = as2(self.value(x));
        let wv = as2(self.value(w));
        let bv = as1(self.value(b));
        let (n, c) = (xv.nrows(), xv.ncols());
        let k = wv.nrows();
        assert_eq!(wv.ncols(), c, "affine: weight width {} != input width {}", wv.ncols(), c);
        assert_eq!(bv.len(), k);
        let mut y = Array2::<f32>::zeros((n, k));
        for i in 0..n {
            for j in 0..k {
                let mut acc = bv[j] as f64;
                for l in 0..c {
                    acc += xv[[i, l]] as f64 * wv[[j, l]] as f64;
                }
                y[[i, j]] = acc as f32;
            }
        }
        self.push(y.into_dyn(), Op::Affine { x, w, b })
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, pad: usize) -> Var {
        let y = conv::conv2d_forward(self.value(x), self.value(w), self.value(b), pad);
        self.push(y, Op::Conv2d { x, w, b, pad })
    }

    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let xv = as4(self.value(x));
        let (n, c, h, w) = xv.dim();
        assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even spatial dims, got {}x{}", h, w);
        let mut y = Array4::<f32>::zeros((n, c, h / 2, w / 2));
        for b in 0..n {
            for ch in 0..c {
                for i in 0..h / 2 {
                    for j in 0..w / 2 {
                        let s = xv[[b, ch, 2 * i, 2 * j]]
                            + xv[[b, ch, 2 * i, 2 * j + 1]]
                            + xv[[b, ch, 2 * i + 1, 2 * j]]
                            + xv[[b, ch, 2 * i + 1, 2 * j + 1]];
                        y[[b, ch, i, j]] = s * 0.25;
                    }
                }
            }
        }
        self.push(y.into_dyn(), Op::AvgPool2 { x })
    }

    /// Spatial mean per channel, f64-accumulated: this is the pooling that
    /// collapses the spatial feature map into the pooled feature vector.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let xv = as4(self.value(x));
        let (n, c, h, w) = xv.dim();
        let mut y = Array2::<f32>::zeros((n, c));
        for b in 0..n {
            for ch in 0..c {
                let mut acc = 0.0f64;
                for i in 0..h {
                    for j in 0..w {
                        acc += xv[[b, ch, i, j]] as f64;
                    }
                }
                y[[b, ch]] = (acc / (h * w) as f64) as f32;
            }
        }
        self.push(y.into_dyn(), Op::GlobalAvgPool { x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|a| if a > 0.0 { a } else { 0.0 });
        self.push(v, Op::Relu { x })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        let v = self.value(x).mapv(|a| if a > 0.0 { a } else { slope * a });
        self.push(v, Op::LeakyRelu { x, slope })
    }

    /// Logistic sigmoid clamped into `[SCORE_EPS, 1 - SCORE_EPS]` so that
    /// downstream logs stay finite.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self
            .value(x)
            .mapv(|a| (1.0 / (1.0 + (-a as f64).exp())).clamp(SCORE_EPS as f64, 1.0 - SCORE_EPS as f64) as f32);
        self.push(v, Op::Sigmoid { x })
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Var {
        assert!(!xs.is_empty());
        let views: Vec<_> = xs.iter().map(|&v| self.value(v).view()).collect();
        let y = ndarray::concatenate(Axis(axis), &views).expect("concat: incompatible shapes");
        self.push(y, Op::Concat { xs: xs.to_vec(), axis })
    }

    /// Class activation maps for every class at once: channel `a` of the
    /// output is the spatial feature map re-weighted by class `a`'s head row.
    pub fn cam_stack(&mut self, spatial: Var, w: Var) -> Var {
        let xv = as4(self.value(spatial));
        let wv = as2(self.value(w));
        let (n, c, h, wd) = xv.dim();
        let ca = wv.nrows();
        assert_eq!(wv.ncols(), c, "cam_stack: head width {} != channels {}", wv.ncols(), c);
        let mut y = Array4::<f32>::zeros((n, ca, h, wd));
        for b in 0..n {
            for a in 0..ca {
                for i in 0..h {
                    for j in 0..wd {
                        let mut acc = 0.0f64;
                        for ch in 0..c {
                            acc += wv[[a, ch]] as f64 * xv[[b, ch, i, j]] as f64;
                        }
                        y[[b, a, i, j]] = acc as f32;
                    }
                }
            }
        }
        self.push(y.into_dyn(), Op::CamStack { spatial, w })
    }

    /// Rescale each (sample, channel) plane to [0,1]; constant planes map to
    /// all-zeros.
    pub fn min_max_norm(&mut self, x: Var) -> Var {
        let xv = as4(self.value(x));
        let (n, c, h, w) = xv.dim();
        let mut y = Array4::<f32>::zeros((n, c, h, w));
        for b in 0..n {
            for ch in 0..c {
                let plane = xv.index_axis(Axis(0), b);
                let plane = plane.index_axis(Axis(0), ch);
                let mut lo = f32::INFINITY;
                let mut hi = f32::NEG_INFINITY;
                for &v in plane.iter() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                if hi > lo {
                    let inv = 1.0 / (hi - lo);
                    for i in 0..h {
                        for j in 0..w {
                            y[[b, ch, i, j]] = (xv[[b, ch, i, j]] - lo) * inv;
                        }
                    }
                }
            }
        }
        self.push(y.into_dyn(), Op::MinMaxNorm { x })
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = as2(self.value(x));
        let (n, k) = xv.dim();
        let mut y = Array2::<f32>::zeros((n, k));
        for i in 0..n {
            let row = xv.row(i);
            let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            let mut z = 0.0f64;
            for j in 0..k {
                z += (xv[[i, j]] as f64 - m).exp();
            }
            for j in 0..k {
                y[[i, j]] = ((xv[[i, j]] as f64 - m).exp() / z) as f32;
            }
        }
        self.push(y.into_dyn(), Op::SoftmaxRows { x })
    }

    /// Mean over rows of softmax cross-entropy against integer targets.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> LossValue {
        let xv = as2(self.value(logits));
        let (n, k) = xv.dim();
        assert_eq!(targets.len(), n, "cross_entropy: {} targets for {} rows", targets.len(), n);
        let mut total = 0.0f64;
        for (i, &t) in targets.iter().enumerate() {
            assert!(t < k, "cross_entropy: target {} out of range for {} classes", t, k);
            let row = xv.row(i);
            let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            let mut z = 0.0f64;
            for j in 0..k {
                z += (xv[[i, j]] as f64 - m).exp();
            }
            total += m + z.ln() - xv[[i, t]] as f64;
        }
        let value = total / n as f64;
        let var = self.push(
            ArrayD::from_elem(IxDyn(&[]), value as f32),
            Op::CrossEntropyRows { logits, targets: targets.to_vec() },
        );
        LossValue { var, value }
    }

    pub fn bce_toward_one(&mut self, s: Var) -> LossValue {
        let sv = self.value(s);
        let n = sv.len() as f64;
        let mut total = 0.0f64;
        for &v in sv.iter() {
            total -= (v.max(SCORE_EPS) as f64).ln();
        }
        let value = total / n;
        let var = self.push(ArrayD::from_elem(IxDyn(&[]), value as f32), Op::BceTowardOne { s });
        LossValue { var, value }
    }

    pub fn bce_real_fake(&mut self, real: Var, fake: Var) -> LossValue {
        let rv = self.value(real);
        let fv = self.value(fake);
        let mut real_term = 0.0f64;
        for &v in rv.iter() {
            real_term -= (v.max(SCORE_EPS) as f64).ln();
        }
        real_term /= rv.len() as f64;
        let mut fake_term = 0.0f64;
        for &v in fv.iter() {
            fake_term -= ((1.0 - v).max(SCORE_EPS) as f64).ln();
        }
        fake_term /= fv.len() as f64;
        let value = 0.5 * (real_term + fake_term);
        let var = self.push(ArrayD::from_elem(IxDyn(&[]), value as f32), Op::BceRealFake { real, fake });
        LossValue { var, value }
    }

    /// Mean binary cross-entropy of sigmoid scores against 0/1 targets,
    /// flattened in the score tensor's iteration order.
    pub fn bce_binary(&mut self, s: Var, targets: &[u8]) -> LossValue {
        let sv = self.value(s);
        assert_eq!(sv.len(), targets.len(), "one target bit per score");
        let mut total = 0.0f64;
        for (&v, &t) in sv.iter().zip(targets.iter()) {
            let p = if t == 1 { v } else { 1.0 - v };
            total -= (p.max(SCORE_EPS) as f64).ln();
        }
        let value = total / targets.len().max(1) as f64;
        let var = self.push(
            ArrayD::from_elem(IxDyn(&[]), value as f32),
            Op::BceBinary { s, targets: targets.to_vec() },
        );
        LossValue { var, value }
    }

    pub fn row_norm_diff_mean(&mut self, a: Var, b: Var) -> LossValue {
        let av = as2(self.value(a));
        let bv = as2(self.value(b));
        assert_eq!(av.dim(), bv.dim(), "row_norm_diff: shape mismatch");
        let (n, k) = av.dim();
        let mut total = 0.0f64;
        for i in 0..n {
            let mut sq = 0.0f64;
            for j in 0..k {
                let d = av[[i, j]] as f64 - bv[[i, j]] as f64;
                sq += d * d;
            }
            total += sq.sqrt();
        }
        let value = total / n as f64;
        let var = self.push(ArrayD::from_elem(IxDyn(&[]), value as f32), Op::RowNormDiffMean { a, b });
        LossValue { var, value }
    }

    pub fn l1_mean(&mut self, a: Var, b: Var) -> LossValue {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.shape(), bv.shape(), "l1_mean: shape mismatch");
        let mut total = 0.0f64;
        for (&x, &y) in av.iter().zip(bv.iter()) {
            total += (x as f64 - y as f64).abs();
        }
        let value = total / av.len() as f64;
        let var = self.push(ArrayD::from_elem(IxDyn(&[]), value as f32), Op::L1Mean { a, b });
        LossValue { var, value }
    }

    pub fn mean_all(&mut self, x: Var) -> LossValue {
        let xv = self.value(x);
        let value = xv.iter().map(|&v| v as f64).sum::<f64>() / xv.len() as f64;
        let var = self.push(ArrayD::from_elem(IxDyn(&[]), value as f32), Op::MeanAll { x });
        LossValue { var, value }
    }

    /// Sum of two scalar losses, tracking the exact f64 value.
    pub fn loss_add(&mut self, a: LossValue, b: LossValue) -> LossValue {
        LossValue { var: self.add(a.var, b.var), value: a.value + b.value }
    }

    pub fn loss_scale(&mut self, a: LossValue, factor: f64) -> LossValue {
        LossValue { var: self.scale(a.var, factor as f32), value: a.value * factor }
    }

    pub fn loss_zero(&mut self) -> LossValue {
        let var = self.constant(ArrayD::from_elem(IxDyn(&[]), 0.0f32));
        LossValue { var, value: 0.0 }
    }
}

pub(super) fn backward_step(tape: &Tape, idx: usize, grad: &ArrayD<f32>, grads: &mut Vec<Option<ArrayD<f32>>>) {
    match &tape.nodes[idx].op {
        Op::Leaf { .. } => {}
        Op::Add(a, b) => {
            accumulate(&mut grads[a.0], grad.clone());
            accumulate(&mut grads[b.0], grad.clone());
        }
        Op::Sub(a, b) => {
            accumulate(&mut grads[a.0], grad.clone());
            accumulate(&mut grads[b.0], grad.mapv(|g| -g));
        }
        Op::MulElem(a, b) => {
            let ga = grad * tape.value(*b);
            let gb = grad * tape.value(*a);
            accumulate(&mut grads[a.0], ga);
            accumulate(&mut grads[b.0], gb);
        }
        Op::Scale(a, factor) => {
            accumulate(&mut grads[a.0], grad.mapv(|g| g * factor));
        }
        Op::Affine { x, w, b } => {
            let g = as2(grad);
            let xv = as2(tape.value(*x));
            let wv = as2(tape.value(*w));
            let (n, c) = (xv.nrows(), xv.ncols());
            let k = wv.nrows();
            let mut gx = Array2::<f32>::zeros((n, c));
            let mut gw = Array2::<f32>::zeros((k, c));
            let mut gb = Array1::<f32>::zeros(k);
            for i in 0..n {
                for j in 0..k {
                    let go = g[[i, j]];
                    gb[j] += go;
                    for l in 0..c {
                        gx[[i, l]] += go * wv[[j, l]];
                        gw[[j, l]] += go * xv[[i, l]];
                    }
                }
            }
            accumulate(&mut grads[x.0], gx.into_dyn());
            accumulate(&mut grads[w.0], gw.into_dyn());
            accumulate(&mut grads[b.0], gb.into_dyn());
        }
        Op::Conv2d { x, w, b, pad } => {
            let (gx, gw, gb) = conv::conv2d_backward(tape.value(*x), tape.value(*w), grad, *pad);
            accumulate(&mut grads[x.0], gx);
            accumulate(&mut grads[w.0], gw);
            accumulate(&mut grads[b.0], gb);
        }
        Op::AvgPool2 { x } => {
            let g = as4(grad);
            let (n, c, h2, w2) = g.dim();
            let mut gx = Array4::<f32>::zeros((n, c, h2 * 2, w2 * 2));
            for b in 0..n {
                for ch in 0..c {
                    for i in 0..h2 {
                        for j in 0..w2 {
                            let v = g[[b, ch, i, j]] * 0.25;
                            gx[[b, ch, 2 * i, 2 * j]] = v;
                            gx[[b, ch, 2 * i, 2 * j + 1]] = v;
                            gx[[b, ch, 2 * i + 1, 2 * j]] = v;
                            gx[[b, ch, 2 * i + 1, 2 * j + 1]] = v;
                        }
                    }
                }
            }
            accumulate(&mut grads[x.0], gx.into_dyn());
        }
        Op::GlobalAvgPool { x } => {
            let g = as2(grad);
            let xv = as4(tape.value(*x));
            let (n, c, h, w) = xv.dim();
            let inv = 1.0 / (h * w) as f32;
            let mut gx = Array4::<f32>::zeros((n, c, h, w));
            for b in 0..n {
                for ch in 0..c {
                    let v = g[[b, ch]] * inv;
                    for i in 0..h {
                        for j in 0..w {
                            gx[[b, ch, i, j]] = v;
                        }
                    }
                }
            }
            accumulate(&mut grads[x.0], gx.into_dyn());
        }
        Op::Relu { x } => {
            let mut gx = grad.clone();
            gx.zip_mut_with(tape.value(*x), |g, &xv| {
                if xv <= 0.0 {
                    *g = 0.0;
                }
            });
            accumulate(&mut grads[x.0], gx);
        }
        Op::LeakyRelu { x, slope } => {
            let slope = *slope;
            let mut gx = grad.clone();
            gx.zip_mut_with(tape.value(*x), |g, &xv| {
                if xv <= 0.0 {
                    *g *= slope;
                }
            });
            accumulate(&mut grads[x.0], gx);
        }
        Op::Sigmoid { x } => {
            let s = &tape.nodes[idx].value;
            let mut gx = grad.clone();
            gx.zip_mut_with(s, |g, &sv| *g *= sv * (1.0 - sv));
            accumulate(&mut grads[x.0], gx);
        }
        Op::Concat { xs, axis } => {
            let mut offset = 0;
            for &xv in xs {
                let len = tape.value(xv).shape()[*axis];
                let piece = grad
                    .slice_axis(Axis(*axis), ndarray::Slice::from(offset..offset + len))
                    .to_owned();
                accumulate(&mut grads[xv.0], piece.into_dyn());
                offset += len;
            }
        }
        Op::CamStack { spatial, w } => {
            let g = as4(grad);
            let xv = as4(tape.value(*spatial));
            let wv = as2(tape.value(*w));
            let (n, c, h, wd) = xv.dim();
            let ca = wv.nrows();
            let mut gx = Array4::<f32>::zeros((n, c, h, wd));
            let mut gw = Array2::<f32>::zeros((ca, c));
            for b in 0..n {
                for a in 0..ca {
                    for i in 0..h {
                        for j in 0..wd {
                            let go = g[[b, a, i, j]];
                            if go == 0.0 {
                                continue;
                            }
                            for ch in 0..c {
                                gx[[b, ch, i, j]] += go * wv[[a, ch]];
                                gw[[a, ch]] += go * xv[[b, ch, i, j]];
                            }
                        }
                    }
                }
            }
            accumulate(&mut grads[spatial.0], gx.into_dyn());
            accumulate(&mut grads[w.0], gw.into_dyn());
        }
        Op::MinMaxNorm { x } => {
            let g = as4(grad);
            let xv = as4(tape.value(*x));
            let yv = as4(&tape.nodes[idx].value);
            let (n, c, h, w) = xv.dim();
            let mut gx = Array4::<f32>::zeros((n, c, h, w));
            for b in 0..n {
                for ch in 0..c {
                    // Recover extremes; first occurrence defines the subgradient.
                    let mut lo = f32::INFINITY;
                    let mut hi = f32::NEG_INFINITY;
                    let mut lo_pos = (0, 0);
                    let mut hi_pos = (0, 0);
                    for i in 0..h {
                        for j in 0..w {
                            let v = xv[[b, ch, i, j]];
                            if v < lo {
                                lo = v;
                                lo_pos = (i, j);
                            }
                            if v > hi {
                                hi = v;
                                hi_pos = (i, j);
                            }
                        }
                    }
                    if hi <= lo {
                        continue; // constant plane: output is constant zero
                    }
                    let inv = 1.0 / (hi - lo);
                    let mut g_sum = 0.0f32;
                    let mut gy_sum = 0.0f32;
                    for i in 0..h {
                        for j in 0..w {
                            let go = g[[b, ch, i, j]];
                            gx[[b, ch, i, j]] += go * inv;
                            g_sum += go;
                            gy_sum += go * yv[[b, ch, i, j]];
                        }
                    }
                    gx[[b, ch, lo_pos.0, lo_pos.1]] += (gy_sum - g_sum) * inv;
                    gx[[b, ch, hi_pos.0, hi_pos.1]] -= gy_sum * inv;
                }
            }
            accumulate(&mut grads[x.0], gx.into_dyn());
        }
        Op::SoftmaxRows { x } => {
            let g = as2(grad);
            let y = as2(&tape.nodes[idx].value);
            let (n, k) = y.dim();
            let mut gx = Array2::<f32>::zeros((n, k));
            for i in 0..n {
                let mut dot = 0.0f32;
                for j in 0..k {
                    dot += g[[i, j]] * y[[i, j]];
                }
                for j in 0..k {
                    gx[[i, j]] = (g[[i, j]] - dot) * y[[i, j]];
                }
            }
            accumulate(&mut grads[x.0], gx.into_dyn());
        }
        Op::CrossEntropyRows { logits, targets } => {
            let go = grad[IxDyn(&[])];
            let xv = as2(tape.value(*logits));
            let (n, k) = xv.dim();
            let mut gx = Array2::<f32>::zeros((n, k));
            let scale = go / n as f32;
            for (i, &t) in targets.iter().enumerate() {
                let row = xv.row(i);
                let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
                let mut z = 0.0f64;
                for j in 0..k {
                    z += (xv[[i, j]] as f64 - m).exp();
                }
                for j in 0..k {
                    let p = ((xv[[i, j]] as f64 - m).exp() / z) as f32;
                    gx[[i, j]] = scale * (p - if j == t { 1.0 } else { 0.0 });
                }
            }
            accumulate(&mut grads[logits.0], gx.into_dyn());
        }
        Op::BceTowardOne { s } => {
            let go = grad[IxDyn(&[])];
            let sv = tape.value(*s);
            let scale = go / sv.len() as f32;
            let gs = sv.mapv(|v| if v > SCORE_EPS { -scale / v } else { 0.0 });
            accumulate(&mut grads[s.0], gs);
        }
        Op::BceRealFake { real, fake } => {
            let go = grad[IxDyn(&[])];
            let rv = tape.value(*real);
            let fv = tape.value(*fake);
            let rscale = 0.5 * go / rv.len() as f32;
            let fscale = 0.5 * go / fv.len() as f32;
            let gr = rv.mapv(|v| if v > SCORE_EPS { -rscale / v } else { 0.0 });
            let gf = fv.mapv(|v| if 1.0 - v > SCORE_EPS { fscale / (1.0 - v) } else { 0.0 });
            accumulate(&mut grads[real.0], gr);
            accumulate(&mut grads[fake.0], gf);
        }
        Op::BceBinary { s, targets } => {
            let go = grad[IxDyn(&[])];
            let sv = tape.value(*s);
            let scale = go / targets.len().max(1) as f32;
            let mut gs = sv.clone();
            for (g, (&v, &t)) in gs.iter_mut().zip(sv.iter().zip(targets.iter())) {
                *g = if t == 1 {
                    if v > SCORE_EPS {
                        -scale / v
                    } else {
                        0.0
                    }
                } else if 1.0 - v > SCORE_EPS {
                    scale / (1.0 - v)
                } else {
                    0.0
                };
            }
            accumulate(&mut grads[s.0], gs);
        }
        Op::RowNormDiffMean { a, b } => {
            let go = grad[IxDyn(&[])];
            let av = as2(tape.value(*a));
            let bv = as2(tape.value(*b));
            let (n, k) = av.dim();
            let mut ga = Array2::<f32>::zeros((n, k));
            for i in 0..n {
                let mut sq = 0.0f64;
                for j in 0..k {
                    let d = av[[i, j]] as f64 - bv[[i, j]] as f64;
                    sq += d * d;
                }
                let norm = sq.sqrt();
                if norm > 0.0 {
                    let scale = go as f64 / (n as f64 * norm);
                    for j in 0..k {
                        ga[[i, j]] = ((av[[i, j]] as f64 - bv[[i, j]] as f64) * scale) as f32;
                    }
                }
            }
            let gb = ga.mapv(|v| -v);
            accumulate(&mut grads[a.0], ga.into_dyn());
            accumulate(&mut grads[b.0], gb.into_dyn());
        }
        Op::L1Mean { a, b } => {
            let go = grad[IxDyn(&[])];
            let av = tape.value(*a);
            let bv = tape.value(*b);
            let scale = go / av.len() as f32;
            let mut ga = av.clone();
            ga.zip_mut_with(bv, |x, &y| {
                *x = if *x > y {
                    scale
                } else if *x < y {
                    -scale
                } else {
                    0.0
                }
            });
            let gb = ga.mapv(|v| -v);
            accumulate(&mut grads[a.0], ga);
            accumulate(&mut grads[b.0], gb);
        }
        Op::MeanAll { x } => {
            let go = grad[IxDyn(&[])];
            let xv = tape.value(*x);
            let scale = go / xv.len() as f32;
            accumulate(&mut grads[x.0], ArrayD::from_elem(xv.raw_dim(), scale));
        }
    }
}

fn as2(a: &ArrayD<f32>) -> ndarray::ArrayView2<'_, f32> {
    a.view().into_dimensionality().expect("expected a rank-2 tensor")
}

fn as1(a: &ArrayD<f32>) -> ndarray::ArrayView1<'_, f32> {
    a.view().into_dimensionality().expect("expected a rank-1 tensor")
}

fn as4(a: &ArrayD<f32>) -> ndarray::ArrayView4<'_, f32> {
    a.view().into_dimensionality().expect("expected a rank-4 tensor")
}
