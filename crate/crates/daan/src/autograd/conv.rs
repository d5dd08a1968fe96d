//! Stride-1 2-D convolution via im2col + GEMM.
//!
//! All convolutions in this crate keep the spatial extent (`pad = k/2`), so
//! only stride 1 is implemented; downsampling happens in pooling layers.

use ndarray::{Array1, Array2, Array4, ArrayD, ArrayView4};

fn as4(a: &ArrayD<f32>) -> ArrayView4<'_, f32> {
    a.view().into_dimensionality().expect("conv2d expects a rank-4 tensor")
}

/// Unfold `x [B,Cin,H,W]` into `[Cin*k*k, B*H*W]` with zero padding.
/// Column order is (b, i, j) row-major so the GEMM result maps back by a
/// plain reshape per batch element.
fn im2col(x: &ArrayView4<f32>, k: usize, pad: usize) -> Array2<f32> {
    let (n, c, h, w) = x.dim();
    let mut col = Array2::<f32>::zeros((c * k * k, n * h * w));
    for b in 0..n {
        for ch in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ch * k + ki) * k + kj;
                    for i in 0..h {
                        let src_i = i as isize + ki as isize - pad as isize;
                        if src_i < 0 || src_i >= h as isize {
                            continue;
                        }
                        for j in 0..w {
                            let src_j = j as isize + kj as isize - pad as isize;
                            if src_j < 0 || src_j >= w as isize {
                                continue;
                            }
                            col[[row, (b * h + i) * w + j]] = x[[b, ch, src_i as usize, src_j as usize]];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add the column gradient back onto the (padded) input layout.
fn col2im(gcol: &Array2<f32>, n: usize, c: usize, h: usize, w: usize, k: usize, pad: usize) -> Array4<f32> {
    let mut gx = Array4::<f32>::zeros((n, c, h, w));
    for b in 0..n {
        for ch in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ch * k + ki) * k + kj;
                    for i in 0..h {
                        let src_i = i as isize + ki as isize - pad as isize;
                        if src_i < 0 || src_i >= h as isize {
                            continue;
                        }
                        for j in 0..w {
                            let src_j = j as isize + kj as isize - pad as isize;
                            if src_j < 0 || src_j >= w as isize {
                                continue;
                            }
                            gx[[b, ch, src_i as usize, src_j as usize]] += gcol[[row, (b * h + i) * w + j]];
                        }
                    }
                }
            }
        }
    }
    gx
}

pub fn conv2d_forward(x: &ArrayD<f32>, w: &ArrayD<f32>, b: &ArrayD<f32>, pad: usize) -> ArrayD<f32> {
    let xv = as4(x);
    let wv = as4(w);
    let (n, cin, h, wd) = xv.dim();
    let (cout, cin_w, k, k2) = wv.dim();
    assert_eq!(k, k2, "conv2d: non-square kernel");
    assert_eq!(cin, cin_w, "conv2d: input has {} channels, kernel expects {}", cin, cin_w);
    assert_eq!(b.len(), cout);
    let col = im2col(&xv, k, pad);
    let w2 = wv.into_shape_with_order((cout, cin * k * k)).unwrap().to_owned();
    // [Cout, Cin*k*k] x [Cin*k*k, B*H*W]
    let y2 = w2.dot(&col);
    let mut y = Array4::<f32>::zeros((n, cout, h, wd));
    let bias = b.view().into_dimensionality::<ndarray::Ix1>().unwrap();
    for bi in 0..n {
        for co in 0..cout {
            let bv = bias[co];
            for i in 0..h {
                for j in 0..wd {
                    y[[bi, co, i, j]] = y2[[co, (bi * h + i) * wd + j]] + bv;
                }
            }
        }
    }
    y.into_dyn()
}

pub fn conv2d_backward(
    x: &ArrayD<f32>,
    w: &ArrayD<f32>,
    gy: &ArrayD<f32>,
    pad: usize,
) -> (ArrayD<f32>, ArrayD<f32>, ArrayD<f32>) {
    let xv = as4(x);
    let wv = as4(w);
    let gyv = as4(gy);
    let (n, cin, h, wd) = xv.dim();
    let (cout, _, k, _) = wv.dim();

    // Regroup the output gradient as [Cout, B*H*W].
    let mut gy2 = Array2::<f32>::zeros((cout, n * h * wd));
    let mut gb = Array1::<f32>::zeros(cout);
    for bi in 0..n {
        for co in 0..cout {
            for i in 0..h {
                for j in 0..wd {
                    let g = gyv[[bi, co, i, j]];
                    gy2[[co, (bi * h + i) * wd + j]] = g;
                    gb[co] += g;
                }
            }
        }
    }

    let col = im2col(&xv, k, pad);
    let gw2 = gy2.dot(&col.t()); // [Cout, Cin*k*k]
    let gw = gw2.into_shape_with_order((cout, cin, k, k)).unwrap();

    let w2 = wv.into_shape_with_order((cout, cin * k * k)).unwrap().to_owned();
    let gcol = w2.t().dot(&gy2); // [Cin*k*k, B*H*W]
    let gx = col2im(&gcol, n, cin, h, wd, k, pad);

    (gx.into_dyn(), gw.into_dyn(), gb.into_dyn())
}
