//! Class activation maps and the attention stacks the attention
//! discriminators consume.
//!
//! A class activation map projects the pre-pooling feature map through one
//! classifier row: `A^i[h,w] = Σ_j w[i,j] · F′[j,h,w]`. Because global
//! average pooling and this projection commute, the spatial mean of `A^i`
//! equals that class's logit minus its bias — the map literally shows where
//! the logit comes from.
//!
//! The stack gathers the maps of *all* classes (one channel per class, in
//! schema order) so its shape never depends on what the model predicts, then
//! min-max normalizes each channel per sample. Without that normalization a
//! domain discriminator could separate domains by logit amplitude alone
//! instead of by where the attention lands.

use ndarray::{Array2, Array3};

use crate::autograd::{Tape, Var};
use crate::error::ModelError;

/// One class's activation map from a per-sample spatial feature map
/// `[C_f, H_f, W_f]` and that class's weight row.
pub fn compute_cam(spatial: &Array3<f32>, w_row: &[f32]) -> Result<Array2<f32>, ModelError> {
    let (c, h, w) = spatial.dim();
    if w_row.len() != c {
        return Err(ModelError::FeatureWidth { got: w_row.len(), expected: c });
    }
    let mut out = Array2::<f32>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0f64;
            for ch in 0..c {
                acc += w_row[ch] as f64 * spatial[[ch, i, j]] as f64;
            }
            out[[i, j]] = acc as f32;
        }
    }
    Ok(out)
}

/// Tape-level all-class attention stack `[B, C_a, H_f, W_f]`, channel `i`
/// min-max normalized to `[0, 1]` per sample (constant channels become 0).
///
/// `spatial` is the extractor's pre-pooling map; `weights` is the stacked
/// classifier weight matrix `[C_a, C_f]` (see `Heads::stacked_weights`).
pub fn attention_stack(tape: &mut Tape, spatial: Var, weights: Var) -> Var {
    let maps = raw_attention_stack(tape, spatial, weights);
    tape.min_max_norm(maps)
}

/// The un-normalized stack; exposed so tests can compare channel content
/// against `compute_cam` directly.
pub fn raw_attention_stack(tape: &mut Tape, spatial: Var, weights: Var) -> Var {
    tape.cam_stack(spatial, weights)
}

/// Flat index of the map's maximum (row-major first winner).
pub fn cam_argmax(map: &Array2<f32>) -> (usize, usize) {
    let (h, w) = map.dim();
    let mut best = (0, 0);
    let mut best_v = f32::NEG_INFINITY;
    for i in 0..h {
        for j in 0..w {
            if map[[i, j]] > best_v {
                best_v = map[[i, j]];
                best = (i, j);
            }
        }
    }
    best
}

/// Rescale one map to `[0, 1]`; a constant map becomes all-zeros (the same
/// convention as the batched tape normalization).
pub fn normalize_map(map: &Array2<f32>) -> Array2<f32> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in map.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi > lo {
        map.mapv(|v| (v - lo) / (hi - lo))
    } else {
        Array2::zeros(map.dim())
    }
}

/// Center pixel of a feature-map cell in image coordinates.
pub fn feature_cell_center(cell: (usize, usize), map_side: usize, image_side: usize) -> (usize, usize) {
    let stride = image_side / map_side;
    (cell.0 * stride + stride / 2, cell.1 * stride + stride / 2)
}

/// Bilinear upsample of a map to `side × side`.
pub fn upsample_bilinear(map: &Array2<f32>, side: usize) -> Array2<f32> {
    let (h, w) = map.dim();
    let mut out = Array2::<f32>::zeros((side, side));
    for i in 0..side {
        for j in 0..side {
            // Align cell centers between resolutions.
            let y = ((i as f32 + 0.5) * h as f32 / side as f32 - 0.5).clamp(0.0, (h - 1) as f32);
            let x = ((j as f32 + 0.5) * w as f32 / side as f32 - 0.5).clamp(0.0, (w - 1) as f32);
            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (y - y0 as f32, x - x0 as f32);
            let top = map[[y0, x0]] * (1.0 - fx) + map[[y0, x1]] * fx;
            let bot = map[[y1, x0]] * (1.0 - fx) + map[[y1, x1]] * fx;
            out[[i, j]] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Piecewise-linear blue→cyan→yellow→red colormap on `[0, 1]`.
pub fn heat_color(t: f32) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0);
    let seg = |center: f32| (1.5 - (4.0 * t - center).abs()).clamp(0.0, 1.0);
    [seg(3.0), seg(2.0), seg(1.0)]
}

/// Overlay a normalized map on a grayscale image: bilinear upsample,
/// colormap, then 50/50 alpha blend. Returns `[3, S, S]` in `[0, 1]`.
pub fn render_cam(map: &Array2<f32>, image: &Array3<f32>) -> Array3<f32> {
    let (_, s, _) = image.dim();
    let up = upsample_bilinear(map, s);
    let mut out = Array3::<f32>::zeros((3, s, s));
    for i in 0..s {
        for j in 0..s {
            let heat = heat_color(up[[i, j]]);
            let gray = image[[0, i, j]];
            for (c, &h) in heat.iter().enumerate() {
                out[[c, i, j]] = 0.5 * gray + 0.5 * h;
            }
        }
    }
    out
}

/// Canonical overlay file name for one sample/class.
pub fn cam_file_name(sample_id: &str, group: &str, class: &str) -> String {
    format!("{sample_id}_{group}_{class}.png")
}

/// Write an RGB overlay (`[3, S, S]`, values in `[0, 1]`) as a PNG.
pub fn save_overlay(path: &std::path::Path, overlay: &Array3<f32>) -> Result<(), crate::error::DataError> {
    let (_, h, w) = overlay.dim();
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let px = [
                (overlay[[0, i, j]].clamp(0.0, 1.0) * 255.0).round() as u8,
                (overlay[[1, i, j]].clamp(0.0, 1.0) * 255.0).round() as u8,
                (overlay[[2, i, j]].clamp(0.0, 1.0) * 255.0).round() as u8,
            ];
            img.put_pixel(j as u32, i as u32, image::Rgb(px));
        }
    }
    img.save(path).map_err(|e| crate::error::DataError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })
}
