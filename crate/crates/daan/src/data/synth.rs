//! Procedural two-domain shapes dataset with an exact oracle translator.
//!
//! Every sample is a grayscale rendering of one geometric figure whose
//! discrete factors map one-to-one onto schema groups:
//!
//! * `shape`: circle / square / triangle — the silhouette
//! * `size`: small / large — the figure's radius
//! * `stroke`: thin / thick — the outline band width
//! * `dot`: present or absent — a small bright disk inside the figure
//!
//! The renderer takes a continuous `style` in `[0, 1]`. Style 0 is the
//! source look: filled figures with additive texture noise. Style 1 is the
//! full target look: outline-only, noise-free, with extra per-sample
//! geometry jitter. Target images are rendered at `style = style_gap`, so a
//! gap of 0 makes the domains identically distributed.
//!
//! Because every random draw is keyed by `(seed, stream, domain, index)`
//! rather than consumed from shared state, an image can be re-rendered at
//! any style from its id alone. That is the analytic translator: an exact
//! style flip with semantics untouched, which makes it a ground-truth
//! stand-in for a learned image-to-image translator in tests.

use ndarray::Array3;
use rand::Rng;

use super::{Dataset, Domain, Sample, Split};
use crate::error::DataError;
use crate::nn::rng_from;
use crate::schema::{parse_schema, AttributeSchema};

/// Translation direction between the two domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    SourceToTarget,
    TargetToSource,
}

/// Default schema text for the shapes dataset.
pub const SHAPES_SCHEMA: &str = "\
shape: circle, square, triangle
size: small, large
stroke: thin, thick
dot: dot
";

/// Member counts the renderer encodes, in group order.
const GROUP_SIZES: [usize; 4] = [3, 2, 2, 1];

/// Configuration of the synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Square image side in pixels (≥ 16).
    pub image_size: usize,
    /// Training samples per domain.
    pub n_per_domain: usize,
    /// Held-out samples per domain, drawn from the same streams after the
    /// training indices so ids never collide.
    pub n_test_per_domain: usize,
    /// Style divergence between the domains, 0 (none) to 1 (full).
    pub style_gap: f32,
    pub seed: u64,
    /// Schema text naming the four factor groups (sizes must be 3, 2, 2, 1).
    pub group_spec: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            image_size: 24,
            n_per_domain: 2000,
            n_test_per_domain: 500,
            style_gap: 0.7,
            seed: 7,
            group_spec: SHAPES_SCHEMA.to_string(),
        }
    }
}

impl SynthConfig {
    /// Parse and structurally validate the group spec.
    pub fn schema(&self) -> Result<AttributeSchema, DataError> {
        let schema = parse_schema(&self.group_spec)
            .map_err(|e| DataError::GroupSpec(e.to_string()))?;
        if schema.groups().len() != GROUP_SIZES.len() {
            return Err(DataError::GroupSpec(format!(
                "expected {} groups, got {}",
                GROUP_SIZES.len(),
                schema.groups().len()
            )));
        }
        for (g, &want) in schema.groups().iter().zip(GROUP_SIZES.iter()) {
            if g.members.len() != want {
                return Err(DataError::GroupSpec(format!(
                    "group {:?} lists {} attributes, renderer encodes {}",
                    g.name,
                    g.members.len(),
                    want
                )));
            }
        }
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.image_size < 16 {
            return Err(DataError::BadSynthConfig(format!(
                "image_size {} < 16",
                self.image_size
            )));
        }
        if self.n_per_domain < 1 {
            return Err(DataError::BadSynthConfig("n_per_domain must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.style_gap) {
            return Err(DataError::BadSynthConfig(format!(
                "style_gap {} outside [0, 1]",
                self.style_gap
            )));
        }
        self.schema().map(|_| ())
    }

    /// Rendering style of a domain's own images.
    pub fn style_of(&self, domain: Domain) -> f32 {
        match domain {
            Domain::Source => 0.0,
            Domain::Target => self.style_gap,
        }
    }
}

// Style interpolation endpoints.
const FILL_INTENSITY: f32 = 0.75; // interior at style 0, fading to 0
const RING_INTENSITY_0: f32 = 0.55; // outline band at style 0 ...
const RING_INTENSITY_1: f32 = 0.90; // ... and at style 1
const DOT_INTENSITY: f32 = 0.95;
const NOISE_AMPLITUDE: f32 = 0.10; // at style 0, fading to 0

// Geometry in normalized units (canvas = unit square).
const RADIUS_SMALL: f32 = 0.18;
const RADIUS_LARGE: f32 = 0.30;
const STROKE_THIN: f32 = 0.045;
const STROKE_THICK: f32 = 0.11;
const DOT_RADIUS: f32 = 0.05;
const DOT_OFFSET: f32 = 0.40; // of the figure radius
const TRIANGLE_CIRCUMRADIUS: f32 = 1.25; // of the figure radius

// Per-sample jitter applied only as style grows (the target look).
const JITTER_ROTATION: f32 = 0.5; // radians, ± at style 1
const JITTER_SCALE: f32 = 0.22; // relative, ± at style 1
const JITTER_CENTER: f32 = 0.05; // normalized units, ± at style 1

// Random stream tags.
const STREAM_CLASS: u64 = 0x11;
const STREAM_NUISANCE: u64 = 0x12;
const STREAM_NOISE: u64 = 0x13;
const STREAM_JITTER: u64 = 0x14;

fn stream_index(domain: Domain, index: u64) -> u64 {
    match domain {
        Domain::Source => index,
        Domain::Target => index | (1 << 40),
    }
}

/// The latent description of one sample: discrete classes plus continuous
/// nuisance and jitter draws. Everything an exact re-render needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    pub shape: usize,
    pub size: usize,
    pub stroke: usize,
    pub dot: bool,
    pub center: (f32, f32),
    pub rotation: f32,
    pub dot_angle: f32,
    /// Jitter draws, scaled by the rendering style before application.
    pub jitter_rotation: f32,
    pub jitter_scale: f32,
    pub jitter_center: (f32, f32),
    pub domain: Domain,
    pub index: u64,
}

impl Factors {
    /// Binary attribute vector in schema order.
    pub fn labels(&self) -> Vec<u8> {
        let mut bits = vec![0u8; 8];
        bits[self.shape] = 1;
        bits[3 + self.size] = 1;
        bits[5 + self.stroke] = 1;
        bits[7] = u8::from(self.dot);
        bits
    }

    fn radius(&self) -> f32 {
        if self.size == 0 {
            RADIUS_SMALL
        } else {
            RADIUS_LARGE
        }
    }

    fn stroke_width(&self) -> f32 {
        if self.stroke == 0 {
            STROKE_THIN
        } else {
            STROKE_THICK
        }
    }

    /// Geometry after applying style-scaled jitter.
    fn posed(&self, style: f32) -> (f32, f32, f32, f32) {
        let r = self.radius() * (1.0 + style * self.jitter_scale);
        let theta = self.rotation + style * self.jitter_rotation;
        let cx = (self.center.0 + style * self.jitter_center.0).clamp(0.38, 0.62);
        let cy = (self.center.1 + style * self.jitter_center.1).clamp(0.38, 0.62);
        (cx, cy, r, theta)
    }
}

/// Deterministic per-sample factors; a pure function of the config seed.
pub fn sample_factors(config: &SynthConfig, domain: Domain, index: u64) -> Factors {
    let si = stream_index(domain, index);
    let mut class_rng = rng_from(config.seed, STREAM_CLASS, si);
    let shape = class_rng.gen_range(0..3usize);
    let size = class_rng.gen_range(0..2usize);
    let stroke = class_rng.gen_range(0..2usize);
    let dot = class_rng.gen_range(0..2u8) == 1;

    let mut nuisance_rng = rng_from(config.seed, STREAM_NUISANCE, si);
    let cx = nuisance_rng.gen_range(0.40f32..0.60);
    let cy = nuisance_rng.gen_range(0.40f32..0.60);
    let rotation = nuisance_rng.gen_range(0.0f32..std::f32::consts::TAU);
    let dot_angle = nuisance_rng.gen_range(0.0f32..std::f32::consts::TAU);

    let mut jitter_rng = rng_from(config.seed, STREAM_JITTER, si);
    let jitter_rotation = jitter_rng.gen_range(-JITTER_ROTATION..JITTER_ROTATION);
    let jitter_scale = jitter_rng.gen_range(-JITTER_SCALE..JITTER_SCALE);
    let jx = jitter_rng.gen_range(-JITTER_CENTER..JITTER_CENTER);
    let jy = jitter_rng.gen_range(-JITTER_CENTER..JITTER_CENTER);

    Factors {
        shape,
        size,
        stroke,
        dot,
        center: (cx, cy),
        rotation,
        dot_angle,
        jitter_rotation,
        jitter_scale,
        jitter_center: (jx, jy),
        domain,
        index,
    }
}

/// Signed distance from `p` (relative to center, unrotated frame) to the
/// figure boundary; negative inside.
fn shape_sdf(factors: &Factors, px: f32, py: f32, r: f32, theta: f32) -> f32 {
    let (sin, cos) = theta.sin_cos();
    // Rotate into the figure frame.
    let x = cos * px + sin * py;
    let y = -sin * px + cos * py;
    match factors.shape {
        0 => (x * x + y * y).sqrt() - r,
        1 => x.abs().max(y.abs()) - r,
        _ => {
            // Equilateral triangle: max of signed distances to the three
            // edge lines (exact inside, slightly rounded outside corners).
            let cr = r * TRIANGLE_CIRCUMRADIUS;
            let mut d = f32::NEG_INFINITY;
            for k in 0..3 {
                let a = std::f32::consts::FRAC_PI_2 + k as f32 * std::f32::consts::TAU / 3.0;
                let b = std::f32::consts::FRAC_PI_2 + (k + 1) as f32 * std::f32::consts::TAU / 3.0;
                let (v0x, v0y) = (cr * a.cos(), cr * a.sin());
                let (v1x, v1y) = (cr * b.cos(), cr * b.sin());
                let (ex, ey) = (v1x - v0x, v1y - v0y);
                let len = (ex * ex + ey * ey).sqrt();
                // Outward normal of a counter-clockwise edge.
                let (nx, ny) = (ey / len, -ex / len);
                d = d.max(nx * (x - v0x) + ny * (y - v0y));
            }
            d
        }
    }
}

/// Render one sample at the given style. Pure: identical inputs give
/// bit-identical images.
pub fn render(config: &SynthConfig, factors: &Factors, style: f32) -> Array3<f32> {
    let s = config.image_size;
    let pixel = 1.0 / s as f32;
    let (cx, cy, r, theta) = factors.posed(style);
    let half_stroke = factors.stroke_width() * 0.5;
    let fill = FILL_INTENSITY * (1.0 - style);
    let ring = RING_INTENSITY_0 + (RING_INTENSITY_1 - RING_INTENSITY_0) * style;
    let noise_amp = NOISE_AMPLITUDE * (1.0 - style);

    let (dot_cx, dot_cy) = (
        cx + DOT_OFFSET * r * factors.dot_angle.cos(),
        cy + DOT_OFFSET * r * factors.dot_angle.sin(),
    );

    let mut noise_rng = rng_from(
        config.seed,
        STREAM_NOISE,
        stream_index(factors.domain, factors.index),
    );

    let coverage = |d: f32| (0.5 - d / pixel).clamp(0.0, 1.0);

    let mut out = Array3::<f32>::zeros((1, s, s));
    for i in 0..s {
        for j in 0..s {
            let x = (j as f32 + 0.5) * pixel;
            let y = (i as f32 + 0.5) * pixel;
            let d = shape_sdf(factors, x - cx, y - cy, r, theta);
            let mut v = (fill * coverage(d)).max(ring * coverage(d.abs() - half_stroke));
            if factors.dot {
                let dx = x - dot_cx;
                let dy = y - dot_cy;
                let dd = (dx * dx + dy * dy).sqrt() - DOT_RADIUS;
                v = v.max(DOT_INTENSITY * coverage(dd));
            }
            // Consume the noise stream unconditionally so the sequence is
            // independent of style; the amplitude alone interpolates it away.
            let n: f32 = noise_rng.gen_range(-1.0f32..1.0);
            out[[0, i, j]] = (v + noise_amp * n).clamp(0.0, 1.0);
        }
    }
    out
}

/// Pixel bounding box (inclusive `i0, j0, i1, j1`) of the figure including
/// its outline band, at the given style.
pub fn shape_bbox(config: &SynthConfig, factors: &Factors, style: f32) -> (usize, usize, usize, usize) {
    let s = config.image_size as f32;
    let (cx, cy, r, _) = factors.posed(style);
    let circumradius = match factors.shape {
        0 => r,
        1 => r * std::f32::consts::SQRT_2,
        _ => r * TRIANGLE_CIRCUMRADIUS,
    };
    let e = circumradius + factors.stroke_width() * 0.5 + 1.0 / s;
    let clamp = |v: f32| (v.max(0.0) as usize).min(config.image_size - 1);
    (
        clamp(((cy - e) * s).floor()),
        clamp(((cx - e) * s).floor()),
        clamp(((cy + e) * s).ceil()),
        clamp(((cx + e) * s).ceil()),
    )
}

fn sample_id(domain: Domain, index: u64) -> String {
    match domain {
        Domain::Source => format!("s{index:06}"),
        Domain::Target => format!("t{index:06}"),
    }
}

/// Recover `(domain, index)` from a synthetic sample id.
pub fn parse_synth_id(id: &str) -> Option<(Domain, u64)> {
    let (prefix, digits) = id.split_at(1.min(id.len()));
    let domain = match prefix {
        "s" => Domain::Source,
        "t" => Domain::Target,
        _ => return None,
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().map(|i| (domain, i))
}

fn generate_domain(
    config: &SynthConfig,
    schema: &AttributeSchema,
    domain: Domain,
    range: std::ops::Range<u64>,
    split: Split,
) -> Result<Dataset, DataError> {
    let style = config.style_of(domain);
    let samples = range
        .map(|index| {
            let factors = sample_factors(config, domain, index);
            Sample {
                image: render(config, &factors, style),
                labels: Some(factors.labels()),
                domain,
                id: sample_id(domain, index),
            }
        })
        .collect();
    Dataset::new(samples, schema.clone(), split, domain)
}

/// Generate the training pair. Target samples carry their ground-truth
/// labels (the generator knows them); the batch layer withholds them from
/// training, and evaluation reads them as the oracle.
pub fn synth_generate(config: &SynthConfig) -> Result<(Dataset, Dataset), DataError> {
    config.validate()?;
    let schema = config.schema()?;
    let n = config.n_per_domain as u64;
    let source = generate_domain(config, &schema, Domain::Source, 0..n, Split::Train)?;
    let target = generate_domain(config, &schema, Domain::Target, 0..n, Split::Train)?;
    Ok((source, target))
}

/// Generate the held-out pair, continuing the index streams past the
/// training range so ids and draws never overlap with training samples.
pub fn synth_test_sets(config: &SynthConfig) -> Result<(Dataset, Dataset), DataError> {
    config.validate()?;
    let schema = config.schema()?;
    let lo = config.n_per_domain as u64;
    let hi = lo + config.n_test_per_domain as u64;
    let source = generate_domain(config, &schema, Domain::Source, lo..hi, Split::Test)?;
    let target = generate_domain(config, &schema, Domain::Target, lo..hi, Split::Test)?;
    Ok((source, target))
}

/// The oracle translator: re-render the sample's factors at the other
/// domain's style. Semantics (labels) are untouched by construction. Images
/// whose id does not come from this generator pass through unchanged — the
/// translator is total but only meaningful on its own samples.
pub fn analytic_translate(
    image: &Array3<f32>,
    id: &str,
    direction: Direction,
    config: &SynthConfig,
) -> Array3<f32> {
    let Some((domain, index)) = parse_synth_id(id) else {
        return image.clone();
    };
    let factors = sample_factors(config, domain, index);
    let style = match direction {
        Direction::SourceToTarget => config.style_gap,
        Direction::TargetToSource => 0.0,
    };
    render(config, &factors, style)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::group_targets;

    fn small_config() -> SynthConfig {
        SynthConfig { n_per_domain: 30, n_test_per_domain: 10, ..SynthConfig::default() }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        let (s1, t1) = synth_generate(&cfg).unwrap();
        let (s2, t2) = synth_generate(&cfg).unwrap();
        for (a, b) in s1.samples.iter().zip(s2.samples.iter()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.labels, b.labels);
            assert!(a.image.iter().zip(b.image.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        for (a, b) in t1.samples.iter().zip(t2.samples.iter()) {
            assert!(a.image.iter().zip(b.image.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn labels_satisfy_mutual_exclusion() {
        let cfg = small_config();
        let schema = cfg.schema().unwrap();
        let (source, target) = synth_generate(&cfg).unwrap();
        for ds in [&source, &target] {
            for s in &ds.samples {
                group_targets(&schema, s.labels.as_ref().unwrap()).unwrap();
            }
        }
    }

    #[test]
    fn pixel_values_in_range() {
        let cfg = small_config();
        let (source, target) = synth_generate(&cfg).unwrap();
        for ds in [&source, &target] {
            for s in &ds.samples {
                assert!(s.image.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn no_gap_means_matching_pixel_means() {
        let cfg = SynthConfig {
            style_gap: 0.0,
            n_per_domain: 1000,
            n_test_per_domain: 0,
            ..SynthConfig::default()
        };
        let (source, target) = synth_generate(&cfg).unwrap();
        let mean = |ds: &Dataset| {
            let mut acc = 0.0f64;
            let mut n = 0usize;
            for s in &ds.samples {
                acc += s.image.iter().map(|&v| v as f64).sum::<f64>();
                n += s.image.len();
            }
            acc / n as f64
        };
        let diff = (mean(&source) - mean(&target)).abs();
        assert!(diff < 0.01, "per-pixel means differ by {diff}");
    }

    #[test]
    fn wide_gap_separates_pixel_means() {
        // Sanity that style_gap actually moves the distribution.
        let cfg = SynthConfig { style_gap: 1.0, n_per_domain: 200, ..small_config() };
        let (source, target) = synth_generate(&cfg).unwrap();
        let mean = |ds: &Dataset| {
            ds.samples
                .iter()
                .flat_map(|s| s.image.iter())
                .map(|&v| v as f64)
                .sum::<f64>()
                / (ds.len() * ds.samples[0].image.len()) as f64
        };
        assert!((mean(&source) - mean(&target)).abs() > 0.02);
    }

    #[test]
    fn round_trip_reconstructs_within_tolerance() {
        let cfg = SynthConfig { n_per_domain: 100, ..small_config() };
        let (source, _) = synth_generate(&cfg).unwrap();
        for s in &source.samples {
            let there = analytic_translate(&s.image, &s.id, Direction::SourceToTarget, &cfg);
            let back = analytic_translate(&there, &s.id, Direction::TargetToSource, &cfg);
            let worst = s
                .image
                .iter()
                .zip(back.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(worst <= 0.02, "round trip error {worst} on {}", s.id);
        }
    }

    #[test]
    fn translation_preserves_labels_and_shape() {
        let cfg = small_config();
        let (source, target) = synth_generate(&cfg).unwrap();
        for s in source.samples.iter().take(10) {
            let t = analytic_translate(&s.image, &s.id, Direction::SourceToTarget, &cfg);
            assert_eq!(t.dim(), s.image.dim());
            // Labels come from factors, and factors are keyed by id alone.
            let (domain, index) = parse_synth_id(&s.id).unwrap();
            assert_eq!(sample_factors(&cfg, domain, index).labels(), *s.labels.as_ref().unwrap());
        }
        for t in target.samples.iter().take(10) {
            let s = analytic_translate(&t.image, &t.id, Direction::TargetToSource, &cfg);
            assert_eq!(s.dim(), t.image.dim());
        }
    }

    #[test]
    fn translated_target_matches_source_style_distribution() {
        // t→s renders should look like source-style images: compare means.
        let cfg = SynthConfig { n_per_domain: 300, ..small_config() };
        let (source, target) = synth_generate(&cfg).unwrap();
        let mean_of = |imgs: &[Array3<f32>]| {
            imgs.iter().flat_map(|i| i.iter()).map(|&v| v as f64).sum::<f64>()
                / (imgs.len() * imgs[0].len()) as f64
        };
        let source_imgs: Vec<_> = source.samples.iter().map(|s| s.image.clone()).collect();
        let translated: Vec<_> = target
            .samples
            .iter()
            .map(|t| analytic_translate(&t.image, &t.id, Direction::TargetToSource, &cfg))
            .collect();
        assert!((mean_of(&source_imgs) - mean_of(&translated)).abs() < 0.01);
    }

    #[test]
    fn unknown_id_passes_through_unchanged() {
        let cfg = small_config();
        let zero = Array3::<f32>::zeros((1, 24, 24));
        let out = analytic_translate(&zero, "not-a-synth-id", Direction::SourceToTarget, &cfg);
        assert_eq!(out, zero);
    }

    #[test]
    fn test_split_ids_disjoint_from_train() {
        let cfg = small_config();
        let (train_s, _) = synth_generate(&cfg).unwrap();
        let (test_s, test_t) = synth_test_sets(&cfg).unwrap();
        assert_eq!(test_s.len(), 10);
        assert_eq!(test_t.len(), 10);
        let train_ids: std::collections::HashSet<_> =
            train_s.samples.iter().map(|s| s.id.clone()).collect();
        assert!(test_s.samples.iter().all(|s| !train_ids.contains(&s.id)));
    }

    #[test]
    fn bbox_contains_bright_shape_pixels() {
        let cfg = small_config();
        let (_, target) = synth_generate(&cfg).unwrap();
        for t in target.samples.iter().take(20) {
            let (domain, index) = parse_synth_id(&t.id).unwrap();
            let factors = sample_factors(&cfg, domain, index);
            let (i0, j0, i1, j1) = shape_bbox(&cfg, &factors, cfg.style_gap);
            // Every strongly lit pixel (above any noise floor) is figure.
            for i in 0..cfg.image_size {
                for j in 0..cfg.image_size {
                    if t.image[[0, i, j]] > 0.5 {
                        assert!(
                            i >= i0 && i <= i1 && j >= j0 && j <= j1,
                            "lit pixel ({i},{j}) outside bbox ({i0},{j0})-({i1},{j1}) of {}",
                            t.id
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SynthConfig { image_size: 8, ..SynthConfig::default() };
        assert!(matches!(cfg.validate(), Err(DataError::BadSynthConfig(_))));
        let cfg = SynthConfig { style_gap: 1.5, ..SynthConfig::default() };
        assert!(matches!(cfg.validate(), Err(DataError::BadSynthConfig(_))));
        let cfg = SynthConfig { group_spec: "a: x, y\n".into(), ..SynthConfig::default() };
        assert!(matches!(cfg.validate(), Err(DataError::GroupSpec(_))));
        // Renaming groups is fine as long as the structure matches.
        let cfg = SynthConfig {
            group_spec: "kind: c, s, t\nscale: sm, lg\nline: a, b\nmark: m\n".into(),
            ..SynthConfig::default()
        };
        cfg.validate().unwrap();
    }
}
