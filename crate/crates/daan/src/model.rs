//! The trainable networks: a shared convolutional feature extractor, one
//! classifier head per attribute group (or a single flat head), and four
//! patch discriminators — two judging spatial feature maps, two judging
//! attention-map stacks.
//!
//! Everything forwards through the gradient tape, so a single struct serves
//! both training (trainable or frozen parameter leaves, caller's choice) and
//! evaluation (a detached tape). The extractor is one parameter set shared
//! by every image that flows through a step — raw and translated, source and
//! target — which is what lets adversarial alignment move the shared
//! representation rather than a per-domain copy.

use ndarray::Array4;

use crate::autograd::{ParamMode, Tape, Var};
use crate::error::ModelError;
use crate::nn::{rng_from, Conv2dLayer, LinearLayer, ParamId, ParamStore};
use crate::schema::AttributeSchema;

const STREAM_INIT: u64 = 0x31;

/// Extractor architecture choice. Both variants produce the same contract:
/// a spatial map `[C_f, H_f, W_f]` and its per-channel global average.
#[derive(Debug, Clone, PartialEq)]
pub enum BackboneConfig {
    /// Plain 3×3 conv + relu blocks; spatial halving after the first two.
    /// Sized for CPU experiments.
    SmallCnn { channels: Vec<usize> },
    /// Bottleneck residual stages (1×1 reduce, 3×3, 1×1 expand ×4) with
    /// average-pool downsampling between stages. `blocks = [3, 4, 6, 3]`
    /// at `base_width = 64` reproduces the standard 50-layer depth.
    Bottleneck { base_width: usize, blocks: Vec<usize> },
}

/// Shape-level configuration of all networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub image_size: usize,
    pub input_channels: usize,
    pub backbone: BackboneConfig,
    /// Channel widths of the five discriminator convolutions; the last must
    /// be 1 (a single-score map).
    pub disc_widths: Vec<usize>,
}

impl ModelConfig {
    /// CPU-sized default used by the test suite and the synthetic pipeline.
    pub fn desk() -> Self {
        ModelConfig {
            image_size: 24,
            input_channels: 1,
            backbone: BackboneConfig::SmallCnn { channels: vec![8, 16, 16, 16] },
            disc_widths: vec![8, 16, 16, 16, 1],
        }
    }

    /// Full-scale default: 50-layer-equivalent extractor and the customary
    /// {64, 128, 256, 512, 1} discriminator widths.
    pub fn full_scale() -> Self {
        ModelConfig {
            image_size: 224,
            input_channels: 3,
            backbone: BackboneConfig::Bottleneck { base_width: 64, blocks: vec![3, 4, 6, 3] },
            disc_widths: vec![64, 128, 256, 512, 1],
        }
    }

    /// Number of spatial halvings the backbone applies.
    fn n_pools(&self) -> usize {
        match &self.backbone {
            BackboneConfig::SmallCnn { channels } => channels.len().min(2),
            BackboneConfig::Bottleneck { blocks, .. } => blocks.len(),
        }
    }

    /// Output channel count of the backbone.
    pub fn feature_channels(&self) -> usize {
        match &self.backbone {
            BackboneConfig::SmallCnn { channels } => *channels.last().unwrap_or(&0),
            BackboneConfig::Bottleneck { base_width, blocks } => {
                base_width * (1 << (blocks.len().saturating_sub(1))) * BOTTLENECK_EXPANSION
            }
        }
    }

    /// Side length of the spatial feature map.
    pub fn feature_size(&self) -> usize {
        self.image_size >> self.n_pools()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        match &self.backbone {
            BackboneConfig::SmallCnn { channels } => {
                if channels.is_empty() {
                    return fail("small-CNN backbone needs at least one block".into());
                }
            }
            BackboneConfig::Bottleneck { base_width, blocks } => {
                if blocks.is_empty() {
                    return fail("bottleneck backbone needs at least one stage".into());
                }
                if base_width % 4 != 0 {
                    return fail(format!("base_width {base_width} must be divisible by 4"));
                }
            }
        }
        let div = 1 << self.n_pools();
        if self.image_size == 0 || self.image_size % div != 0 || self.feature_size() == 0 {
            return fail(format!(
                "image_size {} is not a positive multiple of the backbone stride {div}",
                self.image_size
            ));
        }
        if self.disc_widths.last() != Some(&1) {
            return fail(format!(
                "discriminator widths {:?} must end in a single output channel",
                self.disc_widths
            ));
        }
        if self.disc_widths.iter().any(|&w| w == 0) {
            return fail("discriminator widths must be positive".into());
        }
        Ok(())
    }
}

/// Tape handles for one batch's extracted features.
#[derive(Debug, Clone, Copy)]
pub struct FeatureVars {
    /// `[B, C_f, H_f, W_f]` pre-pooling map.
    pub spatial: Var,
    /// `[B, C_f]` global average of `spatial`.
    pub pooled: Var,
}

const BOTTLENECK_EXPANSION: usize = 4;

struct BottleneckBlock {
    reduce: Conv2dLayer,
    conv: Conv2dLayer,
    expand: Conv2dLayer,
    /// 1×1 projection of the skip path when the channel count changes.
    project: Option<Conv2dLayer>,
}

impl BottleneckBlock {
    fn new(
        store: &mut ParamStore,
        rng: &mut impl rand::Rng,
        name: &str,
        cin: usize,
        width: usize,
    ) -> Self {
        let cout = width * BOTTLENECK_EXPANSION;
        BottleneckBlock {
            reduce: Conv2dLayer::new(store, rng, &format!("{name}.reduce"), cin, width, 1),
            conv: Conv2dLayer::new(store, rng, &format!("{name}.conv"), width, width, 3),
            expand: Conv2dLayer::new(store, rng, &format!("{name}.expand"), width, cout, 1),
            project: (cin != cout)
                .then(|| Conv2dLayer::new(store, rng, &format!("{name}.project"), cin, cout, 1)),
        }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: ParamMode) -> Var {
        let mut y = self.reduce.forward(tape, store, x, mode);
        y = tape.relu(y);
        y = self.conv.forward(tape, store, y, mode);
        y = tape.relu(y);
        y = self.expand.forward(tape, store, y, mode);
        let skip = match &self.project {
            Some(p) => p.forward(tape, store, x, mode),
            None => x,
        };
        let sum = tape.add(y, skip);
        tape.relu(sum)
    }
}

enum Backbone {
    SmallCnn { blocks: Vec<Conv2dLayer> },
    Bottleneck { stem: Conv2dLayer, stages: Vec<Vec<BottleneckBlock>> },
}

impl Backbone {
    fn new(
        store: &mut ParamStore,
        rng: &mut impl rand::Rng,
        config: &ModelConfig,
    ) -> Self {
        match &config.backbone {
            BackboneConfig::SmallCnn { channels } => {
                let mut blocks = Vec::new();
                let mut cin = config.input_channels;
                for (i, &cout) in channels.iter().enumerate() {
                    blocks.push(Conv2dLayer::new(
                        store,
                        rng,
                        &format!("extractor.block{i}"),
                        cin,
                        cout,
                        3,
                    ));
                    cin = cout;
                }
                Backbone::SmallCnn { blocks }
            }
            BackboneConfig::Bottleneck { base_width, blocks } => {
                let stem = Conv2dLayer::new(
                    store,
                    rng,
                    "extractor.stem",
                    config.input_channels,
                    *base_width,
                    3,
                );
                let mut stages = Vec::new();
                let mut cin = *base_width;
                for (s, &n_blocks) in blocks.iter().enumerate() {
                    let width = base_width << s;
                    let mut stage = Vec::new();
                    for b in 0..n_blocks {
                        stage.push(BottleneckBlock::new(
                            store,
                            rng,
                            &format!("extractor.stage{s}.block{b}"),
                            cin,
                            width,
                        ));
                        cin = width * BOTTLENECK_EXPANSION;
                    }
                    stages.push(stage);
                }
                Backbone::Bottleneck { stem, stages }
            }
        }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: ParamMode) -> Var {
        match self {
            Backbone::SmallCnn { blocks } => {
                let mut y = x;
                for (i, block) in blocks.iter().enumerate() {
                    y = block.forward(tape, store, y, mode);
                    y = tape.relu(y);
                    if i < 2 {
                        y = tape.avg_pool2(y);
                    }
                }
                y
            }
            Backbone::Bottleneck { stem, stages } => {
                let mut y = stem.forward(tape, store, x, mode);
                y = tape.relu(y);
                y = tape.avg_pool2(y);
                for (s, stage) in stages.iter().enumerate() {
                    if s > 0 {
                        y = tape.avg_pool2(y);
                    }
                    for block in stage {
                        y = block.forward(tape, store, y, mode);
                    }
                }
                y
            }
        }
    }
}

/// One linear classifier per attribute group, sharing the pooled feature.
pub struct GroupHeads {
    layers: Vec<LinearLayer>,
    in_dim: usize,
}

impl GroupHeads {
    fn new(
        store: &mut ParamStore,
        rng: &mut impl rand::Rng,
        schema: &AttributeSchema,
        in_dim: usize,
    ) -> Self {
        let layers = schema
            .groups()
            .iter()
            .map(|g| {
                LinearLayer::new(store, rng, &format!("head.{}", g.name), in_dim, g.classes())
            })
            .collect();
        GroupHeads { layers, in_dim }
    }

    /// Per-group logits `[B, classes(g)]`, in schema group order.
    pub fn classify(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        pooled: Var,
        mode: ParamMode,
    ) -> Result<Vec<Var>, ModelError> {
        check_width(tape, pooled, self.in_dim)?;
        Ok(self.layers.iter().map(|l| l.forward(tape, store, pooled, mode)).collect())
    }

    /// All head weight matrices stacked row-wise into `[C_a, C_f]`, where
    /// rows follow the schema's global class order. This is the weight view
    /// the class activation maps contract against the spatial features.
    pub fn stacked_weights(&self, tape: &mut Tape, store: &ParamStore, mode: ParamMode) -> Var {
        let ws: Vec<Var> = self.layers.iter().map(|l| tape.param(store, l.w, mode)).collect();
        tape.concat(&ws, 0)
    }
}

/// Single linear head over all attributes with independent sigmoid scores —
/// the non-grouped baseline.
pub struct FlatHead {
    layer: LinearLayer,
    in_dim: usize,
}

impl FlatHead {
    fn new(
        store: &mut ParamStore,
        rng: &mut impl rand::Rng,
        schema: &AttributeSchema,
        in_dim: usize,
    ) -> Self {
        FlatHead {
            layer: LinearLayer::new(store, rng, "head.flat", in_dim, schema.n_attributes()),
            in_dim,
        }
    }

    /// Raw logits `[B, N]`, one column per attribute.
    pub fn logits(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        pooled: Var,
        mode: ParamMode,
    ) -> Result<Var, ModelError> {
        check_width(tape, pooled, self.in_dim)?;
        Ok(self.layer.forward(tape, store, pooled, mode))
    }

    pub fn weights(&self, tape: &mut Tape, store: &ParamStore, mode: ParamMode) -> Var {
        tape.param(store, self.layer.w, mode)
    }
}

/// Classifier topology: mutually exclusive groups or independent sigmoids.
pub enum Heads {
    Grouped(GroupHeads),
    Flat(FlatHead),
}

impl Heads {
    /// Rows of the attention weight matrix: total class count when grouped,
    /// attribute count when flat.
    pub fn attention_channels(&self, schema: &AttributeSchema) -> usize {
        match self {
            Heads::Grouped(_) => schema.total_classes(),
            Heads::Flat(_) => schema.n_attributes(),
        }
    }

    pub fn stacked_weights(&self, tape: &mut Tape, store: &ParamStore, mode: ParamMode) -> Var {
        match self {
            Heads::Grouped(h) => h.stacked_weights(tape, store, mode),
            Heads::Flat(h) => h.weights(tape, store, mode),
        }
    }
}

/// Which of the four domain discriminators to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscKind {
    /// Feature map judged against the source domain.
    FeatureSource,
    /// Feature map judged against the target domain.
    FeatureTarget,
    /// Attention stack judged against the source domain.
    AttentionSource,
    /// Attention stack judged against the target domain.
    AttentionTarget,
}

impl DiscKind {
    pub const ALL: [DiscKind; 4] =
        [DiscKind::FeatureSource, DiscKind::FeatureTarget, DiscKind::AttentionSource, DiscKind::AttentionTarget];

    pub fn name(self) -> &'static str {
        match self {
            DiscKind::FeatureSource => "feature_source",
            DiscKind::FeatureTarget => "feature_target",
            DiscKind::AttentionSource => "attention_source",
            DiscKind::AttentionTarget => "attention_target",
        }
    }
}

/// Five same-size convolutions with leaky rectification between and a
/// sigmoid at the end: maps `[B, C, H, W]` to a per-location domain
/// probability map `[B, 1, H, W]`.
pub struct Discriminator {
    convs: Vec<Conv2dLayer>,
    in_channels: usize,
    kind: DiscKind,
}

/// Negative-side slope of the leaky rectifier between discriminator convs.
pub const DISC_LEAKY_SLOPE: f32 = 0.2;

impl Discriminator {
    fn new(
        store: &mut ParamStore,
        rng: &mut impl rand::Rng,
        kind: DiscKind,
        in_channels: usize,
        widths: &[usize],
    ) -> Self {
        let mut convs = Vec::new();
        let mut cin = in_channels;
        for (i, &cout) in widths.iter().enumerate() {
            convs.push(Conv2dLayer::new(
                store,
                rng,
                &format!("disc.{}.conv{i}", kind.name()),
                cin,
                cout,
                3,
            ));
            cin = cout;
        }
        Discriminator { convs, in_channels, kind }
    }

    /// Probability map over the input's spatial extent, values in (0, 1).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        mode: ParamMode,
    ) -> Result<Var, ModelError> {
        let dims = tape.value(x).shape().to_vec();
        if dims.len() != 4 || dims[1] != self.in_channels {
            return Err(ModelError::DiscriminatorChannels {
                which: self.kind.name().to_string(),
                expected: self.in_channels,
                got: *dims.get(1).unwrap_or(&0),
            });
        }
        let mut y = x;
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            y = conv.forward(tape, store, y, mode);
            if i < last {
                y = tape.leaky_relu(y, DISC_LEAKY_SLOPE);
            }
        }
        Ok(tape.sigmoid(y))
    }
}

fn check_width(tape: &Tape, pooled: Var, expected: usize) -> Result<(), ModelError> {
    let dims = tape.value(pooled).shape().to_vec();
    if dims.len() != 2 || dims[1] != expected {
        return Err(ModelError::FeatureWidth { got: *dims.get(1).unwrap_or(&0), expected });
    }
    Ok(())
}

/// The complete parameter set of one experiment: extractor, heads and the
/// four discriminators, plus the id ranges each optimizer owns.
pub struct Model {
    pub store: ParamStore,
    pub config: ModelConfig,
    backbone: Backbone,
    pub heads: Heads,
    disc_fs: Discriminator,
    disc_ft: Discriminator,
    disc_as: Discriminator,
    disc_at: Discriminator,
    extractor_ids: Vec<ParamId>,
    head_ids: Vec<ParamId>,
    disc_ids: Vec<ParamId>,
}

impl Model {
    /// Build all networks with deterministic initialization. `grouped`
    /// selects per-group softmax heads over one flat sigmoid head.
    pub fn new(
        config: ModelConfig,
        schema: &AttributeSchema,
        grouped: bool,
        seed: u64,
    ) -> Result<Model, ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = rng_from(seed, STREAM_INIT, 0);

        let backbone = Backbone::new(&mut store, &mut rng, &config);
        let extractor_end = store.len();

        let c_f = config.feature_channels();
        let heads = if grouped {
            Heads::Grouped(GroupHeads::new(&mut store, &mut rng, schema, c_f))
        } else {
            Heads::Flat(FlatHead::new(&mut store, &mut rng, schema, c_f))
        };
        let heads_end = store.len();

        let c_a = heads.attention_channels(schema);
        let disc_fs =
            Discriminator::new(&mut store, &mut rng, DiscKind::FeatureSource, c_f, &config.disc_widths);
        let disc_ft =
            Discriminator::new(&mut store, &mut rng, DiscKind::FeatureTarget, c_f, &config.disc_widths);
        let disc_as =
            Discriminator::new(&mut store, &mut rng, DiscKind::AttentionSource, c_a, &config.disc_widths);
        let disc_at =
            Discriminator::new(&mut store, &mut rng, DiscKind::AttentionTarget, c_a, &config.disc_widths);

        let all: Vec<ParamId> = store.ids().collect();
        let extractor_ids = all[..extractor_end].to_vec();
        let head_ids = all[extractor_end..heads_end].to_vec();
        let disc_ids = all[heads_end..].to_vec();

        Ok(Model {
            store,
            config,
            backbone,
            heads,
            disc_fs,
            disc_ft,
            disc_as,
            disc_at,
            extractor_ids,
            head_ids,
            disc_ids,
        })
    }

    /// Parameters updated by the task/alignment optimizer.
    pub fn task_param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.extractor_ids.clone();
        ids.extend_from_slice(&self.head_ids);
        ids
    }

    pub fn extractor_param_ids(&self) -> &[ParamId] {
        &self.extractor_ids
    }

    pub fn head_param_ids(&self) -> &[ParamId] {
        &self.head_ids
    }

    /// Parameters updated by the discriminator optimizer.
    pub fn disc_param_ids(&self) -> &[ParamId] {
        &self.disc_ids
    }

    /// Insert a raw image batch into the tape as a non-trainable input.
    pub fn input(&self, tape: &mut Tape, images: &Array4<f32>) -> Result<Var, ModelError> {
        self.check_images(images.shape())?;
        Ok(tape.input(images.clone().into_dyn()))
    }

    fn check_images(&self, dims: &[usize]) -> Result<(), ModelError> {
        let want = [self.config.input_channels, self.config.image_size, self.config.image_size];
        if dims.len() != 4 || dims[1..] != want {
            return Err(ModelError::InputShape {
                got: dims.to_vec(),
                channels: self.config.input_channels,
                size: self.config.image_size,
            });
        }
        Ok(())
    }

    /// Run the shared extractor on an image batch already on the tape.
    /// Translated images (tape products themselves) flow through here too,
    /// so alignment gradients reach the translator when it is learned.
    pub fn extract(
        &self,
        tape: &mut Tape,
        x: Var,
        mode: ParamMode,
    ) -> Result<FeatureVars, ModelError> {
        self.check_images(tape.value(x).shape())?;
        let spatial = self.backbone.forward(tape, &self.store, x, mode);
        let pooled = tape.global_avg_pool(spatial);
        Ok(FeatureVars { spatial, pooled })
    }

    /// Apply one of the four domain discriminators.
    pub fn discriminate(
        &self,
        tape: &mut Tape,
        kind: DiscKind,
        x: Var,
        mode: ParamMode,
    ) -> Result<Var, ModelError> {
        self.disc(kind).forward(tape, &self.store, x, mode)
    }

    fn disc(&self, kind: DiscKind) -> &Discriminator {
        match kind {
            DiscKind::FeatureSource => &self.disc_fs,
            DiscKind::FeatureTarget => &self.disc_ft,
            DiscKind::AttentionSource => &self.disc_as,
            DiscKind::AttentionTarget => &self.disc_at,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::schema::parse_schema;
    use ndarray::{Array2, ArrayD, IxDyn};
    use rand::Rng;

    fn schema() -> AttributeSchema {
        parse_schema("shape: circle, square, triangle\nsize: small, large\nstroke: thin, thick\ndot: dot\n")
            .unwrap()
    }

    fn desk_model(grouped: bool) -> Model {
        Model::new(ModelConfig::desk(), &schema(), grouped, 3).unwrap()
    }

    fn random_images(rng: &mut impl Rng, b: usize, c: usize, s: usize) -> Array4<f32> {
        Array4::from_shape_simple_fn((b, c, s, s), || rng.gen_range(0.0f32..1.0))
    }

    #[test]
    fn extract_shapes_and_pooled_mean_match() {
        let model = desk_model(true);
        let mut rng = rng_from(1, 0, 0);
        let images = random_images(&mut rng, 3, 1, 24);
        let mut tape = Tape::new(&model.store);
        let x = model.input(&mut tape, &images).unwrap();
        let f = model.extract(&mut tape, x, ParamMode::Trainable).unwrap();
        assert_eq!(tape.value(f.spatial).shape(), &[3, 16, 6, 6]);
        assert_eq!(tape.value(f.pooled).shape(), &[3, 16]);
        let spatial = tape.value(f.spatial).clone();
        let pooled = tape.value(f.pooled).clone();
        for b in 0..3 {
            for ch in 0..16 {
                let mut mean = 0.0f64;
                for i in 0..6 {
                    for j in 0..6 {
                        mean += spatial[[b, ch, i, j]] as f64;
                    }
                }
                mean /= 36.0;
                assert!((pooled[[b, ch]] as f64 - mean).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let model = desk_model(true);
        let mut tape = Tape::new(&model.store);
        let bad = Array4::<f32>::zeros((2, 1, 20, 20));
        let x = tape.input(bad.into_dyn());
        let err = model.extract(&mut tape, x, ParamMode::Trainable).unwrap_err();
        assert!(matches!(err, ModelError::InputShape { .. }));
        assert!(model.input(&mut tape, &Array4::<f32>::zeros((2, 3, 24, 24))).is_err());
    }

    #[test]
    fn group_logits_match_hand_affine_and_softmax_sums_to_one() {
        let model = desk_model(true);
        let Heads::Grouped(heads) = &model.heads else { panic!("expected grouped heads") };
        let mut tape = Tape::new(&model.store);
        let mut rng = rng_from(2, 0, 0);
        let pooled_arr = Array2::from_shape_simple_fn((2, 16), || rng.gen_range(-1.0f32..1.0));
        let pooled = tape.input(pooled_arr.clone().into_dyn());
        let logits = heads.classify(&mut tape, &model.store, pooled, ParamMode::Trainable).unwrap();
        assert_eq!(logits.len(), 4);

        // Direct matrix product against the stored parameters.
        let s = schema();
        for (g, l) in logits.iter().enumerate() {
            let lv = tape.value(*l).clone();
            let w = model.store.value(model.store.id_by_name(&format!("head.{}.weight", s.groups()[g].name)).unwrap()).clone();
            let bias = model.store.value(model.store.id_by_name(&format!("head.{}.bias", s.groups()[g].name)).unwrap()).clone();
            let classes = s.groups()[g].classes();
            assert_eq!(lv.shape(), &[2, classes]);
            for b in 0..2 {
                for k in 0..classes {
                    let mut acc = bias[[k]] as f64;
                    for j in 0..16 {
                        acc += w[[k, j]] as f64 * pooled_arr[[b, j]] as f64;
                    }
                    assert!((lv[[b, k]] as f64 - acc).abs() < 1e-5);
                }
            }
            let probs = tape.softmax_rows(*l);
            let pv = tape.value(probs);
            for b in 0..2 {
                let sum: f32 = (0..classes).map(|k| pv[[b, k]]).sum();
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_features_give_bias_logits() {
        let model = desk_model(true);
        let Heads::Grouped(heads) = &model.heads else { panic!() };
        let mut tape = Tape::new(&model.store);
        let pooled = tape.input(ArrayD::zeros(IxDyn(&[1, 16])));
        let logits = heads.classify(&mut tape, &model.store, pooled, ParamMode::Trainable).unwrap();
        for l in logits {
            // Bias init is zero, so all logits must be exactly zero.
            assert!(tape.value(l).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn classify_is_affine_in_pooled() {
        let model = desk_model(true);
        let Heads::Grouped(heads) = &model.heads else { panic!() };
        let mut tape = Tape::new(&model.store);
        let mut rng = rng_from(5, 0, 0);
        let p = Array2::from_shape_simple_fn((1, 16), || rng.gen_range(-1.0f32..1.0));
        let scaled = p.mapv(|v| 2.5 * v);
        let pv = tape.input(p.into_dyn());
        let sv = tape.input(scaled.into_dyn());
        let l1 = heads.classify(&mut tape, &model.store, pv, ParamMode::Trainable).unwrap();
        let l2 = heads.classify(&mut tape, &model.store, sv, ParamMode::Trainable).unwrap();
        for (a, b) in l1.iter().zip(l2.iter()) {
            // Zero bias: logits themselves scale linearly.
            let av = tape.value(*a);
            let bv = tape.value(*b);
            for (x, y) in av.iter().zip(bv.iter()) {
                assert!((2.5 * x - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn feature_width_mismatch_rejected() {
        let model = desk_model(true);
        let Heads::Grouped(heads) = &model.heads else { panic!() };
        let mut tape = Tape::new(&model.store);
        let pooled = tape.input(ArrayD::zeros(IxDyn(&[1, 9])));
        let err = heads.classify(&mut tape, &model.store, pooled, ParamMode::Trainable).unwrap_err();
        assert!(matches!(err, ModelError::FeatureWidth { got: 9, expected: 16 }));
    }

    #[test]
    fn discriminators_preserve_spatial_size_and_stay_in_unit_interval() {
        let model = desk_model(true);
        let mut tape = Tape::new(&model.store);
        let mut rng = rng_from(7, 0, 0);
        let f = tape.input(
            ArrayD::from_shape_simple_fn(IxDyn(&[2, 16, 6, 6]), || rng.gen_range(-1.0f32..1.0)),
        );
        for kind in [DiscKind::FeatureSource, DiscKind::FeatureTarget] {
            let score = model.discriminate(&mut tape, kind, f, ParamMode::Trainable).unwrap();
            assert_eq!(tape.value(score).shape(), &[2, 1, 6, 6]);
            assert!(tape.value(score).iter().all(|&v| v > 0.0 && v < 1.0));
        }
        // Attention stacks carry one channel per class (9 for this schema).
        let a = tape.input(
            ArrayD::from_shape_simple_fn(IxDyn(&[2, 9, 6, 6]), || rng.gen_range(0.0f32..1.0)),
        );
        for kind in [DiscKind::AttentionSource, DiscKind::AttentionTarget] {
            let score = model.discriminate(&mut tape, kind, a, ParamMode::Trainable).unwrap();
            assert_eq!(tape.value(score).shape(), &[2, 1, 6, 6]);
        }
        // Cross-wiring the inputs is a channel error.
        assert!(matches!(
            model.discriminate(&mut tape, DiscKind::AttentionSource, f, ParamMode::Trainable),
            Err(ModelError::DiscriminatorChannels { expected: 9, got: 16, .. })
        ));
    }

    #[test]
    fn constant_zero_input_gives_constant_score_map() {
        let model = desk_model(true);
        let mut tape = Tape::new(&model.store);
        let z = tape.input(ArrayD::zeros(IxDyn(&[1, 16, 6, 6])));
        let score =
            model.discriminate(&mut tape, DiscKind::FeatureSource, z, ParamMode::Trainable).unwrap();
        let sv = tape.value(score);
        // Same-padding convs see identical neighborhoods only away from the
        // border, but a zero input with zero bias gives exactly 0 pre-sigmoid
        // everywhere regardless: the map must be constant 0.5.
        assert!(sv.iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn extractor_params_are_shared_across_calls() {
        let model = desk_model(true);
        let mut rng = rng_from(9, 0, 0);
        let images = random_images(&mut rng, 2, 1, 24);
        let translated = random_images(&mut rng, 2, 1, 24);
        let mut tape = Tape::new(&model.store);
        let x1 = model.input(&mut tape, &images).unwrap();
        let x2 = model.input(&mut tape, &translated).unwrap();
        let before = tape.distinct_param_leaves();
        model.extract(&mut tape, x1, ParamMode::Trainable).unwrap();
        let after_one = tape.distinct_param_leaves();
        model.extract(&mut tape, x2, ParamMode::Trainable).unwrap();
        let after_two = tape.distinct_param_leaves();
        // Second pass adds no parameter leaves: same identity, not copies.
        assert!(after_one > before);
        assert_eq!(after_one, after_two);
    }

    #[test]
    fn flat_head_scores_one_column_per_attribute() {
        let model = desk_model(false);
        let Heads::Flat(head) = &model.heads else { panic!() };
        let mut tape = Tape::new(&model.store);
        let pooled = tape.input(ArrayD::zeros(IxDyn(&[3, 16])));
        let logits = head.logits(&mut tape, &model.store, pooled, ParamMode::Trainable).unwrap();
        assert_eq!(tape.value(logits).shape(), &[3, 8]);
        assert_eq!(model.heads.attention_channels(&schema()), 8);
        let w = model.heads.stacked_weights(&mut tape, &model.store, ParamMode::Trainable);
        assert_eq!(tape.value(w).shape(), &[8, 16]);
    }

    #[test]
    fn grouped_stacked_weights_follow_global_class_order() {
        let model = desk_model(true);
        let mut tape = Tape::new(&model.store);
        let w = model.heads.stacked_weights(&mut tape, &model.store, ParamMode::Trainable);
        assert_eq!(tape.value(w).shape(), &[9, 16]);
        // Row block g must be exactly head g's weight matrix.
        let s = schema();
        let wv = tape.value(w).clone();
        let mut row = 0;
        for g in s.groups() {
            let head_w = model
                .store
                .value(model.store.id_by_name(&format!("head.{}.weight", g.name)).unwrap());
            for k in 0..g.classes() {
                for j in 0..16 {
                    assert_eq!(wv[[row + k, j]], head_w[[k, j]]);
                }
            }
            row += g.classes();
        }
    }

    #[test]
    fn param_id_partition_covers_store() {
        let model = desk_model(true);
        let total = model.task_param_ids().len() + model.disc_param_ids().len();
        assert_eq!(total, model.store.len());
        assert!(!model.extractor_param_ids().is_empty());
        assert!(!model.head_param_ids().is_empty());
        // 4 discriminators × 5 convs × (w, b).
        assert_eq!(model.disc_param_ids().len(), 40);
    }

    #[test]
    fn same_seed_same_init_different_seed_different_init() {
        let a = desk_model(true);
        let b = desk_model(true);
        let c = Model::new(ModelConfig::desk(), &schema(), true, 4).unwrap();
        let ids: Vec<ParamId> = a.store.ids().collect();
        assert_eq!(a.store.content_hash(&ids), b.store.content_hash(&ids));
        assert_ne!(a.store.content_hash(&ids), c.store.content_hash(&ids));
    }

    #[test]
    fn bottleneck_backbone_satisfies_the_same_contract() {
        let config = ModelConfig {
            image_size: 32,
            input_channels: 1,
            backbone: BackboneConfig::Bottleneck { base_width: 8, blocks: vec![1, 1] },
            disc_widths: vec![4, 1],
        };
        assert_eq!(config.feature_channels(), 64);
        assert_eq!(config.feature_size(), 8);
        let model = Model::new(config, &schema(), true, 1).unwrap();
        let mut rng = rng_from(11, 0, 0);
        let images = random_images(&mut rng, 2, 1, 32);
        let mut tape = Tape::new(&model.store);
        let x = model.input(&mut tape, &images).unwrap();
        let f = model.extract(&mut tape, x, ParamMode::Trainable).unwrap();
        assert_eq!(tape.value(f.spatial).shape(), &[2, 64, 8, 8]);
        assert_eq!(tape.value(f.pooled).shape(), &[2, 64]);
        assert!(tape.value(f.pooled).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn full_scale_config_is_structurally_valid() {
        let config = ModelConfig::full_scale();
        config.validate().unwrap();
        assert_eq!(config.feature_channels(), 2048);
        assert_eq!(config.feature_size(), 14);
        assert_eq!(config.disc_widths, vec![64, 128, 256, 512, 1]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_stride = ModelConfig { image_size: 25, ..ModelConfig::desk() };
        assert!(matches!(bad_stride.validate(), Err(ModelError::Config(_))));
        let bad_disc = ModelConfig { disc_widths: vec![8, 4], ..ModelConfig::desk() };
        assert!(matches!(bad_disc.validate(), Err(ModelError::Config(_))));
        let no_blocks = ModelConfig {
            backbone: BackboneConfig::SmallCnn { channels: vec![] },
            ..ModelConfig::desk()
        };
        assert!(matches!(no_blocks.validate(), Err(ModelError::Config(_))));
    }
}
