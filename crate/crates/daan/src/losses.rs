//! Named loss terms and their aggregation.
//!
//! Each term is a thin, schema-aware composition over the tape's primitive
//! losses, exposed by name so training can log, weight, and ablate every
//! component individually. The adversarial games are split by *who learns
//! from the term*:
//!
//! * consistency terms (`consistency_adversarial`) push the extractor, heads
//!   and translator to make target-side inputs look source-like (scores
//!   toward 1) — the judging discriminator is held fixed;
//! * adversarial terms (`discriminator_adversarial`) train the judges on
//!   detached inputs — nothing upstream learns from them.
//!
//! [`LossReport`] carries every term's value plus the weights, and can
//! recompute the total from its parts as a consistency check on the wiring.

use crate::autograd::{LossValue, Tape, Var};
use crate::error::{LossError, TrainError};

/// Aggregation weights. The translated-vs-raw style game and the label
/// game get their own factors; feature and attention consistency each get
/// one shared across domains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub generator: f64,
    pub critic: f64,
    pub label: f64,
    pub feature: f64,
    pub attention: f64,
}

impl Default for LossWeights {
    /// Label 0.02, feature 0.1, attention 0.1; the translator pair weights
    /// are unity (no published values exist for them).
    fn default() -> Self {
        LossWeights { generator: 1.0, critic: 1.0, label: 0.02, feature: 0.1, attention: 0.1 }
    }
}

/// Mean over the batch of the per-group cross-entropies, summed across
/// groups. `logits[g]` is `[B, classes(g)]`; `targets[b][g]` is sample `b`'s
/// class in group `g`. Serves both the raw-source and translated-source
/// classification losses (the translated batch keeps the source labels).
pub fn task_loss(
    tape: &mut Tape,
    logits: &[Var],
    targets: &[Vec<usize>],
) -> Result<LossValue, LossError> {
    let mut total = tape.loss_zero();
    for (g, &l) in logits.iter().enumerate() {
        let dims = tape.value(l).shape().to_vec();
        if dims[0] != targets.len() {
            return Err(LossError::BatchSize { a: dims[0], b: targets.len() });
        }
        let classes = dims[1];
        let mut group_targets = Vec::with_capacity(targets.len());
        for row in targets {
            let t = row[g];
            if t >= classes {
                return Err(LossError::TargetIndex { group: g, target: t, classes });
            }
            group_targets.push(t);
        }
        let ce = tape.cross_entropy_rows(l, &group_targets);
        total = tape.loss_add(total, ce);
    }
    Ok(total)
}

/// Per-group softmax probabilities concatenated into `[B, C_a]` — the
/// "prediction result" vector the label-consistency term compares.
pub fn concat_group_probs(tape: &mut Tape, logits: &[Var]) -> Var {
    let probs: Vec<Var> = logits.iter().map(|&l| tape.softmax_rows(l)).collect();
    if probs.len() == 1 {
        probs[0]
    } else {
        tape.concat(&probs, 1)
    }
}

/// Mean over the batch of the Euclidean distance between two concatenated
/// prediction vectors: how much the translation changed the semantics.
pub fn label_consistency(
    tape: &mut Tape,
    probs_a: Var,
    probs_b: Var,
) -> Result<LossValue, LossError> {
    let a = tape.value(probs_a).shape().to_vec();
    let b = tape.value(probs_b).shape().to_vec();
    if a != b {
        if a.first() != b.first() {
            return Err(LossError::BatchSize {
                a: *a.first().unwrap_or(&0),
                b: *b.first().unwrap_or(&0),
            });
        }
        return Err(LossError::PredictionWidth {
            a: *a.get(1).unwrap_or(&0),
            b: *b.get(1).unwrap_or(&0),
        });
    }
    Ok(tape.row_norm_diff_mean(probs_a, probs_b))
}

/// Extractor-side half of an alignment game: make the discriminator score
/// this input as domain-original (toward 1). The score must come from a
/// discriminator whose parameters are frozen on this tape, so the gradient
/// reaches only the networks that produced the input.
pub fn consistency_adversarial(tape: &mut Tape, score: Var) -> LossValue {
    tape.bce_toward_one(score)
}

/// Discriminator-side half: score the domain-original input as real and the
/// aligned/translated one as fake. Feed detached inputs so the gradient
/// stays inside the discriminator.
pub fn discriminator_adversarial(tape: &mut Tape, score_real: Var, score_fake: Var) -> LossValue {
    tape.bce_real_fake(score_real, score_fake)
}

/// Weighted translation-level aggregate: style game plus semantic check.
pub fn inter_domain_loss(
    generator: f64,
    critic: f64,
    label_consistency: f64,
    weights: &LossWeights,
) -> f64 {
    weights.generator * generator + weights.critic * critic + weights.label * label_consistency
}

/// Weighted alignment-level aggregate over the eight per-domain terms.
/// Consistency terms are weighted; the discriminator terms enter unweighted.
#[allow(clippy::too_many_arguments)]
pub fn intra_domain_loss(
    feat_consis: (f64, f64),
    feat_adv: (f64, f64),
    att_consis: (f64, f64),
    att_adv: (f64, f64),
    weights: &LossWeights,
) -> f64 {
    weights.feature * (feat_consis.0 + feat_consis.1)
        + feat_adv.0
        + feat_adv.1
        + weights.attention * (att_consis.0 + att_consis.1)
        + att_adv.0
        + att_adv.1
}

/// The training objective: both classification losses plus the two
/// aggregates.
pub fn total_loss(task_source: f64, task_translated: f64, inter: f64, intra: f64) -> f64 {
    task_source + task_translated + inter + intra
}

/// Every named term of one training step, as plain numbers for logging.
/// Terms that an ablation disables are stored as exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub step: u64,
    pub lr: f64,
    pub task_source: f64,
    pub task_translated: f64,
    pub label_consistency: f64,
    pub generator: f64,
    pub critic: f64,
    pub feat_consis_source: f64,
    pub feat_consis_target: f64,
    pub feat_adv_source: f64,
    pub feat_adv_target: f64,
    pub att_consis_source: f64,
    pub att_consis_target: f64,
    pub att_adv_source: f64,
    pub att_adv_target: f64,
    pub inter: f64,
    pub intra: f64,
    pub total: f64,
    pub weights: LossWeights,
    /// False when the translator is frozen/analytic and its loss pair is
    /// zero by definition rather than by convergence.
    pub translator_active: bool,
}

impl LossReport {
    /// Rebuild the total from the stored components and weights.
    pub fn recomputed_total(&self) -> f64 {
        let inter = inter_domain_loss(
            self.generator,
            self.critic,
            self.label_consistency,
            &self.weights,
        );
        let intra = intra_domain_loss(
            (self.feat_consis_source, self.feat_consis_target),
            (self.feat_adv_source, self.feat_adv_target),
            (self.att_consis_source, self.att_consis_target),
            (self.att_adv_source, self.att_adv_target),
            &self.weights,
        );
        total_loss(self.task_source, self.task_translated, inter, intra)
    }

    fn named_terms(&self) -> [(&'static str, f64); 17] {
        [
            ("task_source", self.task_source),
            ("task_translated", self.task_translated),
            ("label_consistency", self.label_consistency),
            ("generator", self.generator),
            ("critic", self.critic),
            ("feat_consis_source", self.feat_consis_source),
            ("feat_consis_target", self.feat_consis_target),
            ("feat_adv_source", self.feat_adv_source),
            ("feat_adv_target", self.feat_adv_target),
            ("att_consis_source", self.att_consis_source),
            ("att_consis_target", self.att_consis_target),
            ("att_adv_source", self.att_adv_source),
            ("att_adv_target", self.att_adv_target),
            ("inter", self.inter),
            ("intra", self.intra),
            ("total", self.total),
            ("lr", self.lr),
        ]
    }

    /// Reject non-finite terms and totals that disagree with their parts.
    pub fn validate(&self) -> Result<(), TrainError> {
        for (term, value) in self.named_terms() {
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    term: term.to_string(),
                    step: self.step,
                    value,
                });
            }
        }
        let recomputed = self.recomputed_total();
        if (recomputed - self.total).abs() > 1e-6 {
            return Err(TrainError::NonFiniteLoss {
                term: format!("total (recomputed {recomputed} vs stored {})", self.total),
                step: self.step,
                value: self.total,
            });
        }
        Ok(())
    }

    /// Column names of the per-step training log.
    pub fn csv_header() -> String {
        let mut cols = vec!["step".to_string()];
        cols.extend(
            [
                "lr",
                "task_source",
                "task_translated",
                "label_consistency",
                "generator",
                "critic",
                "feat_consis_source",
                "feat_consis_target",
                "feat_adv_source",
                "feat_adv_target",
                "att_consis_source",
                "att_consis_target",
                "att_adv_source",
                "att_adv_target",
                "inter",
                "intra",
                "total",
                "lambda_generator",
                "lambda_critic",
                "lambda_label",
                "lambda_feature",
                "lambda_attention",
                "translator_active",
            ]
            .map(String::from),
        );
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.step.to_string()];
        for v in [
            self.lr,
            self.task_source,
            self.task_translated,
            self.label_consistency,
            self.generator,
            self.critic,
            self.feat_consis_source,
            self.feat_consis_target,
            self.feat_adv_source,
            self.feat_adv_target,
            self.att_consis_source,
            self.att_consis_target,
            self.att_adv_source,
            self.att_adv_target,
            self.inter,
            self.intra,
            self.total,
            self.weights.generator,
            self.weights.critic,
            self.weights.label,
            self.weights.feature,
            self.weights.attention,
        ] {
            cols.push(format!("{v:.9}"));
        }
        cols.push((self.translator_active as u8).to_string());
        cols.join(",")
    }
}
