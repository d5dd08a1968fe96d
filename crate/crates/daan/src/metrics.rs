//! Per-attribute accuracy and F1 over binary predictions.
//!
//! Every attribute is scored as an independent binary problem against the
//! canonical label vector: confusion counts, accuracy, precision, recall and
//! F1, plus unweighted macro averages over all attributes. Grouped heads are
//! binarized through per-group argmax (preserving mutual exclusion); the
//! flat baseline thresholds each sigmoid score at 0.5. All ratios use the
//! 0/0 = 0 convention so that degenerate attributes score zero instead of
//! being skipped, which would make the macro average depend on prediction
//! content in a non-monotone way.

use crate::autograd::{ParamMode, Tape, Var};
use crate::data::Dataset;
use crate::error::MetricsError;
use crate::model::{Heads, Model};
use crate::schema::{binary_from_group_argmax, AttributeSchema};

/// Macro (accuracy, F1) of the full-scale caricature benchmark when training
/// on the labeled photo domain only. Reports quote these alongside desk-run
/// numbers to show where a run sits between the baselines.
pub const REFERENCE_SOURCE_ONLY: (f64, f64) = (0.8054, 0.6770);
/// Full-scale macro scores with the complete adaptation objective (label
/// consistency + feature alignment + attention alignment).
pub const REFERENCE_ADAPTED: (f64, f64) = (0.8239, 0.7215);
/// Full-scale upper bound: grouped heads trained on labeled target data.
pub const REFERENCE_SUPERVISED_TARGET: (f64, f64) = (0.8526, 0.7601);

/// Binary confusion counts for one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AttributeScore {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl AttributeScore {
    /// Samples counted so far; the four cells always sum to this.
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn record(&mut self, pred: bool, label: bool) {
        match (pred, label) {
            (true, true) => self.true_pos += 1,
            (true, false) => self.false_pos += 1,
            (false, false) => self.true_neg += 1,
            (false, true) => self.false_neg += 1,
        }
    }

    /// Count addition, for merging shards evaluated independently.
    pub fn merge(&mut self, other: &AttributeScore) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.true_neg += other.true_neg;
        self.false_neg += other.false_neg;
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.true_pos + self.true_neg, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.true_pos, self.true_pos + self.false_pos)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_pos, self.true_pos + self.false_neg)
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Per-attribute confusion counts for a whole evaluation, in schema
/// attribute order, with macro averages derived on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMetrics {
    attributes: Vec<String>,
    scores: Vec<AttributeScore>,
}

impl AttributeMetrics {
    /// Count every (prediction, label) row pair. Rows are binary vectors in
    /// canonical attribute order; any nonzero byte counts as positive.
    pub fn from_predictions(
        schema: &AttributeSchema,
        preds: &[Vec<u8>],
        labels: &[Vec<u8>],
    ) -> Result<AttributeMetrics, MetricsError> {
        if preds.len() != labels.len() {
            return Err(MetricsError::RowCount { preds: preds.len(), labels: labels.len() });
        }
        if preds.is_empty() {
            return Err(MetricsError::Empty);
        }
        let n = schema.n_attributes();
        let mut scores = vec![AttributeScore::default(); n];
        for (index, (p, l)) in preds.iter().zip(labels).enumerate() {
            if p.len() != n {
                return Err(MetricsError::RowLength { index, got: p.len(), expected: n });
            }
            if l.len() != n {
                return Err(MetricsError::RowLength { index, got: l.len(), expected: n });
            }
            for (a, score) in scores.iter_mut().enumerate() {
                score.record(p[a] != 0, l[a] != 0);
            }
        }
        Ok(AttributeMetrics { attributes: schema.attributes().to_vec(), scores })
    }

    /// Assemble from precomputed counts (shard merging, report tooling).
    pub fn from_scores(
        attributes: Vec<String>,
        scores: Vec<AttributeScore>,
    ) -> Result<AttributeMetrics, MetricsError> {
        if attributes.is_empty() {
            return Err(MetricsError::Empty);
        }
        if attributes.len() != scores.len() {
            return Err(MetricsError::RowCount { preds: scores.len(), labels: attributes.len() });
        }
        Ok(AttributeMetrics { attributes, scores })
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn scores(&self) -> &[AttributeScore] {
        &self.scores
    }

    /// Add another shard's counts into this one. Attribute lists must match
    /// position for position.
    pub fn merge(&mut self, other: &AttributeMetrics) -> Result<(), MetricsError> {
        for (index, (a, b)) in self.attributes.iter().zip(&other.attributes).enumerate() {
            if a != b {
                return Err(MetricsError::MergeMismatch { index, a: a.clone(), b: b.clone() });
            }
        }
        if self.attributes.len() != other.attributes.len() {
            return Err(MetricsError::MergeMismatch {
                index: self.attributes.len().min(other.attributes.len()),
                a: format!("{} attributes", self.attributes.len()),
                b: format!("{} attributes", other.attributes.len()),
            });
        }
        for (s, o) in self.scores.iter_mut().zip(&other.scores) {
            s.merge(o);
        }
        Ok(())
    }

    /// Unweighted `(mean accuracy, mean F1)` over all attributes.
    pub fn macro_average(&self) -> (f64, f64) {
        let n = self.scores.len() as f64;
        let acc: f64 = self.scores.iter().map(AttributeScore::accuracy).sum();
        let f1: f64 = self.scores.iter().map(AttributeScore::f1).sum();
        (acc / n, f1 / n)
    }

    fn macro_precision_recall(&self) -> (f64, f64) {
        let n = self.scores.len() as f64;
        let p: f64 = self.scores.iter().map(AttributeScore::precision).sum();
        let r: f64 = self.scores.iter().map(AttributeScore::recall).sum();
        (p / n, r / n)
    }
}

/// Binarize one forward pass of `model` over an image batch already loaded
/// as tape input `x`. Grouped heads take the per-group argmax and expand it
/// back to the attribute vector; the flat head thresholds sigmoid scores at
/// 0.5. Ties inside a group resolve to the lowest class index.
pub fn predict_batch(
    model: &Model,
    tape: &mut Tape,
    x: Var,
    schema: &AttributeSchema,
) -> Result<Vec<Vec<u8>>, MetricsError> {
    let feats = model.extract(tape, x, ParamMode::Frozen)?;
    match &model.heads {
        Heads::Grouped(h) => {
            let logits = h.classify(tape, &model.store, feats.pooled, ParamMode::Frozen)?;
            if logits.len() != schema.groups().len() {
                return Err(MetricsError::HeadShape {
                    what: "group count",
                    got: logits.len(),
                    expected: schema.groups().len(),
                });
            }
            let batch = tape.value(logits[0]).shape()[0];
            let mut argmaxes = vec![vec![0usize; schema.groups().len()]; batch];
            for (g, (var, group)) in logits.iter().zip(schema.groups()).enumerate() {
                let vals = tape.value(*var);
                if vals.shape()[1] != group.classes() {
                    return Err(MetricsError::HeadShape {
                        what: "class count",
                        got: vals.shape()[1],
                        expected: group.classes(),
                    });
                }
                for b in 0..batch {
                    let mut best = 0usize;
                    for c in 1..group.classes() {
                        if vals[[b, c]] > vals[[b, best]] {
                            best = c;
                        }
                    }
                    argmaxes[b][g] = best;
                }
            }
            argmaxes
                .iter()
                .map(|row| binary_from_group_argmax(schema, row).map_err(MetricsError::from))
                .collect()
        }
        Heads::Flat(h) => {
            let logits = h.logits(tape, &model.store, feats.pooled, ParamMode::Frozen)?;
            let scores = tape.sigmoid(logits);
            let vals = tape.value(scores);
            if vals.shape()[1] != schema.n_attributes() {
                return Err(MetricsError::HeadShape {
                    what: "attribute count",
                    got: vals.shape()[1],
                    expected: schema.n_attributes(),
                });
            }
            Ok((0..vals.shape()[0])
                .map(|b| {
                    (0..vals.shape()[1]).map(|a| u8::from(vals[[b, a]] > 0.5)).collect()
                })
                .collect())
        }
    }
}

/// Forward a labeled dataset through `model` in evaluation batches and score
/// every attribute. Pure in `(model, dataset)`: repeated calls return
/// identical metrics.
pub fn evaluate_model(
    model: &Model,
    dataset: &Dataset,
    batch_size: usize,
) -> Result<AttributeMetrics, MetricsError> {
    if dataset.samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let schema = &dataset.schema;
    let mut preds: Vec<Vec<u8>> = Vec::with_capacity(dataset.samples.len());
    let mut labels: Vec<Vec<u8>> = Vec::with_capacity(dataset.samples.len());
    for s in &dataset.samples {
        labels.push(s.labels.clone().ok_or(MetricsError::Unlabeled)?);
    }
    let indices: Vec<usize> = (0..dataset.samples.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let images = dataset.stack_images(chunk);
        let mut tape = Tape::new(&model.store);
        let x = model.input(&mut tape, &images)?;
        preds.extend(predict_batch(model, &mut tape, x, schema)?);
    }
    AttributeMetrics::from_predictions(schema, &preds, &labels)
}

/// Output layout for [`render_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Table,
}

/// Render a metrics report: one row per attribute in schema order, then a
/// `MACRO` row carrying count sums and unweighted score means. Ratios print
/// at six decimals, so the CSV round-trips through `f64` parsing exactly at
/// that precision.
pub fn render_report(metrics: &AttributeMetrics, format: ReportFormat) -> String {
    let mut total = AttributeScore::default();
    for s in metrics.scores() {
        total.merge(s);
    }
    let (macro_acc, macro_f1) = metrics.macro_average();
    let (macro_p, macro_r) = metrics.macro_precision_recall();

    match format {
        ReportFormat::Csv => {
            let mut out = String::from("attribute,tp,fp,tn,fn,acc,precision,recall,f1\n");
            for (name, s) in metrics.attributes().iter().zip(metrics.scores()) {
                out.push_str(&format!(
                    "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                    name,
                    s.true_pos,
                    s.false_pos,
                    s.true_neg,
                    s.false_neg,
                    s.accuracy(),
                    s.precision(),
                    s.recall(),
                    s.f1(),
                ));
            }
            out.push_str(&format!(
                "MACRO,{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                total.true_pos,
                total.false_pos,
                total.true_neg,
                total.false_neg,
                macro_acc,
                macro_p,
                macro_r,
                macro_f1,
            ));
            out
        }
        ReportFormat::Table => {
            let name_w = metrics
                .attributes()
                .iter()
                .map(String::len)
                .chain(["attribute".len(), "MACRO".len()])
                .max()
                .unwrap();
            let mut out = format!(
                "{:<name_w$}  {:>6} {:>6} {:>6} {:>6}  {:>8} {:>9} {:>8} {:>8}\n",
                "attribute", "tp", "fp", "tn", "fn", "acc", "precision", "recall", "f1",
            );
            for (name, s) in metrics.attributes().iter().zip(metrics.scores()) {
                out.push_str(&format!(
                    "{:<name_w$}  {:>6} {:>6} {:>6} {:>6}  {:>8.4} {:>9.4} {:>8.4} {:>8.4}\n",
                    name,
                    s.true_pos,
                    s.false_pos,
                    s.true_neg,
                    s.false_neg,
                    s.accuracy(),
                    s.precision(),
                    s.recall(),
                    s.f1(),
                ));
            }
            out.push_str(&format!(
                "{:<name_w$}  {:>6} {:>6} {:>6} {:>6}  {:>8.4} {:>9.4} {:>8.4} {:>8.4}\n",
                "MACRO",
                total.true_pos,
                total.false_pos,
                total.true_neg,
                total.false_neg,
                macro_acc,
                macro_p,
                macro_r,
                macro_f1,
            ));
            out
        }
    }
}
