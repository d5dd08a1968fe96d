//! Deterministic batch scheduling.
//!
//! A plan is a pure function of `(seed, step)` — it holds no iterator state,
//! so resuming a run at step `k` reproduces exactly the batches an
//! uninterrupted run would have seen. The longer domain drives the epoch: it
//! is reshuffled once per epoch and walked in order, with the final short
//! chunk padded by extra draws so every batch has the same size. The other
//! domain is resampled with replacement each step, which keeps the pairing
//! unbiased when the domains have different sizes.

use ndarray::Array4;
use rand::Rng;

use super::{Dataset, Domain};
use crate::error::DataError;
use crate::nn::rng_from;
use crate::schema::group_targets;

const STREAM_DRIVER: u64 = 0x21;
const STREAM_PAD: u64 = 0x22;
const STREAM_FOLLOWER: u64 = 0x23;

/// Epoch-shuffled index schedule over one dataset.
#[derive(Debug, Clone)]
pub struct EpochPlan {
    n: usize,
    batch_size: usize,
    seed: u64,
}

impl EpochPlan {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self, DataError> {
        if batch_size == 0 {
            return Err(DataError::BadBatchSize);
        }
        if n == 0 {
            return Err(DataError::EmptyDomain("requested"));
        }
        Ok(EpochPlan { n, batch_size, seed })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Batches per pass over the data; the last batch is padded, not dropped.
    pub fn steps_per_epoch(&self) -> u64 {
        self.n.div_ceil(self.batch_size) as u64
    }

    fn shuffled(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n).collect();
        let mut rng = rng_from(self.seed, STREAM_DRIVER, epoch);
        // Fisher–Yates, fixed walk order for reproducibility.
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        order
    }

    /// Indices of the batch at `step` (counted from 0 across all epochs).
    pub fn indices_at(&self, step: u64) -> Vec<usize> {
        let spe = self.steps_per_epoch();
        let epoch = step / spe;
        let offset = ((step % spe) as usize) * self.batch_size;
        let order = self.shuffled(epoch);
        let mut out: Vec<usize> =
            order[offset..(offset + self.batch_size).min(self.n)].to_vec();
        let mut pad_rng = rng_from(self.seed, STREAM_PAD, step);
        while out.len() < self.batch_size {
            out.push(order[pad_rng.gen_range(0..self.n)]);
        }
        out
    }
}

/// Paired schedule over a source and a target dataset. The longer domain
/// (source on ties) drives epochs; the other follows by resampling.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    driver: EpochPlan,
    driver_domain: Domain,
    n_other: usize,
    seed: u64,
}

impl BatchPlan {
    pub fn new(
        n_source: usize,
        n_target: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self, DataError> {
        if batch_size == 0 {
            return Err(DataError::BadBatchSize);
        }
        if n_source == 0 {
            return Err(DataError::EmptyDomain(Domain::Source.name()));
        }
        if n_target == 0 {
            return Err(DataError::EmptyDomain(Domain::Target.name()));
        }
        let (driver_domain, n_driver, n_other) = if n_target > n_source {
            (Domain::Target, n_target, n_source)
        } else {
            (Domain::Source, n_source, n_target)
        };
        Ok(BatchPlan {
            driver: EpochPlan::new(n_driver, batch_size, seed)?,
            driver_domain,
            n_other,
            seed,
        })
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.driver.steps_per_epoch()
    }

    pub fn batch_size(&self) -> usize {
        self.driver.batch_size()
    }

    /// `(source indices, target indices)` for the given step.
    pub fn indices_at(&self, step: u64) -> (Vec<usize>, Vec<usize>) {
        let driven = self.driver.indices_at(step);
        let mut rng = rng_from(self.seed, STREAM_FOLLOWER, step);
        let follower: Vec<usize> =
            (0..self.batch_size()).map(|_| rng.gen_range(0..self.n_other)).collect();
        match self.driver_domain {
            Domain::Source => (driven, follower),
            Domain::Target => (follower, driven),
        }
    }
}

/// A labeled minibatch: images plus per-group class targets.
#[derive(Debug, Clone)]
pub struct SourceBatch {
    /// `[B, C, H, W]` image stack.
    pub images: Array4<f32>,
    pub ids: Vec<String>,
    pub indices: Vec<usize>,
    /// Binary attribute rows, one per sample.
    pub labels: Vec<Vec<u8>>,
    /// `group_targets[b][g]` = class index of sample `b` in group `g`.
    pub group_targets: Vec<Vec<usize>>,
}

/// An unlabeled minibatch. Deliberately has no label field: adaptation code
/// cannot read target annotations even when the dataset carries them.
#[derive(Debug, Clone)]
pub struct TargetBatch {
    pub images: Array4<f32>,
    pub ids: Vec<String>,
    pub indices: Vec<usize>,
}

/// Assemble a labeled batch; fails on the first unlabeled sample.
pub fn labeled_batch(dataset: &Dataset, indices: &[usize]) -> Result<SourceBatch, DataError> {
    let mut labels = Vec::with_capacity(indices.len());
    let mut targets = Vec::with_capacity(indices.len());
    let mut ids = Vec::with_capacity(indices.len());
    for &idx in indices {
        let sample = &dataset.samples[idx];
        let bits = sample
            .labels
            .as_ref()
            .ok_or_else(|| DataError::UnlabeledSample { id: sample.id.clone() })?;
        targets.push(
            group_targets(&dataset.schema, bits)
                .map_err(|source| DataError::SampleSchema { id: sample.id.clone(), source })?,
        );
        labels.push(bits.clone());
        ids.push(sample.id.clone());
    }
    Ok(SourceBatch {
        images: dataset.stack_images(indices),
        ids,
        indices: indices.to_vec(),
        labels,
        group_targets: targets,
    })
}

/// Assemble an unlabeled batch (labels, if present, are dropped here).
pub fn unlabeled_batch(dataset: &Dataset, indices: &[usize]) -> TargetBatch {
    TargetBatch {
        images: dataset.stack_images(indices),
        ids: indices.iter().map(|&i| dataset.samples[i].id.clone()).collect(),
        indices: indices.to_vec(),
    }
}

/// One adaptation step's worth of data: a labeled source batch and an
/// unlabeled target batch of equal size.
pub fn paired_batch(
    source: &Dataset,
    target: &Dataset,
    plan: &BatchPlan,
    step: u64,
) -> Result<(SourceBatch, TargetBatch), DataError> {
    let (source_idx, target_idx) = plan.indices_at(step);
    Ok((labeled_batch(source, &source_idx)?, unlabeled_batch(target, &target_idx)))
}
