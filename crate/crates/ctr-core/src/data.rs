//! Sample schema and dataset containers.
//!
//! A sample is one user-item exposure: `L` historical clicked items in
//! ascending click order, the exposed target item, auxiliary user features
//! and the binary click label. Histories shorter than `L` are left-padded
//! with the null item (zero raw vector, reserved category 0, target time);
//! `n_padded` records how many leading positions are padding so the
//! attention mask can zero them out.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng;
use crate::time::TimeSignals;

/// Width of the pre-extracted raw feature vector of every item.
pub const RAW_DIM: usize = 50;

/// Reserved category index for the padding null item.
pub const NULL_CID3: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct ItemRecord {
    pub raw: Vec<f64>,
    pub time: TimeSignals,
    pub cid3: usize,
}

impl ItemRecord {
    pub fn null_at(time: TimeSignals) -> Self {
        Self { raw: vec![0.0; RAW_DIM], time, cid3: NULL_CID3 }
    }

    pub fn validate(&self, n_categories: usize) -> Result<()> {
        if self.raw.len() != RAW_DIM {
            return Err(Error::Validation(format!(
                "raw feature vector has {} entries, expected {RAW_DIM}",
                self.raw.len()
            )));
        }
        if self.cid3 >= n_categories {
            return Err(Error::Validation(format!(
                "cid3 {} out of vocabulary {n_categories}",
                self.cid3
            )));
        }
        self.time.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Exactly `L` items, oldest first; the first `n_padded` are null items.
    pub history: Vec<ItemRecord>,
    pub n_padded: usize,
    pub target: ItemRecord,
    pub aux: Vec<f64>,
    pub label: bool,
    /// User identity when known (synthetic data always carries it); used by
    /// the user-fixed sampler, which falls back to uniform draws without it.
    pub user: Option<u64>,
}

impl Sample {
    pub fn label_f64(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }

    pub fn validate(&self, history_len: usize, n_categories: usize) -> Result<()> {
        if self.history.len() != history_len {
            return Err(Error::Validation(format!(
                "history has {} items, expected {history_len}",
                self.history.len()
            )));
        }
        if self.n_padded > self.history.len() {
            return Err(Error::Validation("padding exceeds history length".into()));
        }
        self.target.validate(n_categories)?;
        for (i, item) in self.history.iter().enumerate() {
            item.validate(n_categories)
                .map_err(|e| Error::Validation(format!("history[{i}]: {e}")))?;
            if item.time.t_a > self.target.time.t_a {
                return Err(Error::Validation(format!(
                    "history[{i}] clicked at {} after the exposure at {}",
                    item.time.t_a, self.target.time.t_a
                )));
            }
        }
        Ok(())
    }
}

/// Ground-truth logits for synthetic data, aligned with the positive and
/// negative lists of the dataset they were generated with. `timeblind`
/// carries the same logits with the periodic component removed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruthSidecar {
    pub pos_full: Vec<f64>,
    pub pos_timeblind: Vec<f64>,
    pub neg_full: Vec<f64>,
    pub neg_timeblind: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub positives: Vec<Sample>,
    pub negatives: Vec<Sample>,
    /// Category vocabulary size (index 0 is the padding category).
    pub n_categories: usize,
    pub truth: Option<TruthSidecar>,
}

impl Dataset {
    pub fn empty(n_categories: usize) -> Self {
        Self { positives: Vec::new(), negatives: Vec::new(), n_categories, truth: None }
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Positive fraction; `None` on an empty dataset.
    pub fn ctr(&self) -> Option<f64> {
        if self.is_empty() {
            None
        } else {
            Some(self.positives.len() as f64 / self.len() as f64)
        }
    }

    pub fn aux_dim(&self) -> usize {
        self.positives
            .first()
            .or_else(|| self.negatives.first())
            .map_or(0, |s| s.aux.len())
    }

    pub fn history_len(&self) -> usize {
        self.positives
            .first()
            .or_else(|| self.negatives.first())
            .map_or(0, |s| s.history.len())
    }
}

/// Epoch-shuffled minibatches of positive indices: full batches plus one
/// ragged tail. The permutation folds the epoch index into the seed, so
/// epochs see different orders but runs replay exactly.
pub struct MinibatchIter {
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl MinibatchIter {
    pub fn new(count: usize, batch_size: usize, seed: u64, epoch: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        let mut order: Vec<usize> = (0..count).collect();
        // One independent permutation per epoch, keyed by (seed, epoch).
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut stream = rand_chacha::ChaCha12Rng::seed_from_u64(
            rng::subseed(seed, "minibatch") ^ (epoch as u64).wrapping_mul(0x9e3779b97f4a7c15),
        );
        order.shuffle(&mut stream);
        Ok(Self { order, batch_size, cursor: 0 })
    }
}

impl Iterator for MinibatchIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Some(batch)
    }
}
