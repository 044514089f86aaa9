use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{batch_order, Batch, BatchConfig, BatchPurpose, EncodedExample};
use crate::error::{Error, Result};

/// Deterministically combines a seed with a stream index (SplitMix64).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps iteration numbers to training batches. Each epoch is a fresh
/// seeded shuffle, so batch `k` depends only on `(seed, k)`.
#[derive(Clone, Debug)]
pub struct Schedule {
    config: BatchConfig,
    seed: u64,
    epoch: Option<(u64, Vec<Vec<usize>>)>,
}

impl Schedule {
    pub fn new(config: BatchConfig, seed: u64) -> Self {
        Self { config, seed, epoch: None }
    }

    pub fn member_indices(&mut self, examples: &[EncodedExample], iteration: u64) -> Result<Vec<usize>> {
        let per_epoch = match &self.epoch {
            Some((_, chunks)) => chunks.len() as u64,
            None => batch_order(examples, &self.config, BatchPurpose::Train, mix_seed(self.seed, 0)).len() as u64,
        };
        if per_epoch == 0 {
            return Err(Error::Contract("no training example fits the length caps".into()));
        }
        let epoch = iteration / per_epoch;
        if self.epoch.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let chunks = batch_order(examples, &self.config, BatchPurpose::Train, mix_seed(self.seed, epoch));
            self.epoch = Some((epoch, chunks));
        }
        let (_, chunks) = self.epoch.as_ref().expect("epoch just filled");
        Ok(chunks[(iteration % per_epoch) as usize].clone())
    }

    pub fn batch(&mut self, examples: &[EncodedExample], iteration: u64) -> Result<Batch> {
        let members = self.member_indices(examples, iteration)?;
        Ok(Batch::from_examples(examples, members, &self.config))
    }
}

/// One run-log line: interval means of the loss components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: u64,
    pub loss_total: f64,
    pub loss_answerability: f64,
    pub loss_start: f64,
    pub loss_end: f64,
    pub lr: f64,
    pub wall_time_secs: f64,
}

/// Accumulates losses between log records.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalMeter {
    sums: [f64; 4],
    count: usize,
}

impl IntervalMeter {
    pub fn add(&mut self, loss: &super::LossBreakdown) {
        for (s, v) in self.sums.iter_mut().zip([loss.total, loss.l0, loss.l1, loss.l2]) {
            *s += v;
        }
        self.count += 1;
    }

    /// Emits the interval means and resets.
    pub fn take(&mut self, iteration: u64, lr: f64, wall_time_secs: f64) -> LogRecord {
        let n = self.count.max(1) as f64;
        let [t, a, s, e] = self.sums.map(|v| v / n);
        *self = Self::default();
        LogRecord { iteration, loss_total: t, loss_answerability: a, loss_start: s, loss_end: e, lr, wall_time_secs }
    }
}
