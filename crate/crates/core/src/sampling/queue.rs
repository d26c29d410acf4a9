//! Prefetching patch queue.
//!
//! Worker threads take subjects from a shared work list, load and transform
//! them, draw `samples_per_volume` patches and push them into a bounded
//! channel. The consumer fills a buffer of `max_length` patches, shuffles it
//! if asked, and drains it before refilling.
//!
//! Subject `i` in epoch `e` always uses `Rng::new(seed_for(seed, i, e))` for
//! both its transform and its patch draws, so patch content does not depend
//! on the number of workers. Arrival order does.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::{Patch, Sampler};
use crate::error::{Error, Result};
use crate::image::SubjectsDataset;
use crate::rng::{seed_for, Rng};

/// Stream indices reserved for the queue's own shuffles.
const SUBJECT_SHUFFLE_STREAM: u64 = u64::MAX;
const PATCH_SHUFFLE_STREAM: u64 = u64::MAX - 1;

#[derive(Clone, Debug, PartialEq)]
pub struct QueueConfig {
    pub max_length: usize,
    pub samples_per_volume: usize,
    pub num_workers: usize,
    pub shuffle_subjects: bool,
    pub shuffle_patches: bool,
    pub seed: u64,
}

impl Default for QueueConfig {
    fn default() -> Self {
        QueueConfig {
            max_length: 64,
            samples_per_volume: 8,
            num_workers: 1,
            shuffle_subjects: true,
            shuffle_patches: true,
            seed: 0,
        }
    }
}

impl QueueConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_volume < 1 || self.max_length < self.samples_per_volume {
            return Err(Error::InvalidParameter(
                "queue needs max_length >= samples_per_volume >= 1".into(),
            ));
        }
        if self.num_workers < 1 {
            return Err(Error::InvalidParameter("queue needs at least one worker".into()));
        }
        Ok(())
    }
}

pub struct Queue {
    dataset: Arc<SubjectsDataset>,
    sampler: Arc<Sampler>,
    config: QueueConfig,
}

impl Queue {
    pub fn new(dataset: SubjectsDataset, sampler: Sampler, config: QueueConfig) -> Result<Self> {
        config.validate()?;
        Ok(Queue {
            dataset: Arc::new(dataset),
            sampler: Arc::new(sampler),
            config,
        })
    }

    pub fn config(&self) -> &QueueConfig {
        &self.config
    }

    /// Patches per epoch.
    pub fn epoch_len(&self) -> usize {
        self.dataset.len() * self.config.samples_per_volume
    }

    /// Subject order for an epoch.
    pub fn subject_order(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.dataset.len()).collect();
        if self.config.shuffle_subjects {
            Rng::new(seed_for(self.config.seed, SUBJECT_SHUFFLE_STREAM, epoch)).shuffle(&mut order);
        }
        order
    }

    /// Starts the workers for one epoch.
    pub fn epoch(&self, epoch: u64) -> EpochIter {
        let cfg = self.config.clone();
        let order = Arc::new(self.subject_order(epoch));
        let next = Arc::new(AtomicUsize::new(0));
        let (tx, rx) = sync_channel::<Result<Patch>>(cfg.max_length);
        let workers = (0..cfg.num_workers.min(order.len()).max(1))
            .map(|_| {
                let (tx, order, next) = (tx.clone(), order.clone(), next.clone());
                let (dataset, sampler) = (self.dataset.clone(), self.sampler.clone());
                let (seed, per_volume) = (cfg.seed, cfg.samples_per_volume);
                std::thread::spawn(move || loop {
                    let pos = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&index) = order.get(pos) else { break };
                    let mut rng = Rng::new(seed_for(seed, index as u64, epoch));
                    let tag = |e: Error| Error::Subject {
                        index,
                        source: Box::new(e),
                    };
                    let subject = match dataset.prepare(index, &mut rng) {
                        Ok(s) => s,
                        Err(e) => {
                            if tx.send(Err(tag(e))).is_err() {
                                break;
                            }
                            continue;
                        }
                    };
                    for _ in 0..per_volume {
                        let item = sampler.sample(&subject, index, &mut rng).map_err(tag);
                        let failed = item.is_err();
                        if tx.send(item).is_err() {
                            return;
                        }
                        if failed {
                            break;
                        }
                    }
                })
            })
            .collect();
        EpochIter {
            rx: Some(rx),
            workers,
            buffer: VecDeque::with_capacity(cfg.max_length),
            max_length: cfg.max_length,
            shuffle: cfg.shuffle_patches.then(|| Rng::new(seed_for(cfg.seed, PATCH_SHUFFLE_STREAM, epoch))),
        }
    }
}

/// Patches of one epoch, in consumption order.
pub struct EpochIter {
    rx: Option<Receiver<Result<Patch>>>,
    workers: Vec<JoinHandle<()>>,
    buffer: VecDeque<Result<Patch>>,
    max_length: usize,
    shuffle: Option<Rng>,
}

impl EpochIter {
    fn refill(&mut self) {
        let Some(rx) = &self.rx else { return };
        while self.buffer.len() < self.max_length {
            match rx.recv() {
                Ok(item) => self.buffer.push_back(item),
                Err(_) => {
                    self.rx = None;
                    break;
                }
            }
        }
        if let Some(rng) = &mut self.shuffle {
            rng.shuffle(self.buffer.make_contiguous());
        }
    }
}

impl Iterator for EpochIter {
    type Item = Result<Patch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.buffer.is_empty() {
            self.refill();
        }
        self.buffer.pop_front()
    }
}

impl Drop for EpochIter {
    fn drop(&mut self) {
        // Closing the channel unblocks any worker waiting to send.
        self.rx = None;
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
