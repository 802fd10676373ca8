//! FIFO store of detached embeddings with their cluster ids and sensitive
//! attributes, used to find cross-batch pseudo-counterfactual partners.
//!
//! Entries are plain values: nothing stored here can carry a gradient back
//! to the network that produced it.

use std::collections::VecDeque;

use crate::diffcore::Matrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QueueEntry {
    pub z: Vec<f64>,
    pub cluster: usize,
    pub sensitive: u8,
}

/// Read-only copy of the queue contents, oldest entry first.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueSnapshot {
    pub z: Matrix,
    pub cluster: Vec<usize>,
    pub sensitive: Vec<u8>,
}

impl QueueSnapshot {
    pub fn len(&self) -> usize {
        self.cluster.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct FeatureQueue {
    dim: usize,
    capacity: usize,
    entries: VecDeque<QueueEntry>,
}

impl FeatureQueue {
    /// `capacity` is an element cap; the trainer sets it to
    /// `batches_retained × rows_per_batch`.
    pub fn new(dim: usize, capacity: usize) -> Self {
        Self {
            dim,
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn enqueue_batch(&mut self, z: &Matrix, cluster: &[usize], sensitive: &[u8]) -> Result<()> {
        if z.rows() != cluster.len() || z.rows() != sensitive.len() {
            return Err(Error::Contract(format!(
                "enqueue got {} embeddings, {} cluster ids, {} sensitive values",
                z.rows(),
                cluster.len(),
                sensitive.len()
            )));
        }
        if z.cols() != self.dim {
            return Err(Error::Contract(format!(
                "queue stores {}-dim embeddings, got {}",
                self.dim,
                z.cols()
            )));
        }
        for ((row, &c), &s) in z.iter_rows().zip(cluster).zip(sensitive) {
            self.entries.push_back(QueueEntry {
                z: row.to_vec(),
                cluster: c,
                sensitive: s,
            });
        }
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = &QueueEntry> {
        self.entries.iter()
    }

    pub fn snapshot(&self) -> QueueSnapshot {
        let mut data = Vec::with_capacity(self.entries.len() * self.dim);
        let mut cluster = Vec::with_capacity(self.entries.len());
        let mut sensitive = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            data.extend_from_slice(&e.z);
            cluster.push(e.cluster);
            sensitive.push(e.sensitive);
        }
        QueueSnapshot {
            z: Matrix::from_vec(self.entries.len(), self.dim, data),
            cluster,
            sensitive,
        }
    }
}
