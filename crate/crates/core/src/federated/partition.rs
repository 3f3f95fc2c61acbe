//! Assignment of samples to devices.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FederatedError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum PartitionScheme {
    /// Uniformly shuffled, equal-sized chunks.
    Iid,
    /// Sorted by label, cut into `devices * shards_per_device` contiguous
    /// shards, shards dealt at random.
    ShardSorted { shards_per_device: usize },
}

/// Disjoint cover of the dataset by devices.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<Vec<usize>>,
    scheme: PartitionScheme,
}

impl Partition {
    /// Partition from explicit per-device sample lists.
    pub fn from_assignment(assignment: Vec<Vec<usize>>, scheme: PartitionScheme) -> Result<Self, FederatedError> {
        if assignment.is_empty() || assignment.iter().any(Vec::is_empty) {
            return Err(FederatedError::InvalidSpec { name: "partition", value: assignment.len() as f64 });
        }
        Ok(Self { assignment, scheme })
    }

    pub fn devices(&self) -> usize {
        self.assignment.len()
    }

    pub fn samples(&self, dev: usize) -> &[usize] {
        &self.assignment[dev]
    }

    pub fn data_sizes(&self) -> Vec<usize> {
        self.assignment.iter().map(Vec::len).collect()
    }

    pub fn scheme(&self) -> PartitionScheme {
        self.scheme
    }
}

pub fn make_partition<R: Rng + ?Sized>(
    labels: &[usize],
    devices: usize,
    scheme: PartitionScheme,
    rng: &mut R,
) -> Result<Partition, FederatedError> {
    let n = labels.len();
    let assignment = match scheme {
        PartitionScheme::Iid => {
            if devices == 0 || devices > n {
                return Err(FederatedError::InvalidSpec { name: "devices", value: devices as f64 });
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            split_even(&order, devices).into_iter().map(sorted).collect()
        }
        PartitionScheme::ShardSorted { shards_per_device } => {
            let shards = devices * shards_per_device;
            if shards == 0 || shards > n {
                return Err(FederatedError::InvalidSpec { name: "shards", value: shards as f64 });
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&j| (labels[j], j));
            let mut pieces = split_even(&order, shards);
            pieces.shuffle(rng);
            pieces.chunks(shards_per_device).map(|c| sorted(c.concat())).collect()
        }
    };
    Partition::from_assignment(assignment, scheme)
}

fn split_even(items: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let (base, extra) = (items.len() / parts, items.len() % parts);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for k in 0..parts {
        let len = base + usize::from(k < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}
