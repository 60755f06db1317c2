use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint node-id sets. Serialized as `{"train":[..],"val":[..],"test":[..]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::InvalidArgument("training split is empty".into()));
        }
        let mut seen = HashSet::new();
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &id in ids {
                if id >= num_nodes {
                    return Err(Error::InvalidArgument(format!(
                        "{name} split holds node {id} outside 0..{num_nodes}"
                    )));
                }
                if !seen.insert(id) {
                    return Err(Error::InvalidArgument(format!(
                        "node {id} appears twice across splits"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn by_name(&self, name: &str) -> Option<&[usize]> {
        match name {
            "train" => Some(&self.train),
            "val" | "validation" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Samples `per_class_train` nodes of every class for training, then `val_size`
/// of the remaining nodes for validation; everything else is test. Each list is sorted.
pub fn make_splits(
    labels: &[usize],
    per_class_train: usize,
    val_size: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    if per_class_train == 0 {
        return Err(Error::InvalidArgument(
            "per_class_train must be at least 1".into(),
        ));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; labels.len()];
    let mut train = Vec::with_capacity(per_class_train * num_classes);
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < per_class_train {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} nodes, fewer than {per_class_train}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..per_class_train] {
            in_train[i] = true;
            train.push(i);
        }
    }
    let mut rest: Vec<usize> = (0..labels.len()).filter(|&i| !in_train[i]).collect();
    if rest.len() < val_size {
        return Err(Error::InvalidArgument(format!(
            "only {} nodes left for a validation set of {val_size}",
            rest.len()
        )));
    }
    rest.shuffle(&mut rng);
    let mut val = rest[..val_size].to_vec();
    let mut test = rest[val_size..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_classes() -> Vec<usize> {
        (0..60).map(|i| i % 2).collect()
    }

    #[test]
    fn split_sizes() {
        let labels = two_classes();
        let s = make_splits(&labels, 20, 10, 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (40, 10, 10));
        s.validate(60).unwrap();
        for c in 0..2 {
            assert_eq!(s.train.iter().filter(|&&i| labels[i] == c).count(), 20);
        }
    }

    #[test]
    fn zero_train_rejected() {
        assert!(make_splits(&two_classes(), 0, 10, 0).is_err());
    }

    #[test]
    fn small_class_rejected() {
        assert!(make_splits(&two_classes(), 31, 0, 0).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let labels = two_classes();
        assert_eq!(make_splits(&labels, 5, 7, 11).unwrap(), make_splits(&labels, 5, 7, 11).unwrap());
        assert_ne!(make_splits(&labels, 5, 7, 11).unwrap(), make_splits(&labels, 5, 7, 12).unwrap());
    }

    #[test]
    fn overlapping_split_invalid() {
        let s = DatasetSplit { train: vec![0, 1], val: vec![1], test: vec![] };
        assert!(s.validate(3).is_err());
        let s = DatasetSplit { train: vec![], val: vec![1], test: vec![] };
        assert!(s.validate(3).is_err());
    }
}
