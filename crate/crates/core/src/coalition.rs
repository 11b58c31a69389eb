use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::Dataset;

/// A partition of the dataset into contributor coalitions.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionStructure {
    /// Coalition ids in ascending order with their member dataset indices.
    groups: Vec<(String, Vec<usize>)>,
    /// Coalition index of every dataset index.
    owner: Vec<usize>,
}

impl CoalitionStructure {
    /// Builds the structure from coalition id → example ids, checking that it
    /// partitions the dataset.
    pub fn new(dataset: &Dataset, members: BTreeMap<String, Vec<u64>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidCoalitions("no coalitions".into()));
        }
        let mut owner = vec![usize::MAX; dataset.len()];
        let mut groups = Vec::with_capacity(members.len());
        for (c, (name, ids)) in members.into_iter().enumerate() {
            if ids.is_empty() {
                return Err(Error::InvalidCoalitions(format!("coalition {name:?} is empty")));
            }
            let mut idxs = Vec::with_capacity(ids.len());
            for id in ids {
                let idx = dataset.index_of(id).ok_or_else(|| {
                    Error::InvalidCoalitions(format!("coalition {name:?} names unknown example {id}"))
                })?;
                if owner[idx] != usize::MAX {
                    return Err(Error::InvalidCoalitions(format!(
                        "example {id} belongs to more than one coalition"
                    )));
                }
                owner[idx] = c;
                idxs.push(idx);
            }
            idxs.sort_unstable();
            groups.push((name, idxs));
        }
        if let Some(idx) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidCoalitions(format!(
                "example {} is not in any coalition",
                dataset.examples()[idx].id
            )));
        }
        Ok(CoalitionStructure { groups, owner })
    }

    /// Uses each example's own coalition field.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let mut members: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for e in dataset.examples() {
            let c = e.coalition.clone().ok_or_else(|| {
                Error::InvalidCoalitions(format!("example {} has no coalition", e.id))
            })?;
            members.entry(c).or_default().push(e.id);
        }
        Self::new(dataset, members)
    }

    /// One coalition holding every example.
    pub fn grand(dataset: &Dataset) -> Result<Self> {
        let ids = dataset.examples().iter().map(|e| e.id).collect();
        Self::new(dataset, [("all".to_string(), ids)].into())
    }

    /// One coalition per example, named after the example id.
    pub fn singletons(dataset: &Dataset) -> Result<Self> {
        let members = dataset.examples().iter().map(|e| (format!("{:020}", e.id), vec![e.id])).collect();
        Self::new(dataset, members)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn name(&self, coalition: usize) -> &str {
        &self.groups[coalition].0
    }

    /// Dataset indices of a coalition's members, ascending.
    pub fn members(&self, coalition: usize) -> &[usize] {
        &self.groups[coalition].1
    }

    /// Coalition index of a dataset index.
    pub fn owner(&self, example: usize) -> usize {
        self.owner[example]
    }

    /// Member lists for every coalition, in coalition order.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        self.groups.iter().map(|(_, m)| m.clone()).collect()
    }
}
