//! Datasets, synthetic generators, non-IID partitioning and IDX loading.

mod idx;
mod partition;
mod quadratic;
mod synthetic;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use partition::{
    fisher_yates, mirror_plan, partition, partition_dirichlet, partition_iid, partition_shard_cap, PartitionPlan,
    PartitionScheme,
};
pub use quadratic::{gen_quadratic_clients, QuadraticFamily, QuadraticObjective};
pub use synthetic::{gen_synthetic_classification, split_per_class, SyntheticSpec};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, num_classes: usize },
    Real(Vec<Vec<f64>>),
}

/// Feature vectors with matching targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    targets: Targets,
}

impl Dataset {
    pub fn classification(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self { features, targets: Targets::Classes { labels, num_classes } })
    }

    pub fn regression(features: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} targets",
                features.len(),
                targets.len()
            )));
        }
        Ok(Self { features, targets: Targets::Real(targets) })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Real(_) => None,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes { num_classes, .. } => Some(*num_classes),
            Targets::Real(_) => None,
        }
    }

    /// Feature dimension (0 for an empty dataset).
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// The rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Data(format!("index {bad} out of range ({})", self.len())));
        }
        let features = indices.iter().map(|&i| self.features[i].clone()).collect();
        let targets = match &self.targets {
            Targets::Classes { labels, num_classes } => Targets::Classes {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
            Targets::Real(ys) => Targets::Real(indices.iter().map(|&i| ys[i].clone()).collect()),
        };
        Ok(Self { features, targets })
    }

    /// Indices of each class, ascending.
    pub fn indices_by_class(&self) -> Option<Vec<Vec<usize>>> {
        let (labels, num_classes) = match &self.targets {
            Targets::Classes { labels, num_classes } => (labels, *num_classes),
            Targets::Real(_) => return None,
        };
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y].push(i);
        }
        Some(by_class)
    }
}
