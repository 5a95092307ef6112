use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::partition::fisher_yates;
use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Parameters of a Gaussian-blob classification dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub class_separation: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

/// Unit direction of class `c`: `+e_c` for the first `dim` classes, `-e_c`
/// for the next `dim`, then seeded random unit vectors.
fn class_direction(c: usize, dim: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let mut dir = vec![0.0; dim];
    if c < dim {
        dir[c] = 1.0;
    } else if c < 2 * dim {
        dir[c - dim] = -1.0;
    } else {
        loop {
            for v in dir.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-8 {
                dir.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        }
    }
    dir
}

/// Gaussian blobs centred at `class_separation` times a distinct unit
/// direction per class. Rows are grouped by class, ascending.
pub fn gen_synthetic_classification(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    class_separation: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<Dataset> {
    if dim < 1 {
        return Err(Error::Config("synthetic data needs dim >= 1".into()));
    }
    if num_classes < 1 || per_class < 1 {
        return Err(Error::Config("synthetic data needs at least one class and sample".into()));
    }
    if !(class_separation > 0.0) || !class_separation.is_finite() {
        return Err(Error::Config(format!(
            "class separation must be > 0, got {class_separation}"
        )));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::Config(format!("noise sd must be >= 0, got {noise_sd}")));
    }
    let mut dir_rng = rng::rng_from(seed, &[rng::stream::DATA, 0]);
    let mut noise_rng = rng::rng_from(seed, &[rng::stream::DATA, 1]);
    let mut features = Vec::with_capacity(num_classes * per_class);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for c in 0..num_classes {
        let mean: Vec<f64> = class_direction(c, dim, &mut dir_rng)
            .into_iter()
            .map(|v| v * class_separation)
            .collect();
        for _ in 0..per_class {
            let x = mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut noise_rng);
                    m + noise_sd * z
                })
                .collect();
            features.push(x);
            labels.push(c);
        }
    }
    Dataset::classification(features, labels, num_classes)
}

/// Splits a classification dataset into (train, test) by moving `test_per_class`
/// seeded-random samples of every class into the test set.
pub fn split_per_class(data: &Dataset, test_per_class: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let by_class = data
        .indices_by_class()
        .ok_or_else(|| Error::Usage("per-class split needs class labels".into()))?;
    let mut rng = rng::rng_from(seed, &[rng::stream::DATA, 2]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut idx in by_class {
        if idx.len() <= test_per_class && !idx.is_empty() {
            return Err(Error::Data(format!(
                "class with {} samples cannot give {test_per_class} to the test split",
                idx.len()
            )));
        }
        fisher_yates(&mut idx, &mut rng);
        let (te, tr) = idx.split_at(test_per_class.min(idx.len()));
        let mut te = te.to_vec();
        let mut tr = tr.to_vec();
        te.sort_unstable();
        tr.sort_unstable();
        test.extend(te);
        train.extend(tr);
    }
    Ok((data.subset(&train)?, data.subset(&test)?))
}
