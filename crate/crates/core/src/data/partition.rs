//! Splitting a dataset across clients.

use std::collections::BTreeSet;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum PartitionScheme {
    /// At most `classes_per_client` distinct classes per client.
    ShardCap { classes_per_client: usize },
    /// Per-class client proportions drawn from a symmetric Dirichlet.
    Dirichlet { alpha: f64 },
    Iid,
}

/// Per-client index lists into a parent dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionPlan {
    clients: Vec<Vec<usize>>,
    scheme: PartitionScheme,
    seed: u64,
}

impl PartitionPlan {
    /// Checks disjointness, bounds and nonemptiness.
    pub fn new(
        clients: Vec<Vec<usize>>,
        scheme: PartitionScheme,
        seed: u64,
        parent_len: usize,
    ) -> Result<Self> {
        let mut seen = vec![false; parent_len];
        for (k, idx) in clients.iter().enumerate() {
            if idx.is_empty() {
                return Err(Error::Partition(format!("client {k} received no samples")));
            }
            for &i in idx {
                if i >= parent_len {
                    return Err(Error::Partition(format!(
                        "client {k} holds index {i} outside the dataset ({parent_len})"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Partition(format!("index {i} assigned twice")));
                }
            }
        }
        Ok(Self { clients, scheme, seed })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn client(&self, k: usize) -> &[usize] {
        &self.clients[k]
    }

    pub fn clients(&self) -> &[Vec<usize>] {
        &self.clients
    }

    pub fn scheme(&self) -> PartitionScheme {
        self.scheme
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn total_assigned(&self) -> usize {
        self.clients.iter().map(Vec::len).sum()
    }

    /// `|D_k| / |D|`, with `|D|` the number of assigned samples.
    pub fn weights(&self) -> Vec<f64> {
        let total = self.total_assigned() as f64;
        self.clients.iter().map(|c| c.len() as f64 / total).collect()
    }

    /// Distinct classes held by each client.
    pub fn classes_per_client(&self, data: &Dataset) -> Option<Vec<usize>> {
        let labels = data.labels()?;
        Some(
            self.clients
                .iter()
                .map(|idx| idx.iter().map(|&i| labels[i]).collect::<BTreeSet<_>>().len())
                .collect(),
        )
    }

    /// Materializes each client's dataset.
    pub fn split(&self, data: &Dataset) -> Result<Vec<Dataset>> {
        self.clients.iter().map(|idx| data.subset(idx)).collect()
    }
}

/// In-place Fisher-Yates shuffle.
pub fn fisher_yates<T>(items: &mut [T], rng: &mut rng::Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

pub fn partition(data: &Dataset, num_clients: usize, scheme: PartitionScheme, seed: u64) -> Result<PartitionPlan> {
    match scheme {
        PartitionScheme::ShardCap { classes_per_client } => {
            partition_shard_cap(data, num_clients, classes_per_client, seed)
        }
        PartitionScheme::Dirichlet { alpha } => partition_dirichlet(data, num_clients, alpha, seed),
        PartitionScheme::Iid => partition_iid(data, num_clients, seed),
    }
}

/// Seeded shuffle, then round-robin dealing.
pub fn partition_iid(data: &Dataset, num_clients: usize, seed: u64) -> Result<PartitionPlan> {
    if num_clients == 0 {
        return Err(Error::Partition("need at least one client".into()));
    }
    if data.len() < num_clients {
        return Err(Error::Partition(format!(
            "{} samples cannot cover {num_clients} clients",
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    fisher_yates(&mut idx, &mut rng::rng_from(seed, &[rng::stream::PARTITION, 0]));
    let mut clients = vec![Vec::new(); num_clients];
    for (j, i) in idx.into_iter().enumerate() {
        clients[j % num_clients].push(i);
    }
    PartitionPlan::new(clients, PartitionScheme::Iid, seed, data.len())
}

/// Class-pure shards of `|D| / (N * S)` samples, shuffled and dealt
/// round-robin so that every client receives at most `S` shards.
///
/// Samples that do not fill a whole shard of their class are left out.
pub fn partition_shard_cap(
    data: &Dataset,
    num_clients: usize,
    classes_per_client: usize,
    seed: u64,
) -> Result<PartitionPlan> {
    if classes_per_client == 0 {
        return Err(Error::Partition("classes per client must be >= 1".into()));
    }
    if num_clients == 0 {
        return Err(Error::Partition("need at least one client".into()));
    }
    let by_class = data
        .indices_by_class()
        .ok_or_else(|| Error::Usage("shard partitioning needs class labels".into()))?;
    let wanted = num_clients * classes_per_client;
    if wanted < by_class.len() {
        log::warn!(
            "{num_clients} clients x {classes_per_client} classes cannot cover all {} classes",
            by_class.len()
        );
    }
    let shard_size = data.len() / wanted;
    if shard_size == 0 {
        return Err(Error::Partition(format!(
            "{} samples are too few for {wanted} shards",
            data.len()
        )));
    }
    let mut shards: Vec<&[usize]> = by_class
        .iter()
        .flat_map(|idx| idx.chunks_exact(shard_size))
        .collect();
    if shards.len() < num_clients {
        return Err(Error::Partition(format!(
            "only {} class-pure shards for {num_clients} clients",
            shards.len()
        )));
    }
    fisher_yates(&mut shards, &mut rng::rng_from(seed, &[rng::stream::PARTITION, 0]));
    let mut clients = vec![Vec::new(); num_clients];
    for (j, shard) in shards.into_iter().take(wanted).enumerate() {
        clients[j % num_clients].extend_from_slice(shard);
    }
    for c in clients.iter_mut() {
        c.sort_unstable();
    }
    PartitionPlan::new(
        clients,
        PartitionScheme::ShardCap { classes_per_client },
        seed,
        data.len(),
    )
}

/// One draw from the symmetric Dirichlet(alpha) over `n` categories.
///
/// Works in log space so that tiny `alpha` does not underflow every gamma
/// draw to zero: for `alpha < 1`, `Gamma(alpha) = Gamma(alpha + 1) * U^(1/alpha)`.
fn dirichlet_draw(alpha: f64, n: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let (shape, boost) = if alpha < 1.0 { (alpha + 1.0, true) } else { (alpha, false) };
    let gamma = Gamma::new(shape, 1.0).expect("positive gamma shape");
    let logs: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let mut lg = g.ln();
            if boost {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                lg += u.ln() / alpha;
            }
            lg
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Integer counts summing to `total`, closest to `total * props`: floors
/// plus one extra unit for the largest fractional parts (ties to lower index).
pub(crate) fn largest_remainder(total: usize, props: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = props.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Splits `test` so each client's held-out samples follow the label mix of
/// its training samples: every class's test rows are shared among the
/// clients holding that class, in proportion to their training counts.
pub fn mirror_plan(plan: &PartitionPlan, train: &Dataset, test: &Dataset, seed: u64) -> Result<PartitionPlan> {
    let train_labels = train
        .labels()
        .ok_or_else(|| Error::Partition("mirrored splits need class labels".into()))?;
    let test_by_class = test
        .indices_by_class()
        .ok_or_else(|| Error::Partition("mirrored splits need class labels".into()))?;
    let num_classes = test_by_class.len();
    let mut holdings = vec![vec![0usize; plan.num_clients()]; num_classes];
    for (k, idx) in plan.clients().iter().enumerate() {
        for &i in idx {
            if let Some(row) = holdings.get_mut(train_labels[i]) {
                row[k] += 1;
            }
        }
    }
    let mut clients = vec![Vec::new(); plan.num_clients()];
    for (c, rows) in test_by_class.into_iter().enumerate() {
        let total: usize = holdings[c].iter().sum();
        if total == 0 {
            continue;
        }
        let props: Vec<f64> = holdings[c].iter().map(|&h| h as f64 / total as f64).collect();
        let counts = largest_remainder(rows.len(), &props);
        let mut rows = rows;
        fisher_yates(&mut rows, &mut rng::rng_from(seed, &[rng::stream::PARTITION, 3, c as u64]));
        let mut start = 0;
        for (k, n) in counts.into_iter().enumerate() {
            clients[k].extend_from_slice(&rows[start..start + n]);
            start += n;
        }
    }
    // A client with only a few training samples can round to no test rows.
    // Give it one from a class it trains on, taken from the largest holder.
    let test_labels = test.labels().expect("checked above");
    while let Some(empty) = clients.iter().position(Vec::is_empty) {
        let donor = (0..num_classes)
            .filter(|&c| holdings[c][empty] > 0)
            .flat_map(|c| {
                let clients = &clients;
                (0..clients.len()).filter_map(move |k| {
                    let pos = clients[k].iter().rposition(|&i| test_labels[i] == c)?;
                    (clients[k].len() > 1).then_some((clients[k].len(), k, pos))
                })
            })
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let Some((_, k, pos)) = donor else { break };
        let moved = clients[k].remove(pos);
        clients[empty].push(moved);
    }
    for idx in clients.iter_mut() {
        idx.sort_unstable();
    }
    PartitionPlan::new(clients, plan.scheme(), seed, test.len())
}

/// Per-class Dirichlet(alpha) proportions, largest-remainder rounding, and a
/// repair pass that moves one sample from the largest client into each empty one.
pub fn partition_dirichlet(
    data: &Dataset,
    num_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<PartitionPlan> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Partition(format!("dirichlet alpha must be > 0, got {alpha}")));
    }
    if num_clients == 0 {
        return Err(Error::Partition("need at least one client".into()));
    }
    if data.len() < num_clients {
        return Err(Error::Partition(format!(
            "{} samples cannot cover {num_clients} clients",
            data.len()
        )));
    }
    let by_class = data
        .indices_by_class()
        .ok_or_else(|| Error::Usage("dirichlet partitioning needs class labels".into()))?;
    // Proportions and shuffles use separate streams so that train and test
    // splits partitioned with one seed receive the same proportions.
    let mut prop_rng = rng::rng_from(seed, &[rng::stream::PARTITION, 1]);
    let mut perm_rng = rng::rng_from(seed, &[rng::stream::PARTITION, 2]);
    let mut clients = vec![Vec::new(); num_clients];
    for mut idx in by_class {
        let props = dirichlet_draw(alpha, num_clients, &mut prop_rng);
        let counts = largest_remainder(idx.len(), &props);
        fisher_yates(&mut idx, &mut perm_rng);
        let mut offset = 0;
        for (client, count) in clients.iter_mut().zip(counts) {
            client.extend_from_slice(&idx[offset..offset + count]);
            offset += count;
        }
    }
    while let Some(empty) = clients.iter().position(Vec::is_empty) {
        let donor = (0..num_clients)
            .max_by(|&a, &b| clients[a].len().cmp(&clients[b].len()).then(b.cmp(&a)))
            .expect("at least one client");
        let moved = clients[donor].pop().expect("donor holds samples");
        log::info!("dirichlet repair: moved sample {moved} from client {donor} to empty client {empty}");
        clients[empty].push(moved);
    }
    for c in clients.iter_mut() {
        c.sort_unstable();
    }
    PartitionPlan::new(clients, PartitionScheme::Dirichlet { alpha }, seed, data.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(classes: usize, per_class: usize) -> Dataset {
        let labels: Vec<usize> = (0..classes).flat_map(|c| std::iter::repeat_n(c, per_class)).collect();
        let features = labels.iter().map(|&y| vec![y as f64]).collect();
        Dataset::classification(features, labels, classes).unwrap()
    }

    #[test]
    fn two_clients_one_class_each() {
        let d = balanced(2, 50);
        let plan = partition_shard_cap(&d, 2, 1, 0).unwrap();
        assert_eq!(plan.classes_per_client(&d).unwrap(), vec![1, 1]);
        assert_eq!(plan.total_assigned(), 100);
        let labels = d.labels().unwrap();
        assert_ne!(labels[plan.client(0)[0]], labels[plan.client(1)[0]]);
    }

    #[test]
    fn single_client_gets_everything() {
        let d = balanced(4, 10);
        let plan = partition_shard_cap(&d, 1, 4, 3).unwrap();
        assert_eq!(plan.client(0), (0..40).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn too_many_clients_is_an_error() {
        let d = balanced(2, 3);
        assert!(matches!(partition_shard_cap(&d, 7, 1, 0), Err(Error::Partition(_))));
        assert!(matches!(partition_dirichlet(&d, 7, 1.0, 0), Err(Error::Partition(_))));
        assert!(matches!(partition_dirichlet(&d, 2, 0.0, 0), Err(Error::Partition(_))));
    }

    #[test]
    fn weights_sum_to_one() {
        let d = balanced(3, 37);
        let plan = partition_dirichlet(&d, 7, 0.5, 2).unwrap();
        let s: f64 = plan.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn largest_remainder_conserves() {
        assert_eq!(largest_remainder(10, &[0.25, 0.25, 0.5]), vec![3, 2, 5]);
        assert_eq!(largest_remainder(3, &[1.0 / 3.0; 3]), vec![1, 1, 1]);
        assert_eq!(largest_remainder(0, &[0.5, 0.5]), vec![0, 0]);
    }

    #[test]
    fn dirichlet_repairs_empty_clients() {
        // With one sample per class and extreme skew, empty clients are common.
        let d = balanced(6, 1);
        for seed in 0..20 {
            let plan = partition_dirichlet(&d, 6, 0.01, seed).unwrap();
            assert!(plan.clients().iter().all(|c| c.len() == 1));
        }
    }

    #[test]
    fn plan_rejects_overlap() {
        let err = PartitionPlan::new(vec![vec![0, 1], vec![1]], PartitionScheme::Iid, 0, 3);
        assert!(matches!(err, Err(Error::Partition(_))));
    }

    #[test]
    fn iid_covers_everything() {
        let d = balanced(3, 7);
        let plan = partition_iid(&d, 4, 1).unwrap();
        assert_eq!(plan.total_assigned(), 21);
    }
}
