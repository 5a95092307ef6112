//! Local objectives and the client-side training loop.

use serde::{Deserialize, Serialize};

use crate::data::{fisher_yates as shuffle, Dataset};
use crate::error::{Error, Result};
use crate::model::{self, GradEstimate, LayeredParams, ModelSpec};
use crate::rng::Rng;

/// A client's view of its own data: gradients of its local loss.
pub trait LocalObjective: Send + Sync {
    /// Number of local samples `|D_k|`.
    fn num_samples(&self) -> usize;

    /// Gradient of the mean loss over the samples in `batch`.
    fn batch_gradient(&self, params: &LayeredParams, batch: &[usize]) -> Result<GradEstimate>;

    fn full_gradient(&self, params: &LayeredParams) -> Result<GradEstimate> {
        let all: Vec<usize> = (0..self.num_samples()).collect();
        self.batch_gradient(params, &all)
    }

    fn loss(&self, params: &LayeredParams) -> Result<f64> {
        Ok(self.full_gradient(params)?.loss)
    }

    /// Accuracy on the client's held-out split, when it has one.
    fn test_accuracy(&self, _params: &LayeredParams) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// A supervised model on a client's train split, with an optional test split.
#[derive(Clone, Debug)]
pub struct SupervisedTask {
    pub spec: ModelSpec,
    pub train: Dataset,
    pub test: Option<Dataset>,
}

impl SupervisedTask {
    pub fn new(spec: ModelSpec, train: Dataset, test: Option<Dataset>) -> Result<Self> {
        spec.validate()?;
        if train.is_empty() {
            return Err(Error::Data("client train split is empty".into()));
        }
        if train.dim() != spec.input_dim {
            return Err(Error::Shape(format!(
                "data has dimension {}, model expects {}",
                train.dim(),
                spec.input_dim
            )));
        }
        Ok(Self { spec, train, test })
    }
}

impl LocalObjective for SupervisedTask {
    fn num_samples(&self) -> usize {
        self.train.len()
    }

    fn batch_gradient(&self, params: &LayeredParams, batch: &[usize]) -> Result<GradEstimate> {
        model::loss_and_grad(params, &self.spec, &self.train, batch)
    }

    fn test_accuracy(&self, params: &LayeredParams) -> Result<Option<f64>> {
        match &self.test {
            Some(test) if self.spec.is_classifier() => {
                model::accuracy(params, &self.spec, test).map(Some)
            }
            _ => Ok(None),
        }
    }
}

/// How much local work a client performs per round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalWork {
    /// Full passes over the local data.
    Epochs(usize),
    /// A fixed number of minibatch steps.
    Steps(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTrainer {
    pub work: LocalWork,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
}

/// What a local training call did.
#[derive(Clone, Debug, Default)]
pub struct TrainOutcome {
    pub steps: usize,
    pub last_loss: Option<f64>,
    /// Sample indices of every step, in order; filled when requested.
    pub batches: Vec<Vec<usize>>,
}

struct BatchStream {
    n: usize,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchStream {
    fn new(n: usize, batch_size: usize) -> Self {
        Self { n, batch_size, order: Vec::new(), cursor: n }
    }

    fn full_batch(&self) -> bool {
        self.batch_size >= self.n
    }

    /// Next batch, reshuffling whenever a pass over the data completes.
    fn next(&mut self, rng: &mut Rng) -> Vec<usize> {
        if self.full_batch() {
            return (0..self.n).collect();
        }
        if self.cursor >= self.n {
            self.order = (0..self.n).collect();
            shuffle(&mut self.order, rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.n);
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }
}

impl LocalTrainer {
    pub fn sgd(work: LocalWork, batch_size: usize, lr: f64) -> Self {
        Self { work, batch_size, lr, optimizer: Optimizer::Sgd }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("local learning rate must be > 0, got {}", self.lr)));
        }
        Ok(())
    }

    /// Number of optimizer steps for a client holding `n` samples.
    pub fn steps_for(&self, n: usize) -> usize {
        match self.work {
            LocalWork::Epochs(r) => r * n.div_ceil(self.batch_size.max(1)),
            LocalWork::Steps(tau) => tau,
        }
    }

    pub fn with_work(mut self, work: LocalWork) -> Self {
        self.work = work;
        self
    }

    /// Trains `params` in place. Layers with `trainable[i] == false` are
    /// left untouched.
    pub fn train(
        &self,
        objective: &dyn LocalObjective,
        params: &mut LayeredParams,
        trainable: &[bool],
        rng: &mut Rng,
        record_batches: bool,
    ) -> Result<TrainOutcome> {
        if trainable.len() != params.num_layers() {
            return Err(Error::Shape(format!(
                "trainable mask has {} entries for {} layers",
                trainable.len(),
                params.num_layers()
            )));
        }
        let n = objective.num_samples();
        let steps = self.steps_for(n);
        let mut outcome = TrainOutcome { steps, ..Default::default() };
        if steps == 0 || !trainable.iter().any(|&t| t) {
            outcome.steps = 0;
            return Ok(outcome);
        }
        let mut stream = BatchStream::new(n, self.batch_size);
        let mut adam = match self.optimizer {
            Optimizer::Adam { .. } => Some((params.zeros_like(), params.zeros_like())),
            Optimizer::Sgd => None,
        };
        for step in 0..steps {
            let batch = stream.next(rng);
            let est = objective.batch_gradient(params, &batch)?;
            let mut grad = est.gradient;
            for (i, &t) in trainable.iter().enumerate() {
                if !t {
                    grad.layer_mut(i).fill(0.0);
                }
            }
            match (self.optimizer, adam.as_mut()) {
                (Optimizer::Adam { beta1, beta2, eps }, Some((m, v))) => {
                    let t = (step + 1) as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for i in 0..params.num_layers() {
                        if !trainable[i] {
                            continue;
                        }
                        let g = grad.layer(i);
                        let (mi, vi) = (m.layer_mut(i), v.layer_mut(i));
                        let p = params.layer_mut(i);
                        for j in 0..p.len() {
                            mi[j] = beta1 * mi[j] + (1.0 - beta1) * g[j];
                            vi[j] = beta2 * vi[j] + (1.0 - beta2) * g[j] * g[j];
                            p[j] -= self.lr * (mi[j] / c1) / ((vi[j] / c2).sqrt() + eps);
                        }
                    }
                }
                _ => params.add_scaled(-self.lr, &grad),
            }
            outcome.last_loss = Some(est.loss);
            if record_batches {
                outcome.batches.push(batch);
            }
        }
        if !params.is_finite() {
            return Err(Error::Domain("local training diverged to non-finite parameters".into()));
        }
        Ok(outcome)
    }
}
