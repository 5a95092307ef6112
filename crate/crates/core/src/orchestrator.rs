//! Experiment driver: data preparation, client sampling and the round loop.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, PartitionScheme};
use crate::error::{Error, Result};
use crate::mixup::MixSchedule;
use crate::model::{self, LayeredParams, ModelKind, ModelSpec};
use crate::rng::{self, stream};
use crate::strategy::{self, ClientReport, ClientState, RoundContext, Strategy, StrategySpec};
use crate::training::{LocalObjective, LocalTrainer, LocalWork, Optimizer, SupervisedTask};

/// Where client data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Gaussian blobs, split per class into train and test.
    Synthetic {
        num_classes: usize,
        dim: usize,
        per_class: usize,
        separation: f64,
        noise_sd: f64,
        test_per_class: usize,
    },
    /// IDX image/label files. `limit` keeps the first rows of each split.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        limit: Option<usize>,
    },
    /// Unit quadratic clients; no model or partition applies.
    Quadratic {
        dim: usize,
        layers: usize,
        spread: f64,
        sigma: f64,
        samples: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub num_clients: usize,
    /// Fraction `C` of clients sampled per round.
    pub participation: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    /// Fixed number of local steps; replaces `local_epochs` when set.
    pub local_steps: Option<usize>,
    pub batch_size: usize,
    pub lr_local: f64,
    /// Server step for FedSGD comparisons.
    pub lr_global: f64,
    pub optimizer: Optimizer,
    pub strategy: StrategySpec,
    pub model: ModelKind,
    pub hidden_dim: Option<usize>,
    pub data: DataSource,
    pub partition: PartitionScheme,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::Config("num_clients must be >= 1".into()));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::Config(format!(
                "participation must be in (0, 1], got {}",
                self.participation
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if !(self.lr_global >= 0.0) || !self.lr_global.is_finite() {
            return Err(Error::Config(format!("lr_global must be >= 0, got {}", self.lr_global)));
        }
        self.trainer().validate()
    }

    pub fn local_work(&self) -> LocalWork {
        match self.local_steps {
            Some(tau) => LocalWork::Steps(tau),
            None => LocalWork::Epochs(self.local_epochs),
        }
    }

    pub fn trainer(&self) -> LocalTrainer {
        LocalTrainer {
            work: self.local_work(),
            batch_size: self.batch_size,
            lr: self.lr_local,
            optimizer: self.optimizer,
        }
    }
}

/// Per-client part of a round record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub client_id: usize,
    pub mu_broadcast: Option<f64>,
    pub acc_personal: Option<f64>,
    pub frozen_down: usize,
    pub frozen_up: usize,
    pub params_down: usize,
    pub params_up: usize,
    /// Local optimizer steps `tau` taken this round.
    pub local_steps: usize,
    pub broadcast_lambdas: Vec<f64>,
    pub aggregate_lambdas: Vec<f64>,
}

impl From<&ClientReport> for ClientRecord {
    fn from(r: &ClientReport) -> Self {
        Self {
            client_id: r.client_id,
            mu_broadcast: r.mu_broadcast,
            acc_personal: r.acc_personal,
            frozen_down: r.frozen_down,
            frozen_up: r.frozen_up,
            params_down: r.params_down,
            params_up: r.params_up,
            local_steps: r.local_steps,
            broadcast_lambdas: r.broadcast.lambdas().to_vec(),
            aggregate_lambdas: r.aggregate.lambdas().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub selected: Vec<usize>,
    pub mu_aggregate: Option<f64>,
    /// Average accuracy of the global model after this round.
    pub acc_global: Option<f64>,
    pub clients: Vec<ClientRecord>,
    pub params_down: usize,
    pub params_up: usize,
    /// Informational only; excluded from determinism comparisons.
    pub wall_clock_secs: f64,
}

impl RoundRecord {
    /// Mean personalized accuracy over the selected clients that report one.
    pub fn mean_personal_accuracy(&self) -> Option<f64> {
        let accs: Vec<f64> = self.clients.iter().filter_map(|c| c.acc_personal).collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    /// Copy with the wall clock zeroed, for determinism checks.
    pub fn without_timing(&self) -> Self {
        Self { wall_clock_secs: 0.0, ..self.clone() }
    }
}

/// Prepared clients and starting model.
pub struct Federation {
    pub clients: Vec<ClientState>,
    pub initial: LayeredParams,
    pub model: Option<ModelSpec>,
    /// Whether clients hold classification test splits.
    pub classification: bool,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub records: Vec<RoundRecord>,
    pub initial_global: LayeredParams,
    pub final_global: LayeredParams,
    pub initial_accuracy: Option<f64>,
    pub clients: Vec<ClientState>,
}

impl ExperimentResult {
    /// Final mean personalized accuracy over all clients that have one.
    pub fn final_personal_accuracy(&self) -> Option<f64> {
        let accs: Vec<f64> = self.clients.iter().filter_map(|c| c.last_accuracy).collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    pub fn final_global_accuracy(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.acc_global)
    }
}

/// `max(1, round_half_up(C * N))` distinct ids, sorted, fixed per `(seed, round)`.
pub fn sample_clients(num_clients: usize, participation: f64, round: usize, seed: u64) -> Vec<usize> {
    let m = ((participation * num_clients as f64 + 0.5).floor() as usize).clamp(1, num_clients.max(1));
    if m >= num_clients {
        return (0..num_clients).collect();
    }
    let mut rng = rng::rng_from(seed, &[stream::SAMPLING, round as u64]);
    let mut ids = rand::seq::index::sample(&mut rng, num_clients, m).into_vec();
    ids.sort_unstable();
    ids
}

/// Unweighted mean over clients of the global model's test accuracy.
pub fn evaluate_global(global: &LayeredParams, clients: &[ClientState]) -> Result<f64> {
    if clients.is_empty() {
        return Err(Error::Data("no clients to evaluate".into()));
    }
    let mut total = 0.0;
    for c in clients {
        total += c.objective.test_accuracy(global)?.ok_or_else(|| {
            Error::Data(format!("client {} has no classification test split", c.id))
        })?;
    }
    Ok(total / clients.len() as f64)
}

/// Parameters moved in each direction: a layer is downloaded when its
/// broadcast mix degree is positive and uploaded when its aggregate mix
/// degree is below 1.
pub fn account_traffic(schedules: &[(MixSchedule, MixSchedule)], layer_sizes: &[usize]) -> (usize, usize) {
    schedules.iter().fold((0, 0), |(down, up), (b, a)| {
        let d: usize = b.lambdas().iter().zip(layer_sizes).filter(|(l, _)| **l > 0.0).map(|(_, s)| s).sum();
        let u: usize = a.lambdas().iter().zip(layer_sizes).filter(|(l, _)| **l < 1.0).map(|(_, s)| s).sum();
        (down + d, up + u)
    })
}

fn load_classification(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.data {
        DataSource::Synthetic { num_classes, dim, per_class, separation, noise_sd, test_per_class } => {
            let all = data::gen_synthetic_classification(
                *num_classes,
                *dim,
                per_class + test_per_class,
                *separation,
                *noise_sd,
                rng::derive_seed(cfg.seed, &[stream::DATA]),
            )?;
            data::split_per_class(&all, *test_per_class, rng::derive_seed(cfg.seed, &[stream::DATA, 1]))
        }
        DataSource::Idx { train_images, train_labels, test_images, test_labels, limit } => {
            let mut train = data::load_idx(train_images, train_labels)?;
            let mut test = data::load_idx(test_images, test_labels)?;
            if let Some(n) = limit {
                let head = |d: &Dataset| d.subset(&(0..(*n).min(d.len())).collect::<Vec<_>>());
                train = head(&train)?;
                test = head(&test)?;
            }
            Ok((train, test))
        }
        DataSource::Quadratic { .. } => Err(Error::Config("quadratic source has no dataset".into())),
    }
}

/// Generates data, partitions it and builds the initial global model.
pub fn build_federation(cfg: &ExperimentConfig) -> Result<Federation> {
    cfg.validate()?;
    if let DataSource::Quadratic { dim, layers, spread, sigma, samples } = cfg.data {
        let family = data::gen_quadratic_clients(cfg.num_clients, dim, spread, None, cfg.seed)?
            .with_layers(layers)?
            .with_noise(sigma, samples, cfg.seed)?;
        let objectives: Vec<Arc<dyn LocalObjective>> = family
            .clients()
            .iter()
            .map(|c| Arc::new(c.clone()) as Arc<dyn LocalObjective>)
            .collect();
        let mut clients = strategy::clients_from_objectives(objectives);
        for (c, w) in clients.iter_mut().zip(family.weights()) {
            c.weight = *w;
        }
        return Ok(Federation { clients, initial: family.zero_params(), model: None, classification: false });
    }
    let (train, test) = load_classification(cfg)?;
    let num_classes = train
        .num_classes()
        .ok_or_else(|| Error::Data("classification data expected".into()))?;
    let spec = match cfg.model {
        ModelKind::LinearRegression => {
            return Err(Error::Config("federated runs need a classifier model".into()));
        }
        ModelKind::Logistic => ModelSpec::logistic(train.dim(), num_classes),
        ModelKind::Mlp1 => ModelSpec::mlp1(
            train.dim(),
            cfg.hidden_dim.ok_or_else(|| Error::Config("mlp1 needs hidden_dim".into()))?,
            num_classes,
        ),
    };
    spec.validate()?;
    cfg.strategy.validate(spec.layer_shapes().len())?;
    let plan = data::partition(&train, cfg.num_clients, cfg.partition, cfg.seed)?;
    let test_plan = data::mirror_plan(&plan, &train, &test, cfg.seed)?;
    let trains = plan.split(&train)?;
    let tests = test_plan.split(&test)?;
    let objectives: Vec<Arc<dyn LocalObjective>> = trains
        .into_iter()
        .zip(tests)
        .map(|(tr, te)| SupervisedTask::new(spec, tr, Some(te)).map(|t| Arc::new(t) as Arc<dyn LocalObjective>))
        .collect::<Result<_>>()?;
    let initial = model::init_model(&spec, rng::derive_seed(cfg.seed, &[stream::INIT]))?;
    Ok(Federation {
        clients: strategy::clients_from_objectives(objectives),
        initial,
        model: Some(spec),
        classification: true,
    })
}

/// Round-loop settings independent of how clients were built.
#[derive(Clone, Copy, Debug)]
pub struct RunSettings {
    pub rounds: usize,
    pub participation: f64,
    pub seed: u64,
    pub trainer: LocalTrainer,
    /// Evaluate global and personalized accuracy each round.
    pub evaluate: bool,
}

/// Runs `settings.rounds` rounds of `strategy` from `initial`.
pub fn run_federation(
    strategy: &dyn Strategy,
    initial: &LayeredParams,
    clients: &mut [ClientState],
    settings: RunSettings,
) -> Result<(Vec<RoundRecord>, LayeredParams, Option<f64>)> {
    if settings.rounds == 0 {
        return Err(Error::Config("rounds must be >= 1".into()));
    }
    let mut global = initial.clone();
    let initial_accuracy = if settings.evaluate { Some(evaluate_global(&global, clients)?) } else { None };
    let mut acc = initial_accuracy;
    let mut records = Vec::with_capacity(settings.rounds);
    for t in 0..settings.rounds {
        let started = Instant::now();
        let selected = sample_clients(clients.len(), settings.participation, t, settings.seed);
        let mut ctx = RoundContext::new(t, settings.rounds, settings.seed, settings.trainer);
        ctx.global_accuracy = acc;
        ctx.evaluate = settings.evaluate;
        let outcome = strategy
            .round(&global, clients, &selected, &ctx)
            .map_err(|e| e.in_round(t))?;
        global = outcome.global;
        acc = if settings.evaluate {
            Some(evaluate_global(&global, clients).map_err(|e| e.in_round(t))?)
        } else {
            None
        };
        let client_records: Vec<ClientRecord> = outcome.clients.iter().map(ClientRecord::from).collect();
        records.push(RoundRecord {
            round: t,
            selected,
            mu_aggregate: outcome.mu_aggregate,
            acc_global: acc,
            params_down: client_records.iter().map(|c| c.params_down).sum(),
            params_up: client_records.iter().map(|c| c.params_up).sum(),
            clients: client_records,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
        log::debug!("round {t} done, global accuracy {acc:?}");
    }
    Ok((records, global, initial_accuracy))
}

/// Builds the federation described by `cfg` and runs it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let fed = build_federation(cfg)?;
    let strategy = strategy::build_strategy(&cfg.strategy)?;
    let mut clients = fed.clients;
    let settings = RunSettings {
        rounds: cfg.rounds,
        participation: cfg.participation,
        seed: cfg.seed,
        trainer: cfg.trainer(),
        evaluate: fed.classification,
    };
    let (records, final_global, initial_accuracy) =
        run_federation(strategy.as_ref(), &fed.initial, &mut clients, settings)?;
    Ok(ExperimentResult { records, initial_global: fed.initial, final_global, initial_accuracy, clients })
}
