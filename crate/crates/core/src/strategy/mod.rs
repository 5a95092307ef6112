//! Federated strategies behind one round contract.
//!
//! Every strategy is expressed through the same pipeline: a broadcast
//! schedule refreshes each selected client's model from the global one, the
//! client trains a subset of its layers, an aggregate schedule mixes the
//! result back against the previous global model, and the server averages
//! the mixed models with renormalized client weights. The strategies differ
//! only in how they pick schedules, which layers they train, and how they
//! personalize for evaluation.

mod baselines;
mod pmixfed;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baselines::{FedAlt, FedAvg, FedBabu, FedSim};
pub use pmixfed::{PMixFed, SchedulePolicy, SpecPolicy, UniformMix};

use crate::error::{Error, Result};
use crate::mixup::{self, MixSchedule};
use crate::model::LayeredParams;
use crate::rng;
use crate::training::{LocalObjective, LocalTrainer, LocalWork};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Fedavg,
    Fedalt,
    Fedsim,
    Fedbabu,
    Pmixfed,
    PmixfedDynamic,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Fedavg => "fedavg",
            StrategyKind::Fedalt => "fedalt",
            StrategyKind::Fedsim => "fedsim",
            StrategyKind::Fedbabu => "fedbabu",
            StrategyKind::Pmixfed => "pmixfed",
            StrategyKind::PmixfedDynamic => "pmixfed-dynamic",
        }
    }

    pub fn is_partial(self) -> bool {
        matches!(self, StrategyKind::Fedalt | StrategyKind::Fedsim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    /// Mix factor from the accuracy-driven sigmoid.
    Adaptive,
    /// One mix factor for every client and round.
    DynamicFixed,
    /// Per-layer `Beta(alpha, alpha)` mix degrees.
    BetaRandom,
    /// Beta mix degrees whose concentration follows three training stages.
    BetaAdaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub mode: ScheduleMode,
    pub fixed_mu: Option<f64>,
    pub beta_alpha: Option<f64>,
    /// Exponent `b` on the accuracy ratio.
    pub offset: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { mode: ScheduleMode::Adaptive, fixed_mu: None, beta_alpha: None, offset: 2.0 }
    }
}

impl ScheduleSpec {
    pub fn fixed(mu: f64) -> Self {
        Self { mode: ScheduleMode::DynamicFixed, fixed_mu: Some(mu), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.offset.is_finite() {
            return Err(Error::Config(format!("offset must be finite, got {}", self.offset)));
        }
        match self.mode {
            ScheduleMode::DynamicFixed => match self.fixed_mu {
                Some(mu) if (0.0..=1.0).contains(&mu) => Ok(()),
                Some(mu) => Err(Error::Config(format!("fixed mu must be in [0, 1], got {mu}"))),
                None => Err(Error::Config("dynamic-fixed schedules need fixed_mu".into())),
            },
            ScheduleMode::BetaRandom => match self.beta_alpha {
                Some(a) if a > 0.0 && a.is_finite() => Ok(()),
                Some(a) => Err(Error::Config(format!("beta alpha must be > 0, got {a}"))),
                None => Err(Error::Config("beta-random schedules need beta_alpha".into())),
            },
            ScheduleMode::Adaptive | ScheduleMode::BetaAdaptive => Ok(()),
        }
    }
}

/// Strategy selection plus its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// First personalized layer for the partial baselines.
    pub split_layer: Option<usize>,
    /// Epochs of the personal phase in FedAlt; defaults to the local epochs.
    pub personal_epochs: Option<usize>,
    pub schedule: Option<ScheduleSpec>,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        let schedule = match kind {
            StrategyKind::Pmixfed => Some(ScheduleSpec::default()),
            _ => None,
        };
        Self { kind, split_layer: None, personal_epochs: None, schedule }
    }

    /// Split in the middle of an `n`-layer model, as used when none is given.
    pub fn default_split(num_layers: usize) -> usize {
        (num_layers / 2).max(1)
    }

    pub fn split_for(&self, num_layers: usize) -> usize {
        self.split_layer.unwrap_or_else(|| Self::default_split(num_layers))
    }

    pub fn validate(&self, num_layers: usize) -> Result<()> {
        if self.kind.is_partial() {
            let s = self.split_for(num_layers);
            if s < 1 || s >= num_layers {
                return Err(Error::Config(format!(
                    "split layer must satisfy 1 <= s < {num_layers}, got {s}"
                )));
            }
        }
        match self.kind {
            StrategyKind::Pmixfed | StrategyKind::PmixfedDynamic => {
                let sched = self.schedule.ok_or_else(|| {
                    Error::Config(format!("{} needs a schedule", self.kind.name()))
                })?;
                if self.kind == StrategyKind::PmixfedDynamic && sched.mode != ScheduleMode::DynamicFixed {
                    return Err(Error::Config("pmixfed-dynamic needs a dynamic-fixed schedule".into()));
                }
                sched.validate()
            }
            _ => Ok(()),
        }
    }
}

/// One client as seen by the server.
#[derive(Clone)]
pub struct ClientState {
    pub id: usize,
    pub objective: Arc<dyn LocalObjective>,
    /// Model carried between rounds by stateful strategies.
    pub local: Option<LayeredParams>,
    /// Latest evaluation-time personalized model.
    pub personalized: Option<LayeredParams>,
    /// Latest personalized test accuracy.
    pub last_accuracy: Option<f64>,
    /// Aggregation weight `|D_k| / |D|`.
    pub weight: f64,
}

impl ClientState {
    pub fn new(id: usize, objective: Arc<dyn LocalObjective>, weight: f64) -> Self {
        Self { id, objective, local: None, personalized: None, last_accuracy: None, weight }
    }
}

impl std::fmt::Debug for ClientState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientState")
            .field("id", &self.id)
            .field("weight", &self.weight)
            .field("last_accuracy", &self.last_accuracy)
            .field("has_local", &self.local.is_some())
            .finish()
    }
}

/// Builds client states weighted by `|D_k| / sum |D_k|`.
pub fn clients_from_objectives(objectives: Vec<Arc<dyn LocalObjective>>) -> Vec<ClientState> {
    let total: usize = objectives.iter().map(|o| o.num_samples()).sum();
    objectives
        .into_iter()
        .enumerate()
        .map(|(id, o)| {
            let w = o.num_samples() as f64 / total as f64;
            ClientState::new(id, o, w)
        })
        .collect()
}

/// Round-level settings shared by every strategy.
#[derive(Clone, Copy, Debug)]
pub struct RoundContext {
    pub round: usize,
    pub total_rounds: usize,
    pub seed: u64,
    pub trainer: LocalTrainer,
    /// Average accuracy of the current global model over all clients' test
    /// splits, measured at round start.
    pub global_accuracy: Option<f64>,
    /// Run evaluation-time personalization and record accuracies.
    pub evaluate: bool,
    /// Keep the sample indices of every local step.
    pub record_batches: bool,
}

impl RoundContext {
    pub fn new(round: usize, total_rounds: usize, seed: u64, trainer: LocalTrainer) -> Self {
        Self {
            round,
            total_rounds,
            seed,
            trainer,
            global_accuracy: None,
            evaluate: true,
            record_batches: false,
        }
    }
}

/// Which layers travel in each direction for one client.
#[derive(Clone, Debug, PartialEq)]
pub struct Payload {
    pub download: Vec<bool>,
    pub upload: Vec<bool>,
}

impl Payload {
    pub fn from_schedules(broadcast: &MixSchedule, aggregate: &MixSchedule) -> Self {
        Self {
            download: mixup::transferred_layers(broadcast),
            upload: mixup::transferred_layers(aggregate),
        }
    }

    pub fn count(mask: &[bool], layer_sizes: &[usize]) -> usize {
        mask.iter().zip(layer_sizes).filter(|(m, _)| **m).map(|(_, s)| s).sum()
    }
}

/// Per-client outcome of a round.
#[derive(Clone, Debug)]
pub struct ClientReport {
    pub client_id: usize,
    pub broadcast: MixSchedule,
    pub aggregate: MixSchedule,
    pub mu_broadcast: Option<f64>,
    pub acc_personal: Option<f64>,
    pub payload: Payload,
    pub params_down: usize,
    pub params_up: usize,
    pub frozen_down: usize,
    pub frozen_up: usize,
    pub local_steps: usize,
    pub batches: Vec<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub global: LayeredParams,
    pub mu_aggregate: Option<f64>,
    /// Reports of the selected clients, ascending by id.
    pub clients: Vec<ClientReport>,
}

impl RoundOutcome {
    pub fn params_down(&self) -> usize {
        self.clients.iter().map(|c| c.params_down).sum()
    }

    pub fn params_up(&self) -> usize {
        self.clients.iter().map(|c| c.params_up).sum()
    }
}

/// A federated strategy: one call advances the global model by one round.
pub trait Strategy: Send + Sync {
    fn kind(&self) -> StrategyKind;

    fn round(
        &self,
        global: &LayeredParams,
        clients: &mut [ClientState],
        selected: &[usize],
        ctx: &RoundContext,
    ) -> Result<RoundOutcome>;
}

pub fn build_strategy(spec: &StrategySpec) -> Result<Box<dyn Strategy>> {
    Ok(match spec.kind {
        StrategyKind::Fedavg => Box::new(FedAvg),
        StrategyKind::Fedalt => Box::new(FedAlt { split_layer: spec.split_layer, personal_epochs: spec.personal_epochs }),
        StrategyKind::Fedsim => Box::new(FedSim { split_layer: spec.split_layer }),
        StrategyKind::Fedbabu => Box::new(FedBabu),
        StrategyKind::Pmixfed | StrategyKind::PmixfedDynamic => {
            let sched = spec.schedule.ok_or_else(|| Error::Config("pmixfed needs a schedule".into()))?;
            sched.validate()?;
            Box::new(PMixFed::new(spec.kind, Box::new(SpecPolicy(sched))))
        }
    })
}

/// One training phase: which layers move, and for how long.
#[derive(Clone, Debug)]
pub(crate) struct TrainPhase {
    pub trainable: Vec<bool>,
    pub work: Option<LocalWork>,
}

/// How a strategy personalizes a model for evaluation.
#[derive(Clone, Debug)]
pub(crate) enum EvalMode {
    /// The trained local model is already personalized.
    Local,
    /// Start from the new global model (with the client's personal layers
    /// restored where `restore_personal` is set) and fine-tune `trainable`.
    FineTune { restore_personal: Option<Vec<bool>>, trainable: Vec<bool> },
}

/// Per-client decisions of a strategy for one round.
#[derive(Clone, Debug)]
pub(crate) struct ClientPlan {
    pub broadcast: MixSchedule,
    pub aggregate: MixSchedule,
    pub mu_broadcast: Option<f64>,
    pub phases: Vec<TrainPhase>,
}

/// Strategy-wide pipeline settings.
pub(crate) struct PipelineSpec<'a> {
    pub keep_local: bool,
    pub eval: EvalMode,
    pub mu_aggregate: Option<f64>,
    pub plan: &'a (dyn Fn(&ClientState) -> Result<ClientPlan> + Sync),
}

struct ClientResult {
    local: LayeredParams,
    contribution: LayeredParams,
    retained: Vec<bool>,
    report: ClientReport,
}

fn check_selection(clients: &[ClientState], selected: &[usize]) -> Result<()> {
    if selected.is_empty() {
        return Err(Error::Round("no clients selected".into()));
    }
    for w in selected.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Round("selected ids must be strictly ascending".into()));
        }
    }
    if let Some(&bad) = selected.iter().find(|&&k| k >= clients.len()) {
        return Err(Error::Round(format!("selected client {bad} does not exist")));
    }
    for (i, c) in clients.iter().enumerate() {
        if c.id != i {
            return Err(Error::Round(format!("client at position {i} has id {}", c.id)));
        }
    }
    Ok(())
}

/// Selected-cohort weights `Omega_k / sum_{j in cohort} Omega_j`.
pub fn cohort_weights(clients: &[ClientState], selected: &[usize]) -> Result<Vec<f64>> {
    let total: f64 = selected.iter().map(|&k| clients[k].weight).sum();
    if !(total > 0.0) {
        return Err(Error::Round("selected clients carry no weight".into()));
    }
    Ok(selected.iter().map(|&k| clients[k].weight / total).collect())
}

/// Weighted average of client contributions. A layer every client retained
/// (aggregate `lambda = 1`) is copied from the previous global model.
pub(crate) fn aggregate(
    global: &LayeredParams,
    contributions: &[(f64, &LayeredParams, &[bool])],
) -> Result<LayeredParams> {
    let mut out = global.clone();
    for i in 0..global.num_layers() {
        if contributions.iter().all(|(_, _, retained)| retained[i]) {
            continue;
        }
        let layer = out.layer_mut(i);
        for (j, (w, c, _)) in contributions.iter().enumerate() {
            let src = c.layer(i);
            if j == 0 {
                for (o, v) in layer.iter_mut().zip(src) {
                    *o = w * v;
                }
            } else {
                for (o, v) in layer.iter_mut().zip(src) {
                    *o += w * v;
                }
            }
        }
    }
    Ok(out)
}

fn fine_tune(
    objective: &dyn LocalObjective,
    mut model: LayeredParams,
    trainable: &[bool],
    ctx: &RoundContext,
    client_id: usize,
) -> Result<LayeredParams> {
    let mut rng = rng::rng_from(ctx.seed, &[rng::stream::EVAL_TUNE, client_id as u64, ctx.round as u64]);
    ctx.trainer.train(objective, &mut model, trainable, &mut rng, false)?;
    Ok(model)
}

/// Runs one round of the shared pipeline.
pub(crate) fn run_pipeline(
    global: &LayeredParams,
    clients: &mut [ClientState],
    selected: &[usize],
    ctx: &RoundContext,
    spec: &PipelineSpec<'_>,
) -> Result<RoundOutcome> {
    check_selection(clients, selected)?;
    let weights = cohort_weights(clients, selected)?;
    let sizes = global.layer_sizes();
    let view: &[ClientState] = clients;

    let results: Vec<ClientResult> = selected
        .par_iter()
        .map(|&k| -> Result<ClientResult> {
            let client = &view[k];
            let plan = (spec.plan)(client)?;
            let start = client.local.as_ref().unwrap_or(global);
            let mut local = mixup::mix_params(global, start, &plan.broadcast)?;
            let mut steps = 0;
            let mut batches = Vec::new();
            for (p, phase) in plan.phases.iter().enumerate() {
                let trainer = match phase.work {
                    Some(work) => ctx.trainer.with_work(work),
                    None => ctx.trainer,
                };
                let mut rng = rng::rng_from(
                    ctx.seed,
                    &[rng::stream::LOCAL_TRAIN, k as u64, ctx.round as u64, p as u64],
                );
                let out = trainer.train(
                    client.objective.as_ref(),
                    &mut local,
                    &phase.trainable,
                    &mut rng,
                    ctx.record_batches,
                )?;
                steps += out.steps;
                batches.push(out.batches);
            }
            let contribution = mixup::mix_params(global, &local, &plan.aggregate)?;
            let retained = plan.aggregate.lambdas().iter().map(|&l| l == 1.0).collect();
            let payload = Payload::from_schedules(&plan.broadcast, &plan.aggregate);
            let report = ClientReport {
                client_id: k,
                params_down: Payload::count(&payload.download, &sizes),
                params_up: Payload::count(&payload.upload, &sizes),
                frozen_down: mixup::frozen_layer_count(&plan.broadcast),
                frozen_up: mixup::frozen_layer_count(&plan.aggregate),
                payload,
                broadcast: plan.broadcast,
                aggregate: plan.aggregate,
                mu_broadcast: plan.mu_broadcast,
                acc_personal: None,
                local_steps: steps,
                batches,
            };
            Ok(ClientResult { local, contribution, retained, report })
        })
        .collect::<Result<_>>()?;

    let contributions: Vec<(f64, &LayeredParams, &[bool])> = results
        .iter()
        .zip(&weights)
        .map(|(r, &w)| (w, &r.contribution, r.retained.as_slice()))
        .collect();
    let new_global = aggregate(global, &contributions)?;

    // Evaluation-time personalization against the new global model.
    let evaluated: Vec<(Option<f64>, Option<LayeredParams>)> = if ctx.evaluate {
        results
            .par_iter()
            .map(|r| -> Result<(Option<f64>, Option<LayeredParams>)> {
                let client = &view[r.report.client_id];
                match &spec.eval {
                    EvalMode::Local => Ok((client.objective.test_accuracy(&r.local)?, None)),
                    EvalMode::FineTune { restore_personal, trainable } => {
                        let mut model = new_global.clone();
                        if let Some(personal) = restore_personal {
                            for (i, &p) in personal.iter().enumerate() {
                                if p {
                                    model.set_layer(i, r.local.layer(i))?;
                                }
                            }
                        }
                        let tuned = fine_tune(
                            client.objective.as_ref(),
                            model,
                            trainable,
                            ctx,
                            r.report.client_id,
                        )?;
                        Ok((client.objective.test_accuracy(&tuned)?, Some(tuned)))
                    }
                }
            })
            .collect::<Result<_>>()?
    } else {
        vec![(None, None); results.len()]
    };

    let mut reports = Vec::with_capacity(results.len());
    for (r, (acc, tuned)) in results.into_iter().zip(evaluated) {
        let client = &mut clients[r.report.client_id];
        let mut report = r.report;
        report.acc_personal = acc;
        if acc.is_some() {
            client.last_accuracy = acc;
        }
        client.personalized = match tuned {
            Some(t) => Some(t),
            None if spec.keep_local => Some(r.local.clone()),
            None => client.personalized.take(),
        };
        if spec.keep_local {
            client.local = Some(r.local);
        }
        reports.push(report);
    }
    Ok(RoundOutcome { global: new_global, mu_aggregate: spec.mu_aggregate, clients: reports })
}

pub fn fedavg_round(
    global: &LayeredParams,
    clients: &mut [ClientState],
    selected: &[usize],
    ctx: &RoundContext,
) -> Result<RoundOutcome> {
    FedAvg.round(global, clients, selected, ctx)
}

pub fn fedalt_round(
    global: &LayeredParams,
    clients: &mut [ClientState],
    selected: &[usize],
    ctx: &RoundContext,
    split_layer: usize,
) -> Result<RoundOutcome> {
    FedAlt { split_layer: Some(split_layer), personal_epochs: None }.round(global, clients, selected, ctx)
}

pub fn fedsim_round(
    global: &LayeredParams,
    clients: &mut [ClientState],
    selected: &[usize],
    ctx: &RoundContext,
    split_layer: usize,
) -> Result<RoundOutcome> {
    FedSim { split_layer: Some(split_layer) }.round(global, clients, selected, ctx)
}

pub fn fedbabu_round(
    global: &LayeredParams,
    clients: &mut [ClientState],
    selected: &[usize],
    ctx: &RoundContext,
) -> Result<RoundOutcome> {
    FedBabu.round(global, clients, selected, ctx)
}

pub fn pmixfed_round(
    global: &LayeredParams,
    clients: &mut [ClientState],
    selected: &[usize],
    ctx: &RoundContext,
    schedule: ScheduleSpec,
) -> Result<RoundOutcome> {
    schedule.validate()?;
    PMixFed::new(StrategyKind::Pmixfed, Box::new(SpecPolicy(schedule))).round(global, clients, selected, ctx)
}

pub fn pmixfed_dynamic_round(
    global: &LayeredParams,
    clients: &mut [ClientState],
    selected: &[usize],
    ctx: &RoundContext,
    fixed_mu: f64,
) -> Result<RoundOutcome> {
    let schedule = ScheduleSpec::fixed(fixed_mu);
    schedule.validate()?;
    PMixFed::new(StrategyKind::PmixfedDynamic, Box::new(SpecPolicy(schedule)))
        .round(global, clients, selected, ctx)
}
