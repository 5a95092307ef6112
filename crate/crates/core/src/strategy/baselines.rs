//! FedAvg and the partial-personalization baselines.

use super::{
    run_pipeline, ClientPlan, ClientState, EvalMode, PipelineSpec, RoundContext, RoundOutcome,
    Strategy, StrategyKind, StrategySpec, TrainPhase,
};
use crate::error::{Error, Result};
use crate::mixup::{MixSchedule, Phase};
use crate::model::LayeredParams;
use crate::training::LocalWork;

fn schedule(sizes: &[usize], lambdas: Vec<f64>, phase: Phase) -> Result<MixSchedule> {
    MixSchedule::new(lambdas, sizes, phase)
}

/// `true` for layers at or above the split.
fn personal_mask(n: usize, split: usize) -> Vec<bool> {
    (0..n).map(|i| i >= split).collect()
}

fn checked_split(split: Option<usize>, n: usize) -> Result<usize> {
    let s = split.unwrap_or_else(|| StrategySpec::default_split(n));
    if s < 1 || s >= n {
        return Err(Error::Config(format!("split layer must satisfy 1 <= s < {n}, got {s}")));
    }
    Ok(s)
}

/// Partial-personalization schedules: shared layers come from the global
/// model on the way down and leave the client on the way up; personal
/// layers never move.
fn partial_schedules(sizes: &[usize], personal: &[bool]) -> Result<(MixSchedule, MixSchedule)> {
    let down = personal.iter().map(|&p| if p { 0.0 } else { 1.0 }).collect();
    let up = personal.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
    Ok((schedule(sizes, down, Phase::Broadcast)?, schedule(sizes, up, Phase::Aggregate)?))
}

/// Plain federated averaging of full models.
#[derive(Clone, Copy, Debug, Default)]
pub struct FedAvg;

impl Strategy for FedAvg {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Fedavg
    }

    fn round(
        &self,
        global: &LayeredParams,
        clients: &mut [ClientState],
        selected: &[usize],
        ctx: &RoundContext,
    ) -> Result<RoundOutcome> {
        let sizes = global.layer_sizes();
        let n = sizes.len();
        let broadcast = schedule(&sizes, vec![1.0; n], Phase::Broadcast)?;
        let aggregate = schedule(&sizes, vec![0.0; n], Phase::Aggregate)?;
        let plan = move |_: &ClientState| {
            Ok(ClientPlan {
                broadcast: broadcast.clone(),
                aggregate: aggregate.clone(),
                mu_broadcast: None,
                phases: vec![TrainPhase { trainable: vec![true; n], work: None }],
            })
        };
        run_pipeline(
            global,
            clients,
            selected,
            ctx,
            &PipelineSpec {
                keep_local: false,
                eval: EvalMode::FineTune { restore_personal: None, trainable: vec![true; n] },
                mu_aggregate: None,
                plan: &plan,
            },
        )
    }
}

/// Shared and personal layers trained jointly in every local step.
#[derive(Clone, Copy, Debug, Default)]
pub struct FedSim {
    pub split_layer: Option<usize>,
}

impl Strategy for FedSim {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Fedsim
    }

    fn round(
        &self,
        global: &LayeredParams,
        clients: &mut [ClientState],
        selected: &[usize],
        ctx: &RoundContext,
    ) -> Result<RoundOutcome> {
        let sizes = global.layer_sizes();
        let n = sizes.len();
        let personal = personal_mask(n, checked_split(self.split_layer, n)?);
        let (broadcast, aggregate) = partial_schedules(&sizes, &personal)?;
        let plan = move |_: &ClientState| {
            Ok(ClientPlan {
                broadcast: broadcast.clone(),
                aggregate: aggregate.clone(),
                mu_broadcast: None,
                phases: vec![TrainPhase { trainable: vec![true; n], work: None }],
            })
        };
        run_pipeline(
            global,
            clients,
            selected,
            ctx,
            &PipelineSpec {
                keep_local: true,
                eval: EvalMode::FineTune {
                    restore_personal: Some(personal.clone()),
                    trainable: vec![true; n],
                },
                mu_aggregate: None,
                plan: &plan,
            },
        )
    }
}

/// Personal layers first, then shared layers, each on fresh batches.
#[derive(Clone, Copy, Debug, Default)]
pub struct FedAlt {
    pub split_layer: Option<usize>,
    /// Epochs of the personal phase; the local epoch count when unset.
    pub personal_epochs: Option<usize>,
}

impl Strategy for FedAlt {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Fedalt
    }

    fn round(
        &self,
        global: &LayeredParams,
        clients: &mut [ClientState],
        selected: &[usize],
        ctx: &RoundContext,
    ) -> Result<RoundOutcome> {
        let sizes = global.layer_sizes();
        let n = sizes.len();
        let personal = personal_mask(n, checked_split(self.split_layer, n)?);
        let shared: Vec<bool> = personal.iter().map(|p| !p).collect();
        let (broadcast, aggregate) = partial_schedules(&sizes, &personal)?;
        let personal_work = self.personal_epochs.map(LocalWork::Epochs);
        let phases = vec![
            TrainPhase { trainable: personal.clone(), work: personal_work },
            TrainPhase { trainable: shared, work: None },
        ];
        let plan = move |_: &ClientState| {
            Ok(ClientPlan {
                broadcast: broadcast.clone(),
                aggregate: aggregate.clone(),
                mu_broadcast: None,
                phases: phases.clone(),
            })
        };
        run_pipeline(
            global,
            clients,
            selected,
            ctx,
            &PipelineSpec {
                keep_local: true,
                eval: EvalMode::FineTune {
                    restore_personal: Some(personal.clone()),
                    trainable: personal.clone(),
                },
                mu_aggregate: None,
                plan: &plan,
            },
        )
    }
}

/// Body-only federated training with the head frozen at its initial value;
/// the whole model is fine-tuned for evaluation.
#[derive(Clone, Copy, Debug, Default)]
pub struct FedBabu;

impl Strategy for FedBabu {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Fedbabu
    }

    fn round(
        &self,
        global: &LayeredParams,
        clients: &mut [ClientState],
        selected: &[usize],
        ctx: &RoundContext,
    ) -> Result<RoundOutcome> {
        let sizes = global.layer_sizes();
        let n = sizes.len();
        if n < 2 {
            return Err(Error::Config("FedBABU needs a body and a head".into()));
        }
        let head: Vec<bool> = (0..n).map(|i| i == n - 1).collect();
        let body: Vec<bool> = head.iter().map(|h| !h).collect();
        // Clients start from the global model every round, so the head they
        // hold already equals the global (initial) head and is not sent.
        let (broadcast, aggregate) = partial_schedules(&sizes, &head)?;
        let plan = move |_: &ClientState| {
            Ok(ClientPlan {
                broadcast: broadcast.clone(),
                aggregate: aggregate.clone(),
                mu_broadcast: None,
                phases: vec![TrainPhase { trainable: body.clone(), work: None }],
            })
        };
        run_pipeline(
            global,
            clients,
            selected,
            ctx,
            &PipelineSpec {
                keep_local: false,
                eval: EvalMode::FineTune { restore_personal: None, trainable: vec![true; n] },
                mu_aggregate: None,
                plan: &plan,
            },
        )
    }
}
