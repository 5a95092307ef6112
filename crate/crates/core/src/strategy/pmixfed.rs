//! Layer-wise mixup between global and personalized models.

use super::{
    run_pipeline, ClientPlan, ClientState, EvalMode, PipelineSpec, RoundContext, RoundOutcome,
    ScheduleMode, ScheduleSpec, Strategy, StrategyKind, TrainPhase,
};
use crate::error::Result;
use crate::mixup::{self, MixFactorInput, MixSchedule, Phase};
use crate::model::LayeredParams;
use crate::rng;

/// Chooses the broadcast and aggregate schedules of a round.
pub trait SchedulePolicy: Send + Sync {
    /// Round-level aggregation mix factor, when the policy has one.
    fn aggregate_mu(&self, ctx: &RoundContext) -> Result<Option<f64>>;

    /// Broadcast schedule, aggregate schedule and broadcast mix factor for
    /// one client.
    fn client_schedules(
        &self,
        layer_sizes: &[usize],
        client: &ClientState,
        ctx: &RoundContext,
        mu_aggregate: Option<f64>,
    ) -> Result<(MixSchedule, MixSchedule, Option<f64>)>;
}

/// Policy built from a [`ScheduleSpec`].
#[derive(Clone, Copy, Debug)]
pub struct SpecPolicy(pub ScheduleSpec);

impl SpecPolicy {
    fn mu(&self, ratio: f64, ctx: &RoundContext) -> Result<f64> {
        mixup::compute_mu(MixFactorInput {
            acc_ratio: ratio,
            round: ctx.round,
            total_rounds: ctx.total_rounds,
            offset: self.0.offset,
        })
    }

    fn beta(&self, sizes: &[usize], alpha: f64, client: usize, ctx: &RoundContext, phase: Phase) -> Result<MixSchedule> {
        let tag = match phase {
            Phase::Broadcast => 0,
            Phase::Aggregate => 1,
        };
        let seed = rng::derive_seed(ctx.seed, &[rng::stream::SCHEDULE, client as u64, ctx.round as u64, tag]);
        mixup::beta_lambda_schedule(sizes, alpha, seed, phase)
    }
}

impl SchedulePolicy for SpecPolicy {
    fn aggregate_mu(&self, ctx: &RoundContext) -> Result<Option<f64>> {
        match self.0.mode {
            // The aggregation stage uses the global accuracy itself.
            ScheduleMode::Adaptive => {
                let acc = mixup::accuracy_ratio(ctx.global_accuracy, Some(1.0));
                self.mu(acc, ctx).map(Some)
            }
            ScheduleMode::DynamicFixed => Ok(self.0.fixed_mu),
            ScheduleMode::BetaRandom | ScheduleMode::BetaAdaptive => Ok(None),
        }
    }

    fn client_schedules(
        &self,
        sizes: &[usize],
        client: &ClientState,
        ctx: &RoundContext,
        mu_aggregate: Option<f64>,
    ) -> Result<(MixSchedule, MixSchedule, Option<f64>)> {
        match self.0.mode {
            ScheduleMode::Adaptive | ScheduleMode::DynamicFixed => {
                let mu_b = match self.0.mode {
                    ScheduleMode::Adaptive => {
                        let ratio = mixup::accuracy_ratio(client.last_accuracy, ctx.global_accuracy);
                        self.mu(ratio, ctx)?
                    }
                    _ => self.0.fixed_mu.unwrap_or(0.5),
                };
                let mu_a = mu_aggregate.unwrap_or(mu_b);
                Ok((
                    mixup::broadcast_schedule(sizes, mu_b)?,
                    mixup::aggregate_schedule(sizes, mu_a)?,
                    Some(mu_b),
                ))
            }
            ScheduleMode::BetaRandom | ScheduleMode::BetaAdaptive => {
                let alpha = match self.0.mode {
                    ScheduleMode::BetaRandom => self.0.beta_alpha.unwrap_or(1.0),
                    _ => mixup::staged_beta_alpha(ctx.round, ctx.total_rounds),
                };
                Ok((
                    self.beta(sizes, alpha, client.id, ctx, Phase::Broadcast)?,
                    self.beta(sizes, alpha, client.id, ctx, Phase::Aggregate)?,
                    None,
                ))
            }
        }
    }
}

/// The same mix degree on every layer, fixed for the whole run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformMix {
    pub broadcast: f64,
    pub aggregate: f64,
}

impl SchedulePolicy for UniformMix {
    fn aggregate_mu(&self, _ctx: &RoundContext) -> Result<Option<f64>> {
        Ok(None)
    }

    fn client_schedules(
        &self,
        sizes: &[usize],
        _client: &ClientState,
        _ctx: &RoundContext,
        _mu_aggregate: Option<f64>,
    ) -> Result<(MixSchedule, MixSchedule, Option<f64>)> {
        Ok((
            MixSchedule::uniform(sizes, self.broadcast, Phase::Broadcast)?,
            MixSchedule::uniform(sizes, self.aggregate, Phase::Aggregate)?,
            None,
        ))
    }
}

pub struct PMixFed {
    kind: StrategyKind,
    policy: Box<dyn SchedulePolicy>,
}

impl PMixFed {
    pub fn new(kind: StrategyKind, policy: Box<dyn SchedulePolicy>) -> Self {
        Self { kind, policy }
    }

    pub fn with_policy(policy: impl SchedulePolicy + 'static) -> Self {
        Self::new(StrategyKind::Pmixfed, Box::new(policy))
    }
}

impl Strategy for PMixFed {
    fn kind(&self) -> StrategyKind {
        self.kind
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
        let mu_aggregate = self.policy.aggregate_mu(ctx)?;
        let plan = |client: &ClientState| {
            let (broadcast, aggregate, mu_broadcast) =
                self.policy.client_schedules(&sizes, client, ctx, mu_aggregate)?;
            Ok(ClientPlan {
                broadcast,
                aggregate,
                mu_broadcast,
                phases: vec![TrainPhase { trainable: vec![true; n], work: None }],
            })
        };
        run_pipeline(
            global,
            clients,
            selected,
            ctx,
            &PipelineSpec { keep_local: true, eval: EvalMode::Local, mu_aggregate, plan: &plan },
        )
    }
}
