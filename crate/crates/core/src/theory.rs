//! Executable checks of the convergence theory of uniform-mix pMixFed.
//!
//! With the broadcast schedule at 1 and a uniform aggregate mix degree
//! `lambda_bar`, one round with a single local step is exactly an SGD step
//! of size `(1 - lambda_bar) * eta_local` on the weighted objective. The
//! checks below drive the real round implementation and compare it against
//! independently computed updates and bounds.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::QuadraticFamily;
use crate::error::{Error, Result};
use crate::mixup::MixSchedule;
use crate::model::{LayerShape, LayeredParams};
use crate::rng::{self, stream};
use crate::strategy::{ClientState, PMixFed, RoundContext, Strategy, UniformMix};
use crate::training::{LocalObjective, LocalTrainer, LocalWork, SupervisedTask};

/// A weighted federated objective plus the constants the theory refers to.
#[derive(Clone)]
pub struct TheoryProblem {
    objectives: Vec<Arc<dyn LocalObjective>>,
    weights: Vec<f64>,
    shapes: Vec<LayerShape>,
    /// Smoothness constant `L`.
    pub smoothness: f64,
    /// Strong-convexity constant, when known.
    pub strong_convexity: Option<f64>,
    /// Noise level; 0 means full-batch gradients.
    pub sigma: f64,
    /// Minibatch size of stochastic gradients.
    pub batch_size: usize,
    optimum: Option<Vec<f64>>,
}

impl std::fmt::Debug for TheoryProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TheoryProblem")
            .field("clients", &self.objectives.len())
            .field("weights", &self.weights)
            .field("smoothness", &self.smoothness)
            .field("strong_convexity", &self.strong_convexity)
            .field("sigma", &self.sigma)
            .finish()
    }
}

impl TheoryProblem {
    /// Unit quadratic clients: `L = mu = 1` and the optimum is known.
    pub fn from_family(family: &QuadraticFamily, sigma: f64) -> Self {
        Self {
            objectives: family
                .clients()
                .iter()
                .map(|c| Arc::new(c.clone()) as Arc<dyn LocalObjective>)
                .collect(),
            weights: family.weights().to_vec(),
            shapes: family.shapes(),
            smoothness: 1.0,
            strong_convexity: Some(1.0),
            sigma,
            batch_size: 1,
            optimum: Some(family.optimum()),
        }
    }

    /// Generates `num_clients` unit quadratics over `layers` layers with
    /// single-sample gradient noise of level `sigma`.
    pub fn quadratic(
        num_clients: usize,
        dim: usize,
        layers: usize,
        weights: Option<Vec<f64>>,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let family = crate::data::gen_quadratic_clients(num_clients, dim, 3.0, weights, seed)?
            .with_layers(layers)?
            .with_noise(sigma, 64, seed)?;
        Ok(Self::from_family(&family, sigma))
    }

    /// Logistic-regression clients. `L` is the upper bound
    /// `max_i (||x_i||^2 + 1) / 2` of the softmax cross-entropy Hessian.
    pub fn logistic(tasks: Vec<SupervisedTask>, batch_size: usize) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Config("need at least one client".into()));
        }
        let spec = tasks[0].spec;
        if tasks.iter().any(|t| t.spec != spec) {
            return Err(Error::ModelMismatch("clients use different model specs".into()));
        }
        let total: usize = tasks.iter().map(|t| t.train.len()).sum();
        let weights = tasks.iter().map(|t| t.train.len() as f64 / total as f64).collect();
        let smoothness = tasks
            .iter()
            .flat_map(|t| t.train.features().iter())
            .map(|x| 0.5 * (x.iter().map(|v| v * v).sum::<f64>() + 1.0))
            .fold(0.0, f64::max);
        let max_n = tasks.iter().map(|t| t.train.len()).max().unwrap_or(1);
        Ok(Self {
            objectives: tasks.into_iter().map(|t| Arc::new(t) as Arc<dyn LocalObjective>).collect(),
            weights,
            shapes: spec.layer_shapes(),
            smoothness,
            strong_convexity: None,
            sigma: if batch_size >= max_n { 0.0 } else { 1.0 },
            batch_size,
            optimum: None,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn optimum(&self) -> Option<LayeredParams> {
        self.optimum
            .as_ref()
            .map(|o| LayeredParams::from_flat(self.shapes.clone(), o).expect("optimum matches shapes"))
    }

    pub fn zero_params(&self) -> LayeredParams {
        LayeredParams::zeros(self.shapes.clone()).expect("valid shapes")
    }

    /// A point with standard normal coordinates scaled by `scale`.
    pub fn random_point(&self, scale: f64, seed: u64) -> LayeredParams {
        let mut rng = rng::seeded(seed);
        let mut p = self.zero_params();
        for v in p.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = scale * z;
        }
        p
    }

    pub fn clients(&self) -> Vec<ClientState> {
        self.objectives
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(k, (o, &w))| ClientState::new(k, Arc::clone(o), w))
            .collect()
    }

    pub fn objectives(&self) -> &[Arc<dyn LocalObjective>] {
        &self.objectives
    }

    /// `F(theta) = sum_k w_k F_k(theta)`.
    pub fn value(&self, theta: &LayeredParams) -> Result<f64> {
        let mut total = 0.0;
        for (o, w) in self.objectives.iter().zip(&self.weights) {
            total += w * o.loss(theta)?;
        }
        Ok(total)
    }

    pub fn gradient(&self, theta: &LayeredParams) -> Result<LayeredParams> {
        let mut g = theta.zeros_like();
        for (o, w) in self.objectives.iter().zip(&self.weights) {
            g.add_scaled(*w, &o.full_gradient(theta)?.gradient);
        }
        Ok(g)
    }

    fn trainer(&self, lr: f64, steps: usize) -> LocalTrainer {
        LocalTrainer::sgd(LocalWork::Steps(steps), self.batch_size, lr)
    }

    fn check_step(&self, eta_eff: f64) -> Result<()> {
        if !(eta_eff >= 0.0) || eta_eff > 1.0 / self.smoothness {
            return Err(Error::Precondition(format!(
                "effective step {eta_eff} exceeds 1/L = {}",
                1.0 / self.smoothness
            )));
        }
        Ok(())
    }
}

/// Local step size, average mix degree, and the server step they imply.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveStep {
    pub lr_local: f64,
    pub lambda_bar: f64,
}

impl EffectiveStep {
    pub fn new(lr_local: f64, lambda_bar: f64) -> Result<Self> {
        if !(lr_local > 0.0) || !(0.0..=1.0).contains(&lambda_bar) {
            return Err(Error::Domain(format!(
                "need lr > 0 and lambda_bar in [0, 1], got {lr_local} and {lambda_bar}"
            )));
        }
        Ok(Self { lr_local, lambda_bar })
    }

    /// Step from an aggregate schedule's size-weighted average mix degree.
    pub fn from_schedule(lr_local: f64, schedule: &MixSchedule) -> Result<Self> {
        Self::new(lr_local, schedule.lambda_bar())
    }

    /// `lambda_bar = 0.5` with `lr_local = 2 * eta_eff`, the split used by
    /// the checks. A zero step keeps everything global instead.
    pub fn half_mix(eta_eff: f64) -> Result<Self> {
        if eta_eff == 0.0 {
            Self::new(1.0, 1.0)
        } else {
            Self::new(2.0 * eta_eff, 0.5)
        }
    }

    pub fn eta_eff(&self) -> f64 {
        (1.0 - self.lambda_bar) * self.lr_local
    }

    pub fn eta_eff_tau(&self, tau: usize) -> f64 {
        self.eta_eff() * tau as f64
    }
}

/// One uniform-mix pMixFed round from `theta` with all clients selected.
pub fn uniform_round(
    problem: &TheoryProblem,
    theta: &LayeredParams,
    step: EffectiveStep,
    local_steps: usize,
    seed: u64,
    record_batches: bool,
) -> Result<(LayeredParams, Vec<Vec<usize>>)> {
    let mut clients = problem.clients();
    let selected: Vec<usize> = (0..clients.len()).collect();
    let strategy = PMixFed::with_policy(UniformMix { broadcast: 1.0, aggregate: step.lambda_bar });
    let mut ctx = RoundContext::new(0, 1, seed, problem.trainer(step.lr_local, local_steps));
    ctx.evaluate = false;
    ctx.record_batches = record_batches;
    let out = strategy.round(theta, &mut clients, &selected, &ctx)?;
    // One training phase per client; keep its first-step batch.
    let batches = out
        .clients
        .iter()
        .map(|c| c.batches.first().and_then(|b| b.first()).cloned().unwrap_or_default())
        .collect();
    Ok((out.global, batches))
}

/// `sum_k w_k g_k(theta; batch_k)` recomputed from recorded batches.
fn aggregated_gradient(problem: &TheoryProblem, theta: &LayeredParams, batches: &[Vec<usize>]) -> Result<LayeredParams> {
    let mut g = theta.zeros_like();
    for ((o, w), b) in problem.objectives.iter().zip(&problem.weights).zip(batches) {
        g.add_scaled(*w, &o.batch_gradient(theta, b)?.gradient);
    }
    Ok(g)
}

/// Maximum elementwise gap between a single-step uniform round and the
/// explicit update `theta - eta_eff * sum_k w_k g_k` on the same batches.
/// `lambda_bar = None` draws a fresh value in `(0, 1)` per trial.
pub fn check_sgd_equivalence(
    problem: &TheoryProblem,
    lr_local: f64,
    lambda_bar: Option<f64>,
    local_steps: usize,
    seed: u64,
    trials: usize,
) -> Result<f64> {
    if local_steps != 1 {
        return Err(Error::Usage(format!("equivalence needs exactly one local step, got {local_steps}")));
    }
    let devs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<f64> {
            let mut rng = rng::rng_from(seed, &[stream::THEORY, 1, trial as u64]);
            let lb = lambda_bar.unwrap_or_else(|| rng.random_range(0.0..1.0));
            let step = EffectiveStep::new(lr_local, lb)?;
            let theta = problem.random_point(3.0, rng.random());
            let round_seed = rng::derive_seed(seed, &[stream::THEORY, 2, trial as u64]);
            let (next, batches) = uniform_round(problem, &theta, step, 1, round_seed, true)?;
            let mut explicit = theta.clone();
            explicit.add_scaled(-step.eta_eff(), &aggregated_gradient(problem, &theta, &batches)?);
            Ok(next.max_abs_diff(&explicit))
        })
        .collect::<Result<_>>()?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

/// Runs `rounds` rounds of FedSGD with server step `lr_global` next to
/// uniform-mix pMixFed with `lambda_bar = 1 - lr_global / lr_local`, both on
/// the batches drawn by pMixFed. Returns the largest trajectory gap.
pub fn check_coefficient_matching(
    problem: &TheoryProblem,
    lr_local: f64,
    lr_global: f64,
    rounds: usize,
    seed: u64,
) -> Result<f64> {
    let ratio = lr_global / lr_local;
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Domain(format!("lr_global / lr_local must be in [0, 1], got {ratio}")));
    }
    let step = EffectiveStep::new(lr_local, 1.0 - ratio)?;
    let mut mix = problem.random_point(3.0, rng::derive_seed(seed, &[stream::THEORY, 3]));
    let mut sgd = mix.clone();
    let mut worst = 0.0f64;
    for t in 0..rounds {
        let round_seed = rng::derive_seed(seed, &[stream::THEORY, 4, t as u64]);
        let (next, batches) = uniform_round(problem, &mix, step, 1, round_seed, true)?;
        let g = aggregated_gradient(problem, &sgd, &batches)?;
        sgd.add_scaled(-lr_global, &g);
        mix = next;
        worst = worst.max(mix.max_abs_diff(&sgd));
    }
    Ok(worst)
}

/// Per-round statistics of the descent inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentRound {
    pub round: usize,
    /// Monte-Carlo mean of `F(theta_next)`.
    pub expected_next: f64,
    pub standard_error: f64,
    /// `F - (eta/2) ||grad F||^2 + (L eta^2 / 2) sigma_hat^2`.
    pub bound: f64,
    pub sigma_sq: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub violations: usize,
    pub rounds: Vec<DescentRound>,
}

struct Redraws {
    next: Vec<LayeredParams>,
}

fn redraw_rounds(
    problem: &TheoryProblem,
    theta: &LayeredParams,
    step: EffectiveStep,
    local_steps: usize,
    redraws: usize,
    seed: u64,
    tag: &[u64],
) -> Result<Redraws> {
    let next = (0..redraws)
        .into_par_iter()
        .map(|r| {
            let mut tags = vec![stream::THEORY];
            tags.extend_from_slice(tag);
            tags.push(r as u64);
            let round_seed = rng::derive_seed(seed, &tags);
            uniform_round(problem, theta, step, local_steps, round_seed, false).map(|(p, _)| p)
        })
        .collect::<Result<_>>()?;
    Ok(Redraws { next })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Checks the one-step descent inequality along a trajectory from `start`.
/// Expectations at each round use `redraws` independent rounds; the
/// trajectory continues from the first of them.
pub fn check_descent(
    problem: &TheoryProblem,
    start: &LayeredParams,
    eta_eff: f64,
    rounds: usize,
    redraws: usize,
    seed: u64,
) -> Result<DescentReport> {
    problem.check_step(eta_eff)?;
    let redraws = if problem.sigma == 0.0 { 1 } else { redraws.max(2) };
    let step = EffectiveStep::half_mix(eta_eff)?;
    let l = problem.smoothness;
    let mut theta = start.clone();
    let mut report = DescentReport { violations: 0, rounds: Vec::with_capacity(rounds) };
    for t in 0..rounds {
        let f = problem.value(&theta)?;
        let grad = problem.gradient(&theta)?;
        let draws = redraw_rounds(problem, &theta, step, 1, redraws, seed, &[5, t as u64])?;
        let values: Vec<f64> = draws.next.iter().map(|p| problem.value(p)).collect::<Result<_>>()?;
        // sigma_hat^2 from the same draws: g_hat = (theta - theta_next) / eta.
        let sigma_sq = if problem.sigma == 0.0 || eta_eff == 0.0 {
            0.0
        } else {
            draws
                .next
                .iter()
                .map(|p| {
                    let mut g = theta.sub(p);
                    g.scale(1.0 / eta_eff);
                    g.sub(&grad).norm_sq()
                })
                .sum::<f64>()
                / draws.next.len() as f64
        };
        let (mean, se) = mean_se(&values);
        let bound = f - 0.5 * eta_eff * grad.norm_sq() + 0.5 * l * eta_eff * eta_eff * sigma_sq;
        let slack = 3.0 * se + 1e-12 * f.abs().max(1.0);
        let violated = mean > bound + slack;
        report.violations += usize::from(violated);
        report.rounds.push(DescentRound { round: t, expected_next: mean, standard_error: se, bound, sigma_sq, violated });
        theta = draws.next.into_iter().next().expect("at least one redraw");
    }
    Ok(report)
}

/// Mean of `||g_hat - grad F||^2` for the aggregated one-step gradient.
pub fn estimate_sigma_sq(problem: &TheoryProblem, theta: &LayeredParams, draws: usize, seed: u64) -> Result<f64> {
    if problem.sigma == 0.0 || draws == 0 {
        return Ok(0.0);
    }
    let grad = problem.gradient(theta)?;
    let samples: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|d| -> Result<f64> {
            let mut rng = rng::rng_from(seed, &[stream::THEORY, 6, d as u64]);
            let mut g = theta.zeros_like();
            for (o, w) in problem.objectives.iter().zip(&problem.weights) {
                let n = o.num_samples();
                let batch: Vec<usize> = if problem.batch_size >= n {
                    (0..n).collect()
                } else {
                    rand::seq::index::sample(&mut rng, n, problem.batch_size).into_vec()
                };
                g.add_scaled(*w, &o.batch_gradient(theta, &batch)?.gradient);
            }
            Ok(g.sub(&grad).norm_sq())
        })
        .collect::<Result<_>>()?;
    Ok(samples.iter().sum::<f64>() / draws as f64)
}

/// Largest gradient Lipschitz ratio over random point pairs near `center`.
pub fn estimate_smoothness(problem: &TheoryProblem, center: &LayeredParams, probes: usize, seed: u64) -> Result<f64> {
    let mut best = 0.0f64;
    for p in 0..probes {
        let mut x = problem.random_point(1.0, rng::derive_seed(seed, &[stream::THEORY, 7, p as u64, 0]));
        let mut y = problem.random_point(1.0, rng::derive_seed(seed, &[stream::THEORY, 7, p as u64, 1]));
        x.add_scaled(1.0, center);
        y.add_scaled(1.0, center);
        let dg = problem.gradient(&x)?.sub(&problem.gradient(&y)?).norm();
        let dx = x.sub(&y).norm();
        if dx > 0.0 {
            best = best.max(dg / dx);
        }
    }
    Ok(best)
}

/// Largest full-gradient norm over `points`.
pub fn estimate_gradient_bound(problem: &TheoryProblem, points: &[LayeredParams]) -> Result<f64> {
    points.iter().try_fold(0.0f64, |acc, p| Ok(acc.max(problem.gradient(p)?.norm())))
}

/// Both sides of the nonconvex rate bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBound {
    /// `(1/T) sum_t E ||grad F(theta_t)||^2`.
    pub lhs: f64,
    /// `2 (F(theta_0) - F_star) / (T eta) + L eta sigma_hat^2`.
    pub rhs: f64,
    pub optimality_term: f64,
    pub noise_term: f64,
    pub f_star: f64,
    pub sigma_sq: f64,
}

impl RateBound {
    /// `lhs <= rhs (1 + slack)`, with a floor of `1e-24` for gradients that
    /// vanish up to rounding.
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + slack) + 1e-24
    }
}

/// `F_star` from a full-gradient descent run with step `1 / (2L)`.
pub fn reference_minimum(problem: &TheoryProblem, start: &LayeredParams, steps: usize) -> Result<f64> {
    let eta = 0.5 / problem.smoothness;
    let mut theta = start.clone();
    let mut best = problem.value(&theta)?;
    for _ in 0..steps {
        let g = problem.gradient(&theta)?;
        theta.add_scaled(-eta, &g);
        best = best.min(problem.value(&theta)?);
    }
    Ok(best)
}

/// Average squared gradient norm over `chains` trajectories of `rounds`
/// rounds against the nonconvex rate bound.
pub fn check_nonconvex_rate(
    problem: &TheoryProblem,
    start: &LayeredParams,
    eta_eff: f64,
    rounds: usize,
    chains: usize,
    seed: u64,
) -> Result<RateBound> {
    problem.check_step(eta_eff)?;
    if rounds == 0 {
        return Err(Error::Usage("rate check needs at least one round".into()));
    }
    let chains = if problem.sigma == 0.0 { 1 } else { chains.max(1) };
    let step = EffectiveStep::half_mix(eta_eff)?;
    let per_chain: Vec<(f64, f64)> = (0..chains)
        .into_par_iter()
        .map(|c| -> Result<(f64, f64)> {
            let mut theta = start.clone();
            let mut grad_sq = 0.0;
            let mut sigma_sq = 0.0;
            for t in 0..rounds {
                let grad = problem.gradient(&theta)?;
                grad_sq += grad.norm_sq();
                let round_seed = rng::derive_seed(seed, &[stream::THEORY, 8, c as u64, t as u64]);
                let (next, _) = uniform_round(problem, &theta, step, 1, round_seed, false)?;
                if problem.sigma > 0.0 && eta_eff > 0.0 {
                    let mut g = theta.sub(&next);
                    g.scale(1.0 / eta_eff);
                    sigma_sq += g.sub(&grad).norm_sq();
                }
                theta = next;
            }
            Ok((grad_sq / rounds as f64, sigma_sq / rounds as f64))
        })
        .collect::<Result<_>>()?;
    let lhs = per_chain.iter().map(|p| p.0).sum::<f64>() / chains as f64;
    let sigma_sq = per_chain.iter().map(|p| p.1).sum::<f64>() / chains as f64;
    let f_star = reference_minimum(problem, start, 10 * rounds)?;
    let f0 = problem.value(start)?;
    let optimality_term = if eta_eff > 0.0 {
        2.0 * (f0 - f_star).max(0.0) / (rounds as f64 * eta_eff)
    } else {
        f64::INFINITY
    };
    let noise_term = problem.smoothness * eta_eff * sigma_sq;
    Ok(RateBound { lhs, rhs: optimality_term + noise_term, optimality_term, noise_term, f_star, sigma_sq })
}

/// Fitted contraction of the squared distance to the optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionFit {
    /// `exp(slope)` of a least-squares line through `log ||theta_t - theta*||^2`.
    pub fitted_factor: f64,
    /// `(1 - mu * eta)^2`.
    pub expected_factor: f64,
    /// Largest gap between any single-round factor and the expected one.
    pub max_round_deviation: f64,
}

fn strongly_convex_pre(problem: &TheoryProblem, eta_eff: f64) -> Result<(f64, LayeredParams)> {
    let mu = problem
        .strong_convexity
        .ok_or_else(|| Error::Usage("problem has no strong-convexity constant".into()))?;
    let star = problem
        .optimum()
        .ok_or_else(|| Error::Usage("problem has no known optimum".into()))?;
    let cap = (1.0 / problem.smoothness).min(0.5 / mu);
    if !(eta_eff >= 0.0) || eta_eff > cap {
        return Err(Error::Precondition(format!("effective step {eta_eff} exceeds {cap}")));
    }
    Ok((mu, star))
}

/// Noiseless contraction towards the optimum over `rounds` rounds.
pub fn check_strongly_convex(problem: &TheoryProblem, eta_eff: f64, rounds: usize, seed: u64) -> Result<ContractionFit> {
    let (mu, star) = strongly_convex_pre(problem, eta_eff)?;
    if problem.sigma != 0.0 {
        return Err(Error::Usage("contraction fit needs full gradients; use the noise floor check".into()));
    }
    let step = EffectiveStep::half_mix(eta_eff)?;
    let mut theta = problem.random_point(3.0, rng::derive_seed(seed, &[stream::THEORY, 9]));
    let expected = (1.0 - mu * eta_eff).powi(2);
    let mut logs = vec![theta.sub(&star).norm_sq().ln()];
    let mut max_dev = 0.0f64;
    for t in 0..rounds {
        let before = theta.sub(&star).norm_sq();
        let (next, _) = uniform_round(problem, &theta, step, 1, rng::derive_seed(seed, &[stream::THEORY, 10, t as u64]), false)?;
        let after = next.sub(&star).norm_sq();
        theta = next;
        // Stop once the error is at rounding level.
        if after < 1e-20 * (1.0 + star.norm_sq()) {
            break;
        }
        max_dev = max_dev.max((after / before - expected).abs());
        logs.push(after.ln());
    }
    let fitted_factor = if logs.len() < 2 { expected } else { slope(&logs).exp() };
    Ok(ContractionFit { fitted_factor, expected_factor: expected, max_round_deviation: max_dev })
}

fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Time-averaged `||theta - theta*||^2` after `burn_in` rounds, averaged
/// over `chains` chains started at the optimum.
pub fn steady_state_error(
    problem: &TheoryProblem,
    eta_eff: f64,
    burn_in: usize,
    rounds: usize,
    chains: usize,
    seed: u64,
) -> Result<f64> {
    let (_, star) = strongly_convex_pre(problem, eta_eff)?;
    let step = EffectiveStep::half_mix(eta_eff)?;
    let per_chain: Vec<f64> = (0..chains)
        .into_par_iter()
        .map(|c| -> Result<f64> {
            let mut theta = star.clone();
            let mut acc = 0.0;
            for t in 0..burn_in + rounds {
                let s = rng::derive_seed(seed, &[stream::THEORY, 11, c as u64, t as u64]);
                theta = uniform_round(problem, &theta, step, 1, s, false)?.0;
                if t >= burn_in {
                    acc += theta.sub(&star).norm_sq();
                }
            }
            Ok(acc / rounds.max(1) as f64)
        })
        .collect::<Result<_>>()?;
    Ok(per_chain.iter().sum::<f64>() / chains.max(1) as f64)
}

/// Ratio of the noise floors at `eta_eff` and `eta_eff / 2`.
pub fn noise_floor_ratio(problem: &TheoryProblem, eta_eff: f64, burn_in: usize, rounds: usize, chains: usize, seed: u64) -> Result<f64> {
    if problem.sigma == 0.0 {
        return Err(Error::Usage("noise floor needs sigma > 0".into()));
    }
    let hi = steady_state_error(problem, eta_eff, burn_in, rounds, chains, seed)?;
    let lo = steady_state_error(problem, 0.5 * eta_eff, 2 * burn_in, 2 * rounds, chains, rng::derive_seed(seed, &[1]))?;
    Ok(hi / lo)
}

/// Bias of the averaged multi-step pseudo-gradient at one `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub tau: usize,
    /// `|| mean g_hat - grad F ||`.
    pub bias: f64,
    /// Root of the summed squared per-coordinate standard errors: the
    /// expected size of `bias` when the true bias is zero.
    pub noise_level: f64,
    /// Closed form for unit quadratics.
    pub closed_form: Option<f64>,
}

/// `a_tau = (1 - (1 - eta)^tau) / (tau * eta)`: deterministic local SGD on a
/// unit quadratic scales the gradient by this factor.
pub fn multistep_gain(lr_local: f64, tau: usize) -> f64 {
    if lr_local == 0.0 {
        return 1.0;
    }
    (1.0 - (1.0 - lr_local).powi(tau as i32)) / (tau as f64 * lr_local)
}

/// Bias curve of `g_hat = (theta - theta_next) / ((1 - lambda_bar) eta tau)`.
pub fn check_multistep_bias(
    problem: &TheoryProblem,
    theta: &LayeredParams,
    lr_local: f64,
    taus: &[usize],
    redraws: usize,
    seed: u64,
) -> Result<Vec<BiasPoint>> {
    if taus.contains(&0) {
        return Err(Error::Usage("tau must be >= 1".into()));
    }
    let step = EffectiveStep::new(lr_local, 0.5)?;
    let grad = problem.gradient(theta)?;
    let redraws = if problem.sigma == 0.0 { 1 } else { redraws.max(2) };
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let draws = redraw_rounds(problem, theta, step, tau, redraws, seed, &[12, tau as u64])?;
        let scale = 1.0 / step.eta_eff_tau(tau);
        let ghats: Vec<Vec<f64>> = draws
            .next
            .iter()
            .map(|p| theta.sub(p).iter().map(|v| v * scale).collect())
            .collect();
        let flat_grad = grad.flatten();
        let mut bias_sq = 0.0;
        let mut noise_sq = 0.0;
        for d in 0..flat_grad.len() {
            let col: Vec<f64> = ghats.iter().map(|g| g[d]).collect();
            let (mean, se) = mean_se(&col);
            bias_sq += (mean - flat_grad[d]).powi(2);
            noise_sq += se * se;
        }
        let closed_form = problem
            .strong_convexity
            .filter(|_| problem.optimum.is_some() && problem.smoothness == 1.0)
            .map(|_| (1.0 - multistep_gain(lr_local, tau)) * grad.norm());
        out.push(BiasPoint { tau, bias: bias_sq.sqrt(), noise_level: noise_sq.sqrt(), closed_form });
    }
    Ok(out)
}

/// Largest over smallest of `bias / (tau - 1)` across points with `tau >= 2`.
pub fn bias_scaling_spread(points: &[BiasPoint]) -> Option<f64> {
    let ratios: Vec<f64> = points
        .iter()
        .filter(|p| p.tau >= 2)
        .map(|p| p.bias / (p.tau - 1) as f64)
        .collect();
    if ratios.is_empty() {
        return None;
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    Some(max / min)
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub suite: String,
    pub check: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Verdict {
    fn at_most(suite: &str, check: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            suite: suite.into(),
            check: check.into(),
            passed: measured <= tolerance,
            measured,
            tolerance,
            detail: format!("{measured:e} <= {tolerance:e}"),
        }
    }

    fn within(suite: &str, check: &str, measured: f64, lo: f64, hi: f64) -> Self {
        Self {
            suite: suite.into(),
            check: check.into(),
            passed: (lo..=hi).contains(&measured),
            measured,
            tolerance: hi,
            detail: format!("{measured} in [{lo}, {hi}]"),
        }
    }
}

pub const SUITES: [&str; 6] = ["sgd-equivalence", "matching", "descent", "nonconvex", "strongly-convex", "multistep"];

fn default_problem(sigma: f64, seed: u64) -> Result<TheoryProblem> {
    TheoryProblem::quadratic(4, 6, 3, Some(vec![0.1, 0.2, 0.3, 0.4]), sigma, seed)
}

fn suite_sgd_equivalence(seed: u64) -> Result<Vec<Verdict>> {
    let s = "sgd-equivalence";
    let p = default_problem(1.0, seed)?;
    Ok(vec![
        Verdict::at_most(s, "lambda-bar=1", check_sgd_equivalence(&p, 0.1, Some(1.0), 1, seed, 10)?, 0.0),
        Verdict::at_most(s, "lambda-bar=0", check_sgd_equivalence(&p, 0.1, Some(0.0), 1, seed, 10)?, 1e-12),
        Verdict::at_most(s, "random-lambda-bar", check_sgd_equivalence(&p, 0.1, None, 1, seed, 100)?, 1e-10),
    ])
}

fn suite_matching(seed: u64) -> Result<Vec<Verdict>> {
    let p = default_problem(1.0, seed)?;
    [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&r| {
            let dev = check_coefficient_matching(&p, 0.1, 0.1 * r, 20, seed)?;
            Ok(Verdict::at_most("matching", &format!("ratio={r}"), dev, 1e-8))
        })
        .collect()
}

fn suite_descent(seed: u64) -> Result<Vec<Verdict>> {
    let s = "descent";
    let clean = default_problem(0.0, seed)?;
    let noisy = default_problem(1.0, seed)?;
    let start = clean.random_point(3.0, seed);
    let d0 = check_descent(&clean, &start, 0.1, 50, 1, seed)?;
    let star = clean.optimum().expect("quadratic optimum");
    let d_star = check_descent(&clean, &star, 0.1, 5, 1, seed)?;
    let d1 = check_descent(&noisy, &start, 0.1, 50, 1000, seed)?;
    Ok(vec![
        Verdict::at_most(s, "noiseless", d0.violations as f64, 0.0),
        Verdict::at_most(s, "stationary", d_star.violations as f64, 0.0),
        Verdict::at_most(s, "noisy", d1.violations as f64, 2.0),
    ])
}

fn suite_nonconvex(seed: u64) -> Result<Vec<Verdict>> {
    let s = "nonconvex";
    let clean = default_problem(0.0, seed)?;
    let noisy = default_problem(1.0, seed)?;
    let start = clean.random_point(3.0, seed);
    let short = check_nonconvex_rate(&clean, &start, 0.1, 100, 1, seed)?;
    let long = check_nonconvex_rate(&clean, &start, 0.1, 200, 1, seed)?;
    let plateau = check_nonconvex_rate(&noisy, &clean.optimum().expect("optimum"), 0.1, 400, 16, seed)?;
    let mut slack = Verdict::at_most(s, "noisy-bound", plateau.lhs / plateau.rhs, 1.05);
    slack.detail = format!("lhs {} rhs {}", plateau.lhs, plateau.rhs);
    Ok(vec![
        Verdict::at_most(s, "noiseless-bound", short.lhs / short.rhs, 1.05),
        Verdict::within(s, "doubling-rounds", long.lhs / short.lhs, 0.3, 0.7),
        slack,
    ])
}

fn suite_strongly_convex(seed: u64) -> Result<Vec<Verdict>> {
    let s = "strongly-convex";
    let clean = default_problem(0.0, seed)?;
    let fit = check_strongly_convex(&clean, 0.1, 100, seed)?;
    let noisy = default_problem(1.0, seed)?;
    let ratio = noise_floor_ratio(&noisy, 0.02, 300, 3000, 8, seed)?;
    Ok(vec![
        Verdict::at_most(s, "contraction-factor", (fit.fitted_factor - fit.expected_factor).abs(), 1e-6),
        Verdict::at_most(s, "per-round-factor", fit.max_round_deviation, 1e-6),
        Verdict::within(s, "noise-floor-ratio", ratio, 1.4, 2.8),
    ])
}

fn suite_multistep(seed: u64) -> Result<Vec<Verdict>> {
    let s = "multistep";
    let clean = default_problem(0.0, seed)?;
    let noisy = default_problem(1.0, seed)?;
    let theta = clean.random_point(3.0, seed);
    let exact = check_multistep_bias(&clean, &theta, 0.05, &[1, 2, 4, 8], 1, seed)?;
    let closed_gap = exact
        .iter()
        .map(|b| (b.bias - b.closed_form.unwrap_or(f64::NAN)).abs())
        .fold(0.0, f64::max);
    let mc = check_multistep_bias(&noisy, &theta, 0.05, &[1, 2, 4, 8], 2000, seed)?;
    let tau1 = mc[0];
    let spread = bias_scaling_spread(&mc).unwrap_or(f64::INFINITY);
    Ok(vec![
        Verdict::at_most(s, "closed-form", closed_gap, 1e-10),
        Verdict::at_most(s, "tau=1-unbiased", tau1.bias, 3.0 * tau1.noise_level),
        Verdict::at_most(s, "linear-scaling-spread", spread, 2.0),
    ])
}

/// Runs a named suite, or every suite for `"all"`.
pub fn run_suite(name: &str, seed: u64) -> Result<Vec<Verdict>> {
    match name {
        "sgd-equivalence" => suite_sgd_equivalence(seed),
        "matching" => suite_matching(seed),
        "descent" => suite_descent(seed),
        "nonconvex" => suite_nonconvex(seed),
        "strongly-convex" => suite_strongly_convex(seed),
        "multistep" => suite_multistep(seed),
        "all" => {
            let mut all = Vec::new();
            for s in SUITES {
                all.extend(run_suite(s, seed)?);
            }
            Ok(all)
        }
        other => Err(Error::Usage(format!(
            "unknown suite {other:?}; expected one of {} or all",
            SUITES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_step_two_ways() {
        let sched = MixSchedule::uniform(&[3, 5, 2], 0.3, crate::mixup::Phase::Aggregate).unwrap();
        let a = EffectiveStep::from_schedule(0.2, &sched).unwrap().eta_eff();
        let b = EffectiveStep::new(0.2, 0.3).unwrap().eta_eff();
        assert!((a - b).abs() <= 1e-14);
        assert_eq!(EffectiveStep::new(0.2, 0.3).unwrap().eta_eff_tau(4), 4.0 * b);
    }

    #[test]
    fn tau_other_than_one_is_usage_error() {
        let p = default_problem(0.0, 1).unwrap();
        assert!(matches!(check_sgd_equivalence(&p, 0.1, None, 2, 0, 1), Err(Error::Usage(_))));
    }

    #[test]
    fn step_above_inverse_smoothness_rejected() {
        let p = default_problem(0.0, 1).unwrap();
        let z = p.zero_params();
        assert!(matches!(check_descent(&p, &z, 1.5, 1, 1, 0), Err(Error::Precondition(_))));
        assert!(matches!(check_strongly_convex(&p, 0.6, 1, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn gain_at_one_step_is_one() {
        assert!((multistep_gain(0.1, 1) - 1.0).abs() < 1e-15);
        assert!(multistep_gain(0.1, 4) < 1.0);
    }

    #[test]
    fn unknown_suite() {
        assert!(matches!(run_suite("bogus", 0), Err(Error::Usage(_))));
    }
}
