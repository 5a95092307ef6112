//! Layer-wise mixing between a global and a local model.
//!
//! A [`MixSchedule`] assigns each layer a mix degree `lambda_i` in `[0, 1]`;
//! mixing produces `lambda_i * global_i + (1 - lambda_i) * local_i`. The
//! schedules themselves come from the mix factor `mu`, which adapts to the
//! accuracy of a client's personalized model relative to the global model.

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LayeredParams;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Server to client: refresh the local model from the global one.
    Broadcast,
    /// Client to server: fold a local update into the global model.
    Aggregate,
}

/// Per-layer mix degrees for one client, round and phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixSchedule {
    lambdas: Vec<f64>,
    weights: Vec<f64>,
    phase: Phase,
    lambda_bar: f64,
}

/// Layer weights proportional to parameter counts.
pub fn layer_weights(layer_sizes: &[usize]) -> Vec<f64> {
    let total: usize = layer_sizes.iter().sum();
    if total == 0 {
        return vec![1.0 / layer_sizes.len() as f64; layer_sizes.len()];
    }
    layer_sizes.iter().map(|&s| s as f64 / total as f64).collect()
}

impl MixSchedule {
    /// Builds a schedule weighted by `layer_sizes`.
    pub fn new(lambdas: Vec<f64>, layer_sizes: &[usize], phase: Phase) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::Domain("a schedule needs at least one layer".into()));
        }
        if lambdas.len() != layer_sizes.len() {
            return Err(Error::Shape(format!(
                "{} mix degrees for {} layers",
                lambdas.len(),
                layer_sizes.len()
            )));
        }
        if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Domain(format!("mix degree {bad} outside [0, 1]")));
        }
        let weights = layer_weights(layer_sizes);
        let lambda_bar = weights.iter().zip(&lambdas).map(|(w, l)| w * l).sum::<f64>().clamp(0.0, 1.0);
        Ok(Self { lambdas, weights, phase, lambda_bar })
    }

    /// The same `lambda` on every layer.
    pub fn uniform(layer_sizes: &[usize], lambda: f64, phase: Phase) -> Result<Self> {
        Self::new(vec![lambda; layer_sizes.len()], layer_sizes, phase)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// `sum_i w_i * lambda_i`.
    pub fn lambda_bar(&self) -> f64 {
        self.lambda_bar
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn is_non_increasing(&self) -> bool {
        self.lambdas.windows(2).all(|w| w[0] >= w[1])
    }

    /// Forces `lambda_i = 0` wherever `mask[i]` is false.
    pub fn masked(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.lambdas.len() {
            return Err(Error::Shape(format!(
                "mask has {} entries for {} layers",
                mask.len(),
                self.lambdas.len()
            )));
        }
        let mut out = self.clone();
        for (l, &keep) in out.lambdas.iter_mut().zip(mask) {
            if !keep {
                *l = 0.0;
            }
        }
        out.lambda_bar = out.weights.iter().zip(&out.lambdas).map(|(w, l)| w * l).sum();
        Ok(out)
    }
}

/// Inputs of the adaptive mix factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixFactorInput {
    /// Accuracy ratio (local over global in the broadcast phase).
    pub acc_ratio: f64,
    pub round: usize,
    pub total_rounds: usize,
    /// Exponent applied to the accuracy ratio.
    pub offset: f64,
}

/// `mu = 1 - sigmoid(delta * (acc^b - 1))` with `delta = t / T`.
///
/// Evaluated as `1 / (1 + exp(z))`, which is exactly 0.5 at `z = 0`.
pub fn compute_mu(input: MixFactorInput) -> Result<f64> {
    let MixFactorInput { acc_ratio, round, total_rounds, offset } = input;
    if !(acc_ratio > 0.0) || !acc_ratio.is_finite() {
        return Err(Error::Domain(format!("accuracy ratio must be > 0, got {acc_ratio}")));
    }
    if total_rounds == 0 || round >= total_rounds {
        return Err(Error::Domain(format!(
            "round {round} outside [0, {total_rounds})"
        )));
    }
    if !offset.is_finite() {
        return Err(Error::Domain(format!("offset must be finite, got {offset}")));
    }
    let delta = round as f64 / total_rounds as f64;
    let z = delta * (acc_ratio.powf(offset) - 1.0);
    Ok(1.0 / (1.0 + z.exp()))
}

/// Ratio fed to [`compute_mu`], with the neutral value 1 whenever either
/// accuracy is unavailable or the reference accuracy is zero.
pub fn accuracy_ratio(numerator: Option<f64>, denominator: Option<f64>) -> f64 {
    match (numerator, denominator) {
        (Some(n), Some(d)) if d > 0.0 && n > 0.0 => n / d,
        // A client at zero accuracy with a usable reference: smallest
        // positive ratio keeps mu well defined and pushes it towards 1.
        (Some(n), Some(d)) if d > 0.0 && n == 0.0 => f64::MIN_POSITIVE,
        _ => 1.0,
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu >= 0.0) || mu.is_nan() {
        return Err(Error::Domain(format!("mix factor must be >= 0, got {mu}")));
    }
    Ok(())
}

/// `lambda_i = min(1, mu * (n - 1 - i))`: the base takes the most from the
/// global model and the head stays fully local.
pub fn broadcast_schedule(layer_sizes: &[usize], mu: f64) -> Result<MixSchedule> {
    check_mu(mu)?;
    if mu > 1.0 {
        return Err(Error::Domain(format!("broadcast mix factor must be <= 1, got {mu}")));
    }
    let n = layer_sizes.len();
    let lambdas = (0..n).map(|i| (mu * (n - 1 - i) as f64).min(1.0)).collect();
    MixSchedule::new(lambdas, layer_sizes, Phase::Broadcast)
}

/// `lambda_i = max(0, 1 - i * mu)`: the base keeps the previous global
/// model and the head comes from the updated local model.
pub fn aggregate_schedule(layer_sizes: &[usize], mu: f64) -> Result<MixSchedule> {
    check_mu(mu)?;
    let lambdas = (0..layer_sizes.len())
        .map(|i| if i == 0 { 1.0 } else { (1.0 - i as f64 * mu).max(0.0) })
        .collect();
    MixSchedule::new(lambdas, layer_sizes, Phase::Aggregate)
}

/// Independent `Beta(alpha, alpha)` draws per layer.
pub fn beta_lambda_schedule(layer_sizes: &[usize], alpha: f64, seed: u64, phase: Phase) -> Result<MixSchedule> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("beta alpha must be > 0, got {alpha}")));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = rng::rng_from(seed, &[rng::stream::SCHEDULE]);
    let lambdas = layer_sizes
        .iter()
        .map(|_| beta.sample(&mut rng).clamp(0.0, 1.0))
        .collect();
    MixSchedule::new(lambdas, layer_sizes, phase)
}

/// Beta concentration for the three-stage schedule: 0.1 in the first third
/// of training, 100 in the middle third, 10 afterwards.
pub fn staged_beta_alpha(round: usize, total_rounds: usize) -> f64 {
    if 3 * round < total_rounds {
        0.1
    } else if 3 * round < 2 * total_rounds {
        100.0
    } else {
        10.0
    }
}

fn mix_layer(lambda: f64, a: &[f64], b: &[f64]) -> Vec<f64> {
    if lambda == 1.0 {
        a.to_vec()
    } else if lambda == 0.0 {
        b.to_vec()
    } else {
        a.iter().zip(b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect()
    }
}

/// Per layer, `lambda_i * a_i + (1 - lambda_i) * b_i`. The first argument is
/// the global side. `lambda = 1` and `lambda = 0` copy a side bit-exactly.
pub fn mix_params(a: &LayeredParams, b: &LayeredParams, sched: &MixSchedule) -> Result<LayeredParams> {
    a.ensure_compatible(b)?;
    if sched.len() != a.num_layers() {
        return Err(Error::Shape(format!(
            "schedule has {} layers, model has {}",
            sched.len(),
            a.num_layers()
        )));
    }
    let layers = sched
        .lambdas()
        .iter()
        .zip(a.layers().iter().zip(b.layers()))
        .map(|(&l, (x, y))| mix_layer(l, x, y))
        .collect();
    LayeredParams::new(a.shapes().to_vec(), layers)
}

/// Aligns a (possibly shallower) local model with the base-most global
/// layers. `mask[i]` is true where global layer `i` has a local counterpart.
pub fn match_layers(global: &LayeredParams, local: &LayeredParams) -> Result<Vec<bool>> {
    if local.num_layers() > global.num_layers() {
        return Err(Error::ModelMismatch(format!(
            "local model has {} layers, global only {}",
            local.num_layers(),
            global.num_layers()
        )));
    }
    for (i, (g, l)) in global.shapes().iter().zip(local.shapes()).enumerate() {
        if g != l {
            return Err(Error::ModelMismatch(format!(
                "layer {i}: global shape {g:?} vs local {l:?}"
            )));
        }
    }
    Ok((0..global.num_layers()).map(|i| i < local.num_layers()).collect())
}

/// Broadcast into a local model that may be shallower than the global one.
/// The result has the local model's depth.
pub fn mix_into_local(
    global: &LayeredParams,
    local: &LayeredParams,
    sched: &MixSchedule,
) -> Result<LayeredParams> {
    match_layers(global, local)?;
    if sched.len() != global.num_layers() {
        return Err(Error::Shape("schedule must cover every global layer".into()));
    }
    let layers = (0..local.num_layers())
        .map(|i| mix_layer(sched.lambdas()[i], global.layer(i), local.layer(i)))
        .collect();
    LayeredParams::new(local.shapes().to_vec(), layers)
}

/// Aggregation-side mix for a possibly shallower local model. Global layers
/// without a local counterpart are returned unchanged.
pub fn mix_into_global(
    global: &LayeredParams,
    local: &LayeredParams,
    sched: &MixSchedule,
) -> Result<LayeredParams> {
    let mask = match_layers(global, local)?;
    if sched.len() != global.num_layers() {
        return Err(Error::Shape("schedule must cover every global layer".into()));
    }
    let layers = (0..global.num_layers())
        .map(|i| {
            if mask[i] {
                mix_layer(sched.lambdas()[i], global.layer(i), local.layer(i))
            } else {
                global.layer(i).to_vec()
            }
        })
        .collect();
    LayeredParams::new(global.shapes().to_vec(), layers)
}

/// Layers that need no transfer: in the broadcast phase those with
/// `lambda = 0` (nothing to download), in the aggregate phase those with
/// `lambda = 1` (the server already holds them).
pub fn frozen_layer_count(sched: &MixSchedule) -> usize {
    let frozen_value = match sched.phase() {
        Phase::Broadcast => 0.0,
        Phase::Aggregate => 1.0,
    };
    sched.lambdas().iter().filter(|&&l| l == frozen_value).count()
}

/// Mask of layers that must be transferred in this schedule's phase.
pub fn transferred_layers(sched: &MixSchedule) -> Vec<bool> {
    sched
        .lambdas()
        .iter()
        .map(|&l| match sched.phase() {
            Phase::Broadcast => l > 0.0,
            Phase::Aggregate => l < 1.0,
        })
        .collect()
}

/// `sum_k Omega_k * lambda_bar_k` over a cohort.
pub fn population_lambda_bar(schedules: &[MixSchedule], weights: &[f64]) -> f64 {
    schedules.iter().zip(weights).map(|(s, w)| w * s.lambda_bar()).sum()
}

/// Input-space mixup of two labelled samples (reference utility; training
/// mixes parameters, not inputs).
pub fn mixup_samples(
    x_i: &[f64],
    y_i: &[f64],
    x_j: &[f64],
    y_j: &[f64],
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(u, v)| lambda * u + (1.0 - lambda) * v).collect()
    };
    (mix(x_i, x_j), mix(y_i, y_j))
}
