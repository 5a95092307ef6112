//! Layered parametric models with exact gradients.
//!
//! A model's parameters are an ordered list of flat layers (index 0 is the
//! base, the last index is the head). Each layer is the unit that the mixing,
//! freezing and transfer machinery operates on.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::rng;

/// Shape of one mixable layer.
///
/// A layer holds an optional `fan_out x fan_in` row-major weight block
/// followed by an optional bias of length `fan_out`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: bool,
    pub bias: bool,
}

impl LayerShape {
    /// Weight matrix plus bias, grouped as one layer.
    pub fn dense(fan_in: usize, fan_out: usize) -> Self {
        Self { fan_in, fan_out, weights: true, bias: true }
    }

    pub fn weights_only(fan_in: usize, fan_out: usize) -> Self {
        Self { fan_in, fan_out, weights: true, bias: false }
    }

    /// Bias vector of a layer whose weights live elsewhere; `fan_in` only
    /// sets the initialization scale.
    pub fn bias_only(fan_in: usize, fan_out: usize) -> Self {
        Self { fan_in, fan_out, weights: false, bias: true }
    }

    /// A plain parameter vector, used by the quadratic test objectives.
    pub fn vector(len: usize) -> Self {
        Self::bias_only(1, len)
    }

    pub fn weight_len(&self) -> usize {
        if self.weights {
            self.fan_in * self.fan_out
        } else {
            0
        }
    }

    pub fn len(&self) -> usize {
        self.weight_len() + if self.bias { self.fan_out } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered per-layer parameter vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayeredParams {
    shapes: Vec<LayerShape>,
    layers: Vec<Vec<f64>>,
}

impl LayeredParams {
    pub fn new(shapes: Vec<LayerShape>, layers: Vec<Vec<f64>>) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::Shape("a model needs at least one layer".into()));
        }
        if shapes.len() != layers.len() {
            return Err(Error::Shape(format!(
                "{} shapes but {} layers",
                shapes.len(),
                layers.len()
            )));
        }
        for (i, (shape, layer)) in shapes.iter().zip(&layers).enumerate() {
            if shape.len() != layer.len() {
                return Err(Error::Shape(format!(
                    "layer {i}: shape expects {} values, got {}",
                    shape.len(),
                    layer.len()
                )));
            }
        }
        Ok(Self { shapes, layers })
    }

    pub fn zeros(shapes: Vec<LayerShape>) -> Result<Self> {
        let layers = shapes.iter().map(|s| vec![0.0; s.len()]).collect();
        Self::new(shapes, layers)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            shapes: self.shapes.clone(),
            layers: self.layers.iter().map(|l| vec![0.0; l.len()]).collect(),
        }
    }

    /// Splits a flat vector into layers of the given shapes.
    pub fn from_flat(shapes: Vec<LayerShape>, flat: &[f64]) -> Result<Self> {
        let total: usize = shapes.iter().map(LayerShape::len).sum();
        if total != flat.len() {
            return Err(Error::Shape(format!(
                "flat vector has {} values, shapes need {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        let layers = shapes
            .iter()
            .map(|s| {
                let layer = flat[offset..offset + s.len()].to_vec();
                offset += s.len();
                layer
            })
            .collect();
        Self::new(shapes, layers)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &[f64] {
        &self.layers[i]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.layers[i]
    }

    pub fn set_layer(&mut self, i: usize, values: &[f64]) -> Result<()> {
        if self.layers[i].len() != values.len() {
            return Err(Error::Shape(format!(
                "layer {i}: expected {} values, got {}",
                self.layers[i].len(),
                values.len()
            )));
        }
        self.layers[i].copy_from_slice(values);
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Same layer count and per-layer lengths.
    pub fn is_compatible(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.len() == b.len())
    }

    pub fn ensure_compatible(&self, other: &Self) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "incompatible parameters: layer sizes {:?} vs {:?}",
                self.layer_sizes(),
                other.layer_sizes()
            )))
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flatten()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flatten()
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        debug_assert!(self.is_compatible(other));
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Bitwise equality of every value.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.is_compatible(other)
            && self.iter().zip(other.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinearRegression,
    Logistic,
    Mlp1,
}

/// Architecture of a model.
///
/// Linear and logistic models expose two mixable layers (weights, bias).
/// `Mlp1` exposes two as well: the hidden block and the output block, each a
/// weight matrix grouped with its bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_dim: Option<usize>,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self { kind: ModelKind::LinearRegression, input_dim, output_dim, hidden_dim: None }
    }

    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        Self { kind: ModelKind::Logistic, input_dim, output_dim: num_classes, hidden_dim: None }
    }

    pub fn mlp1(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self { kind: ModelKind::Mlp1, input_dim, output_dim: num_classes, hidden_dim: Some(hidden_dim) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!(
                "model dims must be >= 1 (input {}, output {})",
                self.input_dim, self.output_dim
            )));
        }
        if self.kind == ModelKind::Mlp1 && self.hidden_dim.unwrap_or(0) == 0 {
            return Err(Error::Config("mlp1 needs a hidden dim >= 1".into()));
        }
        Ok(())
    }

    pub fn is_classifier(&self) -> bool {
        self.kind != ModelKind::LinearRegression
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        match self.kind {
            ModelKind::LinearRegression | ModelKind::Logistic => vec![
                LayerShape::weights_only(self.input_dim, self.output_dim),
                LayerShape::bias_only(self.input_dim, self.output_dim),
            ],
            ModelKind::Mlp1 => {
                let hidden = self.hidden_dim.unwrap_or(0);
                vec![
                    LayerShape::dense(self.input_dim, hidden),
                    LayerShape::dense(hidden, self.output_dim),
                ]
            }
        }
    }
}

/// Gradient of the mean loss over one batch.
#[derive(Clone, Debug)]
pub struct GradEstimate {
    pub gradient: LayeredParams,
    pub batch: Vec<usize>,
    pub loss: f64,
}

/// Uniform initialization in `[-s, s]` with `s = 1/sqrt(fan_in)` per layer.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<LayeredParams> {
    spec.validate()?;
    let mut rng = rng::rng_from(seed, &[rng::stream::INIT]);
    let shapes = spec.layer_shapes();
    let layers = shapes
        .iter()
        .map(|shape| {
            let s = 1.0 / (shape.fan_in as f64).sqrt();
            (0..shape.len()).map(|_| rng.random_range(-s..=s)).collect()
        })
        .collect();
    LayeredParams::new(shapes, layers)
}

fn ensure_params(params: &LayeredParams, spec: &ModelSpec) -> Result<()> {
    if params.shapes() != spec.layer_shapes().as_slice() {
        return Err(Error::Shape(format!(
            "parameters {:?} do not match model spec {:?}",
            params.layer_sizes(),
            spec
        )));
    }
    Ok(())
}

// y = W x + b for the weight block starting at `w` and bias `b`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let fan_in = x.len();
    for (o, slot) in out.iter_mut().enumerate() {
        let row = &w[o * fan_in..(o + 1) * fan_in];
        *slot = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    log_softmax(z).into_iter().map(f64::exp).collect()
}

struct Activations {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn activations(params: &LayeredParams, spec: &ModelSpec, x: &[f64]) -> Activations {
    match spec.kind {
        ModelKind::LinearRegression | ModelKind::Logistic => {
            let mut logits = vec![0.0; spec.output_dim];
            affine(params.layer(0), params.layer(1), x, &mut logits);
            Activations { hidden_pre: Vec::new(), hidden: Vec::new(), logits }
        }
        ModelKind::Mlp1 => {
            let hidden_dim = spec.hidden_dim.unwrap_or(0);
            let l0 = params.layer(0);
            let (w1, b1) = l0.split_at(hidden_dim * spec.input_dim);
            let mut hidden_pre = vec![0.0; hidden_dim];
            affine(w1, b1, x, &mut hidden_pre);
            let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
            let l1 = params.layer(1);
            let (w2, b2) = l1.split_at(spec.output_dim * hidden_dim);
            let mut logits = vec![0.0; spec.output_dim];
            affine(w2, b2, &hidden, &mut logits);
            Activations { hidden_pre, hidden, logits }
        }
    }
}

fn check_input(spec: &ModelSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.input_dim {
        return Err(Error::Shape(format!(
            "input has length {}, model expects {}",
            x.len(),
            spec.input_dim
        )));
    }
    Ok(())
}

/// Model output: raw `Wx + b` for regression, class probabilities otherwise.
pub fn forward(params: &LayeredParams, spec: &ModelSpec, x: &[f64]) -> Result<Vec<f64>> {
    ensure_params(params, spec)?;
    check_input(spec, x)?;
    let act = activations(params, spec, x);
    Ok(match spec.kind {
        ModelKind::LinearRegression => act.logits,
        _ => softmax(&act.logits),
    })
}

/// Mean loss over `batch` and its exact gradient.
///
/// Regression uses `0.5 * ||Wx + b - y||^2`; classifiers use cross-entropy.
pub fn loss_and_grad(
    params: &LayeredParams,
    spec: &ModelSpec,
    data: &Dataset,
    batch: &[usize],
) -> Result<GradEstimate> {
    ensure_params(params, spec)?;
    if batch.is_empty() {
        return Err(Error::Usage("loss_and_grad needs a nonempty batch".into()));
    }
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    for &idx in batch {
        let x = data
            .features()
            .get(idx)
            .ok_or_else(|| Error::Data(format!("batch index {idx} out of range")))?;
        check_input(spec, x)?;
        let act = activations(params, spec, x);
        // d loss / d logits
        let delta: Vec<f64> = match (spec.kind, data.targets()) {
            (ModelKind::LinearRegression, Targets::Real(ys)) => {
                let y = &ys[idx];
                if y.len() != spec.output_dim {
                    return Err(Error::Shape(format!(
                        "target has length {}, model outputs {}",
                        y.len(),
                        spec.output_dim
                    )));
                }
                let diff: Vec<f64> = act.logits.iter().zip(y).map(|(p, t)| p - t).collect();
                loss += 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
                diff
            }
            (ModelKind::Logistic | ModelKind::Mlp1, Targets::Classes { labels, .. }) => {
                let y = labels[idx];
                if y >= spec.output_dim {
                    return Err(Error::Data(format!(
                        "label {y} out of range for {} classes",
                        spec.output_dim
                    )));
                }
                let logp = log_softmax(&act.logits);
                loss -= logp[y];
                let mut d: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
                d[y] -= 1.0;
                d
            }
            _ => {
                return Err(Error::Usage(format!(
                    "{:?} model cannot be trained on these targets",
                    spec.kind
                )))
            }
        };

        match spec.kind {
            ModelKind::LinearRegression | ModelKind::Logistic => {
                let fan_in = spec.input_dim;
                let gw = grad.layer_mut(0);
                for (o, d) in delta.iter().enumerate() {
                    for (g, xi) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
                for (g, d) in grad.layer_mut(1).iter_mut().zip(&delta) {
                    *g += d;
                }
            }
            ModelKind::Mlp1 => {
                let hidden_dim = spec.hidden_dim.unwrap_or(0);
                let w2 = &params.layer(1)[..spec.output_dim * hidden_dim];
                // Rectifier subgradient at 0 is 0.
                let mut dh = vec![0.0; hidden_dim];
                for (o, d) in delta.iter().enumerate() {
                    for (j, slot) in dh.iter_mut().enumerate() {
                        *slot += w2[o * hidden_dim + j] * d;
                    }
                }
                for (slot, pre) in dh.iter_mut().zip(&act.hidden_pre) {
                    if *pre <= 0.0 {
                        *slot = 0.0;
                    }
                }
                {
                    let g2 = grad.layer_mut(1);
                    let (gw2, gb2) = g2.split_at_mut(spec.output_dim * hidden_dim);
                    for (o, d) in delta.iter().enumerate() {
                        for (g, h) in gw2[o * hidden_dim..(o + 1) * hidden_dim]
                            .iter_mut()
                            .zip(&act.hidden)
                        {
                            *g += d * h;
                        }
                        gb2[o] += d;
                    }
                }
                let g1 = grad.layer_mut(0);
                let (gw1, gb1) = g1.split_at_mut(hidden_dim * spec.input_dim);
                for (j, d) in dh.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    for (g, xi) in gw1[j * spec.input_dim..(j + 1) * spec.input_dim]
                        .iter_mut()
                        .zip(x)
                    {
                        *g += d * xi;
                    }
                    gb1[j] += d;
                }
            }
        }
    }
    let n = batch.len() as f64;
    grad.scale(1.0 / n);
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::Domain(format!("loss is not finite ({loss})")));
    }
    Ok(GradEstimate { gradient: grad, batch: batch.to_vec(), loss })
}

/// Mean loss over the whole dataset.
pub fn mean_loss(params: &LayeredParams, spec: &ModelSpec, data: &Dataset) -> Result<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    Ok(loss_and_grad(params, spec, data, &all)?.loss)
}

/// Argmax class; ties go to the lower index.
pub fn predict_class(params: &LayeredParams, spec: &ModelSpec, x: &[f64]) -> Result<usize> {
    let probs = forward(params, spec, x)?;
    let mut best = 0;
    for (c, p) in probs.iter().enumerate().skip(1) {
        if *p > probs[best] {
            best = c;
        }
    }
    Ok(best)
}

/// Fraction of correctly classified samples.
pub fn accuracy(params: &LayeredParams, spec: &ModelSpec, data: &Dataset) -> Result<f64> {
    if !spec.is_classifier() {
        return Err(Error::Usage("accuracy is undefined for a regression model".into()));
    }
    let labels = match data.targets() {
        Targets::Classes { labels, .. } => labels,
        Targets::Real(_) => {
            return Err(Error::Usage("accuracy needs class labels".into()));
        }
    };
    if data.is_empty() {
        return Err(Error::Data("accuracy over an empty dataset".into()));
    }
    let mut correct = 0usize;
    for (x, &y) in data.features().iter().zip(labels) {
        if predict_class(params, spec, x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_sample(x: Vec<f64>, y: usize, classes: usize) -> Dataset {
        Dataset::classification(vec![x], vec![y], classes).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let spec = ModelSpec::linear(2, 1);
        assert_eq!(init_model(&spec, 7).unwrap(), init_model(&spec, 7).unwrap());
        assert_ne!(init_model(&spec, 7).unwrap(), init_model(&spec, 8).unwrap());
    }

    #[test]
    fn mlp_layer_grouping() {
        let p = init_model(&ModelSpec::mlp1(4, 3, 2), 1).unwrap();
        assert_eq!(p.layer_sizes(), vec![12 + 3, 6 + 2]);
    }

    #[test]
    fn init_respects_scale() {
        let p = init_model(&ModelSpec::mlp1(16, 4, 3), 3).unwrap();
        assert!(p.layer(0).iter().all(|v| v.abs() <= 0.25));
        assert!(p.layer(1).iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(matches!(init_model(&ModelSpec::linear(0, 1), 0), Err(Error::Config(_))));
        assert!(matches!(
            init_model(&ModelSpec::mlp1(2, 0, 2), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn forward_known_values() {
        let spec = ModelSpec::linear(3, 1);
        let zero = LayeredParams::zeros(spec.layer_shapes()).unwrap();
        assert_eq!(forward(&zero, &spec, &[1.0, -2.0, 5.0]).unwrap(), vec![0.0]);

        let spec = ModelSpec::logistic(2, 2);
        let zero = LayeredParams::zeros(spec.layer_shapes()).unwrap();
        assert_eq!(forward(&zero, &spec, &[3.0, 1.0]).unwrap(), vec![0.5, 0.5]);

        let p = LayeredParams::new(
            spec.layer_shapes(),
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let out = forward(&p, &spec, &[1.0, 0.0]).unwrap();
        // e / (1 + e) evaluated to 20 digits: 0.73105857863000487925
        assert!((out[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((out[1] - 0.268_941_421_369_995_1).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_input() {
        let spec = ModelSpec::logistic(2, 2);
        let p = init_model(&spec, 0).unwrap();
        assert!(matches!(forward(&p, &spec, &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn loss_at_optimum_and_uniform() {
        let spec = ModelSpec::linear(1, 1);
        let p = LayeredParams::new(spec.layer_shapes(), vec![vec![1.0], vec![0.0]]).unwrap();
        let data = Dataset::regression(vec![vec![1.0]], vec![vec![1.0]]).unwrap();
        let g = loss_and_grad(&p, &spec, &data, &[0]).unwrap();
        assert_eq!(g.loss, 0.0);
        assert_eq!(g.gradient.norm(), 0.0);

        let spec = ModelSpec::logistic(2, 2);
        let zero = LayeredParams::zeros(spec.layer_shapes()).unwrap();
        let g = loss_and_grad(&zero, &spec, &one_sample(vec![0.3, -1.0], 1, 2), &[0]).unwrap();
        assert!((g.loss - std::f64::consts::LN_2).abs() < 1e-15);

        let spec = ModelSpec::logistic(2, 5);
        let zero = LayeredParams::zeros(spec.layer_shapes()).unwrap();
        let g = loss_and_grad(&zero, &spec, &one_sample(vec![0.3, -1.0], 4, 5), &[0]).unwrap();
        assert!((g.loss - 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn loss_errors() {
        let spec = ModelSpec::logistic(2, 2);
        let p = init_model(&spec, 0).unwrap();
        let data = one_sample(vec![0.0, 0.0], 1, 2);
        assert!(matches!(loss_and_grad(&p, &spec, &data, &[]), Err(Error::Usage(_))));
        let three = ModelSpec::logistic(2, 3);
        let data3 = one_sample(vec![0.0, 0.0], 2, 3);
        assert!(matches!(loss_and_grad(&p, &spec, &data3, &[0]), Err(Error::Data(_))));
        let _ = three;
    }

    #[test]
    fn accuracy_tie_breaks_low() {
        let spec = ModelSpec::logistic(1, 2);
        let zero = LayeredParams::zeros(spec.layer_shapes()).unwrap();
        let data = Dataset::classification(
            vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
            vec![0, 1, 0, 1],
            2,
        )
        .unwrap();
        assert_eq!(accuracy(&zero, &spec, &data).unwrap(), 0.5);
    }

    #[test]
    fn accuracy_of_regression_is_usage_error() {
        let spec = ModelSpec::linear(1, 1);
        let p = init_model(&spec, 0).unwrap();
        let data = Dataset::regression(vec![vec![1.0]], vec![vec![1.0]]).unwrap();
        assert!(matches!(accuracy(&p, &spec, &data), Err(Error::Usage(_))));
    }

    #[test]
    fn compatible_and_flat_roundtrip() {
        let p = init_model(&ModelSpec::mlp1(3, 2, 2), 5).unwrap();
        let q = LayeredParams::from_flat(p.shapes().to_vec(), &p.flatten()).unwrap();
        assert!(p.bit_eq(&q));
        let other = init_model(&ModelSpec::logistic(3, 2), 5).unwrap();
        assert!(!p.is_compatible(&other));
        assert!(LayeredParams::new(vec![LayerShape::vector(2)], vec![vec![1.0]]).is_err());
    }
}
