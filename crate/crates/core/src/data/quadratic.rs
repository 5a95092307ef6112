//! Quadratic client objectives `F_k(theta) = 0.5 * ||theta - c_k||^2`.
//!
//! Stochastic gradients come from a finite set of centred perturbations
//! `xi_j`: sample `j` contributes `0.5 * ||theta - c_k||^2 + <xi_j, theta>`,
//! so a single-sample gradient is `theta - c_k + xi_j` while the full-batch
//! gradient is exactly `theta - c_k`.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{GradEstimate, LayerShape, LayeredParams};
use crate::rng;
use crate::training::LocalObjective;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticObjective {
    center: Vec<f64>,
    noise: Vec<Vec<f64>>,
    shapes: Vec<LayerShape>,
}

impl QuadraticObjective {
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn noise_samples(&self) -> &[Vec<f64>] {
        &self.noise
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    /// Exact gradient `theta - c_k`.
    pub fn exact_gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(&self.center).map(|(t, c)| t - c).collect()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        0.5 * theta.iter().zip(&self.center).map(|(t, c)| (t - c) * (t - c)).sum::<f64>()
    }
}

impl LocalObjective for QuadraticObjective {
    fn num_samples(&self) -> usize {
        self.noise.len()
    }

    fn batch_gradient(&self, params: &LayeredParams, batch: &[usize]) -> Result<GradEstimate> {
        if batch.is_empty() {
            return Err(Error::Usage("quadratic gradient needs a nonempty batch".into()));
        }
        let theta = params.flatten();
        if theta.len() != self.center.len() {
            return Err(Error::Shape(format!(
                "parameters have {} values, objective has dimension {}",
                theta.len(),
                self.center.len()
            )));
        }
        let mut grad = self.exact_gradient(&theta);
        let mut linear = 0.0;
        let inv = 1.0 / batch.len() as f64;
        for &j in batch {
            let xi = self
                .noise
                .get(j)
                .ok_or_else(|| Error::Data(format!("sample {j} out of range")))?;
            for ((g, x), t) in grad.iter_mut().zip(xi).zip(&theta) {
                *g += inv * x;
                linear += inv * x * t;
            }
        }
        let loss = self.value(&theta) + linear;
        Ok(GradEstimate {
            gradient: LayeredParams::from_flat(params.shapes().to_vec(), &grad)?,
            batch: batch.to_vec(),
            loss,
        })
    }
}

/// A weighted collection of quadratic clients.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticFamily {
    clients: Vec<QuadraticObjective>,
    weights: Vec<f64>,
    dim: usize,
}

/// `K` quadratic clients with centres uniform in `[-spread, spread]^dim`.
///
/// `weights` defaults to uniform and must sum to 1 within `1e-12`.
pub fn gen_quadratic_clients(
    num_clients: usize,
    dim: usize,
    center_spread: f64,
    weights: Option<Vec<f64>>,
    seed: u64,
) -> Result<QuadraticFamily> {
    if num_clients == 0 {
        return Err(Error::Config("need at least one quadratic client".into()));
    }
    if dim == 0 {
        return Err(Error::Config("quadratic dimension must be >= 1".into()));
    }
    let weights = match weights {
        None => vec![1.0 / num_clients as f64; num_clients],
        Some(w) => {
            if w.len() != num_clients {
                return Err(Error::Config(format!(
                    "{} weights for {num_clients} clients",
                    w.len()
                )));
            }
            if w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Config("client weights must be >= 0".into()));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("client weights sum to {total}, not 1")));
            }
            w
        }
    };
    let mut rng = rng::rng_from(seed, &[rng::stream::DATA, 10]);
    let spread = center_spread.abs();
    let clients = (0..num_clients)
        .map(|_| QuadraticObjective {
            center: (0..dim)
                .map(|_| if spread > 0.0 { rng.random_range(-spread..=spread) } else { 0.0 })
                .collect(),
            noise: vec![vec![0.0; dim]],
            shapes: vec![LayerShape::vector(dim)],
        })
        .collect();
    Ok(QuadraticFamily { clients, weights, dim })
}

impl QuadraticFamily {
    /// Clients with explicit centres (one `Vec` per client).
    pub fn from_centers(centers: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = centers.first().map_or(0, Vec::len);
        if dim == 0 || centers.iter().any(|c| c.len() != dim) {
            return Err(Error::Config("centres must share a nonzero dimension".into()));
        }
        if weights.len() != centers.len() || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("one weight per client, summing to 1".into()));
        }
        let clients = centers
            .into_iter()
            .map(|center| QuadraticObjective {
                center,
                noise: vec![vec![0.0; dim]],
                shapes: vec![LayerShape::vector(dim)],
            })
            .collect();
        Ok(Self { clients, weights, dim })
    }

    /// Gives every client `samples` centred Gaussian perturbations with
    /// `E||xi||^2 = sigma^2` before centring. `sigma = 0` restores exact gradients.
    pub fn with_noise(mut self, sigma: f64, samples: usize, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("noise level must be >= 0, got {sigma}")));
        }
        if sigma == 0.0 {
            for c in self.clients.iter_mut() {
                c.noise = vec![vec![0.0; self.dim]];
            }
            return Ok(self);
        }
        if samples < 2 {
            return Err(Error::Config("noisy quadratics need at least 2 samples".into()));
        }
        let sd = sigma / (self.dim as f64).sqrt();
        for (k, c) in self.clients.iter_mut().enumerate() {
            let mut rng = rng::rng_from(seed, &[rng::stream::DATA, 11, k as u64]);
            let mut noise: Vec<Vec<f64>> = (0..samples)
                .map(|_| {
                    (0..self.dim)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            sd * z
                        })
                        .collect()
                })
                .collect();
            for d in 0..self.dim {
                let mean = noise.iter().map(|x| x[d]).sum::<f64>() / samples as f64;
                noise.iter_mut().for_each(|x| x[d] -= mean);
            }
            c.noise = noise;
        }
        Ok(self)
    }

    /// Splits the parameter vector into `n` near-equal layers.
    pub fn with_layers(mut self, n: usize) -> Result<Self> {
        if n == 0 || n > self.dim {
            return Err(Error::Config(format!(
                "cannot split dimension {} into {n} layers",
                self.dim
            )));
        }
        let base = self.dim / n;
        let extra = self.dim % n;
        let shapes: Vec<LayerShape> = (0..n)
            .map(|i| LayerShape::vector(base + usize::from(i < extra)))
            .collect();
        for c in self.clients.iter_mut() {
            c.shapes = shapes.clone();
        }
        Ok(self)
    }

    pub fn clients(&self) -> &[QuadraticObjective] {
        &self.clients
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        self.clients[0].shapes.clone()
    }

    pub fn zero_params(&self) -> LayeredParams {
        LayeredParams::zeros(self.shapes()).expect("valid shapes")
    }

    pub fn params_from(&self, theta: &[f64]) -> Result<LayeredParams> {
        LayeredParams::from_flat(self.shapes(), theta)
    }

    /// Closed-form minimizer of the weighted objective: `sum_k w_k c_k`.
    pub fn optimum(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (c, w) in self.clients.iter().zip(&self.weights) {
            for (o, v) in out.iter_mut().zip(&c.center) {
                *o += w * v;
            }
        }
        out
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.clients.iter().zip(&self.weights).map(|(c, w)| w * c.value(theta)).sum()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (c, w) in self.clients.iter().zip(&self.weights) {
            for (o, g) in out.iter_mut().zip(c.exact_gradient(theta)) {
                *o += w * g;
            }
        }
        out
    }
}
