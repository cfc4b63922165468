//! Small dense networks x_{i+1} = σ_{i+1}(A_i x_i) without biases, their loss
//! functions, and exact reverse-mode gradients with respect to every layer.
//! All arithmetic is 64-bit; forward and backward are pure and deterministic.

use nalgebra::{DMatrix, DVector};

use crate::error::{EqError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Tanh,
    Relu,
    Identity,
}

impl Nonlinearity {
    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            Nonlinearity::Tanh => z.map(f64::tanh),
            // derivative at 0 is taken as 0
            Nonlinearity::Relu => z.map(|v| if v > 0.0 { v } else { 0.0 }),
            Nonlinearity::Identity => z.clone(),
        }
    }

    pub fn derivative(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            Nonlinearity::Tanh => z.map(|v| {
                let t = v.tanh();
                1.0 - t * t
            }),
            Nonlinearity::Relu => z.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            Nonlinearity::Identity => DVector::from_element(z.len(), 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// Layer shapes, per-layer nonlinearities σ_1…σ_L, and the loss ℓ.
#[derive(Debug, Clone)]
pub struct Architecture {
    /// dim(X_0), …, dim(X_L)
    pub space_dims: Vec<usize>,
    pub nonlinearities: Vec<Nonlinearity>,
    pub loss: LossKind,
}

impl Architecture {
    pub fn new(
        space_dims: Vec<usize>,
        nonlinearities: Vec<Nonlinearity>,
        loss: LossKind,
    ) -> Result<Self> {
        if space_dims.len() < 2 || space_dims.iter().any(|&d| d == 0) {
            return Err(EqError::InvalidArgument("space_dims needs ≥2 positive entries".into()));
        }
        if nonlinearities.len() != space_dims.len() - 1 {
            return Err(EqError::InvalidArgument(format!(
                "expected {} nonlinearities, got {}",
                space_dims.len() - 1,
                nonlinearities.len()
            )));
        }
        Ok(Architecture { space_dims, nonlinearities, loss })
    }

    pub fn num_layers(&self) -> usize {
        self.space_dims.len() - 1
    }

    pub fn layer_shape(&self, i: usize) -> (usize, usize) {
        (self.space_dims[i + 1], self.space_dims[i])
    }

    pub fn input_dim(&self) -> usize {
        self.space_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.space_dims.last().unwrap()
    }
}

/// The tuple A = (A_0, …, A_{L-1}) of linear layers; the state variable of
/// every dynamic. Inner product is Σ_i trace(A_iᵀ B_i).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint {
    pub layers: Vec<DMatrix<f64>>,
}

impl ParamPoint {
    pub fn zeros(arch: &Architecture) -> Self {
        let layers = (0..arch.num_layers())
            .map(|i| {
                let (r, c) = arch.layer_shape(i);
                DMatrix::zeros(r, c)
            })
            .collect();
        ParamPoint { layers }
    }

    pub fn matches(&self, arch: &Architecture) -> bool {
        self.layers.len() == arch.num_layers()
            && self
                .layers
                .iter()
                .enumerate()
                .all(|(i, a)| a.shape() == arch.layer_shape(i))
    }

    pub fn dot(&self, other: &ParamPoint) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> ParamPoint {
        ParamPoint { layers: self.layers.iter().map(|a| a * s).collect() }
    }

    pub fn add(&self, other: &ParamPoint) -> ParamPoint {
        ParamPoint {
            layers: self.layers.iter().zip(&other.layers).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &ParamPoint) -> ParamPoint {
        ParamPoint {
            layers: self.layers.iter().zip(&other.layers).map(|(a, b)| a - b).collect(),
        }
    }

    /// self += s · other
    pub fn axpy(&mut self, s: f64, other: &ParamPoint) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            *a += b * s;
        }
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.layers.iter().map(|a| a.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// A single (input, target) pair; targets are one-hot for classification.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub input: DVector<f64>,
    pub target: DVector<f64>,
}

/// Forward pass: returns Φ_A(x) together with all intermediate activations
/// x_0, …, x_L (for reuse by backprop).
pub fn forward(
    arch: &Architecture,
    params: &ParamPoint,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    if x.len() != arch.input_dim() {
        return Err(EqError::InvalidArgument(format!(
            "input dim {} does not match architecture ({})",
            x.len(),
            arch.input_dim()
        )));
    }
    if !params.matches(arch) {
        return Err(EqError::InvalidArgument("parameter shapes do not match architecture".into()));
    }
    let mut acts = Vec::with_capacity(arch.num_layers() + 1);
    acts.push(x.clone());
    for i in 0..arch.num_layers() {
        let z = &params.layers[i] * acts.last().unwrap();
        acts.push(arch.nonlinearities[i].apply(&z));
    }
    Ok((acts.last().unwrap().clone(), acts))
}

fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let m = logits.max();
    let exps = logits.map(|v| (v - m).exp());
    let s: f64 = exps.sum();
    exps / s
}

/// Loss of a network output against a target. Cross-entropy treats the output
/// as logits and folds in a max-shifted softmax; mse is ½‖output−target‖².
pub fn loss(arch: &Architecture, output: &DVector<f64>, target: &DVector<f64>) -> Result<f64> {
    if output.len() != target.len() {
        return Err(EqError::InvalidArgument("output/target dim mismatch".into()));
    }
    Ok(match arch.loss {
        LossKind::Mse => 0.5 * (output - target).norm_squared(),
        LossKind::CrossEntropy => {
            let p = softmax(output);
            -target
                .iter()
                .zip(p.iter())
                .map(|(&t, &q)| if t == 0.0 { 0.0 } else { t * q.max(1e-300).ln() })
                .sum::<f64>()
        }
    })
}

/// Gradient of the loss with respect to the output vector.
fn loss_grad_output(
    arch: &Architecture,
    output: &DVector<f64>,
    target: &DVector<f64>,
) -> DVector<f64> {
    match arch.loss {
        LossKind::Mse => output - target,
        LossKind::CrossEntropy => {
            let t: f64 = target.sum();
            softmax(output) * t - target
        }
    }
}

/// Reverse-mode gradient of ℓ(Φ_A(x), y) with respect to every layer.
pub fn grad_sample(
    arch: &Architecture,
    params: &ParamPoint,
    sample: &LabeledSample,
) -> Result<ParamPoint> {
    let (output, acts) = forward(arch, params, &sample.input)?;
    if sample.target.len() != arch.output_dim() {
        return Err(EqError::InvalidArgument("target dim mismatch".into()));
    }
    let num_layers = arch.num_layers();
    let mut grad = ParamPoint::zeros(arch);
    // g = ∂ℓ/∂x_{i+1}, walked backwards
    let mut g = loss_grad_output(arch, &output, &sample.target);
    for i in (0..num_layers).rev() {
        let z = &params.layers[i] * &acts[i];
        let dz = g.component_mul(&arch.nonlinearities[i].derivative(&z));
        grad.layers[i] = &dz * acts[i].transpose();
        if i > 0 {
            g = params.layers[i].transpose() * dz;
        }
    }
    Ok(grad)
}
