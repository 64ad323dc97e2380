use std::sync::atomic::{AtomicU64, Ordering};

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::{affine, Matrix};
use crate::error::{invalid, shape, Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
    Softmax,
}

impl Activation {
    fn apply(self, row: &mut [f64]) {
        match self {
            Activation::Relu => row.iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Tanh => row.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Identity => {}
            Activation::Softmax => {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    total += *x;
                }
                row.iter_mut().for_each(|x| *x /= total);
            }
        }
    }

    /// Maps `d loss / d output` to `d loss / d pre-activation`, in place.
    fn backprop(self, out: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, &y)| {
                if y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Tanh => grad.iter_mut().zip(out).for_each(|(g, &y)| *g *= 1.0 - y * y),
            Activation::Identity => {}
            Activation::Softmax => {
                let dot: f64 = grad.iter().zip(out).map(|(g, y)| g * y).sum();
                grad.iter_mut().zip(out).for_each(|(g, &y)| *g = y * (*g - dot));
            }
        }
    }
}

/// Layer widths and activations of a dense network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input: usize,
    pub layers: Vec<(usize, Activation)>,
}

impl Architecture {
    pub fn new(input: usize, layers: Vec<(usize, Activation)>) -> Result<Self> {
        let arch = Self { input, layers };
        arch.validate()?;
        Ok(arch)
    }

    /// Hidden layers share one activation; the output layer has its own.
    pub fn mlp(input: usize, hidden: &[usize], hidden_act: Activation, output: usize, output_act: Activation) -> Result<Self> {
        let mut layers: Vec<_> = hidden.iter().map(|&h| (h, hidden_act)).collect();
        layers.push((output, output_act));
        Self::new(input, layers)
    }

    fn validate(&self) -> Result<()> {
        if self.input == 0 || self.layers.is_empty() || self.layers.iter().any(|&(w, _)| w == 0) {
            return Err(invalid("network needs a nonempty input and at least one nonempty layer"));
        }
        let last = self.layers.len() - 1;
        if self.layers[..last].iter().any(|&(_, a)| a == Activation::Softmax) {
            return Err(invalid("softmax is only allowed on the output layer"));
        }
        Ok(())
    }

    pub fn output(&self) -> usize {
        self.layers.last().map_or(self.input, |l| l.0)
    }

    /// `(fan_in, fan_out)` of every layer.
    pub fn widths(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(self.input)
            .chain(self.layers.iter().map(|l| l.0))
            .zip(self.layers.iter().map(|l| l.0))
    }

    pub fn param_count(&self) -> usize {
        self.widths().map(|(i, o)| i * o + o).sum()
    }

    /// Offset of layer `l`'s weights in the flat parameter vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.widths().take(l).map(|(i, o)| i * o + o).sum()
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Dense network whose parameters live in one flat vector.
///
/// Layout is layer-major; within a layer the weight matrix `W` (`fan_in x
/// fan_out`, row-major) comes first, then the bias.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NetDocument", into = "NetDocument")]
pub struct DenseNet {
    arch: Architecture,
    params: Vec<f64>,
    version: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetDocument {
    architecture: Architecture,
    params: Vec<f64>,
}

impl TryFrom<NetDocument> for DenseNet {
    type Error = Error;

    fn try_from(doc: NetDocument) -> Result<Self> {
        DenseNet::unflatten(&doc.params, &doc.architecture)
    }
}

impl From<DenseNet> for NetDocument {
    fn from(net: DenseNet) -> Self {
        NetDocument { architecture: net.arch, params: net.params }
    }
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.params == other.params
    }
}

/// Activations recorded by [`DenseNet::forward`] for one batch.
#[derive(Debug, Clone)]
pub struct GradTape {
    version: u64,
    // values[0] is the input; values[l + 1] the output of layer l
    values: Vec<Matrix>,
}

impl GradTape {
    pub fn output(&self) -> &Matrix {
        self.values.last().expect("tape holds at least the input")
    }
}

/// Gradients with respect to the flat parameters and to the input batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Matrix,
}

impl DenseNet {
    /// Fan-based uniform initialization with zero biases.
    pub fn init(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let mut params = Vec::with_capacity(arch.param_count());
        for (fan_in, fan_out) in arch.widths() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self { arch, params, version: fresh_version() })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let n = arch.param_count();
        Ok(Self { arch, params: vec![0.0; n], version: fresh_version() })
    }

    pub fn unflatten(theta: &[f64], arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        if theta.len() != arch.param_count() {
            return Err(shape(format!("{} parameters for an architecture holding {}", theta.len(), arch.param_count())));
        }
        Ok(Self { arch: arch.clone(), params: theta.to_vec(), version: fresh_version() })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access; invalidates every outstanding tape.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version = fresh_version();
        &mut self.params
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// `(W, b)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = self.arch.widths().nth(l).expect("layer index in range");
        let start = self.arch.layer_offset(l);
        let (w, rest) = self.params[start..].split_at(fan_in * fan_out);
        (w, &rest[..fan_out])
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.arch.input {
            return Err(shape(format!("input width {} for a network expecting {}", x.cols(), self.arch.input)));
        }
        Ok(())
    }

    /// Evaluates the batch and records what [`DenseNet::backward`] needs.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, GradTape)> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.arch.layers.len() + 1);
        values.push(x.clone());
        for (l, &(_, act)) in self.arch.layers.iter().enumerate() {
            let (w, b) = self.layer(l);
            let mut z = affine(values.last().expect("nonempty"), w, b);
            for i in 0..z.rows() {
                act.apply(z.row_mut(i));
            }
            values.push(z);
        }
        let y = values.last().expect("nonempty").clone();
        Ok((y, GradTape { version: self.version, values }))
    }

    /// Forward pass without a tape.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for (l, &(_, act)) in self.arch.layers.iter().enumerate() {
            let (w, b) = self.layer(l);
            cur = affine(&cur, w, b);
            for i in 0..cur.rows() {
                act.apply(cur.row_mut(i));
            }
        }
        Ok(cur)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(&Matrix::row_vector(x))?.into_vec())
    }

    /// Reverse pass for `upstream = d loss / d output`.
    pub fn backward(&self, tape: &GradTape, upstream: &Matrix) -> Result<Gradients> {
        if tape.version != self.version {
            return Err(Error::StaleTape);
        }
        let out = tape.output();
        if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
            return Err(shape(format!(
                "upstream gradient {}x{} for output {}x{}",
                upstream.rows(),
                upstream.cols(),
                out.rows(),
                out.cols()
            )));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = upstream.clone();
        for (l, (fan_in, fan_out)) in self.arch.widths().enumerate().collect::<Vec<_>>().into_iter().rev() {
            let act = self.arch.layers[l].1;
            let y = &tape.values[l + 1];
            for i in 0..delta.rows() {
                act.backprop(y.row(i), delta.row_mut(i));
            }
            let x = &tape.values[l];
            let start = self.arch.layer_offset(l);
            let (gw, gb) = grads[start..start + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for i in 0..delta.rows() {
                let d = delta.row(i);
                for (gbj, dj) in gb.iter_mut().zip(d) {
                    *gbj += dj;
                }
                for (k, &xk) in x.row(i).iter().enumerate() {
                    if xk == 0.0 {
                        continue;
                    }
                    for (g, dj) in gw[k * fan_out..(k + 1) * fan_out].iter_mut().zip(d) {
                        *g += xk * dj;
                    }
                }
            }
            let (w, _) = self.layer(l);
            let mut prev = Matrix::zeros(delta.rows(), fan_in);
            for i in 0..delta.rows() {
                let d = delta.row(i);
                for (k, p) in prev.row_mut(i).iter_mut().enumerate() {
                    *p = w[k * fan_out..(k + 1) * fan_out].iter().zip(d).map(|(a, b)| a * b).sum();
                }
            }
            delta = prev;
        }
        Ok(Gradients { params: grads, input: delta })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
