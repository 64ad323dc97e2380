//! Layer-wise permutation-invariant encoding of dense-network parameters.
//!
//! Layer `i` of a policy with weights `W_i` (`l_i x l_{i+1}`) and bias `b_i`
//! is read as `l_{i+1}` rows `(W_i[:, j], b_i[j])`, one per output unit. A
//! per-layer row encoder maps each row to `e_i` features; the features are
//! averaged over rows and the per-layer averages are concatenated. Relabeling
//! the output units of any single layer therefore leaves the encoding
//! unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::nn::{Activation, Architecture, DenseNet, GradTape, Matrix};
use crate::rng::Rng;

/// Default total embedding width.
pub const DEFAULT_REPR_DIM: usize = 256;
/// Default hidden width of every row encoder.
pub const DEFAULT_ENCODER_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LpeDocument", into = "LpeDocument")]
pub struct LpeModel {
    policy_arch: Architecture,
    encoders: Vec<DenseNet>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LpeDocument {
    policy_architecture: Architecture,
    encoders: Vec<DenseNet>,
}

impl TryFrom<LpeDocument> for LpeModel {
    type Error = Error;

    fn try_from(doc: LpeDocument) -> Result<Self> {
        LpeModel::from_encoders(doc.policy_architecture, doc.encoders)
    }
}

impl From<LpeModel> for LpeDocument {
    fn from(m: LpeModel) -> Self {
        LpeDocument { policy_architecture: m.policy_arch, encoders: m.encoders }
    }
}

/// Splits `total` as evenly as possible over `layers`, remainder to the last.
pub fn split_dims(total: usize, layers: usize) -> Vec<usize> {
    let base = total / layers;
    let mut dims = vec![base; layers];
    if let Some(last) = dims.last_mut() {
        *last += total - base * layers;
    }
    dims
}

/// Activations of one batch encoding, consumed by [`LpeModel::backward`].
#[derive(Debug, Clone)]
pub struct LpeTape {
    batch: usize,
    tapes: Vec<GradTape>,
}

impl LpeModel {
    /// Fresh row encoders `(l_i + 1) -> hidden (ReLU) -> e_i`.
    pub fn new(policy_arch: Architecture, repr_dim: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        let n_layers = policy_arch.layers.len();
        if repr_dim < n_layers {
            return Err(crate::error::invalid(format!("embedding width {repr_dim} is smaller than the {n_layers} layers")));
        }
        let dims = split_dims(repr_dim, n_layers);
        let encoders = policy_arch
            .widths()
            .zip(dims)
            .map(|((fan_in, _), e)| {
                DenseNet::init(Architecture::mlp(fan_in + 1, &[hidden], Activation::Relu, e, Activation::Identity)?, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { policy_arch, encoders })
    }

    /// Wraps caller-supplied row encoders, one per policy layer.
    pub fn from_encoders(policy_arch: Architecture, encoders: Vec<DenseNet>) -> Result<Self> {
        if encoders.len() != policy_arch.layers.len() {
            return Err(shape(format!("{} encoders for {} policy layers", encoders.len(), policy_arch.layers.len())));
        }
        for ((fan_in, _), enc) in policy_arch.widths().zip(&encoders) {
            if enc.architecture().input != fan_in + 1 {
                return Err(shape(format!("row encoder takes {} inputs, rows have {}", enc.architecture().input, fan_in + 1)));
            }
        }
        Ok(Self { policy_arch, encoders })
    }

    pub fn policy_architecture(&self) -> &Architecture {
        &self.policy_arch
    }

    pub fn encoders(&self) -> &[DenseNet] {
        &self.encoders
    }

    /// Per-layer embedding widths.
    pub fn layer_dims(&self) -> Vec<usize> {
        self.encoders.iter().map(|e| e.architecture().output()).collect()
    }

    pub fn output_dim(&self) -> usize {
        self.layer_dims().iter().sum()
    }

    pub fn param_count(&self) -> usize {
        self.encoders.iter().map(DenseNet::param_count).sum()
    }

    /// All encoder parameters, encoder by encoder.
    pub fn flatten(&self) -> Vec<f64> {
        self.encoders.iter().flat_map(|e| e.params().iter().copied()).collect()
    }

    pub fn load(&mut self, psi: &[f64]) -> Result<()> {
        if psi.len() != self.param_count() {
            return Err(shape(format!("{} values for {} encoder parameters", psi.len(), self.param_count())));
        }
        let mut offset = 0;
        for e in &mut self.encoders {
            let n = e.param_count();
            e.params_mut().copy_from_slice(&psi[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn check_policy(&self, policy: &DenseNet) -> Result<()> {
        if policy.architecture() != &self.policy_arch {
            return Err(shape("policy architecture differs from the one the encoder was built for"));
        }
        Ok(())
    }

    /// Rows `(W[:, j], b[j])` of layer `l` for every policy, stacked.
    fn layer_rows(&self, policies: &[&DenseNet], l: usize) -> Matrix {
        let (fan_in, fan_out) = self.policy_arch.widths().nth(l).expect("layer in range");
        let mut data = Vec::with_capacity(policies.len() * fan_out * (fan_in + 1));
        for p in policies {
            let (w, b) = p.layer(l);
            for j in 0..fan_out {
                data.extend((0..fan_in).map(|k| w[k * fan_out + j]));
                data.push(b[j]);
            }
        }
        Matrix::from_vec(policies.len() * fan_out, fan_in + 1, data).expect("row count matches")
    }

    /// Encodes a batch of policies; row `b` of the result embeds `policies[b]`.
    pub fn encode_batch(&self, policies: &[&DenseNet]) -> Result<(Matrix, LpeTape)> {
        for p in policies {
            self.check_policy(p)?;
        }
        let batch = policies.len();
        let total = self.output_dim();
        let mut out = Matrix::zeros(batch, total);
        let mut tapes = Vec::with_capacity(self.encoders.len());
        let mut col = 0;
        for (l, enc) in self.encoders.iter().enumerate() {
            let rows = self.layer_rows(policies, l);
            let (feats, tape) = enc.forward(&rows)?;
            let e = feats.cols();
            let per = rows.rows() / batch.max(1);
            for b in 0..batch {
                let z = &mut out.row_mut(b)[col..col + e];
                for r in 0..per {
                    for (zk, f) in z.iter_mut().zip(feats.row(b * per + r)) {
                        *zk += f;
                    }
                }
                z.iter_mut().for_each(|zk| *zk /= per as f64);
            }
            tapes.push(tape);
            col += e;
        }
        Ok((out, LpeTape { batch, tapes }))
    }

    pub fn encode(&self, policy: &DenseNet) -> Result<Vec<f64>> {
        Ok(self.encode_batch(&[policy])?.0.into_vec())
    }

    /// Gradient of a loss with respect to the encoder parameters, given
    /// `upstream = d loss / d embeddings`.
    pub fn backward(&self, tape: &LpeTape, upstream: &Matrix) -> Result<Vec<f64>> {
        if upstream.rows() != tape.batch || upstream.cols() != self.output_dim() {
            return Err(shape("upstream gradient does not match the encoded batch"));
        }
        let mut grads = Vec::with_capacity(self.param_count());
        let mut col = 0;
        for (l, (enc, t)) in self.encoders.iter().zip(&tape.tapes).enumerate() {
            let e = enc.architecture().output();
            let (_, per) = self.policy_arch.widths().nth(l).expect("layer in range");
            let mut row_grads = Matrix::zeros(tape.batch * per, e);
            for b in 0..tape.batch {
                let g = &upstream.row(b)[col..col + e];
                for r in 0..per {
                    for (o, gk) in row_grads.row_mut(b * per + r).iter_mut().zip(g) {
                        *o = gk / per as f64;
                    }
                }
            }
            grads.extend(enc.backward(t, &row_grads)?.params);
            col += e;
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn identity_encoder(width: usize) -> DenseNet {
        let arch = Architecture::new(width, vec![(width, Activation::Identity)]).unwrap();
        let mut theta = vec![0.0; width * width + width];
        for i in 0..width {
            theta[i * width + i] = 1.0;
        }
        DenseNet::unflatten(&theta, &arch).unwrap()
    }

    #[test]
    fn hand_mean_of_rows() {
        let arch = Architecture::new(2, vec![(2, Activation::Identity)]).unwrap();
        // W = [[1, 2], [3, 4]] read as rows of W; columns feed output units
        let policy = DenseNet::unflatten(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &arch).unwrap();
        let model = LpeModel::from_encoders(arch, vec![identity_encoder(3)]).unwrap();
        assert_eq!(model.encode(&policy).unwrap(), vec![1.5, 3.5, 5.5]);
    }

    #[test]
    fn zero_policy_matches_single_row() {
        let arch = Architecture::mlp(3, &[4], Activation::Tanh, 2, Activation::Tanh).unwrap();
        let model = LpeModel::new(arch.clone(), 10, 8, &mut rng_from(0)).unwrap();
        let z = model.encode(&DenseNet::zeros(arch).unwrap()).unwrap();
        let first = model.encoders()[0].predict_one(&[0.0; 4]).unwrap();
        let second = model.encoders()[1].predict_one(&[0.0; 5]).unwrap();
        assert_eq!(z, [first, second].concat());
    }

    #[test]
    fn dims_split_with_remainder_last() {
        assert_eq!(split_dims(256, 3), vec![85, 85, 86]);
        let arch = Architecture::mlp(6, &[32, 32], Activation::Relu, 2, Activation::Tanh).unwrap();
        let model = LpeModel::new(arch, DEFAULT_REPR_DIM, DEFAULT_ENCODER_HIDDEN, &mut rng_from(1)).unwrap();
        assert_eq!(model.output_dim(), 256);
        assert_eq!(model.layer_dims(), vec![85, 85, 86]);
    }

    #[test]
    fn architecture_mismatch_rejected() {
        let arch = Architecture::mlp(3, &[4], Activation::Tanh, 2, Activation::Tanh).unwrap();
        let model = LpeModel::new(arch, 16, 8, &mut rng_from(0)).unwrap();
        let other = Architecture::mlp(3, &[5], Activation::Tanh, 2, Activation::Tanh).unwrap();
        assert!(model.encode(&DenseNet::zeros(other).unwrap()).is_err());
        assert!(LpeModel::from_encoders(
            Architecture::new(2, vec![(2, Activation::Identity)]).unwrap(),
            vec![identity_encoder(4)]
        )
        .is_err());
    }

    #[test]
    fn batch_agrees_with_single_and_round_trips() {
        let arch = Architecture::mlp(3, &[4], Activation::Tanh, 2, Activation::Tanh).unwrap();
        let mut rng = rng_from(2);
        let model = LpeModel::new(arch.clone(), 12, 8, &mut rng).unwrap();
        let ps: Vec<DenseNet> = (0..3).map(|_| DenseNet::init(arch.clone(), &mut rng).unwrap()).collect();
        let refs: Vec<&DenseNet> = ps.iter().collect();
        let (batch, _) = model.encode_batch(&refs).unwrap();
        for (b, p) in ps.iter().enumerate() {
            assert_eq!(batch.row(b), model.encode(p).unwrap().as_slice());
        }
        let back: LpeModel = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
        assert_eq!(back, model);
        let mut copy = model.clone();
        copy.load(&model.flatten()).unwrap();
        assert_eq!(copy, model);
    }
}
