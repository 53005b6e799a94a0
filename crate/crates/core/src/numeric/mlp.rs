use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{activation, DenseArray, ParamId, ParamStore, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenActivation {
    LayerNormMish,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Tanh,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl MlpShape {
    pub fn new(
        input_dim: usize,
        hidden_dims: &[usize],
        output_dim: usize,
        output_activation: OutputActivation,
    ) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            hidden_activation: HiddenActivation::LayerNormMish,
            output_activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::contract(format!("MLP dims must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
    /// LayerNorm gain and shift; absent on the output layer.
    norm: Option<(ParamId, ParamId)>,
}

/// Parameter ids for one multi-layer perceptron living in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Mlp {
    shape: MlpShape,
    layers: Vec<Layer>,
    eps: f64,
}

impl Mlp {
    /// Registers the layers under `prefix/` with scaled-uniform weights and
    /// zero biases.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        shape: MlpShape,
        eps: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        shape.validate()?;
        let mut dims = vec![shape.input_dim];
        dims.extend(&shape.hidden_dims);
        dims.push(shape.output_dim);
        let n_layers = dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for (i, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let weight = store.add(
                format!("{prefix}/{i}/weight"),
                DenseArray::matrix(fan_in, fan_out, data)?,
            );
            let bias = store.add(format!("{prefix}/{i}/bias"), DenseArray::zeros(&[1, fan_out]));
            let norm = (i + 1 < n_layers).then(|| {
                (
                    store.add(format!("{prefix}/{i}/ln_gain"), DenseArray::filled(&[1, fan_out], 1.0)),
                    store.add(format!("{prefix}/{i}/ln_shift"), DenseArray::zeros(&[1, fan_out])),
                )
            });
            layers.push(Layer { weight, bias, norm });
        }
        Ok(Self { shape, layers, eps })
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for l in &self.layers {
            ids.push(l.weight);
            ids.push(l.bias);
            if let Some((g, s)) = l.norm {
                ids.push(g);
                ids.push(s);
            }
        }
        ids
    }

    pub fn output_weight(&self) -> ParamId {
        self.layers.last().unwrap().weight
    }

    pub fn output_bias(&self) -> ParamId {
        self.layers.last().unwrap().bias
    }

    /// Zero the final linear layer (weights and bias).
    pub fn zero_output(&self, store: &mut ParamStore) {
        let last = self.layers.last().unwrap();
        store.get_mut(last.weight).data_mut().fill(0.0);
        store.get_mut(last.bias).data_mut().fill(0.0);
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.shape.input_dim {
            return Err(Error::contract(format!(
                "MLP expects input width {}, got {cols}",
                self.shape.input_dim
            )));
        }
        Ok(())
    }

    /// Inference forward pass on a `(B, input_dim)` batch.
    pub fn forward(&self, store: &ParamStore, input: &DenseArray) -> Result<DenseArray> {
        self.check_input(input.cols())?;
        let mut x = input.clone();
        for layer in &self.layers {
            let mut y = x.matmul(store.get(layer.weight))?;
            let c = y.cols();
            let bias = store.get(layer.bias).data();
            for row in y.data_mut().chunks_exact_mut(c) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            if let Some((gain, shift)) = layer.norm {
                let (g, s) = (store.get(gain).data(), store.get(shift).data());
                for r in 0..y.rows() {
                    let row = y.row_slice_mut(r);
                    activation::standardize_row(row, self.eps);
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = activation::mish(*v * g[j] + s[j]);
                    }
                }
            }
            x = y;
        }
        Ok(match self.shape.output_activation {
            OutputActivation::Identity => x,
            OutputActivation::Tanh => x.map(f64::tanh),
            OutputActivation::Sigmoid => x.map(activation::sigmoid),
        })
    }

    /// Forward pass recorded on `tape`. With `trainable == false` the
    /// parameters enter as constants: gradient still flows to `input` but
    /// no parameter gradient is produced.
    pub fn forward_tape(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        input: Var,
        trainable: bool,
    ) -> Result<Var> {
        self.forward_tape_logits(store, tape, input, trainable)
            .map(|x| match self.shape.output_activation {
                OutputActivation::Identity => x,
                OutputActivation::Tanh => tape.tanh(x),
                OutputActivation::Sigmoid => tape.sigmoid(x),
            })
    }

    /// Like [`Mlp::forward_tape`] but stops before the output activation.
    pub fn forward_tape_logits(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        input: Var,
        trainable: bool,
    ) -> Result<Var> {
        self.check_input(tape.value(input).cols())?;
        let leaf = |tape: &mut Tape, id: ParamId| {
            if trainable {
                tape.param(store, id)
            } else {
                tape.constant(store.get(id).clone())
            }
        };
        let mut x = input;
        for layer in &self.layers {
            let w = leaf(tape, layer.weight);
            let b = leaf(tape, layer.bias);
            let y = tape.matmul(x, w)?;
            let mut y = tape.add_row(y, b)?;
            if let Some((gain, shift)) = layer.norm {
                let g = leaf(tape, gain);
                let s = leaf(tape, shift);
                y = tape.layer_norm(y, self.eps);
                y = tape.mul_row(y, g)?;
                y = tape.add_row(y, s)?;
                y = tape.mish(y);
            }
            x = y;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gradcheck::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_input(rng: &mut ChaCha8Rng, b: usize, d: usize) -> DenseArray {
        DenseArray::matrix(b, d, (0..b * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_network_outputs_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let shape = MlpShape::new(3, &[], 2, OutputActivation::Identity);
        let mlp = Mlp::new(&mut store, "m", shape, 1e-5, &mut rng).unwrap();
        mlp.zero_output(&mut store);
        store.get_mut(mlp.output_bias()).data_mut().copy_from_slice(&[0.25, -0.5]);
        let out = mlp.forward(&store, &rand_input(&mut rng, 4, 3)).unwrap();
        assert_eq!(out.shape(), &[4, 2]);
        for r in 0..4 {
            assert_eq!(out.row_slice(r), &[0.25, -0.5]);
        }
    }

    #[test]
    fn one_hidden_layer_by_hand() {
        // 2 -> 2 (LayerNorm + Mish) -> 2 identity, identity weights.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let shape = MlpShape::new(2, &[2], 2, OutputActivation::Identity);
        let mlp = Mlp::new(&mut store, "m", shape, 1e-5, &mut rng).unwrap();
        let ids = mlp.param_ids();
        store.get_mut(ids[0]).data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        store.get_mut(ids[4]).data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let x = DenseArray::row(vec![3.0, 1.0]);
        let out = mlp.forward(&store, &x).unwrap();
        // LayerNorm of (3, 1): mean 2, var 1 → (1, -1)/sqrt(1+1e-5)
        let n = 1.0 / (1.0f64 + 1e-5).sqrt();
        let expected = [activation::mish(n), activation::mish(-n)];
        assert!((out.data()[0] - expected[0]).abs() < 1e-15);
        assert!((out.data()[1] - expected[1]).abs() < 1e-15);
    }

    #[test]
    fn rejects_wrong_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", MlpShape::new(3, &[4], 2, OutputActivation::Tanh), 1e-5, &mut rng)
            .unwrap();
        assert!(matches!(
            mlp.forward(&store, &DenseArray::zeros(&[2, 4])),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn tape_and_plain_forward_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", MlpShape::new(5, &[7, 6], 3, OutputActivation::Sigmoid), 1e-5, &mut rng)
            .unwrap();
        let x = rand_input(&mut rng, 9, 5);
        let plain = mlp.forward(&store, &x).unwrap();
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let y = mlp.forward_tape(&store, &mut tape, xv, true).unwrap();
        assert_eq!(tape.value(y), &plain);
    }

    #[test]
    fn three_layer_mse_gradient_check() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::new();
            let mlp = Mlp::new(&mut store, "m", MlpShape::new(4, &[6, 5], 3, OutputActivation::Identity), 1e-5, &mut rng)
                .unwrap();
            for id in mlp.param_ids() {
                for v in store.get_mut(id).data_mut() {
                    *v += rng.random_range(-0.3..0.3);
                }
            }
            let x = rand_input(&mut rng, 5, 4);
            let target = rand_input(&mut rng, 5, 3);
            let loss = |s: &ParamStore, tape: &mut Tape| {
                let xv = tape.constant(x.clone());
                let y = mlp.forward_tape(s, tape, xv, true).unwrap();
                let t = tape.constant(target.clone());
                let d = tape.sub(y, t).unwrap();
                let d = tape.square(d);
                tape.mean(d)
            };
            let mut tape = Tape::new();
            let l = loss(&store, &mut tape);
            let grads = tape.backward(l).unwrap();
            let report = check_gradients(&store, &grads, 1e-5, |s| {
                let mut t = Tape::new();
                let l = loss(s, &mut t);
                t.value(l).item()
            });
            assert!(report.max_rel_error < 1e-5, "seed {seed}: {report:?}");
        }
    }
}
