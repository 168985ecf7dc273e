//! Network construction and forward evaluation.
//!
//! An [`EnergyModel`] is a plain layered network producing `K` logits. The
//! energy interpretation of those logits lives in [`crate::energy`].

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{conv_output_size, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest dropout rate accepted for an energy network.
pub const MAX_DROPOUT: f64 = 0.04;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Affine { inputs: usize, outputs: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    LeakyRelu { slope: f64 },
    Flatten,
    MeanPool,
}

impl LayerSpec {
    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Affine { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                vec![vec![out_channels, in_channels, kernel, kernel], vec![out_channels]]
            }
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Affine { inputs, .. } => inputs,
            LayerSpec::Conv2d { in_channels, kernel, .. } => in_channels * kernel * kernel,
            _ => 0,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match (self, input) {
            (LayerSpec::Affine { inputs, outputs }, [n]) if n == inputs => Ok(vec![*outputs]),
            (LayerSpec::Affine { inputs, .. }, s) => {
                Err(Error::Config(format!("affine layer expects [{inputs}], got {s:?}")))
            }
            (LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding }, [c, h, w]) => {
                if c != in_channels {
                    return Err(Error::Config(format!("conv2d expects {in_channels} channels, got {c}")));
                }
                let oh = conv_output_size(*h, *kernel, *stride, *padding)?;
                let ow = conv_output_size(*w, *kernel, *stride, *padding)?;
                Ok(vec![*out_channels, oh, ow])
            }
            (LayerSpec::Conv2d { .. }, s) => Err(Error::Config(format!("conv2d expects [C, H, W], got {s:?}"))),
            (LayerSpec::LeakyRelu { slope }, s) => {
                if !(*slope > 0.0 && *slope < 1.0) {
                    return Err(Error::Config(format!("leaky_relu slope {slope} outside (0, 1)")));
                }
                Ok(s.to_vec())
            }
            (LayerSpec::Flatten, s) => Ok(vec![s.iter().product()]),
            (LayerSpec::MeanPool, [c, _, _]) => Ok(vec![*c]),
            (LayerSpec::MeanPool, s) => Err(Error::Config(format!("mean_pool expects [C, H, W], got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Per-sample input shape, e.g. `[2]` or `[1, 16, 16]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl NetworkSpec {
    /// `inputs → hidden → … → classes` with leaky-ReLU between affine layers.
    pub fn mlp(inputs: usize, hidden: &[usize], classes: usize, slope: f64) -> Self {
        let mut layers = Vec::new();
        let mut prev = inputs;
        for &h in hidden {
            layers.push(LayerSpec::Affine { inputs: prev, outputs: h });
            layers.push(LayerSpec::LeakyRelu { slope });
            prev = h;
        }
        layers.push(LayerSpec::Affine { inputs: prev, outputs: classes });
        Self { input_shape: vec![inputs], layers, num_classes: classes, dropout: 0.0 }
    }

    /// The 2-D testbed network: 2 → 64 → 64 → K.
    pub fn points2d(classes: usize) -> Self {
        Self::mlp(2, &[64, 64], classes, 0.2)
    }

    /// Small conv net for single-channel square images whose side is a
    /// multiple of 4: three conv/leaky-ReLU stages, global mean pool, affine head.
    pub fn small_convnet(channels: usize, size: usize, classes: usize) -> Self {
        let slope = 0.2;
        let layers = vec![
            LayerSpec::Conv2d { in_channels: channels, out_channels: 8, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::LeakyRelu { slope },
            LayerSpec::Conv2d { in_channels: 8, out_channels: 16, kernel: 4, stride: 2, padding: 1 },
            LayerSpec::LeakyRelu { slope },
            LayerSpec::Conv2d { in_channels: 16, out_channels: 16, kernel: 4, stride: 2, padding: 1 },
            LayerSpec::LeakyRelu { slope },
            LayerSpec::MeanPool,
            LayerSpec::Affine { inputs: 16, outputs: classes },
        ];
        Self { input_shape: vec![channels, size, size], layers, num_classes: classes, dropout: 0.0 }
    }

    /// Checks the layer chain and returns the per-sample shape after every layer.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        if self.num_classes == 0 {
            return Err(Error::Config("class count must be at least 1".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Config(format!("invalid input shape {:?}", self.input_shape)));
        }
        if !(0.0..=MAX_DROPOUT).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, {MAX_DROPOUT}]", self.dropout)));
        }
        let mut shape = self.input_shape.clone();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|e| Error::Config(format!("layer {i}: {e}")))?;
            shapes.push(shape.clone());
        }
        if shape != [self.num_classes] {
            return Err(Error::Config(format!(
                "last layer produces {shape:?}, expected [{}] logits",
                self.num_classes
            )));
        }
        Ok(shapes)
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn is_image(&self) -> bool {
        self.input_shape.len() == 3
    }
}

/// A network whose logits define the joint, marginal and conditional energies.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    spec: NetworkSpec,
    params: Vec<Tensor>,
    /// Index of each layer's first parameter tensor, if it has any.
    offsets: Vec<Option<usize>>,
}

impl EnergyModel {
    /// Fan-in scaled uniform initialization, `U(-1/√fan_in, 1/√fan_in)`.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for layer in &spec.layers {
            let bound = 1.0 / (layer.fan_in().max(1) as f64).sqrt();
            for shape in layer.param_shapes() {
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                params.push(Tensor::new(shape, data)?);
            }
        }
        Self::from_parts(spec, params)
    }

    /// Assemble a model from explicit parameters; shapes must match the spec.
    pub fn from_parts(spec: NetworkSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let mut offsets = Vec::with_capacity(spec.layers.len());
        let mut expected = Vec::new();
        for layer in &spec.layers {
            let shapes = layer.param_shapes();
            offsets.push((!shapes.is_empty()).then_some(expected.len()));
            expected.extend(shapes);
        }
        if expected.len() != params.len() || expected.iter().zip(&params).any(|(s, p)| s != p.shape()) {
            return Err(Error::Config("parameter tensors do not match the network spec".into()));
        }
        Ok(Self { spec, params, offsets })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn num_layers(&self) -> usize {
        self.spec.layers.len()
    }

    /// Put every parameter on `tape`, differentiable or not.
    pub fn bind(&self, tape: &mut Tape, differentiable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if differentiable { tape.leaf(p.clone()) } else { tape.constant(p.clone()) })
            .collect()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.ndim() != self.spec.input_shape.len() + 1 || batch.shape()[1..] != self.spec.input_shape[..] {
            return Err(Error::Dimension(format!(
                "batch shape {:?} does not match input shape {:?}",
                batch.shape(),
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    /// Records the forward pass and returns the output of every layer.
    ///
    /// `dropout` switches on training-mode dropout after each activation.
    pub fn record_layers(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: Var,
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<Vec<Var>> {
        self.check_batch(tape.value(input))?;
        let mut h = input;
        let mut outs = Vec::with_capacity(self.spec.layers.len());
        for (layer, offset) in self.spec.layers.iter().zip(&self.offsets) {
            h = match *layer {
                LayerSpec::Affine { .. } => {
                    let o = offset.expect("affine has parameters");
                    tape.affine(params[o], params[o + 1], h)?
                }
                LayerSpec::Conv2d { stride, padding, .. } => {
                    let o = offset.expect("conv2d has parameters");
                    tape.conv2d(params[o], Some(params[o + 1]), h, stride, padding)?
                }
                LayerSpec::LeakyRelu { slope } => {
                    let a = tape.leaky_relu(h, slope)?;
                    match dropout.as_deref_mut() {
                        Some(rng) if self.spec.dropout > 0.0 => {
                            let p = self.spec.dropout;
                            let shape = tape.value(a).shape().to_vec();
                            let mask = Tensor::new(
                                shape.clone(),
                                (0..shape.iter().product::<usize>())
                                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
                                    .collect(),
                            )?;
                            let m = tape.constant(mask);
                            tape.mul(a, m)?
                        }
                        _ => a,
                    }
                }
                LayerSpec::Flatten => tape.flatten(h)?,
                LayerSpec::MeanPool => tape.mean_pool(h)?,
            };
            outs.push(h);
        }
        Ok(outs)
    }

    /// Records the forward pass and returns the `[B, K]` logits.
    pub fn record(&self, tape: &mut Tape, params: &[Var], input: Var, dropout: Option<&mut dyn RngCore>) -> Result<Var> {
        let outs = self.record_layers(tape, params, input, dropout)?;
        Ok(*outs.last().expect("validated non-empty"))
    }

    /// Logits `[B, K]` for a batch `[B, input...]`, dropout off.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let x = tape.constant(batch.clone());
        let y = self.record(&mut tape, &params, x, None)?;
        Ok(tape.value(y).clone())
    }

    /// Logits of one unbatched input.
    pub fn logits(&self, input: &Tensor) -> Result<Vec<f64>> {
        let mut shape = vec![1];
        shape.extend_from_slice(input.shape());
        Ok(self.forward(&input.reshape(&shape)?)?.into_data())
    }

    /// Activations after each requested layer (0-based), in request order.
    pub fn features(&self, batch: &Tensor, layer_ids: &[usize]) -> Result<Vec<Tensor>> {
        if let Some(&bad) = layer_ids.iter().find(|&&i| i >= self.num_layers()) {
            return Err(Error::Usage(format!("layer id {bad} out of range for {} layers", self.num_layers())));
        }
        if layer_ids.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let x = tape.constant(batch.clone());
        let outs = self.record_layers(&mut tape, &params, x, None)?;
        Ok(layer_ids.iter().map(|&i| tape.value(outs[i]).clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[[f64; 2]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let a = EnergyModel::build(NetworkSpec::points2d(3), 7).unwrap();
        let b = EnergyModel::build(NetworkSpec::points2d(3), 7).unwrap();
        let c = EnergyModel::build(NetworkSpec::points2d(3), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn zero_classes_is_config_error() {
        let mut spec = NetworkSpec::points2d(3);
        spec.num_classes = 0;
        assert!(matches!(EnergyModel::build(spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn incompatible_chain_rejected() {
        let spec = NetworkSpec {
            input_shape: vec![2],
            layers: vec![LayerSpec::Affine { inputs: 3, outputs: 2 }],
            num_classes: 2,
            dropout: 0.0,
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let mut ok = NetworkSpec::points2d(2);
        ok.dropout = 0.05;
        assert!(matches!(ok.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_parameters_give_zero_logits() {
        let mut m = EnergyModel::build(NetworkSpec::points2d(3), 1).unwrap();
        m.params_mut().iter_mut().for_each(|p| p.data_mut().fill(0.0));
        let out = m.forward(&batch(&[[0.3, -2.0], [5.0, 1.0]])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_affine_matches_primitive() {
        let spec = NetworkSpec {
            input_shape: vec![2],
            layers: vec![LayerSpec::Affine { inputs: 2, outputs: 2 }],
            num_classes: 2,
            dropout: 0.0,
        };
        let w = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::vector(&[1.0, 1.0]);
        let m = EnergyModel::from_parts(spec, vec![w, b]).unwrap();
        assert_eq!(m.forward(&batch(&[[1.0, 1.0]])).unwrap().data(), &[4.0, 8.0]);
    }

    #[test]
    fn identical_rows_identical_logits() {
        let m = EnergyModel::build(NetworkSpec::points2d(4), 3).unwrap();
        let out = m.forward(&batch(&[[0.5, -0.25]; 5])).unwrap();
        for r in 1..5 {
            assert_eq!(out.row(r), out.row(0));
        }
    }

    #[test]
    fn features_of_last_layer_equal_forward() {
        let m = EnergyModel::build(NetworkSpec::small_convnet(1, 8, 3), 11).unwrap();
        let x = Tensor::new(vec![2, 1, 8, 8], (0..128).map(|i| ((i * 37) % 17) as f64 / 8.5 - 1.0).collect()).unwrap();
        let last = m.num_layers() - 1;
        let f = m.features(&x, &[last]).unwrap();
        assert_eq!(f[0], m.forward(&x).unwrap());
        assert!(m.features(&x, &[]).unwrap().is_empty());
        assert!(matches!(m.features(&x, &[last + 1]), Err(Error::Usage(_))));
    }

    #[test]
    fn one_layer_net_layer_zero_is_forward() {
        let spec = NetworkSpec {
            input_shape: vec![3],
            layers: vec![LayerSpec::Affine { inputs: 3, outputs: 2 }],
            num_classes: 2,
            dropout: 0.0,
        };
        let m = EnergyModel::build(spec, 5).unwrap();
        let x = Tensor::new(vec![1, 3], vec![0.1, 0.2, -0.3]).unwrap();
        assert_eq!(m.features(&x, &[0]).unwrap()[0], m.forward(&x).unwrap());
    }

    #[test]
    fn batch_shape_checked() {
        let m = EnergyModel::build(NetworkSpec::points2d(2), 0).unwrap();
        let bad = Tensor::zeros(&[4, 3]);
        assert!(matches!(m.forward(&bad), Err(Error::Dimension(_))));
    }
}
