//! Binary checkpoint format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "JEMC"  u32 version  f64 alpha  u64 step
//! u32 input_ndims  u64 dims...  u32 num_classes  f64 dropout
//! u32 layer_count, then per layer a u8 kind tag followed by
//!   0 affine     u64 inputs, u64 outputs, f64 weights[out*in], f64 bias[out]
//!   1 conv2d     u64 c_in, c_out, kernel, stride, padding, f64 kernel[...], f64 bias[c_out]
//!   2 leaky_relu f64 slope
//!   3 flatten
//!   4 mean_pool
//! u8 has_moments; if 1: u64 adam_step, then m and v payloads for every
//! parameter tensor in layer order (m0 v0 m1 v1 ...).
//! ```

use std::fs;
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::network::{EnergyModel, LayerSpec, NetworkSpec};
use crate::optim::AdamState;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"JEMC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub alpha: f64,
    pub step: u64,
    pub model: EnergyModel,
    pub moments: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(model: EnergyModel) -> Self {
        Self { alpha: 0.0, step: 0, model, moments: None }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.f64(self.alpha);
        w.u64(self.step);
        let spec = self.model.spec();
        w.u32(spec.input_shape.len() as u32);
        for &d in &spec.input_shape {
            w.u64(d as u64);
        }
        w.u32(spec.num_classes as u32);
        w.f64(spec.dropout);
        w.u32(spec.layers.len() as u32);
        let mut params = self.model.params().iter();
        for layer in &spec.layers {
            match *layer {
                LayerSpec::Affine { inputs, outputs } => {
                    w.u8(0);
                    w.u64(inputs as u64);
                    w.u64(outputs as u64);
                    w.f64s(params.next().expect("weights").data());
                    w.f64s(params.next().expect("bias").data());
                }
                LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                    w.u8(1);
                    for v in [in_channels, out_channels, kernel, stride, padding] {
                        w.u64(v as u64);
                    }
                    w.f64s(params.next().expect("kernel").data());
                    w.f64s(params.next().expect("bias").data());
                }
                LayerSpec::LeakyRelu { slope } => {
                    w.u8(2);
                    w.f64(slope);
                }
                LayerSpec::Flatten => w.u8(3),
                LayerSpec::MeanPool => w.u8(4),
            }
        }
        match &self.moments {
            Some(st) => {
                w.u8(1);
                w.u64(st.step);
                for (m, v) in st.m.iter().zip(&st.v) {
                    w.f64s(m.data());
                    w.f64s(v.data());
                }
            }
            None => w.u8(0),
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let alpha = r.f64()?;
        let step = r.u64()?;
        let ndims = r.u32()? as usize;
        if ndims == 0 || ndims > 8 {
            return Err(Error::Format(format!("implausible input rank {ndims}")));
        }
        let input_shape = (0..ndims).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let num_classes = r.u32()? as usize;
        let dropout = r.f64()?;
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::new();
        let mut params = Vec::new();
        for i in 0..n_layers {
            let layer = match r.u8()? {
                0 => {
                    let (inputs, outputs) = (r.usize()?, r.usize()?);
                    params.push(read_tensor(&mut r, vec![outputs, inputs])?);
                    params.push(read_tensor(&mut r, vec![outputs])?);
                    LayerSpec::Affine { inputs, outputs }
                }
                1 => {
                    let (c_in, c_out, k, stride, padding) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?);
                    params.push(read_tensor(&mut r, vec![c_out, c_in, k, k])?);
                    params.push(read_tensor(&mut r, vec![c_out])?);
                    LayerSpec::Conv2d { in_channels: c_in, out_channels: c_out, kernel: k, stride, padding }
                }
                2 => LayerSpec::LeakyRelu { slope: r.f64()? },
                3 => LayerSpec::Flatten,
                4 => LayerSpec::MeanPool,
                tag => return Err(Error::Format(format!("unknown layer tag {tag} at layer {i}"))),
            };
            layers.push(layer);
        }
        let spec = NetworkSpec { input_shape, layers, num_classes, dropout };
        let moments = match r.u8()? {
            0 => None,
            1 => {
                let st = r.u64()?;
                let mut m = Vec::with_capacity(params.len());
                let mut v = Vec::with_capacity(params.len());
                for p in &params {
                    m.push(read_tensor(&mut r, p.shape().to_vec())?);
                    v.push(read_tensor(&mut r, p.shape().to_vec())?);
                }
                Some(AdamState { step: st, m, v })
            }
            f => return Err(Error::Format(format!("bad moments flag {f}"))),
        };
        r.finish()?;
        let model = EnergyModel::from_parts(spec, params).map_err(|e| Error::Format(format!("inconsistent checkpoint: {e}")))?;
        Ok(Self { alpha, step, model, moments })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn read_tensor(r: &mut Reader<'_>, shape: Vec<usize>) -> Result<Tensor> {
    let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| Error::Format("tensor size overflow".into()))?;
    if n == 0 {
        return Err(Error::Format(format!("zero-sized tensor {shape:?}")));
    }
    let data = r.f64s(n)?;
    Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}

/// Save a bare model (no optimizer state, α = 0, step 0).
pub fn save_model(model: &EnergyModel, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::new(model.clone()).save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EnergyModel> {
    Ok(Checkpoint::load(path)?.model)
}
