use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::{AvgPool2, BatchNorm, Conv2d, Dense, Dropout, GlobalAvgPool, Mode, Param, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let mask: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
        let out = x.data().iter().map(|&v| v.max(0.0)).collect();
        self.mask = Some(mask);
        Tensor::new(x.shape(), out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mask = self.mask.take().ok_or_else(|| Error::NoForward("ReLU".into()))?;
        if mask.len() != grad.len() {
            return Err(Error::shape("ReLU upstream gradient", &[mask.len()], &[grad.len()]));
        }
        let dx = grad.data().iter().zip(&mask).map(|(&g, &m)| if m { g } else { 0.0 }).collect();
        Tensor::new(grad.shape(), dx)
    }
}

/// Row-wise softmax over the last dimension of `[N, D]`.
#[derive(Debug, Clone, Default)]
pub struct Softmax {
    out: Option<Tensor>,
}

impl Softmax {
    pub fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        if x.shape().len() != 2 {
            return Err(Error::shape("Softmax input [N, D]", &[0, 0], x.shape()));
        }
        let y = super::softmax_rows(x);
        self.out = Some(y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let y = self.out.take().ok_or_else(|| Error::NoForward("Softmax".into()))?;
        if grad.shape() != y.shape() {
            return Err(Error::shape("Softmax upstream gradient", y.shape(), grad.shape()));
        }
        let d = y.shape()[1];
        let mut dx = Vec::with_capacity(y.len());
        for (yr, gr) in y.data().chunks_exact(d).zip(grad.data().chunks_exact(d)) {
            let dot: f32 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
            dx.extend(yr.iter().zip(gr).map(|(yv, gv)| yv * (gv - dot)));
        }
        Tensor::new(y.shape(), dx)
    }
}

/// Declarative description of one layer; input sizes are inferred when a
/// [`Sequential`] is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv2d { kernel: (usize, usize), out_channels: usize },
    BatchNorm,
    Relu,
    AvgPool2,
    GlobalAvgPool,
    Dropout(f32),
    Dense(usize),
    Softmax,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv2d(Conv2d),
    BatchNorm(BatchNorm),
    Relu(Relu),
    AvgPool2(AvgPool2),
    GlobalAvgPool(GlobalAvgPool),
    Dropout(Dropout),
    Dense(Dense),
    Softmax(Softmax),
}

impl Layer {
    /// Builds a layer for per-item input shape `input` and returns it with
    /// its per-item output shape.
    pub fn build<R: Rng + ?Sized>(spec: LayerSpec, input: &[usize], rng: &mut R) -> Result<(Self, Vec<usize>)> {
        let bad = |what: &str| Error::shape(format!("{what} per-item input"), &[], input);
        Ok(match spec {
            LayerSpec::Conv2d { kernel, out_channels } => {
                let &[c, h, w] = input else { return Err(bad("Conv2d")) };
                (
                    Layer::Conv2d(Conv2d::new(c, out_channels, kernel, rng)?),
                    alloc::vec![out_channels, h, w],
                )
            }
            LayerSpec::BatchNorm => {
                let c = *input.first().ok_or_else(|| bad("BatchNorm"))?;
                (Layer::BatchNorm(BatchNorm::new(c)), input.to_vec())
            }
            LayerSpec::Relu => (Layer::Relu(Relu::default()), input.to_vec()),
            LayerSpec::AvgPool2 => {
                let &[c, h, w] = input else { return Err(bad("AvgPool2")) };
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(bad("AvgPool2 (odd spatial size)"));
                }
                (Layer::AvgPool2(AvgPool2::default()), alloc::vec![c, h / 2, w / 2])
            }
            LayerSpec::GlobalAvgPool => {
                let &[c, _, _] = input else { return Err(bad("GlobalAvgPool")) };
                (Layer::GlobalAvgPool(GlobalAvgPool::default()), alloc::vec![c])
            }
            LayerSpec::Dropout(rate) => (Layer::Dropout(Dropout::new(rate, rng.random())?), input.to_vec()),
            LayerSpec::Dense(out) => {
                let in_dim = input.iter().product();
                (Layer::Dense(Dense::new(in_dim, out, rng)), alloc::vec![out])
            }
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return Err(bad("Softmax"));
                }
                (Layer::Softmax(Softmax::default()), input.to_vec())
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv",
            Layer::BatchNorm(_) => "bn",
            Layer::Relu(_) => "relu",
            Layer::AvgPool2(_) => "avgpool",
            Layer::GlobalAvgPool(_) => "gap",
            Layer::Dropout(_) => "dropout",
            Layer::Dense(_) => "dense",
            Layer::Softmax(_) => "softmax",
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.forward(x, mode),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Relu(l) => l.forward(x, mode),
            Layer::AvgPool2(l) => l.forward(x, mode),
            Layer::GlobalAvgPool(l) => l.forward(x, mode),
            Layer::Dropout(l) => l.forward(x, mode),
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Softmax(l) => l.forward(x, mode),
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.backward(grad),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::Relu(l) => l.backward(grad),
            Layer::AvgPool2(l) => l.backward(grad),
            Layer::GlobalAvgPool(l) => l.backward(grad),
            Layer::Dropout(l) => l.backward(grad),
            Layer::Dense(l) => l.backward(grad),
            Layer::Softmax(l) => l.backward(grad),
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Param)> {
        match self {
            Layer::Conv2d(l) => alloc::vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Dense(l) => alloc::vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::BatchNorm(l) => alloc::vec![("gamma", &l.gamma), ("beta", &l.beta)],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv2d(l) => alloc::vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => alloc::vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => alloc::vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state that must survive a checkpoint.
    pub fn buffers(&self) -> Vec<(&'static str, &Vec<f32>)> {
        match self {
            Layer::BatchNorm(l) => alloc::vec![("running_mean", &l.running_mean), ("running_var", &l.running_var)],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<f32>> {
        match self {
            Layer::BatchNorm(l) => alloc::vec![&mut l.running_mean, &mut l.running_var],
            _ => Vec::new(),
        }
    }
}

/// A chain of layers with shape checking at construction and at run time.
#[derive(Debug, Clone)]
pub struct Sequential {
    layers: Vec<Layer>,
    specs: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    shapes: Vec<Vec<usize>>,
}

impl Sequential {
    pub fn new<R: Rng + ?Sized>(input_shape: &[usize], specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for (i, &spec) in specs.iter().enumerate() {
            let (layer, out) = Layer::build(spec, &shape, rng).map_err(|e| at_layer(i, &spec, e))?;
            layers.push(layer);
            shapes.push(out.clone());
            shape = out;
        }
        Ok(Self {
            layers,
            specs: specs.to_vec(),
            input_shape: input_shape.to_vec(),
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-item output shape of the whole chain.
    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map_or(&self.input_shape, |s| s.as_slice())
    }

    /// Per-item output shape after each layer.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Skip the input gradient of the first layer when it is a
    /// convolution. Nothing upstream would consume it.
    pub fn set_input_grad(&mut self, enabled: bool) {
        if let Some(Layer::Conv2d(c)) = self.layers.first_mut() {
            c.input_grad = enabled;
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if &x.shape()[1.min(x.shape().len())..] != self.input_shape.as_slice() {
            let mut expected = alloc::vec![x.batch()];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::shape("Sequential input", &expected, x.shape()));
        }
        let mut h = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            h = layer.forward(&h, mode).map_err(|e| at_layer(i, &self.specs[i], e))?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            g = layer.backward(&g).map_err(|e| at_layer(i, &self.specs[i], e))?;
        }
        Ok(g)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, p) in layer.params() {
                out.push((format!("{prefix}{i}.{}.{name}", layer.name()), p));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn named_buffers(&self, prefix: &str) -> Vec<(String, &Vec<f32>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, b) in layer.buffers() {
                out.push((format!("{prefix}{i}.{}.{name}", layer.name()), b));
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<f32>> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.params()).map(|(_, p)| p.value.len()).sum()
    }
}

fn at_layer(i: usize, spec: &LayerSpec, e: Error) -> Error {
    match e {
        Error::Shape { context, expected, actual } => Error::Shape {
            context: format!("layer {i} ({spec:?}): {context}"),
            expected,
            actual,
        },
        Error::NoForward(what) => Error::NoForward(format!("layer {i} ({what})")),
        other => other,
    }
}
