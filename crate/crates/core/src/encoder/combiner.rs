use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::nn::{Param, Tensor};
use crate::{Error, Result};

/// How the three branch features are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CombinerKind {
    /// `x_lm + x_ga + x_cq`
    Sum,
    /// Elementwise maximum.
    Max,
    /// `relu(x_lm * w_lm + x_ga * w_ga + x_cq * w_cq + w_bias)`, elementwise.
    Lin,
}

impl CombinerKind {
    pub const ALL: [CombinerKind; 3] = [CombinerKind::Sum, CombinerKind::Max, CombinerKind::Lin];

    pub fn name(self) -> &'static str {
        match self {
            CombinerKind::Sum => "sum-comb",
            CombinerKind::Max => "max-comb",
            CombinerKind::Lin => "lin-comb",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sum" | "sum-comb" | "sumcomb" => Ok(CombinerKind::Sum),
            "max" | "max-comb" | "maxcomb" => Ok(CombinerKind::Max),
            "lin" | "lin-comb" | "lincomb" => Ok(CombinerKind::Lin),
            other => Err(Error::Config(format!("unknown combiner '{other}'"))),
        }
    }
}

/// Parameter names of the linear combiner, in storage order.
pub const LIN_PARAM_NAMES: [&str; 4] = ["w_lm", "w_ga", "w_cq", "w_bias"];

#[derive(Debug, Clone)]
enum Cache {
    Sum,
    /// Index of the winning input per element.
    Max(Vec<u8>),
    Lin { inputs: [Tensor; 3], active: Vec<bool> },
}

/// Combiner block with its trainable state (linear kind only).
#[derive(Debug, Clone)]
pub struct Combiner {
    kind: CombinerKind,
    dim: usize,
    /// `[w_lm, w_ga, w_cq, w_bias]` for [`CombinerKind::Lin`], empty otherwise.
    params: Vec<Param>,
    cache: Option<Cache>,
}

impl Combiner {
    /// Linear weights start at one and the bias at zero, so an untrained
    /// linear combiner equals `relu(sum)`.
    pub fn new(kind: CombinerKind, dim: usize) -> Self {
        let params = match kind {
            CombinerKind::Lin => vec![
                Param::new(Tensor::filled(&[dim], 1.0)),
                Param::new(Tensor::filled(&[dim], 1.0)),
                Param::new(Tensor::filled(&[dim], 1.0)),
                Param::new(Tensor::zeros(&[dim])),
            ],
            _ => Vec::new(),
        };
        Self {
            kind,
            dim,
            params,
            cache: None,
        }
    }

    /// Linear combiner with explicit weights and bias.
    pub fn linear(w_lm: Vec<f32>, w_ga: Vec<f32>, w_cq: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        let dim = w_lm.len();
        let mut params = Vec::with_capacity(4);
        for (name, v) in LIN_PARAM_NAMES.iter().zip([w_lm, w_ga, w_cq, bias]) {
            if v.len() != dim {
                return Err(Error::shape(format!("combiner {name}"), &[dim], &[v.len()]));
            }
            params.push(Param::new(Tensor::new(&[dim], v)?));
        }
        Ok(Self {
            kind: CombinerKind::Lin,
            dim,
            params,
            cache: None,
        })
    }

    pub fn kind(&self) -> CombinerKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.params.iter_mut().collect()
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        LIN_PARAM_NAMES
            .iter()
            .zip(&self.params)
            .map(|(n, p)| (format!("{prefix}{n}"), p))
            .collect()
    }

    fn check(&self, xs: [&Tensor; 3]) -> Result<usize> {
        let n = xs[0].batch();
        for x in xs {
            if x.shape() != [n, self.dim] {
                return Err(Error::shape("combiner input [N, D]", &[n, self.dim], x.shape()));
            }
        }
        Ok(n)
    }

    /// Combines `[N, D]` batches; caches what `backward` needs.
    pub fn forward(&mut self, xs: [&Tensor; 3]) -> Result<Tensor> {
        let n = self.check(xs)?;
        let [a, b, c] = xs.map(|x| x.data());
        let len = n * self.dim;
        let mut out = vec![0.0f32; len];
        let cache = match self.kind {
            CombinerKind::Sum => {
                for i in 0..len {
                    out[i] = a[i] + b[i] + c[i];
                }
                Cache::Sum
            }
            CombinerKind::Max => {
                let mut arg = vec![0u8; len];
                for i in 0..len {
                    // ties go to the earliest input
                    let (mut best, mut k) = (a[i], 0u8);
                    if b[i] > best {
                        best = b[i];
                        k = 1;
                    }
                    if c[i] > best {
                        best = c[i];
                        k = 2;
                    }
                    out[i] = best;
                    arg[i] = k;
                }
                Cache::Max(arg)
            }
            CombinerKind::Lin => {
                let w: Vec<&[f32]> = self.params.iter().map(|p| p.value.data()).collect();
                let mut active = vec![false; len];
                for i in 0..len {
                    let d = i % self.dim;
                    let z = a[i] * w[0][d] + b[i] * w[1][d] + c[i] * w[2][d] + w[3][d];
                    active[i] = z > 0.0;
                    out[i] = if z > 0.0 { z } else { 0.0 };
                }
                Cache::Lin {
                    inputs: [xs[0].clone(), xs[1].clone(), xs[2].clone()],
                    active,
                }
            }
        };
        self.cache = Some(cache);
        Tensor::new(&[n, self.dim], out)
    }

    /// Input gradients for the three branches; accumulates parameter
    /// gradients of the linear kind.
    pub fn backward(&mut self, grad: &Tensor) -> Result<[Tensor; 3]> {
        let cache = self.cache.take().ok_or_else(|| Error::NoForward("Combiner".into()))?;
        let n = grad.batch();
        if grad.shape() != [n, self.dim] {
            return Err(Error::shape("combiner upstream gradient", &[n, self.dim], grad.shape()));
        }
        let g = grad.data();
        let len = g.len();
        let shape = [n, self.dim];
        match cache {
            Cache::Sum => Ok([grad.clone(), grad.clone(), grad.clone()]),
            Cache::Max(arg) => {
                if arg.len() != len {
                    return Err(Error::shape("combiner upstream gradient", &[arg.len()], &[len]));
                }
                let mut d = [vec![0.0f32; len], vec![0.0f32; len], vec![0.0f32; len]];
                for i in 0..len {
                    d[arg[i] as usize][i] = g[i];
                }
                let [d0, d1, d2] = d;
                Ok([Tensor::new(&shape, d0)?, Tensor::new(&shape, d1)?, Tensor::new(&shape, d2)?])
            }
            Cache::Lin { inputs, active } => {
                if active.len() != len {
                    return Err(Error::shape("combiner upstream gradient", &[active.len()], &[len]));
                }
                let dz: Vec<f32> = g.iter().zip(&active).map(|(&g, &on)| if on { g } else { 0.0 }).collect();
                let mut dx = [vec![0.0f32; len], vec![0.0f32; len], vec![0.0f32; len]];
                for k in 0..3 {
                    let x = inputs[k].data();
                    let (wv, wg) = {
                        let p = &mut self.params[k];
                        (p.value.data().to_vec(), p.grad.data_mut())
                    };
                    for i in 0..len {
                        let d = i % self.dim;
                        wg[d] += dz[i] * x[i];
                        dx[k][i] = dz[i] * wv[d];
                    }
                }
                let bg = self.params[3].grad.data_mut();
                for i in 0..len {
                    bg[i % self.dim] += dz[i];
                }
                let [d0, d1, d2] = dx;
                Ok([Tensor::new(&shape, d0)?, Tensor::new(&shape, d1)?, Tensor::new(&shape, d2)?])
            }
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Combines three single feature vectors.
pub fn combine(x_lm: &[f32], x_ga: &[f32], x_cq: &[f32], combiner: &Combiner) -> Result<Vec<f32>> {
    let mut c = Combiner {
        kind: combiner.kind,
        dim: combiner.dim,
        params: combiner.params.clone(),
        cache: None,
    };
    let t = |x: &[f32]| Tensor::new(&[1, x.len()], x.to_vec());
    let out = c.forward([&t(x_lm)?, &t(x_ga)?, &t(x_cq)?])?;
    Ok(out.into_data())
}
