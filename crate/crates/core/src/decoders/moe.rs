use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::Rng;

use crate::nn::{softmax_rows, Dense, Mode, Param, Tensor};
use crate::{Error, Result};

/// Gated combination of `K` experts over a shared input.
///
/// Expert `k` is `relu(dense_k(z))` with `C` outputs. All experts live in
/// one dense layer of width `K * C`; columns `k * C .. (k + 1) * C` belong
/// to expert `k`. The gate is `softmax(dense_g(z))` with `K` outputs. The
/// layer returns the pre-softmax mixture `sum_k g_k * e_k`.
#[derive(Debug, Clone)]
pub struct MoeLayer {
    pub experts: Dense,
    pub gate: Dense,
    k: usize,
    classes: usize,
    cache: Option<MoeCache>,
}

#[derive(Debug, Clone)]
struct MoeCache {
    /// Post-ReLU expert outputs `[N, K * C]`.
    e: Vec<f32>,
    /// Gate probabilities `[N, K]`.
    g: Vec<f32>,
}

impl MoeLayer {
    pub fn new<R: Rng + ?Sized>(input: usize, experts: usize, classes: usize, rng: &mut R) -> Result<Self> {
        if experts == 0 || classes == 0 {
            return Err(Error::Config("mixture needs at least one expert and one class".into()));
        }
        Ok(Self {
            experts: Dense::new(input, experts * classes, rng),
            gate: Dense::new(input, experts, rng),
            k: experts,
            classes,
            cache: None,
        })
    }

    pub fn n_experts(&self) -> usize {
        self.k
    }

    /// Expert outputs `[N, K * C]` and gate probabilities `[N, K]`.
    pub fn parts(&mut self, z: &Tensor, mode: Mode) -> Result<(Tensor, Tensor)> {
        let mut e = self.experts.forward(z, mode)?;
        e.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let g = softmax_rows(&self.gate.forward(z, mode)?);
        Ok((e, g))
    }

    pub fn forward(&mut self, z: &Tensor, mode: Mode) -> Result<Tensor> {
        let (e, g) = self.parts(z, mode)?;
        let n = z.batch();
        let (k, c) = (self.k, self.classes);
        let mut s = vec![0.0f32; n * c];
        for i in 0..n {
            for j in 0..k {
                let gj = g.data()[i * k + j];
                let ej = &e.data()[(i * k + j) * c..(i * k + j + 1) * c];
                for (o, v) in s[i * c..(i + 1) * c].iter_mut().zip(ej) {
                    *o += gj * v;
                }
            }
        }
        self.cache = Some(MoeCache {
            e: e.into_data(),
            g: g.into_data(),
        });
        Tensor::new(&[n, c], s)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let MoeCache { e, g } = self.cache.take().ok_or_else(|| Error::NoForward("MoeLayer".into()))?;
        let (k, c) = (self.k, self.classes);
        let n = g.len() / k;
        if grad.shape() != [n, c] {
            return Err(Error::shape("MoeLayer upstream gradient", &[n, c], grad.shape()));
        }
        let ds = grad.data();
        let mut de = vec![0.0f32; n * k * c];
        let mut dgl = vec![0.0f32; n * k];
        for i in 0..n {
            let dsi = &ds[i * c..(i + 1) * c];
            let gi = &g[i * k..(i + 1) * k];
            let mut dg = vec![0.0f32; k];
            for j in 0..k {
                let base = (i * k + j) * c;
                for m in 0..c {
                    let ev = e[base + m];
                    dg[j] += ev * dsi[m];
                    // relu: zero output means inactive
                    de[base + m] = if ev > 0.0 { gi[j] * dsi[m] } else { 0.0 };
                }
            }
            let dot: f32 = gi.iter().zip(&dg).map(|(a, b)| a * b).sum();
            for j in 0..k {
                dgl[i * k + j] = gi[j] * (dg[j] - dot);
            }
        }
        let mut dz = self.experts.backward(&Tensor::new(&[n, k * c], de)?)?;
        let dz_gate = self.gate.backward(&Tensor::new(&[n, k], dgl)?)?;
        for (a, b) in dz.data_mut().iter_mut().zip(dz_gate.data()) {
            *a += b;
        }
        Ok(dz)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        vec![
            (format!("{prefix}experts.weight"), &self.experts.weight),
            (format!("{prefix}experts.bias"), &self.experts.bias),
            (format!("{prefix}gate.weight"), &self.gate.weight),
            (format!("{prefix}gate.bias"), &self.gate.bias),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.experts.weight,
            &mut self.experts.bias,
            &mut self.gate.weight,
            &mut self.gate.bias,
        ]
    }
}

/// `softmax(sum_k g_k * e_k)` for given expert outputs and gate weights.
pub fn gate_experts(experts: &[Vec<f32>], gate: &[f32]) -> Result<Vec<f32>> {
    let c = experts.first().map_or(0, |e| e.len());
    if experts.len() != gate.len() || experts.iter().any(|e| e.len() != c) {
        return Err(Error::shape("gate vs experts", &[experts.len()], &[gate.len()]));
    }
    let mut s = vec![0.0f32; c];
    for (e, g) in experts.iter().zip(gate) {
        for (o, v) in s.iter_mut().zip(e) {
            *o += g * v;
        }
    }
    Ok(softmax_rows(&Tensor::new(&[1, c], s)?).into_data())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gate_examples() {
        let p = gate_experts(&[vec![2.0, 0.0], vec![0.0, 2.0]], &[0.5, 0.5]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        let single = gate_experts(&[vec![1.0, 3.0]], &[1.0]).unwrap();
        let direct = softmax_rows(&Tensor::new(&[1, 2], vec![1.0, 3.0]).unwrap()).into_data();
        assert_eq!(single, direct);
    }

    #[test]
    fn single_expert_gate_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = MoeLayer::new(6, 1, 3, &mut rng).unwrap();
        let z = Tensor::new(&[2, 6], (0..12).map(|i| i as f32 * 0.1 - 0.5).collect()).unwrap();
        let (e, g) = layer.parts(&z, Mode::Eval).unwrap();
        assert!(g.data().iter().all(|&v| v == 1.0));
        let s = layer.forward(&z, Mode::Eval).unwrap();
        assert_eq!(s.data(), e.data());
    }
}
