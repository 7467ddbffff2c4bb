use alloc::string::String;
use alloc::vec::Vec;
use alloc::format;

use super::{Param, Sequential};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

/// Ordered collection of named tensors: everything a model needs to be
/// rebuilt bit-exactly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateDict {
    tensors: Vec<NamedTensor>,
}

impl StateDict {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor; names must be unique.
    pub fn push(&mut self, tensor: NamedTensor) -> Result<()> {
        let expected: usize = tensor.shape.iter().product();
        if expected != tensor.data.len() {
            return Err(Error::shape(format!("state tensor {}", tensor.name), &tensor.shape, &[tensor.data.len()]));
        }
        if self.tensors.iter().any(|t| t.name == tensor.name) {
            return Err(Error::Invalid(format!("duplicate state tensor {}", tensor.name)));
        }
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn push_f32(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) -> Result<()> {
        self.push(NamedTensor {
            name: name.into(),
            shape: shape.to_vec(),
            data: TensorData::F32(data),
        })
    }

    pub fn push_u32(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<u32>) -> Result<()> {
        self.push(NamedTensor {
            name: name.into(),
            shape: shape.to_vec(),
            data: TensorData::U32(data),
        })
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Invalid(format!("missing state tensor {name}")))
    }

    /// An f32 tensor whose shape must equal `shape`.
    pub fn f32(&self, name: &str, shape: &[usize]) -> Result<&[f32]> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(Error::shape(format!("state tensor {name}"), shape, &t.shape));
        }
        match &t.data {
            TensorData::F32(v) => Ok(v),
            TensorData::U32(_) => Err(Error::Invalid(format!("state tensor {name} is not f32"))),
        }
    }

    pub fn u32(&self, name: &str) -> Result<(&[usize], &[u32])> {
        let t = self.get(name)?;
        match &t.data {
            TensorData::U32(v) => Ok((&t.shape, v)),
            TensorData::F32(_) => Err(Error::Invalid(format!("state tensor {name} is not u32"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedTensor> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn into_vec(self) -> Vec<NamedTensor> {
        self.tensors
    }
}

impl FromIterator<NamedTensor> for StateDict {
    fn from_iter<I: IntoIterator<Item = NamedTensor>>(iter: I) -> Self {
        Self {
            tensors: iter.into_iter().collect(),
        }
    }
}

pub(crate) fn save_param(dict: &mut StateDict, name: String, p: &Param) -> Result<()> {
    dict.push_f32(name, p.value.shape(), p.value.data().to_vec())
}

pub(crate) fn load_param(dict: &StateDict, name: &str, p: &mut Param) -> Result<()> {
    let src = dict.f32(name, p.value.shape())?;
    p.value.data_mut().copy_from_slice(src);
    Ok(())
}

impl Sequential {
    /// Parameters and buffers under `prefix`.
    pub fn save_state(&self, prefix: &str, dict: &mut StateDict) -> Result<()> {
        for (name, p) in self.named_params(prefix) {
            save_param(dict, name, p)?;
        }
        for (name, b) in self.named_buffers(prefix) {
            dict.push_f32(name, &[b.len()], b.clone())?;
        }
        Ok(())
    }

    pub fn load_state(&mut self, prefix: &str, dict: &StateDict) -> Result<()> {
        let names: Vec<String> = self.named_params(prefix).into_iter().map(|(n, _)| n).collect();
        for (name, p) in names.iter().zip(self.params_mut()) {
            load_param(dict, name, p)?;
        }
        let names: Vec<String> = self.named_buffers(prefix).into_iter().map(|(n, _)| n).collect();
        for (name, b) in names.iter().zip(self.buffers_mut()) {
            let len = b.len();
            b.copy_from_slice(dict.f32(name, &[len])?);
        }
        Ok(())
    }
}
