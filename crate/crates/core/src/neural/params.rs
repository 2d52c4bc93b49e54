use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors. Names are unique; ids are dense indices in insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    /// Xavier-uniform initialised `rows × cols` parameter.
    pub fn add_xavier(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut impl Rng) -> Result<ParamId> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
        self.add(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn add_uniform(&mut self, name: impl Into<String>, rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Result<ParamId> {
        let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
        self.add(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Result<ParamId> {
        self.add(name, Tensor::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn to_checkpoint(&self) -> ParamCheckpoint {
        ParamCheckpoint {
            params: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(name, t)| NamedTensor { name: name.clone(), rows: t.rows(), cols: t.cols(), values: t.data().to_vec() })
                .collect(),
        }
    }

    /// Overwrite values from a checkpoint. Every stored parameter must exist with the same shape,
    /// and every local parameter must be present.
    pub fn load_checkpoint(&mut self, ckpt: &ParamCheckpoint) -> Result<()> {
        if ckpt.params.len() != self.values.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model expects {}",
                ckpt.params.len(),
                self.values.len()
            )));
        }
        for p in &ckpt.params {
            let id = self.id(&p.name).ok_or_else(|| Error::Checkpoint(format!("unknown parameter {:?}", p.name)))?;
            let t = &mut self.values[id.0];
            if t.shape() != (p.rows, p.cols) || p.values.len() != p.rows * p.cols {
                return Err(Error::Checkpoint(format!(
                    "parameter {:?} has shape {}x{}, model expects {:?}",
                    p.name, p.rows, p.cols, t.shape()
                )));
            }
            t.data_mut().copy_from_slice(&p.values);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCheckpoint {
    pub params: Vec<NamedTensor>,
}

/// Gradient buffers aligned with a [`ParamStore`]; `None` means "no gradient reached this parameter".
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn new(n: usize) -> Self {
        Gradients { grads: vec![None; n] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Tensor) {
        match &mut self.grads[id.0] {
            Some(t) => t.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale_assign(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().flatten().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::all_finite)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().enumerate().filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer(std::io::BufWriter::new(file), value).map_err(|e| Error::Json(e.to_string()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Json(format!("{}: {e}", path.display())))
}
