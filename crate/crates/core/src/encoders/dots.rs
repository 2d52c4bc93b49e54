use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Graph, Linear, Mlp, ParamStore, Tensor, Var};
use crate::world::VIEW_SIZE;

pub const DOT_FEATURES: usize = 4;

/// Relation-network dot encoder: `w(d) = tanh(W attr(d) + Σ_{d' ≠ d} MLP(attr(d) - attr(d')))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DotEncoder {
    pub own: Linear,
    pub relation: Mlp,
    pub dim: usize,
}

impl DotEncoder {
    pub fn new(store: &mut ParamStore, name: &str, hidden: usize, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(DotEncoder {
            own: Linear::new(store, &format!("{name}.own"), DOT_FEATURES, dim, rng)?,
            relation: Mlp::new(store, &format!("{name}.relation"), DOT_FEATURES, hidden, 1, dim, 0.0, rng)?,
            dim,
        })
    }

    /// `features` is `7 × 4` (see [`crate::world::raw_features`]); returns `7 × dim`.
    pub fn encode(&self, g: &mut Graph, features: Var) -> Result<Var> {
        if g.shape(features) != (VIEW_SIZE, DOT_FEATURES) {
            return Err(Error::Shape(format!("dot features must be 7x4, got {:?}", g.shape(features))));
        }
        let own = self.own.forward(g, features);
        let diffs = g.outer_diff(features, features);
        let rel = self.relation.forward(g, diffs)?;
        let agg = g.constant(aggregation().clone());
        let rel = g.matmul(agg, rel);
        let pre = g.add(own, rel);
        Ok(g.tanh(pre))
    }
}

/// `7 × 49` matrix summing rows `i * 7 + j` for `j ≠ i`.
fn aggregation() -> &'static Tensor {
    static AGG: OnceLock<Tensor> = OnceLock::new();
    AGG.get_or_init(|| {
        let mut t = Tensor::zeros(VIEW_SIZE, VIEW_SIZE * VIEW_SIZE);
        for i in 0..VIEW_SIZE {
            for j in 0..VIEW_SIZE {
                if i != j {
                    t.set(i, i * VIEW_SIZE + j, 1.0);
                }
            }
        }
        t
    })
}
