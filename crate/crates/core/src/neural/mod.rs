//! Minimal differentiable substrate: dense tensors, a reverse-mode tape, recurrent cells,
//! attention, and Adam with plateau decay. Everything runs in `f64`.

pub mod graph;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{CustomOp, Graph, Var};
pub use layers::{Attention, BiGru, BiLstm, BiOutput, Embedding, GruCell, Linear, LstmCell, Mlp};
pub use optim::{Adam, PlateauSchedule};
pub use params::{Gradients, ParamCheckpoint, ParamId, ParamStore};
pub use tensor::Tensor;
