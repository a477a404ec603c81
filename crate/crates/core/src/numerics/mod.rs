//! Reverse-mode autodiff, the layer set used by the estimators, and Adam.

pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;

pub use graph::{sigmoid, AttentionWeights, Graph, Mat, SparseRows, Var};
pub use layers::{
    multi_head_attention, positional_encoding, Affine, EncoderLayer, LayerNorm, LstmCell,
    SelfAttention,
};
pub use optim::AdamState;
pub use params::{glorot, Checkpoint, ParamEntry, ParamId, ParamStore};
