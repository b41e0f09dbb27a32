//! Masked-token encoder over hyper-relational fact graphs.
//!
//! A fact `[s, r, o, a1, v1, ...]` becomes a small heterogeneous graph whose
//! edge types bias a stack of pre-norm attention layers. Hiding one position
//! behind a learned mask embedding and predicting it over the view's
//! vocabulary gives the intra-view training signal.

mod graph;
mod loss;
mod model;
pub mod nn;

pub use graph::{generate_masked_samples, EdgeType, FactBatch, FactGraph, MaskedSample, Slot, N_EDGE_TYPES};
pub use loss::{intra_view_loss, intra_view_loss_grad};
pub use model::{project_logits, AttentionLayer, Encoder, EncoderConfig, ForwardPass, PredictionHead, INIT_SCALE};
