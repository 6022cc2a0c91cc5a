//! Minimal deterministic differentiable computation layer.
//!
//! Everything is 64-bit and single-threaded: the same seed and config gives
//! bit-identical parameters after any number of steps. The operator set is
//! exactly what the models in this crate need — dense matmul, embeddings,
//! layer norm, GELU, fused multi-head attention (causal or bidirectional),
//! and masked cross-entropy — built on a per-invocation tape ([`Graph`])
//! whose analytic gradients are verified against central finite differences
//! ([`gradcheck`]).

mod adam;
mod gradcheck;
mod graph;
pub mod math;
mod params;
mod schedule;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{gradcheck, GradCheckEntry, GradCheckReport};
pub use graph::{Graph, NodeId};
pub use params::ParamStore;
pub use schedule::{lr_schedule, ScheduleConfig};
pub use tensor::{matmul, matmul_acc, matmul_nt, matmul_tn, sinusoidal_positions, Tensor};
