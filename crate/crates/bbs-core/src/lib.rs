//! Bit-plane weight compression and accelerator cycle modeling for int8
//! neural-network inference.
//!
//! Bit-serial accelerators spend cycles per weight bit plane, so the plane
//! count, not the nominal 8-bit width, sets throughput. This crate prunes
//! low-order planes losslessly where two's-complement sign extension makes
//! them redundant and approximately elsewhere, with two rounding
//! strategies (`compress`), plans which output channels a model can afford
//! to prune (`planner`), packs the result into a byte-exact container
//! (`container`), models the processing-element datapath that consumes it
//! (`pe`), and compares cycle counts against published bit-serial
//! architectures (`sim`). `bitplane` holds the plane/bit-matrix
//! primitives; `metrics` the error measures used to judge a plan.
//!
//! The unifying invariant: every compressed artifact decodes back to
//! exactly the values the planner approved, and the datapath model
//! computes exactly the dot products those values imply. Cycle counts are
//! estimates; arithmetic is not.

pub mod bitplane;
pub mod compress;
pub mod container;
pub mod error;
pub mod metrics;
pub mod pe;
pub mod planner;
pub mod sim;

pub use bitplane::{BitMatrix, BitVector, SparsityReport};
pub use compress::{CompressedGroup, GroupPruneResult, Strategy};
pub use container::{decode_container, encode_container};
pub use error::{Error, Result};
pub use metrics::Histogram256;
pub use planner::{
    CompressedLayer, CompressedModel, LayerDims, LayerKind, LayerPlan, PlanConfig, PruneLevel,
    PrunePlan, QuantizedLayer,
};
pub use sim::{AcceleratorKind, ArrayConfig, CycleReport, ScalingStudy};
