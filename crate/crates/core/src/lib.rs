//! Spectrum sharing between two OFDMA cells.
//!
//! Each cell assigns at most one of its users to every subcarrier and splits
//! its power budget across subcarriers. Two families of solvers are provided:
//! a centralized dual-decomposition solver that sees both cells, and a
//! cooperative scheme where each cell solves its own problem under an
//! interference budget towards the other and the two alternate.
//!
//! The library is generic over the float type; the aliases at the crate root
//! fix it to `f64` (and `f32` with the `F32` prefix).

pub mod centralized;
pub mod channels;
pub mod coordinator;
pub mod dual;
pub mod error;
pub mod harness;
pub mod model;
pub mod percell;
pub mod scalar;

pub use error::{Error, Result};
pub use model::{Cell, Link, Slot};
pub use scalar::Scalar;

pub type SystemConfig = model::SystemConfig<f64>;
pub type ChannelRealization = model::ChannelRealization<f64>;
pub type PowerAllocation = model::PowerAllocation<f64>;
pub type AllocationOutcome = model::AllocationOutcome<f64>;
pub type InterferenceBudget = model::InterferenceBudget<f64>;
pub type PerCellProblem = percell::PerCellProblem<f64>;
pub type SchemeKind = coordinator::SchemeKind<f64>;
pub type SchemeSpec = coordinator::SchemeSpec<f64>;

pub type F32SystemConfig = model::SystemConfig<f32>;
pub type F32ChannelRealization = model::ChannelRealization<f32>;
pub type F32PowerAllocation = model::PowerAllocation<f32>;
pub type F32AllocationOutcome = model::AllocationOutcome<f32>;
pub type F32InterferenceBudget = model::InterferenceBudget<f32>;
pub type F32PerCellProblem = percell::PerCellProblem<f32>;
pub type F32SchemeKind = coordinator::SchemeKind<f32>;
pub type F32SchemeSpec = coordinator::SchemeSpec<f32>;
