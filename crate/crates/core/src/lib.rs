//! In-network computation (INC) for federated learning over edge networks.
//!
//! The crate models a cloud server, a tier of edge nodes and a population of
//! mobile users, and provides:
//!
//! * [`model`]: topology generation, model-size arithmetic and local compute times,
//! * [`latency`]: closed-form per-iteration uplink latency of a routing assignment,
//! * [`ina`]: the in-network aggregation message algebra (user packets, edge merges,
//!   cloud merge, generalized global update),
//! * [`fl`]: a small federated training engine (FedAvg-style and CoCoA-style) used to
//!   check that in-network aggregation leaves training unchanged,
//! * [`router`]: the relaxed routing program, randomized rounding and an exhaustive oracle,
//! * [`scheduler`]: conventional and bipartition user scheduling,
//! * [`harness`]: configuration, experiment orchestration and CSV output.

// `!(x > 0.0)` is the NaN-rejecting form used throughout validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fl;
pub mod harness;
pub mod ina;
pub mod latency;
pub mod model;
pub mod router;
pub mod scheduler;
pub mod seed;

pub use error::{Error, Result};
pub use ina::{AggregationMode, EdgeMessage, GlobalModel, LocalMessage, PartitionAggregate};
pub use latency::{Assignment, LatencyReport, Protocol, RateAllocation};
pub use model::{
    ComputeTimeDist, GridSpec, ModelSpec, NodeCapacities, Topology, UserProfile, CLOUD,
};
pub use router::{FractionalAssignment, LpResult};
pub use scheduler::{ScheduleResult, Scheme};
