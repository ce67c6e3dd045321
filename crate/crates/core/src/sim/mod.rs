//! Discrete-event simulation of process models with probabilistic resources.

mod allocation;
mod arrivals;
mod engine;
mod model;

pub use allocation::{Allocation, Allocator, ProbabilisticAllocator, ResourceQueue};
pub use arrivals::sample_arrivals;
pub use engine::{run_cases, simulate, simulate_with_arrivals};
pub use model::{
    ArrivalModel, CalendarDocument, CalendarFile, Edge, LocalFile, MultitaskFile, Node, NodeKind,
    ProcessGraph, ProfileFile, ResourceProfile, SimulationModel, DEFAULT_MAX_NODE_VISITS,
    SCHEMA_VERSION,
};

pub(crate) use arrivals::seconds;
