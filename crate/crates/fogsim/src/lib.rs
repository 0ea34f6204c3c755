//! Deterministic discrete-event simulation of fog computing topologies.
//!
//! The simulator builds a small hierarchical network (user devices, one or
//! more edge levels, a cloud) and drives a location-update workload through
//! it twice: once served entirely by the cloud and once served by the edge
//! with periodic state sync upstream. Paired runs share one seed and one
//! arrival sequence, so response-time and traffic comparisons between the
//! two deployments are exact rather than sampled.
//!
//! Module map:
//! - [`topology`]: nodes, links, routing and validation
//! - [`engine`]: event queue, simulated clock, seeded randomness
//! - [`protocol`]: player updates, edge-local and cloud-global views, sync
//! - [`placement`]: execution models, batching, sharing, FIFO service queues
//! - [`metrics`]: response records, per-link byte counters, comparisons
//! - [`scenario`]: scenario file parsing and validation
//! - [`sim`]: wires the above into one simulated run
//! - [`experiment`]: paired runs, user-count sweeps, report files

pub mod engine;
pub mod experiment;
pub mod metrics;
pub mod placement;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod topology;

pub use engine::{Engine, Event, EventKind, EventTrace, SimRng, SimTime};
pub use experiment::{run_experiment, write_reports, ExperimentResult};
pub use scenario::{load_scenario, ScenarioConfig, ScenarioError};
pub use sim::{run_scenario, RunOutput};
