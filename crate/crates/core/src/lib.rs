//! Discrete-event simulation of how services degrade under load, and of the
//! fault-tolerance techniques used to contain that degradation.
//!
//! Systems are modelled as networks of *stages*. A stage admits or rejects
//! arriving *events*, queues what it admits, and processes dequeued events
//! with its own `work_on` logic, which may suspend on the simulation
//! [`clock::Clock`], call into downstream stages, or kick off background
//! work. Components (a database, a service) and techniques (retry, timeout,
//! cache, circuit breaker, bounded queue) are both just stages, so wrapping
//! a component in a technique is ordinary composition:
//!
//! ```
//! use stagesim::clock::Clock;
//! use stagesim::metrics::Metrics;
//! use stagesim::queue::QueueConfig;
//! use stagesim::scenario::{self, ScenarioConfig, SeedStreams};
//! use stagesim::stage::StageRef;
//! use stagesim::stages::{Retry, RetryConfig, Server, ServerConfig};
//!
//! let clock = Clock::new();
//! let metrics = Metrics::new();
//! let streams = SeedStreams::new(1);
//! let db = Server::new(
//!     "db",
//!     ServerConfig {
//!         mean_latency: 30.0,
//!         availability: 0.999,
//!         queue: QueueConfig::bounded(1, 300),
//!         load: None,
//!     },
//!     streams.latency,
//!     streams.availability,
//!     &clock,
//!     &metrics,
//! );
//! let entry: StageRef = Retry::new("retry", RetryConfig::attempts(3), db, &clock, &metrics);
//!
//! let result = scenario::run(
//!     &clock,
//!     &entry,
//!     &ScenarioConfig {
//!         events_per_1000_ticks: 1000.0,
//!         keyspace_mean: 1000.0,
//!         keyspace_std: 200.0,
//!         total_events: 500,
//!         seed: 1,
//!         ramp: Vec::new(),
//!         max_ticks: None,
//!     },
//! )
//! .unwrap();
//! assert_eq!(result.injected, result.succeeded + result.failed + result.rejected);
//! ```
//!
//! Runs are deterministic: the clock executes same-tick work in scheduling
//! order and all randomness flows from per-purpose substreams of one seed.

pub mod clock;
pub mod event;
pub mod metrics;
pub mod models;
pub mod queue;
pub mod scenario;
pub mod stage;
pub mod stages;
pub mod task;

pub use clock::{Clock, Tick};
pub use event::{Event, EventStatus, FailCause, Response, StageError, StageResult};
pub use metrics::{Metrics, SummaryReport};
pub use queue::QueueConfig;
pub use scenario::{RunResult, ScenarioConfig};
pub use stage::{Stage, StageCore, StageExt, StageRef};
