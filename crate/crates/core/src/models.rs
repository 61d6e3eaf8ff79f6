//! Bundled model of the 2015 CircleCI queue-backlog incident, with the
//! three explored variants.
//!
//! The shape is three stages: a build service owning the event queue, a
//! retry stage, and a database represented as a latency distribution plus an
//! error distribution. The database slows under concurrency (its pool is the
//! shared bottleneck), so an event surge tips the service into a backlog
//! that only clears long after arrivals stop.
//!
//! Variants, each differing from the original by exactly one change:
//! - A: bound the service queue (shed load instead of hoarding it),
//! - B: limit the service worker pool (hold the database at the concurrency
//!   where its throughput peaks),
//! - C: drop the retry stage.

use crate::clock::{Clock, Tick};
use crate::metrics::Metrics;
use crate::queue::QueueConfig;
use crate::scenario::{RampChange, RampRule, RampTrigger, ScenarioConfig, SeedStreams};
use crate::stage::StageRef;
use crate::stages::{LoadCurve, Proxy, Retry, RetryConfig, Server, ServerConfig};

/// Which configuration of the incident model to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Original,
    /// A: bounded service queue.
    BoundedQueue,
    /// B: limited service worker pool.
    WorkerLimit,
    /// C: no retry stage.
    NoRetry,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Original,
        Variant::BoundedQueue,
        Variant::WorkerLimit,
        Variant::NoRetry,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::BoundedQueue => "a",
            Variant::WorkerLimit => "b",
            Variant::NoRetry => "c",
        }
    }
}

/// Parses a registered model name: `circleci:original|a|b|c`.
pub fn by_name(name: &str) -> Option<Variant> {
    let variant = name.strip_prefix("circleci:")?;
    match variant {
        "original" => Some(Variant::Original),
        "a" => Some(Variant::BoundedQueue),
        "b" => Some(Variant::WorkerLimit),
        "c" => Some(Variant::NoRetry),
        _ => None,
    }
}

/// Registered names of the bundled models.
pub fn registered_names() -> Vec<String> {
    Variant::ALL
        .iter()
        .map(|v| format!("circleci:{}", v.label()))
        .collect()
}

/// Tunable constants of the incident model. The database pool size, its
/// queue bound, its per-attempt availability and Model A's queue bound come
/// from the incident write-up; the rest are calibration assumptions.
#[derive(Clone, Copy, Debug)]
pub struct IncidentConfig {
    /// Database mean service latency at low concurrency, in ticks.
    pub db_mean_latency: f64,
    /// Probability an admitted database query completes without a fault.
    pub db_availability: f64,
    /// Database waiting-queue bound.
    pub db_queue_capacity: usize,
    /// Database worker pool (max concurrent queries).
    pub db_workers: usize,
    /// Load-dependent latency inflation; `None` turns degradation off.
    pub db_load: Option<LoadCurve>,
    /// Total retry tries, including the first.
    pub retry_attempts: u32,
    /// Pause between retry attempts, in ticks.
    pub retry_backoff: Tick,
    /// Service worker pool in the original model.
    pub service_workers: usize,
    /// Service queue bound in Model A.
    pub bounded_queue: usize,
    /// Service worker pool in Model B: the concurrency at which the
    /// database's throughput curve peaks, found by sweep.
    pub limited_workers: usize,
}

impl Default for IncidentConfig {
    fn default() -> Self {
        IncidentConfig {
            db_mean_latency: 30.0,
            db_availability: 0.9995,
            db_queue_capacity: 1,
            db_workers: 300,
            db_load: Some(LoadCurve {
                knee: 100.0,
                exponent: 3,
            }),
            retry_attempts: 3,
            retry_backoff: 150,
            service_workers: 310,
            bounded_queue: 10_000,
            limited_workers: 80,
        }
    }
}

/// Stage names used by the bundled model.
pub const SERVICE: &str = "service";
pub const RETRY: &str = "retry";
pub const DATABASE: &str = "database";

/// A wired model plus the scenario it reproduces.
pub struct BuiltModel {
    pub entry: StageRef,
    /// Stages in entry-to-leaf order.
    pub stages: Vec<StageRef>,
    pub scenario: ScenarioConfig,
}

/// The surge that precipitated the incident: a high starting rate that keeps
/// climbing, uniformly spaced, over a normally distributed keyspace.
pub fn surge_scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        events_per_1000_ticks: 1500.0,
        keyspace_mean: 1000.0,
        keyspace_std: 200.0,
        total_events: 50_000,
        seed,
        ramp: vec![RampRule {
            trigger: RampTrigger::Every(1000),
            change: RampChange::Add(100.0),
        }],
        max_ticks: None,
    }
}

/// Builds the requested variant and its surge scenario.
pub fn build(
    variant: Variant,
    config: &IncidentConfig,
    seed: u64,
    clock: &Clock,
    metrics: &Metrics,
) -> BuiltModel {
    let streams = SeedStreams::new(seed);

    let database = Server::new(
        DATABASE,
        ServerConfig {
            mean_latency: config.db_mean_latency,
            availability: config.db_availability,
            queue: QueueConfig::bounded(config.db_queue_capacity, config.db_workers),
            load: config.db_load,
        },
        streams.latency.clone(),
        streams.availability.clone(),
        clock,
        metrics,
    );

    let service_queue = match variant {
        Variant::BoundedQueue => QueueConfig::bounded(config.bounded_queue, config.service_workers),
        Variant::WorkerLimit => QueueConfig::unbounded(config.limited_workers),
        _ => QueueConfig::unbounded(config.service_workers),
    };

    let mut stages: Vec<StageRef> = Vec::new();
    let service: StageRef = if variant == Variant::NoRetry {
        let service = Proxy::new(SERVICE, service_queue, database.clone(), clock, metrics);
        stages.push(service.clone() as StageRef);
        service
    } else {
        let retry = Retry::new(
            RETRY,
            RetryConfig {
                attempts: config.retry_attempts,
                backoff: config.retry_backoff,
            },
            database.clone() as StageRef,
            clock,
            metrics,
        );
        let service = Proxy::new(SERVICE, service_queue, retry.clone(), clock, metrics);
        stages.push(service.clone() as StageRef);
        stages.push(retry as StageRef);
        service
    };
    stages.push(database as StageRef);

    BuiltModel {
        entry: service,
        stages,
        scenario: surge_scenario(seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn queue_of(model: &BuiltModel, name: &str) -> QueueConfig {
        model
            .stages
            .iter()
            .find(|s| s.core().name() == name)
            .unwrap()
            .core()
            .queue()
            .config()
    }

    fn names(model: &BuiltModel) -> Vec<String> {
        model
            .stages
            .iter()
            .map(|s| s.core().name().to_string())
            .collect()
    }

    #[test]
    fn original_is_unbounded_with_retry() {
        let clock = Clock::new();
        let metrics = Metrics::new();
        let model = build(
            Variant::Original,
            &IncidentConfig::default(),
            1,
            &clock,
            &metrics,
        );
        assert_eq!(names(&model), vec![SERVICE, RETRY, DATABASE]);
        assert_eq!(queue_of(&model, SERVICE).capacity, None);
    }

    #[test]
    fn variant_a_bounds_only_the_service_queue() {
        let clock = Clock::new();
        let metrics = Metrics::new();
        let cfg = IncidentConfig::default();
        let original = build(Variant::Original, &cfg, 1, &clock, &metrics);

        let clock2 = Clock::new();
        let metrics2 = Metrics::new();
        let a = build(Variant::BoundedQueue, &cfg, 1, &clock2, &metrics2);

        assert_eq!(names(&a), names(&original));
        assert_eq!(queue_of(&a, SERVICE).capacity, Some(10_000));
        assert_eq!(
            queue_of(&a, SERVICE).workers,
            queue_of(&original, SERVICE).workers
        );
        assert_eq!(queue_of(&a, DATABASE), queue_of(&original, DATABASE));
    }

    #[test]
    fn variant_b_limits_only_the_workers() {
        let clock = Clock::new();
        let metrics = Metrics::new();
        let cfg = IncidentConfig::default();
        let original = build(Variant::Original, &cfg, 1, &clock, &metrics);

        let clock2 = Clock::new();
        let metrics2 = Metrics::new();
        let b = build(Variant::WorkerLimit, &cfg, 1, &clock2, &metrics2);

        assert_eq!(names(&b), names(&original));
        assert_eq!(queue_of(&b, SERVICE).capacity, None);
        assert_eq!(queue_of(&b, SERVICE).workers, cfg.limited_workers);
        assert!(queue_of(&b, SERVICE).workers < queue_of(&original, SERVICE).workers);
    }

    #[test]
    fn variant_c_removes_the_retry_stage() {
        let clock = Clock::new();
        let metrics = Metrics::new();
        let cfg = IncidentConfig::default();
        let c = build(Variant::NoRetry, &cfg, 1, &clock, &metrics);
        assert_eq!(names(&c), vec![SERVICE, DATABASE]);
        assert_eq!(
            queue_of(&c, SERVICE).workers,
            cfg.service_workers,
            "everything else matches the original"
        );
    }

    #[test]
    fn model_names_resolve() {
        assert_eq!(by_name("circleci:original"), Some(Variant::Original));
        assert_eq!(by_name("circleci:a"), Some(Variant::BoundedQueue));
        assert_eq!(by_name("circleci:b"), Some(Variant::WorkerLimit));
        assert_eq!(by_name("circleci:c"), Some(Variant::NoRetry));
        assert_eq!(by_name("circleci:d"), None);
        assert_eq!(by_name("original"), None);
    }

    #[test]
    fn database_pool_saturates_near_ten_per_tick_at_base_latency() {
        // 300 workers at 30-tick mean service time: 10 events/tick when the
        // pool is healthy. The load curve erodes that as concurrency climbs.
        let cfg = IncidentConfig::default();
        let healthy = cfg.db_workers as f64 / cfg.db_mean_latency;
        assert_eq!(healthy, 10.0);
        let curve = cfg.db_load.unwrap();
        let pegged_mean = cfg.db_mean_latency * curve.factor(cfg.db_workers);
        let pegged_throughput = cfg.db_workers as f64 / pegged_mean;
        assert!(pegged_throughput < 0.5, "pegged pool collapses");
    }
}
