//! A custom stage written against the stage-authoring API: a load shedder
//! that rejects new work outright once its backlog passes a threshold,
//! compared against the same backend without it.
//!
//! Run with: cargo run --release -p stagesim --example custom_stage

use std::rc::Rc;

use stagesim::metrics::{poll_queue_depth, summarize};
use stagesim::scenario::{self, SeedStreams};
use stagesim::stages::{Server, ServerConfig};
use stagesim::task::BoxFuture;
use stagesim::{
    Clock, Event, FailCause, Metrics, QueueConfig, ScenarioConfig, Stage, StageCore, StageExt,
    StageRef,
};

struct Shedder {
    core: StageCore,
    backend: StageRef,
    max_backlog: usize,
}

impl Stage for Shedder {
    fn core(&self) -> &StageCore {
        &self.core
    }

    // Drop work outright once the backlog passes the threshold.
    fn accepts(&self, _event: &Event) -> bool {
        self.core.queue().len() < self.max_backlog
    }

    fn work_on(self: Rc<Self>, event: Event) -> BoxFuture<Result<(), FailCause>> {
        let clock = self.core.clock().clone();
        let backend = self.backend.clone();
        Box::pin(async move {
            clock.wait(2).await; // own processing cost
            match backend.add(event).await {
                Ok(_) => Ok(()),
                Err(_) => Err(FailCause::Dependency),
            }
        })
    }
}

fn backend(clock: &Clock, metrics: &Metrics, seed: u64) -> StageRef {
    let streams = SeedStreams::new(seed);
    Server::new(
        "backend",
        ServerConfig {
            mean_latency: 40.0,
            availability: 0.999,
            queue: QueueConfig::unbounded(16),
            load: None,
        },
        streams.latency,
        streams.availability,
        clock,
        metrics,
    )
}

fn scenario_config(seed: u64) -> ScenarioConfig {
    // 0.5 events/tick against a backend that serves 0.4/tick: overload.
    ScenarioConfig {
        events_per_1000_ticks: 500.0,
        keyspace_mean: 1000.0,
        keyspace_std: 200.0,
        total_events: 5_000,
        seed,
        ramp: Vec::new(),
        max_ticks: Some(1_000_000),
    }
}

fn run(label: &str, shed_at: Option<usize>) {
    let seed = 1;
    let clock = Clock::new();
    let metrics = Metrics::new();
    let backend = backend(&clock, &metrics, seed);
    let entry: StageRef = match shed_at {
        None => backend,
        Some(max_backlog) => Rc::new(Shedder {
            core: StageCore::new("shedder", QueueConfig::unbounded(16), &clock, &metrics),
            backend,
            max_backlog,
        }),
    };
    let poll = poll_queue_depth(&clock, &metrics, &entry, 10);
    let result = scenario::run(&clock, &entry, &scenario_config(seed)).expect("run drains");
    poll.cancel();
    let report = summarize(&metrics.store(), &result).expect("drained");
    println!(
        "{label:>12}: availability {:>6.2}% rejected {:>5} mean wait {:>7.1} recovery {:>6}",
        report.availability * 100.0,
        report.rejected,
        report.mean_queue_wait,
        report.recovery_time
    );
}

fn main() {
    run("bare", None);
    run("shed at 200", Some(200));
}
