//! Leaf stage modelled as a latency distribution and an error distribution.

use std::cell::RefCell;
use std::rc::Rc;

use rand::rngs::StdRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::event::{Event, FailCause};
use crate::metrics::Metrics;
use crate::queue::QueueConfig;
use crate::scenario::sample_exponential;
use crate::stage::{Stage, StageCore};
use crate::task::BoxFuture;

/// How service time inflates with concurrency. The effective mean latency is
/// `mean * (1 + (busy / knee)^exponent)`: negligible below the knee, ruinous
/// well above it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadCurve {
    pub knee: f64,
    pub exponent: i32,
}

impl LoadCurve {
    pub fn factor(&self, busy: usize) -> f64 {
        1.0 + (busy as f64 / self.knee).powi(self.exponent)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ServerConfig {
    /// Mean of the exponential service-time distribution, in ticks.
    pub mean_latency: f64,
    /// Probability an attempt completes without a fault, in [0, 1].
    pub availability: f64,
    pub queue: QueueConfig,
    /// Optional load-dependent latency inflation.
    pub load: Option<LoadCurve>,
}

/// A component stage: sampled service latency, then a fault draw.
pub struct Server {
    core: StageCore,
    config: ServerConfig,
    latency_rng: Rc<RefCell<StdRng>>,
    availability_rng: Rc<RefCell<StdRng>>,
}

impl Server {
    pub fn new(
        name: &str,
        config: ServerConfig,
        latency_rng: Rc<RefCell<StdRng>>,
        availability_rng: Rc<RefCell<StdRng>>,
        clock: &Clock,
        metrics: &Metrics,
    ) -> Rc<Self> {
        assert!(
            (0.0..=1.0).contains(&config.availability),
            "availability is a probability"
        );
        Rc::new(Server {
            core: StageCore::new(name, config.queue, clock, metrics),
            config,
            latency_rng,
            availability_rng,
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    /// Effective mean latency at a given concurrency.
    pub fn effective_mean(&self, busy: usize) -> f64 {
        let factor = self.config.load.map_or(1.0, |c| c.factor(busy));
        self.config.mean_latency * factor
    }
}

impl Stage for Server {
    fn core(&self) -> &StageCore {
        &self.core
    }

    fn work_on(self: Rc<Self>, _event: Event) -> BoxFuture<Result<(), FailCause>> {
        let clock = self.core.clock().clone();
        // Concurrency observed at work start, including this event.
        let mean = self.effective_mean(self.core.queue().busy());
        let latency = sample_exponential(&mut self.latency_rng.borrow_mut(), mean);
        let availability = self.config.availability;
        let avail_rng = self.availability_rng.clone();
        Box::pin(async move {
            clock.wait(latency).await;
            let draw: f64 = avail_rng.borrow_mut().gen();
            if draw >= availability {
                Err(FailCause::Fault)
            } else {
                Ok(())
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::SeedStreams;
    use crate::stage::{StageExt, StageRef};
    use std::cell::Cell;

    fn server(availability: f64, load: Option<LoadCurve>) -> (Clock, Metrics, Rc<Server>) {
        let clock = Clock::new();
        let metrics = Metrics::new();
        let streams = SeedStreams::new(11);
        let s = Server::new(
            "db",
            ServerConfig {
                mean_latency: 30.0,
                availability,
                queue: QueueConfig::bounded(1, 300),
                load,
            },
            streams.latency,
            streams.availability,
            &clock,
            &metrics,
        );
        (clock, metrics, s)
    }

    /// Drives `n` events one at a time so the server is never contended.
    fn run_serial(clock: &Clock, stage: &Rc<Server>, n: u64) {
        let stage: StageRef = stage.clone();
        let done = Rc::new(Cell::new(false));
        let d = done.clone();
        clock.spawn(async move {
            for id in 0..n {
                let _ = stage.add(Event::new(id, 0, 0)).await;
            }
            d.set(true);
        });
        clock.run_until_idle();
        assert!(done.get());
    }

    #[test]
    fn perfect_availability_never_faults() {
        let (clock, metrics, s) = server(1.0, None);
        run_serial(&clock, &s, 2_000);
        let store = metrics.store();
        let stats = store.stage("db").unwrap();
        assert_eq!(stats.failed, 0);
        assert_eq!(stats.succeeded, 2_000);
    }

    #[test]
    fn fault_rate_tracks_availability() {
        let (clock, metrics, s) = server(0.9, None);
        run_serial(&clock, &s, 10_000);
        let store = metrics.store();
        let stats = store.stage("db").unwrap();
        let rate = stats.failed as f64 / 10_000.0;
        assert!((rate - 0.1).abs() < 0.01, "fault rate {rate}");
    }

    #[test]
    fn load_curve_is_flat_when_uncontended() {
        let curve = LoadCurve {
            knee: 100.0,
            exponent: 3,
        };
        assert!((curve.factor(1) - 1.0).abs() < 1e-5);
        assert!((curve.factor(100) - 2.0).abs() < 1e-9);
        assert!(curve.factor(300) > 27.0);
    }
}
