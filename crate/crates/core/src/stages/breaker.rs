//! Circuit breaker wrapper.
//!
//! Closed: events are forwarded and their outcomes recorded in a sliding
//! window; once the window is full and the failure fraction reaches the
//! threshold, the breaker trips open. Open: events fail immediately with
//! zero added latency until the cooldown elapses. Half-open: exactly one
//! probe event is forwarded; success closes the breaker (window reset),
//! failure reopens it and restarts the cooldown.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Tick};
use crate::event::{Event, FailCause};
use crate::metrics::Metrics;
use crate::queue::QueueConfig;
use crate::stage::{forwarded, Stage, StageCore, StageExt, StageRef};
use crate::task::BoxFuture;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakerState {
    Closed,
    Open,
    HalfOpen,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakerConfig {
    /// Number of recent outcomes considered; the threshold is only
    /// evaluated once the window is full.
    pub window: usize,
    /// Failure fraction in [0, 1] that trips the breaker.
    pub failure_threshold: f64,
    /// Ticks to stay open before allowing a probe.
    pub cooldown: Tick,
}

struct BreakerInner {
    state: BreakerState,
    outcomes: VecDeque<bool>,
    opened_at: Tick,
    probe_in_flight: bool,
}

pub struct Breaker {
    core: StageCore,
    config: BreakerConfig,
    wrapped: StageRef,
    inner: RefCell<BreakerInner>,
}

impl Breaker {
    pub fn new(
        name: &str,
        config: BreakerConfig,
        wrapped: StageRef,
        clock: &Clock,
        metrics: &Metrics,
    ) -> Rc<Self> {
        assert!(config.window >= 1, "window must be positive");
        assert!(
            (0.0..=1.0).contains(&config.failure_threshold),
            "failure threshold is a fraction"
        );
        Rc::new(Breaker {
            core: StageCore::new(name, QueueConfig::unconstrained(), clock, metrics),
            config,
            wrapped,
            inner: RefCell::new(BreakerInner {
                state: BreakerState::Closed,
                outcomes: VecDeque::new(),
                opened_at: 0,
                probe_in_flight: false,
            }),
        })
    }

    pub fn config(&self) -> BreakerConfig {
        self.config
    }

    pub fn wrapped(&self) -> &StageRef {
        &self.wrapped
    }

    pub fn state(&self) -> BreakerState {
        self.inner.borrow().state
    }

    fn record_closed_outcome(&self, success: bool, now: Tick) {
        let mut inner = self.inner.borrow_mut();
        if inner.state != BreakerState::Closed {
            return; // the breaker moved on while this event was in flight
        }
        inner.outcomes.push_back(success);
        while inner.outcomes.len() > self.config.window {
            inner.outcomes.pop_front();
        }
        if inner.outcomes.len() == self.config.window {
            let failures = inner.outcomes.iter().filter(|ok| !**ok).count();
            let fraction = failures as f64 / self.config.window as f64;
            if fraction >= self.config.failure_threshold {
                inner.state = BreakerState::Open;
                inner.opened_at = now;
                inner.outcomes.clear();
            }
        }
    }
}

impl Stage for Breaker {
    fn core(&self) -> &StageCore {
        &self.core
    }

    fn work_on(self: Rc<Self>, event: Event) -> BoxFuture<Result<(), FailCause>> {
        let clock = self.core.clock().clone();
        let now = clock.now();

        enum Plan {
            Forward,
            Probe,
            FailFast,
        }

        let plan = {
            let mut inner = self.inner.borrow_mut();
            if inner.state == BreakerState::Open && now >= inner.opened_at + self.config.cooldown {
                inner.state = BreakerState::HalfOpen;
                inner.probe_in_flight = false;
            }
            match inner.state {
                BreakerState::Closed => Plan::Forward,
                BreakerState::Open => Plan::FailFast,
                BreakerState::HalfOpen => {
                    if inner.probe_in_flight {
                        Plan::FailFast
                    } else {
                        inner.probe_in_flight = true;
                        Plan::Probe
                    }
                }
            }
        };

        match plan {
            Plan::FailFast => Box::pin(async { Err(FailCause::CircuitOpen) }),
            Plan::Forward => {
                let breaker = self.clone();
                let wrapped = self.wrapped.clone();
                Box::pin(async move {
                    let result = forwarded(wrapped.add(event).await);
                    breaker.record_closed_outcome(result.is_ok(), breaker.core.clock().now());
                    result
                })
            }
            Plan::Probe => {
                let breaker = self.clone();
                let wrapped = self.wrapped.clone();
                Box::pin(async move {
                    let result = forwarded(wrapped.add(event).await);
                    let now = breaker.core.clock().now();
                    let mut inner = breaker.inner.borrow_mut();
                    inner.probe_in_flight = false;
                    match result {
                        Ok(()) => {
                            inner.state = BreakerState::Closed;
                            inner.outcomes.clear();
                        }
                        Err(_) => {
                            inner.state = BreakerState::Open;
                            inner.opened_at = now;
                        }
                    }
                    result
                })
            }
        }
    }
}
