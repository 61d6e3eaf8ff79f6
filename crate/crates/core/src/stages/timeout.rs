//! Deadline wrapper: propagates the wrapped result if it arrives within the
//! deadline, otherwise fails the event at exactly the deadline. Abandoned
//! wrapped work is not revoked; it keeps occupying its worker until done,
//! which is what makes timeouts interact with overload in real systems.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Tick};
use crate::event::{Event, FailCause};
use crate::metrics::Metrics;
use crate::queue::QueueConfig;
use crate::stage::{forwarded, Stage, StageCore, StageExt, StageRef};
use crate::task::{race, BoxFuture, Either};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeoutConfig {
    /// Ticks allowed from work start before the event fails. At least 1.
    pub deadline: Tick,
}

pub struct Timeout {
    core: StageCore,
    config: TimeoutConfig,
    wrapped: StageRef,
}

impl Timeout {
    pub fn new(
        name: &str,
        config: TimeoutConfig,
        wrapped: StageRef,
        clock: &Clock,
        metrics: &Metrics,
    ) -> Rc<Self> {
        assert!(config.deadline >= 1, "deadline must be at least one tick");
        Rc::new(Timeout {
            core: StageCore::new(name, QueueConfig::unconstrained(), clock, metrics),
            config,
            wrapped,
        })
    }

    pub fn config(&self) -> TimeoutConfig {
        self.config
    }

    pub fn wrapped(&self) -> &StageRef {
        &self.wrapped
    }
}

impl Stage for Timeout {
    fn core(&self) -> &StageCore {
        &self.core
    }

    fn work_on(self: Rc<Self>, event: Event) -> BoxFuture<Result<(), FailCause>> {
        let wrapped = self.wrapped.clone();
        let clock = self.core.clock().clone();
        let deadline = self.config.deadline;
        Box::pin(async move {
            let attempt = wrapped.add(event);
            // The trailing zero-wait pushes the deadline check to the end of
            // its tick, so work completing exactly at the deadline still wins.
            let expiry = async {
                clock.wait(deadline).await;
                clock.wait(0).await;
            };
            match race(attempt, expiry).await {
                Either::Left(result) => forwarded(result),
                Either::Right(()) => Err(FailCause::Timeout),
            }
        })
    }
}
