//! Retry wrapper: resubmits an event to the wrapped stage until it succeeds
//! or the attempt budget is spent. A rejection by the wrapped stage counts
//! as a failed attempt and is retried like any other failure.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Tick};
use crate::event::{Event, FailCause, StageError};
use crate::metrics::Metrics;
use crate::queue::QueueConfig;
use crate::stage::{Stage, StageCore, StageExt, StageRef};
use crate::task::BoxFuture;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryConfig {
    /// Total tries, including the first. Must be at least 1.
    pub attempts: u32,
    /// Ticks to pause between a failure and the next attempt.
    #[serde(default)]
    pub backoff: Tick,
}

impl RetryConfig {
    pub fn attempts(attempts: u32) -> Self {
        RetryConfig {
            attempts,
            backoff: 0,
        }
    }
}

pub struct Retry {
    core: StageCore,
    config: RetryConfig,
    wrapped: StageRef,
}

impl Retry {
    pub fn new(
        name: &str,
        config: RetryConfig,
        wrapped: StageRef,
        clock: &Clock,
        metrics: &Metrics,
    ) -> Rc<Self> {
        assert!(config.attempts >= 1, "retry needs at least one attempt");
        Rc::new(Retry {
            core: StageCore::new(name, QueueConfig::unconstrained(), clock, metrics),
            config,
            wrapped,
        })
    }

    pub fn config(&self) -> RetryConfig {
        self.config
    }

    pub fn wrapped(&self) -> &StageRef {
        &self.wrapped
    }
}

impl Stage for Retry {
    fn core(&self) -> &StageCore {
        &self.core
    }

    fn work_on(self: Rc<Self>, event: Event) -> BoxFuture<Result<(), FailCause>> {
        let wrapped = self.wrapped.clone();
        let clock = self.core.clock().clone();
        let RetryConfig { attempts, backoff } = self.config;
        Box::pin(async move {
            let mut last = FailCause::Dependency;
            for attempt in 1..=attempts {
                match wrapped.add(event).await {
                    Ok(_) => return Ok(()),
                    Err(StageError::Rejected) => last = FailCause::Dependency,
                    Err(StageError::Failed(cause)) => last = cause,
                }
                if attempt < attempts && backoff > 0 {
                    clock.wait(backoff).await;
                }
            }
            Err(last)
        })
    }
}
