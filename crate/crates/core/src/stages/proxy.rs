//! Pass-through stage: owns a queue and forwards each event to the stage it
//! wraps. The usual shape for a service front door.

use std::rc::Rc;

use crate::clock::Clock;
use crate::event::{Event, FailCause};
use crate::metrics::Metrics;
use crate::queue::QueueConfig;
use crate::stage::{forwarded, Stage, StageCore, StageExt, StageRef};
use crate::task::BoxFuture;

pub struct Proxy {
    core: StageCore,
    wrapped: StageRef,
}

impl Proxy {
    pub fn new(
        name: &str,
        queue: QueueConfig,
        wrapped: StageRef,
        clock: &Clock,
        metrics: &Metrics,
    ) -> Rc<Self> {
        Rc::new(Proxy {
            core: StageCore::new(name, queue, clock, metrics),
            wrapped,
        })
    }

    pub fn wrapped(&self) -> &StageRef {
        &self.wrapped
    }
}

impl Stage for Proxy {
    fn core(&self) -> &StageCore {
        &self.core
    }

    fn work_on(self: Rc<Self>, event: Event) -> BoxFuture<Result<(), FailCause>> {
        let wrapped = self.wrapped.clone();
        Box::pin(async move { forwarded(wrapped.add(event).await) })
    }
}
