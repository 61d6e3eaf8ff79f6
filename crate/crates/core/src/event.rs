//! Events and the outcomes stages produce for them.

use std::cell::RefCell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::clock::Tick;

/// A generic unit of work flowing through stages (e.g. one HTTP request).
/// The key identifies the logical request without modelling its payload.
#[derive(Clone, Copy, Debug)]
pub struct Event {
    pub id: u64,
    pub key: u64,
    pub created_at: Tick,
}

impl Event {
    pub fn new(id: u64, key: u64, created_at: Tick) -> Self {
        Event {
            id,
            key,
            created_at,
        }
    }
}

/// Terminal disposition of an event at the stage it was submitted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventStatus {
    Pending,
    Success,
    Fail,
    Rejected,
}

/// Why an event's processing failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailCause {
    /// The stage's own work raised a failure (e.g. a stochastic fault).
    Fault,
    /// A deadline elapsed before the wrapped work finished.
    Timeout,
    /// A circuit breaker refused the event while open.
    CircuitOpen,
    /// A wrapped stage rejected or failed the event.
    Dependency,
}

/// Error returned to the caller of `add`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageError {
    /// Admission refused the event before processing; counts toward the
    /// rejecting stage's rejection rate.
    Rejected,
    /// The event was admitted but processing failed.
    Failed(FailCause),
}

/// Successful completion as observed by the caller of `add`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Response {
    /// Ticks from event creation to completion at the observing stage.
    pub latency: Tick,
}

/// What `add` resolves to once the event reaches a terminal state.
pub type StageResult = Result<Response, StageError>;

/// What a stage's `work_on` resolves to.
pub type WorkResult = Result<(), FailCause>;

/// Per-event timeline at the stage an event was submitted to. Later fields
/// are only set if the earlier ones are, and the chain is non-decreasing.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: u64,
    pub key: u64,
    pub created_at: Tick,
    pub admitted_at: Option<Tick>,
    pub dequeued_at: Option<Tick>,
    pub completed_at: Option<Tick>,
    pub status: EventStatus,
}

impl EventRecord {
    pub fn new(event: &Event) -> Self {
        EventRecord {
            id: event.id,
            key: event.key,
            created_at: event.created_at,
            admitted_at: None,
            dequeued_at: None,
            completed_at: None,
            status: EventStatus::Pending,
        }
    }

    /// True when the set timestamps satisfy
    /// created <= admitted <= dequeued <= completed.
    pub fn timestamps_ordered(&self) -> bool {
        let mut prev = self.created_at;
        for stamp in [self.admitted_at, self.dequeued_at, self.completed_at]
            .into_iter()
            .flatten()
        {
            if stamp < prev {
                return false;
            }
            prev = stamp;
        }
        true
    }
}

/// Shared handle used to stamp an [`EventRecord`] as the event moves through
/// the stage it was submitted to. Wrapped stages do not see the trace, so
/// retried attempts downstream never restamp it.
#[derive(Clone)]
pub struct Trace(Rc<RefCell<EventRecord>>);

impl Trace {
    pub fn new(event: &Event) -> Self {
        Trace(Rc::new(RefCell::new(EventRecord::new(event))))
    }

    pub fn mark_admitted(&self, at: Tick) {
        self.0.borrow_mut().admitted_at = Some(at);
    }

    pub fn mark_dequeued(&self, at: Tick) {
        self.0.borrow_mut().dequeued_at = Some(at);
    }

    pub fn mark_completed(&self, at: Tick, status: EventStatus) {
        let mut rec = self.0.borrow_mut();
        debug_assert_eq!(rec.status, EventStatus::Pending, "terminal state is final");
        rec.completed_at = Some(at);
        rec.status = status;
    }

    pub fn record(&self) -> EventRecord {
        *self.0.borrow()
    }
}
