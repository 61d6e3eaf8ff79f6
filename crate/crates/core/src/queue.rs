//! Bounded FIFO work queue with a worker pool.

use std::cell::RefCell;
use std::collections::VecDeque;

use crate::clock::Tick;
use crate::event::{Event, StageResult, Trace};
use crate::task::OneshotSender;

/// Shape of a stage's queue: how many events may wait (excluding those being
/// worked) and how many may be worked concurrently.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueueConfig {
    /// Maximum waiting events; `None` is unbounded.
    pub capacity: Option<usize>,
    /// Maximum concurrent `work_on` executions.
    pub workers: usize,
}

impl QueueConfig {
    pub fn bounded(capacity: usize, workers: usize) -> Self {
        assert!(capacity >= 1, "queue capacity must be positive");
        assert!(workers >= 1, "worker count must be positive");
        QueueConfig {
            capacity: Some(capacity),
            workers,
        }
    }

    pub fn unbounded(workers: usize) -> Self {
        assert!(workers >= 1, "worker count must be positive");
        QueueConfig {
            capacity: None,
            workers,
        }
    }

    /// No waiting bound and effectively unlimited workers; the default for
    /// pure wrapper stages that add no contention of their own.
    pub fn unconstrained() -> Self {
        QueueConfig {
            capacity: None,
            workers: usize::MAX,
        }
    }
}

pub(crate) struct Waiting {
    pub event: Event,
    pub enqueued_at: Tick,
    pub tx: OneshotSender<StageResult>,
    pub trace: Option<Trace>,
}

#[derive(Default)]
struct QueueState {
    waiting: VecDeque<Waiting>,
    busy: usize,
    peak_waiting: usize,
}

/// FIFO queue feeding a stage's worker pool. Dequeue order always matches
/// enqueue order.
pub struct FifoQueue {
    config: QueueConfig,
    state: RefCell<QueueState>,
}

impl FifoQueue {
    pub fn new(config: QueueConfig) -> Self {
        FifoQueue {
            config,
            state: RefCell::new(QueueState::default()),
        }
    }

    pub fn config(&self) -> QueueConfig {
        self.config
    }

    /// Number of waiting events (not counting those being worked).
    pub fn len(&self) -> usize {
        self.state.borrow().waiting.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of events currently being worked.
    pub fn busy(&self) -> usize {
        self.state.borrow().busy
    }

    /// Largest waiting length seen since construction.
    pub fn peak_waiting(&self) -> usize {
        self.state.borrow().peak_waiting
    }

    /// True when another event may wait.
    pub fn has_room(&self) -> bool {
        match self.config.capacity {
            None => true,
            Some(cap) => self.len() < cap,
        }
    }

    /// True when a worker is free to start immediately.
    pub fn has_free_worker(&self) -> bool {
        self.busy() < self.config.workers
    }

    pub(crate) fn push(&self, item: Waiting) {
        let mut st = self.state.borrow_mut();
        st.waiting.push_back(item);
        if let Some(cap) = self.config.capacity {
            debug_assert!(st.waiting.len() <= cap, "queue bound violated");
        }
        st.peak_waiting = st.peak_waiting.max(st.waiting.len());
    }

    /// Pops the head and claims a worker for it, if both are available.
    pub(crate) fn begin_work(&self) -> Option<Waiting> {
        let mut st = self.state.borrow_mut();
        if st.busy >= self.config.workers {
            return None;
        }
        let item = st.waiting.pop_front()?;
        st.busy += 1;
        Some(item)
    }

    /// Releases the worker claimed by `begin_work`.
    pub(crate) fn end_work(&self) {
        let mut st = self.state.borrow_mut();
        debug_assert!(st.busy > 0, "worker freed twice");
        st.busy -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::oneshot;

    fn waiting(id: u64) -> Waiting {
        let (tx, _rx) = oneshot();
        Waiting {
            event: Event::new(id, 0, 0),
            enqueued_at: 0,
            tx,
            trace: None,
        }
    }

    #[test]
    fn fifo_order() {
        let q = FifoQueue::new(QueueConfig::unbounded(1));
        q.push(waiting(1));
        q.push(waiting(2));
        assert_eq!(q.begin_work().unwrap().event.id, 1);
        assert!(q.begin_work().is_none(), "single worker is busy");
        q.end_work();
        assert_eq!(q.begin_work().unwrap().event.id, 2);
    }

    #[test]
    fn room_and_workers() {
        let q = FifoQueue::new(QueueConfig::bounded(1, 1));
        assert!(q.has_room());
        assert!(q.has_free_worker());
        q.push(waiting(1));
        assert!(!q.has_room());
        let _ = q.begin_work().unwrap();
        assert!(q.has_room());
        assert!(!q.has_free_worker());
    }

    #[test]
    #[should_panic(expected = "capacity")]
    fn zero_capacity_rejected() {
        QueueConfig::bounded(0, 1);
    }
}
