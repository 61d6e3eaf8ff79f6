//! The stage abstraction: event admission, queuing, worker dispatch and
//! processing.
//!
//! A stage handles events in two steps. Admission (`add`) accepts or rejects
//! an arriving event before any processing; admitted events wait in the
//! stage's FIFO queue. Processing (`work_on`) runs once a worker picks the
//! event up, and may suspend on the clock, call `add` on downstream stages,
//! or kick off background work and return.
//!
//! Stage authors implement [`Stage::work_on`], optionally override
//! [`Stage::accepts`] and the outcome hooks, and embed a [`StageCore`]
//! built with the queue shape they want.

use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll};

use crate::clock::Clock;
use crate::event::{Event, EventStatus, FailCause, Response, StageError, StageResult, Trace};
use crate::metrics::Metrics;
use crate::queue::{FifoQueue, QueueConfig, Waiting};
use crate::task::{oneshot, BoxFuture, OneshotReceiver};

/// State shared by every stage: identity, queue, and handles to the clock
/// and metrics store.
pub struct StageCore {
    name: Rc<str>,
    queue: FifoQueue,
    clock: Clock,
    metrics: Metrics,
}

impl StageCore {
    pub fn new(name: &str, queue: QueueConfig, clock: &Clock, metrics: &Metrics) -> Self {
        metrics.register_stage(name);
        StageCore {
            name: name.into(),
            queue: FifoQueue::new(queue),
            clock: clock.clone(),
            metrics: metrics.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn queue(&self) -> &FifoQueue {
        &self.queue
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }
}

/// A unit of event processing. Models either a system component or a
/// fault-tolerance technique wrapped around one.
pub trait Stage {
    fn core(&self) -> &StageCore;

    /// Processes one dequeued event. Failures are returned, not raised; a
    /// wrapped stage's rejection surfaces here as [`FailCause::Dependency`].
    fn work_on(self: Rc<Self>, event: Event) -> BoxFuture<Result<(), FailCause>>;

    /// Admission rule. The default admits when the queue has spare waiting
    /// room or a worker is free.
    fn accepts(&self, _event: &Event) -> bool {
        let q = self.core().queue();
        q.has_room() || q.has_free_worker()
    }

    fn on_success(&self, _event: &Event) {}

    fn on_failure(&self, _event: &Event, _cause: FailCause) {}
}

/// Shared, dynamically typed stage handle.
pub type StageRef = Rc<dyn Stage>;

/// Future resolving when a submitted event reaches a terminal state at the
/// stage it was submitted to.
pub struct AddFuture(AddState);

enum AddState {
    Ready(Option<StageResult>),
    Waiting(OneshotReceiver<StageResult>),
}

impl Future for AddFuture {
    type Output = StageResult;

    fn poll(self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<StageResult> {
        match &mut self.get_mut().0 {
            AddState::Ready(slot) => Poll::Ready(slot.take().expect("polled after completion")),
            AddState::Waiting(rx) => Pin::new(rx).poll(cx),
        }
    }
}

/// Entry points for submitting events to a stage.
pub trait StageExt {
    /// Submits an event. Resolves with the response once the event
    /// completes, or with an error if it is rejected at admission or fails
    /// in processing.
    fn add(&self, event: Event) -> AddFuture;

    /// Like [`StageExt::add`], stamping admission, dequeue and completion
    /// times into `trace`. Used by scenario drivers at the entry stage.
    fn add_traced(&self, event: Event, trace: Trace) -> AddFuture;
}

impl<S: Stage + ?Sized + 'static> StageExt for Rc<S> {
    fn add(&self, event: Event) -> AddFuture {
        submit(self, event, None)
    }

    fn add_traced(&self, event: Event, trace: Trace) -> AddFuture {
        submit(self, event, Some(trace))
    }
}

fn submit<S: Stage + ?Sized + 'static>(
    stage: &Rc<S>,
    event: Event,
    trace: Option<Trace>,
) -> AddFuture {
    let core = stage.core();
    let now = core.clock().now();
    core.metrics().stage_added(core.name());

    if !stage.accepts(&event) {
        core.metrics().stage_rejected(core.name());
        if let Some(t) = &trace {
            t.mark_completed(now, EventStatus::Rejected);
        }
        return AddFuture(AddState::Ready(Some(Err(StageError::Rejected))));
    }

    if let Some(t) = &trace {
        t.mark_admitted(now);
    }
    let (tx, rx) = oneshot();
    core.queue().push(Waiting {
        event,
        enqueued_at: now,
        tx,
        trace,
    });
    dispatch(stage);
    AddFuture(AddState::Waiting(rx))
}

/// Starts workers for queued events while the pool has capacity. Called on
/// every enqueue and every worker release.
fn dispatch<S: Stage + ?Sized + 'static>(stage: &Rc<S>) {
    while let Some(item) = stage.core().queue().begin_work() {
        let stage = stage.clone();
        let clock = stage.core().clock().clone();
        clock.spawn(run_worker(stage, item));
    }
}

async fn run_worker<S: Stage + ?Sized + 'static>(stage: Rc<S>, item: Waiting) {
    let clock = stage.core().clock().clone();
    let metrics = stage.core().metrics().clone();
    let name = stage.core().name.clone();

    let dequeued = clock.now();
    let wait = dequeued - item.enqueued_at;
    if let Some(t) = &item.trace {
        t.mark_dequeued(dequeued);
    }

    let result = stage.clone().work_on(item.event).await;

    let done = clock.now();
    let latency = done - item.event.created_at;
    match result {
        Ok(()) => {
            metrics.stage_outcome(&name, done, true, wait, latency);
            stage.on_success(&item.event);
            if let Some(t) = &item.trace {
                t.mark_completed(done, EventStatus::Success);
            }
            item.tx.send(Ok(Response { latency }));
        }
        Err(cause) => {
            metrics.stage_outcome(&name, done, false, wait, latency);
            stage.on_failure(&item.event, cause);
            if let Some(t) = &item.trace {
                t.mark_completed(done, EventStatus::Fail);
            }
            item.tx.send(Err(StageError::Failed(cause)));
        }
    }

    stage.core().queue().end_work();
    dispatch(&stage);
}

/// Maps a downstream `add` outcome into this stage's work result, for
/// stages that forward events. A downstream rejection becomes a dependency
/// failure here: the rejection is accounted where it happened.
pub fn forwarded(result: StageResult) -> Result<(), FailCause> {
    match result {
        Ok(_) => Ok(()),
        Err(StageError::Rejected) => Err(FailCause::Dependency),
        Err(StageError::Failed(cause)) => Err(cause),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::clock::Tick;
    use std::cell::RefCell;

    /// Test stage that waits a fixed number of ticks then succeeds.
    pub(crate) struct FixedLatency {
        core: StageCore,
        latency: Tick,
    }

    impl FixedLatency {
        pub fn new(
            name: &str,
            queue: QueueConfig,
            latency: Tick,
            clock: &Clock,
            metrics: &Metrics,
        ) -> Rc<Self> {
            Rc::new(FixedLatency {
                core: StageCore::new(name, queue, clock, metrics),
                latency,
            })
        }
    }

    impl Stage for FixedLatency {
        fn core(&self) -> &StageCore {
            &self.core
        }

        fn work_on(self: Rc<Self>, _event: Event) -> BoxFuture<Result<(), FailCause>> {
            let clock = self.core.clock().clone();
            let latency = self.latency;
            Box::pin(async move {
                clock.wait(latency).await;
                Ok(())
            })
        }
    }

    fn setup() -> (Clock, Metrics) {
        (Clock::new(), Metrics::new())
    }

    type Results = Rc<RefCell<Vec<(u64, Tick, StageResult)>>>;

    fn collect(results: &Results) -> Vec<(u64, Tick)> {
        results
            .borrow()
            .iter()
            .map(|(id, tick, _)| (*id, *tick))
            .collect()
    }

    fn drive(clock: &Clock, stage: &Rc<FixedLatency>, events: Vec<Event>) -> Results {
        let results = Rc::new(RefCell::new(Vec::new()));
        for event in events {
            let stage: StageRef = stage.clone();
            let clock2 = clock.clone();
            let out = results.clone();
            clock.spawn(async move {
                let res = stage.add(event).await;
                out.borrow_mut().push((event.id, clock2.now(), res));
            });
        }
        results
    }

    #[test]
    fn uncontended_event_runs_same_tick() {
        let (clock, metrics) = setup();
        let stage = FixedLatency::new("s", QueueConfig::unbounded(1), 5, &clock, &metrics);
        let results = drive(&clock, &stage, vec![Event::new(1, 0, 0)]);
        clock.run_until_idle();
        assert_eq!(collect(&results), vec![(1, 5)]);
        let store = metrics.store();
        let stats = store.stage("s").unwrap();
        assert_eq!((stats.added, stats.succeeded), (1, 1));
        assert_eq!(stats.latencies, vec![(5, 5)]);
    }

    #[test]
    fn two_workers_three_events() {
        // 2 workers, 3 simultaneous events of latency 10: completions at
        // 10, 10 and 20 (third waits for the first free worker).
        let (clock, metrics) = setup();
        let stage = FixedLatency::new("s", QueueConfig::unbounded(2), 10, &clock, &metrics);
        let events = (1..=3).map(|id| Event::new(id, 0, 0)).collect();
        let results = drive(&clock, &stage, events);
        clock.run_until_idle();
        assert_eq!(collect(&results), vec![(1, 10), (2, 10), (3, 20)]);
    }

    #[test]
    fn bounded_queue_rejects_when_full() {
        // Capacity 1, one busy worker, one waiting: the third add is
        // rejected. Once the waiting event dequeues, an add is admitted.
        let (clock, metrics) = setup();
        let stage = FixedLatency::new("s", QueueConfig::bounded(1, 1), 10, &clock, &metrics);
        let events = (1..=3).map(|id| Event::new(id, 0, 0)).collect();
        let results = drive(&clock, &stage, events);

        let late: StageRef = stage.clone();
        let late_result = Rc::new(RefCell::new(None));
        let out = late_result.clone();
        let c = clock.clone();
        clock.spawn(async move {
            c.wait(12).await;
            let res = late.add(Event::new(4, 0, 12)).await;
            out.borrow_mut().replace(res);
        });

        clock.run_until_idle();
        let results = results.borrow();
        assert_eq!(results[0].2, Err(StageError::Rejected));
        assert_eq!(results[0].0, 3, "third add bounced at admission");
        assert!(late_result.borrow().unwrap().is_ok(), "room after dequeue");
        let store = metrics.store();
        let stats = store.stage("s").unwrap();
        assert_eq!(stats.rejected, 1);
        assert_eq!(stats.added, 4);
    }

    #[test]
    fn single_worker_is_fifo() {
        let (clock, metrics) = setup();
        let stage = FixedLatency::new("s", QueueConfig::unbounded(1), 3, &clock, &metrics);
        let events = (1..=5).map(|id| Event::new(id, 0, 0)).collect();
        let results = drive(&clock, &stage, events);
        clock.run_until_idle();
        assert_eq!(
            collect(&results),
            vec![(1, 3), (2, 6), (3, 9), (4, 12), (5, 15)]
        );
    }

    #[test]
    fn busy_never_exceeds_worker_count() {
        let (clock, metrics) = setup();
        let stage = FixedLatency::new("s", QueueConfig::unbounded(2), 7, &clock, &metrics);
        let probe_max = Rc::new(RefCell::new(0usize));
        {
            let stage = stage.clone();
            let probe_max = probe_max.clone();
            clock.set_interval(1, move |_| {
                let b = stage.core().queue().busy();
                let mut m = probe_max.borrow_mut();
                *m = (*m).max(b);
            });
        }
        let events = (1..=9).map(|id| Event::new(id, 0, 0)).collect();
        let _results = drive(&clock, &stage, events);
        for _ in 0..60 {
            clock.advance();
        }
        assert_eq!(*probe_max.borrow(), 2);
    }

    #[test]
    fn random_arrivals_never_overflow_a_bounded_queue() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        for _ in 0..20 {
            let capacity = rng.gen_range(1..=8);
            let workers = rng.gen_range(1..=4);
            let latency = rng.gen_range(1..=12);
            let n = rng.gen_range(20..=80u64);
            let spacing = rng.gen_range(0..=4u64);

            let (clock, metrics) = setup();
            let stage = FixedLatency::new(
                "s",
                QueueConfig::bounded(capacity, workers),
                latency,
                &clock,
                &metrics,
            );
            let peak = Rc::new(RefCell::new(0usize));
            {
                let stage = stage.clone();
                let peak = peak.clone();
                clock.set_interval(1, move |_| {
                    let mut p = peak.borrow_mut();
                    *p = (*p).max(stage.core().queue().len());
                });
            }
            for id in 0..n {
                let stage: StageRef = stage.clone();
                let c = clock.clone();
                clock.spawn(async move {
                    c.wait(id * spacing).await;
                    let _ = stage.add(Event::new(id, 0, c.now())).await;
                });
            }
            let deadline = n * (spacing + latency + 2) + 10;
            while clock.now() < deadline && clock.step() {}
            assert!(*peak.borrow() <= capacity, "waiting exceeded capacity");
            assert!(stage.core().queue().peak_waiting() <= capacity);
            let store = metrics.store();
            let stats = store.stage("s").unwrap();
            assert_eq!(stats.added, n, "every add is accounted");
            assert_eq!(stats.added, stats.rejected + stats.completed());
        }
    }

    #[test]
    fn admission_hook_can_reject_arbitrarily() {
        struct OddKeysOnly {
            inner: FixedLatency,
        }
        impl Stage for OddKeysOnly {
            fn core(&self) -> &StageCore {
                self.inner.core()
            }
            fn work_on(self: Rc<Self>, event: Event) -> BoxFuture<Result<(), FailCause>> {
                let clock = self.core().clock().clone();
                Box::pin(async move {
                    clock.wait(1).await;
                    let _ = event;
                    Ok(())
                })
            }
            fn accepts(&self, event: &Event) -> bool {
                event.key % 2 == 1
            }
        }
        let (clock, metrics) = setup();
        let stage = Rc::new(OddKeysOnly {
            inner: FixedLatency {
                core: StageCore::new("odd", QueueConfig::unbounded(1), &clock, &metrics),
                latency: 1,
            },
        });
        let results = Rc::new(RefCell::new(Vec::new()));
        for key in 0..6u64 {
            let stage: StageRef = stage.clone();
            let out = results.clone();
            clock.spawn(async move {
                let res = stage.add(Event::new(key, key, 0)).await;
                out.borrow_mut().push(res.is_ok());
            });
        }
        clock.run_until_idle();
        // Even keys bounce immediately, so they resolve first.
        let store = metrics.store();
        let stats = store.stage("odd").unwrap();
        assert_eq!(stats.rejected, 3);
        assert_eq!(stats.succeeded, 3);
    }

    #[test]
    fn outcome_hooks_fire_once_per_event() {
        use std::cell::Cell;
        struct Hooked {
            core: StageCore,
            ok: Cell<u32>,
            failed: Cell<u32>,
        }
        impl Stage for Hooked {
            fn core(&self) -> &StageCore {
                &self.core
            }
            fn work_on(self: Rc<Self>, event: Event) -> BoxFuture<Result<(), FailCause>> {
                Box::pin(async move {
                    if event.key == 0 {
                        Ok(())
                    } else {
                        Err(FailCause::Fault)
                    }
                })
            }
            fn on_success(&self, _event: &Event) {
                self.ok.set(self.ok.get() + 1);
            }
            fn on_failure(&self, _event: &Event, _cause: FailCause) {
                self.failed.set(self.failed.get() + 1);
            }
        }
        let (clock, metrics) = setup();
        let stage = Rc::new(Hooked {
            core: StageCore::new("hooked", QueueConfig::unconstrained(), &clock, &metrics),
            ok: Cell::new(0),
            failed: Cell::new(0),
        });
        for key in 0..5u64 {
            let s: StageRef = stage.clone();
            clock.spawn(async move {
                let _ = s.add(Event::new(key, key.min(1), 0)).await;
            });
        }
        clock.run_until_idle();
        assert_eq!(stage.ok.get(), 1);
        assert_eq!(stage.failed.get(), 4);
    }

    #[test]
    fn fixed_latency_timestamps() {
        // Event created at 100, dequeued at 100, latency 5: completes at 105.
        let (clock, metrics) = setup();
        let stage = FixedLatency::new("s", QueueConfig::unbounded(1), 5, &clock, &metrics);
        let c = clock.clone();
        let stage2: StageRef = stage.clone();
        let trace = Rc::new(RefCell::new(None));
        let out = trace.clone();
        clock.spawn(async move {
            c.wait(100).await;
            let event = Event::new(1, 0, c.now());
            let t = Trace::new(&event);
            let _ = stage2.add_traced(event, t.clone()).await;
            out.borrow_mut().replace(t.record());
        });
        clock.run_until_idle();
        let rec = trace.borrow().unwrap();
        assert_eq!(rec.admitted_at, Some(100));
        assert_eq!(rec.dequeued_at, Some(100));
        assert_eq!(rec.completed_at, Some(105));
        assert_eq!(rec.status, EventStatus::Success);
        assert!(rec.timestamps_ordered());
    }
}
