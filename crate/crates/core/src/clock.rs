//! Discrete-event clock and cooperative task executor.
//!
//! All simulated activity is coordinated by an abstract time unit, the tick
//! (by convention 1 tick ~ 1 ms). Work is scheduled on a timeline ordered by
//! `(tick, seq)`, where `seq` is a monotone counter assigned at scheduling
//! time, so two runs with the same schedule execute identically. The engine
//! skips idle ticks rather than iterating them.
//!
//! Activities are plain futures driven by a single-threaded executor. They
//! suspend at [`Clock::wait`] and resume when their timer fires. A woken
//! activity runs before the next timeline entry of the same tick, so
//! completion chains resolve within the tick that produced them.

use std::cell::{Cell, RefCell};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::sync::{Arc, Mutex};
use std::task::{Context, Poll, Wake, Waker};

/// Simulation time. Starts at 0 and never decreases over a run.
pub type Tick = u64;

type TaskId = u64;

struct TimerState {
    fired: bool,
    waker: Option<Waker>,
}

struct Interval {
    period: Tick,
    cancelled: Rc<Cell<bool>>,
    action: Box<dyn FnMut(&Clock)>,
}

enum Action {
    /// First poll of a freshly spawned task.
    PollTask(TaskId),
    /// Mark a `wait` timer as fired and wake its activity.
    FireTimer(Rc<RefCell<TimerState>>),
    /// Run a recurring action, then reschedule it unless cancelled.
    FireInterval(Interval),
    /// Run a deferred action once.
    RunOnce(Box<dyn FnOnce(&Clock)>),
}

struct Scheduled {
    at: Tick,
    seq: u64,
    action: Action,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Reversed so the BinaryHeap pops the earliest (tick, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// FIFO queue of tasks woken during the current step.
struct ReadyQueue {
    queue: Mutex<VecDeque<TaskId>>,
}

impl ReadyQueue {
    fn push(&self, id: TaskId) {
        self.queue.lock().unwrap().push_back(id);
    }
    fn pop(&self) -> Option<TaskId> {
        self.queue.lock().unwrap().pop_front()
    }
    fn is_empty(&self) -> bool {
        self.queue.lock().unwrap().is_empty()
    }
}

struct TaskWaker {
    id: TaskId,
    ready: Arc<ReadyQueue>,
}

impl Wake for TaskWaker {
    fn wake(self: Arc<Self>) {
        self.ready.push(self.id);
    }
}

struct ClockInner {
    now: Tick,
    seq: u64,
    timeline: BinaryHeap<Scheduled>,
    tasks: HashMap<TaskId, Pin<Box<dyn Future<Output = ()>>>>,
    next_task: TaskId,
}

impl ClockInner {
    fn next_seq(&mut self) -> u64 {
        let s = self.seq;
        self.seq += 1;
        s
    }

    fn schedule(&mut self, at: Tick, action: Action) {
        let seq = self.next_seq();
        self.timeline.push(Scheduled { at, seq, action });
    }
}

/// Handle to the simulation clock. Cheap to clone; all clones share state.
#[derive(Clone)]
pub struct Clock {
    inner: Rc<RefCell<ClockInner>>,
    ready: Arc<ReadyQueue>,
}

impl Default for Clock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock {
    pub fn new() -> Self {
        Clock {
            inner: Rc::new(RefCell::new(ClockInner {
                now: 0,
                seq: 0,
                timeline: BinaryHeap::new(),
                tasks: HashMap::new(),
                next_task: 0,
            })),
            ready: Arc::new(ReadyQueue {
                queue: Mutex::new(VecDeque::new()),
            }),
        }
    }

    /// The tick currently executing, or the last one executed.
    pub fn now(&self) -> Tick {
        self.inner.borrow().now
    }

    /// Suspends the calling activity for `duration` ticks. A zero duration
    /// resumes within the same tick, after work already queued for it.
    pub fn wait(&self, duration: Tick) -> WaitFuture {
        let state = Rc::new(RefCell::new(TimerState {
            fired: false,
            waker: None,
        }));
        let mut inner = self.inner.borrow_mut();
        let at = inner.now + duration;
        inner.schedule(at, Action::FireTimer(state.clone()));
        WaitFuture { state }
    }

    /// Schedules `action` every `period` ticks, first firing at
    /// `now + period`, until cancelled.
    ///
    /// # Panics
    /// Panics if `period` is 0, which would stall the timeline.
    pub fn set_interval(
        &self,
        period: Tick,
        action: impl FnMut(&Clock) + 'static,
    ) -> IntervalHandle {
        assert!(period >= 1, "interval period must be at least one tick");
        let cancelled = Rc::new(Cell::new(false));
        let interval = Interval {
            period,
            cancelled: cancelled.clone(),
            action: Box::new(action),
        };
        let mut inner = self.inner.borrow_mut();
        let at = inner.now + period;
        inner.schedule(at, Action::FireInterval(interval));
        IntervalHandle { cancelled }
    }

    /// Runs `action` once, `delay` ticks from now. Unlike a spawned task, a
    /// pending deferred action does not count as a live activity.
    pub fn schedule(&self, delay: Tick, action: impl FnOnce(&Clock) + 'static) {
        let mut inner = self.inner.borrow_mut();
        let at = inner.now + delay;
        inner.schedule(at, Action::RunOnce(Box::new(action)));
    }

    /// Spawns an activity. It first runs during the current tick, after work
    /// already queued for it.
    pub fn spawn(&self, fut: impl Future<Output = ()> + 'static) {
        let mut inner = self.inner.borrow_mut();
        let id = inner.next_task;
        inner.next_task += 1;
        inner.tasks.insert(id, Box::pin(fut));
        let now = inner.now;
        inner.schedule(now, Action::PollTask(id));
    }

    /// Number of live (spawned, not yet finished) activities.
    pub fn live_tasks(&self) -> usize {
        self.inner.borrow().tasks.len()
    }

    /// True when no runnable work remains.
    pub fn is_idle(&self) -> bool {
        self.ready.is_empty() && self.inner.borrow().timeline.is_empty()
    }

    /// Executes one unit of work: a woken task if any, otherwise the earliest
    /// timeline entry (advancing `now` to it). Returns false when drained.
    pub fn step(&self) -> bool {
        if let Some(id) = self.ready.pop() {
            self.poll_task(id);
            return true;
        }

        let (action, at) = {
            let mut inner = self.inner.borrow_mut();
            let Some(sch) = inner.timeline.pop() else {
                return false;
            };
            debug_assert!(sch.at >= inner.now, "timeline went backwards");
            inner.now = sch.at;
            (sch.action, sch.at)
        };

        match action {
            Action::PollTask(id) => self.poll_task(id),
            Action::FireTimer(state) => {
                let waker = {
                    let mut st = state.borrow_mut();
                    st.fired = true;
                    st.waker.take()
                };
                if let Some(w) = waker {
                    w.wake();
                }
            }
            Action::FireInterval(mut interval) => {
                if !interval.cancelled.get() {
                    (interval.action)(self);
                    if !interval.cancelled.get() {
                        let mut inner = self.inner.borrow_mut();
                        let next = at + interval.period;
                        inner.schedule(next, Action::FireInterval(interval));
                    }
                }
            }
            Action::RunOnce(action) => action(self),
        }
        true
    }

    /// Advances to the next tick with pending work and executes everything
    /// due at it, including work scheduled for the same tick while it runs.
    /// Returns the executed tick, or None when the simulation is drained.
    pub fn advance(&self) -> Option<Tick> {
        let target = {
            let inner = self.inner.borrow();
            if !self.ready.is_empty() {
                inner.now
            } else {
                inner.timeline.peek()?.at
            }
        };
        loop {
            let due = !self.ready.is_empty()
                || self
                    .inner
                    .borrow()
                    .timeline
                    .peek()
                    .is_some_and(|s| s.at <= target);
            if !due {
                break;
            }
            self.step();
        }
        Some(target)
    }

    /// Runs until no runnable work remains. Recurring intervals keep the
    /// clock busy forever; callers owning intervals should cancel them or
    /// use a bounded loop over [`Clock::step`].
    pub fn run_until_idle(&self) {
        while self.step() {}
    }

    fn poll_task(&self, id: TaskId) {
        let Some(mut fut) = self.inner.borrow_mut().tasks.remove(&id) else {
            // Spurious wake of a finished task.
            return;
        };
        let waker = Waker::from(Arc::new(TaskWaker {
            id,
            ready: self.ready.clone(),
        }));
        let mut cx = Context::from_waker(&waker);
        match fut.as_mut().poll(&mut cx) {
            Poll::Ready(()) => {}
            Poll::Pending => {
                self.inner.borrow_mut().tasks.insert(id, fut);
            }
        }
    }
}

/// Future returned by [`Clock::wait`].
pub struct WaitFuture {
    state: Rc<RefCell<TimerState>>,
}

impl Future for WaitFuture {
    type Output = ();

    fn poll(self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<()> {
        let mut st = self.state.borrow_mut();
        if st.fired {
            Poll::Ready(())
        } else {
            st.waker = Some(cx.waker().clone());
            Poll::Pending
        }
    }
}

/// Handle to a recurring task installed with [`Clock::set_interval`].
pub struct IntervalHandle {
    cancelled: Rc<Cell<bool>>,
}

impl IntervalHandle {
    /// Stops all future firings.
    pub fn cancel(&self) {
        self.cancelled.set(true);
    }
}
