//! Scenario driving: open-loop event injection at a (mutable) rate, key
//! sampling from a discrete normal keyspace, and running a model to drain.
//!
//! Arrival spacing is deterministic: a fractional accumulator advances by
//! `1000 / rate` per event and each event lands on the integer tick the
//! accumulator falls in. Rate changes apply from the next scheduling
//! decision. All randomness comes from per-purpose substreams of one
//! seeded generator, so adjusting one model knob does not perturb draws
//! elsewhere.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Tick};
use crate::event::{Event, EventRecord, StageError, Trace};
use crate::stage::{StageExt, StageRef};

/// Seeded random substreams for the independent random choices a run makes.
pub struct SeedStreams {
    pub keyspace: Rc<RefCell<StdRng>>,
    pub latency: Rc<RefCell<StdRng>>,
    pub availability: Rc<RefCell<StdRng>>,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        SeedStreams {
            keyspace: Rc::new(RefCell::new(substream(seed, 0))),
            latency: Rc::new(RefCell::new(substream(seed, 1))),
            availability: Rc::new(RefCell::new(substream(seed, 2))),
        }
    }
}

/// Derives an independent generator for substream `index` of `seed`.
pub fn substream(seed: u64, index: u64) -> StdRng {
    StdRng::seed_from_u64(seed ^ (index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Draws a key: round(N(mean, std)) clamped at zero.
pub fn sample_key(rng: &mut StdRng, mean: f64, std: f64) -> u64 {
    if std == 0.0 {
        return mean.round().max(0.0) as u64;
    }
    let normal = Normal::new(mean, std).expect("std is finite and non-negative");
    let x: f64 = normal.sample(rng);
    x.round().max(0.0) as u64
}

/// Draws an exponentially distributed latency with the given mean, rounded
/// half-up to the tick grid.
pub fn sample_exponential(rng: &mut StdRng, mean: f64) -> Tick {
    assert!(mean > 0.0, "exponential mean must be positive");
    let exp = Exp::new(1.0 / mean).expect("rate is positive and finite");
    let x: f64 = exp.sample(rng);
    x.round() as Tick
}

/// When a rate-schedule rule fires.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampTrigger {
    /// Once, at an absolute tick.
    At(Tick),
    /// Repeatedly, every `period` ticks.
    Every(Tick),
}

/// What a rate-schedule rule does to `events_per_1000_ticks`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampChange {
    Add(f64),
    Set(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampRule {
    pub trigger: RampTrigger,
    pub change: RampChange,
}

/// Everything needed to drive one simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Arrival rate, in events per 1,000 ticks. Mutable mid-run via `ramp`.
    pub events_per_1000_ticks: f64,
    pub keyspace_mean: f64,
    pub keyspace_std: f64,
    pub total_events: u64,
    pub seed: u64,
    #[serde(default)]
    pub ramp: Vec<RampRule>,
    /// Aborts the run if the clock passes this tick before draining.
    #[serde(default)]
    pub max_ticks: Option<Tick>,
}

/// Counts and landmark ticks of a completed run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub injected: u64,
    pub rejected: u64,
    pub succeeded: u64,
    pub failed: u64,
    pub start_tick: Tick,
    pub last_arrival_tick: Tick,
    pub drain_tick: Tick,
    pub entry_stage: String,
    pub drained: bool,
    /// Per-event timeline at the entry stage, in injection order.
    pub events: Vec<EventRecord>,
}

impl RunResult {
    /// Injected events partition exactly into rejected, succeeded, failed.
    pub fn conserved(&self) -> bool {
        self.injected == self.rejected + self.succeeded + self.failed
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum RunError {
    /// The tick budget elapsed before the run drained.
    BudgetExceeded { at_tick: Tick },
    /// Events remained in flight but nothing was runnable.
    Stalled { at_tick: Tick, in_flight: u64 },
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::BudgetExceeded { at_tick } => {
                write!(f, "tick budget exceeded at tick {at_tick} before drain")
            }
            RunError::Stalled { at_tick, in_flight } => write!(
                f,
                "simulation stalled at tick {at_tick} with {in_flight} events in flight"
            ),
        }
    }
}

impl std::error::Error for RunError {}

#[derive(Default)]
struct Ledger {
    rejected: u64,
    succeeded: u64,
    failed: u64,
    traces: Vec<Trace>,
}

/// Injects `config.total_events` into `entry` with uniform spacing at the
/// instantaneous rate, applies the rate schedule, then advances the clock
/// until no event work remains.
pub fn run(
    clock: &Clock,
    entry: &StageRef,
    config: &ScenarioConfig,
) -> Result<RunResult, RunError> {
    assert!(config.total_events >= 1, "a run needs at least one event");
    assert!(
        config.events_per_1000_ticks > 0.0,
        "arrival rate must be positive"
    );
    assert_eq!(clock.live_tasks(), 0, "scheduler must be idle at run start");

    let start_tick = clock.now();
    let rate = Rc::new(Cell::new(config.events_per_1000_ticks));

    // Rate schedule. `Every` rules recur until the run ends; `At` rules are
    // deferred actions so they never hold the drain condition open.
    let mut ramp_handles = Vec::new();
    for rule in &config.ramp {
        let rate = rate.clone();
        let change = rule.change;
        let apply = move || match change {
            RampChange::Add(delta) => rate.set(rate.get() + delta),
            RampChange::Set(value) => rate.set(value),
        };
        match rule.trigger {
            RampTrigger::Every(period) => {
                ramp_handles.push(clock.set_interval(period, move |_| apply()));
            }
            RampTrigger::At(tick) => {
                let delay = tick.saturating_sub(clock.now());
                clock.schedule(delay, move |_| apply());
            }
        }
    }

    let ledger = Rc::new(RefCell::new(Ledger::default()));
    let in_flight = Rc::new(Cell::new(0u64));
    let injector_done = Rc::new(Cell::new(false));
    let last_arrival = Rc::new(Cell::new(start_tick));

    {
        let clock2 = clock.clone();
        let entry = entry.clone();
        let ledger = ledger.clone();
        let in_flight = in_flight.clone();
        let injector_done = injector_done.clone();
        let last_arrival = last_arrival.clone();
        let rate = rate.clone();
        let total = config.total_events;
        let mean = config.keyspace_mean;
        let std = config.keyspace_std;
        let mut keyspace = substream(config.seed, 0);

        clock.spawn(async move {
            let mut ideal = clock2.now() as f64;
            for id in 0..total {
                // The epsilon keeps ideal times that are mathematically
                // integral from flooring one tick early.
                let target = (ideal + 1e-9).floor() as Tick;
                let now = clock2.now();
                if target > now {
                    clock2.wait(target - now).await;
                }
                let key = sample_key(&mut keyspace, mean, std);
                let event = Event::new(id, key, clock2.now());
                let trace = Trace::new(&event);
                ledger.borrow_mut().traces.push(trace.clone());
                last_arrival.set(clock2.now());
                in_flight.set(in_flight.get() + 1);

                let outcome = entry.add_traced(event, trace);
                let ledger = ledger.clone();
                let in_flight = in_flight.clone();
                clock2.spawn(async move {
                    let result = outcome.await;
                    {
                        let mut led = ledger.borrow_mut();
                        match result {
                            Ok(_) => led.succeeded += 1,
                            Err(StageError::Rejected) => led.rejected += 1,
                            Err(StageError::Failed(_)) => led.failed += 1,
                        }
                    }
                    in_flight.set(in_flight.get() - 1);
                });

                ideal += 1000.0 / rate.get();
            }
            injector_done.set(true);
        });
    }

    // Drive to drain: every injected event terminal and every activity it
    // spawned (including abandoned timed-out work) finished.
    let result = loop {
        if injector_done.get() && in_flight.get() == 0 && clock.live_tasks() == 0 {
            break Ok(());
        }
        if !clock.step() {
            break Err(RunError::Stalled {
                at_tick: clock.now(),
                in_flight: in_flight.get(),
            });
        }
        if let Some(budget) = config.max_ticks {
            if clock.now() > budget {
                break Err(RunError::BudgetExceeded {
                    at_tick: clock.now(),
                });
            }
        }
    };
    for handle in &ramp_handles {
        handle.cancel();
    }
    result?;

    let drain_tick = clock.now();
    let ledger = ledger.borrow();
    let events: Vec<EventRecord> = ledger.traces.iter().map(Trace::record).collect();
    let run = RunResult {
        injected: config.total_events,
        rejected: ledger.rejected,
        succeeded: ledger.succeeded,
        failed: ledger.failed,
        start_tick,
        last_arrival_tick: last_arrival.get(),
        drain_tick,
        entry_stage: entry.core().name().to_string(),
        drained: true,
        events,
    };
    debug_assert!(run.conserved(), "event accounting must balance at drain");
    Ok(run)
}
