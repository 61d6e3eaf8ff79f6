//! Measurement collection and summary statistics.
//!
//! Stages record admission counters, outcome counters, queue waits and
//! latencies into a shared [`MetricsStore`]. Custom time series can be
//! recorded by name, and a recurring queue-depth poll is provided. After a
//! run drains, [`summarize`] reduces the store to the headline report.

use std::cell::{Ref, RefCell};
use std::io::{self, Write};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, IntervalHandle, Tick};
use crate::scenario::RunResult;
use crate::stage::StageRef;

/// One named measurement taken at a tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub tick: Tick,
    pub value: f64,
}

/// A queue-wait observation, kept with the outcome so waits can be split by
/// how the event ended.
#[derive(Clone, Copy, Debug)]
pub struct WaitSample {
    pub tick: Tick,
    pub wait: Tick,
    pub success: bool,
}

/// Per-stage counters and samples.
#[derive(Clone, Debug, Default)]
pub struct StageStats {
    pub added: u64,
    pub rejected: u64,
    pub succeeded: u64,
    pub failed: u64,
    /// (completion tick, created-to-completed latency) per finished event.
    pub latencies: Vec<(Tick, Tick)>,
    pub waits: Vec<WaitSample>,
}

impl StageStats {
    pub fn completed(&self) -> u64 {
        self.succeeded + self.failed
    }
}

#[derive(Default)]
pub struct MetricsStore {
    counters: std::collections::BTreeMap<String, u64>,
    samples: std::collections::BTreeMap<String, Vec<Sample>>,
    per_stage: std::collections::BTreeMap<String, StageStats>,
}

impl MetricsStore {
    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }

    pub fn samples(&self, name: &str) -> &[Sample] {
        self.samples.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn stage(&self, name: &str) -> Option<&StageStats> {
        self.per_stage.get(name)
    }

    /// Largest value observed for a sample series, if any was recorded.
    pub fn max_sample(&self, name: &str) -> Option<f64> {
        self.samples(name)
            .iter()
            .map(|s| s.value)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    /// Value of the sample at exactly `tick`, if one was recorded there.
    pub fn sample_at(&self, name: &str, tick: Tick) -> Option<f64> {
        self.samples(name)
            .iter()
            .find(|s| s.tick == tick)
            .map(|s| s.value)
    }

    /// Writes every recorded sample as one structured record per line,
    /// in deterministic order.
    pub fn write_sample_lines(&self, w: &mut impl Write) -> io::Result<()> {
        for (name, samples) in &self.samples {
            for s in samples {
                writeln!(
                    w,
                    "{{\"tick\":{},\"name\":{},\"value\":{}}}",
                    s.tick,
                    serde_json::to_string(name).expect("string serializes"),
                    s.value
                )?;
            }
        }
        for (stage, stats) in &self.per_stage {
            for (tick, latency) in &stats.latencies {
                writeln!(
                    w,
                    "{{\"tick\":{tick},\"name\":\"latency:{stage}\",\"value\":{latency}}}"
                )?;
            }
            for ws in &stats.waits {
                let outcome = if ws.success { "success" } else { "fail" };
                writeln!(
                    w,
                    "{{\"tick\":{},\"name\":\"queue_wait:{stage}\",\"value\":{},\"outcome\":\"{outcome}\"}}",
                    ws.tick, ws.wait
                )?;
            }
        }
        Ok(())
    }
}

/// Shared handle to a [`MetricsStore`]. Cheap to clone.
#[derive(Clone, Default)]
pub struct Metrics {
    store: Rc<RefCell<MetricsStore>>,
}

impl Metrics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&self) -> Ref<'_, MetricsStore> {
        self.store.borrow()
    }

    /// Appends a named sample at the given tick. Samples taken before the
    /// run starts land at tick 0.
    pub fn record(&self, tick: Tick, name: &str, value: f64) {
        self.store
            .borrow_mut()
            .samples
            .entry(name.to_string())
            .or_default()
            .push(Sample { tick, value });
    }

    /// Increments a named counter.
    pub fn count(&self, name: &str, delta: u64) {
        *self
            .store
            .borrow_mut()
            .counters
            .entry(name.to_string())
            .or_default() += delta;
    }

    pub(crate) fn register_stage(&self, name: &str) {
        self.store
            .borrow_mut()
            .per_stage
            .entry(name.to_string())
            .or_default();
    }

    pub(crate) fn stage_added(&self, name: &str) {
        if let Some(st) = self.store.borrow_mut().per_stage.get_mut(name) {
            st.added += 1;
        }
    }

    pub(crate) fn stage_rejected(&self, name: &str) {
        if let Some(st) = self.store.borrow_mut().per_stage.get_mut(name) {
            st.rejected += 1;
        }
    }

    pub(crate) fn stage_outcome(
        &self,
        name: &str,
        tick: Tick,
        success: bool,
        wait: Tick,
        latency: Tick,
    ) {
        if let Some(st) = self.store.borrow_mut().per_stage.get_mut(name) {
            if success {
                st.succeeded += 1;
            } else {
                st.failed += 1;
            }
            st.latencies.push((tick, latency));
            st.waits.push(WaitSample {
                tick,
                wait,
                success,
            });
        }
    }
}

/// Name of the queue-depth sample series for a stage.
pub fn queue_depth_series(stage: &str) -> String {
    format!("queue_depth:{stage}")
}

/// Installs a recurring sample of a stage's waiting-queue length, taken
/// every `period` ticks.
pub fn poll_queue_depth(
    clock: &Clock,
    metrics: &Metrics,
    stage: &StageRef,
    period: Tick,
) -> IntervalHandle {
    let name = queue_depth_series(stage.core().name());
    let stage = stage.clone();
    let metrics = metrics.clone();
    clock.set_interval(period, move |c| {
        metrics.record(c.now(), &name, stage.core().queue().len() as f64);
    })
}

/// The headline metrics of a drained run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub injected: u64,
    pub rejected: u64,
    pub succeeded: u64,
    pub failed: u64,
    /// rejected / injected.
    pub rejection_rate: f64,
    /// succeeded / injected.
    pub availability: f64,
    /// failed / injected.
    pub fail_rate: f64,
    /// Largest sampled waiting-queue depth at the entry stage.
    pub max_queue_size: u64,
    /// Mean ticks from admission to dequeue at the entry stage.
    pub mean_queue_wait: f64,
    pub mean_queue_wait_success: f64,
    pub mean_queue_wait_fail: f64,
    /// False when no event was ever enqueued, in which case the wait means
    /// are reported as 0.
    pub queue_wait_observed: bool,
    /// Successful events per tick over the whole run.
    pub throughput: f64,
    /// Ticks from the last arrival until the backlog drained.
    pub recovery_time: Tick,
    pub start_tick: Tick,
    pub last_arrival_tick: Tick,
    pub drain_tick: Tick,
}

#[derive(Debug, PartialEq, Eq)]
pub enum SummarizeError {
    /// The run did not drain; its metrics are not final.
    NotDrained,
}

impl std::fmt::Display for SummarizeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SummarizeError::NotDrained => write!(f, "run has not drained"),
        }
    }
}

impl std::error::Error for SummarizeError {}

/// Reduces a drained run to its summary. Recomputing from the same store and
/// run result yields the same report.
pub fn summarize(store: &MetricsStore, run: &RunResult) -> Result<SummaryReport, SummarizeError> {
    if !run.drained {
        return Err(SummarizeError::NotDrained);
    }
    let injected = run.injected;
    let denom = injected.max(1) as f64;

    let entry = &run.entry_stage;
    let waits: &[WaitSample] = store
        .stage(entry)
        .map(|s| s.waits.as_slice())
        .unwrap_or(&[]);
    let mean = |pred: &dyn Fn(&WaitSample) -> bool| -> (f64, u64) {
        let mut sum = 0u128;
        let mut n = 0u64;
        for w in waits.iter().filter(|w| pred(w)) {
            sum += w.wait as u128;
            n += 1;
        }
        if n == 0 {
            (0.0, 0)
        } else {
            (sum as f64 / n as f64, n)
        }
    };
    let (mean_all, n_all) = mean(&|_| true);
    let (mean_ok, _) = mean(&|w| w.success);
    let (mean_fail, _) = mean(&|w| !w.success);

    let max_queue_size = store
        .max_sample(&queue_depth_series(entry))
        .map(|v| v as u64)
        .unwrap_or(0);

    let span = run.drain_tick.saturating_sub(run.start_tick);
    let throughput = if span == 0 {
        0.0
    } else {
        run.succeeded as f64 / span as f64
    };

    Ok(SummaryReport {
        injected,
        rejected: run.rejected,
        succeeded: run.succeeded,
        failed: run.failed,
        rejection_rate: run.rejected as f64 / denom,
        availability: run.succeeded as f64 / denom,
        fail_rate: run.failed as f64 / denom,
        max_queue_size,
        mean_queue_wait: mean_all,
        mean_queue_wait_success: mean_ok,
        mean_queue_wait_fail: mean_fail,
        queue_wait_observed: n_all > 0,
        throughput,
        recovery_time: run.drain_tick.saturating_sub(run.last_arrival_tick),
        start_tick: run.start_tick,
        last_arrival_tick: run.last_arrival_tick,
        drain_tick: run.drain_tick,
    })
}
