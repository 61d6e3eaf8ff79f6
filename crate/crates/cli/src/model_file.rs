//! TOML run files: a scenario section plus either nothing (bundled models
//! are picked with --model) or a declarative stage graph built from the
//! prebuilt stage set.
//!
//! ```toml
//! seed = 1
//! events = 50000
//!
//! [scenario]
//! rate = 1500.0
//! keyspace_mean = 1000.0
//! keyspace_std = 200.0
//! [[scenario.ramp]]
//! every = 1000
//! add = 100.0
//!
//! [model]
//! entry = "service"
//!
//! [[model.stages]]
//! name = "service"
//! kind = "proxy"
//! wraps = "retry"
//! [model.stages.queue]
//! workers = 310
//!
//! [[model.stages]]
//! name = "retry"
//! kind = "retry"
//! wraps = "database"
//! attempts = 3
//! backoff = 150
//!
//! [[model.stages]]
//! name = "database"
//! kind = "server"
//! mean_latency = 30.0
//! availability = 0.9995
//! [model.stages.queue]
//! capacity = 1
//! workers = 300
//! [model.stages.load]
//! knee = 100.0
//! exponent = 3
//! ```
//!
//! Custom `work_on` logic beyond these kinds is written in code against the
//! stage-authoring API.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use stagesim::clock::{Clock, Tick};
use stagesim::metrics::Metrics;
use stagesim::queue::QueueConfig;
use stagesim::scenario::{RampChange, RampRule, RampTrigger, ScenarioConfig, SeedStreams};
use stagesim::stage::StageRef;
use stagesim::stages::{
    Breaker, BreakerConfig, Cache, CacheConfig, CacheMode, LoadCurve, Proxy, Retry, RetryConfig,
    Server, ServerConfig, Timeout, TimeoutConfig,
};

use crate::AppError;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSpec {
    seed: Option<u64>,
    events: Option<u64>,
    scenario: Option<ScenarioSection>,
    model: ModelSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    rate: Option<f64>,
    keyspace_mean: Option<f64>,
    keyspace_std: Option<f64>,
    #[serde(default)]
    ramp: Vec<RampSection>,
    max_ticks: Option<Tick>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RampSection {
    every: Option<Tick>,
    at: Option<Tick>,
    add: Option<f64>,
    set: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    entry: String,
    stages: Vec<StageSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StageSection {
    name: String,
    kind: String,
    wraps: Option<String>,
    queue: Option<QueueSection>,
    // server
    mean_latency: Option<f64>,
    availability: Option<f64>,
    load: Option<LoadSection>,
    // retry
    attempts: Option<u32>,
    backoff: Option<Tick>,
    // timeout
    deadline: Option<Tick>,
    // cache
    mode: Option<String>,
    capacity: Option<usize>,
    ttl: Option<Tick>,
    // breaker
    window: Option<usize>,
    failure_threshold: Option<f64>,
    cooldown: Option<Tick>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueueSection {
    capacity: Option<usize>,
    workers: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadSection {
    knee: f64,
    exponent: i32,
}

/// A parsed run file.
pub struct RunFile {
    label: String,
    spec: FileSpec,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<RunFile, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("reading {}: {e}", path.display())))?;
        let spec: FileSpec = toml::from_str(&text)
            .map_err(|e| AppError::Config(format!("parsing {}: {e}", path.display())))?;
        Ok(RunFile {
            label: path.display().to_string(),
            spec,
        })
    }

    pub fn label(&self) -> String {
        self.label.clone()
    }

    pub fn seed(&self) -> Option<u64> {
        self.spec.seed
    }

    /// Wires the declared stage graph and assembles the scenario.
    pub fn build(
        &self,
        seed: u64,
        clock: &Clock,
        metrics: &Metrics,
    ) -> Result<(StageRef, ScenarioConfig), AppError> {
        let entry = build_graph(&self.spec.model, seed, clock, metrics)?;

        let mut scenario = ScenarioConfig {
            events_per_1000_ticks: 1000.0,
            keyspace_mean: 1000.0,
            keyspace_std: 200.0,
            total_events: 10_000,
            seed,
            ramp: Vec::new(),
            max_ticks: None,
        };
        if let Some(events) = self.spec.events {
            scenario.total_events = events;
        }
        if let Some(section) = &self.spec.scenario {
            if let Some(rate) = section.rate {
                scenario.events_per_1000_ticks = rate;
            }
            if let Some(mean) = section.keyspace_mean {
                scenario.keyspace_mean = mean;
            }
            if let Some(std) = section.keyspace_std {
                scenario.keyspace_std = std;
            }
            if let Some(max) = section.max_ticks {
                scenario.max_ticks = Some(max);
            }
            for ramp in &section.ramp {
                scenario.ramp.push(ramp_rule(ramp)?);
            }
        }
        Ok((entry, scenario))
    }
}

fn ramp_rule(section: &RampSection) -> Result<RampRule, AppError> {
    let trigger = match (section.every, section.at) {
        (Some(every), None) => RampTrigger::Every(every),
        (None, Some(at)) => RampTrigger::At(at),
        _ => {
            return Err(AppError::Config(
                "each [[scenario.ramp]] needs exactly one of `every` or `at`".into(),
            ))
        }
    };
    let change = match (section.add, section.set) {
        (Some(add), None) => RampChange::Add(add),
        (None, Some(set)) => RampChange::Set(set),
        _ => {
            return Err(AppError::Config(
                "each [[scenario.ramp]] needs exactly one of `add` or `set`".into(),
            ))
        }
    };
    Ok(RampRule { trigger, change })
}

fn queue_config(section: &Option<QueueSection>) -> QueueConfig {
    match section {
        None => QueueConfig::unconstrained(),
        Some(q) => QueueConfig {
            capacity: q.capacity,
            workers: q.workers.unwrap_or(usize::MAX),
        },
    }
}

fn require<T: Copy>(field: Option<T>, stage: &str, name: &str) -> Result<T, AppError> {
    field.ok_or_else(|| AppError::Config(format!("stage '{stage}' is missing `{name}`")))
}

/// Builds stages leaf-first by resolving `wraps` references until the graph
/// is complete; anything left over is a missing or circular reference.
fn build_graph(
    model: &ModelSection,
    seed: u64,
    clock: &Clock,
    metrics: &Metrics,
) -> Result<StageRef, AppError> {
    if model.stages.is_empty() {
        return Err(AppError::Config("the model declares no stages".into()));
    }
    let streams = SeedStreams::new(seed);
    let mut built: HashMap<String, StageRef> = HashMap::new();
    let mut pending: Vec<&StageSection> = model.stages.iter().collect();

    for stage in &pending {
        if model.stages.iter().filter(|s| s.name == stage.name).count() > 1 {
            return Err(AppError::Config(format!(
                "duplicate stage name '{}'",
                stage.name
            )));
        }
    }

    loop {
        let mut next_pending = Vec::new();
        let mut progressed = false;
        for section in pending {
            let ready = section
                .wraps
                .as_ref()
                .is_none_or(|dep| built.contains_key(dep));
            if !ready {
                next_pending.push(section);
                continue;
            }
            let stage = build_stage(section, &built, &streams, clock, metrics)?;
            built.insert(section.name.clone(), stage);
            progressed = true;
        }
        pending = next_pending;
        if pending.is_empty() {
            break;
        }
        if !progressed {
            let section = pending[0];
            let dep = section.wraps.as_ref().expect("unready stages have wraps");
            if !model.stages.iter().any(|s| &s.name == dep) {
                return Err(AppError::Config(format!(
                    "stage '{}' wraps unknown stage '{dep}'",
                    section.name
                )));
            }
            return Err(AppError::Config(format!(
                "stage wiring contains a cycle involving '{}'",
                section.name
            )));
        }
    }

    built
        .get(&model.entry)
        .cloned()
        .ok_or_else(|| AppError::Config(format!("entry stage '{}' is not declared", model.entry)))
}

fn build_stage(
    section: &StageSection,
    built: &HashMap<String, StageRef>,
    streams: &SeedStreams,
    clock: &Clock,
    metrics: &Metrics,
) -> Result<StageRef, AppError> {
    let name = section.name.as_str();
    let wrapped = || -> Result<StageRef, AppError> {
        let dep = section
            .wraps
            .as_ref()
            .ok_or_else(|| AppError::Config(format!("stage '{name}' needs `wraps`")))?;
        Ok(built[dep].clone())
    };

    let stage: StageRef = match section.kind.as_str() {
        "server" => {
            let mean_latency = require(section.mean_latency, name, "mean_latency")?;
            let availability = section.availability.unwrap_or(1.0);
            if !(0.0..=1.0).contains(&availability) {
                return Err(AppError::Config(format!(
                    "stage '{name}': availability must be in [0, 1]"
                )));
            }
            let queue = match &section.queue {
                Some(_) => queue_config(&section.queue),
                None => QueueConfig::unconstrained(),
            };
            Server::new(
                name,
                ServerConfig {
                    mean_latency,
                    availability,
                    queue,
                    load: section.load.as_ref().map(|l| LoadCurve {
                        knee: l.knee,
                        exponent: l.exponent,
                    }),
                },
                streams.latency.clone(),
                streams.availability.clone(),
                clock,
                metrics,
            )
        }
        "proxy" => Proxy::new(
            name,
            queue_config(&section.queue),
            wrapped()?,
            clock,
            metrics,
        ),
        "retry" => Retry::new(
            name,
            RetryConfig {
                attempts: require(section.attempts, name, "attempts")?,
                backoff: section.backoff.unwrap_or(0),
            },
            wrapped()?,
            clock,
            metrics,
        ),
        "timeout" => Timeout::new(
            name,
            TimeoutConfig {
                deadline: require(section.deadline, name, "deadline")?,
            },
            wrapped()?,
            clock,
            metrics,
        ),
        "cache" => {
            let mode = match section.mode.as_deref() {
                Some("read_through") | None => CacheMode::ReadThrough,
                Some("background_refresh") => CacheMode::BackgroundRefresh,
                Some(other) => {
                    return Err(AppError::Config(format!(
                        "stage '{name}': unknown cache mode '{other}' \
                         (read_through | background_refresh)"
                    )))
                }
            };
            Cache::new(
                name,
                CacheConfig {
                    mode,
                    capacity: require(section.capacity, name, "capacity")?,
                    ttl: section.ttl,
                },
                wrapped()?,
                clock,
                metrics,
            )
        }
        "breaker" => Breaker::new(
            name,
            BreakerConfig {
                window: require(section.window, name, "window")?,
                failure_threshold: require(section.failure_threshold, name, "failure_threshold")?,
                cooldown: require(section.cooldown, name, "cooldown")?,
            },
            wrapped()?,
            clock,
            metrics,
        ),
        other => {
            return Err(AppError::Config(format!(
                "stage '{name}': unknown kind '{other}' \
                 (server | proxy | retry | timeout | cache | breaker)"
            )))
        }
    };
    Ok(stage)
}
