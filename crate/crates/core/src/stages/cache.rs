//! Keyed cache wrapper with LRU eviction and optional TTL.
//!
//! Read-through mode fetches on miss or expiry and serves fresh hits with
//! zero added latency. Background-refresh mode serves any hit immediately,
//! and a stale hit additionally kicks off a refresh fetch that is not tied
//! to the event's completion.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Tick};
use crate::event::{Event, FailCause};
use crate::metrics::Metrics;
use crate::queue::QueueConfig;
use crate::stage::{forwarded, Stage, StageCore, StageExt, StageRef};
use crate::task::BoxFuture;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    ReadThrough,
    BackgroundRefresh,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub mode: CacheMode,
    /// Maximum cached keys; least-recently-used keys are evicted.
    pub capacity: usize,
    /// Age in ticks after which an entry is expired (read-through) or stale
    /// (background-refresh). `None` means entries never age out.
    #[serde(default)]
    pub ttl: Option<Tick>,
}

struct Entry {
    stored_at: Tick,
    lru_token: u64,
}

#[derive(Default)]
struct CacheState {
    entries: HashMap<u64, Entry>,
    /// lru_token -> key; the smallest token is the eviction candidate.
    lru: BTreeMap<u64, u64>,
    next_token: u64,
    refreshing: HashSet<u64>,
}

impl CacheState {
    fn touch(&mut self, key: u64) {
        let token = self.next_token;
        self.next_token += 1;
        if let Some(entry) = self.entries.get_mut(&key) {
            self.lru.remove(&entry.lru_token);
            entry.lru_token = token;
            self.lru.insert(token, key);
        }
    }

    fn insert(&mut self, key: u64, stored_at: Tick, capacity: usize) {
        if let Some(old) = self.entries.get(&key) {
            self.lru.remove(&old.lru_token);
        } else if self.entries.len() >= capacity {
            if let Some((&victim_token, &victim_key)) = self.lru.iter().next() {
                self.lru.remove(&victim_token);
                self.entries.remove(&victim_key);
            }
        }
        let token = self.next_token;
        self.next_token += 1;
        self.entries.insert(
            key,
            Entry {
                stored_at,
                lru_token: token,
            },
        );
        self.lru.insert(token, key);
    }
}

pub struct Cache {
    core: StageCore,
    config: CacheConfig,
    wrapped: StageRef,
    state: RefCell<CacheState>,
}

impl Cache {
    pub fn new(
        name: &str,
        config: CacheConfig,
        wrapped: StageRef,
        clock: &Clock,
        metrics: &Metrics,
    ) -> Rc<Self> {
        assert!(config.capacity >= 1, "cache capacity must be positive");
        Rc::new(Cache {
            core: StageCore::new(name, QueueConfig::unconstrained(), clock, metrics),
            config,
            wrapped,
            state: RefCell::new(CacheState::default()),
        })
    }

    pub fn config(&self) -> CacheConfig {
        self.config
    }

    pub fn wrapped(&self) -> &StageRef {
        &self.wrapped
    }

    pub fn contains(&self, key: u64) -> bool {
        self.state.borrow().entries.contains_key(&key)
    }

    fn age_of(&self, key: u64, now: Tick) -> Option<Tick> {
        self.state
            .borrow()
            .entries
            .get(&key)
            .map(|e| now - e.stored_at)
    }

    fn expired(&self, age: Tick) -> bool {
        self.config.ttl.is_some_and(|ttl| age > ttl)
    }

    fn spawn_refresh(self: &Rc<Self>, key: u64) {
        {
            let mut st = self.state.borrow_mut();
            if !st.refreshing.insert(key) {
                return; // refresh already in flight for this key
            }
        }
        let cache = self.clone();
        let wrapped = self.wrapped.clone();
        let clock = self.core.clock().clone();
        self.core.clock().spawn(async move {
            let refresh = Event::new(u64::MAX, key, clock.now());
            let result = wrapped.add(refresh).await;
            let mut st = cache.state.borrow_mut();
            st.refreshing.remove(&key);
            if result.is_ok() {
                let now = clock.now();
                st.insert(key, now, cache.config.capacity);
            }
        });
    }
}

impl Stage for Cache {
    fn core(&self) -> &StageCore {
        &self.core
    }

    fn work_on(self: Rc<Self>, event: Event) -> BoxFuture<Result<(), FailCause>> {
        let now = self.core.clock().now();
        let key = event.key;
        let age = self.age_of(key, now);

        let serve_hit = match (self.config.mode, age) {
            (CacheMode::ReadThrough, Some(age)) => !self.expired(age),
            (CacheMode::BackgroundRefresh, Some(age)) => {
                if self.expired(age) {
                    self.spawn_refresh(key);
                }
                true
            }
            (_, None) => false,
        };

        if serve_hit {
            self.state.borrow_mut().touch(key);
            return Box::pin(async { Ok(()) });
        }

        let cache = self.clone();
        let wrapped = self.wrapped.clone();
        let clock = self.core.clock().clone();
        Box::pin(async move {
            forwarded(wrapped.add(event).await)?;
            let now = clock.now();
            cache
                .state
                .borrow_mut()
                .insert(key, now, cache.config.capacity);
            Ok(())
        })
    }
}
