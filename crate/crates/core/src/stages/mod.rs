//! Prebuilt stages: leaf components and fault-tolerance wrappers.

mod breaker;
mod cache;
mod proxy;
mod retry;
mod server;
mod timeout;

pub use breaker::{Breaker, BreakerConfig, BreakerState};
pub use cache::{Cache, CacheConfig, CacheMode};
pub use proxy::Proxy;
pub use retry::{Retry, RetryConfig};
pub use server::{LoadCurve, Server, ServerConfig};
pub use timeout::{Timeout, TimeoutConfig};
