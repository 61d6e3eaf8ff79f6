//! Manual calibration runs: prints the four bundled variants side by side.
//! Run with: cargo test --release -p stagesim --test calibrate -- --ignored --nocapture

use stagesim::clock::Clock;
use stagesim::metrics::{poll_queue_depth, summarize, Metrics, SummaryReport};
use stagesim::models::{build, IncidentConfig, Variant, SERVICE};
use stagesim::scenario;

fn run_variant(variant: Variant, seed: u64, events: u64) -> (SummaryReport, f64) {
    let clock = Clock::new();
    let metrics = Metrics::new();
    let config = IncidentConfig::default();
    let model = build(variant, &config, seed, &clock, &metrics);
    let mut scenario_cfg = model.scenario.clone();
    scenario_cfg.total_events = events;
    scenario_cfg.max_ticks = Some(5_000_000);
    let poll = poll_queue_depth(&clock, &metrics, &model.entry, 1);
    let started = std::time::Instant::now();
    let run = scenario::run(&clock, &model.entry, &scenario_cfg).expect("run completes");
    poll.cancel();
    let elapsed = started.elapsed().as_secs_f64();
    let store = metrics.store();
    let q1000 = store
        .sample_at(&stagesim::metrics::queue_depth_series(SERVICE), 1000)
        .unwrap_or(-1.0);
    let report = summarize(&store, &run).expect("drained");
    println!(
        "variant={:?} q@1000={} wall={:.1}s drain={} last_arrival={}",
        variant, q1000, elapsed, run.drain_tick, run.last_arrival_tick
    );
    (report, q1000)
}

#[test]
#[ignore]
fn calibrate_seed_sweep() {
    for seed in [2, 3, 17, 99] {
        println!("== seed {seed}");
        for variant in [Variant::BoundedQueue, Variant::WorkerLimit] {
            let (r, _) = run_variant(variant, seed, 50_000);
            println!(
                "  {:?}: reject={:.4} avail={:.4} fail={:.6} recovery={}",
                variant, r.rejection_rate, r.availability, r.fail_rate, r.recovery_time
            );
        }
    }
}

#[test]
#[ignore]
fn calibrate_bundled_models() {
    for variant in Variant::ALL {
        let (r, q1000) = run_variant(variant, 1, 50_000);
        println!(
            "{:?}: reject={:.4} avail={:.4} fail={:.4} maxq={} wait={:.0}/{:.0}/{:.0} tput={:.5} recovery={} q@1000={}",
            variant,
            r.rejection_rate,
            r.availability,
            r.fail_rate,
            r.max_queue_size,
            r.mean_queue_wait,
            r.mean_queue_wait_success,
            r.mean_queue_wait_fail,
            r.throughput,
            r.recovery_time,
            q1000,
        );
    }
}
