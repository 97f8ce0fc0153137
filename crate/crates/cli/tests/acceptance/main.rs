//! Acceptance suite: one PASS/FAIL line per criterion, with its time limit
//! enforced. Pass a substring to run matching criteria only.

mod criteria;
mod fixtures;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use criteria::Outcome;

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        name: "intention values match the linear-system oracle",
        limit: secs(10),
        run: criteria::intention_oracle,
    },
    Criterion {
        name: "geometric loop converges to one",
        limit: secs(1),
        run: criteria::geometric_loop,
    },
    Criterion {
        name: "entropy identity and normalization",
        limit: secs(60),
        run: criteria::entropy_identity,
    },
    Criterion {
        name: "traffic-light action entropy blind spot",
        limit: secs(30),
        run: criteria::traffic_light_entropy,
    },
    Criterion {
        name: "traffic-light surrogate reward gap",
        limit: secs(60),
        run: criteria::traffic_light_reward,
    },
    Criterion {
        name: "desire and intention metrics",
        limit: secs(30),
        run: criteria::desire_and_intention_metrics,
    },
    Criterion {
        name: "query-suite coherence",
        limit: secs(120),
        run: criteria::query_coherence,
    },
    Criterion {
        name: "revision regions",
        limit: secs(1),
        run: criteria::revision_regions,
    },
    Criterion {
        name: "end-to-end pipeline",
        limit: secs(300),
        run: criteria::end_to_end,
    },
];

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| Err(panic_message(p)));
        let elapsed = started.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed > c.limit {
                Err(format!("took {elapsed:.2?}, limit {:?} ({detail})", c.limit))
            } else {
                Ok(detail)
            }
        });
        match outcome {
            Ok(detail) => println!("PASS {} [{elapsed:.2?}] {detail}", c.name),
            Err(reason) => {
                failed += 1;
                println!("FAIL {} [{elapsed:.2?}] {reason}", c.name);
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
