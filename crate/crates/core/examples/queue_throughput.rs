//! Measures queue throughput for 64³ patches drawn from augmented 128³
//! volumes, with one worker and with several.
//!
//! cargo run --release --example queue_throughput -- [workers] [subjects]

use voxaug::throughput::{measure, ThroughputConfig};

fn main() -> voxaug::Result<()> {
    let mut args = std::env::args().skip(1);
    let workers: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(4);
    let subjects: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(8);
    let config = ThroughputConfig {
        subjects,
        ..ThroughputConfig::default()
    };
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    println!("{cores} cores available");
    let base = measure(&config, 1)?;
    println!(
        "1 worker: {} patches in {:.2?} ({:.2} patches/s)",
        base.patches,
        base.elapsed,
        base.patches_per_second()
    );
    if workers > 1 {
        let many = measure(&config, workers)?;
        println!(
            "{workers} workers: {} patches in {:.2?} ({:.2} patches/s), speedup {:.2}x",
            many.patches,
            many.elapsed,
            many.patches_per_second(),
            many.patches_per_second() / base.patches_per_second()
        );
    }
    Ok(())
}
