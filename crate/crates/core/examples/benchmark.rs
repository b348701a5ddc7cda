//! Simulation benchmark on planted topologies.
//!
//! `cargo run --release --example benchmark -- [community|stars] [replicates]`

use std::time::Instant;

use osbm::eval::{run_benchmark, BenchmarkConfig, Topology};
use osbm::FitConfig;

fn main() -> osbm::Result<()> {
    let mut args = std::env::args().skip(1);
    let topology: Topology = args.next().as_deref().unwrap_or("community").parse()?;
    let replicates = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let cfg = BenchmarkConfig {
        topology,
        replicates,
        ..Default::default()
    };
    let start = Instant::now();
    let report = run_benchmark(&cfg, &FitConfig::default())?;
    print!("{}", report.to_table());
    for o in &report.outcomes {
        println!(
            "replicate {:>3}: d = {:>6}  single = {:>6}  iterations = {:>3}  converged = {}",
            o.replicate, o.d, o.d_single_membership, o.iterations, o.converged
        );
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
