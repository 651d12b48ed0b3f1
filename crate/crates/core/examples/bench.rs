//! Time the continuous-time and RK2 linearization sweeps of the reactor.
//!
//! cargo run --release --example bench -- 100

use iioss::bench::{run_bench, BenchConfig};
use iioss::builtins::{builtin_model, default_grid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let points: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let sys = builtin_model("reactor")?;
    let grid = default_grid(&sys, "reactor", 2)?;
    let cfg = BenchConfig { points, ..BenchConfig::default() };
    let r = run_bench(&sys, &grid, &cfg)?;
    println!("CT  over {:?}: {} points, median {:.3e} s", r.ct.coordinates, r.ct.points, r.ct.median_s);
    println!("RK2 over {:?}: {} points, median {:.3e} s", r.adt.coordinates, r.adt.points, r.adt.median_s);
    println!("ratio {:.1}", r.ratio);
    Ok(())
}
