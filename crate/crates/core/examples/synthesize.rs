//! Search for a continuous-time certificate of a builtin model on its
//! default box and print the per-factor search log.
//!
//! cargo run --release --example synthesize -- reactor 10

use iioss::builtins::{builtin_model, default_grid};
use iioss::synth::{synthesize_certificate, SynthOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "reactor".into());
    let points: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);

    let sys = builtin_model(&name)?;
    let grid = default_grid(&sys, &name, points)?;
    let report = synthesize_certificate(&sys, &grid, &SynthOptions::default())?;

    println!("{name}: {} grid points, {} distinct Jacobians", grid.total_points(), report.distinct_points);
    for entry in &report.synth_log {
        println!(
            "  kappa {:>10.4e}  iterations {:>5}  best phi {:>12.4e}  verified {:?}",
            entry.kappa, entry.iterations, entry.best_phi, entry.verified
        );
    }
    match &report.certificate {
        Some(cert) => println!("certificate:\n{}", cert.to_json()),
        None => println!("{}", report.note),
    }
    Ok(())
}
