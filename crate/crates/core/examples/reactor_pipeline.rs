//! Synthesize a reactor certificate, pick the one allowing the largest
//! sampling period under RK2, and transfer it at tau1 / 2.
//!
//! cargo run --release --example reactor_pipeline

use iioss::builtins::{builtin_model, default_grid};
use iioss::discretize::SchemeId;
use iioss::synth::{synthesize_certificate, SynthOptions};
use iioss::transfer::{best_for_transfer, consistency_bound_for, run_transfer, TransferConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = builtin_model("reactor")?;
    let grid = default_grid(&sys, "reactor", 10)?;
    let synth = synthesize_certificate(&sys, &grid, &SynthOptions::default())?;
    if !synth.feasible {
        println!("{}", synth.note);
        return Ok(());
    }
    let cfg = TransferConfig { scheme: SchemeId::Rk2, ..TransferConfig::default() };
    let (bound, _) = consistency_bound_for(&sys, &grid, &cfg)?;
    let certs = synth.feasible_kappas.iter().map(|f| &f.certificate);
    let (k, t1) = best_for_transfer(certs, &bound).ok_or("no certificate admits a transfer")?;
    let cert = &synth.feasible_kappas[k].certificate;
    println!("kappa = {:.4e}, tau1 = {:.4e} ({})", cert.kappa, t1.tau1, t1.binding_constraint);

    let r = run_transfer(&sys, &grid, cert, &cfg)?;
    let dt = r.dt_check.as_ref().expect("tau is below tau1");
    let ly = r.lyapunov.as_ref().expect("tau is below tau1");
    println!("tau = {:.4e}: DT violations {} / {}", r.tau, dt.violations, dt.total_points);
    println!("Lyapunov samples: {} violations, worst slack {:.3e}", ly.violations, ly.worst_slack);
    println!("certified: {}", r.certified);
    Ok(())
}
