//! Measured Jacobian defects of Euler and RK2 against the bound rho(tau).
//!
//! cargo run --release --example consistency -- 10

use iioss::builtins::{builtin_model, default_grid};
use iioss::discretize::{consistency_sweep, SchemeId};
use iioss::transfer::{consistency_bound_for, TransferConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let points: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let sys = builtin_model("reactor")?;
    let grid = default_grid(&sys, "reactor", points)?;
    for scheme in [SchemeId::Euler, SchemeId::Rk2] {
        let cfg = TransferConfig { scheme, ..TransferConfig::default() };
        let (bound, constants) = consistency_bound_for(&sys, &grid, &cfg)?;
        println!("{scheme}: L_f = {:.4}, sigma slope = {:.4}", constants.lf, constants.sigma_slope);
        for tau in [0.5, 0.1, 0.01, 0.001] {
            let r = consistency_sweep(&sys, &grid, tau, &bound)?;
            println!(
                "  tau {tau:<6} max defect {:.3e}  rho {:.3e}  holds {}",
                r.max_defect, r.rho_of_tau, r.bound_satisfied
            );
        }
    }
    Ok(())
}
