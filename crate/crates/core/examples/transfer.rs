//! Transfer a continuous-time certificate to Euler and check the result.

use iioss::builtins::{builtin_model, default_grid};
use iioss::cert::Certificate;
use iioss::discretize::SchemeId;
use iioss::transfer::{run_transfer, TransferConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = builtin_model("scalar_linear")?;
    let grid = default_grid(&sys, "scalar_linear", 21)?;
    let cert = Certificate::scalar(1.0, 1.0, 1.0, 1.0)?;
    for tau in [0.1, 0.25, 0.45, 0.55] {
        let cfg = TransferConfig {
            scheme: SchemeId::Euler,
            tau: Some(tau),
            lyap_samples: 1000,
            ..TransferConfig::default()
        };
        let r = run_transfer(&sys, &grid, &cert, &cfg)?;
        match (&r.dt_certificate, &r.rejection) {
            (Some(dc), _) => println!(
                "tau {tau}: tau1 = {:.6} ({}), eta = {:.4}, Qt = {:.4}, certified {}",
                r.tau1,
                r.binding_constraint,
                dc.eta,
                dc.qt.get(0, 0),
                r.certified
            ),
            (None, Some(why)) => println!("tau {tau}: {why}"),
            (None, None) => unreachable!(),
        }
    }
    Ok(())
}
