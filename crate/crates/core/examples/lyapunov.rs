//! Sample the dissipation inequality of a transferred certificate.

use iioss::builtins::{builtin_model, default_grid};
use iioss::cert::Certificate;
use iioss::discretize::{consistency_bound, SchemeId};
use iioss::lmi::DtParts;
use iioss::transfer::{check_lyapunov_sampled, dt_certificate, tau1, TransferInput};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = builtin_model("scalar_linear")?;
    let grid = default_grid(&sys, "scalar_linear", 21)?;
    let cert = Certificate::scalar(1.0, 1.0, 1.0, 1.0)?;
    let bound = consistency_bound(SchemeId::Euler, 2f64.sqrt(), 0.0, 0.0, 0.5)?;
    let ti = TransferInput::new(cert, bound)?;
    let tau = 0.5 * tau1(&ti).tau1;
    let dc = dt_certificate(&ti, tau)?;
    let r = check_lyapunov_sampled(&sys, SchemeId::Euler, &DtParts::from(&dc), &grid, 10_000, 42, 1e-9)?;
    println!(
        "tau = {tau:.4}: {} / {} violations, worst slack {:.4e}, median slack {:.4e}",
        r.violations, r.total_samples, r.worst_slack, r.slack_median
    );
    Ok(())
}
