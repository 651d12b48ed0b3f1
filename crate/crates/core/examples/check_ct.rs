//! Check a hand-written continuous-time certificate on a grid.

use iioss::builtins::{builtin_model, default_grid};
use iioss::cert::{Certificate, DEFAULT_NSD_TOL};
use iioss::lmi::check_ct_grid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = builtin_model("scalar_linear")?;
    let grid = default_grid(&sys, "scalar_linear", 11)?;
    for kappa in [1.0, 2.0, 10.0] {
        let cert = Certificate::scalar(1.0, 1.0, 1.0, kappa)?;
        let r = check_ct_grid(&sys, &grid, &cert, DEFAULT_NSD_TOL)?;
        println!(
            "kappa = {kappa:>4}: {} / {} violations, worst lambda_max {:+.6}",
            r.violations, r.total_points, r.worst_lambda_max
        );
    }
    Ok(())
}
