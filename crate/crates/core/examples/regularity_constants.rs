//! Grid estimates of L_f, c_f and L_df for a builtin model.
//!
//! cargo run --release --example regularity_constants -- reactor 20

use iioss::builtins::{builtin_model, default_grid};
use iioss::model::{estimate_cf, estimate_ldf, estimate_lf};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "reactor".into());
    let points: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);

    let sys = builtin_model(&name)?;
    let grid = default_grid(&sys, &name, points)?;
    println!("{name} on {} grid points", grid.total_points());
    println!("L_f  = {:.6}", estimate_lf(&sys, &grid)?);
    println!("c_f  = {:.6}", estimate_cf(&sys, &grid)?);
    println!("L_df = {:.6} (sampled, 2000 pairs, seed 0)", estimate_ldf(&sys, &grid, 2000, 0)?);
    Ok(())
}
