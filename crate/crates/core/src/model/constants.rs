//! Grid estimates of the regularity constants `L_f`, `c_f` and `L_df`.
//!
//! `L_f` and `c_f` are maxima over the grid samples. `L_df` has no closed
//! procedure, so it is estimated from random point pairs in the box and
//! inflated by [`LDF_SAFETY_FACTOR`]; the estimate is a lower bound on the
//! true constant before inflation and carries no formal guarantee.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::EvalError;
use crate::linalg::{hcat, spectral_norm, vec_norm};
use crate::model::grid::GridSpec;
use crate::model::system::SystemSpec;
use crate::sweep;

pub const LDF_SAFETY_FACTOR: f64 = 1.1;

const MIN_PAIR_DISTANCE: f64 = 1e-12;
const MAX_RESAMPLES: usize = 64;

fn first_error_max(vals: Vec<Result<f64, EvalError>>) -> Result<f64, EvalError> {
    let mut best = 0.0f64;
    for v in vals {
        best = best.max(v?);
    }
    Ok(best)
}

/// `max ||[A B]||_2` over the grid.
pub fn estimate_lf(sys: &SystemSpec, g: &GridSpec) -> Result<f64, EvalError> {
    let vals = sweep::map_grid(g, |p| {
        let (_, a, b) = sys.eval_f_jac(&p.x, &p.u, &p.d)?;
        Ok(spectral_norm(&hcat(&a, &b)))
    });
    first_error_max(vals)
}

/// `max ||f||_2` over the grid.
pub fn estimate_cf(sys: &SystemSpec, g: &GridSpec) -> Result<f64, EvalError> {
    let vals = sweep::map_grid(g, |p| Ok(sys.eval_f(&p.x, &p.u, &p.d)?.norm()));
    first_error_max(vals)
}

fn ab_at(sys: &SystemSpec, g: &GridSpec, z: &[f64]) -> Result<nalgebra::DMatrix<f64>, EvalError> {
    let (x, u, d) = g.split(z);
    let (_, a, b) = sys.eval_f_jac(&x, &u, &d)?;
    Ok(hcat(&a, &b))
}

fn draw_pair(g: &GridSpec, pair: u64, rng: &mut ChaCha8Rng) -> Option<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = g.bounds();
    let wide: Vec<usize> = (0..lo.len()).filter(|&i| hi[i] > lo[i]).collect();
    if wide.is_empty() {
        return None;
    }
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        lo.iter()
            .zip(&hi)
            .map(|(&l, &h)| if h > l { rng.gen_range(l..=h) } else { l })
            .collect()
    };
    for _ in 0..MAX_RESAMPLES {
        let z = sample(rng);
        let zt = if pair % 2 == 1 {
            // axis-aligned pair: isolates the slope along one coordinate
            let axis = wide[((pair / 2) as usize) % wide.len()];
            let mut zt = z.clone();
            zt[axis] = rng.gen_range(lo[axis]..=hi[axis]);
            zt
        } else {
            sample(rng)
        };
        let dist: Vec<f64> = z.iter().zip(&zt).map(|(a, b)| a - b).collect();
        if vec_norm(&dist) >= MIN_PAIR_DISTANCE {
            return Some((z, zt));
        }
    }
    None
}

/// Sampled Lipschitz constant of `[A B]` over the box, times
/// [`LDF_SAFETY_FACTOR`].
///
/// Pair `k` is drawn from a generator seeded with `seed + k`; odd pairs differ
/// in a single coordinate, even pairs are independent uniform draws.
pub fn estimate_ldf(
    sys: &SystemSpec,
    g: &GridSpec,
    n_pairs: u64,
    seed: u64,
) -> Result<f64, EvalError> {
    let vals = sweep::map_indices(n_pairs.max(1), |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
        let Some((z, zt)) = draw_pair(g, k, &mut rng) else {
            return Ok(0.0);
        };
        let diff = ab_at(sys, g, &z)? - ab_at(sys, g, &zt)?;
        let dz: Vec<f64> = z.iter().zip(&zt).map(|(a, b)| a - b).collect();
        Ok(spectral_norm(&diff) / vec_norm(&dz))
    });
    Ok(first_error_max(vals)? * LDF_SAFETY_FACTOR)
}
