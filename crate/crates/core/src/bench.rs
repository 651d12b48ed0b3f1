//! Timing of continuous-time versus RK2 linearization sweeps.
//!
//! The continuous-time Jacobians of a model only vary along the coordinates
//! that appear nonlinearly in `f`; the RK2 Jacobians additionally vary along
//! every coordinate feeding those through the midpoint `x + tau/2 f`. Each
//! sweep grids just its own coordinates, which is where most of the gap
//! between the two comes from.

use std::collections::BTreeSet;
use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;

use crate::discretize::jacobians_rk2;
use crate::error::Error;
use crate::model::expr::{Var, VarKind};
use crate::model::grid::{Axis, GridSpec};
use crate::model::system::SystemSpec;

/// Smallest denominator used for the time ratio.
pub const MIN_DENOMINATOR_S: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchConfig {
    pub points: usize,
    pub tau: f64,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            points: 100,
            tau: 0.1,
            repeats: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTiming {
    pub coordinates: Vec<String>,
    pub points: u64,
    pub times_s: Vec<f64>,
    pub median_s: f64,
    /// `(max - min) / median` over the repeats.
    pub relative_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub model: String,
    pub tau: f64,
    pub points_per_direction: usize,
    pub repeats: usize,
    pub ct: SweepTiming,
    pub adt: SweepTiming,
    /// `adt.median_s / max(ct.median_s, 1 ns)`.
    pub ratio: f64,
    pub ct_faster: bool,
}

/// Coordinates on which the RK2 Jacobians can vary.
pub fn adt_dependencies(sys: &SystemSpec) -> BTreeSet<Var> {
    let ct = sys.ct_jacobian_dependencies();
    let mut out = ct.clone();
    for v in &ct {
        if v.kind == VarKind::State {
            out.extend(sys.dynamics()[v.index].variables());
        }
    }
    out
}

fn reduced_grid(
    sys: &SystemSpec,
    full: &GridSpec,
    deps: &BTreeSet<Var>,
    points: usize,
) -> Result<GridSpec, Error> {
    let d = sys.dims();
    let axes = full
        .axes()
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let var = if k < d.n {
                Var::x(k)
            } else if k < d.n + d.q {
                Var::u(k - d.n)
            } else {
                Var::d(k - d.n - d.q)
            };
            let count = if deps.contains(&var) { points } else { 1 };
            Axis::new(a.lo, a.hi, count)
        })
        .collect();
    Ok(GridSpec::new(d, axes)?)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

fn timing(coords: &BTreeSet<Var>, points: u64, times: Vec<f64>) -> SweepTiming {
    let med = median(&times);
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(0.0f64, f64::max);
    SweepTiming {
        coordinates: coords.iter().map(|v| v.to_string()).collect(),
        points,
        times_s: times,
        median_s: med,
        relative_spread: (hi - lo) / med.max(MIN_DENOMINATOR_S),
    }
}

/// Time both linearization sweeps, single-threaded, `cfg.repeats` times
/// each; `box_grid` only supplies the bounds.
pub fn run_bench(sys: &SystemSpec, box_grid: &GridSpec, cfg: &BenchConfig) -> Result<BenchReport, Error> {
    if cfg.points == 0 || cfg.repeats == 0 {
        return Err(Error::Invalid("points and repeats must be positive".into()));
    }
    if !(cfg.tau > 0.0) {
        return Err(Error::Invalid(format!("tau must be positive, got {}", cfg.tau)));
    }
    let ct_deps = sys.ct_jacobian_dependencies();
    let adt_deps = adt_dependencies(sys);
    let ct_grid = reduced_grid(sys, box_grid, &ct_deps, cfg.points)?;
    let adt_grid = reduced_grid(sys, box_grid, &adt_deps, cfg.points)?;

    let mut ct_times = Vec::with_capacity(cfg.repeats);
    let mut adt_times = Vec::with_capacity(cfg.repeats);
    for _ in 0..cfg.repeats {
        let start = Instant::now();
        let mut acc = 0.0;
        for p in ct_grid.points() {
            let (_, a, b) = sys.eval_f_jac(&p.x, &p.u, &p.d)?;
            acc += a[(0, 0)] + b.sum();
        }
        black_box(acc);
        ct_times.push(start.elapsed().as_secs_f64());

        let start = Instant::now();
        let mut acc = 0.0;
        for p in adt_grid.points() {
            let j = jacobians_rk2(sys, &p.x, &p.u, &p.d, cfg.tau)?;
            acc += j.delta_a[(0, 0)] + j.b_tilde.sum();
        }
        black_box(acc);
        adt_times.push(start.elapsed().as_secs_f64());
    }
    let ct = timing(&ct_deps, ct_grid.total_points(), ct_times);
    let adt = timing(&adt_deps, adt_grid.total_points(), adt_times);
    let ratio = adt.median_s / ct.median_s.max(MIN_DENOMINATOR_S);
    Ok(BenchReport {
        model: sys.name().to_string(),
        tau: cfg.tau,
        points_per_direction: cfg.points,
        repeats: cfg.repeats,
        ct_faster: ct.median_s < adt.median_s,
        ct,
        adt,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{builtin_model, default_grid};

    #[test]
    fn reactor_dependencies() {
        let sys = builtin_model("reactor").unwrap();
        let ct: Vec<String> = sys.ct_jacobian_dependencies().iter().map(|v| v.to_string()).collect();
        assert_eq!(ct, ["x1"]);
        let adt: Vec<String> = adt_dependencies(&sys).iter().map(|v| v.to_string()).collect();
        assert_eq!(adt, ["x1", "x2", "u1"]);
    }

    #[test]
    fn single_point_grid_has_finite_ratio() {
        let sys = builtin_model("reactor").unwrap();
        let g = default_grid(&sys, "reactor", 2).unwrap();
        let cfg = BenchConfig {
            points: 1,
            tau: 0.1,
            repeats: 5,
        };
        let r = run_bench(&sys, &g, &cfg).unwrap();
        assert_eq!(r.ct.points, 1);
        assert_eq!(r.adt.points, 1);
        assert!(r.ratio.is_finite());
        assert_eq!(r.ct.times_s.len(), 5);
    }

    #[test]
    fn small_bench_counts_points() {
        let sys = builtin_model("reactor").unwrap();
        let g = default_grid(&sys, "reactor", 2).unwrap();
        let cfg = BenchConfig {
            points: 10,
            tau: 0.1,
            repeats: 1,
        };
        let r = run_bench(&sys, &g, &cfg).unwrap();
        assert_eq!(r.ct.points, 10);
        assert_eq!(r.adt.points, 1000);
    }
}
