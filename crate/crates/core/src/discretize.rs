//! Euler and RK2 one-step maps, their Jacobians, and consistency of those
//! Jacobians with the continuous-time linearization.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, TransferError};
use crate::linalg::spectral_norm;
use crate::model::expr::Scalar;
use crate::model::grid::{GridPoint, GridSpec};
use crate::model::system::{PointEval, SystemSpec};
use crate::sweep;

/// Default `delta0` for RK2, giving `tau0 = 2 * delta0 = 1`.
pub const DEFAULT_DELTA0: f64 = 0.5;

/// Rounding allowance of the defect comparison, relative to `max(1, L_f)`:
/// Euler defects are zero in exact arithmetic but not in floating point.
pub const DEFECT_ROUNDING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeId {
    Euler,
    Rk2,
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeId::Euler => "euler",
            SchemeId::Rk2 => "rk2",
        })
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(SchemeId::Euler),
            "rk2" => Ok(SchemeId::Rk2),
            other => Err(format!("unknown scheme `{other}` (expected euler or rk2)")),
        }
    }
}

fn check_tau(tau: f64) -> Result<(), EvalError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(EvalError::NonPositiveStep(tau))
    }
}

/// One step of `scheme` over any scalar type; `args` is the flat
/// `(x, u, d)` vector and the result is the successor state.
pub fn step_generic<S: Scalar>(
    sys: &SystemSpec,
    scheme: SchemeId,
    args: &[S],
    tau: f64,
) -> Result<Vec<S>, EvalError> {
    let n = sys.n();
    let t = S::constant(tau);
    let f = sys.eval_f_generic(args)?;
    let slope = match scheme {
        SchemeId::Euler => f,
        SchemeId::Rk2 => {
            let half = S::constant(0.5 * tau);
            let mut mid = args.to_vec();
            for i in 0..n {
                mid[i] = args[i].add(&half.mul(&f[i]));
            }
            sys.eval_f_generic(&mid)?
        }
    };
    Ok((0..n).map(|i| args[i].add(&t.mul(&slope[i]))).collect())
}

fn flat(x: &[f64], u: &[f64], d: &[f64]) -> Vec<f64> {
    x.iter().chain(u).chain(d).copied().collect()
}

/// `x + tau f(x,u,d)`.
pub fn euler_step(
    sys: &SystemSpec,
    x: &[f64],
    u: &[f64],
    d: &[f64],
    tau: f64,
) -> Result<DVector<f64>, EvalError> {
    step(sys, SchemeId::Euler, x, u, d, tau)
}

/// `x + tau f(x + tau/2 f(x,u,d), u, d)`.
pub fn rk2_step(
    sys: &SystemSpec,
    x: &[f64],
    u: &[f64],
    d: &[f64],
    tau: f64,
) -> Result<DVector<f64>, EvalError> {
    step(sys, SchemeId::Rk2, x, u, d, tau)
}

pub fn step(
    sys: &SystemSpec,
    scheme: SchemeId,
    x: &[f64],
    u: &[f64],
    d: &[f64],
    tau: f64,
) -> Result<DVector<f64>, EvalError> {
    check_tau(tau)?;
    sys.eval_f(x, u, d)?; // arity check
    Ok(DVector::from_vec(step_generic(
        sys,
        scheme,
        &flat(x, u, d),
        tau,
    )?))
}

/// Jacobians of a one-step map, with the state block stored as its
/// increment `A~ - I` so that defect computations avoid cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepJacobians {
    pub delta_a: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
}

impl StepJacobians {
    /// `A~ = I + delta_a`.
    pub fn a_tilde(&self) -> DMatrix<f64> {
        let n = self.delta_a.nrows();
        DMatrix::identity(n, n) + &self.delta_a
    }
}

/// Euler: `A~ = I + tau A`, `B~ = tau B`.
pub fn jacobians_euler(pe: &PointEval, tau: f64) -> StepJacobians {
    StepJacobians {
        delta_a: &pe.a * tau,
        b_tilde: &pe.b * tau,
    }
}

/// RK2 closed forms with `mid = x + tau/2 f(x,u,d)`:
/// `A~ = I + tau A(mid) (I + tau/2 A(x))`,
/// `B~ = tau (tau/2 A(mid) B(x) + B(mid))`.
pub fn jacobians_rk2(
    sys: &SystemSpec,
    x: &[f64],
    u: &[f64],
    d: &[f64],
    tau: f64,
) -> Result<StepJacobians, EvalError> {
    check_tau(tau)?;
    let (f, a, b) = sys.eval_f_jac(x, u, d)?;
    rk2_from_parts(sys, x, u, d, tau, &f, &a, &b)
}

#[allow(clippy::too_many_arguments)]
fn rk2_from_parts(
    sys: &SystemSpec,
    x: &[f64],
    u: &[f64],
    d: &[f64],
    tau: f64,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<StepJacobians, EvalError> {
    let n = x.len();
    let half = 0.5 * tau;
    let mid: Vec<f64> = x.iter().zip(f.iter()).map(|(xi, fi)| xi + half * fi).collect();
    let (_, a_mid, b_mid) = sys.eval_f_jac(&mid, u, d)?;
    let inner = DMatrix::identity(n, n) + a * half;
    let delta_a = (&a_mid * inner) * tau;
    let b_tilde = ((&a_mid * b) * half + b_mid) * tau;
    Ok(StepJacobians { delta_a, b_tilde })
}

/// Scheme Jacobians at an already evaluated point.
pub fn scheme_jacobians(
    sys: &SystemSpec,
    scheme: SchemeId,
    pe: &PointEval,
    tau: f64,
) -> Result<StepJacobians, EvalError> {
    check_tau(tau)?;
    match scheme {
        SchemeId::Euler => Ok(jacobians_euler(pe, tau)),
        SchemeId::Rk2 => rk2_from_parts(sys, &pe.x, &pe.u, &pe.d, tau, &pe.f, &pe.a, &pe.b),
    }
}

fn defect_of(j: &StepJacobians, a: &DMatrix<f64>, b: &DMatrix<f64>, tau: f64) -> f64 {
    let da = &j.delta_a / tau - a;
    let db = &j.b_tilde / tau - b;
    spectral_norm(&da).max(spectral_norm(&db))
}

/// `max{ ||(A~ - I)/tau - A||_2, ||B~/tau - B||_2 }` at one point.
pub fn consistency_defect(
    sys: &SystemSpec,
    scheme: SchemeId,
    x: &[f64],
    u: &[f64],
    d: &[f64],
    tau: f64,
) -> Result<f64, EvalError> {
    check_tau(tau)?;
    let (f, a, b) = sys.eval_f_jac(x, u, d)?;
    let j = match scheme {
        SchemeId::Euler => StepJacobians {
            delta_a: &a * tau,
            b_tilde: &b * tau,
        },
        SchemeId::Rk2 => rk2_from_parts(sys, x, u, d, tau, &f, &a, &b)?,
    };
    Ok(defect_of(&j, &a, &b, tau))
}

/// `F_tau(x,u,d) - x - tau f(x,u,d)`.
pub fn residual_r(
    sys: &SystemSpec,
    scheme: SchemeId,
    x: &[f64],
    u: &[f64],
    d: &[f64],
    tau: f64,
) -> Result<DVector<f64>, EvalError> {
    check_tau(tau)?;
    let f = sys.eval_f(x, u, d)?;
    match scheme {
        SchemeId::Euler => Ok(DVector::zeros(x.len())),
        SchemeId::Rk2 => {
            let mid: Vec<f64> = x
                .iter()
                .zip(f.iter())
                .map(|(xi, fi)| xi + 0.5 * tau * fi)
                .collect();
            let f_mid = sys.eval_f(&mid, u, d)?;
            // algebraically F - x - tau f = tau (f(mid) - f(x))
            Ok((f_mid - f) * tau)
        }
    }
}

/// Consistency rate `rho` and horizon `tau0` for a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyBound {
    pub scheme: SchemeId,
    /// `None` means unbounded.
    pub tau0: Option<f64>,
    /// Slope of `sigma(s) = sigma_slope * s`, i.e. `L_df * c_f`.
    pub sigma_slope: f64,
    pub lf: f64,
}

impl ConsistencyBound {
    /// `rho(tau)`: zero for Euler, `sigma(tau/2) + tau/2 L_f^2` for RK2.
    pub fn rho(&self, tau: f64) -> f64 {
        match self.scheme {
            SchemeId::Euler => 0.0,
            SchemeId::Rk2 => self.sigma_slope * 0.5 * tau + 0.5 * tau * self.lf * self.lf,
        }
    }

    pub fn tau0_or_inf(&self) -> f64 {
        self.tau0.unwrap_or(f64::INFINITY)
    }
}

/// Build the consistency bound from the regularity constants.
pub fn consistency_bound(
    scheme: SchemeId,
    lf: f64,
    ldf: f64,
    cf: f64,
    delta0: f64,
) -> Result<ConsistencyBound, TransferError> {
    let bad = |what: &str, v: f64| {
        TransferError::InvalidConstants(format!("{what} must be non-negative and finite, got {v}"))
    };
    if !(lf >= 0.0 && lf.is_finite()) {
        return Err(bad("L_f", lf));
    }
    match scheme {
        SchemeId::Euler => Ok(ConsistencyBound {
            scheme,
            tau0: None,
            sigma_slope: 0.0,
            lf,
        }),
        SchemeId::Rk2 => {
            if !(ldf >= 0.0 && ldf.is_finite()) {
                return Err(bad("L_df", ldf));
            }
            if !(cf >= 0.0 && cf.is_finite()) {
                return Err(bad("c_f", cf));
            }
            if !(delta0 > 0.0 && delta0.is_finite()) {
                return Err(TransferError::InvalidConstants(format!(
                    "delta0 must be positive, got {delta0}"
                )));
            }
            Ok(ConsistencyBound {
                scheme,
                tau0: Some(2.0 * delta0),
                sigma_slope: ldf * cf,
                lf,
            })
        }
    }
}

/// Grid-wide comparison of measured defects against `rho(tau)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub scheme: SchemeId,
    pub tau: f64,
    pub max_defect: f64,
    pub rho_of_tau: f64,
    /// A point violates when its defect exceeds `rho_of_tau + tolerance`.
    pub tolerance: f64,
    pub bound_satisfied: bool,
    /// Whether `tau` lies in `(0, tau0]`, where the bound is claimed.
    pub within_tau0: bool,
    pub argmax_point: Option<GridPoint>,
    pub total_points: u64,
    pub violations: u64,
    pub domain_errors: u64,
    pub wall_time_s: f64,
}

/// Sweep the grid and compare each point's defect with `bound.rho(tau)`.
pub fn consistency_sweep(
    sys: &SystemSpec,
    g: &GridSpec,
    tau: f64,
    bound: &ConsistencyBound,
) -> Result<ConsistencyReport, EvalError> {
    check_tau(tau)?;
    let start = Instant::now();
    let scheme = bound.scheme;
    let rho = bound.rho(tau);
    let tolerance = DEFECT_ROUNDING_TOL * bound.lf.max(1.0);
    let defects = sweep::map_grid(g, |p| {
        consistency_defect(sys, scheme, &p.x, &p.u, &p.d, tau).ok()
    });
    let mut max_defect = 0.0f64;
    let mut argmax: Option<u64> = None;
    let mut violations = 0;
    let mut domain_errors = 0;
    for (i, d) in defects.iter().enumerate() {
        match d {
            None => domain_errors += 1,
            Some(v) => {
                if *v > rho + tolerance {
                    violations += 1;
                }
                if argmax.is_none() || *v > max_defect {
                    max_defect = *v;
                    argmax = Some(i as u64);
                }
            }
        }
    }
    Ok(ConsistencyReport {
        scheme,
        tau,
        max_defect,
        rho_of_tau: rho,
        tolerance,
        bound_satisfied: violations == 0 && domain_errors == 0,
        within_tau0: tau <= bound.tau0_or_inf(),
        argmax_point: argmax.map(|i| g.point(i)),
        total_points: g.total_points(),
        violations,
        domain_errors,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::builtin_model;
    use crate::model::expr::Dual;

    fn scalar() -> SystemSpec {
        builtin_model("scalar_linear").unwrap()
    }

    // Jacobians of the step map by pushing dual numbers through it.
    fn ad_step_jacobians(
        sys: &SystemSpec,
        scheme: SchemeId,
        x: &[f64],
        u: &[f64],
        d: &[f64],
        tau: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, q) = (sys.n(), sys.q());
        let args: Vec<Dual> = x
            .iter()
            .chain(u)
            .enumerate()
            .map(|(k, &v)| Dual::seed(v, k, n + q))
            .chain(d.iter().map(|&v| Dual::constant(v)))
            .collect();
        let out = step_generic(sys, scheme, &args, tau).unwrap();
        (
            DMatrix::from_fn(n, n, |i, j| out[i].d(j)),
            DMatrix::from_fn(n, q, |i, j| out[i].d(n + j)),
        )
    }

    #[test]
    fn zero_dynamics_fixed_point() {
        let sys = builtin_model("zero").unwrap();
        for scheme in [SchemeId::Euler, SchemeId::Rk2] {
            let next = step(&sys, scheme, &[0.7], &[0.2], &[], 0.3).unwrap();
            assert_eq!(next[0], 0.7);
        }
    }

    #[test]
    fn scalar_steps() {
        let sys = scalar();
        assert!((euler_step(&sys, &[1.0], &[0.0], &[], 0.1).unwrap()[0] - 0.9).abs() < 1e-15);
        assert!((rk2_step(&sys, &[1.0], &[0.0], &[], 0.1).unwrap()[0] - 0.905).abs() < 1e-15);
        for &(x, tau) in &[(1.0, 0.1), (-2.0, 0.05), (0.5, 0.3)] {
            let e = euler_step(&sys, &[x], &[0.0], &[], tau).unwrap()[0];
            let r = rk2_step(&sys, &[x], &[0.0], &[], tau).unwrap()[0];
            assert!(((r - e).abs() - tau * tau / 2.0 * x.abs()).abs() < 1e-14);
        }
    }

    #[test]
    fn reactor_euler_step() {
        let sys = builtin_model("reactor").unwrap();
        let (k1, k2) = (0.16, 0.0064);
        let (x1, x2) = (0.25, 0.3);
        let f1 = -2.0 * k1 * x1 * x1 + 2.0 * k2 * x2;
        let f2 = k1 * x1 * x1 - k2 * x2;
        let next = euler_step(&sys, &[x1, x2], &[0.0; 3], &[], 0.01).unwrap();
        assert!((next[0] - (x1 + 0.01 * f1)).abs() < 1e-15);
        assert!((next[1] - (x2 + 0.01 * f2)).abs() < 1e-15);
    }

    #[test]
    fn non_positive_tau_rejected() {
        let sys = scalar();
        assert!(matches!(
            euler_step(&sys, &[1.0], &[0.0], &[], 0.0),
            Err(EvalError::NonPositiveStep(_))
        ));
        assert!(jacobians_rk2(&sys, &[1.0], &[0.0], &[], -1.0).is_err());
    }

    #[test]
    fn scalar_jacobians() {
        let sys = scalar();
        let pe = sys.eval_point(&[0.3], &[0.1], &[]).unwrap();
        let e = jacobians_euler(&pe, 0.1);
        assert!((e.a_tilde()[(0, 0)] - 0.9).abs() < 1e-15);
        assert!((e.b_tilde[(0, 0)] - 0.1).abs() < 1e-15);
        let r = jacobians_rk2(&sys, &[0.3], &[0.1], &[], 0.1).unwrap();
        assert!((r.a_tilde()[(0, 0)] - 0.905).abs() < 1e-15);
        assert!((r.b_tilde[(0, 0)] - 0.095).abs() < 1e-15);
    }

    #[test]
    fn rk2_linear_is_stability_polynomial() {
        let sys = crate::model::parse::parse_model(
            "dims 2 1 0 1\nf1 = -x1 + 0.5*x2 + u1\nf2 = -0.3*x1 - 2*x2\nh1 = x1",
        )
        .unwrap();
        let tau = 0.2;
        let pe = sys.eval_point(&[0.1, 0.2], &[0.0], &[]).unwrap();
        let j = jacobians_rk2(&sys, &[0.1, 0.2], &[0.0], &[], tau).unwrap();
        let a = &pe.a;
        let expected = DMatrix::identity(2, 2) + a * tau + (a * a) * (tau * tau / 2.0);
        assert!((j.a_tilde() - expected).amax() < 1e-15);
    }

    #[test]
    fn closed_forms_match_ad_through_step() {
        let sys = builtin_model("reactor").unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        use rand::Rng;
        for _ in 0..100 {
            let x = [rng.gen_range(0.1..0.5), rng.gen_range(0.1..0.5)];
            let u = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
            let tau = rng.gen_range(0.001..0.5);
            for scheme in [SchemeId::Euler, SchemeId::Rk2] {
                let pe = sys.eval_point(&x, &u, &[]).unwrap();
                let j = scheme_jacobians(&sys, scheme, &pe, tau).unwrap();
                let (at, bt) = ad_step_jacobians(&sys, scheme, &x, &u, &[], tau);
                let scale = 1.0 + at.amax();
                assert!((j.a_tilde() - at).amax() <= 1e-12 * scale);
                assert!((&j.b_tilde - bt).amax() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn euler_defect_vanishes() {
        let sys = builtin_model("sine").unwrap();
        for &tau in &[1.0, 0.1, 0.01, 1e-4] {
            for &x in &[-3.0, 0.0, 1.7] {
                let dft = consistency_defect(&sys, SchemeId::Euler, &[x], &[], &[], tau).unwrap();
                assert!(dft <= 1e-14, "defect {dft} at tau {tau}");
            }
        }
    }

    #[test]
    fn rk2_scalar_defect_is_half_tau() {
        let sys = scalar();
        let dft = consistency_defect(&sys, SchemeId::Rk2, &[0.4], &[0.2], &[], 0.1).unwrap();
        assert!((dft - 0.05).abs() < 1e-14);
    }

    #[test]
    fn bounds() {
        let e = consistency_bound(SchemeId::Euler, 1.0, 0.0, 0.0, 0.5).unwrap();
        assert_eq!(e.rho(1.0), 0.0);
        assert_eq!(e.tau0, None);
        let r = consistency_bound(SchemeId::Rk2, 2f64.sqrt(), 0.0, 2.0, 0.5).unwrap();
        assert!((r.rho(0.3) - 0.3).abs() < 1e-15);
        let r = consistency_bound(SchemeId::Rk2, 1.0, 1.0, 2.0, 0.05).unwrap();
        assert!((r.tau0.unwrap() - 0.1).abs() < 1e-15);
        assert!((r.rho(0.1) - 0.15).abs() < 1e-15);
        assert!(consistency_bound(SchemeId::Rk2, 1.0, -1.0, 2.0, 0.05).is_err());
        assert!(consistency_bound(SchemeId::Rk2, 1.0, 1.0, 2.0, 0.0).is_err());
        assert!(consistency_bound(SchemeId::Euler, -1.0, 0.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn residuals() {
        let sys = scalar();
        let r = residual_r(&sys, SchemeId::Euler, &[1.0], &[0.3], &[], 0.1).unwrap();
        assert_eq!(r[0], 0.0);
        let r = residual_r(&sys, SchemeId::Rk2, &[1.0], &[0.0], &[], 0.1).unwrap();
        assert!((r[0] - 0.005).abs() < 1e-15);
    }

    #[test]
    fn rk2_residual_is_second_order() {
        let sys = crate::model::parse::parse_model(
            "dims 2 1 0 1\nf1 = -x1 + sin(x2) + u1\nf2 = -x2^3 + tanh(x1)\nh1 = x1",
        )
        .unwrap();
        let x = [0.4, -0.7];
        let u = [0.2];
        let mut tau = 0.1;
        for _ in 0..4 {
            let big = residual_r(&sys, SchemeId::Rk2, &x, &u, &[], tau).unwrap().norm();
            let small = residual_r(&sys, SchemeId::Rk2, &x, &u, &[], tau / 2.0).unwrap().norm();
            let ratio = big / small;
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio} at tau {tau}");
            tau /= 2.0;
        }
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("RK2".parse::<SchemeId>().unwrap(), SchemeId::Rk2);
        assert_eq!("euler".parse::<SchemeId>().unwrap(), SchemeId::Euler);
        assert!("rk4".parse::<SchemeId>().is_err());
        assert_eq!(serde_json::to_string(&SchemeId::Rk2).unwrap(), "\"rk2\"");
    }
}
