//! Pointwise assembly of the continuous- and discrete-time LMI matrices and
//! gridded verification.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cert::{is_nsd, Certificate, DtCertificate, SymMatrix};
use crate::discretize::{scheme_jacobians, SchemeId, StepJacobians};
use crate::error::{CertError, Error};
use crate::model::grid::{GridPoint, GridSpec};
use crate::model::system::{PointEval, SystemSpec};
use crate::sweep;

/// Aggregated verdicts of a gridded LMI check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    /// `"ct"` or `"dt"`.
    pub kind: &'static str,
    pub total_points: u64,
    pub violations: u64,
    pub worst_lambda_max: f64,
    /// Point attaining `worst_lambda_max`, lowest index on ties.
    pub argmax_point: Option<GridPoint>,
    pub lambda_max_min: f64,
    pub lambda_max_median: f64,
    pub lambda_max_max: f64,
    pub tolerance: f64,
    pub wall_time_s: f64,
    pub domain_errors: u64,
    pub first_domain_error: Option<String>,
    pub complete: bool,
    pub grid_spacing: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Set when the sampling period is not below the certificate's `tau1`.
    pub out_of_certificate: bool,
}

impl CheckReport {
    /// No violations and no evaluation failures.
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.complete
    }
}

fn dims_err(what: &str, got: (usize, usize), want: (usize, usize)) -> CertError {
    CertError::Dimension(format!(
        "{what} is {}x{}, expected {}x{}",
        got.0, got.1, want.0, want.1
    ))
}

fn expect_shape(what: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<(), CertError> {
    if m.shape() != (rows, cols) {
        return Err(dims_err(what, m.shape(), (rows, cols)));
    }
    Ok(())
}

fn blocks_to_sym(m11: &DMatrix<f64>, m21: &DMatrix<f64>, m22: &DMatrix<f64>) -> SymMatrix {
    let n = m11.nrows();
    let q = m22.nrows();
    SymMatrix::from_lower_fn(n + q, |i, j| {
        if i < n {
            m11[(i, j)]
        } else if j < n {
            m21[(i - n, j)]
        } else {
            m22[(i - n, j - n)]
        }
    })
}

/// Continuous-time LMI matrix
/// `[[PA + A'P + kP - C'RC, PB - C'RD], [B'P - D'RC, -D'RD - Q]]`.
pub fn assemble_ct_lmi(pe: &PointEval, c: &Certificate) -> Result<SymMatrix, CertError> {
    assemble_ct_blocks(&pe.a, &pe.b, &pe.c, &pe.dmat, &c.p, &c.q, &c.r, c.kappa)
}

/// [`assemble_ct_lmi`] on raw Jacobians and unvalidated `(P, Q, R, kappa)`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_ct_blocks(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    p: &SymMatrix,
    q: &SymMatrix,
    r: &SymMatrix,
    kappa: f64,
) -> Result<SymMatrix, CertError> {
    let (n, nq, np) = (p.dim(), q.dim(), r.dim());
    expect_shape("A", a, n, n)?;
    expect_shape("B", b, n, nq)?;
    expect_shape("C", c, np, n)?;
    expect_shape("D", d, np, nq)?;
    let pm = p.to_dmatrix();
    let rm = r.to_dmatrix();
    let s = &pm * a;
    let rc = &rm * c;
    let m11 = &s + s.transpose() + &pm * kappa - c.transpose() * &rc;
    // lower-left block B'P - D'RC
    let m21 = b.transpose() * &pm - d.transpose() * &rc;
    let m22 = -(d.transpose() * (&rm * d)) - q.to_dmatrix();
    Ok(blocks_to_sym(&m11, &m21, &m22))
}

/// Supply data of a discrete-time LMI, with no range checks; see
/// [`DtCertificate`] for the validated form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtParts {
    pub p: SymMatrix,
    pub qt: SymMatrix,
    pub rt: SymMatrix,
    pub eta: f64,
    pub tau: f64,
}

impl From<&DtCertificate> for DtParts {
    fn from(dc: &DtCertificate) -> Self {
        DtParts {
            p: dc.p.clone(),
            qt: dc.qt.clone(),
            rt: dc.rt.clone(),
            eta: dc.eta,
            tau: dc.tau,
        }
    }
}

/// Discrete-time LMI matrix from the increment `delta_a = A~ - I`:
/// `[[A~'PA~ - eta P - C'R~C, A~'PB~ - C'R~D], [., B~'PB~ - Q~ - D'R~D]]`.
///
/// `A~'PA~ - eta P` is expanded as
/// `(1 - eta) P + dA'P + P dA + dA'P dA`, which keeps the O(tau) margin
/// of small sampling periods out of cancellation.
#[allow(clippy::too_many_arguments)]
pub fn assemble_dt_blocks(
    delta_a: &DMatrix<f64>,
    b_tilde: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    p: &SymMatrix,
    qt: &SymMatrix,
    rt: &SymMatrix,
    eta: f64,
) -> Result<SymMatrix, CertError> {
    let n = p.dim();
    let q = qt.dim();
    let pout = rt.dim();
    expect_shape("A~ - I", delta_a, n, n)?;
    expect_shape("B~", b_tilde, n, q)?;
    expect_shape("C", c, pout, n)?;
    expect_shape("D", d, pout, q)?;
    let pm = p.to_dmatrix();
    let rm = rt.to_dmatrix();
    let s = &pm * delta_a;
    let rc = &rm * c;
    let m11 = &pm * (1.0 - eta) + &s + s.transpose() + delta_a.transpose() * &s
        - c.transpose() * &rc;
    // lower-left block B~'P A~ - D'R~C, with A~ = I + dA
    let bp = b_tilde.transpose() * &pm;
    let m21 = &bp + &bp * delta_a - d.transpose() * &rc;
    let m22 = &bp * b_tilde - qt.to_dmatrix() - d.transpose() * (&rm * d);
    Ok(blocks_to_sym(&m11, &m21, &m22))
}

/// Discrete-time LMI at a point given the scheme Jacobians.
pub fn assemble_dt_lmi(
    jac: &StepJacobians,
    pe: &PointEval,
    parts: &DtParts,
) -> Result<SymMatrix, CertError> {
    assemble_dt_blocks(
        &jac.delta_a,
        &jac.b_tilde,
        &pe.c,
        &pe.dmat,
        &parts.p,
        &parts.qt,
        &parts.rt,
        parts.eta,
    )
}

enum PointOutcome {
    Checked { lambda_max: f64, holds: bool },
    Domain(String),
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn aggregate(
    kind: &'static str,
    g: &GridSpec,
    outcomes: Vec<PointOutcome>,
    tol: f64,
    start: Instant,
) -> CheckReport {
    let mut violations = 0;
    let mut domain_errors = 0;
    let mut first_domain_error = None;
    let mut worst = f64::NEG_INFINITY;
    let mut argmax = None;
    let mut lmax = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            PointOutcome::Checked { lambda_max, holds } => {
                if !holds {
                    violations += 1;
                }
                if argmax.is_none() || lambda_max > worst {
                    worst = lambda_max;
                    argmax = Some(i as u64);
                }
                lmax.push(lambda_max);
            }
            PointOutcome::Domain(msg) => {
                domain_errors += 1;
                if first_domain_error.is_none() {
                    first_domain_error = Some(format!("point {i}: {msg}"));
                }
            }
        }
    }
    let lo = lmax.iter().copied().fold(f64::INFINITY, f64::min);
    CheckReport {
        kind,
        total_points: g.total_points(),
        violations,
        worst_lambda_max: worst,
        argmax_point: argmax.map(|i| g.point(i)),
        lambda_max_min: lo,
        lambda_max_median: median(lmax),
        lambda_max_max: worst,
        tolerance: tol,
        wall_time_s: start.elapsed().as_secs_f64(),
        domain_errors,
        first_domain_error,
        complete: domain_errors == 0,
        grid_spacing: g.spacing(),
        scheme: None,
        tau: None,
        out_of_certificate: false,
    }
}

fn check_dims_against(sys: &SystemSpec, g: &GridSpec) -> Result<(), Error> {
    if g.dims() != sys.dims() {
        return Err(Error::Invalid(format!(
            "grid has {} axes, model needs {}",
            g.axes().len(),
            sys.dims().coords()
        )));
    }
    Ok(())
}

/// Check the continuous-time LMI at every grid point.
pub fn check_ct_grid(
    sys: &SystemSpec,
    g: &GridSpec,
    c: &Certificate,
    tol: f64,
) -> Result<CheckReport, Error> {
    check_dims_against(sys, g)?;
    c.check_dims(sys.n(), sys.q(), sys.p())?;
    let start = Instant::now();
    let outcomes = sweep::map_grid(g, |pt| {
        let pe = match sys.eval_point(&pt.x, &pt.u, &pt.d) {
            Ok(pe) => pe,
            Err(e) => return Ok(PointOutcome::Domain(e.to_string())),
        };
        let m = assemble_ct_lmi(&pe, c)?;
        let v = is_nsd(&m, tol)?;
        Ok(PointOutcome::Checked {
            lambda_max: v.lambda_max(),
            holds: v.holds(),
        })
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, CertError>>()?;
    Ok(aggregate("ct", g, outcomes, tol, start))
}

/// Check the discrete-time LMI of `scheme` at every grid point.
///
/// `tau1`, when given, is only used to flag a sampling period outside the
/// range where the transferred certificate is guaranteed.
pub fn check_dt_parts(
    sys: &SystemSpec,
    scheme: SchemeId,
    g: &GridSpec,
    parts: &DtParts,
    tau1: Option<f64>,
    tol: f64,
) -> Result<CheckReport, Error> {
    check_dims_against(sys, g)?;
    if parts.p.dim() != sys.n() || parts.qt.dim() != sys.q() || parts.rt.dim() != sys.p() {
        return Err(CertError::Dimension(format!(
            "certificate blocks are {}/{}/{}, model has n={}, q={}, p={}",
            parts.p.dim(),
            parts.qt.dim(),
            parts.rt.dim(),
            sys.n(),
            sys.q(),
            sys.p()
        ))
        .into());
    }
    if !(parts.tau > 0.0 && parts.tau.is_finite()) {
        return Err(crate::error::EvalError::NonPositiveStep(parts.tau).into());
    }
    let start = Instant::now();
    let outcomes = sweep::map_grid(g, |pt| {
        let jac = sys
            .eval_point(&pt.x, &pt.u, &pt.d)
            .and_then(|pe| scheme_jacobians(sys, scheme, &pe, parts.tau).map(|j| (pe, j)));
        let (pe, jac) = match jac {
            Ok(v) => v,
            Err(e) => return Ok(PointOutcome::Domain(e.to_string())),
        };
        let m = assemble_dt_lmi(&jac, &pe, parts)?;
        let v = is_nsd(&m, tol)?;
        Ok(PointOutcome::Checked {
            lambda_max: v.lambda_max(),
            holds: v.holds(),
        })
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, CertError>>()?;
    let mut report = aggregate("dt", g, outcomes, tol, start);
    report.scheme = Some(scheme);
    report.tau = Some(parts.tau);
    report.out_of_certificate = tau1.is_some_and(|t1| !(parts.tau < t1));
    Ok(report)
}

/// [`check_dt_parts`] for a validated transferred certificate.
pub fn check_dt_grid(
    sys: &SystemSpec,
    scheme: SchemeId,
    g: &GridSpec,
    dc: &DtCertificate,
    tol: f64,
) -> Result<CheckReport, Error> {
    check_dt_parts(sys, scheme, g, &DtParts::from(dc), Some(dc.tau1), tol)
}
