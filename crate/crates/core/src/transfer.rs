//! Transfer of a continuous-time certificate to the Euler/RK2 discretized
//! models: `alpha(tau)`, `tau1`, `Q~(tau)`, `R~(tau)`, `eta(tau)`, and a
//! sampled check of the resulting incremental Lyapunov inequality.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cert::{eig_extents, weighted_norm_sq, Certificate, DtCertificate, Provenance, SymMatrix};
use crate::discretize::{self, ConsistencyBound, SchemeId};
use crate::error::{CertError, Error, TransferError};
use crate::lmi::DtParts;
use crate::model::grid::GridSpec;
use crate::model::system::SystemSpec;
use crate::sweep;

/// Relative width at which the `alpha^{-1}` bisection stops.
const BISECTION_RTOL: f64 = 1e-13;
const BISECTION_MAX_ITERS: usize = 400;
/// Largest sampling period the bracket search will consider.
const BRACKET_CAP: f64 = 1e12;

pub const BINDING_KAPPA: &str = "1/kappa";
pub const BINDING_TAU0: &str = "tau0";
pub const BINDING_ALPHA: &str = "alpha_inv";

/// A certificate paired with the consistency data of a scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferInput {
    pub cert: Certificate,
    pub bound: ConsistencyBound,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
}

impl TransferInput {
    pub fn new(cert: Certificate, bound: ConsistencyBound) -> Result<Self, TransferError> {
        if !(bound.lf >= 0.0 && bound.lf.is_finite()) {
            return Err(TransferError::InvalidConstants(format!(
                "L_f must be non-negative, got {}",
                bound.lf
            )));
        }
        let (lambda_min_p, lambda_max_p) = eig_extents(&cert.p)?;
        Ok(TransferInput {
            cert,
            bound,
            lambda_min_p,
            lambda_max_p,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.cert.kappa
    }

    fn condition_number(&self) -> f64 {
        self.lambda_max_p / self.lambda_min_p
    }

    /// True when `alpha` vanishes identically.
    pub fn alpha_is_zero(&self) -> bool {
        self.bound.lf == 0.0 && self.bound.rho(1.0) == 0.0
    }
}

/// `alpha(tau) = (lmax(P)/lmin(P)) (4 rho (1 + tau L_f + tau rho) + tau L_f^2)`.
pub fn alpha(tau: f64, ti: &TransferInput) -> f64 {
    let rho = ti.bound.rho(tau);
    let lf = ti.bound.lf;
    ti.condition_number() * (4.0 * rho * (1.0 + tau * lf + tau * rho) + tau * lf * lf)
}

/// The bound `tau1` together with the constraint attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tau1 {
    pub tau1: f64,
    pub binding_constraint: &'static str,
    pub inv_kappa: f64,
    /// `None` when unbounded.
    pub tau0: Option<f64>,
    /// `None` when `alpha` is identically zero.
    pub alpha_inv: Option<f64>,
}

/// Largest `t` with `alpha(t) <= level`, found by bisection and rounded
/// down; `None` if `alpha` stays below `level` up to a very large cap.
pub fn alpha_inverse(level: f64, ti: &TransferInput) -> Option<f64> {
    if ti.alpha_is_zero() {
        return None;
    }
    let mut lo = 0.0;
    let mut hi = (1.0 / level).min(1.0);
    while alpha(hi, ti) <= level {
        lo = hi;
        hi *= 2.0;
        if hi > BRACKET_CAP {
            return None;
        }
    }
    for _ in 0..BISECTION_MAX_ITERS {
        if hi - lo <= BISECTION_RTOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if alpha(mid, ti) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug_assert!(alpha(lo, ti) <= level);
    Some(lo)
}

/// `tau1 = min{1/kappa, tau0, alpha^{-1}(kappa)}`; ties go to the earlier
/// name in that list.
pub fn tau1(ti: &TransferInput) -> Tau1 {
    let kappa = ti.kappa();
    let inv_kappa = 1.0 / kappa;
    let tau0 = ti.bound.tau0;
    let alpha_inv = alpha_inverse(kappa, ti);
    let mut best = (inv_kappa, BINDING_KAPPA);
    if let Some(t0) = tau0 {
        if t0 < best.0 {
            best = (t0, BINDING_TAU0);
        }
    }
    if let Some(ai) = alpha_inv {
        if ai < best.0 {
            best = (ai, BINDING_ALPHA);
        }
    }
    Tau1 {
        tau1: best.0,
        binding_constraint: best.1,
        inv_kappa,
        tau0,
        alpha_inv,
    }
}

/// `Q~ = tau (Q + alpha lmin(P) I)`, `R~ = tau R`, `eta = tau (alpha - kappa) + 1`,
/// without any range check.
pub fn dt_parts(ti: &TransferInput, tau: f64) -> DtParts {
    let a = alpha(tau, ti);
    let q = &ti.cert.q;
    let qt = q.shifted(a * ti.lambda_min_p).scaled(tau);
    DtParts {
        p: ti.cert.p.clone(),
        qt,
        rt: ti.cert.r.scaled(tau),
        eta: tau * (a - ti.kappa()) + 1.0,
        tau,
    }
}

/// Transferred certificate for `0 < tau < tau1`.
pub fn dt_certificate(ti: &TransferInput, tau: f64) -> Result<DtCertificate, TransferError> {
    let t1 = tau1(ti);
    if !(tau > 0.0) {
        return Err(TransferError::TauOutOfRange {
            tau,
            tau1: t1.tau1,
            binding: "positivity",
        });
    }
    if !(tau < t1.tau1) {
        return Err(TransferError::TauOutOfRange {
            tau,
            tau1: t1.tau1,
            binding: t1.binding_constraint,
        });
    }
    let parts = dt_parts(ti, tau);
    let mut dc = DtCertificate::new(parts.p, parts.qt, parts.rt, parts.eta, tau, t1.tau1)?;
    dc.q = Some(ti.cert.q.clone());
    dc.r = Some(ti.cert.r.clone());
    dc.kappa = Some(ti.kappa());
    dc.provenance = Some(Provenance {
        scheme: ti.bound.scheme,
        lf: ti.bound.lf,
        sigma_slope: ti.bound.sigma_slope,
        tau0: ti.bound.tau0,
    });
    Ok(dc)
}

/// Range of `eta` over log-spaced sampling periods in `(0, tau1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaSweep {
    pub samples: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    pub all_in_unit_interval: bool,
}

/// Evaluate `eta` at `count` log-spaced periods spanning six decades below
/// `tau1`, the last one strictly inside the interval.
pub fn eta_sweep(ti: &TransferInput, count: usize) -> EtaSweep {
    let t1 = tau1(ti).tau1;
    let count = count.max(1);
    let mut out = EtaSweep {
        samples: count,
        tau_min: f64::INFINITY,
        tau_max: 0.0,
        eta_min: f64::INFINITY,
        eta_max: f64::NEG_INFINITY,
        all_in_unit_interval: true,
    };
    for k in 0..count {
        let e = -6.0 + 6.0 * (k as f64) / (count as f64);
        let tau = t1 * 10f64.powf(e);
        let eta = dt_parts(ti, tau).eta;
        out.tau_min = out.tau_min.min(tau);
        out.tau_max = out.tau_max.max(tau);
        out.eta_min = out.eta_min.min(eta);
        out.eta_max = out.eta_max.max(eta);
        if !(eta > 0.0 && eta < 1.0) {
            out.all_in_unit_interval = false;
        }
    }
    out
}

/// `W(x, x~) = ||x - x~||_P^2`.
pub fn lyap_value(x: &[f64], xt: &[f64], p: &SymMatrix) -> Result<f64, CertError> {
    if x.len() != xt.len() {
        return Err(CertError::Dimension(format!(
            "states of length {} and {}",
            x.len(),
            xt.len()
        )));
    }
    let diff: Vec<f64> = x.iter().zip(xt).map(|(a, b)| a - b).collect();
    weighted_norm_sq(&diff, p)
}

/// Two trajectories' worth of arguments sharing the parameter `d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapSample {
    pub index: u64,
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
    pub u: Vec<f64>,
    pub u_tilde: Vec<f64>,
    pub d: Vec<f64>,
}

/// Both sides of the dissipation inequality
/// `W(F(x,u,d), F(x~,u~,d)) <= eta W(x,x~) + ||u-u~||_Q~^2 + ||h-h~||_R~^2`.
pub fn lyapunov_sides(
    sys: &SystemSpec,
    scheme: SchemeId,
    parts: &DtParts,
    s: &LyapSample,
) -> Result<(f64, f64), Error> {
    let next = discretize::step(sys, scheme, &s.x, &s.u, &s.d, parts.tau)?;
    let next_t = discretize::step(sys, scheme, &s.x_tilde, &s.u_tilde, &s.d, parts.tau)?;
    let y = sys.eval_h(&s.x, &s.u, &s.d)?;
    let yt = sys.eval_h(&s.x_tilde, &s.u_tilde, &s.d)?;
    let lhs = lyap_value(next.as_slice(), next_t.as_slice(), &parts.p)?;
    let du: Vec<f64> = s.u.iter().zip(&s.u_tilde).map(|(a, b)| a - b).collect();
    let dy: Vec<f64> = (y - yt).iter().copied().collect();
    let rhs = parts.eta * lyap_value(&s.x, &s.x_tilde, &parts.p)?
        + weighted_norm_sq(&du, &parts.qt)?
        + weighted_norm_sq(&dy, &parts.rt)?;
    Ok((lhs, rhs))
}

fn draw_sample(g: &GridSpec, index: u64, seed: u64) -> LyapSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index));
    let dims = g.dims();
    let axes = g.axes();
    let mut draw = |k: usize| {
        let a = axes[k];
        if a.hi > a.lo {
            rng.gen_range(a.lo..=a.hi)
        } else {
            a.lo
        }
    };
    let x: Vec<f64> = (0..dims.n).map(&mut draw).collect();
    let x_tilde: Vec<f64> = (0..dims.n).map(&mut draw).collect();
    let u: Vec<f64> = (dims.n..dims.n + dims.q).map(&mut draw).collect();
    let u_tilde: Vec<f64> = (dims.n..dims.n + dims.q).map(&mut draw).collect();
    let d: Vec<f64> = (dims.n + dims.q..dims.coords()).map(&mut draw).collect();
    LyapSample {
        index,
        x,
        x_tilde,
        u,
        u_tilde,
        d,
    }
}

/// Outcome of the sampled dissipation-inequality check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub total_samples: u64,
    pub violations: u64,
    /// Largest `lhs - rhs`; non-positive when the inequality held everywhere.
    pub worst_slack: f64,
    pub argmax_sample: Option<LyapSample>,
    pub slack_min: f64,
    pub slack_median: f64,
    /// A sample violates when `lhs - rhs > tolerance * max(1, lhs, rhs)`.
    pub tolerance: f64,
    pub domain_errors: u64,
    pub complete: bool,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

impl LyapunovReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.complete
    }
}

/// Draw `n_samples` tuples uniformly from the grid box (sample `k` seeded
/// with `seed + k`) and test the dissipation inequality at each.
pub fn check_lyapunov_sampled(
    sys: &SystemSpec,
    scheme: SchemeId,
    parts: &DtParts,
    g: &GridSpec,
    n_samples: u64,
    seed: u64,
    tol: f64,
) -> Result<LyapunovReport, Error> {
    if n_samples == 0 {
        return Err(Error::Invalid("at least one Lyapunov sample is required".into()));
    }
    if g.dims() != sys.dims() {
        return Err(Error::Invalid("grid does not match the model dimensions".into()));
    }
    let start = Instant::now();
    let mut warnings = Vec::new();
    if !sys.output_is_affine() {
        warnings.push(
            "output map is not affine in (x, u): the sampled check is empirical only".to_string(),
        );
    }
    let results = sweep::map_indices(n_samples, |k| {
        let s = draw_sample(g, k, seed);
        lyapunov_sides(sys, scheme, parts, &s)
    });
    let mut violations = 0;
    let mut domain_errors = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut argmax = None;
    let mut slacks = Vec::with_capacity(results.len());
    for (k, res) in results.into_iter().enumerate() {
        match res {
            Ok((lhs, rhs)) => {
                let slack = lhs - rhs;
                if slack > tol * lhs.max(rhs).max(1.0) {
                    violations += 1;
                }
                if argmax.is_none() || slack > worst {
                    worst = slack;
                    argmax = Some(k as u64);
                }
                slacks.push(slack);
            }
            Err(Error::Eval(_)) => domain_errors += 1,
            Err(e) => return Err(e),
        }
    }
    slacks.sort_by(|a, b| a.total_cmp(b));
    let slack_median = if slacks.is_empty() {
        f64::NAN
    } else {
        slacks[slacks.len() / 2]
    };
    Ok(LyapunovReport {
        total_samples: n_samples,
        violations,
        worst_slack: worst,
        argmax_sample: argmax.map(|k| draw_sample(g, k, seed)),
        slack_min: slacks.first().copied().unwrap_or(f64::NAN),
        slack_median,
        tolerance: tol,
        domain_errors,
        complete: domain_errors == 0,
        seed,
        warnings,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Settings of the full transfer pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferConfig {
    pub scheme: SchemeId,
    /// `None` runs at `tau1 / 2`.
    pub tau: Option<f64>,
    pub delta0: f64,
    /// User-supplied constants take precedence over grid estimates.
    pub lf: Option<f64>,
    pub ldf: Option<f64>,
    /// Overrides `L_df * c_f` entirely.
    pub sigma_slope: Option<f64>,
    pub ldf_pairs: u64,
    pub lyap_samples: u64,
    pub eta_samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub lyap_tol: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            scheme: SchemeId::Euler,
            tau: None,
            delta0: discretize::DEFAULT_DELTA0,
            lf: None,
            ldf: None,
            sigma_slope: None,
            ldf_pairs: 2000,
            lyap_samples: 10_000,
            eta_samples: 1000,
            seed: 0,
            tol: crate::cert::DEFAULT_NSD_TOL,
            lyap_tol: 1e-9,
        }
    }
}

/// Regularity constants feeding the consistency bound, with their origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityConstants {
    pub lf: f64,
    pub lf_source: &'static str,
    pub cf: Option<f64>,
    pub ldf: Option<f64>,
    pub ldf_source: Option<&'static str>,
    pub sigma_slope: f64,
    pub notes: Vec<String>,
}

const LDF_CAVEAT: &str = "L_df is a sampled estimate (max over random pairs times 1.1); it can underestimate the true constant";

/// Constants and consistency bound for `cfg.scheme` on the grid box.
pub fn consistency_bound_for(
    sys: &SystemSpec,
    g: &GridSpec,
    cfg: &TransferConfig,
) -> Result<(ConsistencyBound, RegularityConstants), Error> {
    let (lf, lf_source) = match cfg.lf {
        Some(v) => (v, "user"),
        None => (crate::model::estimate_lf(sys, g)?, "grid"),
    };
    let mut notes = Vec::new();
    let (cf, ldf, ldf_source, slope) = match cfg.scheme {
        SchemeId::Euler => (None, None, None, 0.0),
        SchemeId::Rk2 => {
            let cf = crate::model::estimate_cf(sys, g)?;
            let (ldf, src) = match cfg.ldf {
                Some(v) => (v, "user"),
                None => {
                    notes.push(LDF_CAVEAT.to_string());
                    (crate::model::estimate_ldf(sys, g, cfg.ldf_pairs, cfg.seed)?, "sampled")
                }
            };
            let slope = cfg.sigma_slope.unwrap_or(ldf * cf);
            if cfg.sigma_slope.is_some() {
                notes.push("sigma slope overridden by the user".to_string());
            }
            (Some(cf), Some(ldf), Some(src), slope)
        }
    };
    let mut bound = discretize::consistency_bound(
        cfg.scheme,
        lf,
        ldf.unwrap_or(0.0),
        cf.unwrap_or(0.0),
        cfg.delta0,
    )?;
    bound.sigma_slope = slope;
    Ok((
        bound,
        RegularityConstants {
            lf,
            lf_source,
            cf,
            ldf,
            ldf_source,
            sigma_slope: slope,
            notes,
        },
    ))
}

/// Everything the transfer pipeline computed, in provenance order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport {
    pub scheme: SchemeId,
    pub tau: f64,
    pub constants: RegularityConstants,
    pub tau1: f64,
    pub binding_constraint: &'static str,
    pub inv_kappa: f64,
    pub tau0: Option<f64>,
    pub alpha_inv: Option<f64>,
    pub alpha_at_tau: f64,
    pub eta: Option<f64>,
    #[serde(rename = "Qt")]
    pub qt: Option<SymMatrix>,
    #[serde(rename = "Rt")]
    pub rt: Option<SymMatrix>,
    pub dt_certificate: Option<DtCertificate>,
    pub eta_range: EtaSweep,
    pub consistency: discretize::ConsistencyReport,
    pub dt_check: Option<crate::lmi::CheckReport>,
    pub lyapunov: Option<LyapunovReport>,
    /// `tau < tau1` and the discrete-time grid check passed.
    pub certified: bool,
    pub rejection: Option<String>,
}

/// Constants, consistency bound, `tau1`, transferred certificate, DT grid
/// check and sampled Lyapunov check, in that order.
pub fn run_transfer(
    sys: &SystemSpec,
    g: &GridSpec,
    cert: &Certificate,
    cfg: &TransferConfig,
) -> Result<TransferReport, Error> {
    cert.check_dims(sys.n(), sys.q(), sys.p())?;
    let (bound, constants) = consistency_bound_for(sys, g, cfg)?;
    let ti = TransferInput::new(cert.clone(), bound)?;
    let t1 = tau1(&ti);
    let tau = cfg.tau.unwrap_or(0.5 * t1.tau1);
    let consistency = discretize::consistency_sweep(sys, g, tau, &bound)?;
    let eta_range = eta_sweep(&ti, cfg.eta_samples);
    let mut report = TransferReport {
        scheme: cfg.scheme,
        tau,
        constants,
        tau1: t1.tau1,
        binding_constraint: t1.binding_constraint,
        inv_kappa: t1.inv_kappa,
        tau0: t1.tau0,
        alpha_inv: t1.alpha_inv,
        alpha_at_tau: alpha(tau, &ti),
        eta: None,
        qt: None,
        rt: None,
        dt_certificate: None,
        eta_range,
        consistency,
        dt_check: None,
        lyapunov: None,
        certified: false,
        rejection: None,
    };
    let dc = match dt_certificate(&ti, tau) {
        Ok(dc) => dc,
        Err(e @ TransferError::TauOutOfRange { .. }) => {
            report.rejection = Some(e.to_string());
            return Ok(report);
        }
        Err(e) => return Err(e.into()),
    };
    let check = crate::lmi::check_dt_grid(sys, cfg.scheme, g, &dc, cfg.tol)?;
    let lyap = check_lyapunov_sampled(
        sys,
        cfg.scheme,
        &DtParts::from(&dc),
        g,
        cfg.lyap_samples.max(1),
        cfg.seed,
        cfg.lyap_tol,
    )?;
    report.certified = check.passed();
    report.eta = Some(dc.eta);
    report.qt = Some(dc.qt.clone());
    report.rt = Some(dc.rt.clone());
    report.dt_certificate = Some(dc);
    report.dt_check = Some(check);
    report.lyapunov = Some(lyap);
    Ok(report)
}

/// Index and `tau1` of the candidate certificate allowing the largest
/// sampling period under `bound`.
pub fn best_for_transfer<'a>(
    candidates: impl IntoIterator<Item = &'a Certificate>,
    bound: &ConsistencyBound,
) -> Option<(usize, Tau1)> {
    let mut best: Option<(usize, Tau1)> = None;
    for (k, c) in candidates.into_iter().enumerate() {
        let Ok(ti) = TransferInput::new(c.clone(), *bound) else {
            continue;
        };
        let t = tau1(&ti);
        if best.as_ref().is_none_or(|(_, b)| t.tau1 > b.tau1) {
            best = Some((k, t));
        }
    }
    best
}
