//! Certificate search by projected subgradient descent on the worst-case
//! largest eigenvalue of the continuous-time LMI over the grid.
//!
//! The optimizer is incomplete: an infeasible outcome says nothing about
//! detectability. It is also never trusted: every candidate is re-verified
//! with [`check_ct_grid`] before it can be returned.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cert::{top_eigenpair, Certificate, SymMatrix, DEFAULT_NSD_TOL};
use crate::error::Error;
use crate::lmi::{assemble_ct_blocks, check_ct_grid, CheckReport};
use crate::model::grid::GridSpec;
use crate::model::system::SystemSpec;
use crate::sweep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SupplyStructure {
    Diagonal,
    Full,
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    /// Candidate factors, tried in the given order (descending by default).
    pub kappas: Vec<f64>,
    pub max_iters: usize,
    /// Iterations without improvement before a factor is abandoned.
    pub patience: usize,
    /// Success means `phi <= -margin`.
    pub margin: f64,
    /// Eigenvalue floor for `P`, `Q`, `R`.
    pub eps: f64,
    pub supply: SupplyStructure,
    /// Tolerance of the verifying grid check.
    pub tol: f64,
    /// Initial `Q = R = s I` scales tried before descent starts.
    pub init_scales: Vec<f64>,
    /// Stop after the first verified factor instead of scanning them all.
    pub stop_at_first: bool,
    /// Recorded in reports; the search itself is deterministic.
    pub seed: u64,
    /// Applied to every candidate before verification (fault injection).
    pub candidate_hook: Option<fn(&mut Certificate)>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            kappas: log_kappa_grid(1e-3, 10.0, 16),
            max_iters: 4000,
            patience: 800,
            margin: 1e-6,
            eps: 1e-6,
            supply: SupplyStructure::Diagonal,
            tol: DEFAULT_NSD_TOL,
            init_scales: vec![1.0, 10.0, 100.0, 1000.0],
            stop_at_first: false,
            seed: 0,
            candidate_hook: None,
        }
    }
}

/// `count` log-spaced values from `hi` down to `lo`.
pub fn log_kappa_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![hi];
    }
    let (a, b) = (hi.ln(), lo.ln());
    (0..count)
        .map(|k| (a + (b - a) * (k as f64) / ((count - 1) as f64)).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaLog {
    pub kappa: f64,
    pub iterations: usize,
    pub best_phi: f64,
    /// Best `phi` so far, sampled along the descent; nonincreasing.
    pub phi_trace: Vec<f64>,
    pub reached_margin: bool,
    /// `Some(false)` when the verifier rejected the candidate.
    pub verified: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibleKappa {
    pub kappa: f64,
    pub phi: f64,
    /// `lambda_max(P) / lambda_min(P)`, which scales the transfer bound.
    pub condition_number: f64,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthReport {
    pub feasible: bool,
    /// Verified certificate with the largest feasible factor.
    pub certificate: Option<Certificate>,
    pub feasible_kappas: Vec<FeasibleKappa>,
    pub synth_log: Vec<KappaLog>,
    /// Grid check of the returned certificate.
    pub check: Option<CheckReport>,
    pub distinct_points: usize,
    pub rejected_by_verifier: usize,
    pub seed: u64,
    pub wall_time_s: f64,
    pub note: &'static str,
}

const INFEASIBLE_NOTE: &str =
    "no certificate found; gridding and local search are incomplete, so this is not evidence against detectability";
const FEASIBLE_NOTE: &str = "certificate verified on the grid";

struct Jac {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

fn bits(m: &DMatrix<f64>) -> impl Iterator<Item = u64> + '_ {
    m.iter().map(|v| v.to_bits())
}

/// Jacobians at every grid point, with bit-identical repeats removed.
fn distinct_jacobians(sys: &SystemSpec, g: &GridSpec) -> Result<Vec<Jac>, Error> {
    let evals = sweep::map_grid(g, |p| sys.eval_point(&p.x, &p.u, &p.d));
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for pe in evals {
        let pe = pe?;
        let key: Vec<u64> = bits(&pe.a)
            .chain(bits(&pe.b))
            .chain(bits(&pe.c))
            .chain(bits(&pe.dmat))
            .collect();
        if seen.insert(key, ()).is_none() {
            out.push(Jac {
                a: pe.a,
                b: pe.b,
                c: pe.c,
                d: pe.dmat,
            });
        }
    }
    Ok(out)
}

#[derive(Clone)]
struct Iterate {
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl Iterate {
    fn sym(&self) -> (SymMatrix, SymMatrix, SymMatrix) {
        (
            SymMatrix::from_lower(&self.p),
            SymMatrix::from_lower(&self.q),
            SymMatrix::from_lower(&self.r),
        )
    }

    fn certificate(&self, kappa: f64) -> Option<Certificate> {
        let (p, q, r) = self.sym();
        Certificate::new(p, q, r, kappa).ok()
    }
}

/// Worst `lambda_max` over the points and the index attaining it.
fn objective(jacs: &[Jac], it: &Iterate, kappa: f64) -> (f64, usize, DVector<f64>) {
    let (p, q, r) = it.sym();
    let tops = jacs
        .iter()
        .map(|j| {
            let m = assemble_ct_blocks(&j.a, &j.b, &j.c, &j.d, &p, &q, &r, kappa)
                .expect("dimensions fixed by the model");
            top_eigenpair(&m)
        })
        .collect::<Vec<_>>();
    let mut best = 0;
    for (k, t) in tops.iter().enumerate() {
        if t.0 > tops[best].0 {
            best = k;
        }
    }
    let (phi, v) = tops.into_iter().nth(best).expect("at least one point");
    (phi, best, v)
}

/// Subgradient of `v' M v` with respect to `(P, Q, R)`.
fn subgradient(j: &Jac, v: &DVector<f64>, kappa: f64) -> Iterate {
    let n = j.a.nrows();
    let v1 = v.rows(0, n).into_owned();
    let v2 = v.rows(n, v.len() - n).into_owned();
    let w = &j.a * &v1 + &j.b * &v2;
    let z = &j.c * &v1 + &j.d * &v2;
    let vw = &v1 * w.transpose();
    let dp = &vw + vw.transpose() + (&v1 * v1.transpose()) * kappa;
    Iterate {
        p: dp,
        q: -(&v2 * v2.transpose()),
        r: -(&z * z.transpose()),
    }
}

fn floor_eigen(m: &DMatrix<f64>, eps: f64, structure: SupplyStructure) -> DMatrix<f64> {
    let k = m.nrows();
    if k == 0 {
        return m.clone();
    }
    if structure == SupplyStructure::Diagonal {
        return DMatrix::from_fn(k, k, |i, j| if i == j { m[(i, i)].max(eps) } else { 0.0 });
    }
    let (vals, vecs) = SymMatrix::from_lower(m).eigen();
    let clipped = DMatrix::from_diagonal(&vals.map(|l| l.max(eps)));
    let out = &vecs * clipped * vecs.transpose();
    crate::linalg::symmetrize(&out)
}

fn project(it: &mut Iterate, n: usize, eps: f64, supply: SupplyStructure) {
    it.p = floor_eigen(&it.p, eps, SupplyStructure::Full);
    let s = n as f64 / it.p.trace();
    it.p *= s;
    it.q *= s;
    it.r *= s;
    it.p = floor_eigen(&it.p, eps, SupplyStructure::Full);
    it.q = floor_eigen(&it.q, eps, supply);
    it.r = floor_eigen(&it.r, eps, supply);
}

fn restrict(m: DMatrix<f64>, structure: SupplyStructure) -> DMatrix<f64> {
    match structure {
        SupplyStructure::Full => m,
        SupplyStructure::Diagonal => {
            let k = m.nrows();
            DMatrix::from_fn(k, k, |i, j| if i == j { m[(i, i)] } else { 0.0 })
        }
    }
}

fn sq_norm(it: &Iterate) -> f64 {
    it.p.norm_squared() + it.q.norm_squared() + it.r.norm_squared()
}

struct Descent {
    best: Iterate,
    best_phi: f64,
    iterations: usize,
    trace: Vec<f64>,
}

fn descend(jacs: &[Jac], start: Iterate, kappa: f64, n: usize, opts: &SynthOptions) -> Descent {
    let target = -2.0 * opts.margin;
    let mut it = start;
    let (mut phi, mut worst, mut v) = objective(jacs, &it, kappa);
    let mut best = it.clone();
    let mut best_phi = phi;
    let mut since_best = 0;
    let mut trace = vec![best_phi];
    let mut iterations = 0;
    while iterations < opts.max_iters && best_phi > -opts.margin && since_best < opts.patience {
        iterations += 1;
        let mut g = subgradient(&jacs[worst], &v, kappa);
        g.q = restrict(g.q, opts.supply);
        g.r = restrict(g.r, opts.supply);
        let gn = sq_norm(&g);
        if gn == 0.0 {
            break;
        }
        let step = (phi - target) / gn;
        it.p -= &g.p * step;
        it.q -= &g.q * step;
        it.r -= &g.r * step;
        project(&mut it, n, opts.eps, opts.supply);
        (phi, worst, v) = objective(jacs, &it, kappa);
        if phi < best_phi {
            best_phi = phi;
            best = it.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        if iterations % 50 == 0 {
            trace.push(best_phi);
        }
    }
    if trace.last() != Some(&best_phi) {
        trace.push(best_phi);
    }
    Descent {
        best,
        best_phi,
        iterations,
        trace,
    }
}

fn initial_iterate(jacs: &[Jac], n: usize, nq: usize, np: usize, kappa: f64, opts: &SynthOptions) -> Iterate {
    let mut best: Option<(f64, Iterate)> = None;
    for &s in &opts.init_scales {
        let it = Iterate {
            p: DMatrix::identity(n, n),
            q: DMatrix::identity(nq, nq) * s,
            r: DMatrix::identity(np, np) * s,
        };
        let phi = objective(jacs, &it, kappa).0;
        if best.as_ref().is_none_or(|(b, _)| phi < *b) {
            best = Some((phi, it));
        }
    }
    best.map(|(_, it)| it).unwrap_or_else(|| Iterate {
        p: DMatrix::identity(n, n),
        q: DMatrix::identity(nq, nq),
        r: DMatrix::identity(np, np),
    })
}

/// Search the factor grid for a certificate of the CT LMI on `g`.
pub fn synthesize_certificate(
    sys: &SystemSpec,
    g: &GridSpec,
    opts: &SynthOptions,
) -> Result<SynthReport, Error> {
    if !(opts.margin > 0.0 && opts.eps > 0.0) {
        return Err(Error::Invalid("margin and eps must be positive".into()));
    }
    if opts.kappas.is_empty() || opts.kappas.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::Invalid("factor candidates must be positive".into()));
    }
    if g.dims() != sys.dims() {
        return Err(Error::Invalid("grid does not match the model dimensions".into()));
    }
    let start = Instant::now();
    let jacs = distinct_jacobians(sys, g)?;
    let (n, nq, np) = (sys.n(), sys.q(), sys.p());

    let mut log = Vec::new();
    let mut feasible = Vec::new();
    let mut returned: Option<(Certificate, CheckReport)> = None;
    let mut rejected = 0;
    let mut warm: Option<Iterate> = None;
    let mut prev_feasible = false;

    for &kappa in &opts.kappas {
        // After a success, restart from the well-conditioned initial guess:
        // the previous iterate stays feasible for smaller factors but tends to
        // be badly conditioned, which shrinks the transferable sampling range.
        let run = match (&warm, prev_feasible) {
            (Some(it), false) => descend(&jacs, it.clone(), kappa, n, opts),
            (Some(it), true) => {
                let fresh = initial_iterate(&jacs, n, nq, np, kappa, opts);
                let run = descend(&jacs, fresh, kappa, n, opts);
                if run.best_phi <= -opts.margin {
                    run
                } else {
                    descend(&jacs, it.clone(), kappa, n, opts)
                }
            }
            (None, _) => {
                let fresh = initial_iterate(&jacs, n, nq, np, kappa, opts);
                descend(&jacs, fresh, kappa, n, opts)
            }
        };
        let mut entry = KappaLog {
            kappa,
            iterations: run.iterations,
            best_phi: run.best_phi,
            phi_trace: run.trace,
            reached_margin: run.best_phi <= -opts.margin,
            verified: None,
        };
        if entry.reached_margin {
            if let Some(mut cert) = run.best.certificate(kappa) {
                if let Some(hook) = opts.candidate_hook {
                    hook(&mut cert);
                }
                let check = check_ct_grid(sys, g, &cert, opts.tol)?;
                let ok = check.passed();
                entry.verified = Some(ok);
                if ok {
                    let (lo, hi) = crate::cert::eig_extents(&cert.p)?;
                    feasible.push(FeasibleKappa {
                        kappa,
                        phi: run.best_phi,
                        condition_number: hi / lo,
                        certificate: cert.clone(),
                    });
                    if returned.is_none() {
                        returned = Some((cert, check));
                    }
                } else {
                    rejected += 1;
                }
            } else {
                entry.verified = Some(false);
                rejected += 1;
            }
        }
        prev_feasible = entry.verified == Some(true);
        warm = Some(run.best);
        log.push(entry);
        if returned.is_some() && opts.stop_at_first {
            break;
        }
    }

    let (certificate, check) = match returned {
        Some((c, r)) => (Some(c), Some(r)),
        None => (None, None),
    };
    Ok(SynthReport {
        feasible: certificate.is_some(),
        note: if certificate.is_some() {
            FEASIBLE_NOTE
        } else {
            INFEASIBLE_NOTE
        },
        certificate,
        feasible_kappas: feasible,
        synth_log: log,
        check,
        distinct_points: jacs.len(),
        rejected_by_verifier: rejected,
        seed: opts.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
