//! Symmetric matrices, definiteness tests and detectability certificates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::discretize::SchemeId;
use crate::error::CertError;

/// Default relative tolerance for `M <= 0` checks.
pub const DEFAULT_NSD_TOL: f64 = 1e-9;
/// Default floor for strict positive definiteness.
pub const DEFAULT_PSD_TOL: f64 = 1e-12;

/// Real symmetric matrix stored as its lower triangle (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    lower: Vec<f64>,
}

#[inline]
fn tri(i: usize, j: usize) -> usize {
    debug_assert!(i >= j);
    i * (i + 1) / 2 + j
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            lower: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.lower[tri(i, i)] = v;
        }
        m
    }

    /// 1x1 matrix.
    pub fn scalar(v: f64) -> Self {
        Self::diagonal(&[v])
    }

    /// Build from `f(i, j)` evaluated for `i >= j`.
    pub fn from_lower_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut lower = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                lower.push(f(i, j));
            }
        }
        SymMatrix { dim, lower }
    }

    /// Take the lower triangle of a square matrix; the upper triangle is
    /// ignored.
    pub fn from_lower(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        Self::from_lower_fn(m.nrows(), |i, j| m[(i, j)])
    }

    /// Build from full rows, rejecting asymmetric input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CertError> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(CertError::Dimension(format!(
                "matrix rows must all have length {k}"
            )));
        }
        let scale = rows
            .iter()
            .flatten()
            .fold(1.0f64, |acc, v| acc.max(v.abs()));
        #[allow(clippy::needless_range_loop)]
        for i in 0..k {
            for j in 0..i {
                if (rows[i][j] - rows[j][i]).abs() > 1e-12 * scale {
                    return Err(CertError::Malformed(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self::from_lower_fn(k, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.lower[tri(i, j)]
        } else {
            self.lower[tri(j, i)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = if i >= j { tri(i, j) } else { tri(j, i) };
        self.lower[idx] = v;
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymMatrix {
            dim: self.dim,
            lower: self.lower.iter().map(|v| v * s).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        self.scaled(-1.0)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        SymMatrix {
            dim: self.dim,
            lower: self
                .lower
                .iter()
                .zip(&other.lower)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Add `s` to every diagonal entry.
    pub fn shifted(&self, s: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.lower[tri(i, i)] += s;
        }
        out
    }

    /// Lower-triangle entries, row-major.
    pub fn lower_entries(&self) -> &[f64] {
        &self.lower
    }

    /// Full eigen-decomposition (ascending eigenvalues, columns of the second
    /// matrix are the eigenvectors).
    pub fn eigen(&self) -> (DVector<f64>, DMatrix<f64>) {
        let eig = self.to_dmatrix().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = DVector::from_iterator(self.dim, order.iter().map(|&k| eig.eigenvalues[k]));
        let vecs = DMatrix::from_fn(self.dim, self.dim, |i, j| eig.eigenvectors[(i, order[j])]);
        (vals, vecs)
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// `(lambda_min, lambda_max)`. An empty matrix yields `(0, 0)`.
pub fn eig_extents(m: &SymMatrix) -> Result<(f64, f64), CertError> {
    if !m.is_finite() {
        return Err(CertError::NonFinite("M"));
    }
    if m.dim() == 0 {
        return Ok((0.0, 0.0));
    }
    if m.dim() == 1 {
        let v = m.get(0, 0);
        return Ok((v, v));
    }
    let vals = m.to_dmatrix().symmetric_eigenvalues();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Largest eigenvalue and a unit eigenvector for it.
pub fn top_eigenpair(m: &SymMatrix) -> (f64, DVector<f64>) {
    let (vals, vecs) = m.eigen();
    let k = m.dim() - 1;
    (vals[k], vecs.column(k).into_owned())
}

/// Outcome of a negative-semidefiniteness test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum NsdVerdict {
    Holds { lambda_max: f64, threshold: f64 },
    Fails { lambda_max: f64, threshold: f64 },
}

impl NsdVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, NsdVerdict::Holds { .. })
    }

    pub fn lambda_max(&self) -> f64 {
        match *self {
            NsdVerdict::Holds { lambda_max, .. } | NsdVerdict::Fails { lambda_max, .. } => {
                lambda_max
            }
        }
    }
}

/// `M <= 0` up to `tol * max(1, ||M||_2)`.
pub fn is_nsd(m: &SymMatrix, tol: f64) -> Result<NsdVerdict, CertError> {
    let (lo, hi) = eig_extents(m)?;
    let norm = lo.abs().max(hi.abs());
    let threshold = tol * norm.max(1.0);
    Ok(if hi <= threshold {
        NsdVerdict::Holds {
            lambda_max: hi,
            threshold,
        }
    } else {
        NsdVerdict::Fails {
            lambda_max: hi,
            threshold,
        }
    })
}

/// `v' P v`.
pub fn weighted_norm_sq(v: &[f64], p: &SymMatrix) -> Result<f64, CertError> {
    if v.len() != p.dim() {
        return Err(CertError::Dimension(format!(
            "vector of length {} against {}x{} weight",
            v.len(),
            p.dim(),
            p.dim()
        )));
    }
    let mut acc = 0.0;
    for i in 0..v.len() {
        acc += p.get(i, i) * v[i] * v[i];
        for j in 0..i {
            acc += 2.0 * p.get(i, j) * v[i] * v[j];
        }
    }
    Ok(acc)
}

fn require_pd(name: &'static str, m: &SymMatrix, psd_tol: f64) -> Result<(), CertError> {
    if !m.is_finite() {
        return Err(CertError::NonFinite(name));
    }
    if m.dim() == 0 {
        return Ok(());
    }
    let (lo, _) = eig_extents(m)?;
    if lo <= psd_tol {
        return Err(CertError::NotPositiveDefinite {
            name,
            lambda_min: lo,
        });
    }
    Ok(())
}

/// Continuous-time certificate `(P, Q, R, kappa)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CertificateRaw")]
pub struct Certificate {
    #[serde(rename = "P")]
    pub p: SymMatrix,
    #[serde(rename = "Q")]
    pub q: SymMatrix,
    #[serde(rename = "R")]
    pub r: SymMatrix,
    pub kappa: f64,
}

#[derive(Deserialize)]
struct CertificateRaw {
    #[serde(rename = "P")]
    p: SymMatrix,
    #[serde(rename = "Q")]
    q: SymMatrix,
    #[serde(rename = "R")]
    r: SymMatrix,
    kappa: f64,
}

impl TryFrom<CertificateRaw> for Certificate {
    type Error = CertError;

    fn try_from(raw: CertificateRaw) -> Result<Self, CertError> {
        Certificate::new(raw.p, raw.q, raw.r, raw.kappa)
    }
}

impl Certificate {
    pub fn new(p: SymMatrix, q: SymMatrix, r: SymMatrix, kappa: f64) -> Result<Self, CertError> {
        Self::with_tolerance(p, q, r, kappa, DEFAULT_PSD_TOL)
    }

    pub fn with_tolerance(
        p: SymMatrix,
        q: SymMatrix,
        r: SymMatrix,
        kappa: f64,
        psd_tol: f64,
    ) -> Result<Self, CertError> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(CertError::NonPositiveKappa(kappa));
        }
        require_pd("P", &p, psd_tol)?;
        require_pd("Q", &q, psd_tol)?;
        require_pd("R", &r, psd_tol)?;
        Ok(Certificate { p, q, r, kappa })
    }

    /// Scalar certificate for one-dimensional `x`, `u`, `y`.
    pub fn scalar(p: f64, q: f64, r: f64, kappa: f64) -> Result<Self, CertError> {
        Self::new(
            SymMatrix::scalar(p),
            SymMatrix::scalar(q),
            SymMatrix::scalar(r),
            kappa,
        )
    }

    pub fn check_dims(&self, n: usize, q: usize, p: usize) -> Result<(), CertError> {
        if self.p.dim() != n || self.q.dim() != q || self.r.dim() != p {
            return Err(CertError::Dimension(format!(
                "certificate is (P {}, Q {}, R {}), model needs (n {n}, q {q}, p {p})",
                self.p.dim(),
                self.q.dim(),
                self.r.dim()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CertError> {
        serde_json::from_str(text).map_err(|e| CertError::Malformed(e.to_string()))
    }
}

/// Constants that produced a transferred certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scheme: SchemeId,
    pub lf: f64,
    pub sigma_slope: f64,
    /// `None` when unbounded.
    pub tau0: Option<f64>,
}

/// Discrete-time certificate `(P, Q~, R~, eta)` valid for one sampling
/// period `tau < tau1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DtCertificateRaw")]
pub struct DtCertificate {
    #[serde(rename = "P")]
    pub p: SymMatrix,
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<SymMatrix>,
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<SymMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(rename = "Qt")]
    pub qt: SymMatrix,
    #[serde(rename = "Rt")]
    pub rt: SymMatrix,
    pub eta: f64,
    pub tau: f64,
    pub tau1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Deserialize)]
struct DtCertificateRaw {
    #[serde(rename = "P")]
    p: SymMatrix,
    #[serde(rename = "Q", default)]
    q: Option<SymMatrix>,
    #[serde(rename = "R", default)]
    r: Option<SymMatrix>,
    #[serde(default)]
    kappa: Option<f64>,
    #[serde(rename = "Qt")]
    qt: SymMatrix,
    #[serde(rename = "Rt")]
    rt: SymMatrix,
    eta: f64,
    tau: f64,
    tau1: f64,
    #[serde(default)]
    provenance: Option<Provenance>,
}

impl TryFrom<DtCertificateRaw> for DtCertificate {
    type Error = CertError;

    fn try_from(raw: DtCertificateRaw) -> Result<Self, CertError> {
        let mut dc = DtCertificate::new(raw.p, raw.qt, raw.rt, raw.eta, raw.tau, raw.tau1)?;
        dc.q = raw.q;
        dc.r = raw.r;
        dc.kappa = raw.kappa;
        dc.provenance = raw.provenance;
        Ok(dc)
    }
}

impl DtCertificate {
    /// Validates `0 < tau < tau1`, `P, Q~, R~ > 0` and `0 < eta < 1`.
    pub fn new(
        p: SymMatrix,
        qt: SymMatrix,
        rt: SymMatrix,
        eta: f64,
        tau: f64,
        tau1: f64,
    ) -> Result<Self, CertError> {
        if !(tau > 0.0 && tau < tau1) {
            return Err(CertError::Malformed(format!(
                "sampling period {tau} is not in (0, {tau1})"
            )));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(CertError::EtaOutOfRange(eta));
        }
        require_pd("P", &p, DEFAULT_PSD_TOL)?;
        require_pd("Qt", &qt, 0.0)?;
        require_pd("Rt", &rt, 0.0)?;
        Ok(DtCertificate {
            p,
            q: None,
            r: None,
            kappa: None,
            qt,
            rt,
            eta,
            tau,
            tau1,
            provenance: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CertError> {
        serde_json::from_str(text).map_err(|e| CertError::Malformed(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym2(a: f64, b: f64, c: f64) -> SymMatrix {
        SymMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap()
    }

    // Roots of the 2x2 characteristic polynomial.
    fn char_poly_2x2(a: f64, b: f64, c: f64) -> (f64, f64) {
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        (mean - rad, mean + rad)
    }

    #[test]
    fn identity_extents() {
        assert_eq!(eig_extents(&SymMatrix::identity(3)).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn two_by_two_extents() {
        let (lo, hi) = eig_extents(&sym2(-2.0, 1.0, -1.0)).unwrap();
        let s5 = 5f64.sqrt();
        assert!((lo - (-3.0 - s5) / 2.0).abs() < 1e-14);
        assert!((hi - (-3.0 + s5) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_extents() {
        let (lo, hi) = eig_extents(&SymMatrix::diagonal(&[0.12, 7.0])).unwrap();
        assert!((lo - 0.12).abs() < 1e-15 && (hi - 7.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let m = SymMatrix::diagonal(&[f64::NAN, 1.0]);
        assert!(eig_extents(&m).is_err());
        assert!(is_nsd(&m, 0.0).is_err());
    }

    #[test]
    fn nsd_examples() {
        assert!(is_nsd(&SymMatrix::zeros(2), 0.0).unwrap().holds());
        let v = is_nsd(&sym2(-0.21, 0.09, -0.11), DEFAULT_NSD_TOL).unwrap();
        assert!(v.holds());
        let (_, hi) = char_poly_2x2(-0.21, 0.09, -0.11);
        assert!((v.lambda_max() - hi).abs() < 1e-12);
        assert!((hi + 0.0573).abs() < 1e-3);
        match is_nsd(&SymMatrix::diagonal(&[1.0, -1.0]), DEFAULT_NSD_TOL).unwrap() {
            NsdVerdict::Fails { lambda_max, .. } => assert!((lambda_max - 1.0).abs() < 1e-15),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn weighted_norms() {
        assert_eq!(weighted_norm_sq(&[1.0, 0.0], &SymMatrix::identity(2)).unwrap(), 1.0);
        assert_eq!(weighted_norm_sq(&[1.0, 1.0], &sym2(2.0, 1.0, 2.0)).unwrap(), 6.0);
        assert_eq!(weighted_norm_sq(&[0.0, 0.0], &sym2(2.0, 1.0, 2.0)).unwrap(), 0.0);
        assert!(weighted_norm_sq(&[1.0], &SymMatrix::identity(2)).is_err());
    }

    #[test]
    fn certificate_validation() {
        assert!(Certificate::scalar(1.0, 1.0, 1.0, 1.0).is_ok());
        assert!(matches!(
            Certificate::scalar(1.0, 1.0, 1.0, 0.0),
            Err(CertError::NonPositiveKappa(_))
        ));
        assert!(matches!(
            Certificate::scalar(1e-13, 1.0, 1.0, 1.0),
            Err(CertError::NotPositiveDefinite { name: "P", .. })
        ));
        assert!(matches!(
            Certificate::new(sym2(1.0, 2.0, 1.0), SymMatrix::scalar(1.0), SymMatrix::scalar(1.0), 1.0),
            Err(CertError::NotPositiveDefinite { name: "P", .. })
        ));
    }

    #[test]
    fn certificate_json_keys() {
        let c = Certificate::scalar(1.0, 2.0, 3.0, 0.5).unwrap();
        let v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(v["P"], serde_json::json!([[1.0]]));
        assert_eq!(v["Q"], serde_json::json!([[2.0]]));
        assert_eq!(v["R"], serde_json::json!([[3.0]]));
        assert_eq!(v["kappa"], serde_json::json!(0.5));
        assert_eq!(Certificate::from_json(&c.to_json()).unwrap(), c);
        assert!(Certificate::from_json(r#"{"P":[[1]],"Q":[[1]],"R":[[1]],"kappa":-1}"#).is_err());
        assert!(Certificate::from_json(r#"{"P":[[1,2],[0,1]],"Q":[[1]],"R":[[1]],"kappa":1}"#).is_err());
    }

    #[test]
    fn dt_certificate_json() {
        let dc = DtCertificate::new(
            SymMatrix::scalar(1.0),
            SymMatrix::scalar(0.12),
            SymMatrix::scalar(0.1),
            0.92,
            0.1,
            0.5,
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&dc.to_json()).unwrap();
        for key in ["P", "Qt", "Rt", "eta", "tau", "tau1"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(DtCertificate::from_json(&dc.to_json()).unwrap(), dc);
        assert!(DtCertificate::new(
            SymMatrix::scalar(1.0),
            SymMatrix::scalar(0.12),
            SymMatrix::scalar(0.1),
            1.0,
            0.1,
            0.5
        )
        .is_err());
    }

    fn sym3_strategy() -> impl Strategy<Value = [f64; 6]> {
        prop::array::uniform6(-10.0f64..10.0)
    }

    proptest! {
        #[test]
        fn extents_match_char_poly_2x2(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0) {
            let (lo, hi) = eig_extents(&sym2(a, b, c)).unwrap();
            let (elo, ehi) = char_poly_2x2(a, b, c);
            prop_assert!((lo - elo).abs() < 1e-10);
            prop_assert!((hi - ehi).abs() < 1e-10);
        }

        #[test]
        fn extents_match_char_poly_3x3(e in sym3_strategy()) {
            // trigonometric solution of the symmetric 3x3 characteristic cubic
            let m = SymMatrix::from_lower_fn(3, |i, j| e[i * (i + 1) / 2 + j]);
            let (a11, a22, a33) = (m.get(0, 0), m.get(1, 1), m.get(2, 2));
            let (a12, a13, a23) = (m.get(0, 1), m.get(0, 2), m.get(1, 2));
            let p1 = a12 * a12 + a13 * a13 + a23 * a23;
            let qm = (a11 + a22 + a33) / 3.0;
            let p2 = (a11 - qm).powi(2) + (a22 - qm).powi(2) + (a33 - qm).powi(2) + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            let (elo, ehi) = if p < 1e-12 {
                (qm, qm)
            } else {
                let bm = m.to_dmatrix().map(|v| v) - DMatrix::identity(3, 3) * qm;
                let r = ((bm / p).determinant() / 2.0).clamp(-1.0, 1.0);
                let phi = r.acos() / 3.0;
                let e1 = qm + 2.0 * p * phi.cos();
                let e3 = qm + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
                (e3, e1)
            };
            let (lo, hi) = eig_extents(&m).unwrap();
            prop_assert!((lo - elo).abs() < 1e-10, "lo {} vs {}", lo, elo);
            prop_assert!((hi - ehi).abs() < 1e-10, "hi {} vs {}", hi, ehi);
        }

        #[test]
        fn nsd_both_signs_only_near_zero(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
            let m = sym2(a, b, c);
            let tol = 1e-9;
            let both = is_nsd(&m, tol).unwrap().holds() && is_nsd(&m.neg(), tol).unwrap().holds();
            if both {
                let (lo, hi) = eig_extents(&m).unwrap();
                prop_assert!(hi.abs() <= 2e-9 && lo.abs() <= 2e-9);
            }
        }

        #[test]
        fn weighted_norm_nonnegative(v in prop::array::uniform2(-5.0f64..5.0), d in 0.1f64..3.0, off in -0.09f64..0.09) {
            let p = sym2(d, off, 0.1);
            prop_assert!(weighted_norm_sq(&v, &p).unwrap() >= -1e-12);
        }
    }
}
