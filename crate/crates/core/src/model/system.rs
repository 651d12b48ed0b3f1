use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use smallvec::SmallVec;

use crate::error::{EvalError, ExprRef, ModelError};
use crate::model::expr::{Dual, Expr, JacWorkspace, Scalar, Tape, Var, VarKind};

/// Dimensions `(n, q, m, p)` of state, input, parameter and output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dims {
    pub n: usize,
    pub q: usize,
    pub m: usize,
    pub p: usize,
}

impl Dims {
    /// Number of grid coordinates `n + q + m`.
    pub fn coords(&self) -> usize {
        self.n + self.q + self.m
    }
}

/// `(f, A, B)` at one point.
pub type FJacobians = (DVector<f64>, DMatrix<f64>, DMatrix<f64>);

/// A parsed continuous-time model `x' = f(x,u,d)`, `y = h(x,u,d)`.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    name: String,
    dims: Dims,
    f: Vec<Expr>,
    h: Vec<Expr>,
    f_tapes: Vec<Tape>,
    h_tapes: Vec<Tape>,
}

/// Values and exact Jacobians of the model at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEval {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    /// `f(x,u,d)`.
    pub f: DVector<f64>,
    /// `h(x,u,d)`.
    pub y: DVector<f64>,
    /// `df/dx`, n x n.
    pub a: DMatrix<f64>,
    /// `df/du`, n x q.
    pub b: DMatrix<f64>,
    /// `dh/dx`, p x n.
    pub c: DMatrix<f64>,
    /// `dh/du`, p x q.
    pub dmat: DMatrix<f64>,
}

impl PointEval {
    /// `[A B]`, n x (n+q).
    pub fn ab(&self) -> DMatrix<f64> {
        crate::linalg::hcat(&self.a, &self.b)
    }
}

impl SystemSpec {
    pub fn new(name: &str, dims: Dims, f: Vec<Expr>, h: Vec<Expr>) -> Result<Self, ModelError> {
        if dims.n == 0 || dims.p == 0 {
            return Err(ModelError::DimensionMismatch(
                "state and output dimensions must be at least 1".into(),
            ));
        }
        if f.len() != dims.n || h.len() != dims.p {
            return Err(ModelError::DimensionMismatch(format!(
                "expected {} dynamics and {} output expressions, got {} and {}",
                dims.n,
                dims.p,
                f.len(),
                h.len()
            )));
        }
        for v in f.iter().chain(h.iter()).flat_map(|e| e.variables()) {
            let limit = match v.kind {
                VarKind::State => dims.n,
                VarKind::Input => dims.q,
                VarKind::Param => dims.m,
            };
            if v.index >= limit {
                return Err(ModelError::UndeclaredVariable {
                    line: 0,
                    column: 0,
                    name: v.to_string(),
                });
            }
        }
        let f_tapes = f.iter().map(|e| e.compile(dims.n, dims.q)).collect();
        let h_tapes = h.iter().map(|e| e.compile(dims.n, dims.q)).collect();
        Ok(SystemSpec {
            name: name.to_string(),
            dims,
            f,
            h,
            f_tapes,
            h_tapes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.dims.n
    }

    pub fn q(&self) -> usize {
        self.dims.q
    }

    pub fn m(&self) -> usize {
        self.dims.m
    }

    pub fn p(&self) -> usize {
        self.dims.p
    }

    pub fn dynamics(&self) -> &[Expr] {
        &self.f
    }

    pub fn outputs(&self) -> &[Expr] {
        &self.h
    }

    /// Whether every output expression is (structurally) affine in `(x, u)`.
    pub fn output_is_affine(&self) -> bool {
        self.h.iter().all(Expr::is_affine_in_xu)
    }

    fn check_arity(&self, x: &[f64], u: &[f64], d: &[f64]) -> Result<(), EvalError> {
        for (block, expected, got) in [
            ("x", self.dims.n, x.len()),
            ("u", self.dims.q, u.len()),
            ("d", self.dims.m, d.len()),
        ] {
            if expected != got {
                return Err(EvalError::Arity {
                    block,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Evaluate `f` over an arbitrary scalar type; `args` is the flat
    /// `(x, u, d)` vector.
    pub fn eval_f_generic<S: Scalar>(&self, args: &[S]) -> Result<Vec<S>, EvalError> {
        self.f_tapes
            .iter()
            .enumerate()
            .map(|(i, t)| {
                t.eval(args).map_err(|fault| EvalError::Domain {
                    expr: ExprRef::Dynamics(i),
                    fault,
                })
            })
            .collect()
    }

    pub fn eval_h_generic<S: Scalar>(&self, args: &[S]) -> Result<Vec<S>, EvalError> {
        self.h_tapes
            .iter()
            .enumerate()
            .map(|(j, t)| {
                t.eval(args).map_err(|fault| EvalError::Domain {
                    expr: ExprRef::Output(j),
                    fault,
                })
            })
            .collect()
    }

    fn flat(x: &[f64], u: &[f64], d: &[f64]) -> SmallVec<[f64; 16]> {
        x.iter().chain(u).chain(d).copied().collect()
    }

    /// `f(x,u,d)`.
    pub fn eval_f(&self, x: &[f64], u: &[f64], d: &[f64]) -> Result<DVector<f64>, EvalError> {
        self.check_arity(x, u, d)?;
        let args = Self::flat(x, u, d);
        Ok(DVector::from_vec(self.eval_f_generic(&args)?))
    }

    /// `h(x,u,d)`.
    pub fn eval_h(&self, x: &[f64], u: &[f64], d: &[f64]) -> Result<DVector<f64>, EvalError> {
        self.check_arity(x, u, d)?;
        let args = Self::flat(x, u, d);
        Ok(DVector::from_vec(self.eval_h_generic(&args)?))
    }

    fn seeded(&self, x: &[f64], u: &[f64], d: &[f64]) -> SmallVec<[Dual; 8]> {
        let dim = self.dims.n + self.dims.q;
        x.iter()
            .chain(u)
            .enumerate()
            .map(|(k, &v)| Dual::seed(v, k, dim))
            .chain(d.iter().map(|&v| Dual::constant(v)))
            .collect()
    }

    fn split_jacobian(&self, rows: &[Dual]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (n, q) = (self.dims.n, self.dims.q);
        let val = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.val));
        let jx = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].d(j));
        let ju = DMatrix::from_fn(rows.len(), q, |i, j| rows[i].d(n + j));
        (val, jx, ju)
    }

    /// `f` together with `A = df/dx` and `B = df/du` by forward-mode AD.
    pub fn eval_f_jac(
        &self,
        x: &[f64],
        u: &[f64],
        d: &[f64],
    ) -> Result<FJacobians, EvalError> {
        self.check_arity(x, u, d)?;
        let (n, q) = (self.dims.n, self.dims.q);
        let args = Self::flat(x, u, d);
        let longest = self.f_tapes.iter().map(Tape::len).max().unwrap_or(0);
        let mut ws = JacWorkspace::with_capacity(longest, n + q);
        let mut grad: SmallVec<[f64; 16]> = SmallVec::from_elem(0.0, n + q);
        let mut f = DVector::zeros(n);
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, q);
        for (i, t) in self.f_tapes.iter().enumerate() {
            f[i] = t
                .eval_grad(&args, n + q, &mut ws, &mut grad)
                .map_err(|fault| EvalError::Domain {
                    expr: ExprRef::Dynamics(i),
                    fault,
                })?;
            for j in 0..n {
                a[(i, j)] = grad[j];
            }
            for j in 0..q {
                b[(i, j)] = grad[n + j];
            }
        }
        Ok((f, a, b))
    }

    /// Values and exact Jacobians `A, B, C, D` at `(x, u, d)`.
    pub fn eval_point(&self, x: &[f64], u: &[f64], d: &[f64]) -> Result<PointEval, EvalError> {
        self.check_arity(x, u, d)?;
        let args = self.seeded(x, u, d);
        let (f, a, b) = self.split_jacobian(&self.eval_f_generic(&args)?);
        let (y, c, dmat) = self.split_jacobian(&self.eval_h_generic(&args)?);
        Ok(PointEval {
            x: x.to_vec(),
            u: u.to_vec(),
            d: d.to_vec(),
            f,
            y,
            a,
            b,
            c,
            dmat,
        })
    }

    /// Coordinates (as [`Var`]s) on which `A` and `B` can vary.
    pub fn ct_jacobian_dependencies(&self) -> std::collections::BTreeSet<Var> {
        self.f.iter().flat_map(Expr::gradient_dependencies).collect()
    }
}
