//! Expression trees for system dynamics and outputs, and their forward-mode
//! evaluation.
//!
//! An [`Expr`] is compiled into a postfix [`Tape`] once; the tape is then
//! evaluated over any [`Scalar`] type. Plain `f64` gives values, [`Dual`]
//! gives values together with exact first derivatives.

use std::collections::BTreeSet;
use std::fmt;

use smallvec::SmallVec;

/// Which argument block a variable belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    /// State `x`.
    State,
    /// Input `u`.
    Input,
    /// Time-varying parameter `d`.
    Param,
}

/// A variable reference with a zero-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub kind: VarKind,
    pub index: usize,
}

impl Var {
    pub fn x(index: usize) -> Self {
        Var { kind: VarKind::State, index }
    }

    pub fn u(index: usize) -> Self {
        Var { kind: VarKind::Input, index }
    }

    pub fn d(index: usize) -> Self {
        Var { kind: VarKind::Param, index }
    }

    /// Position in the flat `(x, u, d)` argument vector.
    pub fn slot(&self, n: usize, q: usize) -> usize {
        match self.kind {
            VarKind::State => self.index,
            VarKind::Input => n + self.index,
            VarKind::Param => n + q + self.index,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            VarKind::State => 'x',
            VarKind::Input => 'u',
            VarKind::Param => 'd',
        };
        write!(f, "{}{}", prefix, self.index + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
}

impl UnaryOp {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "exp" => Some(UnaryOp::Exp),
            "tanh" => Some(UnaryOp::Tanh),
            "sqrt" => Some(UnaryOp::Sqrt),
            _ => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    /// Integer power.
    Pow(Box<Expr>, i32),
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn unary(op: UnaryOp, arg: Expr) -> Self {
        Expr::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn powi(base: Expr, exp: i32) -> Self {
        Expr::Pow(Box::new(base), exp)
    }

    /// All variables referenced anywhere in the tree.
    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn depends_on_xu(&self) -> bool {
        self.variables().iter().any(|v| v.kind != VarKind::Param)
    }

    /// Conservative structural test for affinity in `(x, u)`.
    ///
    /// Subtrees that only involve `d` and constants count as coefficients.
    /// A `false` answer does not prove the expression is non-affine
    /// (`x1*x1 - x1*x1` is rejected).
    pub fn is_affine_in_xu(&self) -> bool {
        if !self.depends_on_xu() {
            return true;
        }
        match self {
            Expr::Const(_) => true,
            Expr::Var(_) => true,
            Expr::Unary(UnaryOp::Neg, a) => a.is_affine_in_xu(),
            Expr::Unary(_, _) => false,
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, a, b) => {
                a.is_affine_in_xu() && b.is_affine_in_xu()
            }
            Expr::Binary(BinaryOp::Mul, a, b) => {
                (!a.depends_on_xu() && b.is_affine_in_xu())
                    || (!b.depends_on_xu() && a.is_affine_in_xu())
            }
            Expr::Binary(BinaryOp::Div, a, b) => !b.depends_on_xu() && a.is_affine_in_xu(),
            Expr::Pow(a, k) => *k == 1 && a.is_affine_in_xu(),
        }
    }

    /// Variables whose value influences the gradient of this expression with
    /// respect to `(x, u)`, i.e. variables that appear inside a non-affine
    /// context. Over-approximates like [`Expr::is_affine_in_xu`].
    pub fn gradient_dependencies(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_grad_deps(&mut out);
        out
    }

    fn collect_grad_deps(&self, out: &mut BTreeSet<Var>) {
        if self.is_affine_in_xu() {
            // coefficients of an affine form may still depend on d
            for v in self.variables() {
                if v.kind == VarKind::Param {
                    out.insert(v);
                }
            }
            return;
        }
        match self {
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, a, b) => {
                a.collect_grad_deps(out);
                b.collect_grad_deps(out);
            }
            Expr::Unary(UnaryOp::Neg, a) => a.collect_grad_deps(out),
            _ => out.extend(self.variables()),
        }
    }

    pub fn compile(&self, n: usize, q: usize) -> Tape {
        let mut ops = Vec::new();
        self.emit(n, q, &mut ops);
        Tape { ops }
    }

    fn emit(&self, n: usize, q: usize, ops: &mut Vec<Op>) {
        // Fold variable-free subtrees; ones that fail keep their error for
        // evaluation time.
        if !matches!(self, Expr::Const(_)) && self.variables().is_empty() {
            let mut sub = Vec::new();
            self.emit_raw(n, q, &mut sub);
            if let Ok(v) = (Tape { ops: sub }).eval::<f64>(&[]) {
                ops.push(Op::Const(v));
                return;
            }
        }
        self.emit_raw(n, q, ops);
    }

    fn emit_raw(&self, n: usize, q: usize, ops: &mut Vec<Op>) {
        match self {
            Expr::Const(c) => ops.push(Op::Const(*c)),
            Expr::Var(v) => ops.push(Op::Load(v.slot(n, q))),
            Expr::Unary(op, a) => {
                a.emit(n, q, ops);
                ops.push(Op::Unary(*op));
            }
            Expr::Binary(op, a, b) => {
                a.emit(n, q, ops);
                b.emit(n, q, ops);
                ops.push(Op::Binary(*op));
            }
            Expr::Pow(a, k) => {
                a.emit(n, q, ops);
                ops.push(Op::Powi(*k));
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinaryOp::Add => '+',
                    BinaryOp::Sub => '-',
                    BinaryOp::Mul => '*',
                    BinaryOp::Div => '/',
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Pow(a, k) => write!(f, "{a}^({k})"),
        }
    }
}

/// Why an expression could not be evaluated at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainFault {
    SqrtNegative,
    SqrtZero,
    DivisionByZero,
    NonFinite,
}

impl fmt::Display for DomainFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainFault::SqrtNegative => "sqrt of a negative argument",
            DomainFault::SqrtZero => "sqrt is not differentiable at 0",
            DomainFault::DivisionByZero => "division by zero",
            DomainFault::NonFinite => "non-finite intermediate value",
        };
        f.write_str(s)
    }
}

/// Scalar types a [`Tape`] can be evaluated over.
pub trait Scalar: Clone {
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    /// Caller guarantees `rhs.value() != 0`.
    fn div(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;
    fn powi(&self, k: i32) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn tanh(&self) -> Self;
    /// Caller guarantees `self.value() > 0`.
    fn sqrt(&self) -> Self;
    fn is_finite(&self) -> bool;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn powi(&self, k: i32) -> Self {
        f64::powi(*self, k)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

/// Gradient storage; inline up to 12 directions.
pub type Grad = SmallVec<[f64; 12]>;

/// First-order dual number with a vector of tangents.
///
/// Constants carry an empty tangent vector, which behaves as all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub val: f64,
    pub grad: Grad,
}

impl Dual {
    pub fn new(val: f64, grad: Grad) -> Self {
        Dual { val, grad }
    }

    /// Independent variable `direction` out of `dim`.
    pub fn seed(val: f64, direction: usize, dim: usize) -> Self {
        let mut grad: Grad = SmallVec::from_elem(0.0, dim);
        grad[direction] = 1.0;
        Dual { val, grad }
    }

    /// Tangent in direction `i` (zero when absent).
    pub fn d(&self, i: usize) -> f64 {
        self.grad.get(i).copied().unwrap_or(0.0)
    }

    fn scaled(&self, val: f64, k: f64) -> Dual {
        Dual {
            val,
            grad: self.grad.iter().map(|g| g * k).collect(),
        }
    }

    fn combine(&self, rhs: &Dual, val: f64, ka: f64, kb: f64) -> Dual {
        let grad = match (self.grad.len(), rhs.grad.len()) {
            (_, 0) => self.grad.iter().map(|g| ka * g).collect(),
            (0, _) => rhs.grad.iter().map(|g| kb * g).collect(),
            (a, b) if a == b => self
                .grad
                .iter()
                .zip(&rhs.grad)
                .map(|(g, h)| ka * g + kb * h)
                .collect(),
            (a, b) => (0..a.max(b)).map(|i| ka * self.d(i) + kb * rhs.d(i)).collect(),
        };
        Dual { val, grad }
    }
}

impl Scalar for Dual {
    fn constant(v: f64) -> Self {
        Dual {
            val: v,
            grad: SmallVec::new(),
        }
    }
    fn value(&self) -> f64 {
        self.val
    }
    fn add(&self, rhs: &Self) -> Self {
        self.combine(rhs, self.val + rhs.val, 1.0, 1.0)
    }
    fn sub(&self, rhs: &Self) -> Self {
        self.combine(rhs, self.val - rhs.val, 1.0, -1.0)
    }
    fn mul(&self, rhs: &Self) -> Self {
        self.combine(rhs, self.val * rhs.val, rhs.val, self.val)
    }
    fn div(&self, rhs: &Self) -> Self {
        let v = self.val / rhs.val;
        self.combine(rhs, v, 1.0 / rhs.val, -v / rhs.val)
    }
    fn neg(&self) -> Self {
        self.scaled(-self.val, -1.0)
    }
    fn powi(&self, k: i32) -> Self {
        if k == 0 {
            return Dual::constant(1.0);
        }
        let v = self.val.powi(k);
        self.scaled(v, k as f64 * self.val.powi(k - 1))
    }
    fn sin(&self) -> Self {
        self.scaled(self.val.sin(), self.val.cos())
    }
    fn cos(&self) -> Self {
        self.scaled(self.val.cos(), -self.val.sin())
    }
    fn exp(&self) -> Self {
        let e = self.val.exp();
        self.scaled(e, e)
    }
    fn tanh(&self) -> Self {
        let t = self.val.tanh();
        self.scaled(t, 1.0 - t * t)
    }
    fn sqrt(&self) -> Self {
        let s = self.val.sqrt();
        self.scaled(s, 0.5 / s)
    }
    fn is_finite(&self) -> bool {
        self.val.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Load(usize),
    Unary(UnaryOp),
    Binary(BinaryOp),
    Powi(i32),
}

/// Postfix program for one expression over the flat `(x, u, d)` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn eval<S: Scalar>(&self, args: &[S]) -> Result<S, DomainFault> {
        let mut stack: SmallVec<[S; 8]> = SmallVec::new();
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => S::constant(c),
                Op::Load(slot) => args[slot].clone(),
                Op::Unary(u) => {
                    let a = stack.pop().expect("tape underflow");
                    match u {
                        UnaryOp::Neg => a.neg(),
                        UnaryOp::Sin => a.sin(),
                        UnaryOp::Cos => a.cos(),
                        UnaryOp::Exp => a.exp(),
                        UnaryOp::Tanh => a.tanh(),
                        UnaryOp::Sqrt => {
                            let av = a.value();
                            if av < 0.0 {
                                return Err(DomainFault::SqrtNegative);
                            }
                            if av == 0.0 {
                                return Err(DomainFault::SqrtZero);
                            }
                            a.sqrt()
                        }
                    }
                }
                Op::Binary(b) => {
                    let rhs = stack.pop().expect("tape underflow");
                    let lhs = stack.pop().expect("tape underflow");
                    match b {
                        BinaryOp::Add => lhs.add(&rhs),
                        BinaryOp::Sub => lhs.sub(&rhs),
                        BinaryOp::Mul => lhs.mul(&rhs),
                        BinaryOp::Div => {
                            if rhs.value() == 0.0 {
                                return Err(DomainFault::DivisionByZero);
                            }
                            lhs.div(&rhs)
                        }
                    }
                }
                Op::Powi(k) => {
                    let a = stack.pop().expect("tape underflow");
                    if k < 0 && a.value() == 0.0 {
                        return Err(DomainFault::DivisionByZero);
                    }
                    a.powi(k)
                }
            };
            if !v.is_finite() {
                return Err(DomainFault::NonFinite);
            }
            stack.push(v);
        }
        stack.pop().ok_or(DomainFault::NonFinite)
    }
}

/// Value stack and row-major tangent stack reused across evaluations.
#[derive(Debug, Default, Clone)]
pub struct JacWorkspace {
    vals: Vec<f64>,
    rows: Vec<f64>,
}

impl JacWorkspace {
    /// Room for tapes of up to `ops` operations at gradient width `width`.
    pub fn with_capacity(ops: usize, width: usize) -> Self {
        JacWorkspace {
            vals: Vec::with_capacity(ops),
            rows: Vec::with_capacity(ops * width),
        }
    }
}

impl Tape {
    /// Value and gradient with respect to the first `width` argument slots,
    /// written into `grad`. Same results and domain checks as evaluating
    /// over [`Dual`], without a heap-backed number per stack entry.
    pub fn eval_grad(
        &self,
        args: &[f64],
        width: usize,
        ws: &mut JacWorkspace,
        grad: &mut [f64],
    ) -> Result<f64, DomainFault> {
        let w = width;
        ws.vals.clear();
        ws.rows.clear();
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    ws.vals.push(c);
                    ws.rows.resize(ws.rows.len() + w, 0.0);
                }
                Op::Load(slot) => {
                    ws.vals.push(args[slot]);
                    let base = ws.rows.len();
                    ws.rows.resize(base + w, 0.0);
                    if slot < w {
                        ws.rows[base + slot] = 1.0;
                    }
                }
                Op::Unary(u) => {
                    let top = ws.vals.len() - 1;
                    let a = ws.vals[top];
                    let (v, k) = match u {
                        UnaryOp::Neg => (-a, -1.0),
                        UnaryOp::Sin => (a.sin(), a.cos()),
                        UnaryOp::Cos => (a.cos(), -a.sin()),
                        UnaryOp::Exp => {
                            let e = a.exp();
                            (e, e)
                        }
                        UnaryOp::Tanh => {
                            let t = a.tanh();
                            (t, 1.0 - t * t)
                        }
                        UnaryOp::Sqrt => {
                            if a < 0.0 {
                                return Err(DomainFault::SqrtNegative);
                            }
                            if a == 0.0 {
                                return Err(DomainFault::SqrtZero);
                            }
                            let r = a.sqrt();
                            (r, 0.5 / r)
                        }
                    };
                    ws.vals[top] = v;
                    ws.rows[top * w..].iter_mut().for_each(|g| *g *= k);
                }
                Op::Binary(b) => {
                    let rhs = ws.vals.pop().expect("tape underflow");
                    let top = ws.vals.len() - 1;
                    let lhs = ws.vals[top];
                    let (v, ka, kb) = match b {
                        BinaryOp::Add => (lhs + rhs, 1.0, 1.0),
                        BinaryOp::Sub => (lhs - rhs, 1.0, -1.0),
                        BinaryOp::Mul => (lhs * rhs, rhs, lhs),
                        BinaryOp::Div => {
                            if rhs == 0.0 {
                                return Err(DomainFault::DivisionByZero);
                            }
                            let v = lhs / rhs;
                            (v, 1.0 / rhs, -v / rhs)
                        }
                    };
                    ws.vals[top] = v;
                    let (lo, hi) = ws.rows.split_at_mut((top + 1) * w);
                    lo[top * w..]
                        .iter_mut()
                        .zip(&hi[..w])
                        .for_each(|(g, h)| *g = ka * *g + kb * h);
                    ws.rows.truncate((top + 1) * w);
                }
                Op::Powi(k) => {
                    let top = ws.vals.len() - 1;
                    let a = ws.vals[top];
                    if k < 0 && a == 0.0 {
                        return Err(DomainFault::DivisionByZero);
                    }
                    let row = &mut ws.rows[top * w..];
                    if k == 0 {
                        ws.vals[top] = 1.0;
                        row.iter_mut().for_each(|g| *g = 0.0);
                    } else {
                        ws.vals[top] = a.powi(k);
                        let s = k as f64 * a.powi(k - 1);
                        row.iter_mut().for_each(|g| *g *= s);
                    }
                }
            }
            let top = ws.vals.len() - 1;
            if !ws.vals[top].is_finite() || !ws.rows[top * w..].iter().all(|g| g.is_finite()) {
                return Err(DomainFault::NonFinite);
            }
        }
        let v = ws.vals.pop().ok_or(DomainFault::NonFinite)?;
        grad[..w].copy_from_slice(&ws.rows[ws.rows.len() - w..]);
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::var(Var::x(i))
    }
    fn u(i: usize) -> Expr {
        Expr::var(Var::u(i))
    }
    fn d(i: usize) -> Expr {
        Expr::var(Var::d(i))
    }

    #[test]
    fn dual_product_rule() {
        // f = x0^2 * sin(x1)
        let e = Expr::binary(
            BinaryOp::Mul,
            Expr::powi(x(0), 2),
            Expr::unary(UnaryOp::Sin, x(1)),
        );
        let tape = e.compile(2, 0);
        let args = [Dual::seed(1.5, 0, 2), Dual::seed(0.3, 1, 2)];
        let r = tape.eval(&args).unwrap();
        assert!((r.val - 2.25 * 0.3f64.sin()).abs() < 1e-15);
        assert!((r.d(0) - 3.0 * 0.3f64.sin()).abs() < 1e-15);
        assert!((r.d(1) - 2.25 * 0.3f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn domain_faults() {
        let sq = Expr::unary(UnaryOp::Sqrt, x(0)).compile(1, 0);
        assert_eq!(sq.eval(&[-1.0]), Err(DomainFault::SqrtNegative));
        assert_eq!(sq.eval(&[0.0]), Err(DomainFault::SqrtZero));
        let dv = Expr::binary(BinaryOp::Div, Expr::constant(1.0), x(0)).compile(1, 0);
        assert_eq!(dv.eval(&[0.0]), Err(DomainFault::DivisionByZero));
        let inv = Expr::powi(x(0), -2).compile(1, 0);
        assert_eq!(inv.eval(&[0.0]), Err(DomainFault::DivisionByZero));
        let big = Expr::unary(UnaryOp::Exp, x(0)).compile(1, 0);
        assert_eq!(big.eval(&[1000.0]), Err(DomainFault::NonFinite));
    }

    #[test]
    fn affinity() {
        let lin = Expr::binary(
            BinaryOp::Add,
            Expr::binary(BinaryOp::Mul, d(0), x(0)),
            Expr::binary(BinaryOp::Div, u(0), Expr::constant(2.0)),
        );
        assert!(lin.is_affine_in_xu());
        let sq = Expr::powi(x(0), 2);
        assert!(!sq.is_affine_in_xu());
        let dsin = Expr::binary(BinaryOp::Mul, Expr::unary(UnaryOp::Sin, d(0)), x(1));
        assert!(dsin.is_affine_in_xu());
    }

    #[test]
    fn gradient_dependencies_skip_affine_terms() {
        // -0.32*x1^2 + 0.0128*x2 + u1 : gradient depends on x1 only
        let e = Expr::binary(
            BinaryOp::Add,
            Expr::binary(
                BinaryOp::Add,
                Expr::binary(BinaryOp::Mul, Expr::constant(-0.32), Expr::powi(x(0), 2)),
                Expr::binary(BinaryOp::Mul, Expr::constant(0.0128), x(1)),
            ),
            u(0),
        );
        let deps: Vec<_> = e.gradient_dependencies().into_iter().collect();
        assert_eq!(deps, vec![Var::x(0)]);
    }

    #[test]
    fn dense_gradient_matches_dual() {
        let src = Expr::binary(
            BinaryOp::Div,
            Expr::binary(
                BinaryOp::Mul,
                Expr::powi(x(0), 3),
                Expr::unary(UnaryOp::Tanh, Expr::binary(BinaryOp::Sub, x(1), u(0))),
            ),
            Expr::unary(UnaryOp::Exp, Expr::binary(BinaryOp::Add, d(0), x(0))),
        );
        let tape = src.compile(2, 1);
        let vals = [0.7, -0.4, 1.3, 0.2];
        let duals: Vec<Dual> = vals
            .iter()
            .enumerate()
            .map(|(k, &v)| if k < 3 { Dual::seed(v, k, 3) } else { Dual::constant(v) })
            .collect();
        let want = tape.eval(&duals).unwrap();
        let mut ws = JacWorkspace::default();
        let mut grad = [0.0; 3];
        let got = tape.eval_grad(&vals, 3, &mut ws, &mut grad).unwrap();
        assert_eq!(got, want.val);
        for (k, g) in grad.iter().enumerate() {
            assert!((g - want.d(k)).abs() <= 1e-15 * want.d(k).abs().max(1.0));
        }
    }
}
