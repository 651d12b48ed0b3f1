use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iioss::bench::adt_dependencies;
use iioss::builtins::{builtin_model, default_box, default_grid};
use iioss::discretize::{consistency_defect, jacobians_rk2, step, SchemeId};
use iioss::model::{parse_model, GridSpec, SystemSpec};

const K1: f64 = 0.16;
const K2: f64 = 0.0064;

fn names(vars: impl IntoIterator<Item = iioss::model::Var>) -> Vec<String> {
    vars.into_iter().map(|v| v.to_string()).collect()
}

#[test]
fn reactor_right_hand_side() {
    let sys = builtin_model("reactor").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let x = [rng.gen_range(0.1..0.5), rng.gen_range(0.1..0.5)];
        let u = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
        let f = sys.eval_f(&x, &u, &[]).unwrap();
        let y = sys.eval_h(&x, &u, &[]).unwrap();
        assert!((f[0] - (-2.0 * K1 * x[0] * x[0] + 2.0 * K2 * x[1] + u[0])).abs() < 1e-15);
        assert!((f[1] - (K1 * x[0] * x[0] - K2 * x[1] + u[1])).abs() < 1e-15);
        assert!((y[0] - (x[0] + x[1] + u[2])).abs() < 1e-15);
        let (_, a, b) = sys.eval_f_jac(&x, &u, &[]).unwrap();
        let a_want = DMatrix::from_row_slice(2, 2, &[-4.0 * K1 * x[0], 2.0 * K2, 2.0 * K1 * x[0], -K2]);
        assert!((a - a_want).norm() < 1e-15);
        assert_eq!(b, DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));
    }
}

#[test]
fn reactor_linearization_dependencies() {
    let sys = builtin_model("reactor").unwrap();
    assert_eq!(names(sys.ct_jacobian_dependencies()), ["x1"]);
    assert_eq!(names(adt_dependencies(&sys)), ["x1", "x2", "u1"]);
}

#[test]
fn reactor_box_with_hundred_points() {
    let sys = builtin_model("reactor").unwrap();
    let g = default_grid(&sys, "reactor", 100).unwrap();
    assert_eq!(g.total_points(), 100u64.pow(5));
    assert_eq!(
        default_box("reactor").unwrap(),
        [(0.1, 0.5), (0.1, 0.5), (-0.1, 0.1), (-0.1, 0.1), (-0.1, 0.1)]
    );
}

#[test]
fn sine_jacobian_is_one_plus_cos() {
    let sys = builtin_model("sine").unwrap();
    for k in 0..=40 {
        let x = -10.0 + 0.5 * k as f64;
        let (_, a, _) = sys.eval_f_jac(&[x], &[], &[]).unwrap();
        assert!((a[(0, 0)] - (1.0 + x.cos())).abs() < 1e-15);
    }
}

#[test]
fn euler_defect_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for name in ["reactor", "scalar_linear", "sine", "zero"] {
        let sys = builtin_model(name).unwrap();
        let g = default_grid(&sys, name, 2).unwrap();
        for _ in 0..50 {
            let (x, u, d) = random_point(&g, &mut rng);
            let tau = 10f64.powf(rng.gen_range(-4.0..0.5));
            let e = consistency_defect(&sys, SchemeId::Euler, &x, &u, &d, tau).unwrap();
            assert!(e <= 1e-14, "{name}: {e}");
        }
    }
}

fn random_point(g: &GridSpec, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (lo, hi) = g.bounds();
    let z: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect();
    g.split(&z)
}

fn fd_jacobian(sys: &SystemSpec, x: &[f64], u: &[f64], d: &[f64], h: f64) -> DMatrix<f64> {
    let (n, q) = (sys.n(), sys.q());
    let mut out = DMatrix::zeros(n, n + q);
    for j in 0..n + q {
        let bump = |s: f64| {
            let (mut xp, mut up) = (x.to_vec(), u.to_vec());
            if j < n {
                xp[j] += s;
            } else {
                up[j - n] += s;
            }
            sys.eval_f(&xp, &up, d).unwrap()
        };
        out.set_column(j, &((bump(h) - bump(-h)) / (2.0 * h)));
    }
    out
}

#[test]
fn every_operator_differentiates_correctly() {
    let sys = parse_model(
        "dims 2 2 1 1\n\
         f1 = sin(x1)*exp(-x2) + tanh(u1*d1) - x1^3/(1 + x2^2)\n\
         f2 = sqrt(2 + cos(x1*u2)) - (x2 - u1)^(-2) + -u2\n\
         h1 = x1",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let u = [rng.gen_range(3.0..4.0), rng.gen_range(-2.0..2.0)];
        let d = [rng.gen_range(-1.0..1.0)];
        let (_, a, b) = sys.eval_f_jac(&x, &u, &d).unwrap();
        let ad = iioss::linalg::hcat(&a, &b);
        let fd = fd_jacobian(&sys, &x, &u, &d, 1e-6);
        let rel = (&ad - &fd).norm() / ad.norm();
        assert!(rel < 1e-6, "relative error {rel}");
    }
}

#[test]
fn rk2_step_and_jacobians_by_hand() {
    // scalar x' = -x^2 + u: mid = x + tau/2 (-x^2 + u)
    let sys = parse_model("dims 1 1 0 1\nf1 = -x1^2 + u1\nh1 = x1").unwrap();
    let (x, u, tau) = (0.7, 0.2, 0.3);
    let f = -x * x + u;
    let mid = x + 0.5 * tau * f;
    let next = step(&sys, SchemeId::Rk2, &[x], &[u], &[], tau).unwrap();
    assert!((next[0] - (x + tau * (-mid * mid + u))).abs() < 1e-15);
    let j = jacobians_rk2(&sys, &[x], &[u], &[], tau).unwrap();
    // d next / dx = 1 + tau (-2 mid)(1 + tau/2 (-2x)), d next / du = tau (1 + (-2 mid) tau/2)
    let da = tau * (-2.0 * mid) * (1.0 - tau * x);
    let db = tau * (1.0 - mid * tau);
    assert!((j.delta_a[(0, 0)] - da).abs() < 1e-15);
    assert!((j.b_tilde[(0, 0)] - db).abs() < 1e-15);
}

#[test]
fn rk2_defect_is_first_order() {
    let sys = builtin_model("reactor").unwrap();
    let (x, u) = ([0.4, 0.2], [0.05, -0.02, 0.0]);
    let e1 = consistency_defect(&sys, SchemeId::Rk2, &x, &u, &[], 1e-2).unwrap();
    let e2 = consistency_defect(&sys, SchemeId::Rk2, &x, &u, &[], 5e-3).unwrap();
    let ratio = e1 / e2;
    assert!((ratio - 2.0).abs() < 1e-2, "ratio {ratio}");
}
