//! Small dense helpers shared by the checkers.

use nalgebra::DMatrix;

/// Largest singular value, via the top eigenvalue of the smaller Gram
/// matrix (closed form up to 2 x 2).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let top = match gram.nrows() {
        1 => gram[(0, 0)],
        2 => {
            let (a, b, c) = (gram[(0, 0)], gram[(1, 0)], gram[(1, 1)]);
            0.5 * (a + c) + (0.5 * (a - c)).hypot(b)
        }
        _ => symmetrize(&gram)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(0.0f64, f64::max),
    };
    top.max(0.0).sqrt()
}

/// Mirror the lower triangle onto the upper one.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.nrows();
    DMatrix::from_fn(k, k, |i, j| if i >= j { m[(i, j)] } else { m[(j, i)] })
}

/// `[a b]` for matrices with equal row counts.
pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = a.nrows();
    let mut out = DMatrix::zeros(rows, a.ncols() + b.ncols());
    out.view_mut((0, 0), (rows, a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (rows, b.ncols())).copy_from(b);
    out
}

pub fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
