//! Slow, simple reference computations for the test suites. Nothing here
//! calls into `nustab`, so agreement with the library is a real check.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `e^M` from a 200-term Taylor series of `M / 2^s` (with `s` chosen so the
/// scaled Frobenius norm is at most 0.5), squared `s` times.
pub fn taylor_expm(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let norm = m.norm();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = m * 2f64.powi(-s);
    let mut term = Matrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..200 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `sum_k A^k h^(k+1) / (k+1)!`, term by term (200 terms).
pub fn taylor_expm_integral(a: &Matrix, h: f64) -> Matrix {
    let n = a.nrows();
    let mut term = Matrix::identity(n, n) * h;
    let mut sum = term.clone();
    for k in 1..200 {
        term = &term * a * h / (k + 1) as f64;
        sum += &term;
    }
    sum
}

/// Propagate `x' = A x + B u` with `u` held, by `substeps` exact sub-steps
/// built from the Taylor oracles.
pub fn held_input_propagate(a: &Matrix, b: &Matrix, x: &Vector, u: &Vector, h: f64, substeps: usize) -> Vector {
    let dt = h / substeps as f64;
    let f = taylor_expm(&(a * dt));
    let g = taylor_expm_integral(a, dt) * b;
    let bu = &g * u;
    let mut state = x.clone();
    for _ in 0..substeps {
        state = &f * &state + &bu;
    }
    state
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(sym: &Matrix) -> Vec<f64> {
    let n = sym.nrows();
    let mut a = (sym + sym.transpose()) * 0.5;
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= 1e-300 || off.sqrt() <= f64::EPSILON * 1e-3 * a.norm() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Singular values by one-sided (Hestenes) Jacobi orthogonalization,
/// ascending.
pub fn jacobi_singular_values(m: &Matrix) -> Vec<f64> {
    let mut u = m.clone();
    let n = u.ncols();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = u.column(p).norm_squared();
                let beta: f64 = u.column(q).norm_squared();
                let gamma: f64 = u.column(p).dot(&u.column(q));
                if gamma.abs() <= 1e-17 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..u.nrows() {
                    let up = u[(k, p)];
                    let uq = u[(k, q)];
                    u[(k, p)] = c * up - s * uq;
                    u[(k, q)] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
    sv.sort_by(f64::total_cmp);
    sv
}
