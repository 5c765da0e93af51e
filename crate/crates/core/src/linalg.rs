//! Small dense linear-algebra helpers shared by the synthesis modules.

use nalgebra::{Complex, ComplexField, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative threshold used by the numerical rank rule.
pub const RANK_RTOL: f64 = 1e-12;

/// Numerical rank: count of singular values above `max(r, c) * sigma_max * 1e-12`.
pub fn numerical_rank<T>(m: &DMatrix<T>) -> usize
where
    T: ComplexField<RealField = f64>,
{
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * smax * RANK_RTOL;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Singular values sorted ascending.
pub fn singular_values_asc(m: &Matrix) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().singular_values().iter().cloned().collect();
    sv.sort_by(f64::total_cmp);
    sv
}

/// Largest singular value (spectral norm).
pub fn sigma_max(m: &Matrix) -> f64 {
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// 2-norm condition number; infinite for singular input.
pub fn cond2(m: &Matrix) -> f64 {
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Symmetric eigendecomposition with eigenvalues ascending and eigenvector
/// columns permuted to match. Each eigenvector is sign-normalized so that its
/// first entry of significant magnitude is positive.
pub fn sym_eig_sorted(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        normalize_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Flip `v` so its first component with magnitude above `1e-12 * max|v_i|`
/// is positive.
pub fn normalize_sign(v: &mut Vector) {
    let scale = v.amax();
    if scale == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Eigenvalues of a general real square matrix via the real Schur form.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::PostCheck("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

/// Unit-norm null vector of a (nearly) singular square matrix: the right
/// singular vector of its smallest singular value.
pub fn null_vector(m: &Matrix) -> Vector {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let (idx, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, &s)| if s < bv { (i, s) } else { (bi, bv) });
    let mut v = Vector::from_iterator(n, v_t.row(idx).iter().cloned());
    v /= v.norm();
    v
}

/// Build a matrix from row-major nested rows, checking rectangularity.
pub fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let r = rows.len();
    if r == 0 {
        return Err(Error::Dimension(format!("{what} has no rows")));
    }
    let c = rows[0].len();
    if c == 0 {
        return Err(Error::Dimension(format!("{what} has empty rows")));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(Error::Dimension(format!("{what} row {i} has {} entries, expected {c}", row.len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("{what} contains non-finite entries")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_rank_one_outer_product() {
        let u = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &u * u.transpose();
        assert_eq!(numerical_rank(&m), 1);
        assert_eq!(numerical_rank(&Matrix::identity(4, 4)), 4);
        assert_eq!(numerical_rank(&Matrix::zeros(2, 3)), 0);
    }

    #[test]
    fn complex_rank() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[Complex::new(1.0, 1.0), Complex::new(2.0, 2.0), Complex::new(1.0, 0.0), Complex::new(2.0, 0.0)],
        );
        assert_eq!(numerical_rank(&m), 1);
    }

    #[test]
    fn sorted_symmetric_eigen() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = sym_eig_sorted(&m);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        let rec = &vecs * Matrix::from_diagonal(&Vector::from_vec(vals)) * vecs.transpose();
        assert!(max_abs(&(rec - m)) < 1e-14);
        assert!(vecs[(0, 0)] > 0.0 && vecs[(0, 1)] > 0.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(from_rows(&rows, "A"), Err(Error::Dimension(_))));
    }
}
