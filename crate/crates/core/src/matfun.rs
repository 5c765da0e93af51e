//! Matrix exponential and its integral, used for exact zero-order-hold
//! discretization.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{ContinuousPlant, DiscreteMaps, ModalTransform};

// Padé(13, 13) numerator coefficients; the denominator uses the same values
// with alternating signs.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which Padé(13) meets unit-roundoff backward error.
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &Matrix) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn check_finite(m: &Matrix, stage: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Overflow(format!("non-finite entries after {stage}")))
    }
}

/// `e^M` by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(m: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm needs a square matrix");
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow("input has non-finite entries".into()));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let nrm = norm1(m);
    let squarings = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    if squarings > 1000 {
        return Err(Error::Overflow(format!("norm {nrm:e} is out of range")));
    }
    let a = m * 2f64.powi(-squarings);

    let id = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let c = &PADE13;
    let u_inner = &a6 * (&a6 * c[13] + &a4 * c[11] + &a2 * c[9]);
    let u = &a * (u_inner + &a6 * c[7] + &a4 * c[5] + &a2 * c[3] + &id * c[1]);
    let v_inner = &a6 * (&a6 * c[12] + &a4 * c[10] + &a2 * c[8]);
    let v = v_inner + &a6 * c[6] + &a4 * c[4] + &a2 * c[2] + &id * c[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or_else(|| Error::Overflow("Padé denominator is singular".into()))?;
    check_finite(&r, "Padé evaluation")?;
    for _ in 0..squarings {
        r = &r * &r;
        check_finite(&r, "squaring")?;
    }
    Ok(r)
}

/// `Phi(h) = int_0^h e^{A tau} d tau`, taken from the top-right block of
/// `exp(h [[A, I], [0, 0]])`. Valid for singular `A`.
pub fn expm_integral(a: &Matrix, h: f64) -> Result<Matrix> {
    let n = a.nrows();
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::InvalidValue(format!("integration horizon must be >= 0, got {h}")));
    }
    let mut aug = Matrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * h));
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    aug.view_mut((0, n), (n, n)).scale_mut(h);
    let e = expm(&aug)?;
    Ok(e.view((0, n), (n, n)).into_owned())
}

/// Exact ZOH discretization at period `h`.
pub fn discretize(plant: &ContinuousPlant, h: f64) -> Result<DiscreteMaps> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidValue(format!("sampling period must be > 0, got {h}")));
    }
    let f = expm(&(plant.a() * h))?;
    let g = expm_integral(plant.a(), h)? * plant.b();
    Ok(DiscreteMaps { h, f, g, transformed: false })
}

/// Express maps in modal coordinates: `F^ = T^-1 F T`, `G^ = T^-1 G`.
pub fn transform_maps(maps: &DiscreteMaps, transform: &ModalTransform) -> DiscreteMaps {
    assert!(!maps.transformed, "maps are already in modal coordinates");
    DiscreteMaps {
        h: maps.h,
        f: &transform.t_inv * &maps.f * &transform.t,
        g: &transform.t_inv * &maps.g,
        transformed: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, max_abs};

    fn m(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    fn reference_plant() -> ContinuousPlant {
        ContinuousPlant::new(m(3, 3, &[1.0, -2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.5]), m(3, 1, &[0.5, 2.0, 1.0]))
            .unwrap()
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(expm(&Matrix::zeros(3, 3)).unwrap(), Matrix::identity(3, 3));
    }

    #[test]
    fn exp_of_log_diagonal() {
        let e = expm(&m(2, 2, &[2f64.ln(), 0.0, 0.0, 3f64.ln()])).unwrap();
        assert!(max_abs(&(e - m(2, 2, &[2.0, 0.0, 0.0, 3.0]))) < 1e-14);
    }

    #[test]
    fn rotation_generator() {
        let e = expm(&m(2, 2, &[0.0, -1.0, 1.0, 0.0])).unwrap();
        let (c, s) = (1f64.cos(), 1f64.sin());
        assert!(max_abs(&(e - m(2, 2, &[c, -s, s, c]))) < 1e-15);
    }

    #[test]
    fn non_finite_input_is_overflow() {
        assert!(matches!(expm(&m(1, 1, &[f64::NAN])), Err(Error::Overflow(_))));
        assert!(matches!(expm(&m(1, 1, &[1e6])), Err(Error::Overflow(_))));
    }

    #[test]
    fn integral_cases() {
        let phi = expm_integral(&Matrix::zeros(2, 2), 0.7).unwrap();
        assert!(max_abs(&(phi - Matrix::identity(2, 2) * 0.7)) < 1e-15);
        let phi = expm_integral(&m(1, 1, &[1.0]), 2f64.ln()).unwrap();
        assert!((phi[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn integral_residual_on_example() {
        let p = reference_plant();
        for h in [0.05, 0.3, 1.0, 2.0] {
            let phi = expm_integral(p.a(), h).unwrap();
            let resid = p.a() * &phi + Matrix::identity(3, 3) - expm(&(p.a() * h)).unwrap();
            assert!(max_abs(&resid) < 1e-10, "h = {h}: {:e}", max_abs(&resid));
        }
    }

    #[test]
    fn discretize_analytic_cases() {
        let p = ContinuousPlant::new(Matrix::zeros(2, 2), Matrix::identity(2, 2)).unwrap();
        let d = discretize(&p, 2.0).unwrap();
        assert!(max_abs(&(d.f - Matrix::identity(2, 2))) < 1e-15);
        assert!(max_abs(&(d.g - Matrix::identity(2, 2) * 2.0)) < 1e-15);

        let p = ContinuousPlant::new(m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        let d = discretize(&p, 2f64.ln()).unwrap();
        assert!((d.f[(0, 0)] - 2.0).abs() < 1e-15 && (d.g[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(!d.transformed);
        assert!(discretize(&p, 0.0).is_err());
    }

    #[test]
    fn transform_identity_and_spectrum() {
        let p = reference_plant();
        let maps = discretize(&p, 0.4).unwrap();
        let id = ModalTransform {
            t: Matrix::identity(3, 3),
            t_inv: Matrix::identity(3, 3),
            k_c: Matrix::zeros(1, 3),
            d: vec![-3.0, -2.0, -1.0],
            cond_t: 1.0,
        };
        let same = transform_maps(&maps, &id);
        assert!(same.transformed);
        assert_eq!(same.f, maps.f);
        assert_eq!(same.g, maps.g);

        let s = m(3, 3, &[2.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
        let s_inv = s.clone().try_inverse().unwrap();
        let tr = ModalTransform { t: s, t_inv: s_inv, ..id };
        let moved = transform_maps(&maps, &tr);
        let mut e1: Vec<_> = linalg::eigenvalues(&maps.f).unwrap();
        let mut e2: Vec<_> = linalg::eigenvalues(&moved.f).unwrap();
        let key = |z: &nalgebra::Complex<f64>| (z.re, z.im);
        e1.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        e2.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (a, b) in e1.iter().zip(&e2) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}
