//! Continuous-time design: a gain `K_c` that makes `A + B K_c` Hurwitz with
//! real distinct eigenvalues, and the eigenvector basis `T` diagonalizing it.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{ContinuousPlant, ModalTransform};

/// Relative gap two poles (or eigenvalues) must keep to count as distinct.
pub const DISTINCT_RTOL: f64 = 1e-6;
/// Eigenvalue agreement required by the placement post-check.
pub const PLACEMENT_TOL: f64 = 1e-7;
/// Largest controllability-matrix condition number accepted by Ackermann.
pub const MAX_CTRB_COND: f64 = 1e12;
/// Largest eigenvector-matrix condition number accepted by `diagonalize`.
pub const MAX_T_COND: f64 = 1e8;

const INPUT_DIRECTION_SEED: u64 = 0x5eed_0001;
const INPUT_DIRECTION_TRIES: usize = 64;

/// Desired closed-loop poles: real, strictly negative, pairwise distinct,
/// stored ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSpec {
    poles: Vec<f64>,
}

impl PoleSpec {
    pub fn new(mut poles: Vec<f64>) -> Result<Self> {
        if poles.is_empty() {
            return Err(Error::InvalidValue("pole list is empty".into()));
        }
        if let Some(p) = poles.iter().find(|p| !(p.is_finite() && **p < 0.0)) {
            return Err(Error::InvalidValue(format!("pole {p} is not strictly negative")));
        }
        poles.sort_by(f64::total_cmp);
        let scale = poles.iter().fold(0.0_f64, |acc, p| acc.max(p.abs()));
        if let Some(w) = poles.windows(2).find(|w| w[1] - w[0] < DISTINCT_RTOL * scale) {
            return Err(Error::InvalidValue(format!("poles {} and {} are not distinct", w[0], w[1])));
        }
        Ok(Self { poles })
    }

    /// `{-1, -2, ..., -n}` scaled by `max(1, spectral abscissa of A)`.
    pub fn default_for(plant: &ContinuousPlant) -> Result<Self> {
        let abscissa = linalg::eigenvalues(plant.a())?.iter().fold(f64::NEG_INFINITY, |acc, z| acc.max(z.re));
        let scale = abscissa.max(1.0);
        Self::new((1..=plant.n()).map(|k| -(k as f64) * scale).collect())
    }

    pub fn poles(&self) -> &[f64] {
        &self.poles
    }
}

/// Coefficients `c_0..c_n` (monic, `c_n = 1`) of `prod (s - p_i)`.
fn char_poly(poles: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &p in poles {
        let mut next = vec![0.0; c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= p * ci;
        }
        c = next;
    }
    c
}

fn controllability_matrix(a: &Matrix, b: &Vector) -> Matrix {
    let n = a.nrows();
    let mut ctrb = Matrix::zeros(n, n);
    let mut col = b.clone();
    for k in 0..n {
        ctrb.set_column(k, &col);
        col = a * col;
    }
    ctrb
}

/// Ackermann's formula for a single input column; returns the row gain `k`
/// with `eig(A + b k) = poles`.
fn ackermann(a: &Matrix, b: &Vector, poles: &[f64]) -> Result<Matrix> {
    let n = a.nrows();
    let ctrb = controllability_matrix(a, b);
    let rank = linalg::numerical_rank(&ctrb);
    if rank < n {
        return Err(Error::Controllability(format!("controllability matrix has rank {rank} < {n}")));
    }
    let cond = linalg::cond2(&ctrb);
    if cond > MAX_CTRB_COND {
        return Err(Error::Controllability(format!(
            "controllability matrix condition {cond:e} exceeds {MAX_CTRB_COND:e}"
        )));
    }
    let mut e_n = Vector::zeros(n);
    e_n[n - 1] = 1.0;
    let y = ctrb
        .transpose()
        .lu()
        .solve(&e_n)
        .ok_or_else(|| Error::Controllability("controllability matrix is singular".into()))?;
    let coeffs = char_poly(poles);
    let id = Matrix::identity(n, n);
    let mut phi = Matrix::zeros(n, n);
    for c in coeffs.iter().rev() {
        phi = &phi * a + &id * *c;
    }
    let row = -(y.transpose() * phi);
    Ok(Matrix::from_row_slice(1, n, row.as_slice()))
}

fn sorted_by_real(mut eig: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
    eig.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    eig
}

/// Input directions tried by the multi-input reduction: the normalized
/// all-ones vector first, then seeded pseudo-random unit vectors.
fn input_directions(m: usize) -> impl Iterator<Item = Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(INPUT_DIRECTION_SEED);
    let first = Vector::from_element(m, 1.0 / (m as f64).sqrt());
    std::iter::once(first).chain((1..INPUT_DIRECTION_TRIES).map(move |_| {
        let v = Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let nrm = v.norm();
        if nrm > 0.0 {
            v / nrm
        } else {
            Vector::from_element(m, 1.0 / (m as f64).sqrt())
        }
    }))
}

/// State-feedback gain placing the eigenvalues of `A + B K_c` at the poles.
///
/// Multi-input plants are reduced to a single input `B v`. Directions come
/// from a fixed deterministic sequence until `(A, B v)` is controllable; the
/// result is `K_c = v k`.
pub fn place_poles(plant: &ContinuousPlant, spec: &PoleSpec) -> Result<Matrix> {
    let n = plant.n();
    if spec.poles().len() != n {
        return Err(Error::Dimension(format!("{} poles given for a plant of order {n}", spec.poles().len())));
    }
    let mut last_err = None;
    let mut found = None;
    for v in input_directions(plant.m()) {
        let bv = plant.b() * &v;
        match ackermann(plant.a(), &bv, spec.poles()) {
            Ok(k_row) => {
                found = Some(&v * k_row);
                break;
            }
            Err(e) => last_err = Some(e),
        }
        if plant.m() == 1 {
            break;
        }
    }
    let k_c = match found {
        Some(k) => k,
        None => return Err(last_err.unwrap_or_else(|| Error::Controllability("no input direction".into()))),
    };

    let eig = sorted_by_real(linalg::eigenvalues(&(plant.a() + plant.b() * &k_c))?);
    for (z, &p) in eig.iter().zip(spec.poles()) {
        if (z.re - p).abs() > PLACEMENT_TOL || z.im.abs() > PLACEMENT_TOL {
            return Err(Error::Placement(format!(
                "placed eigenvalue {}{:+}i misses pole {p} by more than {PLACEMENT_TOL:e}",
                z.re, z.im
            )));
        }
    }
    Ok(k_c)
}

/// Accept a user-supplied gain when `A + B K_c` has real, distinct, strictly
/// negative eigenvalues.
pub fn accept_user_gain(plant: &ContinuousPlant, k_c: &Matrix) -> Result<Matrix> {
    if k_c.shape() != (plant.m(), plant.n()) {
        return Err(Error::Dimension(format!(
            "K_c is {}x{}, expected {}x{}",
            k_c.nrows(),
            k_c.ncols(),
            plant.m(),
            plant.n()
        )));
    }
    let eig = sorted_by_real(linalg::eigenvalues(&(plant.a() + plant.b() * k_c))?);
    let radius = eig.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    let real = eig.iter().all(|z| z.im.abs() <= 1e-8 * radius);
    let negative = eig.iter().all(|z| z.re < 0.0);
    let distinct = eig.windows(2).all(|w| w[1].re - w[0].re >= DISTINCT_RTOL * radius);
    if real && negative && distinct {
        Ok(k_c.clone())
    } else {
        Err(Error::Spectrum { eigenvalues: eig.iter().map(|z| (z.re, z.im)).collect() })
    }
}

/// Eigenvector basis of `A + B K_c`: unit-norm columns ordered by ascending
/// eigenvalue, each with its first significant entry positive.
pub fn diagonalize(plant: &ContinuousPlant, k_c: &Matrix) -> Result<ModalTransform> {
    let n = plant.n();
    let closed = plant.a() + plant.b() * k_c;
    let mut lambdas: Vec<f64> = linalg::eigenvalues(&closed)?.iter().map(|z| z.re).collect();
    lambdas.sort_by(f64::total_cmp);

    let mut t = Matrix::zeros(n, n);
    for (j, &lambda) in lambdas.iter().enumerate() {
        let shifted = &closed - Matrix::identity(n, n) * lambda;
        let mut v = linalg::null_vector(&shifted);
        linalg::normalize_sign(&mut v);
        t.set_column(j, &v);
    }
    let cond_t = linalg::cond2(&t);
    if !(cond_t <= MAX_T_COND) {
        return Err(Error::DegenerateEigenvector { cond: cond_t });
    }
    let t_inv = t.clone().try_inverse().ok_or(Error::DegenerateEigenvector { cond: f64::INFINITY })?;
    let modal = &t_inv * &closed * &t;
    let d: Vec<f64> = (0..n).map(|i| modal[(i, i)]).collect();
    let transform = ModalTransform { t, t_inv, k_c: k_c.clone(), d, cond_t };
    transform.validate(plant).map_err(|e| Error::PostCheck(format!("diagonalization: {e}")))?;
    Ok(transform)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    fn m(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    fn reference_plant() -> ContinuousPlant {
        ContinuousPlant::new(m(3, 3, &[1.0, -2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.5]), m(3, 1, &[0.5, 2.0, 1.0]))
            .unwrap()
    }

    fn reference_gain() -> Matrix {
        m(1, 3, &[1128.0 / 289.0, -1064.0 / 289.0, -105.0 / 34.0])
    }

    #[test]
    fn pole_spec_rules() {
        assert_eq!(PoleSpec::new(vec![-1.0, -3.0, -2.0]).unwrap().poles(), &[-3.0, -2.0, -1.0]);
        assert!(PoleSpec::new(vec![-1.0, 0.0]).is_err());
        assert!(PoleSpec::new(vec![-1.0, -1.0 - 1e-9]).is_err());
        assert!(PoleSpec::new(vec![]).is_err());
    }

    #[test]
    fn default_poles_scale_with_abscissa() {
        let spec = PoleSpec::default_for(&reference_plant()).unwrap();
        assert_eq!(spec.poles(), &[-3.0, -2.0, -1.0]);
        let fast = ContinuousPlant::new(m(1, 1, &[4.0]), m(1, 1, &[1.0])).unwrap();
        assert_eq!(PoleSpec::default_for(&fast).unwrap().poles(), &[-4.0]);
    }

    #[test]
    fn scalar_placement() {
        let p = ContinuousPlant::new(m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        let k = place_poles(&p, &PoleSpec::new(vec![-1.0]).unwrap()).unwrap();
        assert!((k[(0, 0)] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn double_integrator_placement() {
        let p = ContinuousPlant::new(m(2, 2, &[0.0, 1.0, 0.0, 0.0]), m(2, 1, &[0.0, 1.0])).unwrap();
        let k = place_poles(&p, &PoleSpec::new(vec![-1.0, -2.0]).unwrap()).unwrap();
        assert!(max_abs(&(k - m(1, 2, &[-2.0, -3.0]))) < 1e-13);
    }

    #[test]
    fn example_gain_recovered_from_its_spectrum() {
        // The example gain places the closed loop at {-3, -2, -1}; a single
        // input placement is unique, so Ackermann must return the same gain.
        let p = reference_plant();
        let eig = sorted_by_real(linalg::eigenvalues(&(p.a() + p.b() * reference_gain())).unwrap());
        for (z, want) in eig.iter().zip([-3.0, -2.0, -1.0]) {
            assert!((z.re - want).abs() < 1e-10 && z.im.abs() < 1e-10);
        }
        let k = place_poles(&p, &PoleSpec::new(vec![-3.0, -2.0, -1.0]).unwrap()).unwrap();
        assert!(max_abs(&(k - reference_gain())) < 1e-10);
    }

    #[test]
    fn uncontrollable_single_input_refused() {
        let p = ContinuousPlant::new(m(2, 2, &[1.0, 0.0, 0.0, -1.0]), m(2, 1, &[1.0, 0.0])).unwrap();
        let err = place_poles(&p, &PoleSpec::new(vec![-1.0, -2.0]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Controllability(_)));
    }

    #[test]
    fn multi_input_placement() {
        let p = ContinuousPlant::new(
            m(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, -2.0, 3.0]),
            m(3, 2, &[0.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        let spec = PoleSpec::new(vec![-1.0, -2.5, -4.0]).unwrap();
        let k = place_poles(&p, &spec).unwrap();
        assert_eq!(k.shape(), (2, 3));
        assert_eq!(k, place_poles(&p, &spec).unwrap());
        assert!(accept_user_gain(&p, &k).is_ok());
    }

    #[test]
    fn user_gain_screening() {
        let p = reference_plant();
        assert!(accept_user_gain(&p, &reference_gain()).is_ok());
        match accept_user_gain(&p, &Matrix::zeros(1, 3)) {
            Err(Error::Spectrum { eigenvalues }) => {
                assert_eq!(eigenvalues.len(), 3);
                assert!(eigenvalues.iter().any(|(_, im)| im.abs() > 1.0));
            }
            other => panic!("expected spectrum error, got {other:?}"),
        }
        let s = ContinuousPlant::new(m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        assert!(accept_user_gain(&s, &m(1, 1, &[-2.0])).is_ok());
        assert!(matches!(accept_user_gain(&s, &m(1, 2, &[-2.0, 0.0])), Err(Error::Dimension(_))));
    }

    #[test]
    fn diagonal_closed_loop_gives_identity_basis() {
        let p = ContinuousPlant::new(m(2, 2, &[-1.0, 0.0, 0.0, -3.0]), Matrix::identity(2, 2)).unwrap();
        let tr = diagonalize(&p, &Matrix::zeros(2, 2)).unwrap();
        assert!(max_abs(&(tr.t.abs() - m(2, 2, &[0.0, 1.0, 1.0, 0.0]))) < 1e-12);
        assert!((tr.d[0] + 3.0).abs() < 1e-12 && (tr.d[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_closed_loop_gives_orthogonal_basis() {
        let p = ContinuousPlant::new(m(2, 2, &[-2.0, 1.0, 1.0, -2.0]), Matrix::identity(2, 2)).unwrap();
        let tr = diagonalize(&p, &Matrix::zeros(2, 2)).unwrap();
        assert!((tr.cond_t - 1.0).abs() < 1e-10);
        assert!(max_abs(&(tr.t.transpose() * &tr.t - Matrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn example_diagonalization() {
        let p = reference_plant();
        let tr = diagonalize(&p, &reference_gain()).unwrap();
        assert!(tr.cond_t.is_finite() && tr.cond_t > 1.0);
        for (d, want) in tr.d.iter().zip([-3.0, -2.0, -1.0]) {
            assert!((d - want).abs() < 1e-10);
        }
        let closed = p.a() + p.b() * reference_gain();
        let rebuilt = &tr.t * Matrix::from_diagonal(&Vector::from_vec(tr.d.clone())) * &tr.t_inv;
        assert!(max_abs(&(rebuilt - &closed)) <= 1e-8 * closed.norm());
        for j in 0..3 {
            assert!((tr.t.column(j).norm() - 1.0).abs() < 1e-14);
        }
        // bit-identical on repeat
        assert_eq!(tr, diagonalize(&p, &reference_gain()).unwrap());
    }
}
