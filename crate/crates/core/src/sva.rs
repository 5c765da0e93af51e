//! Singular value assignment for `F^ + G^ K^`.
//!
//! Writing `F^ + G^ K^ = P^ F^ + G^ M` with the projector
//! `P^ = I - G^ (G^T G^)^-1 G^T` splits the Gram matrix of the closed loop
//! into `F^T P^ F^ + M^T G^T G^ M`. The first term is fixed by the plant and
//! its eigenvalues are the squared residual singular values `a_j^2`. The
//! second term is a sum of `m` rank-one updates, each chosen by solving a
//! symmetric inverse eigenvalue problem, so that the eigenvalues are raised
//! one interlacing step at a time until they reach the squared targets.
//!
//! Every assignment re-verifies the achieved singular values.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{ModalTransform, TargetRule};

/// Largest Gram-matrix condition number accepted for `G^`.
pub const MAX_GRAM_COND: f64 = 1e12;
/// Relative tolerance of the assignment post-check.
pub const ASSIGN_RTOL: f64 = 1e-8;
/// Relative tolerance of the rank-one post-check.
pub const RAISE_RTOL: f64 = 1e-9;
/// Relative slack used for equality in interlacing comparisons.
pub const INTERLACE_RTOL: f64 = 1e-12;

/// Singular values `a_1 <= ... <= a_n` of `P^ F^`; the first `m` vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSpectrum {
    pub a: Vec<f64>,
    pub m: usize,
}

impl ResidualSpectrum {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Largest residual singular value.
    pub fn sigma_bar(&self) -> f64 {
        self.a.last().cloned().unwrap_or(0.0)
    }

    /// Upper interlacing bound `a_{j+m}` for 0-based `j`, infinite past `n`.
    fn upper(&self, j: usize) -> f64 {
        self.a.get(j + self.m).cloned().unwrap_or(f64::INFINITY)
    }

    fn slack(&self) -> f64 {
        INTERLACE_RTOL * self.sigma_bar().max(1.0)
    }
}

/// Desired singular values with the interlacing verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpectrum {
    pub s: Vec<f64>,
    pub feasible: bool,
    /// First violated index (1-based) when infeasible.
    pub violated: Option<usize>,
}

/// Thin QR factors `G^ = Q R` with the rank and Gram-conditioning checks.
/// Everything downstream is built from `Q` and `R` so that rounding grows
/// with `cond(G^)` rather than with `cond(G^T G^) = cond(G^)^2`.
struct RangeBasis {
    q: Matrix,
    r: Matrix,
}

impl RangeBasis {
    fn new(g: &Matrix) -> Result<Self> {
        let n = g.nrows();
        let m = g.ncols();
        if m == 0 || m > n {
            return Err(Error::Dimension(format!("projector needs 1 <= m <= n, got {n}x{m}")));
        }
        let rank = linalg::numerical_rank(g);
        if rank < m {
            return Err(Error::Rank(format!("G^ has rank {rank} < {m}")));
        }
        let qr = g.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        let cond = linalg::cond2(&r).powi(2);
        if !(cond <= MAX_GRAM_COND) {
            return Err(Error::Rank(format!("G^T G^ condition {cond:e} exceeds {MAX_GRAM_COND:e}")));
        }
        Ok(Self { q, r })
    }

    /// `P^ x = x - Q Q^T x`.
    fn project(&self, x: &Matrix) -> Matrix {
        x - &self.q * (self.q.transpose() * x)
    }

    /// `R^-1 x`.
    fn solve_r(&self, x: &Matrix) -> Result<Matrix> {
        self.r.solve_upper_triangular(x).ok_or_else(|| Error::Rank("G^ has a singular triangular factor".into()))
    }

    /// Orthogonal polar factor `R (R^T R)^-1/2` of `R`, so that
    /// `G^ (G^T G^)^-1/2 = Q * polar`.
    fn polar(&self) -> Matrix {
        let svd = self.r.clone().svd(true, true);
        svd.u.expect("requested U") * svd.v_t.expect("requested V^T")
    }
}

/// Orthogonal projector onto the complement of `range(G^)`.
pub fn projector(g: &Matrix) -> Result<Matrix> {
    let basis = RangeBasis::new(g)?;
    let p = basis.project(&Matrix::identity(g.nrows(), g.nrows()));
    Ok((&p + p.transpose()) * 0.5)
}

/// Singular values of `P^ F^`, ascending.
pub fn residual_spectrum(f: &Matrix, g: &Matrix) -> Result<ResidualSpectrum> {
    let basis = RangeBasis::new(g)?;
    Ok(ResidualSpectrum { a: linalg::singular_values_asc(&basis.project(f)), m: g.ncols() })
}

/// Interlacing test `a_j <= s_j <= a_{j+m}` with `a_j = inf` past `n`.
/// Equality counts as feasible.
pub fn check_feasibility(a: &ResidualSpectrum, s: &[f64]) -> TargetSpectrum {
    let slack = a.slack();
    let violated = if s.len() != a.n() {
        Some(s.len().min(a.n()) + 1)
    } else {
        (0..a.n()).find(|&j| !(s[j] >= a.a[j] - slack && s[j] <= a.upper(j) + slack)).map(|j| j + 1)
    };
    TargetSpectrum { s: s.to_vec(), feasible: violated.is_none(), violated }
}

/// Targets a fraction `theta` of the way from each residual floor `a_j` to
/// `min(a_{j+m}, c)`, where the ceiling `c = gamma (1 - mu)` is relaxed to
/// the midpoint of `a_n` and `gamma` once `a_n` gets within `2 mu gamma` of
/// `gamma`. Every target is feasible and strictly below `gamma`.
pub fn select_targets(a: &ResidualSpectrum, gamma: f64, rule: &TargetRule) -> Result<TargetSpectrum> {
    let a_max = a.sigma_bar();
    if !(a_max < gamma) {
        return Err(Error::InfeasibleAtPeriod { a_max, gamma });
    }
    let ceiling = (gamma * (1.0 - rule.mu)).max(0.5 * (a_max + gamma));
    let s: Vec<f64> = (0..a.n())
        .map(|j| {
            let floor = a.a[j].max(0.0);
            floor + rule.theta * (a.upper(j).min(ceiling) - floor)
        })
        .collect();
    let target = check_feasibility(a, &s);
    if !target.feasible {
        return Err(Error::PostCheck(format!("selected targets violate interlacing at {:?}", target.violated)));
    }
    Ok(target)
}

/// Solve the rank-one inverse eigenvalue problem: find `w >= 0` such that
/// `diag(lambda) + w w^T` has eigenvalues `mu`, given
/// `lambda_j <= mu_j <= lambda_{j+1}`.
///
/// Entries of `lambda` matched by an equal entry of `mu` are deflated
/// (lowest index first) and get `w_i = 0`; the rest come from
/// `w_i^2 = prod_j (mu_j - lambda_i) / prod_{k != i} (lambda_k - lambda_i)`
/// over the undeflated indices.
pub fn rank_one_raise(lambda: &[f64], mu: &[f64]) -> Result<Vector> {
    let n = lambda.len();
    if mu.len() != n {
        return Err(Error::Dimension(format!("lambda has {n} entries, mu has {}", mu.len())));
    }
    let scale = lambda.iter().chain(mu).fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = INTERLACE_RTOL * scale;
    for j in 0..n {
        if j + 1 < n && lambda[j] > lambda[j + 1] {
            return Err(Error::Interlacing { index: j + 1, detail: "lambda is not ascending".into() });
        }
        let upper = lambda.get(j + 1).cloned().unwrap_or(f64::INFINITY);
        if !(mu[j] >= lambda[j] - tol && mu[j] <= upper + tol) {
            return Err(Error::Interlacing {
                index: j + 1,
                detail: format!("need {} <= {} <= {}", lambda[j], mu[j], upper),
            });
        }
    }
    let mu: Vec<f64> =
        (0..n).map(|j| mu[j].max(lambda[j]).min(lambda.get(j + 1).cloned().unwrap_or(f64::INFINITY))).collect();

    let mut lambda_used = vec![false; n];
    let mut mu_used = vec![false; n];
    for j in 0..n {
        if let Some(i) = (0..n).find(|&i| !lambda_used[i] && (lambda[i] - mu[j]).abs() <= tol) {
            lambda_used[i] = true;
            mu_used[j] = true;
        }
    }
    let free_l: Vec<usize> = (0..n).filter(|&i| !lambda_used[i]).collect();
    let free_m: Vec<usize> = (0..n).filter(|&j| !mu_used[j]).collect();

    let mut w = Vector::zeros(n);
    for (pos, &i) in free_l.iter().enumerate() {
        let li = lambda[i];
        let mut w2 = mu[free_m[pos]] - li;
        for (other, &k) in free_l.iter().enumerate() {
            if other != pos {
                w2 *= (mu[free_m[other]] - li) / (lambda[k] - li);
            }
        }
        w[i] = w2.max(0.0).sqrt();
    }

    let updated = Matrix::from_diagonal(&Vector::from_column_slice(lambda)) + &w * w.transpose();
    let (achieved, _) = linalg::sym_eig_sorted(&updated);
    let check_tol = RAISE_RTOL * scale.max(f64::MIN_POSITIVE);
    if let Some(j) = (0..n).find(|&j| (achieved[j] - mu[j]).abs() > check_tol) {
        return Err(Error::PostCheck(format!(
            "rank-one update reached {} instead of {} at index {}",
            achieved[j],
            mu[j],
            j + 1
        )));
    }
    Ok(w)
}

/// Spectrum schedule for the `k`-th of `m` rank-one raises, built from the
/// current eigenvalues: `max(cur_j, s^2_{j-m+k})`, capped by `cur_{j+1}`.
pub fn staged_spectrum(current: &[f64], s_sq: &[f64], m: usize, k: usize) -> Vec<f64> {
    let n = current.len();
    (0..n)
        .map(|j| {
            // 1-based target index j - m + k; absent below 1.
            let raised = if j + k >= m { current[j].max(s_sq[j + k - m]) } else { current[j] };
            match current.get(j + 1) {
                Some(&next) => raised.min(next),
                None => raised,
            }
        })
        .collect()
}

/// Gain `K^` such that `F^ + G^ K^` has singular values `target.s`.
pub fn assign_singular_values(f: &Matrix, g: &Matrix, target: &TargetSpectrum) -> Result<Matrix> {
    let n = f.nrows();
    let m = g.ncols();
    if f.shape() != (n, n) || g.nrows() != n || target.s.len() != n {
        return Err(Error::Dimension("F^, G^ and targets disagree in size".into()));
    }
    if !target.feasible {
        return Err(Error::Interlacing {
            index: target.violated.unwrap_or(0),
            detail: "target spectrum is not feasible".into(),
        });
    }
    let basis = RangeBasis::new(g)?;
    let projected = basis.project(f);
    let base = projected.transpose() * &projected;
    let mut gram_cl = (&base + base.transpose()) * 0.5;
    let s_sq: Vec<f64> = target.s.iter().map(|s| s * s).collect();

    let mut rows = Matrix::zeros(m, n);
    for k in 1..=m {
        let (current, basis) = linalg::sym_eig_sorted(&gram_cl);
        let next = staged_spectrum(&current, &s_sq, m, k);
        let w = rank_one_raise(&current, &next)?;
        let z = &basis * w;
        gram_cl += &z * z.transpose();
        rows.set_row(k - 1, &z.transpose());
    }

    // K^ = (G^T G^)^-1/2 N - (G^T G^)^-1 G^T F^ = R^-1 (polar(R) N - Q^T F^).
    let k_hat = basis.solve_r(&(basis.polar() * rows - basis.q.transpose() * f))?;

    let achieved = linalg::singular_values_asc(&(f + g * &k_hat));
    let s_max = target.s.last().cloned().unwrap_or(0.0);
    for (j, (&got, &want)) in achieved.iter().zip(&target.s).enumerate() {
        let tol = ASSIGN_RTOL * want.max(1e-6 * s_max.max(1.0));
        if (got - want).abs() > tol {
            return Err(Error::PostCheck(format!("singular value {} assigned as {got} instead of {want}", j + 1)));
        }
    }
    Ok(k_hat)
}

/// Map a modal-coordinate gain back to the plant state: `K = K^ T^-1`.
pub fn gain_in_original_coordinates(k_hat: &Matrix, transform: &ModalTransform) -> Matrix {
    k_hat * &transform.t_inv
}
