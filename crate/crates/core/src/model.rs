//! Domain types shared by the pipeline, with the JSON plant configuration
//! and certificate formats.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Eigenvalues with real part at or above `-STAB_TOL` count as unstable in
/// the PBH test.
pub const STAB_TOL: f64 = 1e-9;

/// Continuous-time plant `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPlant {
    a: Matrix,
    b: Matrix,
}

impl ContinuousPlant {
    /// Validates dimensions, `rank(B) = m` and PBH stabilizability.
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, A has {n}", b.nrows())));
        }
        let m = b.ncols();
        if m == 0 || m > n {
            return Err(Error::Dimension(format!("need 1 <= m <= n, got m = {m}, n = {n}")));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parse("plant matrices contain non-finite entries".into()));
        }
        let rank = linalg::numerical_rank(&b);
        if rank < m {
            return Err(Error::Rank(format!("B has rank {rank} < m = {m}")));
        }
        let modes = uncontrollable_modes(&a, &b)?;
        if !modes.is_empty() {
            return Err(Error::Stabilizability { modes: modes.iter().map(|z| (z.re, z.im)).collect() });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Serialize as a plant configuration containing only `A` and `B`.
    pub fn to_config_text(&self) -> String {
        let cfg = PlantConfig { a: linalg::to_rows(&self.a), b: linalg::to_rows(&self.b), ..PlantConfig::default() };
        serde_json::to_string_pretty(&cfg).expect("plant config serializes")
    }
}

/// Eigenvalues of `A` with `Re >= -STAB_TOL` at which `[lambda I - A, B]`
/// loses rank.
pub fn uncontrollable_modes(a: &Matrix, b: &Matrix) -> Result<Vec<Complex<f64>>> {
    let n = a.nrows();
    let m = b.ncols();
    let mut bad = Vec::new();
    for lambda in linalg::eigenvalues(a)? {
        if lambda.re < -STAB_TOL {
            continue;
        }
        let pencil = nalgebra::DMatrix::<Complex<f64>>::from_fn(n, n + m, |i, j| {
            if j < n {
                let diag = if i == j { lambda } else { Complex::new(0.0, 0.0) };
                diag - Complex::new(a[(i, j)], 0.0)
            } else {
                Complex::new(b[(i, j - n)], 0.0)
            }
        });
        if linalg::numerical_rank(&pencil) < n {
            bad.push(lambda);
        }
    }
    Ok(bad)
}

/// PBH stabilizability test on raw matrices with consistent dimensions.
pub fn pbh_stabilizable(a: &Matrix, b: &Matrix) -> bool {
    matches!(uncontrollable_modes(a, b), Ok(modes) if modes.is_empty())
}

/// Bounds on the admissible sampling periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingWindow {
    h_min: f64,
    h_max: f64,
}

impl SamplingWindow {
    pub fn new(h_min: f64, h_max: f64) -> Result<Self> {
        if !(h_min.is_finite() && h_max.is_finite() && h_min > 0.0 && h_min <= h_max) {
            return Err(Error::Window(format!("need 0 < h_min <= h_max, got [{h_min}, {h_max}]")));
        }
        Ok(Self { h_min, h_max })
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }
}

/// Finite sequence of sampling periods `h_0, ..., h_{N-1}` starting at `t_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSchedule {
    periods: Vec<f64>,
}

impl SamplingSchedule {
    pub fn new(periods: Vec<f64>) -> Result<Self> {
        if let Some((k, h)) = periods.iter().enumerate().find(|(_, h)| !(h.is_finite() && **h > 0.0)) {
            return Err(Error::Window(format!("period h_{k} = {h} is not positive")));
        }
        Ok(Self { periods })
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    /// Sampling instants `t_0, ..., t_N`.
    pub fn instants(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.periods.len() + 1);
        t.push(0.0);
        let mut acc = 0.0;
        for h in &self.periods {
            acc += h;
            t.push(acc);
        }
        t
    }

    pub fn max_period(&self) -> f64 {
        self.periods.iter().cloned().fold(0.0, f64::max)
    }
}

/// Zero-order-hold maps `(F(h), G(h))`, optionally in modal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMaps {
    pub h: f64,
    pub f: Matrix,
    pub g: Matrix,
    pub transformed: bool,
}

/// Output of the continuous design stage: the stabilizing gain and the
/// eigenvector basis that diagonalizes `A + B K_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalTransform {
    pub t: Matrix,
    pub t_inv: Matrix,
    pub k_c: Matrix,
    /// Closed-loop eigenvalues, ascending.
    pub d: Vec<f64>,
    pub cond_t: f64,
}

impl ModalTransform {
    /// Checks the transform against the plant: `T T^-1 = I`, the similarity
    /// is diagonal with entries `d`, and `d` is negative and distinct.
    pub fn validate(&self, plant: &ContinuousPlant) -> Result<()> {
        let n = plant.n();
        let m = plant.m();
        if self.t.shape() != (n, n) || self.t_inv.shape() != (n, n) || self.k_c.shape() != (m, n) || self.d.len() != n {
            return Err(Error::Dimension("certificate shapes do not match the plant".into()));
        }
        // Rounding in T_inv and in the similarity grows with cond(T), so the
        // bounds do too. cond(T) is recomputed rather than read from the file.
        let cond = linalg::cond2(&self.t);
        if !cond.is_finite() {
            return Err(Error::InvalidValue("T is singular".into()));
        }
        let id_tol = 1e-10f64.max(1e-13 * cond);
        let resid = &self.t * &self.t_inv - Matrix::identity(n, n);
        if linalg::max_abs(&resid) > id_tol {
            return Err(Error::InvalidValue(format!("T * T_inv deviates from I by {:e}", linalg::max_abs(&resid))));
        }
        let closed = plant.a() + plant.b() * &self.k_c;
        let diag_tol = 1e-8f64.max(1e-12 * cond) * linalg::max_abs(&closed).max(1.0);
        let diag = &self.t_inv * closed * &self.t;
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { self.d[i] } else { 0.0 };
                if (diag[(i, j)] - want).abs() > diag_tol {
                    return Err(Error::InvalidValue(format!("T_inv (A + B K_c) T differs from diag(D) at ({i}, {j})")));
                }
            }
        }
        if self.d.iter().any(|&l| l >= 0.0) || self.d.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidValue("D must be strictly negative and strictly ascending".into()));
        }
        Ok(())
    }
}

/// Parameters of the target-selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRule {
    /// Fraction of the feasible band used above the residual floor.
    pub theta: f64,
    /// Relative safety margin below gamma.
    pub mu: f64,
}

impl Default for TargetRule {
    fn default() -> Self {
        Self { theta: 0.5, mu: 0.02 }
    }
}

impl TargetRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidValue(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if !(self.mu >= 0.0 && self.mu < 1.0) {
            return Err(Error::InvalidValue(format!("margin must lie in [0, 1), got {}", self.mu)));
        }
        Ok(())
    }
}

/// Resolution of the search that produced `h_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub h_hi: f64,
    pub points: usize,
    pub tol_h: f64,
}

/// Certified design: the modal transform plus the period bound below which
/// a contracting gain exists at every probed period.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignCertificate {
    pub transform: ModalTransform,
    pub h_star: f64,
    pub gamma: f64,
    pub rule: TargetRule,
    pub grid: ProbeGrid,
    /// No crossing was found below `grid.h_hi`; `h_star` equals `h_hi`.
    pub right_censored: bool,
}

impl DesignCertificate {
    pub fn validate(&self, plant: &ContinuousPlant) -> Result<()> {
        self.transform.validate(plant)?;
        if !(self.h_star > 0.0 && self.h_star.is_finite()) {
            return Err(Error::InvalidValue(format!("h_star must be positive, got {}", self.h_star)));
        }
        validate_gamma(self.gamma)?;
        self.rule.validate()
    }

    pub fn to_json(&self, manifest_sha256: Option<String>) -> String {
        let file = CertificateFile {
            t: linalg::to_rows(&self.transform.t),
            t_inv: linalg::to_rows(&self.transform.t_inv),
            k_c: linalg::to_rows(&self.transform.k_c),
            d: self.transform.d.clone(),
            cond_t: self.transform.cond_t,
            h_star: self.h_star,
            gamma: self.gamma,
            theta: self.rule.theta,
            mu: self.rule.mu,
            h_hi: self.grid.h_hi,
            grid_points: self.grid.points,
            tol_h: self.grid.tol_h,
            right_censored: self.right_censored,
            manifest_sha256,
        };
        serde_json::to_string_pretty(&file).expect("certificate serializes")
    }

    /// Parse a certificate file; returns the certificate and the manifest
    /// hash it cites, if any.
    pub fn from_json(text: &str) -> Result<(Self, Option<String>)> {
        let file: CertificateFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let cert = Self {
            transform: ModalTransform {
                t: linalg::from_rows(&file.t, "T")?,
                t_inv: linalg::from_rows(&file.t_inv, "T_inv")?,
                k_c: linalg::from_rows(&file.k_c, "K_c")?,
                d: file.d,
                cond_t: file.cond_t,
            },
            h_star: file.h_star,
            gamma: file.gamma,
            rule: TargetRule { theta: file.theta, mu: file.mu },
            grid: ProbeGrid { h_hi: file.h_hi, points: file.grid_points, tol_h: file.tol_h },
            right_censored: file.right_censored,
        };
        Ok((cert, file.manifest_sha256))
    }
}

pub fn validate_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!("gamma must lie in (0, 1], got {gamma}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateFile {
    #[serde(rename = "T")]
    t: Vec<Vec<f64>>,
    #[serde(rename = "T_inv")]
    t_inv: Vec<Vec<f64>>,
    #[serde(rename = "K_c")]
    k_c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<f64>,
    #[serde(rename = "cond_T")]
    cond_t: f64,
    h_star: f64,
    gamma: f64,
    theta: f64,
    mu: f64,
    h_hi: f64,
    grid_points: usize,
    tol_h: f64,
    right_censored: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest_sha256: Option<String>,
}

/// On-disk plant configuration. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poles: Option<Vec<f64>>,
    #[serde(default, rename = "K_c", skip_serializing_if = "Option::is_none")]
    pub k_c: Option<Vec<Vec<f64>>>,
}

impl PlantConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn plant(&self) -> Result<ContinuousPlant> {
        let a = linalg::from_rows(&self.a, "A")?;
        let b = linalg::from_rows(&self.b, "B")?;
        ContinuousPlant::new(a, b)
    }

    /// Continuous gain from the config, checked against the plant shape.
    pub fn k_c(&self, plant: &ContinuousPlant) -> Result<Option<Matrix>> {
        let Some(rows) = &self.k_c else { return Ok(None) };
        let k = linalg::from_rows(rows, "K_c")?;
        if k.shape() != (plant.m(), plant.n()) {
            return Err(Error::Dimension(format!(
                "K_c is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                plant.m(),
                plant.n()
            )));
        }
        Ok(Some(k))
    }

    pub fn window(&self) -> Result<Option<SamplingWindow>> {
        match (self.h_min, self.h_max) {
            (Some(lo), Some(hi)) => SamplingWindow::new(lo, hi).map(Some),
            (None, None) => Ok(None),
            _ => Err(Error::Window("h_min and h_max must be given together".into())),
        }
    }
}

/// Parse and validate a plant configuration.
pub fn load_plant(config_text: &str) -> Result<ContinuousPlant> {
    PlantConfig::parse(config_text)?.plant()
}
