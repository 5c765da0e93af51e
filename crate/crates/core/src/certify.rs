//! Certified period bound `h_star` and the period-indexed gain schedule,
//! with sweeps of the residual singular values.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::matfun::{discretize, transform_maps};
use crate::model::{validate_gamma, ContinuousPlant, DesignCertificate, ModalTransform, ProbeGrid, TargetRule};
use crate::sva::{self, ResidualSpectrum};

pub const DEFAULT_GRID_POINTS: usize = 256;
pub const DEFAULT_TOL_H: f64 = 1e-4;

/// Residual spectrum of the modal maps at period `h`.
pub fn residual_at(plant: &ContinuousPlant, transform: &ModalTransform, h: f64) -> Result<ResidualSpectrum> {
    let maps = transform_maps(&discretize(plant, h)?, transform);
    sva::residual_spectrum(&maps.f, &maps.g)
}

/// One period of a sweep. `a` is `None` when the projector could not be
/// formed at this period; the reason is kept in `error`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub h: f64,
    pub a: Option<Vec<f64>>,
    pub targets: Option<Vec<f64>>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn sigma_bar(&self) -> Option<f64> {
        self.a.as_ref().and_then(|a| a.last().cloned())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub n: usize,
    pub m: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Indices (0-based) of the residual branches that are not identically
    /// zero: `m..n`.
    pub fn nonzero_branches(&self) -> std::ops::Range<usize> {
        self.m..self.n
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["h".to_string()];
        cols.extend((1..=self.n).map(|j| format!("a_{j}")));
        cols.push("sigma_bar".into());
        cols.extend((1..=self.n).map(|j| format!("s_{j}")));
        cols.join(",")
    }

    /// CSV body with header; numbers carry 12 significant digits and
    /// missing values are left blank.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for row in &self.rows {
            let mut cells = vec![fmt_sig12(row.h)];
            match &row.a {
                Some(a) => cells.extend(a.iter().map(|v| fmt_sig12(*v))),
                None => cells.extend(std::iter::repeat_n(String::new(), self.n)),
            }
            cells.push(row.sigma_bar().map(fmt_sig12).unwrap_or_default());
            match &row.targets {
                Some(s) => cells.extend(s.iter().map(|v| fmt_sig12(*v))),
                None => cells.extend(std::iter::repeat_n(String::new(), self.n)),
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Decimal with 12 significant digits in scientific notation.
pub fn fmt_sig12(v: f64) -> String {
    format!("{v:.11e}")
}

fn sweep_row(plant: &ContinuousPlant, transform: &ModalTransform, gamma: f64, rule: &TargetRule, h: f64) -> SweepRow {
    match residual_at(plant, transform, h) {
        Ok(a) => {
            let targets = sva::select_targets(&a, gamma, rule).ok().map(|t| t.s);
            SweepRow { h, a: Some(a.a), targets, error: None }
        }
        Err(e) => SweepRow { h, a: None, targets: None, error: Some(e.to_string()) },
    }
}

/// Residual spectra on `steps` evenly spaced periods in `[h_lo, h_hi]`,
/// with the selected targets wherever one exists below `gamma`. Rows are
/// evaluated in parallel and assembled in grid order.
pub fn sweep_transform(
    plant: &ContinuousPlant,
    transform: &ModalTransform,
    gamma: f64,
    rule: &TargetRule,
    h_lo: f64,
    h_hi: f64,
    steps: usize,
) -> Result<SweepTable> {
    if !(h_lo > 0.0 && h_lo < h_hi && h_hi.is_finite()) || steps < 2 {
        return Err(Error::InvalidValue(format!(
            "sweep needs 0 < h_lo < h_hi and steps >= 2, got [{h_lo}, {h_hi}] with {steps}"
        )));
    }
    let step = (h_hi - h_lo) / (steps - 1) as f64;
    let rows = (0..steps)
        .into_par_iter()
        .map(|i| {
            let h = if i + 1 == steps { h_hi } else { h_lo + step * i as f64 };
            sweep_row(plant, transform, gamma, rule, h)
        })
        .collect();
    Ok(SweepTable { n: plant.n(), m: plant.m(), rows })
}

pub fn sweep(
    plant: &ContinuousPlant,
    cert: &DesignCertificate,
    h_lo: f64,
    h_hi: f64,
    steps: usize,
) -> Result<SweepTable> {
    sweep_transform(plant, &cert.transform, cert.gamma, &cert.rule, h_lo, h_hi, steps)
}

/// Search settings for `find_h_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Upper end of the coarse grid; defaults to `10 / min |D|`.
    pub h_hi: Option<f64>,
    pub grid_points: usize,
    pub tol_h: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { h_hi: None, grid_points: DEFAULT_GRID_POINTS, tol_h: DEFAULT_TOL_H }
    }
}

/// Horizon over which the slowest desired mode decays by `e^-10`.
pub fn default_h_hi(transform: &ModalTransform) -> f64 {
    let slowest = transform.d.iter().fold(f64::INFINITY, |acc, d| acc.min(d.abs()));
    10.0 / slowest
}

fn probe_ok(plant: &ContinuousPlant, transform: &ModalTransform, gamma: f64, h: f64) -> bool {
    matches!(residual_at(plant, transform, h), Ok(a) if a.sigma_bar() < gamma)
}

/// Largest period `h_star` such that every probed period up to it has
/// `sigma_bar < gamma`.
///
/// The search probes a uniform grid over `(0, h_hi]`, then bisects the
/// first failing grid cell down to `tol_h`. This is a grid certificate, not
/// a proof over the continuum; `verify_certificate` re-probes finer.
pub fn find_h_star(
    plant: &ContinuousPlant,
    transform: &ModalTransform,
    gamma: f64,
    rule: TargetRule,
    opts: SearchOptions,
) -> Result<DesignCertificate> {
    validate_gamma(gamma)?;
    rule.validate()?;
    let h_hi = opts.h_hi.unwrap_or_else(|| default_h_hi(transform));
    if !(h_hi > 0.0 && h_hi.is_finite()) || opts.grid_points < 1 || !(opts.tol_h > 0.0) {
        return Err(Error::InvalidValue(format!(
            "bad search settings: h_hi = {h_hi}, grid = {}, tol_h = {}",
            opts.grid_points, opts.tol_h
        )));
    }
    let smallest = opts.tol_h.min(h_hi);
    let first = residual_at(plant, transform, smallest)?;
    if !(first.sigma_bar() < gamma) {
        return Err(Error::NoStabilizablePeriod { h: smallest, sigma_bar: first.sigma_bar(), gamma });
    }

    let grid: Vec<f64> = (1..=opts.grid_points).map(|i| h_hi * i as f64 / opts.grid_points as f64).collect();
    let ok: Vec<bool> = grid.par_iter().map(|&h| h <= smallest || probe_ok(plant, transform, gamma, h)).collect();

    let (h_star, right_censored) = match ok.iter().position(|good| !good) {
        None => (h_hi, true),
        Some(i) => {
            let mut lo = if i == 0 { smallest } else { grid[i - 1] };
            let mut hi = grid[i];
            while hi - lo > opts.tol_h {
                let mid = 0.5 * (lo + hi);
                if probe_ok(plant, transform, gamma, mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (lo, false)
        }
    };

    Ok(DesignCertificate {
        transform: transform.clone(),
        h_star,
        gamma,
        rule,
        grid: ProbeGrid { h_hi, points: opts.grid_points, tol_h: opts.tol_h },
        right_censored,
    })
}

/// Gain for one sampling period together with what it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledGain {
    pub h: f64,
    /// Gain in plant coordinates, `u_k = K x_k`.
    pub k: Matrix,
    pub k_hat: Matrix,
    pub targets: Vec<f64>,
    /// Largest singular value of `T^-1 (F + G K) T`.
    pub sigma_achieved: f64,
}

/// Full pipeline at one period: discretize, transform, select targets,
/// assign, and map back. Requires `0 < h < h_star`.
pub fn gain_at(plant: &ContinuousPlant, cert: &DesignCertificate, h: f64) -> Result<ScheduledGain> {
    if !(h > 0.0 && h < cert.h_star) {
        return Err(Error::PeriodOutOfCertificate { h, h_star: cert.h_star });
    }
    let raw = discretize(plant, h)?;
    let maps = transform_maps(&raw, &cert.transform);
    let a = sva::residual_spectrum(&maps.f, &maps.g)?;
    let target = sva::select_targets(&a, cert.gamma, &cert.rule)?;
    let k_hat = sva::assign_singular_values(&maps.f, &maps.g, &target)?;
    let k = sva::gain_in_original_coordinates(&k_hat, &cert.transform);

    let closed = &cert.transform.t_inv * (&raw.f + &raw.g * &k) * &cert.transform.t;
    let sigma_achieved = linalg::sigma_max(&closed);
    if !(sigma_achieved < cert.gamma) {
        return Err(Error::PostCheck(format!(
            "closed loop at h = {h} has sigma_bar {sigma_achieved} >= gamma {}",
            cert.gamma
        )));
    }
    Ok(ScheduledGain { h, k, k_hat, targets: target.s, sigma_achieved })
}

/// Result of re-probing a certificate on a finer grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub probes: usize,
    /// Periods below `h_star` where `sigma_bar >= gamma`, or where the
    /// residual spectrum could not be computed (`NaN`).
    pub violations: Vec<(f64, f64)>,
    pub max_sigma_bar: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-probe `sigma_bar` on a grid `refinement` times finer than the one the
/// certificate was searched on, over `(0, h_star)`.
pub fn verify_certificate(plant: &ContinuousPlant, cert: &DesignCertificate, refinement: usize) -> VerifyReport {
    let spacing = cert.grid.h_hi / (cert.grid.points.max(1) * refinement.max(1)) as f64;
    let mut probes: Vec<f64> = Vec::new();
    let start = cert.grid.tol_h.min(spacing);
    probes.push(start);
    let mut k = 1usize;
    loop {
        let h = spacing * k as f64;
        if h >= cert.h_star {
            break;
        }
        if h > start {
            probes.push(h);
        }
        k += 1;
    }
    let results: Vec<(f64, f64)> = probes
        .par_iter()
        .map(|&h| {
            let sb = residual_at(plant, &cert.transform, h).map(|a| a.sigma_bar()).unwrap_or(f64::NAN);
            (h, sb)
        })
        .collect();
    let violations = results.iter().filter(|(_, sb)| !(*sb < cert.gamma)).cloned().collect();
    let max_sigma_bar = results.iter().map(|r| r.1).fold(0.0, f64::max);
    VerifyReport { probes: results.len(), violations, max_sigma_bar }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain_init::{diagonalize, place_poles, PoleSpec};

    fn m(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    fn scalar_design() -> (ContinuousPlant, ModalTransform) {
        let p = ContinuousPlant::new(m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        let k = place_poles(&p, &PoleSpec::new(vec![-1.0]).unwrap()).unwrap();
        let tr = diagonalize(&p, &k).unwrap();
        (p, tr)
    }

    #[test]
    fn full_authority_sweep_is_zero() {
        let (p, tr) = scalar_design();
        let table = sweep_transform(&p, &tr, 1.0, &TargetRule::default(), 0.1, 2.0, 5).unwrap();
        assert_eq!(table.rows.len(), 5);
        assert!(table.rows.iter().all(|r| r.sigma_bar().unwrap().abs() < 1e-15));
        assert_eq!(table.nonzero_branches(), 1..1);
        assert_eq!(table.rows.last().unwrap().h, 2.0);
    }

    #[test]
    fn full_authority_is_right_censored() {
        let (p, tr) = scalar_design();
        let cert = find_h_star(&p, &tr, 1.0, TargetRule::default(), SearchOptions::default()).unwrap();
        assert!(cert.right_censored);
        assert_eq!(cert.h_star, 10.0);
        assert!(verify_certificate(&p, &cert, 4).passed());
    }

    #[test]
    fn scalar_gain_contracts() {
        let (p, tr) = scalar_design();
        let cert = find_h_star(&p, &tr, 1.0, TargetRule::default(), SearchOptions::default()).unwrap();
        for h in [1e-3, 0.1, 1.0, 5.0] {
            let g = gain_at(&p, &cert, h).unwrap();
            // a = 0, so the target is theta * gamma * (1 - mu) = 0.49.
            assert!((g.sigma_achieved - 0.49).abs() < 1e-12);
            let raw = discretize(&p, h).unwrap();
            let closed = raw.f[(0, 0)] + raw.g[(0, 0)] * g.k[(0, 0)];
            assert!((closed.abs() - 0.49).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_argument_checks() {
        let (p, tr) = scalar_design();
        let rule = TargetRule::default();
        assert!(sweep_transform(&p, &tr, 1.0, &rule, 0.0, 1.0, 5).is_err());
        assert!(sweep_transform(&p, &tr, 1.0, &rule, 0.5, 0.4, 5).is_err());
        assert!(sweep_transform(&p, &tr, 1.0, &rule, 0.1, 1.0, 1).is_err());
    }

    #[test]
    fn csv_layout() {
        let (p, tr) = scalar_design();
        let table = sweep_transform(&p, &tr, 1.0, &TargetRule::default(), 0.5, 1.0, 2).unwrap();
        let csv = table.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "h,a_1,sigma_bar,s_1");
        assert_eq!(lines.next().unwrap().split(',').count(), 4);
        assert_eq!(fmt_sig12(0.640420452337129), "6.40420452337e-1");
    }
}
