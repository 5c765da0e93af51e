//! Closed-loop simulation under nonuniform sampling with zero-order hold,
//! schedule generation, and monitoring of the Lyapunov norm `|x|_T = |T^-1 x|`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::certify::{self, fmt_sig12, ScheduledGain};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::matfun::discretize;
use crate::model::{ContinuousPlant, DesignCertificate, SamplingSchedule, SamplingWindow};

pub const DEFAULT_SUBSTEPS: usize = 20;
/// Absolute slack in the per-step Lyapunov bound.
pub const LYAP_BOUND_SLACK: f64 = 1e-10;
/// Absolute slack in the strict-decrease test.
pub const LYAP_DECREASE_SLACK: f64 = 1e-12;
/// Grid resolution used to locate the worst period inside a window.
pub const WORST_CASE_GRID: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    UniformRandom,
    Constant(f64),
    SweepUp,
    WorstCaseGrid,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_random" => Ok(Self::UniformRandom),
            "sweep_up" => Ok(Self::SweepUp),
            "worst_case_grid" => Ok(Self::WorstCaseGrid),
            other => match other.strip_prefix("constant:").or_else(|| other.strip_prefix("constant=")) {
                Some(h) => h
                    .parse::<f64>()
                    .map(Self::Constant)
                    .map_err(|_| Error::Parse(format!("bad constant period in '{other}'"))),
                None => Err(Error::Parse(format!(
                    "unknown schedule '{other}' (uniform_random, constant:<h>, sweep_up, worst_case_grid)"
                ))),
            },
        }
    }
}

/// Period in the window with the largest `sigma_bar`, read off a uniform
/// grid of the window.
pub fn worst_case_period(plant: &ContinuousPlant, cert: &DesignCertificate, window: &SamplingWindow) -> Result<f64> {
    if window.h_min() == window.h_max() {
        return Ok(window.h_min());
    }
    let table = certify::sweep(plant, cert, window.h_min(), window.h_max(), WORST_CASE_GRID)?;
    table
        .rows
        .iter()
        .filter_map(|r| r.sigma_bar().map(|sb| (r.h, sb)))
        .fold(None, |best: Option<(f64, f64)>, (h, sb)| match best {
            Some((_, b)) if b >= sb => best,
            _ => Some((h, sb)),
        })
        .map(|(h, _)| h)
        .ok_or_else(|| Error::Rank("no period in the window has a residual spectrum".into()))
}

/// Build `n` sampling periods. `design` is needed only for `WorstCaseGrid`.
pub fn gen_schedule(
    kind: ScheduleKind,
    window: &SamplingWindow,
    n: usize,
    seed: u64,
    design: Option<(&ContinuousPlant, &DesignCertificate)>,
) -> Result<SamplingSchedule> {
    if n == 0 {
        return Err(Error::InvalidValue("schedule length must be at least 1".into()));
    }
    let (lo, hi) = (window.h_min(), window.h_max());
    let periods = match kind {
        ScheduleKind::Constant(h) => vec![h; n],
        ScheduleKind::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
        }
        ScheduleKind::SweepUp => {
            (0..n).map(|k| if n == 1 { lo } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect()
        }
        ScheduleKind::WorstCaseGrid => {
            let (plant, cert) =
                design.ok_or_else(|| Error::InvalidValue("worst_case_grid needs a plant and certificate".into()))?;
            vec![worst_case_period(plant, cert, window)?; n]
        }
    };
    SamplingSchedule::new(periods)
}

/// One exact closed-loop step `x+ = (F(h) + G(h) K) x`.
pub fn step_closed_loop(plant: &ContinuousPlant, k: &Matrix, x: &Vector, h: f64) -> Result<Vector> {
    let maps = discretize(plant, h)?;
    Ok((&maps.f + &maps.g * k) * x)
}

/// State after holding `u` for `tau` time units from `x`.
pub fn state_after(plant: &ContinuousPlant, x: &Vector, u: &Vector, tau: f64) -> Result<Vector> {
    if tau == 0.0 {
        return Ok(x.clone());
    }
    let maps = discretize(plant, tau)?;
    Ok(&maps.f * x + &maps.g * u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vector,
    /// Held input and the period it is held for; absent on the final state.
    pub u: Option<Vector>,
    pub h: Option<f64>,
    /// Largest singular value achieved by the modal closed loop over `h`.
    pub sigma_achieved: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub m: usize,
    pub samples: Vec<Sample>,
    /// `(t, x(t), index of the interval)` strictly inside sampling intervals.
    pub intersample: Vec<(f64, Vector, usize)>,
    /// `|x_k|_T` for every sample.
    pub lyap: Vec<f64>,
    t_inv: Matrix,
}

impl Trajectory {
    fn lyap_of(&self, x: &Vector) -> f64 {
        (&self.t_inv * x).norm()
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=self.n).map(|j| format!("x_{j}")));
        cols.extend((1..=self.m).map(|j| format!("u_{j}")));
        cols.push("lyap".into());
        cols.push("is_sample".into());
        cols.join(",")
    }

    /// Time-ordered CSV of samples and intersample points.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        let blank_u = vec![String::new(); self.m];
        let mut inter = self.intersample.iter().peekable();
        for (k, (sample, lyap)) in self.samples.iter().zip(&self.lyap).enumerate() {
            let mut cells = vec![fmt_sig12(sample.t)];
            cells.extend(sample.x.iter().map(|v| fmt_sig12(*v)));
            match &sample.u {
                Some(u) => cells.extend(u.iter().map(|v| fmt_sig12(*v))),
                None => cells.extend(blank_u.iter().cloned()),
            }
            cells.push(fmt_sig12(*lyap));
            cells.push("1".into());
            out.push_str(&cells.join(","));
            out.push('\n');
            while let Some((t, x, _)) = inter.next_if(|(_, _, idx)| *idx == k) {
                let mut cells = vec![fmt_sig12(*t)];
                cells.extend(x.iter().map(|v| fmt_sig12(*v)));
                if let Some(u) = &sample.u {
                    cells.extend(u.iter().map(|v| fmt_sig12(*v)));
                }
                cells.push(fmt_sig12(self.lyap_of(x)));
                cells.push("0".into());
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        out
    }

    /// Euclidean norms of the sampled states.
    pub fn state_norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.x.norm()).collect()
    }
}

/// Memoizes scheduled gains per exact period.
#[derive(Debug)]
pub struct GainCache<'a> {
    plant: &'a ContinuousPlant,
    cert: &'a DesignCertificate,
    gains: HashMap<u64, ScheduledGain>,
}

impl<'a> GainCache<'a> {
    pub fn new(plant: &'a ContinuousPlant, cert: &'a DesignCertificate) -> Self {
        Self { plant, cert, gains: HashMap::new() }
    }

    pub fn get(&mut self, h: f64) -> Result<&ScheduledGain> {
        let key = h.to_bits();
        if !self.gains.contains_key(&key) {
            let gain = certify::gain_at(self.plant, self.cert, h)?;
            self.gains.insert(key, gain);
        }
        Ok(&self.gains[&key])
    }
}

/// Simulate the sampled-data loop over `schedule` starting from `x0`, with
/// `substeps - 1` intersample points per interval.
pub fn simulate(
    plant: &ContinuousPlant,
    cert: &DesignCertificate,
    schedule: &SamplingSchedule,
    x0: &Vector,
    substeps: usize,
) -> Result<Trajectory> {
    let mut cache = GainCache::new(plant, cert);
    simulate_with(&mut cache, schedule, x0, substeps)
}

pub fn simulate_with(
    cache: &mut GainCache<'_>,
    schedule: &SamplingSchedule,
    x0: &Vector,
    substeps: usize,
) -> Result<Trajectory> {
    let plant = cache.plant;
    let cert = cache.cert;
    if x0.len() != plant.n() {
        return Err(Error::Dimension(format!("x0 has {} entries, plant has {}", x0.len(), plant.n())));
    }
    if let Some(&h) = schedule.periods().iter().find(|&&h| !(h < cert.h_star)) {
        return Err(Error::PeriodOutOfCertificate { h, h_star: cert.h_star });
    }
    let t_inv = cert.transform.t_inv.clone();
    let mut samples = Vec::with_capacity(schedule.len() + 1);
    let mut intersample = Vec::new();
    let mut lyap = Vec::with_capacity(schedule.len() + 1);
    let mut x = x0.clone();
    let mut t = 0.0;

    for (k, &h) in schedule.periods().iter().enumerate() {
        let gain = cache.get(h)?;
        let u = &gain.k * &x;
        for j in 1..substeps {
            let tau = h * j as f64 / substeps as f64;
            intersample.push((t + tau, state_after(plant, &x, &u, tau)?, k));
        }
        let next = step_closed_loop(plant, &gain.k, &x, h)?;
        lyap.push((&t_inv * &x).norm());
        samples.push(Sample { t, x, u: Some(u), h: Some(h), sigma_achieved: Some(gain.sigma_achieved) });
        x = next;
        t += h;
    }
    lyap.push((&t_inv * &x).norm());
    samples.push(Sample { t, x, u: None, h: None, sigma_achieved: None });
    Ok(Trajectory { n: plant.n(), m: plant.m(), samples, intersample, lyap, t_inv })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub steps: usize,
    /// Largest `|x_{k+1}|_T / |x_k|_T` over steps with `|x_k|_T > 0`.
    pub max_ratio: f64,
    /// Steps `k` where `|x_{k+1}|_T > sigma(h_k) |x_k|_T + 1e-10`.
    pub bound_violations: Vec<usize>,
    /// Steps `k` where `|x_{k+1}|_T >= |x_k|_T + 1e-12`.
    pub increase_violations: Vec<usize>,
}

impl LyapunovReport {
    pub fn passed(&self) -> bool {
        self.bound_violations.is_empty() && self.increase_violations.is_empty()
    }
}

/// Check the per-step contraction of `|x|_T` promised by the assigned
/// singular values.
pub fn lyapunov_check(traj: &Trajectory) -> LyapunovReport {
    let mut report = LyapunovReport {
        steps: traj.samples.len().saturating_sub(1),
        max_ratio: 0.0,
        bound_violations: Vec::new(),
        increase_violations: Vec::new(),
    };
    for k in 0..report.steps {
        let (now, next) = (traj.lyap[k], traj.lyap[k + 1]);
        let sigma = traj.samples[k].sigma_achieved.unwrap_or(f64::INFINITY);
        if now > 0.0 {
            report.max_ratio = report.max_ratio.max(next / now);
        }
        if next > sigma * now + LYAP_BOUND_SLACK {
            report.bound_violations.push(k);
        }
        if !(next < now + LYAP_DECREASE_SLACK) {
            report.increase_violations.push(k);
        }
    }
    report
}

/// Independent closed-loop runs from seeded uniform-random schedules, one
/// per seed `base_seed + r`, evaluated in parallel.
pub fn monte_carlo(
    plant: &ContinuousPlant,
    cert: &DesignCertificate,
    window: &SamplingWindow,
    runs: usize,
    steps: usize,
    base_seed: u64,
    x0: &Vector,
) -> Result<Vec<LyapunovReport>> {
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let schedule = gen_schedule(ScheduleKind::UniformRandom, window, steps, base_seed + r as u64, None)?;
            let traj = simulate(plant, cert, &schedule, x0, 0)?;
            Ok(lyapunov_check(&traj))
        })
        .collect()
}
