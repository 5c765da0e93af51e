//! Command-line front end with one subcommand per pipeline stage.
//!
//! Every command writes a run manifest next to its outputs and every output
//! cites the manifest hash. The hash is taken over all inputs that affect
//! the results. Timestamps and file paths stay out of it, so reruns with
//! the same inputs produce byte-identical outputs.

// Negated comparisons are deliberate: a NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nustab::certify::{self, SearchOptions};
use nustab::gain_init::PoleSpec;
use nustab::linalg::Vector;
use nustab::model::{ContinuousPlant, DesignCertificate, PlantConfig, SamplingWindow, TargetRule};
use nustab::sim::{self, ScheduleKind};
use nustab::GainChoice;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SYNTHESIS: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

/// Failure carrying the process exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: message.into() }
    }

    fn violation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VIOLATION, message: message.into() }
    }

    /// Errors raised while reading inputs are validation failures whatever
    /// their kind.
    fn input(e: nustab::Error) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<nustab::Error> for CliError {
    fn from(e: nustab::Error) -> Self {
        let code = if e.is_validation() { EXIT_VALIDATION } else { EXIT_SYNTHESIS };
        Self { code, message: e.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "nustab", version, about = "Stabilizing gains for nonuniformly sampled LTI plants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design K_c and certify h_star; writes certificate.json.
    Design(DesignArgs),
    /// Tabulate the residual spectrum and targets over a period grid.
    Sweep(SweepArgs),
    /// Simulate the scheduled closed loop and check the Lyapunov decrease.
    Simulate(SimulateArgs),
    /// Re-probe a certificate on a finer grid.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Plant configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for outputs; created if missing.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub common: Common,
    /// Contraction bound on the assigned largest singular value [default: config value or 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Position of each target inside its interlacing interval.
    #[arg(long, default_value_t = TargetRule::default().theta)]
    pub theta: f64,
    /// Relative margin kept below gamma when capping targets.
    #[arg(long, default_value_t = TargetRule::default().mu)]
    pub margin: f64,
    /// Points in the coarse h_star grid.
    #[arg(long, default_value_t = certify::DEFAULT_GRID_POINTS)]
    pub grid: usize,
    /// Bisection tolerance on h_star.
    #[arg(long, default_value_t = certify::DEFAULT_TOL_H)]
    pub tol_h: f64,
    /// Upper end of the h_star grid [default: 10 / min |D|].
    #[arg(long)]
    pub h_hi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Certificate written by `design`.
    #[arg(long)]
    pub cert: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub h_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h_hi: f64,
    /// Number of grid periods, endpoints included.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub cert: PathBuf,
    /// Schedule kind: uniform_random, constant:<h>, sweep_up, worst_case_grid.
    #[arg(long, default_value = "uniform_random")]
    pub schedule: String,
    /// Period window as `h_min,h_max` [default: config window, else 0.01 to 0.95 h_star].
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of sampling intervals.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Initial state as comma-separated values [default: all ones].
    #[arg(long)]
    pub x0: Option<String>,
    /// Subintervals per sampling interval for intersample output.
    #[arg(long, default_value_t = sim::DEFAULT_SUBSTEPS)]
    pub substeps: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub cert: PathBuf,
    /// How many times finer than the design grid to probe.
    #[arg(long, default_value_t = 8)]
    pub refinement: usize,
}

/// Resolved inputs of one run. Everything but `timestamp_unix` and
/// `config_path` enters the hash.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_path: String,
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cert_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub params: BTreeMap<String, Value>,
    pub timestamp_unix: u64,
}

impl RunManifest {
    fn new(command: &str, config_path: &Path, config_text: &str) -> Self {
        let timestamp_unix =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_path: config_path.display().to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            cert_sha256: None,
            seed: None,
            params: BTreeMap::new(),
            timestamp_unix,
        }
    }

    fn param(&mut self, key: &str, value: impl Serialize) {
        self.params.insert(key.to_string(), serde_json::to_value(value).expect("parameter serializes"));
    }

    /// SHA-256 of the canonical JSON of the hashed fields.
    pub fn digest(&self) -> String {
        let hashed = json!({
            "command": self.command,
            "tool_version": self.tool_version,
            "config_sha256": self.config_sha256,
            "cert_sha256": self.cert_sha256,
            "seed": self.seed,
            "params": self.params,
        });
        sha256_hex(hashed.to_string().as_bytes())
    }

    fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("manifest serializes");
        value["manifest_sha256"] = Value::String(self.digest());
        serde_json::to_string_pretty(&value).expect("manifest serializes") + "\n"
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Summary of a finished command, for callers that run it in-process.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub manifest_sha256: String,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Run the command line in `argv` (program name first) and return the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Cap rayon's pool at `NUSTAB_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("NUSTAB_THREADS") else { return Ok(()) };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::validation(format!("NUSTAB_THREADS must be a positive integer, got '{raw}'")))?;
    // A pool that is already built keeps its size; later calls are no-ops.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn execute(command: &Command) -> CliResult<Outcome> {
    match command {
        Command::Design(args) => cmd_design(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::validation(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))?;
    files.push(path);
    Ok(())
}

fn load_config(common: &Common) -> CliResult<(String, PlantConfig, ContinuousPlant)> {
    let text = read_text(&common.config)?;
    let config = PlantConfig::parse(&text).map_err(CliError::input)?;
    let plant = config.plant().map_err(CliError::input)?;
    Ok((text, config, plant))
}

fn load_certificate(path: &Path, plant: &ContinuousPlant) -> CliResult<(String, DesignCertificate)> {
    let text = read_text(path)?;
    let (cert, _) = DesignCertificate::from_json(&text).map_err(CliError::input)?;
    cert.validate(plant).map_err(|e| CliError::validation(format!("certificate does not match the plant: {e}")))?;
    Ok((text, cert))
}

/// Leading comment line that ties a CSV or script to its manifest.
fn citation(hash: &str) -> String {
    format!("# manifest_sha256={hash}\n")
}

pub fn cmd_design(args: &DesignArgs) -> CliResult<Outcome> {
    let (text, config, plant) = load_config(&args.common)?;
    let gamma = args.gamma.or(config.gamma).unwrap_or(1.0);
    let rule = TargetRule { theta: args.theta, mu: args.margin };
    let choice = match (config.k_c(&plant).map_err(CliError::input)?, &config.poles) {
        (Some(_), Some(_)) => return Err(CliError::validation("config gives both K_c and poles")),
        (Some(k), None) => GainChoice::Gain(k),
        (None, Some(p)) => GainChoice::Poles(PoleSpec::new(p.clone()).map_err(CliError::input)?),
        (None, None) => GainChoice::Default,
    };
    let search = SearchOptions { h_hi: args.h_hi, grid_points: args.grid, tol_h: args.tol_h };

    let mut manifest = RunManifest::new("design", &args.common.config, &text);
    manifest.param("gamma", gamma);
    manifest.param("theta", rule.theta);
    manifest.param("mu", rule.mu);
    manifest.param("grid_points", search.grid_points);
    manifest.param("tol_h", search.tol_h);
    manifest.param("h_hi", search.h_hi);
    let hash = manifest.digest();

    let cert = nustab::design(&plant, choice, gamma, rule, search)?;

    let mut files = Vec::new();
    write_file(&args.common.out_dir, "certificate.json", &(cert.to_json(Some(hash.clone())) + "\n"), &mut files)?;
    write_file(&args.common.out_dir, "design.manifest.json", &manifest.to_json(), &mut files)?;

    let k_c: Vec<String> = cert.transform.k_c.iter().map(|v| format!("{v:.6}")).collect();
    let mut summary = format!(
        "h_star = {:.6}{}\ngamma = {}\ncond(T) = {:.4}\nK_c (column-major) = [{}]\nmanifest sha256 = {hash}",
        cert.h_star,
        if cert.right_censored { " (right-censored: no crossing below h_hi)" } else { "" },
        cert.gamma,
        cert.transform.cond_t,
        k_c.join(", "),
    );
    if cert.right_censored {
        summary.push_str("\nwarning: h_star is the search horizon, not a crossing");
    }
    Ok(Outcome { manifest_sha256: hash, files, summary })
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<Outcome> {
    let (text, _, plant) = load_config(&args.common)?;
    let (cert_text, cert) = load_certificate(&args.cert, &plant)?;
    if !(args.h_lo > 0.0 && args.h_lo <= args.h_hi && args.h_hi.is_finite()) || args.steps < 1 {
        return Err(CliError::validation(format!(
            "sweep needs 0 < h_lo <= h_hi and steps >= 1, got h_lo = {}, h_hi = {}, steps = {}",
            args.h_lo, args.h_hi, args.steps
        )));
    }
    let mut manifest = RunManifest::new("sweep", &args.common.config, &text);
    manifest.cert_sha256 = Some(sha256_hex(cert_text.as_bytes()));
    manifest.param("h_lo", args.h_lo);
    manifest.param("h_hi", args.h_hi);
    manifest.param("steps", args.steps);
    let hash = manifest.digest();

    let table = certify::sweep(&plant, &cert, args.h_lo, args.h_hi, args.steps)?;
    let csv = citation(&hash) + &table.to_csv();
    let script = sweep_script(&table, cert.gamma, &hash);

    let mut files = Vec::new();
    write_file(&args.common.out_dir, "sweep.csv", &csv, &mut files)?;
    write_file(&args.common.out_dir, "sweep.gp", &script, &mut files)?;
    write_file(&args.common.out_dir, "sweep.manifest.json", &manifest.to_json(), &mut files)?;

    let first_bad = table.rows.iter().find(|r| !r.sigma_bar().is_some_and(|s| s < cert.gamma)).map(|r| r.h);
    let summary = format!(
        "{} rows over [{}, {}]; sigma_bar first reaches gamma = {} at {}\nmanifest sha256 = {hash}",
        table.rows.len(),
        args.h_lo,
        args.h_hi,
        cert.gamma,
        first_bad.map(|h| format!("h = {h:.6}")).unwrap_or_else(|| "no grid period".into()),
    );
    Ok(Outcome { manifest_sha256: hash, files, summary })
}

/// Gnuplot script for the sweep: residual branches solid, targets dashed.
pub fn sweep_script(table: &certify::SweepTable, gamma: f64, hash: &str) -> String {
    let n = table.n;
    let mut plots = Vec::new();
    for j in table.nonzero_branches() {
        let col = 2 + j;
        plots.push(format!("'sweep.csv' using 1:{col} with lines dt 1 lw 2 lc {} title 'a_{}'", j + 1, j + 1));
    }
    for j in table.nonzero_branches() {
        let col = 3 + n + j;
        plots.push(format!("'sweep.csv' using 1:{col} with lines dt 2 lc {} title 's_{}'", j + 1, j + 1));
    }
    plots.push(format!("{gamma} with lines dt 3 lc rgb 'black' title 'gamma'"));
    format!(
        "{}set datafile separator ','\nset datafile missing ''\nset terminal pngcairo size 900,600\nset output 'sweep.png'\nset xlabel 'h'\nset ylabel 'singular value'\nset key left top\nplot {}\n",
        citation(hash),
        plots.join(", \\\n     ")
    )
}

/// Gnuplot script for a trajectory: states over time and `|x|_T` at the
/// sampling instants on a log scale.
pub fn trajectory_script(n: usize, m: usize, hash: &str) -> String {
    let states: Vec<String> =
        (1..=n).map(|j| format!("'trajectory.csv' using 1:{} with lines title 'x_{j}'", 1 + j)).collect();
    let lyap_col = 2 + n + m;
    let sample_col = lyap_col + 1;
    format!(
        "{}set datafile separator ','\nset terminal pngcairo size 900,900\nset output 'trajectory.png'\nset multiplot layout 2,1\nset xlabel 't'\nset ylabel 'x'\nplot {}\nset logscale y\nset ylabel '|x|_T'\nplot 'trajectory.csv' using 1:(${sample_col} == 1 ? ${lyap_col} : 1/0) with linespoints title '|x_k|_T'\nunset multiplot\n",
        citation(hash),
        states.join(", \\\n     ")
    )
}

fn parse_list(raw: &str, what: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::validation(format!("{what} must be comma-separated numbers, got '{raw}'")))
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<Outcome> {
    let (text, config, plant) = load_config(&args.common)?;
    let (cert_text, cert) = load_certificate(&args.cert, &plant)?;
    let kind: ScheduleKind = args.schedule.parse().map_err(CliError::input)?;
    let window = match &args.window {
        Some(raw) => match parse_list(raw, "--window")?.as_slice() {
            [lo, hi] => SamplingWindow::new(*lo, *hi).map_err(CliError::input)?,
            _ => return Err(CliError::validation("--window takes exactly two values h_min,h_max")),
        },
        None => match config.window().map_err(CliError::input)? {
            Some(w) => w,
            None => SamplingWindow::new(0.01f64.min(0.5 * cert.h_star), 0.95 * cert.h_star).map_err(CliError::input)?,
        },
    };
    if !(window.h_max() < cert.h_star) {
        return Err(CliError::validation(format!(
            "window upper end {} is not below the certified h_star = {}",
            window.h_max(),
            cert.h_star
        )));
    }
    if let ScheduleKind::Constant(h) = kind {
        if !(h > 0.0 && h < cert.h_star) {
            return Err(CliError::validation(format!("constant period {h} is outside (0, h_star = {})", cert.h_star)));
        }
    }
    let x0 = match &args.x0 {
        Some(raw) => Vector::from_vec(parse_list(raw, "--x0")?),
        None => Vector::from_element(plant.n(), 1.0),
    };
    if x0.len() != plant.n() {
        return Err(CliError::validation(format!("--x0 has {} entries, plant has {}", x0.len(), plant.n())));
    }
    if args.substeps < 1 {
        return Err(CliError::validation("--substeps must be at least 1"));
    }

    let mut manifest = RunManifest::new("simulate", &args.common.config, &text);
    manifest.cert_sha256 = Some(sha256_hex(cert_text.as_bytes()));
    manifest.seed = Some(args.seed);
    manifest.param("schedule", &args.schedule);
    manifest.param("window", [window.h_min(), window.h_max()]);
    manifest.param("steps", args.steps);
    manifest.param("x0", x0.as_slice());
    manifest.param("substeps", args.substeps);
    let hash = manifest.digest();

    let schedule =
        sim::gen_schedule(kind, &window, args.steps, args.seed, Some((&plant, &cert))).map_err(CliError::input)?;
    let traj = sim::simulate(&plant, &cert, &schedule, &x0, args.substeps)?;
    let report = sim::lyapunov_check(&traj);

    let mut files = Vec::new();
    write_file(&args.common.out_dir, "trajectory.csv", &(citation(&hash) + &traj.to_csv()), &mut files)?;
    write_file(&args.common.out_dir, "trajectory.gp", &trajectory_script(plant.n(), plant.m(), &hash), &mut files)?;
    write_file(&args.common.out_dir, "simulate.manifest.json", &manifest.to_json(), &mut files)?;

    let norms = traj.state_norms();
    let summary = format!(
        "{} steps, |x_N| / |x_0| = {:.3e}, max |x_k+1|_T / |x_k|_T = {:.6}, Lyapunov violations: {} bound, {} increase\nmanifest sha256 = {hash}",
        report.steps,
        if norms[0] > 0.0 { norms[norms.len() - 1] / norms[0] } else { 0.0 },
        report.max_ratio,
        report.bound_violations.len(),
        report.increase_violations.len(),
    );
    if !report.passed() {
        return Err(CliError::violation(format!("Lyapunov check failed; {summary}")));
    }
    Ok(Outcome { manifest_sha256: hash, files, summary })
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<Outcome> {
    let (text, _, plant) = load_config(&args.common)?;
    let (cert_text, cert) = load_certificate(&args.cert, &plant)?;
    if args.refinement < 1 {
        return Err(CliError::validation("--refinement must be at least 1"));
    }
    let mut manifest = RunManifest::new("verify", &args.common.config, &text);
    manifest.cert_sha256 = Some(sha256_hex(cert_text.as_bytes()));
    manifest.param("refinement", args.refinement);
    let hash = manifest.digest();

    let report = certify::verify_certificate(&plant, &cert, args.refinement);
    let body = json!({
        "manifest_sha256": hash,
        "h_star": cert.h_star,
        "gamma": cert.gamma,
        "refinement": args.refinement,
        "probes": report.probes,
        "max_sigma_bar": report.max_sigma_bar,
        "violations": report.violations.iter().map(|(h, s)| json!({"h": h, "sigma_bar": s})).collect::<Vec<_>>(),
    });
    let mut files = Vec::new();
    write_file(
        &args.common.out_dir,
        "verify.json",
        &(serde_json::to_string_pretty(&body).expect("report serializes") + "\n"),
        &mut files,
    )?;
    write_file(&args.common.out_dir, "verify.manifest.json", &manifest.to_json(), &mut files)?;

    let summary = format!(
        "{} probes below h_star = {:.6}, max sigma_bar = {:.9}, violations: {}\nmanifest sha256 = {hash}",
        report.probes,
        cert.h_star,
        report.max_sigma_bar,
        report.violations.len()
    );
    if !report.passed() {
        return Err(CliError::violation(format!("certificate violated; {summary}")));
    }
    Ok(Outcome { manifest_sha256: hash, files, summary })
}
