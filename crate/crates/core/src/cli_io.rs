//! Subcommands: simulation runs, inequality verification, calibration and
//! report rendering. Every artifact carries the tool version and the SHA-256
//! of the canonical configuration that produced it.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{sha256_hex, ConstantMode, RunConfig};
use crate::error::{Error, Result};
use crate::estimates::{
    calibrate_trajectory, energy_budget, forcing_sup_sampled, k2_k_reports, trajectory_reports, BoundReport,
    DiagnosticsRecord, EnergyBudget, TrajectoryConstants, TrajectoryParams,
};
use crate::grid::Grid;
use crate::inequalities::{calibrate_constant, run_suite, CalibratedConstant, EnsembleSpec, Suite, SuiteReport};
use crate::solver::{Forcing, Solver};
use crate::stokes::ProjectionContext;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Overrides the configured output directory when set.
pub const OUT_DIR_ENV: &str = "NSCHANNEL_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Json(_) | Error::Checkpoint(_) => EXIT_IO,
        Error::NonFinite { .. } | Error::Cfl { .. } | Error::SingularMode { .. } | Error::NegativeVNorm(_) => {
            EXIT_NUMERICAL
        }
        _ => EXIT_CONFIG,
    }
}

/// `NSCHANNEL_OUT_DIR` if set, else `configured`.
pub fn resolve_out_dir(configured: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.to_path_buf(),
    }
}

fn header_line(hash: &str) -> String {
    format!("# nschannel {TOOL_VERSION} config_sha256={hash}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// A configured run ready to integrate.
pub struct Simulation {
    pub grid: Arc<Grid>,
    pub ctx: ProjectionContext,
    pub solver: Solver,
    pub forcing: Forcing,
    /// `‖u₀‖_{H¹}`
    pub u0_h1: f64,
}

impl Simulation {
    pub fn prepare(cfg: &RunConfig) -> Result<Self> {
        let grid = cfg.build_grid()?;
        let ctx = ProjectionContext::new(&grid)?;
        let u0 = cfg.initial_field(&grid, &ctx)?;
        let forcing = cfg.forcing(&grid, &ctx)?;
        let u0_h1 = u0.sobolev_norm(1)?;
        let solver = Solver::new(&u0, cfg.nu, forcing.clone(), cfg.solver.clone())?;
        Ok(Self {
            grid,
            ctx,
            solver,
            forcing,
            u0_h1,
        })
    }

    pub fn run<F>(&mut self, sink: F) -> Result<Vec<DiagnosticsRecord>>
    where
        F: FnMut(&DiagnosticsRecord, &Solver) -> Result<()>,
    {
        self.solver.run(&self.ctx, sink)
    }

    /// Trajectory parameters with `F` sampled at every nominal step time.
    pub fn params(&self, records: &[DiagnosticsRecord]) -> Result<TrajectoryParams> {
        let (t0, t1) = match (records.first(), records.last()) {
            (Some(a), Some(b)) => (a.t, b.t),
            _ => return Err(Error::EmptySamples),
        };
        let dt = self.solver.config().dt;
        let n = ((t1 - t0) / dt).ceil().max(1.0) as usize;
        let mut times: Vec<f64> = (0..=n).map(|i| (t0 + i as f64 * dt).min(t1)).collect();
        times.extend(records.iter().map(|r| r.t));
        Ok(TrajectoryParams {
            nu: self.solver.nu(),
            half_height: self.grid.half_height(),
            forcing_sup: forcing_sup_sampled(&self.forcing, &times)?,
        })
    }
}

/// Runs `cfg` without writing anything.
pub fn simulate(cfg: &RunConfig) -> Result<(Vec<DiagnosticsRecord>, TrajectoryParams, f64)> {
    let mut sim = Simulation::prepare(cfg)?;
    let records = sim.run(|_, _| Ok(()))?;
    let params = sim.params(&records)?;
    Ok((records, params, sim.u0_h1))
}

/// Contents of a `calibrate` output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsFile {
    pub tool_version: String,
    pub config_sha256: String,
    pub suite: String,
    #[serde(default)]
    pub constants: Vec<CalibratedConstant>,
    #[serde(default)]
    pub trajectory: Option<TrajectoryConstants>,
    #[serde(default)]
    pub training_seeds: Vec<u64>,
}

impl ConstantsFile {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Trajectory bound constants and the constant of the `K₂`, `K` formulas.
pub fn resolve_constants(mode: &ConstantMode) -> Result<(TrajectoryConstants, f64)> {
    match mode {
        ConstantMode::Unit => Ok((TrajectoryConstants::UNIT, 1.0)),
        ConstantMode::User { trajectory, k_bounds } => Ok((*trajectory, *k_bounds)),
        ConstantMode::Calibrated { path } => {
            let file = ConstantsFile::read(path)?;
            let t = file.trajectory.ok_or_else(|| Error::Config {
                path: path.display().to_string(),
                message: "constants file has no trajectory constants; run `calibrate --suite trajectory`".into(),
            })?;
            Ok((t, 1.0))
        }
    }
}

/// Every enabled bound of a finished trajectory.
pub fn evaluate_bounds(
    cfg: &RunConfig,
    records: &[DiagnosticsRecord],
    params: &TrajectoryParams,
    u0_h1: f64,
    constants: &TrajectoryConstants,
    k_constant: f64,
) -> Result<Vec<BoundReport>> {
    let m = &cfg.monitors;
    let mut out = Vec::new();
    if records.len() >= 3 && (m.k1 || m.decay_bounds || m.differential) {
        for r in trajectory_reports(records, params, constants)? {
            let keep = match r.name.as_str() {
                "K1" => m.k1,
                "energy_decay" | "dissipation" => m.decay_bounds,
                _ => m.differential,
            };
            if keep {
                out.push(r);
            }
        }
    }
    if m.k2_k && !records.is_empty() {
        out.extend(k2_k_reports(records, params, u0_h1, k_constant)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub final_time: f64,
    pub steps: u64,
    pub forcing_sup: f64,
    /// `sup_t ‖∇ũ₃‖₂` over the records.
    pub sup_crit: f64,
    pub u0_h1: f64,
    pub constants: TrajectoryConstants,
    pub k_constant: f64,
    pub energy_budget: Option<EnergyBudget>,
    pub bounds: Vec<BoundReport>,
    pub all_bounds_hold: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub report: RunReport,
    pub summary: String,
}

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const BOUNDS_FILE: &str = "bounds.json";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const ABORT_CHECKPOINT: &str = "last_good.ckpt";

/// Integrates `cfg`, streaming diagnostics to CSV, then evaluates the bounds.
/// On a solver abort the last accepted state is checkpointed before the
/// error is returned; rows written so far stay valid.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutcome> {
    let hash = cfg.hash();
    let (constants, k_constant) = resolve_constants(&cfg.constants)?;
    let out_dir = resolve_out_dir(&cfg.output.dir);
    let mut sim = Simulation::prepare(cfg)?;
    fs::create_dir_all(&out_dir)?;

    let mut csv = BufWriter::new(File::create(out_dir.join(DIAGNOSTICS_FILE))?);
    writeln!(csv, "{}", header_line(&hash))?;
    writeln!(csv, "{}", DiagnosticsRecord::csv_header())?;
    let every = cfg.output.checkpoint_every;
    let mut count = 0u64;
    let result = sim.run(|rec, solver| {
        writeln!(csv, "{}", rec.csv_row())?;
        if every > 0 && count > 0 && count % every == 0 {
            let name = format!("step_{:08}.ckpt", rec.step);
            Checkpoint::from_vector(&solver.velocity(), rec.t).write(&out_dir.join(name))?;
        }
        count += 1;
        Ok(())
    });
    csv.flush()?;
    drop(csv);
    let records = match result {
        Ok(r) => r,
        Err(e) => {
            let last = Checkpoint::from_vector(&sim.solver.velocity(), sim.solver.time());
            last.write(&out_dir.join(ABORT_CHECKPOINT))?;
            return Err(e);
        }
    };
    Checkpoint::from_vector(&sim.solver.velocity(), sim.solver.time()).write(&out_dir.join(FINAL_CHECKPOINT))?;

    let params = sim.params(&records)?;
    let budget = if cfg.monitors.energy_budget {
        Some(energy_budget(&records, cfg.nu)?)
    } else {
        None
    };
    let bounds = evaluate_bounds(cfg, &records, &params, sim.u0_h1, &constants, k_constant)?;
    let sup_crit = records.iter().fold(0.0_f64, |m, r| m.max(r.crit));
    let all_bounds_hold = bounds.iter().all(|b| b.holds);
    let report = RunReport {
        tool_version: TOOL_VERSION.into(),
        config_sha256: hash,
        config: cfg.clone(),
        final_time: sim.solver.time(),
        steps: sim.solver.steps(),
        forcing_sup: params.forcing_sup,
        sup_crit,
        u0_h1: sim.u0_h1,
        constants,
        k_constant,
        energy_budget: budget,
        bounds,
        all_bounds_hold,
    };
    write_json(&out_dir.join(BOUNDS_FILE), &report)?;
    let summary = format!(
        "sup_t |grad u3~|_2 = {:.6e}; all enabled bounds held: {}",
        sup_crit,
        if all_bounds_hold { "yes" } else { "no" }
    );
    Ok(RunOutcome {
        out_dir,
        report,
        summary,
    })
}

fn spec_hash(spec: &EnsembleSpec, suite: &str) -> String {
    let canonical = serde_json::to_string(&(suite, spec)).expect("spec serializes");
    sha256_hex(canonical.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyFile {
    pub tool_version: String,
    pub config_sha256: String,
    pub report: SuiteReport,
}

#[derive(Clone, Debug)]
pub struct VerifyOutcome {
    pub report: SuiteReport,
    pub failures: Vec<String>,
    pub json_path: PathBuf,
    pub csv_path: PathBuf,
}

/// Runs a verification suite and writes `verify_<suite>.json` and
/// `verify_<suite>.csv`.
pub fn cmd_verify(suite: Suite, spec: &EnsembleSpec, out_dir: &Path) -> Result<VerifyOutcome> {
    let report = run_suite(suite, spec)?;
    let hash = spec_hash(spec, suite.name());
    fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join(format!("verify_{suite}.json"));
    let csv_path = out_dir.join(format!("verify_{suite}.csv"));
    write_json(
        &json_path,
        &VerifyFile {
            tool_version: TOOL_VERSION.into(),
            config_sha256: hash.clone(),
            report: report.clone(),
        },
    )?;
    fs::write(&csv_path, format!("{}\n{}", header_line(&hash), report.summary_csv()))?;
    Ok(VerifyOutcome {
        failures: report.failures(),
        report,
        json_path,
        csv_path,
    })
}

/// Calibrates the constants of an inequality suite and writes
/// `constants_<suite>.json`.
pub fn cmd_calibrate(suite: Suite, spec: &EnsembleSpec, out_dir: &Path) -> Result<(ConstantsFile, PathBuf)> {
    let constants = calibrate_constant(suite, spec)?;
    let file = ConstantsFile {
        tool_version: TOOL_VERSION.into(),
        config_sha256: spec_hash(spec, suite.name()),
        suite: suite.name().into(),
        constants,
        trajectory: None,
        training_seeds: Vec::new(),
    };
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("constants_{suite}.json"));
    write_json(&path, &file)?;
    Ok((file, path))
}

/// Trajectory constants enveloping `runs` runs of `cfg` with seeds
/// `cfg.seed, cfg.seed + 1, …`.
pub fn calibrate_trajectories(cfg: &RunConfig, runs: usize) -> Result<(TrajectoryConstants, Vec<u64>)> {
    if runs == 0 {
        return Err(Error::InvalidParameter {
            name: "runs",
            reason: "need at least one training run".into(),
        });
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let mut acc: Option<TrajectoryConstants> = None;
    for &seed in &seeds {
        let c = RunConfig { seed, ..cfg.clone() };
        let (records, params, _) = simulate(&c)?;
        let k = calibrate_trajectory(&records, &params)?;
        acc = Some(acc.map_or(k, |a| a.envelope(&k)));
    }
    Ok((acc.expect("at least one run"), seeds))
}

/// Writes `constants_trajectory.json` for use by the `calibrated` constant
/// mode of `run`.
pub fn cmd_calibrate_trajectory(cfg: &RunConfig, runs: usize, out_dir: &Path) -> Result<(ConstantsFile, PathBuf)> {
    let (trajectory, training_seeds) = calibrate_trajectories(cfg, runs)?;
    let file = ConstantsFile {
        tool_version: TOOL_VERSION.into(),
        config_sha256: cfg.hash(),
        suite: "trajectory".into(),
        constants: Vec::new(),
        trajectory: Some(trajectory),
        training_seeds,
    };
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("constants_trajectory.json");
    write_json(&path, &file)?;
    Ok((file, path))
}

pub const REPORT_FILE: &str = "report.txt";
pub const PLOT_FILE: &str = "plot_diagnostics.dat";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

/// Renders every artifact found in `dir` as text tables, writes them to
/// `report.txt`, and converts `diagnostics.csv` to whitespace-separated
/// columns in `plot_diagnostics.dat`.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    let mut out = String::new();
    let mut found = false;
    for path in &entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("verify_") && name.ends_with(".json") {
            found = true;
            let v: VerifyFile = serde_json::from_str(&fs::read_to_string(path)?)?;
            let _ = writeln!(out, "== {name} (config {})", &v.config_sha256[..12]);
            let _ = writeln!(
                out,
                "{:<20} {:>6} {:>14} {:>14} {:>14} {:>10}",
                "id", "n", "sup_ratio", "inf_ratio", "calibrated_C", "violations"
            );
            for r in &v.report.inequalities {
                let _ = writeln!(
                    out,
                    "{:<20} {:>6} {:>14} {:>14} {:>14} {:>10}",
                    r.id,
                    r.n,
                    fmt_opt(r.sup_ratio),
                    fmt_opt(r.inf_ratio),
                    fmt_opt(r.calibrated_constant),
                    r.violations
                );
            }
            if let Some(id) = &v.report.identity {
                let _ = writeln!(
                    out,
                    "{:<20} {:>6} max mismatch {:.3e}, failures {}",
                    id.id, id.n, id.max_mismatch, id.failures
                );
            }
        } else if name.starts_with("constants_") && name.ends_with(".json") {
            found = true;
            let c = ConstantsFile::read(path)?;
            let _ = writeln!(out, "== {name} (suite {})", c.suite);
            for k in &c.constants {
                let _ = writeln!(
                    out,
                    "{:<20} {:>14.6e} (n = {}, degenerate = {})",
                    k.id, k.constant, k.n, k.degenerate
                );
            }
            if let Some(t) = &c.trajectory {
                let _ = writeln!(out, "{t:?} from seeds {:?}", c.training_seeds);
            }
        } else if name == BOUNDS_FILE {
            found = true;
            let r: RunReport = serde_json::from_str(&fs::read_to_string(path)?)?;
            let _ = writeln!(out, "== {name} (config {})", &r.config_sha256[..12]);
            let _ = writeln!(
                out,
                "t = {}, steps = {}, F = {:.6e}, sup crit = {:.6e}",
                r.final_time, r.steps, r.forcing_sup, r.sup_crit
            );
            if let Some(b) = &r.energy_budget {
                let _ = writeln!(
                    out,
                    "energy residual max {:.3e}, trajectory scale {:.3e}",
                    b.max_abs, b.trajectory_scale
                );
            }
            let _ = writeln!(
                out,
                "{:<20} {:>14} {:>10} {:>10} {:>6}",
                "bound", "constant", "samples", "violations", "holds"
            );
            for b in &r.bounds {
                let _ = writeln!(
                    out,
                    "{:<20} {:>14.6e} {:>10} {:>10} {:>6}",
                    b.name, b.constant, b.samples, b.violations, b.holds
                );
            }
        } else if name == DIAGNOSTICS_FILE {
            found = true;
            let text = fs::read_to_string(path)?;
            let mut plot = String::new();
            let mut rows = 0usize;
            for line in text.lines() {
                if line.starts_with('#') {
                    plot.push_str(line);
                } else if line.starts_with('t') {
                    plot.push_str("# ");
                    plot.push_str(&line.replace(',', " "));
                } else {
                    rows += 1;
                    plot.push_str(&line.replace(',', " "));
                }
                plot.push('\n');
            }
            fs::write(dir.join(PLOT_FILE), plot)?;
            let _ = writeln!(out, "== {name}: {rows} records -> {PLOT_FILE}");
        }
    }
    if !found {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no nschannel artifacts in {}", dir.display()),
        )));
    }
    fs::write(dir.join(REPORT_FILE), &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::UnknownSuite("x".into())), EXIT_CONFIG);
        assert_eq!(
            exit_code(&Error::Cfl {
                cfl: 2.0,
                limit: 0.5,
                suggested_dt: 1e-3
            }),
            EXIT_NUMERICAL
        );
        assert_eq!(exit_code(&Error::NonFinite { time: 0.0, step: 1 }), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::Checkpoint("x".into())), EXIT_IO);
    }

    #[test]
    fn unit_and_user_constants() {
        let cfg = parse_config(r#"{"nu": 1}"#).unwrap();
        assert_eq!(
            resolve_constants(&cfg.constants).unwrap(),
            (TrajectoryConstants::UNIT, 1.0)
        );
        let cfg = parse_config(
            r#"{"nu": 1, "constants": {"mode": "user", "k_bounds": 2,
                "trajectory": {"k1": 1, "energy_decay": 2, "dissipation": 3, "horizontal_gradient": 4, "v_norm": 5}}}"#,
        )
        .unwrap();
        let (t, k) = resolve_constants(&cfg.constants).unwrap();
        assert_eq!((t.v_norm, k), (5.0, 2.0));
    }
}
