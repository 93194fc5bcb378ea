//! Run configuration: JSON schema, validation and canonical form.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::estimates::TrajectoryConstants;
use crate::field::VectorField;
use crate::grid::{Grid, GridSpec};
use crate::random::{random_vector, FieldFlags, RandomSpec};
use crate::solver::{exact_shear_solution, Forcing, SolverConfig};
use crate::stokes::ProjectionContext;

/// Common misspellings and synonyms mapped to the key they stand for.
const ALIASES: &[(&str, &str)] = &[
    ("viscosity", "nu"),
    ("kinematic_viscosity", "nu"),
    ("timestep", "dt"),
    ("time_step", "dt"),
    ("end_time", "t_end"),
    ("final_time", "t_end"),
    ("t_final", "t_end"),
    ("scheme", "order"),
    ("cfl", "cfl_limit"),
    ("output_dir", "dir"),
    ("height", "half_height"),
    ("initial_condition", "initial"),
    ("force", "forcing"),
];

fn d_one() -> f64 {
    1.0
}
fn d_mode() -> u32 {
    1
}
fn d_decay() -> f64 {
    RandomSpec::default().decay
}
fn d_band() -> usize {
    RandomSpec::default().horizontal_band
}
fn d_degree() -> usize {
    RandomSpec::default().vertical_degree
}
fn d_perturbation() -> f64 {
    0.1
}
fn d_true() -> bool {
    true
}

/// Random divergence-free, no-slip field parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomFieldSpec {
    #[serde(default = "d_decay")]
    pub decay: f64,
    #[serde(default = "d_band")]
    pub horizontal_band: usize,
    #[serde(default = "d_degree")]
    pub vertical_degree: usize,
}

impl Default for RandomFieldSpec {
    fn default() -> Self {
        Self {
            decay: d_decay(),
            horizontal_band: d_band(),
            vertical_degree: d_degree(),
        }
    }
}

impl RandomFieldSpec {
    fn draw(&self, grid: &Arc<Grid>, seed: u64, amplitude: f64, ctx: &ProjectionContext) -> Result<VectorField> {
        let spec = RandomSpec {
            seed,
            decay: self.decay,
            horizontal_band: self.horizontal_band,
            vertical_degree: self.vertical_degree,
            amplitude,
        };
        random_vector(grid, &spec, FieldFlags::SOLENOIDAL_NO_SLIP, Some(ctx))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Zero,
    /// `a sin(kπ(x₃+L)/2L) e₁`.
    Shear {
        #[serde(default = "d_mode")]
        mode: u32,
        #[serde(default = "d_one")]
        amplitude: f64,
    },
    /// Shear mode plus a random field seeded by the run seed.
    PerturbedShear {
        #[serde(default = "d_mode")]
        mode: u32,
        #[serde(default = "d_one")]
        amplitude: f64,
        #[serde(default = "d_perturbation")]
        perturbation: f64,
        #[serde(default)]
        field: RandomFieldSpec,
    },
    Random {
        #[serde(default = "d_one")]
        amplitude: f64,
        #[serde(default)]
        field: RandomFieldSpec,
    },
    Checkpoint {
        path: PathBuf,
    },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Shear {
            mode: 1,
            amplitude: 1.0,
        }
    }
}

/// Spatial profile of a body force.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceShape {
    Shear {
        #[serde(default = "d_mode")]
        mode: u32,
    },
    /// Random field; without an explicit seed it uses `run seed + 1`.
    Random {
        #[serde(default)]
        field: RandomFieldSpec,
        #[serde(default)]
        seed: Option<u64>,
    },
    Checkpoint {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    #[default]
    None,
    Constant {
        #[serde(default = "d_one")]
        amplitude: f64,
        shape: ForceShape,
    },
    /// `(mean + sin(ω t)) · amplitude · shape`.
    Periodic {
        #[serde(default = "d_one")]
        amplitude: f64,
        #[serde(default = "d_one")]
        omega: f64,
        #[serde(default)]
        mean: f64,
        shape: ForceShape,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monitors {
    #[serde(default = "d_true")]
    pub energy_budget: bool,
    #[serde(default = "d_true")]
    pub decay_bounds: bool,
    #[serde(default = "d_true")]
    pub k1: bool,
    #[serde(default = "d_true")]
    pub differential: bool,
    #[serde(default = "d_true")]
    pub k2_k: bool,
}

impl Default for Monitors {
    fn default() -> Self {
        Self {
            energy_budget: true,
            decay_bounds: true,
            k1: true,
            differential: true,
            k2_k: true,
        }
    }
}

/// Where the constants of the a-priori bounds come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstantMode {
    /// Every constant equal to one.
    #[default]
    Unit,
    User {
        trajectory: TrajectoryConstants,
        #[serde(default = "d_one")]
        k_bounds: f64,
    },
    /// Trajectory constants read from a `calibrate` output file.
    Calibrated { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "d_dir")]
    pub dir: PathBuf,
    /// Records between checkpoints; 0 writes only the final state.
    #[serde(default)]
    pub checkpoint_every: u64,
}

fn d_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: d_dir(),
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSpec,
    pub nu: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub monitors: Monitors,
    #[serde(default)]
    pub constants: ConstantMode,
    #[serde(default)]
    pub output: OutputSpec,
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Closest known key to `unknown`, resolving aliases.
pub fn suggest_key(unknown: &str, candidates: &[&str]) -> Option<String> {
    let lower = unknown.to_ascii_lowercase();
    let mut best: Option<(f64, &str)> = None;
    let pool = candidates
        .iter()
        .map(|c| (*c, *c))
        .chain(ALIASES.iter().filter(|(_, t)| candidates.contains(t)).copied());
    for (name, target) in pool {
        let score = strsim::normalized_damerau_levenshtein(&lower, name);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, target));
        }
    }
    best.filter(|(s, _)| *s >= 0.5).map(|(_, t)| t.to_string())
}

/// Splits serde's "unknown field `x`, expected one of `a`, `b`" message.
fn unknown_field(msg: &str) -> Option<(String, Vec<String>)> {
    let rest = msg.strip_prefix("unknown field `")?;
    let (name, tail) = rest.split_once('`')?;
    let expected = tail.split('`').skip(1).step_by(2).map(str::to_string).collect();
    Some((name.to_string(), expected))
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        let location = format!("line {} column {}", e.line(), e.column());
        let full = e.to_string();
        let msg = full.rsplit_once(" at line ").map_or(full.as_str(), |(m, _)| m);
        match unknown_field(msg) {
            Some((name, expected)) => {
                let refs: Vec<&str> = expected.iter().map(String::as_str).collect();
                let hint = suggest_key(&name, &refs)
                    .map(|s| format!("; did you mean `{s}`?"))
                    .unwrap_or_default();
                config_err(&location, format!("unknown key `{name}`{hint}"))
            }
            None => config_err(&location, msg),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(path, format!("must be positive and finite, got {v}")))
    }
}

fn finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(config_err(path, format!("must be finite, got {v}")))
    }
}

fn validate_field(path: &str, f: &RandomFieldSpec) -> Result<()> {
    if !(f.decay > 1.0) {
        return Err(config_err(
            &format!("{path}.decay"),
            format!("must exceed 1, got {}", f.decay),
        ));
    }
    Ok(())
}

fn validate_shape(path: &str, s: &ForceShape) -> Result<()> {
    match s {
        ForceShape::Shear { mode } if *mode == 0 => Err(config_err(&format!("{path}.mode"), "must be at least 1")),
        ForceShape::Random { field, .. } => validate_field(&format!("{path}.field"), field),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        positive("nu", self.nu)?;
        let g = &self.grid;
        crate::grid::Grid::new(g.nx, g.ny, g.nz, g.px, g.py, g.half_height)
            .map_err(|e| config_err("grid", e.to_string()))?;
        self.solver.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => config_err(&format!("solver.{name}"), reason),
            other => other,
        })?;
        match &self.initial {
            InitialCondition::Shear { mode, amplitude } | InitialCondition::PerturbedShear { mode, amplitude, .. } => {
                if *mode == 0 {
                    return Err(config_err("initial.mode", "must be at least 1"));
                }
                finite("initial.amplitude", *amplitude)?;
            }
            InitialCondition::Random { amplitude, field } => {
                finite("initial.amplitude", *amplitude)?;
                validate_field("initial.field", field)?;
            }
            _ => {}
        }
        if let InitialCondition::PerturbedShear {
            perturbation, field, ..
        } = &self.initial
        {
            finite("initial.perturbation", *perturbation)?;
            validate_field("initial.field", field)?;
        }
        match &self.forcing {
            ForcingSpec::None => {}
            ForcingSpec::Constant { amplitude, shape } => {
                finite("forcing.amplitude", *amplitude)?;
                validate_shape("forcing.shape", shape)?;
            }
            ForcingSpec::Periodic {
                amplitude,
                omega,
                mean,
                shape,
            } => {
                finite("forcing.amplitude", *amplitude)?;
                finite("forcing.omega", *omega)?;
                finite("forcing.mean", *mean)?;
                validate_shape("forcing.shape", shape)?;
            }
        }
        if let ConstantMode::User {
            trajectory: t,
            k_bounds,
        } = &self.constants
        {
            for (name, v) in [
                ("constants.trajectory.k1", t.k1),
                ("constants.trajectory.energy_decay", t.energy_decay),
                ("constants.trajectory.dissipation", t.dissipation),
                ("constants.trajectory.horizontal_gradient", t.horizontal_gradient),
                ("constants.trajectory.v_norm", t.v_norm),
                ("constants.k_bounds", *k_bounds),
            ] {
                positive(name, v)?;
            }
        }
        Ok(())
    }

    /// Compact JSON with every default filled in.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        self.grid.build()
    }

    pub fn initial_field(&self, grid: &Arc<Grid>, ctx: &ProjectionContext) -> Result<VectorField> {
        match &self.initial {
            InitialCondition::Zero => Ok(VectorField::zeros(grid).classify()),
            InitialCondition::Shear { mode, amplitude } => exact_shear_solution(grid, *mode, *amplitude, self.nu, 0.0),
            InitialCondition::PerturbedShear {
                mode,
                amplitude,
                perturbation,
                field,
            } => {
                let base = exact_shear_solution(grid, *mode, *amplitude, self.nu, 0.0)?;
                let p = field.draw(grid, self.seed, *perturbation, ctx)?;
                Ok(base.add(&p)?.classify())
            }
            InitialCondition::Random { amplitude, field } => field.draw(grid, self.seed, *amplitude, ctx),
            InitialCondition::Checkpoint { path } => load_on_grid(path, grid),
        }
    }

    pub fn forcing(&self, grid: &Arc<Grid>, ctx: &ProjectionContext) -> Result<Forcing> {
        let shape = |s: &ForceShape, amplitude: f64| -> Result<Arc<VectorField>> {
            let f = match s {
                ForceShape::Shear { mode } => exact_shear_solution(grid, *mode, 1.0, self.nu, 0.0)?,
                ForceShape::Random { field, seed } => {
                    field.draw(grid, seed.unwrap_or(self.seed.wrapping_add(1)), 1.0, ctx)?
                }
                ForceShape::Checkpoint { path } => load_on_grid(path, grid)?,
            };
            Ok(Arc::new(f.scaled(amplitude)))
        };
        Ok(match &self.forcing {
            ForcingSpec::None => Forcing::None,
            ForcingSpec::Constant { amplitude, shape: s } => Forcing::Constant(shape(s, *amplitude)?),
            ForcingSpec::Periodic {
                amplitude,
                omega,
                mean,
                shape: s,
            } => Forcing::Periodic {
                shape: shape(s, *amplitude)?,
                omega: *omega,
                mean: *mean,
            },
        })
    }
}

fn load_on_grid(path: &Path, grid: &Arc<Grid>) -> Result<VectorField> {
    let ck = Checkpoint::read(path)?;
    if *ck.grid != **grid {
        return Err(config_err(
            &path.display().to_string(),
            "checkpoint grid differs from the configured grid",
        ));
    }
    ck.into_vector()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(r#"{"nu": 0.5}"#).unwrap();
        assert_eq!(c.nu, 0.5);
        assert_eq!(c.grid, GridSpec::default());
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(
            c.initial,
            InitialCondition::Shear {
                mode: 1,
                amplitude: 1.0
            }
        );
        assert_eq!(c.forcing, ForcingSpec::None);
        assert_eq!(c.constants, ConstantMode::Unit);
        assert_eq!(c.output.dir, PathBuf::from("out"));
    }

    #[test]
    fn canonical_round_trip() {
        let text = r#"{
            "nu": 0.1, "seed": 4,
            "grid": {"nx": 16, "ny": 16, "nz": 17},
            "solver": {"dt": 0.002, "t_end": 0.5},
            "initial": {"kind": "perturbed_shear", "perturbation": 0.2},
            "forcing": {"kind": "periodic", "omega": 2.0, "shape": {"kind": "random"}}
        }"#;
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.canonical()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn range_errors_name_the_field() {
        match parse_config(r#"{"nu": -1}"#) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "nu"),
            other => panic!("{other:?}"),
        }
        match parse_config(r#"{"nu": 1, "solver": {"dt": 0}}"#) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "solver.dt"),
            other => panic!("{other:?}"),
        }
        assert!(parse_config(r#"{"seed": 1}"#).is_err());
    }

    #[test]
    fn unknown_keys_get_suggestions() {
        let err = parse_config("{\n  \"nu\": 1,\n  \"viscocity\": 1\n}").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("`viscocity`") && msg.contains("`nu`") && msg.contains("line 3"),
            "{msg}"
        );
        let err = parse_config(r#"{"nu": 1, "solver": {"t_edn": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("`t_end`"), "{err}");
        assert_eq!(suggest_key("zzzzzzzz", &["nu", "grid"]), None);
    }
}
