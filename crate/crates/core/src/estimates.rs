//! Regularity diagnostic, a-priori bound formulas, energy budget and
//! trajectory monitors for the differential inequalities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decomposition::baroclinic;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::Axis;
use crate::solver::Forcing;
use crate::stokes::ProjectionContext;

/// Columns of the diagnostics CSV, in order.
pub const CSV_COLUMNS: [&str; 11] = [
    "t", "E", "D", "Dh", "V2", "crit", "resid", "cumD", "dh_grad2", "Au2", "dz_u2",
];

/// Safety factor applied to empirical upper-bound constants.
pub const CALIBRATION_MARGIN: f64 = 1.1;

/// One sample of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: u64,
    /// `‖u‖₂²`
    pub e: f64,
    /// `‖∇u‖₂²`
    pub d: f64,
    /// `‖∇_h u‖₂²`
    pub dh: f64,
    /// `‖u‖_V²`
    pub v2: f64,
    /// `‖∇ũ₃‖₂`
    pub crit: f64,
    /// `E(t) − E(t₀) + 2ν∫D − 2∫⟨f,u⟩`
    pub resid: f64,
    /// `∫_{t₀}^t ‖∇u‖₂² ds`
    pub cum_d: f64,
    /// `‖∇_h∇u‖₂²`
    pub dh_grad2: f64,
    /// `‖Au‖₂²`
    pub au2: f64,
    /// `‖∂u/∂x₃‖₂²`
    pub dz_u2: f64,
    /// `‖f(t)‖₂`
    pub f_norm: f64,
    /// `∫_{t₀}^t ⟨f, u⟩ ds`
    pub work: f64,
}

impl DiagnosticsRecord {
    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    /// Fixed-format row; `{:e}` prints the shortest round-tripping value.
    pub fn csv_row(&self) -> String {
        [
            self.t,
            self.e,
            self.d,
            self.dh,
            self.v2,
            self.crit,
            self.resid,
            self.cum_d,
            self.dh_grad2,
            self.au2,
            self.dz_u2,
        ]
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",")
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.e,
            self.d,
            self.dh,
            self.v2,
            self.crit,
            self.resid,
            self.cum_d,
            self.dh_grad2,
            self.au2,
            self.dz_u2,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Instantaneous norms of a velocity field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub e: f64,
    pub d: f64,
    pub dh: f64,
    pub v2: f64,
    pub crit: f64,
    pub dh_grad2: f64,
    pub au2: f64,
    pub dz_u2: f64,
}

pub fn measure(ctx: &ProjectionContext, u: &VectorField) -> Result<Norms> {
    let au = ctx.stokes_apply(u)?;
    let v2 = ctx.v_norm_sq(u)?;
    Ok(Norms {
        e: u.norm_sq(),
        d: u.grad_norm_sq(),
        dh: u.grad_h_norm_sq(),
        v2,
        crit: criterion_diag(u),
        dh_grad2: u.grad_h_grad_norm_sq(),
        au2: au.norm_sq(),
        dz_u2: u.derivative_norm_sq(&[Axis::X3]),
    })
}

/// `‖∇ũ₃‖₂`, the gradient of the baroclinic part of the vertical velocity.
pub fn criterion_diag(u: &VectorField) -> f64 {
    baroclinic(u.component(2)).field().grad_norm()
}

/// Largest sampled `‖f(tᵢ)‖₂`: a lower bound of the essential supremum.
pub fn forcing_sup(norms: &[f64]) -> Result<f64> {
    if norms.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(norms.iter().copied().fold(0.0, f64::max))
}

/// `forcing_sup` over `f` sampled at `times`.
pub fn forcing_sup_sampled(f: &Forcing, times: &[f64]) -> Result<f64> {
    forcing_sup(&times.iter().map(|t| f.norm_at(*t)).collect::<Vec<_>>())
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("{v} must be positive and finite"),
        })
    }
}

/// `K₁ = C F² (L⁴ + ν T)/ν² + 2‖u₀‖₂²`.
pub fn bound_k1(f: f64, l: f64, nu: f64, t: f64, u0_l2: f64, c: f64) -> Result<f64> {
    positive("L", l)?;
    positive("nu", nu)?;
    positive("T", t)?;
    if !(c > 0.0) {
        return Err(Error::InvalidParameter {
            name: "C",
            reason: format!("{c} must be positive"),
        });
    }
    Ok(c * f * f * (l.powi(4) + nu * t) / (nu * nu) + 2.0 * u0_l2 * u0_l2)
}

/// `e^x · b` with `+∞` when the product is not representable.
fn saturating_exp_times(x: f64, b: f64) -> f64 {
    if b == 0.0 || x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x.is_nan() || b.is_nan() {
        return f64::NAN;
    }
    if x + b.ln() > f64::MAX.ln() {
        return f64::INFINITY;
    }
    let v = x.exp() * b;
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// `K₂ = e^{C K₁² + C (T + K₁²) s⁴} [‖u₀‖²_{H¹} + F² + C K₁²]` with
/// `s = max ‖∇ũ₃‖₂`; saturates to `+∞`.
pub fn bound_k2(k1: f64, t: f64, sup_crit: f64, u0_h1: f64, f: f64, c: f64) -> f64 {
    let k1sq = k1 * k1;
    let exponent = c * k1sq + c * (t + k1sq) * sup_crit.powi(4);
    let bracket = u0_h1 * u0_h1 + f * f + c * k1sq;
    saturating_exp_times(exponent, bracket)
}

/// `K = e^{C K₂^{4/3} K₁^{2/3}} [‖u₀‖²_{H¹} + F²]`; saturates to `+∞`.
pub fn bound_k_final(k1: f64, k2: f64, u0_h1: f64, f: f64, c: f64) -> f64 {
    let exponent = if k1 == 0.0 || k2 == 0.0 {
        0.0
    } else {
        c * k2.powf(4.0 / 3.0) * k1.powf(2.0 / 3.0)
    };
    saturating_exp_times(exponent, u0_h1 * u0_h1 + f * f)
}

/// JSON has no infinities; non-finite values are written as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
mod extended {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::collections::BTreeMap;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn decode<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(E::custom(format!(
                    "expected a number, `inf`, `-inf` or `nan`, got `{t}`"
                ))),
            },
        }
    }

    fn text(v: f64) -> &'static str {
        if v.is_nan() {
            "nan"
        } else if v > 0.0 {
            "inf"
        } else {
            "-inf"
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(text(*v))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        decode(Repr::deserialize(d)?)
    }

    pub mod map {
        use super::*;
        use serde::ser::SerializeMap;

        pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
            let mut out = s.serialize_map(Some(m.len()))?;
            for (k, v) in m {
                if v.is_finite() {
                    out.serialize_entry(k, v)?;
                } else {
                    out.serialize_entry(k, text(*v))?;
                }
            }
            out.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
            BTreeMap::<String, Repr>::deserialize(d)?
                .into_iter()
                .map(|(k, r)| decode(r).map(|v| (k, v)))
                .collect()
        }
    }
}

/// Outcome of checking one bound over a trajectory or ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    #[serde(with = "extended::map")]
    pub inputs: BTreeMap<String, f64>,
    /// Bound value at the tightest sample.
    #[serde(with = "extended")]
    pub bound: f64,
    /// Measured value at the tightest sample.
    #[serde(with = "extended")]
    pub measured: f64,
    /// `bound − measured`.
    #[serde(with = "extended")]
    pub margin: f64,
    #[serde(with = "extended")]
    pub constant: f64,
    pub samples: usize,
    pub violations: usize,
    pub first_violation: Option<f64>,
    pub holds: bool,
    pub notes: Vec<String>,
}

impl BoundReport {
    fn new(name: &str, constant: f64) -> Self {
        Self {
            name: name.to_string(),
            inputs: BTreeMap::new(),
            bound: f64::INFINITY,
            measured: 0.0,
            margin: f64::INFINITY,
            constant,
            samples: 0,
            violations: 0,
            first_violation: None,
            holds: true,
            notes: Vec::new(),
        }
    }

    fn input(mut self, k: &str, v: f64) -> Self {
        self.inputs.insert(k.to_string(), v);
        self
    }

    /// Records `measured ≤ bound` at time `t`, with relative slack `tol`.
    fn observe(&mut self, t: f64, bound: f64, measured: f64, tol: f64) {
        self.samples += 1;
        let margin = bound - measured;
        if margin < self.margin || self.samples == 1 {
            self.bound = bound;
            self.measured = measured;
            self.margin = margin;
        }
        if measured > bound + tol * bound.abs().max(measured.abs()) {
            self.violations += 1;
            self.first_violation.get_or_insert(t);
            self.holds = false;
        }
    }

    pub fn violation_fraction(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.violations as f64 / self.samples as f64
        }
    }
}

/// Energy-budget residuals along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    /// `r(tᵢ, t₀)` with `t₀` the first sample.
    pub residuals: Vec<f64>,
    /// `max |r(t, 0)|`.
    pub max_abs: f64,
    /// `max_{s ≤ t} |r(t, s)|` over every sampled pair.
    pub max_pairwise: f64,
    /// Difference between sample-cadence and per-step trapezoidal `∫D`,
    /// scaled by `2ν`: an estimate of the cadence quadrature error.
    pub cadence_error: f64,
    /// `T · max|d²E/dt²|` from second differences of the samples; the
    /// natural size of an `O(dt²)` residual on this trajectory.
    pub trajectory_scale: f64,
    pub warning: Option<String>,
}

/// Residual `r(t, t₀) = E(t) − E(t₀) + 2ν∫D − 2∫⟨f,u⟩` at every sample.
///
/// Integrals come from the per-step cumulative columns; the trapezoidal rule
/// on the sample cadence is used only to estimate how coarse the cadence is.
pub fn energy_budget(records: &[DiagnosticsRecord], nu: f64) -> Result<EnergyBudget> {
    let first = records.first().ok_or(Error::EmptySamples)?;
    let residuals: Vec<f64> = records
        .iter()
        .map(|r| r.e - first.e + 2.0 * nu * (r.cum_d - first.cum_d) - 2.0 * (r.work - first.work))
        .collect();
    let max_abs = residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let (mut lo, mut hi, mut pair) = (residuals[0], residuals[0], 0.0_f64);
    for r in &residuals {
        lo = lo.min(*r);
        hi = hi.max(*r);
        pair = pair.max((r - lo).abs()).max((hi - r).abs());
    }
    let mut sampled = 0.0;
    let mut cadence_error = 0.0_f64;
    for w in records.windows(2) {
        sampled += 0.5 * (w[1].t - w[0].t) * (w[0].d + w[1].d);
        cadence_error = cadence_error.max(2.0 * nu * (sampled - (w[1].cum_d - first.cum_d)).abs());
    }
    let scale = records.iter().fold(0.0_f64, |m, r| m.max(r.e)).max(f64::MIN_POSITIVE);
    let warning = (cadence_error > 1e-3 * scale).then(|| {
        let msg = format!(
            "output cadence too coarse for sample-level integration: estimated error {cadence_error:.3e} vs energy {scale:.3e}"
        );
        log::warn!("{msg}");
        msg
    });
    Ok(EnergyBudget {
        residuals,
        max_abs,
        max_pairwise: pair,
        cadence_error,
        trajectory_scale: trajectory_scale(records),
        warning,
    })
}

fn trajectory_scale(records: &[DiagnosticsRecord]) -> f64 {
    let horizon = match (records.first(), records.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => return 0.0,
    };
    let curvature = records.windows(3).fold(0.0_f64, |m, w| {
        let (h0, h1) = (w[1].t - w[0].t, w[2].t - w[1].t);
        let d2 = 2.0 * ((w[2].e - w[1].e) / h1 - (w[1].e - w[0].e) / h0) / (h0 + h1);
        m.max(d2.abs())
    });
    horizon * curvature
}

/// Physical parameters shared by the trajectory bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    pub nu: f64,
    pub half_height: f64,
    /// `F`, the sampled sup of `‖f‖₂`.
    pub forcing_sup: f64,
}

/// `‖u(t)‖₂² ≤ C L⁴F²/ν² + e^{−νt/L²}‖u₀‖₂²` and
/// `ν∫₀ᵗ‖∇u‖₂² ≤ C L²F² t/ν + ‖u₀‖₂²` at every sample.
pub fn decay_bound_check(records: &[DiagnosticsRecord], p: &TrajectoryParams, c: f64) -> Result<[BoundReport; 2]> {
    let first = records.first().ok_or(Error::EmptySamples)?;
    let (nu, l, f) = (p.nu, p.half_height, p.forcing_sup);
    let mut energy = BoundReport::new("energy_decay", c)
        .input("nu", nu)
        .input("L", l)
        .input("F", f)
        .input("E0", first.e);
    let mut dissipation = energy.clone();
    dissipation.name = "dissipation".into();
    for r in records {
        let s = r.t - first.t;
        let b1 = c * l.powi(4) * f * f / (nu * nu) + (-nu * s / (l * l)).exp() * first.e;
        energy.observe(r.t, b1, r.e, 1e-10);
        let b2 = c * l * l * f * f * s / nu + first.e;
        dissipation.observe(r.t, b2, nu * (r.cum_d - first.cum_d), 1e-10);
    }
    Ok([energy, dissipation])
}

/// `‖u(t)‖₂² + ν∫₀ᵗ‖∇u‖₂² ≤ K₁` with `T` the final sample time.
pub fn k1_check(records: &[DiagnosticsRecord], p: &TrajectoryParams, c: f64) -> Result<BoundReport> {
    let first = records.first().ok_or(Error::EmptySamples)?;
    let last = records.last().unwrap();
    let horizon = (last.t - first.t).max(f64::MIN_POSITIVE);
    let k1 = bound_k1(p.forcing_sup, p.half_height, p.nu, horizon, first.e.sqrt(), c)?;
    let mut rep = BoundReport::new("K1", c).input("K1", k1).input("T", horizon);
    for r in records {
        rep.observe(r.t, k1, r.e + p.nu * (r.cum_d - first.cum_d), 1e-10);
    }
    Ok(rep)
}

/// `φ₁(z) = (eᶻ − 1)/z`.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// `φ₂(z) = (eᶻ − 1 − z)/z²`.
fn phi2(z: f64) -> f64 {
    if z.abs() < 0.1 {
        let mut term = 0.5;
        let mut sum = 0.5;
        for k in 3..14 {
            term *= z / k as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Checks `y(t) ≤ e^{∫₀ᵗa}(y(0) + ∫₀ᵗ b e^{−∫₀ˢa} ds)` at every sample.
///
/// The bound is integrated interval by interval with `a` replaced by its
/// interval mean and `b` linear, which is exact when `a` is constant and `b`
/// is linear and works directly on nonuniform time grids. `measured` and
/// `bound` hold the largest ratio `y/bound` and 1.
pub fn gronwall_check(t: &[f64], y: &[f64], a: &[f64], b: &[f64]) -> Result<BoundReport> {
    let n = t.len();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    if y.len() != n || a.len() != n || b.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            actual: y.len().min(a.len()).min(b.len()),
        });
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: "sample times must be strictly increasing".into(),
        });
    }
    let mut rep = BoundReport::new("gronwall", 1.0);
    let mut bound = y[0];
    let mut max_ratio: f64 = 1.0;
    let mut precondition_fail = 0;
    let tol = 1e-8;
    let mut check = |rep: &mut BoundReport, i: usize, bound: f64| {
        rep.samples += 1;
        let ratio = if bound > 0.0 {
            y[i] / bound
        } else if y[i] <= 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
        max_ratio = max_ratio.max(ratio);
        if y[i] > bound + tol * bound.abs().max(1.0) {
            rep.violations += 1;
            rep.first_violation.get_or_insert(t[i]);
            rep.holds = false;
        }
    };
    check(&mut rep, 0, bound);
    for i in 0..n - 1 {
        let h = t[i + 1] - t[i];
        let z = 0.5 * (a[i] + a[i + 1]) * h;
        bound = z.exp() * bound + h * (b[i] * phi1(z) + (b[i + 1] - b[i]) * phi2(z));
        check(&mut rep, i + 1, bound);
    }
    for i in 1..n.saturating_sub(1) {
        let dy = (y[i + 1] - y[i - 1]) / (t[i + 1] - t[i - 1]);
        let rhs = a[i] * y[i] + b[i];
        if dy > rhs + 1e-6 * rhs.abs().max(dy.abs()).max(1e-12) {
            precondition_fail += 1;
        }
    }
    if precondition_fail > 0 {
        rep.notes.push(format!(
            "y' ≤ a y + b fails (centred differences) at {precondition_fail} interior samples"
        ));
    }
    rep.bound = 1.0;
    rep.measured = max_ratio;
    rep.margin = 1.0 - max_ratio;
    Ok(rep)
}

/// One differential inequality `LHS ≤ C·RHS` monitored along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityMonitor {
    pub name: String,
    pub constant: f64,
    /// Interior samples with `RHS > 0` or `LHS ≤ 0`.
    pub samples: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    /// Smallest `C` for which every sample holds.
    pub minimal_constant: f64,
    /// Samples with `RHS = 0 < LHS`, excluded from the ratio.
    pub degenerate: usize,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub notes: Vec<String>,
}

impl InequalityMonitor {
    fn from_pairs(name: &str, constant: f64, lhs: Vec<f64>, rhs: Vec<f64>) -> Self {
        let mut min_c: f64 = 0.0;
        let (mut samples, mut violations, mut degenerate) = (0, 0, 0);
        for (l, r) in lhs.iter().zip(&rhs) {
            if *l <= 0.0 {
                samples += 1;
                continue;
            }
            if *r <= 0.0 {
                degenerate += 1;
                continue;
            }
            samples += 1;
            min_c = min_c.max(l / r);
            if *l > constant * r {
                violations += 1;
            }
        }
        Self {
            name: name.into(),
            constant,
            samples,
            violations,
            violation_fraction: if samples == 0 {
                0.0
            } else {
                violations as f64 / samples as f64
            },
            minimal_constant: min_c,
            degenerate,
            lhs,
            rhs,
            notes: Vec::new(),
        }
    }
}

/// Centred difference of `v` at interior sample `i`.
fn centred(records: &[DiagnosticsRecord], i: usize, v: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    (v(&records[i + 1]) - v(&records[i - 1])) / (records[i + 1].t - records[i - 1].t)
}

/// Constant-free sides of the horizontal-gradient inequality
/// `d‖∇_h u‖²/dt + ν‖∇_h∇u‖² ≤ C [F² + ‖u‖²‖∇u‖² + (‖u‖^{1/2}‖∇u‖² + ‖∇ũ₃‖⁴
/// + ‖u‖²‖∂₃u‖²‖∇ũ₃‖⁴)‖∇_h u‖²]` at interior samples.
pub fn horizontal_inequality_sides(records: &[DiagnosticsRecord], p: &TrajectoryParams) -> (Vec<f64>, Vec<f64>) {
    let f2 = p.forcing_sup * p.forcing_sup;
    (1..records.len().saturating_sub(1))
        .map(|i| {
            let r = &records[i];
            let lhs = centred(records, i, |r| r.dh) + p.nu * r.dh_grad2;
            let c4 = r.crit.powi(4);
            let rhs = f2 + r.e * r.d + (r.e.powf(0.25) * r.d + c4 + r.e * r.dz_u2 * c4) * r.dh;
            (lhs, rhs)
        })
        .unzip()
}

/// Constant-free sides of `d‖u‖_V²/dt + ν‖Au‖² ≤ C [F² + ‖∇_h u‖^{8/3}
/// ‖∂₃u‖^{4/3} ‖u‖_V²]` at interior samples.
pub fn vnorm_inequality_sides(records: &[DiagnosticsRecord], p: &TrajectoryParams) -> (Vec<f64>, Vec<f64>) {
    let f2 = p.forcing_sup * p.forcing_sup;
    (1..records.len().saturating_sub(1))
        .map(|i| {
            let r = &records[i];
            let lhs = centred(records, i, |r| r.v2) + p.nu * r.au2;
            let rhs = f2 + r.dh.powf(4.0 / 3.0) * r.dz_u2.powf(2.0 / 3.0) * r.v2;
            (lhs, rhs)
        })
        .unzip()
}

/// Monitors both differential inequalities with constants `c_h` and `c_v`.
pub fn diff_ineq_monitor(
    records: &[DiagnosticsRecord],
    p: &TrajectoryParams,
    c_h: f64,
    c_v: f64,
) -> Result<[InequalityMonitor; 2]> {
    if records.len() < 3 {
        return Err(Error::EmptySamples);
    }
    let (l1, r1) = horizontal_inequality_sides(records, p);
    let (l2, r2) = vnorm_inequality_sides(records, p);
    let mut h = InequalityMonitor::from_pairs("horizontal_gradient", c_h, l1, r1);
    let mut v = InequalityMonitor::from_pairs("v_norm", c_v, l2, r2);
    if let Some(note) = cadence_note(records) {
        h.notes.push(note.clone());
        v.notes.push(note);
    }
    Ok([h, v])
}

/// Warns when the sampled `‖∇_h u‖²` changes by more than 10% between
/// consecutive samples, where centred differences get noisy.
fn cadence_note(records: &[DiagnosticsRecord]) -> Option<String> {
    let jumps = records
        .windows(2)
        .filter(|w| (w[1].dh - w[0].dh).abs() > 0.1 * w[0].dh.max(w[1].dh))
        .count();
    (jumps > 0).then(|| {
        let msg = format!("{jumps} sample intervals change ‖∇_h u‖² by more than 10%; derivative estimates are noisy");
        log::warn!("{msg}");
        msg
    })
}

/// Empirical constants for the trajectory bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConstants {
    pub k1: f64,
    pub energy_decay: f64,
    pub dissipation: f64,
    pub horizontal_gradient: f64,
    pub v_norm: f64,
}

impl TrajectoryConstants {
    pub const UNIT: TrajectoryConstants = TrajectoryConstants {
        k1: 1.0,
        energy_decay: 1.0,
        dissipation: 1.0,
        horizontal_gradient: 1.0,
        v_norm: 1.0,
    };

    /// Component-wise maximum, for calibration over several trajectories.
    pub fn envelope(&self, other: &TrajectoryConstants) -> TrajectoryConstants {
        TrajectoryConstants {
            k1: self.k1.max(other.k1),
            energy_decay: self.energy_decay.max(other.energy_decay),
            dissipation: self.dissipation.max(other.dissipation),
            horizontal_gradient: self.horizontal_gradient.max(other.horizontal_gradient),
            v_norm: self.v_norm.max(other.v_norm),
        }
    }
}

fn max_ratio(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    pairs
        .filter(|(l, r)| *l > 0.0 && *r > 0.0)
        .fold(0.0, |m: f64, (l, r)| m.max(l / r))
}

/// Smallest constants making every bound hold on `records`, times
/// [`CALIBRATION_MARGIN`]. A bound that holds with `C = 0` gets a tiny
/// positive constant.
pub fn calibrate_trajectory(records: &[DiagnosticsRecord], p: &TrajectoryParams) -> Result<TrajectoryConstants> {
    let first = records.first().ok_or(Error::EmptySamples)?;
    let (nu, l, f) = (p.nu, p.half_height, p.forcing_sup);
    let f2 = f * f;
    let horizon = records.last().unwrap().t - first.t;
    let k1 = max_ratio(records.iter().map(|r| {
        (
            r.e + nu * (r.cum_d - first.cum_d) - 2.0 * first.e,
            f2 * (l.powi(4) + nu * horizon) / (nu * nu),
        )
    }));
    let energy_decay = max_ratio(records.iter().map(|r| {
        let s = r.t - first.t;
        (r.e - (-nu * s / (l * l)).exp() * first.e, l.powi(4) * f2 / (nu * nu))
    }));
    let dissipation = max_ratio(records.iter().map(|r| {
        let s = r.t - first.t;
        (nu * (r.cum_d - first.cum_d) - first.e, l * l * f2 * s / nu)
    }));
    let (l1, r1) = horizontal_inequality_sides(records, p);
    let (l2, r2) = vnorm_inequality_sides(records, p);
    let fin = |c: f64| (c * CALIBRATION_MARGIN).max(1e-12);
    Ok(TrajectoryConstants {
        k1: fin(k1),
        energy_decay: fin(energy_decay),
        dissipation: fin(dissipation),
        horizontal_gradient: fin(max_ratio(l1.into_iter().zip(r1))),
        v_norm: fin(max_ratio(l2.into_iter().zip(r2))),
    })
}

/// Every trajectory bound at the given constants.
pub fn trajectory_reports(
    records: &[DiagnosticsRecord],
    p: &TrajectoryParams,
    c: &TrajectoryConstants,
) -> Result<Vec<BoundReport>> {
    let [energy, dissipation] = {
        let [e, _] = decay_bound_check(records, p, c.energy_decay)?;
        let [_, d] = decay_bound_check(records, p, c.dissipation)?;
        [e, d]
    };
    let k1 = k1_check(records, p, c.k1)?;
    let [h, v] = diff_ineq_monitor(records, p, c.horizontal_gradient, c.v_norm)?;
    let as_report = |m: &InequalityMonitor| {
        let mut r = BoundReport::new(&m.name, m.constant);
        r.samples = m.samples;
        r.violations = m.violations;
        r.holds = m.violations == 0;
        r.measured = m.minimal_constant;
        r.bound = m.constant;
        r.margin = m.constant - m.minimal_constant;
        r.notes = m.notes.clone();
        r.inputs.insert("violation_fraction".into(), m.violation_fraction);
        r.inputs.insert("degenerate".into(), m.degenerate as f64);
        r
    };
    Ok(vec![k1, energy, dissipation, as_report(&h), as_report(&v)])
}

/// `K₂` and `K` evaluated along a trajectory, with the left-hand sides they
/// bound: `‖∇_h u‖² + ν∫‖∇_h∇u‖²` and `‖u‖_V² + ν∫‖Au‖²`.
pub fn k2_k_reports(
    records: &[DiagnosticsRecord],
    p: &TrajectoryParams,
    u0_h1: f64,
    c: f64,
) -> Result<[BoundReport; 2]> {
    let first = records.first().ok_or(Error::EmptySamples)?;
    let horizon = (records.last().unwrap().t - first.t).max(f64::MIN_POSITIVE);
    let k1 = bound_k1(p.forcing_sup, p.half_height, p.nu, horizon, first.e.sqrt(), c)?;
    let sup_crit = records.iter().fold(0.0_f64, |m, r| m.max(r.crit));
    let k2 = bound_k2(k1, horizon, sup_crit, u0_h1, p.forcing_sup, c);
    let k = bound_k_final(k1, k2, u0_h1, p.forcing_sup, c);
    let mut r2 = BoundReport::new("K2", c)
        .input("K1", k1)
        .input("sup_crit", sup_crit)
        .input("K2", k2);
    let mut rk = BoundReport::new("K", c).input("K1", k1).input("K2", k2).input("K", k);
    let (mut i2, mut ik) = (0.0, 0.0);
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            let q = &records[i - 1];
            i2 += 0.5 * (r.t - q.t) * (r.dh_grad2 + q.dh_grad2);
            ik += 0.5 * (r.t - q.t) * (r.au2 + q.au2);
        }
        r2.observe(r.t, k2, r.dh + p.nu * i2, 1e-10);
        rk.observe(r.t, k, r.v2 + p.nu * ik, 1e-10);
    }
    Ok([r2, rk])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use crate::grid::make_grid;
    use std::f64::consts::{E, PI};

    #[test]
    fn criterion_examples() {
        let g = make_grid(16, 16, 17, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let shear = VectorField::from_fn(&g, |_, _, z| [(PI * z / 2.0).cos(), 0.0, 0.0]);
        assert_eq!(criterion_diag(&shear), 0.0);
        // s(z) = z is mean-free, so ũ₃ = u₃.
        let u3 = ScalarField::from_fn(&g, |x, _, z| x.sin() * z);
        let u = VectorField::new([ScalarField::zeros(&g), ScalarField::zeros(&g), u3.clone()]).unwrap();
        assert!((criterion_diag(&u) - u3.grad_norm()).abs() < 1e-12);
        let flat = VectorField::from_fn(&g, |x, y, _| [0.0, 0.0, x.cos() * y.sin()]);
        assert!(criterion_diag(&flat) < 1e-12);
    }

    #[test]
    fn forcing_sup_examples() {
        assert!(forcing_sup(&[]).is_err());
        assert_eq!(forcing_sup(&[0.0, 0.0]).unwrap(), 0.0);
        let g = make_grid(8, 8, 9, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let shape = std::sync::Arc::new(VectorField::from_fn(&g, |x, _, z| [x.sin() * (1.0 - z * z), 0.0, 0.0]));
        let f = Forcing::Periodic {
            shape: shape.clone(),
            omega: 1.0,
            mean: 0.0,
        };
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let expect = times.iter().map(|t| t.sin().abs()).fold(0.0, f64::max) * shape.norm_l2();
        assert!((forcing_sup_sampled(&f, &times).unwrap() - expect).abs() < 1e-14);
        let c = Forcing::Constant(shape.clone());
        assert_eq!(forcing_sup_sampled(&c, &[0.0, 3.0]).unwrap(), shape.norm_l2());
    }

    #[test]
    fn k_formulas() {
        assert_eq!(
            bound_k1(0.0, 1.0, 1.0, 1.0, 3f64.sqrt(), 5.0).unwrap(),
            2.0 * 3f64.sqrt().powi(2)
        );
        assert_eq!(bound_k1(1.0, 1.0, 1.0, 2.0, 0.0, 1.0).unwrap(), 3.0);
        assert!(bound_k1(1.0, 1.0, -1.0, 2.0, 0.0, 1.0).is_err());
        assert_eq!(bound_k2(1.0, 1.0, 0.0, 1.0, 0.0, 1.0), E * 2.0);
        assert_eq!(bound_k2(3.0, 1.0, 0.0, 2.0, 1.5, 0.0), 4.0 + 2.25);
        assert_eq!(bound_k2(1e3, 1e3, 10.0, 1.0, 1.0, 1.0), f64::INFINITY);
        assert_eq!(bound_k_final(1.0, 1.0, 1.0, 0.0, 1.0), E);
        assert_eq!(bound_k_final(0.0, 5.0, 2.0, 1.0, 1.0), 5.0);
        assert_eq!(bound_k_final(1e10, 1e10, 1.0, 1.0, 1.0), f64::INFINITY);
        assert!(bound_k_final(1.0, 1.1, 1.0, 0.0, 1.0) >= bound_k_final(1.0, 1.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn gronwall_saturating_cases() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64 * 0.02).collect();
        let n = t.len();
        let exp: Vec<f64> = t.iter().map(|t| t.exp()).collect();
        let r = gronwall_check(&t, &exp, &vec![1.0; n], &vec![0.0; n]).unwrap();
        assert!(r.holds && (r.measured - 1.0).abs() < 1e-8, "{r:?}");
        let y: Vec<f64> = t.iter().map(|t| 1.0 - (-t).exp()).collect();
        let r = gronwall_check(&t, &y, &vec![-1.0; n], &vec![1.0; n]).unwrap();
        assert!(r.holds && (r.measured - 1.0).abs() < 1e-8, "{r:?}");
        let r = gronwall_check(&t, &vec![2.0; n], &vec![0.0; n], &vec![0.0; n]).unwrap();
        assert_eq!(r.measured, 1.0);
        let bad: Vec<f64> = t.iter().map(|t| (2.0 * t).exp()).collect();
        let r = gronwall_check(&t, &bad, &vec![1.0; n], &vec![0.0; n]).unwrap();
        assert!(!r.holds && !r.notes.is_empty());
    }

    #[test]
    fn gronwall_nonuniform_grid() {
        let t: Vec<f64> = (0..=40).map(|i| (i as f64 / 40.0).powi(2) * 2.0).collect();
        let n = t.len();
        let y: Vec<f64> = t.iter().map(|t| 1.0 - (-t).exp()).collect();
        let r = gronwall_check(&t, &y, &vec![-1.0; n], &vec![1.0; n]).unwrap();
        assert!((r.measured - 1.0).abs() < 1e-8);
    }

    fn record(t: f64, e: f64, d: f64, cum_d: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            step: 0,
            e,
            d,
            dh: 0.0,
            v2: d,
            crit: 0.0,
            resid: 0.0,
            cum_d,
            dh_grad2: 0.0,
            au2: 0.0,
            dz_u2: d,
            f_norm: 0.0,
            work: 0.0,
        }
    }

    #[test]
    fn energy_budget_of_exact_decay() {
        let lambda = PI * PI / 4.0;
        let recs: Vec<_> = (0..=100)
            .map(|i| {
                let t = i as f64 * 1e-3;
                let e = (-2.0 * lambda * t).exp();
                record(t, e, lambda * e, (1.0 - e) / 2.0)
            })
            .collect();
        let b = energy_budget(&recs, 1.0).unwrap();
        assert!(b.max_abs < 1e-14 && b.max_pairwise < 1e-14);
        assert!(b.cadence_error < 1e-6 && b.warning.is_none());
        // E'' = 4λ²e^{-2λt} peaks at the first interior sample; horizon 0.1
        let expect = 0.1 * 4.0 * lambda * lambda;
        assert!((b.trajectory_scale - expect).abs() < 1e-2 * expect);
        let zero = vec![record(0.0, 0.0, 0.0, 0.0), record(1.0, 0.0, 0.0, 0.0)];
        assert_eq!(energy_budget(&zero, 1.0).unwrap().max_abs, 0.0);
    }

    #[test]
    fn decay_bounds_on_exact_decay() {
        let lambda = PI * PI / 4.0;
        let recs: Vec<_> = (0..=100)
            .map(|i| {
                let t = i as f64 * 1e-2;
                let e = (-2.0 * lambda * t).exp();
                record(t, e, lambda * e, (1.0 - e) / 2.0)
            })
            .collect();
        let p = TrajectoryParams {
            nu: 1.0,
            half_height: 1.0,
            forcing_sup: 0.0,
        };
        let [a, b] = decay_bound_check(&recs, &p, 1.0).unwrap();
        assert!(a.holds && b.holds);
        assert!(k1_check(&recs, &p, 1.0).unwrap().holds);
        let [h, v] = diff_ineq_monitor(&recs, &p, 1.0, 1.0).unwrap();
        assert_eq!(h.violations, 0);
        assert_eq!(v.violations, 0);
        let zero: Vec<_> = (0..5).map(|i| record(i as f64, 0.0, 0.0, 0.0)).collect();
        let [a, _] = decay_bound_check(&zero, &p, 1.0).unwrap();
        assert!(a.holds);
    }

    #[test]
    fn bound_report_round_trips_infinities() {
        let mut r = BoundReport::new("K2", 1.0).input("K2", f64::INFINITY);
        r.observe(0.0, f64::INFINITY, 1.0, 0.0);
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"inf\""));
        let back: BoundReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<BoundReport>(&text.replace("\"inf\"", "\"huge\"")).is_err());
    }
}
