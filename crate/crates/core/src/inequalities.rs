//! Numerical verification of the functional inequalities and of the
//! integration-by-parts identity used in the a-priori estimates.
//!
//! Each verifier maps fields to a [`Sample`]: the left-hand side and the
//! right-hand side with its constant removed. Ensembles of random fields turn
//! samples into an [`InequalityReport`] with sup/inf ratios and an empirical
//! constant.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{baroclinic, vertical_average};
use crate::error::{Error, Result};
use crate::estimates::CALIBRATION_MARGIN;
use crate::field::{magnitude, PlaneField, ScalarField, VectorField, UNRESOLVED_FRACTION};
use crate::grid::{Axis, Grid, GridSpec};
use crate::random::{random_plane, random_scalar, random_vector, sample_seeds, FieldFlags, RandomSpec};
use crate::stokes::ProjectionContext;

/// Relative slack for constant-free checks.
pub const ROUNDING_SLACK: f64 = 1e-10;
/// Default tolerance of the identity check, relative to `max(|direct|, 1)`.
pub const IBP_TOLERANCE: f64 = 1e-6;
/// Smallest ensemble accepted for calibration.
pub const MIN_CALIBRATION_COUNT: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `lhs ≤ C·rhs`; the constant is an ensemble sup.
    Upper,
    /// `lhs ≥ C·rhs`; the constant is an ensemble inf.
    Lower,
    /// `lhs ≤ rhs` with no free constant.
    ConstantFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub lhs: f64,
    pub rhs_factor: f64,
}

impl Sample {
    pub fn new(lhs: f64, rhs_factor: f64) -> Self {
        Self { lhs, rhs_factor }
    }

    /// `lhs / rhs_factor`, or `None` for degenerate samples.
    pub fn ratio(&self) -> Option<f64> {
        let r = self.lhs / self.rhs_factor;
        (self.rhs_factor > 0.0 && r.is_finite()).then_some(r)
    }

    pub fn is_degenerate(&self) -> bool {
        self.ratio().is_none()
    }
}

fn check_range(value: f64, lo: f64, hi: f64, reason: &'static str) -> Result<()> {
    if value.is_nan() || value < lo || value > hi {
        return Err(Error::InvalidExponent { value, reason });
    }
    Ok(())
}

/// Two-dimensional Gagliardo–Nirenberg: `‖φ‖_r ≤ C‖φ‖₂^{2/r}‖φ‖_{H¹}^{1−2/r}`.
pub fn verify_gn_2d(phi: &PlaneField, r: f64) -> Result<Sample> {
    check_range(r, 2.0, f64::MAX, "need 2 <= r < inf")?;
    let lhs = phi.norm_lq(r)?;
    let rhs = phi.norm_l2().powf(2.0 / r) * phi.h1_norm().powf((r - 2.0) / r);
    Ok(Sample::new(lhs, rhs))
}

/// Three-dimensional Sobolev interpolation for `2 ≤ α ≤ 6`.
pub fn verify_sobolev_3d(psi: &ScalarField, alpha: f64) -> Result<Sample> {
    check_range(alpha, 2.0, 6.0, "need 2 <= alpha <= 6")?;
    let lhs = psi.norm_lq(alpha)?;
    let rhs = psi.norm_l2().powf((6.0 - alpha) / (2.0 * alpha))
        * psi.sobolev_norm(1)?.powf(3.0 * (alpha - 2.0) / (2.0 * alpha));
    Ok(Sample::new(lhs, rhs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoincareVariant {
    /// `‖∇v‖₂ ≥ (C₀/L)‖v‖₂`
    Gradient,
    /// `‖Av‖₂ ≥ (C₀/L)‖∇v‖₂`
    Stokes,
}

/// Lower-bound Poincaré inequalities on the discrete divergence-free,
/// no-slip space. The recorded ratio is `L·lhs/‖·‖`, an estimate of `C₀`.
pub fn verify_poincare(ctx: &ProjectionContext, v: &VectorField, variant: PoincareVariant) -> Result<Sample> {
    if !(v.is_divergence_free() && v.is_no_slip()) {
        return Err(Error::NotInSpace("Poincaré check needs a field in V".into()));
    }
    let l = v.grid().half_height();
    let grad = v.grad_norm_sq().sqrt();
    Ok(match variant {
        PoincareVariant::Gradient => Sample::new(grad, v.norm_l2() / l),
        PoincareVariant::Stokes => Sample::new(ctx.stokes_apply(v)?.norm_l2(), grad / l),
    })
}

/// Integral Minkowski inequality with `Ω₁` the horizontal box and `Ω₂` the
/// wall-normal interval.
pub fn verify_minkowski(phi: &ScalarField, r: f64) -> Result<Sample> {
    check_range(r, 1.0, f64::MAX, "need r >= 1")?;
    let g = phi.grid();
    let plane = g.plane_len();
    let mut columns = vec![0.0; plane];
    let mut rhs = 0.0;
    for (p, w) in phi.values().chunks_exact(plane).zip(g.weights()) {
        columns.iter_mut().zip(p).for_each(|(c, v)| *c += w * v.abs());
        let slab: f64 = p.iter().map(|v| v.abs().powf(r)).sum::<f64>() * g.cell_area();
        rhs += w * slab.powf(1.0 / r);
    }
    let lhs = (columns.iter().map(|c| c.powf(r)).sum::<f64>() * g.cell_area()).powf(1.0 / r);
    Ok(Sample::new(lhs, rhs))
}

/// `(‖θ‖₂ + ‖∇_h θ‖₂)^{1/2} ‖θ‖₂^{1/2}`
fn half_h1(l2: f64, gh: f64) -> f64 {
    ((l2 + gh) * l2).sqrt()
}

/// Trilinear estimate `∫|ξ||φ||ψ| ≤ C‖ξ‖^{1/2}(‖ξ‖+‖∇_hξ‖)^{1/2}
/// ‖φ‖^{1/2}(‖φ‖+‖∇_hφ‖)^{1/2}‖ψ‖` with `ξ` independent of `x₃`.
pub fn verify_lemma1(xi: &PlaneField, phi: &ScalarField, psi: &ScalarField) -> Result<Sample> {
    let g = phi.grid();
    if **xi.grid() != **g || **psi.grid() != **g {
        return Err(Error::GridMismatch);
    }
    let plane = g.plane_len();
    let prod: Vec<f64> = phi
        .values()
        .iter()
        .zip(psi.values())
        .enumerate()
        .map(|(i, (a, b))| (xi.values()[i % plane] * a * b).abs())
        .collect();
    let lhs = g.integrate(&prod);
    let rhs = half_h1(xi.norm_l2(), xi.grad_h_norm()) * half_h1(phi.norm_l2(), phi.grad_h_norm()) * psi.norm_l2();
    Ok(Sample::new(lhs, rhs))
}

/// Intermediate bound `[∫(∫|φ|² dx₃)² dx_h]^{1/4} ≤ C(‖φ‖+‖∇_hφ‖)^{1/2}‖φ‖^{1/2}`.
pub fn verify_nl1(phi: &ScalarField) -> Sample {
    let g = phi.grid();
    let columns = column_integrals(g, phi.values(), |v| v * v);
    let lhs = (columns.iter().map(|c| c * c).sum::<f64>() * g.cell_area()).powf(0.25);
    Sample::new(lhs, half_h1(phi.norm_l2(), phi.grad_h_norm()))
}

/// Largest two-dimensional `r = 4` ratio over the horizontal slices of `φ`.
/// Bounds the `verify_nl1` ratio by the Minkowski and Cauchy–Schwarz steps.
pub fn gn_slice_sup(phi: &ScalarField) -> Result<f64> {
    let g = phi.grid();
    let mut sup: f64 = 0.0;
    for slice in phi.values().chunks_exact(g.plane_len()) {
        let s = verify_gn_2d(&PlaneField::from_values(g, slice.to_vec())?, 4.0)?;
        if let Some(r) = s.ratio() {
            sup = sup.max(r);
        }
    }
    Ok(sup)
}

fn column_integrals(g: &Grid, values: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let plane = g.plane_len();
    let mut columns = vec![0.0; plane];
    for (p, w) in values.chunks_exact(plane).zip(g.weights()) {
        columns.iter_mut().zip(p).for_each(|(c, v)| *c += w * f(*v));
    }
    columns
}

/// Anisotropic `‖u‖₆ ≤ C‖∂₁u‖₂^{1/3}‖∂₂u‖₂^{1/3}‖∂₃u‖₂^{1/3}`.
pub fn verify_aniso_l6(u: &ScalarField) -> Result<Sample> {
    aniso_l6(&[u])
}

/// Vector form of [`verify_aniso_l6`] with Euclidean magnitudes.
pub fn verify_aniso_l6_vector(u: &VectorField) -> Result<Sample> {
    let c = u.components();
    aniso_l6(&[&c[0], &c[1], &c[2]])
}

fn aniso_l6(parts: &[&ScalarField]) -> Result<Sample> {
    let lhs = magnitude(parts).norm_lq(6.0)?;
    let rhs = Axis::ALL
        .iter()
        .map(|a| parts.iter().map(|p| p.diff(*a).norm_sq()).sum::<f64>().powf(1.0 / 6.0))
        .product();
    Ok(Sample::new(lhs, rhs))
}

/// First and horizontal second derivatives of a velocity field.
struct Derivatives {
    /// `d[k][j] = ∂_j u_k`
    d: [[ScalarField; 3]; 3],
    /// `h[l][j][k] = ∂_l ∂_j u_k` for `l` horizontal.
    h: [[[ScalarField; 3]; 3]; 2],
}

impl Derivatives {
    fn new(u: &VectorField) -> Self {
        let c = u.components();
        let d: [[ScalarField; 3]; 3] = std::array::from_fn(|k| std::array::from_fn(|j| c[k].diff(Axis::ALL[j])));
        let h = std::array::from_fn(|l| {
            std::array::from_fn(|j| std::array::from_fn(|k| d[k][j].diff(Axis::HORIZONTAL[l])))
        });
        Self { d, h }
    }

    /// `|∇u|` pointwise.
    fn grad_mag(&self) -> ScalarField {
        magnitude(&self.d.iter().flatten().collect::<Vec<_>>())
    }

    /// `|∇_h u|` pointwise.
    fn grad_h_mag(&self) -> ScalarField {
        magnitude(&self.d.iter().flat_map(|row| &row[..2]).collect::<Vec<_>>())
    }

    /// `|∇_h∇u|` pointwise.
    fn grad_h_grad_mag(&self) -> ScalarField {
        magnitude(&self.h.iter().flatten().flatten().collect::<Vec<_>>())
    }
}

fn integral_of(g: &Grid, f: impl Fn(usize) -> f64) -> f64 {
    let v: Vec<f64> = (0..g.len()).map(f).collect();
    g.integrate(&v)
}

fn require_v(u: &VectorField, what: &str) -> Result<()> {
    if u.is_divergence_free() && u.is_no_slip() {
        Ok(())
    } else {
        Err(Error::NotInSpace(format!(
            "{what} needs divergence_free and no_slip flags"
        )))
    }
}

/// Estimates of the three nonlinear terms and the slice-wise sup bound used
/// inside the third. Entries in order: `eee1`, `eee2`, `eee3`, `agmon_slice`.
pub fn verify_eee_estimates(u: &VectorField) -> Result<[Sample; 4]> {
    require_v(u, "nonlinear estimates")?;
    let g = u.grid().clone();
    let leak = u.components().iter().map(|c| c.aliasing_fraction()).fold(0.0, f64::max);
    if leak > UNRESOLVED_FRACTION {
        log::warn!("estimate sample underresolved: {leak:.2e} of energy outside the dealiased band");
    }
    let dv = Derivatives::new(u);
    let u3 = &u.components()[2];
    let bar = vertical_average(u3).extended();
    let tilde = baroclinic(u3).into_field();
    let grad_t: [ScalarField; 3] = std::array::from_fn(|j| tilde.diff(Axis::ALL[j]));
    let grad_t_mag = magnitude(&grad_t.iter().collect::<Vec<_>>());
    let hh_t: Vec<ScalarField> = Axis::HORIZONTAL
        .iter()
        .flat_map(|l| grad_t.iter().map(move |d| d.diff(*l)))
        .collect();

    let gm = dv.grad_mag();
    let ghm = dv.grad_h_mag();
    let gg = dv.grad_h_grad_mag();
    let um = magnitude(&u.components().iter().collect::<Vec<_>>());

    let n_u = um.norm_l2();
    let n_g = gm.norm_l2();
    let n_gh = ghm.norm_l2();
    let n_gg = gg.norm_l2();
    let n_t = grad_t_mag.norm_l2();
    let n_hh_t = hh_t.iter().map(|f| f.norm_sq()).sum::<f64>().sqrt();
    let n_dz = dv.d.iter().map(|row| row[2].norm_sq()).sum::<f64>().sqrt();
    let n_dz_h =
        dv.h.iter()
            .map(|hl| hl[2].iter().map(|f| f.norm_sq()).sum::<f64>())
            .sum::<f64>()
            .sqrt();

    let (bv, gmv, ggv) = (bar.values(), gm.values(), gg.values());
    let eee1 = Sample::new(
        integral_of(&g, |i| bv[i].abs() * gmv[i] * ggv[i]),
        n_u * n_g * n_gg + (n_u * n_gh * n_g).sqrt() * n_gg.powf(1.5),
    );
    let (tv, ghv) = (grad_t_mag.values(), ghm.values());
    let eee2 = Sample::new(
        integral_of(&g, |i| tv[i] * ghv[i] * ghv[i]),
        n_t * n_gh.sqrt() * (n_gh + n_gg).powf(1.5),
    );
    let uv = um.values();
    let eee3 = Sample::new(
        integral_of(&g, |i| uv[i] * tv[i] * ggv[i]),
        (n_u * n_gh * n_dz * n_dz_h).powf(0.25) * (n_t * n_hh_t).sqrt() * n_gg,
    );

    let dz_mag = magnitude(&dv.d.iter().map(|row| &row[2]).collect::<Vec<_>>());
    let agmon = agmon_slice(&g, &um, &dz_mag);
    Ok([eee1, eee2, eee3, agmon])
}

/// `sup_{x₃}|u| ≤ ‖u‖_{L²(x₃)}^{1/2}‖∂₃u‖_{L²(x₃)}^{1/2}` on each vertical
/// column; the reported pair is the column with the largest ratio.
fn agmon_slice(g: &Grid, mag: &ScalarField, dz_mag: &ScalarField) -> Sample {
    let plane = g.plane_len();
    let l2 = column_integrals(g, mag.values(), |v| v * v);
    let d2 = column_integrals(g, dz_mag.values(), |v| v * v);
    let mut sup = vec![0.0f64; plane];
    for p in mag.values().chunks_exact(plane) {
        sup.iter_mut().zip(p).for_each(|(s, v)| *s = s.max(*v));
    }
    let mut best = Sample::new(0.0, 0.0);
    let mut best_ratio = f64::NEG_INFINITY;
    for c in 0..plane {
        let s = Sample::new(sup[c], (l2[c] * d2[c]).sqrt().sqrt());
        if let Some(r) = s.ratio() {
            if r > best_ratio {
                best_ratio = r;
                best = s;
            }
        }
    }
    best
}

/// Both sides of the integration-by-parts rewriting of `−∫B(u,u)·Δ_h u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpValues {
    /// `−∫(u·∇)u·Δ_h u`
    pub direct: f64,
    /// `Σ_{l≤2} ∫ ∂_j u_k ∂_l u_j ∂_l u_k`
    pub first_rewrite: f64,
    /// Cubic expansion in horizontal and vertical derivative groups.
    pub expanded: f64,
    /// Form with `∂₃u₃` and `∇_h u₃` before the barotropic split.
    pub intermediate: f64,
    /// Final form in `ũ₃`, `ū₃`; the second-derivative factor of the
    /// `u_k ∂₃ũ₃` term is `∂_l∂_l u_k`.
    pub rearranged: f64,
    /// Same with that factor taken literally as `∂_l∂₃ u_k`.
    pub rearranged_as_displayed: f64,
    /// Term groups of `rearranged`: the `∂₃ũ₃[…]` group, the `Σ_{k,l}` group,
    /// the `ū₃[…]` group and the trailing `∇_hũ₃` group.
    pub groups: [f64; 4],
    /// `|direct − rearranged| / max(|direct|, 1)`
    pub mismatch: f64,
}

pub fn ibp_identity_check(u: &VectorField) -> Result<IbpValues> {
    require_v(u, "identity check")?;
    let g = u.grid().clone();
    let c = u.components();
    let cv: [&[f64]; 3] = std::array::from_fn(|k| c[k].values());
    let dv = Derivatives::new(u);
    let d: [[&[f64]; 3]; 3] = std::array::from_fn(|k| std::array::from_fn(|j| dv.d[k][j].values()));
    // ∂_l∂_l u_k and ∂_l∂₃ u_k for l, k horizontal-indexed
    let hll: [[&[f64]; 3]; 2] = std::array::from_fn(|l| std::array::from_fn(|k| dv.h[l][l][k].values()));
    let hl3: [[&[f64]; 3]; 2] = std::array::from_fn(|l| std::array::from_fn(|k| dv.h[l][2][k].values()));

    let direct = -integral_of(&g, |i| {
        (0..3)
            .map(|k| {
                let adv: f64 = (0..3).map(|j| cv[j][i] * d[k][j][i]).sum();
                adv * (hll[0][k][i] + hll[1][k][i])
            })
            .sum::<f64>()
    });

    let first_rewrite = integral_of(&g, |i| {
        let mut s = 0.0;
        for l in 0..2 {
            for j in 0..3 {
                for k in 0..3 {
                    s += d[k][j][i] * d[j][l][i] * d[k][l][i];
                }
            }
        }
        s
    });

    let (a, b, cc, dd) = (d[0][0], d[0][1], d[1][0], d[1][1]);
    let quad = |i: usize| a[i] * a[i] + dd[i] * dd[i] - a[i] * dd[i] + b[i] * b[i] + cc[i] * cc[i] + b[i] * cc[i];
    let div_h = |i: usize| a[i] + dd[i];

    let expanded = integral_of(&g, |i| {
        let mut s = a[i].powi(3) + dd[i].powi(3) + div_h(i) * (b[i] * b[i] + cc[i] * cc[i] + b[i] * cc[i]);
        for l in 0..2 {
            for k in 0..2 {
                s += d[k][2][i] * d[2][l][i] * d[k][l][i];
            }
            for j in 0..2 {
                s += d[2][j][i] * d[j][l][i] * d[2][l][i];
            }
            s += d[2][2][i] * d[2][l][i] * d[2][l][i];
        }
        s
    });

    // Shared shape of the last two displays with `w3` standing for `u₃` or
    // `ũ₃` (vertical derivative `w3z`, horizontal gradient `w3h`).
    let tail = |w3z: &[f64], w3h: [&[f64]; 2], second: [[&[f64]; 3]; 2]| -> [f64; 3] {
        let g1 = -integral_of(&g, |i| w3z[i] * quad(i));
        let g2 = integral_of(&g, |i| {
            let mut s = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    s += d[k][l][i] * w3z[i] * d[k][l][i] + cv[k][i] * w3z[i] * second[l][k][i]
                        - cv[k][i] * w3h[l][i] * hl3[l][k][i];
                }
            }
            s
        });
        let g4 = integral_of(&g, |i| {
            let mut s = 0.0;
            for l in 0..2 {
                for j in 0..2 {
                    s += w3h[j][i] * d[j][l][i] * d[2][l][i];
                }
                s -= div_h(i) * w3h[l][i] * d[2][l][i];
            }
            s
        });
        [g1, g2, g4]
    };

    let [i1, i2, i4] = tail(d[2][2], [d[2][0], d[2][1]], hll);
    let intermediate = i1 + i2 + i4;

    let tilde = baroclinic(&c[2]).into_field();
    let tz = tilde.diff(Axis::X3);
    let th = [tilde.diff(Axis::X1), tilde.diff(Axis::X2)];
    let th_v = [th[0].values(), th[1].values()];
    let [t1, t2, t4] = tail(tz.values(), th_v, hll);
    let [_, t2_lit, _] = tail(tz.values(), th_v, hl3);

    // ū₃ group: −∫ū₃ [Σ_{j,l} (∂_j(∂_l u_j ∂_l u₃) + ∂_l(∂₃u_j ∂_l u_j)) − Σ_l ∂_l(div_h u ∂_l u₃)]
    let product = |f: &dyn Fn(usize) -> f64| -> Result<ScalarField> {
        ScalarField::from_values(&g, (0..g.len()).map(f).collect())
    };
    let mut bracket = vec![0.0; g.len()];
    for l in 0..2 {
        for j in 0..2 {
            let p = product(&|i| d[j][l][i] * d[2][l][i])?.diff(Axis::HORIZONTAL[j]);
            let q = product(&|i| d[j][2][i] * d[j][l][i])?.diff(Axis::HORIZONTAL[l]);
            bracket
                .iter_mut()
                .zip(p.values().iter().zip(q.values()))
                .for_each(|(s, (x, y))| *s += x + y);
        }
        let r = product(&|i| div_h(i) * d[2][l][i])?.diff(Axis::HORIZONTAL[l]);
        bracket.iter_mut().zip(r.values()).for_each(|(s, x)| *s -= x);
    }
    let bar = vertical_average(&c[2]).extended();
    let t3 = -integral_of(&g, |i| bar.values()[i] * bracket[i]);

    let rearranged = t1 + t2 + t3 + t4;
    let rearranged_as_displayed = t1 + t2_lit + t3 + t4;
    Ok(IbpValues {
        direct,
        first_rewrite,
        expanded,
        intermediate,
        rearranged,
        rearranged_as_displayed,
        groups: [t1, t2, t3, t4],
        mismatch: (direct - rearranged).abs() / direct.abs().max(1.0),
    })
}

/// Ensemble of random fields driving a suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSpec {
    pub seed: u64,
    pub count: usize,
    /// Spectral decay exponent of the random coefficients.
    pub decay: f64,
    pub horizontal_band: usize,
    pub vertical_degree: usize,
    /// Grid override; `None` picks the suite default.
    pub grid: Option<GridSpec>,
    pub gn_exponent: f64,
    pub sobolev_exponent: f64,
    pub minkowski_exponent: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        let r = RandomSpec::default();
        Self {
            seed: 0,
            count: 200,
            decay: r.decay,
            horizontal_band: r.horizontal_band,
            vertical_degree: r.vertical_degree,
            grid: None,
            gn_exponent: 4.0,
            sobolev_exponent: 6.0,
            minkowski_exponent: 2.0,
        }
    }
}

impl EnsembleSpec {
    fn random(&self) -> RandomSpec {
        RandomSpec {
            seed: self.seed,
            decay: self.decay,
            horizontal_band: self.horizontal_band,
            vertical_degree: self.vertical_degree,
            amplitude: 1.0,
        }
    }

    pub fn grid_for(&self, suite: Suite) -> GridSpec {
        self.grid.unwrap_or(match suite {
            Suite::Ibp => GridSpec {
                nx: 48,
                ny: 48,
                nz: 65,
                ..GridSpec::default()
            },
            _ => GridSpec::default(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    All,
    Gn2d,
    Sobolev3d,
    Poincare,
    Minkowski,
    Lemma1,
    AnisoL6,
    Eee,
    Ibp,
}

impl Suite {
    pub const INDIVIDUAL: [Suite; 8] = [
        Suite::Gn2d,
        Suite::Sobolev3d,
        Suite::Poincare,
        Suite::Minkowski,
        Suite::Lemma1,
        Suite::AnisoL6,
        Suite::Eee,
        Suite::Ibp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Gn2d => "gn2d",
            Suite::Sobolev3d => "sobolev3d",
            Suite::Poincare => "poincare",
            Suite::Minkowski => "minkowski",
            Suite::Lemma1 => "lemma1",
            Suite::AnisoL6 => "aniso_l6",
            Suite::Eee => "eee",
            Suite::Ibp => "ibp",
        }
    }

    fn members(self) -> Vec<Suite> {
        match self {
            Suite::All => Suite::INDIVIDUAL.to_vec(),
            s => vec![s],
        }
    }

    /// Report ids and kinds produced by an individual suite.
    fn entries(self) -> &'static [(&'static str, BoundKind)] {
        use BoundKind::*;
        match self {
            Suite::Gn2d => &[("gn2d", Upper)],
            Suite::Sobolev3d => &[("sobolev3d", Upper)],
            Suite::Poincare => &[("poincare_gradient", Lower), ("poincare_stokes", Lower)],
            Suite::Minkowski => &[("minkowski", ConstantFree)],
            Suite::Lemma1 => &[("lemma1", Upper), ("nl1", Upper), ("nl1_chain", ConstantFree)],
            Suite::AnisoL6 => &[("aniso_l6", Upper)],
            Suite::Eee => &[
                ("eee1", Upper),
                ("eee2", Upper),
                ("eee3", Upper),
                ("agmon_slice", ConstantFree),
            ],
            Suite::Ibp | Suite::All => &[],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        std::iter::once(Suite::All)
            .chain(Suite::INDIVIDUAL)
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

/// Ensemble statistics of one inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub id: String,
    pub kind: BoundKind,
    pub n: usize,
    pub degenerate: usize,
    pub samples: Vec<Sample>,
    pub sup_ratio: Option<f64>,
    pub inf_ratio: Option<f64>,
    /// Sup with safety margin for upper bounds, raw inf for lower bounds,
    /// 1 for constant-free statements.
    pub calibrated_constant: Option<f64>,
    /// Constant at which `violations` is counted.
    pub constant: f64,
    pub violations: usize,
    /// Largest relative ratio change under rescaling of the inputs.
    pub max_scale_defect: f64,
}

impl InequalityReport {
    pub fn from_samples(id: &str, kind: BoundKind, samples: Vec<Sample>, max_scale_defect: f64) -> Self {
        let ratios: Vec<f64> = samples.iter().filter_map(Sample::ratio).collect();
        let sup_ratio = ratios.iter().copied().reduce(f64::max);
        let inf_ratio = ratios.iter().copied().reduce(f64::min);
        let calibrated_constant = match kind {
            BoundKind::Upper => sup_ratio.map(|s| s * CALIBRATION_MARGIN),
            BoundKind::Lower => inf_ratio,
            BoundKind::ConstantFree => Some(1.0),
        };
        let mut report = Self {
            id: id.to_string(),
            kind,
            n: samples.len(),
            degenerate: samples.len() - ratios.len(),
            samples,
            sup_ratio,
            inf_ratio,
            calibrated_constant,
            constant: calibrated_constant.unwrap_or(1.0),
            violations: 0,
            max_scale_defect,
        };
        report.violations = report.violations_at(report.constant);
        report
    }

    pub fn violations_at(&self, c: f64) -> usize {
        self.samples
            .iter()
            .filter(|s| !s.is_degenerate())
            .filter(|s| match self.kind {
                BoundKind::Lower => s.lhs < c * s.rhs_factor * (1.0 - ROUNDING_SLACK),
                _ => s.lhs > c * s.rhs_factor * (1.0 + ROUNDING_SLACK),
            })
            .count()
    }

    /// Re-counts violations at `c`.
    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant = c;
        self.violations = self.violations_at(c);
        self
    }

    pub fn csv_header() -> &'static str {
        "id,n,sup_ratio,calibrated_C,violations"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.id,
            self.n,
            opt(self.sup_ratio),
            opt(self.calibrated_constant),
            self.violations
        )
    }
}

/// Per-sample identity values with the pass/fail count at `tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub id: String,
    pub n: usize,
    pub tolerance: f64,
    pub samples: Vec<IbpValues>,
    pub max_mismatch: f64,
    pub failures: usize,
}

impl IdentityReport {
    pub fn new(samples: Vec<IbpValues>, tolerance: f64) -> Self {
        let max_mismatch = samples.iter().map(|s| s.mismatch).fold(0.0, f64::max);
        let failures = samples.iter().filter(|s| !(s.mismatch < tolerance)).count();
        Self {
            id: "ibp".into(),
            n: samples.len(),
            tolerance,
            samples,
            max_mismatch,
            failures,
        }
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{:e},,{}", self.id, self.n, self.max_mismatch, self.failures)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub spec: EnsembleSpec,
    pub inequalities: Vec<InequalityReport>,
    pub identity: Option<IdentityReport>,
}

impl SuiteReport {
    /// Violated constant-free inequalities and failed identity samples.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .inequalities
            .iter()
            .filter(|r| r.kind == BoundKind::ConstantFree && r.violations > 0)
            .map(|r| {
                format!(
                    "{}: {} of {} samples violate the constant-free bound",
                    r.id, r.violations, r.n
                )
            })
            .collect();
        if let Some(id) = self.identity.as_ref().filter(|r| r.failures > 0) {
            out.push(format!(
                "ibp: {} of {} samples exceed tolerance {:e} (max mismatch {:e})",
                id.failures, id.n, id.tolerance, id.max_mismatch
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(InequalityReport::csv_header());
        s.push('\n');
        for r in &self.inequalities {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        if let Some(id) = &self.identity {
            s.push_str(&id.csv_row());
            s.push('\n');
        }
        s
    }
}

const SCALES: [f64; 3] = [1.7, 0.37, 2.9];

struct SuiteContext {
    grid: Arc<Grid>,
    ctx: Option<ProjectionContext>,
}

/// Fields of one sample, drawn from per-sample seeds.
fn draw_and_evaluate(
    suite: Suite,
    sc: &SuiteContext,
    spec: &EnsembleSpec,
    seed: u64,
    scale: [f64; 3],
) -> Result<Vec<Sample>> {
    let g = &sc.grid;
    let seeds = sample_seeds(seed, 3);
    let rs = |i: usize| spec.random().with_seed(seeds[i]);
    let vector = || -> Result<VectorField> {
        Ok(random_vector(g, &rs(0), FieldFlags::SOLENOIDAL_NO_SLIP, sc.ctx.as_ref())?.scaled(scale[0]))
    };
    Ok(match suite {
        Suite::Gn2d => vec![verify_gn_2d(
            &random_plane(g, &rs(0))?.scaled(scale[0]),
            spec.gn_exponent,
        )?],
        Suite::Sobolev3d => vec![verify_sobolev_3d(
            &random_scalar(g, &rs(0), false)?.scaled(scale[0]),
            spec.sobolev_exponent,
        )?],
        Suite::Poincare => {
            let v = vector()?;
            let ctx = sc.ctx.as_ref().expect("projection context");
            vec![
                verify_poincare(ctx, &v, PoincareVariant::Gradient)?,
                verify_poincare(ctx, &v, PoincareVariant::Stokes)?,
            ]
        }
        Suite::Minkowski => vec![verify_minkowski(
            &random_scalar(g, &rs(0), false)?.scaled(scale[0]),
            spec.minkowski_exponent,
        )?],
        Suite::Lemma1 => {
            let xi = random_plane(g, &rs(0))?.scaled(scale[0]);
            let phi = random_scalar(g, &rs(1), true)?.scaled(scale[1]);
            let psi = random_scalar(g, &rs(2), false)?.scaled(scale[2]);
            let nl1 = verify_nl1(&phi);
            let chain = Sample::new(nl1.ratio().unwrap_or(0.0), gn_slice_sup(&phi)?);
            vec![verify_lemma1(&xi, &phi, &psi)?, nl1, chain]
        }
        Suite::AnisoL6 => vec![verify_aniso_l6_vector(&vector()?)?],
        Suite::Eee => verify_eee_estimates(&vector()?)?.to_vec(),
        Suite::Ibp | Suite::All => unreachable!("not an inequality suite"),
    })
}

fn relative_defect(a: &Sample, b: &Sample) -> f64 {
    match (a.ratio(), b.ratio()) {
        (Some(x), Some(y)) => (x - y).abs() / x.abs().max(f64::MIN_POSITIVE),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    }
}

fn run_individual(suite: Suite, spec: &EnsembleSpec) -> Result<SuiteReport> {
    if spec.count == 0 {
        return Err(Error::EmptySamples);
    }
    let grid = spec.grid_for(suite).build()?;
    let needs_ctx = matches!(suite, Suite::Poincare | Suite::AnisoL6 | Suite::Eee | Suite::Ibp);
    let sc = SuiteContext {
        ctx: if needs_ctx {
            Some(ProjectionContext::new(&grid)?)
        } else {
            None
        },
        grid,
    };
    let seeds = sample_seeds(spec.seed, spec.count);

    if suite == Suite::Ibp {
        let values = seeds
            .par_iter()
            .map(|&s| {
                let spec_i = spec.random().with_seed(s);
                let u = random_vector(&sc.grid, &spec_i, FieldFlags::SOLENOIDAL_NO_SLIP, sc.ctx.as_ref())?;
                ibp_identity_check(&u)
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(SuiteReport {
            suite,
            spec: spec.clone(),
            inequalities: Vec::new(),
            identity: Some(IdentityReport::new(values, IBP_TOLERANCE)),
        });
    }

    let per_sample = seeds
        .par_iter()
        .map(|&s| {
            let base = draw_and_evaluate(suite, &sc, spec, s, [1.0; 3])?;
            let scaled = draw_and_evaluate(suite, &sc, spec, s, SCALES)?;
            let defects: Vec<f64> = base.iter().zip(&scaled).map(|(a, b)| relative_defect(a, b)).collect();
            Ok((base, defects))
        })
        .collect::<Result<Vec<_>>>()?;

    let inequalities = suite
        .entries()
        .iter()
        .enumerate()
        .map(|(e, (id, kind))| {
            let samples = per_sample.iter().map(|(s, _)| s[e]).collect();
            // the chain entry compares two ratios, which scale identically
            let defect = per_sample.iter().map(|(_, d)| d[e]).fold(0.0, f64::max);
            InequalityReport::from_samples(id, *kind, samples, defect)
        })
        .collect();
    Ok(SuiteReport {
        suite,
        spec: spec.clone(),
        inequalities,
        identity: None,
    })
}

/// Runs every verifier of `suite` over the ensemble. Samples are evaluated
/// in parallel; results depend only on `spec`.
pub fn run_suite(suite: Suite, spec: &EnsembleSpec) -> Result<SuiteReport> {
    let mut out = SuiteReport {
        suite,
        spec: spec.clone(),
        inequalities: Vec::new(),
        identity: None,
    };
    for s in suite.members() {
        let r = run_individual(s, spec)?;
        out.inequalities.extend(r.inequalities);
        if r.identity.is_some() {
            out.identity = r.identity;
        }
    }
    Ok(out)
}

/// Empirical constant of one inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedConstant {
    pub id: String,
    pub kind: BoundKind,
    pub constant: f64,
    pub n: usize,
    pub degenerate: usize,
}

/// Calibrates every inequality of `suite`: ensemble sup times the safety
/// margin for upper bounds, ensemble inf for lower bounds.
pub fn calibrate_constant(suite: Suite, spec: &EnsembleSpec) -> Result<Vec<CalibratedConstant>> {
    if spec.count < MIN_CALIBRATION_COUNT {
        return Err(Error::InvalidParameter {
            name: "count",
            reason: format!(
                "calibration needs at least {MIN_CALIBRATION_COUNT} samples, got {}",
                spec.count
            ),
        });
    }
    let members: Vec<Suite> = suite.members().into_iter().filter(|s| *s != Suite::Ibp).collect();
    if members.is_empty() {
        return Err(Error::InvalidParameter {
            name: "suite",
            reason: "the identity suite has no constant to calibrate".into(),
        });
    }
    let mut out = Vec::new();
    for s in members {
        for r in run_individual(s, spec)?.inequalities {
            let constant = r.calibrated_constant.ok_or(Error::Degenerate(r.n))?;
            if r.degenerate == r.n {
                return Err(Error::Degenerate(r.n));
            }
            out.push(CalibratedConstant {
                id: r.id,
                kind: r.kind,
                constant,
                n: r.n,
                degenerate: r.degenerate,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn box_grid(n: usize, nz: usize) -> Arc<Grid> {
        make_grid(n, n, nz, 2.0 * PI, 2.0 * PI, 1.0).unwrap()
    }

    #[test]
    fn gn_single_mode_closed_form() {
        let g = box_grid(16, 5);
        let phi = PlaneField::from_fn(&g, |x, _| x.sin());
        let s = verify_gn_2d(&phi, 4.0).unwrap();
        let lhs = (1.5 * PI * PI).powf(0.25);
        let rhs = (PI * 2f64.sqrt()).sqrt() * (2.0 * PI).sqrt();
        assert!((s.lhs - lhs).abs() < 1e-12);
        assert!((s.rhs_factor - rhs).abs() < 1e-12);
        assert!((s.ratio().unwrap() - lhs / rhs).abs() < 1e-8);
        let two = verify_gn_2d(&phi, 2.0).unwrap();
        assert!((two.ratio().unwrap() - 1.0).abs() < 1e-14);
        assert!(verify_gn_2d(&phi, 1.5).is_err());
    }

    #[test]
    fn sobolev_exponent_range() {
        let g = box_grid(8, 9);
        let psi = ScalarField::from_fn(&g, |x, y, z| x.cos() + y.sin() * z);
        let s = verify_sobolev_3d(&psi, 2.0).unwrap();
        assert!((s.ratio().unwrap() - 1.0).abs() < 1e-14);
        let six = verify_sobolev_3d(&psi, 6.0).unwrap();
        assert!((six.rhs_factor - psi.sobolev_norm(1).unwrap()).abs() < 1e-12);
        assert!(verify_sobolev_3d(&psi, 6.5).is_err());
        assert!(verify_sobolev_3d(&psi, 1.0).is_err());
    }

    #[test]
    fn poincare_extremal_mode() {
        let g = box_grid(8, 33);
        let ctx = ProjectionContext::new(&g).unwrap();
        let v = VectorField::from_fn(&g, |_, _, z| [(PI * z / 2.0).cos(), 0.0, 0.0]).classify();
        for variant in [PoincareVariant::Gradient, PoincareVariant::Stokes] {
            let s = verify_poincare(&ctx, &v, variant).unwrap();
            assert!((s.ratio().unwrap() - PI / 2.0).abs() < 1e-8, "{variant:?}");
        }
        let bad = VectorField::from_fn(&g, |_, _, _| [1.0, 0.0, 0.0]).classify();
        assert!(verify_poincare(&ctx, &bad, PoincareVariant::Gradient).is_err());
    }

    #[test]
    fn minkowski_equality_cases() {
        let g = box_grid(12, 17);
        let sep = ScalarField::from_fn(&g, |x, y, z| (2.0 + x.sin() * y.cos()) * (z * z - 0.3));
        let s = verify_minkowski(&sep, 2.0).unwrap();
        assert!((s.lhs - s.rhs_factor).abs() <= 1e-10 * s.rhs_factor);
        let mixed = ScalarField::from_fn(&g, |x, y, z| (x + z).sin() + y.cos() * z);
        let f = verify_minkowski(&mixed, 1.0).unwrap();
        assert!((f.lhs - f.rhs_factor).abs() <= 1e-12 * f.rhs_factor);
        let strict = verify_minkowski(&mixed, 2.0).unwrap();
        assert!(strict.lhs < strict.rhs_factor * (1.0 - 1e-6));
        assert!(verify_minkowski(&mixed, 0.5).is_err());
    }

    #[test]
    fn lemma1_constant_fields() {
        let g = box_grid(8, 9);
        let xi = PlaneField::from_fn(&g, |_, _| 1.0);
        let one = ScalarField::constant(&g, 1.0);
        let s = verify_lemma1(&xi, &one, &one).unwrap();
        assert!((s.lhs - 8.0 * PI * PI).abs() < 1e-10);
        assert!((s.rhs_factor - 16.0 * PI.powi(3)).abs() < 1e-9);
        assert!((s.ratio().unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-12);
        let zero = verify_lemma1(&xi, &one, &ScalarField::zeros(&g)).unwrap();
        assert!(zero.is_degenerate());
    }

    #[test]
    fn nl1_is_bounded_by_slice_constant() {
        let g = box_grid(16, 17);
        let phi = ScalarField::from_fn(&g, |x, y, z| (1.0 - z * z) * (x.sin() + 0.5 * (x + 2.0 * y).cos() * z));
        let nl1 = verify_nl1(&phi).ratio().unwrap();
        assert!(nl1 <= gn_slice_sup(&phi).unwrap());
    }

    #[test]
    fn aniso_degenerate_and_regular() {
        let g = box_grid(16, 17);
        let only_x = ScalarField::from_fn(&g, |x, _, _| x.sin());
        assert!(verify_aniso_l6(&only_x).unwrap().is_degenerate());
        let u = ScalarField::from_fn(&g, |x, y, z| x.sin() * y.sin() * (PI * z / 2.0).cos());
        let s = verify_aniso_l6(&u).unwrap();
        let r = s.ratio().unwrap();
        assert!(r.is_finite() && r > 0.0);
        let scaled = verify_aniso_l6(&u.scaled(3.3)).unwrap().ratio().unwrap();
        assert!((scaled - r).abs() < 1e-12 * r);
    }

    #[test]
    fn shear_flow_trivial_entries() {
        let g = box_grid(8, 17);
        let u = VectorField::from_fn(&g, |_, _, z| [(PI * z / 2.0).cos(), 0.0, 0.0]).classify();
        let [e1, e2, e3, _] = verify_eee_estimates(&u).unwrap();
        assert_eq!((e1.lhs, e2.lhs, e3.lhs), (0.0, 0.0, 0.0));
        let ibp = ibp_identity_check(&u).unwrap();
        assert!(ibp.direct.abs() < 1e-14 && ibp.rearranged.abs() < 1e-14);
    }

    #[test]
    fn identity_on_a_random_field() {
        let g = make_grid(24, 24, 41, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let spec = RandomSpec {
            horizontal_band: 3,
            vertical_degree: 6,
            ..RandomSpec::default()
        }
        .with_seed(11);
        let u = random_vector(&g, &spec, FieldFlags::SOLENOIDAL_NO_SLIP, None).unwrap();
        let v = ibp_identity_check(&u).unwrap();
        let scale = v.direct.abs().max(1.0);
        for (name, x) in [
            ("first", v.first_rewrite),
            ("expanded", v.expanded),
            ("intermediate", v.intermediate),
            ("rearranged", v.rearranged),
        ] {
            assert!((x - v.direct).abs() < 1e-9 * scale, "{name}: {x} vs {}", v.direct);
        }
        assert!((v.rearranged_as_displayed - v.direct).abs() > 1e-6 * scale);
    }

    #[test]
    fn report_statistics() {
        let samples = vec![Sample::new(1.0, 2.0), Sample::new(3.0, 2.0), Sample::new(0.0, 0.0)];
        let r = InequalityReport::from_samples("x", BoundKind::Upper, samples.clone(), 0.0);
        assert_eq!((r.n, r.degenerate), (3, 1));
        assert_eq!(r.sup_ratio, Some(1.5));
        assert!((r.calibrated_constant.unwrap() - 1.65).abs() < 1e-15);
        assert_eq!(r.violations, 0);
        assert_eq!(r.clone().with_constant(1.0).violations, 1);
        let low = InequalityReport::from_samples("y", BoundKind::Lower, samples, 0.0);
        assert_eq!(low.calibrated_constant, Some(0.5));
        assert_eq!(low.with_constant(1.0).violations, 1);
        assert_eq!(r.csv_row(), "x,3,1.5e0,1.6500000000000001e0,0");
    }

    #[test]
    fn suite_names_round_trip() {
        for s in std::iter::once(Suite::All).chain(Suite::INDIVIDUAL) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!(matches!("lemma2".parse::<Suite>(), Err(Error::UnknownSuite(_))));
    }

    #[test]
    fn calibration_needs_enough_samples() {
        let spec = EnsembleSpec {
            count: 10,
            ..EnsembleSpec::default()
        };
        assert!(calibrate_constant(Suite::Gn2d, &spec).is_err());
    }

    #[test]
    fn small_ensemble_is_deterministic() {
        let spec = EnsembleSpec {
            count: 6,
            seed: 5,
            grid: Some(GridSpec {
                nx: 16,
                ny: 16,
                nz: 17,
                ..GridSpec::default()
            }),
            ..EnsembleSpec::default()
        };
        let a = run_suite(Suite::Lemma1, &spec).unwrap();
        let b = run_suite(Suite::Lemma1, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.failures().is_empty());
        for r in &a.inequalities {
            assert!(r.max_scale_defect < 1e-12, "{}: {}", r.id, r.max_scale_defect);
        }
    }
}
