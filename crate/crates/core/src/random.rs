//! Seeded random fields with algebraically decaying spectra.
//!
//! Fields are band-limited: horizontal mode numbers `|m| ≤ horizontal_band`
//! and Chebyshev degree `≤ vertical_degree`. Random numbers are drawn over
//! the whole band in a fixed order, so a given seed describes the same
//! continuous field on every grid that can represent the band; modes a grid
//! cannot carry (beyond its 2/3 cutoff) are dropped.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{PlaneField, ScalarField, VectorField};
use crate::grid::Grid;
use crate::modal;
use crate::stokes::ProjectionContext;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Parameters of a random field draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub seed: u64,
    /// Amplitude exponent: coefficients scale like `(1 + m₁² + m₂² + n²)^{-decay/2}`.
    pub decay: f64,
    pub horizontal_band: usize,
    pub vertical_degree: usize,
    pub amplitude: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            decay: 2.0,
            horizontal_band: 4,
            vertical_degree: 8,
            amplitude: 1.0,
        }
    }
}

impl RandomSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.decay > 1.0) {
            return Err(Error::InvalidParameter {
                name: "decay",
                reason: format!("spectrum decay {} must exceed 1", self.decay),
            });
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter {
                name: "amplitude",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

/// Requested constraints on a random field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldFlags {
    pub divergence_free: bool,
    pub no_slip: bool,
}

impl FieldFlags {
    pub const NONE: FieldFlags = FieldFlags {
        divergence_free: false,
        no_slip: false,
    };
    pub const NO_SLIP: FieldFlags = FieldFlags {
        divergence_free: false,
        no_slip: true,
    };
    pub const SOLENOIDAL: FieldFlags = FieldFlags {
        divergence_free: true,
        no_slip: false,
    };
    pub const SOLENOIDAL_NO_SLIP: FieldFlags = FieldFlags {
        divergence_free: true,
        no_slip: true,
    };
}

/// Independent per-sample seeds derived from one ensemble seed.
pub fn sample_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| master.next_u64()).collect()
}

/// Representative of each conjugate pair `(m, -m)` within the band, in a
/// fixed order. `(0, 0)` comes first.
fn representatives(band: i64) -> Vec<(i64, i64)> {
    let mut reps = vec![(0, 0)];
    for my in 0..=band {
        for mx in -band..=band {
            if my > 0 || mx > 0 {
                reps.push((mx, my));
            }
        }
    }
    reps
}

fn weight(mx: i64, my: i64, n: usize, decay: f64) -> f64 {
    (1.0 + (mx * mx + my * my) as f64 + (n * n) as f64).powf(-decay / 2.0)
}

/// Draws a complex Chebyshev coefficient vector for one mode.
fn draw_coeffs(rng: &mut ChaCha8Rng, mx: i64, my: i64, spec: &RandomSpec, real: bool) -> Vec<Complex64> {
    (0..=spec.vertical_degree)
        .map(|n| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let w = weight(mx, my, n, spec.decay) * spec.amplitude;
            if real {
                Complex64::new(a * w, 0.0)
            } else {
                Complex64::new(a, b) * (w / std::f64::consts::SQRT_2)
            }
        })
        .collect()
}

/// Evaluates `Σ c_n T_n(ζ)` times `(1 − ζ²)^wall_power` at the grid nodes.
fn profile(grid: &Grid, coeffs: &[Complex64], wall_power: i32) -> Vec<Complex64> {
    let l = grid.half_height();
    grid.z_nodes()
        .iter()
        .map(|z| {
            let zeta = z / l;
            let (mut t0, mut t1) = (1.0, zeta);
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, c) in coeffs.iter().enumerate() {
                let t = match n {
                    0 => t0,
                    1 => t1,
                    _ => {
                        let t2 = 2.0 * zeta * t1 - t0;
                        t0 = t1;
                        t1 = t2;
                        t2
                    }
                };
                acc += c * t;
            }
            let wall = if wall_power > 0 && zeta.abs() == 1.0 {
                0.0
            } else {
                (1.0 - zeta * zeta).powi(wall_power)
            };
            acc * wall
        })
        .collect()
}

/// Grid mode index for `(mx, my)` if the grid can represent it without
/// aliasing in quadratic products.
fn mode_slot(grid: &Grid, mx: i64, my: i64) -> Option<usize> {
    let (cx, cy) = grid.dealias_cutoff();
    if mx.abs() > cx || my.abs() > cy {
        return None;
    }
    let ix = mx.rem_euclid(grid.nx() as i64) as usize;
    let iy = my.rem_euclid(grid.ny() as i64) as usize;
    Some(iy * grid.nx() + ix)
}

fn conj_slot(grid: &Grid, mx: i64, my: i64) -> Option<usize> {
    mode_slot(grid, -mx, -my)
}

fn place(grid: &Grid, m: &mut [Complex64], mx: i64, my: i64, col: &[Complex64]) {
    let nz = grid.nz();
    if let Some(s) = mode_slot(grid, mx, my) {
        m[s * nz..(s + 1) * nz].copy_from_slice(col);
        if (mx, my) != (0, 0) {
            if let Some(c) = conj_slot(grid, mx, my) {
                for (dst, src) in m[c * nz..(c + 1) * nz].iter_mut().zip(col) {
                    *dst = src.conj();
                }
            }
        }
    }
}

/// Random scalar field; with `no_slip` the vertical profile carries a
/// `(1 − ζ²)` factor.
pub fn random_scalar(grid: &Arc<Grid>, spec: &RandomSpec, no_slip: bool) -> Result<ScalarField> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut m = modal::zeros(grid);
    let wall = if no_slip { 1 } else { 0 };
    for (mx, my) in representatives(spec.horizontal_band as i64) {
        let c = draw_coeffs(&mut rng, mx, my, spec, (mx, my) == (0, 0));
        let col = profile(grid, &c, wall);
        place(grid, &mut m, mx, my, &col);
    }
    Ok(ScalarField::from_modal(grid, m))
}

/// Random horizontal field.
pub fn random_plane(grid: &Arc<Grid>, spec: &RandomSpec) -> Result<PlaneField> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut m = vec![Complex64::new(0.0, 0.0); grid.plane_len()];
    let nx = grid.nx();
    let (cx, cy) = grid.dealias_cutoff();
    for (mx, my) in representatives(spec.horizontal_band as i64) {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let w = weight(mx, my, 0, spec.decay) * spec.amplitude;
        if mx.abs() > cx || my.abs() > cy {
            continue;
        }
        let idx = |mx: i64, my: i64| my.rem_euclid(grid.ny() as i64) as usize * nx + mx.rem_euclid(nx as i64) as usize;
        if (mx, my) == (0, 0) {
            m[0] = Complex64::new(a * w, 0.0);
        } else {
            let c = Complex64::new(a, b) * (w / std::f64::consts::SQRT_2);
            m[idx(mx, my)] = c;
            m[idx(-mx, -my)] = c.conj();
        }
    }
    PlaneField::from_values(grid, grid.inverse_plane(&m))
}

/// Random velocity field honoring `flags`.
///
/// * divergence-free and no-slip: built from a wall-normal velocity
///   `(1 − ζ²)² p(ζ)` and vorticity `(1 − ζ²) q(ζ)` per mode, so it lies
///   exactly in the discrete space used by the solver;
/// * divergence-free only: an unconstrained draw passed through `P`;
/// * no-slip only: each component carries a `(1 − ζ²)` factor.
pub fn random_vector(
    grid: &Arc<Grid>,
    spec: &RandomSpec,
    flags: FieldFlags,
    ctx: Option<&ProjectionContext>,
) -> Result<VectorField> {
    spec.validate()?;
    match (flags.divergence_free, flags.no_slip) {
        (true, true) => Ok(solenoidal_no_slip(grid, spec)),
        (true, false) => {
            let owned;
            let ctx = match ctx {
                Some(c) => c,
                None => {
                    owned = ProjectionContext::new(grid)?;
                    &owned
                }
            };
            let raw = random_components(grid, spec, false)?;
            ctx.leray_project(&raw)
        }
        (false, ns) => Ok(random_components(grid, spec, ns)?.classify()),
    }
}

fn random_components(grid: &Arc<Grid>, spec: &RandomSpec, no_slip: bool) -> Result<VectorField> {
    let seeds = sample_seeds(spec.seed, 3);
    let c = |i: usize| random_scalar(grid, &spec.with_seed(seeds[i]), no_slip);
    VectorField::new([c(0)?, c(1)?, c(2)?])
}

fn solenoidal_no_slip(grid: &Arc<Grid>, spec: &RandomSpec) -> VectorField {
    let nz = grid.nz();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut u = [modal::zeros(grid), modal::zeros(grid), modal::zeros(grid)];
    let mut dv = vec![Complex64::new(0.0, 0.0); nz];
    let kbase = |mx: i64, my: i64| {
        (
            2.0 * std::f64::consts::PI / grid.px() * mx as f64,
            2.0 * std::f64::consts::PI / grid.py() * my as f64,
        )
    };
    for (mx, my) in representatives(spec.horizontal_band as i64) {
        if (mx, my) == (0, 0) {
            let r1 = draw_coeffs(&mut rng, 0, 0, spec, true);
            let r2 = draw_coeffs(&mut rng, 0, 0, spec, true);
            place(grid, &mut u[0], 0, 0, &profile(grid, &r1, 1));
            place(grid, &mut u[1], 0, 0, &profile(grid, &r2, 1));
            continue;
        }
        let p = draw_coeffs(&mut rng, mx, my, spec, false);
        let q = draw_coeffs(&mut rng, mx, my, spec, false);
        if mode_slot(grid, mx, my).is_none() {
            continue;
        }
        // v carries an extra (1+n²)^{1/2}-ish boost relative to η so both
        // parts contribute comparable energy after the 1/k scaling.
        let v = profile(grid, &p, 2);
        let eta = profile(grid, &q, 1);
        grid.apply_dz(&v, &mut dv);
        let (kx, ky) = kbase(mx, my);
        let k2 = kx * kx + ky * ky;
        let u1: Vec<Complex64> = (0..nz).map(|z| I * (dv[z] * kx + eta[z] * ky) / k2).collect();
        let u2: Vec<Complex64> = (0..nz).map(|z| I * (dv[z] * ky - eta[z] * kx) / k2).collect();
        place(grid, &mut u[0], mx, my, &u1);
        place(grid, &mut u[1], mx, my, &u2);
        place(grid, &mut u[2], mx, my, &v);
    }
    let [a, b, c] = u;
    VectorField::from_modal(grid, [a, b, c]).with_flags(true, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn grid() -> Arc<Grid> {
        make_grid(16, 16, 17, 2.0 * PI, 2.0 * PI, 1.0).unwrap()
    }

    #[test]
    fn same_seed_same_field() {
        let g = grid();
        let spec = RandomSpec {
            seed: 42,
            ..Default::default()
        };
        let a = random_scalar(&g, &spec, false).unwrap();
        let b = random_scalar(&g, &spec, false).unwrap();
        assert_eq!(a.values(), b.values());
        let c = random_scalar(&g, &spec.with_seed(43), false).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn rejects_shallow_decay() {
        let g = grid();
        let spec = RandomSpec {
            decay: 1.0,
            ..Default::default()
        };
        assert!(random_scalar(&g, &spec, false).is_err());
    }

    #[test]
    fn flags_are_honored() {
        let g = grid();
        let spec = RandomSpec {
            seed: 7,
            ..Default::default()
        };
        let s = random_scalar(&g, &spec, true).unwrap();
        assert!(s.wall_max_abs() < 1e-10);
        let u = random_vector(&g, &spec, FieldFlags::SOLENOIDAL, None).unwrap();
        assert!(u.max_divergence() < 1e-8);
        let v = random_vector(&g, &spec, FieldFlags::SOLENOIDAL_NO_SLIP, None).unwrap();
        assert!(v.max_divergence() < 1e-8 * v.max_abs().max(1.0));
        assert!(v.wall_max_abs() < 1e-10);
        let w = random_vector(&g, &spec, FieldFlags::NO_SLIP, None).unwrap();
        assert!(w.is_no_slip());
    }

    #[test]
    fn band_limited_fields_are_resolved() {
        let g = grid();
        let spec = RandomSpec {
            seed: 3,
            ..Default::default()
        };
        let s = random_scalar(&g, &spec, true).unwrap();
        assert!(s.is_resolved());
        assert_eq!(s.aliasing_fraction(), 0.0);
    }

    #[test]
    fn same_field_on_two_resolutions() {
        let g1 = make_grid(16, 16, 17, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let g2 = make_grid(24, 24, 25, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let spec = RandomSpec {
            seed: 11,
            ..Default::default()
        };
        let a = random_scalar(&g1, &spec, false).unwrap();
        let b = random_scalar(&g2, &spec, false).unwrap();
        assert!((a.norm_l2() - b.norm_l2()).abs() < 1e-12 * a.norm_l2());
    }

    #[test]
    fn plane_fields_are_real_and_seeded() {
        let g = grid();
        let spec = RandomSpec {
            seed: 5,
            ..Default::default()
        };
        let p = random_plane(&g, &spec).unwrap();
        let q = random_plane(&g, &spec).unwrap();
        assert_eq!(p.values(), q.values());
        assert!(p.norm_l2() > 0.0);
    }
}
