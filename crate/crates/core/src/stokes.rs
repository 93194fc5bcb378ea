//! Leray projection, Stokes operator, convective nonlinearity and V-norm.
//!
//! The discrete solenoidal space `H_N` is, for each horizontal mode
//! `k ≠ 0`, the set of nodal vectors `(û₁, û₂, û₃)` with
//! `i k·û_h + Dz û₃ = 0` at every node and `û₃ = 0` on both walls. It is
//! parametrized by the wall-normal velocity `v = û₃` and the wall-normal
//! vorticity `η = i kx û₂ − i ky û₁`:
//!
//! ```text
//! û₁ = (i kx Dz v + i ky η) / k²,   û₂ = (i ky Dz v − i kx η) / k²
//! ```
//!
//! The projection is orthogonal in the quadrature inner product. The `η`
//! and `v` parts are orthogonal to each other pointwise, so `η` is copied
//! and `v` solves an `(nz−2)`-sized SPD system per distinct `|k|`.
//! For `k = 0` the solenoidal condition forces `û₃ = 0` and leaves the mean
//! horizontal velocity untouched. Nyquist modes are removed.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::{Axis, Grid};
use crate::modal::{self, Modal};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Factorized per-mode solves for the Leray projection.
pub struct ProjectionContext {
    grid: Arc<Grid>,
    /// `Dzᵀ W` (row-major).
    dt_w: Vec<f64>,
    /// Index into `factors` for each mode; `None` for k = 0 and Nyquist.
    mode_factor: Vec<Option<usize>>,
    factors: Vec<Cholesky<f64, Dyn>>,
}

impl std::fmt::Debug for ProjectionContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProjectionContext")
            .field("grid", &self.grid)
            .field("factors", &self.factors.len())
            .finish()
    }
}

impl ProjectionContext {
    pub fn new(grid: &Arc<Grid>) -> Result<Self> {
        let nz = grid.nz();
        let w = grid.weights();
        let d = grid.dz_matrix();
        let mut dt_w = vec![0.0; nz * nz];
        for i in 0..nz {
            for j in 0..nz {
                dt_w[i * nz + j] = d[j * nz + i] * w[j];
            }
        }
        // DᵀWD
        let mut dtwd = vec![0.0; nz * nz];
        for i in 0..nz {
            for j in 0..nz {
                dtwd[i * nz + j] = (0..nz).map(|m| d[m * nz + i] * w[m] * d[m * nz + j]).sum();
            }
        }

        let nint = nz - 2;
        let mut keys: HashMap<(u64, u64), usize> = HashMap::new();
        let mut factors = Vec::new();
        let mut mode_factor = vec![None; grid.n_modes()];
        for (mode, slot) in mode_factor.iter_mut().enumerate() {
            let (ix, iy) = grid.mode_xy(mode);
            if grid.is_nyquist(ix, iy) || (ix == 0 && iy == 0) {
                continue;
            }
            let key = (grid.mx(ix).unsigned_abs(), grid.my(iy).unsigned_abs());
            let idx = match keys.get(&key) {
                Some(i) => *i,
                None => {
                    let k2 = grid.kx(ix).powi(2) + grid.ky(iy).powi(2);
                    let g = DMatrix::from_fn(nint, nint, |a, b| {
                        let (i, j) = (a + 1, b + 1);
                        dtwd[i * nz + j] / k2 + if i == j { w[i] } else { 0.0 }
                    });
                    let chol = Cholesky::new(g).ok_or(Error::SingularMode {
                        mx: grid.mx(ix),
                        my: grid.my(iy),
                    })?;
                    factors.push(chol);
                    keys.insert(key, factors.len() - 1);
                    factors.len() - 1
                }
            };
            *slot = Some(idx);
        }
        Ok(Self {
            grid: grid.clone(),
            dt_w,
            mode_factor,
            factors,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Projects a modal vector field onto `H_N`.
    pub fn project_modal(&self, u: [&[Complex64]; 3]) -> [Modal; 3] {
        let g = &*self.grid;
        let nz = g.nz();
        let nint = nz - 2;
        let w = g.weights();
        let mut out = [modal::zeros(g), modal::zeros(g), modal::zeros(g)];
        let mut eta = vec![Complex64::new(0.0, 0.0); nz];
        let mut s = vec![Complex64::new(0.0, 0.0); nz];
        let mut b = vec![Complex64::new(0.0, 0.0); nz];
        let mut v = vec![Complex64::new(0.0, 0.0); nz];
        let mut dv = vec![Complex64::new(0.0, 0.0); nz];
        for mode in 0..g.n_modes() {
            let (ix, iy) = g.mode_xy(mode);
            let r = mode * nz..(mode + 1) * nz;
            if g.is_nyquist(ix, iy) {
                continue;
            }
            let Some(fi) = self.mode_factor[mode] else {
                // k = 0: keep the mean horizontal flow, drop û₃.
                out[0][r.clone()].copy_from_slice(&u[0][r.clone()]);
                out[1][r.clone()].copy_from_slice(&u[1][r]);
                continue;
            };
            let (kx, ky) = (g.kx(ix), g.ky(iy));
            let k2 = kx * kx + ky * ky;
            let (u1, u2, u3) = (&u[0][r.clone()], &u[1][r.clone()], &u[2][r.clone()]);
            for z in 0..nz {
                eta[z] = I * (u2[z] * kx - u1[z] * ky);
                s[z] = -I * (u1[z] * kx + u2[z] * ky) / k2;
            }
            crate::grid::apply_matrix(&self.dt_w, nz, &s, &mut b);
            for z in 0..nz {
                b[z] += u3[z] * w[z];
            }
            let re = DVector::from_fn(nint, |a, _| b[a + 1].re);
            let im = DVector::from_fn(nint, |a, _| b[a + 1].im);
            let chol = &self.factors[fi];
            let (cr, ci) = (chol.solve(&re), chol.solve(&im));
            v[0] = Complex64::new(0.0, 0.0);
            v[nz - 1] = Complex64::new(0.0, 0.0);
            for a in 0..nint {
                v[a + 1] = Complex64::new(cr[a], ci[a]);
            }
            g.apply_dz(&v, &mut dv);
            for z in 0..nz {
                out[0][mode * nz + z] = I * (dv[z] * kx + eta[z] * ky) / k2;
                out[1][mode * nz + z] = I * (dv[z] * ky - eta[z] * kx) / k2;
                out[2][mode * nz + z] = v[z];
            }
        }
        out
    }

    /// `P u`. The result is divergence-free with `u₃ = 0` on the walls; the
    /// tangential components are not forced to vanish there.
    pub fn leray_project(&self, u: &VectorField) -> Result<VectorField> {
        self.check_grid(u)?;
        let p = VectorField::from_modal(&self.grid, self.project_modal(u.modal()));
        let no_slip = p.wall_max_abs() < crate::field::WALL_TOL * p.max_abs().max(1.0);
        Ok(p.with_flags(true, no_slip))
    }

    /// Stokes operator `A u = −P Δu` on the discrete divergence-free,
    /// no-slip space.
    pub fn stokes_apply(&self, u: &VectorField) -> Result<VectorField> {
        self.check_grid(u)?;
        if !(u.is_divergence_free() && u.is_no_slip()) {
            return Err(Error::NotInSpace(
                "stokes_apply needs divergence_free and no_slip flags".into(),
            ));
        }
        let au = self.stokes_apply_modal(u.modal());
        Ok(VectorField::from_modal(&self.grid, au).with_flags(true, false))
    }

    pub(crate) fn stokes_apply_modal(&self, u: [&[Complex64]; 3]) -> [Modal; 3] {
        let g = &*self.grid;
        let mut lap = [
            modal::laplacian(g, u[0]),
            modal::laplacian(g, u[1]),
            modal::laplacian(g, u[2]),
        ];
        for c in lap.iter_mut() {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        self.project_modal([&lap[0], &lap[1], &lap[2]])
    }

    /// `B(u, v) = P((u·∇)v)`, formed pseudo-spectrally with 2/3-rule
    /// dealiasing of the inputs and of the product.
    pub fn bilinear_b(&self, u: &VectorField, v: &VectorField) -> Result<VectorField> {
        self.bilinear_b_with(u, v, true)
    }

    pub fn bilinear_b_with(&self, u: &VectorField, v: &VectorField, dealias: bool) -> Result<VectorField> {
        self.check_grid(u)?;
        self.check_grid(v)?;
        if dealias {
            let leak = u
                .components()
                .iter()
                .chain(v.components())
                .map(|c| c.aliasing_fraction())
                .fold(0.0, f64::max);
            if leak > crate::field::UNRESOLVED_FRACTION {
                log::warn!(
                    "bilinear_b: {:.2e} of input energy lies outside the dealiased band",
                    leak
                );
            }
        }
        let conv = convective_modal(&self.grid, u.modal(), v.modal(), dealias);
        let p = self.project_modal([&conv[0], &conv[1], &conv[2]]);
        Ok(VectorField::from_modal(&self.grid, p).with_flags(true, false))
    }

    /// `‖u‖_V = ⟨u, A u⟩^{1/2}`.
    pub fn v_norm(&self, u: &VectorField) -> Result<f64> {
        Ok(self.v_norm_sq(u)?.sqrt())
    }

    pub fn v_norm_sq(&self, u: &VectorField) -> Result<f64> {
        self.check_grid(u)?;
        if !(u.is_divergence_free() && u.is_no_slip()) {
            return Err(Error::NotInSpace(
                "v_norm needs divergence_free and no_slip flags".into(),
            ));
        }
        let m = u.modal();
        let au = self.stokes_apply_modal(m);
        let g = &*self.grid;
        let s: f64 = (0..3).map(|c| modal::inner(g, m[c], &au[c])).sum();
        let scale = (0..3).map(|c| modal::norm_sq(g, m[c])).sum::<f64>();
        if s < -1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NegativeVNorm(s));
        }
        Ok(s.max(0.0))
    }

    fn check_grid(&self, u: &VectorField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, u.grid()) || *self.grid == **u.grid() {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// `(u·∇)v` in modal form. With `dealias`, inputs and the product are
/// truncated to the 2/3 band.
pub fn convective_modal(grid: &Arc<Grid>, u: [&[Complex64]; 3], v: [&[Complex64]; 3], dealias: bool) -> [Modal; 3] {
    let g = &**grid;
    let prep = |m: &[Complex64]| {
        let mut m = m.to_vec();
        if dealias {
            modal::dealias(g, &mut m);
        }
        m
    };
    let up: Vec<Vec<f64>> = u.iter().map(|c| g.inverse(&prep(c))).collect();
    let mut out: [Modal; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (k, vk) in v.iter().enumerate() {
        let vk = prep(vk);
        let mut acc = vec![0.0; g.len()];
        for (j, axis) in Axis::ALL.iter().enumerate() {
            let d = g.inverse(&modal::diff(g, &vk, *axis));
            acc.iter_mut().zip(&up[j]).zip(&d).for_each(|((a, u), d)| *a += u * d);
        }
        let mut m = g.forward(&acc);
        if dealias {
            modal::dealias(g, &mut m);
        }
        out[k] = m;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{divergence, ScalarField};
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn grid() -> Arc<Grid> {
        make_grid(16, 16, 17, 2.0 * PI, 2.0 * PI, 1.0).unwrap()
    }

    fn smooth_field(g: &Arc<Grid>) -> VectorField {
        VectorField::from_fn(g, |x, y, z| {
            [
                (x + 0.3).sin() * (1.0 + z * z) + y.cos() * z,
                (2.0 * x - y).cos() * z.exp() * 0.5,
                (x).cos() * (y).sin() * (1.0 - z * z) + z * z * z,
            ]
        })
    }

    #[test]
    fn projection_is_idempotent_and_solenoidal() {
        let g = grid();
        let ctx = ProjectionContext::new(&g).unwrap();
        let u = smooth_field(&g);
        let p1 = ctx.leray_project(&u).unwrap();
        assert!(p1.max_divergence() < 1e-10);
        assert!(p1.component(2).wall_max_abs() < 1e-12);
        let p2 = ctx.leray_project(&p1).unwrap();
        let change = p2.sub(&p1).unwrap().norm_l2() / p1.norm_l2();
        assert!(change < 1e-12, "change {change}");
    }

    #[test]
    fn gradients_are_annihilated() {
        let g = grid();
        let ctx = ProjectionContext::new(&g).unwrap();
        let q = ScalarField::from_fn(&g, |x, y, z| x.sin() * (2.0 * y).cos() * z * z + (x - y).cos() * z);
        let gq = crate::field::grad(&q);
        let p = ctx.leray_project(&gq).unwrap();
        assert!(p.max_abs() < 1e-10, "{}", p.max_abs());
    }

    #[test]
    fn shear_mode_is_eigenfunction() {
        let g = grid();
        let ctx = ProjectionContext::new(&g).unwrap();
        let u = VectorField::from_fn(&g, |_, _, z| [(PI * z / 2.0).cos(), 0.0, 0.0]).classify();
        assert!(u.is_divergence_free() && u.is_no_slip());
        let au = ctx.stokes_apply(&u).unwrap();
        let lam = (PI / 2.0).powi(2);
        assert!(au.sub(&u.scaled(lam)).unwrap().max_abs() < 1e-8);
        let vn = ctx.v_norm(&u).unwrap();
        assert!((vn - PI / 2.0 * u.norm_l2()).abs() < 1e-8);
        assert!((vn * vn - u.grad_norm_sq()).abs() < 1e-8);
    }

    #[test]
    fn stokes_rejects_unflagged_input() {
        let g = grid();
        let ctx = ProjectionContext::new(&g).unwrap();
        let u = smooth_field(&g);
        assert!(matches!(ctx.stokes_apply(&u), Err(Error::NotInSpace(_))));
        let z = VectorField::zeros(&g);
        assert_eq!(ctx.stokes_apply(&z).unwrap().max_abs(), 0.0);
        assert_eq!(ctx.v_norm(&z).unwrap(), 0.0);
    }

    #[test]
    fn shear_flow_has_no_self_advection() {
        let g = grid();
        let ctx = ProjectionContext::new(&g).unwrap();
        let u = VectorField::from_fn(&g, |_, _, z| [(1.0 - z * z) * (1.0 + z), 0.0, 0.0]);
        assert!(ctx.bilinear_b(&u, &u).unwrap().max_abs() < 1e-9);
        let u = VectorField::from_fn(&g, |_, y, z| [y.sin() * (1.0 - z * z), 0.0, 0.0]);
        assert!(ctx.bilinear_b(&u, &u).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn horizontal_derivatives_commute_with_projection() {
        let g = grid();
        let ctx = ProjectionContext::new(&g).unwrap();
        let u = smooth_field(&g);
        for axis in Axis::HORIZONTAL {
            let du = VectorField::new([
                u.component(0).diff(axis),
                u.component(1).diff(axis),
                u.component(2).diff(axis),
            ])
            .unwrap();
            let a = ctx.leray_project(&du).unwrap();
            let pu = ctx.leray_project(&u).unwrap();
            let b = VectorField::new([
                pu.component(0).diff(axis),
                pu.component(1).diff(axis),
                pu.component(2).diff(axis),
            ])
            .unwrap();
            assert!(a.sub(&b).unwrap().norm_l2() < 1e-10);
        }
        let _ = divergence(&u);
    }
}
