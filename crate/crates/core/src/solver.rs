//! IMEX time integration of the channel Navier–Stokes system.
//!
//! The velocity lives in the discrete space `V_N` of nodal polynomial fields
//! that are divergence-free at every node and vanish on both walls. Each
//! horizontal mode `k ≠ 0` is advanced in terms of the wall-normal velocity
//! `v = û₃` and vorticity `η = i kx û₂ − i ky û₁`:
//!
//! * `η` by collocation at the interior nodes with `η = 0` on the walls;
//! * `v` by a Galerkin method with quadrature, in a basis satisfying
//!   `v = Dz v = 0` on both walls, tested against the same basis with the
//!   kinetic-energy inner product.
//!
//! Both are Galerkin-with-quadrature projections of `du/dt = νΔu + N + f`
//! onto `V_N`, so no pressure is needed. The mean mode `k = 0` carries only
//! horizontal velocity and is advanced by interior collocation. Viscous terms
//! are implicit (θ-scheme), the nonlinearity explicit (Adams–Bashforth).

use std::sync::Arc;

use nalgebra::{DMatrix, Dyn, LU};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::{self, DiagnosticsRecord};
use crate::field::{ScalarField, VectorField};
use crate::grid::{cos_ratio, Axis, Grid};
use crate::modal::{self, Modal};
use crate::stokes::{convective_modal, ProjectionContext};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Time-stepping parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub dt: f64,
    /// Absolute end time of a run.
    pub t_end: f64,
    /// 1: backward/forward Euler; 2: Crank–Nicolson / Adams–Bashforth 2.
    pub order: u8,
    pub dealias: bool,
    /// Steps between diagnostics records.
    pub output_every: u64,
    /// Largest accepted advective CFL number.
    pub cfl_limit: f64,
    /// Halve `dt` instead of failing when the CFL limit is exceeded.
    pub adaptive_dt: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            order: 2,
            dealias: true,
            output_every: 10,
            cfl_limit: 0.5,
            adaptive_dt: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be positive and finite");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end", "must be positive and finite");
        }
        if !(self.order == 1 || self.order == 2) {
            return bad("order", "must be 1 or 2");
        }
        if self.output_every == 0 {
            return bad("output_every", "must be at least 1");
        }
        if !(self.cfl_limit > 0.0) {
            return bad("cfl_limit", "must be positive");
        }
        Ok(())
    }
}

/// Body force `f(t)`.
#[derive(Clone, Debug, Default)]
pub enum Forcing {
    #[default]
    None,
    Constant(Arc<VectorField>),
    /// `f(t) = (mean + sin(ω t)) g`.
    Periodic {
        shape: Arc<VectorField>,
        omega: f64,
        mean: f64,
    },
}

impl Forcing {
    pub fn amplitude(&self, t: f64) -> f64 {
        match self {
            Forcing::None => 0.0,
            Forcing::Constant(_) => 1.0,
            Forcing::Periodic { omega, mean, .. } => mean + (omega * t).sin(),
        }
    }

    pub fn shape(&self) -> Option<&VectorField> {
        match self {
            Forcing::None => None,
            Forcing::Constant(g) | Forcing::Periodic { shape: g, .. } => Some(g),
        }
    }

    pub fn at(&self, t: f64) -> Option<VectorField> {
        self.shape().map(|g| g.scaled(self.amplitude(t)))
    }

    /// `‖f(t)‖₂`.
    pub fn norm_at(&self, t: f64) -> f64 {
        self.shape().map_or(0.0, |g| self.amplitude(t).abs() * g.norm_l2())
    }
}

/// Velocity, time and physical parameters.
#[derive(Clone, Debug)]
pub struct SimState {
    pub u: VectorField,
    pub t: f64,
    pub nu: f64,
    pub forcing: Forcing,
    pub steps: u64,
}

struct ModeOps {
    k2: f64,
    eta: LU<f64, Dyn, Dyn>,
    v: LU<f64, Dyn, Dyn>,
}

/// Factorized implicit operators for one `dt`.
struct Operators {
    dt: f64,
    theta: f64,
    d: DMatrix<f64>,
    d2: DMatrix<f64>,
    dt_w: DMatrix<f64>,
    w: Vec<f64>,
    basis: DMatrix<f64>,
    basis_t: DMatrix<f64>,
    mean: LU<f64, Dyn, Dyn>,
    mode_ops: Vec<Option<usize>>,
    ops: Vec<ModeOps>,
}

/// Nodal values of `T_n − 2(n+2)/(n+3) T_{n+2} + (n+1)/(n+3) T_{n+4}`,
/// which vanish with their first derivative at `ζ = ±1`.
fn clamped_basis(nz: usize) -> DMatrix<f64> {
    let n = nz - 1;
    let nb = nz - 4;
    DMatrix::from_fn(nz, nb, |j, m| {
        if j == 0 || j == n {
            return 0.0;
        }
        let mf = m as f64;
        cos_ratio(m * j, n) - 2.0 * (mf + 2.0) / (mf + 3.0) * cos_ratio((m + 2) * j, n)
            + (mf + 1.0) / (mf + 3.0) * cos_ratio((m + 4) * j, n)
    })
}

fn interior(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    m.view((1, 1), (n - 2, n - 2)).into_owned()
}

fn factor(m: DMatrix<f64>, mx: i64, my: i64) -> Result<LU<f64, Dyn, Dyn>> {
    let lu = m.lu();
    if lu.is_invertible() {
        Ok(lu)
    } else {
        Err(Error::SingularMode { mx, my })
    }
}

impl Operators {
    fn new(grid: &Grid, nu: f64, dt: f64, order: u8) -> Result<Self> {
        let nz = grid.nz();
        let theta = if order == 1 { 1.0 } else { 0.5 };
        let d = DMatrix::from_row_slice(nz, nz, grid.dz_matrix());
        let d2 = DMatrix::from_row_slice(nz, nz, grid.dzz_matrix());
        let w = grid.weights().to_vec();
        let wm = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&w));
        let dt_w = d.transpose() * &wm;
        let dtwd = &dt_w * &d;
        let basis = clamped_basis(nz);
        let basis_t = basis.transpose();
        let eye = DMatrix::<f64>::identity(nz, nz);
        let implicit = |k2: f64| &eye * (1.0 / dt) - (&d2 - &eye * k2) * (theta * nu);

        let mean = factor(interior(&implicit(0.0)), 0, 0)?;
        let mut keys: std::collections::HashMap<(u64, u64), usize> = Default::default();
        let mut ops = Vec::new();
        let mut mode_ops = vec![None; grid.n_modes()];
        for (mode, slot) in mode_ops.iter_mut().enumerate() {
            let (ix, iy) = grid.mode_xy(mode);
            if grid.is_nyquist(ix, iy) || (ix == 0 && iy == 0) {
                continue;
            }
            let key = (grid.mx(ix).unsigned_abs(), grid.my(iy).unsigned_abs());
            let idx = match keys.get(&key) {
                Some(i) => *i,
                None => {
                    let k2 = grid.kx(ix).powi(2) + grid.ky(iy).powi(2);
                    let lop = implicit(k2);
                    let g = &dtwd * (1.0 / k2) + &wm;
                    let m = &basis_t * g * &lop * &basis;
                    ops.push(ModeOps {
                        k2,
                        eta: factor(interior(&lop), grid.mx(ix), grid.my(iy))?,
                        v: factor(m, grid.mx(ix), grid.my(iy))?,
                    });
                    keys.insert(key, ops.len() - 1);
                    ops.len() - 1
                }
            };
            *slot = Some(idx);
        }
        Ok(Self {
            dt,
            theta,
            d,
            d2,
            dt_w,
            w,
            basis,
            basis_t,
            mean,
            mode_ops,
            ops,
        })
    }
}

fn to_mat(col: &[Complex64]) -> DMatrix<f64> {
    DMatrix::from_fn(col.len(), 2, |i, j| if j == 0 { col[i].re } else { col[i].im })
}

fn from_mat(m: &DMatrix<f64>) -> Vec<Complex64> {
    (0..m.nrows()).map(|i| Complex64::new(m[(i, 0)], m[(i, 1)])).collect()
}

fn scale_rows(m: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * w[i])
}

/// Solves a Dirichlet system on the interior rows; walls are returned as 0.
fn solve_interior(lu: &LU<f64, Dyn, Dyn>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let n = rhs.nrows();
    let inner = rhs.rows(1, n - 2).into_owned();
    let x = lu.solve(&inner).expect("factorization checked at construction");
    let mut out = DMatrix::zeros(n, 2);
    out.rows_mut(1, n - 2).copy_from(&x);
    out
}

/// `Σ_k ‖∇u_k‖²` from modal data.
fn grad_sq_modal(grid: &Grid, u: &[Modal; 3]) -> f64 {
    u.iter()
        .map(|c| {
            Axis::ALL
                .iter()
                .map(|a| modal::norm_sq(grid, &modal::diff(grid, c, *a)))
                .sum::<f64>()
        })
        .sum()
}

/// Time stepper holding the current state and factorized operators.
pub struct Solver {
    grid: Arc<Grid>,
    nu: f64,
    forcing: Forcing,
    config: SolverConfig,
    ops: Operators,
    dz_local: Vec<f64>,
    u: [Modal; 3],
    t: f64,
    steps: u64,
    /// Nonlinear term and step size from the previous step.
    prev: Option<([Modal; 3], f64)>,
    dissipation: f64,
    work: f64,
    last_d: f64,
    last_fu: f64,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver")
            .field("grid", &self.grid)
            .field("nu", &self.nu)
            .field("t", &self.t)
            .field("dt", &self.ops.dt)
            .field("steps", &self.steps)
            .finish()
    }
}

impl Solver {
    /// Starts from `u0`, which must carry both constraint flags.
    pub fn new(u0: &VectorField, nu: f64, forcing: Forcing, config: SolverConfig) -> Result<Self> {
        Self::from_state(
            SimState {
                u: u0.clone(),
                t: 0.0,
                nu,
                forcing,
                steps: 0,
            },
            config,
        )
    }

    pub fn from_state(state: SimState, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        if !(state.nu > 0.0 && state.nu.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: format!("viscosity {} must be positive", state.nu),
            });
        }
        let u0 = &state.u;
        if !(u0.is_divergence_free() && u0.is_no_slip()) {
            return Err(Error::NotInSpace(
                "initial velocity must be divergence-free and vanish on the walls".into(),
            ));
        }
        let grid = u0.grid().clone();
        if let Some(f) = state.forcing.shape() {
            if **f.grid() != *grid {
                return Err(Error::GridMismatch);
            }
        }
        let ops = Operators::new(&grid, state.nu, config.dt, config.order)?;
        let z = grid.z_nodes();
        let n = z.len() - 1;
        let dz_local = (0..=n)
            .map(|k| match k {
                0 => z[0] - z[1],
                k if k == n => z[n - 1] - z[n],
                k => 0.5 * (z[k - 1] - z[k + 1]),
            })
            .collect();
        let mut u = [
            u0.component(0).modal().to_vec(),
            u0.component(1).modal().to_vec(),
            u0.component(2).modal().to_vec(),
        ];
        for c in &mut u {
            modal::drop_nyquist(&grid, c);
        }
        let nz = grid.nz();
        u[2][..nz].iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        let mut s = Self {
            grid,
            nu: state.nu,
            forcing: state.forcing,
            config,
            ops,
            dz_local,
            u,
            t: state.t,
            steps: state.steps,
            prev: None,
            dissipation: 0.0,
            work: 0.0,
            last_d: 0.0,
            last_fu: 0.0,
        };
        s.last_d = grad_sq_modal(&s.grid, &s.u);
        s.last_fu = s.forcing_inner(s.t);
        Ok(s)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.ops.dt
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn forcing(&self) -> &Forcing {
        &self.forcing
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// `∫ ‖∇u‖₂² dt` since the solver was created (trapezoidal per step).
    pub fn dissipation_integral(&self) -> f64 {
        self.dissipation
    }

    /// `∫ ⟨f, u⟩ dt` since the solver was created (trapezoidal per step).
    pub fn work_integral(&self) -> f64 {
        self.work
    }

    pub fn velocity(&self) -> VectorField {
        let [a, b, c] = self.u.clone();
        VectorField::from_modal(&self.grid, [a, b, c]).with_flags(true, true)
    }

    pub fn state(&self) -> SimState {
        SimState {
            u: self.velocity(),
            t: self.t,
            nu: self.nu,
            forcing: self.forcing.clone(),
            steps: self.steps,
        }
    }

    /// Refactorizes the implicit operators for a new step size.
    pub fn set_dt(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be positive and finite".into(),
            });
        }
        if dt != self.ops.dt {
            self.ops = Operators::new(&self.grid, self.nu, dt, self.config.order)?;
        }
        Ok(())
    }

    fn forcing_inner(&self, t: f64) -> f64 {
        match self.forcing.shape() {
            None => 0.0,
            Some(g) => {
                let a = self.forcing.amplitude(t);
                (0..3)
                    .map(|c| modal::inner(&self.grid, g.component(c).modal(), &self.u[c]))
                    .sum::<f64>()
                    * a
            }
        }
    }

    /// Largest advective rate `|u₁|/Δx₁ + |u₂|/Δx₂ + |u₃|/Δx₃` on the grid.
    fn advective_rate(&self, phys: &[Vec<f64>]) -> f64 {
        let g = &*self.grid;
        let (dx, dy) = (g.px() / g.nx() as f64, g.py() / g.ny() as f64);
        let plane = g.plane_len();
        let mut rate: f64 = 0.0;
        for (k, dz) in self.dz_local.iter().enumerate() {
            for p in k * plane..(k + 1) * plane {
                let r = phys[0][p].abs() / dx + phys[1][p].abs() / dy + phys[2][p].abs() / dz;
                rate = rate.max(r);
            }
        }
        rate
    }

    /// CFL number of the current state at the current `dt`.
    pub fn cfl(&self) -> f64 {
        let phys: Vec<Vec<f64>> = self.u.iter().map(|c| self.grid.inverse(c)).collect();
        self.advective_rate(&phys) * self.ops.dt
    }

    fn check_cfl(&mut self) -> Result<()> {
        let phys: Vec<Vec<f64>> = self.u.iter().map(|c| self.grid.inverse(c)).collect();
        let rate = self.advective_rate(&phys);
        let limit = self.config.cfl_limit;
        let mut dt = self.ops.dt;
        if rate * dt <= limit {
            return Ok(());
        }
        if !self.config.adaptive_dt {
            return Err(Error::Cfl {
                cfl: rate * dt,
                limit,
                suggested_dt: limit / rate,
            });
        }
        while rate * dt > limit {
            dt *= 0.5;
        }
        log::info!("t={:.6}: CFL limit reached, dt reduced to {dt:.3e}", self.t);
        self.set_dt(dt)
    }

    /// Advances one step. On error the state is left unchanged.
    pub fn step(&mut self) -> Result<()> {
        self.check_cfl()?;
        let g = self.grid.clone();
        let g = &*g;
        let nz = g.nz();
        let dt = self.ops.dt;

        let refs = [&self.u[0][..], &self.u[1][..], &self.u[2][..]];
        let mut nl = convective_modal(&self.grid, refs, refs, self.config.dealias);
        for c in &mut nl {
            c.iter_mut().for_each(|x| *x = -*x);
            modal::drop_nyquist(g, c);
        }
        let mut rhs = match (&self.prev, self.config.order) {
            (Some((prev, dt_prev)), 2) => {
                let r = dt / dt_prev;
                let (a, b) = (1.0 + 0.5 * r, -0.5 * r);
                let mut out = nl.clone();
                for (o, p) in out.iter_mut().zip(prev) {
                    o.iter_mut().zip(p).for_each(|(o, p)| *o = *o * a + p * b);
                }
                out
            }
            _ => nl.clone(),
        };
        let t_force = self.t + self.ops.theta * dt;
        if let Some(f) = self.forcing.shape() {
            let amp = self.forcing.amplitude(t_force);
            for (c, r) in rhs.iter_mut().enumerate() {
                let mut fm = f.component(c).modal().to_vec();
                modal::drop_nyquist(g, &mut fm);
                modal::axpy(amp, &fm, r);
            }
        }

        let ops = &self.ops;
        let u = &self.u;
        let nu = self.nu;
        let columns: Vec<[Vec<Complex64>; 3]> = (0..g.n_modes())
            .into_par_iter()
            .map(|mode| {
                let s = mode * nz..(mode + 1) * nz;
                let (ix, iy) = g.mode_xy(mode);
                let zero = vec![Complex64::new(0.0, 0.0); nz];
                if g.is_nyquist(ix, iy) {
                    return [zero.clone(), zero.clone(), zero];
                }
                let cols = [&u[0][s.clone()], &u[1][s.clone()], &u[2][s.clone()]];
                let r = [&rhs[0][s.clone()], &rhs[1][s.clone()], &rhs[2][s.clone()]];
                match ops.mode_ops[mode] {
                    None => {
                        let mut out = [zero.clone(), zero.clone(), zero];
                        for c in 0..2 {
                            let x = to_mat(cols[c]);
                            let y = &x * (1.0 / dt) + (&ops.d2 * &x) * ((1.0 - ops.theta) * nu) + to_mat(r[c]);
                            out[c] = from_mat(&solve_interior(&ops.mean, &y));
                        }
                        out
                    }
                    Some(idx) => step_mode(ops, &ops.ops[idx], g.kx(ix), g.ky(iy), nu, cols, r),
                }
            })
            .collect();

        let mut next = [modal::zeros(g), modal::zeros(g), modal::zeros(g)];
        for (mode, cols) in columns.into_iter().enumerate() {
            for (c, col) in cols.into_iter().enumerate() {
                next[c][mode * nz..(mode + 1) * nz].copy_from_slice(&col);
            }
        }
        if next.iter().flatten().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite {
                time: self.t,
                step: self.steps,
            });
        }

        self.u = next;
        self.prev = Some((nl, dt));
        self.t += dt;
        self.steps += 1;
        let d = grad_sq_modal(g, &self.u);
        let fu = self.forcing_inner(self.t);
        self.dissipation += 0.5 * dt * (self.last_d + d);
        self.work += 0.5 * dt * (self.last_fu + fu);
        self.last_d = d;
        self.last_fu = fu;
        Ok(())
    }

    /// Integrates to `config.t_end`, emitting a diagnostics record at the
    /// start, every `output_every` steps and at the end. `sink` sees each
    /// record together with the solver; errors abort the run, leaving the
    /// last good state in the solver.
    pub fn run<F>(&mut self, ctx: &ProjectionContext, mut sink: F) -> Result<Vec<DiagnosticsRecord>>
    where
        F: FnMut(&DiagnosticsRecord, &Solver) -> Result<()>,
    {
        let base = Baseline {
            e0: self.velocity().norm_sq(),
            d0: self.dissipation,
            w0: self.work,
        };
        let start_steps = self.steps;
        let mut records = Vec::new();
        let first = self.record(ctx, &base)?;
        sink(&first, self)?;
        records.push(first);
        let t_end = self.config.t_end;
        let eps = 1e-12 * t_end.max(1.0);
        while self.t < t_end - eps {
            let remaining = t_end - self.t;
            if remaining < self.ops.dt * (1.0 - 1e-9) {
                self.set_dt(remaining)?;
            }
            self.step()?;
            let done = self.t >= t_end - eps;
            if done || (self.steps - start_steps) % self.config.output_every == 0 {
                let rec = self.record(ctx, &base)?;
                sink(&rec, self)?;
                records.push(rec);
            }
        }
        Ok(records)
    }

    fn record(&self, ctx: &ProjectionContext, base: &Baseline) -> Result<DiagnosticsRecord> {
        let u = self.velocity();
        let n = estimates::measure(ctx, &u)?;
        let cum_d = self.dissipation - base.d0;
        let work = self.work - base.w0;
        Ok(DiagnosticsRecord {
            t: self.t,
            step: self.steps,
            e: n.e,
            d: n.d,
            dh: n.dh,
            v2: n.v2,
            crit: n.crit,
            resid: n.e - base.e0 + 2.0 * self.nu * cum_d - 2.0 * work,
            cum_d,
            dh_grad2: n.dh_grad2,
            au2: n.au2,
            dz_u2: n.dz_u2,
            f_norm: self.forcing.norm_at(self.t),
            work,
        })
    }
}

struct Baseline {
    e0: f64,
    d0: f64,
    w0: f64,
}

/// Advances one horizontal mode `k ≠ 0`.
fn step_mode(
    ops: &Operators,
    m: &ModeOps,
    kx: f64,
    ky: f64,
    nu: f64,
    u: [&[Complex64]; 3],
    r: [&[Complex64]; 3],
) -> [Vec<Complex64>; 3] {
    let nz = u[0].len();
    let k2 = m.k2;
    let explicit = (1.0 - ops.theta) * nu;
    let inv_dt = 1.0 / ops.dt;

    let eta: Vec<Complex64> = (0..nz).map(|z| I * kx * u[1][z] - I * ky * u[0][z]).collect();
    let h_eta: Vec<Complex64> = (0..nz).map(|z| I * kx * r[1][z] - I * ky * r[0][z]).collect();
    let e = to_mat(&eta);
    let lap_e = &ops.d2 * &e - &e * k2;
    let y = &e * inv_dt + lap_e * explicit + to_mat(&h_eta);
    let eta_new = from_mat(&solve_interior(&m.eta, &y));

    let v = to_mat(u[2]);
    let lap_v = &ops.d2 * &v - &v * k2;
    let y = &v * inv_dt + lap_v * explicit;
    let r_h: Vec<Complex64> = (0..nz).map(|z| -I * (kx * r[0][z] + ky * r[1][z]) / k2).collect();
    let inner = &ops.d * &y * (1.0 / k2) + to_mat(&r_h);
    let full = &ops.dt_w * inner + scale_rows(&(y + to_mat(r[2])), &ops.w);
    let a =
        m.v.solve(&(&ops.basis_t * full))
            .expect("factorization checked at construction");
    let v_new = &ops.basis * a;
    let dv = from_mat(&(&ops.d * &v_new));
    let v_new = from_mat(&v_new);

    let mut out = [
        vec![Complex64::new(0.0, 0.0); nz],
        vec![Complex64::new(0.0, 0.0); nz],
        v_new,
    ];
    for z in 1..nz - 1 {
        out[0][z] = I * (kx * dv[z] + ky * eta_new[z]) / k2;
        out[1][z] = I * (ky * dv[z] - kx * eta_new[z]) / k2;
    }
    out
}

/// Convenience single step from a state; starts the multistep scheme afresh.
pub fn step(state: &SimState, config: &SolverConfig) -> Result<SimState> {
    let mut s = Solver::from_state(state.clone(), config.clone())?;
    s.step()?;
    Ok(s.state())
}

/// Decaying shear flow `a e^{-ν λ_k t} (g_k(x₃), 0, 0)` with
/// `g_k = sin(kπ(x₃+L)/2L)` and `λ_k = (kπ/2L)²`; an exact solution of the
/// unforced system.
pub fn exact_shear_solution(grid: &Arc<Grid>, k: u32, amplitude: f64, nu: f64, t: f64) -> Result<VectorField> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "shear mode index must be at least 1".into(),
        });
    }
    let l = grid.half_height();
    let kk = k as f64 * std::f64::consts::PI / (2.0 * l);
    let decay = amplitude * (-nu * kk * kk * t).exp();
    let n = grid.nz() - 1;
    let mut u1 = ScalarField::from_fn(grid, |_, _, z| decay * (kk * (z + l)).sin());
    let plane = grid.plane_len();
    let vals = u1.values_mut();
    vals[..plane].iter_mut().for_each(|v| *v = 0.0);
    vals[n * plane..].iter_mut().for_each(|v| *v = 0.0);
    Ok(VectorField::new([u1, ScalarField::zeros(grid), ScalarField::zeros(grid)])?.with_flags(true, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::random::{random_vector, FieldFlags, RandomSpec};
    use std::f64::consts::PI;

    #[test]
    fn basis_is_clamped() {
        let g = make_grid(4, 4, 17, 1.0, 1.0, 1.0).unwrap();
        let b = clamped_basis(17);
        let d = DMatrix::from_row_slice(17, 17, g.dz_matrix());
        let db = d * &b;
        for m in 0..b.ncols() {
            assert_eq!(b[(0, m)], 0.0);
            assert!(db[(0, m)].abs() < 1e-10 && db[(16, m)].abs() < 1e-10);
        }
    }

    #[test]
    fn zero_stays_zero() {
        let g = make_grid(8, 8, 9, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let cfg = SolverConfig {
            dt: 0.01,
            t_end: 0.05,
            ..Default::default()
        };
        let mut s = Solver::new(&VectorField::zeros(&g), 1.0, Forcing::None, cfg).unwrap();
        for _ in 0..5 {
            s.step().unwrap();
        }
        assert_eq!(s.velocity().max_abs(), 0.0);
    }

    #[test]
    fn rejects_unconstrained_start() {
        let g = make_grid(8, 8, 9, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let u = VectorField::from_fn(&g, |x, _, _| [x.sin(), 0.0, 0.0]).classify();
        assert!(Solver::new(&u, 1.0, Forcing::None, SolverConfig::default()).is_err());
    }

    #[test]
    fn shear_decay_matches_closed_form() {
        let g = make_grid(8, 8, 17, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let u0 = exact_shear_solution(&g, 1, 1.0, 1.0, 0.0).unwrap();
        let cfg = SolverConfig {
            dt: 1e-3,
            t_end: 0.1,
            ..Default::default()
        };
        let mut s = Solver::new(&u0, 1.0, Forcing::None, cfg).unwrap();
        for _ in 0..100 {
            s.step().unwrap();
        }
        let exact = exact_shear_solution(&g, 1, 1.0, 1.0, s.time()).unwrap();
        let err = s.velocity().sub(&exact).unwrap().norm_l2() / u0.norm_l2();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn constraints_hold_along_a_nonlinear_run() {
        let g = make_grid(12, 12, 17, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let spec = RandomSpec {
            seed: 9,
            horizontal_band: 3,
            vertical_degree: 5,
            ..Default::default()
        };
        let u0 = random_vector(&g, &spec, FieldFlags::SOLENOIDAL_NO_SLIP, None).unwrap();
        let cfg = SolverConfig {
            dt: 2e-3,
            t_end: 1.0,
            ..Default::default()
        };
        let mut s = Solver::new(&u0, 0.5, Forcing::None, cfg).unwrap();
        let mut e = s.velocity().norm_sq();
        for _ in 0..20 {
            s.step().unwrap();
            let u = s.velocity();
            assert!(u.max_divergence() < 1e-8, "{}", u.max_divergence());
            assert!(u.wall_max_abs() < 1e-10);
            let e1 = u.norm_sq();
            assert!(e1 <= e * (1.0 + 1e-9));
            e = e1;
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = make_grid(8, 8, 17, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let u0 = exact_shear_solution(&g, 1, 100.0, 1.0, 0.0).unwrap();
        let cfg = SolverConfig {
            dt: 0.1,
            ..Default::default()
        };
        let mut s = Solver::new(&u0, 1.0, Forcing::None, cfg.clone()).unwrap();
        match s.step() {
            Err(Error::Cfl { suggested_dt, .. }) => assert!(suggested_dt < 0.1),
            other => panic!("expected CFL error, got {other:?}"),
        }
        let mut s = Solver::new(
            &u0,
            1.0,
            Forcing::None,
            SolverConfig {
                adaptive_dt: true,
                ..cfg
            },
        )
        .unwrap();
        s.step().unwrap();
        assert!(s.dt() < 0.1);
    }
}
