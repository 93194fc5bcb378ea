//! Discretization of the channel surrogate: a periodic horizontal box of
//! periods `px`, `py` times the wall-bounded interval `[-L, L]`.
//!
//! Horizontal directions use equispaced Fourier nodes. The vertical direction
//! uses Chebyshev–Gauss–Lobatto points (both walls included) with
//! Clenshaw–Curtis quadrature weights and the collocation differentiation
//! matrix on the same points.
//!
//! Spectral data is stored in a mixed "modal" layout: horizontal Fourier
//! coefficients, vertical nodal values. Entry `(ix, iy, k)` lives at
//! `(iy * nx + ix) * nz + k` so that each horizontal mode owns a contiguous
//! vertical column.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial direction. `X1`, `X2` are periodic, `X3` is wall-normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X1,
    X2,
    X3,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X1, Axis::X2, Axis::X3];
    pub const HORIZONTAL: [Axis; 2] = [Axis::X1, Axis::X2];

    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
            Axis::X3 => 2,
        }
    }
}

impl TryFrom<usize> for Axis {
    type Error = Error;

    /// One-based axis numbering as in `x₁, x₂, x₃`.
    fn try_from(axis: usize) -> Result<Self> {
        match axis {
            1 => Ok(Axis::X1),
            2 => Ok(Axis::X2),
            3 => Ok(Axis::X3),
            other => Err(Error::InvalidAxis(other)),
        }
    }
}

/// Immutable channel grid. Shared between fields through `Arc<Grid>`.
pub struct Grid {
    nx: usize,
    ny: usize,
    nz: usize,
    px: f64,
    py: f64,
    half_height: f64,
    /// Vertical nodes, `z[0] = +L`, `z[nz-1] = -L`.
    z: Vec<f64>,
    /// Clenshaw–Curtis weights on `[-L, L]`.
    weights: Vec<f64>,
    /// First-derivative collocation matrix (row-major, `nz × nz`).
    dz: Vec<f64>,
    /// Second-derivative collocation matrix.
    dzz: Vec<f64>,
    /// Chebyshev analysis matrix: nodal values -> coefficients.
    cheb_fwd: Vec<f64>,
    /// Horizontal wavenumbers for differentiation (Nyquist entries are zero).
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// Signed integer mode numbers; the Nyquist entry is `+n/2`.
    mx: Vec<i64>,
    my: Vec<i64>,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("nz", &self.nz)
            .field("px", &self.px)
            .field("py", &self.py)
            .field("half_height", &self.half_height)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.nz == other.nz
            && self.px == other.px
            && self.py == other.py
            && self.half_height == other.half_height
    }
}

/// Serializable grid parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub px: f64,
    pub py: f64,
    pub half_height: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 32,
            nz: 33,
            px: 2.0 * PI,
            py: 2.0 * PI,
            half_height: 1.0,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>> {
        make_grid(self.nx, self.ny, self.nz, self.px, self.py, self.half_height)
    }
}

/// Builds a grid and wraps it for sharing.
pub fn make_grid(nx: usize, ny: usize, nz: usize, px: f64, py: f64, half_height: f64) -> Result<Arc<Grid>> {
    Grid::new(nx, ny, nz, px, py, half_height).map(Arc::new)
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize, px: f64, py: f64, half_height: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name} = {n} must be even and >= 4")));
            }
        }
        if nz < 5 {
            return Err(Error::InvalidGrid(format!("nz = {nz} must be >= 5")));
        }
        for (name, v) in [("px", px), ("py", py), ("half_height", half_height)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} = {v} must be positive")));
            }
        }

        let n = nz - 1;
        let z: Vec<f64> = (0..nz).map(|j| half_height * cgl_node(j, n)).collect();
        let weights = clenshaw_curtis_weights(n)
            .into_iter()
            .map(|w| w * half_height)
            .collect();
        let d_unit = cheb_diff_matrix(n);
        let dz: Vec<f64> = d_unit.iter().map(|d| d / half_height).collect();
        let dzz = matmul(&dz, &dz, nz);
        let cheb_fwd = cheb_analysis_matrix(n);

        let (kx, mx) = wavenumbers(nx, px);
        let (ky, my) = wavenumbers(ny, py);

        let mut planner = FftPlanner::new();
        Ok(Self {
            nx,
            ny,
            nz,
            px,
            py,
            half_height,
            z,
            weights,
            dz,
            dzz,
            cheb_fwd,
            kx,
            ky,
            mx,
            my,
            fft_x: planner.plan_fft_forward(nx),
            ifft_x: planner.plan_fft_inverse(nx),
            fft_y: planner.plan_fft_forward(ny),
            ifft_y: planner.plan_fft_inverse(ny),
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nz(&self) -> usize {
        self.nz
    }
    pub fn px(&self) -> f64 {
        self.px
    }
    pub fn py(&self) -> f64 {
        self.py
    }
    pub fn half_height(&self) -> f64 {
        self.half_height
    }

    /// Number of physical points.
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_modes(&self) -> usize {
        self.nx * self.ny
    }

    /// Physical index with x₁ fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    pub fn x(&self, i: usize) -> f64 {
        self.px * i as f64 / self.nx as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.py * j as f64 / self.ny as f64
    }

    pub fn z(&self, k: usize) -> f64 {
        self.z[k]
    }

    pub fn z_nodes(&self) -> &[f64] {
        &self.z
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dz_matrix(&self) -> &[f64] {
        &self.dz
    }

    pub fn dzz_matrix(&self) -> &[f64] {
        &self.dzz
    }

    pub fn cell_area(&self) -> f64 {
        self.px * self.py / (self.nx * self.ny) as f64
    }

    pub fn area(&self) -> f64 {
        self.px * self.py
    }

    pub fn volume(&self) -> f64 {
        self.px * self.py * 2.0 * self.half_height
    }

    /// Smallest vertical node spacing (next to the walls).
    pub fn min_dz(&self) -> f64 {
        self.z
            .windows(2)
            .map(|w| (w[0] - w[1]).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn kx(&self, ix: usize) -> f64 {
        self.kx[ix]
    }

    pub fn ky(&self, iy: usize) -> f64 {
        self.ky[iy]
    }

    pub fn mx(&self, ix: usize) -> i64 {
        self.mx[ix]
    }

    pub fn my(&self, iy: usize) -> i64 {
        self.my[iy]
    }

    /// Mode index -> (ix, iy).
    #[inline]
    pub fn mode_xy(&self, mode: usize) -> (usize, usize) {
        (mode % self.nx, mode / self.nx)
    }

    pub fn is_nyquist(&self, ix: usize, iy: usize) -> bool {
        ix == self.nx / 2 || iy == self.ny / 2
    }

    /// Largest retained |m| under the 2/3 rule in each direction.
    pub fn dealias_cutoff(&self) -> (i64, i64) {
        (((self.nx - 1) / 3) as i64, ((self.ny - 1) / 3) as i64)
    }

    pub fn is_dealiased_mode(&self, ix: usize, iy: usize) -> bool {
        let (cx, cy) = self.dealias_cutoff();
        self.mx[ix].abs() <= cx && self.my[iy].abs() <= cy
    }

    /// Quadrature of a physical field over the box.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let plane = self.plane_len();
        let sum: f64 = values
            .chunks_exact(plane)
            .zip(&self.weights)
            .map(|(p, w)| w * p.iter().sum::<f64>())
            .sum();
        sum * self.cell_area()
    }

    /// Quadrature of a horizontal (2-D) field over the periodic box.
    pub fn integrate_plane(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.plane_len());
        values.iter().sum::<f64>() * self.cell_area()
    }

    /// Vertical quadrature of one column.
    pub fn integrate_column(&self, column: &[f64]) -> f64 {
        column.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// `dst = Dz · src` on one vertical column.
    pub fn apply_dz<T>(&self, src: &[T], dst: &mut [T])
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        apply_matrix(&self.dz, self.nz, src, dst);
    }

    /// `dst = Dzz · src` on one vertical column.
    pub fn apply_dzz<T>(&self, src: &[T], dst: &mut [T])
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        apply_matrix(&self.dzz, self.nz, src, dst);
    }

    /// Physical values -> modal layout (Fourier horizontally, nodal vertically).
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.len());
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let plane = self.plane_len();
        let scale = 1.0 / plane as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); plane];
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        for k in 0..nz {
            for (b, v) in buf.iter_mut().zip(&values[k * plane..(k + 1) * plane]) {
                *b = Complex64::new(*v, 0.0);
            }
            self.fft_x.process(&mut buf);
            for ix in 0..nx {
                for iy in 0..ny {
                    col[iy] = buf[iy * nx + ix];
                }
                self.fft_y.process(&mut col);
                for iy in 0..ny {
                    out[(iy * nx + ix) * nz + k] = col[iy] * scale;
                }
            }
        }
        out
    }

    /// Modal layout -> physical values (real part).
    pub fn inverse(&self, modal: &[Complex64]) -> Vec<f64> {
        assert_eq!(modal.len(), self.len());
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let plane = self.plane_len();
        let mut out = vec![0.0; self.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); plane];
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        for k in 0..nz {
            for ix in 0..nx {
                for iy in 0..ny {
                    col[iy] = modal[(iy * nx + ix) * nz + k];
                }
                self.ifft_y.process(&mut col);
                for iy in 0..ny {
                    buf[iy * nx + ix] = col[iy];
                }
            }
            self.ifft_x.process(&mut buf);
            for (o, b) in out[k * plane..(k + 1) * plane].iter_mut().zip(&buf) {
                *o = b.re;
            }
        }
        out
    }

    /// 2-D forward transform of a horizontal field; output indexed `iy * nx + ix`.
    pub fn forward_plane(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.plane_len());
        let (nx, ny) = (self.nx, self.ny);
        let scale = 1.0 / self.plane_len() as f64;
        let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.fft_x.process(&mut buf);
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        for ix in 0..nx {
            for iy in 0..ny {
                col[iy] = buf[iy * nx + ix];
            }
            self.fft_y.process(&mut col);
            for iy in 0..ny {
                buf[iy * nx + ix] = col[iy] * scale;
            }
        }
        buf
    }

    pub fn inverse_plane(&self, modal: &[Complex64]) -> Vec<f64> {
        assert_eq!(modal.len(), self.plane_len());
        let (nx, ny) = (self.nx, self.ny);
        let mut buf = modal.to_vec();
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        for ix in 0..nx {
            for iy in 0..ny {
                col[iy] = buf[iy * nx + ix];
            }
            self.ifft_y.process(&mut col);
            for iy in 0..ny {
                buf[iy * nx + ix] = col[iy];
            }
        }
        self.ifft_x.process(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Nodal column -> Chebyshev coefficients `a_n` with `f(z) = Σ a_n T_n(z/L)`.
    pub fn cheb_coefficients<T>(&self, column: &[T], out: &mut [T])
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        apply_matrix(&self.cheb_fwd, self.nz, column, out);
    }

    /// Chebyshev coefficients -> nodal column.
    pub fn cheb_values<T>(&self, coeffs: &[T], out: &mut [T])
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let n = self.nz - 1;
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = T::default();
            for (m, c) in coeffs.iter().enumerate() {
                acc = acc + *c * cos_ratio(m * j, n);
            }
            *o = acc;
        }
    }
}

/// `cos(π p / n)` with the argument reduced exactly in integers.
pub(crate) fn cos_ratio(p: usize, n: usize) -> f64 {
    let r = p % (2 * n);
    // cos(π r / n) = sin(π (n - 2r) / (2n)), exact symmetry about zero
    (PI * (n as f64 - 2.0 * r as f64) / (2.0 * n as f64)).sin()
}

/// Chebyshev–Gauss–Lobatto node `cos(π j / n)` on `[-1, 1]`.
pub fn cgl_node(j: usize, n: usize) -> f64 {
    (PI * (n as f64 - 2.0 * j as f64) / (2.0 * n as f64)).sin()
}

/// Clenshaw–Curtis weights on `[-1, 1]` for the `n + 1` CGL nodes.
pub fn clenshaw_curtis_weights(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut w = vec![0.0; n + 1];
    let mut v = vec![1.0; n.saturating_sub(1)];
    if n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..n / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * cos_ratio(2 * k * (i + 1), n) / (4.0 * kf * kf - 1.0);
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi -= cos_ratio(n * (i + 1), n) / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * cos_ratio(2 * k * (i + 1), n) / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (i, vi) in v.iter().enumerate() {
        w[i + 1] = 2.0 * vi / nf;
    }
    w
}

/// Chebyshev collocation first-derivative matrix on `[-1, 1]` (row-major).
pub fn cheb_diff_matrix(n: usize) -> Vec<f64> {
    let np = n + 1;
    let c = |i: usize| -> f64 {
        let base = if i == 0 || i == n { 2.0 } else { 1.0 };
        if i % 2 == 0 {
            base
        } else {
            -base
        }
    };
    let mut d = vec![0.0; np * np];
    for i in 0..np {
        let mut row_sum = 0.0;
        for j in 0..np {
            if i == j {
                continue;
            }
            // x_i - x_j = -2 sin(π(i+j)/2n) sin(π(i-j)/2n)
            let a = (PI * (i + j) as f64 / (2.0 * n as f64)).sin();
            let b = (PI * (i as f64 - j as f64) / (2.0 * n as f64)).sin();
            let dx = -2.0 * a * b;
            let v = c(i) / c(j) / dx;
            d[i * np + j] = v;
            row_sum += v;
        }
        d[i * np + i] = -row_sum;
    }
    d
}

fn cheb_analysis_matrix(n: usize) -> Vec<f64> {
    let np = n + 1;
    let cbar = |i: usize| if i == 0 || i == n { 2.0 } else { 1.0 };
    let mut m = vec![0.0; np * np];
    for p in 0..np {
        for j in 0..np {
            m[p * np + j] = 2.0 / (n as f64 * cbar(p) * cbar(j)) * cos_ratio(p * j, n);
        }
    }
    m
}

fn wavenumbers(n: usize, period: f64) -> (Vec<f64>, Vec<i64>) {
    let base = 2.0 * PI / period;
    let mut k = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    for i in 0..n {
        let mi = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
        m.push(mi);
        k.push(if i == n / 2 { 0.0 } else { base * mi as f64 });
    }
    (k, m)
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for l in 0..n {
            let ail = a[i * n + l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += ail * b[l * n + j];
            }
        }
    }
    c
}

pub(crate) fn apply_matrix<T>(m: &[f64], n: usize, src: &[T], dst: &mut [T])
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    debug_assert_eq!(src.len(), n);
    debug_assert_eq!(dst.len(), n);
    for (i, d) in dst.iter_mut().enumerate() {
        let row = &m[i * n..(i + 1) * n];
        let mut acc = T::default();
        for (s, r) in src.iter().zip(row) {
            acc = acc + *s * *r;
        }
        *d = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions() {
        assert!(Grid::new(7, 8, 9, 1.0, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 2, 9, 1.0, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 4, 1.0, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 9, -1.0, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 9, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn endpoints_are_walls() {
        let g = Grid::new(8, 8, 9, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        assert_eq!(g.z(0), 1.0);
        assert_eq!(g.z(8), -1.0);
        assert!(g.z_nodes().iter().all(|z| z.abs() <= 1.0));
        let g2 = Grid::new(8, 8, 10, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(g2.z(0), 0.5);
        assert_eq!(g2.z(9), -0.5);
    }

    #[test]
    fn weights_sum_to_height() {
        for nz in [5, 6, 17, 33, 64, 65] {
            let g = Grid::new(4, 4, nz, 1.0, 1.0, 1.7).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s - 3.4).abs() < 1e-13, "nz={nz} sum={s}");
        }
    }

    #[test]
    fn clenshaw_curtis_exact_on_polynomials() {
        let n = 16;
        let w = clenshaw_curtis_weights(n);
        for p in 0..=n {
            let q: f64 = (0..=n).map(|j| w[j] * cgl_node(j, n).powi(p as i32)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {p}: {q} vs {exact}");
        }
    }

    #[test]
    fn diff_matrix_exact_on_polynomial() {
        let g = Grid::new(4, 4, 12, 1.0, 1.0, 2.0).unwrap();
        let f: Vec<f64> = g.z_nodes().iter().map(|z| z.powi(5) - 3.0 * z * z).collect();
        let mut d = vec![0.0; 12];
        g.apply_dz(&f, &mut d);
        for (k, z) in g.z_nodes().iter().enumerate() {
            let exact = 5.0 * z.powi(4) - 6.0 * z;
            assert!((d[k] - exact).abs() < 1e-11);
        }
    }

    #[test]
    fn chebyshev_round_trip() {
        let g = Grid::new(4, 4, 17, 1.0, 1.0, 1.0).unwrap();
        let f: Vec<f64> = g.z_nodes().iter().map(|z| (3.0 * z).sin() + z).collect();
        let mut c = vec![0.0; 17];
        let mut back = vec![0.0; 17];
        g.cheb_coefficients(&f, &mut c);
        g.cheb_values(&c, &mut back);
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        // T_3 has a single coefficient
        let t3: Vec<f64> = g.z_nodes().iter().map(|z| 4.0 * z * z * z - 3.0 * z).collect();
        g.cheb_coefficients(&t3, &mut c);
        for (n, cn) in c.iter().enumerate() {
            let exact = if n == 3 { 1.0 } else { 0.0 };
            assert!((cn - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn fft_round_trip() {
        let g = Grid::new(8, 6, 5, 1.0, 2.0, 1.0).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let back = g.inverse(&g.forward(&v));
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
