//! Operations on the mixed modal layout (horizontal Fourier × vertical nodal).
//!
//! These are the building blocks for the field operators and the time
//! stepper; they never leave spectral space.

use rustfft::num_complex::Complex64;

use crate::grid::{Axis, Grid};

pub type Modal = Vec<Complex64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn zeros(grid: &Grid) -> Modal {
    vec![Complex64::new(0.0, 0.0); grid.len()]
}

/// Spectral derivative along `axis`.
pub fn diff(grid: &Grid, src: &[Complex64], axis: Axis) -> Modal {
    let mut out = zeros(grid);
    diff_into(grid, src, axis, &mut out);
    out
}

pub fn diff_into(grid: &Grid, src: &[Complex64], axis: Axis, out: &mut [Complex64]) {
    let nz = grid.nz();
    for (mode, (s, o)) in src.chunks_exact(nz).zip(out.chunks_exact_mut(nz)).enumerate() {
        let (ix, iy) = grid.mode_xy(mode);
        match axis {
            Axis::X1 => {
                let f = I * grid.kx(ix);
                o.iter_mut().zip(s).for_each(|(o, s)| *o = f * s);
            }
            Axis::X2 => {
                let f = I * grid.ky(iy);
                o.iter_mut().zip(s).for_each(|(o, s)| *o = f * s);
            }
            Axis::X3 => grid.apply_dz(s, o),
        }
    }
}

/// Full Laplacian `Dzz - k²`.
pub fn laplacian(grid: &Grid, src: &[Complex64]) -> Modal {
    let nz = grid.nz();
    let mut out = zeros(grid);
    for (mode, (s, o)) in src.chunks_exact(nz).zip(out.chunks_exact_mut(nz)).enumerate() {
        let (ix, iy) = grid.mode_xy(mode);
        let k2 = grid.kx(ix).powi(2) + grid.ky(iy).powi(2);
        grid.apply_dzz(s, o);
        o.iter_mut().zip(s).for_each(|(o, s)| *o -= s * k2);
    }
    out
}

/// Horizontal Laplacian `-k²`.
pub fn laplacian_h(grid: &Grid, src: &[Complex64]) -> Modal {
    let nz = grid.nz();
    let mut out = zeros(grid);
    for (mode, (s, o)) in src.chunks_exact(nz).zip(out.chunks_exact_mut(nz)).enumerate() {
        let (ix, iy) = grid.mode_xy(mode);
        let k2 = grid.kx(ix).powi(2) + grid.ky(iy).powi(2);
        o.iter_mut().zip(s).for_each(|(o, s)| *o = -s * k2);
    }
    out
}

/// `∫|f|²` over the box, evaluated with horizontal Parseval and vertical
/// Clenshaw–Curtis weights. Equals the physical-space quadrature.
pub fn norm_sq(grid: &Grid, m: &[Complex64]) -> f64 {
    let w = grid.weights();
    let s: f64 = m
        .chunks_exact(grid.nz())
        .map(|col| col.iter().zip(w).map(|(c, w)| w * c.norm_sqr()).sum::<f64>())
        .sum();
    s * grid.area()
}

/// `∫ f g` for real fields given in modal form.
pub fn inner(grid: &Grid, a: &[Complex64], b: &[Complex64]) -> f64 {
    let w = grid.weights();
    let s: f64 = a
        .chunks_exact(grid.nz())
        .zip(b.chunks_exact(grid.nz()))
        .map(|(ca, cb)| {
            ca.iter()
                .zip(cb)
                .zip(w)
                .map(|((x, y), w)| w * (x.conj() * y).re)
                .sum::<f64>()
        })
        .sum();
    s * grid.area()
}

/// Zeroes every mode outside the 2/3-rule band (Nyquist modes included).
pub fn dealias(grid: &Grid, m: &mut [Complex64]) {
    let nz = grid.nz();
    for (mode, col) in m.chunks_exact_mut(nz).enumerate() {
        let (ix, iy) = grid.mode_xy(mode);
        if !grid.is_dealiased_mode(ix, iy) || grid.is_nyquist(ix, iy) {
            col.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        }
    }
}

/// Zeroes the Nyquist modes only.
pub fn drop_nyquist(grid: &Grid, m: &mut [Complex64]) {
    let nz = grid.nz();
    for (mode, col) in m.chunks_exact_mut(nz).enumerate() {
        let (ix, iy) = grid.mode_xy(mode);
        if grid.is_nyquist(ix, iy) {
            col.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        }
    }
}

pub fn axpy(alpha: f64, x: &[Complex64], y: &mut [Complex64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += x * alpha);
}
