//! Scalar, vector and horizontal (2-D) fields on the channel grid, together
//! with the Lebesgue and Sobolev norms used throughout the diagnostics.
//!
//! Fields are value-semantic. The physical representation is authoritative;
//! the modal representation is computed on first use and cached. Any
//! mutation through [`ScalarField::values_mut`] drops the cache.

use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};
use crate::modal::{self, Modal};

/// Exponent of an `L^q` norm; `f64::INFINITY` selects the grid maximum.
fn check_exponent(q: f64) -> Result<()> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::InvalidExponent {
            value: q,
            reason: "q must lie in [1, ∞]",
        });
    }
    Ok(())
}

fn lq_from_integral(sum: f64, q: f64) -> f64 {
    if q == 2.0 {
        sum.sqrt()
    } else {
        sum.powf(1.0 / q)
    }
}

/// Full spectral coefficients: Fourier in x₁, x₂ and Chebyshev in x₃.
#[derive(Clone, Debug)]
pub struct SpectralCoefficients {
    grid: Arc<Grid>,
    /// Layout `(iy * nx + ix) * nz + n`, with `n` the Chebyshev degree.
    coeffs: Vec<Complex64>,
}

impl SpectralCoefficients {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn from_coeffs(grid: Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                actual: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn get(&self, ix: usize, iy: usize, n: usize) -> Complex64 {
        self.coeffs[(iy * self.grid.nx() + ix) * self.grid.nz() + n]
    }

    /// Fraction of coefficient energy in the outermost resolved shell
    /// (last horizontal mode pair below Nyquist, or the two highest
    /// Chebyshev degrees).
    pub fn top_mode_fraction(&self) -> f64 {
        let g = &self.grid;
        let (nx, ny, nz) = (g.nx(), g.ny(), g.nz());
        let mut total = 0.0;
        let mut top = 0.0;
        for mode in 0..g.n_modes() {
            let (ix, iy) = g.mode_xy(mode);
            let edge = g.mx(ix).unsigned_abs() as usize >= nx / 2 - 1 || g.my(iy).unsigned_abs() as usize >= ny / 2 - 1;
            for n in 0..nz {
                let e = self.coeffs[mode * nz + n].norm_sqr();
                total += e;
                if edge || n + 2 >= nz {
                    top += e;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            top / total
        }
    }
}

/// Threshold above which a field is reported as under-resolved.
pub const UNRESOLVED_FRACTION: f64 = 1e-4;

/// Scalar function on the channel.
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    modal: OnceLock<Modal>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("grid", &self.grid)
            .field("max_abs", &self.max_abs())
            .finish()
    }
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
            modal: OnceLock::new(),
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            modal: OnceLock::new(),
        })
    }

    /// Samples `f(x₁, x₂, x₃)` at every grid node.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.nz() {
            let z = grid.z(k);
            for j in 0..grid.ny() {
                let y = grid.y(j);
                for i in 0..grid.nx() {
                    values.push(f(grid.x(i), y, z));
                }
            }
        }
        Self {
            grid: grid.clone(),
            values,
            modal: OnceLock::new(),
        }
    }

    pub fn from_modal(grid: &Arc<Grid>, m: Modal) -> Self {
        let values = grid.inverse(&m);
        let modal = OnceLock::new();
        let _ = modal.set(m);
        Self {
            grid: grid.clone(),
            values,
            modal,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the physical values; invalidates the modal cache.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.modal = OnceLock::new();
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    /// Modal representation (computed lazily).
    pub fn modal(&self) -> &[Complex64] {
        self.modal.get_or_init(|| self.grid.forward(&self.values))
    }

    pub fn to_spectral(&self) -> SpectralCoefficients {
        let g = &self.grid;
        let nz = g.nz();
        let m = self.modal();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); g.len()];
        for (src, dst) in m.chunks_exact(nz).zip(coeffs.chunks_exact_mut(nz)) {
            g.cheb_coefficients(src, dst);
        }
        SpectralCoefficients {
            grid: g.clone(),
            coeffs,
        }
    }

    pub fn from_spectral(spec: &SpectralCoefficients) -> Self {
        let g = &spec.grid;
        let nz = g.nz();
        let mut m = modal::zeros(g);
        for (src, dst) in spec.coeffs.chunks_exact(nz).zip(m.chunks_exact_mut(nz)) {
            g.cheb_values(src, dst);
        }
        Self::from_modal(g, m)
    }

    /// Whether the outermost spectral shell holds less than
    /// [`UNRESOLVED_FRACTION`] of the energy.
    pub fn is_resolved(&self) -> bool {
        self.to_spectral().top_mode_fraction() < UNRESOLVED_FRACTION
    }

    fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Spectral derivative. Under-resolved inputs are logged, not rejected.
    pub fn diff(&self, axis: Axis) -> ScalarField {
        if log::log_enabled!(log::Level::Debug) && !self.is_resolved() {
            log::debug!("differentiating an under-resolved field along {axis:?}");
        }
        ScalarField::from_modal(&self.grid, modal::diff(&self.grid, self.modal(), axis))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
            modal: OnceLock::new(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.same_grid(other)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
            modal: OnceLock::new(),
        })
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute value on the two wall planes.
    pub fn wall_max_abs(&self) -> f64 {
        let plane = self.grid.plane_len();
        let nz = self.grid.nz();
        self.values[..plane]
            .iter()
            .chain(&self.values[(nz - 1) * plane..])
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// `(∫|φ|^q)^{1/q}` by quadrature; `q = ∞` gives the grid maximum, which
    /// is a lower bound on the true supremum.
    pub fn norm_lq(&self, q: f64) -> Result<f64> {
        check_exponent(q)?;
        if q.is_infinite() {
            return Ok(self.max_abs());
        }
        let g = &self.grid;
        let plane = g.plane_len();
        let sum: f64 = self
            .values
            .chunks_exact(plane)
            .zip(g.weights())
            .map(|(p, w)| w * p.iter().map(|v| v.abs().powf(q)).sum::<f64>())
            .sum::<f64>()
            * g.cell_area();
        Ok(lq_from_integral(sum, q))
    }

    pub fn norm_l2(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        let g = &self.grid;
        let plane = g.plane_len();
        self.values
            .chunks_exact(plane)
            .zip(g.weights())
            .map(|(p, w)| w * p.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            * g.cell_area()
    }

    /// `(Σ_{|α|≤m} ‖∂^α φ‖₂²)^{1/2}` over distinct multi-indices.
    pub fn sobolev_norm(&self, m: usize) -> Result<f64> {
        if m > 2 {
            return Err(Error::UnsupportedOrder(m));
        }
        let g = &self.grid;
        let base = self.modal();
        let mut total = modal::norm_sq(g, base);
        if m >= 1 {
            let first: Vec<Modal> = Axis::ALL.iter().map(|a| modal::diff(g, base, *a)).collect();
            total += first.iter().map(|d| modal::norm_sq(g, d)).sum::<f64>();
            if m == 2 {
                for (i, di) in first.iter().enumerate() {
                    for axis in &Axis::ALL[i..] {
                        total += modal::norm_sq(g, &modal::diff(g, di, *axis));
                    }
                }
            }
        }
        Ok(total.sqrt())
    }

    /// `‖∇_h φ‖₂`.
    pub fn grad_h_norm(&self) -> f64 {
        let g = &self.grid;
        Axis::HORIZONTAL
            .iter()
            .map(|a| modal::norm_sq(g, &modal::diff(g, self.modal(), *a)))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖∇φ‖₂`.
    pub fn grad_norm(&self) -> f64 {
        let g = &self.grid;
        Axis::ALL
            .iter()
            .map(|a| modal::norm_sq(g, &modal::diff(g, self.modal(), *a)))
            .sum::<f64>()
            .sqrt()
    }

    /// Fraction of the modal energy outside the 2/3 band; zero for fields
    /// that products can be formed from without aliasing.
    pub fn aliasing_fraction(&self) -> f64 {
        let g = &self.grid;
        let nz = g.nz();
        let mut total = 0.0;
        let mut outside = 0.0;
        for (mode, col) in self.modal().chunks_exact(nz).enumerate() {
            let (ix, iy) = g.mode_xy(mode);
            let e: f64 = col.iter().map(|c| c.norm_sqr()).sum();
            total += e;
            if !g.is_dealiased_mode(ix, iy) {
                outside += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            outside / total
        }
    }
}

/// `∫ a b` over the box.
pub fn inner_l2(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.same_grid(b)?;
    let g = &a.grid;
    let plane = g.plane_len();
    Ok(a.values
        .chunks_exact(plane)
        .zip(b.values.chunks_exact(plane))
        .zip(g.weights())
        .map(|((pa, pb), w)| w * pa.iter().zip(pb).map(|(x, y)| x * y).sum::<f64>())
        .sum::<f64>()
        * g.cell_area())
}

/// Function of the horizontal coordinates only, on the periodic box.
#[derive(Clone, Debug)]
pub struct PlaneField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PlaneField {
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.plane_len() {
            return Err(Error::ShapeMismatch {
                expected: grid.plane_len(),
                actual: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.plane_len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, c: f64) -> PlaneField {
        PlaneField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Constant-in-x₃ extension to a 3-D field.
    pub fn extend(&self) -> ScalarField {
        let mut values = Vec::with_capacity(self.grid.len());
        for _ in 0..self.grid.nz() {
            values.extend_from_slice(&self.values);
        }
        ScalarField {
            grid: self.grid.clone(),
            values,
            modal: OnceLock::new(),
        }
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate_plane(&self.values)
    }

    /// Two-dimensional `L^q` norm over the periodic box.
    pub fn norm_lq(&self, q: f64) -> Result<f64> {
        check_exponent(q)?;
        if q.is_infinite() {
            return Ok(self.values.iter().fold(0.0, |m, v| m.max(v.abs())));
        }
        let sum = self.values.iter().map(|v| v.abs().powf(q)).sum::<f64>() * self.grid.cell_area();
        Ok(lq_from_integral(sum, q))
    }

    pub fn norm_l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn diff(&self, axis: Axis) -> PlaneField {
        let g = &self.grid;
        let mut m = g.forward_plane(&self.values);
        let nx = g.nx();
        for (idx, c) in m.iter_mut().enumerate() {
            let (ix, iy) = (idx % nx, idx / nx);
            let k = match axis {
                Axis::X1 => g.kx(ix),
                Axis::X2 => g.ky(iy),
                Axis::X3 => 0.0,
            };
            *c *= Complex64::new(0.0, k);
        }
        PlaneField {
            grid: g.clone(),
            values: g.inverse_plane(&m),
        }
    }

    /// `‖∇_h ξ‖₂`.
    pub fn grad_h_norm(&self) -> f64 {
        let a = self.diff(Axis::X1).norm_l2();
        let b = self.diff(Axis::X2).norm_l2();
        (a * a + b * b).sqrt()
    }

    /// `‖ξ‖_{H¹}` (full norm, `(‖ξ‖² + ‖∇_h ξ‖²)^{1/2}`).
    pub fn h1_norm(&self) -> f64 {
        let l2 = self.norm_l2();
        let gh = self.grad_h_norm();
        (l2 * l2 + gh * gh).sqrt()
    }
}

/// Velocity-like field with constraint flags.
#[derive(Clone, Debug)]
pub struct VectorField {
    components: [ScalarField; 3],
    divergence_free: bool,
    no_slip: bool,
}

/// Divergence tolerance for the `divergence_free` flag (unit-norm scale).
pub const DIVERGENCE_TOL: f64 = 1e-8;
/// Wall tolerance for the `no_slip` flag.
pub const WALL_TOL: f64 = 1e-10;

impl VectorField {
    pub fn new(components: [ScalarField; 3]) -> Result<Self> {
        let g = components[0].grid.clone();
        for c in &components[1..] {
            if !(Arc::ptr_eq(&g, &c.grid) || *g == *c.grid) {
                return Err(Error::GridMismatch);
            }
        }
        Ok(Self {
            components,
            divergence_free: false,
            no_slip: false,
        })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            components: [
                ScalarField::zeros(grid),
                ScalarField::zeros(grid),
                ScalarField::zeros(grid),
            ],
            divergence_free: true,
            no_slip: true,
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64, f64) -> [f64; 3]) -> Self {
        let c = |n: usize| ScalarField::from_fn(grid, |x, y, z| f(x, y, z)[n]);
        Self {
            components: [c(0), c(1), c(2)],
            divergence_free: false,
            no_slip: false,
        }
    }

    pub fn from_modal(grid: &Arc<Grid>, m: [Modal; 3]) -> Self {
        let [a, b, c] = m;
        Self {
            components: [
                ScalarField::from_modal(grid, a),
                ScalarField::from_modal(grid, b),
                ScalarField::from_modal(grid, c),
            ],
            divergence_free: false,
            no_slip: false,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.components[0].grid
    }

    pub fn components(&self) -> &[ScalarField; 3] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn into_components(self) -> [ScalarField; 3] {
        self.components
    }

    pub fn modal(&self) -> [&[Complex64]; 3] {
        [
            self.components[0].modal(),
            self.components[1].modal(),
            self.components[2].modal(),
        ]
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub fn is_no_slip(&self) -> bool {
        self.no_slip
    }

    /// Measures both constraints and sets the flags accordingly.
    pub fn classify(mut self) -> Self {
        let scale = self.max_abs().max(1.0);
        self.divergence_free = self.max_divergence() < DIVERGENCE_TOL * scale;
        self.no_slip = self.wall_max_abs() < WALL_TOL * scale;
        self
    }

    /// Sets the flags without measuring; for constructions that guarantee them.
    pub(crate) fn with_flags(mut self, divergence_free: bool, no_slip: bool) -> Self {
        self.divergence_free = divergence_free;
        self.no_slip = no_slip;
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    pub fn wall_max_abs(&self) -> f64 {
        self.components.iter().map(|c| c.wall_max_abs()).fold(0.0, f64::max)
    }

    pub fn max_divergence(&self) -> f64 {
        divergence(self).max_abs()
    }

    pub fn scaled(&self, c: f64) -> VectorField {
        VectorField {
            components: [
                self.components[0].scaled(c),
                self.components[1].scaled(c),
                self.components[2].scaled(c),
            ],
            divergence_free: self.divergence_free,
            no_slip: self.no_slip,
        }
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        Ok(VectorField {
            components: [
                self.components[0].sub(&other.components[0])?,
                self.components[1].sub(&other.components[1])?,
                self.components[2].sub(&other.components[2])?,
            ],
            divergence_free: false,
            no_slip: false,
        })
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        Ok(VectorField {
            components: [
                self.components[0].add(&other.components[0])?,
                self.components[1].add(&other.components[1])?,
                self.components[2].add(&other.components[2])?,
            ],
            divergence_free: false,
            no_slip: false,
        })
    }

    /// `‖u‖₂²`.
    pub fn norm_sq(&self) -> f64 {
        self.components.iter().map(|c| c.norm_sq()).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `‖u‖_q` with pointwise Euclidean magnitude `|u|`.
    pub fn norm_lq(&self, q: f64) -> Result<f64> {
        magnitude(self.components.iter().collect::<Vec<_>>().as_slice()).norm_lq(q)
    }

    /// `Σ_{j∈axes} Σ_k ‖∂_j u_k‖²`.
    pub fn derivative_norm_sq(&self, axes: &[Axis]) -> f64 {
        let g = self.grid();
        self.components
            .iter()
            .map(|c| {
                axes.iter()
                    .map(|a| modal::norm_sq(g, &modal::diff(g, c.modal(), *a)))
                    .sum::<f64>()
            })
            .sum()
    }

    /// `‖∇u‖₂²`.
    pub fn grad_norm_sq(&self) -> f64 {
        self.derivative_norm_sq(&Axis::ALL)
    }

    /// `‖∇_h u‖₂²`.
    pub fn grad_h_norm_sq(&self) -> f64 {
        self.derivative_norm_sq(&Axis::HORIZONTAL)
    }

    /// `‖∇_h ∇ u‖₂² = Σ_{l=1,2} Σ_j Σ_k ‖∂_l ∂_j u_k‖²`.
    pub fn grad_h_grad_norm_sq(&self) -> f64 {
        let g = self.grid();
        let mut total = 0.0;
        for c in &self.components {
            for j in Axis::ALL {
                let dj = modal::diff(g, c.modal(), j);
                for l in Axis::HORIZONTAL {
                    total += modal::norm_sq(g, &modal::diff(g, &dj, l));
                }
            }
        }
        total
    }

    /// `Σ_k ‖u_k‖_{H^m}²`, square-rooted.
    pub fn sobolev_norm(&self, m: usize) -> Result<f64> {
        let mut s = 0.0;
        for c in &self.components {
            s += c.sobolev_norm(m)?.powi(2);
        }
        Ok(s.sqrt())
    }
}

/// Pointwise Euclidean magnitude of a list of scalar fields.
pub fn magnitude(parts: &[&ScalarField]) -> ScalarField {
    let g = parts[0].grid.clone();
    let mut values = vec![0.0; g.len()];
    for p in parts {
        values.iter_mut().zip(&p.values).for_each(|(v, x)| *v += x * x);
    }
    values.iter_mut().for_each(|v| *v = v.sqrt());
    ScalarField {
        grid: g,
        values,
        modal: OnceLock::new(),
    }
}

/// `∇φ`.
pub fn grad(phi: &ScalarField) -> VectorField {
    let g = phi.grid();
    VectorField::from_modal(
        g,
        [
            modal::diff(g, phi.modal(), Axis::X1),
            modal::diff(g, phi.modal(), Axis::X2),
            modal::diff(g, phi.modal(), Axis::X3),
        ],
    )
}

/// `∇_h φ = (∂₁φ, ∂₂φ)`.
pub fn grad_h(phi: &ScalarField) -> [ScalarField; 2] {
    [phi.diff(Axis::X1), phi.diff(Axis::X2)]
}

/// `∇·u`.
pub fn divergence(u: &VectorField) -> ScalarField {
    let g = u.grid();
    let mut acc = modal::diff(g, u.components[0].modal(), Axis::X1);
    for (c, axis) in u.components[1..].iter().zip([Axis::X2, Axis::X3]) {
        let d = modal::diff(g, c.modal(), axis);
        acc.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
    }
    ScalarField::from_modal(g, acc)
}

/// `Δφ`.
pub fn laplacian(phi: &ScalarField) -> ScalarField {
    ScalarField::from_modal(phi.grid(), modal::laplacian(phi.grid(), phi.modal()))
}

/// `Δ_h φ = ∂₁²φ + ∂₂²φ`.
pub fn laplacian_h(phi: &ScalarField) -> ScalarField {
    ScalarField::from_modal(phi.grid(), modal::laplacian_h(phi.grid(), phi.modal()))
}

/// Componentwise vector Laplacian.
pub fn vector_laplacian(u: &VectorField) -> VectorField {
    let g = u.grid();
    let [a, b, c] = u.modal();
    VectorField::from_modal(
        g,
        [modal::laplacian(g, a), modal::laplacian(g, b), modal::laplacian(g, c)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn box_grid(nz: usize) -> Arc<Grid> {
        make_grid(16, 16, nz, 2.0 * PI, 2.0 * PI, 1.0).unwrap()
    }

    #[test]
    fn lq_norm_of_constant_and_sine() {
        let g = box_grid(17);
        let one = ScalarField::constant(&g, 1.0);
        assert!((one.norm_lq(2.0).unwrap() - (8.0 * PI * PI).sqrt()).abs() < 1e-12);
        let s = ScalarField::from_fn(&g, |x, _, _| x.sin());
        assert!((s.norm_lq(2.0).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert!((s.norm_lq(f64::INFINITY).unwrap() - 1.0).abs() < 1e-3);
        assert!(s.norm_lq(0.5).is_err());
        assert!(s.norm_lq(f64::NAN).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let g = box_grid(9);
        let s = ScalarField::from_fn(&g, |x, _, _| x.sin());
        let c = ScalarField::from_fn(&g, |x, _, _| x.cos());
        assert!(inner_l2(&s, &c).unwrap().abs() < 1e-10);
        let one = ScalarField::constant(&g, 1.0);
        assert!((inner_l2(&one, &one).unwrap() - 8.0 * PI * PI).abs() < 1e-11);
        let other = make_grid(8, 8, 9, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            inner_l2(&one, &ScalarField::constant(&other, 1.0)),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn sobolev_norm_examples() {
        let g = box_grid(9);
        let c = ScalarField::constant(&g, -3.0);
        assert!((c.sobolev_norm(1).unwrap() - 3.0 * (8.0 * PI * PI).sqrt()).abs() < 1e-10);
        let s = ScalarField::from_fn(&g, |x, _, _| x.sin());
        assert!((s.sobolev_norm(1).unwrap() - 2.0 * PI * 2f64.sqrt()).abs() < 1e-10);
        assert!((s.sobolev_norm(0).unwrap() - s.norm_lq(2.0).unwrap()).abs() < 1e-12);
        assert!(matches!(s.sobolev_norm(3), Err(Error::UnsupportedOrder(3))));
    }

    #[test]
    fn derivatives_of_known_functions() {
        let g = box_grid(17);
        let s = ScalarField::from_fn(&g, |x, _, _| x.sin());
        let ds = s.diff(Axis::X1);
        let c = ScalarField::from_fn(&g, |x, _, _| x.cos());
        assert!(ds.sub(&c).unwrap().max_abs() < 1e-10);
        let k = ScalarField::constant(&g, 2.5);
        assert!(k.diff(Axis::X3).max_abs() < 1e-12);
        let w = ScalarField::from_fn(&g, |_, _, z| (PI * z / 2.0).cos());
        let dw = w.diff(Axis::X3);
        let exact = ScalarField::from_fn(&g, |_, _, z| -(PI / 2.0) * (PI * z / 2.0).sin());
        assert!(dw.sub(&exact).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn laplacian_identities() {
        let g = box_grid(17);
        let phi = ScalarField::from_fn(&g, |x, y, z| x.sin() * y.sin() * (PI * z / 2.0).cos());
        let a = divergence(&grad(&phi));
        let b = laplacian(&phi);
        assert!(a.sub(&b).unwrap().max_abs() < 1e-9);
        let psi = ScalarField::from_fn(&g, |x, _, z| x.sin() + (PI * z / 2.0).cos());
        let lh = laplacian_h(&psi);
        let exact = ScalarField::from_fn(&g, |x, _, _| -x.sin());
        assert!(lh.sub(&exact).unwrap().max_abs() < 1e-10);
        let zonly = ScalarField::from_fn(&g, |_, _, z| z * z * z);
        let [gx, gy] = grad_h(&zonly);
        assert!(gx.max_abs() < 1e-12 && gy.max_abs() < 1e-12);
    }

    #[test]
    fn values_mut_invalidates_modal_cache() {
        let g = box_grid(9);
        let mut f = ScalarField::constant(&g, 1.0);
        assert!((f.modal()[4].re - 1.0).abs() < 1e-14);
        f.values_mut().iter_mut().for_each(|v| *v = 2.0);
        assert!((f.modal()[4].re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_round_trip_and_single_mode() {
        let g = box_grid(9);
        let one = ScalarField::constant(&g, 1.0);
        let spec = one.to_spectral();
        let total: f64 = spec.coeffs().iter().map(|c| c.norm()).sum();
        assert!((spec.get(0, 0, 0).re - 1.0).abs() < 1e-12);
        assert!((total - 1.0).abs() < 1e-12);

        let s = ScalarField::from_fn(&g, |x, _, _| x.sin());
        let spec = s.to_spectral();
        for (idx, c) in spec.coeffs().iter().enumerate() {
            let mode = idx / g.nz();
            let n = idx % g.nz();
            let (ix, iy) = g.mode_xy(mode);
            let populated = n == 0 && iy == 0 && (ix == 1 || ix == g.nx() - 1);
            if !populated {
                assert!(c.norm() < 1e-12);
            } else {
                assert!((c.norm() - 0.5).abs() < 1e-12);
            }
        }
        let back = ScalarField::from_spectral(&spec);
        assert!(back.sub(&s).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn plane_field_norms() {
        let g = box_grid(9);
        let p = PlaneField::from_fn(&g, |x, _| x.sin());
        assert!((p.norm_l2() - PI * 2f64.sqrt()).abs() < 1e-12);
        assert!((p.h1_norm() - 2.0 * PI).abs() < 1e-12);
        assert!((p.norm_lq(4.0).unwrap() - (1.5 * PI * PI).powf(0.25)).abs() < 1e-12);
        let e = p.extend();
        assert!((e.norm_l2() - 2.0 * PI).abs() < 1e-12);
    }
}
