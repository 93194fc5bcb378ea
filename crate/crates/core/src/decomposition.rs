//! Barotropic (vertical mean) / baroclinic (fluctuation) splitting.

use crate::field::{PlaneField, ScalarField};

/// Vertical average `θ̄(x₁, x₂) = (1/2L) ∫ θ dx₃`.
#[derive(Clone, Debug)]
pub struct BarotropicField(pub PlaneField);

/// Fluctuation `θ̃ = θ − θ̄`; vertically mean-free.
#[derive(Clone, Debug)]
pub struct BaroclinicField(pub ScalarField);

impl BarotropicField {
    pub fn plane(&self) -> &PlaneField {
        &self.0
    }

    /// Constant-in-x₃ 3-D view, for mixing with full fields.
    pub fn extended(&self) -> ScalarField {
        self.0.extend()
    }
}

impl BaroclinicField {
    pub fn field(&self) -> &ScalarField {
        &self.0
    }

    pub fn into_field(self) -> ScalarField {
        self.0
    }
}

pub fn vertical_average(theta: &ScalarField) -> BarotropicField {
    let g = theta.grid();
    let plane = g.plane_len();
    let mut avg = vec![0.0; plane];
    for (p, w) in theta.values().chunks_exact(plane).zip(g.weights()) {
        avg.iter_mut().zip(p).for_each(|(a, v)| *a += w * v);
    }
    let inv = 1.0 / (2.0 * g.half_height());
    avg.iter_mut().for_each(|a| *a *= inv);
    BarotropicField(PlaneField::from_values(g, avg).expect("plane shape"))
}

pub fn baroclinic(theta: &ScalarField) -> BaroclinicField {
    let avg = vertical_average(theta);
    let plane = theta.grid().plane_len();
    let mut values = theta.values().to_vec();
    for p in values.chunks_exact_mut(plane) {
        p.iter_mut().zip(avg.0.values()).for_each(|(v, a)| *v -= a);
    }
    BaroclinicField(ScalarField::from_values(theta.grid(), values).expect("field shape"))
}

/// Both parts at once.
pub fn split(theta: &ScalarField) -> (BarotropicField, BaroclinicField) {
    (vertical_average(theta), baroclinic(theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Axis};
    use std::f64::consts::PI;

    #[test]
    fn averages_of_simple_profiles() {
        let g = make_grid(8, 8, 17, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let odd = ScalarField::from_fn(&g, |_, _, z| z);
        assert!(vertical_average(&odd).0.values().iter().all(|v| v.abs() < 1e-14));
        let quad = ScalarField::from_fn(&g, |_, _, z| z * z);
        assert!(vertical_average(&quad)
            .0
            .values()
            .iter()
            .all(|v| (v - 1.0 / 3.0).abs() < 1e-14));
        let s = ScalarField::from_fn(&g, |x, _, _| x.sin());
        let avg = vertical_average(&s);
        for (i, v) in avg.0.values().iter().enumerate() {
            assert!((v - g.x(i % 8).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn baroclinic_examples() {
        let g = make_grid(8, 8, 17, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let flat = ScalarField::from_fn(&g, |x, y, _| x.cos() + y);
        assert!(baroclinic(&flat).0.max_abs() < 1e-14);
        let odd = ScalarField::from_fn(&g, |_, _, z| z);
        assert!(baroclinic(&odd).0.sub(&odd).unwrap().max_abs() < 1e-14);
        let quad = ScalarField::from_fn(&g, |_, _, z| z * z);
        let exact = ScalarField::from_fn(&g, |_, _, z| z * z - 1.0 / 3.0);
        assert!(baroclinic(&quad).0.sub(&exact).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn commutes_with_horizontal_derivatives() {
        let g = make_grid(16, 16, 17, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
        let th = ScalarField::from_fn(&g, |x, y, z| (x + z).sin() * (2.0 * y).cos() + z * z * x.cos());
        for axis in Axis::HORIZONTAL {
            let a = vertical_average(&th).0.diff(axis);
            let b = vertical_average(&th.diff(axis));
            for (p, q) in a.values().iter().zip(b.0.values()) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }
}
