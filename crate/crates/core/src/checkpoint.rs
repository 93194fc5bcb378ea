//! Binary field checkpoints.
//!
//! Layout (little-endian): 8-byte magic `NSCHCKPT`, `u32` version, `u32`
//! nx, ny, nz, `f64` px, py, L, time, followed by the physical values of
//! each stored component in `x₁`-fastest order. The number of components is
//! implied by the file length.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{make_grid, Grid};

pub const MAGIC: &[u8; 8] = b"NSCHCKPT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 3 * 4 + 4 * 8;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub grid: Arc<Grid>,
    pub time: f64,
    pub components: Vec<ScalarField>,
}

impl Checkpoint {
    pub fn from_vector(u: &VectorField, time: f64) -> Self {
        Self {
            grid: u.grid().clone(),
            time,
            components: u.components().to_vec(),
        }
    }

    /// Reassembles a velocity field; requires exactly three components.
    pub fn into_vector(self) -> Result<VectorField> {
        let n = self.components.len();
        let parts: [ScalarField; 3] = self
            .components
            .try_into()
            .map_err(|_| Error::Checkpoint(format!("expected 3 components, found {n}")))?;
        Ok(VectorField::new(parts)?.classify())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len() * self.components.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for n in [g.nx(), g.ny(), g.nz()] {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for v in [g.px(), g.py(), g.half_height(), self.time] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for c in &self.components {
            for v in c.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Checkpoint("file shorter than header".into()));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let (nx, ny, nz) = (u32_at(12) as usize, u32_at(16) as usize, u32_at(20) as usize);
        let (px, py, l, time) = (f64_at(24), f64_at(32), f64_at(40), f64_at(48));
        let grid = make_grid(nx, ny, nz, px, py, l)?;
        let body = &bytes[HEADER_LEN..];
        let comp_bytes = 8 * grid.len();
        if body.is_empty() || body.len() % comp_bytes != 0 {
            return Err(Error::Checkpoint(format!(
                "payload of {} bytes is not a whole number of {nx}x{ny}x{nz} fields",
                body.len()
            )));
        }
        let components = body
            .chunks_exact(comp_bytes)
            .map(|chunk| {
                let values = chunk
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                ScalarField::from_values(&grid, values)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, time, components })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = make_grid(8, 6, 9, 2.0 * PI, PI, 1.0).unwrap();
        let u = VectorField::from_fn(&g, |x, y, z| [x.sin() * (1.0 - z * z), y.cos() * z, 0.1 * x]);
        let ck = Checkpoint::from_vector(&u, 0.25);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.time, 0.25);
        assert_eq!(*back.grid, *g);
        for (a, b) in back.components.iter().zip(u.components()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn rejects_corrupt_input() {
        let g = make_grid(4, 4, 5, 1.0, 1.0, 1.0).unwrap();
        let ck = Checkpoint {
            grid: g.clone(),
            time: 0.0,
            components: vec![ScalarField::constant(&g, 1.0)],
        };
        let mut bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        let one = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert!(one.into_vector().is_err());
    }
}
