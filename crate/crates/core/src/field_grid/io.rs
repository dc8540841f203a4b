//! Binary and CSV serialization of vector fields.
//!
//! Binary layout, little endian: `d: u64`, `N: u64`, `L: f64`, then the
//! `d * N^d` samples as `f64`, component by component, each in node order.

use std::io::{Read, Write};

use super::{Grid, VectorField};
use crate::error::{Error, Result};

impl VectorField {
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        let g = &self.grid;
        w.write_all(&(g.dim() as u64).to_le_bytes())?;
        w.write_all(&(g.points_per_axis() as u64).to_le_bytes())?;
        w.write_all(&g.half_width().to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * g.len());
        for c in &self.components {
            buf.clear();
            for v in c {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let dim = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let half_width = f64::from_le_bytes(word);
        let grid = Grid::new(dim, half_width, n)?;
        let mut bytes = vec![0u8; 8 * grid.len()];
        let mut components = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut bytes)?;
            components.push(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} trailing bytes after field data",
                rest.len()
            )));
        }
        VectorField::from_components(&grid, components)
    }

    /// One row per node: coordinates then components.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let d = self.dim();
        let names = ["x1", "x2", "x3"];
        let comps = ["u1", "u2", "u3"];
        writeln!(w, "{},{}", names[..d].join(","), comps[..d].join(","))?;
        for k in 0..self.grid.len() {
            let x = self.grid.node(k);
            let u = self.value(k);
            let row: Vec<String> = x[..d].iter().chain(&u[..d]).map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
