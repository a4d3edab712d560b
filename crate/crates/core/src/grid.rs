//! Wavefunctions sampled on a uniform periodic 1-D grid, with CSV and JSON
//! serialization.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

pub const MIN_GRID_POINTS: usize = 8;

/// `psi(x0 + k dx)` for `k = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    x0: f64,
    dx: f64,
    values: Vec<Complex64>,
    hbar: f64,
}

impl GridWavefunction {
    pub fn new(x0: f64, dx: f64, values: Vec<Complex64>, hbar: f64) -> Result<Self> {
        if values.len() < MIN_GRID_POINTS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_GRID_POINTS} samples, got {}",
                values.len()
            )));
        }
        if !(dx > 0.0) || !dx.is_finite() || !x0.is_finite() {
            return Err(Error::InvalidGrid(format!("bad grid origin/spacing ({x0}, {dx})")));
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::InvalidInput(format!("hbar must be positive, got {hbar}")));
        }
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite wavefunction samples".into()));
        }
        Ok(Self { x0, dx, values, hbar })
    }

    /// Samples `f` on `n` points of the periodic domain `[x_min, x_max)`.
    pub fn from_fn(x_min: f64, x_max: f64, n: usize, hbar: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        if !(x_max > x_min) {
            return Err(Error::InvalidGrid(format!("empty domain [{x_min}, {x_max})")));
        }
        let dx = (x_max - x_min) / n as f64;
        let values = (0..n).map(|k| f(x_min + k as f64 * dx)).collect();
        Self::new(x_min, dx, values, hbar)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.dx
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.x(k))
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Same grid, new samples.
    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::InvalidDimension("sample count mismatch".into()));
        }
        Self::new(self.x0, self.dx, values, self.hbar)
    }

    /// `sum |psi_k|^2 dx`.
    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dx
    }

    pub fn normalized(&self) -> Result<Self> {
        let n2 = self.norm2();
        if !(n2 > 1e-300) {
            return Err(Error::DegenerateState { norm2: n2 });
        }
        let s = 1.0 / n2.sqrt();
        Ok(Self {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        })
    }

    pub fn same_grid(&self, other: &GridWavefunction) -> bool {
        self.len() == other.len()
            && self.x0 == other.x0
            && self.dx == other.dx
            && self.hbar == other.hbar
    }

    /// Largest edge modulus relative to the largest modulus.
    pub fn edge_ratio(&self) -> f64 {
        let max = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return 0.0;
        }
        let edge = self.values[0].norm().max(self.values[self.len() - 1].norm());
        edge / max
    }

    pub(crate) fn require_edge_decay(&self, limit: f64) -> Result<()> {
        let ratio = self.edge_ratio();
        if ratio > limit {
            return Err(Error::InvalidGrid(format!(
                "wavefunction does not decay at the grid edges (|psi_edge| / max = {ratio:e})"
            )));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "re", "im"])?;
        for (k, v) in self.values.iter().enumerate() {
            out.serialize((self.x(k), v.re, v.im))?;
        }
        out.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }

    /// Reads `x, re, im` rows; the grid must be uniform.
    pub fn read_csv<R: Read>(r: R, hbar: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "re", "im"] {
            return Err(Error::Format(format!("expected header x,re,im, got {headers:?}")));
        }
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.deserialize() {
            let (x, re, im): (f64, f64, f64) = rec?;
            xs.push(x);
            values.push(Complex64::new(re, im));
        }
        if xs.len() < 2 {
            return Err(Error::Format("too few rows".into()));
        }
        let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        for (k, &x) in xs.iter().enumerate() {
            if (x - (xs[0] + k as f64 * dx)).abs() > 1e-9 * dx.abs().max(1.0) {
                return Err(Error::Format(format!("non-uniform grid at row {k}")));
            }
        }
        Self::new(xs[0], dx, values, hbar)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GridRepr::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let repr: GridRepr = serde_json::from_str(s)?;
        repr.try_into()
    }
}

/// JSON layout of a grid wavefunction.
#[derive(Debug, Serialize, Deserialize)]
pub struct GridRepr {
    pub format_version: u32,
    pub x0: f64,
    pub dx: f64,
    pub hbar: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&GridWavefunction> for GridRepr {
    fn from(g: &GridWavefunction) -> Self {
        GridRepr {
            format_version: FORMAT_VERSION,
            x0: g.x0,
            dx: g.dx,
            hbar: g.hbar,
            re: g.values.iter().map(|v| v.re).collect(),
            im: g.values.iter().map(|v| v.im).collect(),
        }
    }
}

impl TryFrom<GridRepr> for GridWavefunction {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        if r.re.len() != r.im.len() {
            return Err(Error::Format("re/im length mismatch".into()));
        }
        let values = r.re.iter().zip(&r.im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        GridWavefunction::new(r.x0, r.dx, values, r.hbar)
    }
}

impl Serialize for GridWavefunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridWavefunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        GridRepr::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}
