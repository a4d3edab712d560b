//! Split-step spectral Schrödinger solver.
//!
//! Used as the independent oracle for every propagation result; it shares no
//! code with the metaplectic propagators beyond the grid container.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridWavefunction;

/// Potential `V(x)` for `H = p^2 / 2m + V(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialSpec {
    Zero,
    /// `m ω^2 x^2 / 2`
    Harmonic { m: f64, omega: f64 },
    /// `g x^4`
    Quartic { g: f64 },
    /// `-k cos x`
    Pendulum { k: f64 },
    /// One value per grid point.
    Tabulated { samples: Vec<f64> },
}

impl PotentialSpec {
    pub fn evaluate(&self, grid: &GridWavefunction) -> Result<Vec<f64>> {
        if let PotentialSpec::Tabulated { samples } = self {
            if samples.len() != grid.len() {
                return Err(Error::InvalidInput(format!(
                    "tabulated potential has {} samples for a grid of {}",
                    samples.len(),
                    grid.len()
                )));
            }
            return Ok(samples.clone());
        }
        Ok(grid.positions().map(|x| self.at(x)).collect())
    }

    fn at(&self, x: f64) -> f64 {
        match *self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Harmonic { m, omega } => 0.5 * m * omega * omega * x * x,
            PotentialSpec::Quartic { g } => g * x.powi(4),
            PotentialSpec::Pendulum { k } => -k * x.cos(),
            PotentialSpec::Tabulated { .. } => unreachable!("handled in evaluate"),
        }
    }
}

/// Angular wavenumbers in standard DFT order.
pub(crate) fn wavenumbers(n: usize, dx: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / (n as f64 * dx);
    (0..n)
        .map(|j| if j < n / 2 { j as f64 } else { j as f64 - n as f64 } * base)
        .collect()
}

/// Reusable Strang stepper: half kick, spectral drift, half kick.
pub struct SplitStepper {
    state: Vec<Complex64>,
    kick: Vec<Complex64>,
    drift: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    template: GridWavefunction,
    dt: f64,
    time: f64,
}

impl SplitStepper {
    pub fn new(psi0: &GridWavefunction, potential: &PotentialSpec, mass: f64, dt: f64) -> Result<Self> {
        let n = psi0.len();
        if !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("grid length {n} is not a power of two")));
        }
        if !(mass > 0.0) || !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("need mass > 0 and dt > 0, got {mass}, {dt}")));
        }
        psi0.require_edge_decay(1e-12)?;
        let hbar = psi0.hbar();
        let v = potential.evaluate(psi0)?;
        let kick = v
            .iter()
            .map(|&vx| Complex64::from_polar(1.0, -0.5 * vx * dt / hbar))
            .collect();
        let drift = wavenumbers(n, psi0.dx())
            .into_iter()
            .map(|k| Complex64::from_polar(1.0 / n as f64, -hbar * k * k * dt / (2.0 * mass)))
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Ok(Self {
            state: psi0.values().to_vec(),
            kick,
            drift,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            template: psi0.clone(),
            dt,
            time: 0.0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn advance(&mut self, steps: usize) {
        for _ in 0..steps {
            for (s, k) in self.state.iter_mut().zip(&self.kick) {
                *s *= k;
            }
            self.forward.process_with_scratch(&mut self.state, &mut self.scratch);
            for (s, d) in self.state.iter_mut().zip(&self.drift) {
                *s *= d;
            }
            self.inverse.process_with_scratch(&mut self.state, &mut self.scratch);
            for (s, k) in self.state.iter_mut().zip(&self.kick) {
                *s *= k;
            }
        }
        self.time += steps as f64 * self.dt;
    }

    pub fn current(&self) -> GridWavefunction {
        self.template
            .with_values(self.state.clone())
            .expect("state keeps the grid length")
    }
}

/// Evolves `psi0` by `steps` Strang steps of size `dt` under
/// `p^2 / 2m + V(x)`. `steps = 0` returns the input unchanged.
pub fn split_step_evolve(
    psi0: &GridWavefunction,
    potential: &PotentialSpec,
    mass: f64,
    dt: f64,
    steps: usize,
) -> Result<GridWavefunction> {
    let mut stepper = SplitStepper::new(psi0, potential, mass, dt)?;
    if steps == 0 {
        return Ok(psi0.clone());
    }
    stepper.advance(steps);
    Ok(stepper.current())
}

fn require_same_grid(a: &GridWavefunction, b: &GridWavefunction) -> Result<()> {
    if !a.same_grid(b) {
        return Err(Error::InvalidInput("wavefunctions live on different grids".into()));
    }
    Ok(())
}

/// `sum conj(a) b dx`.
pub fn overlap(a: &GridWavefunction, b: &GridWavefunction) -> Result<Complex64> {
    require_same_grid(a, b)?;
    let s: Complex64 = a.values().iter().zip(b.values()).map(|(x, y)| x.conj() * y).sum();
    Ok(s * a.dx())
}

/// `sqrt(sum |a - b|^2 dx)`.
pub fn l2_distance(a: &GridWavefunction, b: &GridWavefunction) -> Result<f64> {
    require_same_grid(a, b)?;
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum();
    Ok((s * a.dx()).sqrt())
}

/// `min_θ ||a - e^{iθ} b||`, attained at `θ = arg <b, a>`. Returns the
/// distance and the minimizing phase.
pub fn phase_aligned_distance(a: &GridWavefunction, b: &GridWavefunction) -> Result<(f64, f64)> {
    let theta = overlap(b, a)?.arg();
    let rot = Complex64::from_polar(1.0, theta);
    let s: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - rot * y).norm_sqr())
        .sum();
    Ok(((s * a.dx()).sqrt(), theta))
}
