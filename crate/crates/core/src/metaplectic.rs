//! Quantum propagation from classical data: Gaussian wavepackets under the
//! metaplectic action of quadratic flows, explicit free and oscillator
//! kernels on a grid, Heisenberg translations and nearby-orbit propagation.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{integrate_linearized, quadratic_flow, GeneralHamiltonian, QuadraticHamiltonian};
use crate::grid::GridWavefunction;
use crate::linalg::{self, sorted_sym_eigen};
use crate::reference::wavenumbers;
use crate::symplectic::{j_matrix, matrix_exponential, PhasePoint};
use crate::FORMAT_VERSION;

/// Largest condition number of `A + B A0` accepted before a propagation is
/// declared to cross a caustic.
pub const CAUSTIC_CONDITION: f64 = 1e12;

type CMatrix = DMatrix<Complex64>;

fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// `psi(x) = N exp[(i/2ħ)(x-x0)^T A (x-x0) + (i/ħ) p0·(x-x0) + iφ/ħ]` with
/// `N = (det Im A)^{1/4} / (πħ)^{n/4}`, so every packet has unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWavepacket {
    center_x: DVector<f64>,
    center_p: DVector<f64>,
    width: CMatrix,
    phase: f64,
    hbar: f64,
}

impl GaussianWavepacket {
    pub fn new(center_x: Vec<f64>, center_p: Vec<f64>, width: CMatrix, phase: f64, hbar: f64) -> Result<Self> {
        let n = center_x.len();
        if n == 0 || center_p.len() != n || width.nrows() != n || width.ncols() != n {
            return Err(Error::InvalidDimension(format!(
                "center ({}, {}) and width {}x{} disagree",
                center_x.len(),
                center_p.len(),
                width.nrows(),
                width.ncols()
            )));
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::InvalidInput(format!("hbar must be positive, got {hbar}")));
        }
        let finite = center_x.iter().chain(&center_p).all(|v| v.is_finite())
            && width.iter().all(|v| v.re.is_finite() && v.im.is_finite())
            && phase.is_finite();
        if !finite {
            return Err(Error::InvalidInput("non-finite wavepacket parameters".into()));
        }
        let scale = width.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let asym = (&width - width.transpose()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidInput(format!("width matrix is not symmetric ({asym:e})")));
        }
        let width = (&width + width.transpose()) * Complex64::new(0.5, 0.0);
        let im = width.map(|v| v.im);
        let (values, _) = sorted_sym_eigen(&im);
        if !(values[0] > 0.0) {
            return Err(Error::DegenerateMatrix(format!(
                "imaginary part of the width must be positive-definite (min eigenvalue {:e})",
                values[0]
            )));
        }
        Ok(Self {
            center_x: DVector::from_vec(center_x),
            center_p: DVector::from_vec(center_p),
            width,
            phase,
            hbar,
        })
    }

    /// Isotropic coherent state with position spread `sigma`: `A = iħ/(2σ²) I`.
    pub fn coherent(center: &PhasePoint, sigma: f64, hbar: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        let n = center.dof();
        let a = Complex64::new(0.0, hbar / (2.0 * sigma * sigma));
        Self::new(center.x.clone(), center.p.clone(), CMatrix::identity(n, n) * a, 0.0, hbar)
    }

    pub fn dof(&self) -> usize {
        self.center_x.len()
    }

    pub fn center(&self) -> PhasePoint {
        PhasePoint {
            x: self.center_x.iter().copied().collect(),
            p: self.center_p.iter().copied().collect(),
        }
    }

    pub fn center_x(&self) -> &DVector<f64> {
        &self.center_x
    }

    pub fn center_p(&self) -> &DVector<f64> {
        &self.center_p
    }

    pub fn width(&self) -> &CMatrix {
        &self.width
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn normalization(&self) -> f64 {
        let im = self.width.map(|v| v.im);
        im.determinant().powf(0.25) / (PI * self.hbar).powf(self.dof() as f64 / 4.0)
    }

    pub fn value(&self, x: &[f64]) -> Result<Complex64> {
        if x.len() != self.dof() {
            return Err(Error::InvalidDimension(format!("point has {} coordinates", x.len())));
        }
        let dx = DVector::from_iterator(x.len(), x.iter().zip(self.center_x.iter()).map(|(a, b)| a - b));
        Ok(self.value_at_offset(&dx))
    }

    fn value_at_offset(&self, dx: &DVector<f64>) -> Complex64 {
        let cdx = dx.map(|v| Complex64::new(v, 0.0));
        let quad = (cdx.transpose() * &self.width * &cdx)[(0, 0)];
        let lin = self.center_p.dot(dx);
        let exponent = Complex64::new(0.0, 1.0 / self.hbar) * (quad * 0.5 + lin + self.phase);
        exponent.exp() * self.normalization()
    }

    /// Samples a one-degree-of-freedom packet on `n` points of `[x_min, x_max)`.
    pub fn sample_on_grid(&self, x_min: f64, x_max: f64, n: usize) -> Result<GridWavefunction> {
        if self.dof() != 1 {
            return Err(Error::InvalidDimension("grid sampling needs one degree of freedom".into()));
        }
        let x0 = self.center_x[0];
        GridWavefunction::from_fn(x_min, x_max, n, self.hbar, |x| {
            self.value_at_offset(&DVector::from_element(1, x - x0))
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ComplexRows {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct WavepacketRepr {
    format_version: u32,
    hbar: f64,
    center_x: Vec<f64>,
    center_p: Vec<f64>,
    width: ComplexRows,
    phase: f64,
}

impl Serialize for GaussianWavepacket {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WavepacketRepr {
            format_version: FORMAT_VERSION,
            hbar: self.hbar,
            center_x: self.center_x.iter().copied().collect(),
            center_p: self.center_p.iter().copied().collect(),
            width: ComplexRows {
                re: linalg::to_rows(&self.width.map(|v| v.re)),
                im: linalg::to_rows(&self.width.map(|v| v.im)),
            },
            phase: self.phase,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianWavepacket {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = WavepacketRepr::deserialize(d)?;
        if r.format_version != FORMAT_VERSION {
            return Err(D::Error::custom(format!("unsupported format_version {}", r.format_version)));
        }
        let re = linalg::from_rows(&r.width.re).map_err(D::Error::custom)?;
        let im = linalg::from_rows(&r.width.im).map_err(D::Error::custom)?;
        if re.shape() != im.shape() {
            return Err(D::Error::custom("width re/im shapes differ"));
        }
        let width = CMatrix::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]));
        GaussianWavepacket::new(r.center_x, r.center_p, width, r.phase, r.hbar).map_err(D::Error::custom)
    }
}

fn condition_number(q: &CMatrix) -> f64 {
    let sv = q.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// `(A + B A0, C + D A0)` for `S = (A, B; C, D)`.
fn siegel_pair(s: &DMatrix<f64>, a0: &CMatrix) -> (CMatrix, CMatrix) {
    let n = a0.nrows();
    let blk = |r, c| complexify(&s.view((r, c), (n, n)).into_owned());
    let q = blk(0, 0) + blk(0, n) * a0;
    let p = blk(n, 0) + blk(n, n) * a0;
    (q, p)
}

/// Picks the representative of `principal + 2πk` closest to `tracked`.
fn snap_branch(principal: f64, tracked: f64) -> f64 {
    principal + 2.0 * PI * ((tracked - principal) / (2.0 * PI)).round()
}

/// Continuous `arg det(A_s + B_s A0)` for `s` in `[0, t]`, refined until no
/// increment between samples exceeds π/2.
fn tracked_arg_det(generator: &DMatrix<f64>, a0: &CMatrix, t: f64, final_q: &CMatrix) -> Result<f64> {
    let principal = final_q.determinant().arg();
    if t == 0.0 {
        return Ok(principal);
    }
    let d = generator.nrows();
    let rate = linalg::max_abs(generator) * d as f64 * t.abs();
    let mut pieces = ((rate / 0.25).ceil() as usize).clamp(8, 1 << 16);
    loop {
        let step = matrix_exponential(&(generator * (t / pieces as f64)))?;
        let mut s = DMatrix::<f64>::identity(d, d);
        let mut prev = Complex64::new(1.0, 0.0);
        let mut total = 0.0;
        let mut smooth = true;
        for _ in 0..pieces {
            s = &step * s;
            let det = siegel_pair(&s, a0).0.determinant();
            let inc = (det / prev).arg();
            if inc.abs() > FRAC_PI_2 {
                smooth = false;
                break;
            }
            total += inc;
            prev = det;
        }
        if smooth {
            return Ok(snap_branch(principal, total));
        }
        if pieces >= 1 << 22 {
            return Err(Error::NoConvergence("metaplectic phase tracking".into()));
        }
        pieces *= 4;
    }
}

/// `∫_0^t (p·ẋ - H) ds` along the exact flow from `z0`, by Van Loan's block
/// exponential of the quadratic form in `w = (z, 1)`.
fn quadratic_action(h: &QuadraticHamiltonian, z0: &DVector<f64>, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let n = h.dof();
    let d = 2 * n;
    let m = h.quadratic_part();
    let u = h.linear_part();
    let j = j_matrix(n);
    let mut g = DMatrix::zeros(d + 1, d + 1);
    g.view_mut((0, 0), (d, d)).copy_from(&(&j * m));
    g.view_mut((0, d), (d, 1)).copy_from(&(&j * u));

    let mut sel = DMatrix::<f64>::zeros(d, d);
    for k in n..d {
        sel[(k, k)] = 1.0;
    }
    let mut q = DMatrix::zeros(d + 1, d + 1);
    q.view_mut((0, 0), (d, d)).copy_from(&(linalg::symmetrize(&(&sel * m)) - m * 0.5));
    let cross = (&sel * u - u) * 0.5;
    q.view_mut((0, d), (d, 1)).copy_from(&cross);
    q.view_mut((d, 0), (1, d)).copy_from(&cross.transpose());
    q[(d, d)] = -h.constant();

    let k = d + 1;
    let mut big = DMatrix::zeros(2 * k, 2 * k);
    big.view_mut((0, 0), (k, k)).copy_from(&(-g.transpose()));
    big.view_mut((0, k), (k, k)).copy_from(&q);
    big.view_mut((k, k), (k, k)).copy_from(&g);
    let f = matrix_exponential(&(big * t))?;
    let integral = f.view((k, k), (k, k)).transpose() * f.view((0, k), (k, k));
    let mut w = DVector::zeros(k);
    w.rows_mut(0, d).copy_from(z0);
    w[d] = 1.0;
    Ok(w.dot(&(integral * &w)))
}

fn require_hamiltonian_dof(dof: usize, wp: &GaussianWavepacket) -> Result<()> {
    if dof != wp.dof() {
        return Err(Error::InvalidDimension(format!(
            "Hamiltonian has {dof} degrees of freedom, wavepacket {}",
            wp.dof()
        )));
    }
    Ok(())
}

fn assemble(
    wp: &GaussianWavepacket,
    center: &DVector<f64>,
    q: &CMatrix,
    p: &CMatrix,
    action: f64,
    arg_det: f64,
) -> Result<GaussianWavepacket> {
    let cond = condition_number(q);
    if !(cond <= CAUSTIC_CONDITION) {
        return Err(Error::CausticCrossing { condition: cond });
    }
    let q_inv = q
        .clone()
        .try_inverse()
        .ok_or(Error::CausticCrossing { condition: f64::INFINITY })?;
    let width = p * q_inv;
    let n = wp.dof();
    GaussianWavepacket::new(
        center.rows(0, n).iter().copied().collect(),
        center.rows(n, n).iter().copied().collect(),
        width,
        wp.phase + action - 0.5 * wp.hbar * arg_det,
        wp.hbar,
    )
}

/// Exact metaplectic action of the flow of a quadratic Hamiltonian on a
/// Gaussian: center by the affine flow, width by `(C + D A0)(A + B A0)^{-1}`,
/// phase by the classical action plus the continuously tracked
/// `-(ħ/2) arg det(A + B A0)`.
pub fn gaussian_propagate(wp: &GaussianWavepacket, h: &QuadraticHamiltonian, t: f64) -> Result<GaussianWavepacket> {
    require_hamiltonian_dof(h.dof(), wp)?;
    if !t.is_finite() {
        return Err(Error::InvalidInput(format!("time must be finite, got {t}")));
    }
    if t == 0.0 {
        return Ok(wp.clone());
    }
    let z0 = wp.center().to_vector();
    let flow = quadratic_flow(h, t);
    let center = flow.apply(&z0);
    let (q, p) = siegel_pair(flow.linear.matrix(), &wp.width);
    let generator = j_matrix(h.dof()) * h.quadratic_part();
    let arg = tracked_arg_det(&generator, &wp.width, t, &q)?;
    let action = quadratic_action(h, &z0, t)?;
    assemble(wp, &center, &q, &p, action, arg)
}

/// Thawed-Gaussian propagation under a general Hamiltonian: the center, the
/// variational matrix `S_t` of the local quadratic model and the action are
/// integrated together with RK4 at step `dt`, and the packet is then moved
/// by the metaplectic action of the resulting affine map.
pub fn nearby_orbit_propagate<H: GeneralHamiltonian + ?Sized>(
    h: &H,
    wp: &GaussianWavepacket,
    total: f64,
    dt: f64,
) -> Result<GaussianWavepacket> {
    require_hamiltonian_dof(h.dof(), wp)?;
    let z0 = wp.center().to_vector();
    let states = integrate_linearized(h, &z0, total, dt)?;
    let mut arg = 0.0;
    let mut prev = Complex64::new(1.0, 0.0);
    for s in &states[1..] {
        let det = siegel_pair(&s.linear, &wp.width).0.determinant();
        let inc = (det / prev).arg();
        if inc.abs() > FRAC_PI_2 {
            return Err(Error::NoConvergence(format!(
                "width phase jumps by {inc:.3} rad in one step at t = {}; reduce dt",
                s.time
            )));
        }
        arg += inc;
        prev = det;
    }
    let last = states.last().expect("at least the initial state");
    let (q, p) = siegel_pair(&last.linear, &wp.width);
    let arg = snap_branch(q.determinant().arg(), arg);
    assemble(wp, &last.center, &q, &p, last.action, arg)
}

/// Which explicit kernel to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    Free { m: f64 },
    Oscillator { m: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    pub t: f64,
    pub hbar: f64,
}

/// Tolerance used to snap `ωt` onto a multiple of π.
pub const SINGULAR_TIME_TOL: f64 = 1e-9;

enum Regular {
    Free { coef: Complex64, a: f64 },
    Oscillator { coef: Complex64, a: f64, cos: f64 },
}

impl Regular {
    fn phase(&self, x: f64, y: f64) -> f64 {
        match *self {
            Regular::Free { a, .. } => a * (x - y) * (x - y),
            Regular::Oscillator { a, cos, .. } => a * ((x * x + y * y) * cos - 2.0 * x * y),
        }
    }

    fn coef(&self) -> Complex64 {
        match *self {
            Regular::Free { coef, .. } | Regular::Oscillator { coef, .. } => coef,
        }
    }

    fn value(&self, x: f64, y: f64) -> Complex64 {
        self.coef() * Complex64::from_polar(1.0, self.phase(x, y))
    }

    /// `|∂phase/∂y|`, maximized over a box; it is affine in `(x, y)`.
    fn max_phase_slope(&self, xs: (f64, f64), ys: (f64, f64)) -> f64 {
        let slope = |x: f64, y: f64| match *self {
            Regular::Free { a, .. } => 2.0 * a * (y - x),
            Regular::Oscillator { a, cos, .. } => 2.0 * a * (y * cos - x),
        };
        [(xs.0, ys.0), (xs.0, ys.1), (xs.1, ys.0), (xs.1, ys.1)]
            .iter()
            .map(|&(x, y)| slope(x, y).abs())
            .fold(0.0, f64::max)
    }
}

enum Resolved {
    /// Exact limit `phase * P^k`, `P` the parity operator.
    Limit { phase: Complex64, parity: bool },
    Kernel(Regular),
}

impl KernelSpec {
    pub fn free(m: f64, t: f64, hbar: f64) -> Self {
        Self { kind: KernelKind::Free { m }, t, hbar }
    }

    pub fn oscillator(m: f64, omega: f64, t: f64, hbar: f64) -> Self {
        Self {
            kind: KernelKind::Oscillator { m, omega },
            t,
            hbar,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.t.is_finite()
            && self.hbar > 0.0
            && self.hbar.is_finite()
            && match self.kind {
                KernelKind::Free { m } => m > 0.0 && m.is_finite(),
                KernelKind::Oscillator { m, omega } => m > 0.0 && omega > 0.0 && m.is_finite() && omega.is_finite(),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid kernel parameters {self:?}")))
        }
    }

    /// The matching quadratic Hamiltonian.
    pub fn hamiltonian(&self) -> QuadraticHamiltonian {
        match self.kind {
            KernelKind::Free { m } => QuadraticHamiltonian::free(m),
            KernelKind::Oscillator { m, omega } => QuadraticHamiltonian::oscillator(m, omega),
        }
    }

    fn resolve(&self) -> Result<Resolved> {
        self.validate()?;
        let (t, hbar) = (self.t, self.hbar);
        match self.kind {
            KernelKind::Free { m } => {
                if t == 0.0 {
                    return Ok(Resolved::Limit {
                        phase: Complex64::new(1.0, 0.0),
                        parity: false,
                    });
                }
                let modulus = (m / (2.0 * PI * hbar * t.abs())).sqrt();
                Ok(Resolved::Kernel(Regular::Free {
                    coef: Complex64::from_polar(modulus, -FRAC_PI_4 * t.signum()),
                    a: m / (2.0 * hbar * t),
                }))
            }
            KernelKind::Oscillator { m, omega } => {
                let theta = omega * t;
                let k = (theta / PI).round();
                if (theta - k * PI).abs() <= SINGULAR_TIME_TOL {
                    // e^{-ikπ/2}, exact in floating point.
                    let phase = [(1.0, 0.0), (0.0, -1.0), (-1.0, 0.0), (0.0, 1.0)][(k as i64).rem_euclid(4) as usize];
                    return Ok(Resolved::Limit {
                        phase: Complex64::new(phase.0, phase.1),
                        parity: (k as i64).rem_euclid(2) == 1,
                    });
                }
                let sin = theta.sin();
                let branch = -FRAC_PI_4 - FRAC_PI_2 * (theta / PI).floor();
                let modulus = (m * omega / (2.0 * PI * hbar * sin.abs())).sqrt();
                Ok(Resolved::Kernel(Regular::Oscillator {
                    coef: Complex64::from_polar(modulus, branch),
                    a: m * omega / (2.0 * hbar * sin),
                    cos: theta.cos(),
                }))
            }
        }
    }
}

fn regular_kernel(spec: &KernelSpec) -> Result<Regular> {
    match spec.resolve()? {
        Resolved::Kernel(k) => Ok(k),
        Resolved::Limit { .. } => Err(Error::SingularTime { t: spec.t }),
    }
}

/// `K_t(x, y) = e^{-iπ sign(t)/4} sqrt(m / 2πħ|t|) exp[i m (x-y)² / 2ħt]`.
pub fn free_kernel_value(spec: &KernelSpec, x: f64, y: f64) -> Result<Complex64> {
    if !matches!(spec.kind, KernelKind::Free { .. }) {
        return Err(Error::InvalidInput("expected a free-particle kernel".into()));
    }
    Ok(regular_kernel(spec)?.value(x, y))
}

/// Mehler kernel
/// `e^{-iπ/4} e^{-iπ⌊ωt/π⌋/2} sqrt(mω / 2πħ|sin ωt|)
///  exp[(i mω / 2ħ sin ωt)((x² + y²) cos ωt - 2xy)]`.
pub fn oscillator_kernel_value(spec: &KernelSpec, x: f64, y: f64) -> Result<Complex64> {
    if !matches!(spec.kind, KernelKind::Oscillator { .. }) {
        return Err(Error::InvalidInput("expected an oscillator kernel".into()));
    }
    Ok(regular_kernel(spec)?.value(x, y))
}

/// Validity checks applied by [`kernel_propagate_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    /// Largest kernel phase change between neighbouring samples.
    pub phase_limit: f64,
    /// Relative norm change tolerated by the quadrature.
    pub quadrature_tol: f64,
    /// Required decay of the input at the grid edges.
    pub edge_tol: f64,
    /// Samples below this fraction of the peak modulus are outside the support
    /// used for the phase-resolution check.
    pub support_tol: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            phase_limit: FRAC_PI_4,
            quadrature_tol: 1e-6,
            edge_tol: 1e-12,
            support_tol: 1e-8,
        }
    }
}

fn support(psi: &GridWavefunction, rel: f64) -> (f64, f64) {
    let max = psi.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut lo = psi.len();
    let mut hi = 0;
    for (k, v) in psi.values().iter().enumerate() {
        if v.norm() >= rel * max {
            lo = lo.min(k);
            hi = k;
        }
    }
    if lo > hi {
        return (psi.x(0), psi.x(psi.len() - 1));
    }
    (psi.x(lo), psi.x(hi))
}

fn parity(psi: &GridWavefunction) -> Result<Vec<Complex64>> {
    let shift = -2.0 * psi.x0() / psi.dx();
    let m = shift.round();
    if (shift - m).abs() > 1e-9 {
        return Err(Error::GridMisalignment {
            shift: -2.0 * psi.x0(),
            dx: psi.dx(),
        });
    }
    let n = psi.len() as i64;
    let m = m as i64;
    Ok((0..n).map(|k| psi.values()[(m - k).rem_euclid(n) as usize]).collect())
}

pub fn kernel_propagate(psi0: &GridWavefunction, spec: &KernelSpec) -> Result<GridWavefunction> {
    kernel_propagate_with(psi0, spec, &KernelOptions::default())
}

/// `psi(x_j) = Σ_k K_t(x_j, y_k) psi0(y_k) dx`. Output samples are computed in
/// parallel; each sum runs in index order, so results do not depend on the
/// thread count. At singular times the exact limit (a phase times identity or
/// parity) is applied instead.
pub fn kernel_propagate_with(psi0: &GridWavefunction, spec: &KernelSpec, opts: &KernelOptions) -> Result<GridWavefunction> {
    if spec.hbar != psi0.hbar() {
        return Err(Error::InvalidInput(format!(
            "kernel hbar {} differs from wavefunction hbar {}",
            spec.hbar,
            psi0.hbar()
        )));
    }
    let kernel = match spec.resolve()? {
        Resolved::Limit { phase, parity: flip } => {
            if !flip && phase == Complex64::new(1.0, 0.0) {
                return Ok(psi0.clone());
            }
            let values = if flip { parity(psi0)? } else { psi0.values().to_vec() };
            return psi0.with_values(values.into_iter().map(|v| v * phase).collect());
        }
        Resolved::Kernel(k) => k,
    };
    psi0.require_edge_decay(opts.edge_tol)?;

    let dx = psi0.dx();
    let ys: Vec<f64> = psi0.positions().collect();
    let input = psi0.values();
    let values: Vec<Complex64> = (0..psi0.len())
        .into_par_iter()
        .map(|j| {
            let x = psi0.x(j);
            let mut acc = Complex64::new(0.0, 0.0);
            for (y, v) in ys.iter().zip(input) {
                acc += Complex64::from_polar(1.0, kernel.phase(x, *y)) * v;
            }
            acc * kernel.coef() * dx
        })
        .collect();
    let out = psi0.with_values(values)?;

    let increment = kernel.max_phase_slope(support(&out, opts.support_tol), support(psi0, opts.support_tol)) * dx;
    if increment > opts.phase_limit {
        let factor = (increment / opts.phase_limit).ceil() as usize;
        return Err(Error::UnderResolvedGrid {
            max_increment: increment,
            limit: opts.phase_limit,
            suggested_n: (psi0.len() * factor).next_power_of_two(),
        });
    }
    let (n_in, n_out) = (psi0.norm2(), out.norm2());
    if (n_out - n_in).abs() > opts.quadrature_tol * n_in {
        return Err(Error::InvalidGrid(format!(
            "quadrature changed norm^2 from {n_in} to {n_out}; enlarge the domain or refine the grid"
        )));
    }
    Ok(out)
}

/// States on which the Heisenberg operator
/// `T(x0, p0) psi(x) = exp[(i/ε)(p0·x - p0·x0/2)] psi(x - x0)` acts.
pub trait HeisenbergTranslate: Sized {
    fn heisenberg_translate(&self, x0: &[f64], p0: &[f64], eps: f64) -> Result<Self>;
}

fn check_translation(dof: usize, x0: &[f64], p0: &[f64], eps: f64) -> Result<()> {
    if x0.len() != dof || p0.len() != dof {
        return Err(Error::InvalidDimension(format!(
            "translation ({}, {}) for {dof} degrees of freedom",
            x0.len(),
            p0.len()
        )));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    if !x0.iter().chain(p0).all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite translation".into()));
    }
    Ok(())
}

impl HeisenbergTranslate for GaussianWavepacket {
    fn heisenberg_translate(&self, x0: &[f64], p0: &[f64], eps: f64) -> Result<Self> {
        check_translation(self.dof(), x0, p0, eps)?;
        let a = DVector::from_column_slice(x0);
        let b = DVector::from_column_slice(p0);
        let ratio = self.hbar / eps;
        let cx = &self.center_x + &a;
        let cp = &self.center_p + &b * ratio;
        let phase = self.phase + ratio * (b.dot(&cx) - 0.5 * b.dot(&a));
        Ok(Self {
            center_x: cx,
            center_p: cp,
            width: self.width.clone(),
            phase,
            hbar: self.hbar,
        })
    }
}

impl HeisenbergTranslate for GridWavefunction {
    /// The shift must be a whole number of samples; it is applied cyclically.
    fn heisenberg_translate(&self, x0: &[f64], p0: &[f64], eps: f64) -> Result<Self> {
        check_translation(1, x0, p0, eps)?;
        let (a, b) = (x0[0], p0[0]);
        let shift = a / self.dx();
        let k = shift.round();
        if (shift - k).abs() > 1e-9 {
            return Err(Error::GridMisalignment { shift: a, dx: self.dx() });
        }
        let n = self.len() as i64;
        let k = k as i64;
        let src = self.values();
        let mut values: Vec<Complex64> = (0..n).map(|j| src[(j - k).rem_euclid(n) as usize]).collect();
        if b != 0.0 {
            for (j, v) in values.iter_mut().enumerate() {
                *v *= Complex64::from_polar(1.0, (b * self.x(j) - 0.5 * b * a) / eps);
            }
        }
        self.with_values(values)
    }
}

pub fn heisenberg_translate<T: HeisenbergTranslate>(state: &T, x0: &[f64], p0: &[f64], eps: f64) -> Result<T> {
    state.heisenberg_translate(x0, p0, eps)
}

/// First and second moments of position and momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
}

/// Moments of `|psi|²` in position and of the momentum operator `-iħ d/dx`,
/// the derivative taken spectrally (Nyquist mode dropped).
pub fn ehrenfest_means(psi: &GridWavefunction) -> Result<Moments> {
    let norm2 = psi.norm2();
    if !(norm2 > 1e-12) {
        return Err(Error::DegenerateState { norm2 });
    }
    let dx = psi.dx();
    let n = psi.len();
    let hbar = psi.hbar();
    let (mut sx, mut sxx) = (0.0, 0.0);
    for (k, v) in psi.values().iter().enumerate() {
        let w = v.norm_sqr();
        let x = psi.x(k);
        sx += x * w;
        sxx += x * x * w;
    }
    let mean_x = sx * dx / norm2;
    let var_x = (sxx * dx / norm2 - mean_x * mean_x).max(0.0);

    let mut planner = FftPlanner::new();
    let mut buf = psi.values().to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    let ks = wavenumbers(n, dx);
    for (j, (b, k)) in buf.iter_mut().zip(&ks).enumerate() {
        *b *= if n % 2 == 0 && j == n / 2 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, *k / n as f64)
        };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let (mut cross, mut grad2) = (Complex64::new(0.0, 0.0), 0.0);
    for (v, d) in psi.values().iter().zip(&buf) {
        cross += v.conj() * d;
        grad2 += d.norm_sqr();
    }
    let mean_p = hbar * cross.im * dx / norm2;
    let var_p = (hbar * hbar * grad2 * dx / norm2 - mean_p * mean_p).max(0.0);
    Ok(Moments {
        mean_x,
        mean_p,
        var_x,
        var_p,
    })
}
