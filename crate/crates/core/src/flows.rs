//! Classical Hamiltonian dynamics: exact affine flows of quadratic
//! Hamiltonians, RK4 trajectories and variational (linearized) flows of
//! general ones, and the second-order Taylor expansion about a point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, symmetrize};
use crate::symplectic::{j_matrix, matrix_exponential, PhasePoint, SymplecticMatrix};

/// A Hamiltonian supplying its value, gradient and Hessian in phase space,
/// possibly time-dependent. `z` is laid out as `(x, p)`.
pub trait GeneralHamiltonian: Sync {
    fn dof(&self) -> usize;
    fn value(&self, z: &DVector<f64>, t: f64) -> f64;
    fn gradient(&self, z: &DVector<f64>, t: f64) -> DVector<f64>;
    fn hessian(&self, z: &DVector<f64>, t: f64) -> DMatrix<f64>;

    fn is_autonomous(&self) -> bool {
        true
    }
}

impl<H: GeneralHamiltonian + ?Sized> GeneralHamiltonian for &H {
    fn dof(&self) -> usize {
        (**self).dof()
    }
    fn value(&self, z: &DVector<f64>, t: f64) -> f64 {
        (**self).value(z, t)
    }
    fn gradient(&self, z: &DVector<f64>, t: f64) -> DVector<f64> {
        (**self).gradient(z, t)
    }
    fn hessian(&self, z: &DVector<f64>, t: f64) -> DMatrix<f64> {
        (**self).hessian(z, t)
    }
    fn is_autonomous(&self) -> bool {
        (**self).is_autonomous()
    }
}

/// `H(z) = 1/2 z^T M z + u^T z + c` with `M` symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuadraticRepr", into = "QuadraticRepr")]
pub struct QuadraticHamiltonian {
    m: DMatrix<f64>,
    u: DVector<f64>,
    c: f64,
}

impl QuadraticHamiltonian {
    /// `M` is symmetrized on construction.
    pub fn new(m: DMatrix<f64>, u: DVector<f64>, c: f64) -> Result<Self> {
        let n = linalg::require_even_square(&m, "M")?;
        if u.len() != 2 * n {
            return Err(Error::InvalidDimension(format!(
                "linear term has length {}, expected {}",
                u.len(),
                2 * n
            )));
        }
        if !linalg::is_finite(&m) || !u.iter().all(|v| v.is_finite()) || !c.is_finite() {
            return Err(Error::InvalidInput("non-finite Hamiltonian coefficients".into()));
        }
        Ok(Self { m: symmetrize(&m), u, c })
    }

    pub fn homogeneous(m: DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        Self::new(m, DVector::zeros(d), 0.0)
    }

    pub fn zero(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(2 * n, 2 * n),
            u: DVector::zeros(2 * n),
            c: 0.0,
        }
    }

    /// `p^2 / 2m`.
    pub fn free(mass: f64) -> Self {
        Self {
            m: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0 / mass]),
            u: DVector::zeros(2),
            c: 0.0,
        }
    }

    /// `p^2 / 2m + m omega^2 x^2 / 2`.
    pub fn oscillator(mass: f64, omega: f64) -> Self {
        Self {
            m: DMatrix::from_row_slice(2, 2, &[mass * omega * omega, 0.0, 0.0, 1.0 / mass]),
            u: DVector::zeros(2),
            c: 0.0,
        }
    }

    pub fn with_linear(mut self, u: DVector<f64>) -> Result<Self> {
        if u.len() != self.u.len() {
            return Err(Error::InvalidDimension("linear term length mismatch".into()));
        }
        self.u = u;
        Ok(self)
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn quadratic_part(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn linear_part(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

impl GeneralHamiltonian for QuadraticHamiltonian {
    fn dof(&self) -> usize {
        self.m.nrows() / 2
    }
    fn value(&self, z: &DVector<f64>, _t: f64) -> f64 {
        0.5 * z.dot(&(&self.m * z)) + self.u.dot(z) + self.c
    }
    fn gradient(&self, z: &DVector<f64>, _t: f64) -> DVector<f64> {
        &self.m * z + &self.u
    }
    fn hessian(&self, _z: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        self.m.clone()
    }
}

#[derive(Serialize, Deserialize)]
struct QuadraticRepr {
    #[serde(with = "crate::linalg::rows_serde")]
    m: DMatrix<f64>,
    #[serde(with = "crate::linalg::vec_serde")]
    u: DVector<f64>,
    c: f64,
}

impl TryFrom<QuadraticRepr> for QuadraticHamiltonian {
    type Error = Error;
    fn try_from(r: QuadraticRepr) -> Result<Self> {
        QuadraticHamiltonian::new(r.m, r.u, r.c)
    }
}

impl From<QuadraticHamiltonian> for QuadraticRepr {
    fn from(h: QuadraticHamiltonian) -> Self {
        QuadraticRepr { m: h.m, u: h.u, c: h.c }
    }
}

/// `z -> S z + d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSymplecticMap {
    pub linear: SymplecticMatrix,
    #[serde(with = "crate::linalg::vec_serde")]
    pub translation: DVector<f64>,
}

impl AffineSymplecticMap {
    pub fn identity(n: usize) -> Self {
        Self {
            linear: SymplecticMatrix::identity(n),
            translation: DVector::zeros(2 * n),
        }
    }

    pub fn new(linear: SymplecticMatrix, translation: DVector<f64>) -> Result<Self> {
        if translation.len() != 2 * linear.dof() {
            return Err(Error::InvalidDimension("translation length mismatch".into()));
        }
        Ok(Self { linear, translation })
    }

    pub fn dof(&self) -> usize {
        self.linear.dof()
    }

    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        self.linear.matrix() * z + &self.translation
    }

    pub fn apply_point(&self, z: &PhasePoint) -> PhasePoint {
        PhasePoint::from_vector(&self.apply(&z.to_vector())).expect("same dimension")
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AffineSymplecticMap) -> AffineSymplecticMap {
        AffineSymplecticMap {
            linear: self.linear.compose(&other.linear),
            translation: self.linear.matrix() * &other.translation + &self.translation,
        }
    }
}

/// Exact time-`t` flow of `z' = J (M z + u)`.
///
/// The translation comes from the augmented exponential of
/// `t [[J M, J u], [0, 0]]`, which stays valid when `J M` is singular.
pub fn quadratic_flow(h: &QuadraticHamiltonian, t: f64) -> AffineSymplecticMap {
    let n = h.dof();
    let d = 2 * n;
    let j = j_matrix(n);
    let jm = &j * &h.m;
    let ju = &j * &h.u;
    let mut aug = DMatrix::zeros(d + 1, d + 1);
    aug.view_mut((0, 0), (d, d)).copy_from(&(jm * t));
    aug.view_mut((0, d), (d, 1)).copy_from(&(ju * t));
    let e = matrix_exponential(&aug).expect("finite by construction");
    let s = e.view((0, 0), (d, d)).into_owned();
    let translation = e.view((0, d), (d, 1)).into_owned().column(0).into_owned();
    AffineSymplecticMap {
        linear: SymplecticMatrix::from_trusted(s),
        translation,
    }
}

/// Exact evolution of the averages `<x>, <p>` under a quadratic Hamiltonian:
/// the classical flow applied to the initial means.
pub fn ehrenfest_classical(h: &QuadraticHamiltonian, mean0: &PhasePoint, t: f64) -> PhasePoint {
    quadratic_flow(h, t).apply_point(mean0)
}

/// Second-order Taylor expansion of `H(., t)` about `zc`, written as a
/// quadratic Hamiltonian in `z`.
pub fn taylor_quadratic<H: GeneralHamiltonian + ?Sized>(h: &H, zc: &PhasePoint, t: f64) -> QuadraticHamiltonian {
    let z = zc.to_vector();
    taylor_at(h, &z, t)
}

pub(crate) fn taylor_at<H: GeneralHamiltonian + ?Sized>(h: &H, z: &DVector<f64>, t: f64) -> QuadraticHamiltonian {
    let value = h.value(z, t);
    let grad = h.gradient(z, t);
    let hess = symmetrize(&h.hessian(z, t));
    let hz = &hess * z;
    let u = &grad - &hz;
    let c = value - grad.dot(z) + 0.5 * z.dot(&hz);
    QuadraticHamiltonian { m: hess, u, c }
}

/// A sampled phase-space trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Sample times; strictly monotone in the direction of integration.
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    /// `max |H(z_t) - H(z_0)|` over the samples; `None` for time-dependent `H`.
    pub energy_drift: Option<f64>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &PhasePoint {
        self.points.last().expect("trajectories hold at least one sample")
    }
}

fn step_count(total: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    if !total.is_finite() {
        return Err(Error::InvalidInput(format!("horizon must be finite, got {total}")));
    }
    if total == 0.0 {
        return Ok(0);
    }
    Ok(((total.abs() / dt) - 1e-9).ceil().max(1.0) as usize)
}

fn rk4_step(f: &impl Fn(f64, &DVector<f64>) -> DVector<f64>, t: f64, y: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn check_dof<H: GeneralHamiltonian + ?Sized>(h: &H, z0: &PhasePoint) -> Result<()> {
    if h.dof() != z0.dof() {
        return Err(Error::InvalidDimension(format!(
            "Hamiltonian has {} degrees of freedom, initial point {}",
            h.dof(),
            z0.dof()
        )));
    }
    Ok(())
}

/// Integrates `z' = J grad H(z, t)` from `t = 0` to `total` with classic RK4
/// at a fixed step no larger than `dt` (the step is shrunk so the last sample
/// lands on `total`). Negative horizons integrate backward.
pub fn classical_trajectory<H: GeneralHamiltonian + ?Sized>(
    h: &H,
    z0: &PhasePoint,
    total: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_dof(h, z0)?;
    let steps = step_count(total, dt)?;
    let n = z0.dof();
    let j = j_matrix(n);
    let rhs = |t: f64, z: &DVector<f64>| &j * h.gradient(z, t);

    let mut z = z0.to_vector();
    let e0 = h.value(&z, 0.0);
    let mut drift: f64 = 0.0;
    let mut times = vec![0.0];
    let mut points = vec![z0.clone()];
    let step = if steps == 0 { 0.0 } else { total / steps as f64 };
    for k in 0..steps {
        let t = k as f64 * step;
        let next = rk4_step(&rhs, t, &z, step);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { last_valid_time: t });
        }
        z = next;
        let t_next = if k + 1 == steps { total } else { (k + 1) as f64 * step };
        drift = drift.max((h.value(&z, t_next) - e0).abs());
        times.push(t_next);
        points.push(PhasePoint::from_vector(&z)?);
    }
    Ok(Trajectory {
        times,
        points,
        energy_drift: h.is_autonomous().then_some(drift),
    })
}

/// One sample of a variational flow: the affine map `z -> S_t (z - z0) + z_t`
/// that linearizes the Hamiltonian flow about the trajectory through `z0`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalSample {
    pub time: f64,
    pub origin: DVector<f64>,
    pub center: DVector<f64>,
    pub linear: SymplecticMatrix,
}

impl VariationalSample {
    /// Maps `origin` to `center` exactly.
    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        self.linear.matrix() * (z - &self.origin) + &self.center
    }

    pub fn affine_map(&self) -> AffineSymplecticMap {
        AffineSymplecticMap {
            translation: &self.center - self.linear.matrix() * &self.origin,
            linear: self.linear.clone(),
        }
    }
}

/// Center, variational matrix and accumulated action `∫ (p·ẋ - H) dt`
/// integrated together.
#[derive(Debug, Clone)]
pub(crate) struct LinearizedState {
    pub time: f64,
    pub center: DVector<f64>,
    pub linear: DMatrix<f64>,
    pub action: f64,
}

/// RK4 on the joint system `z' = J grad H`, `S' = J H''(z) S`,
/// `a' = p·∂H/∂p - H`. Each right-hand side evaluation re-expands `H` to
/// second order about the stage point.
pub(crate) fn integrate_linearized<H: GeneralHamiltonian + ?Sized>(
    h: &H,
    z0: &DVector<f64>,
    total: f64,
    dt: f64,
) -> Result<Vec<LinearizedState>> {
    let steps = step_count(total, dt)?;
    let d = z0.len();
    let n = d / 2;
    let j = j_matrix(n);
    let size = d + d * d + 1;
    let rhs = |t: f64, y: &DVector<f64>| {
        let z = y.rows(0, d).into_owned();
        let s = DMatrix::from_column_slice(d, d, &y.as_slice()[d..d + d * d]);
        let local = taylor_at(h, &z, t);
        // At the expansion point the local model reproduces grad H and H''.
        let field = &local.m * &z + &local.u;
        let zdot = &j * &field;
        let sdot = &j * &local.m * s;
        let p = z.rows(n, n);
        let xdot = zdot.rows(0, n);
        let lagrangian = p.dot(&xdot) - local.value(&z, t);
        let mut out = DVector::zeros(size);
        out.rows_mut(0, d).copy_from(&zdot);
        out.as_mut_slice()[d..d + d * d].copy_from_slice(sdot.as_slice());
        out[size - 1] = lagrangian;
        out
    };

    let mut y = DVector::zeros(size);
    y.rows_mut(0, d).copy_from(z0);
    let ident = DMatrix::<f64>::identity(d, d);
    y.as_mut_slice()[d..d + d * d].copy_from_slice(ident.as_slice());

    let unpack = |t: f64, y: &DVector<f64>| LinearizedState {
        time: t,
        center: y.rows(0, d).into_owned(),
        linear: DMatrix::from_column_slice(d, d, &y.as_slice()[d..d + d * d]),
        action: y[size - 1],
    };

    let step = if steps == 0 { 0.0 } else { total / steps as f64 };
    let mut out = Vec::with_capacity(steps + 1);
    out.push(unpack(0.0, &y));
    for k in 0..steps {
        let t = k as f64 * step;
        let next = rk4_step(&rhs, t, &y, step);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { last_valid_time: t });
        }
        y = next;
        let t_next = if k + 1 == steps { total } else { (k + 1) as f64 * step };
        out.push(unpack(t_next, &y));
    }
    Ok(out)
}

/// Integrates the center trajectory together with `S' = J H''(z_t, t) S`,
/// `S(0) = I`, returning one affine map per sample time. Symplecticity of
/// `S_t` is not imposed; its defect is observable through
/// [`SymplecticMatrix::defect`].
pub fn variational_flow<H: GeneralHamiltonian + ?Sized>(
    h: &H,
    z0: &PhasePoint,
    total: f64,
    dt: f64,
) -> Result<Vec<VariationalSample>> {
    check_dof(h, z0)?;
    let origin = z0.to_vector();
    Ok(integrate_linearized(h, &origin, total, dt)?
        .into_iter()
        .map(|s| VariationalSample {
            time: s.time,
            origin: origin.clone(),
            center: s.center,
            linear: SymplecticMatrix::from_trusted(s.linear),
        })
        .collect())
}

/// Built-in 1- and 2-dof Hamiltonians addressable by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum NamedHamiltonian {
    /// `p^2 / 2m`
    Free { m: f64 },
    /// `p^2 / 2m + m ω^2 x^2 / 2`
    Oscillator { m: f64, omega: f64 },
    /// `p^2 / 2m - k cos x`
    Pendulum { m: f64, k: f64 },
    /// `p^2 / 2m + g x^4`
    Quartic { m: f64, g: f64 },
    /// `(p1^2 + p2^2 + x1^2 + x2^2) / 2 + λ (x1^2 x2 - x2^3 / 3)`
    HenonHeiles { lambda: f64 },
}

impl NamedHamiltonian {
    pub fn name(&self) -> &'static str {
        match self {
            NamedHamiltonian::Free { .. } => "free",
            NamedHamiltonian::Oscillator { .. } => "oscillator",
            NamedHamiltonian::Pendulum { .. } => "pendulum",
            NamedHamiltonian::Quartic { .. } => "quartic",
            NamedHamiltonian::HenonHeiles { .. } => "henon-heiles",
        }
    }

    pub fn mass(&self) -> f64 {
        match *self {
            NamedHamiltonian::Free { m }
            | NamedHamiltonian::Oscillator { m, .. }
            | NamedHamiltonian::Pendulum { m, .. }
            | NamedHamiltonian::Quartic { m, .. } => m,
            NamedHamiltonian::HenonHeiles { .. } => 1.0,
        }
    }

    /// The exact quadratic form, for the quadratic members of the family.
    pub fn as_quadratic(&self) -> Option<QuadraticHamiltonian> {
        match *self {
            NamedHamiltonian::Free { m } => Some(QuadraticHamiltonian::free(m)),
            NamedHamiltonian::Oscillator { m, omega } => Some(QuadraticHamiltonian::oscillator(m, omega)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NamedHamiltonian::Free { m } => m > 0.0,
            NamedHamiltonian::Oscillator { m, omega } => m > 0.0 && omega > 0.0,
            NamedHamiltonian::Pendulum { m, k } => m > 0.0 && k.is_finite(),
            NamedHamiltonian::Quartic { m, g } => m > 0.0 && g.is_finite(),
            NamedHamiltonian::HenonHeiles { lambda } => lambda.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid parameters for {self:?}")))
        }
    }
}

impl GeneralHamiltonian for NamedHamiltonian {
    fn dof(&self) -> usize {
        match self {
            NamedHamiltonian::HenonHeiles { .. } => 2,
            _ => 1,
        }
    }

    fn value(&self, z: &DVector<f64>, _t: f64) -> f64 {
        match *self {
            NamedHamiltonian::Free { m } => z[1] * z[1] / (2.0 * m),
            NamedHamiltonian::Oscillator { m, omega } => {
                z[1] * z[1] / (2.0 * m) + 0.5 * m * omega * omega * z[0] * z[0]
            }
            NamedHamiltonian::Pendulum { m, k } => z[1] * z[1] / (2.0 * m) - k * z[0].cos(),
            NamedHamiltonian::Quartic { m, g } => z[1] * z[1] / (2.0 * m) + g * z[0].powi(4),
            NamedHamiltonian::HenonHeiles { lambda } => {
                let (x1, x2, p1, p2) = (z[0], z[1], z[2], z[3]);
                0.5 * (p1 * p1 + p2 * p2 + x1 * x1 + x2 * x2) + lambda * (x1 * x1 * x2 - x2.powi(3) / 3.0)
            }
        }
    }

    fn gradient(&self, z: &DVector<f64>, _t: f64) -> DVector<f64> {
        match *self {
            NamedHamiltonian::Free { m } => DVector::from_vec(vec![0.0, z[1] / m]),
            NamedHamiltonian::Oscillator { m, omega } => DVector::from_vec(vec![m * omega * omega * z[0], z[1] / m]),
            NamedHamiltonian::Pendulum { m, k } => DVector::from_vec(vec![k * z[0].sin(), z[1] / m]),
            NamedHamiltonian::Quartic { m, g } => DVector::from_vec(vec![4.0 * g * z[0].powi(3), z[1] / m]),
            NamedHamiltonian::HenonHeiles { lambda } => {
                let (x1, x2, p1, p2) = (z[0], z[1], z[2], z[3]);
                DVector::from_vec(vec![
                    x1 + 2.0 * lambda * x1 * x2,
                    x2 + lambda * (x1 * x1 - x2 * x2),
                    p1,
                    p2,
                ])
            }
        }
    }

    fn hessian(&self, z: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        match *self {
            NamedHamiltonian::Free { m } => DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0 / m]),
            NamedHamiltonian::Oscillator { m, omega } => {
                DMatrix::from_row_slice(2, 2, &[m * omega * omega, 0.0, 0.0, 1.0 / m])
            }
            NamedHamiltonian::Pendulum { m, k } => DMatrix::from_row_slice(2, 2, &[k * z[0].cos(), 0.0, 0.0, 1.0 / m]),
            NamedHamiltonian::Quartic { m, g } => {
                DMatrix::from_row_slice(2, 2, &[12.0 * g * z[0] * z[0], 0.0, 0.0, 1.0 / m])
            }
            NamedHamiltonian::HenonHeiles { lambda } => {
                let (x1, x2) = (z[0], z[1]);
                let mut h = DMatrix::identity(4, 4);
                h[(0, 0)] = 1.0 + 2.0 * lambda * x2;
                h[(0, 1)] = 2.0 * lambda * x1;
                h[(1, 0)] = 2.0 * lambda * x1;
                h[(1, 1)] = 1.0 - 2.0 * lambda * x2;
                h
            }
        }
    }
}

/// Wraps a scalar function `H(z, t)` and supplies its gradient and Hessian
/// by central differences.
pub struct FiniteDifference<F> {
    f: F,
    dof: usize,
    scale: f64,
    autonomous: bool,
}

impl<F: Fn(&DVector<f64>, f64) -> f64 + Sync> FiniteDifference<F> {
    /// `scale` is the typical coordinate magnitude; steps are proportional to it.
    pub fn new(dof: usize, scale: f64, f: F) -> Self {
        Self {
            f,
            dof,
            scale,
            autonomous: true,
        }
    }

    pub fn time_dependent(mut self) -> Self {
        self.autonomous = false;
        self
    }

    fn step(&self, zi: f64, power: f64) -> f64 {
        f64::EPSILON.powf(power) * self.scale.max(zi.abs())
    }
}

impl<F: Fn(&DVector<f64>, f64) -> f64 + Sync> GeneralHamiltonian for FiniteDifference<F> {
    fn dof(&self) -> usize {
        self.dof
    }

    fn value(&self, z: &DVector<f64>, t: f64) -> f64 {
        (self.f)(z, t)
    }

    fn gradient(&self, z: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut g = DVector::zeros(z.len());
        let mut probe = z.clone();
        for i in 0..z.len() {
            let h = self.step(z[i], 1.0 / 3.0);
            probe[i] = z[i] + h;
            let fp = (self.f)(&probe, t);
            probe[i] = z[i] - h;
            let fm = (self.f)(&probe, t);
            probe[i] = z[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    fn hessian(&self, z: &DVector<f64>, t: f64) -> DMatrix<f64> {
        let d = z.len();
        let mut hess = DMatrix::zeros(d, d);
        let f0 = (self.f)(z, t);
        let mut probe = z.clone();
        for i in 0..d {
            let hi = self.step(z[i], 0.25);
            probe[i] = z[i] + hi;
            let fp = (self.f)(&probe, t);
            probe[i] = z[i] - hi;
            let fm = (self.f)(&probe, t);
            probe[i] = z[i];
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
            for k in 0..i {
                let hk = self.step(z[k], 0.25);
                let mut eval = |si: f64, sk: f64| {
                    probe[i] = z[i] + si * hi;
                    probe[k] = z[k] + sk * hk;
                    let v = (self.f)(&probe, t);
                    probe[i] = z[i];
                    probe[k] = z[k];
                    v
                };
                let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * hi * hk);
                hess[(i, k)] = v;
                hess[(k, i)] = v;
            }
        }
        hess
    }

    fn is_autonomous(&self) -> bool {
        self.autonomous
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::symplectic::is_symplectic;
    use std::f64::consts::PI;

    fn rotation(t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()])
    }

    #[test]
    fn free_particle_flow_is_a_shear() {
        for &(m, t) in &[(1.0, 0.3), (2.5, -1.2), (0.7, 4.0)] {
            let flow = quadratic_flow(&QuadraticHamiltonian::free(m), t);
            let expected = DMatrix::from_row_slice(2, 2, &[1.0, t / m, 0.0, 1.0]);
            assert!(max_abs(&(flow.linear.matrix() - expected)) < 1e-15);
            assert_eq!(flow.translation, DVector::zeros(2));
        }
    }

    #[test]
    fn oscillator_flow_is_a_rotation() {
        for &t in &[0.1, 1.0, PI / 2.0, 3.0, 7.5] {
            let flow = quadratic_flow(&QuadraticHamiltonian::oscillator(1.0, 1.0), t);
            assert!(max_abs(&(flow.linear.matrix() - rotation(t))) < 1e-13, "t={t}");
            assert_eq!(flow.translation, DVector::zeros(2));
        }
    }

    #[test]
    fn zero_time_flow_is_identity() {
        let h = QuadraticHamiltonian::oscillator(2.0, 3.0)
            .with_linear(DVector::from_vec(vec![0.3, -1.0]))
            .unwrap();
        let flow = quadratic_flow(&h, 0.0);
        assert_eq!(flow, AffineSymplecticMap::identity(1));
    }

    #[test]
    fn linear_term_drives_translation_for_singular_generator() {
        // H = p^2/2 + F x: x(t) = x0 + p0 t - F t^2/2, p(t) = p0 - F t.
        let force = 0.8;
        let h = QuadraticHamiltonian::free(1.0)
            .with_linear(DVector::from_vec(vec![force, 0.0]))
            .unwrap();
        let t = 1.5;
        let out = quadratic_flow(&h, t).apply_point(&PhasePoint::one(0.2, 1.0));
        assert!((out.x[0] - (0.2 + t - 0.5 * force * t * t)).abs() < 1e-14);
        assert!((out.p[0] - (1.0 - force * t)).abs() < 1e-14);
    }

    #[test]
    fn ehrenfest_classical_examples() {
        let osc = QuadraticHamiltonian::oscillator(1.0, 1.0);
        let z = ehrenfest_classical(&osc, &PhasePoint::one(1.0, 0.0), PI / 2.0);
        assert!(z.x[0].abs() < 1e-15 && (z.p[0] + 1.0).abs() < 1e-15);
        let z = ehrenfest_classical(&QuadraticHamiltonian::free(1.0), &PhasePoint::one(0.0, 1.0), 2.0);
        assert_eq!((z.x[0], z.p[0]), (2.0, 1.0));
        let z = ehrenfest_classical(&osc, &PhasePoint::one(0.0, 0.0), 12.3);
        assert_eq!((z.x[0], z.p[0]), (0.0, 0.0));
    }

    #[test]
    fn oscillator_trajectory_closes_after_one_period() {
        let h = NamedHamiltonian::Oscillator { m: 1.0, omega: 1.0 };
        let traj = classical_trajectory(&h, &PhasePoint::one(1.0, 0.0), 2.0 * PI, 1e-3).unwrap();
        let end = traj.endpoint();
        assert!((end.x[0] - 1.0).abs() < 1e-9 && end.p[0].abs() < 1e-9);
        assert_eq!(*traj.times.last().unwrap(), 2.0 * PI);
        assert_eq!(traj.times.len(), traj.points.len());
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn free_drift_is_exact() {
        let h = NamedHamiltonian::Free { m: 1.0 };
        let traj = classical_trajectory(&h, &PhasePoint::one(0.0, 1.0), 3.0, 1e-2).unwrap();
        let end = traj.endpoint();
        assert!((end.x[0] - 3.0).abs() < 1e-12 && (end.p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_integration_retraces() {
        let h = NamedHamiltonian::Pendulum { m: 1.0, k: 1.0 };
        let z0 = PhasePoint::one(0.4, 0.3);
        let fwd = classical_trajectory(&h, &z0, 2.0, 1e-3).unwrap();
        let back = classical_trajectory(&h, fwd.endpoint(), -2.0, 1e-3).unwrap();
        assert!((back.endpoint().x[0] - 0.4).abs() < 1e-10);
        assert!(back.times.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn critical_point_is_stationary() {
        let h = NamedHamiltonian::Pendulum { m: 1.0, k: 2.0 };
        let traj = classical_trajectory(&h, &PhasePoint::one(0.0, 0.0), 5.0, 0.1).unwrap();
        assert!(traj.points.iter().all(|z| z.x[0] == 0.0 && z.p[0] == 0.0));
        assert_eq!(traj.energy_drift, Some(0.0));
    }

    #[test]
    fn trajectory_rejects_bad_steps_and_reports_blow_up() {
        let h = NamedHamiltonian::Free { m: 1.0 };
        assert!(classical_trajectory(&h, &PhasePoint::one(0.0, 1.0), 1.0, 0.0).is_err());
        // x' = p, p' = -4 g x^3 with g < 0 escapes to infinity in finite time.
        let h = NamedHamiltonian::Quartic { m: 1.0, g: -1.0 };
        let err = classical_trajectory(&h, &PhasePoint::one(2.0, 10.0), 50.0, 0.05).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn taylor_examples() {
        let h = QuadraticHamiltonian::oscillator(2.0, 0.5)
            .with_linear(DVector::from_vec(vec![0.1, -0.2]))
            .unwrap()
            .with_constant(0.7);
        let t = taylor_quadratic(&h, &PhasePoint::one(1.3, -0.4), 0.0);
        assert!(max_abs(&(t.quadratic_part() - h.quadratic_part())) < 1e-15);
        assert!((t.linear_part() - h.linear_part()).amax() < 1e-15);
        assert!((t.constant() - h.constant()).abs() < 1e-15);

        // x^4 about x = 1: 12 (x-1)^2 / 2 + 4 (x-1) + 1
        let quartic = NamedHamiltonian::Quartic { m: 1.0, g: 1.0 };
        let t = taylor_quadratic(&quartic, &PhasePoint::one(1.0, 0.0), 0.0);
        assert_eq!(t.quadratic_part()[(0, 0)], 12.0);
        assert_eq!(t.linear_part()[0], -8.0);
        assert_eq!(t.linear_part()[1], 0.0);
        assert_eq!(t.constant(), 3.0);
    }

    #[test]
    fn taylor_matches_value_gradient_hessian_at_center() {
        let h = NamedHamiltonian::HenonHeiles { lambda: 0.8 };
        let zc = PhasePoint::new(vec![0.3, -0.2], vec![0.1, 0.5]).unwrap();
        let z = zc.to_vector();
        let t = taylor_quadratic(&h, &zc, 0.0);
        assert!((t.value(&z, 0.0) - h.value(&z, 0.0)).abs() < 1e-15);
        assert!((t.gradient(&z, 0.0) - h.gradient(&z, 0.0)).amax() < 1e-15);
        assert!(max_abs(&(t.hessian(&z, 0.0) - h.hessian(&z, 0.0))) == 0.0);
    }

    #[test]
    fn variational_flow_of_quadratic_matches_exact_flow() {
        let h = QuadraticHamiltonian::new(
            DMatrix::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.8]),
            DVector::from_vec(vec![0.2, -0.1]),
            0.0,
        )
        .unwrap();
        let z0 = PhasePoint::one(0.5, -0.3);
        let samples = variational_flow(&h, &z0, 2.0, 1e-3).unwrap();
        let last = samples.last().unwrap();
        let exact = quadratic_flow(&h, 2.0);
        assert!(max_abs(&(last.linear.matrix() - exact.linear.matrix())) < 1e-8);
        assert_eq!(last.apply(&z0.to_vector()), last.center);
    }

    #[test]
    fn variational_flow_stays_symplectic_for_pendulum() {
        let h = NamedHamiltonian::Pendulum { m: 1.0, k: 1.0 };
        let samples = variational_flow(&h, &PhasePoint::one(1.0, 0.5), 10.0, 1e-3).unwrap();
        let worst = samples.iter().map(|s| s.linear.defect()).fold(0.0, f64::max);
        assert!(worst <= 1e-6, "defect {worst:e}");
        assert!(is_symplectic(samples.last().unwrap().linear.matrix(), 1e-6).unwrap());
    }

    #[test]
    fn variational_flow_at_zero_time_is_identity() {
        let h = NamedHamiltonian::Pendulum { m: 1.0, k: 1.0 };
        let samples = variational_flow(&h, &PhasePoint::one(1.0, 0.5), 0.0, 1e-3).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].linear, SymplecticMatrix::identity(1));
    }

    #[test]
    fn finite_difference_adapter_matches_analytic_derivatives() {
        let exact = NamedHamiltonian::HenonHeiles { lambda: 1.0 };
        let fd = FiniteDifference::new(2, 1.0, |z: &DVector<f64>, t| exact.value(z, t));
        for probe in [[0.1, 0.2, -0.3, 0.4], [0.5, -0.4, 0.0, 1.0]] {
            let z = DVector::from_row_slice(&probe);
            assert!((fd.gradient(&z, 0.0) - exact.gradient(&z, 0.0)).amax() < 1e-9);
            assert!(max_abs(&(fd.hessian(&z, 0.0) - exact.hessian(&z, 0.0))) < 1e-5);
        }
    }

    #[test]
    fn named_hamiltonian_json_schema() {
        let h: NamedHamiltonian = serde_json::from_str(r#"{"name":"quartic","m":1.0,"g":0.1}"#).unwrap();
        assert_eq!(h, NamedHamiltonian::Quartic { m: 1.0, g: 0.1 });
        let s = serde_json::to_string(&NamedHamiltonian::HenonHeiles { lambda: 1.0 }).unwrap();
        assert_eq!(s, r#"{"name":"henon-heiles","lambda":1.0}"#);
    }
}
