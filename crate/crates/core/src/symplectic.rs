//! Symplectic linear algebra on `R^{2n}`.
//!
//! Coordinates are always stored as `(x_1..x_n, p_1..p_n)`; the conjugate pair
//! `j` occupies indices `(j, n + j)`, matching the block form of the standard
//! symplectic matrix `J = (0, I; -I, 0)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, max_abs};

/// Default tolerance on `max |S^T J S - J|` for [`SymplecticMatrix`].
pub const DEFAULT_SYMPLECTIC_TOL: f64 = 1e-10;

/// A point `z = (x, p)` of phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != p.len() {
            return Err(Error::InvalidDimension(format!(
                "position and momentum must have equal non-zero length, got {} and {}",
                x.len(),
                p.len()
            )));
        }
        Ok(Self { x, p })
    }

    /// One degree of freedom.
    pub fn one(x: f64, p: f64) -> Self {
        Self { x: vec![x], p: vec![p] }
    }

    pub fn dof(&self) -> usize {
        self.x.len()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.dof(), self.x.iter().chain(self.p.iter()).copied())
    }

    pub fn from_vector(z: &DVector<f64>) -> Result<Self> {
        if z.len() == 0 || z.len() % 2 != 0 {
            return Err(Error::InvalidDimension(format!(
                "phase-space vector must have even non-zero length, got {}",
                z.len()
            )));
        }
        let n = z.len() / 2;
        Ok(Self {
            x: z.rows(0, n).iter().copied().collect(),
            p: z.rows(n, n).iter().copied().collect(),
        })
    }
}

/// The standard symplectic matrix `J = (0, I; -I, 0)` with `n x n` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardForm {
    matrix: DMatrix<f64>,
}

impl StandardForm {
    pub fn dof(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

pub fn standard_symplectic_form(n: usize) -> Result<StandardForm> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    Ok(StandardForm { matrix: j_matrix(n) })
}

/// `J` for `n >= 1` degrees of freedom, without the dimension check.
pub(crate) fn j_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(k, n + k)] = 1.0;
        j[(n + k, k)] = -1.0;
    }
    j
}

/// `max |S^T J S - J|`.
pub fn symplectic_defect(s: &DMatrix<f64>) -> Result<f64> {
    let n = linalg::require_even_square(s, "S")?;
    let j = j_matrix(n);
    Ok(max_abs(&(s.transpose() * &j * s - j)))
}

pub fn is_symplectic(s: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    Ok(symplectic_defect(s)? <= tol)
}

/// A `2n x 2n` matrix with `S^T J S = J` (checked at construction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymplecticRepr", into = "SymplecticRepr")]
pub struct SymplecticMatrix {
    entries: DMatrix<f64>,
    dof: usize,
}

impl SymplecticMatrix {
    /// Validates against [`DEFAULT_SYMPLECTIC_TOL`].
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(entries, DEFAULT_SYMPLECTIC_TOL)
    }

    pub fn with_tolerance(entries: DMatrix<f64>, tol: f64) -> Result<Self> {
        let defect = symplectic_defect(&entries)?;
        if !(defect <= tol) {
            return Err(Error::InvalidInput(format!(
                "matrix is not symplectic: defect {defect:e} exceeds {tol:e}"
            )));
        }
        let det = entries.determinant();
        if (det - 1.0).abs() > 1e-8 * det.abs().max(1.0) {
            return Err(Error::InvalidInput(format!("symplectic matrix has determinant {det}")));
        }
        Ok(Self::from_trusted(entries))
    }

    pub(crate) fn from_trusted(entries: DMatrix<f64>) -> Self {
        let dof = entries.nrows() / 2;
        Self { entries, dof }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_trusted(DMatrix::identity(2 * n, 2 * n))
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn defect(&self) -> f64 {
        symplectic_defect(&self.entries).expect("validated dimension")
    }

    pub fn compose(&self, other: &SymplecticMatrix) -> SymplecticMatrix {
        Self::from_trusted(&self.entries * &other.entries)
    }

    /// `S^{-1} = -J S^T J`, exact for symplectic `S`.
    pub fn inverse(&self) -> SymplecticMatrix {
        let j = j_matrix(self.dof);
        Self::from_trusted(-(&j * self.entries.transpose() * &j))
    }

    /// Blocks `(A, B, C, D)` of `S = (A, B; C, D)`.
    pub fn blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = self.dof;
        let s = &self.entries;
        (
            s.view((0, 0), (n, n)).into_owned(),
            s.view((0, n), (n, n)).into_owned(),
            s.view((n, 0), (n, n)).into_owned(),
            s.view((n, n), (n, n)).into_owned(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct SymplecticRepr {
    #[serde(with = "crate::linalg::rows_serde")]
    matrix: DMatrix<f64>,
}

impl TryFrom<SymplecticRepr> for SymplecticMatrix {
    type Error = Error;
    fn try_from(r: SymplecticRepr) -> Result<Self> {
        SymplecticMatrix::new(r.matrix)
    }
}

impl From<SymplecticMatrix> for SymplecticRepr {
    fn from(s: SymplecticMatrix) -> Self {
        SymplecticRepr { matrix: s.entries }
    }
}

/// Symmetric `2n x 2n` matrix with entries uniform in `[-1, 1]`, deterministic
/// in `(n, seed)`.
pub fn random_hamiltonian_generator(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 2 * n;
    let mut m = DMatrix::zeros(d, d);
    for r in 0..d {
        for c in r..d {
            let v: f64 = rng.random_range(-1.0..=1.0);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    m
}

/// `exp(J M)` for symmetric `M`.
pub fn symplectic_from_generator(m: &DMatrix<f64>) -> Result<SymplecticMatrix> {
    let n = linalg::require_even_square(m, "generator")?;
    linalg::require_symmetric(m, "generator")?;
    let s = matrix_exponential(&(j_matrix(n) * m))?;
    Ok(SymplecticMatrix::from_trusted(s))
}

pub fn random_symplectic(n: usize, seed: u64) -> Result<SymplecticMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    symplectic_from_generator(&random_hamiltonian_generator(n, seed))
}

/// The `n` positive numbers `lambda_j` such that the spectrum of `J M` is
/// `{+-i lambda_j}`, sorted ascending.
///
/// Computed from the singular values of the antisymmetric matrix
/// `M^{1/2} J M^{1/2}`, which come in equal pairs.
pub fn symplectic_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = linalg::require_even_square(m, "M")?;
    if !linalg::is_finite(m) {
        return Err(Error::InvalidInput("M has non-finite entries".into()));
    }
    linalg::require_symmetric(m, "M")?;
    let (values, vectors) = linalg::require_positive_definite(m, "M")?;
    let root = linalg::sym_function(&values, &vectors, f64::sqrt);
    let k = &root * j_matrix(n) * &root;
    let mut sv: Vec<f64> = k.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let mut out: Vec<f64> = sv.chunks(2).map(|pair| 0.5 * (pair[0] + pair[1])).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 1-norm thresholds below which the degree-m diagonal Padé approximant is
// accurate to unit roundoff.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^A` by scaling and squaring with a diagonal Padé approximant.
pub fn matrix_exponential(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = linalg::require_square(a, "A")?;
    if !linalg::is_finite(a) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let ident = DMatrix::<f64>::identity(d, d);
    let norm = one_norm(a);
    if norm == 0.0 {
        return Ok(ident);
    }

    for &(degree, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(a, coeffs, &ident);
        }
    }

    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);
    let mut r = pade13(&scaled, &ident)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = &v + &u;
    let q = &v - &u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::DegenerateMatrix("singular Padé denominator".into()))
}

fn pade_low(a: &DMatrix<f64>, b: &[f64], ident: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a2 = a * a;
    // even powers A^0, A^2, A^4, ...
    let mut powers = vec![ident.clone()];
    for k in 1..b.len() / 2 {
        let next = &powers[k - 1] * &a2;
        powers.push(next);
    }
    let mut u_inner = DMatrix::zeros(a.nrows(), a.ncols());
    let mut v = DMatrix::zeros(a.nrows(), a.ncols());
    for (k, pw) in powers.iter().enumerate() {
        u_inner += pw * b[2 * k + 1];
        v += pw * b[2 * k];
    }
    solve_pade(a * u_inner, v)
}

fn pade13(a: &DMatrix<f64>, ident: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let b = &PADE13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_high = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (u_high + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + ident * b[1]);
    let v_high = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_high + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + ident * b[0];
    solve_pade(u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mat(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, data.len() / rows, data)
    }

    #[test]
    fn standard_form_blocks() {
        let j = standard_symplectic_form(1).unwrap();
        assert_eq!(j.matrix(), &mat(2, &[0.0, 1.0, -1.0, 0.0]));
        let j2 = j.matrix() * j.matrix();
        assert_eq!(j2, -DMatrix::<f64>::identity(2, 2));

        let j = standard_symplectic_form(2).unwrap().into_matrix();
        assert_eq!(
            j,
            mat(
                4,
                &[
                    0.0, 0.0, 1.0, 0.0, //
                    0.0, 0.0, 0.0, 1.0, //
                    -1.0, 0.0, 0.0, 0.0, //
                    0.0, -1.0, 0.0, 0.0,
                ]
            )
        );
        assert!(matches!(standard_symplectic_form(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn standard_form_identities_are_exact() {
        for n in 1..=4 {
            let j = standard_symplectic_form(n).unwrap().into_matrix();
            assert_eq!(&j * &j, -DMatrix::<f64>::identity(2 * n, 2 * n));
            assert_eq!(j.transpose(), -&j);
        }
    }

    #[test]
    fn symplectic_membership() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert!(is_symplectic(&id, 1e-12).unwrap());
        let j = j_matrix(1);
        assert!(is_symplectic(&j, 1e-12).unwrap());
        let two = id * 2.0;
        assert!(!is_symplectic(&two, 1e-12).unwrap());
        assert!(matches!(
            is_symplectic(&DMatrix::identity(3, 3), 1e-12),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn symplectic_matrix_rejects_non_members() {
        assert!(SymplecticMatrix::new(DMatrix::identity(2, 2) * 2.0).is_err());
        let s = SymplecticMatrix::new(mat(2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        assert_eq!(s.dof(), 1);
        let inv = s.inverse();
        assert_eq!(inv.matrix(), &mat(2, &[0.5, 0.0, 0.0, 2.0]));
    }

    #[test]
    fn zero_generator_gives_identity() {
        let s = symplectic_from_generator(&DMatrix::zeros(4, 4)).unwrap();
        assert_eq!(s.matrix(), &DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn random_symplectic_is_deterministic() {
        let a = random_symplectic(2, 7).unwrap();
        let b = random_symplectic(2, 7).unwrap();
        assert_eq!(a, b);
        let c = random_symplectic(2, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_symplectic_passes_membership() {
        for seed in 0..1000 {
            for n in 1..=3 {
                let s = random_symplectic(n, seed).unwrap();
                assert!(is_symplectic(s.matrix(), 1e-9).unwrap(), "n={n} seed={seed}");
            }
        }
    }

    #[test]
    fn exponential_closed_forms() {
        assert_eq!(matrix_exponential(&DMatrix::zeros(3, 3)).unwrap(), DMatrix::identity(3, 3));

        let t = PI / 2.0;
        let e = matrix_exponential(&(j_matrix(1) * t)).unwrap();
        let expected = mat(2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        assert!(max_abs(&(e - expected)) <= 1e-15);

        let (t, m) = (1.7, 0.6);
        let e = matrix_exponential(&mat(2, &[0.0, t / m, 0.0, 0.0])).unwrap();
        assert_eq!(e, mat(2, &[1.0, t / m, 0.0, 1.0]));

        assert!(matrix_exponential(&mat(1, &[f64::NAN])).is_err());
    }

    #[test]
    fn exponential_relative_accuracy_across_scales() {
        // e^{tJ} = cos t I + sin t J, exercised on every Padé degree and with
        // squaring.
        for &t in &[1e-3, 0.1, 0.5, 1.5, 3.0, 10.0, 40.0] {
            let e = matrix_exponential(&(j_matrix(1) * t)).unwrap();
            let expected = mat(2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
            let err = max_abs(&(e - expected));
            assert!(err <= 1e-12 * (1.0 + t), "t={t} err={err:e}");
        }
        // hyperbolic: diag(a, -a) generator
        for &a in &[0.01, 0.7, 2.0, 6.0] {
            let e = matrix_exponential(&mat(2, &[a, 0.0, 0.0, -a])).unwrap();
            assert!(((e[(0, 0)] - a.exp()) / a.exp()).abs() <= 1e-13);
            assert!(((e[(1, 1)] - (-a).exp()) / (-a).exp()).abs() <= 1e-13);
        }
    }

    #[test]
    fn symplectic_eigenvalue_fixtures() {
        let ev = symplectic_eigenvalues(&DMatrix::identity(2, 2)).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14);
        let (a, b) = (2.0_f64, 3.0_f64);
        let m = mat(2, &[1.0 / (a * a), 0.0, 0.0, 1.0 / (b * b)]);
        let ev = symplectic_eigenvalues(&m).unwrap();
        assert!((ev[0] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn symplectic_eigenvalue_errors() {
        let asym = mat(2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(symplectic_eigenvalues(&asym), Err(Error::InvalidInput(_))));
        let indefinite = mat(2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(symplectic_eigenvalues(&indefinite), Err(Error::DegenerateMatrix(_))));
        let singular = mat(2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(symplectic_eigenvalues(&singular), Err(Error::DegenerateMatrix(_))));
    }

    #[test]
    fn phase_point_vector_layout() {
        let z = PhasePoint::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(z.to_vector().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(PhasePoint::from_vector(&z.to_vector()).unwrap(), z);
        assert!(PhasePoint::new(vec![1.0], vec![]).is_err());
    }
}
