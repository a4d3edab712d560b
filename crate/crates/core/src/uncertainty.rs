//! Covariance matrices of phase-space ellipsoids and their uncertainty
//! certification: Robertson-Schrödinger inequalities, positivity of
//! `Σ + (iħ/2) J`, and the quantum-blob capacity threshold `πħ = h/2`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::Ellipsoid;
use crate::error::{Error, Result};
use crate::flows::AffineSymplecticMap;
use crate::geometry::{convex_hull_2d, hull_vertices, john_ellipsoid_certified, JohnEllipsoid, JohnOptions, PointCloud2D, Polytope};
use crate::linalg::{self, require_positive_definite, sorted_sym_eigen, sym_function};
use crate::symplectic::{j_matrix, symplectic_eigenvalues};
use crate::FORMAT_VERSION;

/// Relative tolerance of the positivity test: `psd_tol = 1e-10 |Σ|`.
pub const PSD_REL_TOL: f64 = 1e-10;

/// Relative slack on the blob threshold: `capacity >= πħ (1 - 1e-10)`.
pub const BLOB_REL_TOL: f64 = 1e-10;

/// Symmetric positive-definite `2n x 2n` covariance in `(x, p)` block form.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    sigma: DMatrix<f64>,
    n: usize,
}

impl CovarianceMatrix {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        let n = linalg::require_even_square(&sigma, "covariance")?;
        if !linalg::is_finite(&sigma) {
            return Err(Error::InvalidInput("non-finite covariance".into()));
        }
        linalg::require_symmetric(&sigma, "covariance")?;
        let sigma = linalg::symmetrize(&sigma);
        require_positive_definite(&sigma, "covariance")?;
        Ok(Self { sigma, n })
    }

    /// `s I` in dimension `2n`.
    pub fn scalar(n: usize, s: f64) -> Result<Self> {
        Self::new(DMatrix::identity(2 * n, 2 * n) * s)
    }

    pub fn dof(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    fn block(&self, r: usize, c: usize) -> DMatrix<f64> {
        self.sigma.view((r * self.n, c * self.n), (self.n, self.n)).into_owned()
    }

    pub fn sigma_xx(&self) -> DMatrix<f64> {
        self.block(0, 0)
    }

    pub fn sigma_xp(&self) -> DMatrix<f64> {
        self.block(0, 1)
    }

    pub fn sigma_px(&self) -> DMatrix<f64> {
        self.block(1, 0)
    }

    pub fn sigma_pp(&self) -> DMatrix<f64> {
        self.block(1, 1)
    }

    pub fn cov_xx(&self, j: usize, k: usize) -> f64 {
        self.sigma[(j, k)]
    }

    pub fn cov_xp(&self, j: usize, k: usize) -> f64 {
        self.sigma[(j, self.n + k)]
    }

    pub fn cov_pp(&self, j: usize, k: usize) -> f64 {
        self.sigma[(self.n + j, self.n + k)]
    }

    /// `ΔX_j²`.
    pub fn dx2(&self, j: usize) -> f64 {
        self.cov_xx(j, j)
    }

    /// `ΔP_j²`.
    pub fn dp2(&self, j: usize) -> f64 {
        self.cov_pp(j, j)
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        *sorted_sym_eigen(&self.sigma).0.last().expect("non-empty")
    }

    /// `{z : (1/2) (z - z0)^T Σ^{-1} (z - z0) <= 1}`, shape `(2Σ)^{-1}`.
    pub fn ellipsoid(&self, center: DVector<f64>) -> Result<Ellipsoid> {
        let (values, vectors) = require_positive_definite(&self.sigma, "covariance")?;
        Ellipsoid::new(center, sym_function(&values, &vectors, |v| 1.0 / (2.0 * v)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct CovarianceRepr {
    format_version: u32,
    n: usize,
    sigma: Vec<Vec<f64>>,
}

impl Serialize for CovarianceMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CovarianceRepr {
            format_version: FORMAT_VERSION,
            n: self.n,
            sigma: linalg::to_rows(&self.sigma),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CovarianceMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = CovarianceRepr::deserialize(d)?;
        if r.format_version != FORMAT_VERSION {
            return Err(D::Error::custom(format!("unsupported format_version {}", r.format_version)));
        }
        let sigma = linalg::from_rows(&r.sigma).map_err(D::Error::custom)?;
        let cov = CovarianceMatrix::new(sigma).map_err(D::Error::custom)?;
        if cov.n != r.n {
            return Err(D::Error::custom(format!("n = {} does not match a {}x{} matrix", r.n, 2 * cov.n, 2 * cov.n)));
        }
        Ok(cov)
    }
}

/// `Σ = (2 M)^{-1}` for the John ellipsoid `(z - z0)^T M (z - z0) <= 1`.
pub fn covariance_from_john(e: &Ellipsoid) -> Result<CovarianceMatrix> {
    let (values, vectors) = require_positive_definite(e.shape(), "shape")?;
    CovarianceMatrix::new(sym_function(&values, &vectors, |v| 1.0 / (2.0 * v)))
}

fn require_hbar(hbar: f64) -> Result<()> {
    if !(hbar > 0.0) || !hbar.is_finite() {
        return Err(Error::InvalidInput(format!("hbar must be positive, got {hbar}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsupAxis {
    pub j: usize,
    pub dx2: f64,
    pub dp2: f64,
    pub cov: f64,
    /// `dx2 dp2 - cov² - ħ²/4`.
    pub margin: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsupReport {
    pub hbar: f64,
    pub axes: Vec<RsupAxis>,
    pub all_pass: bool,
}

impl RsupReport {
    /// Columns `j,dx2,dp2,cov,margin,pass`, axes numbered from 1.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["j", "dx2", "dp2", "cov", "margin", "pass"])?;
        for a in &self.axes {
            out.serialize((a.j + 1, a.dx2, a.dp2, a.cov, a.margin, a.pass))?;
        }
        out.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }
}

/// Per-axis Robertson-Schrödinger margins.
///
/// An axis passes when `margin >= -(ε (dx2 + dp2) + ε²)` with
/// `ε = PSD_REL_TOL |Σ|`: any `Σ` accepted by [`quantum_condition`] has
/// `Σ + ε I` exactly positive, and that bound is what the margin can then
/// lose, so the two verdicts share one tolerance.
pub fn rsup_check(sigma: &CovarianceMatrix, hbar: f64) -> Result<RsupReport> {
    require_hbar(hbar)?;
    let eps = PSD_REL_TOL * sigma.norm();
    let axes: Vec<RsupAxis> = (0..sigma.dof())
        .map(|j| {
            let (dx2, dp2, cov) = (sigma.dx2(j), sigma.dp2(j), sigma.cov_xp(j, j));
            let margin = dx2 * dp2 - cov * cov - 0.25 * hbar * hbar;
            let tol = eps * (dx2 + dp2) + eps * eps;
            RsupAxis {
                j,
                dx2,
                dp2,
                cov,
                margin,
                tol,
                pass: margin >= -tol,
            }
        })
        .collect();
    Ok(RsupReport {
        hbar,
        all_pass: axes.iter().all(|a| a.pass),
        axes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumCondition {
    pub pass: bool,
    /// Smallest eigenvalue of the Hermitian matrix `Σ + (iħ/2) J`.
    pub min_eigenvalue: f64,
    pub tol: f64,
}

/// Positivity of `Σ + (iħ/2) J`, through the real symmetric embedding
/// `(Σ, -(ħ/2) J; (ħ/2) J, Σ)` whose spectrum is that of the Hermitian
/// matrix with every eigenvalue doubled.
pub fn quantum_condition(sigma: &CovarianceMatrix, hbar: f64) -> Result<QuantumCondition> {
    require_hbar(hbar)?;
    let d = 2 * sigma.dof();
    let hj = j_matrix(sigma.dof()) * (0.5 * hbar);
    let mut big = DMatrix::zeros(2 * d, 2 * d);
    big.view_mut((0, 0), (d, d)).copy_from(sigma.matrix());
    big.view_mut((d, d), (d, d)).copy_from(sigma.matrix());
    big.view_mut((0, d), (d, d)).copy_from(&(-&hj));
    big.view_mut((d, 0), (d, d)).copy_from(&hj);
    let min = sorted_sym_eigen(&big).0[0];
    let tol = PSD_REL_TOL * sigma.norm();
    Ok(QuantumCondition {
        pass: min >= -tol,
        min_eigenvalue: min,
        tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobVerdict {
    /// Capacity of `{(1/2) z^T Σ^{-1} z <= 1}`, equal to `2π ν_min(Σ)`.
    pub capacity: f64,
    /// `πħ`, half of Planck's constant `h = 2πħ`.
    pub threshold: f64,
    pub is_blob: bool,
}

pub fn blob_capacity(sigma: &CovarianceMatrix, hbar: f64) -> Result<BlobVerdict> {
    require_hbar(hbar)?;
    let nu_min = symplectic_eigenvalues(sigma.matrix())?[0];
    let capacity = 2.0 * PI * nu_min;
    let threshold = PI * hbar;
    Ok(BlobVerdict {
        capacity,
        threshold,
        is_blob: capacity >= threshold * (1.0 - BLOB_REL_TOL),
    })
}

/// `Σ_t = S Σ S^T`; the translation part of the map plays no role.
pub fn evolve_covariance(sigma: &CovarianceMatrix, map: &AffineSymplecticMap) -> Result<CovarianceMatrix> {
    if map.dof() != sigma.dof() {
        return Err(Error::InvalidInput(format!(
            "map acts on {} degrees of freedom, covariance has {}",
            map.dof(),
            sigma.dof()
        )));
    }
    let s = map.linear.matrix();
    CovarianceMatrix::new(linalg::symmetrize(&(s * sigma.matrix() * s.transpose())))
}

/// The three verdicts on one covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub rsup: RsupReport,
    pub quantum: QuantumCondition,
    pub blob: BlobVerdict,
}

pub fn verdicts(sigma: &CovarianceMatrix, hbar: f64) -> Result<Verdicts> {
    Ok(Verdicts {
        rsup: rsup_check(sigma, hbar)?,
        quantum: quantum_condition(sigma, hbar)?,
        blob: blob_capacity(sigma, hbar)?,
    })
}

/// `G^T G + 1e-6 I` with Gaussian `G`, rescaled so that `ν_min / ħ` is uniform
/// in `[0.1, 3]`.
pub fn random_covariance<R: Rng>(n: usize, hbar: f64, rng: &mut R) -> Result<CovarianceMatrix> {
    let d = 2 * n;
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let raw = g.transpose() * &g + DMatrix::identity(d, d) * 1e-6;
    let target = hbar * rng.random_range(0.1..=3.0);
    let nu_min = symplectic_eigenvalues(&raw)?[0];
    CovarianceMatrix::new(raw * (target / nu_min))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeTally {
    pub both_pass: usize,
    /// Positivity holds but some Robertson-Schrödinger inequality fails;
    /// impossible in exact arithmetic.
    pub sigpos_only: usize,
    /// Robertson-Schrödinger holds on every axis while positivity fails.
    pub rsup_only: usize,
    pub both_fail: usize,
    /// Samples whose blob verdict differs from the positivity verdict.
    pub blob_mismatch: usize,
}

impl ProbeTally {
    fn add(mut self, other: ProbeTally) -> ProbeTally {
        self.both_pass += other.both_pass;
        self.sigpos_only += other.sigpos_only;
        self.rsup_only += other.rsup_only;
        self.both_fail += other.both_fail;
        self.blob_mismatch += other.blob_mismatch;
        self
    }

    fn record(&mut self, v: &Verdicts) {
        match (v.quantum.pass, v.rsup.all_pass) {
            (true, true) => self.both_pass += 1,
            (true, false) => self.sigpos_only += 1,
            (false, true) => self.rsup_only += 1,
            (false, false) => self.both_fail += 1,
        }
        if v.blob.is_blob != v.quantum.pass {
            self.blob_mismatch += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.both_pass + self.sigpos_only + self.rsup_only + self.both_fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub format_version: u32,
    pub n: usize,
    pub samples: usize,
    pub hbar: f64,
    pub seed: u64,
    pub tally: ProbeTally,
}

const PROBE_CHUNK: usize = 256;

/// Tallies the joint verdicts over `samples` covariance matrices: sample 0 is
/// the boundary case `(ħ/2) I`, the rest come from [`random_covariance`].
/// Chunks of samples draw from independent ChaCha streams of `seed`, so the
/// result does not depend on the thread count.
pub fn equivalence_probe(n: usize, samples: usize, hbar: f64, seed: u64) -> Result<ProbeReport> {
    require_hbar(hbar)?;
    if n == 0 || samples == 0 {
        return Err(Error::InvalidInput("need n >= 1 and at least one sample".into()));
    }
    let chunks = samples.div_ceil(PROBE_CHUNK);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<ProbeTally> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut tally = ProbeTally::default();
            let lo = c * PROBE_CHUNK;
            let hi = (lo + PROBE_CHUNK).min(samples);
            for k in lo..hi {
                let sigma = if k == 0 {
                    CovarianceMatrix::scalar(n, 0.5 * hbar)?
                } else {
                    random_covariance(n, hbar, &mut rng)?
                };
                tally.record(&verdicts(&sigma, hbar)?);
            }
            Ok(tally)
        })
        .try_reduce(ProbeTally::default, |a, b| Ok(a.add(b)))?;
    Ok(ProbeReport {
        format_version: FORMAT_VERSION,
        n,
        samples,
        hbar,
        seed,
        tally,
    })
}

/// Every intermediate artifact of the cloud certification pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudCertificate {
    pub format_version: u32,
    pub hbar: f64,
    pub hull_vertices: Vec<[f64; 2]>,
    pub hull: Polytope,
    pub john: JohnEllipsoid,
    pub covariance: CovarianceMatrix,
    pub verdicts: Verdicts,
}

/// Hull, John ellipsoid, covariance, then the three verdicts.
pub fn certify_cloud(cloud: &PointCloud2D, hbar: f64) -> Result<CloudCertificate> {
    require_hbar(hbar)?;
    let hull = convex_hull_2d(cloud)?;
    let john = john_ellipsoid_certified(&hull, &JohnOptions::default())?;
    let covariance = covariance_from_john(&john.ellipsoid)?;
    let verdicts = verdicts(&covariance, hbar)?;
    Ok(CloudCertificate {
        format_version: FORMAT_VERSION,
        hbar,
        hull_vertices: hull_vertices(cloud)?,
        hull,
        john,
        covariance,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_from_shapes() {
        let unit = Ellipsoid::ball(2, 1.0).unwrap();
        let s = covariance_from_john(&unit).unwrap();
        assert!((s.matrix() - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
        let hbar = 0.3;
        let e = Ellipsoid::new(DVector::zeros(4), DMatrix::identity(4, 4) / (2.0 * hbar)).unwrap();
        let s = covariance_from_john(&e).unwrap();
        assert!((s.matrix() - DMatrix::identity(4, 4) * hbar).amax() < 1e-15);
        let back = s.ellipsoid(DVector::zeros(4)).unwrap();
        assert!((back.shape() - e.shape()).amax() < 1e-10);
    }

    #[test]
    fn rsup_examples() {
        let hbar = 0.7;
        let r = rsup_check(&CovarianceMatrix::scalar(2, hbar / 2.0).unwrap(), hbar).unwrap();
        assert!(r.all_pass && r.axes.iter().all(|a| a.margin.abs() < 1e-15));
        let s = CovarianceMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, hbar * hbar]))).unwrap();
        let r = rsup_check(&s, hbar).unwrap();
        assert!((r.axes[0].margin - 0.75 * hbar * hbar).abs() < 1e-15);
        let r = rsup_check(&CovarianceMatrix::scalar(1, hbar / 4.0).unwrap(), hbar).unwrap();
        assert!(!r.all_pass && r.axes[0].margin < 0.0);
    }

    #[test]
    fn quantum_condition_examples() {
        let hbar = 1.0;
        let q = quantum_condition(&CovarianceMatrix::scalar(1, 0.5).unwrap(), hbar).unwrap();
        assert!(q.pass && q.min_eigenvalue.abs() < 1e-15);
        let q = quantum_condition(&CovarianceMatrix::scalar(1, 0.25).unwrap(), hbar).unwrap();
        assert!(!q.pass && (q.min_eigenvalue + 0.25).abs() < 1e-15);
        let s = CovarianceMatrix::new(DMatrix::from_row_slice(2, 2, &[1e-3, 2e-4, 2e-4, 5e-3])).unwrap();
        assert!(quantum_condition(&s, 1e-9).unwrap().pass);
    }

    #[test]
    fn blob_examples() {
        let hbar = 1.3;
        let b = blob_capacity(&CovarianceMatrix::scalar(2, hbar / 2.0).unwrap(), hbar).unwrap();
        assert!(b.is_blob && (b.capacity - PI * hbar).abs() < 1e-12);
        let b = blob_capacity(&CovarianceMatrix::scalar(2, hbar / 4.0).unwrap(), hbar).unwrap();
        assert!(!b.is_blob && (b.capacity - PI * hbar / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_preserves_blob_capacity() {
        let t: f64 = 0.83;
        let s = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        let map = AffineSymplecticMap::new(
            crate::symplectic::SymplecticMatrix::new(s).unwrap(),
            DVector::from_vec(vec![3.0, -1.0]),
        )
        .unwrap();
        let sigma = CovarianceMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![0.4, 2.5]))).unwrap();
        let moved = evolve_covariance(&sigma, &map).unwrap();
        let (a, b) = (blob_capacity(&sigma, 1.0).unwrap(), blob_capacity(&moved, 1.0).unwrap());
        assert!((a.capacity - b.capacity).abs() < 1e-12);
        assert_eq!(evolve_covariance(&sigma, &AffineSymplecticMap::identity(1)).unwrap(), sigma);
        assert!(evolve_covariance(&sigma, &AffineSymplecticMap::identity(2)).is_err());
    }

    #[test]
    fn probe_is_deterministic_and_counts_the_fixture() {
        let a = equivalence_probe(1, 600, 1.0, 5).unwrap();
        let b = equivalence_probe(1, 600, 1.0, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tally.total(), 600);
        assert_eq!(a.tally.sigpos_only, 0);
        assert_eq!(a.tally.blob_mismatch, 0);
        let one = equivalence_probe(2, 1, 1.0, 5).unwrap();
        assert_eq!(one.tally.both_pass, 1);
    }

    #[test]
    fn square_cloud_certificate() {
        let hbar: f64 = 0.8;
        let r = (2.0 * hbar).sqrt();
        let cloud = PointCloud2D::new(vec![[-r, -r], [r, -r], [r, r], [-r, r]]).unwrap();
        let cert = certify_cloud(&cloud, hbar).unwrap();
        assert!((cert.covariance.matrix() - DMatrix::identity(2, 2) * hbar).amax() < 1e-6);
        assert!(cert.verdicts.quantum.pass && cert.verdicts.rsup.all_pass && cert.verdicts.blob.is_blob);
        assert!((cert.verdicts.rsup.axes[0].margin - 0.75 * hbar * hbar).abs() < 1e-6);

        let eps = (hbar / 8.0).sqrt();
        let small = PointCloud2D::new(vec![[-eps, -eps], [eps, -eps], [eps, eps], [-eps, eps]]).unwrap();
        assert!(!certify_cloud(&small, hbar).unwrap().verdicts.blob.is_blob);
    }

    #[test]
    fn covariance_json_and_csv() {
        let s = CovarianceMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let text = s.to_json().unwrap();
        assert_eq!(CovarianceMatrix::from_json(&text).unwrap(), s);
        let mut buf = Vec::new();
        rsup_check(&s, 1.0).unwrap().write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("j,dx2,dp2,cov,margin,pass\n1,2.0,1.0,0.5,1.5,true"));
    }
}
