//! Symplectic capacities of ellipsoids and linear non-squeezing.
//!
//! Gromov's theorem is taken as given; what is computed here are its
//! consequences in the linear category. On ellipsoids every symplectic
//! capacity (Gromov width, cylindrical capacity, the linear capacity) takes
//! the same value, `π / λ_max` with `λ_max` the largest symplectic eigenvalue
//! of the shape matrix, so a single function covers them all.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::AffineSymplecticMap;
use crate::linalg::{self, require_positive_definite};
use crate::symplectic::symplectic_eigenvalues;
use crate::FORMAT_VERSION;

/// `{z : (z - z0)^T M (z - z0) <= 1}` with `M` symmetric positive-definite.
///
/// Axis-aligned ellipsoids built from semiaxes remember them, so that their
/// capacity is the exact product `π a_j b_j` rather than a value recovered
/// from the rounded entries `1/a²` of `M`.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    semiaxes: Option<Vec<f64>>,
}

impl PartialEq for Ellipsoid {
    fn eq(&self, other: &Self) -> bool {
        self.center == other.center && self.shape == other.shape
    }
}

fn semiaxis_shape(semiaxes: &[f64]) -> DMatrix<f64> {
    let diag = DVector::from_iterator(semiaxes.len(), semiaxes.iter().map(|a| 1.0 / (a * a)));
    DMatrix::from_diagonal(&diag)
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        let d = linalg::require_square(&shape, "shape")?;
        if center.len() != d {
            return Err(Error::InvalidDimension(format!(
                "center has length {}, shape is {d}x{d}",
                center.len()
            )));
        }
        if !linalg::is_finite(&shape) || !center.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite ellipsoid".into()));
        }
        linalg::require_symmetric(&shape, "shape")?;
        let shape = linalg::symmetrize(&shape);
        require_positive_definite(&shape, "shape")?;
        Ok(Self {
            center,
            shape,
            semiaxes: None,
        })
    }

    /// The ball of radius `r` in `R^dim`, shape `I / r²`.
    pub fn ball(dim: usize, r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
        }
        Self::from_semiaxes(DVector::zeros(dim), &vec![r; dim])
    }

    /// Axis-aligned ellipsoid with the given semiaxes.
    pub fn from_semiaxes(center: DVector<f64>, semiaxes: &[f64]) -> Result<Self> {
        if semiaxes.is_empty() || semiaxes.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidInput("semiaxes must be positive and finite".into()));
        }
        let mut e = Self::new(center, semiaxis_shape(semiaxes))?;
        e.semiaxes = Some(semiaxes.to_vec());
        Ok(e)
    }

    /// The semiaxes, for ellipsoids built axis-aligned.
    pub fn semiaxes(&self) -> Option<&[f64]> {
        self.semiaxes.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        let d = z - &self.center;
        d.dot(&(&self.shape * &d)) <= 1.0 + tol
    }

    /// `λ E`, about the center: semiaxes scale by `λ`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("scale must be positive, got {lambda}")));
        }
        if let Some(axes) = &self.semiaxes {
            let axes: Vec<f64> = axes.iter().map(|a| a * lambda).collect();
            return Self::from_semiaxes(self.center.clone(), &axes);
        }
        Self::new(self.center.clone(), &self.shape / (lambda * lambda))
    }

    /// Image under `z -> S z + d`: shape `S^{-T} M S^{-1}`, center `S z0 + d`.
    pub fn image(&self, map: &AffineSymplecticMap) -> Result<Self> {
        if 2 * map.dof() != self.dim() {
            return Err(Error::InvalidDimension("map and ellipsoid dimensions differ".into()));
        }
        let inv = map.linear.inverse();
        let si = inv.matrix();
        Self::new(map.apply(&self.center), si.transpose() * &self.shape * si)
    }

    /// Image under a general invertible affine map `z -> T z + d`.
    pub fn affine_image(&self, t: &DMatrix<f64>, d: &DVector<f64>) -> Result<Self> {
        let ti = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::DegenerateMatrix("affine map is not invertible".into()))?;
        Self::new(t * &self.center + d, ti.transpose() * &self.shape * ti)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct EllipsoidRepr {
    format_version: u32,
    center: Vec<f64>,
    shape: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    semiaxes: Option<Vec<f64>>,
}

impl Serialize for Ellipsoid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EllipsoidRepr {
            format_version: FORMAT_VERSION,
            center: self.center.iter().copied().collect(),
            shape: linalg::to_rows(&self.shape),
            semiaxes: self.semiaxes.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ellipsoid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = EllipsoidRepr::deserialize(d)?;
        if r.format_version != FORMAT_VERSION {
            return Err(D::Error::custom(format!("unsupported format_version {}", r.format_version)));
        }
        let shape = linalg::from_rows(&r.shape).map_err(D::Error::custom)?;
        let center = DVector::from_vec(r.center);
        match r.semiaxes {
            None => Ellipsoid::new(center, shape).map_err(D::Error::custom),
            Some(axes) => {
                let e = Ellipsoid::from_semiaxes(center, &axes).map_err(D::Error::custom)?;
                if e.shape != shape {
                    return Err(D::Error::custom("semiaxes disagree with the shape matrix"));
                }
                Ok(e)
            }
        }
    }
}

/// Largest symplectic eigenvalue. Diagonal shapes are handled in closed form,
/// `sqrt(M_jj M_{n+j,n+j})`, which is exact for balls.
fn max_symplectic_eigenvalue(shape: &DMatrix<f64>) -> Result<f64> {
    let d = shape.nrows();
    let diagonal = (0..d).all(|r| (0..d).all(|c| r == c || shape[(r, c)] == 0.0));
    if diagonal {
        let n = d / 2;
        return Ok((0..n)
            .map(|j| (shape[(j, j)] * shape[(n + j, n + j)]).sqrt())
            .fold(0.0, f64::max));
    }
    Ok(*symplectic_eigenvalues(shape)?.last().expect("non-empty spectrum"))
}

/// `π / λ_max(shape)`; independent of the center. Ellipsoids with known
/// semiaxes `(a_1..a_n, b_1..b_n)` give `π min_j (a_j b_j)` directly, so
/// `B(R)` has capacity `π (R R)` exactly.
pub fn ellipsoid_capacity(e: &Ellipsoid) -> Result<f64> {
    let n = linalg::require_even_square(&e.shape, "shape")?;
    if let Some(axes) = &e.semiaxes {
        let min = (0..n).map(|j| axes[j] * axes[n + j]).fold(f64::INFINITY, f64::min);
        return Ok(PI * min);
    }
    Ok(PI / max_symplectic_eigenvalue(&e.shape)?)
}

/// Capacity of the cylinder `Z_j(R) = {x_j² + p_j² <= R²}`, `π (R R)`; equal
/// bit-for-bit to the capacity of [`Ellipsoid::ball`].
pub fn cylinder_capacity(r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
    }
    Ok(PI * (r * r))
}

/// `vol(B^d) / sqrt(det M)`.
pub fn ellipsoid_volume(e: &Ellipsoid) -> Result<f64> {
    let (values, _) = require_positive_definite(&e.shape, "shape")?;
    Ok(unit_ball_volume(values.len()) / values.iter().map(|v| v.sqrt()).product::<f64>())
}

/// `V_0 = 1`, `V_1 = 2`, `V_d = 2π V_{d-2} / d`.
fn unit_ball_volume(d: usize) -> f64 {
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = 2 + d % 2;
    while k <= d {
        v *= 2.0 * PI / k as f64;
        k += 2;
    }
    v
}

fn plane_label(k: usize, n: usize) -> String {
    if k < n {
        format!("x{}", k + 1)
    } else {
        format!("p{}", k - n + 1)
    }
}

/// Area of the orthogonal projection of `S B(r)` onto the `(i, j)` plane:
/// `π r² sqrt(det G)` with `G` the `{i, j}` block of `S S^T`.
pub fn shadow_area(s: &DMatrix<f64>, r: f64, i: usize, j: usize) -> Result<f64> {
    let d = linalg::require_square(s, "S")?;
    if i == j || i >= d || j >= d {
        return Err(Error::InvalidInput(format!("invalid plane ({i}, {j}) in dimension {d}")));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
    }
    let row = |k: usize| s.row(k);
    let gii = row(i).dot(&row(i));
    let gjj = row(j).dot(&row(j));
    let gij = row(i).dot(&row(j));
    let det = (gii * gjj - gij * gij).max(0.0);
    Ok(PI * r * r * det.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneShadow {
    pub i: usize,
    pub j: usize,
    pub label: String,
    pub area: f64,
    pub conjugate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowReport {
    pub format_version: u32,
    pub radius: f64,
    pub dof: usize,
    pub planes: Vec<PlaneShadow>,
    pub min_conjugate_area: f64,
}

impl ShadowReport {
    /// Conjugate planes whose shadow is below `π r² (1 - tol)`.
    pub fn violations(&self, tol: f64) -> usize {
        let floor = PI * self.radius * self.radius * (1.0 - tol);
        self.planes.iter().filter(|p| p.conjugate && p.area < floor).count()
    }

    /// Columns `plane,i,j,conjugate,area`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["plane", "i", "j", "conjugate", "area"])?;
        for p in &self.planes {
            out.serialize((&p.label, p.i, p.j, p.conjugate, p.area))?;
        }
        out.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }
}

/// Shadows of `S B(r)` on every coordinate plane, conjugate planes flagged.
pub fn nonsqueezing_report(s: &DMatrix<f64>, r: f64) -> Result<ShadowReport> {
    let n = linalg::require_even_square(s, "S")?;
    let d = 2 * n;
    let mut planes = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            planes.push(PlaneShadow {
                i,
                j,
                label: format!("{}-{}", plane_label(i, n), plane_label(j, n)),
                area: shadow_area(s, r, i, j)?,
                conjugate: j == i + n,
            });
        }
    }
    let min_conjugate_area = planes
        .iter()
        .filter(|p| p.conjugate)
        .map(|p| p.area)
        .fold(f64::INFINITY, f64::min);
    Ok(ShadowReport {
        format_version: FORMAT_VERSION,
        radius: r,
        dof: n,
        planes,
        min_conjugate_area,
    })
}

/// `diag(λ, .., λ, 1/λ, .., 1/λ)`: squeezes every position, stretches every
/// momentum.
pub fn squeeze_matrix(n: usize, lambda: f64) -> Result<DMatrix<f64>> {
    if n == 0 || !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("need n >= 1 and lambda > 0, got {n}, {lambda}")));
    }
    let diag = DVector::from_iterator(2 * n, (0..2 * n).map(|k| if k < n { lambda } else { 1.0 / lambda }));
    Ok(DMatrix::from_diagonal(&diag))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_examples() {
        for r in [0.3, 1.0, 1.7, 2.0, 3.0, 7.5, 12.25] {
            let ball = Ellipsoid::ball(4, r).unwrap();
            assert_eq!(ellipsoid_capacity(&ball).unwrap(), cylinder_capacity(r).unwrap());
            assert_eq!(ellipsoid_capacity(&ball).unwrap(), PI * (r * r));
            let back = Ellipsoid::from_json(&ball.to_json().unwrap()).unwrap();
            assert_eq!(ellipsoid_capacity(&back).unwrap(), PI * (r * r));
        }
        assert_eq!(cylinder_capacity(1.0).unwrap(), PI);
        assert_eq!(cylinder_capacity(2.0).unwrap(), 4.0 * PI);
        let e = Ellipsoid::from_semiaxes(DVector::zeros(2), &[2.0, 3.0]).unwrap();
        assert!((ellipsoid_capacity(&e).unwrap() - 6.0 * PI).abs() < 1e-13);
        let e = Ellipsoid::new(
            DVector::zeros(4),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.25, 0.25])),
        )
        .unwrap();
        assert!((ellipsoid_capacity(&e).unwrap() - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn capacity_is_not_volume() {
        let thin = Ellipsoid::from_semiaxes(DVector::zeros(4), &[1.0, 4.0, 1.0, 4.0]).unwrap();
        let round = Ellipsoid::from_semiaxes(DVector::zeros(4), &[2.0; 4]).unwrap();
        let (vt, vr) = (ellipsoid_volume(&thin).unwrap(), ellipsoid_volume(&round).unwrap());
        assert!((vt - vr).abs() < 1e-12 * vr);
        let ratio = ellipsoid_capacity(&round).unwrap() / ellipsoid_capacity(&thin).unwrap();
        assert!(ratio >= 4.0 - 1e-12, "{ratio}");
    }

    #[test]
    fn volumes() {
        let disk = Ellipsoid::ball(2, 1.0).unwrap();
        assert!((ellipsoid_volume(&disk).unwrap() - PI).abs() < 1e-15);
        assert!((ellipsoid_volume(&Ellipsoid::ball(2, 3.0).unwrap()).unwrap() - 9.0 * PI).abs() < 1e-13);
        let e = Ellipsoid::new(DVector::zeros(2), DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.0]))).unwrap();
        assert!((ellipsoid_volume(&e).unwrap() - 2.0 * PI).abs() < 1e-14);
        let b4 = ellipsoid_volume(&Ellipsoid::ball(4, 1.0).unwrap()).unwrap();
        assert!((b4 - PI * PI / 2.0).abs() < 1e-14);
        let b3 = ellipsoid_volume(&Ellipsoid::ball(3, 1.0).unwrap()).unwrap();
        assert!((b3 - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn squeeze_shadows() {
        let s = squeeze_matrix(2, 0.5).unwrap();
        assert!((shadow_area(&s, 1.0, 0, 2).unwrap() - PI).abs() < 1e-15);
        assert!((shadow_area(&s, 1.0, 0, 1).unwrap() - 0.25 * PI).abs() < 1e-15);
        let report = nonsqueezing_report(&s, 1.0).unwrap();
        assert_eq!(report.planes.len(), 6);
        assert_eq!(report.planes.iter().filter(|p| p.conjugate).count(), 2);
        assert_eq!(report.violations(1e-9), 0);
        assert!((report.min_conjugate_area - PI).abs() < 1e-15);
        assert!(shadow_area(&s, 1.0, 1, 1).is_err());
        assert!(shadow_area(&s, 1.0, 0, 4).is_err());
    }

    #[test]
    fn identity_report_and_csv() {
        let report = nonsqueezing_report(&DMatrix::identity(2, 2), 1.0).unwrap();
        assert_eq!(report.planes.len(), 1);
        assert_eq!(report.min_conjugate_area, PI);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("plane,i,j,conjugate,area\nx1-p1,0,1,true,"));
    }

    #[test]
    fn ellipsoid_json_roundtrip() {
        let e = Ellipsoid::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        assert_eq!(Ellipsoid::from_json(&e.to_json().unwrap()).unwrap(), e);
        assert!(Ellipsoid::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
    }
}
