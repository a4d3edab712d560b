//! Convex hulls of planar clouds and John (maximum-volume inscribed)
//! ellipsoids of polytopes.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::capacity::Ellipsoid;
use crate::error::{Error, Result};
use crate::linalg;
use crate::FORMAT_VERSION;

/// Largest ambient dimension accepted for H-representations.
pub const MAX_POLYTOPE_DIM: usize = 6;

/// `{z : A z <= b}` with unit-length rows of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Polytope {
    /// Rows are rescaled to unit length, together with `b`.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let (m, d) = a.shape();
        if m == 0 || d == 0 || d > MAX_POLYTOPE_DIM {
            return Err(Error::InvalidDimension(format!(
                "need at least one constraint in dimension 1..={MAX_POLYTOPE_DIM}, got {m}x{d}"
            )));
        }
        if b.len() != m {
            return Err(Error::InvalidDimension(format!("b has length {}, A has {m} rows", b.len())));
        }
        if !linalg::is_finite(&a) || !b.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite polytope data".into()));
        }
        let mut a = a;
        let mut b = b;
        for i in 0..m {
            let norm = a.row(i).norm();
            if !(norm > 0.0) {
                return Err(Error::InvalidInput(format!("constraint row {i} is zero")));
            }
            a.row_mut(i).scale_mut(1.0 / norm);
            b[i] /= norm;
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// `b - A z`.
    pub fn slack(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * z
    }

    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        self.slack(z).iter().all(|s| *s >= -tol)
    }

    /// `{T z + d : z in P}`.
    pub fn affine_image(&self, t: &DMatrix<f64>, d: &DVector<f64>) -> Result<Self> {
        let ti = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::DegenerateMatrix("affine map is not invertible".into()))?;
        let a = &self.a * &ti;
        let b = &self.b + &a * d;
        Self::new(a, b)
    }

    /// Vertices of a planar polytope in counterclockwise order.
    pub fn vertices_2d(&self) -> Result<Vec<[f64; 2]>> {
        if self.dim() != 2 {
            return Err(Error::InvalidDimension("vertices_2d needs a planar polytope".into()));
        }
        let m = self.constraints();
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                let (a1, a2) = (self.a.row(i), self.a.row(j));
                let det = a1[0] * a2[1] - a1[1] * a2[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (self.b[i] * a2[1] - self.b[j] * a1[1]) / det;
                let y = (a1[0] * self.b[j] - a2[0] * self.b[i]) / det;
                let z = DVector::from_vec(vec![x, y]);
                let scale = 1.0 + x.abs().max(y.abs());
                if self.contains(&z, 1e-9 * scale) && !pts.iter().any(|p| (p[0] - x).hypot(p[1] - y) < 1e-9 * scale) {
                    pts.push([x, y]);
                }
            }
        }
        let n = pts.len() as f64;
        let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
        let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
        pts.sort_by(|p, q| (p[1] - cy).atan2(p[0] - cx).total_cmp(&(q[1] - cy).atan2(q[0] - cx)));
        Ok(pts)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct PolytopeRepr {
    format_version: u32,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Serialize for Polytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolytopeRepr {
            format_version: FORMAT_VERSION,
            a: linalg::to_rows(&self.a),
            b: self.b.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = PolytopeRepr::deserialize(d)?;
        if r.format_version != FORMAT_VERSION {
            return Err(D::Error::custom(format!("unsupported format_version {}", r.format_version)));
        }
        let a = linalg::from_rows(&r.a).map_err(D::Error::custom)?;
        Polytope::new(a, DVector::from_vec(r.b)).map_err(D::Error::custom)
    }
}

/// A planar cloud of phase-space points `(x, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud2D {
    points: Vec<[f64; 2]>,
}

impl PointCloud2D {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::DegenerateHull(format!("need at least 3 points, got {}", points.len())));
        }
        if !points.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite cloud coordinates".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Reads `x,p` rows.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "p"] {
            return Err(Error::Format(format!("expected header x,p, got {headers:?}")));
        }
        let mut points = Vec::new();
        for rec in rdr.deserialize() {
            let (x, p): (f64, f64) = rec?;
            points.push([x, p]);
        }
        Self::new(points)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "p"])?;
        for p in &self.points {
            out.serialize((p[0], p[1]))?;
        }
        out.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Hull vertices in counterclockwise order, collinear points dropped
/// (Andrew's monotone chain).
pub fn hull_vertices(cloud: &PointCloud2D) -> Result<Vec<[f64; 2]>> {
    let mut pts = cloud.points.clone();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let scale = pts
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let area2: f64 = (0..hull.len())
        .map(|k| {
            let (p, q) = (hull[k], hull[(k + 1) % hull.len()]);
            p[0] * q[1] - p[1] * q[0]
        })
        .sum();
    if hull.len() < 3 || area2.abs() <= 2e-12 * scale * scale {
        return Err(Error::DegenerateHull("points are collinear".into()));
    }
    Ok(hull)
}

/// H-representation of the convex hull, one half-plane per hull edge in
/// counterclockwise order.
pub fn convex_hull_2d(cloud: &PointCloud2D) -> Result<Polytope> {
    let v = hull_vertices(cloud)?;
    let m = v.len();
    let mut a = DMatrix::zeros(m, 2);
    let mut b = DVector::zeros(m);
    for k in 0..m {
        let (p, q) = (v[k], v[(k + 1) % m]);
        let normal = [q[1] - p[1], p[0] - q[0]];
        a[(k, 0)] = normal[0];
        a[(k, 1)] = normal[1];
        b[k] = normal[0] * p[0] + normal[1] * p[1];
    }
    Polytope::new(a, b)
}

enum LpOutcome {
    Optimal(DVector<f64>),
    Unbounded,
}

/// Minimizes `f^T y` over `G y <= h` by a log-barrier method started from the
/// strictly feasible `y`.
fn barrier_lp(f: &DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>, mut y: DVector<f64>) -> Result<LpOutcome> {
    let m = g.nrows() as f64;
    let barrier = |t: f64, y: &DVector<f64>| -> Option<f64> {
        let s = h - g * y;
        if s.iter().any(|v| *v <= 0.0) {
            return None;
        }
        Some(t * f.dot(y) - s.iter().map(|v| v.ln()).sum::<f64>())
    };
    // A nontrivial null space of G is a line along which the region extends
    // in both directions.
    let sv = g.clone().svd(false, false).singular_values;
    if g.nrows() < g.ncols() || sv.min() <= 1e-12 * sv.max() {
        return Ok(LpOutcome::Unbounded);
    }
    let mut t = 1.0;
    loop {
        for _ in 0..200 {
            let s = h - g * &y;
            let inv = s.map(|v| 1.0 / v);
            let grad = f * t + g.transpose() * &inv;
            let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |r, c| g[(r, c)] * inv[r]);
            let hess = scaled.transpose() * &scaled;
            // G has full column rank, so the Hessian is positive-definite in
            // exact arithmetic; losing that numerically means the weights on
            // the optimal face have swamped the rest, and `y` is converged.
            let Some(chol) = Cholesky::new(hess) else {
                return Ok(LpOutcome::Optimal(y));
            };
            let step = -chol.solve(&grad);
            let decrement = -grad.dot(&step);
            if decrement < 1e-12 {
                break;
            }
            let f0 = barrier(t, &y).expect("iterate is feasible");
            let mut alpha = 1.0;
            loop {
                let trial = &y + &step * alpha;
                if let Some(v) = barrier(t, &trial) {
                    if decrement < 1.0 / 16.0 || v <= f0 - 0.25 * alpha * decrement {
                        y = trial;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    return Err(Error::NoConvergence("LP line search stalled".into()));
                }
            }
            if y.amax() > 1e10 {
                return Ok(LpOutcome::Unbounded);
            }
        }
        if m / t < 1e-10 {
            return Ok(LpOutcome::Optimal(y));
        }
        t *= 10.0;
    }
}

/// Largest ball inside `P`: `(center, radius)`.
pub fn chebyshev_center(p: &Polytope) -> Result<(DVector<f64>, f64)> {
    let (m, d) = p.a.shape();
    let mut g = DMatrix::zeros(m, d + 1);
    g.view_mut((0, 0), (m, d)).copy_from(&p.a);
    g.column_mut(d).fill(1.0);
    let mut f = DVector::zeros(d + 1);
    f[d] = -1.0;
    let mut y0 = DVector::zeros(d + 1);
    y0[d] = p.b.min() - 1.0;
    match barrier_lp(&f, &g, &p.b, y0)? {
        LpOutcome::Unbounded => Err(Error::UnboundedRegion),
        LpOutcome::Optimal(y) => Ok((y.rows(0, d).into_owned(), y[d])),
    }
}

/// Checks that every coordinate is bounded above and below on `P`, starting
/// each LP from the strictly interior point `z0`.
fn require_bounded(p: &Polytope, z0: &DVector<f64>) -> Result<()> {
    let d = p.dim();
    for k in 0..d {
        for sign in [1.0, -1.0] {
            let mut f = DVector::zeros(d);
            f[k] = -sign;
            if let LpOutcome::Unbounded = barrier_lp(&f, &p.a, &p.b, z0.clone())? {
                return Err(Error::UnboundedRegion);
            }
        }
    }
    Ok(())
}

/// Solver settings for [`john_ellipsoid_certified`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JohnOptions {
    /// The barrier is followed until its suboptimality bound `2m/t` drops
    /// below this value.
    pub gap_tol: f64,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
}

impl Default for JohnOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-9, mu: 10.0 }
    }
}

/// The John ellipsoid `{B u + c : |u| <= 1}` with its optimality certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JohnEllipsoid {
    pub ellipsoid: Ellipsoid,
    /// Symmetric positive-definite `B`; the shape matrix is `B^{-2}`.
    #[serde(with = "crate::linalg::rows_serde")]
    pub factor: DMatrix<f64>,
    /// `log det B`, the log-volume up to the unit-ball constant.
    pub log_det: f64,
    /// Primal objective minus the value of the dual point built from the
    /// final barrier iterate; a bound on the suboptimality of `log_det`.
    pub duality_gap: f64,
    /// `|Σ μ_i a_i|`, the dual feasibility residual of that point.
    pub dual_residual: f64,
    pub newton_steps: usize,
}

struct JohnProblem<'a> {
    p: &'a Polytope,
    basis: Vec<(usize, usize)>,
}

struct Evaluation {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl<'a> JohnProblem<'a> {
    fn new(p: &'a Polytope) -> Self {
        let d = p.dim();
        let basis = (0..d).flat_map(|r| (r..d).map(move |c| (r, c))).collect();
        Self { p, basis }
    }

    fn d(&self) -> usize {
        self.p.dim()
    }

    fn k(&self) -> usize {
        self.basis.len()
    }

    fn unpack(&self, x: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.d();
        let mut b = DMatrix::zeros(d, d);
        for (k, &(r, c)) in self.basis.iter().enumerate() {
            b[(r, c)] = x[k];
            b[(c, r)] = x[k];
        }
        (b, x.rows(self.k(), d).into_owned())
    }

    fn pack(&self, b: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.k() + self.d());
        for (k, &(r, col)) in self.basis.iter().enumerate() {
            x[k] = b[(r, col)];
        }
        x.rows_mut(self.k(), self.d()).copy_from(c);
        x
    }

    /// `E_k v`.
    fn basis_apply(&self, k: usize, v: &DVector<f64>) -> DVector<f64> {
        let (r, c) = self.basis[k];
        let mut out = DVector::zeros(self.d());
        out[r] += v[c];
        if r != c {
            out[c] += v[r];
        }
        out
    }

    /// Slack pairs `(s_i, w_i = B a_i)`, or `None` outside the domain.
    fn cones(&self, b: &DMatrix<f64>, c: &DVector<f64>) -> Option<Vec<(f64, DVector<f64>, f64)>> {
        let a = &self.p.a;
        let mut out = Vec::with_capacity(a.nrows());
        for i in 0..a.nrows() {
            let ai = a.row(i).transpose();
            let s = self.p.b[i] - ai.dot(c);
            let w = b * &ai;
            let phi = s * s - w.norm_squared();
            if !(s > 0.0) || !(phi > 0.0) {
                return None;
            }
            out.push((s, w, phi));
        }
        Some(out)
    }

    /// `t (-log det B) - Σ log(s_i² - |B a_i|²)`; `None` outside the domain.
    fn value(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        let (b, c) = self.unpack(x);
        let chol = Cholesky::new(b.clone())?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let cones = self.cones(&b, &c)?;
        Some(-t * logdet - cones.iter().map(|(_, _, phi)| phi.ln()).sum::<f64>())
    }

    fn evaluate(&self, x: &DVector<f64>, t: f64) -> Option<Evaluation> {
        let (d, k) = (self.d(), self.k());
        let (b, c) = self.unpack(x);
        let chol: Cholesky<f64, Dyn> = Cholesky::new(b.clone())?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let binv = chol.inverse();
        let cones = self.cones(&b, &c)?;

        let size = k + d;
        let mut grad = DVector::zeros(size);
        let mut hess = DMatrix::zeros(size, size);
        let products: Vec<DMatrix<f64>> = (0..k)
            .map(|kk| {
                let mut e = DMatrix::zeros(d, d);
                let (r, col) = self.basis[kk];
                e[(r, col)] = 1.0;
                e[(col, r)] = 1.0;
                &binv * e
            })
            .collect();
        for i in 0..k {
            grad[i] = -t * products[i].trace();
            for j in 0..=i {
                let v = t * (&products[i] * &products[j]).trace();
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }

        let mut value = -t * logdet;
        for (i, (s, w, phi)) in cones.iter().enumerate() {
            let ai = self.p.a.row(i).transpose();
            let gmat = DMatrix::from_fn(d, k, |r, kk| self.basis_apply(kk, &ai)[r]);
            let mut dphi = DVector::zeros(size);
            dphi.rows_mut(0, k).copy_from(&(gmat.transpose() * w * -2.0));
            dphi.rows_mut(k, d).copy_from(&(&ai * (-2.0 * s)));
            let mut d2phi = DMatrix::zeros(size, size);
            d2phi.view_mut((0, 0), (k, k)).copy_from(&(gmat.transpose() * &gmat * -2.0));
            d2phi.view_mut((k, k), (d, d)).copy_from(&(&ai * ai.transpose() * 2.0));
            value -= phi.ln();
            grad -= &dphi / *phi;
            hess += &dphi * dphi.transpose() / (phi * phi) - d2phi / *phi;
        }
        Some(Evaluation { value, grad, hess })
    }
}

/// Multipliers `μ_i >= 0` for the dual point `(μ_i, v_i = -μ_i B a_i / s_i)`,
/// which satisfies `|v_i| <= μ_i` by construction.
///
/// The barrier estimates `2 s_i / (t φ_i)` inherit the cancellation in
/// `φ_i = s_i² - |B a_i|²` once the slacks are tiny, so they are moved by a
/// least-norm step onto the stationarity conditions `Σ μ_i a_i = 0` and
/// `Σ μ_i sym(B a_i a_i^T) / s_i = B^{-1}`, which do not involve `φ`.
fn dual_multipliers(p: &Polytope, cones: &[(f64, DVector<f64>, f64)], binv: &DMatrix<f64>, t: f64) -> Vec<f64> {
    let d = p.dim();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|r| (r..d).map(move |c| (r, c))).collect();
    let rows = pairs.len() + d;
    let mut k = DMatrix::zeros(rows, cones.len());
    let mut rhs = DVector::zeros(rows);
    for (q, &(r, c)) in pairs.iter().enumerate() {
        rhs[q] = binv[(r, c)];
    }
    let mut mu0 = DVector::zeros(cones.len());
    for (i, (s, w, phi)) in cones.iter().enumerate() {
        let ai = p.a.row(i).transpose();
        for (q, &(r, c)) in pairs.iter().enumerate() {
            k[(q, i)] = 0.5 * (w[r] * ai[c] + w[c] * ai[r]) / s;
        }
        k.view_mut((pairs.len(), i), (d, 1)).copy_from(&ai);
        mu0[i] = 2.0 * s / (t * phi);
    }
    let miss = &rhs - &k * &mu0;
    let svd = k.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max();
    let step = svd.solve(&miss, tol).unwrap_or_else(|_| DVector::zeros(cones.len()));
    (&mu0 + step).iter().map(|v| v.max(0.0)).collect()
}

/// Maximum-volume ellipsoid inscribed in a bounded, full-dimensional polytope.
pub fn john_ellipsoid(p: &Polytope) -> Result<Ellipsoid> {
    Ok(john_ellipsoid_certified(p, &JohnOptions::default())?.ellipsoid)
}

/// Barrier method on `min -log det B` subject to `|B a_i| <= b_i - a_i^T c`,
/// started from the Chebyshev ball, with damped Newton centering.
pub fn john_ellipsoid_certified(p: &Polytope, opts: &JohnOptions) -> Result<JohnEllipsoid> {
    if !(opts.gap_tol > 0.0) || !(opts.mu > 1.0) {
        return Err(Error::InvalidInput(format!("invalid solver options {opts:?}")));
    }
    let (center, radius) = chebyshev_center(p)?;
    let scale = 1.0 + center.amax();
    if !(radius > 1e-9 * scale) {
        return Err(Error::DegenerateRegion(format!("largest inscribed ball has radius {radius:e}")));
    }
    require_bounded(p, &center)?;

    let prob = JohnProblem::new(p);
    let d = p.dim();
    let m = p.constraints() as f64;
    let mut x = prob.pack(&(DMatrix::identity(d, d) * (0.5 * radius)), &center);
    let mut t = 1.0;
    let mut newton_steps = 0;
    loop {
        let last = 2.0 * m / t < opts.gap_tol;
        for _ in 0..100 {
            let eval = prob.evaluate(&x, t).expect("iterates stay feasible");
            let Some(chol) = Cholesky::new(eval.hess.clone()) else {
                return Err(Error::NoConvergence("singular barrier Hessian".into()));
            };
            let step = -chol.solve(&eval.grad);
            let decrement = -eval.grad.dot(&step);
            if decrement < 1e-12 {
                break;
            }
            newton_steps += 1;
            let mut alpha = 1.0;
            loop {
                let trial = &x + &step * alpha;
                if let Some(v) = prob.value(&trial, t) {
                    if decrement < 1.0 / 16.0 || v <= eval.value - 0.25 * alpha * decrement {
                        x = trial;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    return Err(Error::NoConvergence("ellipsoid line search stalled".into()));
                }
            }
        }
        if last {
            break;
        }
        t *= opts.mu;
    }

    let (b, c) = prob.unpack(&x);
    let chol = Cholesky::new(b.clone()).ok_or_else(|| Error::NoConvergence("lost definiteness".into()))?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let binv = chol.inverse();

    let cones = prob.cones(&b, &c).expect("final iterate is feasible");
    let mu = dual_multipliers(p, &cones, &binv, t);
    let mut w_sum = DMatrix::zeros(d, d);
    let mut residual = DVector::zeros(d);
    let mut mu_b = 0.0;
    for (i, ((s, w, _), mu)) in cones.iter().zip(&mu).enumerate() {
        let ai = p.a.row(i).transpose();
        w_sum -= w * ai.transpose() * (mu / s);
        residual += &ai * *mu;
        mu_b += mu * p.b[i];
    }
    let neg_w = -linalg::symmetrize(&w_sum);
    let dual = match Cholesky::new(neg_w) {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() + d as f64 - mu_b,
        None => f64::NEG_INFINITY,
    };
    let shape = linalg::symmetrize(&(&binv * &binv));
    Ok(JohnEllipsoid {
        ellipsoid: Ellipsoid::new(c, shape)?,
        factor: b,
        log_det,
        duality_gap: -log_det - dual,
        dual_residual: residual.norm(),
        newton_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f64; 2]]) -> PointCloud2D {
        PointCloud2D::new(points.to_vec()).unwrap()
    }

    fn square() -> PointCloud2D {
        cloud(&[[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    }

    #[test]
    fn square_hull() {
        let p = convex_hull_2d(&square()).unwrap();
        assert_eq!(p.constraints(), 4);
        assert!(p.b().iter().all(|v| (v - 1.0).abs() < 1e-15));
        let mut with_interior = square().points().to_vec();
        with_interior.push([0.0, 0.0]);
        with_interior.push([1.0, 0.0]);
        assert_eq!(convex_hull_2d(&cloud(&with_interior)).unwrap(), p);
        let v = p.vertices_2d().unwrap();
        assert_eq!(v.len(), 4);
        let area: f64 = (0..4).map(|k| v[k][0] * v[(k + 1) % 4][1] - v[k][1] * v[(k + 1) % 4][0]).sum();
        assert!((area - 8.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_cloud_is_degenerate() {
        let c = cloud(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]);
        assert!(matches!(convex_hull_2d(&c), Err(Error::DegenerateHull(_))));
        assert!(PointCloud2D::new(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
    }

    #[test]
    fn cloud_csv() {
        let c = square();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(PointCloud2D::read_csv(buf.as_slice()).unwrap(), c);
        assert!(matches!(PointCloud2D::read_csv("x,q\n1,2\n".as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn square_john_is_unit_disk() {
        let j = john_ellipsoid_certified(&convex_hull_2d(&square()).unwrap(), &JohnOptions::default()).unwrap();
        let e = &j.ellipsoid;
        assert!(e.center().amax() < 1e-8);
        assert!((e.shape() - DMatrix::identity(2, 2)).amax() < 1e-8);
        assert!(j.duality_gap.abs() <= 1e-8, "{}", j.duality_gap);
    }

    #[test]
    fn rectangle_john() {
        let rect = cloud(&[[-2.0, -0.5], [2.0, -0.5], [2.0, 0.5], [-2.0, 0.5]]);
        let e = john_ellipsoid(&convex_hull_2d(&rect).unwrap()).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 4.0]));
        assert!((e.shape() - expected).amax() < 1e-6);
    }

    #[test]
    fn unbounded_and_empty_regions() {
        let half = Polytope::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DVector::from_vec(vec![1.0])).unwrap();
        assert_eq!(john_ellipsoid(&half).unwrap_err(), Error::UnboundedRegion);
        let strip = Polytope::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        assert_eq!(john_ellipsoid(&strip).unwrap_err(), Error::UnboundedRegion);
        let empty = Polytope::new(
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
            DVector::from_vec(vec![-1.0, -1.0, 1.0, 1.0]),
        )
        .unwrap();
        assert!(matches!(john_ellipsoid(&empty), Err(Error::DegenerateRegion(_))));
    }

    #[test]
    fn polytope_json_roundtrip() {
        let p = convex_hull_2d(&square()).unwrap();
        assert_eq!(Polytope::from_json(&p.to_json().unwrap()).unwrap(), p);
    }

    #[test]
    fn cube_in_three_dimensions() {
        let mut a = DMatrix::zeros(6, 3);
        for k in 0..3 {
            a[(2 * k, k)] = 1.0;
            a[(2 * k + 1, k)] = -1.0;
        }
        let p = Polytope::new(a, DVector::from_element(6, 1.0)).unwrap();
        let e = john_ellipsoid(&p).unwrap();
        assert!((e.shape() - DMatrix::identity(3, 3)).amax() < 1e-6);
    }
}
