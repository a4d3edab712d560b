//! Small dense helpers shared by the modules. Matrices are `nalgebra::DMatrix`,
//! serialized row-major as arrays of arrays.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub(crate) fn require_square(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidDimension(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub(crate) fn require_even_square(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    let d = require_square(m, what)?;
    if d % 2 != 0 {
        return Err(Error::InvalidDimension(format!(
            "{what} must have even dimension, got {d}"
        )));
    }
    Ok(d / 2)
}

/// Rejects matrices whose antisymmetric part is not negligible against the
/// largest entry.
pub(crate) fn require_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let asym = max_abs(&(m - m.transpose()));
    if asym > 1e-12 * scale {
        return Err(Error::InvalidInput(format!(
            "{what} is not symmetric (max |M - M^T| = {asym:e})"
        )));
    }
    Ok(())
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sorted_sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Checks positive-definiteness with the scale-relative threshold
/// `min eigenvalue > 1e-12 * max eigenvalue`; returns the sorted spectrum.
pub(crate) fn require_positive_definite(m: &DMatrix<f64>, what: &str) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (values, vectors) = sorted_sym_eigen(m);
    let max = *values.last().expect("non-empty");
    let min = values[0];
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::DegenerateMatrix(format!(
            "{what} is not positive-definite (eigenvalues in [{min:e}, {max:e}])"
        )));
    }
    Ok((values, vectors))
}

/// Applies `f` to the spectrum of a symmetric matrix.
pub(crate) fn sym_function(values: &[f64], vectors: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let d = values.len();
    let mut scaled = vectors.clone();
    for c in 0..d {
        let s = f(values[c]);
        for r in 0..d {
            scaled[(r, c)] *= s;
        }
    }
    scaled * vectors.transpose()
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::InvalidDimension("empty matrix".into()));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidDimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

/// Serde adapter: `DMatrix<f64>` as a row-major array of arrays.
pub mod rows_serde {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Serde adapter: `DVector<f64>` as a plain array.
pub mod vec_serde {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}
