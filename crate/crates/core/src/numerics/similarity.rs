use super::{pearson_r, RealMatrix};
use crate::{Error, Result};

/// Linear centered kernel alignment between two representations of the same samples.
///
/// `‖YcᵀXc‖²_F / (‖XcᵀXc‖_F · ‖YcᵀYc‖_F)` with column-centered inputs.
pub fn linear_cka(x: &RealMatrix, y: &RealMatrix) -> Result<f64> {
    if x.rows() != y.rows() {
        return Err(Error::dims(format!(
            "linear_cka on {} and {} samples",
            x.rows(),
            y.rows()
        )));
    }
    if x.rows() < 2 {
        return Err(Error::precondition("linear_cka needs at least 2 samples"));
    }
    let (xc, _) = x.centered();
    let (yc, _) = y.centered();
    let cross = yc.t_matmul(&xc)?.frobenius_norm();
    let xx = xc.t_matmul(&xc)?.frobenius_norm();
    let yy = yc.t_matmul(&yc)?.frobenius_norm();
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::degenerate("linear_cka on an all-zero centered matrix"));
    }
    Ok((cross * cross / (xx * yy)).clamp(0.0, 1.0))
}

/// n×n correlation-distance dissimilarity matrix (1 − Pearson between rows).
pub fn correlation_distance_rdm(x: &RealMatrix) -> Result<RealMatrix> {
    let n = x.rows();
    let mut out = RealMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = 1.0 - pearson_r(x.row(i), x.row(j))?;
            out.set(i, j, d);
            out.set(j, i, d);
        }
    }
    Ok(out)
}

/// Strictly upper-triangular entries in row order.
pub fn upper_triangle(m: &RealMatrix) -> Vec<f64> {
    let n = m.rows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(m.get(i, j));
        }
    }
    out
}

/// Pearson correlation between the upper triangles of the two correlation-distance RDMs.
pub fn rdm_similarity(x: &RealMatrix, y: &RealMatrix) -> Result<f64> {
    if x.rows() != y.rows() {
        return Err(Error::dims(format!(
            "rdm_similarity on {} and {} samples",
            x.rows(),
            y.rows()
        )));
    }
    if x.rows() < 4 {
        return Err(Error::precondition("rdm_similarity needs at least 4 samples"));
    }
    let a = upper_triangle(&correlation_distance_rdm(x)?);
    let b = upper_triangle(&correlation_distance_rdm(y)?);
    pearson_r(&a, &b).map_err(|e| match e {
        Error::Degenerate(_) => Error::degenerate("constant dissimilarity vector"),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_is_degenerate() {
        let x = RealMatrix::zeros(4, 3);
        let y = RealMatrix::from_fn(4, 2, |i, j| (i + j) as f64);
        assert!(matches!(linear_cka(&x, &y), Err(Error::Degenerate(_))));
    }

    #[test]
    fn cka_shape_errors() {
        let x = RealMatrix::zeros(4, 3);
        let y = RealMatrix::zeros(5, 3);
        assert!(linear_cka(&x, &y).is_err());
        assert!(rdm_similarity(&x, &y).is_err());
    }

    #[test]
    fn rdm_needs_four_rows() {
        let x = RealMatrix::from_fn(3, 3, |i, j| (i * j) as f64 + j as f64);
        assert!(matches!(rdm_similarity(&x, &x), Err(Error::Precondition(_))));
    }
}
