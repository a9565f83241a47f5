use nalgebra::DMatrix;

use super::RealMatrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RidgeOptions {
    /// Fit an unpenalized intercept by centering `X` and `Y`.
    pub intercept: bool,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self { intercept: true }
    }
}

/// Fitted ridge coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeFit {
    /// d×v coefficient matrix.
    pub coefficients: RealMatrix,
    /// Per-target intercept (all zeros without intercept fitting).
    pub intercept: Vec<f64>,
}

impl RidgeFit {
    pub fn predict(&self, x: &RealMatrix) -> Result<RealMatrix> {
        let mut out = x.matmul(&self.coefficients)?;
        for r in 0..out.rows() {
            for (v, c) in out.row_mut(r).iter_mut().zip(&self.intercept) {
                *v += c;
            }
        }
        Ok(out)
    }
}

/// Centered design and Gram matrix for one (X, Y) pair, reusable across penalties.
///
/// When `d ≤ n` the primal normal equations `(XcᵀXc + λI) B = XcᵀYc` are solved;
/// otherwise the dual form `B = Xcᵀ (XcXcᵀ + λI)⁻¹ Yc`, which has the same minimizer.
#[derive(Clone, Debug)]
pub struct RidgeProblem {
    xc: RealMatrix,
    x_means: Vec<f64>,
    y_means: Vec<f64>,
    gram: RealMatrix,
    // primal: XcᵀYc; dual: Yc
    rhs: RealMatrix,
    dual: bool,
}

impl RidgeProblem {
    pub fn new(x: &RealMatrix, y: &RealMatrix, opts: RidgeOptions) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::dims(format!(
                "ridge design has {} rows but targets have {}",
                x.rows(),
                y.rows()
            )));
        }
        if x.rows() < 2 {
            return Err(Error::precondition("ridge needs at least 2 samples"));
        }
        let (xc, x_means, yc, y_means) = if opts.intercept {
            let (xc, xm) = x.centered();
            let (yc, ym) = y.centered();
            (xc, xm, yc, ym)
        } else {
            (x.clone(), vec![0.0; x.cols()], y.clone(), vec![0.0; y.cols()])
        };
        let dual = x.cols() > x.rows();
        let (gram, rhs) = if dual {
            (xc.matmul_t(&xc)?, yc.clone())
        } else {
            (xc.t_matmul(&xc)?, xc.t_matmul(&yc)?)
        };
        Ok(Self {
            xc,
            x_means,
            y_means,
            gram,
            rhs,
            dual,
        })
    }

    pub fn solve(&self, lambda: f64) -> Result<RidgeFit> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::precondition(format!(
                "ridge penalty must be finite and ≥ 0, got {lambda}"
            )));
        }
        let n = self.gram.rows();
        let mut g = DMatrix::from_row_slice(n, n, self.gram.data());
        for i in 0..n {
            g[(i, i)] += lambda;
        }
        let chol = g.cholesky().ok_or_else(|| {
            Error::RankDeficient(format!("{n}x{n} normal equations are not positive definite"))
        })?;
        if lambda == 0.0 {
            check_conditioning(chol.l_dirty(), &self.gram)?;
        }
        let rhs = DMatrix::from_row_slice(self.rhs.rows(), self.rhs.cols(), self.rhs.data());
        let sol = chol.solve(&rhs);
        let sol = to_real(&sol)?;
        let coefficients = if self.dual {
            self.xc.t_matmul(&sol)?
        } else {
            sol
        };
        let intercept = self
            .y_means
            .iter()
            .enumerate()
            .map(|(j, ym)| {
                ym - self
                    .x_means
                    .iter()
                    .enumerate()
                    .map(|(p, xm)| xm * coefficients.get(p, j))
                    .sum::<f64>()
            })
            .collect();
        Ok(RidgeFit {
            coefficients,
            intercept,
        })
    }
}

/// Minimizer of `‖Y − XB − 1cᵀ‖² + λ‖B‖²` with an unpenalized intercept.
pub fn ridge_fit(x: &RealMatrix, y: &RealMatrix, lambda: f64) -> Result<RidgeFit> {
    RidgeProblem::new(x, y, RidgeOptions::default())?.solve(lambda)
}

impl RidgeOptions {
    pub fn fit(self, x: &RealMatrix, y: &RealMatrix, lambda: f64) -> Result<RidgeFit> {
        RidgeProblem::new(x, y, self)?.solve(lambda)
    }
}

// An unregularized Cholesky can succeed on a numerically singular Gram matrix;
// reject pivots that are round-off relative to the largest diagonal entry.
fn check_conditioning(l: &DMatrix<f64>, gram: &RealMatrix) -> Result<()> {
    let n = gram.rows();
    let max_diag = (0..n).map(|i| gram.get(i, i)).fold(0.0, f64::max);
    let tol = max_diag * n as f64 * f64::EPSILON * 16.0;
    for i in 0..n {
        let pivot = l[(i, i)] * l[(i, i)];
        if !(pivot > tol) {
            return Err(Error::RankDeficient(format!(
                "pivot {i} of the unpenalized normal equations is {pivot:e}"
            )));
        }
    }
    Ok(())
}

fn to_real(m: &DMatrix<f64>) -> Result<RealMatrix> {
    let (r, c) = m.shape();
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            data.push(m[(i, j)]);
        }
    }
    RealMatrix::new(r, c, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_identity_without_intercept() {
        let x = RealMatrix::identity(2);
        let y = RealMatrix::column(&[3.0, 5.0]).unwrap();
        let fit = RidgeOptions { intercept: false }.fit(&x, &y, 0.0).unwrap();
        assert_eq!(fit.coefficients.data(), &[3.0, 5.0]);
        assert_eq!(fit.predict(&x).unwrap().data(), &[3.0, 5.0]);
    }

    #[test]
    fn identity_with_intercept_is_rank_deficient() {
        // Centering the 2×2 identity leaves a rank-one design.
        let x = RealMatrix::identity(2);
        let y = RealMatrix::column(&[3.0, 5.0]).unwrap();
        assert!(matches!(ridge_fit(&x, &y, 0.0), Err(Error::RankDeficient(_))));
        // Any positive penalty makes it solvable.
        assert!(ridge_fit(&x, &y, 1e-6).is_ok());
    }

    #[test]
    fn single_feature_closed_form() {
        // Centered feature with xᵀx = 1 and xᵀy = 2: slope = 2 / (1 + 1).
        let s = 0.5f64.sqrt();
        let x = RealMatrix::column(&[s, -s]).unwrap();
        let y = RealMatrix::column(&[s * 2.0, -s * 2.0]).unwrap();
        let fit = ridge_fit(&x, &y, 1.0).unwrap();
        assert!((fit.coefficients.get(0, 0) - 1.0).abs() < 1e-14);
        assert!(fit.intercept[0].abs() < 1e-14);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let x = RealMatrix::from_fn(6, 2, |i, _| i as f64);
        let y = RealMatrix::from_fn(6, 1, |i, _| (i * i) as f64);
        assert!(matches!(ridge_fit(&x, &y, 0.0), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn dual_and_primal_agree() {
        // 5 samples, 8 features forces the dual route; compare with the primal on the same data.
        let x = RealMatrix::from_fn(5, 8, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * j as f64);
        let y = RealMatrix::from_fn(5, 2, |i, j| i as f64 - j as f64 * 0.3);
        let dual = ridge_fit(&x, &y, 0.7).unwrap();
        let mut primal = RidgeProblem::new(&x, &y, RidgeOptions::default()).unwrap();
        primal.gram = primal.xc.t_matmul(&primal.xc).unwrap();
        primal.rhs = primal.xc.t_matmul(&y.centered().0).unwrap();
        primal.dual = false;
        let p = primal.solve(0.7).unwrap();
        for (a, b) in dual.coefficients.data().iter().zip(p.coefficients.data()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = RealMatrix::zeros(3, 2);
        let y = RealMatrix::zeros(4, 1);
        assert!(matches!(ridge_fit(&x, &y, 1.0), Err(Error::DimensionMismatch(_))));
        let y = RealMatrix::zeros(3, 1);
        assert!(ridge_fit(&x, &y, f64::NAN).is_err());
    }
}
