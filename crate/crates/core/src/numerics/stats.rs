use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n − 1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn std_dev(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Standardizes in place with the population standard deviation.
/// A constant vector is mapped to all zeros.
pub fn zscore_in_place(xs: &mut [f64]) {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    let sd = var.sqrt();
    for x in xs.iter_mut() {
        *x = if sd > 0.0 { (*x - m) / sd } else { 0.0 };
    }
}

/// Sample Pearson correlation.
///
/// Zero-variance input is an error rather than a silent 0.
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(format!(
            "pearson_r on vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::precondition(format!(
            "pearson_r needs at least 3 samples, got {}",
            a.len()
        )));
    }
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::degenerate("pearson_r on a zero-variance vector"));
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    if !r.is_finite() {
        return Err(Error::NonFinite("pearson_r".into()));
    }
    Ok(r.clamp(-1.0, 1.0))
}

/// Fisher z-transform, `atanh(r)`, defined on the open interval (−1, 1).
pub fn fisher_z(r: f64) -> Result<f64> {
    if !(r.abs() < 1.0) {
        return Err(Error::Domain(format!("fisher_z requires |r| < 1, got {r}")));
    }
    Ok(r.atanh())
}

/// Welch's unequal-variance t statistic with Welch–Satterthwaite degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    /// Signed statistic. `±∞` when both groups are constant with different means.
    pub t: f64,
    pub dof: f64,
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::precondition(format!(
            "welch_t needs at least 2 samples per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a), sample_variance(b));
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        // Both groups constant: the ranking sentinel is a signed infinity.
        let diff = ma - mb;
        let t = if diff > 0.0 {
            f64::INFINITY
        } else if diff < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        return Ok(WelchResult {
            t,
            dof: na + nb - 2.0,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult { t, dof })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_fixtures() {
        assert!((pearson_r(&[1., 2., 3.], &[2., 4., 6.]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&[1., 2., 3.], &[3., 2., 1.]).unwrap() + 1.0).abs() < 1e-15);
        // 9 / (2·√21)
        let expected = 9.0 / (2.0 * 21f64.sqrt());
        let r = pearson_r(&[1., 2., 3.], &[1., 2., 4.]).unwrap();
        assert!((r - expected).abs() < 1e-14);
        assert!((r - 0.9820).abs() < 1e-4);
    }

    #[test]
    fn pearson_zero_variance_is_error() {
        assert!(matches!(
            pearson_r(&[1., 1., 1.], &[1., 2., 3.]),
            Err(Error::Degenerate(_))
        ));
        assert!(pearson_r(&[1., 2.], &[1., 2.]).is_err());
    }

    #[test]
    fn fisher_fixtures() {
        assert_eq!(fisher_z(0.0).unwrap(), 0.0);
        // atanh(0.9) = ½ ln(1.9 / 0.1) = ½ ln 19
        assert!((fisher_z(0.9).unwrap() - 0.5 * 19f64.ln()).abs() < 1e-14);
        assert!((fisher_z(0.9).unwrap() - 1.4722).abs() < 1e-4);
        assert!(matches!(fisher_z(1.0), Err(Error::Domain(_))));
        assert!(fisher_z(-1.0).is_err());
        assert!(fisher_z(f64::NAN).is_err());
    }

    #[test]
    fn welch_fixtures() {
        let same = welch_t(&[1., 2., 3.], &[1., 2., 3.]).unwrap();
        assert_eq!(same.t, 0.0);

        let w = welch_t(&[2., 4., 6.], &[1., 3., 5.]).unwrap();
        // means 4 and 3, variances 4 and 4: t = 1 / √(8/3), dof = (8/3)² / (2·(4/3)²/2)
        assert!((w.t - 1.0 / (8.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((w.t - 0.6124).abs() < 1e-4);
        assert!((w.dof - 4.0).abs() < 1e-12);

        let s = welch_t(&[1., 3., 5.], &[2., 4., 6.]).unwrap();
        assert_eq!(s.t, -w.t);
        assert_eq!(s.dof, w.dof);
    }

    #[test]
    fn welch_constant_groups() {
        let up = welch_t(&[2., 2.], &[1., 1., 1.]).unwrap();
        assert_eq!(up.t, f64::INFINITY);
        let down = welch_t(&[1., 1., 1.], &[2., 2.]).unwrap();
        assert_eq!(down.t, f64::NEG_INFINITY);
        let tie = welch_t(&[1., 1.], &[1., 1.]).unwrap();
        assert_eq!(tie.t, 0.0);
        assert!(welch_t(&[1.], &[1., 2.]).is_err());
    }

    #[test]
    fn zscore_constant_is_zero() {
        let mut v = vec![3.0; 5];
        zscore_in_place(&mut v);
        assert!(v.iter().all(|&x| x == 0.0));
    }
}
