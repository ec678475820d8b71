//! Multivariate Student-t distribution, with the normal as the `nu = inf` limit.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky_lower, forward_substitute, log_det_from_cholesky, lower_mul};
use crate::special::ln_gamma;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use std::f64::consts::PI;

/// Degrees of freedom used for instrumentals and trajectory innovations.
pub const DEFAULT_NU: f64 = 4.0;

/// `t_nu(location, inflation * scale)`.
///
/// The covariance is `inflation * nu / (nu - 2) * scale` for `nu > 2`.
#[derive(Debug, Clone)]
pub struct MvtDist {
    location: Vec<f64>,
    scale: DMatrix<f64>,
    chol: DMatrix<f64>,
    nu: f64,
    inflation: f64,
    log_norm: f64,
    chi2: Option<ChiSquared<f64>>,
}

impl MvtDist {
    pub fn new(location: Vec<f64>, scale: DMatrix<f64>, nu: f64) -> Result<Self> {
        Self::with_inflation(location, scale, nu, 1.0)
    }

    pub fn with_inflation(
        location: Vec<f64>,
        scale: DMatrix<f64>,
        nu: f64,
        inflation: f64,
    ) -> Result<Self> {
        let p = location.len();
        if p == 0 {
            return Err(Error::InvalidParameter("zero-dimensional distribution".into()));
        }
        check_dim(p, scale.nrows())?;
        if !(nu > 0.0) {
            return Err(Error::InvalidParameter(format!("degrees of freedom {nu}")));
        }
        if !(inflation > 0.0 && inflation.is_finite()) {
            return Err(Error::InvalidParameter(format!("inflation {inflation}")));
        }
        if location.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("location".into()));
        }
        let scale = scale * inflation;
        let chol = cholesky_lower(&scale)?;
        let log_det = log_det_from_cholesky(&chol);
        let pf = p as f64;
        let log_norm = if nu.is_infinite() {
            -0.5 * pf * (2.0 * PI).ln() - 0.5 * log_det
        } else {
            ln_gamma(0.5 * (nu + pf)) - ln_gamma(0.5 * nu) - 0.5 * pf * (nu * PI).ln() - 0.5 * log_det
        };
        let chi2 = if nu.is_infinite() {
            None
        } else {
            Some(ChiSquared::new(nu).map_err(|e| Error::InvalidParameter(e.to_string()))?)
        };
        Ok(Self {
            location,
            scale,
            chol,
            nu,
            inflation,
            log_norm,
            chi2,
        })
    }

    /// Standard `t_nu(0, I_p)`.
    pub fn standard(p: usize, nu: f64) -> Result<Self> {
        Self::new(vec![0.0; p], DMatrix::identity(p, p), nu)
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn location(&self) -> &[f64] {
        &self.location
    }

    /// Scale matrix after inflation.
    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn inflation(&self) -> f64 {
        self.inflation
    }

    /// Covariance, or `None` when `nu <= 2`.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        if self.nu.is_infinite() {
            Some(self.scale.clone())
        } else if self.nu > 2.0 {
            Some(&self.scale * (self.nu / (self.nu - 2.0)))
        } else {
            None
        }
    }

    /// Squared Mahalanobis distance of `x` under the scale matrix.
    pub fn mahalanobis2(&self, x: &[f64]) -> f64 {
        let mut r: Vec<f64> = x.iter().zip(&self.location).map(|(a, b)| a - b).collect();
        forward_substitute(&self.chol, &mut r);
        r.iter().map(|v| v * v).sum()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let d2 = self.mahalanobis2(x);
        if self.nu.is_infinite() {
            self.log_norm - 0.5 * d2
        } else {
            self.log_norm - 0.5 * (self.nu + self.dim() as f64) * (d2 / self.nu).ln_1p()
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let p = self.dim();
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let mut lz = vec![0.0; p];
        lower_mul(&self.chol, &z, &mut lz);
        let factor = match &self.chi2 {
            Some(chi2) => (self.nu / chi2.sample(rng)).sqrt(),
            None => 1.0,
        };
        for i in 0..p {
            out[i] = self.location[i] + factor * lz[i];
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_dimensional_density_integrates_to_one() {
        // Composite Simpson on [-L, L] plus the analytic t4 tail mass beyond L.
        let q = MvtDist::new(vec![0.3], DMatrix::from_element(1, 1, 2.0), 4.0).unwrap();
        let (a, b, n) = (-200.0, 200.0, 400_000);
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let x = a + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * q.log_density(&[x]).exp();
        }
        s *= h / 3.0;
        assert!((s - 1.0).abs() < 1e-5, "integral {s}");
    }

    #[test]
    fn t4_matches_closed_form_1d() {
        // t4 standard density: 3 / (8 (1 + x^2/4)^(5/2))
        let q = MvtDist::standard(1, 4.0).unwrap();
        for &x in &[0.0, 0.5, -2.0, 7.0] {
            let exact: f64 = 3.0 / (8.0 * (1.0 + x * x / 4.0f64).powf(2.5));
            assert!((q.log_density(&[x]) - exact.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_limit_density() {
        let q = MvtDist::new(vec![0.0, 0.0], DMatrix::identity(2, 2), f64::INFINITY).unwrap();
        assert!((q.log_density(&[0.0, 0.0]) + (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn sample_covariance_matches_inflated_scale() {
        let scale = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let q = MvtDist::with_inflation(vec![1.0, -1.0], scale.clone(), 6.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| q.sample(&mut rng)).collect();
        let (mean, cov, _) =
            crate::linalg::mean_and_covariance(draws.iter().map(|v| v.as_slice()), 2);
        let expected = scale * (2.0 * 6.0 / 4.0);
        assert!((mean[0] - 1.0).abs() < 0.02 && (mean[1] + 1.0).abs() < 0.02);
        assert!((cov - &expected).abs().max() < 0.05 * expected.abs().max());
        assert!((q.covariance().unwrap() - expected).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MvtDist::new(vec![0.0], DMatrix::from_element(1, 1, -1.0), 4.0).is_err());
        assert!(MvtDist::new(vec![0.0], DMatrix::from_element(1, 1, 1.0), 0.0).is_err());
        assert!(MvtDist::new(vec![0.0, 1.0], DMatrix::identity(3, 3), 4.0).is_err());
    }
}
