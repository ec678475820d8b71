use super::Target;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky_lower, forward_substitute, log_det_from_cholesky, lower_mul, spd_inverse};
use crate::special::log_sum_exp;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use std::f64::consts::PI;

/// Finite mixture of multivariate normals, `sum_k w_k N(mu_k, Sigma_k)`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<DMatrix<f64>>,
    chols: Vec<DMatrix<f64>>,
    precisions: Vec<DMatrix<f64>>,
    // ln w_k - p/2 ln(2 pi) - 1/2 ln|Sigma_k|
    log_consts: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::InvalidParameter(format!(
                "{k} weights, {} means, {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("negative mixture weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
        }
        let p = means[0].len();
        if p == 0 {
            return Err(Error::InvalidParameter("zero-dimensional mixture".into()));
        }
        let mut chols = Vec::with_capacity(k);
        let mut precisions = Vec::with_capacity(k);
        let mut log_consts = Vec::with_capacity(k);
        for (i, (m, s)) in means.iter().zip(&covariances).enumerate() {
            check_dim(p, m.len())?;
            check_dim(p, s.nrows())?;
            let l = cholesky_lower(s)
                .map_err(|e| Error::NotPositiveDefinite(format!("component {i}: {e}")))?;
            log_consts.push(
                weights[i].ln() - 0.5 * p as f64 * (2.0 * PI).ln() - 0.5 * log_det_from_cholesky(&l),
            );
            precisions.push(spd_inverse(s)?);
            chols.push(l);
        }
        Ok(Self {
            weights,
            means,
            covariances,
            chols,
            precisions,
            log_consts,
        })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// `E[theta] = sum_k w_k mu_k`.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (o, v) in out.iter_mut().zip(m) {
                *o += w * v;
            }
        }
        out
    }

    fn component_log_terms(&self, theta: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.dim()];
        self.means
            .iter()
            .zip(&self.chols)
            .zip(&self.log_consts)
            .map(|((m, l), c)| {
                for (ri, (t, mi)) in r.iter_mut().zip(theta.iter().zip(m)) {
                    *ri = t - mi;
                }
                forward_substitute(l, &mut r);
                c - 0.5 * r.iter().map(|v| v * v).sum::<f64>()
            })
            .collect()
    }

    /// `ln sum_k w_k N(theta; mu_k, Sigma_k)`.
    pub fn log_density_checked(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        Ok(log_sum_exp(&self.component_log_terms(theta)))
    }

    /// Posterior component probabilities `r_k(theta)`.
    pub fn responsibilities(&self, theta: &[f64]) -> Vec<f64> {
        let terms = self.component_log_terms(theta);
        let lse = log_sum_exp(&terms);
        terms.iter().map(|t| (t - lse).exp()).collect()
    }

    /// `sum_k r_k(theta) Sigma_k^{-1} (mu_k - theta)`.
    pub fn grad_checked(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), theta.len())?;
        let p = self.dim();
        let resp = self.responsibilities(theta);
        let mut g = vec![0.0; p];
        for ((r, m), prec) in resp.iter().zip(&self.means).zip(&self.precisions) {
            for i in 0..p {
                let mut s = 0.0;
                for j in 0..p {
                    s += prec[(i, j)] * (m[j] - theta[j]);
                }
                g[i] += r * s;
            }
        }
        Ok(g)
    }

    /// Hessian of the log density:
    /// `sum_k r_k (a_k a_k^T - P_k) - g g^T` with `a_k = P_k (mu_k - theta)`.
    pub fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), theta.len())?;
        let p = self.dim();
        let resp = self.responsibilities(theta);
        let mut h = DMatrix::<f64>::zeros(p, p);
        let mut g = vec![0.0; p];
        for ((r, m), prec) in resp.iter().zip(&self.means).zip(&self.precisions) {
            let a: Vec<f64> = (0..p)
                .map(|i| (0..p).map(|j| prec[(i, j)] * (m[j] - theta[j])).sum())
                .collect();
            for i in 0..p {
                g[i] += r * a[i];
                for j in 0..p {
                    h[(i, j)] += r * (a[i] * a[j] - prec[(i, j)]);
                }
            }
        }
        for i in 0..p {
            for j in 0..p {
                h[(i, j)] -= g[i] * g[j];
            }
        }
        Ok(h)
    }

    /// Newton ascent to the local mode nearest `start`.
    pub fn local_mode(&self, start: &[f64]) -> Result<Vec<f64>> {
        let mut x = start.to_vec();
        for _ in 0..100 {
            let g = self.grad_checked(&x)?;
            let neg_h = -self.hessian(&x)?;
            let step = match spd_inverse(&neg_h) {
                Ok(inv) => inv * nalgebra::DVector::from_vec(g.clone()),
                // outside the concave region: small gradient step instead
                Err(_) => nalgebra::DVector::from_vec(g.clone()) * 0.1,
            };
            for (xi, si) in x.iter_mut().zip(step.iter()) {
                *xi += si;
            }
            if step.norm() < 1e-12 {
                break;
            }
        }
        Ok(x)
    }

    /// Independent draw; returns the component index alongside.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.n_components() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let p = self.dim();
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = vec![0.0; p];
        lower_mul(&self.chols[k], &z, &mut x);
        for (xi, mi) in x.iter_mut().zip(&self.means[k]) {
            *xi += mi;
        }
        (k, x)
    }
}

impl Target for GaussianMixture {
    fn dim(&self) -> usize {
        GaussianMixture::dim(self)
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.log_density_checked(theta).unwrap_or(f64::NEG_INFINITY)
    }

    fn grad_log_density(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.grad_checked(theta).ok()
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!("{}-component Gaussian mixture on R^{}", self.n_components(), self.dim())
    }
}

/// The four-component bivariate mixture used for the multimodal experiments.
pub fn paper_mixture() -> GaussianMixture {
    let m = |a: f64, b: f64, c: f64| DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
    GaussianMixture::new(
        vec![0.02, 0.20, 0.20, 0.58],
        vec![vec![3.0, 3.0], vec![7.0, -3.0], vec![2.0, 7.0], vec![-5.0, 0.0]],
        vec![m(1.0, 0.2, 1.0), m(2.0, -0.5, 0.5), m(1.3, 0.3, 0.4), m(1.0, 1.0, 2.5)],
    )
    .expect("fixed mixture is valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomMixtureOptions {
    /// Means are uniform on `(-half_width, half_width)^p`.
    pub mean_half_width: f64,
    /// Multiplies every unit-diagonal covariance.
    pub covariance_scale: f64,
}

impl Default for RandomMixtureOptions {
    fn default() -> Self {
        Self {
            mean_half_width: 10.0,
            covariance_scale: 1.0,
        }
    }
}

/// Random mixture: uniform means, `L^T L` covariances rescaled to unit
/// diagonal (`L` with iid standard normal entries), Dirichlet(1, ..., 1)
/// weights. Deterministic in `seed`.
pub fn random_mixture(p: usize, k: usize, seed: u64, opts: RandomMixtureOptions) -> Result<GaussianMixture> {
    if p == 0 || k == 0 {
        return Err(Error::InvalidParameter(format!("random mixture with p={p}, K={k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..p)
                .map(|_| rng.random_range(-opts.mean_half_width..opts.mean_half_width))
                .collect()
        })
        .collect();
    let mut covariances = Vec::with_capacity(k);
    for _ in 0..k {
        let l = DMatrix::<f64>::from_fn(p, p, |_, _| rng.sample(StandardNormal));
        let a = l.transpose() * &l;
        let d: Vec<f64> = a.diagonal().iter().map(|v| v.sqrt()).collect();
        let corr = DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                opts.covariance_scale
            } else {
                opts.covariance_scale * a[(i, j)] / (d[i] * d[j])
            }
        });
        covariances.push(corr);
    }
    let gammas: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = gammas.iter().sum();
    let mut weights: Vec<f64> = gammas.iter().map(|g| g / total).collect();
    // absorb rounding so the simplex check holds to 1e-12
    let drift: f64 = 1.0 - weights.iter().sum::<f64>();
    weights[k - 1] += drift;
    GaussianMixture::new(weights, means, covariances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::finite_difference_gradient;

    fn direct_density(m: &GaussianMixture, x: &[f64]) -> f64 {
        // independent route: explicit 2x2 inverse and determinant
        let mut total = 0.0;
        for k in 0..m.n_components() {
            let s = &m.covariances()[k];
            let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
            let (dx, dy) = (x[0] - m.means()[k][0], x[1] - m.means()[k][1]);
            let q = (s[(1, 1)] * dx * dx - 2.0 * s[(0, 1)] * dx * dy + s[(0, 0)] * dy * dy) / det;
            total += m.weights()[k] * (-0.5 * q).exp() / (2.0 * PI * det.sqrt());
        }
        total
    }

    #[test]
    fn paper_mixture_at_first_mean_matches_direct_sum() {
        let m = paper_mixture();
        let direct = direct_density(&m, &[3.0, 3.0]).ln();
        let got = m.log_density(&[3.0, 3.0]);
        assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
        // frozen from an independent scipy summation
        assert!((got - (-5.729_489_074_559_31)).abs() < 1e-9, "{got}");
    }

    #[test]
    fn standard_normal_at_mode() {
        let m = GaussianMixture::new(vec![1.0], vec![vec![0.0, 0.0]], vec![DMatrix::identity(2, 2)]).unwrap();
        assert!((m.log_density(&[0.0, 0.0]) + (2.0 * PI).ln()).abs() < 1e-14);
        let g = m.grad_checked(&[0.3, -1.2]).unwrap();
        assert!((g[0] + 0.3).abs() < 1e-14 && (g[1] - 1.2).abs() < 1e-14);
    }

    #[test]
    fn symmetric_mixture_label_swap() {
        let a = 2.5;
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.7]);
        let m1 = GaussianMixture::new(vec![0.5, 0.5], vec![vec![a, 0.0], vec![-a, 0.0]], vec![s.clone(), s.clone()]).unwrap();
        let m2 = GaussianMixture::new(vec![0.5, 0.5], vec![vec![-a, 0.0], vec![a, 0.0]], vec![s.clone(), s]).unwrap();
        assert_eq!(m1.log_density(&[0.0, 0.0]), m2.log_density(&[0.0, 0.0]));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = paper_mixture();
        assert!(matches!(m.log_density_checked(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(m.grad_checked(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences_at_first_mean() {
        let m = paper_mixture();
        let x = [3.0, 3.0];
        let g = m.grad_checked(&x).unwrap();
        let fd = finite_difference_gradient(&m, &x, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_small_at_separated_means() {
        let s = DMatrix::identity(2, 2);
        let m = GaussianMixture::new(vec![0.5, 0.5], vec![vec![0.0, 0.0], vec![20.0, 0.0]], vec![s.clone(), s]).unwrap();
        // neighbor leakage r_2 ~ exp(-200) times distance 20
        let g = m.grad_checked(&[0.0, 0.0]).unwrap();
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-80);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let m = paper_mixture();
        let x = [2.0, 1.0];
        let h = m.hessian(&x).unwrap();
        let eps = 1e-6;
        for j in 0..2 {
            let mut up = x;
            let mut dn = x;
            up[j] += eps;
            dn[j] -= eps;
            let gu = m.grad_checked(&up).unwrap();
            let gd = m.grad_checked(&dn).unwrap();
            for i in 0..2 {
                let fd = (gu[i] - gd[i]) / (2.0 * eps);
                assert!((h[(i, j)] - fd).abs() < 1e-5 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn local_mode_is_stationary() {
        let m = paper_mixture();
        for mu in m.means().to_vec() {
            let mode = m.local_mode(&mu).unwrap();
            let g = m.grad_checked(&mode).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-8));
            assert!(mode.iter().zip(&mu).all(|(a, b)| (a - b).abs() < 0.5));
        }
    }

    #[test]
    fn random_mixture_properties() {
        let a = random_mixture(10, 4, 7, RandomMixtureOptions::default()).unwrap();
        let b = random_mixture(10, 4, 7, RandomMixtureOptions::default()).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.means(), b.means());
        assert!((a.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for s in a.covariances() {
            assert!(s.diagonal().iter().all(|d| (d - 1.0).abs() < 1e-15));
        }
        assert!(a.means().iter().flatten().all(|v| v.abs() < 10.0));
        let one = random_mixture(3, 1, 1, RandomMixtureOptions::default()).unwrap();
        assert_eq!(one.weights(), &[1.0]);
        assert!(random_mixture(0, 1, 1, RandomMixtureOptions::default()).is_err());
    }
}
