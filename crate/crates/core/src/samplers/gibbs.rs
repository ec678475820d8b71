//! Albert-Chib data augmentation for probit regression.

use super::ChainConfig;
use crate::draws::ChainDraws;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, lower_mul, spd_inverse};
use crate::special::std_normal_quantile;
use crate::special::std_normal_cdf;
use crate::targets::ProbitModel;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

/// Above this truncation point the inverse-CDF route loses precision and
/// exponential rejection takes over.
const TAIL_TRUNCATION: f64 = 5.0;

/// Standard normal conditioned on `x >= a`.
pub fn sample_truncated_below<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        // acceptance probability is at least 1/2
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x >= a {
                return x;
            }
        }
    } else if a <= TAIL_TRUNCATION {
        let upper = std_normal_cdf(-a);
        loop {
            let u: f64 = rng.random::<f64>();
            let x = -std_normal_quantile(u * upper);
            if x.is_finite() && x >= a {
                return x;
            }
        }
    } else {
        // Robert (1995): translated exponential proposal with optimal rate
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = rng.sample(Exp1);
            let x = a + e / rate;
            let u: f64 = rng.random();
            if u <= (-0.5 * (x - rate).powi(2)).exp() {
                return x;
            }
        }
    }
}

/// Precomputed conditional structure of the Gibbs sampler.
///
/// Rows whose covariates are all zero carry no information about `beta`;
/// their latent variables are not drawn.
#[derive(Debug, Clone)]
pub struct ProbitGibbs {
    p: usize,
    x: Vec<f64>,
    y: Vec<u8>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl ProbitGibbs {
    pub fn new(model: &ProbitModel) -> Result<Self> {
        let data = model.data();
        let p = data.n_covariates();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..data.n_obs() {
            let row = data.row(i);
            if row.iter().any(|v| *v != 0.0) {
                x.extend_from_slice(row);
                y.push(data.y()[i]);
            }
        }
        let mut precision = DMatrix::<f64>::zeros(p, p);
        for row in x.chunks(p) {
            for a in 0..p {
                for b in 0..p {
                    precision[(a, b)] += row[a] * row[b];
                }
            }
        }
        for (j, v) in model.prior_variance().iter().enumerate() {
            precision[(j, j)] += 1.0 / v;
        }
        let cov = spd_inverse(&precision)
            .map_err(|e| Error::NotPositiveDefinite(format!("X^T X + V0^-1 is singular: {e}")))?;
        let chol = cholesky_lower(&cov)?;
        Ok(Self { p, x, y, cov, chol })
    }

    /// `V = (X^T X + V0^-1)^-1`.
    pub fn conditional_covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn n_active(&self) -> usize {
        self.y.len()
    }

    /// Latent draws for the active rows given `beta`.
    pub fn draw_latent<R: Rng + ?Sized>(&self, beta: &[f64], rng: &mut R, z: &mut Vec<f64>) {
        z.clear();
        for (row, &yi) in self.x.chunks(self.p).zip(&self.y) {
            let mu: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let zi = if yi == 1 {
                mu + sample_truncated_below(-mu, rng)
            } else {
                mu - sample_truncated_below(mu, rng)
            };
            z.push(zi);
        }
    }

    /// `V X^T z`.
    pub fn conditional_mean(&self, z: &[f64]) -> Vec<f64> {
        let mut xtz = vec![0.0; self.p];
        for (row, zi) in self.x.chunks(self.p).zip(z) {
            for (acc, xv) in xtz.iter_mut().zip(row) {
                *acc += xv * zi;
            }
        }
        (0..self.p)
            .map(|i| (0..self.p).map(|j| self.cov[(i, j)] * xtz[j]).sum())
            .collect()
    }

    /// `beta ~ N(V X^T z, V)`.
    pub fn draw_beta<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> Vec<f64> {
        let mean = self.conditional_mean(z);
        let xi: Vec<f64> = (0..self.p).map(|_| rng.sample(StandardNormal)).collect();
        let mut noise = vec![0.0; self.p];
        lower_mul(&self.chol, &xi, &mut noise);
        mean.iter().zip(&noise).map(|(m, n)| m + n).collect()
    }
}

pub fn gibbs_probit_chain<R: Rng + ?Sized>(
    model: &ProbitModel,
    cfg: &ChainConfig,
    chain_id: usize,
    rng: &mut R,
) -> Result<ChainDraws> {
    let gibbs = ProbitGibbs::new(model)?;
    let p = model.data().n_covariates();
    let mut beta = cfg.init.sample(rng);
    let mut z = Vec::with_capacity(gibbs.n_active());
    let mut out = ChainDraws::with_capacity(chain_id, p, cfg.iterations);
    for it in 0..cfg.iterations {
        gibbs.draw_latent(&beta, rng, &mut z);
        beta = gibbs.draw_beta(&z, rng);
        out.push(it as u64, &beta, it < cfg.burn_in)?;
    }
    Ok(out)
}
