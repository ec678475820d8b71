use super::Target;
use crate::error::{check_dim, Error, Result};
use crate::special::{log_std_normal_cdf, std_normal_log_pdf, LN_SQRT_2PI};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp1, Normal, Poisson, StandardNormal};
use std::io::{Read, Write};

/// Covariates (row-major `n x p`) and binary responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbitData {
    p: usize,
    x: Vec<f64>,
    y: Vec<u8>,
}

impl ProbitData {
    pub fn new(p: usize, x: Vec<f64>, y: Vec<u8>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("probit model needs a covariate".into()));
        }
        if x.len() != p * y.len() {
            return Err(Error::DimensionMismatch {
                expected: p * y.len(),
                got: x.len(),
            });
        }
        if let Some(bad) = y.iter().find(|v| **v > 1) {
            return Err(Error::InvalidParameter(format!("response {bad} is not binary")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariate".into()));
        }
        Ok(Self { p, x, y })
    }

    pub fn empty(p: usize) -> Self {
        Self { p, x: Vec::new(), y: Vec::new() }
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    /// Same covariates with every response flipped.
    pub fn flipped(&self) -> Self {
        Self {
            p: self.p,
            x: self.x.clone(),
            y: self.y.iter().map(|v| 1 - v).collect(),
        }
    }

    /// Single Bernoulli(1/2) covariate, `P(y = 1) = Phi(beta x)`.
    pub fn simulate_single(n: usize, beta: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coin = Bernoulli::new(0.5).expect("valid probability");
        let x: Vec<f64> = (0..n).map(|_| if coin.sample(&mut rng) { 1.0 } else { 0.0 }).collect();
        let y = simulate_responses(&x, &[beta], &mut rng);
        Self { p: 1, x, y }
    }

    /// Eight covariates: constant, Bern(1/2), U(0,1), N(0,1), Exp(1), N(5,1),
    /// Pois(10), N(20, 25) (variance 25).
    pub fn simulate_multi(n: usize, beta: &[f64], seed: u64) -> Result<Self> {
        check_dim(8, beta.len())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coin = Bernoulli::new(0.5).expect("valid probability");
        let pois = Poisson::new(10.0).expect("valid rate");
        let n5 = Normal::new(5.0, 1.0).expect("valid normal");
        let n20 = Normal::new(20.0, 5.0).expect("valid normal");
        let mut x = Vec::with_capacity(8 * n);
        for _ in 0..n {
            x.push(1.0);
            x.push(if coin.sample(&mut rng) { 1.0 } else { 0.0 });
            x.push(rng.random::<f64>());
            x.push(rng.sample(StandardNormal));
            x.push(rng.sample(Exp1));
            x.push(n5.sample(&mut rng));
            x.push(pois.sample(&mut rng));
            x.push(n20.sample(&mut rng));
        }
        let y = simulate_responses(&x, beta, &mut rng);
        Ok(Self { p: 8, x, y })
    }

    /// CSV with header `x_1,...,x_p,y`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.p).map(|i| format!("x_{i}")).collect();
        header.push("y".into());
        wtr.write_record(&header)?;
        for i in 0..self.n_obs() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let ncol = header.len();
        if ncol < 2 || &header[ncol - 1] != "y" {
            return Err(Error::Parse("probit CSV needs columns x_1..x_p,y".into()));
        }
        let p = ncol - 1;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for v in rec.iter().take(p) {
                x.push(v.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
            }
            y.push(rec[p].trim().parse::<u8>().map_err(|e| Error::Parse(e.to_string()))?);
        }
        Self::new(p, x, y)
    }
}

fn simulate_responses<R: Rng>(x: &[f64], beta: &[f64], rng: &mut R) -> Vec<u8> {
    x.chunks(beta.len())
        .map(|row| {
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let z: f64 = rng.sample(StandardNormal);
            u8::from(eta + z > 0.0)
        })
        .collect()
}

/// Probit regression posterior with independent `N(0, v_j)` priors.
#[derive(Debug, Clone)]
pub struct ProbitModel {
    data: ProbitData,
    prior_variance: Vec<f64>,
}

impl ProbitModel {
    pub fn new(data: ProbitData, prior_variance: Vec<f64>) -> Result<Self> {
        let p = data.n_covariates();
        let prior_variance = match prior_variance.len() {
            1 => vec![prior_variance[0]; p],
            n if n == p => prior_variance,
            n => return Err(Error::DimensionMismatch { expected: p, got: n }),
        };
        if prior_variance.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("prior variance must be positive".into()));
        }
        Ok(Self { data, prior_variance })
    }

    pub fn data(&self) -> &ProbitData {
        &self.data
    }

    pub fn prior_variance(&self) -> &[f64] {
        &self.prior_variance
    }

    pub fn log_prior(&self, beta: &[f64]) -> f64 {
        beta.iter()
            .zip(&self.prior_variance)
            .map(|(b, v)| -0.5 * b * b / v - 0.5 * v.ln() - LN_SQRT_2PI)
            .sum()
    }

    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        let mut ll = 0.0;
        for i in 0..self.data.n_obs() {
            let eta: f64 = self.data.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            ll += if self.data.y[i] == 1 {
                log_std_normal_cdf(eta)
            } else {
                log_std_normal_cdf(-eta)
            };
        }
        ll
    }

    pub fn log_posterior(&self, beta: &[f64]) -> Result<f64> {
        check_dim(self.data.n_covariates(), beta.len())?;
        Ok(self.log_prior(beta) + self.log_likelihood(beta))
    }

    pub fn grad_log_posterior(&self, beta: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.data.n_covariates(), beta.len())?;
        let mut g: Vec<f64> = beta.iter().zip(&self.prior_variance).map(|(b, v)| -b / v).collect();
        for i in 0..self.data.n_obs() {
            let row = self.data.row(i);
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            // d/d eta of ln Phi(s eta) = s phi(eta) / Phi(s eta)
            let s = if self.data.y[i] == 1 { 1.0 } else { -1.0 };
            let d = s * (std_normal_log_pdf(eta) - log_std_normal_cdf(s * eta)).exp();
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += d * xj;
            }
        }
        Ok(g)
    }
}

impl Target for ProbitModel {
    fn dim(&self) -> usize {
        self.data.n_covariates()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.log_posterior(theta).unwrap_or(f64::NEG_INFINITY)
    }

    fn grad_log_density(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.grad_log_posterior(theta).ok()
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!(
            "probit regression, {} observations, {} covariates",
            self.data.n_obs(),
            self.data.n_covariates()
        )
    }

    fn as_probit(&self) -> Option<&ProbitModel> {
        Some(self)
    }
}
