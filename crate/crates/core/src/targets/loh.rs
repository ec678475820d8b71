//! Loss-of-heterozygosity binomial / beta-binomial mixture.
//!
//! `X_i ~ eta Bin(N_i, pi1) + (1 - eta) BetaBin(N_i, pi2, gamma)` with the
//! beta-binomial shape parameters `pi2 / omega` and `(1 - pi2) / omega`,
//! `omega = e^gamma / (2 (1 + e^gamma))`. The sampled coordinates are
//! `(logit eta, logit pi1, logit pi2, gamma)` with independent flat priors on
//! `[-30, 30]`.

use super::Target;
use crate::error::{check_dim, Error, Result};
use crate::special::{ln_choose, log_add_exp, logistic, softplus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution};
use std::io::{Read, Write};

pub const LOH_PRIOR_HALF_WIDTH: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LohParameters {
    pub eta: f64,
    pub pi1: f64,
    pub pi2: f64,
    pub gamma: f64,
}

impl LohParameters {
    pub fn from_unconstrained(theta: &[f64]) -> Self {
        Self {
            eta: logistic(theta[0]),
            pi1: logistic(theta[1]),
            pi2: logistic(theta[2]),
            gamma: theta[3],
        }
    }

    pub fn to_unconstrained(&self) -> [f64; 4] {
        use crate::special::logit;
        [logit(self.eta), logit(self.pi1), logit(self.pi2), self.gamma]
    }

    /// `omega = e^gamma / (2 (1 + e^gamma))`.
    pub fn omega(&self) -> f64 {
        0.5 * logistic(self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LohModel {
    // (losses x_i, sample size n_i)
    data: Vec<(u32, u32)>,
}

impl LohModel {
    pub fn new(data: Vec<(u32, u32)>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("LOH data".into()));
        }
        if let Some((x, n)) = data.iter().find(|(x, n)| x > n) {
            return Err(Error::InvalidParameter(format!("loss count {x} exceeds sample size {n}")));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &[(u32, u32)] {
        &self.data
    }

    /// Reads a CSV with header `x,n`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Parse(format!("LOH CSV is missing column `{name}`")))
        };
        let (ix, in_) = (col("x")?, col("n")?);
        let mut data = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| rec[i].trim().parse::<u32>().map_err(|e| Error::Parse(e.to_string()));
            data.push((parse(ix)?, parse(in_)?));
        }
        Self::new(data)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "n"])?;
        for (x, n) in &self.data {
            wtr.write_record([x.to_string(), n.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Draws loss counts from the model for the given sample sizes.
    pub fn simulate(params: LohParameters, sizes: &[u32], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = params.omega();
        let beta = Beta::new(params.pi2 / omega, (1.0 - params.pi2) / omega)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let data = sizes
            .iter()
            .map(|&n| {
                let p = if rng.random::<f64>() < params.eta {
                    params.pi1
                } else {
                    beta.sample(&mut rng)
                };
                let x = Binomial::new(n as u64, p).expect("probability in [0, 1]").sample(&mut rng);
                (x as u32, n)
            })
            .collect();
        Self::new(data)
    }

    pub fn in_support(theta: &[f64]) -> bool {
        theta.iter().all(|v| v.abs() <= LOH_PRIOR_HALF_WIDTH)
    }

    /// Log posterior in the unconstrained coordinates; `-inf` off the prior box.
    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        check_dim(4, theta.len())?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LOH parameter".into()));
        }
        if !Self::in_support(theta) {
            return Ok(f64::NEG_INFINITY);
        }
        let ln_eta = -softplus(-theta[0]);
        let ln_1m_eta = -softplus(theta[0]);
        let ln_pi1 = -softplus(-theta[1]);
        let ln_1m_pi1 = -softplus(theta[1]);
        let pi2 = logistic(theta[2]);
        let omega = 0.5 * logistic(theta[3]);
        let a = pi2 / omega;
        let b = (1.0 - pi2) / omega;
        let mut total = 0.0;
        for &(x, n) in &self.data {
            let (xf, nf) = (x as f64, n as f64);
            let binom = ln_eta + xf * ln_pi1 + (nf - xf) * ln_1m_pi1;
            let beta_binom = ln_1m_eta + ln_beta_ratio(x, n, a, b);
            total += ln_choose(n as u64, x as u64) + log_add_exp(binom, beta_binom);
        }
        Ok(total)
    }
}

/// `ln B(x + a, n - x + b) - ln B(a, b)` as rising-factorial sums, exact for
/// integer counts and stable for large shapes.
fn ln_beta_ratio(x: u32, n: u32, a: f64, b: f64) -> f64 {
    let mut s = 0.0;
    for k in 0..x {
        s += (a + k as f64).ln();
    }
    for k in 0..(n - x) {
        s += (b + k as f64).ln();
    }
    for k in 0..n {
        s -= (a + b + k as f64).ln();
    }
    s
}

impl Target for LohModel {
    fn dim(&self) -> usize {
        4
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.log_posterior(theta).unwrap_or(f64::NEG_INFINITY)
    }

    fn describe(&self) -> String {
        format!("loss-of-heterozygosity mixture, {} observations", self.data.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::ln_beta;

    fn small_model() -> LohModel {
        LohModel::new(vec![(3, 10), (7, 12), (0, 5), (15, 20), (9, 9), (4, 30)]).unwrap()
    }

    #[test]
    fn outside_box_is_impossible() {
        let m = small_model();
        assert_eq!(m.log_posterior(&[31.0, 0.0, 0.0, 0.0]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(m.log_posterior(&[0.0, 0.0, 0.0, -31.0]).unwrap(), f64::NEG_INFINITY);
        assert!(m.log_posterior(&[0.0, 0.0, f64::NAN, 0.0]).is_err());
        assert!(m.log_posterior(&[1.0, -0.5, 0.7, 9.0]).unwrap().is_finite());
    }

    #[test]
    fn omega_at_zero_gamma_is_quarter() {
        let p = LohParameters::from_unconstrained(&[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.omega(), 0.25);
    }

    #[test]
    fn eta_to_one_reduces_to_binomial() {
        let m = small_model();
        let pi1: f64 = 0.4;
        let theta = [30.0, crate::special::logit(pi1), 0.3, 2.0];
        let binomial_only: f64 = m
            .data()
            .iter()
            .map(|&(x, n)| {
                ln_choose(n as u64, x as u64) + x as f64 * pi1.ln() + (n - x) as f64 * (1.0 - pi1).ln()
            })
            .sum();
        assert!((m.log_posterior(&theta).unwrap() - binomial_only).abs() < 1e-6);
    }

    #[test]
    fn beta_ratio_matches_gamma_route() {
        for &(x, n, a, b) in &[(3u32, 10u32, 0.7, 2.3), (0, 4, 5.0, 1.0), (12, 12, 0.1, 0.1)] {
            let direct = ln_beta(x as f64 + a, (n - x) as f64 + b) - ln_beta(a, b);
            assert!((ln_beta_ratio(x, n, a, b) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn row_order_does_not_matter() {
        let m = small_model();
        let mut rows = m.data().to_vec();
        rows.reverse();
        rows.swap(0, 3);
        let r = LohModel::new(rows).unwrap();
        let theta = [1.2, -0.8, 0.6, 7.5];
        assert!((m.log_posterior(&theta).unwrap() - r.log_posterior(&theta).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn csv_roundtrip_and_validation() {
        let m = small_model();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(LohModel::read_csv(buf.as_slice()).unwrap(), m);
        assert!(LohModel::read_csv("x,n\n5,3\n".as_bytes()).is_err());
        assert!(LohModel::read_csv("a,b\n1,3\n".as_bytes()).is_err());
    }

    #[test]
    fn parameter_transform_roundtrip() {
        let p = LohParameters { eta: 0.8, pi1: 0.3, pi2: 0.68, gamma: 9.5 };
        let back = LohParameters::from_unconstrained(&p.to_unconstrained());
        assert!((back.eta - p.eta).abs() < 1e-12 && (back.pi2 - p.pi2).abs() < 1e-12);
    }
}
