//! Per-element mass estimation and simplex weights.
//!
//! Each element `j` gets a multivariate-t instrumental fitted to its draws.
//! A replicate `c_hat_j` averages `g(theta_t) 1{theta_t in j} / q(theta_t)`
//! over `T` instrumental draws (iid, or a short t4 trajectory weighted by each
//! state's conditional density), which is unbiased for `c_j`. Replicates are
//! turned into weights either by the ratio estimator
//! `w_j = sum_i c_j^(i) / sum_i sum_k c_k^(i)` or by a pseudo-marginal chain
//! on element labels.

use crate::draws::DrawStore;
use crate::error::{Error, Result};
use crate::executor::{run_tasks, stream_rng, StreamTag};
use crate::linalg::mean_and_covariance;
use crate::mvt::{MvtDist, DEFAULT_NU};
use crate::partition::Partition;
use crate::samplers::t4_trajectory;
use crate::special::log_sum_exp;
use crate::targets::Target;
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Ridge added to fitted scale matrices, relative to `trace(S) / p`.
const SCALE_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterMode {
    /// The partition center of the element.
    #[default]
    ClusterCenter,
    /// The element draw with the highest target density.
    EmpiricalMode,
    EmpiricalMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentalOptions {
    pub center_mode: CenterMode,
    /// Degrees of freedom; `f64::INFINITY` gives a normal instrumental.
    pub nu: f64,
    /// Multiplies the fitted scale matrix.
    pub inflation: f64,
}

impl Default for InstrumentalOptions {
    fn default() -> Self {
        Self {
            center_mode: CenterMode::ClusterCenter,
            nu: DEFAULT_NU,
            inflation: 1.0,
        }
    }
}

/// `t_nu(m_j, inflation * (S_j + ridge))` from the draws of one element.
///
/// `center` is the element's partition center in the sampled space.
pub fn fit_instrumental<T: Target + ?Sized>(
    points: &[&[f64]],
    center: &[f64],
    target: &T,
    element: usize,
    opts: &InstrumentalOptions,
) -> Result<MvtDist> {
    let p = center.len();
    if points.len() < p + 2 {
        return Err(Error::TooFewDraws {
            element,
            count: points.len(),
            required: p + 2,
        });
    }
    let (mean, cov, _) = mean_and_covariance(points.iter().copied(), p);
    let location = match opts.center_mode {
        CenterMode::ClusterCenter => center.to_vec(),
        CenterMode::EmpiricalMean => mean.iter().copied().collect(),
        CenterMode::EmpiricalMode => {
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (i, x) in points.iter().enumerate() {
                let lg = target.log_density(x);
                if lg > best.0 {
                    best = (lg, i);
                }
            }
            points[best.1].to_vec()
        }
    };
    let ridge = SCALE_RIDGE * cov.trace() / p as f64;
    let scale = cov + DMatrix::<f64>::identity(p, p) * ridge.max(f64::MIN_POSITIVE);
    MvtDist::with_inflation(location, scale, opts.nu, opts.inflation)
}

/// Instrumentals for every element from the post-burn-in draws.
pub fn fit_instrumentals<T: Target + ?Sized>(
    target: &T,
    draws: &DrawStore,
    partition: &Partition,
    opts: &InstrumentalOptions,
) -> Result<Vec<MvtDist>> {
    let labels = partition.labels(draws)?;
    let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); partition.n_elements()];
    for (x, l) in draws.post_burnin().zip(labels) {
        groups[l].push(x);
    }
    let centers = partition.centers_original();
    groups
        .iter()
        .enumerate()
        .map(|(j, pts)| fit_instrumental(pts, &centers[j], target, j, opts))
        .collect()
}

/// `t_nu` at a local mode with scale `inflation` times the inverse negative
/// Hessian.
pub fn laplace_instrumental(mode: Vec<f64>, neg_hessian: &DMatrix<f64>, nu: f64, inflation: f64) -> Result<MvtDist> {
    let scale = crate::linalg::spd_inverse(neg_hessian)?;
    MvtDist::with_inflation(mode, scale, nu, inflation)
}

fn log_mean_weight(log_weights: &[f64]) -> f64 {
    log_sum_exp(log_weights) - (log_weights.len() as f64).ln()
}

/// `ln c_hat_j` from `T` iid instrumental draws; `-inf` if none land in `j`.
pub fn log_is_c_hat<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q: &MvtDist,
    element: usize,
    partition: &Partition,
    len: usize,
    rng: &mut R,
) -> Result<f64> {
    if len == 0 {
        return Err(Error::InvalidParameter("sample size T must be at least 1".into()));
    }
    let mut x = vec![0.0; q.dim()];
    let mut lw = Vec::with_capacity(len);
    for _ in 0..len {
        q.sample_into(rng, &mut x);
        if x.iter().all(|v| v.is_finite()) && partition.assign_unchecked(&x) == element {
            lw.push(target.log_density(&x) - q.log_density(&x));
        } else {
            lw.push(f64::NEG_INFINITY);
        }
    }
    Ok(log_mean_weight(&lw))
}

/// Unbiased importance-sampling estimate of `c_j = int_{Theta_j} g`.
pub fn is_c_hat<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q: &MvtDist,
    element: usize,
    partition: &Partition,
    len: usize,
    rng: &mut R,
) -> Result<f64> {
    log_is_c_hat(target, q, element, partition, len, rng).map(f64::exp)
}

/// `ln c_hat_j` from a length-`T` t4 trajectory, each state weighted by its
/// own conditional instrumental density.
#[allow(clippy::too_many_arguments)]
pub fn log_trajectory_c_hat<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    start: &MvtDist,
    element: usize,
    partition: &Partition,
    len: usize,
    sigma: f64,
    drift: bool,
    rng: &mut R,
) -> Result<f64> {
    let tr = t4_trajectory(start, target, len, sigma, drift, rng)?;
    let lw: Vec<f64> = tr
        .states
        .iter()
        .zip(&tr.state_log_densities)
        .map(|(x, lq)| {
            if x.iter().all(|v| v.is_finite()) && partition.assign_unchecked(x) == element {
                target.log_density(x) - lq
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    Ok(log_mean_weight(&lw))
}

#[allow(clippy::too_many_arguments)]
pub fn trajectory_c_hat<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    start: &MvtDist,
    element: usize,
    partition: &Partition,
    len: usize,
    sigma: f64,
    drift: bool,
    rng: &mut R,
) -> Result<f64> {
    log_trajectory_c_hat(target, start, element, partition, len, sigma, drift, rng).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Estimator {
    /// `T` iid draws from the instrumental.
    #[default]
    Iid,
    /// A length-`T` trajectory started from the instrumental.
    Trajectory { sigma: f64, drift: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMethod {
    #[default]
    Ratio,
    PseudoMarginal,
}

/// Replicate matrix: `n` rows (replicates) by `J` columns (elements).
#[derive(Debug, Clone, PartialEq)]
pub struct CHats {
    n: usize,
    j: usize,
    values: Vec<f64>,
}

impl CHats {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let j = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != j) {
            return Err(Error::InvalidParameter("ragged replicate matrix".into()));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("replicate estimates must be non-negative".into()));
        }
        Ok(Self { n, j, values })
    }

    pub fn n_replicates(&self) -> usize {
        self.n
    }

    pub fn n_elements(&self) -> usize {
        self.j
    }

    pub fn get(&self, replicate: usize, element: usize) -> f64 {
        self.values[replicate * self.j + element]
    }

    pub fn column(&self, element: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, element)).collect()
    }

    /// Per-element mean and standard error of the replicates.
    pub fn summary(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.j)
            .map(|e| {
                let col = self.column(e);
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let var = if col.len() > 1 {
                    col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    f64::NAN
                };
                (mean, (var / n).sqrt())
            })
            .unzip()
    }

    /// Elements whose top 1% of replicates carry more than half the mass.
    pub fn heavy_tailed_elements(&self) -> Vec<usize> {
        (0..self.j)
            .filter(|&e| {
                let mut col = self.column(e);
                col.sort_by(|a, b| b.total_cmp(a));
                let total: f64 = col.iter().sum();
                let top = (col.len() as f64 * 0.01).ceil() as usize;
                total > 0.0 && col[..top].iter().sum::<f64>() > 0.5 * total
            })
            .collect()
    }
}

/// `n` replicates for each element, run in parallel. Replicate `i` of
/// element `j` uses stream `i` of family `Replicate(j)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_c_hats<T: Target + ?Sized>(
    target: &T,
    partition: &Partition,
    instrumentals: &[MvtDist],
    n: usize,
    len: usize,
    estimator: Estimator,
    seed: u64,
    workers: usize,
) -> Result<CHats> {
    let j_count = partition.n_elements();
    if instrumentals.len() != j_count {
        return Err(Error::DimensionMismatch {
            expected: j_count,
            got: instrumentals.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one replicate".into()));
    }
    // one task per (element, replicate); collected element-major
    let flat: Vec<f64> = run_tasks(n * j_count, workers, |task| {
        let (e, i) = (task / n, task % n);
        let mut rng = stream_rng(seed, StreamTag::Replicate(e as u32), i as u64);
        let q = &instrumentals[e];
        let lc = match estimator {
            Estimator::Iid => log_is_c_hat(target, q, e, partition, len, &mut rng)?,
            Estimator::Trajectory { sigma, drift } => {
                log_trajectory_c_hat(target, q, e, partition, len, sigma, drift, &mut rng)?
            }
        };
        Ok(lc.exp())
    })?;
    let rows = (0..n)
        .map(|i| (0..j_count).map(|e| flat[e * n + i]).collect())
        .collect();
    let c = CHats::from_rows(rows)?;
    for e in c.heavy_tailed_elements() {
        let max = c.column(e).into_iter().fold(0.0, f64::max);
        log::warn!("element {e}: top 1% of importance replicates carry over half the mass (max {max:e}); instrumental tails may be too light");
    }
    Ok(c)
}

/// Ratio estimator `w_j = sum_i c_j^(i) / sum_i sum_k c_k^(i)`.
pub fn ratio_weights(c: &CHats) -> Result<Vec<f64>> {
    let col_sums: Vec<f64> = (0..c.n_elements()).map(|e| c.column(e).iter().sum()).collect();
    let total: f64 = col_sums.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroEstimates);
    }
    Ok(col_sums.iter().map(|s| s / total).collect())
}

/// Delta-method standard errors of the ratio weights, treating elements as
/// independent: `Var w_j ~ [(1 - w_j)^2 V_j + w_j^2 sum_{k != j} V_k] / C^2`
/// with `V_k` the variance of the mean replicate of element `k` and `C` the
/// sum of mean replicates.
pub fn ratio_weight_se(c: &CHats) -> Result<Vec<f64>> {
    let w = ratio_weights(c)?;
    let (means, ses) = c.summary();
    let total: f64 = means.iter().sum();
    let vars: Vec<f64> = ses.iter().map(|s| if s.is_finite() { s * s } else { 0.0 }).collect();
    let vsum: f64 = vars.iter().sum();
    Ok(w.iter()
        .zip(&vars)
        .map(|(wj, vj)| (((1.0 - wj).powi(2) * vj + wj * wj * (vsum - vj)) / (total * total)).sqrt())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMarginalOutcome {
    pub weights: Vec<f64>,
    /// Batch-means standard error of each occupancy frequency.
    pub se: Vec<f64>,
    pub acceptance_rate: f64,
}

const MAX_ZERO_RETRIES: usize = 1000;

/// Metropolis chain on element labels with uniform proposals over the other
/// labels, accepting `k` with probability `min(1, c_hat_k / c_hat_j)` where
/// `c_hat_k` is fresh and `c_hat_j` is the estimate retained since the chain
/// entered `j`. Returns occupancy frequencies.
pub fn pseudo_marginal_weights<R, F>(
    mut sampler: F,
    j_count: usize,
    iters: usize,
    rng: &mut R,
) -> Result<PseudoMarginalOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &mut R) -> Result<f64>,
{
    if iters == 0 {
        return Err(Error::InvalidParameter("pseudo-marginal chain needs iterations".into()));
    }
    if j_count == 0 {
        return Err(Error::Empty("no elements".into()));
    }
    if j_count == 1 {
        return Ok(PseudoMarginalOutcome {
            weights: vec![1.0],
            se: vec![0.0],
            acceptance_rate: f64::NAN,
        });
    }
    let mut current = rng.random_range(0..j_count);
    let mut retained = sampler(current, rng)?;
    let mut visits = Vec::with_capacity(iters);
    let mut accepted = 0usize;
    for _ in 0..iters {
        let mut k = rng.random_range(0..j_count - 1);
        if k >= current {
            k += 1;
        }
        let mut fresh = sampler(k, rng)?;
        let mut tries = 0;
        while retained == 0.0 && fresh == 0.0 {
            tries += 1;
            if tries > MAX_ZERO_RETRIES {
                return Err(Error::ZeroEstimates);
            }
            fresh = sampler(k, rng)?;
        }
        let accept = if retained == 0.0 {
            true
        } else {
            let ratio = fresh / retained;
            ratio >= 1.0 || rng.random::<f64>() < ratio
        };
        if accept {
            current = k;
            retained = fresh;
            accepted += 1;
        }
        visits.push(current);
    }
    let n = visits.len() as f64;
    let mut weights = vec![0.0; j_count];
    for &v in &visits {
        weights[v] += 1.0;
    }
    weights.iter_mut().for_each(|w| *w /= n);
    let se = (0..j_count)
        .map(|e| {
            let ind: Vec<f64> = visits.iter().map(|&v| f64::from(u8::from(v == e))).collect();
            crate::combine::batch_means_se(&ind, 20)
        })
        .collect();
    Ok(PseudoMarginalOutcome {
        weights,
        se,
        acceptance_rate: accepted as f64 / n,
    })
}

/// Replays a fixed replicate matrix, cycling through each column; gives the
/// pseudo-marginal chain the same estimate budget as the ratio estimator.
pub fn replay_sampler(c: &CHats) -> impl FnMut(usize, &mut dyn rand::RngCore) -> Result<f64> + '_ {
    let mut next = vec![0usize; c.n_elements()];
    move |e, _rng| {
        let v = c.get(next[e] % c.n_replicates(), e);
        next[e] += 1;
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEstimate {
    pub c_hats: CHats,
    pub replicate_length: usize,
    pub w_hat: Vec<f64>,
    pub method: WeightMethod,
    /// Standard error of each weight.
    pub mcse: Vec<f64>,
}

impl WeightEstimate {
    pub fn ratio(c_hats: CHats, replicate_length: usize) -> Result<Self> {
        let w_hat = ratio_weights(&c_hats)?;
        let mcse = ratio_weight_se(&c_hats)?;
        Ok(Self {
            c_hats,
            replicate_length,
            w_hat,
            method: WeightMethod::Ratio,
            mcse,
        })
    }

    /// Pseudo-marginal weights driven by a replay of `c_hats`.
    pub fn pseudo_marginal(c_hats: CHats, replicate_length: usize, iters: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, StreamTag::PseudoMarginal, 0);
        let mut replay = replay_sampler(&c_hats);
        let out = pseudo_marginal_weights(
            |e, r: &mut rand_chacha::ChaCha8Rng| replay(e, r),
            c_hats.n_elements(),
            iters,
            &mut rng,
        )?;
        drop(replay);
        Ok(Self {
            c_hats,
            replicate_length,
            w_hat: out.weights,
            method: WeightMethod::PseudoMarginal,
            mcse: out.se,
        })
    }

    pub fn report(&self) -> WeightsReport {
        let (mean, se) = self.c_hats.summary();
        WeightsReport {
            method: self.method,
            c_hat_summary: CHatSummary {
                n: self.c_hats.n_replicates(),
                t: self.replicate_length,
                mean,
                se,
            },
            w_hat: self.w_hat.clone(),
            w_se: self.mcse.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CHatSummary {
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

/// Weights file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsReport {
    pub method: WeightMethod,
    pub c_hat_summary: CHatSummary,
    pub w_hat: Vec<f64>,
    #[serde(default)]
    pub w_se: Vec<f64>,
}

impl WeightsReport {
    pub fn to_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        let rep: Self = serde_json::from_reader(r)?;
        let s: f64 = rep.w_hat.iter().sum();
        if rep.w_hat.iter().any(|w| !(*w >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Parse("w_hat is not a simplex vector".into()));
        }
        Ok(rep)
    }
}
